"""Colors, color sets and candidate pools used as co-referential markers.

A marker color pairs a visual appearance (RGB) with the word a masked-token
scorer is expected to produce for it. Two built-in six-color presets are
shipped, plus a grid builder for sweeping RGB candidates around standard
named-color values.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .errors import InputError

# Candidate label reserved for "the target is not in this batch"; color texts
# may never collide with it.
NONE_LABEL = "none"


@dataclass(frozen=True, order=True)
class Rgb:
    r: int
    g: int
    b: int

    def __post_init__(self):
        for name in ("r", "g", "b"):
            v = getattr(self, name)
            if not isinstance(v, int) or not 0 <= v <= 255:
                raise InputError(f"channel {name}={v!r} outside [0, 255]")

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.r, self.g, self.b)

    def __str__(self) -> str:
        return f"({self.r},{self.g},{self.b})"


def _validate_color_text(text: str) -> None:
    if not isinstance(text, str) or not text:
        raise InputError("color text must be a non-empty string")
    if text != text.strip():
        raise InputError(f"color text {text!r} has surrounding whitespace")
    if text != text.lower():
        raise InputError(f"color text {text!r} must be lowercase")
    if " " in text:
        raise InputError(f"color text {text!r} must be a single word")
    if text == NONE_LABEL:
        raise InputError(f"{NONE_LABEL!r} is reserved and cannot name a color")


@dataclass(frozen=True)
class Color:
    visual: Rgb
    text: str

    def __post_init__(self):
        _validate_color_text(self.text)


@dataclass(frozen=True)
class ColorSet:
    colors: tuple[Color, ...]

    def __post_init__(self):
        if len(self.colors) < 1:
            raise InputError("a color set needs at least one color")
        texts = [c.text for c in self.colors]
        if len(set(texts)) != len(texts):
            raise InputError(f"duplicate color texts in {texts}")
        rgbs = [c.visual for c in self.colors]
        if len(set(rgbs)) != len(rgbs):
            raise InputError("duplicate RGB values in color set")

    def __len__(self) -> int:
        return len(self.colors)

    def __iter__(self):
        return iter(self.colors)

    def __getitem__(self, i: int) -> Color:
        return self.colors[i]

    @property
    def texts(self) -> list[str]:
        return [c.text for c in self.colors]


@dataclass(frozen=True)
class CandidateSets:
    """Pools searched over: color words and RGB appearances."""

    texts: tuple[str, ...]
    visuals: tuple[Rgb, ...]

    def __post_init__(self):
        if not self.texts or not self.visuals:
            raise InputError("candidate sets must be non-empty")
        if len(set(self.texts)) != len(self.texts):
            raise InputError("candidate texts contain duplicates")
        if len(set(self.visuals)) != len(self.visuals):
            raise InputError("candidate visuals contain duplicates")
        for t in self.texts:
            _validate_color_text(t)


def build_rgb_grid(base: Rgb, radius: int = 30, step: int = 5) -> list[Rgb]:
    """All RGB triples reachable from `base` by per-channel offsets of at most
    `radius` in multiples of `step`, clamped to valid channels, deduplicated,
    in lexicographic order."""
    if radius < 0:
        raise InputError(f"radius must be >= 0, got {radius}")
    if step < 1:
        raise InputError(f"step must be >= 1, got {step}")
    k_max = radius // step
    offsets = [k * step for k in range(-k_max, k_max + 1)]

    def channel_values(c: int) -> list[int]:
        return sorted({min(255, max(0, c + off)) for off in offsets})

    axes = [channel_values(c) for c in (base.r, base.g, base.b)]
    return [Rgb(r, g, b) for r, g, b in itertools.product(*axes)]


def preset_frequency_colors() -> ColorSet:
    """Six most frequent color words with their standard RGB values."""
    return ColorSet(tuple(Color(Rgb(*v), t) for v, t in [
        ((255, 0, 0), "red"),
        ((0, 0, 0), "black"),
        ((0, 0, 255), "blue"),
        ((0, 255, 0), "green"),
        ((255, 255, 0), "yellow"),
        ((165, 42, 42), "brown"),
    ]))


def preset_cps_colors() -> ColorSet:
    """Six colors selected by cross-modal prompt search, appearance adjusted
    per word."""
    return ColorSet(tuple(Color(Rgb(*v), t) for v, t in [
        ((240, 0, 30), "red"),
        ((155, 50, 210), "purple"),
        ((255, 255, 25), "yellow"),
        ((0, 10, 255), "blue"),
        ((255, 170, 230), "pink"),
        ((0, 255, 0), "green"),
    ]))


def preset_cps_red() -> ColorSet:
    """The single best-validated color; the default for one-region batches."""
    return ColorSet((Color(Rgb(240, 0, 30), "red"),))


PRESETS = {
    "frequency": preset_frequency_colors,
    "cps": preset_cps_colors,
    "cps-red": preset_cps_red,
}


def parse_color_table(lines) -> dict[str, Rgb]:
    """Parse `name<TAB>r,g,b` records; blank lines and #-comments skipped."""
    table: dict[str, Rgb] = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.rstrip("\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        try:
            name, rgb_part = line.split("\t")
            r, g, b = (int(p) for p in rgb_part.split(","))
        except ValueError as e:
            raise InputError(f"color table line {lineno}: {line!r}: {e}") from e
        _validate_color_text(name)
        if name in table:
            raise InputError(f"color table line {lineno}: duplicate name {name!r}")
        table[name] = Rgb(r, g, b)
    return table


def load_color_table(path: str | Path) -> dict[str, Rgb]:
    with open(path, encoding="utf-8") as f:
        return parse_color_table(f)


def builtin_color_table() -> dict[str, Rgb]:
    """Common named colors shipped with the package."""
    text = resources.files("cpt.data").joinpath("named_colors.tsv").read_text("utf-8")
    return parse_color_table(text.splitlines())


def save_color_set(colors: ColorSet, path: str | Path) -> None:
    """Persist a color set in the same `name<TAB>r,g,b` format (ordered)."""
    with open(path, "w", encoding="utf-8") as f:
        for c in colors:
            f.write(f"{c.text}\t{c.visual.r},{c.visual.g},{c.visual.b}\n")


def load_color_set(path: str | Path) -> ColorSet:
    with open(path, encoding="utf-8") as f:
        table = parse_color_table(f)
    return ColorSet(tuple(Color(rgb, name) for name, rgb in table.items()))
