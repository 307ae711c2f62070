"""Colorful prompt toolkit.

Marks image region proposals with paired (appearance, word) colors, asks a
masked-token scoring backend fill-in-the-blank questions about them, and
decodes the answers into grounding and relation predictions, with search and
evaluation harnesses around the loop.
"""

from .colors import (
    CandidateSets,
    Color,
    ColorSet,
    Rgb,
    build_rgb_grid,
    preset_cps_colors,
    preset_frequency_colors,
)
from .raster import (
    BoundingBox,
    PromptShape,
    RasterImage,
    SegmentMask,
    apply_visual_subprompt,
    blend_block,
    blend_mask,
    pure_color_block,
)
from .prompts import (
    CandidateTokenSeq,
    ProbeVariant,
    PromptText,
    cps_probe_template,
    grounding_template,
    na_relation,
    relation_template,
)
from .batching import BatchPlan, RegionBatch, plan_batches
from .scoring import (
    GroundingResult,
    LossReport,
    MaskDistribution,
    RelationScoreTable,
    decode_grounding,
    grounding_nll,
    normalize,
    score_relations,
)
from .backend import (
    ChromaticOracle,
    RemoteBackend,
    ScoreRequest,
    ScoreResponse,
    ScoringBackend,
    StubHashBackend,
)
from .search import ScoreMatrix, probe_scores
from .evalkit import (
    MetricReport,
    SplitSpec,
    aggregate,
    grounding_accuracy,
    iou,
    mean_recall_at_n,
    recall_at_n,
    sample_splits,
)
from .dataio import (
    GroundingInstance,
    PredictionRecord,
    RelationInstance,
    generate_synthetic_grounding,
    load_grounding,
    load_relations,
)

__version__ = "0.1.0"
