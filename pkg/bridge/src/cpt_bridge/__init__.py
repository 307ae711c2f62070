"""Reference scoring service for the colorful-prompt wire protocol."""

from .app import create_app
from .config import BridgeConfig

__version__ = "0.1.0"
