"""Offline 3D-CNN checkpoint converter for the exitstream engine."""

from .adapt import adapted_probabilities
from .archs import ARCHITECTURES, build, randomize
from .export import ExportError, ExportManifest, export_checkpoint

__version__ = "0.1.0"
