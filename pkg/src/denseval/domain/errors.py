"""
Exception hierarchy.

Every error raised on purpose by the toolkit derives from `DensevalError`,
which the CLI maps to exit code 2 (input error).
"""

from __future__ import annotations

from typing import Iterable, Optional


class DensevalError(ValueError):
    """Base class for input and evaluation errors."""

    exit_code: int = 2


class LabelMapFormatError(DensevalError):
    """A label-map raster has an unsupported mode, depth or channel count."""


class PolygonParseError(DensevalError):
    def __init__(self, message: str, line_number: Optional[int] = None, path: Optional[str] = None) -> None:
        self.line_number = line_number
        self.path = path
        where = ""
        if path is not None:
            where = f"{path}:"
        if line_number is not None:
            where = f"{where}{line_number}: " if where else f"line {line_number}: "
        elif where:
            where = f"{where} "
        super().__init__(f"{where}{message}")


class PredictionIndexError(DensevalError):
    """Prediction index violates its schema."""


class ManifestError(DensevalError):
    """Dataset manifest is missing, malformed or references unknown files."""


class GeometryError(DensevalError):
    """Invalid geometric input (empty mask, out-of-bounds vertex, lattice mismatch)."""


class UnsupportedGeometryError(GeometryError):
    """Operation requires a polygon but got a raster mask."""


class EvaluationError(DensevalError):
    """Inconsistent evaluation inputs (mixed thresholds, orphan images, no GT)."""

    def __init__(self, message: str, orphans: Iterable[str] = ()) -> None:
        self.orphans = sorted(orphans)
        if self.orphans:
            message = f"{message}: {', '.join(self.orphans)}"
        super().__init__(message)


class ConfigError(DensevalError):
    """Configuration value outside its documented range or unknown key."""


class SynthesisError(DensevalError):
    """Synthetic dataset cannot be generated with the requested parameters."""


class MissingImageError(DensevalError):
    def __init__(self, missing: Iterable[str]) -> None:
        self.missing = sorted(missing)
        super().__init__(
            "luminance images required by the contrast rule are missing: " + ", ".join(self.missing)
        )
