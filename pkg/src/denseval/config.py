"""
Run configuration for denseval

Values come from, in increasing priority: dataclass defaults, a TOML config
file, environment variables, and `--key value` command-line overrides.
"""

import logging
import math
import os
try:
	import tomllib
except ModuleNotFoundError:  # Python < 3.11
	import tomli as tomllib
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple

from .domain.errors import ConfigError

logger = logging.getLogger(__name__)

_LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")
_PROFILES = ("exact", "coarse", "dropout")
_CATEGORIES = ("background_clutter", "occluded", "boundary", "low_contrast")
# execution-only keys never influence results and stay out of report echoes
_EXECUTION_KEYS = ("threads", "output_dir", "log_level")
_PATH_KEYS = ("manifest", "predictions", "profile", "output_dir")
_ENV_KEYS = {"threads": "DENSEVAL_THREADS", "log_level": "DENSEVAL_LOG_LEVEL"}


def _grid(start: float, stop: float, step: float) -> Tuple[float, ...]:
	count = int(math.floor((stop - start) / step + 1e-9)) + 1
	return tuple(round(start + k * step, 10) for k in range(count))


@dataclass(frozen=True)
class RunConfig:
	"""Every tunable of a run, with the documented defaults"""

	# Inputs
	manifest: Optional[str] = None
	predictions: Optional[str] = None
	profile: Optional[str] = None  # compute-profile sidecar JSON
	split: str = "test"

	# Operating point
	tau: float = 0.15
	theta: float = 0.35
	nms: bool = False
	tau_nms: float = 0.50
	empty_score: float = 1.0

	# Conversion
	alpha: float = 0.001

	# Sweeps
	axis: str = "iou"
	iou_thresholds: Tuple[float, ...] = field(default_factory=lambda: _grid(0.05, 0.50, 0.05))
	confidence_thresholds: Tuple[float, ...] = field(default_factory=lambda: _grid(0.15, 0.40, 0.05))
	sweep_theta: Optional[float] = None  # None: IoU sweep runs at the operating theta
	degradation_from: float = 0.10
	degradation_to: float = 0.50

	# Error analysis
	boundary_margin: float = 50.0
	contrast_cutoff: float = 30.0
	contrast_padding: int = 25
	clutter_radius: float = 100.0
	occlusion_radius: float = 200.0
	occlusion_min: int = 5
	precedence: Tuple[str, ...] = _CATEGORIES
	contrast_rule: bool = True

	# Synthetic data
	seed: int = 0
	synth_images: int = 20
	synth_instances: int = 40
	synth_width: int = 1280
	synth_height: int = 960
	synth_min_axis: float = 15.0
	synth_max_axis: float = 30.0
	synth_profile: str = "exact"
	synth_dropout: float = 0.5
	synth_iou_low: float = 0.35
	synth_iou_high: float = 0.65
	synth_dilate: int = 0
	synth_spurious: int = 0
	synth_rle: bool = True

	# Execution
	output_dir: str = "denseval-out"
	threads: int = 1
	log_level: str = "INFO"
	warnings_as_errors: bool = False

	def __post_init__(self) -> None:
		if not (0.0 < self.tau <= 1.0):
			raise ConfigError(f"tau must be in (0,1], got {self.tau}")
		if not (0.0 <= self.theta < 1.0):
			raise ConfigError(f"theta must be in [0,1), got {self.theta}")
		if not (0.0 < self.tau_nms <= 1.0):
			raise ConfigError(f"tau_nms must be in (0,1], got {self.tau_nms}")
		if not (0.0 <= self.empty_score <= 1.0):
			raise ConfigError(f"empty_score must be in [0,1], got {self.empty_score}")
		if self.alpha < 0:
			raise ConfigError(f"alpha must be >= 0, got {self.alpha}")
		if self.axis not in ("iou", "confidence"):
			raise ConfigError(f"axis must be 'iou' or 'confidence', got {self.axis!r}")
		self._check_grid("iou_thresholds", self.iou_thresholds, lambda t: 0.0 < t <= 1.0)
		self._check_grid("confidence_thresholds", self.confidence_thresholds, lambda t: 0.0 <= t < 1.0)
		if self.sweep_theta is not None and not (0.0 <= self.sweep_theta < 1.0):
			raise ConfigError(f"sweep_theta must be in [0,1), got {self.sweep_theta}")
		if self.boundary_margin < 0 or self.contrast_cutoff < 0 or self.contrast_padding < 0:
			raise ConfigError("boundary_margin, contrast_cutoff and contrast_padding must be >= 0")
		if self.clutter_radius <= 0 or self.occlusion_radius <= 0:
			raise ConfigError("clutter_radius and occlusion_radius must be positive")
		if self.occlusion_min < 1:
			raise ConfigError(f"occlusion_min must be >= 1, got {self.occlusion_min}")
		unknown = [c for c in self.precedence if c not in _CATEGORIES]
		if unknown or len(set(self.precedence)) != len(self.precedence):
			raise ConfigError(f"precedence must list distinct categories from {list(_CATEGORIES)}, got {list(self.precedence)}")
		if self.synth_profile not in _PROFILES:
			raise ConfigError(f"synth_profile must be one of {list(_PROFILES)}, got {self.synth_profile!r}")
		if not (0.0 <= self.synth_dropout <= 1.0):
			raise ConfigError(f"synth_dropout must be in [0,1], got {self.synth_dropout}")
		if not (0.0 < self.synth_iou_low <= self.synth_iou_high < 1.0):
			raise ConfigError("synth IoU band must satisfy 0 < synth_iou_low <= synth_iou_high < 1")
		if self.synth_images < 1 or self.synth_instances < 0 or self.synth_width < 1 or self.synth_height < 1:
			raise ConfigError("synthetic image count and lattice size must be positive")
		if not (0.0 < self.synth_min_axis <= self.synth_max_axis):
			raise ConfigError("synth axes must satisfy 0 < synth_min_axis <= synth_max_axis")
		if self.synth_dilate < 0 or self.synth_spurious < 0:
			raise ConfigError("synth_dilate and synth_spurious must be >= 0")
		if self.threads < 1:
			raise ConfigError(f"threads must be >= 1, got {self.threads}")
		if self.log_level.upper() not in _LOG_LEVELS:
			raise ConfigError(f"log_level must be one of {list(_LOG_LEVELS)}, got {self.log_level!r}")

	@staticmethod
	def _check_grid(name: str, grid: Tuple[float, ...], in_range) -> None:
		if not grid:
			raise ConfigError(f"{name} must not be empty")
		if any(b <= a for a, b in zip(grid, grid[1:])):
			raise ConfigError(f"{name} must be strictly increasing")
		if not all(in_range(t) for t in grid):
			raise ConfigError(f"{name} has values outside the allowed range: {list(grid)}")

	@property
	def iou_sweep_theta(self) -> float:
		return self.theta if self.sweep_theta is None else self.sweep_theta

	@classmethod
	def keys(cls) -> Tuple[str, ...]:
		return tuple(f.name for f in fields(cls))

	@classmethod
	def from_sources(
		cls,
		config_path: Optional[str] = None,
		overrides: Optional[Mapping[str, Any]] = None,
		environ: Optional[Mapping[str, str]] = None,
	) -> "RunConfig":
		"""Layer defaults, config file, environment and overrides"""
		environ = os.environ if environ is None else environ
		values: Dict[str, Any] = {}

		if config_path:
			path = Path(config_path)
			try:
				with path.open("rb") as fh:
					document = tomllib.load(fh)
			except tomllib.TOMLDecodeError as exc:
				raise ConfigError(f"{path}: invalid TOML ({exc})") from exc
			base = path.parent
			for key, raw in document.items():
				value = _coerce(key, raw)
				if key in _PATH_KEYS and value is not None and not Path(value).is_absolute():
					value = str(base / value)
				values[key] = value
			logger.debug("Loaded %d keys from %s", len(document), path)

		for key, variable in _ENV_KEYS.items():
			if environ.get(variable):
				values[key] = _coerce(key, environ[variable])

		for key, raw in (overrides or {}).items():
			values[key] = _coerce(key, raw)

		return cls(**values)

	def with_overrides(self, **changes: Any) -> "RunConfig":
		return replace(self, **{k: _coerce(k, v) for k, v in changes.items()})

	def echo(self) -> Dict[str, Any]:
		"""Serializable view embedded in reports, minus execution-only keys"""
		out = asdict(self)
		for key in _EXECUTION_KEYS:
			out.pop(key, None)
		return {k: list(v) if isinstance(v, tuple) else v for k, v in out.items()}


_DEFAULTS = RunConfig()


def _parse_bool(key: str, raw: Any) -> bool:
	if isinstance(raw, bool):
		return raw
	text = str(raw).strip().lower()
	if text in ("1", "true", "yes", "on"):
		return True
	if text in ("0", "false", "no", "off"):
		return False
	raise ConfigError(f"{key}: expected a boolean, got {raw!r}")


def _coerce(key: str, raw: Any) -> Any:
	"""Convert a file, environment or CLI value to the type of the default"""
	if key not in RunConfig.keys():
		raise ConfigError(f"unknown configuration key '{key}'")
	default = getattr(_DEFAULTS, key)
	try:
		if isinstance(default, bool):
			return _parse_bool(key, raw)
		if isinstance(default, int):
			if isinstance(raw, float) and not raw.is_integer():
				raise ValueError(raw)
			return int(raw)
		if isinstance(default, float):
			return float(raw)
		if isinstance(default, tuple):
			items = raw if isinstance(raw, (list, tuple)) else [s for s in str(raw).split(",") if s.strip()]
			element = type(default[0]) if default else str
			return tuple(element(item.strip() if isinstance(item, str) else item) for item in items)
		if key == "sweep_theta":
			return None if raw is None or str(raw).strip() == "" else float(raw)
		if key == "log_level":
			return str(raw).upper()
		return None if raw is None else str(raw)
	except (TypeError, ValueError) as exc:
		raise ConfigError(f"{key}: cannot interpret {raw!r}") from exc
