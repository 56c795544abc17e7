"""
Unit tests for layered run configuration and CLI override parsing
"""

import pytest

from denseval.config import RunConfig
from denseval.domain.errors import ConfigError
from denseval.interfaces.cli import parse_overrides


@pytest.mark.unit
class TestRunConfig:
	"""Defaults, file, environment and override layering"""

	def test_defaults(self):
		config = RunConfig.from_sources(environ={})

		assert (config.tau, config.theta, config.alpha) == (0.15, 0.35, 0.001)
		assert config.iou_thresholds == (0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5)
		assert config.confidence_thresholds == (0.15, 0.2, 0.25, 0.3, 0.35, 0.4)
		assert config.precedence == ("background_clutter", "occluded", "boundary", "low_contrast")
		assert (config.boundary_margin, config.contrast_cutoff, config.contrast_padding) == (50.0, 30.0, 25)
		assert (config.clutter_radius, config.occlusion_radius, config.occlusion_min) == (100.0, 200.0, 5)
		assert config.threads == 1

	def test_toml_file_with_relative_paths(self, tmp_path):
		path = tmp_path / "conf" / "run.toml"
		path.parent.mkdir()
		path.write_text('tau = 0.5\nmanifest = "data/manifest.json"\niou_thresholds = [0.1, 0.2]\nnms = true\n')

		config = RunConfig.from_sources(str(path), environ={})

		assert config.tau == 0.5
		assert config.manifest == str(tmp_path / "conf" / "data" / "manifest.json")
		assert config.iou_thresholds == (0.1, 0.2)
		assert config.nms is True

	def test_environment_layer(self):
		config = RunConfig.from_sources(environ={"DENSEVAL_THREADS": "4", "DENSEVAL_LOG_LEVEL": "debug"})

		assert config.threads == 4
		assert config.log_level == "DEBUG"

	def test_overrides_beat_environment_and_file(self, tmp_path):
		path = tmp_path / "run.toml"
		path.write_text("threads = 2\ntheta = 0.2\n")

		config = RunConfig.from_sources(
			str(path), overrides={"threads": "8", "theta": "0.3"}, environ={"DENSEVAL_THREADS": "4"}
		)

		assert (config.threads, config.theta) == (8, 0.3)

	def test_unknown_key(self):
		with pytest.raises(ConfigError, match="unknown configuration key 'colour'"):
			RunConfig.from_sources(overrides={"colour": "red"}, environ={})

	def test_invalid_toml(self, tmp_path):
		path = tmp_path / "broken.toml"
		path.write_text("tau = = 1\n")

		with pytest.raises(ConfigError, match="invalid TOML"):
			RunConfig.from_sources(str(path), environ={})

	@pytest.mark.parametrize(
		"overrides",
		[
			{"tau": "0"},
			{"tau": "1.5"},
			{"theta": "1.0"},
			{"iou_thresholds": "0.3,0.2"},
			{"confidence_thresholds": "0.5,1.0"},
			{"precedence": "boundary,boundary"},
			{"precedence": "glare"},
			{"threads": "0"},
			{"threads": "2.5"},
			{"synth_profile": "blurry"},
			{"log_level": "chatty"},
			{"nms": "maybe"},
		],
	)
	def test_invalid_values(self, overrides):
		with pytest.raises(ConfigError):
			RunConfig.from_sources(overrides=overrides, environ={})

	def test_comma_separated_grid(self):
		config = RunConfig.from_sources(overrides={"iou_thresholds": "0.1, 0.3,0.5"}, environ={})

		assert config.iou_thresholds == (0.1, 0.3, 0.5)

	@pytest.mark.parametrize("raw,expected", [("yes", True), ("on", True), ("1", True), ("off", False), ("False", False)])
	def test_boolean_spellings(self, raw, expected):
		assert RunConfig.from_sources(overrides={"nms": raw}, environ={}).nms is expected

	def test_echo_excludes_execution_keys(self):
		echo = RunConfig(threads=4, output_dir="elsewhere").echo()

		assert "threads" not in echo and "output_dir" not in echo and "log_level" not in echo
		assert echo["tau"] == 0.15
		assert echo["iou_thresholds"][0] == 0.05
		assert echo == RunConfig().echo()

	def test_iou_sweep_theta_follows_operating_theta(self):
		assert RunConfig().sweep_theta is None
		assert RunConfig(theta=0.2).iou_sweep_theta == 0.2
		assert RunConfig.from_sources(overrides={"sweep_theta": "0.0"}, environ={}).iou_sweep_theta == 0.0
		with pytest.raises(ConfigError):
			RunConfig.from_sources(overrides={"sweep_theta": "1.0"}, environ={})

	def test_with_overrides_coerces(self):
		config = RunConfig().with_overrides(tau="0.25", synth_rle="no")

		assert (config.tau, config.synth_rle) == (0.25, False)


@pytest.mark.unit
class TestParseOverrides:
	"""Trailing --key value tokens"""

	def test_forms(self):
		tokens = ["--tau", "0.5", "--iou-thresholds=0.1,0.2", "--nms", "--theta", "0.2"]

		assert parse_overrides(tokens) == {"tau": "0.5", "iou_thresholds": "0.1,0.2", "nms": "true", "theta": "0.2"}

	def test_trailing_flag(self):
		assert parse_overrides(["--warnings-as-errors"]) == {"warnings_as_errors": "true"}

	def test_empty(self):
		assert parse_overrides([]) == {}

	@pytest.mark.parametrize("tokens", [["tau"], ["--"], ["--tau", "0.5", "stray"]])
	def test_malformed(self, tokens):
		with pytest.raises(ConfigError):
			parse_overrides(tokens)
