import os
import sys

import numpy as np
import pytest

# Ensure src/ is on the import path for test discovery
ROOT_DIR = os.path.dirname(os.path.dirname(__file__))
SRC_DIR = os.path.join(ROOT_DIR, "src")
if SRC_DIR not in sys.path:
	sys.path.insert(0, SRC_DIR)

from denseval.config import RunConfig  # noqa: E402
from denseval.domain.masks import InstanceMask, PredictionSet, ScoredInstance  # noqa: E402


@pytest.fixture
def make_box():
	"""Factory for rectangular masks with inclusive corners"""
	def _make(width, height, x0, y0, x1, y1, instance_id=1):
		full = np.zeros((height, width), dtype=bool)
		full[y0 : y1 + 1, x0 : x1 + 1] = True
		return InstanceMask.from_full(instance_id, full)
	return _make


@pytest.fixture
def make_mask():
	"""Factory for masks from a list of (x, y) pixels"""
	def _make(width, height, pixels, instance_id=1):
		full = np.zeros((height, width), dtype=bool)
		for x, y in pixels:
			full[y, x] = True
		return InstanceMask.from_full(instance_id, full)
	return _make


@pytest.fixture
def make_predictions():
	"""Factory for prediction sets from (mask, confidence) pairs"""
	def _make(image_id, width, height, pairs):
		items = tuple(ScoredInstance(geometry=m, confidence=s, source_index=i) for i, (m, s) in enumerate(pairs))
		return PredictionSet(image_id, width, height, items)
	return _make


@pytest.fixture
def small_synth_config(tmp_path):
	"""Small synthetic dataset settings that generate quickly"""
	def _make(**overrides):
		values = dict(
			output_dir=str(tmp_path / "synth"),
			synth_images=3,
			synth_instances=6,
			synth_width=160,
			synth_height=120,
			synth_min_axis=6.0,
			synth_max_axis=10.0,
			seed=7,
		)
		values.update(overrides)
		return RunConfig(**values)
	return _make
