"""
Unit tests for rule-based error categorization
"""

import numpy as np
import pytest

from denseval.application.error_analysis import (
	ErrorAnalysisParams,
	categorize_errors,
	local_contrast,
	merge_breakdowns,
	neighborhood_density,
)
from denseval.domain.errors import EvaluationError, GeometryError
from denseval.domain.masks import AnnotationSet, LuminanceImage
from denseval.domain.metrics import ErrorCategory, ErrorKind, MatchOutcome

W, H = 1280, 960


@pytest.fixture
def blob(make_box):
	"""5x5 box centred on (cx, cy)"""

	def _blob(cx, cy):
		return make_box(W, H, cx - 2, cy - 2, cx + 2, cy + 2)

	return _blob


def _run(blob, make_predictions, fp_centers=(), gt_centers=(), fn=(), img=None, params=None):
	preds = make_predictions("img", W, H, [(blob(x, y), 0.9) for x, y in fp_centers])
	gts = AnnotationSet("img", W, H, tuple(blob(x, y) for x, y in gt_centers))
	outcome = MatchOutcome(
		image_id="img",
		tau=0.15,
		matches=(),
		fp_indices=tuple(range(len(fp_centers))),
		fn_indices=tuple(fn),
	)
	return categorize_errors(outcome, gts, preds, img, params)


def _categories(breakdown, kind):
	return [r.category for r in breakdown.records if r.kind is kind]


@pytest.mark.unit
class TestCategorizeErrors:
	"""One category per FP and FN"""

	def test_fp_near_edge_is_boundary(self, blob, make_predictions):
		breakdown = _run(blob, make_predictions, fp_centers=[(10, 480)], gt_centers=[(60, 480)])

		assert _categories(breakdown, ErrorKind.FP) == [ErrorCategory.BOUNDARY]
		assert breakdown.records[0].centroid == (10.0, 480.0)
		assert breakdown.records[0].measurements["edge_distance"] == 10.0

	def test_fp_far_from_ground_truth_is_clutter(self, blob, make_predictions):
		breakdown = _run(blob, make_predictions, fp_centers=[(640, 480)], gt_centers=[(60, 480)])

		assert _categories(breakdown, ErrorKind.FP) == [ErrorCategory.BACKGROUND_CLUTTER]

	def test_ground_truth_exactly_at_clutter_radius(self, blob, make_predictions):
		at_radius = _run(blob, make_predictions, fp_centers=[(640, 480)], gt_centers=[(740, 480)])
		inside = _run(blob, make_predictions, fp_centers=[(640, 480)], gt_centers=[(739, 480)])

		assert _categories(at_radius, ErrorKind.FP) == [ErrorCategory.BACKGROUND_CLUTTER]
		assert at_radius.records[0].measurements["gt_within_clutter_radius"] == 0.0
		assert _categories(inside, ErrorKind.FP) == [ErrorCategory.UNCATEGORIZED]

	def test_edge_distance_symmetric(self, blob, make_predictions):
		breakdown = _run(blob, make_predictions, fp_centers=[(2, 480), (W - 3, 480), (640, H - 3)], gt_centers=[(60, 480)])

		assert [r.measurements["edge_distance"] for r in breakdown.records] == [2.0, 2.0, 2.0]

	def test_clutter_outranks_boundary(self, blob, make_predictions):
		breakdown = _run(blob, make_predictions, fp_centers=[(10, 480)], gt_centers=[(640, 480)])

		assert _categories(breakdown, ErrorKind.FP) == [ErrorCategory.BACKGROUND_CLUTTER]

	def test_custom_precedence(self, blob, make_predictions):
		params = ErrorAnalysisParams(precedence=(ErrorCategory.BOUNDARY, ErrorCategory.BACKGROUND_CLUTTER))

		breakdown = _run(blob, make_predictions, fp_centers=[(10, 480)], gt_centers=[(640, 480)], params=params)

		assert _categories(breakdown, ErrorKind.FP) == [ErrorCategory.BOUNDARY]
		assert breakdown.precedence == (ErrorCategory.BOUNDARY, ErrorCategory.BACKGROUND_CLUTTER)

	def test_clustered_fn_are_occluded(self, blob, make_predictions):
		centers = [(600 + 10 * k, 480) for k in range(6)]

		breakdown = _run(blob, make_predictions, gt_centers=centers, fn=range(6))

		assert _categories(breakdown, ErrorKind.FN) == [ErrorCategory.OCCLUDED] * 6
		assert breakdown.records[0].measurements["neighbours"] == 6.0

	def test_isolated_fn_without_image(self, blob, make_predictions):
		breakdown = _run(blob, make_predictions, gt_centers=[(640, 480)], fn=[0])

		assert _categories(breakdown, ErrorKind.FN) == [ErrorCategory.UNCATEGORIZED]
		assert breakdown.records[0].measurements["local_contrast"] is None

	def test_flat_luminance_is_low_contrast(self, blob, make_predictions):
		img = LuminanceImage(W, H, np.full((H, W), 100, dtype=np.uint8))

		breakdown = _run(blob, make_predictions, gt_centers=[(640, 480)], fn=[0], img=img)

		assert _categories(breakdown, ErrorKind.FN) == [ErrorCategory.LOW_CONTRAST]
		assert breakdown.records[0].measurements["local_contrast"] == 0.0

	def test_zero_margin_disables_boundary(self, blob, make_predictions):
		params = ErrorAnalysisParams(boundary_margin=0.0)

		breakdown = _run(blob, make_predictions, fp_centers=[(10, 480)], gt_centers=[(60, 480)], params=params)

		assert _categories(breakdown, ErrorKind.FP) == [ErrorCategory.UNCATEGORIZED]

	def test_high_cutoff_sends_remainder_to_low_contrast(self, blob, make_predictions):
		rng = np.random.default_rng(4)
		img = LuminanceImage(W, H, rng.integers(0, 256, size=(H, W)).astype(np.uint8))
		params = ErrorAnalysisParams(contrast_cutoff=256.0)

		breakdown = _run(
			blob, make_predictions, fp_centers=[(60, 300)], gt_centers=[(60, 330), (640, 480)], fn=[1], img=img, params=params
		)

		assert breakdown.counts[ErrorKind.FP][ErrorCategory.UNCATEGORIZED] == 0
		assert breakdown.counts[ErrorKind.FN][ErrorCategory.UNCATEGORIZED] == 0
		assert _categories(breakdown, ErrorKind.FN) == [ErrorCategory.LOW_CONTRAST]

	def test_contrast_rule_can_be_disabled(self, blob, make_predictions):
		img = LuminanceImage(W, H, np.zeros((H, W), dtype=np.uint8))

		breakdown = _run(
			blob, make_predictions, gt_centers=[(640, 480)], fn=[0], img=img, params=ErrorAnalysisParams(contrast_rule=False)
		)

		assert _categories(breakdown, ErrorKind.FN) == [ErrorCategory.UNCATEGORIZED]

	def test_totals_match_outcome(self, blob, make_predictions):
		breakdown = _run(
			blob,
			make_predictions,
			fp_centers=[(10, 480), (640, 480), (1000, 100)],
			gt_centers=[(60, 480), (300, 300)],
			fn=[0, 1],
		)

		assert breakdown.total(ErrorKind.FP) == 3
		assert breakdown.total(ErrorKind.FN) == 2
		assert len(breakdown.rows()) == 9

	def test_fp_reports_source_index(self, blob, make_predictions):
		breakdown = _run(blob, make_predictions, fp_centers=[(640, 480), (10, 480)], gt_centers=[(60, 480)])

		assert [r.index for r in breakdown.records] == [0, 1]

	def test_each_error_classified_independently(self, blob, make_predictions):
		centers = [(10, 480), (640, 480), (1000, 100)]
		forward = _run(blob, make_predictions, fp_centers=centers, gt_centers=[(60, 480)])
		backward = _run(blob, make_predictions, fp_centers=centers[::-1], gt_centers=[(60, 480)])

		assert forward.counts == backward.counts

	def test_luminance_size_mismatch(self, blob, make_predictions):
		img = LuminanceImage(10, 10, np.zeros((10, 10), dtype=np.uint8))

		with pytest.raises(GeometryError):
			_run(blob, make_predictions, gt_centers=[(640, 480)], fn=[0], img=img)

	def test_merge(self, blob, make_predictions):
		a = _run(blob, make_predictions, fp_centers=[(640, 480)], gt_centers=[(60, 480)])
		b = _run(blob, make_predictions, fp_centers=[(10, 480)], gt_centers=[(60, 480)])

		merged = merge_breakdowns([a, b], a.precedence)

		assert merged.counts[ErrorKind.FP][ErrorCategory.BACKGROUND_CLUTTER] == 1
		assert merged.counts[ErrorKind.FP][ErrorCategory.BOUNDARY] == 1
		assert len(merged.records) == 2


@pytest.mark.unit
class TestParams:
	"""Rule parameters"""

	@pytest.mark.parametrize(
		"precedence",
		[
			(ErrorCategory.BOUNDARY, ErrorCategory.BOUNDARY),
			(ErrorCategory.BOUNDARY, ErrorCategory.UNCATEGORIZED),
			("glare",),
		],
	)
	def test_invalid_precedence(self, precedence):
		with pytest.raises((EvaluationError, ValueError)):
			ErrorAnalysisParams(precedence=precedence)

	def test_string_precedence_is_coerced(self):
		params = ErrorAnalysisParams(precedence=("occluded", "boundary"))

		assert params.precedence == (ErrorCategory.OCCLUDED, ErrorCategory.BOUNDARY)

	@pytest.mark.parametrize(
		"overrides",
		[{"boundary_margin": -1.0}, {"clutter_radius": 0.0}, {"occlusion_min": 0}, {"contrast_padding": -2}],
	)
	def test_out_of_range(self, overrides):
		with pytest.raises(EvaluationError):
			ErrorAnalysisParams(**overrides)


@pytest.mark.unit
class TestMeasurements:
	"""Local contrast and neighbourhood density"""

	def test_local_contrast(self):
		values = np.zeros((4, 4), dtype=np.uint8)
		values[:, 2:] = 255
		img = LuminanceImage(4, 4, values)

		assert local_contrast(img, (0, 0, 1, 3)) == 0.0
		assert local_contrast(img, (1, 0, 2, 0)) == 127.5
		assert local_contrast(img, (2, 0, 10, 10)) == 0.0

	def test_region_outside_image(self):
		img = LuminanceImage(4, 4, np.zeros((4, 4), dtype=np.uint8))

		with pytest.raises(GeometryError):
			local_contrast(img, (10, 10, 20, 20))

	def test_density_closed_ball(self):
		assert neighborhood_density(np.array([[3.0, 4.0]]), (0.0, 0.0), 5.0) == 1
		assert neighborhood_density(np.array([[3.0, 4.1]]), (0.0, 0.0), 5.0) == 0

	def test_density_empty(self):
		assert neighborhood_density(np.zeros((0, 2)), (0.0, 0.0), 5.0) == 0

	def test_density_from_annotations(self, blob):
		gts = AnnotationSet("img", W, H, tuple(blob(600 + 10 * k, 480) for k in range(5)))

		assert neighborhood_density(gts, (620.0, 480.0), 200.0) == 5
		assert neighborhood_density(gts, (620.0, 480.0), 5.0) == 1

	def test_density_radius(self):
		with pytest.raises(EvaluationError):
			neighborhood_density(np.zeros((0, 2)), (0.0, 0.0), 0.0)
