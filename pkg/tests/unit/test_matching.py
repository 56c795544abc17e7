"""
Unit tests for instance matching, aggregate metrics, AP50 and efficiency
"""

import numpy as np
import pytest
from scipy.optimize import linear_sum_assignment

from denseval.application.diagnostics import Diagnostics
from denseval.application.matching import (
	IouCache,
	align_images,
	average_precision_50,
	dataset_metrics,
	efficiency_metrics,
	error_rates,
	evaluate_pairs,
	match_from_matrix,
	match_instances,
	mean_image_f1,
	prf,
)
from denseval.application.sweeps import DEFAULT_IOU_GRID
from denseval.domain.errors import EvaluationError, GeometryError
from denseval.domain.masks import AnnotationSet, InstanceMask, Polygon, PredictionSet
from denseval.domain.metrics import ComputeProfile, Match, MatchOutcome, MetricsReport
from denseval.geometry.raster import iou_matrix

# (TP, FP, FN) -> (precision, recall, F1) in percent, over 3,970 ground-truth instances
TABLE_ROWS = [
	((2577, 2074, 1393), (55.4, 64.9, 59.8)),
	((2433, 663, 1537), (78.6, 61.3, 68.9)),
	((2693, 797, 1277), (77.2, 67.8, 72.2)),
	((2733, 903, 1237), (75.2, 68.8, 71.9)),
]


def _outcome(tp, fp, fn, tau=0.15):
	return MatchOutcome(
		image_id="img",
		tau=tau,
		matches=tuple(Match(i, i, 1.0) for i in range(tp)),
		fp_indices=tuple(range(tp, tp + fp)),
		fn_indices=tuple(range(tp, tp + fn)),
	)


def _report(f1):
	return MetricsReport(tp=0, fp=0, fn=0, precision=f1, recall=f1, f1=f1, mean_image_f1=f1, tau=0.15, theta=0.35)


def _random_scene(rng, size=32):
	def box():
		x0, y0 = (int(v) for v in rng.integers(0, size - 4, size=2))
		w, h = (int(v) for v in rng.integers(2, 10, size=2))
		full = np.zeros((size, size), dtype=bool)
		full[y0 : y0 + h, x0 : x0 + w] = True
		return full

	gts = [InstanceMask.from_full(j + 1, box()) for j in range(int(rng.integers(0, 7)))]
	preds = [(InstanceMask.from_full(i + 1, box()), float(rng.uniform())) for i in range(int(rng.integers(0, 7)))]
	return (
		PredictionSet.from_pairs("scene", size, size, preds),
		AnnotationSet("scene", size, size, tuple(gts)),
	)


def _max_matching(feasible):
	if feasible.size == 0:
		return 0
	rows, cols = linear_sum_assignment(feasible.astype(float), maximize=True)
	return int(feasible[rows, cols].sum())


@pytest.mark.unit
class TestMatchInstances:
	"""Greedy confidence-ordered one-to-one matching"""

	def test_identity(self, make_box, make_predictions):
		box = make_box(20, 20, 3, 3, 9, 9)

		outcome = match_instances(make_predictions("img", 20, 20, [(box, 0.5)]), AnnotationSet("img", 20, 20, (box,)), 0.15)

		assert (outcome.tp, outcome.fp, outcome.fn) == (1, 0, 0)
		assert outcome.matches[0].iou == 1.0

	def test_below_threshold(self, make_box, make_predictions):
		"""IoU 7/50 = 0.14 misses tau = 0.15"""
		gt = make_box(50, 1, 0, 0, 49, 0)
		pred = make_box(50, 1, 0, 0, 6, 0)

		outcome = match_instances(make_predictions("img", 50, 1, [(pred, 0.9)]), AnnotationSet("img", 50, 1, (gt,)), 0.15)

		assert (outcome.tp, outcome.fp, outcome.fn) == (0, 1, 1)

	def test_duplicate_prediction_is_fp(self, make_box, make_predictions):
		gt = make_box(10, 1, 0, 0, 9, 0)
		pred = make_box(10, 1, 0, 0, 8, 0)
		preds = make_predictions("img", 10, 1, [(pred, 0.8), (pred, 0.9)])

		outcome = match_instances(preds, AnnotationSet("img", 10, 1, (gt,)), 0.15)

		assert outcome.matches == (Match(pred_index=1, gt_index=0, iou=0.9),)
		assert outcome.fp_indices == (0,)

	def test_prefers_highest_iou_ground_truth(self, make_box, make_predictions):
		gts = (make_box(20, 1, 0, 0, 9, 0), make_box(20, 1, 10, 0, 19, 0))
		pred = make_box(20, 1, 7, 0, 19, 0)

		outcome = match_instances(make_predictions("img", 20, 1, [(pred, 0.9)]), AnnotationSet("img", 20, 1, gts), 0.15)

		assert outcome.matches[0].gt_index == 1
		assert outcome.fn_indices == (0,)

	def test_ground_truth_tie_goes_to_smaller_index(self, make_box, make_predictions):
		box = make_box(10, 10, 0, 0, 4, 4)

		outcome = match_instances(make_predictions("img", 10, 10, [(box, 0.9)]), AnnotationSet("img", 10, 10, (box, box)), 0.5)

		assert outcome.matches[0].gt_index == 0

	def test_polygons_are_rasterized(self, make_box, make_predictions):
		poly = Polygon(vertices=((0.0, 0.0), (0.4, 0.0), (0.4, 0.4), (0.0, 0.4)))

		outcome = match_instances(
			make_predictions("img", 10, 10, [(poly, 0.9)]), AnnotationSet("img", 10, 10, (make_box(10, 10, 0, 0, 4, 4),)), 0.9
		)

		assert outcome.tp == 1

	def test_lattice_mismatch(self, make_box, make_predictions):
		with pytest.raises(GeometryError):
			match_instances(make_predictions("img", 10, 10, []), AnnotationSet("img", 12, 10, ()), 0.5)

	def test_tau_range(self):
		with pytest.raises(EvaluationError):
			match_from_matrix(np.zeros((0, 0)), [], 0.0)

	def test_partition_and_oracle_on_random_scenes(self):
		"""Greedy TP never beats maximum matching and partitions every instance"""
		rng = np.random.default_rng(1234)
		for _ in range(200):
			preds, gts = _random_scene(rng)
			tau = float(rng.choice([0.1, 0.3, 0.5]))

			outcome = match_instances(preds, gts, tau)
			feasible = iou_matrix([i.geometry for i in preds.items], list(gts.instances)) >= tau

			assert outcome.tp + outcome.fn == len(gts.instances)
			assert outcome.tp + outcome.fp == len(preds.items)
			assert len({m.pred_index for m in outcome.matches}) == outcome.tp
			assert len({m.gt_index for m in outcome.matches}) == outcome.tp
			assert all(m.iou >= tau for m in outcome.matches)
			assert outcome.tp <= _max_matching(feasible)
			if (feasible.sum(axis=0) <= 1).all() and (feasible.sum(axis=1) <= 1).all():
				assert outcome.tp == _max_matching(feasible)

	def test_maximum_matching_shrinks_along_tau_grid(self):
		"""Raising tau only removes feasible pairs"""
		rng = np.random.default_rng(2024)
		for _ in range(200):
			preds, gts = _random_scene(rng)
			ious = iou_matrix([i.geometry for i in preds.items], list(gts.instances))

			best = [_max_matching(ious >= tau) for tau in DEFAULT_IOU_GRID]

			assert all(b <= a for a, b in zip(best, best[1:]))

	@pytest.mark.slow
	def test_greedy_bounded_by_maximum_matching_at_scale(self):
		rng = np.random.default_rng(99)
		for _ in range(1000):
			preds, gts = _random_scene(rng)
			outcome = match_instances(preds, gts, 0.15)
			ious = iou_matrix([i.geometry for i in preds.items], list(gts.instances))
			best = [_max_matching(ious >= tau) for tau in DEFAULT_IOU_GRID]

			assert outcome.tp <= _max_matching(ious >= 0.15)
			assert outcome.tp + outcome.fn == len(gts.instances)
			assert all(b <= a for a, b in zip(best, best[1:]))


@pytest.mark.unit
class TestMetrics:
	"""Precision, recall, F1 and their aggregates"""

	@pytest.mark.parametrize("counts,expected", TABLE_ROWS)
	def test_reference_counts(self, counts, expected):
		report = dataset_metrics([_outcome(*counts)])

		for value, target in zip((report.precision, report.recall, report.f1), expected):
			assert abs(100.0 * value - target) <= 0.05 + 1e-9
		assert report.gt_total == 3970

	def test_symmetric_counts(self):
		assert prf(1, 1, 1) == (0.5, 0.5, 0.5)

	def test_degenerate_conventions(self):
		assert prf(0, 0, 0) == (1.0, 1.0, 1.0)
		assert prf(0, 0, 0, empty_score=0.0) == (0.0, 0.0, 0.0)
		assert prf(0, 0, 3) == (1.0, 0.0, 0.0)
		assert prf(0, 2, 0) == (0.0, 1.0, 0.0)
		assert prf(0, 2, 3) == (0.0, 0.0, 0.0)

	def test_harmonic_mean_identity(self):
		p, r, f1 = prf(17, 5, 9)

		assert f1 == 2 * p * r / (p + r)

	def test_mean_image_f1(self):
		assert mean_image_f1([_outcome(1, 0, 0), _outcome(1, 1, 1)]) == 0.75
		assert mean_image_f1([_outcome(1, 0, 0), _outcome(0, 1, 1)]) == 0.5

	def test_single_image_mean_equals_dataset_f1(self):
		report = dataset_metrics([_outcome(3, 2, 4)])

		assert report.mean_image_f1 == report.f1

	def test_mixed_tau_rejected(self):
		with pytest.raises(EvaluationError):
			dataset_metrics([_outcome(1, 0, 0, tau=0.15), _outcome(1, 0, 0, tau=0.5)])

	def test_empty_inputs_rejected(self):
		with pytest.raises(EvaluationError):
			dataset_metrics([])
		with pytest.raises(EvaluationError):
			mean_image_f1([])

	def test_rates_relative_to_ground_truth(self):
		rates = error_rates(dataset_metrics([_outcome(2577, 2074, 1393)]))

		assert round(rates["tp_rate"], 1) == 64.9
		assert round(rates["fp_rate"], 1) == 52.2
		assert round(rates["fn_rate"], 1) == 35.1

	def test_rates_without_ground_truth(self):
		assert error_rates(dataset_metrics([_outcome(0, 3, 0)]))["fp_rate"] is None


@pytest.mark.unit
class TestAveragePrecision:
	"""All-point AP at IoU 0.5"""

	def test_single_correct_prediction(self, make_box, make_predictions):
		box = make_box(10, 10, 0, 0, 4, 4)

		ap = average_precision_50([make_predictions("img", 10, 10, [(box, 0.9)])], [AnnotationSet("img", 10, 10, (box,))])

		assert ap == 1.0

	def test_no_prediction_reaches_half_iou(self, make_box, make_predictions):
		gt = make_box(10, 1, 0, 0, 9, 0)
		pred = make_box(10, 1, 0, 0, 3, 0)

		ap = average_precision_50([make_predictions("img", 10, 1, [(pred, 0.9)])], [AnnotationSet("img", 10, 1, (gt,))])

		assert ap == 0.0

	def test_step_integration(self, make_box, make_predictions):
		"""TP at 0.9 then FP at 0.8 over two GT: recall 0.5 at precision 1"""
		gts = (make_box(20, 20, 0, 0, 4, 4), make_box(20, 20, 10, 10, 14, 14))
		preds = make_predictions("img", 20, 20, [(make_box(20, 20, 0, 0, 4, 4), 0.9), (make_box(20, 20, 15, 0, 19, 4), 0.8)])

		assert average_precision_50([preds], [AnnotationSet("img", 20, 20, gts)]) == 0.5

	def test_envelope_lifts_earlier_precision(self, make_box, make_predictions):
		"""FP then TP: envelope precision 0.5 over recall 0..1"""
		gt = make_box(20, 20, 0, 0, 4, 4)
		preds = make_predictions("img", 20, 20, [(make_box(20, 20, 10, 10, 14, 14), 0.9), (gt, 0.5)])

		assert average_precision_50([preds], [AnnotationSet("img", 20, 20, (gt,))]) == 0.5

	def test_global_ranking_across_images(self, make_box, make_predictions):
		box = make_box(10, 10, 0, 0, 4, 4)
		miss = make_box(10, 10, 6, 6, 9, 9)
		preds = [
			make_predictions("a", 10, 10, [(box, 0.6)]),
			make_predictions("b", 10, 10, [(miss, 0.9), (box, 0.3)]),
		]
		gts = [AnnotationSet("a", 10, 10, (box,)), AnnotationSet("b", 10, 10, (box,))]

		# ranked: FP(0.9), TP(0.6), TP(0.3) -> precision 0, 1/2, 2/3 at recall 0, 0.5, 1
		assert average_precision_50(preds, gts) == pytest.approx(2 / 3)

	def test_input_order_invariance(self, make_box, make_predictions):
		gts = (make_box(20, 20, 0, 0, 4, 4), make_box(20, 20, 10, 10, 14, 14))
		pairs = [(make_box(20, 20, 0, 0, 4, 4), 0.7), (make_box(20, 20, 15, 0, 19, 4), 0.8), (gts[1], 0.6)]

		forward = average_precision_50([make_predictions("img", 20, 20, pairs)], [AnnotationSet("img", 20, 20, gts)])
		backward = average_precision_50([make_predictions("img", 20, 20, pairs[::-1])], [AnnotationSet("img", 20, 20, gts)])

		assert forward == backward

	def test_no_ground_truth(self, make_predictions):
		with pytest.raises(EvaluationError):
			average_precision_50([make_predictions("img", 4, 4, [])], [AnnotationSet("img", 4, 4, ())])


@pytest.mark.unit
class TestEfficiency:
	"""F1 per GFLOP and runtime aggregates"""

	@pytest.mark.parametrize("f1,gflops,expected", [(0.689, 10.4, 6.62), (0.722, 65.3, 1.11), (0.719, 132.6, 0.54)])
	def test_reference_models(self, f1, gflops, expected):
		metrics = efficiency_metrics(_report(f1), ComputeProfile("m", 1, gflops))

		assert abs(metrics.e_f1 - expected) <= 0.005 + 1e-9
		assert metrics.t_total is None and metrics.t_mean is None

	def test_zero_f1(self):
		assert efficiency_metrics(_report(0.0), ComputeProfile("m", 1, 3.0)).e_f1 == 0.0

	def test_runtime_aggregates(self):
		metrics = efficiency_metrics(_report(0.5), ComputeProfile("m", 1, 1.0, per_image_times=(40.0, 50.0)))

		assert (metrics.t_total, metrics.t_mean, metrics.image_count) == (90.0, 45.0, 2)

	def test_non_positive_gflops(self):
		with pytest.raises(EvaluationError):
			efficiency_metrics(_report(0.5), ComputeProfile("m", 1, 0.0))


@pytest.mark.unit
class TestPipeline:
	"""Image alignment, caching and parallel evaluation"""

	def test_orphan_predictions(self, make_predictions):
		with pytest.raises(EvaluationError, match="ghost"):
			align_images([make_predictions("ghost", 4, 4, [])], [AnnotationSet("img", 4, 4, ())])

	def test_missing_predictions_count_as_empty(self, make_box):
		diagnostics = Diagnostics()
		gts = [AnnotationSet("img", 10, 10, (make_box(10, 10, 0, 0, 2, 2),))]

		pairs = align_images([], gts, diagnostics)
		report, _ = evaluate_pairs(pairs, tau=0.15)

		assert (report.recall, report.f1) == (0.0, 0.0)
		assert diagnostics.counts() == {"missing_predictions": 1}

	def test_empty_prediction_dropped_with_diagnostic(self, make_box, make_predictions):
		diagnostics = Diagnostics()
		flat = Polygon(vertices=((0.1, 0.1), (0.2, 0.2), (0.3, 0.3)))
		preds = make_predictions("img", 10, 10, [(flat, 0.9), (make_box(10, 10, 0, 0, 2, 2), 0.8)])
		gts = [AnnotationSet("img", 10, 10, (make_box(10, 10, 0, 0, 2, 2),))]

		(pair,) = align_images([preds], gts, diagnostics)

		assert [item.source_index for item in pair.preds.items] == [1]
		assert diagnostics.counts() == {"empty_prediction": 1}

	def test_nms_pre_pass(self, make_box, make_predictions):
		box = make_box(10, 10, 0, 0, 4, 4)
		preds = make_predictions("img", 10, 10, [(box, 0.9), (box, 0.8)])
		gts = [AnnotationSet("img", 10, 10, (box,))]

		plain, _ = evaluate_pairs(align_images([preds], gts), tau=0.5)
		suppressed, _ = evaluate_pairs(align_images([preds], gts, tau_nms=0.5), tau=0.5)

		assert (plain.tp, plain.fp) == (1, 1)
		assert (suppressed.tp, suppressed.fp) == (1, 0)

	def test_theta_filters_before_matching(self, make_box, make_predictions):
		box = make_box(10, 10, 0, 0, 4, 4)
		preds = make_predictions("img", 10, 10, [(box, 0.2)])
		pairs = align_images([preds], [AnnotationSet("img", 10, 10, (box,))])

		report, (evaluation,) = evaluate_pairs(pairs, tau=0.15, theta=0.35)

		assert (report.tp, report.fn, report.theta) == (0, 1, 0.35)
		assert evaluation.kept.items == ()

	def test_cache_computes_each_image_once(self, mocker, make_box, make_predictions):
		box = make_box(10, 10, 0, 0, 4, 4)
		pairs = align_images(
			[make_predictions(i, 10, 10, [(box, 0.9)]) for i in ("a", "b")],
			[AnnotationSet(i, 10, 10, (box,)) for i in ("a", "b")],
		)
		cache = IouCache()
		spy = mocker.spy(cache, "compute")

		for tau in (0.1, 0.5, 0.9):
			evaluate_pairs(pairs, tau=tau, cache=cache)

		assert spy.call_count == 2
		assert len(cache) == 2

	def test_parallel_matches_serial(self):
		rng = np.random.default_rng(77)
		scenes = [_random_scene(rng) for _ in range(12)]
		preds = [PredictionSet(f"s{k}", p.width, p.height, p.items) for k, (p, _) in enumerate(scenes)]
		gts = [AnnotationSet(f"s{k}", g.width, g.height, g.instances) for k, (_, g) in enumerate(scenes)]
		pairs = align_images(preds, gts)

		serial, _ = evaluate_pairs(pairs, tau=0.3, threads=1)
		parallel, _ = evaluate_pairs(pairs, tau=0.3, threads=4)

		assert serial == parallel
