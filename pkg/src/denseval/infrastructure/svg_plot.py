"""
Static SVG line charts of a sweep curve.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Optional, Union

import matplotlib

matplotlib.use("Agg")
from matplotlib import rc_context  # noqa: E402
from matplotlib.figure import Figure  # noqa: E402

from ..domain.metrics import SweepAxis, SweepCurve

logger = logging.getLogger(__name__)

_AXIS_LABELS = {
    SweepAxis.IOU: "IoU matching threshold",
    SweepAxis.CONFIDENCE: "Confidence threshold",
}

# fixed salt and no timestamp keep the SVG byte-identical between runs
_SVG_PARAMS = {"svg.hashsalt": "denseval", "svg.fonttype": "none"}


def write_sweep_svg(
    curve: SweepCurve,
    path: Union[str, Path],
    operating_point: Optional[float] = None,
    title: Optional[str] = None,
) -> Path:
    """F1 (percent) against threshold, with a dashed vertical line at the operating point."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    xs = list(curve.thresholds)
    ys = [100.0 * f for f in curve.f1_values]

    with rc_context(_SVG_PARAMS):
        fig = Figure(figsize=(6.4, 4.0))
        ax = fig.add_subplot(1, 1, 1)
        ax.plot(xs, ys, marker="o", color="#0d6efd", linewidth=1.5, label="F1")
        if operating_point is not None:
            ax.axvline(operating_point, color="#6c757d", linestyle="--", linewidth=1.0)
            ax.annotate(
                f"{_AXIS_LABELS[curve.axis].split()[0]}={operating_point:g}",
                xy=(operating_point, 2.0),
                fontsize=8,
                color="#6c757d",
            )
        ax.set_xlabel(_AXIS_LABELS[curve.axis])
        ax.set_ylabel("F1 (%)")
        ax.set_ylim(0.0, 102.0)
        if len(xs) == 1:
            ax.set_xlim(xs[0] - 0.05, xs[0] + 0.05)
        ax.grid(True, color="#e9ecef")
        if title:
            ax.set_title(title)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
    logger.info("Wrote %s", path)
    return path
