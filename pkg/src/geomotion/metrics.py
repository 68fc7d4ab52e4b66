"""Score-based evaluation metrics.

Two pairs: separation degree and distance metric quantify how well a
model's probability scores separate groups; cross correlation and
Euclidean distance quantify consistency between model scores and human
(clinical) scores.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "separation_degree",
    "distance_metric",
    "cross_correlation",
    "euclidean_distance",
]


def _as_vector(x, name):
    arr = np.asarray(x, dtype=np.float64).reshape(-1)
    if arr.size == 0:
        raise ValueError(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def separation_degree(x, y) -> float:
    """Mean of (x_i - y_j) / (x_i + y_j) over all pairs; in [-1, 1].

    Both sequences must be strictly positive. Antisymmetric under swapping
    the arguments.
    """
    xv = _as_vector(x, "x")
    yv = _as_vector(y, "y")
    if xv.min() <= 0 or yv.min() <= 0:
        raise ValueError("separation degree requires strictly positive entries")
    pairwise = (xv[:, None] - yv[None, :]) / (xv[:, None] + yv[None, :])
    return float(pairwise.mean())


def distance_metric(x, y, index: int) -> float:
    """|x_n - y_n| normalized by the RMS of the elementwise differences.

    ``index`` is 1-based. Identical sequences have a zero denominator and
    are rejected as degenerate.
    """
    xv = _as_vector(x, "x")
    yv = _as_vector(y, "y")
    if xv.shape != yv.shape:
        raise ValueError(f"length mismatch: {xv.size} vs {yv.size}")
    if not 1 <= index <= xv.size:
        raise ValueError(f"index {index} out of range for length {xv.size}")
    diff = xv - yv
    rms = np.sqrt((diff * diff).mean())
    if rms == 0.0:
        raise ValueError("degenerate: identical sequences")
    return float(abs(diff[index - 1]) / rms)


def cross_correlation(x, y) -> float:
    """Pearson correlation coefficient; constant sequences are rejected."""
    xv = _as_vector(x, "x")
    yv = _as_vector(y, "y")
    if xv.shape != yv.shape:
        raise ValueError(f"length mismatch: {xv.size} vs {yv.size}")
    xc = xv - xv.mean()
    yc = yv - yv.mean()
    denom = np.sqrt((xc * xc).sum() * (yc * yc).sum())
    if denom == 0.0:
        raise ValueError("cross correlation undefined for a constant sequence")
    return float((xc * yc).sum() / denom)


def euclidean_distance(x, y) -> float:
    """Plain l2 distance between two equal-length sequences."""
    xv = _as_vector(x, "x")
    yv = _as_vector(y, "y")
    if xv.shape != yv.shape:
        raise ValueError(f"length mismatch: {xv.size} vs {yv.size}")
    return float(np.sqrt(((xv - yv) ** 2).sum()))
