"""Ablation, transport-comparison and analysis harnesses."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import layers
from .autodiff import grad_check
from .config import ModelConfig
from .data import MotionDataset
from .layers import DmlVariant, GtlVariant
from .network import build_model, evaluate, train
from .shapespace import RotationMatrix3, rotation_angle

__all__ = [
    "AblationRow",
    "GradCheckRow",
    "run_ablation",
    "run_pt_comparison",
    "rotation_coherence_report",
    "gradcheck_suite",
    "worker_count",
]

GEOMETRY_TOLERANCE = 1e-5
NETWORK_TOLERANCE = 1e-6


def worker_count(requested: int | None = None) -> int:
    """Worker pool bound: explicit argument, then E2E_THREADS, then 1."""
    if requested is not None:
        return max(1, requested)
    return max(1, int(os.environ.get("E2E_THREADS", "1")))


@dataclass
class AblationRow:
    gtl: str      # variant value or "none"
    dml: str
    accuracy: float


def _cell_accuracy(base_config: ModelConfig, train_ds: MotionDataset,
                   test_ds: MotionDataset, gtl, dml) -> float:
    cfg = base_config.with_overrides(gtl_variant=gtl, dml_variant=dml,
                                     projection="auto")
    model = train(build_model(cfg), train_ds)
    return evaluate(model, test_ds).accuracy


def run_ablation(train_ds: MotionDataset, test_ds: MotionDataset,
                 base_config: ModelConfig,
                 gtl_variants=None, dml_variants=None,
                 baseline_gtl: GtlVariant = GtlVariant.RIGID_CONSTRAINED,
                 threads: int | None = None) -> list[AblationRow]:
    """Accuracy for every transform x scaling combination, one seed for all.

    Called without explicit variant lists it produces the full 4x4 grid
    preceded by the baseline (no geometric layers) and baseline+transform
    rows; explicit lists train exactly their product.
    """
    full_grid = gtl_variants is None and dml_variants is None
    if gtl_variants is None:
        gtl_variants = list(GtlVariant)
    if dml_variants is None:
        dml_variants = list(DmlVariant)
    cells: list[tuple] = []
    if full_grid:
        cells.append((None, None))
        cells.append((baseline_gtl, None))
    cells.extend((g, d) for g in gtl_variants for d in dml_variants)

    workers = worker_count(threads)

    def run_cell(cell):
        g, d = cell
        return _cell_accuracy(base_config, train_ds, test_ds, g, d)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            accuracies = list(pool.map(run_cell, cells))
    else:
        accuracies = [run_cell(c) for c in cells]

    return [AblationRow(gtl=(g.value if g else "none"),
                        dml=(d.value if d else "none"),
                        accuracy=acc)
            for (g, d), acc in zip(cells, accuracies)]


def run_pt_comparison(train_ds: MotionDataset, test_ds: MotionDataset,
                      base_config: ModelConfig,
                      dml_variant: DmlVariant = DmlVariant.GLOBAL_HOMOGENEOUS,
                      ) -> list[AblationRow]:
    """Three projection strategies under one head and seed.

    FS: log map of every frame at the reference. PT: consecutive-frame log
    maps pole-ladder-transported to the reference. DML: FS plus the
    learnable scaling layer.
    """
    rows = []
    for name, overrides in (
            ("FS", dict(projection="logmap", gtl_variant=None, dml_variant=None)),
            ("PT", dict(projection="pt", gtl_variant=None, dml_variant=None)),
            ("DML", dict(projection="logmap", gtl_variant=None,
                         dml_variant=dml_variant))):
        cfg = base_config.with_overrides(**overrides)
        model = train(build_model(cfg), train_ds)
        rows.append(AblationRow(gtl=name, dml=overrides["dml_variant"].value
                                if overrides["dml_variant"] else "none",
                                accuracy=evaluate(model, test_ds).accuracy))
    return rows


def rotation_coherence_report(model) -> np.ndarray:
    """Angles between the learned rotations of consecutive frames.

    Requires a rotation-constrained transform layer; returns F-1 angles in
    [0, pi]. An untrained model reports (clamp-level) zeros since all
    per-frame rotations start at the identity.
    """
    if model.config.gtl_variant is not GtlVariant.RIGID_CONSTRAINED:
        raise ValueError("rotation coherence requires the rigid-constrained "
                         "transform variant")
    mats = layers.rotation_matrices_from_angles(model.params["gtl.values"])
    return np.array([
        rotation_angle(RotationMatrix3(mats[f]), RotationMatrix3(mats[f + 1]))
        for f in range(mats.shape[0] - 1)
    ])


# ---------------------------------------------------------------------------
# Finite-difference verification of every differentiable component
# ---------------------------------------------------------------------------

@dataclass
class GradCheckRow:
    component: str
    max_rel_error: float
    threshold: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.threshold


def _geometry_check(gtl: GtlVariant, dml: DmlVariant, rng, frames=5, joints=4):
    rows = joints - 1
    from .shapespace import preshape_frames
    seq = preshape_frames(rng.normal(size=(frames, joints, 3)))
    gtl_init = layers.init_gtl_params(gtl, frames, rows, rng)
    if gtl.constrained:
        gtl_init = gtl_init + rng.normal(scale=0.3, size=gtl_init.shape)
    dml_init = layers.init_dml_params(dml, frames, rows, rng)
    readout = rng.normal(size=(frames, rows, 3))

    def f(gtl_var, dml_var):
        tape = gtl_var.tape
        tangents = layers.gtl_apply(tape.constant(seq), gtl_var, gtl, 0)
        scaled = layers.dml_apply(tangents, dml_var, dml)
        return ad.sum_(ad.mul(scaled, tape.constant(readout)))

    return grad_check(f, [gtl_init, dml_init])


def _network_checks(rng):
    """Head components against finite differences, tiny random instances."""
    x = rng.normal(size=(2, 6, 4))
    w = rng.normal(size=(3, 4, 3)) * 0.5
    b = rng.normal(size=(3,)) * 0.1
    labels2 = np.array([0, 1])

    def f_conv(wv, bv):
        tape = wv.tape
        out = ad.conv1d(tape.constant(x), wv, bv)
        return ad.frobenius_norm(out)

    conv_err = grad_check(f_conv, [w, b])

    xs = rng.normal(size=(2, 4))
    h0 = np.zeros((2, 3))
    wi = rng.normal(size=(4, 12)) * 0.5
    wh = rng.normal(size=(3, 12)) * 0.5
    bias = rng.normal(size=(12,)) * 0.1

    def f_lstm(wiv, whv, bv):
        tape = wiv.tape
        hc = ad.lstm_step(tape.constant(xs), tape.constant(h0),
                          tape.constant(h0), wiv, whv, bv)
        return ad.frobenius_norm(hc)

    lstm_err = grad_check(f_lstm, [wi, wh, bias])

    xf = rng.normal(size=(2, 5))
    w1 = rng.normal(size=(5, 4)) * 0.5
    b1 = rng.normal(size=(4,)) * 0.1
    w2 = rng.normal(size=(4, 2)) * 0.5
    b2 = rng.normal(size=(2,)) * 0.1

    def f_fc(w1v, b1v, w2v, b2v):
        tape = w1v.tape
        hidden = ad.relu(ad.linear(tape.constant(xf), w1v, b1v))
        logits = ad.linear(hidden, w2v, b2v)
        return ad.softmax_cross_entropy(logits, labels2)

    fc_err = grad_check(f_fc, [w1, b1, w2, b2])
    return [("conv1d", conv_err), ("lstm", lstm_err), ("fc", fc_err)]


def gradcheck_suite(seed: int = 0) -> list[GradCheckRow]:
    """All 16 transform x scaling combinations plus the head components."""
    rng = np.random.default_rng(seed)
    out = []
    for gtl in GtlVariant:
        for dml in DmlVariant:
            err = _geometry_check(gtl, dml, rng)
            out.append(GradCheckRow(component=f"{gtl.value}+{dml.value}",
                                    max_rel_error=err,
                                    threshold=GEOMETRY_TOLERANCE))
    for name, err in _network_checks(rng):
        out.append(GradCheckRow(component=name, max_rel_error=err,
                                threshold=NETWORK_TOLERANCE))
    return out
