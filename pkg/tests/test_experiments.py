"""Tests for the ablation and comparison harness plumbing."""

import pytest

from geomotion.config import ModelConfig
from geomotion.data import MotionDataset, SynthSpec, generate_synthetic
from geomotion.experiments import (gradcheck_suite, run_ablation,
                                   run_pt_comparison, worker_count)
from geomotion.layers import DmlVariant, GtlVariant


@pytest.fixture(scope="module")
def tiny_split():
    spec = SynthSpec(n_classes=2, per_class=6, frames=12, joints=4,
                     noise_sd=0.02, seed=1)
    ds = MotionDataset.from_sequences(generate_synthetic(spec), target_len=12)
    return (MotionDataset(ds.preshapes[:8], ds.labels[:8], ds.subjects[:8]),
            MotionDataset(ds.preshapes[8:], ds.labels[8:], ds.subjects[8:]))


def tiny_config(**overrides):
    base = dict(n_classes=2, seq_len=12, n_joints=4, epochs=1, batch_size=4,
                lr=1e-3, seed=0)
    base.update(overrides)
    return ModelConfig(**base)


class TestRunAblation:
    def test_none_grid_is_single_baseline_row(self, tiny_split):
        rows = run_ablation(*tiny_split, tiny_config(),
                            gtl_variants=[None], dml_variants=[None])
        assert len(rows) == 1
        assert rows[0].gtl == "none" and rows[0].dml == "none"

    def test_default_grid_shape(self, tiny_split):
        rows = run_ablation(*tiny_split, tiny_config())
        assert len(rows) == 18
        assert (rows[0].gtl, rows[0].dml) == ("none", "none")
        assert (rows[1].gtl, rows[1].dml) == ("rigid-constrained", "none")
        grid = {(r.gtl, r.dml) for r in rows[2:]}
        assert len(grid) == 16
        assert all(0.0 <= r.accuracy <= 1.0 for r in rows)

    def test_thread_pool_matches_sequential(self, tiny_split):
        kwargs = dict(gtl_variants=[GtlVariant.RIGID_CONSTRAINED],
                      dml_variants=[DmlVariant.GLOBAL_HOMOGENEOUS, None])
        seq = run_ablation(*tiny_split, tiny_config(), threads=1, **kwargs)
        par = run_ablation(*tiny_split, tiny_config(), threads=2, **kwargs)
        assert [(r.gtl, r.dml, r.accuracy) for r in seq] == \
            [(r.gtl, r.dml, r.accuracy) for r in par]


class TestWorkerCount:
    def test_explicit_argument_wins(self):
        assert worker_count(3) == 3

    def test_env_variable(self, monkeypatch):
        monkeypatch.setenv("E2E_THREADS", "4")
        assert worker_count() == 4

    def test_default_is_one(self, monkeypatch):
        monkeypatch.delenv("E2E_THREADS", raising=False)
        assert worker_count() == 1


class TestPtComparison:
    def test_rows_and_order(self, tiny_split):
        rows = run_pt_comparison(*tiny_split, tiny_config())
        assert [r.gtl for r in rows] == ["FS", "PT", "DML"]
        assert rows[2].dml == "gh"


class TestGradcheckSuite:
    def test_row_structure(self):
        rows = gradcheck_suite(seed=1)
        assert len(rows) == 19
        combos = [r for r in rows if "+" in r.component]
        assert len(combos) == 16
        assert {r.component for r in rows if "+" not in r.component} == \
            {"conv1d", "lstm", "fc"}
        assert all(r.passed for r in rows)
