"""Command line entry point.

Commands: ``synth``, ``train``, ``eval``, ``ablate``, ``compare-pt``,
``coherence``, ``distortion``, ``gradcheck``. Every command is
deterministic given its flags and seed, and emits CSV files (figures are
produced externally from these). A JSON config file supplies defaults;
command line flags override it. ``E2E_THREADS`` bounds worker pools.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, fields

import numpy as np

from .config import PRESETS, ModelConfig, preset_config
from .data import (MotionDataset, SynthSpec, kfold_split, load_dataset,
                   load_manifest, write_synthetic_dataset)
from .experiments import (gradcheck_suite, rotation_coherence_report,
                          run_ablation, run_pt_comparison)
from .layers import (DmlVariant, GtlVariant, TangentSequence,
                     distortion_report)
from .metrics import (cross_correlation, distance_metric, euclidean_distance,
                      separation_degree)
from .network import build_model, evaluate, load_model, save_model, train
from .shapespace import PreShapeSequence, _log_many
from .autodiff import Tape

__all__ = ["main", "RunConfig"]

GTL_CHOICES = [v.value for v in GtlVariant] + ["none"]
DML_CHOICES = [v.value for v in DmlVariant] + ["none"]


@dataclass
class RunConfig:
    """Every tunable of every command, each with a working default."""

    # paths
    data: str = ""
    out: str = "out"
    model: str = ""
    scores: str = ""
    # model / training
    preset: str = "rehab"
    gtl: str = "none"
    dml: str = "none"
    ref_index: int = 0
    seed: int = 0
    seq_len: int = 0          # 0: take the preset value
    batch_size: int = 0       # 0: take the preset value
    epochs: int = 0           # 0: take the preset value
    lr: float = 0.0           # 0: take the preset value
    folds: int = 5            # 0: train on everything, no held-out split
    test_fold: int = 0
    rungs: int = 20
    threads: int = 0          # 0: take E2E_THREADS (default 1)
    # synthesis
    style: str = "rehab"
    classes: int = 2
    per_class: int = 100
    frames: int = 150
    joints: int = 12
    noise_sd: float = 0.02
    # analysis
    sample: int = 0
    dump_scores: bool = False

    @classmethod
    def from_sources(cls, config_path: str | None, cli_values: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        merged: dict = {}
        if config_path:
            with open(config_path, "r", encoding="utf-8") as fh:
                file_values = json.load(fh)
            unknown = sorted(set(file_values) - known)
            if unknown:
                raise ValueError(f"config file {config_path}: unknown keys {unknown}")
            merged.update(file_values)
        merged.update({k: v for k, v in cli_values.items()
                       if k in known and v is not None})
        return cls(**merged)


def _fmt(value) -> str:
    if value is None:
        return "nan"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path, header, rows) -> None:
    lines = [",".join(header)]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _variant(name, enum_cls):
    return None if name == "none" else enum_cls(name)


def _model_config(run: RunConfig, n_classes: int, n_joints: int) -> ModelConfig:
    overrides = dict(
        gtl_variant=_variant(run.gtl, GtlVariant),
        dml_variant=_variant(run.dml, DmlVariant),
        ref_index=run.ref_index,
        seed=run.seed,
        transport_rungs=run.rungs,
    )
    if run.seq_len:
        overrides["seq_len"] = run.seq_len
    if run.batch_size:
        overrides["batch_size"] = run.batch_size
    if run.epochs:
        overrides["epochs"] = run.epochs
    if run.lr:
        overrides["lr"] = run.lr
    return preset_config(run.preset, n_classes=n_classes, n_joints=n_joints,
                         **overrides)


def _load_split(run: RunConfig, cfg: ModelConfig):
    """Dataset -> (train, held_out or None) by cross-subject folds."""
    sequences = load_dataset(run.data)
    dataset = MotionDataset.from_sequences(sequences, target_len=cfg.seq_len)
    if run.folds <= 0:
        return dataset, None
    spec = kfold_split(set(dataset.subjects), run.folds, run.seed)
    return (dataset.subset(spec.train_subjects(run.test_fold)),
            dataset.subset(spec.test_subjects(run.test_fold)))


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_synth(run: RunConfig) -> int:
    spec = SynthSpec(n_classes=run.classes, per_class=run.per_class,
                     frames=run.frames, joints=run.joints,
                     noise_sd=run.noise_sd, style=run.style, seed=run.seed)
    if spec.frames < 4:
        raise ValueError("synthetic sequences need at least 4 frames so they "
                         "can be spline-resampled")
    manifest_path = write_synthetic_dataset(spec, run.out)
    print(f"wrote {spec.n_classes * spec.per_class} sequences and {manifest_path}")
    return 0


def cmd_train(run: RunConfig) -> int:
    manifest = load_manifest(run.data)
    cfg = _model_config(run, n_classes=len(manifest.class_names),
                        n_joints=manifest.n_joints)
    train_ds, val_ds = _load_split(run, cfg)
    model = train(build_model(cfg), train_ds, val_ds)
    os.makedirs(run.out, exist_ok=True)
    model_path = os.path.join(run.out, "model.bin")
    save_model(model, model_path)
    write_csv(os.path.join(run.out, "history.csv"),
              ["epoch", "loss", "train_acc", "val_acc"],
              [(r["epoch"], r["loss"], r["train_acc"], r["val_acc"])
               for r in model.history])
    print(f"wrote {model_path} and history.csv "
          f"(final train_acc={model.history[-1]['train_acc']!r})")
    return 0


def cmd_eval(run: RunConfig) -> int:
    model = load_model(run.model)
    manifest = load_manifest(run.data)
    if manifest.n_joints != model.config.n_joints:
        raise ValueError(f"dataset has {manifest.n_joints} joints but the model "
                         f"expects {model.config.n_joints}")
    dataset = MotionDataset.from_sequences(load_dataset(run.data),
                                           target_len=model.config.seq_len)
    result = evaluate(model, dataset)
    rows = [("accuracy", "argmax", result.accuracy)]
    rows.extend((f"per_class_{c}", "argmax", acc)
                for c, acc in enumerate(result.per_class_accuracy))
    # Separation metrics between the positive-class scores of the two label
    # groups; meaningful for binary correct/incorrect style datasets.
    if model.config.n_classes == 2:
        for readout, probs in (("softmax", result.probs_softmax),
                               ("sigmoid", result.probs_sigmoid)):
            pos = probs[result.labels == 1, 1]
            neg = probs[result.labels == 0, 1]
            if len(pos) and len(neg) and pos.min() > 0 and neg.min() > 0:
                rows.append(("separation_degree", readout,
                             separation_degree(pos, neg)))
                n = min(len(pos), len(neg))
                if n and np.any(pos[:n] != neg[:n]):
                    dm = float(np.mean([distance_metric(pos[:n], neg[:n], i + 1)
                                        for i in range(n)]))
                    rows.append(("distance_metric", readout, dm))
    if run.scores:
        clinical = np.loadtxt(run.scores, delimiter=",", ndmin=1)
        for readout, probs in (("softmax", result.probs_softmax),
                               ("sigmoid", result.probs_sigmoid)):
            scores = probs[np.arange(len(dataset)), result.predictions]
            rows.append(("cross_correlation", readout,
                         cross_correlation(scores, clinical)))
            rows.append(("euclidean_distance", readout,
                         euclidean_distance(scores, clinical)))
    os.makedirs(run.out, exist_ok=True)
    write_csv(os.path.join(run.out, "metrics.csv"),
              ["metric", "readout", "value"], rows)
    if run.dump_scores:
        score_rows = [(i, int(result.labels[i]), int(result.predictions[i]),
                       *result.probs_softmax[i], *result.probs_sigmoid[i])
                      for i in range(len(dataset))]
        k = model.config.n_classes
        write_csv(os.path.join(run.out, "scores.csv"),
                  ["sample", "label", "prediction"]
                  + [f"softmax_{c}" for c in range(k)]
                  + [f"sigmoid_{c}" for c in range(k)],
                  score_rows)
    print(f"accuracy={result.accuracy!r}")
    return 0


def cmd_ablate(run: RunConfig) -> int:
    manifest = load_manifest(run.data)
    cfg = _model_config(run, n_classes=len(manifest.class_names),
                        n_joints=manifest.n_joints)
    train_ds, test_ds = _load_split(run, cfg)
    if test_ds is None:
        raise ValueError("ablation needs a held-out split; set folds >= 2")
    rows = run_ablation(train_ds, test_ds, cfg,
                        threads=run.threads or None)
    os.makedirs(run.out, exist_ok=True)
    write_csv(os.path.join(run.out, "ablation.csv"),
              ["gtl", "dml", "accuracy"],
              [(r.gtl, r.dml, r.accuracy) for r in rows])
    print(f"wrote ablation.csv with {len(rows)} rows")
    return 0


def cmd_compare_pt(run: RunConfig) -> int:
    manifest = load_manifest(run.data)
    cfg = _model_config(run, n_classes=len(manifest.class_names),
                        n_joints=manifest.n_joints)
    train_ds, test_ds = _load_split(run, cfg)
    if test_ds is None:
        raise ValueError("the comparison needs a held-out split; set folds >= 2")
    rows = run_pt_comparison(train_ds, test_ds, cfg)
    os.makedirs(run.out, exist_ok=True)
    write_csv(os.path.join(run.out, "compare_pt.csv"),
              ["pipeline", "dml", "accuracy"],
              [(r.gtl, r.dml, r.accuracy) for r in rows])
    print(f"wrote compare_pt.csv with {len(rows)} rows")
    return 0


def cmd_coherence(run: RunConfig) -> int:
    model = load_model(run.model)
    angles = rotation_coherence_report(model)
    os.makedirs(run.out, exist_ok=True)
    write_csv(os.path.join(run.out, "coherence.csv"),
              ["frame", "angle_rad"],
              [(f, a) for f, a in enumerate(angles)])
    print(f"wrote coherence.csv with {len(angles)} rows")
    return 0


def cmd_distortion(run: RunConfig) -> int:
    manifest = load_manifest(run.data)
    sequences = load_dataset(run.data)
    if not 0 <= run.sample < len(sequences):
        raise ValueError(f"sample {run.sample} out of range "
                         f"for {len(sequences)} sequences")
    alpha = None
    seq_len = None
    if run.model:
        model = load_model(run.model)
        seq_len = model.config.seq_len
        if model.config.dml_variant is not None:
            alpha = np.exp(model.params["dml.raw"])
    raw = sequences[run.sample]
    if seq_len and raw.n_frames != seq_len:
        from .data import spline_resample
        raw = spline_resample(raw, seq_len)
    seq = PreShapeSequence.from_coords(raw.coords)
    tape = Tape()
    tangents = tape.constant(_log_many(seq.frames[run.ref_index][None], seq.frames))
    tseq = TangentSequence(reference=seq.point(run.ref_index), tangents=tangents,
                           ref_index=run.ref_index)
    before = distortion_report(seq, tseq)
    after = None
    if alpha is not None:
        dml_variant = model.config.dml_variant
        scaled = tape.constant(
            tangents.value * np.reshape(
                alpha, {
                    DmlVariant.GLOBAL_HOMOGENEOUS: (),
                    DmlVariant.GLOBAL_INHOMOGENEOUS: (1, -1, 1),
                    DmlVariant.LOCAL_HOMOGENEOUS: (-1, 1, 1),
                    DmlVariant.LOCAL_INHOMOGENEOUS: alpha.shape + (1,),
                }[dml_variant]))
        after = distortion_report(seq, TangentSequence(
            reference=tseq.reference, tangents=scaled, ref_index=run.ref_index))
    os.makedirs(run.out, exist_ok=True)
    frame_header = ["frame", "geodesic", "tangent_norm", "stretch_ratio"]
    frame_rows = [[f, *before.frame_table[f]] for f in range(seq.n_frames)]
    if after is not None:
        frame_header.append("tangent_norm_after")
        for f in range(seq.n_frames):
            frame_rows[f].append(after.frame_table[f, 1])
    write_csv(os.path.join(run.out, "distortion_frames.csv"),
              frame_header, frame_rows)
    pair_header = ["frame_a", "frame_b", "distortion"]
    pair_rows = [[f, g, before.pairwise[f, g]]
                 for f in range(seq.n_frames) for g in range(f + 1, seq.n_frames)]
    if after is not None:
        pair_header.append("distortion_after")
        idx = 0
        for f in range(seq.n_frames):
            for g in range(f + 1, seq.n_frames):
                pair_rows[idx].append(after.pairwise[f, g])
                idx += 1
    write_csv(os.path.join(run.out, "distortion_pairs.csv"),
              pair_header, pair_rows)
    print("wrote distortion_frames.csv and distortion_pairs.csv")
    return 0


def cmd_gradcheck(run: RunConfig) -> int:
    rows = gradcheck_suite(seed=run.seed)
    os.makedirs(run.out, exist_ok=True)
    write_csv(os.path.join(run.out, "gradcheck.csv"),
              ["component", "max_rel_error", "threshold", "status"],
              [(r.component, r.max_rel_error, r.threshold,
                "pass" if r.passed else "FAIL") for r in rows])
    failures = [r for r in rows if not r.passed]
    for r in rows:
        print(f"{r.component:45s} {r.max_rel_error:.3e} "
              f"(< {r.threshold:.0e}) {'pass' if r.passed else 'FAIL'}")
    if failures:
        print(f"{len(failures)} component(s) exceeded their threshold",
              file=sys.stderr)
        return 1
    return 0


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def _add_common(parser):
    parser.add_argument("--config", help="JSON file of RunConfig defaults")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--out", help="output directory")


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="geomotion",
        description="Geometric skeleton-motion training and analysis toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    _add_common(p)
    p.add_argument("--style", choices=["action", "rehab"])
    p.add_argument("--classes", type=int)
    p.add_argument("--per-class", dest="per_class", type=int)
    p.add_argument("--frames", type=int)
    p.add_argument("--joints", type=int)
    p.add_argument("--noise-sd", dest="noise_sd", type=float)

    for name, helptext in (("train", "train a model"),
                           ("ablate", "train the full variant grid"),
                           ("compare-pt", "compare projection strategies")):
        p = sub.add_parser(name, help=helptext)
        _add_common(p)
        p.add_argument("--data", required=True, help="dataset manifest path")
        p.add_argument("--preset", choices=sorted(PRESETS))
        p.add_argument("--gtl", choices=GTL_CHOICES)
        p.add_argument("--dml", choices=DML_CHOICES)
        p.add_argument("--ref-index", dest="ref_index", type=int)
        p.add_argument("--seq-len", dest="seq_len", type=int)
        p.add_argument("--batch-size", dest="batch_size", type=int)
        p.add_argument("--epochs", type=int)
        p.add_argument("--lr", type=float)
        p.add_argument("--folds", type=int)
        p.add_argument("--test-fold", dest="test_fold", type=int)
        p.add_argument("--rungs", type=int)
        p.add_argument("--threads", type=int)

    p = sub.add_parser("eval", help="evaluate a trained model")
    _add_common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--scores", help="CSV of per-sample clinical scores")
    p.add_argument("--dump-scores", dest="dump_scores", action="store_true",
                   default=None)

    p = sub.add_parser("coherence", help="consecutive-rotation angle series")
    _add_common(p)
    p.add_argument("--model", required=True)

    p = sub.add_parser("distortion", help="tangent-space distortion tables")
    _add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--model")
    p.add_argument("--sample", type=int)
    p.add_argument("--ref-index", dest="ref_index", type=int)

    p = sub.add_parser("gradcheck", help="finite-difference gradient audit")
    _add_common(p)
    return parser


COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "compare-pt": cmd_compare_pt,
    "coherence": cmd_coherence,
    "distortion": cmd_distortion,
    "gradcheck": cmd_gradcheck,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    values = {k: v for k, v in vars(args).items()
              if k not in ("command", "config")}
    try:
        run = RunConfig.from_sources(args.config, values)
        return COMMANDS[args.command](run)
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"geomotion {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
