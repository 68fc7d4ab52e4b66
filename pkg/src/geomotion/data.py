"""Skeleton sequence ingestion, resampling, splitting and synthesis.

File formats
------------
Sequence CSV: line 1 holds the three header values ``frames,joints,dims``
(dims is always 3); every following line is
``frame_index,joint_index,x,y,z`` with 0-based indices, frames-major then
joints, shortest round-trip decimal floats, UTF-8 and ``\\n`` newlines.

Dataset manifest: JSON object with ``n_joints`` (int), ``class_names``
(array of strings) and ``entries`` (array of objects with ``path``,
``subject``, ``label`` and ``exercise`` fields).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .shapespace import preshape_frames

__all__ = [
    "SkeletonSequence",
    "DatasetManifest",
    "FoldSpec",
    "MotionDataset",
    "SynthSpec",
    "read_sequence",
    "write_sequence",
    "load_manifest",
    "save_manifest",
    "load_dataset",
    "spline_resample",
    "kfold_split",
    "generate_synthetic",
    "write_synthetic_dataset",
]


# ---------------------------------------------------------------------------
# Sequence container and CSV round trip
# ---------------------------------------------------------------------------

@dataclass
class SkeletonSequence:
    """Raw F x n x 3 joint trajectory with labeling metadata."""

    coords: np.ndarray
    subject_id: str
    label: int
    exercise_id: str | None = None

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=np.float64)
        if self.coords.ndim != 3 or self.coords.shape[2] != 3:
            raise ValueError(f"coords must be (F, n, 3), got {self.coords.shape}")
        if self.coords.shape[0] < 2 or self.coords.shape[1] < 2:
            raise ValueError(f"need at least 2 frames and 2 joints, "
                             f"got {self.coords.shape[:2]}")
        if not np.all(np.isfinite(self.coords)):
            raise ValueError("coords contain non-finite values")

    @property
    def n_frames(self) -> int:
        return self.coords.shape[0]

    @property
    def n_joints(self) -> int:
        return self.coords.shape[1]


def write_sequence(seq: SkeletonSequence, path) -> None:
    frames, joints, _ = seq.coords.shape
    lines = [f"{frames},{joints},3"]
    for f in range(frames):
        for j in range(joints):
            x, y, z = (float(v) for v in seq.coords[f, j])
            lines.append(f"{f},{j},{x!r},{y!r},{z!r}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_sequence(path, subject_id: str = "", label: int = 0,
                  exercise_id: str | None = None) -> SkeletonSequence:
    """Parse a sequence CSV; errors carry the offending line number."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ValueError(f"{path}: empty file")
    head = lines[0].split(",")
    if len(head) != 3:
        raise ValueError(f"{path}:1: malformed header {lines[0]!r}, "
                         "expected frames,joints,dims")
    try:
        frames, joints, dims = (int(v) for v in head)
    except ValueError:
        raise ValueError(f"{path}:1: non-integer header {lines[0]!r}") from None
    if dims != 3:
        raise ValueError(f"{path}:1: dims must be 3, got {dims}")
    coords = np.empty((frames, joints, 3))
    expected = ((f, j) for f in range(frames) for j in range(joints))
    data_lines = lines[1:]
    if len(data_lines) != frames * joints:
        raise ValueError(f"{path}: expected {frames * joints} data rows, "
                         f"got {len(data_lines)}")
    for lineno, (line, (ef, ej)) in enumerate(zip(data_lines, expected), start=2):
        cells = line.split(",")
        if len(cells) != 5:
            raise ValueError(f"{path}:{lineno}: expected 5 cells, got {len(cells)}")
        try:
            f, j = int(cells[0]), int(cells[1])
            xyz = [float(c) for c in cells[2:]]
        except ValueError:
            raise ValueError(f"{path}:{lineno}: non-numeric cell in {line!r}") from None
        if (f, j) != (ef, ej):
            raise ValueError(f"{path}:{lineno}: expected row for frame {ef} "
                             f"joint {ej}, found frame {f} joint {j}")
        coords[f, j] = xyz
    return SkeletonSequence(coords=coords, subject_id=subject_id, label=label,
                            exercise_id=exercise_id)


# ---------------------------------------------------------------------------
# Manifest
# ---------------------------------------------------------------------------

@dataclass
class DatasetManifest:
    n_joints: int
    class_names: list[str]
    entries: list[dict]  # {path, subject, label, exercise}

    def __post_init__(self):
        labels = sorted({int(e["label"]) for e in self.entries})
        if labels != list(range(len(self.class_names))):
            raise ValueError(f"labels {labels} are not dense in "
                             f"[0, {len(self.class_names)})")

    @property
    def subjects(self) -> list[str]:
        return sorted({e["subject"] for e in self.entries})


def save_manifest(manifest: DatasetManifest, path) -> None:
    payload = {
        "n_joints": manifest.n_joints,
        "class_names": list(manifest.class_names),
        "entries": manifest.entries,
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_manifest(path) -> DatasetManifest:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    for key in ("n_joints", "class_names", "entries"):
        if key not in payload:
            raise ValueError(f"{path}: manifest missing key {key!r}")
    return DatasetManifest(n_joints=int(payload["n_joints"]),
                           class_names=list(payload["class_names"]),
                           entries=list(payload["entries"]))


def load_dataset(manifest_path) -> list[SkeletonSequence]:
    """Read every manifest entry, validating the shared joint count."""
    manifest = load_manifest(manifest_path)
    root = os.path.dirname(os.fspath(manifest_path))
    sequences = []
    for entry in manifest.entries:
        path = entry["path"]
        if not os.path.isabs(path):
            path = os.path.join(root, path)
        seq = read_sequence(path, subject_id=entry["subject"],
                            label=int(entry["label"]),
                            exercise_id=entry.get("exercise"))
        if seq.n_joints != manifest.n_joints:
            raise ValueError(f"{path}: has {seq.n_joints} joints, manifest "
                             f"says {manifest.n_joints}")
        sequences.append(seq)
    return sequences


# ---------------------------------------------------------------------------
# Temporal resampling
# ---------------------------------------------------------------------------

def spline_resample(seq: SkeletonSequence, target_len: int) -> SkeletonSequence:
    """Resample to ``target_len`` equally spaced frames with natural cubic
    splines fitted independently per joint coordinate over time in [0, 1].
    Endpoints are knots, so they are preserved exactly."""
    if seq.n_frames < 4:
        raise ValueError(f"cubic spline resampling needs at least 4 frames, "
                         f"got {seq.n_frames}")
    if target_len < 2:
        raise ValueError(f"target length must be >= 2, got {target_len}")
    t = np.linspace(0.0, 1.0, seq.n_frames)
    flat = seq.coords.reshape(seq.n_frames, -1)
    spline = CubicSpline(t, flat, axis=0, bc_type="natural")
    out = spline(np.linspace(0.0, 1.0, target_len))
    return SkeletonSequence(coords=out.reshape(target_len, seq.n_joints, 3),
                            subject_id=seq.subject_id, label=seq.label,
                            exercise_id=seq.exercise_id)


# ---------------------------------------------------------------------------
# Cross-subject folds
# ---------------------------------------------------------------------------

@dataclass
class FoldSpec:
    """Subject-level fold assignment; a subject is never split across folds."""

    k: int
    assignment: dict[str, int]

    def test_subjects(self, fold: int) -> set[str]:
        return {s for s, f in self.assignment.items() if f == fold}

    def train_subjects(self, fold: int) -> set[str]:
        return {s for s, f in self.assignment.items() if f != fold}


def kfold_split(subjects, k: int, seed: int) -> FoldSpec:
    """Shuffle subjects by seed and deal them round-robin into k folds."""
    if isinstance(subjects, DatasetManifest):
        subjects = subjects.subjects
    subjects = sorted(set(subjects))
    if len(subjects) < k:
        raise ValueError(f"need at least {k} distinct subjects, got {len(subjects)}")
    order = np.random.default_rng(seed).permutation(len(subjects))
    assignment = {subjects[idx]: pos % k for pos, idx in enumerate(order)}
    return FoldSpec(k=k, assignment=assignment)


# ---------------------------------------------------------------------------
# Training-ready dataset view
# ---------------------------------------------------------------------------

@dataclass
class MotionDataset:
    """Pre-shape projected, fixed-length sequences ready for the model."""

    preshapes: np.ndarray  # (N, F, n-1, 3)
    labels: np.ndarray     # (N,)
    subjects: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.preshapes.shape[0] != self.labels.shape[0]:
            raise ValueError("preshapes and labels disagree on sample count")

    def __len__(self):
        return self.preshapes.shape[0]

    @classmethod
    def from_sequences(cls, sequences, target_len: int | None = None) -> "MotionDataset":
        stacks, labels, subjects = [], [], []
        for seq in sequences:
            if target_len is not None and seq.n_frames != target_len:
                seq = spline_resample(seq, target_len)
            stacks.append(preshape_frames(seq.coords))
            labels.append(seq.label)
            subjects.append(seq.subject_id)
        return cls(preshapes=np.stack(stacks), labels=np.asarray(labels),
                   subjects=subjects)

    def subset(self, subject_set) -> "MotionDataset":
        mask = np.array([s in subject_set for s in self.subjects])
        return MotionDataset(preshapes=self.preshapes[mask],
                             labels=self.labels[mask],
                             subjects=[s for s in self.subjects if s in subject_set])


# ---------------------------------------------------------------------------
# Synthetic benchmark generator
# ---------------------------------------------------------------------------

@dataclass
class SynthSpec:
    """Settings for the synthetic two-domain benchmark.

    ``rehab`` style: classes share one template skeleton and move by a
    globally coherent whole-body rotation whose amplitude shrinks with the
    class index, so higher classes show smaller consecutive-frame geodesic
    steps (the low-amplitude "abnormal" signature). ``action`` style:
    classes differ by per-joint articulated rotation trajectories.

    Each subject carries a fixed skeleton morph (static shape trait), and
    motion phase plus axis wobble are sampled per sequence; coordinate
    noise is N(0, noise_sd^2). Everything is deterministic given the seed.
    """

    n_classes: int = 2
    per_class: int = 100
    frames: int = 150
    joints: int = 12
    noise_sd: float = 0.02
    style: str = "rehab"
    seed: int = 0
    n_subjects: int = 10
    subject_morph_sd: float = 0.35

    def __post_init__(self):
        if self.n_classes < 1 or self.per_class < 1:
            raise ValueError("n_classes and per_class must be positive")
        if self.frames < 2 or self.joints < 2:
            raise ValueError("frames and joints must be at least 2")
        if self.style not in ("action", "rehab"):
            raise ValueError(f"unknown style {self.style!r}")


def _axis_angle_rotations(axis, angles):
    """Rodrigues rotation matrices for one unit axis and many angles."""
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    k = np.array([[0.0, -axis[2], axis[1]],
                  [axis[2], 0.0, -axis[0]],
                  [-axis[1], axis[0], 0.0]])
    angles = np.asarray(angles)[:, None, None]
    return np.eye(3) + np.sin(angles) * k + (1.0 - np.cos(angles)) * (k @ k)


def _template_skeleton(rng, joints):
    base = rng.normal(size=(joints, 3))
    base -= base.mean(axis=0)
    return base / np.sqrt((base ** 2).sum(axis=1).mean())


def generate_synthetic(spec: SynthSpec) -> list[SkeletonSequence]:
    rng = np.random.default_rng(spec.seed)
    template = _template_skeleton(rng, spec.joints)
    morphs = rng.normal(scale=spec.subject_morph_sd,
                        size=(spec.n_subjects, spec.joints, 3))
    t = np.linspace(0.0, 1.0, spec.frames)

    # Class signatures are drawn before any per-sample randomness so the
    # class structure itself is stable under per_class changes.
    if spec.style == "rehab":
        amplitudes = np.linspace(0.9, 0.2, spec.n_classes) if spec.n_classes > 1 \
            else np.array([0.9])
        class_axes = [np.array([0.3, 0.2, 1.0]) for _ in range(spec.n_classes)]
    else:
        joint_amps = rng.uniform(0.3, 1.0, size=(spec.n_classes, spec.joints))
        joint_axes = rng.normal(size=(spec.n_classes, spec.joints, 3))
        joint_freqs = rng.integers(1, 4, size=(spec.n_classes, spec.joints))

    sequences = []
    for label in range(spec.n_classes):
        for sample in range(spec.per_class):
            subject_idx = (label * spec.per_class + sample) % spec.n_subjects
            subject = f"s{subject_idx:02d}"
            body = template + morphs[subject_idx]
            phase = rng.uniform(0.0, 2.0 * np.pi)
            if spec.style == "rehab":
                wobble = rng.normal(scale=0.35, size=3)
                axis = class_axes[label] + wobble
                theta = amplitudes[label] * np.sin(2.0 * np.pi * 2.0 * t + phase)
                rots = _axis_angle_rotations(axis, theta)
                coords = np.einsum("jk,fkl->fjl", body, rots)
            else:
                coords = np.empty((spec.frames, spec.joints, 3))
                for j in range(spec.joints):
                    freq = joint_freqs[label, j]
                    theta = joint_amps[label, j] * np.sin(
                        2.0 * np.pi * freq * t + phase)
                    rots = _axis_angle_rotations(joint_axes[label, j], theta)
                    coords[:, j] = np.einsum("k,fkl->fl", body[j], rots)
            if spec.noise_sd > 0.0:
                coords = coords + rng.normal(scale=spec.noise_sd, size=coords.shape)
            sequences.append(SkeletonSequence(
                coords=coords, subject_id=subject, label=label,
                exercise_id=spec.style))
    return sequences


def write_synthetic_dataset(spec: SynthSpec, out_dir) -> str:
    """Generate and write sequences plus a manifest; returns the manifest path."""
    os.makedirs(out_dir, exist_ok=True)
    sequences = generate_synthetic(spec)
    entries = []
    for idx, seq in enumerate(sequences):
        name = f"seq_{idx:05d}.csv"
        write_sequence(seq, os.path.join(out_dir, name))
        entries.append({"path": name, "subject": seq.subject_id,
                        "label": seq.label, "exercise": seq.exercise_id})
    manifest = DatasetManifest(
        n_joints=spec.joints,
        class_names=[f"class_{c}" for c in range(spec.n_classes)],
        entries=entries)
    manifest_path = os.path.join(out_dir, "manifest.json")
    save_manifest(manifest, manifest_path)
    return manifest_path
