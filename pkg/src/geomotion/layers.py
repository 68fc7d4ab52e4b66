"""Learnable geometric layers on the pre-shape sphere.

Two layers, both recorded on the autodiff tape so the whole pipeline is
differentiable end to end:

* a transform layer that applies learnable per-frame (or per-row) linear
  maps to each configuration and projects all frames to the tangent space
  of a reference frame through a log-map activation;
* a tangent scaling layer that multiplies tangent representatives by a
  learnable positive factor (positivity enforced by exponentiation),
  contracting geodesic distances to reduce projection distortion.

The transform layer comes in four flavors (rigid/non-rigid crossed with
orthogonality-constrained/unconstrained) and the scaling layer in four
sharing patterns of the factor over frames and rows.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Variable
from .shapespace import EPS_DEGENERATE, PreShapePoint, PreShapeSequence

__all__ = [
    "GtlVariant",
    "DmlVariant",
    "GtlParams",
    "DmlParams",
    "TangentSequence",
    "DistortionReport",
    "gtl_param_shape",
    "dml_param_shape",
    "init_gtl_params",
    "init_dml_params",
    "euler_rotations",
    "rotation_matrices_from_angles",
    "transform_frames",
    "log_project",
    "gtl_apply",
    "dml_apply",
    "gtl_forward",
    "dml_forward",
    "distortion_report",
]


class GtlVariant(enum.Enum):
    RIGID_CONSTRAINED = "rigid-constrained"
    RIGID_UNCONSTRAINED = "rigid-unconstrained"
    NONRIGID_CONSTRAINED = "nonrigid-constrained"
    NONRIGID_UNCONSTRAINED = "nonrigid-unconstrained"

    @property
    def constrained(self) -> bool:
        return self in (GtlVariant.RIGID_CONSTRAINED, GtlVariant.NONRIGID_CONSTRAINED)

    @property
    def rigid(self) -> bool:
        return self in (GtlVariant.RIGID_CONSTRAINED, GtlVariant.RIGID_UNCONSTRAINED)


class DmlVariant(enum.Enum):
    GLOBAL_HOMOGENEOUS = "gh"
    GLOBAL_INHOMOGENEOUS = "gin"
    LOCAL_HOMOGENEOUS = "lh"
    LOCAL_INHOMOGENEOUS = "lin"


# Parameter shapes are expressed in rows of the centered configuration,
# i.e. n_joints - 1 rows per frame.

def gtl_param_shape(variant: GtlVariant, frames: int, rows: int) -> tuple:
    return {
        GtlVariant.RIGID_CONSTRAINED: (frames, 3),
        GtlVariant.RIGID_UNCONSTRAINED: (frames, 3, 3),
        GtlVariant.NONRIGID_CONSTRAINED: (frames, rows, 3),
        GtlVariant.NONRIGID_UNCONSTRAINED: (frames, rows, 3, 3),
    }[variant]


def dml_param_shape(variant: DmlVariant, frames: int, rows: int) -> tuple:
    return {
        DmlVariant.GLOBAL_HOMOGENEOUS: (),
        DmlVariant.GLOBAL_INHOMOGENEOUS: (rows,),
        DmlVariant.LOCAL_HOMOGENEOUS: (frames,),
        DmlVariant.LOCAL_INHOMOGENEOUS: (frames, rows),
    }[variant]


def init_gtl_params(variant: GtlVariant, frames: int, rows: int,
                    rng: np.random.Generator) -> np.ndarray:
    """Angles start at zero (identity transform); unconstrained matrices at
    identity plus small noise to break symmetry across frames."""
    shape = gtl_param_shape(variant, frames, rows)
    if variant.constrained:
        return np.zeros(shape)
    values = np.broadcast_to(np.eye(3), shape).copy()
    values += rng.uniform(-0.01, 0.01, size=shape)
    return values


def init_dml_params(variant: DmlVariant, frames: int, rows: int,
                    rng: np.random.Generator) -> np.ndarray:
    # Raw pre-exponentiation parameter in (-1, 1); the effective scale
    # exp(raw) is then strictly positive.
    return rng.uniform(-1.0, 1.0, size=dml_param_shape(variant, frames, rows))


# ---------------------------------------------------------------------------
# Rotation parameterization
# ---------------------------------------------------------------------------

def _rotation_entries(sa, ca, sb, cb, sc, cc):
    """Entries of Rz(c) @ Ry(b) @ Rx(a), row-major."""
    return [
        cc * cb, cc * sb * sa - sc * ca, cc * sb * ca + sc * sa,
        sc * cb, sc * sb * sa + cc * ca, sc * sb * ca - cc * sa,
        -sb, cb * sa, cb * ca,
    ]


def euler_rotations(angles: Variable) -> Variable:
    """Differentiable rotation matrices from intrinsic Euler angles.

    ``angles`` has shape (..., 3) ordered (x, y, z); the result is
    (..., 3, 3) with R = Rz @ Ry @ Rx, orthogonal with determinant one for
    any finite input.
    """
    if angles.shape[-1] != 3:
        raise ValueError(f"angles must have a trailing axis of 3, got {angles.shape}")
    lead = angles.shape[:-1]
    ax, ay, az = angles[..., 0], angles[..., 1], angles[..., 2]
    entries = _rotation_entries(ad.sin(ax), ad.cos(ax), ad.sin(ay), ad.cos(ay),
                                ad.sin(az), ad.cos(az))
    columns = [ad.reshape(e, lead + (1,)) for e in entries]
    flat = ad.concat(columns, axis=-1)
    return ad.reshape(flat, lead + (3, 3))


def rotation_matrices_from_angles(angles: np.ndarray) -> np.ndarray:
    """Numpy twin of :func:`euler_rotations` for analysis paths."""
    angles = np.asarray(angles, dtype=np.float64)
    sa, ca = np.sin(angles[..., 0]), np.cos(angles[..., 0])
    sb, cb = np.sin(angles[..., 1]), np.cos(angles[..., 1])
    sc, cc = np.sin(angles[..., 2]), np.cos(angles[..., 2])
    entries = _rotation_entries(sa, ca, sb, cb, sc, cc)
    return np.stack(entries, axis=-1).reshape(angles.shape[:-1] + (3, 3))


# ---------------------------------------------------------------------------
# Transform + projection core (batched; leading batch axes broadcast)
# ---------------------------------------------------------------------------

def transform_frames(frames: Variable, params: Variable,
                     variant: GtlVariant) -> Variable:
    """Apply the variant's learnable transform to every frame.

    ``frames`` is (..., F, J, 3). Rigid variants right-multiply the whole
    configuration by one 3x3 per frame; non-rigid variants right-multiply
    each configuration row by its own 3x3.
    """
    if variant.rigid:
        mats = (euler_rotations(params) if variant.constrained else params)
        return ad.matmul(frames, mats)  # (..., F, J, 3) @ (F, 3, 3)
    mats = (euler_rotations(params) if variant.constrained else params)
    rows = ad.reshape(frames, frames.shape[:-1] + (1, 3))
    out = ad.matmul(rows, mats)  # (..., F, J, 1, 3) @ (F, J, 3, 3)
    return ad.reshape(out, frames.shape)


def _renormalize_frames(frames: Variable) -> Variable:
    norms = ad.frobenius_norm(frames, axis=(-2, -1))
    if np.min(norms.value) < EPS_DEGENERATE:
        raise ValueError("transform collapsed a frame to a degenerate configuration")
    return ad.div(frames, ad.reshape(norms, norms.shape + (1, 1)))


def log_project(frames: Variable, ref_index: int) -> Variable:
    """Log-map activation of every frame at the given reference frame.

    ``frames`` is (..., F, J, 3) of unit-norm configurations; the output
    holds one tangent representative per frame, all in the tangent space of
    frame ``ref_index``. The whole computation is recorded on the tape.
    """
    n_frames = frames.shape[-3]
    if not 0 <= ref_index < n_frames:
        raise ValueError(f"ref_index {ref_index} out of range for {n_frames} frames")
    ref = frames[..., ref_index, :, :]
    ref = ad.reshape(ref, ref.shape[:-2] + (1,) + ref.shape[-2:])
    inner = ad.frobenius_inner(frames, ref)  # (..., F)
    if np.min(inner.value) <= -1.0 + 1e-12:
        raise ValueError("cut locus: a frame is antipodal to the reference")
    theta = ad.arccos_safe(inner)
    factor = ad.div(theta, ad.sin(theta))
    wide = inner.shape + (1, 1)
    cos_term = ad.mul(ad.reshape(ad.cos(theta), wide), ref)
    return ad.mul(ad.reshape(factor, wide), ad.sub(frames, cos_term))


def gtl_apply(frames: Variable, params: Variable, variant: GtlVariant,
              ref_index: int) -> Variable:
    """Transform, renormalize and log-project a stack of pre-shape frames.

    Renormalization restores the unit-norm precondition of the log map; for
    constrained variants it is an exact no-op up to rounding since rotations
    are isometries.
    """
    transformed = transform_frames(frames, params, variant)
    return log_project(_renormalize_frames(transformed), ref_index)


def dml_apply(tangents: Variable, raw: Variable, variant: DmlVariant) -> Variable:
    """Scale tangent representatives by exp(raw) per the sharing pattern.

    ``tangents`` is (..., F, J, 3); ``raw`` is () | (J,) | (F,) | (F, J)
    for the global/per-row/per-frame/per-frame-and-row variants.
    """
    alpha = ad.exp(raw)
    if variant is DmlVariant.GLOBAL_HOMOGENEOUS:
        pass
    elif variant is DmlVariant.GLOBAL_INHOMOGENEOUS:
        alpha = ad.reshape(alpha, (alpha.shape[0], 1))
    elif variant is DmlVariant.LOCAL_HOMOGENEOUS:
        alpha = ad.reshape(alpha, (alpha.shape[0], 1, 1))
    else:
        alpha = ad.reshape(alpha, alpha.shape + (1,))
    return ad.mul(tangents, alpha)


# ---------------------------------------------------------------------------
# Sequence-level wrappers
# ---------------------------------------------------------------------------

@dataclass
class GtlParams:
    variant: GtlVariant
    values: np.ndarray

    @classmethod
    def create(cls, variant: GtlVariant, frames: int, rows: int,
               rng: np.random.Generator | None = None) -> "GtlParams":
        rng = rng or np.random.default_rng(0)
        return cls(variant, init_gtl_params(variant, frames, rows, rng))

    def check_shape(self, frames: int, rows: int):
        expected = gtl_param_shape(self.variant, frames, rows)
        if self.values.shape != expected:
            raise ValueError(f"transform parameters for {self.variant.value} must have "
                             f"shape {expected}, got {self.values.shape}")


@dataclass
class DmlParams:
    variant: DmlVariant
    raw: np.ndarray

    @classmethod
    def create(cls, variant: DmlVariant, frames: int, rows: int,
               rng: np.random.Generator | None = None) -> "DmlParams":
        rng = rng or np.random.default_rng(0)
        return cls(variant, init_dml_params(variant, frames, rows, rng))

    def check_shape(self, frames: int, rows: int):
        expected = dml_param_shape(self.variant, frames, rows)
        if np.shape(self.raw) != expected:
            raise ValueError(f"scale parameters for {self.variant.value} must have "
                             f"shape {expected}, got {np.shape(self.raw)}")


@dataclass
class TangentSequence:
    """Tangent representatives of all frames at one common reference."""

    reference: PreShapePoint
    tangents: Variable  # (F, J, 3)
    ref_index: int = 0

    def __post_init__(self):
        inner = (self.tangents.value * self.reference.config).sum(axis=(-2, -1))
        worst = float(np.max(np.abs(inner)))
        if worst > 1e-6:
            raise ValueError(f"tangent sequence is not tangent at its reference "
                             f"(max |<ref, Z>| = {worst!r})")

    @property
    def n_frames(self) -> int:
        return self.tangents.shape[0]


def gtl_forward(seq: PreShapeSequence, params: GtlParams, ref_index: int = 0,
                tape: Tape | None = None) -> TangentSequence:
    """Full transform layer on one sequence: transform, renormalize,
    log-project at the reference frame. Returns tangents on a live tape."""
    tape = tape or Tape()
    params.check_shape(seq.n_frames, seq.frames.shape[1])
    frames = tape.constant(seq.frames, name="frames")
    values = tape.variable(params.values, requires_grad=True, name="gtl.values")
    transformed = _renormalize_frames(transform_frames(frames, values, params.variant))
    tangents = log_project(transformed, ref_index)
    reference = PreShapePoint(transformed.value[ref_index])
    return TangentSequence(reference=reference, tangents=tangents, ref_index=ref_index)


def dml_forward(tseq: TangentSequence, params: DmlParams) -> TangentSequence:
    """Scaling layer on one tangent sequence; reference is unchanged."""
    n_frames, rows = tseq.tangents.shape[0], tseq.tangents.shape[1]
    params.check_shape(n_frames, rows)
    tape = tseq.tangents.tape
    raw = tape.variable(params.raw, requires_grad=True, name="dml.raw")
    scaled = dml_apply(tseq.tangents, raw, params.variant)
    return TangentSequence(reference=tseq.reference, tangents=scaled,
                           ref_index=tseq.ref_index)


# ---------------------------------------------------------------------------
# Distortion diagnostics
# ---------------------------------------------------------------------------

@dataclass
class DistortionReport:
    """Per-frame and pairwise distortion of a tangent representation.

    ``frame_table`` columns: geodesic distance to the reference, tangent
    norm, stretch ratio theta / sin(theta). ``pairwise`` holds
    ``| ||Z_f - Z_g|| - theta(P_f, P_g) |`` for every frame pair.
    """

    frame_table: np.ndarray  # (F, 3)
    pairwise: np.ndarray     # (F, F)


def distortion_report(seq: PreShapeSequence, tseq: TangentSequence) -> DistortionReport:
    """Quantify how far the tangent representation distorts geometry.

    Projection stretches every norm by theta/sin(theta) > 1 and perturbs
    pairwise relations, so tangent distances generally disagree with the
    geodesic distances between the underlying frames.
    """
    frames = seq.frames
    z = tseq.tangents.value
    ref = tseq.reference.config
    inner_ref = np.clip((frames * ref).sum(axis=(-2, -1)), -1.0, 1.0)
    theta = np.arccos(inner_ref)
    norms = np.linalg.norm(z, axis=(-2, -1))
    sin_t = np.sin(theta)
    ratio = np.where(sin_t > 0.0, theta / np.where(sin_t > 0.0, sin_t, 1.0), 1.0)
    frame_table = np.stack([theta, norms, ratio], axis=1)

    diff = z[:, None] - z[None, :]
    tangent_dist = np.linalg.norm(diff.reshape(diff.shape[0], diff.shape[1], -1), axis=-1)
    gram = np.einsum("fjk,gjk->fg", frames, frames)
    geo = np.arccos(np.clip(gram, -1.0, 1.0))
    return DistortionReport(frame_table=frame_table,
                            pairwise=np.abs(tangent_dist - geo))
