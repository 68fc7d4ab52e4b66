"""Kendall pre-shape sphere geometry.

Skeletons are centered with a Helmert submatrix and scaled to unit
Frobenius norm, which places every configuration on a high dimensional
unit sphere. This module provides the non-learnable geometry on that
sphere: projection, geodesic distance, log/exp maps, parallel transport
(closed form and pole ladder), and rotation-angle analysis. All functions
here are pure and operate on plain numpy arrays, so they are thread-safe
and never appear on an autodiff tape.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "EPS_DEGENERATE",
    "CUT_LOCUS_MARGIN",
    "HelmertSub",
    "PreShapePoint",
    "PreShapeSequence",
    "TangentVector",
    "RotationMatrix3",
    "helmert_submatrix",
    "to_preshape",
    "preshape_frames",
    "geodesic_distance",
    "log_map",
    "exp_map",
    "transport_closed_form",
    "pole_ladder_transport",
    "rotation_angle",
    "safe_arccos",
]

EPS_DEGENERATE = 1e-9
CUT_LOCUS_MARGIN = 1e-6
ARCCOS_EPS = 1e-7


def safe_arccos(x, eps: float = ARCCOS_EPS):
    """arccos with the argument clipped to [-1+eps, 1-eps]."""
    return np.arccos(np.clip(x, -1.0 + eps, 1.0 - eps))


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HelmertSub:
    """Orthonormal (n-1) x n centering matrix annihilating the ones vector."""

    n_joints: int
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        object.__setattr__(self, "matrix", m)
        if m.shape != (self.n_joints - 1, self.n_joints):
            raise ValueError(f"Helmert submatrix shape {m.shape} does not match "
                             f"n_joints={self.n_joints}")
        eye = np.eye(self.n_joints - 1)
        if np.max(np.abs(m @ m.T - eye)) > 1e-12:
            raise ValueError("Helmert submatrix rows are not orthonormal")
        if np.max(np.abs(m.sum(axis=1))) > 1e-12:
            raise ValueError("Helmert submatrix rows do not sum to zero")


@dataclass(frozen=True)
class PreShapePoint:
    """A centered, unit-norm (n-1) x 3 configuration on the pre-shape sphere."""

    config: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.config, dtype=np.float64)
        object.__setattr__(self, "config", c)
        if c.ndim != 2 or c.shape[1] != 3:
            raise ValueError(f"pre-shape config must be (n-1, 3), got {c.shape}")
        norm = np.linalg.norm(c)
        if abs(norm - 1.0) > 1e-10:
            raise ValueError(f"pre-shape config norm {norm!r} is not 1")

    @property
    def n_joints(self) -> int:
        return self.config.shape[0] + 1


@dataclass(frozen=True)
class PreShapeSequence:
    """A stack of F pre-shape configurations, one per motion frame."""

    frames: np.ndarray  # (F, n-1, 3)

    def __post_init__(self):
        f = np.asarray(self.frames, dtype=np.float64)
        object.__setattr__(self, "frames", f)
        if f.ndim != 3 or f.shape[2] != 3:
            raise ValueError(f"pre-shape sequence must be (F, n-1, 3), got {f.shape}")
        norms = np.linalg.norm(f, axis=(-2, -1))
        if np.max(np.abs(norms - 1.0)) > 1e-10:
            raise ValueError("pre-shape sequence contains non-unit frames")

    @classmethod
    def from_coords(cls, coords) -> "PreShapeSequence":
        return cls(preshape_frames(coords))

    def point(self, index: int) -> PreShapePoint:
        return PreShapePoint(self.frames[index])

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def n_joints(self) -> int:
        return self.frames.shape[1] + 1


@dataclass(frozen=True)
class TangentVector:
    """An ambient tangent vector at a pre-shape base point."""

    base: PreShapePoint
    vec: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vec, dtype=np.float64)
        object.__setattr__(self, "vec", v)
        if v.shape != self.base.config.shape:
            raise ValueError(f"tangent vector shape {v.shape} does not match "
                             f"base {self.base.config.shape}")
        inner = float((self.base.config * v).sum())
        if abs(inner) > 1e-9:
            raise ValueError(f"vector is not tangent at its base: <base, vec> = {inner!r}")

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.vec))


@dataclass(frozen=True)
class RotationMatrix3:
    """A proper rotation in SO(3)."""

    entries: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.entries, dtype=np.float64)
        object.__setattr__(self, "entries", r)
        if r.shape != (3, 3):
            raise ValueError(f"rotation matrix must be 3x3, got {r.shape}")
        if np.max(np.abs(r.T @ r - np.eye(3))) > 1e-10:
            raise ValueError("matrix is not orthogonal")
        if abs(np.linalg.det(r) - 1.0) > 1e-10:
            raise ValueError("matrix determinant is not +1")


# ---------------------------------------------------------------------------
# Pre-shape projection
# ---------------------------------------------------------------------------

def helmert_submatrix(n: int) -> HelmertSub:
    """Helmert submatrix in the Dryden-Mardia convention.

    Row j (1-indexed) has its first j entries equal to -1/sqrt(j(j+1)),
    entry j+1 equal to j/sqrt(j(j+1)) and zeros afterwards.
    """
    if n < 2:
        raise ValueError(f"helmert_submatrix requires n >= 2, got {n}")
    h = np.zeros((n - 1, n))
    for j in range(1, n):
        scale = 1.0 / np.sqrt(j * (j + 1.0))
        h[j - 1, :j] = -scale
        h[j - 1, j] = j * scale
    return HelmertSub(n_joints=n, matrix=h)


def to_preshape(coords, helmert: HelmertSub | None = None) -> PreShapePoint:
    """Project a raw n x 3 skeleton onto the pre-shape sphere."""
    x = np.asarray(coords, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != 3:
        raise ValueError(f"skeleton must be (n, 3), got {x.shape}")
    if helmert is None:
        helmert = helmert_submatrix(x.shape[0])
    centered = helmert.matrix @ x
    norm = np.linalg.norm(centered)
    if norm <= EPS_DEGENERATE:
        raise ValueError("degenerate configuration: all joints coincide")
    return PreShapePoint(centered / norm)


def preshape_frames(coords) -> np.ndarray:
    """Vectorized pre-shape projection of an (F, n, 3) trajectory."""
    x = np.asarray(coords, dtype=np.float64)
    if x.ndim != 3 or x.shape[2] != 3:
        raise ValueError(f"trajectory must be (F, n, 3), got {x.shape}")
    h = helmert_submatrix(x.shape[1]).matrix
    centered = np.einsum("ij,fjk->fik", h, x)
    norms = np.linalg.norm(centered, axis=(-2, -1))
    bad = np.flatnonzero(norms <= EPS_DEGENERATE)
    if bad.size:
        raise ValueError(f"degenerate configuration at frame {bad[0]}")
    return centered / norms[:, None, None]


# ---------------------------------------------------------------------------
# Sphere maps (batched kernels plus validated public wrappers)
# ---------------------------------------------------------------------------

def _inner_many(a, b):
    return (a * b).sum(axis=(-2, -1))


def _log_many(base, target):
    """Log map of ``target`` at ``base``; leading axes broadcast."""
    inner = np.clip(_inner_many(base, target), -1.0, 1.0)
    theta = np.arccos(inner)
    if np.any(theta > np.pi - CUT_LOCUS_MARGIN):
        raise ValueError("cut locus: points are nearly antipodal")
    sin_t = np.sin(theta)
    safe = np.where(sin_t > 0.0, sin_t, 1.0)
    factor = np.where(sin_t > 0.0, theta / safe, 1.0)
    return factor[..., None, None] * (target - inner[..., None, None] * base)


def _exp_many(base, vec):
    """Exp map of ``vec`` at ``base``; leading axes broadcast."""
    norm = np.sqrt((vec * vec).sum(axis=(-2, -1)))
    safe = np.where(norm > 0.0, norm, 1.0)
    return (np.cos(norm)[..., None, None] * base
            + (np.sin(norm) / safe)[..., None, None] * vec)


def _check_pair(p1: PreShapePoint, p2: PreShapePoint):
    if p1.config.shape != p2.config.shape:
        raise ValueError(f"pre-shape points have different joint counts: "
                         f"{p1.config.shape} vs {p2.config.shape}")


def geodesic_distance(p1: PreShapePoint, p2: PreShapePoint, clamp: bool = True) -> float:
    """Arc length between two pre-shape points.

    With ``clamp`` the inner product is clipped away from +-1, matching the
    differentiable activation. Analysis paths pass ``clamp=False`` for an
    exact distance: identical points report 0, and tiny separations are
    measured through atan2 of the tangential rejection, which stays
    accurate where a plain arccos of the inner product loses all precision.
    """
    _check_pair(p1, p2)
    inner = float(_inner_many(p1.config, p2.config))
    if clamp:
        return float(safe_arccos(inner))
    if np.array_equal(p1.config, p2.config):
        return 0.0
    rejection = p2.config - inner * p1.config
    return float(np.arctan2(np.linalg.norm(rejection), inner))


def log_map(p1: PreShapePoint, pf: PreShapePoint) -> TangentVector:
    """Tangent representative of ``pf`` in the tangent space at ``p1``.

    The vector norm equals the geodesic distance; the zero-distance limit
    returns the zero vector. Near-antipodal inputs are rejected.
    """
    _check_pair(p1, pf)
    return TangentVector(base=p1, vec=_log_many(p1.config, pf.config))


def exp_map(z: TangentVector) -> PreShapePoint:
    """Shoot a geodesic from the base point along a tangent vector."""
    inner = float((z.base.config * z.vec).sum())
    if abs(inner) > 1e-6:
        raise ValueError(f"exp_map requires a tangent input, got <base, vec> = {inner!r}")
    return PreShapePoint(_exp_many(z.base.config, z.vec))


# ---------------------------------------------------------------------------
# Parallel transport
# ---------------------------------------------------------------------------

def transport_closed_form(z: TangentVector, pb: PreShapePoint) -> TangentVector:
    """Parallel transport along the geodesic to ``pb``, in closed form.

    The component of the vector orthogonal to the geodesic is unchanged;
    the along-geodesic component is rotated to the outgoing unit direction
    at the destination. Exact and norm-preserving; serves as the oracle for
    the pole ladder.
    """
    pa = z.base
    _check_pair(pa, pb)
    theta = geodesic_distance(pa, pb, clamp=False)
    if theta <= EPS_DEGENERATE or theta >= np.pi - CUT_LOCUS_MARGIN:
        raise ValueError("transport requires distinct, non-antipodal endpoints")
    u = _log_many(pa.config, pb.config)
    direction = u / theta
    along = float((z.vec * direction).sum())
    outgoing = -_log_many(pb.config, pa.config) / theta
    vec = (z.vec - along * direction) + along * outgoing
    return TangentVector(base=pb, vec=vec)


def _pole_ladder(base, vec, target, rungs: int):
    """Batched pole ladder along the base -> target geodesic.

    Each rung reflects the vector endpoint through the rung midpoint via
    exp/log and flips the sign; exact geodesic subdivision into ``rungs``
    segments keeps every construction inside the injectivity radius.
    """
    u = _log_many(base, target)
    points = [_exp_many(base, (k / rungs) * u) for k in range(rungs + 1)]
    v = vec
    for k in range(rungs):
        x0, x1 = points[k], points[k + 1]
        mid = _exp_many(x0, 0.5 * _log_many(x0, x1))
        endpoint = _exp_many(x0, v)
        reflected = _exp_many(mid, -_log_many(mid, endpoint))
        v = -_log_many(x1, reflected)
    return v


def pole_ladder_transport(z: TangentVector, pb: PreShapePoint,
                          rungs: int = 20) -> TangentVector:
    """Pole-ladder parallel transport of ``z`` to ``pb``.

    The default of 20 rungs was fixed by a convergence study against
    :func:`transport_closed_form`.
    """
    if rungs < 1:
        raise ValueError(f"pole ladder requires rungs >= 1, got {rungs}")
    pa = z.base
    _check_pair(pa, pb)
    theta = geodesic_distance(pa, pb, clamp=False)
    if theta / rungs >= np.pi / 2:
        raise ValueError("pole ladder rung exceeds a quarter circle; "
                         "increase the number of rungs")
    vec = _pole_ladder(pa.config, z.vec, pb.config, rungs)
    return TangentVector(base=pb, vec=vec)


# ---------------------------------------------------------------------------
# Rotation analysis
# ---------------------------------------------------------------------------

def rotation_angle(r1: RotationMatrix3, r2: RotationMatrix3) -> float:
    """Angle of the relative rotation between two SO(3) elements, in [0, pi]."""
    rel = r2.entries @ r1.entries.T
    return float(safe_arccos((np.trace(rel) - 1.0) / 2.0))
