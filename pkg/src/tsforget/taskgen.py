"""Teacher-pair construction at prescribed similarity.

Large-input ("ODE limit") teachers: each paired hidden unit m of the two
teachers gets rows built from two unit vectors at exact angle arccos(V)
inside a 2-plane, scaled by sqrt(D) so the self-overlaps are exactly 1.
Distinct units live in mutually orthogonal 2-planes, so the 2M x 2M teacher
Gram structure is exactly [[I, V I], [V I, I]].

Mean-field teachers: the first teacher's feature rows are i.i.d. Gaussian
normalised to unit length; the second interpolates row-wise,

    W2 = a W1 + sqrt(1 - a^2) Z,

with Z rows of expected unit squared norm, which preserves the row scale and
makes ``a`` the expected row cosine.  Readout vectors are built with exact
cosine overlap and scaled by sqrt(M) so entries stay O(1) under the 1/M
output scaling.

All constructions are deterministic in their seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nets import ERF, LARGE_INPUT, MEAN_FIELD, TwoLayerNet
from .overlaps import Task
from .seeding import derive_seed, rng_from

ODE_LIMIT = "ode_limit"
REGIMES = (ODE_LIMIT, MEAN_FIELD)


class TaskGenError(ValueError):
    """Invalid similarity specification."""


@dataclass(frozen=True)
class SimilaritySpec:
    """Requested teacher-pair similarity and sizes.

    ``feature_overlap`` is the cosine-type overlap V between the teachers'
    feature weights; ``readout_overlap`` (mean-field only) is the cosine
    between their head vectors.
    """

    feature_overlap: float
    dims: tuple[int, int, int]  # (D, M, P)
    seed: int
    regime: str = ODE_LIMIT
    readout_overlap: float | None = None

    def __post_init__(self) -> None:
        d, m, p = self.dims
        if self.regime not in REGIMES:
            raise TaskGenError(f"unknown regime {self.regime!r}")
        if not 0.0 <= self.feature_overlap <= 1.0:
            raise TaskGenError("feature_overlap must lie in [0, 1]")
        if m != p:
            raise TaskGenError("paired teachers require M == P")
        if self.regime == ODE_LIMIT:
            if self.readout_overlap is not None:
                raise TaskGenError("readout_overlap is a mean-field-only control")
            if d < 2 * m:
                raise TaskGenError(f"cannot orthogonalise {m} unit pairs in {d} dimensions")
        else:
            if self.readout_overlap is None:
                raise TaskGenError("mean-field teachers need a readout_overlap")
            if not -1.0 <= self.readout_overlap <= 1.0:
                raise TaskGenError("readout_overlap must lie in [-1, 1]")
            if m < 2:
                raise TaskGenError("mean-field teachers need at least 2 hidden units")

    def to_json_dict(self) -> dict:
        return {
            "feature_overlap": self.feature_overlap,
            "readout_overlap": self.readout_overlap,
            "regime": self.regime,
            "dims": list(self.dims),
            "seed": self.seed,
        }


@dataclass(frozen=True)
class TeacherPair:
    """Two frozen teachers plus the spec that generated them."""

    t_dag: TwoLayerNet
    t_ddag: TwoLayerNet
    spec: SimilaritySpec


def _haar_columns(n: int, k: int, rng: np.random.Generator) -> np.ndarray:
    """n x k matrix with orthonormal, Haar-distributed columns (sign-fixed QR)."""
    a = rng.standard_normal((n, k))
    q, r = np.linalg.qr(a)
    return q * np.sign(np.diag(r))


def random_orthogonal(n: int, seed: int) -> np.ndarray:
    """Haar-distributed n x n orthogonal matrix via QR of a Gaussian matrix."""
    if n < 2:
        raise TaskGenError("need n >= 2")
    return _haar_columns(n, n, rng_from(seed, "orthogonal"))


def unit_pair_with_overlap(n: int, v: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Two unit n-vectors with exact dot product v, uniformly oriented.

    Rotates the planar pair (0, 1), (sin t, cos t) with cos t = v by a random
    orthonormal 2-frame.
    """
    if n < 2:
        raise TaskGenError("need n >= 2")
    if not -1.0 <= v <= 1.0:
        raise TaskGenError("overlap must lie in [-1, 1]")
    frame = _haar_columns(n, 2, rng_from(seed, "unit-pair"))
    sin_t = np.sqrt(max(0.0, 1.0 - v * v))
    return frame @ np.array([0.0, 1.0]), frame @ np.array([sin_t, v])


def make_teachers_ode_limit(
    spec: SimilaritySpec, activation: str = ERF
) -> TeacherPair:
    """Large-input teacher pair with T = S = I and V = feature_overlap * I.

    Unit m's row pair comes from columns (2m, 2m+1) of one orthonormal frame,
    so rows of distinct units are exactly orthogonal; rows are scaled by
    sqrt(D) to unit self-overlap.  Head weights are +1 (sign symmetry of odd
    activations makes the negative-head cases equivalent).
    """
    if spec.regime != ODE_LIMIT:
        raise TaskGenError("spec regime is not ode_limit")
    d, m, _ = spec.dims
    v = spec.feature_overlap
    frame = _haar_columns(d, 2 * m, rng_from(spec.seed, "ode-teachers"))
    sin_t = np.sqrt(max(0.0, 1.0 - v * v))
    w1 = np.empty((m, d))
    w2 = np.empty((m, d))
    for unit in range(m):
        plane = frame[:, 2 * unit : 2 * unit + 2]
        w1[unit] = np.sqrt(d) * (plane @ np.array([0.0, 1.0]))
        w2[unit] = np.sqrt(d) * (plane @ np.array([sin_t, v]))
    heads = np.ones(m)
    return TeacherPair(
        t_dag=TwoLayerNet(w=w1, heads={Task.DAGGER: heads.copy()},
                          activation=activation, scaling=LARGE_INPUT),
        t_ddag=TwoLayerNet(w=w2, heads={Task.DDAGGER: heads.copy()},
                           activation=activation, scaling=LARGE_INPUT),
        spec=spec,
    )


def make_teachers_mean_field(
    spec: SimilaritySpec, activation: str = ERF
) -> TeacherPair:
    """Mean-field teacher pair with feature interpolation and exact-cosine
    readouts (scaled by sqrt(M))."""
    if spec.regime != MEAN_FIELD:
        raise TaskGenError("spec regime is not mean_field")
    d, m, _ = spec.dims
    a = spec.feature_overlap
    rng = rng_from(spec.seed, "mf-features")
    w1 = rng.standard_normal((m, d))
    w1 /= np.linalg.norm(w1, axis=1, keepdims=True)
    z = rng.standard_normal((m, d)) / np.sqrt(d)  # rows of expected unit norm
    w2 = a * w1 + np.sqrt(max(0.0, 1.0 - a * a)) * z

    h1, h2 = unit_pair_with_overlap(
        m, float(spec.readout_overlap), derive_seed(spec.seed, "mf-readouts")
    )
    scale = np.sqrt(m)
    return TeacherPair(
        t_dag=TwoLayerNet(w=w1, heads={Task.DAGGER: scale * h1},
                          activation=activation, scaling=MEAN_FIELD),
        t_ddag=TwoLayerNet(w=w2, heads={Task.DDAGGER: scale * h2},
                           activation=activation, scaling=MEAN_FIELD),
        spec=spec,
    )


def make_teachers(spec: SimilaritySpec, activation: str = ERF) -> TeacherPair:
    """Dispatch on the spec's regime."""
    if spec.regime == ODE_LIMIT:
        return make_teachers_ode_limit(spec, activation)
    return make_teachers_mean_field(spec, activation)
