"""Gaussian averages of activation products over projected covariances.

The learning dynamics and the analytic test error reduce to expectations of
products of ``g`` and ``g'`` over small sets of jointly Gaussian, zero-mean
"local fields".  With the field covariance ``c`` (a 2x2, 3x3 or 4x4 matrix)
the three averages needed are::

    i2:  < g(b) g(c) >
    i3:  < g'(a) b g(c) >          (field order: g'-field, linear, g-field)
    i4:  < g'(a) g'(b) g(c) g(d) >

For the scaled error function ``g(x) = erf(x / sqrt(2))`` all three have
closed forms.  Printed versions of these formulas in the literature disagree
on overall constants, so the factors used here were pinned once against the
Monte Carlo oracle (``mc_expectation``) and are locked by regression tests:

    I2 = (2/pi) * arcsin( c12 / sqrt((1+c11)(1+c22)) )
    I3 = (2/pi) * (c23 (1+c11) - c12 c13) / ((1+c11) sqrt(L3))
    I4 = (4/pi^2) / sqrt(L4) * arcsin( L0 / sqrt(L1 L2) )

with

    L4 = (1+c11)(1+c22) - c12^2
    L0 = L4 c34 - c23 c24 (1+c11) - c13 c14 (1+c22) + c12 c13 c24 + c12 c14 c23
    L1 = L4 (1+c33) - c23^2 (1+c11) - c13^2 (1+c22) + 2 c12 c13 c23
    L2 = L4 (1+c44) - c24^2 (1+c11) - c14^2 (1+c22) + 2 c12 c14 c24
    L3 = (1+c11)(1+c33) - c13^2

The module also exposes vectorised variants (``i2_grid`` etc.) that evaluate
whole index grids of a large covariance matrix at once; the ODE right-hand
side is built on those.

All functions are pure; the Monte Carlo oracle draws every sample from its
explicit seed, so results are reproducible from any worker.
"""

from __future__ import annotations

import numpy as np
from scipy.special import erf

# Tolerances fixed by contract: arcsin arguments may exceed 1 by float noise
# near fully-correlated fields (exactly where the late-time dynamics live).
ARCSIN_TOL = 1e-9
SINGULAR_TOL = 1e-12
PSD_TOL = 1e-10

MC_KINDS = ("I2", "I3", "I4")
_KIND_DIM = {"I2": 2, "I3": 3, "I4": 4}


class CovarianceError(ValueError):
    """Base class for invalid covariance input."""


class DomainError(CovarianceError):
    """An arcsin argument exceeds 1 beyond tolerance: covariance is invalid."""


class SingularCovarianceError(CovarianceError):
    """A normaliser that must be positive is at or below the singular floor."""


class DecompositionError(CovarianceError):
    """Cholesky factorisation failed even with diagonal jitter (non-PSD input)."""


def g_erf(x: np.ndarray | float) -> np.ndarray | float:
    """Scaled error function activation."""
    return erf(x / np.sqrt(2.0))


def g_erf_prime(x: np.ndarray | float) -> np.ndarray | float:
    """Derivative of the scaled error function: sqrt(2/pi) exp(-x^2/2)."""
    return np.sqrt(2.0 / np.pi) * np.exp(-0.5 * np.square(x))


def validate_covariance(c: np.ndarray, dim: int | None = None) -> np.ndarray:
    """Check and symmetrize a projected covariance matrix.

    Requires a square, finite matrix, symmetric to 1e-8, with eigenvalues
    >= -1e-10 after symmetrization.  Returns the symmetrized float64 copy.
    """
    c = np.asarray(c, dtype=float)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise CovarianceError(f"covariance must be square, got shape {c.shape}")
    if dim is not None and c.shape[0] != dim:
        raise CovarianceError(f"expected {dim}x{dim} covariance, got {c.shape}")
    if not np.all(np.isfinite(c)):
        raise CovarianceError("covariance contains non-finite entries")
    if np.max(np.abs(c - c.T), initial=0.0) > 1e-8:
        raise CovarianceError("covariance is not symmetric")
    c = 0.5 * (c + c.T)
    eigs = np.linalg.eigvalsh(c)
    if eigs[0] < -PSD_TOL:
        raise CovarianceError(
            f"covariance is not positive semi-definite (min eigenvalue {eigs[0]:.3e})"
        )
    return c


def _clamped_arcsin(arg: np.ndarray | float) -> np.ndarray | float:
    """arcsin with the contractual clamp: |arg| <= 1 + ARCSIN_TOL is clipped."""
    a = np.asarray(arg, dtype=float)
    over = np.abs(a) - 1.0
    if np.any(over > ARCSIN_TOL):
        raise DomainError(
            f"arcsin argument out of range by {float(np.max(over)):.3e} "
            f"(tolerance {ARCSIN_TOL:.0e}); covariance is invalid"
        )
    out = np.arcsin(np.clip(a, -1.0, 1.0))
    return float(out) if np.isscalar(arg) or out.ndim == 0 else out


def i2(c: np.ndarray) -> float:
    """Closed form of < g(b) g(c) > for a 2x2 field covariance.

    Oracle-pinned prefactor 2/pi.  For c = [[1,1],[1,1]] the fields coincide
    and g(b) is uniform on (-1, 1), so the exact value is 1/3.
    """
    c = validate_covariance(c, dim=2)
    denom = (1.0 + c[0, 0]) * (1.0 + c[1, 1])
    if denom <= SINGULAR_TOL:
        raise SingularCovarianceError(f"(1+c11)(1+c22) = {denom:.3e} is not positive")
    return (2.0 / np.pi) * _clamped_arcsin(c[0, 1] / np.sqrt(denom))


def i3(c: np.ndarray) -> float:
    """Closed form of < g'(a) b g(c) > for a 3x3 field covariance.

    Field order is (g'-field, linear field, g-field).  Oracle-pinned
    prefactor 2/pi; the value is exactly linear in the second field.
    """
    c = validate_covariance(c, dim=3)
    lam3 = (1.0 + c[0, 0]) * (1.0 + c[2, 2]) - c[0, 2] ** 2
    if lam3 <= SINGULAR_TOL:
        raise SingularCovarianceError(f"Lambda_3 = {lam3:.3e} is not positive")
    num = c[1, 2] * (1.0 + c[0, 0]) - c[0, 1] * c[0, 2]
    return (2.0 / np.pi) * num / ((1.0 + c[0, 0]) * np.sqrt(lam3))


def i4(c: np.ndarray) -> float:
    """Closed form of < g'(a) g'(b) g(c) g(d) > for a 4x4 field covariance.

    Field order is (g'-field, g'-field, g-field, g-field).
    """
    c = validate_covariance(c, dim=4)
    lam4 = (1.0 + c[0, 0]) * (1.0 + c[1, 1]) - c[0, 1] ** 2
    lam0 = (
        lam4 * c[2, 3]
        - c[1, 2] * c[1, 3] * (1.0 + c[0, 0])
        - c[0, 2] * c[0, 3] * (1.0 + c[1, 1])
        + c[0, 1] * c[0, 2] * c[1, 3]
        + c[0, 1] * c[0, 3] * c[1, 2]
    )
    lam1 = (
        lam4 * (1.0 + c[2, 2])
        - c[1, 2] ** 2 * (1.0 + c[0, 0])
        - c[0, 2] ** 2 * (1.0 + c[1, 1])
        + 2.0 * c[0, 1] * c[0, 2] * c[1, 2]
    )
    lam2 = (
        lam4 * (1.0 + c[3, 3])
        - c[1, 3] ** 2 * (1.0 + c[0, 0])
        - c[0, 3] ** 2 * (1.0 + c[1, 1])
        + 2.0 * c[0, 1] * c[0, 3] * c[1, 3]
    )
    for name, lam in (("Lambda_4", lam4), ("Lambda_1", lam1), ("Lambda_2", lam2)):
        if lam <= SINGULAR_TOL:
            raise SingularCovarianceError(f"{name} = {lam:.3e} is not positive")
    return (4.0 / np.pi**2) / np.sqrt(lam4) * _clamped_arcsin(lam0 / np.sqrt(lam1 * lam2))


# ---------------------------------------------------------------------------
# Monte Carlo oracle
# ---------------------------------------------------------------------------

_MC_CHUNK = 1_000_000


def _cholesky_with_jitter(c: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(c)
    except np.linalg.LinAlgError:
        pass
    try:
        return np.linalg.cholesky(c + PSD_TOL * np.eye(c.shape[0]))
    except np.linalg.LinAlgError as exc:
        raise DecompositionError(
            "covariance is not positive semi-definite even with diagonal jitter"
        ) from exc


def _mc_integrand(kind: str, z: np.ndarray) -> np.ndarray:
    if kind == "I2":
        return g_erf(z[:, 0]) * g_erf(z[:, 1])
    if kind == "I3":
        return g_erf_prime(z[:, 0]) * z[:, 1] * g_erf(z[:, 2])
    if kind == "I4":
        return g_erf_prime(z[:, 0]) * g_erf_prime(z[:, 1]) * g_erf(z[:, 2]) * g_erf(z[:, 3])
    raise ValueError(f"unknown integrand kind {kind!r}")


def mc_expectation(
    c: np.ndarray, kind: str, n_samples: int, seed: int
) -> tuple[float, float]:
    """Monte Carlo estimate of one of the field averages under N(0, c).

    Returns ``(estimate, std_error)`` where std_error is the sample standard
    deviation divided by sqrt(n_samples).  Deterministic for a fixed seed;
    sampling uses a Cholesky factor of ``c`` with diagonal jitter up to 1e-10
    so that snapshot covariances that are PSD only to round-off still work.
    """
    if kind not in MC_KINDS:
        raise ValueError(f"kind must be one of {MC_KINDS}, got {kind!r}")
    if n_samples < 10_000:
        raise ValueError(f"n_samples must be >= 10000, got {n_samples}")
    c = validate_covariance(c, dim=_KIND_DIM[kind])
    chol = _cholesky_with_jitter(c)
    rng = np.random.default_rng(seed)

    total = 0.0
    total_sq = 0.0
    remaining = int(n_samples)
    while remaining > 0:
        m = min(_MC_CHUNK, remaining)
        z = rng.standard_normal((m, c.shape[0])) @ chol.T
        vals = _mc_integrand(kind, z)
        total += float(np.sum(vals))
        total_sq += float(np.sum(vals * vals))
        remaining -= m

    n = float(n_samples)
    mean = total / n
    var = max(total_sq / n - mean * mean, 0.0) * n / (n - 1.0)
    return mean, float(np.sqrt(var / n))


# ---------------------------------------------------------------------------
# Vectorised grids over a full covariance matrix (hot path for the ODEs)
# ---------------------------------------------------------------------------
# These trust their input (an assembled overlap covariance) and skip per-call
# validation; the clamp guard is kept because q_kk -> 1 plateaus push arcsin
# arguments to the boundary.


def i2_grid(cov: np.ndarray, idx_a: np.ndarray, idx_b: np.ndarray) -> np.ndarray:
    """Matrix of < g(field_a) g(field_b) > over the index grid (a, b)."""
    d = np.diag(cov)
    da = 1.0 + d[idx_a]
    db = 1.0 + d[idx_b]
    arg = cov[np.ix_(idx_a, idx_b)] / np.sqrt(np.outer(da, db))
    return (2.0 / np.pi) * _clamped_arcsin(arg)


def i3_grid(
    cov: np.ndarray, idx_i: np.ndarray, idx_f: np.ndarray, idx_h: np.ndarray
) -> np.ndarray:
    """Array of < g'(field_i) field_f g(field_h) >, shape (i, f, h)."""
    d = np.diag(cov)
    c11 = 1.0 + d[idx_i]                      # (i,)
    c33 = 1.0 + d[idx_h]                      # (h,)
    c13 = cov[np.ix_(idx_i, idx_h)]           # (i, h)
    c12 = cov[np.ix_(idx_i, idx_f)]           # (i, f)
    c23 = cov[np.ix_(idx_f, idx_h)]           # (f, h)
    lam3 = c11[:, None] * c33[None, :] - c13**2
    if np.any(lam3 <= SINGULAR_TOL):
        raise SingularCovarianceError("Lambda_3 is not positive on the grid")
    num = c23[None, :, :] * c11[:, None, None] - c12[:, :, None] * c13[:, None, :]
    return (2.0 / np.pi) * num / (c11[:, None, None] * np.sqrt(lam3)[:, None, :])


def i4_grid(
    cov: np.ndarray,
    idx_i: np.ndarray,
    idx_k: np.ndarray,
    idx_a: np.ndarray,
    idx_b: np.ndarray,
) -> np.ndarray:
    """Array of < g'(i) g'(k) g(a) g(b) >, shape (i, k, a, b)."""
    d = np.diag(cov)
    c11 = 1.0 + d[idx_i]
    c22 = 1.0 + d[idx_k]
    c12 = cov[np.ix_(idx_i, idx_k)]
    c13 = cov[np.ix_(idx_i, idx_a)]
    c14 = cov[np.ix_(idx_i, idx_b)]
    c23 = cov[np.ix_(idx_k, idx_a)]
    c24 = cov[np.ix_(idx_k, idx_b)]
    c33 = 1.0 + d[idx_a]
    c44 = 1.0 + d[idx_b]
    c34 = cov[np.ix_(idx_a, idx_b)]

    lam4 = c11[:, None] * c22[None, :] - c12**2                    # (i, k)
    lam0 = (
        lam4[:, :, None, None] * c34[None, None, :, :]
        - c23[None, :, :, None] * c24[None, :, None, :] * c11[:, None, None, None]
        - c13[:, None, :, None] * c14[:, None, None, :] * c22[None, :, None, None]
        + c12[:, :, None, None] * c13[:, None, :, None] * c24[None, :, None, :]
        + c12[:, :, None, None] * c14[:, None, None, :] * c23[None, :, :, None]
    )
    lam1 = (
        lam4[:, :, None] * c33[None, None, :]
        - c23[None, :, :] ** 2 * c11[:, None, None]
        - c13[:, None, :] ** 2 * c22[None, :, None]
        + 2.0 * c12[:, :, None] * c13[:, None, :] * c23[None, :, :]
    )                                                              # (i, k, a)
    lam2 = (
        lam4[:, :, None] * c44[None, None, :]
        - c24[None, :, :] ** 2 * c11[:, None, None]
        - c14[:, None, :] ** 2 * c22[None, :, None]
        + 2.0 * c12[:, :, None] * c14[:, None, :] * c24[None, :, :]
    )                                                              # (i, k, b)
    if np.any(lam4 <= SINGULAR_TOL) or np.any(lam1 <= SINGULAR_TOL) or np.any(
        lam2 <= SINGULAR_TOL
    ):
        raise SingularCovarianceError("Lambda normaliser is not positive on the grid")
    arg = lam0 / np.sqrt(lam1[:, :, :, None] * lam2[:, :, None, :])
    return (4.0 / np.pi**2) / np.sqrt(lam4)[:, :, None, None] * _clamped_arcsin(arg)
