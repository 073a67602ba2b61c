"""Closed-form field averages against the Monte Carlo oracle.

The regression values here lock the oracle-calibrated constants: prefactor
2/pi for the two- and three-field averages, 4/pi^2 for the four-field one.
"""

import numpy as np
import pytest

from tsforget import integrals as gi

RNG = np.random.default_rng(20260808)


def rand_cov(dim: int, rng) -> np.ndarray:
    a = rng.standard_normal((dim, dim + 2))
    gram = a @ a.T
    scale = np.sqrt(np.diag(gram))
    corr = gram / np.outer(scale, scale)
    diag = rng.uniform(0.5, 2.0, dim)
    return corr * np.sqrt(np.outer(diag, diag))


# ---------------------------------------------------------------------------
# i2
# ---------------------------------------------------------------------------


def test_i2_identity_is_zero():
    assert gi.i2(np.eye(2)) == pytest.approx(0.0, abs=1e-12)


def test_i2_fully_correlated_unit_fields():
    # g of a unit-variance Gaussian is uniform on (-1, 1): <g^2> = 1/3.
    # Equals (2/pi) arcsin(1/2); the oracle pinned the 2/pi prefactor.
    val = gi.i2(np.array([[1.0, 1.0], [1.0, 1.0]]))
    assert val == pytest.approx(1.0 / 3.0, abs=1e-12)


def test_i2_against_oracle_spec_example():
    c = np.array([[0.7, 0.3], [0.3, 1.2]])
    est, se = gi.mc_expectation(c, "I2", 10_000_000, seed=101)
    assert abs(gi.i2(c) - est) <= 3.0 * se


def test_i2_symmetry_under_field_swap():
    for trial in range(10):
        c = rand_cov(2, np.random.default_rng(trial))
        swapped = c[np.ix_([1, 0], [1, 0])]
        assert gi.i2(c) == pytest.approx(gi.i2(swapped), abs=1e-14)


def test_i2_monotone_in_cross_correlation():
    diag = np.array([0.8, 1.4])
    cap = np.sqrt(diag[0] * diag[1])
    values = [
        gi.i2(np.array([[diag[0], c12], [c12, diag[1]]]))
        for c12 in np.linspace(-cap, cap, 15)
    ]
    assert np.all(np.diff(values) > 0)


# ---------------------------------------------------------------------------
# i3
# ---------------------------------------------------------------------------


def test_i3_zero_when_linear_field_independent():
    c = np.eye(3)
    c[0, 2] = c[2, 0] = 0.4  # couple only the g' and g fields
    assert gi.i3(c) == pytest.approx(0.0, abs=1e-14)


def test_i3_against_oracle():
    c = np.eye(3)
    c[1, 2] = c[2, 1] = 0.5
    est, se = gi.mc_expectation(c, "I3", 10_000_000, seed=202)
    assert abs(gi.i3(c) - est) <= 3.0 * se


def test_i3_linear_in_second_field():
    # Doubling the linear field doubles the average exactly.
    scale = np.diag([1.0, 2.0, 1.0])
    for trial in range(10):
        c = rand_cov(3, np.random.default_rng(100 + trial))
        doubled = scale @ c @ scale
        assert gi.i3(doubled) == pytest.approx(2.0 * gi.i3(c), rel=1e-12)


def test_i3_random_covariances_against_oracle():
    for trial in range(6):
        c = rand_cov(3, np.random.default_rng(300 + trial))
        est, se = gi.mc_expectation(c, "I3", 1_000_000, seed=trial)
        assert abs(gi.i3(c) - est) <= 4.0 * se


# ---------------------------------------------------------------------------
# i4
# ---------------------------------------------------------------------------


def test_i4_identity_is_zero():
    # Independent fields: the odd g-averages vanish.
    assert gi.i4(np.eye(4)) == pytest.approx(0.0, abs=1e-12)
    est, se = gi.mc_expectation(np.eye(4), "I4", 1_000_000, seed=7)
    assert abs(est) <= 3.0 * se


def test_i4_block_diagonal_decouples():
    c = np.eye(4)
    c[0, 1] = c[1, 0] = 0.6  # only the two g' fields couple
    assert gi.i4(c) == pytest.approx(0.0, abs=1e-12)


def test_i4_random_unit_diagonal_against_oracle():
    for trial in range(6):
        rng = np.random.default_rng(400 + trial)
        c = rand_cov(4, rng)
        d = np.sqrt(np.diag(c))
        c = c / np.outer(d, d)
        est, se = gi.mc_expectation(c, "I4", 1_000_000, seed=trial)
        assert abs(gi.i4(c) - est) <= 4.0 * se


def test_i4_swap_symmetries():
    for trial in range(8):
        c = rand_cov(4, np.random.default_rng(500 + trial))
        swap_gprime = c[np.ix_([1, 0, 2, 3], [1, 0, 2, 3])]
        swap_g = c[np.ix_([0, 1, 3, 2], [0, 1, 3, 2])]
        assert gi.i4(swap_gprime) == pytest.approx(gi.i4(c), rel=1e-12)
        assert gi.i4(swap_g) == pytest.approx(gi.i4(c), rel=1e-12)


# ---------------------------------------------------------------------------
# Monte Carlo oracle contract
# ---------------------------------------------------------------------------


def test_mc_known_closed_form():
    est, se = gi.mc_expectation(np.array([[1.0, 1.0], [1.0, 1.0]]), "I2", 1_000_000, seed=3)
    assert abs(est - 1.0 / 3.0) <= 3.0 * se


def test_mc_independent_fields_near_zero():
    est, se = gi.mc_expectation(np.eye(2), "I2", 1_000_000, seed=4)
    assert abs(est) <= 3.0 * se


def test_mc_seed_determinism_and_consistency():
    c = np.eye(4)
    a1 = gi.mc_expectation(c, "I4", 1_000_000, seed=11)
    a2 = gi.mc_expectation(c, "I4", 1_000_000, seed=11)
    assert a1 == a2
    b, se_b = gi.mc_expectation(c, "I4", 1_000_000, seed=12)
    assert abs(a1[0] - b) <= 6.0 * max(a1[1], se_b)


def test_mc_rejects_bad_input():
    with pytest.raises(ValueError):
        gi.mc_expectation(np.eye(2), "I2", 100, seed=0)
    with pytest.raises(ValueError):
        gi.mc_expectation(np.eye(2), "I5", 10_000, seed=0)
    with pytest.raises(gi.CovarianceError):
        gi.mc_expectation(np.array([[1.0, 2.0], [2.0, 1.0]]), "I2", 10_000, seed=0)


# ---------------------------------------------------------------------------
# Validation and clamping
# ---------------------------------------------------------------------------


def test_validate_rejects_asymmetric_and_non_psd():
    with pytest.raises(gi.CovarianceError):
        gi.validate_covariance(np.array([[1.0, 0.5], [0.2, 1.0]]))
    with pytest.raises(gi.CovarianceError):
        gi.validate_covariance(np.array([[1.0, 2.0], [2.0, 1.0]]))
    with pytest.raises(gi.CovarianceError):
        gi.i2(np.eye(3))  # wrong dimension for a two-field average


def test_arcsin_clamp_tolerance():
    assert gi._clamped_arcsin(1.0 + 5e-10) == pytest.approx(np.pi / 2)
    with pytest.raises(gi.DomainError):
        gi._clamped_arcsin(1.0 + 5e-9)


def test_grid_variants_match_scalar_ops():
    rng = np.random.default_rng(606)
    c = rand_cov(5, rng)
    idx = np.arange(5)
    i2g = gi.i2_grid(c, idx, idx)
    for a in range(5):
        for b in range(5):
            assert i2g[a, b] == pytest.approx(
                gi.i2(c[np.ix_([a, b], [a, b])]), rel=1e-12, abs=1e-14
            )
    i3g = gi.i3_grid(c, np.array([0, 1]), idx, idx)
    for i in range(2):
        for f in range(5):
            for h in range(5):
                assert i3g[i, f, h] == pytest.approx(
                    gi.i3(c[np.ix_([i, f, h], [i, f, h])]), rel=1e-12, abs=1e-14
                )
    i4g = gi.i4_grid(c, np.array([0, 1]), np.array([0, 1]), idx, idx)
    for i in range(2):
        for k in range(2):
            for a in range(5):
                for b in range(5):
                    assert i4g[i, k, a, b] == pytest.approx(
                        gi.i4(c[np.ix_([i, k, a, b], [i, k, a, b])]),
                        rel=1e-12, abs=1e-14,
                    )
