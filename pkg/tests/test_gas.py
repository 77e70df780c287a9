"""Gas closure: closed forms vs independent oracles, and cut-off behavior."""

import numpy as np
import pytest

import oracles
from lowmach import (
    ConfigError,
    DomainError,
    GasModel,
    critical_density,
    critical_speed,
    density_departure,
    density_from_speed,
    elliptic_coeffs,
    energy_density,
    enthalpy,
    enthalpy_inv,
    mach,
    make_cutoff,
    speed_at_mach,
    truncated_density,
    truncated_speed_sq,
)

GAS = GasModel(gamma=1.4, epsilon=0.1, q_inf=1.0)


def test_enthalpy_anchor():
    assert enthalpy(1.0, GAS) == 0.0


def test_enthalpy_vs_quadrature():
    expect = oracles.enthalpy_quadrature(2.0, 1.4)  # 3.5*(2**0.4 - 1) ~ 1.1183
    assert enthalpy(2.0, GAS) == pytest.approx(expect, rel=1e-12)
    assert expect == pytest.approx(3.5 * (2.0**0.4 - 1.0), rel=1e-10)


def test_enthalpy_isothermal_branch():
    gas = GasModel(gamma=1.0, epsilon=0.1, q_inf=1.0)
    expect = oracles.enthalpy_quadrature(2.0, 1.0)
    assert enthalpy(2.0, gas) == pytest.approx(expect, rel=1e-12)
    assert expect == pytest.approx(np.log(2.0), rel=1e-12)


def test_enthalpy_rejects_nonpositive_density():
    with pytest.raises(DomainError):
        enthalpy(0.0, GAS)
    with pytest.raises(DomainError):
        enthalpy(-1.0, GAS)


def test_enthalpy_inv_anchor():
    assert enthalpy_inv(0.0, GAS) == pytest.approx(1.0, abs=1e-15)


def test_enthalpy_inv_vs_bisection():
    expect = oracles.enthalpy_inv_bisect(0.005, 1.4)
    assert enthalpy_inv(0.005, GAS) == pytest.approx(expect, rel=1e-10)
    assert expect == pytest.approx(1.003575, abs=2e-6)


def test_enthalpy_inv_isothermal():
    gas = GasModel(gamma=1.0, epsilon=0.1, q_inf=1.0)
    assert enthalpy_inv(np.log(2.0), gas) == pytest.approx(2.0, rel=1e-12)


def test_enthalpy_inv_below_range():
    with pytest.raises(DomainError):
        enthalpy_inv(-3.6, GAS)  # floor is -gamma/(gamma-1) = -3.5


@pytest.mark.parametrize("gamma", [1.0, 1.4, 5.0 / 3.0])
def test_enthalpy_round_trip(gamma):
    gas = GasModel(gamma=gamma, epsilon=0.1, q_inf=1.0)
    rho = np.linspace(0.5, 2.0, 41)
    back = enthalpy_inv(enthalpy(rho, gas), gas)
    assert np.allclose(back, rho, rtol=1e-10)


def test_density_from_speed_anchor():
    for eps in (0.05, 0.3, 0.9):
        gas = GasModel(gamma=1.4, epsilon=eps, q_inf=1.0)
        assert density_from_speed(gas.q_inf**2, 0.0, gas) == pytest.approx(1.0, abs=1e-15)


def test_density_from_speed_vs_bisection():
    expect = oracles.density_from_speed_bisect(0.0, 0.0, 1.4, 0.1, 1.0)
    assert density_from_speed(0.0, 0.0, GAS) == pytest.approx(expect, rel=1e-10)
    assert expect == pytest.approx(1.003575, abs=2e-6)


def test_density_from_speed_coincident_levels():
    # eps^2 (q_inf^2 - q^2)/2 + eps^2 phi agrees between these two states.
    a = density_from_speed(0.0, 0.0, GAS)
    b = density_from_speed(1.0, 0.5, GAS)
    assert a == pytest.approx(b, rel=1e-14)


def test_density_from_speed_vacuum_error():
    gas = GasModel(gamma=1.4, epsilon=1.0, q_inf=1.0)
    with pytest.raises(DomainError, match="speed"):
        density_from_speed(100.0, 0.0, gas)


def test_density_from_speed_monotonicity():
    # strictly decreasing in q^2, strictly increasing in phi (sign test on a grid)
    q2 = np.linspace(0.0, 4.0, 41)
    rho = density_from_speed(q2, 0.0, GAS)
    assert np.all(np.diff(rho) < 0.0)
    phis = np.linspace(-0.5, 0.5, 21)
    rho_phi = density_from_speed(1.0, phis, GAS)
    assert np.all(np.diff(rho_phi) > 0.0)


def test_mach_examples():
    assert mach(0.0, 1.0, GAS) == 0.0
    # independent form: M = eps q rho**((1-gamma)/2) / sqrt(gamma)
    expect = 0.1 * 1.0 ** ((1.0 - 1.4) / 2.0) / np.sqrt(1.4)
    assert mach(1.0, 1.0, GAS) == pytest.approx(expect, rel=1e-14)
    assert expect == pytest.approx(0.08452, abs=1e-5)
    gas1 = GasModel(gamma=1.0, epsilon=0.1, q_inf=1.0)
    assert mach(1.0, 1.0, gas1) == pytest.approx(0.1, rel=1e-14)


def test_critical_density_low_mach_limit():
    gas = GasModel(gamma=1.4, epsilon=1e-8, q_inf=1.0)
    closed = (2.0 / 2.4) ** (1.0 / 0.4)
    assert closed == pytest.approx(0.63394, abs=1e-5)
    assert critical_density(0.0, gas) == pytest.approx(closed, rel=1e-10)
    assert critical_density(0.0, gas) == pytest.approx(
        oracles.sonic_head_inv_bisect(0.0, 1.4), rel=1e-10
    )


def test_critical_density_finite_eps_vs_bisection():
    expect = oracles.sonic_head_inv_bisect(0.005, 1.4)
    assert critical_density(0.0, GAS) == pytest.approx(expect, rel=1e-10)


def test_critical_density_isothermal():
    gas = GasModel(gamma=1.0, epsilon=1e-8, q_inf=1.0)
    assert critical_density(0.0, gas) == pytest.approx(np.exp(-0.5), rel=1e-10)
    assert np.exp(-0.5) == pytest.approx(0.60653, abs=1e-5)


def test_critical_speed_scaled_limit():
    gas = GasModel(gamma=1.4, epsilon=1e-8, q_inf=1.0)
    assert gas.epsilon * critical_speed(0.0, gas) == pytest.approx(
        np.sqrt(2.0 * 1.4 / 2.4), rel=1e-10
    )
    assert np.sqrt(2.0 * 1.4 / 2.4) == pytest.approx(1.08012, abs=1e-5)


def test_critical_speed_finite_eps():
    gas = GasModel(gamma=1.4, epsilon=0.5, q_inf=1.0)
    rho_cr = oracles.sonic_head_inv_bisect(0.125, 1.4)
    expect = np.sqrt(1.4 * rho_cr**0.4) / 0.5
    assert critical_speed(0.0, gas) == pytest.approx(expect, rel=1e-10)


def test_critical_speed_grows_as_eps_shrinks():
    q_small = critical_speed(0.0, GasModel(1.4, 0.1, 1.0))
    q_large = critical_speed(0.0, GasModel(1.4, 0.5, 1.0))
    assert q_small > q_large


def test_speed_at_mach_round_trip():
    rho = density_from_speed(1.0, 0.0, GAS)
    theta = mach(1.0, rho, GAS)
    assert speed_at_mach(theta, 0.0, GAS) == pytest.approx(1.0, rel=1e-12)


def test_speed_at_mach_vs_bisection():
    expect = oracles.speed_at_mach_bisect(0.5, 0.0, 1.4, 0.1, 1.0)
    assert speed_at_mach(0.5, 0.0, GAS) == pytest.approx(expect, rel=1e-10)


def test_speed_at_mach_ordering():
    q3 = speed_at_mach(0.3, 0.0, GAS)
    q6 = speed_at_mach(0.6, 0.0, GAS)
    assert q3 < q6 < critical_speed(0.0, GAS)


def test_critical_level_out_of_range():
    gas = GasModel(gamma=1.4, epsilon=0.9, q_inf=1.0)
    with pytest.raises(ConfigError):
        critical_density(-100.0, gas)


# ----------------------------------------------------------------------
# Cut-off
# ----------------------------------------------------------------------


@pytest.fixture(scope="module")
def cut():
    return make_cutoff(GAS, mach_threshold=0.65, eps_ref=0.45)


@pytest.fixture(scope="module")
def cut_forced():
    phis = np.linspace(-0.3, 0.3, 61)
    return make_cutoff(GAS, mach_threshold=0.45, eps_ref=0.3, phi_samples=phis)


def test_cutoff_identity_branch(cut):
    assert cut.q_lower(0.0) > 0.5  # 0.25 is safely below the onset
    val, dl, dphi = truncated_speed_sq(0.25, 0.0, cut)
    assert (val, dl, dphi) == (0.25, 1.0, -2.0)


def test_cutoff_identity_branch_with_force(cut_forced):
    val, dl, dphi = truncated_speed_sq(0.25, 0.1, cut_forced)
    assert val == pytest.approx(0.05, abs=1e-15)
    assert (dl, dphi) == (1.0, -2.0)


def test_cutoff_saturated_branch(cut):
    lam_hi = cut.q_upper(0.0) ** 2
    val, dl, dphi = truncated_speed_sq(2.0 * lam_hi, 0.0, cut)
    assert val == pytest.approx(cut.saturation, rel=1e-14)
    assert (dl, dphi) == (0.0, 0.0)


def test_cutoff_bridge_monotone_and_c1(cut_forced):
    spec = cut_forced
    for phi in (-0.25, 0.0, 0.25):
        lo = spec.q_lower(phi) ** 2
        hi = spec.q_upper(phi) ** 2
        lam = np.linspace(lo - 0.2, hi + 0.2, 2001)
        val, dl, dphi = truncated_speed_sq(lam, phi, spec)
        assert np.all(np.diff(val) >= -1e-12)
        assert np.all(dl >= -1e-14)
        # finite-difference check of both partials across the branches
        h = 1e-6
        vp, _, _ = truncated_speed_sq(lam + h, phi, spec)
        vm, _, _ = truncated_speed_sq(lam - h, phi, spec)
        assert np.allclose((vp - vm) / (2 * h), dl, atol=5e-5)
        vp, _, _ = truncated_speed_sq(lam, phi + h, spec)
        vm, _, _ = truncated_speed_sq(lam, phi - h, spec)
        assert np.allclose((vp - vm) / (2 * h), dphi, atol=5e-5)


def test_truncated_density_identity_matches_bernoulli(cut_forced):
    q2 = np.linspace(0.0, 1.5, 30)
    for phi in (-0.2, 0.0, 0.2):
        a = truncated_density(q2, phi, GAS, cut_forced)
        b = density_from_speed(q2, phi, GAS)
        assert np.allclose(a, b, rtol=1e-14)


def test_truncated_density_anchor_and_saturation(cut):
    assert truncated_density(GAS.q_inf**2, 0.0, GAS, cut) == pytest.approx(1.0, abs=1e-15)
    assert truncated_density(0.0, 0.0, GAS, cut) == pytest.approx(
        oracles.density_from_speed_bisect(0.0, 0.0, 1.4, 0.1, 1.0), rel=1e-10
    )
    lam_hi = cut.q_upper(0.0) ** 2
    r1 = truncated_density(2.0 * lam_hi, 0.0, GAS, cut)
    r2 = truncated_density(10.0 * lam_hi, 0.0, GAS, cut)
    assert r1 == r2


def test_truncated_density_two_sided_bound(cut_forced):
    spec = cut_forced
    rng = np.random.default_rng(7)
    q2 = rng.uniform(0.0, 3.0 * spec.q_upper(0.0) ** 2, size=4000)
    phi = rng.uniform(-0.3, 0.3, size=4000)
    # the bound is uniform over eps up to the cut-off reference, not beyond
    from lowmach import density_bounds

    for eps in (0.05, 0.15, spec.eps_ref):
        gas = GasModel(1.4, eps, 1.0)
        rho = truncated_density(q2, phi, gas, spec)
        low, high = density_bounds(gas, spec)
        assert low == pytest.approx(
            oracles.sonic_head_inv_bisect(-spec.phi_star, 1.4), rel=1e-10)
        assert high == pytest.approx(
            enthalpy_inv(gas.q_inf**2 / 2.0 + spec.phi_star, gas), rel=1e-14)
        assert np.all(rho > low)
        assert np.all(rho <= high)


def test_truncated_density_eps_too_large(cut):
    gas = GasModel(gamma=1.4, epsilon=5.0, q_inf=1.0)
    with pytest.raises(ConfigError):
        truncated_density(np.array([0.0, 10.0]), 0.0, gas, cut)


def test_density_departure_matches_direct(cut):
    # at moderate eps the naive difference is accurate enough to compare
    q2 = np.linspace(0.0, 2.0, 17)
    direct = (truncated_density(q2, 0.0, GAS, cut) - 1.0) / GAS.epsilon**2
    stable = density_departure(q2, 0.0, GAS, cut)
    assert np.allclose(stable, direct, rtol=1e-8)


def test_density_departure_low_mach_limit(cut_forced):
    # identity branch: (rho_hat - 1)/eps^2 -> (q_inf^2 - q^2 + 2 phi)/(2 gamma)
    q2, phi = 0.7, 0.2
    expect = (1.0 - q2 + 2.0 * phi) / (2.0 * 1.4)
    for eps in (1e-3, 1e-5):
        gas = GasModel(1.4, eps, 1.0)
        got = density_departure(q2, phi, gas, cut_forced)
        assert got == pytest.approx(expect, rel=5e-5 if eps == 1e-3 else 5e-9)


def test_energy_density_zero(cut):
    assert energy_density(0.0, 0.0, GAS, cut) == 0.0


def test_energy_density_low_mach_limit(cut):
    gas = GasModel(1.4, 1e-7, 1.0)
    assert energy_density(1.0, 0.0, gas, cut) == pytest.approx(0.5, rel=1e-10)


def test_energy_density_vs_trapezoid(cut):
    # quadrature-refinement oracle: 1e6-point trapezoid of rho_hat / 2
    for lam_top in (1.0, 1.3 * cut.q_upper(0.0) ** 2):
        grid = np.linspace(0.0, lam_top, 1_000_001)
        rho = truncated_density(grid, 0.0, GAS, cut)
        expect = np.trapezoid(rho, grid) / 2.0
        assert energy_density(lam_top, 0.0, GAS, cut) == pytest.approx(expect, rel=1e-8)


def test_energy_density_slope_is_half_density(cut_forced):
    lam = np.linspace(0.05, 1.4 * cut_forced.q_upper(0.2) ** 2, 37)
    h = 1e-5
    up = energy_density(lam + h, 0.2, GAS, cut_forced)
    dn = energy_density(lam - h, 0.2, GAS, cut_forced)
    fd = (up - dn) / (2.0 * h)
    expect = truncated_density(lam, 0.2, GAS, cut_forced) / 2.0
    assert np.allclose(fd, expect, rtol=1e-6, atol=1e-8)


def test_elliptic_coeffs_stagnation(cut):
    a, b, _ = elliptic_coeffs(np.zeros(3), 0.0, GAS, cut)
    rho0 = truncated_density(0.0, 0.0, GAS, cut)
    assert np.allclose(a, rho0 * np.eye(3), rtol=1e-14)
    assert np.allclose(b, 0.0)


def test_elliptic_coeffs_rank_one_eigenvalues(cut):
    v = np.array([GAS.q_inf, 0.0, 0.0])
    a, _, _ = elliptic_coeffs(v, 0.0, GAS, cut)
    evals = np.sort(np.linalg.eigvalsh(a))
    rho = 1.0
    deflated = rho * (1.0 - GAS.epsilon**2 * GAS.q_inf**2 / (1.4 * rho**0.4))
    assert evals[0] == pytest.approx(deflated, rel=1e-12)
    assert evals[1] == pytest.approx(rho, rel=1e-12)
    assert evals[2] == pytest.approx(rho, rel=1e-12)


def test_elliptic_coeffs_saturated_isotropic(cut):
    v = np.array([2.5 * cut.q_upper(0.0), 0.0, 0.0])
    a, _, _ = elliptic_coeffs(v, 0.0, GAS, cut)
    rho_sat = truncated_density(np.sum(v * v), 0.0, GAS, cut)
    assert np.allclose(a, rho_sat * np.eye(3), rtol=1e-14)


def test_elliptic_coeffs_bounds_random_states(cut_forced):
    spec = cut_forced
    rng = np.random.default_rng(1234)
    n_eps, n_state = 20, 500  # 10^4 states total
    lam_max = 2.0 * spec.q_upper(0.0) ** 2
    for eps in np.geomspace(1e-3, spec.eps_ref, n_eps):
        gas = GasModel(1.4, float(eps), 1.0)
        v = rng.normal(size=(n_state, 3))
        v *= (np.sqrt(rng.uniform(0.0, lam_max, n_state)) / np.linalg.norm(v, axis=1))[:, None]
        phi = rng.uniform(-0.3, 0.3, n_state)
        a, _, (lam1, lam2) = elliptic_coeffs(v, phi, gas, spec)
        xi = rng.normal(size=(n_state, 3))
        quad = np.einsum("ni,nij,nj->n", xi, a, xi)
        norm2 = np.sum(xi * xi, axis=1)
        assert np.all(quad >= lam1 * norm2)
        assert np.all(quad <= lam2 * norm2)


def test_drift_vector_bounded(cut_forced):
    spec = cut_forced
    rng = np.random.default_rng(99)
    from lowmach.gas import ForceValue

    for _ in range(200):
        v = rng.normal(size=3) * rng.uniform(0.0, 2.0)
        grad = rng.normal(size=3)
        f = ForceValue(potential=float(rng.uniform(-0.3, 0.3)), gradient=tuple(grad))
        _, b, _ = elliptic_coeffs(v, f, GAS, spec)
        xi = rng.normal(size=3)
        assert abs(b @ xi) <= spec.drift_bound * np.linalg.norm(grad) * np.linalg.norm(xi) + 1e-14


def test_gas_model_validation():
    with pytest.raises(ConfigError):
        GasModel(gamma=0.9, epsilon=0.1, q_inf=1.0)
    with pytest.raises(ConfigError):
        GasModel(gamma=1.4, epsilon=0.0, q_inf=1.0)
    with pytest.raises(ConfigError):
        GasModel(gamma=1.4, epsilon=0.1, q_inf=-1.0)


def test_make_cutoff_validation():
    with pytest.raises(ConfigError):
        make_cutoff(GAS, mach_threshold=1.5)
    with pytest.raises(ConfigError):
        make_cutoff(GAS, eps_ref=1.5)
