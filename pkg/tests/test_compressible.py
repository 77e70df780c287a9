"""Difference-functional minimization: variational properties and states."""

import numpy as np
import pytest

from lowmach import (
    GasModel,
    ObstacleShape,
    build_mesh,
    cutoff_active_check,
    difference_functional,
    flow_state,
    functional_gradient,
    make_cutoff,
    minimize,
    solve_incompressible,
)
from lowmach.compressible import DifferenceProblem, station_mass_flux
from lowmach.errors import SolverError


@pytest.fixture(scope="module")
def mesh():
    return build_mesh(ObstacleShape("sphere", 1.0), 20.0, 24, 24, grading=1.3)


@pytest.fixture(scope="module")
def psi(mesh):
    return solve_incompressible(mesh, 1.0)


@pytest.fixture(scope="module")
def cut():
    return make_cutoff(GasModel(1.4, 0.1, 1.0), 0.65, 0.45)


def _gas(eps):
    return GasModel(1.4, eps, 1.0)


def test_functional_zero_at_zero(mesh, psi, cut):
    z = np.zeros(mesh.n_nodes)
    assert difference_functional(z, psi, None, _gas(0.1), cut) == 0.0


def test_functional_constant_correction(mesh, psi, cut):
    c = 3.7 * np.ones(mesh.n_nodes)
    val = difference_functional(c, psi, None, _gas(0.1), cut)
    assert abs(val) < 1e-12


def test_functional_gauge_invariance(mesh, psi, cut):
    rng = np.random.default_rng(17)
    x = 0.1 * rng.standard_normal(mesh.n_nodes)
    gas = _gas(0.2)
    v1 = difference_functional(x, psi, None, gas, cut)
    v2 = difference_functional(x + 42.0, psi, None, gas, cut)
    assert v1 == pytest.approx(v2, rel=1e-12)
    g1 = functional_gradient(x, psi, None, gas, cut)
    g2 = functional_gradient(x + 42.0, psi, None, gas, cut)
    assert np.allclose(g1, g2, atol=1e-12 * max(1.0, np.max(np.abs(g1))))


def test_functional_quadrature_refinement(psi, cut):
    # re-evaluate on the same nodes with a higher-order volume rule and a
    # denser parameter integral
    mesh = psi.mesh
    rng = np.random.default_rng(4)
    x = 0.1 * rng.standard_normal(mesh.n_nodes)
    gas = _gas(0.2)
    coarse = DifferenceProblem(psi, None, gas, cut).functional(x)
    mesh6 = build_mesh(mesh.shape, mesh.r_far, mesh.n_r, mesh.n_t,
                       grading=mesh.grading, mode=mesh.mode, quad_order=6)
    psi6 = solve_incompressible(mesh6, 1.0)
    psi6.values[:] = psi.values  # same nodal field, richer quadrature
    fine = DifferenceProblem(psi6, None, gas, cut, t_order=16).functional(x)
    assert coarse == pytest.approx(fine, rel=1e-8)


def test_functional_matches_literal_definition(mesh, psi, cut):
    # the eps-stable expansion equals the literal scaled difference of
    # energy densities, evaluated through the closed-form integral (an
    # independent code path).  Smooth states keep the whole expansion path
    # on the subsonic branch, where the parameter integral is essentially
    # exact; at compressibilities this moderate the literal form still has
    # enough digits left to compare tightly.
    import lowmach.fem as fem
    from lowmach.gas import energy_density

    rng = np.random.default_rng(8)
    r = np.linalg.norm(mesh.nodes, axis=1)
    s = np.log(r) / np.log(mesh.r_far)
    mu = mesh.nodes[:, 0] / r
    x = np.zeros(mesh.n_nodes)
    for i in range(4):
        for j in range(4):
            x += rng.normal(0.0, 0.3) * s**i * mu**j
    for eps in (0.4, 0.2, 0.1):
        gas = _gas(eps)
        prob = DifferenceProblem(psi, None, gas, cut)
        base = prob.base
        g = fem.grad_at_qpts(mesh, x)
        full = base + eps**2 * g
        lam_full = np.sum(full * full, axis=-1)
        lam_base = np.sum(base * base, axis=-1)
        assert np.max(np.sqrt(lam_full)) < cut.q_lower(0.0)
        literal = (energy_density(lam_full, 0.0, gas, cut)
                   - energy_density(lam_base, 0.0, gas, cut)
                   - eps**2 * np.sum(base * g, axis=-1)) / eps**4
        val_literal = float(np.sum(mesh.qweights * literal))
        val_stable = prob.functional(x)
        assert val_stable == pytest.approx(val_literal, rel=1e-8)


def test_hessian_matches_gradient_differences(mesh, psi, cut):
    gas = _gas(0.2)
    prob = DifferenceProblem(psi, None, gas, cut)
    rng = np.random.default_rng(12)
    x = 0.05 * rng.standard_normal(mesh.n_nodes)
    h = prob.hessian(x)
    step = 1e-6
    for _ in range(5):
        v = rng.standard_normal(mesh.n_nodes)
        v /= np.linalg.norm(v)
        fd = (prob.gradient(x + step * v) - prob.gradient(x - step * v)) / (2 * step)
        hv = h @ v
        assert np.linalg.norm(fd - hv) <= 1e-5 * max(1.0, np.linalg.norm(hv))


def test_gradient_matches_finite_differences(mesh, psi, cut):
    rng = np.random.default_rng(23)
    gas = _gas(0.1)
    prob = DifferenceProblem(psi, None, gas, cut)
    x = 0.05 * rng.standard_normal(mesh.n_nodes)
    g = prob.gradient(x)
    h = 1e-5
    for _ in range(20):
        v = rng.standard_normal(mesh.n_nodes)
        v /= np.linalg.norm(v)
        fd = (prob.functional(x + h * v) - prob.functional(x - h * v)) / (2.0 * h)
        assert fd == pytest.approx(float(g @ v), rel=1e-6, abs=1e-10)


def test_gradient_at_zero_low_mach(mesh, psi, cut):
    # the physical first variation (eps^2 times the scaled gradient) vanishes
    # quadratically as eps -> 0, while the scaled gradient itself stays O(1):
    # it converges to the compressibility source driving the correction
    z = np.zeros(mesh.n_nodes)
    g_small = functional_gradient(z, psi, None, _gas(1e-6), cut)
    g_ref = functional_gradient(z, psi, None, _gas(0.3), cut)
    n_small, n_ref = np.linalg.norm(g_small), np.linalg.norm(g_ref)
    assert (1e-6) ** 2 * n_small < 1e-11
    assert 0.1 < n_small < 10.0 and 0.1 < n_ref < 10.0
    assert n_small == pytest.approx(n_ref, rel=0.05)


def test_minimize_tiny_epsilon(mesh, psi, cut):
    gas = _gas(1e-4)
    corr, info = minimize(psi, None, gas, cut)
    assert info.converged
    state = flow_state(corr, psi, gas, None, cut)
    assert state.norms["corr_grad_inf"] < 5.0
    assert state.norms["u_diff_inf"] <= 1e-6


def test_minimize_zero_stream(mesh, cut):
    psi0 = solve_incompressible(mesh, 0.0)
    gas = GasModel(1.4, 0.1, 0.0)
    cut0 = make_cutoff(gas, 0.65, 0.45)
    corr, info = minimize(psi0, None, gas, cut0)
    assert info.converged
    g = corr.grad_at_qpts()
    assert np.max(np.abs(g)) < 1e-10


def test_newton_quadratic_tail(mesh, psi, cut):
    rng = np.random.default_rng(31)
    x0 = 0.3 * rng.standard_normal(mesh.n_nodes)
    _, info = minimize(psi, None, _gas(0.4), cut, initial=x0)
    # keep the cleanly contracting phase (before any rounding floor)
    norms = [info.gradient_norms[0]]
    for n in info.gradient_norms[1:]:
        if n > 0.3 * norms[-1]:
            break
        norms.append(n)
    assert len(norms) >= 4
    r0, r1, r2 = np.log(norms[-3]), np.log(norms[-2]), np.log(norms[-1])
    assert (r2 - r1) <= 1.5 * (r1 - r0)  # log-reductions accelerate


def test_minimizer_unique_across_starts(mesh, psi, cut):
    gas = _gas(0.3)
    rng = np.random.default_rng(7)
    corr_a, _ = minimize(psi, None, gas, cut)
    corr_b, _ = minimize(psi, None, gas, cut,
                         initial=0.5 * rng.standard_normal(mesh.n_nodes))
    scale = max(1.0, np.max(np.abs(corr_a.values)))
    assert np.max(np.abs(corr_a.values - corr_b.values)) <= 1e-8 * scale


def test_minimizer_optimality_and_el_residual(mesh, psi, cut):
    gas = _gas(0.2)
    corr, info = minimize(psi, None, gas, cut)
    val = difference_functional(corr, psi, None, gas, cut)
    assert val <= 1e-12
    g = functional_gradient(corr, psi, None, gas, cut)
    free = np.setdiff1d(np.arange(mesh.n_nodes), mesh.sigma_nodes)
    # weak residual of the truncated potential equation, rescaled
    assert gas.epsilon**2 * np.linalg.norm(g[free]) < 1e-9


def test_convexity_inequality(mesh, psi, cut):
    import lowmach.fem as fem

    gas = _gas(0.3)
    prob = DifferenceProblem(psi, None, gas, cut)
    w = mesh.qweights
    rng = np.random.default_rng(101)
    for _ in range(100):
        a = 0.4 * rng.standard_normal(mesh.n_nodes)
        b = 0.4 * rng.standard_normal(mesh.n_nodes)
        gap = prob.functional(a) + prob.functional(b) \
            - 2.0 * prob.functional((a + b) / 2.0)
        g = fem.grad_at_qpts(mesh, a - b)
        vnorm2 = float(np.sum(w * np.sum(g * g, axis=-1)))
        assert gap >= 0.5 * cut.lam1 * vnorm2 - 1e-10 * max(1.0, abs(gap))


def test_coercivity_inequality(mesh, psi, cut):
    import lowmach.fem as fem

    gas = _gas(0.3)
    prob = DifferenceProblem(psi, None, gas, cut)
    w = mesh.qweights
    base_term = prob.base_departure[..., None] * prob.base
    c_data = float(np.sum(w * np.sum(base_term**2, axis=-1))) / cut.lam1
    rng = np.random.default_rng(55)
    for _ in range(100):
        x = rng.uniform(0.1, 2.0) * rng.standard_normal(mesh.n_nodes)
        val = prob.functional(x)
        g = fem.grad_at_qpts(mesh, x)
        vnorm2 = float(np.sum(w * np.sum(g * g, axis=-1)))
        assert val >= 0.5 * cut.lam1 * vnorm2 - c_data


def test_flow_state_invariants(mesh, psi, cut):
    for eps in (0.3, 0.1, 0.03):
        gas = _gas(eps)
        corr, _ = minimize(psi, None, gas, cut)
        state = flow_state(corr, psi, gas, None, cut)
        assert not state.truncated_regime
        assert state.cutoff_margin > 0.0
        assert np.max(state.mach) < 1.0
        # departure bounded uniformly: |rho - 1| = O(eps^2)
        assert state.norms["rho_diff_inf"] / eps**2 < 2.0
        # Mach closure identity at rho ~ 1
        m_expect = eps * state.u.speed().max() / np.sqrt(1.4)
        assert state.norms["mach_max"] == pytest.approx(m_expect, rel=0.05)


def test_cutoff_margin_shrinks_with_eps(mesh, psi, cut):
    margins = []
    for eps in (0.05, 0.2, 0.4):
        gas = _gas(eps)
        corr, _ = minimize(psi, None, gas, cut)
        state = flow_state(corr, psi, gas, None, cut)
        removed, margin = cutoff_active_check(state, cut)
        assert removed
        margins.append(margin)
    assert margins[0] > margins[1] > margins[2]


def test_forced_saturation_not_removed(mesh, psi):
    # artificially large eps with a small Mach threshold: the whole flow sits
    # in the saturated branch and the cut-off cannot be removed
    gas = _gas(5.0)
    wide = make_cutoff(GasModel(1.4, 0.9, 1.0), 0.1, 0.9)
    corr, info = minimize(psi, None, gas, wide)
    state = flow_state(corr, psi, gas, None, wide)
    removed, margin = cutoff_active_check(state, wide)
    assert not removed
    assert margin < 0.0
    assert state.truncated_regime


def test_mass_flux_station_independent(mesh, psi, cut):
    gas = _gas(0.2)
    corr, _ = minimize(psi, None, gas, cut)
    state = flow_state(corr, psi, gas, None, cut)
    fluxes = [station_mass_flux(state, s) for s in (4, 10, 18)]
    scale = 4.0 * np.pi * 1.0  # rho q_inf a^2 reference flux scale
    for fx in fluxes:
        assert abs(fx - fluxes[0]) <= 1e-6 * scale


def test_dp_gap_scales_quadratically(mesh, psi, cut):
    gaps = {}
    for eps in (0.2, 0.1):
        gas = _gas(eps)
        corr, _ = minimize(psi, None, gas, cut)
        state = flow_state(corr, psi, gas, None, cut)
        gaps[eps] = state.dp_gap
    for name in gaps[0.2]:
        assert gaps[0.2][name] != 0.0
        ratio = abs(gaps[0.2][name]) / abs(gaps[0.1][name])
        assert ratio == pytest.approx(4.0, rel=0.25)


def test_bernoulli_residual_pointwise(mesh, psi, cut):
    from lowmach.gas import enthalpy

    gas = _gas(0.25)
    corr, _ = minimize(psi, None, gas, cut)
    state = flow_state(corr, psi, gas, None, cut)
    lam = state.u.speed() ** 2
    res = gas.epsilon**2 * (lam - gas.q_inf**2) / 2.0 + enthalpy(state.rho, gas)
    assert np.max(np.abs(res)) < 1e-10
