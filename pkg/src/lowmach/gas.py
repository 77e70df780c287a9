"""Algebraic closure of the isentropic gamma-law gas.

Everything here is dimensionless.  The pressure law is p(rho) = rho**gamma
scaled by a compressibility parameter ``epsilon``; the reduced enthalpy h
satisfies h'(rho) = p'(rho)/rho and h(1) = 0, so the Bernoulli relation along
the flow reads

    epsilon**2 * (|u|**2 - q_inf**2) / 2 + h(rho) = epsilon**2 * phi_force,

which closes the density as a decreasing function of speed (and an increasing
function of the force potential).  For the gamma-law gas every inverse that
appears below has a closed form; the expm1/log1p formulations keep the
small-epsilon limits exact, which matters because several downstream
quantities are O(epsilon**2) differences of O(1) numbers.  The test suite
cross-checks all of them against independent bisection and quadrature
oracles.

The second half of the module implements the subsonic cut-off: a C^1
monotone truncation of the speed-squared variable that freezes the closure
beyond a configurable Mach threshold, making the resulting coefficient
matrix uniformly elliptic no matter how large the argument gets.

Every operation is a pure function of its arguments and the two frozen
parameter objects (GasModel, CutoffSpec); all of it is safe to call
concurrently from any number of threads.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, DomainError

__all__ = [
    "GasModel",
    "ForceValue",
    "CutoffSpec",
    "enthalpy",
    "enthalpy_inv",
    "enthalpy_inv_deriv",
    "pressure",
    "pressure_slope",
    "density_from_speed",
    "mach",
    "critical_density",
    "critical_speed",
    "speed_at_mach",
    "make_cutoff",
    "truncated_speed_sq",
    "truncated_density",
    "density_departure",
    "density_bounds",
    "energy_density",
    "elliptic_coeffs",
]

# Gauss-Legendre nodes/weights on [0, 1], used for the parameter integrals.
_T8, _W8 = np.polynomial.legendre.leggauss(8)
_T8 = 0.5 * (_T8 + 1.0)
_W8 = 0.5 * _W8
_T16, _W16 = np.polynomial.legendre.leggauss(16)
_T16 = 0.5 * (_T16 + 1.0)
_W16 = 0.5 * _W16


@dataclass(frozen=True)
class GasModel:
    """Gamma-law gas with compressibility parameter and far-field speed.

    Attributes
    ----------
    gamma : float
        Adiabatic exponent, >= 1.  gamma = 1 selects the logarithmic
        (isothermal) enthalpy branch explicitly.
    epsilon : float
        Compressibility parameter, > 0.  epsilon -> 0 is the low Mach limit.
    q_inf : float
        Far-field speed, > 0.
    """

    gamma: float
    epsilon: float
    q_inf: float

    def __post_init__(self):
        if not self.gamma >= 1.0:
            raise ConfigError(f"gamma must be >= 1, got {self.gamma}")
        if not self.epsilon > 0.0:
            raise ConfigError(f"epsilon must be > 0, got {self.epsilon}")
        # q_inf = 0 is admitted for the trivial-data cases (zero flow)
        if not self.q_inf >= 0.0:
            raise ConfigError(f"q_inf must be >= 0, got {self.q_inf}")
        # Admissibility of the pressure law: p' > 0 and 2p' + rho p'' > 0.
        # True for any gamma-law gas; checked numerically on a grid so a
        # broken edit cannot slip through silently.
        rho = np.geomspace(1e-3, 1e3, 61)
        ps = pressure_slope(rho, self)
        curv = 2.0 * ps + rho * self.gamma * (self.gamma - 1.0) * rho ** (self.gamma - 2.0)
        if not (np.all(ps > 0.0) and np.all(curv > 0.0)):
            raise ConfigError("pressure law violates the admissibility conditions")

    def with_epsilon(self, epsilon):
        return replace(self, epsilon=float(epsilon))


@dataclass(frozen=True)
class ForceValue:
    """Conservative-force potential value and (optionally) its gradient."""

    potential: float
    gradient: tuple = None

    def bounded_by(self, phi_star):
        return bool(np.all(np.abs(self.potential) <= phi_star))


def _phi_of(f):
    """Force potential as a float/array from a ForceValue, array or None."""
    if f is None:
        return 0.0
    if isinstance(f, ForceValue):
        return np.asarray(f.potential, dtype=float)
    return np.asarray(f, dtype=float)


def _grad_of(f, ndim):
    if isinstance(f, ForceValue) and f.gradient is not None:
        return np.asarray(f.gradient, dtype=float)
    return np.zeros(ndim)


def _as_result(x):
    x = np.asarray(x)
    return float(x) if x.ndim == 0 else x


def pressure(rho, gas):
    """Reduced pressure p(rho) = rho**gamma."""
    return np.asarray(rho, dtype=float) ** gas.gamma


def pressure_slope(rho, gas):
    """p'(rho) = gamma * rho**(gamma-1); the scaled squared sound speed."""
    g = gas.gamma
    return g * np.asarray(rho, dtype=float) ** (g - 1.0)


def enthalpy(rho, gas):
    """Reduced enthalpy h(rho) with h'(rho) = p'(rho)/rho and h(1) = 0.

    Closed form: gamma/(gamma-1) * (rho**(gamma-1) - 1) for gamma > 1 and
    log(rho) for gamma = 1; strictly increasing on rho > 0.
    """
    r = np.asarray(rho, dtype=float)
    if np.any(r <= 0.0):
        raise DomainError("enthalpy requires rho > 0")
    g = gas.gamma
    if g == 1.0:
        return _as_result(np.log(r))
    return _as_result(g / (g - 1.0) * np.expm1((g - 1.0) * np.log(r)))


def _enthalpy_range_floor(gas):
    """Infimum of the enthalpy range (the vacuum level)."""
    g = gas.gamma
    return -math.inf if g == 1.0 else -g / (g - 1.0)


def enthalpy_inv(y, gas):
    """Inverse of the reduced enthalpy.

    For gamma > 1 the range of h is (-gamma/(gamma-1), inf); values at or
    below the infimum raise DomainError (vacuum).
    """
    yv = np.asarray(y, dtype=float)
    g = gas.gamma
    if g == 1.0:
        return _as_result(np.exp(yv))
    u = 1.0 + (g - 1.0) * yv / g
    if np.any(u <= 0.0):
        raise DomainError(
            f"enthalpy value below the vacuum level {-g / (g - 1.0):.6g}"
        )
    return _as_result(np.exp(np.log1p((g - 1.0) * yv / g) / (g - 1.0)))


def enthalpy_inv_deriv(y, gas):
    """Derivative of the enthalpy inverse, (h^-1)'(y) = rho / p'(rho)."""
    yv = np.asarray(y, dtype=float)
    g = gas.gamma
    if g == 1.0:
        return _as_result(np.exp(yv))
    u = 1.0 + (g - 1.0) * yv / g
    if np.any(u <= 0.0):
        raise DomainError("enthalpy value below the vacuum level")
    return _as_result(np.exp((2.0 - g) / (g - 1.0) * np.log(u)) / g)


def density_from_speed(q2, f, gas):
    """Density on the subsonic Bernoulli branch as a function of speed**2.

    Returns h^-1( eps^2 (q_inf^2 - q2)/2 + eps^2 phi ).  Equals 1 at the
    far-field anchor (q2 = q_inf**2, phi = 0); strictly decreasing in q2 and
    strictly increasing in phi.  A Bernoulli level below the vacuum floor
    raises DomainError naming the offending speed.
    """
    q2v = np.asarray(q2, dtype=float)
    phi = _phi_of(f)
    lvl = gas.epsilon**2 * ((gas.q_inf**2 - q2v) / 2.0 + phi)
    try:
        return enthalpy_inv(lvl, gas)
    except DomainError:
        bad = q2v if q2v.ndim == 0 else q2v[lvl <= _enthalpy_range_floor(gas)]
        raise DomainError(
            f"Bernoulli level out of range (vacuum) at speed^2 = {np.max(bad):.6g}"
        ) from None


def mach(q, rho, gas):
    """Mach number eps * q / sqrt(p'(rho)); zero iff the speed is zero."""
    qv = np.asarray(q, dtype=float)
    rv = np.asarray(rho, dtype=float)
    if np.any(qv < 0.0):
        raise DomainError("mach requires q >= 0")
    if np.any(rv <= 0.0):
        raise DomainError("mach requires rho > 0")
    return _as_result(gas.epsilon * qv / np.sqrt(pressure_slope(rv, gas)))


def _sonic_head_inv(y, gas):
    """Inverse of H(rho) = p'(rho)/2 + h(rho) (closed form for gamma-law).

    For gamma > 1, H is linear in t = rho**(gamma-1); for gamma = 1,
    H(rho) = 1/2 + log(rho).
    """
    yv = np.asarray(y, dtype=float)
    g = gas.gamma
    if g == 1.0:
        return _as_result(np.exp(yv - 0.5))
    t = (yv + g / (g - 1.0)) * 2.0 * (g - 1.0) / (g * (g + 1.0))
    if np.any(t <= 0.0):
        raise ConfigError(
            "sonic head level out of range: epsilon too large for this phi"
        )
    return _as_result(t ** (1.0 / (g - 1.0)))


def critical_density(f, gas):
    """Sonic (M = 1) density for the Bernoulli level set by (epsilon, phi).

    Converges to the closed-form stagnation-free limit H^-1(0) as
    epsilon -> 0.
    """
    phi = _phi_of(f)
    lvl = gas.epsilon**2 * (gas.q_inf**2 / 2.0 + phi)
    return _sonic_head_inv(lvl, gas)


def critical_speed(f, gas):
    """Sonic speed sqrt(p'(rho_cr)) / epsilon.

    Diverges as epsilon -> 0 while epsilon * critical_speed stays bounded.
    """
    rho_cr = critical_density(f, gas)
    return _as_result(np.sqrt(pressure_slope(rho_cr, gas)) / gas.epsilon)


def speed_at_mach(mach_bound, f, gas, epsilon=None):
    """The unique speed at which the Mach number equals ``mach_bound``.

    Closed form for the gamma-law gas:

        q^2 = m^2 (gamma/eps^2 + (gamma-1)(q_inf^2/2 + phi))
              / (1 + m^2 (gamma-1)/2).

    Monotone increasing in the bound; approaches the critical speed as the
    bound tends to 1.  ``epsilon`` overrides gas.epsilon (used by the
    cut-off threshold grids).
    """
    m = np.asarray(mach_bound, dtype=float)
    if np.any(m <= 0.0) or np.any(m > 1.0):
        raise DomainError("mach bound must lie in (0, 1]")
    eps = gas.epsilon if epsilon is None else np.asarray(epsilon, dtype=float)
    g = gas.gamma
    phi = _phi_of(f)
    num = g / eps**2 + (g - 1.0) * (gas.q_inf**2 / 2.0 + phi)
    if np.any(num <= 0.0):
        raise ConfigError("no subsonic root: phi too negative for this epsilon")
    return _as_result(np.sqrt(m**2 * num / (1.0 + m**2 * (g - 1.0) / 2.0)))


# ----------------------------------------------------------------------
# Subsonic cut-off
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class CutoffSpec:
    """Truncation of the speed-squared variable above a Mach threshold.

    The truncated variable equals q^2 - 2*phi below the onset speed
    (``q_lower``), a configured constant (``saturation``) above the cap
    speed (``q_upper``), and a monotone C^1 cubic Hermite bridge in between,
    matching value and slope at both ends.  The onset/cap speeds are the
    infima over epsilon in (0, eps_ref] of the speeds at Mach threshold and
    (threshold+1)/2 respectively, evaluated on a geometric epsilon grid with
    monotonicity asserted.

    ``lam1``/``lam2`` bound the eigenvalues of the truncated coefficient
    matrix uniformly over all admissible states and all epsilon <= eps_ref;
    they are found by a dense parameter scan at construction and depend only
    on (threshold, eps_ref, gamma, q_inf, phi_star).
    """

    mach_threshold: float
    eps_ref: float
    gamma: float
    q_inf: float
    phi_star: float
    saturation: float
    eps_grid: tuple
    lam1: float = float("nan")
    lam2: float = float("nan")
    drift_bound: float = float("nan")
    # cached force-free thresholds; with no force every evaluation uses them
    lam_lo0: float = float("nan")
    lam_hi0: float = float("nan")

    def _gas(self, epsilon=None):
        return GasModel(self.gamma, epsilon or self.eps_ref, self.q_inf)

    def _floor_speed(self, bound, phi):
        """min over the epsilon grid of the speed at the given Mach bound."""
        phi = np.asarray(phi, dtype=float)
        grid = np.asarray(self.eps_grid)
        qs = speed_at_mach(bound, phi[..., None], self._gas(), epsilon=grid)
        qs = np.asarray(qs)
        return _as_result(qs.min(axis=-1))

    def q_lower(self, phi=0.0):
        """Speed where the cut-off blending begins."""
        if self.phi_star == 0.0 and not math.isnan(self.lam_lo0):
            return _as_result(np.broadcast_to(math.sqrt(self.lam_lo0), np.shape(phi)))
        return self._floor_speed(self.mach_threshold, phi)

    def q_upper(self, phi=0.0):
        """Speed beyond which the truncated variable saturates."""
        if self.phi_star == 0.0 and not math.isnan(self.lam_hi0):
            return _as_result(np.broadcast_to(math.sqrt(self.lam_hi0), np.shape(phi)))
        return self._floor_speed((self.mach_threshold + 1.0) / 2.0, phi)

    def _lambda_lo(self, phi):
        if self.phi_star == 0.0 and not math.isnan(self.lam_lo0):
            return np.broadcast_to(self.lam_lo0, np.shape(phi))
        return np.asarray(self.q_lower(phi)) ** 2

    def _lambda_hi(self, phi):
        if self.phi_star == 0.0 and not math.isnan(self.lam_hi0):
            return np.broadcast_to(self.lam_hi0, np.shape(phi))
        return np.asarray(self.q_upper(phi)) ** 2

    def _dlambda_dphi(self, bound):
        # The grid minimum sits at eps_ref (asserted at construction), so the
        # phi-derivative of the squared threshold is the closed-form slope
        # there.
        g = self.gamma
        return bound**2 * (g - 1.0) / (1.0 + bound**2 * (g - 1.0) / 2.0)


def _assert_monotone_thresholds(spec, phis):
    grid = np.asarray(spec.eps_grid)
    for bound in (spec.mach_threshold, (spec.mach_threshold + 1.0) / 2.0):
        for phi in phis:
            qs = speed_at_mach(bound, float(phi), spec._gas(), epsilon=grid)
            dq = np.diff(np.asarray(qs))
            if np.any(dq > 1e-12):
                raise ConfigError("threshold speeds not monotone on the eps grid")


def make_cutoff(gas, mach_threshold=0.65, eps_ref=0.45, phi_samples=None,
                phi_star=None):
    """Build a CutoffSpec for the given gas and truncation parameters.

    phi_samples : array or None
        Force potential sampled where the closure will be evaluated (mesh
        nodes and quadrature points).  The saturation constant is the sup
        over these samples of q_upper(phi)^2 - 2*phi; with no force it is
        simply q_upper(0)^2.
    phi_star : float or None
        Global force bound.  Defaults to max |phi_samples| (0 without
        force).
    """
    if not 0.0 < mach_threshold < 1.0:
        raise ConfigError(f"mach_threshold must be in (0,1), got {mach_threshold}")
    if not 0.0 < eps_ref < 1.0:
        raise ConfigError(f"eps_ref must be in (0,1), got {eps_ref}")

    # 64-point geometric grid on (0, eps_ref]; the threshold speeds decrease
    # along it, so the grid minimum is the last entry.
    grid = tuple(eps_ref * (1e-3) ** (1.0 - k / 63.0) for k in range(64))

    if phi_samples is None:
        samples = np.zeros(1)
    else:
        samples = np.asarray(phi_samples, dtype=float).ravel()
    star = float(np.max(np.abs(samples))) if phi_star is None else float(phi_star)

    spec = CutoffSpec(
        mach_threshold=float(mach_threshold),
        eps_ref=float(eps_ref),
        gamma=gas.gamma,
        q_inf=gas.q_inf,
        phi_star=star,
        saturation=float("nan"),
        eps_grid=grid,
    )
    _assert_monotone_thresholds(spec, (-star, 0.0, star))
    spec = replace(
        spec,
        lam_lo0=float(spec.q_lower(0.0)) ** 2,
        lam_hi0=float(spec.q_upper(0.0)) ** 2,
    )

    sat = float(np.max(spec._lambda_hi(samples) - 2.0 * samples))
    spec = replace(spec, saturation=sat)

    lam1, lam2, drift = _ellipticity_scan(spec)
    if not lam1 > 0.0:
        raise ConfigError(
            "cut-off parameters do not yield a uniformly elliptic closure "
            f"(lam1 = {lam1:.3g}); lower the Mach threshold or eps_ref"
        )
    return replace(spec, lam1=lam1, lam2=lam2, drift_bound=drift)


def _ellipticity_scan(spec):
    """Dense scan of the coefficient-matrix eigenvalue bounds.

    Eigenvalues of the truncated matrix are rho_hat (n-1 fold) and
    rho_hat * (1 - w) with w = eps^2 * qhat_L * Lambda / p'(rho_hat).  The
    scan covers Lambda up to past saturation, phi in [-phi_star, phi_star]
    and the epsilon grid; a 2% guard band absorbs pockets between scan
    points.
    """
    star = spec.phi_star
    phis = np.linspace(-star, star, 33) if star > 0 else np.zeros(1)
    lam_hi_max = float(np.max(spec._lambda_hi(phis)))
    lams = np.linspace(0.0, 1.25 * lam_hi_max, 801)

    lo, hi, drift = math.inf, -math.inf, 0.0
    eps_scan = np.geomspace(1e-3 * spec.eps_ref, spec.eps_ref, 25)
    for phi in phis:
        qhat, qhat_L, qhat_phi = truncated_speed_sq(lams, float(phi), spec)
        for eps in eps_scan:
            gas = GasModel(spec.gamma, float(eps), spec.q_inf)
            rho = enthalpy_inv(eps**2 * (spec.q_inf**2 - qhat) / 2.0, gas)
            ps = pressure_slope(rho, gas)
            w = eps**2 * qhat_L * lams / ps
            ev_min = rho * np.minimum(1.0, 1.0 - w)
            ev_max = rho * np.maximum(1.0, 1.0 - w)
            lo = min(lo, float(ev_min.min()))
            hi = max(hi, float(ev_max.max()))
            drift = max(drift, float(np.max(eps**2 * rho * np.abs(qhat_phi) / ps)))
    return 0.98 * lo, 1.02 * hi, 1.02 * drift


def truncated_speed_sq(q2, f, spec):
    """Truncated speed-squared variable and its two partial derivatives.

    Returns (qhat, d qhat / d Lambda, d qhat / d phi) where Lambda = q2.
    Identity branch: (q2 - 2 phi, 1, -2).  Saturated branch: (saturation,
    0, 0).  The bridge is the monotone cubic Hermite between them; its
    Lambda-slope stays in [0, ~3/2 * secant slope] (a C^1 bridge matching
    value and slope at both ends necessarily exceeds slope 1 somewhere, by
    the mean value theorem).
    """
    lam = np.asarray(q2, dtype=float)
    phi = np.asarray(_phi_of(f), dtype=float)
    lam, phi = np.broadcast_arrays(lam, phi)

    lam_lo = np.asarray(spec._lambda_lo(phi))
    lam_hi = np.asarray(spec._lambda_hi(phi))
    v0 = lam_lo - 2.0 * phi
    sat = spec.saturation
    h = lam_hi - lam_lo

    s = np.clip((lam - lam_lo) / h, 0.0, 1.0)
    h00 = (2.0 * s - 3.0) * s * s + 1.0
    h10 = ((s - 2.0) * s + 1.0) * s
    h01 = (3.0 - 2.0 * s) * s * s
    d00 = 6.0 * s * (s - 1.0)
    d10 = (3.0 * s - 4.0) * s + 1.0
    d01 = -d00

    bridge_val = v0 * h00 + h * h10 + sat * h01
    bridge_dl = (v0 * d00 + h * d10 + sat * d01) / h

    dlo = spec._dlambda_dphi(spec.mach_threshold)
    dhi = spec._dlambda_dphi((spec.mach_threshold + 1.0) / 2.0)
    dv0 = dlo - 2.0
    dh = dhi - dlo
    ds = -(dlo + s * dh) / h
    bridge_dphi = dv0 * h00 + dh * h10 + ds * h * bridge_dl

    below = lam <= lam_lo
    above = lam >= lam_hi
    qhat = np.where(below, lam - 2.0 * phi, np.where(above, sat, bridge_val))
    dl = np.where(below, 1.0, np.where(above, 0.0, bridge_dl))
    dphi = np.where(below, -2.0, np.where(above, 0.0, bridge_dphi))
    return _as_result(qhat), _as_result(dl), _as_result(dphi)


def _truncated_level(q2, f, gas, spec):
    qhat, _, _ = truncated_speed_sq(q2, f, spec)
    return gas.epsilon**2 * (gas.q_inf**2 - np.asarray(qhat)) / 2.0


def truncated_density(q2, f, gas, spec):
    """Density through the truncated Bernoulli relation.

    Coincides with density_from_speed on the identity branch and is constant
    past saturation.  Defined for every q2 >= 0 as long as the saturated
    Bernoulli level stays above the vacuum floor, which holds for all
    epsilon <= eps_ref; beyond that the configuration is rejected.
    """
    lvl = _truncated_level(q2, f, gas, spec)
    try:
        return enthalpy_inv(lvl, gas)
    except DomainError:
        raise ConfigError(
            "epsilon too large: the saturated cut-off branch leaves the "
            "enthalpy range ({:.4g} <= {:.4g})".format(
                float(np.min(lvl)), _enthalpy_range_floor(gas)
            )
        ) from None


def density_departure(q2, f, gas, spec):
    """(truncated_density - 1) / epsilon^2, evaluated without cancellation.

    Uses the parameter-integral form

        (rho_hat - 1)/eps^2 = A * int_0^1 (h^-1)'(t eps^2 A) dt,
        A = (q_inf^2 - qhat)/2,

    with an 8-point Gauss rule in t, so the value stays accurate down to
    epsilon ~ 1e-8.  Converges to (q_inf^2 - q2 + 2 phi) / (2 gamma) on the
    identity branch as epsilon -> 0.
    """
    qhat, _, _ = truncated_speed_sq(q2, f, spec)
    amp = np.asarray((gas.q_inf**2 - np.asarray(qhat)) / 2.0)
    y = gas.epsilon**2 * amp[..., None] * _T8
    try:
        kern = enthalpy_inv_deriv(y, gas)
    except DomainError:
        raise ConfigError(
            "epsilon too large: the truncated Bernoulli level leaves the "
            "enthalpy range"
        ) from None
    return _as_result(amp * (np.asarray(kern) @ _W8))


def energy_density(lam, f, gas, spec):
    """Integral energy density G(Lambda, phi) = 1/2 int_0^Lambda rho_hat.

    Closed form on the identity branch (the antiderivative of the density
    along the Bernoulli branch is the pressure), 16-point Gauss on the
    bridge, and linear in Lambda past saturation.  G(0) = 0 and
    dG/dLambda = rho_hat / 2.
    """
    lam = np.asarray(lam, dtype=float)
    phi = np.asarray(_phi_of(f), dtype=float)
    lam, phi = np.broadcast_arrays(lam, phi)
    if np.any(lam < 0.0):
        raise DomainError("energy_density requires Lambda >= 0")

    lam_lo = np.asarray(spec._lambda_lo(phi))
    lam_hi = np.asarray(spec._lambda_hi(phi))
    eps2 = gas.epsilon**2
    g = gas.gamma

    # Identity segment [0, min(lam, lam_lo)]: G = (p(rho(0)) - p(rho(L)))/eps^2,
    # written in expm1/log1p form so the eps -> 0 limit (= L/2) is exact.
    l1 = np.minimum(lam, lam_lo)
    y1 = eps2 * ((gas.q_inf**2 - l1) / 2.0 + phi)
    if g == 1.0:
        dlog = eps2 * l1 / 2.0
        ident = np.exp(y1) * np.expm1(dlog) / eps2
    else:
        u1 = 1.0 + (g - 1.0) * y1 / g
        if np.any(u1 <= 0.0):
            raise ConfigError("energy_density: Bernoulli level out of range")
        dlog = np.log1p((g - 1.0) * eps2 * l1 / (2.0 * g * u1)) / (g - 1.0)
        ident = np.exp(g / (g - 1.0) * np.log1p((g - 1.0) * y1 / g)) \
            * np.expm1(g * dlog) / eps2

    out = ident

    # Bridge segment [lam_lo, min(lam, lam_hi)], 16-point Gauss.
    on_bridge = lam > lam_lo
    if np.any(on_bridge):
        b_hi = np.minimum(lam, lam_hi)
        seg = np.where(on_bridge, b_hi - lam_lo, 0.0)
        nodes = lam_lo[..., None] + seg[..., None] * _T16
        rho_b = truncated_density(nodes, phi[..., None], gas, spec)
        out = out + 0.5 * seg * (np.asarray(rho_b) @ _W16)

    # Saturated tail.
    past = lam > lam_hi
    if np.any(past):
        rho_sat = truncated_density(lam_hi, phi, gas, spec)
        out = out + np.where(past, 0.5 * np.asarray(rho_sat) * (lam - lam_hi), 0.0)

    return _as_result(out)


def density_bounds(gas, spec):
    """Two-sided bound on the truncated density, uniform for eps <= eps_ref.

    The lower bound is the sonic density at the lowest admissible Bernoulli
    level; the upper bound is the stagnation density at the highest.
    """
    low = _sonic_head_inv(-spec.phi_star, gas)
    high = enthalpy_inv(gas.q_inf**2 / 2.0 + spec.phi_star, gas)
    return float(low), float(high)


def elliptic_coeffs(grad_phi, f, gas, spec):
    """Coefficient matrix, drift vector and eigenvalue bounds of the closure.

    For a velocity v = grad_phi (any spatial dimension, batched in the
    leading axes):

        a_ij = rho_hat (delta_ij - eps^2 qhat_L v_i v_j / p'(rho_hat))
        b_i  = eps^2 rho_hat qhat_phi (grad force)_i / p'(rho_hat)

    ``a`` is symmetric with eigenvalues in [lam1, lam2] for all states and
    every epsilon <= eps_ref.
    """
    v = np.asarray(grad_phi, dtype=float)
    d = v.shape[-1]
    lam = np.sum(v * v, axis=-1)
    qhat, qhat_L, qhat_phi = truncated_speed_sq(lam, f, spec)
    rho = np.asarray(truncated_density(lam, f, gas, spec))
    ps = np.asarray(pressure_slope(rho, gas))

    eye = np.eye(d)
    outer = v[..., :, None] * v[..., None, :]
    scale = gas.epsilon**2 * np.asarray(qhat_L) / ps
    a = rho[..., None, None] * (eye - scale[..., None, None] * outer)

    gf = _grad_of(f, d)
    b = (gas.epsilon**2 * rho * np.asarray(qhat_phi) / ps)[..., None] * gf
    return a, b, (spec.lam1, spec.lam2)
