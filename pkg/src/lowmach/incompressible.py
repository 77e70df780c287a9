"""Incompressible reference flow: the exterior Neumann problem.

The perturbation potential (total potential minus the uniform stream
q_inf * x1) satisfies a Laplace equation outside the obstacle with a Neumann
condition on the obstacle that cancels the normal component of the stream.
On the truncated far-field boundary the perturbation is closed either with
a homogeneous Dirichlet condition (default; justified by its fast decay) or
a homogeneous Neumann condition with one pinned node, for sensitivity
studies.

The same bilinear space is used by the compressible module, so the two
potentials subtract cleanly degree of freedom by degree of freedom.
"""

from dataclasses import dataclass, field

import numpy as np

from . import fem
from .errors import ConfigError, DomainError

__all__ = [
    "PotentialField",
    "VelocityField",
    "solve_incompressible",
    "velocity",
    "velocity_at_points",
    "surface_speeds",
    "weak_slip_residual",
    "incompressible_pressure_grad",
    "analytic_sphere_reference",
    "analytic_disk_reference",
]


@dataclass
class PotentialField:
    """Nodal scalar potential on the shell mesh."""

    mesh: object
    values: np.ndarray
    name: str = "potential"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.mesh.n_nodes,):
            raise ConfigError("potential values must be nodal")
        if not np.all(np.isfinite(self.values)):
            raise ConfigError("potential contains non-finite values")

    def grad_at_qpts(self):
        return fem.grad_at_qpts(self.mesh, self.values)

    def at_points(self, points):
        return self.mesh.evaluate(self.values, points)

    def grad_at_points(self, points):
        return self.mesh.evaluate_gradient(self.values, points)


@dataclass
class VelocityField:
    """Velocity vectors at the quadrature points of the mesh."""

    mesh: object
    at_qpts: np.ndarray          # (M, Q, 2)
    name: str = "velocity"

    def speed(self):
        return np.linalg.norm(self.at_qpts, axis=-1)

    def max_speed(self):
        return float(self.speed().max())

    def cell_means(self):
        w = self.mesh.qweights
        return (self.at_qpts * w[..., None]).sum(axis=1) / w.sum(axis=1)[:, None]


def solve_incompressible(mesh, q_inf, tol=1e-10, far_field="dirichlet",
                         maxiter=None):
    """Solve for the incompressible perturbation potential.

    Weak form: find the nodal field with

        int grad(psi) . grad(eta) dV = -q_inf * oint_Gamma n_1 eta dS

    for all test functions, with the far-field closure above.  The linear
    system is solved by Jacobi-CG to a relative residual of ``tol``; failure
    raises SolverError carrying the residual history.
    """
    if far_field not in ("dirichlet", "neumann"):
        raise ConfigError(f"unknown far-field closure {far_field!r}")
    a = fem.assemble_matrix(mesh, np.ones_like(mesh.qweights))
    b = -q_inf * fem.boundary_component_load(mesh, "gamma", component=0)
    if far_field == "dirichlet":
        fixed = mesh.sigma_nodes
    else:
        # pure Neumann: solution only defined up to a constant; pin one node
        fixed = mesh.sigma_nodes[:1]
    values, history = fem.apply_dirichlet_solve(a, b, fixed, 0.0, tol=tol,
                                                maxiter=maxiter)
    meta = {
        "q_inf": float(q_inf),
        "far_field": far_field,
        "residual": history[-1],
        "iterations": len(history) - 1,
        "kind": "incompressible_perturbation",
    }
    return PotentialField(mesh, values, name="incompressible_perturbation", meta=meta)


def velocity(psi, q_inf):
    """Velocity field of the incompressible flow: grad(psi) + stream."""
    u = psi.grad_at_qpts().copy()
    u[..., 0] += q_inf
    return VelocityField(psi.mesh, u, name="incompressible_velocity")


def velocity_at_points(psi, q_inf, points):
    g = psi.mesh.evaluate_gradient(psi.values, points)
    g = np.atleast_2d(g).copy()
    g[:, 0] += q_inf
    return g if np.asarray(points).ndim > 1 else g[0]


def surface_speeds(psi, q_inf):
    """|u| at the obstacle-facet quadrature points, evaluated cell-side."""
    fs = psi.mesh.facets["gamma"]
    vals = psi.values[psi.mesh.cells[fs.cells]]            # (F, 4)
    g = np.einsum("fc,fqcd->fqd", vals, fs.bgrads)
    g[..., 0] += q_inf
    return np.linalg.norm(g, axis=-1)


def weak_slip_residual(psi, q_inf):
    """Variationally consistent slip flux on the obstacle boundary.

    The discrete normal flux paired with each obstacle-node basis function
    is the residual of that node's Galerkin equation; at the solution it is
    bounded by the linear-solver tolerance.  Returns (per-node flux, total).
    """
    mesh = psi.mesh
    a = fem.assemble_matrix(mesh, np.ones_like(mesh.qweights))
    b = -q_inf * fem.boundary_component_load(mesh, "gamma", component=0)
    res = a @ psi.values - b
    per_node = res[mesh.gamma_nodes]
    return per_node, float(per_node.sum())


def incompressible_pressure_grad(u_bar, force_potential_qpts, mesh):
    """Cell-wise pressure gradient of the incompressible flow.

    The Bernoulli relation defines the pressure up to a constant through
    phi_force - |u|^2 / 2; the gradient of its lumped nodal projection is
    returned at the quadrature points, (M, Q, 2).
    """
    s = np.asarray(force_potential_qpts) - 0.5 * np.sum(u_bar.at_qpts**2, axis=-1)
    nodal = fem.project_to_nodes(mesh, s)
    return fem.grad_at_qpts(mesh, nodal)


def analytic_sphere_reference(a, q_inf, point):
    """Exact potential and velocity for the sphere in a uniform stream.

    Test oracle: potential q_inf cos(theta) (r + a^3/(2 r^2)) and its
    gradient, valid for |point| >= a (three-dimensional points).
    """
    p = np.asarray(point, dtype=float)
    if p.shape[-1] != 3:
        raise DomainError("sphere reference expects 3-d points")
    r = np.linalg.norm(p, axis=-1)
    if np.any(r < a * (1.0 - 1e-12)):
        raise DomainError("point inside the obstacle")
    x1 = p[..., 0]
    phi = q_inf * (x1 + a**3 * x1 / (2.0 * r**3))
    e1 = np.zeros_like(p)
    e1[..., 0] = 1.0
    u = q_inf * (
        (1.0 + a**3 / (2.0 * r**3))[..., None] * e1
        - (3.0 * a**3 * x1 / (2.0 * r**5))[..., None] * p
    )
    return phi, u


def analytic_disk_reference(a, q_inf, point):
    """Exact potential and velocity for the planar disk (two-dimensional)."""
    p = np.asarray(point, dtype=float)
    if p.shape[-1] != 2:
        raise DomainError("disk reference expects 2-d points")
    r = np.linalg.norm(p, axis=-1)
    if np.any(r < a * (1.0 - 1e-12)):
        raise DomainError("point inside the obstacle")
    x1 = p[..., 0]
    phi = q_inf * (x1 + a**2 * x1 / r**2)
    e1 = np.zeros_like(p)
    e1[..., 0] = 1.0
    u = q_inf * (
        (1.0 + a**2 / r**2)[..., None] * e1
        - (2.0 * a**2 * x1 / r**4)[..., None] * p
    )
    return phi, u
