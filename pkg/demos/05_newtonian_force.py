#!/usr/bin/env python3
"""Conservative forces: shell theorem, admissibility, and slower decay.

Builds the force potential of a finite-mass ball inside the obstacle by
direct summation, checks it against the point-mass closed form, validates
the integrability condition for two exponent choices, and shows how the
force drags the far-field decay of the compressible correction below the
force-free rate.
"""

import numpy as np

from lowmach import (
    ForceSpec,
    GasModel,
    ObstacleShape,
    build_force,
    build_mesh,
    decay_fit,
    flow_state,
    make_cutoff,
    minimize,
    solve_incompressible,
    validate_force,
)
from lowmach.limits import beta_prime

mesh = build_mesh(ObstacleShape("sphere", 1.0), 20.0, 48, 48, grading=1.15)
spec = ForceSpec("newtonian", mass=0.5, source_radius=0.5, beta=1.2, q=4.0)
force = build_force(spec, mesh)

print("=== shell theorem ===")
pts = mesh.qpts.reshape(-1, 2)
r = np.linalg.norm(pts, axis=1)
rel = np.abs(force.phi_qpts.reshape(-1) - spec.mass / r) / (spec.mass / r)
print(f"uniform ball of mass {spec.mass} inside the obstacle: "
      f"max relative deviation from mass/|x| is {rel.max():.2e}")
print(f"force bound phi_star = {force.phi_star:.4f}\n")

print("=== admissibility of (beta, q) ===")
for beta in (1.2, 2.0):
    rep = validate_force(force, beta=beta, q=4.0, mesh=mesh)
    tail = 4.0 * beta - 4.0 * rep.grad_tail_exponent + 2.0
    print(f"beta={beta}: tail integrand ~ r^{tail:+.2f} -> "
          f"{'admissible' if rep.admissible else 'inadmissible'}; "
          f"decay exponent bound beta' = {rep.beta_prime:.2f}")
print()

print("=== compressible solve with the force ===")
gas = GasModel(gamma=1.4, epsilon=0.1, q_inf=1.0)
samples = np.concatenate([force.phi_nodes, force.phi_qpts.ravel()])
cut = make_cutoff(gas, mach_threshold=0.45, eps_ref=0.3, phi_samples=samples)
psi = solve_incompressible(mesh, 1.0)
corr, info = minimize(psi, force, gas, cut)
state = flow_state(corr, psi, gas, force, cut)
print(f"converged in {info.iterations} Newton iterations, "
      f"cut-off margin {state.cutoff_margin:.4f}")

corr0, _ = minimize(psi, None, gas, make_cutoff(gas, 0.65, 0.45))
d_forced = decay_fit(corr, np.pi / 4.0)
d_free = decay_fit(corr0, np.pi / 4.0)
print(f"\ncorrection decay exponent, force-free:  {d_free.exponent:.3f} "
      f"(bound n/2 = 1.5)")
print(f"correction decay exponent, with force:  {d_forced.exponent:.3f} "
      f"(bound beta' = {beta_prime(1.2, 4.0, 3):.2f})")
print("the force's slow tail dominates the far field of the correction, "
      "yet vanishes from the limit itself")
