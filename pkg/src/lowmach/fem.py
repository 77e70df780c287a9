"""Bilinear finite-element plumbing on the structured shell mesh.

Assembly is vectorized over all cells at once and reduced through
scipy.sparse's duplicate summation, which sorts indices before adding, so
repeated runs produce bitwise identical matrices.  The linear solver is a
hand-rolled Jacobi-preconditioned conjugate gradient: deterministic, with a
full residual history for error reports.
"""

import numpy as np
import scipy.sparse as sp

from .errors import SolverError

__all__ = [
    "grad_at_qpts",
    "value_at_qpts",
    "assemble_matrix",
    "assemble_vector_load",
    "boundary_component_load",
    "project_to_nodes",
    "pcg",
    "apply_dirichlet_solve",
]


def grad_at_qpts(mesh, nodal):
    """Cell-wise gradient of a nodal field at quadrature points, (M, Q, 2)."""
    vals = np.asarray(nodal)[mesh.cells]                  # (M, 4)
    return np.einsum("mc,mqcd->mqd", vals, mesh.bgrads)


def value_at_qpts(mesh, nodal):
    """Field values at quadrature points, (M, Q)."""
    vals = np.asarray(nodal)[mesh.cells]
    return np.einsum("mc,qc->mq", vals, mesh.basis)


def assemble_matrix(mesh, coeff):
    """Assemble sum_q w_q  grad(N_i)^T C grad(N_j) as a CSR matrix.

    coeff : (M, Q) scalars for an isotropic coefficient, or (M, Q, 2, 2)
        matrices.
    """
    c = np.asarray(coeff)
    if c.ndim == 2:
        flux = c[..., None, None] * mesh.bgrads            # (M, Q, 4, 2)
        blocks = np.einsum("mqid,mqjd,mq->mij", mesh.bgrads, flux, mesh.qweights)
    else:
        blocks = np.einsum(
            "mqid,mqde,mqje,mq->mij", mesh.bgrads, c, mesh.bgrads, mesh.qweights
        )
    rows = np.repeat(mesh.cells, 4, axis=1).ravel()
    cols = np.tile(mesh.cells, (1, 4)).ravel()
    n = mesh.n_nodes
    a = sp.coo_matrix((blocks.ravel(), (rows, cols)), shape=(n, n))
    return a.tocsr()


def assemble_vector_load(mesh, vec_at_qpts):
    """Nodal vector b_k = sum_q w_q  v(q) . grad(N_k)."""
    contrib = np.einsum("mqd,mqcd,mq->mc", vec_at_qpts, mesh.bgrads, mesh.qweights)
    out = np.zeros(mesh.n_nodes)
    np.add.at(out, mesh.cells.ravel(), contrib.ravel())
    return out


def boundary_component_load(mesh, tag, component=0):
    """Nodal vector of the facet integral of n_component * N_k over a tag."""
    fs = mesh.facets[tag]
    contrib = np.einsum("fq,fqc,fq->fc", fs.normals[..., component], fs.basis, fs.weights)
    out = np.zeros(mesh.n_nodes)
    cells = mesh.cells[fs.cells]
    np.add.at(out, cells.ravel(), contrib.ravel())
    return out


def assemble_mass(mesh):
    """Mass matrix sum_q w_q N_i N_j (carries the axisymmetric weight)."""
    blocks = np.einsum("qi,qj,mq->mij", mesh.basis, mesh.basis, mesh.qweights)
    rows = np.repeat(mesh.cells, 4, axis=1).ravel()
    cols = np.tile(mesh.cells, (1, 4)).ravel()
    n = mesh.n_nodes
    return sp.coo_matrix((blocks.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def project_to_nodes(mesh, qpt_values, consistent=True):
    """L2 projection of quadrature-point values onto the nodal space.

    The consistent projection (mass-matrix solve) reproduces any function
    already in the space exactly; the lumped variant is cheaper but smears
    on graded cells.
    """
    num = np.zeros(mesh.n_nodes)
    w = mesh.qweights[..., None] * mesh.basis[None, ...]   # (M, Q, 4)
    np.add.at(num, mesh.cells.ravel(),
              (w * np.asarray(qpt_values)[..., None]).sum(axis=1).ravel())
    if not consistent:
        den = np.zeros(mesh.n_nodes)
        np.add.at(den, mesh.cells.ravel(), w.sum(axis=1).ravel())
        return num / den
    m = assemble_mass(mesh)
    x, _ = pcg(m, num, tol=1e-13)
    return x


def pcg(a, b, tol=1e-10, maxiter=None, x0=None, curvature_guard=False):
    """Jacobi-preconditioned conjugate gradient for SPD systems.

    Converges on the relative residual ||b - A x|| <= tol * ||b||.  Returns
    (x, history).  With ``curvature_guard`` the iteration raises SolverError
    when it meets non-positive curvature instead of silently diverging,
    which the Newton loop uses to trigger Hessian regularization.
    """
    n = b.shape[0]
    if maxiter is None:
        maxiter = max(20 * n, 200)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n), [0.0]
    x = np.zeros(n) if x0 is None else x0.copy()
    d = a.diagonal()
    d = np.where(d > 0.0, d, 1.0)
    r = b - a @ x
    z = r / d
    p = z.copy()
    rz = r @ z
    history = [float(np.linalg.norm(r) / bnorm)]
    for _ in range(maxiter):
        if history[-1] <= tol:
            return x, history
        ap = a @ p
        pap = p @ ap
        if pap <= 0.0:
            if curvature_guard:
                raise SolverError("non-positive curvature in CG", history)
            raise SolverError("matrix not positive definite in CG", history)
        alpha = rz / pap
        x += alpha * p
        r -= alpha * ap
        z = r / d
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
        history.append(float(np.linalg.norm(r) / bnorm))
    if history[-1] <= tol:
        return x, history
    raise SolverError(
        f"CG did not reach tol={tol:g} in {maxiter} iterations "
        f"(residual {history[-1]:.3e})", history
    )


def apply_dirichlet_solve(a, b, fixed, fixed_values=0.0, tol=1e-10, maxiter=None):
    """Solve A x = b with x[fixed] pinned, via reduction to the free block."""
    n = b.shape[0]
    mask = np.zeros(n, dtype=bool)
    mask[fixed] = True
    free = np.flatnonzero(~mask)
    x = np.zeros(n)
    x[fixed] = fixed_values
    rhs = b - a @ x
    a_ff = a[free][:, free].tocsr()
    xf, history = pcg(a_ff, rhs[free], tol=tol, maxiter=maxiter)
    x[free] = xf
    return x, history
