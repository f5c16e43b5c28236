"""Minimum-residual solvers.

The workhorse path condenses the element-local blocks

    A_K = M_K^T G_K^{-1} M_K,   b_K = M_K^T G_K^{-1} l_K,
    M_K = [B_K | Bhat_K],

into a sparse SPD system on the trial dofs, eliminates essential
constraints symmetrically, and solves with a sparse LU (iterative
fallback). The same solution can be obtained without condensation from
the symmetric saddle-point system

    [ G  M ] [ psi ]   [ l ]
    [ M^T 0 ] [  x  ] = [ 0 ],

which also exposes the error representation function psi.

Two direct least-squares variants avoid the Gram inversion on
L2-identified test slots by integrating the pointwise residual
representers exactly: solve_fosls (all slots, Strong formulation) and
solve_hybrid_mixed (Gram inversion only on the H(div) test slot of the
Mixed formulation). A classical Galerkin primal solver is included as a
reference.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .material import MaterialParams, stiffness_apply_array
from .mesh import Mesh, GAMMA1
from .quadrature import triangle_rule, edge_rule
from .spaces import h1_space, volume_basis, element_edge_values, geometry
from .forms import (
    Formulation,
    BCData,
    formulation,
    assemble_local_blocks,
    trial_layout,
    element_trial_dofs,
    l2_slot_residual_ops,
)

log = logging.getLogger(__name__)

CHUNK = 512


@dataclass
class SolutionFields:
    """A computed solution: one coefficient vector per trial slot."""

    mesh: Mesh
    material: MaterialParams
    spec_name: str
    p: int
    dp: int
    spaces: dict
    coeffs: dict
    form: Optional[Formulation] = None
    layout: object = None
    extras: dict = field(default_factory=dict)

    def full_vector(self, layout=None):
        """Concatenate slot coefficients in the layout ordering."""
        layout = layout if layout is not None else self.layout
        x = np.zeros(layout.ndof)
        for name, off in layout.offsets.items():
            c = self.coeffs[name]
            x[off : off + len(c)] = c
        return x

    def num_free_dofs(self):
        return self.layout.ndof - len(self.layout.constrained)


@dataclass
class GlobalSystem:
    form: Formulation
    layout: object
    K: sp.csr_matrix
    rhs: np.ndarray


def condense_local(blocks):
    """Per-element normal-equation blocks (A, b) from (B, Bhat, G, l).

    Verifies each Gram matrix is SPD via its Cholesky factor.
    """
    M = np.concatenate([blocks.B, blocks.Bhat], axis=2)
    try:
        np.linalg.cholesky(blocks.G)
    except np.linalg.LinAlgError as err:
        raise ValueError("element Gram matrix is not SPD") from err
    GinvM = np.linalg.solve(blocks.G, M)
    Ginvl = np.linalg.solve(blocks.G, blocks.l[..., None])[..., 0]
    A = np.einsum("etm,etn->emn", M, GinvM, optimize=True)
    A = 0.5 * (A + np.swapaxes(A, 1, 2))
    b = np.einsum("etm,et->em", M, Ginvl, optimize=True)
    return A, b


def assemble_normal_equations(form: Formulation, chunk: int = CHUNK) -> GlobalSystem:
    layout = trial_layout(form)
    n = layout.ndof
    rhs = np.zeros(n)
    rows, cols, vals = [], [], []
    nelt = form.mesh.num_triangles
    for start in range(0, nelt, chunk):
        elems = np.arange(start, min(start + chunk, nelt))
        blocks = assemble_local_blocks(form, elems)
        A, b = condense_local(blocks)
        gdofs = element_trial_dofs(form, layout, elems)  # (ne, nloc)
        nloc = gdofs.shape[1]
        rows.append(np.repeat(gdofs, nloc, axis=1).ravel())
        cols.append(np.tile(gdofs, (1, nloc)).ravel())
        vals.append(A.ravel())
        np.add.at(rhs, gdofs.ravel(), b.ravel())
    K = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    ).tocsr()
    return GlobalSystem(form=form, layout=layout, K=K, rhs=rhs)


def _solve_constrained(K, rhs, constrained, values):
    """Symmetric elimination of essential constraints, then sparse solve."""
    n = K.shape[0]
    free = np.setdiff1d(np.arange(n), constrained)
    x = np.zeros(n)
    x[constrained] = values
    if len(free) == 0:
        return x
    Kf = K[free][:, free].tocsc()
    rhs_f = rhs[free] - K[free][:, constrained] @ values if len(constrained) else rhs[free]
    try:
        sol = spla.splu(Kf).solve(rhs_f)
    except RuntimeError:
        log.warning("sparse LU failed, falling back to conjugate gradients")
        sol, info = spla.cg(Kf, rhs_f, rtol=1e-12, atol=0.0, maxiter=20000)
        if info != 0:
            raise np.linalg.LinAlgError(f"iterative solve did not converge (info={info})")
    res = np.linalg.norm(Kf @ sol - rhs_f)
    scale = max(np.linalg.norm(rhs_f), 1e-30)
    if res > 1e-6 * scale:
        log.warning("large linear-solve residual: %.3e (relative)", res / scale)
    x[free] = sol
    return x


def _fields_from_vector(form: Formulation, layout, x, spec_name=None, extras=None) -> SolutionFields:
    spaces = dict(form.field_spaces)
    spaces.update(form.trace_spaces)
    coeffs = {name: x[off : off + spaces[name].ndof].copy() for name, off in layout.offsets.items()}
    return SolutionFields(
        mesh=form.mesh,
        material=form.material,
        spec_name=spec_name or form.id,
        p=form.p,
        dp=form.dp,
        spaces=spaces,
        coeffs=coeffs,
        form=form,
        layout=layout,
        extras=extras or {},
    )


def assemble_and_solve(form: Formulation) -> SolutionFields:
    """Solve the condensed normal equations of a broken formulation."""
    system = assemble_normal_equations(form)
    x = _solve_constrained(system.K, system.rhs, system.layout.constrained, system.layout.values)
    return _fields_from_vector(form, system.layout, x)


def solve_dpg(spec_id, mesh, material, p, dp=1, bc: Optional[BCData] = None) -> SolutionFields:
    """Convenience wrapper: build the formulation and solve it."""
    return assemble_and_solve(formulation(spec_id, mesh, material, p, dp=dp, bc=bc))


# ---------------------------------------------------------------------------
# saddle-point variant


def solve_saddle_point(form: Formulation) -> SolutionFields:
    """Solve the uncondensed symmetric system; extras carry psi.

    psi is the discrete error representation function in the enriched
    broken test space, stored elementwise as (nelt, ntest_loc).
    """
    layout = trial_layout(form)
    nelt = form.mesh.num_triangles
    blocks = assemble_local_blocks(form, np.arange(nelt))
    M = np.concatenate([blocks.B, blocks.Bhat], axis=2)
    ntest = M.shape[1]
    npsi = nelt * ntest
    gdofs = element_trial_dofs(form, layout, np.arange(nelt))
    nloc = gdofs.shape[1]

    trows = (np.arange(nelt)[:, None, None] * ntest + np.arange(ntest)[None, :, None]) * np.ones(
        (1, 1, nloc), dtype=np.int64
    )
    tcols = np.broadcast_to(gdofs[:, None, :], (nelt, ntest, nloc))
    Bg = sp.coo_matrix(
        (M.ravel(), (trows.ravel().astype(np.int64), tcols.ravel())), shape=(npsi, layout.ndof)
    ).tocsr()
    G = sp.block_diag([blocks.G[e] for e in range(nelt)], format="csr")

    free = np.setdiff1d(np.arange(layout.ndof), layout.constrained)
    Bf = Bg[:, free]
    top = blocks.l.ravel()
    if len(layout.constrained):
        top = top - Bg[:, layout.constrained] @ layout.values
    Kfull = sp.bmat([[G, Bf], [Bf.T, None]], format="csc")
    rhs = np.concatenate([top, np.zeros(len(free))])
    sol = spla.splu(Kfull).solve(rhs)
    psi = sol[:npsi].reshape(nelt, ntest)
    x = np.zeros(layout.ndof)
    x[layout.constrained] = layout.values
    x[free] = sol[npsi:]
    return _fields_from_vector(form, layout, x, extras={"psi": psi})


# ---------------------------------------------------------------------------
# exact-L2 least-squares paths


def _assemble_exact_l2(form: Formulation, chunk: int = CHUNK):
    """Global matrix and rhs of the exact least-squares terms over the
    L2-identified test slots, on field columns only."""
    layout = trial_layout(form)
    n = layout.ndof
    rhs = np.zeros(n)
    rows, cols, vals = [], [], []
    nelt = form.mesh.num_triangles
    for start in range(0, nelt, chunk):
        elems = np.arange(start, min(start + chunk, nelt))
        wts, reps, load_reps, _ = l2_slot_residual_ops(form, elems)
        gdofs = element_trial_dofs(form, layout, elems)
        nfield = next(iter(reps.values())).shape[1]
        fdofs = gdofs[:, :nfield]
        A = np.zeros((len(elems), nfield, nfield))
        b = np.zeros((len(elems), nfield))
        for name, rep in reps.items():
            r = rep.reshape(rep.shape[:3] + (-1,))
            A += np.einsum("eq,emqk,enqk->emn", wts, r, r, optimize=True)
            lr = load_reps[name]
            if lr is not None:
                b += np.einsum("eq,eqk,emqk->em", wts, lr.reshape(lr.shape[:2] + (-1,)), r, optimize=True)
        rows.append(np.repeat(fdofs, nfield, axis=1).ravel())
        cols.append(np.tile(fdofs, (1, nfield)).ravel())
        vals.append(A.ravel())
        np.add.at(rhs, fdofs.ravel(), b.ravel())
    K = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    ).tocsr()
    return layout, K, rhs


def solve_fosls(mesh, material, p, bc: Optional[BCData] = None) -> SolutionFields:
    """First-order-system least squares: the Strong formulation with the
    exact L2 Riesz map instead of a discrete Gram inversion."""
    form = formulation("strong", mesh, material, p, dp=0, bc=bc)
    layout, K, rhs = _assemble_exact_l2(form)
    x = _solve_constrained(K, rhs, layout.constrained, layout.values)
    return _fields_from_vector(form, layout, x, spec_name="fosls")


def solve_hybrid_mixed(mesh, material, p, dp=1, bc: Optional[BCData] = None) -> SolutionFields:
    """Mixed formulation with Gram inversion only on the H(div) test slot;
    the discontinuous test slots use the exact L2 Riesz map."""
    form = formulation("mixed", mesh, material, p, dp=dp, bc=bc)
    layout, K2, rhs2 = _assemble_exact_l2(form)
    n = layout.ndof
    rhs = rhs2.copy()
    rows, cols, vals = [], [], []
    nelt = form.mesh.num_triangles
    for start in range(0, nelt, CHUNK):
        elems = np.arange(start, min(start + CHUNK, nelt))
        blocks = assemble_local_blocks(form, elems)
        s = blocks.test_slices["tau"]
        M = np.concatenate([blocks.B[:, s, :], blocks.Bhat[:, s, :]], axis=2)
        G = blocks.G[:, s, s]
        GinvM = np.linalg.solve(G, M)
        A = np.einsum("etm,etn->emn", M, GinvM, optimize=True)
        A = 0.5 * (A + np.swapaxes(A, 1, 2))
        b = np.einsum("etm,et->em", M, np.linalg.solve(G, blocks.l[:, s, None])[..., 0])
        gdofs = element_trial_dofs(form, layout, elems)
        nloc = gdofs.shape[1]
        rows.append(np.repeat(gdofs, nloc, axis=1).ravel())
        cols.append(np.tile(gdofs, (1, nloc)).ravel())
        vals.append(A.ravel())
        np.add.at(rhs, gdofs.ravel(), b.ravel())
    K = K2 + sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    ).tocsr()
    x = _solve_constrained(K, rhs, layout.constrained, layout.values)
    return _fields_from_vector(form, layout, x, spec_name="hybrid_mixed")


# ---------------------------------------------------------------------------
# classical Galerkin reference


def solve_galerkin_primal(mesh, material, p, bc: Optional[BCData] = None) -> SolutionFields:
    """Standard conforming Galerkin method for the primal problem:
    (C grad u, grad v) = (f, v) + (g, v)_Gamma1 on H1 with the
    displacement boundary eliminated."""
    bc = bc if bc is not None else BCData()
    space = h1_space(mesh, p, gamma0_constrained=True, bc_fn=bc.u0)
    geom = geometry(mesh)
    rule = triangle_rule(2 * p + 2)
    n = space.ndof
    rhs = np.zeros(n)
    rows, cols, vals = [], [], []
    nelt = mesh.num_triangles
    for start in range(0, nelt, CHUNK):
        elems = np.arange(start, min(start + CHUNK, nelt))
        basis = volume_basis(space, elems, rule.points)
        wts = np.abs(geom.det[elems])[:, None] * rule.weights[None, :]
        cg = stiffness_apply_array(basis.grad, material)
        A = np.einsum(
            "eq,emqij,enqij->emn", wts, cg, basis.grad, optimize=True
        )
        pts = geom.origin[elems][:, None, :] + np.einsum("eij,qj->eqi", geom.J[elems], rule.points)
        fv = bc.body_force(pts)
        b = np.einsum("eq,eqc,emqc->em", wts, fv, basis.val, optimize=True)
        gdofs = space.elt_dofs[elems]
        nloc = gdofs.shape[1]
        rows.append(np.repeat(gdofs, nloc, axis=1).ravel())
        cols.append(np.tile(gdofs, (1, nloc)).ravel())
        vals.append(A.ravel())
        np.add.at(rhs, gdofs.ravel(), b.ravel())
    K = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    ).tocsr()
    # traction load on Gamma1
    if bc.g is not None:
        from .mesh import skeleton as make_skeleton

        sk = make_skeleton(mesh)
        tq, twq = edge_rule(2 * p + 6)
        for eid in mesh.boundary_edge_ids(GAMMA1):
            t0 = mesh.edge_tris[eid, 0]
            loc = int(np.where(mesh.tri_edges[t0] == eid)[0][0])
            a, b_ = mesh.edges[eid]
            va, vb = mesh.vertices[a], mesh.vertices[b_]
            length = np.linalg.norm(vb - va)
            pts = va[None] + tq[:, None] * (vb - va)[None]
            gv = np.asarray(bc.g(pts, sk.normals[eid]), dtype=float)
            ev = element_edge_values(space, np.array([t0]), tq)[0, :, loc]  # (nloc, nq, 2)
            load = length * np.einsum("q,qc,lqc->l", twq, gv, ev)
            np.add.at(rhs, space.elt_dofs[t0], load)
    x = _solve_constrained(K, rhs, space.constrained_dofs, space.constrained_values)

    @dataclass
    class _Layout:
        offsets: dict
        ndof: int
        constrained: np.ndarray
        values: np.ndarray

    layout = _Layout(
        offsets={"u": 0},
        ndof=n,
        constrained=space.constrained_dofs,
        values=space.constrained_values,
    )
    return SolutionFields(
        mesh=mesh,
        material=material,
        spec_name="galerkin",
        p=p,
        dp=0,
        spaces={"u": space},
        coeffs={"u": x},
        form=None,
        layout=layout,
    )
