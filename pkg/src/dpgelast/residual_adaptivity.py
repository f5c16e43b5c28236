"""Residual evaluation and adaptive refinement.

The minimum-residual framework comes with a built-in error estimator:
the discrete dual norm of the element residual r_K = B_K x_K - l_K,

    eta_K^2 = r_K^T G_K^{-1} r_K,

evaluated in an enriched broken test space of fixed order p_res. Test
slots identified with L2 need no Gram inversion: their residual is an
explicit function of the trial solution and is integrated pointwise,
which avoids the projection onto a finite modal basis altogether.

Marking uses a simple maximum strategy and refinement is
newest-vertex bisection, so the adaptive loop is
solve -> estimate -> mark -> refine.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import Mesh, refine
from .forms import (
    formulation,
    assemble_local_blocks,
    trial_layout,
    element_trial_dofs,
    l2_slot_residual_ops,
)
from .dpg_solver import SolutionFields, assemble_and_solve, CHUNK

P_RES = 4


@dataclass
class ResidualReport:
    """Elementwise residual contributions eta_K and their total."""

    eta: np.ndarray  # (nelt,)
    p_res: int

    @property
    def total(self) -> float:
        return float(np.sqrt(np.sum(self.eta**2)))


def element_residuals(fields: SolutionFields, p_res: int = P_RES) -> ResidualReport:
    """Per-element residual dual norms of a computed solution."""
    form = fields.form
    if form is None:
        raise ValueError("residuals need the broken formulation the solution came from")
    dp_res = max(p_res - form.p, 0)
    form_res = formulation(form.id, form.mesh, form.material, form.p, dp=dp_res, bc=form.bc)
    layout = trial_layout(form_res)
    x = fields.full_vector(layout)
    nelt = form.mesh.num_triangles
    eta2 = np.zeros(nelt)
    exact_degree = max(2 * p_res + 2, 16)
    for start in range(0, nelt, CHUNK):
        elems = np.arange(start, min(start + CHUNK, nelt))
        gdofs = element_trial_dofs(form_res, layout, elems)
        xloc = x[gdofs]
        # Gram-inverted slots (broken H1 / H(div) test functions)
        blocks = assemble_local_blocks(form_res, elems)
        M = np.concatenate([blocks.B, blocks.Bhat], axis=2)
        r = np.einsum("etm,em->et", M, xloc, optimize=True) - blocks.l
        for name, _ in form_res.desc.test_slots:
            if form_res.desc.test_norms[name] == "L2":
                continue
            s = blocks.test_slices[name]
            rs = r[:, s]
            sol = np.linalg.solve(blocks.G[:, s, s], rs[..., None])[..., 0]
            eta2[elems] += np.einsum("et,et->e", rs, sol)
        # exact pointwise path for the L2-identified slots
        wts, reps, load_reps, field_slices = l2_slot_residual_ops(
            form_res, elems, quad_degree=exact_degree
        )
        if reps:
            nfield = next(iter(reps.values())).shape[1]
            xf = xloc[:, :nfield]
            for name, rep in reps.items():
                R = np.einsum("enq...,en->eq...", rep, xf, optimize=True)
                lr = load_reps[name]
                if lr is not None:
                    R = R - lr
                R = R.reshape(R.shape[:2] + (-1,))
                eta2[elems] += np.einsum("eq,eqk,eqk->e", wts, R, R, optimize=True)
    eta2 = np.maximum(eta2, 0.0)
    return ResidualReport(eta=np.sqrt(eta2), p_res=p_res)


def mark(report: ResidualReport, theta: float = 0.5):
    """Maximum-strategy marking: elements with eta_K > theta * max eta."""
    if not 0.0 <= theta < 1.0:
        raise ValueError(f"marking fraction must lie in [0, 1), got {theta}")
    cut = theta * report.eta.max()
    marked = np.nonzero(report.eta > cut)[0]
    if len(marked) == 0:
        marked = np.array([int(np.argmax(report.eta))])
    return marked


@dataclass
class AdaptiveStep:
    mesh: Mesh
    fields: SolutionFields
    report: ResidualReport
    ndofs: int


def adaptive_loop(
    spec_id: str,
    mesh: Mesh,
    material,
    p: int,
    bc,
    steps: int,
    dp: int = 1,
    p_res: int = P_RES,
    theta: float = 0.5,
) -> list:
    """Run solve / estimate / mark / refine for a number of steps.

    Returns one AdaptiveStep per solve; the mesh of step k+1 is the
    refinement of the mesh of step k.
    """
    history = []
    for step in range(steps):
        form = formulation(spec_id, mesh, material, p, dp=dp, bc=bc)
        fields = assemble_and_solve(form)
        report = element_residuals(fields, p_res=p_res)
        history.append(
            AdaptiveStep(mesh=mesh, fields=fields, report=report, ndofs=fields.num_free_dofs())
        )
        if step < steps - 1:
            mesh = refine(mesh, mark(report, theta))
    return history


def local_conservation_defect(fields: SolutionFields, quad_degree: int = 12):
    """Elementwise conservation defects |int_K (div sigma_h + f)|.

    Returns (defects, fnorm) where defects has one entry per element
    (the euclidean norm of the two components of the defect) and fnorm
    is the global L2 norm of the body force.
    """
    from .quadrature import triangle_rule
    from .spaces import geometry, volume_basis

    form = fields.form
    space = fields.spaces["sigma"]
    if space.kind not in ("Hdiv", "BrokenHdiv"):
        raise ValueError("conservation defect needs an H(div) stress slot")
    mesh = fields.mesh
    geom = geometry(mesh)
    rule = triangle_rule(quad_degree)
    nelt = mesh.num_triangles
    defects = np.zeros(nelt)
    fnorm2 = 0.0
    bc = form.bc if form is not None else None
    for start in range(0, nelt, CHUNK):
        elems = np.arange(start, min(start + CHUNK, nelt))
        basis = volume_basis(space, elems, rule.points)
        wts = np.abs(geom.det[elems])[:, None] * rule.weights[None, :]
        xloc = fields.coeffs["sigma"][space.elt_dofs[elems]]
        divs = np.einsum("el,elqc->eqc", xloc, basis.div, optimize=True)
        pts = geom.origin[elems][:, None, :] + np.einsum("eij,qj->eqi", geom.J[elems], rule.points)
        fv = bc.body_force(pts) if bc is not None else np.zeros_like(divs)
        defect = np.einsum("eq,eqc->ec", wts, divs + fv)
        defects[elems] = np.linalg.norm(defect, axis=1)
        fnorm2 += np.sum(wts * np.sum(fv * fv, axis=-1))
    return defects, float(np.sqrt(fnorm2))
