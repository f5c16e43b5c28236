"""Variational formulation descriptors and element-local assembly.

Five broken formulations of the first-order elasticity system are
described declaratively: trial slots (volume fields and skeleton
traces), broken or discontinuous test slots, bilinear volume terms,
skeleton pairing terms, load slots, and test norms. A concrete
Formulation binds a descriptor to a mesh, material, and orders (p, dp),
instantiating all discrete spaces; assembly produces per-element blocks

    B (test x field), Bhat (test x trace), G (test Gram), l (load)

in batched numpy arrays, chunked over elements to bound memory.

Boundary data enters exclusively through essential constraints: the
displacement u0 on Gamma0 constrains H1 and TraceH12 dofs, and the
traction g on Gamma1 constrains H(div) normal-trace and TraceHm12 dofs
(by edgewise moment projection); elimination then folds the data into
the right-hand side.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .material import MaterialParams, stiffness_apply_array, compliance_apply_array
from .mesh import Mesh, skeleton as make_skeleton
from .quadrature import triangle_rule, edge_rule
from .spaces import (
    DofSpace,
    h1_space,
    hdiv_space,
    l2_space,
    broken_h1_space,
    broken_hdiv_space,
    trace_spaces,
    volume_basis,
    element_edge_values,
    trace_edge_basis,
    edge_phys_points,
    geometry,
)


@dataclass(frozen=True)
class Term:
    """One volume pairing: sign * (op(D_trial trial), D_test test)."""

    test: str
    test_deriv: str  # val | grad | div
    trial: str
    trial_deriv: str
    sign: float
    op: Optional[str] = None  # None | C | S


@dataclass(frozen=True)
class TraceTerm:
    """One skeleton pairing: sign * <trace, element trace of test>."""

    test: str
    trace: str
    sign: float


@dataclass(frozen=True)
class FormulationDescriptor:
    id: str
    field_slots: tuple  # (name, kind) with kind in {Hdiv, H1, L2sym, L2vec, L2skew}
    trace_slots: tuple  # (name, kind) with kind in {TraceH12, TraceHm12}
    test_slots: tuple  # (name, kind)
    terms: tuple
    trace_terms: tuple
    test_norms: dict  # test name -> L2 | H1 | Hdiv
    load_slot: str  # test slot receiving (f, v)


DESCRIPTORS = {
    "strong": FormulationDescriptor(
        id="strong",
        field_slots=(("sigma", "Hdiv"), ("u", "H1")),
        trace_slots=(),
        test_slots=(("tau", "L2sym"), ("v", "L2vec"), ("w", "L2skew")),
        terms=(
            Term("tau", "val", "sigma", "val", 1.0),
            Term("tau", "val", "u", "grad", -1.0, "C"),
            Term("v", "val", "sigma", "div", -1.0),
            Term("w", "val", "sigma", "val", 1.0),
        ),
        trace_terms=(),
        test_norms={"tau": "L2", "v": "L2", "w": "L2"},
        load_slot="v",
    ),
    "ultraweak": FormulationDescriptor(
        id="ultraweak",
        field_slots=(("sigma", "L2sym"), ("u", "L2vec"), ("omega", "L2skew")),
        trace_slots=(("uhat", "TraceH12"), ("shat", "TraceHm12")),
        test_slots=(("tau", "BrokenHdiv"), ("v", "BrokenH1")),
        terms=(
            Term("tau", "val", "sigma", "val", 1.0, "S"),
            Term("tau", "val", "omega", "val", 1.0),
            Term("tau", "div", "u", "val", 1.0),
            Term("v", "grad", "sigma", "val", 1.0),
        ),
        trace_terms=(TraceTerm("tau", "uhat", -1.0), TraceTerm("v", "shat", -1.0)),
        test_norms={"tau": "Hdiv", "v": "H1"},
        load_slot="v",
    ),
    "dualmixed": FormulationDescriptor(
        id="dualmixed",
        field_slots=(("sigma", "L2sym"), ("u", "H1")),
        trace_slots=(("shat", "TraceHm12"),),
        test_slots=(("tau", "L2sym"), ("v", "BrokenH1")),
        terms=(
            Term("tau", "val", "sigma", "val", 1.0),
            Term("tau", "val", "u", "grad", -1.0, "C"),
            Term("v", "grad", "sigma", "val", 1.0),
        ),
        trace_terms=(TraceTerm("v", "shat", -1.0),),
        test_norms={"tau": "L2", "v": "H1"},
        load_slot="v",
    ),
    "mixed": FormulationDescriptor(
        id="mixed",
        field_slots=(("sigma", "Hdiv"), ("u", "L2vec"), ("omega", "L2skew")),
        trace_slots=(("uhat", "TraceH12"),),
        test_slots=(("tau", "BrokenHdiv"), ("v", "L2vec"), ("w", "L2skew")),
        terms=(
            Term("tau", "val", "sigma", "val", 1.0, "S"),
            Term("tau", "val", "omega", "val", 1.0),
            Term("tau", "div", "u", "val", 1.0),
            Term("v", "val", "sigma", "div", -1.0),
            Term("w", "val", "sigma", "val", 1.0),
        ),
        trace_terms=(TraceTerm("tau", "uhat", -1.0),),
        test_norms={"tau": "Hdiv", "v": "L2", "w": "L2"},
        load_slot="v",
    ),
    "primal": FormulationDescriptor(
        id="primal",
        field_slots=(("u", "H1"),),
        trace_slots=(("shat", "TraceHm12"),),
        test_slots=(("v", "BrokenH1"),),
        terms=(Term("v", "grad", "u", "grad", 1.0, "C"),),
        trace_terms=(TraceTerm("v", "shat", -1.0),),
        test_norms={"v": "H1"},
        load_slot="v",
    ),
}

FORMULATION_IDS = tuple(DESCRIPTORS)


@dataclass
class BCData:
    """Problem data: body force f(pts), traction g(pts, normal) on
    Gamma1, and prescribed displacement u0(pts) on Gamma0."""

    f: Callable = None
    g: Callable = None
    u0: Callable = None

    def body_force(self, pts):
        if self.f is None:
            return np.zeros(np.asarray(pts).shape)
        return np.asarray(self.f(pts), dtype=float)


def bc_from_exact(exact) -> BCData:
    return BCData(f=exact.body_force, g=exact.traction, u0=exact.displacement)


def _trial_space(kind, mesh, p, bc: BCData):
    if kind == "Hdiv":
        return hdiv_space(mesh, p, gamma1_constrained=True, traction_fn=bc.g)
    if kind == "H1":
        return h1_space(mesh, p, gamma0_constrained=True, bc_fn=bc.u0)
    if kind in ("L2sym", "L2vec", "L2skew"):
        return l2_space(mesh, p - 1, kind)
    raise ValueError(f"unknown trial kind {kind!r}")


def _test_space(kind, mesh, p, dp):
    if kind == "BrokenHdiv":
        return broken_hdiv_space(mesh, p + dp)
    if kind == "BrokenH1":
        return broken_h1_space(mesh, p + dp)
    if kind in ("L2sym", "L2vec", "L2skew"):
        return l2_space(mesh, p - 1 + dp, kind)
    raise ValueError(f"unknown test kind {kind!r}")


@dataclass
class Formulation:
    """A descriptor bound to a mesh, material, orders, and boundary data."""

    desc: FormulationDescriptor
    mesh: Mesh
    material: MaterialParams
    p: int
    dp: int
    bc: BCData
    field_spaces: dict
    trace_spaces: dict
    test_spaces: dict
    skeleton: object

    @property
    def id(self):
        return self.desc.id

    def trial_slot_names(self):
        return [n for n, _ in self.desc.field_slots] + [n for n, _ in self.desc.trace_slots]

    def trial_space(self, name):
        return self.field_spaces.get(name) or self.trace_spaces[name]

    def quad_degree(self):
        return 2 * (self.p + self.dp) + 2


def formulation(spec_id: str, mesh: Mesh, material: MaterialParams, p: int, dp: int = 1, bc: Optional[BCData] = None) -> Formulation:
    """Instantiate a broken formulation with all of its discrete spaces."""
    if spec_id not in DESCRIPTORS:
        raise ValueError(f"unknown formulation {spec_id!r}; options: {sorted(DESCRIPTORS)}")
    if p < 1:
        raise ValueError(f"trial order must be at least 1, got {p}")
    if dp < 0:
        raise ValueError(f"enrichment must be nonnegative, got {dp}")
    desc = DESCRIPTORS[spec_id]
    bc = bc if bc is not None else BCData()
    sk = make_skeleton(mesh)
    fields = {n: _trial_space(k, mesh, p, bc) for n, k in desc.field_slots}
    traces = {}
    if desc.trace_slots:
        th12, thm12 = trace_spaces(sk, p, u0_fn=bc.u0)
        if bc.g is not None:
            _set_traction_trace_values(thm12, sk, bc.g)
        lookup = {"TraceH12": th12, "TraceHm12": thm12}
        traces = {n: lookup[k] for n, k in desc.trace_slots}
    tests = {n: _test_space(k, mesh, p, dp) for n, k in desc.test_slots}
    return Formulation(
        desc=desc,
        mesh=mesh,
        material=material,
        p=p,
        dp=dp,
        bc=bc,
        field_spaces=fields,
        trace_spaces=traces,
        test_spaces=tests,
        skeleton=sk,
    )


def _set_traction_trace_values(thm12: DofSpace, sk, g):
    """Fill the Gamma1 constraint values of TraceHm12 with moment
    projections of the traction datum."""
    if not len(thm12.constrained_dofs):
        return
    mesh = thm12.mesh
    nmom = thm12.payload["nmom"]
    from .spaces import legendre01_eval

    tq, twq = edge_rule(2 * nmom + 8)
    leg = legendre01_eval(nmom, tq)
    full = np.zeros(thm12.ndof)
    for eid in mesh.boundary_edge_ids("g1"):
        a, b = mesh.edges[eid]
        va, vb = mesh.vertices[a], mesh.vertices[b]
        pts = va[None] + tq[:, None] * (vb - va)[None]
        gv = np.asarray(g(pts, sk.normals[eid]), dtype=float)
        mom = np.einsum("q,mq,qc->mc", twq, leg, gv)
        full[thm12.edge_dofs[eid, 0::2]] = mom[:, 0]
        full[thm12.edge_dofs[eid, 1::2]] = mom[:, 1]
    thm12.constrained_values = full[thm12.constrained_dofs]


# ---------------------------------------------------------------------------
# assembly


def _apply_op(arr, op, material):
    if op is None:
        return arr
    if op == "C":
        return stiffness_apply_array(arr, material)
    if op == "S":
        return compliance_apply_array(arr, material)
    raise ValueError(f"unknown tensor op {op!r}")


def _slot_array(basis, deriv):
    arr = getattr(basis, deriv)
    if arr is None:
        raise ValueError(f"basis has no {deriv!r} array")
    return arr


def _contract(wts, test_arr, trial_arr):
    """sum_q w_q <test, trial> over trailing value axes."""
    E, nt, nq = test_arr.shape[:3]
    nu = trial_arr.shape[1]
    t = test_arr.reshape(E, nt, nq, -1)
    u = trial_arr.reshape(E, nu, nq, -1)
    return np.einsum("eq,etqk,euqk->etu", wts, t, u, optimize=True)


@dataclass
class LocalBlocks:
    """Batched per-element blocks for a chunk of elements."""

    elems: np.ndarray
    B: np.ndarray  # (nelt, ntest, nfield)
    Bhat: np.ndarray  # (nelt, ntest, ntrace)
    G: np.ndarray  # (nelt, ntest, ntest)
    l: np.ndarray  # (nelt, ntest)
    test_slices: dict  # test slot -> slice in local test index
    field_slices: dict
    trace_slices: dict


def _local_layout(form: Formulation):
    test_slices, off = {}, 0
    for name, _ in form.desc.test_slots:
        n = form.test_spaces[name].nloc
        test_slices[name] = slice(off, off + n)
        off += n
    ntest = off
    field_slices, off = {}, 0
    for name, _ in form.desc.field_slots:
        n = form.field_spaces[name].nloc
        field_slices[name] = slice(off, off + n)
        off += n
    nfield = off
    trace_slices, off = {}, 0
    for name, _ in form.desc.trace_slots:
        n = 3 * form.trace_spaces[name].edge_dofs.shape[1]
        trace_slices[name] = slice(off, off + n)
        off += n
    return test_slices, ntest, field_slices, nfield, trace_slices, off


def assemble_local_blocks(form: Formulation, elems=None, quad_degree=None) -> LocalBlocks:
    """Assemble (B, Bhat, G, l) for the given elements (default: all)."""
    mesh = form.mesh
    if elems is None:
        elems = np.arange(mesh.num_triangles)
    elems = np.asarray(elems, dtype=np.int64)
    degree = quad_degree if quad_degree is not None else form.quad_degree()
    rule = triangle_rule(degree)
    geom = geometry(mesh)
    wts = np.abs(geom.det[elems])[:, None] * rule.weights[None, :]
    pts = geom.origin[elems][:, None, :] + np.einsum("eij,qj->eqi", geom.J[elems], rule.points)

    test_slices, ntest, field_slices, nfield, trace_slices, ntrace = _local_layout(form)
    nelt = len(elems)
    B = np.zeros((nelt, ntest, nfield))
    Bhat = np.zeros((nelt, ntest, ntrace))
    G = np.zeros((nelt, ntest, ntest))
    l = np.zeros((nelt, ntest))

    test_bases = {n: volume_basis(form.test_spaces[n], elems, rule.points) for n, _ in form.desc.test_slots}
    field_bases = {n: volume_basis(form.field_spaces[n], elems, rule.points) for n, _ in form.desc.field_slots}

    for term in form.desc.terms:
        tarr = _slot_array(test_bases[term.test], term.test_deriv)
        uarr = _apply_op(_slot_array(field_bases[term.trial], term.trial_deriv), term.op, form.material)
        blk = term.sign * _contract(wts, tarr, uarr)
        B[:, test_slices[term.test], field_slices[term.trial]] += blk

    # Gram matrices per test slot
    for name, kind in form.desc.test_slots:
        basis = test_bases[name]
        norm = form.desc.test_norms[name]
        Gblk = _contract(wts, basis.val, basis.val)
        if norm == "H1":
            Gblk += _contract(wts, basis.grad, basis.grad)
        elif norm == "Hdiv":
            Gblk += _contract(wts, basis.div, basis.div)
        elif norm != "L2":
            raise ValueError(f"unknown test norm {norm!r}")
        s = test_slices[name]
        G[:, s, s] += Gblk

    # load (f, v)
    fvals = form.bc.body_force(pts)
    vload = test_bases[form.desc.load_slot]
    l[:, test_slices[form.desc.load_slot]] = np.einsum(
        "eq,eqc,elqc->el", wts, fvals, vload.val, optimize=True
    )

    # skeleton pairings
    if form.desc.trace_terms:
        tq, twq = edge_rule(degree)
        sk = form.skeleton
        elens = sk.lengths[mesh.tri_edges[elems]]  # (nelt, 3)
        for tt in form.desc.trace_terms:
            tspace = form.trace_spaces[tt.trace]
            tb_all = trace_edge_basis(tspace, tq)  # (ne, nloc_e, qe, 2)
            ev = element_edge_values(form.test_spaces[tt.test], elems, tq)
            # sign flip of the stored flux on the element side
            if tspace.kind == "TraceHm12":
                signs = sk.tri_signs[elems].astype(float)  # (nelt, 3)
            else:
                signs = np.ones((nelt, 3))
            nloc_e = tspace.edge_dofs.shape[1]
            blk = np.zeros((nelt, ntest, 3 * nloc_e))
            for loc in range(3):
                eids = mesh.tri_edges[elems, loc]
                tb = tb_all[eids]  # (nelt, nloc_e, qe, 2)
                fac = tt.sign * signs[:, loc] * elens[:, loc]
                pair = np.einsum("q,etqc,emqc->etm", twq, ev[:, :, loc], tb, optimize=True)
                blk[:, test_slices[tt.test], loc * nloc_e : (loc + 1) * nloc_e] = (
                    fac[:, None, None] * pair
                )
            Bhat[:, :, trace_slices[tt.trace]] += blk

    return LocalBlocks(
        elems=elems,
        B=B,
        Bhat=Bhat,
        G=G,
        l=l,
        test_slices=test_slices,
        field_slices=field_slices,
        trace_slices=trace_slices,
    )


def local_field_block(form: Formulation, element: int) -> np.ndarray:
    """Volume trial-test block of a single element."""
    return assemble_local_blocks(form, [element]).B[0]


def local_trace_block(form: Formulation, element: int) -> np.ndarray:
    """Skeleton pairing block of a single element (zero-width when the
    formulation carries no trace slots)."""
    return assemble_local_blocks(form, [element]).Bhat[0]


def local_load(form: Formulation, element: int) -> np.ndarray:
    """Load vector of a single element."""
    return assemble_local_blocks(form, [element]).l[0]


def local_gram(form: Formulation, element: int) -> np.ndarray:
    """Test-norm Gram matrix of a single element (SPD)."""
    G = assemble_local_blocks(form, [element]).G[0]
    try:
        np.linalg.cholesky(G)
    except np.linalg.LinAlgError as err:
        raise ValueError(f"Gram matrix of element {element} is not SPD") from err
    return G


# ---------------------------------------------------------------------------
# element dof maps into the concatenated global trial vector


@dataclass
class TrialLayout:
    """Concatenated global numbering over all trial slots."""

    offsets: dict  # slot name -> global offset
    ndof: int
    constrained: np.ndarray  # global constrained dof ids, sorted
    values: np.ndarray

    def slot_range(self, form, name):
        space = form.trial_space(name)
        off = self.offsets[name]
        return off, off + space.ndof


def trial_layout(form: Formulation) -> TrialLayout:
    offsets = {}
    off = 0
    cons = []
    vals = []
    for name in form.trial_slot_names():
        space = form.trial_space(name)
        offsets[name] = off
        if len(space.constrained_dofs):
            cons.append(space.constrained_dofs + off)
            vals.append(space.constrained_values)
        off += space.ndof
    cons = np.concatenate(cons) if cons else np.empty(0, dtype=np.int64)
    vals = np.concatenate(vals) if vals else np.empty(0)
    order = np.argsort(cons)
    return TrialLayout(offsets=offsets, ndof=off, constrained=cons[order], values=vals[order])


def element_trial_dofs(form: Formulation, layout: TrialLayout, elems) -> np.ndarray:
    """Global column ids of each element's trial dofs, (nelt, nfield+ntrace).

    Trace columns repeat a global dof when a vertex dof appears on two of
    the element's edges; scatter-adds accumulate correctly.
    """
    elems = np.asarray(elems, dtype=np.int64)
    cols = []
    for name, _ in form.desc.field_slots:
        space = form.field_spaces[name]
        cols.append(space.elt_dofs[elems] + layout.offsets[name])
    for name, _ in form.desc.trace_slots:
        space = form.trace_spaces[name]
        eids = form.mesh.tri_edges[elems]  # (nelt, 3)
        ed = space.edge_dofs[eids]  # (nelt, 3, nloc_e)
        cols.append(ed.reshape(len(elems), -1) + layout.offsets[name])
    return np.concatenate(cols, axis=1)


# ---------------------------------------------------------------------------
# pointwise residual representations for the exact-L2 paths


def l2_slot_residual_ops(form: Formulation, elems, quad_degree=None):
    """Pointwise residual representers of the L2-identified test slots.

    For every test slot whose norm is L2, the functional r(v) = (R, v)
    has an explicit representer R built from the trial basis. Returns
    (wts, reps, load_reps, field_slices) where reps[name] has shape
    (nelt, nfield, nq, ...) giving the representer of each trial basis
    function, and load_reps[name] the representer of the load (or None).
    """
    mesh = form.mesh
    elems = np.asarray(elems, dtype=np.int64)
    degree = quad_degree if quad_degree is not None else form.quad_degree()
    rule = triangle_rule(degree)
    geom = geometry(mesh)
    wts = np.abs(geom.det[elems])[:, None] * rule.weights[None, :]
    pts = geom.origin[elems][:, None, :] + np.einsum("eij,qj->eqi", geom.J[elems], rule.points)
    field_bases = {n: volume_basis(form.field_spaces[n], elems, rule.points) for n, _ in form.desc.field_slots}
    _, _, field_slices, nfield, _, _ = _local_layout(form)

    def project(arr, kind):
        if kind == "L2sym":
            return 0.5 * (arr + np.swapaxes(arr, -1, -2))
        if kind == "L2skew":
            return 0.5 * (arr - np.swapaxes(arr, -1, -2))
        return arr

    reps = {}
    load_reps = {}
    nelt, nq = wts.shape
    for name, kind in form.desc.test_slots:
        if form.desc.test_norms[name] != "L2":
            continue
        shape = (nelt, nfield, nq, 2) if kind == "L2vec" else (nelt, nfield, nq, 2, 2)
        rep = np.zeros(shape)
        for term in form.desc.terms:
            if term.test != name:
                continue
            uarr = _apply_op(
                _slot_array(field_bases[term.trial], term.trial_deriv), term.op, form.material
            )
            rep[:, field_slices[term.trial]] += term.sign * project(uarr, kind)
        reps[name] = rep
        load_reps[name] = form.bc.body_force(pts) if name == form.desc.load_slot else None
    return wts, reps, load_reps, field_slices
