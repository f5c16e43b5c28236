"""Discrete spaces: conforming H1 and H(div), discontinuous L2, their
broken element-local variants, and the two skeleton trace spaces.

Conventions:

* Scalar structure is built first; vector or tensor dofs interleave the
  copies as global = scalar * ncopies + copy.
* H1 spaces are Lagrange-type on an equispaced reference lattice; global
  continuity comes from identifying physical node coordinates.
* H(div) spaces are Raviart-Thomas-family, built directly on each
  physical element by inverting a functional Vandermonde: edge dofs are
  moments of the normal trace against orthonormal Legendre polynomials in
  the global edge parameter and with respect to the fixed skeleton
  normal, so shared edge dofs match across neighbours without sign
  bookkeeping. The stress space uses two independent rows.
* L2 spaces carry an elementwise orthonormal modal basis (the component
  tensors are Frobenius-normalized), so their mass matrices are exactly
  the identity.
* Trace spaces live on skeleton edges: continuous piecewise order-p
  nodal functions (TraceH12) and per-edge discontinuous Legendre modes of
  order p-1 measured against the fixed normal (TraceHm12).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np

from .mesh import Mesh, Skeleton, GAMMA0, GAMMA1
from .quadrature import triangle_rule, edge_rule


# ---------------------------------------------------------------------------
# reference polynomial helpers


@lru_cache(maxsize=None)
def _mono_exps(k: int):
    """Exponent pairs (i, j) with i + j <= k, graded order."""
    return tuple((i, j) for d in range(k + 1) for i in range(d + 1) for j in [d - i])


def _mono_eval(exps, pts):
    pts = np.asarray(pts, dtype=float)
    out = np.empty((len(exps),) + pts.shape[:-1])
    for n, (i, j) in enumerate(exps):
        out[n] = pts[..., 0] ** i * pts[..., 1] ** j
    return out


def _mono_grad(exps, pts):
    pts = np.asarray(pts, dtype=float)
    out = np.zeros((len(exps),) + pts.shape[:-1] + (2,))
    x, y = pts[..., 0], pts[..., 1]
    for n, (i, j) in enumerate(exps):
        if i > 0:
            out[n, ..., 0] = i * x ** (i - 1) * y**j
        if j > 0:
            out[n, ..., 1] = j * x**i * y ** (j - 1)
    return out


@lru_cache(maxsize=None)
def _ref_lattice(p: int):
    """Equispaced lattice nodes of order p on the reference triangle."""
    return np.array([[i / p, j / p] for j in range(p + 1) for i in range(p + 1 - j)])


@lru_cache(maxsize=None)
def _lagrange_matrix(p: int):
    """Inverse-Vandermonde: lagrange(pts) = Linv.T @ mono(pts)."""
    nodes = _ref_lattice(p)
    exps = _mono_exps(p)
    V = _mono_eval(exps, nodes).T  # (nnodes, nmodes)
    return np.linalg.inv(V)


def lagrange_eval(p: int, pts):
    """Reference Lagrange basis values, shape (nnodes, nq)."""
    Linv = _lagrange_matrix(p)
    return Linv.T @ _mono_eval(_mono_exps(p), pts)


def lagrange_grad(p: int, pts):
    """Reference Lagrange basis gradients, shape (nnodes, nq, 2)."""
    Linv = _lagrange_matrix(p)
    g = _mono_grad(_mono_exps(p), pts)
    return np.einsum("nm,nqc->mqc", Linv, g)


@lru_cache(maxsize=None)
def _ortho_modal_coeffs(k: int):
    """Coefficients of an L2-orthonormal modal basis on the reference
    triangle in terms of monomials: modal = C @ mono."""
    exps = _mono_exps(k)
    rule = triangle_rule(2 * k + 2)
    vals = _mono_eval(exps, rule.points)
    M = np.einsum("q,nq,mq->nm", rule.weights, vals, vals)
    L = np.linalg.cholesky(M)
    return np.linalg.inv(L)


def ortho_modal_eval(k: int, pts):
    """Orthonormal reference modal basis values, shape (nmodes, nq)."""
    return _ortho_modal_coeffs(k) @ _mono_eval(_mono_exps(k), pts)


@lru_cache(maxsize=None)
def _legendre01_coeffs(n: int):
    """Orthonormal Legendre basis on [0, 1]: rows of coefficients in t^k."""
    t, w = edge_rule(2 * n + 2)
    V = np.stack([t**k for k in range(n)])
    M = np.einsum("q,nq,mq->nm", w, V, V)
    L = np.linalg.cholesky(M)
    return np.linalg.inv(L)


def legendre01_eval(n: int, t):
    """First n orthonormal Legendre polynomials on [0, 1] at t, (n, nq)."""
    t = np.asarray(t, dtype=float)
    V = np.stack([t**k for k in range(n)])
    return _legendre01_coeffs(n) @ V


# component tensors for L2 kinds (Frobenius-orthonormal)
_SYM_COMPS = np.array(
    [
        [[1.0, 0.0], [0.0, 0.0]],
        [[0.0, 0.0], [0.0, 1.0]],
        [[0.0, 1.0 / np.sqrt(2.0)], [1.0 / np.sqrt(2.0), 0.0]],
    ]
)
_SKEW_COMPS = np.array([[[0.0, 1.0 / np.sqrt(2.0)], [-1.0 / np.sqrt(2.0), 0.0]]])


# ---------------------------------------------------------------------------
# geometry


@dataclass(frozen=True)
class Geometry:
    """Affine maps of all elements: x = origin + J xref."""

    verts: np.ndarray  # (nelt, 3, 2)
    origin: np.ndarray  # (nelt, 2)
    J: np.ndarray  # (nelt, 2, 2)
    Jinv: np.ndarray
    det: np.ndarray  # (nelt,), positive
    centroid: np.ndarray
    hscale: np.ndarray  # (nelt,), sqrt of twice the area


def geometry(mesh: Mesh) -> Geometry:
    verts = mesh.triangle_vertices()
    origin = verts[:, 0]
    J = np.stack([verts[:, 1] - verts[:, 0], verts[:, 2] - verts[:, 0]], axis=-1)
    det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
    Jinv = np.empty_like(J)
    Jinv[:, 0, 0] = J[:, 1, 1] / det
    Jinv[:, 0, 1] = -J[:, 0, 1] / det
    Jinv[:, 1, 0] = -J[:, 1, 0] / det
    Jinv[:, 1, 1] = J[:, 0, 0] / det
    return Geometry(
        verts=verts,
        origin=origin,
        J=J,
        Jinv=Jinv,
        det=det,
        centroid=verts.mean(axis=1),
        hscale=np.sqrt(np.abs(det)),
    )


def to_reference(geom: Geometry, elems, pts):
    """Pull physical points (..., 2) on the given elements back to the
    reference triangle. elems broadcasts against the leading axes."""
    rel = pts - geom.origin[elems][..., None, :]
    return np.einsum("...ij,...qj->...qi", geom.Jinv[elems], rel)


# ---------------------------------------------------------------------------
# DofSpace


@dataclass
class DofSpace:
    """A discrete space over a mesh (or its skeleton, for trace kinds).

    elt_dofs maps each element to its global dofs (volume kinds);
    edge_dofs maps each skeleton edge to its global dofs (trace kinds).
    constrained_dofs / constrained_values hold essential boundary data.
    """

    kind: str
    order: int
    mesh: Mesh
    ndof: int
    ncopies: int
    elt_dofs: Optional[np.ndarray] = None
    edge_dofs: Optional[np.ndarray] = None
    constrained_dofs: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    constrained_values: np.ndarray = field(default_factory=lambda: np.empty(0))
    payload: dict = field(default_factory=dict)

    @property
    def nloc(self) -> int:
        if self.elt_dofs is not None:
            return self.elt_dofs.shape[1]
        return self.edge_dofs.shape[1]

    def constraint_vector(self):
        """Full-length vector holding prescribed values on constrained dofs."""
        x = np.zeros(self.ndof)
        if len(self.constrained_dofs):
            x[self.constrained_dofs] = self.constrained_values
        return x


def _interleave(scalar_dofs, ncopies):
    """Expand scalar dof ids to interleaved vector dof ids."""
    scalar_dofs = np.asarray(scalar_dofs, dtype=np.int64)
    out = scalar_dofs[..., None] * ncopies + np.arange(ncopies)
    return out.reshape(scalar_dofs.shape[:-1] + (-1,))


# ---------------------------------------------------------------------------
# H1 and BrokenH1


def _h1_scalar_numbering(mesh: Mesh, geom: Geometry, p: int):
    """Global scalar numbering of lattice nodes by coordinate hashing."""
    ref = _ref_lattice(p)
    phys = geom.origin[:, None, :] + np.einsum("eij,qj->eqi", geom.J, ref)
    keys = np.round(phys, 10)
    ids = {}
    elt = np.empty((mesh.num_triangles, len(ref)), dtype=np.int64)
    for e in range(mesh.num_triangles):
        for l in range(len(ref)):
            key = (keys[e, l, 0] + 0.0, keys[e, l, 1] + 0.0)
            if key not in ids:
                ids[key] = len(ids)
            elt[e, l] = ids[key]
    return elt, len(ids), phys


def h1_space(mesh: Mesh, p: int, gamma0_constrained: bool = False, bc_fn=None, constrain_tag=GAMMA0) -> DofSpace:
    """Continuous vector-valued Lagrange space of order p.

    When gamma0_constrained is set, all dofs whose nodes lie on boundary
    edges with the given tag are constrained; bc_fn(pts) -> (n, 2) supplies
    their values (zero by default).
    """
    if p < 1:
        raise ValueError(f"H1 order must be at least 1, got {p}")
    geom = geometry(mesh)
    elt_scalar, nscalar, phys = _h1_scalar_numbering(mesh, geom, p)
    elt_dofs = _interleave(elt_scalar, 2)
    space = DofSpace(
        kind="H1",
        order=p,
        mesh=mesh,
        ndof=2 * nscalar,
        ncopies=2,
        elt_dofs=elt_dofs,
        payload={"geom": geom, "p": p},
    )
    if gamma0_constrained:
        _constrain_h1_boundary(space, mesh, p, elt_scalar, phys, bc_fn, constrain_tag)
    return space


def _constrain_h1_boundary(space, mesh, p, elt_scalar, phys, bc_fn, tag):
    """Constrain nodes sitting on tagged boundary edges."""
    cons = {}
    for eid in mesh.boundary_edge_ids(tag):
        a, b = mesh.edges[eid]
        va, vb = mesh.vertices[a], mesh.vertices[b]
        t0 = mesh.edge_tris[eid, 0]
        # nodes of the incident element lying on this edge segment
        for l in range(elt_scalar.shape[1]):
            x = phys[t0, l]
            d = vb - va
            ln2 = d @ d
            s = (x - va) @ d / ln2
            if -1e-10 <= s <= 1 + 1e-10:
                perp = abs((x - va)[0] * d[1] - (x - va)[1] * d[0]) / np.sqrt(ln2)
                if perp < 1e-10:
                    cons[int(elt_scalar[t0, l])] = x
    if not cons:
        return
    sids = np.array(sorted(cons), dtype=np.int64)
    pts = np.array([cons[s] for s in sids])
    vals = bc_fn(pts) if bc_fn is not None else np.zeros((len(sids), 2))
    space.constrained_dofs = _interleave(sids[:, None], 2).ravel()
    space.constrained_values = np.asarray(vals, dtype=float).ravel()


def broken_h1_space(mesh: Mesh, p: int) -> DofSpace:
    """Element-local vector Lagrange space (no inter-element sharing)."""
    if p < 1:
        raise ValueError(f"order must be at least 1, got {p}")
    geom = geometry(mesh)
    nloc_s = len(_ref_lattice(p))
    elt_scalar = np.arange(mesh.num_triangles * nloc_s, dtype=np.int64).reshape(
        mesh.num_triangles, nloc_s
    )
    return DofSpace(
        kind="BrokenH1",
        order=p,
        mesh=mesh,
        ndof=2 * mesh.num_triangles * nloc_s,
        ncopies=2,
        elt_dofs=_interleave(elt_scalar, 2),
        payload={"geom": geom, "p": p},
    )


# ---------------------------------------------------------------------------
# L2 spaces


_L2_KIND_COMPS = {
    "L2vec": None,  # vector valued, 2 copies
    "L2sym": _SYM_COMPS,
    "L2skew": _SKEW_COMPS,
}


def l2_space(mesh: Mesh, k: int, kind: str) -> DofSpace:
    """Discontinuous modal space of total degree <= k.

    kind is one of L2vec (2 components), L2sym (3 symmetric tensor
    components), L2skew (1 skew component). The basis is elementwise
    L2-orthonormal.
    """
    if k < 0:
        raise ValueError(f"L2 order must be nonnegative, got {k}")
    if kind not in _L2_KIND_COMPS:
        raise ValueError(f"unknown L2 kind {kind!r}")
    ncopies = 2 if kind == "L2vec" else len(_L2_KIND_COMPS[kind])
    geom = geometry(mesh)
    nmodes = len(_mono_exps(k))
    nloc = nmodes * ncopies
    elt_scalar = np.arange(mesh.num_triangles * nmodes, dtype=np.int64).reshape(
        mesh.num_triangles, nmodes
    )
    return DofSpace(
        kind=kind,
        order=k,
        mesh=mesh,
        ndof=mesh.num_triangles * nloc,
        ncopies=ncopies,
        elt_dofs=_interleave(elt_scalar, ncopies),
        payload={"geom": geom, "k": k},
    )


# ---------------------------------------------------------------------------
# H(div): Raviart-Thomas family built per physical element


def _rt_span_eval(k, centroid, hscale, pts):
    """Evaluate the RT_k span on physical points.

    pts: (nelt, nq, 2) (or broadcastable). Returns val (nelt, N, nq, 2)
    and div (nelt, N, nq)."""
    exps = _mono_exps(k)
    nm = len(exps)
    xt = (pts - centroid[:, None, :]) / hscale[:, None, None]
    mono = np.stack([xt[..., 0] ** i * xt[..., 1] ** j for (i, j) in exps], axis=1)
    gx = np.stack(
        [i * xt[..., 0] ** max(i - 1, 0) * xt[..., 1] ** j if i > 0 else np.zeros_like(xt[..., 0]) for (i, j) in exps],
        axis=1,
    )
    gy = np.stack(
        [j * xt[..., 0] ** i * xt[..., 1] ** max(j - 1, 0) if j > 0 else np.zeros_like(xt[..., 0]) for (i, j) in exps],
        axis=1,
    )
    top = [(i, j) for (i, j) in exps if i + j == k]
    ntop = len(top)
    N = 2 * nm + ntop
    nelt, nq = xt.shape[0], xt.shape[1]
    val = np.zeros((nelt, N, nq, 2))
    div = np.zeros((nelt, N, nq))
    h = hscale[:, None]
    val[:, :nm, :, 0] = mono
    div[:, :nm] = gx / h[..., None]
    val[:, nm : 2 * nm, :, 1] = mono
    div[:, nm : 2 * nm] = gy / h[..., None]
    for t, (i, j) in enumerate(top):
        mt = xt[..., 0] ** i * xt[..., 1] ** j
        val[:, 2 * nm + t, :, 0] = xt[..., 0] * mt
        val[:, 2 * nm + t, :, 1] = xt[..., 1] * mt
        div[:, 2 * nm + t] = (k + 2) * mt / h
    return val, div


def _rt_build(mesh: Mesh, geom: Geometry, sk: Skeleton, p: int):
    """Per-element RT_{p-1} nodal basis coefficients and local functional
    layout. Returns (C, k, nedge_mom, ninter) where C[e] maps span
    coefficients so that basis_l = sum_j C[e, j, l] span_j."""
    k = p - 1
    nmom = k + 1
    exps_int = _mono_exps(k - 1) if k >= 1 else ()
    ninter = 2 * len(exps_int)
    N = (k + 1) * (k + 3)
    nelt = mesh.num_triangles
    M = np.zeros((nelt, N, N))
    # edge moment functionals against the fixed normal in the global
    # edge parameter
    tq, twq = edge_rule(2 * k + 2)
    leg = legendre01_eval(nmom, tq)  # (nmom, qe)
    edges = mesh.edges
    everts = mesh.vertices[edges]  # (ne, 2, 2)
    for loc in range(3):
        eids = mesh.tri_edges[:, loc]
        va = everts[eids, 0]
        vb = everts[eids, 1]
        pts = va[:, None, :] + tq[None, :, None] * (vb - va)[:, None, :]
        sval, _ = _rt_span_eval(k, geom.centroid, geom.hscale, pts)
        nrm = sk.normals[eids]  # fixed normal
        vn = np.einsum("enqc,ec->enq", sval, nrm)
        rows = np.einsum("q,mq,enq->emn", twq, leg, vn)  # (nelt, nmom, N)
        M[:, loc * nmom : (loc + 1) * nmom, :] = rows
    if ninter:
        rule = triangle_rule(2 * k + 2)
        ref = rule.points
        pts = geom.origin[:, None, :] + np.einsum("eij,qj->eqi", geom.J, ref)
        wts = np.abs(geom.det)[:, None] * rule.weights[None, :]
        sval, _ = _rt_span_eval(k, geom.centroid, geom.hscale, pts)
        xt = (pts - geom.centroid[:, None, :]) / geom.hscale[:, None, None]
        qm = np.stack([xt[..., 0] ** i * xt[..., 1] ** j for (i, j) in exps_int], axis=1)
        area = 0.5 * np.abs(geom.det)
        base = 3 * nmom
        for c in range(2):
            rows = np.einsum("eq,emq,enq->emn", wts, qm, sval[..., c])
            M[:, base + c * len(exps_int) : base + (c + 1) * len(exps_int), :] = rows / area[:, None, None]
    C = np.linalg.inv(M)
    return C, k, nmom, ninter


def hdiv_space(mesh: Mesh, p: int, gamma1_constrained: bool = False, traction_fn=None) -> DofSpace:
    """Conforming Raviart-Thomas-family tensor space (2 rows) of order p.

    Edge normal traces have order p-1; interior edge dofs are shared
    between neighbours through the fixed-normal moment functionals. When
    gamma1_constrained is set, the normal-trace dofs on the traction
    boundary are constrained, with values projected from
    traction_fn(pts, normal) -> (n, 2) (zero by default).
    """
    if p < 1:
        raise ValueError(f"H(div) order must be at least 1, got {p}")
    geom = geometry(mesh)
    from .mesh import skeleton as make_skeleton

    sk = make_skeleton(mesh)
    C, k, nmom, ninter = _rt_build(mesh, geom, sk, p)
    nelt = mesh.num_triangles
    ne = mesh.num_edges
    nscalar = ne * nmom + nelt * ninter
    elt_scalar = np.empty((nelt, 3 * nmom + ninter), dtype=np.int64)
    for loc in range(3):
        eids = mesh.tri_edges[:, loc]
        elt_scalar[:, loc * nmom : (loc + 1) * nmom] = eids[:, None] * nmom + np.arange(nmom)
    if ninter:
        inter0 = ne * nmom
        elt_scalar[:, 3 * nmom :] = (
            inter0 + np.arange(nelt, dtype=np.int64)[:, None] * ninter + np.arange(ninter)
        )
    space = DofSpace(
        kind="Hdiv",
        order=p,
        mesh=mesh,
        ndof=2 * nscalar,
        ncopies=2,
        elt_dofs=_interleave(elt_scalar, 2),
        payload={"geom": geom, "skeleton": sk, "C": C, "k": k, "nmom": nmom, "ninter": ninter},
    )
    if gamma1_constrained:
        _constrain_hdiv_boundary(space, mesh, sk, nmom, traction_fn)
    return space


def _constrain_hdiv_boundary(space, mesh, sk, nmom, traction_fn):
    cons_scalar = []
    vals = []
    tq, twq = edge_rule(2 * space.order + 4)
    leg = legendre01_eval(nmom, tq)
    for eid in mesh.boundary_edge_ids(GAMMA1):
        a, b = mesh.edges[eid]
        va, vb = mesh.vertices[a], mesh.vertices[b]
        pts = va[None, :] + tq[:, None] * (vb - va)[None, :]
        if traction_fn is not None:
            g = np.asarray(traction_fn(pts, sk.normals[eid]), dtype=float)
        else:
            g = np.zeros((len(tq), 2))
        mom = np.einsum("q,mq,qr->mr", twq, leg, g)  # (nmom, 2 rows)
        for i in range(nmom):
            cons_scalar.append(eid * nmom + i)
            vals.append(mom[i])
    if cons_scalar:
        sids = np.array(cons_scalar, dtype=np.int64)
        space.constrained_dofs = _interleave(sids[:, None], 2).ravel()
        space.constrained_values = np.array(vals).ravel()


def broken_hdiv_space(mesh: Mesh, p: int) -> DofSpace:
    """Element-local Raviart-Thomas-family tensor space of order p."""
    if p < 1:
        raise ValueError(f"order must be at least 1, got {p}")
    geom = geometry(mesh)
    from .mesh import skeleton as make_skeleton

    sk = make_skeleton(mesh)
    C, k, nmom, ninter = _rt_build(mesh, geom, sk, p)
    nelt = mesh.num_triangles
    nloc_s = 3 * nmom + ninter
    elt_scalar = np.arange(nelt * nloc_s, dtype=np.int64).reshape(nelt, nloc_s)
    return DofSpace(
        kind="BrokenHdiv",
        order=p,
        mesh=mesh,
        ndof=2 * nelt * nloc_s,
        ncopies=2,
        elt_dofs=_interleave(elt_scalar, 2),
        payload={"geom": geom, "skeleton": sk, "C": C, "k": k, "nmom": nmom, "ninter": ninter},
    )


# ---------------------------------------------------------------------------
# trace spaces


def trace_spaces(sk: Skeleton, p: int, u0_fn=None):
    """Build (TraceH12, TraceHm12) on the skeleton.

    TraceH12: continuous piecewise order-p, 2 components, constrained on
    Gamma0 with values from u0_fn(pts) (zero by default). TraceHm12:
    per-edge discontinuous order-(p-1) Legendre modes of the normal flux
    with respect to the fixed normal, 2 components, constrained to zero
    on Gamma1 (the traction data enters through load vectors).
    """
    if p < 1:
        raise ValueError(f"trace order must be at least 1, got {p}")
    mesh = sk.mesh
    ne = mesh.num_edges
    nv = mesh.num_vertices
    nint = p - 1
    # --- TraceH12 scalar numbering: vertices then per-edge interiors
    edge_dofs_s = np.empty((ne, p + 1), dtype=np.int64)
    edge_dofs_s[:, 0] = mesh.edges[:, 0]
    edge_dofs_s[:, p] = mesh.edges[:, 1]
    for i in range(1, p):
        edge_dofs_s[:, i] = nv + (i - 1) + nint * np.arange(ne)
    nscalar = nv + nint * ne
    th12 = DofSpace(
        kind="TraceH12",
        order=p,
        mesh=mesh,
        ndof=2 * nscalar,
        ncopies=2,
        edge_dofs=_interleave(edge_dofs_s, 2),
        payload={"skeleton": sk, "p": p},
    )
    cons = {}
    for eid in mesh.boundary_edge_ids(GAMMA0):
        a, b = mesh.edges[eid]
        va, vb = mesh.vertices[a], mesh.vertices[b]
        for i in range(p + 1):
            t = i / p
            cons[int(edge_dofs_s[eid, i])] = va + t * (vb - va)
    if cons:
        sids = np.array(sorted(cons), dtype=np.int64)
        pts = np.array([cons[s] for s in sids])
        vals = u0_fn(pts) if u0_fn is not None else np.zeros((len(sids), 2))
        th12.constrained_dofs = _interleave(sids[:, None], 2).ravel()
        th12.constrained_values = np.asarray(vals, dtype=float).ravel()
    # --- TraceHm12
    nmom = p
    edge_dofs_m = np.arange(ne * nmom, dtype=np.int64).reshape(ne, nmom)
    thm12 = DofSpace(
        kind="TraceHm12",
        order=p - 1,
        mesh=mesh,
        ndof=2 * ne * nmom,
        ncopies=2,
        edge_dofs=_interleave(edge_dofs_m, 2),
        payload={"skeleton": sk, "nmom": nmom},
    )
    g1 = mesh.boundary_edge_ids(GAMMA1)
    if len(g1):
        sids = (edge_dofs_m[g1]).ravel()
        thm12.constrained_dofs = _interleave(np.sort(sids)[:, None], 2).ravel()
        thm12.constrained_values = np.zeros(len(thm12.constrained_dofs))
    return th12, thm12


def trace_edge_basis(space: DofSpace, t):
    """Per-edge vector basis values at parameters t, (ne, nloc, nq, 2).

    The parameter runs from the lower-numbered to the higher-numbered
    edge vertex, matching the skeleton tangent convention.
    """
    t = np.asarray(t, dtype=float)
    ne = space.mesh.num_edges
    if space.kind == "TraceH12":
        p = space.payload["p"]
        nodes = np.arange(p + 1) / p
        V = np.vander(nodes, increasing=True)
        mono = np.stack([t**k for k in range(p + 1)])
        lag = np.linalg.solve(V.T, mono)  # (p+1, nq)
        scalar = np.broadcast_to(lag[None], (ne, p + 1, len(t)))
    elif space.kind == "TraceHm12":
        nmom = space.payload["nmom"]
        leg = legendre01_eval(nmom, t)
        scalar = np.broadcast_to(leg[None], (ne, nmom, len(t)))
    else:
        raise ValueError(f"not a trace space: {space.kind}")
    nloc_s = scalar.shape[1]
    out = np.zeros((ne, nloc_s * 2, len(t), 2))
    out[:, 0::2, :, 0] = scalar
    out[:, 1::2, :, 1] = scalar
    return out


# ---------------------------------------------------------------------------
# basis evaluation on elements


@dataclass
class Basis:
    """Batched element basis arrays for one space at fixed points.

    val: (nelt, nloc, nq, 2) for vector kinds or (nelt, nloc, nq, 2, 2)
    for tensor kinds; grad: (nelt, nloc, nq, 2, 2) for H1 kinds; div:
    (nelt, nloc, nq, 2) for H(div) kinds.
    """

    val: np.ndarray
    grad: Optional[np.ndarray] = None
    div: Optional[np.ndarray] = None


def _h1_volume_basis(space, elems, ref_pts, with_grad=True):
    geom = space.payload["geom"]
    p = space.payload["p"]
    lag = lagrange_eval(p, ref_pts)  # (nloc_s, nq)
    nloc_s, nq = lag.shape
    nelt = len(elems)
    val = np.zeros((nelt, 2 * nloc_s, nq, 2))
    val[:, 0::2, :, 0] = lag[None]
    val[:, 1::2, :, 1] = lag[None]
    grad = None
    if with_grad:
        gref = lagrange_grad(p, ref_pts)  # (nloc_s, nq, 2)
        gphys = np.einsum("lqk,ekj->elqj", gref, geom.Jinv[elems])
        grad = np.zeros((nelt, 2 * nloc_s, nq, 2, 2))
        grad[:, 0::2, :, 0, :] = gphys
        grad[:, 1::2, :, 1, :] = gphys
    return Basis(val=val, grad=grad)


def _l2_volume_basis(space, elems, ref_pts):
    geom = space.payload["geom"]
    k = space.payload["k"]
    modal = ortho_modal_eval(k, ref_pts)  # (nm, nq)
    nm, nq = modal.shape
    nelt = len(elems)
    scal = modal[None] / np.sqrt(np.abs(geom.det[elems]))[:, None, None]
    if space.kind == "L2vec":
        val = np.zeros((nelt, 2 * nm, nq, 2))
        val[:, 0::2, :, 0] = scal
        val[:, 1::2, :, 1] = scal
        return Basis(val=val)
    comps = _L2_KIND_COMPS[space.kind]
    nc = len(comps)
    val = np.zeros((nelt, nc * nm, nq, 2, 2))
    for c in range(nc):
        val[:, c::nc] = scal[..., None, None] * comps[c]
    return Basis(val=val)


def _hdiv_basis_at(space, elems, phys_pts):
    """Tensor H(div) basis at physical points (nelt, nq, 2)."""
    geom = space.payload["geom"]
    C = space.payload["C"][elems]
    k = space.payload["k"]
    sval, sdiv = _rt_span_eval(k, geom.centroid[elems], geom.hscale[elems], phys_pts)
    bval_s = np.einsum("ejl,ejqc->elqc", C, sval)
    bdiv_s = np.einsum("ejl,ejq->elq", C, sdiv)
    nelt, nloc_s, nq = bdiv_s.shape
    val = np.zeros((nelt, 2 * nloc_s, nq, 2, 2))
    div = np.zeros((nelt, 2 * nloc_s, nq, 2))
    val[:, 0::2, :, 0, :] = bval_s
    val[:, 1::2, :, 1, :] = bval_s
    div[:, 0::2, :, 0] = bdiv_s
    div[:, 1::2, :, 1] = bdiv_s
    return Basis(val=val, div=div)


def volume_basis(space: DofSpace, elems, ref_pts) -> Basis:
    """Basis arrays of a volume space at shared reference points."""
    elems = np.asarray(elems, dtype=np.int64)
    if space.kind in ("H1", "BrokenH1"):
        return _h1_volume_basis(space, elems, ref_pts)
    if space.kind in ("L2vec", "L2sym", "L2skew"):
        return _l2_volume_basis(space, elems, ref_pts)
    if space.kind in ("Hdiv", "BrokenHdiv"):
        geom = space.payload["geom"]
        pts = geom.origin[elems][:, None, :] + np.einsum(
            "eij,qj->eqi", geom.J[elems], np.asarray(ref_pts)
        )
        return _hdiv_basis_at(space, elems, pts)
    raise ValueError(f"volume basis undefined for kind {space.kind}")


def edge_phys_points(mesh: Mesh, elems, t):
    """Physical points of each element's three edges in the global edge
    parameter: (nelt, 3, nq, 2)."""
    t = np.asarray(t, dtype=float)
    ev = mesh.vertices[mesh.edges[mesh.tri_edges[elems]]]  # (nelt, 3, 2, 2)
    va, vb = ev[:, :, 0], ev[:, :, 1]
    return va[:, :, None, :] + t[None, None, :, None] * (vb - va)[:, :, None, :]


def element_edge_values(space: DofSpace, elems, t):
    """Trace of element basis functions on the element's own edges.

    For H1-type spaces returns values (nelt, nloc, 3, nq, 2); for
    H(div)-type spaces returns outward normal traces (nelt, nloc, 3, nq, 2).
    """
    elems = np.asarray(elems, dtype=np.int64)
    mesh = space.mesh
    pts = edge_phys_points(mesh, elems, t)  # (nelt, 3, nq, 2)
    nelt, _, nq, _ = pts.shape
    if space.kind in ("H1", "BrokenH1"):
        geom = space.payload["geom"]
        p = space.payload["p"]
        out = np.empty((nelt, space.nloc, 3, nq, 2))
        Linv = _lagrange_matrix(p)
        exps = _mono_exps(p)
        for loc in range(3):
            ref = to_reference(geom, elems, pts[:, loc])
            mono = _mono_eval(exps, ref)  # (nmodes, nelt, nq)
            lag = np.einsum("nl,neq->elq", Linv, mono)
            out[:, 0::2, loc, :, 0] = lag
            out[:, 1::2, loc, :, 0] = 0.0
            out[:, 0::2, loc, :, 1] = 0.0
            out[:, 1::2, loc, :, 1] = lag
        return out
    if space.kind in ("Hdiv", "BrokenHdiv"):
        from .mesh import skeleton as make_skeleton

        sk = space.payload["skeleton"]
        out = np.empty((nelt, space.nloc, 3, nq, 2))
        for loc in range(3):
            b = _hdiv_basis_at(space, elems, pts[:, loc])
            eids = mesh.tri_edges[elems, loc]
            nrm = sk.normals[eids] * sk.tri_signs[elems, loc][:, None]  # outward
            out[:, :, loc] = np.einsum("elqij,ej->elqi", b.val, nrm)
        return out
    raise ValueError(f"edge values undefined for kind {space.kind}")


# ---------------------------------------------------------------------------
# interpolation and field evaluation


def interpolate(space: DofSpace, exact, what: str = "auto"):
    """Interpolate an exact-solution field into the space.

    exact provides displacement / stress callables (an ExactSolution or a
    compatible object). Returns a full coefficient vector.
    """
    mesh = space.mesh
    coeffs = np.zeros(space.ndof)
    if space.kind in ("H1", "BrokenH1"):
        geom = space.payload["geom"]
        p = space.payload["p"]
        ref = _ref_lattice(p)
        phys = geom.origin[:, None, :] + np.einsum("eij,qj->eqi", geom.J, ref)
        vals = exact.displacement(phys)  # (nelt, nloc_s, 2)
        coeffs[space.elt_dofs[:, 0::2]] = vals[..., 0]
        coeffs[space.elt_dofs[:, 1::2]] = vals[..., 1]
        return coeffs
    if space.kind in ("L2vec", "L2sym", "L2skew"):
        geom = space.payload["geom"]
        k = space.payload["k"]
        rule = triangle_rule(2 * k + 8)
        modal = ortho_modal_eval(k, rule.points)
        phys = geom.origin[:, None, :] + np.einsum("eij,qj->eqi", geom.J, rule.points)
        scal = modal[None] / np.sqrt(np.abs(geom.det))[:, None, None]
        wts = np.abs(geom.det)[:, None] * rule.weights[None, :]
        if space.kind == "L2vec":
            f = exact.displacement(phys)
            proj = np.einsum("eq,emq,eqc->emc", wts, scal, f)
            coeffs[space.elt_dofs[:, 0::2]] = proj[..., 0]
            coeffs[space.elt_dofs[:, 1::2]] = proj[..., 1]
            return coeffs
        if space.kind == "L2skew":
            g = exact.displacement_gradient(phys)
            skw = 0.5 * (g - np.swapaxes(g, -1, -2))
            comps = _SKEW_COMPS
            f = np.einsum("eqij,cij->eqc", skw, comps)
        else:
            sig = exact.stress(phys)
            comps = _SYM_COMPS
            f = np.einsum("eqij,cij->eqc", sig, comps)
        nc = len(comps)
        proj = np.einsum("eq,emq,eqc->emc", wts, scal, f)
        for c in range(nc):
            coeffs[space.elt_dofs[:, c::nc]] = proj[..., c]
        return coeffs
    if space.kind in ("Hdiv", "BrokenHdiv"):
        return _interpolate_hdiv(space, exact)
    if space.kind == "TraceH12":
        sk = space.payload["skeleton"]
        p = space.payload["p"]
        mesh = space.mesh
        for eid in range(mesh.num_edges):
            a, b = mesh.edges[eid]
            va, vb = mesh.vertices[a], mesh.vertices[b]
            tt = np.arange(p + 1) / p
            pts = va[None] + tt[:, None] * (vb - va)[None]
            vals = exact.displacement(pts)
            coeffs[space.edge_dofs[eid, 0::2]] = vals[:, 0]
            coeffs[space.edge_dofs[eid, 1::2]] = vals[:, 1]
        return coeffs
    if space.kind == "TraceHm12":
        sk = space.payload["skeleton"]
        nmom = space.payload["nmom"]
        tq, twq = edge_rule(2 * nmom + 8)
        leg = legendre01_eval(nmom, tq)
        for eid in range(mesh.num_edges):
            a, b = mesh.edges[eid]
            va, vb = mesh.vertices[a], mesh.vertices[b]
            pts = va[None] + tq[:, None] * (vb - va)[None]
            g = exact.traction(pts, sk.normals[eid])
            mom = np.einsum("q,mq,qc->mc", twq, leg, g)
            coeffs[space.edge_dofs[eid, 0::2]] = mom[:, 0]
            coeffs[space.edge_dofs[eid, 1::2]] = mom[:, 1]
        return coeffs
    raise ValueError(f"interpolation undefined for kind {space.kind}")


def _interpolate_hdiv(space, exact):
    mesh = space.mesh
    geom = space.payload["geom"]
    sk = space.payload["skeleton"]
    k = space.payload["k"]
    nmom = space.payload["nmom"]
    ninter = space.payload["ninter"]
    coeffs = np.zeros(space.ndof)
    tq, twq = edge_rule(2 * k + 10)
    leg = legendre01_eval(nmom, tq)
    # functional values per element, then scatter (shared dofs get the
    # same value from both sides, so plain assignment is safe)
    nelt = mesh.num_triangles
    nloc_s = 3 * nmom + ninter
    F = np.empty((nelt, nloc_s, 2))
    for loc in range(3):
        eids = mesh.tri_edges[:, loc]
        ev = mesh.vertices[mesh.edges[eids]]
        pts = ev[:, None, 0, :] + tq[None, :, None] * (ev[:, 1] - ev[:, 0])[:, None, :]
        sig = exact.stress(pts)  # (nelt, qe, 2, 2)
        vn = np.einsum("eqij,ej->eqi", sig, sk.normals[eids])
        F[:, loc * nmom : (loc + 1) * nmom] = np.einsum("q,mq,eqc->emc", twq, leg, vn)
    if ninter:
        exps_int = _mono_exps(k - 1)
        rule = triangle_rule(2 * k + 10)
        pts = geom.origin[:, None, :] + np.einsum("eij,qj->eqi", geom.J, rule.points)
        wts = np.abs(geom.det)[:, None] * rule.weights[None, :]
        sig = exact.stress(pts)
        xt = (pts - geom.centroid[:, None, :]) / geom.hscale[:, None, None]
        qm = np.stack([xt[..., 0] ** i * xt[..., 1] ** j for (i, j) in exps_int], axis=1)
        area = 0.5 * np.abs(geom.det)
        base = 3 * nmom
        nint_m = len(exps_int)
        for c in range(2):
            # component c of each stress row against the interior moments
            rows = np.einsum("eq,emq,eqr->emr", wts, qm, sig[..., c])
            F[:, base + c * nint_m : base + (c + 1) * nint_m] = rows / area[:, None, None]
    coeffs[space.elt_dofs[:, 0::2]] = F[..., 0]
    coeffs[space.elt_dofs[:, 1::2]] = F[..., 1]
    return coeffs


def evaluate_field(space: DofSpace, coeffs, e: int, phys_pts):
    """Evaluate the discrete field of one element at physical points."""
    phys_pts = np.asarray(phys_pts, dtype=float)
    elems = np.array([e])
    x = coeffs[space.elt_dofs[e]]
    if space.kind in ("H1", "BrokenH1"):
        geom = space.payload["geom"]
        ref = to_reference(geom, elems, phys_pts[None])[0]
        lag = lagrange_eval(space.payload["p"], ref)
        out = np.zeros(phys_pts.shape[:-1] + (2,))
        out[..., 0] = x[0::2] @ lag
        out[..., 1] = x[1::2] @ lag
        return out
    if space.kind in ("L2vec", "L2sym", "L2skew"):
        geom = space.payload["geom"]
        ref = to_reference(geom, elems, phys_pts[None])[0]
        modal = ortho_modal_eval(space.payload["k"], ref) / np.sqrt(np.abs(geom.det[e]))
        if space.kind == "L2vec":
            out = np.zeros(phys_pts.shape[:-1] + (2,))
            out[..., 0] = x[0::2] @ modal
            out[..., 1] = x[1::2] @ modal
            return out
        comps = _L2_KIND_COMPS[space.kind]
        nc = len(comps)
        out = np.zeros(phys_pts.shape[:-1] + (2, 2))
        for c in range(nc):
            out += (x[c::nc] @ modal)[..., None, None] * comps[c]
        return out
    if space.kind in ("Hdiv", "BrokenHdiv"):
        b = _hdiv_basis_at(space, elems, phys_pts[None])
        return np.einsum("l,lqij->qij", x, b.val[0])
    raise ValueError(f"evaluation undefined for kind {space.kind}")


def evaluate_field_gradient(space: DofSpace, coeffs, e: int, phys_pts):
    """Gradient of an H1-type field on one element at physical points."""
    if space.kind not in ("H1", "BrokenH1"):
        raise ValueError(f"gradient evaluation needs an H1 kind, got {space.kind}")
    phys_pts = np.asarray(phys_pts, dtype=float)
    elems = np.array([e])
    geom = space.payload["geom"]
    ref = to_reference(geom, elems, phys_pts[None])[0]
    gref = lagrange_grad(space.payload["p"], ref)  # (nloc_s, nq, 2)
    gphys = np.einsum("lqk,kj->lqj", gref, geom.Jinv[e])
    x = coeffs[space.elt_dofs[e]]
    out = np.zeros(phys_pts.shape[:-1] + (2, 2))
    out[..., 0, :] = np.einsum("l,lqj->qj", x[0::2], gphys)
    out[..., 1, :] = np.einsum("l,lqj->qj", x[1::2], gphys)
    return out


def evaluate_trace_field(space: DofSpace, coeffs, eid: int, t):
    """Evaluate a trace field on one skeleton edge at parameters t."""
    basis = trace_edge_basis(space, t)[eid]  # (nloc, nq, 2)
    x = coeffs[space.edge_dofs[eid]]
    return np.einsum("l,lqc->qc", x, basis)
