"""Discrete space tests: dof counts, interpolation exactness, normal-trace
continuity, broken embeddings, and the discrete exact sequence."""

import numpy as np
import pytest

from dpgelast.mesh import build_square_mesh, build_lshape_mesh, refine, skeleton
from dpgelast.quadrature import triangle_rule, edge_rule
from dpgelast.spaces import (
    h1_space,
    broken_h1_space,
    hdiv_space,
    broken_hdiv_space,
    l2_space,
    trace_spaces,
    volume_basis,
    element_edge_values,
    trace_edge_basis,
    interpolate,
    evaluate_field,
    evaluate_field_gradient,
    evaluate_trace_field,
    geometry,
    ortho_modal_eval,
)


@pytest.fixture(scope="module")
def mesh():
    """Nonuniform mesh so no accidental structure hides bugs."""
    m = build_square_mesh(2)
    m = refine(m, {0, 3})
    m = refine(m, {1})
    return m


class PolyField:
    """Polynomial manufactured field used as an interpolation oracle."""

    def __init__(self, deg):
        self.deg = deg

    def displacement(self, pts):
        pts = np.asarray(pts, dtype=float)
        x, y = pts[..., 0], pts[..., 1]
        if self.deg == 1:
            u1, u2 = 0.3 + x - 2 * y, -1.0 + 0.5 * x + y
        else:
            u1, u2 = x**2 - y + 0.25 * x * y, 0.5 * y**2 + x
        return np.stack([u1, u2], axis=-1)

    def displacement_gradient(self, pts):
        pts = np.asarray(pts, dtype=float)
        x, y = pts[..., 0], pts[..., 1]
        g = np.zeros(pts.shape[:-1] + (2, 2))
        if self.deg == 1:
            g[..., 0, 0], g[..., 0, 1] = 1.0, -2.0
            g[..., 1, 0], g[..., 1, 1] = 0.5, 1.0
        else:
            g[..., 0, 0], g[..., 0, 1] = 2 * x + 0.25 * y, -1.0 + 0.25 * x
            g[..., 1, 0], g[..., 1, 1] = 1.0, y
        return g

    def stress(self, pts):
        # any symmetric polynomial tensor of matching degree
        pts = np.asarray(pts, dtype=float)
        x, y = pts[..., 0], pts[..., 1]
        s = np.zeros(pts.shape[:-1] + (2, 2))
        if self.deg == 1:
            s[..., 0, 0] = 1.0 + x
            s[..., 1, 1] = 2.0 - y
            s[..., 0, 1] = s[..., 1, 0] = 0.5 * (x + y)
        else:
            s[..., 0, 0] = x * y
            s[..., 1, 1] = 1.0 + y**2
            s[..., 0, 1] = s[..., 1, 0] = x**2 - y
        return s

    def traction(self, pts, normal):
        return np.einsum("...ij,j->...i", self.stress(pts), np.asarray(normal))


def random_phys_points(mesh, e, rng, n=15):
    v = mesh.triangle_vertices()[e]
    b = rng.dirichlet(np.ones(3), size=n)
    return b @ v


class TestCounts:
    def test_h1_square_n1(self):
        m = build_square_mesh(1)
        assert h1_space(m, 1).ndof == 2 * 4
        assert h1_space(m, 2).ndof == 2 * 9

    def test_trace_counts_square_n1(self):
        m = build_square_mesh(1)
        th12, thm12 = trace_spaces(skeleton(m), 1)
        assert th12.ndof == 2 * 4  # vertices only at p=1
        assert thm12.ndof == 2 * 5  # one mode per edge

    def test_broken_h1_counts(self, mesh):
        b = broken_h1_space(mesh, 2)
        assert b.ndof == 2 * 6 * mesh.num_triangles

    def test_l2_counts(self, mesh):
        assert l2_space(mesh, 1, "L2vec").ndof == 2 * 3 * mesh.num_triangles
        assert l2_space(mesh, 0, "L2sym").ndof == 3 * mesh.num_triangles
        assert l2_space(mesh, 0, "L2skew").ndof == mesh.num_triangles

    def test_hdiv_counts(self):
        m = build_square_mesh(1)
        # order 1: one normal moment per edge, two tensor rows
        assert hdiv_space(m, 1).ndof == 2 * m.num_edges

    def test_gamma0_constraints_cover_boundary(self):
        m = build_square_mesh(2)
        s = h1_space(m, 2, gamma0_constrained=True)
        # 16 boundary nodes at p=2 on the 2x2 square, two components
        assert len(s.constrained_dofs) == 2 * 16

    def test_invalid_orders_rejected(self, mesh):
        with pytest.raises(ValueError):
            h1_space(mesh, 0)
        with pytest.raises(ValueError):
            hdiv_space(mesh, 0)
        with pytest.raises(ValueError):
            l2_space(mesh, -1, "L2vec")
        with pytest.raises(ValueError):
            l2_space(mesh, 0, "bogus")


class TestInterpolation:
    @pytest.mark.parametrize("p,deg", [(1, 1), (2, 1), (2, 2), (3, 2)])
    def test_h1_reproduces_polynomials(self, mesh, p, deg):
        field = PolyField(deg)
        space = h1_space(mesh, p)
        coeffs = interpolate(space, field)
        rng = np.random.default_rng(10)
        for e in (0, mesh.num_triangles // 2, mesh.num_triangles - 1):
            pts = random_phys_points(mesh, e, rng)
            assert np.abs(evaluate_field(space, coeffs, e, pts) - field.displacement(pts)).max() < 1e-11
            assert (
                np.abs(
                    evaluate_field_gradient(space, coeffs, e, pts)
                    - field.displacement_gradient(pts)
                ).max()
                < 1e-10
            )

    @pytest.mark.parametrize("p,deg", [(2, 1), (3, 2)])
    def test_hdiv_reproduces_polynomial_stress(self, mesh, p, deg):
        # order p reproduces tensor polynomials of degree p-1
        field = PolyField(deg)
        space = hdiv_space(mesh, p)
        coeffs = interpolate(space, field)
        rng = np.random.default_rng(11)
        for e in (0, mesh.num_triangles - 1):
            pts = random_phys_points(mesh, e, rng)
            assert np.abs(evaluate_field(space, coeffs, e, pts) - field.stress(pts)).max() < 1e-10

    def test_l2_projection_reproduces_polynomials(self, mesh):
        field = PolyField(2)
        for kind, exactf in (
            ("L2vec", field.displacement),
            ("L2sym", field.stress),
        ):
            space = l2_space(mesh, 2, kind)
            coeffs = interpolate(space, field)
            rng = np.random.default_rng(12)
            for e in (1, mesh.num_triangles - 2):
                pts = random_phys_points(mesh, e, rng)
                assert np.abs(evaluate_field(space, coeffs, e, pts) - exactf(pts)).max() < 1e-11

    def test_trace_h12_matches_conforming_trace(self, mesh):
        # trace of an H1-conforming discrete field lies exactly in TraceH12
        field = PolyField(2)
        p = 2
        space = h1_space(mesh, p)
        coeffs = interpolate(space, field)
        th12, _ = trace_spaces(skeleton(mesh), p)
        tc = interpolate(th12, field)
        t = np.linspace(0, 1, 9)
        for eid in range(0, mesh.num_edges, 3):
            e = mesh.edge_tris[eid, 0]
            a, b = mesh.edges[eid]
            pts = mesh.vertices[a][None] + t[:, None] * (mesh.vertices[b] - mesh.vertices[a])[None]
            v1 = evaluate_field(space, coeffs, e, pts)
            v2 = evaluate_trace_field(th12, tc, eid, t)
            assert np.abs(v1 - v2).max() < 1e-11

    def test_trace_hm12_moments(self, mesh):
        field = PolyField(1)
        sk = skeleton(mesh)
        _, thm12 = trace_spaces(sk, 2)
        coeffs = interpolate(thm12, field)
        t, w = edge_rule(8)
        for eid in (0, mesh.num_edges - 1):
            a, b = mesh.edges[eid]
            pts = mesh.vertices[a][None] + t[:, None] * (mesh.vertices[b] - mesh.vertices[a])[None]
            exact = field.traction(pts, sk.normals[eid])
            got = evaluate_trace_field(thm12, coeffs, eid, t)
            assert np.abs(got - exact).max() < 1e-11


class TestConformity:
    def test_hdiv_normal_trace_continuity(self, mesh):
        space = hdiv_space(mesh, 2)
        rng = np.random.default_rng(13)
        coeffs = rng.standard_normal(space.ndof)
        t = np.linspace(0.05, 0.95, 7)
        elems = np.arange(mesh.num_triangles)
        ev = element_edge_values(space, elems, t)  # outward normal traces
        for eid in range(mesh.num_edges):
            t0, t1 = mesh.edge_tris[eid]
            if t1 == -1:
                continue
            l0 = int(np.where(mesh.tri_edges[t0] == eid)[0][0])
            l1 = int(np.where(mesh.tri_edges[t1] == eid)[0][0])
            v0 = np.einsum("l,lqc->qc", coeffs[space.elt_dofs[t0]], ev[t0, :, l0])
            v1 = np.einsum("l,lqc->qc", coeffs[space.elt_dofs[t1]], ev[t1, :, l1])
            # outward normals oppose, so the traces must cancel
            assert np.abs(v0 + v1).max() < 1e-9

    def test_h1_single_valued_at_shared_nodes(self, mesh):
        space = h1_space(mesh, 2)
        rng = np.random.default_rng(14)
        coeffs = rng.standard_normal(space.ndof)
        t = np.linspace(0, 1, 5)
        for eid in range(0, mesh.num_edges, 2):
            t0, t1 = mesh.edge_tris[eid]
            if t1 == -1:
                continue
            a, b = mesh.edges[eid]
            pts = mesh.vertices[a][None] + t[:, None] * (mesh.vertices[b] - mesh.vertices[a])[None]
            v0 = evaluate_field(space, coeffs, t0, pts)
            v1 = evaluate_field(space, coeffs, t1, pts)
            assert np.abs(v0 - v1).max() < 1e-10

    def test_conforming_embeds_into_broken(self, mesh):
        conf = h1_space(mesh, 2)
        brok = broken_h1_space(mesh, 2)
        rng = np.random.default_rng(15)
        x = rng.standard_normal(conf.ndof)
        xb = np.zeros(brok.ndof)
        xb[brok.elt_dofs] = x[conf.elt_dofs]
        pts = random_phys_points(mesh, 2, rng)
        assert np.allclose(
            evaluate_field(conf, x, 2, pts), evaluate_field(brok, xb, 2, pts), atol=1e-12
        )
        # and back losslessly
        xr = np.zeros(conf.ndof)
        xr[conf.elt_dofs] = xb[brok.elt_dofs]
        assert np.array_equal(xr, x)


class TestExactSequence:
    def test_div_maps_into_l2(self, mesh):
        # div of every H(div) basis function lies in the order p-1 L2 space
        p = 2
        space = broken_hdiv_space(mesh, p)
        rule = triangle_rule(2 * p + 4)
        elems = np.arange(mesh.num_triangles)
        basis = volume_basis(space, elems, rule.points)
        geom = geometry(mesh)
        modal = ortho_modal_eval(p - 1, rule.points)
        wts = np.abs(geom.det)[:, None] * rule.weights[None, :]
        scal = modal[None] / np.sqrt(np.abs(geom.det))[:, None, None]
        for c in range(2):
            d = basis.div[..., c]  # (nelt, nloc, nq)
            proj = np.einsum("eq,emq,elq->elm", wts, scal, d)
            recon = np.einsum("elm,emq->elq", proj, scal)
            assert np.abs(recon - d).max() < 1e-9


class TestGramAndQuadrature:
    def test_l2_mass_is_identity(self, mesh):
        space = l2_space(mesh, 2, "L2sym")
        rule = triangle_rule(8)
        elems = np.arange(mesh.num_triangles)
        basis = volume_basis(space, elems, rule.points)
        geom = geometry(mesh)
        wts = np.abs(geom.det)[:, None] * rule.weights[None, :]
        v = basis.val.reshape(basis.val.shape[:3] + (-1,))
        M = np.einsum("eq,emqk,enqk->emn", wts, v, v)
        eye = np.eye(M.shape[1])
        assert np.abs(M - eye[None]).max() < 1e-12

    @pytest.mark.parametrize("p,dp", [(1, 1), (2, 1), (3, 2)])
    def test_assembly_quadrature_degree(self, p, dp):
        # rules of exactness degree >= 2(p+dp)+2 integrate those monomials
        degree = 2 * (p + dp) + 2
        rule = triangle_rule(degree)
        import math

        for i in range(degree + 1):
            for j in range(degree + 1 - i):
                val = np.sum(rule.weights * rule.points[:, 0] ** i * rule.points[:, 1] ** j)
                exact = math.factorial(i) * math.factorial(j) / math.factorial(i + j + 2)
                assert abs(val - exact) < 1e-13


class TestConstraints:
    def test_gamma1_traction_constraint_values(self):
        m = build_lshape_mesh()
        field = PolyField(1)
        space = hdiv_space(m, 2, gamma1_constrained=True, traction_fn=field.traction)
        coeffs = interpolate(space, field)
        x = space.constraint_vector()
        assert np.abs(x[space.constrained_dofs] - coeffs[space.constrained_dofs]).max() < 1e-12

    def test_gamma0_displacement_constraint_values(self):
        m = build_lshape_mesh()
        field = PolyField(1)
        space = h1_space(m, 2, gamma0_constrained=True, bc_fn=field.displacement)
        coeffs = interpolate(space, field)
        assert np.abs(coeffs[space.constrained_dofs] - space.constrained_values).max() < 1e-12
