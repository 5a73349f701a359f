import math
from fractions import Fraction

import numpy as np
import pytest

from wgstokes.mesh import mesh_from_cells, nonconvex_l_mesh, uniform_triangle_mesh
from wgstokes.weakops import ElementFactory, project_edge, raised_degree

from oracles import polygon_monomial_integral, segment_monomial_integral

REF_TRIANGLE = np.array([(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)])


def single_cell_mesh(coords):
    return mesh_from_cells(np.asarray(coords, dtype=float),
                           [list(range(len(coords)))])


def constant_field_dofs(layout, cx, cy):
    """Local DOF vector of the constant weak function (cx, cy)."""
    vd = np.zeros(layout.n_total)
    vd[0] = cx
    vd[layout.dim_interior] = cy
    for e in range(layout.n_edges):
        sl = layout.edge_slice(e)
        vd[sl.start] = cx
        vd[sl.start + layout.per_edge] = cy
    return vd


def polynomial_field_dofs(mesh, cid, ops, coeffs):
    """Insert v0 with given interior coefficients and vb = its edge traces."""
    lay = ops.layout

    def u(pts):
        return ops.eval_interior(coeffs, pts).T

    vd = np.zeros(lay.n_total)
    vd[:lay.n_interior] = coeffs.ravel()
    for e, eid in enumerate(mesh.cells[cid].edge_ids):
        vd[lay.edge_slice(e)] = project_edge(mesh, eid, ops.k, u).ravel()
    return vd


class TestRaisedDegree:
    def test_triangle(self):
        mesh = uniform_triangle_mesh(1)
        assert raised_degree(mesh.cells[0], 1) == 3

    def test_nonconvex_hexagon(self):
        mesh = nonconvex_l_mesh(1)
        hexagon = mesh.cells[0]
        assert not hexagon.convex
        assert raised_degree(hexagon, 2) == 13

    def test_convex_quad(self):
        mesh = nonconvex_l_mesh(1)
        square = mesh.cells[1]
        assert square.convex
        assert raised_degree(square, 1) == 4

    def test_invalid_order(self):
        mesh = uniform_triangle_mesh(1)
        with pytest.raises(ValueError):
            raised_degree(mesh.cells[0], 0)


class TestWeakOperatorsBasics:
    @pytest.mark.parametrize("builder,n", [(uniform_triangle_mesh, 1),
                                           (nonconvex_l_mesh, 1)])
    @pytest.mark.parametrize("k", [1, 2])
    def test_constants_annihilated(self, builder, n, k):
        mesh = builder(n)
        factory = ElementFactory(mesh, k)
        for cid in range(mesh.n_cells):
            ops = factory(cid)
            vd = constant_field_dofs(ops.layout, 1.3, -0.7)
            assert np.abs(ops.apply_weak_gradient(vd)).max() < 1e-10
            assert np.abs(ops.apply_weak_divergence(vd)).max() < 1e-10
            assert np.abs(ops.stiffness @ vd).max() < 1e-10

    def test_linear_field_gradient(self):
        # v0 = (x, 0) with vb = trace: weak gradient is the constant tensor
        # [[1, 0], [0, 0]]
        mesh = single_cell_mesh(REF_TRIANGLE)
        factory = ElementFactory(mesh, 1)
        ops = factory(0)
        coeffs = np.zeros((2, ops.layout.dim_interior))
        # x = centroid_x + diameter * phi_(1,0)
        coeffs[0, 0] = ops.centroid[0]
        coeffs[0, 1] = ops.diameter
        vd = polynomial_field_dofs(mesh, 0, ops, coeffs)
        tensor = ops.apply_weak_gradient(vd)
        pts = ops.err_points
        vals = np.stack([ops.eval_elevated(tensor[b], pts) for b in range(4)])
        assert np.allclose(vals[0], 1.0, atol=1e-11)
        assert np.abs(vals[1:]).max() < 1e-11

    @pytest.mark.parametrize("builder", [uniform_triangle_mesh, nonconvex_l_mesh])
    def test_divergence_of_identity_field(self, builder):
        # v0 = (x, y), vb = trace: weak divergence is the constant 2
        mesh = builder(1)
        factory = ElementFactory(mesh, 1)
        for cid in range(mesh.n_cells):
            ops = factory(cid)
            coeffs = np.zeros((2, ops.layout.dim_interior))
            coeffs[0, 0] = ops.centroid[0]
            coeffs[0, 1] = ops.diameter
            coeffs[1, 0] = ops.centroid[1]
            coeffs[1, 2] = ops.diameter
            vd = polynomial_field_dofs(mesh, cid, ops, coeffs)
            div = ops.apply_weak_divergence(vd)
            vals = ops.eval_elevated(div, ops.err_points)
            assert np.allclose(vals, 2.0, atol=1e-11)

    def test_normal_trace_divergence_is_perimeter(self):
        # v0 = 0, vb = outward normal on each edge of the unit square:
        # (weak div, 1) = integral of n.n over the boundary = perimeter 4
        square = np.array([(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)])
        mesh = single_cell_mesh(square)
        factory = ElementFactory(mesh, 1)
        ops = factory(0)
        lay = ops.layout
        vd = np.zeros(lay.n_total)
        for e, edge in enumerate(mesh.cells[0].edge_ids):
            normal = mesh.edges[edge].normals[0]
            sl = lay.edge_slice(e)
            vd[sl.start] = normal[0]
            vd[sl.start + lay.per_edge] = normal[1]
        div = ops.apply_weak_divergence(vd)
        integral = ops.err_weights @ ops.eval_elevated(div, ops.err_points)
        assert integral == pytest.approx(4.0, abs=1e-10)

    def test_weak_gradient_matrix_matches_apply(self):
        mesh = nonconvex_l_mesh(1)
        factory = ElementFactory(mesh, 1)
        ops = factory(0)
        rng = np.random.default_rng(5)
        vd = rng.standard_normal(ops.layout.n_total)
        full = (ops.weak_gradient @ vd).reshape(4, ops.dim_r)
        assert np.allclose(full, ops.apply_weak_gradient(vd), atol=1e-13)
        div_full = ops.weak_divergence @ vd
        assert np.allclose(div_full, ops.apply_weak_divergence(vd), atol=1e-13)


class TestWeakGradientOracle:
    def test_dense_brute_force_reference_triangle(self):
        # v0 = 0, vb = (1, 0): solve the 4*dim P_3 tensor mass system built
        # from exact rational monomial integrals and compare the resulting
        # polynomial values with the operator output
        mesh = single_cell_mesh(REF_TRIANGLE)
        factory = ElementFactory(mesh, 1)
        ops = factory(0)
        assert ops.r == 3

        exps = [(d - j, j) for d in range(4) for j in range(d + 1)]
        dim = len(exps)
        mass = np.array([[float(polygon_monomial_integral(
            REF_TRIANGLE, a1 + a2, b1 + b2)) for (a2, b2) in exps]
            for (a1, b1) in exps])
        edges = [((0.0, 0.0), (1.0, 0.0), (0.0, -1.0)),
                 ((1.0, 0.0), (0.0, 1.0), (1.0 / math.sqrt(2.0),) * 2),
                 ((0.0, 1.0), (0.0, 0.0), (-1.0, 0.0))]
        # load for tensor block (0, j): <(1,0), phi n> with phi = q e_0 e_j
        coeff_blocks = []
        for j in (0, 1):
            load = np.zeros(dim)
            for a, b, normal in edges:
                load += normal[j] * np.array(
                    [segment_monomial_integral(a, b, p, q) for (p, q) in exps])
            coeff_blocks.append(np.linalg.solve(mass, load))

        lay = ops.layout
        vd = np.zeros(lay.n_total)
        for e in range(3):
            vd[lay.edge_slice(e).start] = 1.0  # x-component constant 1
        tensor = ops.apply_weak_gradient(vd)

        pts = ops.err_points
        mono_vals = np.stack([pts[:, 0] ** p * pts[:, 1] ** q for (p, q) in exps],
                             axis=1)
        for j in (0, 1):
            ref = mono_vals @ coeff_blocks[j]
            ours = ops.eval_elevated(tensor[j], pts)
            assert np.allclose(ours, ref, atol=1e-10)
        assert np.abs(tensor[2:]).max() < 1e-11  # y-component blocks vanish


class TestProjections:
    def test_projection_of_x_squared_onto_p1(self):
        # L2 projection of x^2 onto P_1 over the unit square is x - 1/6
        square = np.array([(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)])
        mesh = single_cell_mesh(square)
        ops = ElementFactory(mesh, 1)(0)
        coeffs = ops.project_interior_scalar(lambda p: p[:, 0] ** 2)
        pts = np.random.default_rng(2).random((20, 2))
        vals = ops.eval_interior(coeffs, pts)
        assert np.allclose(vals, pts[:, 0] - 1.0 / 6.0, atol=1e-13)

    @pytest.mark.parametrize("builder", [uniform_triangle_mesh, nonconvex_l_mesh])
    @pytest.mark.parametrize("k", [1, 2, 3])
    def test_projection_idempotent(self, builder, k):
        mesh = builder(1)
        factory = ElementFactory(mesh, k)
        rng = np.random.default_rng(k)
        for cid in range(mesh.n_cells):
            ops = factory(cid)
            coeffs = rng.standard_normal((2, ops.layout.dim_interior))
            back = ops.project_interior(lambda p: ops.eval_interior(coeffs, p).T)
            assert np.allclose(back, coeffs, atol=1e-12)

    def test_edge_projection_exact_for_linear(self):
        mesh = single_cell_mesh(np.array([(0.0, 0.0), (1.0, 0.0), (1.0, 1.0),
                                          (0.0, 1.0)]))
        eid = mesh.cells[0].edge_ids[0]  # edge (0,0)-(1,0)
        coeffs = project_edge(mesh, eid, 1, lambda p: np.column_stack(
            [p[:, 0], np.zeros(len(p))]))
        basis_vals = coeffs[0]  # x-component in Legendre basis: x = 1/2 + t/2
        assert basis_vals == pytest.approx([0.5, 0.5], abs=1e-13)
        assert np.abs(coeffs[1]).max() < 1e-14

    def test_elevated_projection_idempotent(self):
        mesh = nonconvex_l_mesh(1)
        ops = ElementFactory(mesh, 1)(0)
        rng = np.random.default_rng(0)
        coeffs = rng.standard_normal(ops.dim_r)
        back = ops.project_elevated_scalar(lambda p: ops.eval_elevated(coeffs, p))
        assert np.allclose(back, coeffs, atol=1e-10)


class TestLocalBlocks:
    def test_stiffness_rank_reference_triangle(self):
        mesh = single_cell_mesh(REF_TRIANGLE)
        ops = ElementFactory(mesh, 1)(0)
        a = ops.stiffness
        assert a.shape == (18, 18)
        assert np.abs(a - a.T).max() <= 1e-12 * max(np.abs(a).max(), 1e-30)
        evals = np.linalg.eigvalsh(a)
        assert (evals > -1e-12).all()
        assert np.linalg.matrix_rank(a, tol=1e-10) == 16

    @pytest.mark.parametrize("builder", [uniform_triangle_mesh, nonconvex_l_mesh])
    def test_kernel_is_constant_fields(self, builder):
        mesh = builder(1)
        factory = ElementFactory(mesh, 1)
        for cid in range(mesh.n_cells):
            ops = factory(cid)
            evals, evecs = np.linalg.eigh(ops.stiffness)
            assert (np.abs(evals) < 1e-10).sum() == 2
            for i in np.nonzero(np.abs(evals) < 1e-10)[0]:
                null_vec = evecs[:, i]
                # kernel fields have constant v0 equal to vb on every edge
                assert ops.gradient_seminorm_sq(null_vec) < 1e-12
                assert ops.jump_sq(null_vec) < 1e-12

    def test_divergence_coupling_constant_row(self):
        # row of B_T for the constant pressure applied to v = (x, y):
        # integral of (weak div v) * 1 = 2 * area
        mesh = nonconvex_l_mesh(1)
        factory = ElementFactory(mesh, 1)
        for cid in range(mesh.n_cells):
            ops = factory(cid)
            coeffs = np.zeros((2, ops.layout.dim_interior))
            coeffs[0, 0] = ops.centroid[0]
            coeffs[0, 1] = ops.diameter
            coeffs[1, 0] = ops.centroid[1]
            coeffs[1, 2] = ops.diameter
            vd = polynomial_field_dofs(mesh, cid, ops, coeffs)
            val = ops.divergence_coupling[0] @ vd
            assert val == pytest.approx(2.0 * ops.area, abs=1e-11)

    def test_load_vector_interior_only(self):
        mesh = uniform_triangle_mesh(1)
        ops = ElementFactory(mesh, 2)(0)
        load = ops.load_vector(lambda p: np.column_stack(
            [np.ones(len(p)), p[:, 0]]))
        lay = ops.layout
        assert np.abs(load[lay.n_interior:]).max() == 0.0
        # (1, phi_0) over the cell equals the area
        assert load[0] == pytest.approx(ops.area, abs=1e-13)


class TestCommutationIdentities:
    """The weak operators commute with L2 projection on polynomial data."""

    @pytest.mark.parametrize("builder,ks", [(uniform_triangle_mesh, (1, 2, 3)),
                                            (nonconvex_l_mesh, (1, 2))])
    def test_identity_suite(self, builder, ks):
        mesh = builder(2)
        rng = np.random.default_rng(11)
        for k in ks:
            factory = ElementFactory(mesh, k)
            for cid in range(mesh.n_cells):
                ops = factory(cid)
                coeffs = rng.standard_normal((2, ops.layout.dim_interior))

                def u(pts):
                    return ops.eval_interior(coeffs, pts).T

                def grad_u(pts):
                    gk = ops._s.basis_k.eval_grad(np.atleast_2d(pts) - ops.centroid)
                    out = np.empty((len(np.atleast_2d(pts)), 2, 2))
                    for i in range(2):
                        for j in range(2):
                            out[:, i, j] = gk[:, :, j] @ coeffs[i]
                    return out

                def div_u(pts):
                    gk = ops._s.basis_k.eval_grad(np.atleast_2d(pts) - ops.centroid)
                    return gk[:, :, 0] @ coeffs[0] + gk[:, :, 1] @ coeffs[1]

                vd = polynomial_field_dofs(mesh, cid, ops, coeffs)
                res1 = np.abs(ops.apply_weak_gradient(vd)
                              - ops.project_elevated_tensor(grad_u)).max()
                res2 = np.abs(ops.apply_weak_divergence(vd)
                              - ops.project_elevated_scalar(div_u)).max()
                vd_proj = vd.copy()
                vd_proj[:ops.layout.n_interior] = ops.project_interior(u).ravel()
                res3 = np.abs(ops.apply_weak_divergence(vd_proj)
                              - ops.project_elevated_scalar(div_u)).max()
                assert max(res1, res2, res3) <= 1e-10


class TestShapeCache:
    def test_translated_cells_share_class(self):
        mesh = uniform_triangle_mesh(4)
        factory = ElementFactory(mesh, 1)
        for cid in range(mesh.n_cells):
            factory(cid)
        assert factory.n_shape_classes <= 4

    def test_cached_operators_consistent(self):
        mesh = uniform_triangle_mesh(2)
        fresh = ElementFactory(mesh, 1)
        cached = ElementFactory(mesh, 1)
        for cid in range(mesh.n_cells):
            cached(cid)
        for cid in range(mesh.n_cells):
            a = fresh(cid).stiffness
            b = cached(cid).stiffness
            assert np.allclose(a, b, atol=1e-14)
