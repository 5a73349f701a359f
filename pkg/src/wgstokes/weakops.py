"""Element-local weak gradient and weak divergence operators.

A weak velocity on a cell T is a pair {v0, vb}: an interior vector
polynomial of degree k together with an independent vector polynomial of
degree k on each edge.  The discrete weak gradient of v is the tensor
polynomial G in [P_r(T)]^{2x2} defined by

    (G, phi)_T = -(v0, div phi)_T + <vb, phi . n>_dT      for all phi,

with the divergence of a tensor test function taken row-wise and
(phi . n)_i = sum_j phi_ij n_j.  The discrete weak divergence is the
scalar polynomial D in P_r(T) with

    (D, w)_T = -(v0, grad w)_T + <vb . n, w>_dT           for all w.

No stabilization term is needed; instead the operator degree is raised to
r = N + k - 1 on convex cells and r = 2N + k - 1 on non-convex ones, N
being the number of edge segments (collinear splits included).

Both operators factor through two scalar matrices Dx, Dy mapping the
scalar weak-function coefficients (interior P_k block, then one P_k(e)
block per edge) to P_r coefficients of the weak x/y partial derivative:
row i of the weak gradient is (Dx w_i, Dy w_i) applied to velocity
component i, and the weak divergence is Dx w_1 + Dy w_2.  The local
velocity stiffness therefore decouples into one scalar kernel matrix per
component.

Vector DOF layout per cell: interior block (x coefficients then y, dim P_k
each), then one block per edge in cell edge order (x then y, k+1 each).
Edge coefficients always use the global edge parameterization (lower
vertex id towards higher), which keeps vb single-valued across the two
cells sharing an edge.

Local matrices are translation-invariant, so they are cached per cell
shape: congruent-by-translation cells (the common case on the structured
families) share one factorization.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla

from .exceptions import ConditioningError
from .mesh import Cell, PolyMesh, polygon_geometry
from .polybasis import (
    CellBasis,
    EdgeBasis,
    cell_quadrature,
    dim_poly,
    edge_quadrature,
    orthonormalize_cell_basis,
    polygon_is_convex,
)

# switch to the orthonormalized basis once the monomial Gram matrix passes
# this; the operator identities must hold to 1e-10 and the identity residual
# tracks eps * cond(M), so the cutoff sits well below 1e10 (monomial cond
# is ~1e6 already at degree 3 and blows past 1e20 around degree 12)
COND_LIMIT = 1e4
IDENTITY_TOL = 1e-10


def raised_degree(cell: Cell, k: int) -> int:
    """Weak-operator degree: N + k - 1 if the cell is convex, else 2N + k - 1."""
    if k < 1:
        raise ValueError(f"polynomial order k must be >= 1, got {k}")
    n = cell.n_edges
    return n + k - 1 if cell.convex else 2 * n + k - 1


class LocalDofLayout:
    """Index bookkeeping for one cell's velocity DOF vector."""

    def __init__(self, k: int, n_edges: int):
        self.k = k
        self.n_edges = n_edges
        self.dim_interior = dim_poly(k)
        self.per_edge = k + 1
        self.n_scalar = self.dim_interior + n_edges * self.per_edge
        self.n_interior = 2 * self.dim_interior
        self.edge_block = 2 * self.per_edge
        self.n_total = 2 * self.n_scalar
        self.pressure_dim = dim_poly(k - 1)
        maps = np.empty((2, self.n_scalar), dtype=int)
        for c in (0, 1):
            maps[c, :self.dim_interior] = c * self.dim_interior + np.arange(self.dim_interior)
            for e in range(n_edges):
                s0 = self.dim_interior + e * self.per_edge
                g0 = self.n_interior + e * self.edge_block + c * self.per_edge
                maps[c, s0:s0 + self.per_edge] = g0 + np.arange(self.per_edge)
        # component_maps[c][s] = position of scalar dof s, component c, in
        # the interleaved vector layout
        self.component_maps = maps

    def edge_slice(self, e: int) -> slice:
        start = self.n_interior + e * self.edge_block
        return slice(start, start + self.edge_block)


class _EdgeData:
    """Per-local-edge quadrature and basis values, in relative coordinates."""

    __slots__ = ("points", "weights", "normal", "length", "vals_edge",
                 "vals_k", "vals_r", "t")

    def __init__(self, a_canon, b_canon, normal, degree, edge_k, basis_k, basis_r):
        rule = edge_quadrature(a_canon, b_canon, degree)
        self.points = rule.points
        self.weights = rule.weights
        self.normal = normal
        self.length = float(np.linalg.norm(b_canon - a_canon))
        basis = EdgeBasis(edge_k, a_canon, b_canon)
        self.t = basis.param(rule.points)
        self.vals_edge = basis.eval_param(self.t)
        self.vals_k = basis_k.eval(rule.points)
        self.vals_r = basis_r.eval(rule.points)


class _ShapeOperators:
    """All translation-invariant element data for one cell shape.

    Coordinates are relative to the cell centroid; physical evaluation adds
    the centroid back.
    """

    def __init__(self, rel_coords: np.ndarray, k: int, edge_orient: tuple[bool, ...],
                 vol_degree: int | None = None, err_degree: int | None = None):
        rel_coords = np.asarray(rel_coords, dtype=float)
        n_edges = len(rel_coords)
        self.k = k
        area, _, diameter = polygon_geometry(rel_coords)
        self.area = area
        self.diameter = diameter
        self.convex = polygon_is_convex(rel_coords)
        self.r = (n_edges + k - 1) if self.convex else (2 * n_edges + k - 1)
        r = self.r
        self.layout = LocalDofLayout(k, n_edges)

        self.vol_degree = max(2 * r + 2, vol_degree or 0)
        self.rule = cell_quadrature(rel_coords, self.vol_degree)
        w = self.rule.weights

        self.basis_k = CellBasis(k, (0.0, 0.0), diameter)
        self.basis_p = CellBasis(k - 1, (0.0, 0.0), diameter)
        mono_r = CellBasis(r, (0.0, 0.0), diameter)
        vals_r = mono_r.eval(self.rule.points)
        mass = (vals_r * w[:, None]).T @ vals_r
        self.cond_monomial = float(np.linalg.cond(mass))
        if self.cond_monomial > COND_LIMIT:
            self.basis_r = orthonormalize_cell_basis(rel_coords, r, self.rule)
            vals_r = self.basis_r.eval(self.rule.points)
            mass = (vals_r * w[:, None]).T @ vals_r
        else:
            self.basis_r = mono_r
        grads_r = self.basis_r.eval_grad(self.rule.points)
        self.dim_r = self.basis_r.dim
        self.vals_r = vals_r
        self.mass_r = 0.5 * (mass + mass.T)
        try:
            self._cho_r = sla.cho_factor(self.mass_r)
        except np.linalg.LinAlgError as exc:
            raise ConditioningError(
                f"mass matrix at degree {r} not positive definite: {exc}") from exc

        self.vals_k = self.basis_k.eval(self.rule.points)
        grads_k = self.basis_k.eval_grad(self.rule.points)
        self.vals_p = self.basis_p.eval(self.rule.points)
        dim_k, dim_p = self.basis_k.dim, self.basis_p.dim
        self.mass_k = (self.vals_k * w[:, None]).T @ self.vals_k
        self.mass_p = (self.vals_p * w[:, None]).T @ self.vals_p
        self._cho_k = sla.cho_factor(self.mass_k)
        self._cho_p = sla.cho_factor(self.mass_p)
        self.stiff_k = ((grads_k[:, :, 0] * w[:, None]).T @ grads_k[:, :, 0]
                        + (grads_k[:, :, 1] * w[:, None]).T @ grads_k[:, :, 1])
        self.int_p = (self.vals_p * w[:, None]).sum(axis=0)
        self.int_k = (self.vals_k * w[:, None]).sum(axis=0)

        # weak partial derivative matrices: right sides tested against P_r
        edge_deg = r + k
        self.edge_data: list[_EdgeData] = []
        rhs_x = np.zeros((self.dim_r, self.layout.n_scalar))
        rhs_y = np.zeros((self.dim_r, self.layout.n_scalar))
        rhs_x[:, :dim_k] = -(grads_r[:, :, 0] * w[:, None]).T @ self.vals_k
        rhs_y[:, :dim_k] = -(grads_r[:, :, 1] * w[:, None]).T @ self.vals_k
        for e in range(n_edges):
            a = rel_coords[e]
            b = rel_coords[(e + 1) % n_edges]
            tangent = (b - a) / np.linalg.norm(b - a)
            normal = np.array([tangent[1], -tangent[0]])  # outward for CCW cells
            if edge_orient[e]:
                ed = _EdgeData(a, b, normal, edge_deg, k, self.basis_k, self.basis_r)
            else:
                ed = _EdgeData(b, a, normal, edge_deg, k, self.basis_k, self.basis_r)
            moments = (ed.vals_r * ed.weights[:, None]).T @ ed.vals_edge
            s0 = dim_k + e * self.layout.per_edge
            rhs_x[:, s0:s0 + k + 1] = normal[0] * moments
            rhs_y[:, s0:s0 + k + 1] = normal[1] * moments
            self.edge_data.append(ed)
        self.partial_x = sla.cho_solve(self._cho_r, rhs_x)
        self.partial_y = sla.cho_solve(self._cho_r, rhs_y)

        kernel = rhs_x.T @ self.partial_x + rhs_y.T @ self.partial_y
        self.scalar_kernel = 0.5 * (kernel + kernel.T)
        mass_pr = (self.vals_p * w[:, None]).T @ self.vals_r
        self.div_coupling_x = mass_pr @ self.partial_x
        self.div_coupling_y = mass_pr @ self.partial_y

        # separate, finer rule for error integrals against analytic fields
        self.err_degree = max(self.vol_degree, 2 * k + 16, err_degree or 0)
        if self.err_degree == self.vol_degree:
            self.err_rule = self.rule
            self.err_vals_r = self.vals_r
            self.err_vals_k = self.vals_k
            self.err_vals_p = self.vals_p
        else:
            self.err_rule = cell_quadrature(rel_coords, self.err_degree)
            self.err_vals_r = self.basis_r.eval(self.err_rule.points)
            self.err_vals_k = self.basis_k.eval(self.err_rule.points)
            self.err_vals_p = self.basis_p.eval(self.err_rule.points)

        self._stiffness = None
        self._div_coupling = None

    @property
    def stiffness(self) -> np.ndarray:
        if self._stiffness is None:
            lay = self.layout
            a = np.zeros((lay.n_total, lay.n_total))
            for c in (0, 1):
                a[np.ix_(lay.component_maps[c], lay.component_maps[c])] = self.scalar_kernel
            self._stiffness = a
        return self._stiffness

    @property
    def div_coupling(self) -> np.ndarray:
        if self._div_coupling is None:
            lay = self.layout
            b = np.zeros((lay.pressure_dim, lay.n_total))
            b[:, lay.component_maps[0]] = self.div_coupling_x
            b[:, lay.component_maps[1]] = self.div_coupling_y
            self._div_coupling = b
        return self._div_coupling

    def solve_elevated(self, rhs: np.ndarray) -> np.ndarray:
        return sla.cho_solve(self._cho_r, rhs)


class ElementOperators:
    """Weak-operator toolkit for one mesh cell.

    Thin position-aware view over the shared per-shape data: matrices are
    identical for translated cells, only function evaluations shift.
    """

    def __init__(self, shape: _ShapeOperators, mesh: PolyMesh, cell_id: int):
        self._s = shape
        self.mesh = mesh
        self.cell_id = cell_id
        self.cell = mesh.cells[cell_id]
        self.centroid = self.cell.centroid

    # --- shape proxies ----------------------------------------------------
    @property
    def k(self) -> int:
        return self._s.k

    @property
    def r(self) -> int:
        return self._s.r

    @property
    def layout(self) -> LocalDofLayout:
        return self._s.layout

    @property
    def dim_r(self) -> int:
        return self._s.dim_r

    @property
    def mass_r(self) -> np.ndarray:
        return self._s.mass_r

    @property
    def mass_pressure(self) -> np.ndarray:
        return self._s.mass_p

    @property
    def monomial_mass_cond(self) -> float:
        return self._s.cond_monomial

    @property
    def basis_elevated(self):
        return self._s.basis_r

    @property
    def stiffness(self) -> np.ndarray:
        """Local velocity block A_T = G_T' (mass x4) G_T; symmetric PSD."""
        return self._s.stiffness

    @property
    def divergence_coupling(self) -> np.ndarray:
        """B_T with entries (weak divergence of v, pressure basis q)_T."""
        return self._s.div_coupling

    @property
    def pressure_integrals(self) -> np.ndarray:
        """Integrals of the pressure basis functions over the cell."""
        return self._s.int_p

    @property
    def weak_gradient(self) -> np.ndarray:
        """Full matrix (4*dim_r, n_total); tensor blocks ordered (11,12,21,22)."""
        lay = self.layout
        g = np.zeros((4 * self.dim_r, lay.n_total))
        parts = (self._s.partial_x, self._s.partial_y)
        for i in (0, 1):
            for j in (0, 1):
                rows = slice((2 * i + j) * self.dim_r, (2 * i + j + 1) * self.dim_r)
                g[rows, lay.component_maps[i]] = parts[j]
        return g

    @property
    def weak_divergence(self) -> np.ndarray:
        """Full matrix (dim_r, n_total)."""
        lay = self.layout
        d = np.zeros((self.dim_r, lay.n_total))
        d[:, lay.component_maps[0]] = self._s.partial_x
        d[:, lay.component_maps[1]] = self._s.partial_y
        return d

    def apply_weak_gradient(self, vdofs: np.ndarray) -> np.ndarray:
        """Tensor coefficients (4, dim_r) of the weak gradient of vdofs."""
        lay = self.layout
        out = np.empty((4, self.dim_r))
        for i in (0, 1):
            comp = vdofs[lay.component_maps[i]]
            out[2 * i] = self._s.partial_x @ comp
            out[2 * i + 1] = self._s.partial_y @ comp
        return out

    def apply_weak_divergence(self, vdofs: np.ndarray) -> np.ndarray:
        lay = self.layout
        return (self._s.partial_x @ vdofs[lay.component_maps[0]]
                + self._s.partial_y @ vdofs[lay.component_maps[1]])

    # --- quadrature (physical coordinates) --------------------------------
    @property
    def quad_points(self) -> np.ndarray:
        return self._s.rule.points + self.centroid

    @property
    def quad_weights(self) -> np.ndarray:
        return self._s.rule.weights

    @property
    def err_points(self) -> np.ndarray:
        return self._s.err_rule.points + self.centroid

    @property
    def err_weights(self) -> np.ndarray:
        return self._s.err_rule.weights

    def edge_quad_points(self, local_edge: int) -> np.ndarray:
        return self._s.edge_data[local_edge].points + self.centroid

    # --- loads and projections ---------------------------------------------
    def load_vector(self, f) -> np.ndarray:
        """(f, v0)_T against the interior velocity basis; edge entries zero."""
        lay = self.layout
        fv = np.asarray(f(self.quad_points), dtype=float)
        mom = (self._s.vals_k * self.quad_weights[:, None]).T @ fv  # (dim_k, 2)
        out = np.zeros(lay.n_total)
        out[:lay.dim_interior] = mom[:, 0]
        out[lay.dim_interior:lay.n_interior] = mom[:, 1]
        return out

    def project_interior(self, func) -> np.ndarray:
        """L2 projection onto [P_k(T)]^2; returns (2, dim P_k) coefficients."""
        vals = np.asarray(func(self.err_points), dtype=float)
        rhs = (self._s.err_vals_k * self.err_weights[:, None]).T @ vals
        return sla.cho_solve(self._s._cho_k, rhs).T

    def project_interior_scalar(self, func) -> np.ndarray:
        vals = np.asarray(func(self.err_points), dtype=float)
        rhs = (self._s.err_vals_k * self.err_weights[:, None]).T @ vals
        return sla.cho_solve(self._s._cho_k, rhs)

    def project_pressure(self, func) -> np.ndarray:
        """L2 projection onto P_{k-1}(T)."""
        vals = np.asarray(func(self.err_points), dtype=float)
        rhs = (self._s.err_vals_p * self.err_weights[:, None]).T @ vals
        return sla.cho_solve(self._s._cho_p, rhs)

    def project_elevated_scalar(self, func) -> np.ndarray:
        """L2 projection onto P_r(T) at the elevated operator degree."""
        vals = np.asarray(func(self.err_points), dtype=float)
        rhs = (self._s.err_vals_r * self.err_weights[:, None]).T @ vals
        return self._s.solve_elevated(rhs)

    def project_elevated_tensor(self, func) -> np.ndarray:
        """Componentwise projection of a 2x2 tensor field; returns (4, dim_r).

        func(points) must return (npts, 2, 2); block order matches
        apply_weak_gradient.
        """
        vals = np.asarray(func(self.err_points), dtype=float)
        flat = vals.reshape(len(vals), 4)
        rhs = (self._s.err_vals_r * self.err_weights[:, None]).T @ flat
        return self._s.solve_elevated(rhs).T

    # --- evaluation ---------------------------------------------------------
    def eval_interior(self, coeffs: np.ndarray, points: np.ndarray) -> np.ndarray:
        """Evaluate interior polynomial(s); coeffs (..., dim P_k)."""
        vals = self._s.basis_k.eval(np.atleast_2d(points) - self.centroid)
        return coeffs @ vals.T

    def eval_pressure(self, coeffs: np.ndarray, points: np.ndarray) -> np.ndarray:
        vals = self._s.basis_p.eval(np.atleast_2d(points) - self.centroid)
        return coeffs @ vals.T

    def eval_elevated(self, coeffs: np.ndarray, points: np.ndarray) -> np.ndarray:
        vals = self._s.basis_r.eval(np.atleast_2d(points) - self.centroid)
        return coeffs @ vals.T

    def interior_values_at_err(self, coeffs: np.ndarray) -> np.ndarray:
        """Interior polynomial values at the error-rule points; coeffs (..., dim_k)."""
        return coeffs @ self._s.err_vals_k.T

    def pressure_values_at_err(self, coeffs: np.ndarray) -> np.ndarray:
        return coeffs @ self._s.err_vals_p.T

    # --- norms ----------------------------------------------------------------
    def elevated_norm_sq(self, coeffs: np.ndarray) -> float:
        """Squared L2(T) norm of elevated coefficients (any leading shape)."""
        c = np.atleast_2d(coeffs)
        return float(np.einsum("ij,jk,ik->", c, self._s.mass_r, c))

    def pressure_norm_sq(self, coeffs: np.ndarray) -> float:
        c = np.atleast_1d(coeffs)
        return float(c @ self._s.mass_p @ c)

    def interior_norm_sq(self, coeffs: np.ndarray) -> float:
        """Squared L2(T) norm of interior coefficients (any leading shape)."""
        c = np.atleast_2d(coeffs)
        return float(np.einsum("ij,jk,ik->", c, self._s.mass_k, c))

    def energy_sq(self, vdofs: np.ndarray) -> float:
        """Squared cell energy (weak gradient, weak gradient)_T."""
        lay = self.layout
        total = 0.0
        for c in (0, 1):
            comp = vdofs[lay.component_maps[c]]
            total += comp @ self._s.scalar_kernel @ comp
        return float(total)

    def gradient_seminorm_sq(self, vdofs: np.ndarray) -> float:
        """Squared |grad v0|_T of the interior polynomial."""
        lay = self.layout
        cx = vdofs[:lay.dim_interior]
        cy = vdofs[lay.dim_interior:lay.n_interior]
        return float(cx @ self._s.stiff_k @ cx + cy @ self._s.stiff_k @ cy)

    def jump_sq(self, vdofs: np.ndarray) -> float:
        """Squared boundary mismatch integral |v0 - vb|^2 over the cell boundary."""
        lay = self.layout
        cx = vdofs[:lay.dim_interior]
        cy = vdofs[lay.dim_interior:lay.n_interior]
        total = 0.0
        for e, ed in enumerate(self._s.edge_data):
            blk = vdofs[lay.edge_slice(e)]
            ex, ey = blk[:lay.per_edge], blk[lay.per_edge:]
            dx = ed.vals_k @ cx - ed.vals_edge @ ex
            dy = ed.vals_k @ cy - ed.vals_edge @ ey
            total += ed.weights @ (dx * dx + dy * dy)
        return float(total)

    @property
    def diameter(self) -> float:
        return self._s.diameter

    @property
    def area(self) -> float:
        return self._s.area


class ElementFactory:
    """Builds ElementOperators, caching shape data by congruence class.

    Two cells share one class when their centroid-relative vertex
    coordinates (rounded to 13 decimals) and edge parameterization
    directions coincide; the structured mesh families collapse to a
    handful of classes per level.
    """

    def __init__(self, mesh: PolyMesh, k: int, vol_degree: int | None = None,
                 err_degree: int | None = None):
        if k < 1:
            raise ValueError(f"polynomial order k must be >= 1, got {k}")
        self.mesh = mesh
        self.k = k
        self.vol_degree = vol_degree
        self.err_degree = err_degree
        self._cache: dict[tuple, _ShapeOperators] = {}

    def __call__(self, cell_id: int) -> ElementOperators:
        cell = self.mesh.cells[cell_id]
        coords = self.mesh.cell_coords(cell_id)
        rel = coords - cell.centroid
        orient = tuple(
            bool(self.mesh.edges[eid].vertex_ids[0] == cell.vertex_ids[i])
            for i, eid in enumerate(cell.edge_ids))
        key = (len(rel), orient, tuple(np.round(rel, 13).ravel()))
        shape = self._cache.get(key)
        if shape is None:
            shape = _ShapeOperators(rel, self.k, orient,
                                    vol_degree=self.vol_degree,
                                    err_degree=self.err_degree)
            self._cache[key] = shape
        return ElementOperators(shape, self.mesh, cell_id)

    @property
    def n_shape_classes(self) -> int:
        return len(self._cache)


def project_edge(mesh: PolyMesh, edge_id: int, k: int, func,
                 quad_degree: int | None = None) -> np.ndarray:
    """L2 projection of a vector function onto [P_k(e)]^2; returns (2, k+1).

    Uses the global edge parameterization; the Legendre edge mass matrix is
    diagonal so the projection is a weighted moment computation.
    """
    a, b = mesh.edge_coords(edge_id)
    basis = EdgeBasis(k, a, b)
    rule = edge_quadrature(a, b, quad_degree or (2 * k + 16))
    vals = np.asarray(func(rule.points), dtype=float)
    if vals.ndim == 1:
        vals = vals[:, None]
    moments = (basis.eval(rule.points) * rule.weights[:, None]).T @ vals
    return (moments / basis.mass_diagonal()[:, None]).T
