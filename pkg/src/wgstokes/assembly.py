"""Global DOF numbering, saddle-point assembly, and the linear solve.

Unknowns are ordered cells (interior velocity blocks), then interior edges
(edge velocity blocks), then pressure blocks per cell, then one Lagrange
multiplier enforcing the zero pressure mean.  Boundary edge coefficients
are not unknowns: they are set to the edge projection of the Dirichlet
data and their contributions moved to the right-hand side.

The assembled matrix is the symmetric block system

    [ A   B'  0 ]   A: velocity stiffness from the weak gradients,
    [ B   0   c ]   B: (weak divergence, pressure test) coupling,
    [ 0   c'  0 ]   c: pressure basis integrals (zero-mean constraint).

With this sign convention the pressure unknown is the negative of the
physical pressure; solve_system flips it back, so SolveResult.pressure is
the actual pressure field.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .exceptions import SingularSystemError
from .mesh import PolyMesh
from .weakops import ElementFactory, LocalDofLayout, project_edge


class DofMap:
    """Global index layout for velocity, pressure, and the mean constraint."""

    def __init__(self, mesh: PolyMesh, k: int):
        self.k = k
        layout = LocalDofLayout(k, 3)  # edge count irrelevant for the sizes used here
        self.dim_interior = layout.dim_interior
        self.per_edge = layout.per_edge
        self.pressure_dim = layout.pressure_dim

        n_cells, n_edges = mesh.n_cells, mesh.n_edges
        self.cell_offsets = np.arange(n_cells) * (2 * self.dim_interior)
        base = n_cells * 2 * self.dim_interior
        self.edge_offsets = np.full(n_edges, -1, dtype=int)
        for eid, edge in enumerate(mesh.edges):
            if not edge.boundary:
                self.edge_offsets[eid] = base
                base += 2 * self.per_edge
        self.n_u = base
        self.pressure_offsets = self.n_u + np.arange(n_cells) * self.pressure_dim
        self.n_p = n_cells * self.pressure_dim
        self.multiplier_index = self.n_u + self.n_p
        self.size = self.n_u + self.n_p + 1

    def cell_dofs(self, mesh: PolyMesh, cell_id: int, layout: LocalDofLayout) -> np.ndarray:
        """Global velocity indices for a cell's local layout; -1 marks boundary slots."""
        idx = np.full(layout.n_total, -1, dtype=int)
        base = self.cell_offsets[cell_id]
        idx[:layout.n_interior] = base + np.arange(layout.n_interior)
        for e, eid in enumerate(mesh.cells[cell_id].edge_ids):
            off = self.edge_offsets[eid]
            if off >= 0:
                sl = layout.edge_slice(e)
                idx[sl] = off + np.arange(2 * self.per_edge)
        return idx


def build_dof_map(mesh: PolyMesh, k: int) -> DofMap:
    return DofMap(mesh, k)


class WeakField:
    """Velocity degrees of freedom: per-cell interior and per-edge coefficients.

    u0 has shape (n_cells, 2, dim P_k); ub has shape (n_edges, 2, k+1) in
    the global edge parameterization.
    """

    def __init__(self, mesh: PolyMesh, k: int, u0=None, ub=None):
        self.k = k
        dim_k = DofMap(mesh, k).dim_interior if u0 is None else u0.shape[2]
        self.u0 = np.zeros((mesh.n_cells, 2, dim_k)) if u0 is None else u0
        self.ub = np.zeros((mesh.n_edges, 2, k + 1)) if ub is None else ub

    def local_dofs(self, mesh: PolyMesh, cell_id: int, layout: LocalDofLayout) -> np.ndarray:
        out = np.empty(layout.n_total)
        out[:layout.n_interior] = self.u0[cell_id].ravel()
        for e, eid in enumerate(mesh.cells[cell_id].edge_ids):
            out[layout.edge_slice(e)] = self.ub[eid].ravel()
        return out


@dataclass
class GlobalSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    dofmap: DofMap
    mesh: PolyMesh
    k: int
    factory: ElementFactory
    boundary_ub: np.ndarray  # (n_edges, 2, k+1); nonzero only on boundary edges
    stats: dict = field(default_factory=dict)

    @property
    def n_u(self) -> int:
        return self.dofmap.n_u

    @property
    def n_p(self) -> int:
        return self.dofmap.n_p

    @property
    def velocity_block(self) -> sp.csr_matrix:
        return self.matrix[:self.n_u, :self.n_u]

    @property
    def divergence_block(self) -> sp.csr_matrix:
        return self.matrix[self.n_u:self.n_u + self.n_p, :self.n_u]

    @property
    def constraint_vector(self) -> np.ndarray:
        return np.asarray(
            self.matrix[self.dofmap.multiplier_index,
                        self.n_u:self.n_u + self.n_p].todense()).ravel()


def assemble_system(mesh: PolyMesh, k: int, f, g=None,
                    factory: ElementFactory | None = None) -> GlobalSystem:
    """Assemble the saddle-point system for forcing f and Dirichlet data g.

    f maps (npts, 2) points to (npts, 2) values; g likewise (g=None means
    homogeneous).  Boundary edge coefficients are set to the edge
    projection of g and eliminated.
    """
    t0 = time.perf_counter()
    if factory is None:
        factory = ElementFactory(mesh, k)
    dofmap = DofMap(mesh, k)

    boundary_ub = np.zeros((mesh.n_edges, 2, k + 1))
    if g is not None:
        for eid in mesh.boundary_edge_ids():
            boundary_ub[eid] = project_edge(mesh, eid, k, g)

    rows: list[np.ndarray] = []
    cols: list[np.ndarray] = []
    vals: list[np.ndarray] = []
    rhs = np.zeros(dofmap.size)

    def scatter(r_idx, c_idx, block):
        rr, cc = np.meshgrid(r_idx, c_idx, indexing="ij")
        rows.append(rr.ravel())
        cols.append(cc.ravel())
        vals.append(np.asarray(block).ravel())

    mult = dofmap.multiplier_index
    for cid in range(mesh.n_cells):
        ops = factory(cid)
        layout = ops.layout
        a_loc = ops.stiffness
        b_loc = ops.divergence_coupling
        idx = dofmap.cell_dofs(mesh, cid, layout)
        free = idx >= 0
        p_rows = dofmap.pressure_offsets[cid] + np.arange(dofmap.pressure_dim)

        if not free.all():
            known_vals = np.zeros(layout.n_total)
            for e, eid in enumerate(mesh.cells[cid].edge_ids):
                if dofmap.edge_offsets[eid] < 0:
                    known_vals[layout.edge_slice(e)] = boundary_ub[eid].ravel()
            lift_a = a_loc[:, ~free] @ known_vals[~free]
            rhs[idx[free]] -= lift_a[free]
            rhs[p_rows] -= b_loc[:, ~free] @ known_vals[~free]

        fa = idx[free]
        scatter(fa, fa, a_loc[np.ix_(free, free)])
        scatter(p_rows, fa, b_loc[:, free])
        scatter(fa, p_rows, b_loc[:, free].T)
        c_loc = ops.pressure_integrals
        scatter(p_rows, np.array([mult]), c_loc[:, None])
        scatter(np.array([mult]), p_rows, c_loc[None, :])

        load = ops.load_vector(f)
        rhs[idx[:layout.n_interior]] += load[:layout.n_interior]

    matrix = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(dofmap.size, dofmap.size)).tocsr()
    stats = {
        "assembly_s": time.perf_counter() - t0,
        "n_u": dofmap.n_u,
        "n_p": dofmap.n_p,
        "nnz": int(matrix.nnz),
        "shape_classes": factory.n_shape_classes,
    }
    return GlobalSystem(matrix=matrix, rhs=rhs, dofmap=dofmap, mesh=mesh, k=k,
                        factory=factory, boundary_ub=boundary_ub, stats=stats)


@dataclass
class SolveResult:
    field: WeakField
    pressure: np.ndarray  # (n_cells, dim P_{k-1})
    multiplier: float
    residual: float
    stats: dict


def solve_system(system: GlobalSystem, method: str = "direct",
                 tol: float = 1e-10) -> SolveResult:
    """Solve the assembled system; checks the relative algebraic residual.

    method "direct" uses a sparse LU factorization (default); "minres"
    runs unpreconditioned MINRES, which is only sensible for small systems.
    """
    t0 = time.perf_counter()
    matrix, rhs = system.matrix, system.rhs
    if method == "direct":
        try:
            lu = spla.splu(matrix.tocsc())
            x = lu.solve(rhs)
        except RuntimeError as exc:
            raise SingularSystemError(f"sparse factorization failed: {exc}") from exc
    elif method == "minres":
        x, info = spla.minres(matrix, rhs, rtol=min(tol, 1e-12), maxiter=50 * matrix.shape[0])
        if info != 0:
            raise SingularSystemError(f"minres did not converge (info={info})")
    else:
        raise ValueError(f"unknown solver {method!r}")

    resid_vec = matrix @ x - rhs
    scale = max(float(np.linalg.norm(rhs)), 1.0)
    residual = float(np.linalg.norm(resid_vec)) / scale
    if not np.isfinite(residual) or residual > tol:
        raise SingularSystemError(
            f"relative residual {residual:.3e} exceeds {tol:.1e}")

    dofmap = system.dofmap
    mesh, k = system.mesh, system.k
    fld = WeakField(mesh, k)
    dim_k = dofmap.dim_interior
    for cid in range(mesh.n_cells):
        base = dofmap.cell_offsets[cid]
        fld.u0[cid] = x[base:base + 2 * dim_k].reshape(2, dim_k)
    for eid in range(mesh.n_edges):
        off = dofmap.edge_offsets[eid]
        if off >= 0:
            fld.ub[eid] = x[off:off + 2 * dofmap.per_edge].reshape(2, dofmap.per_edge)
        else:
            fld.ub[eid] = system.boundary_ub[eid]

    # stored pressure unknown is -p_h (see module docstring)
    pressure = -x[dofmap.n_u:dofmap.n_u + dofmap.n_p].reshape(
        mesh.n_cells, dofmap.pressure_dim)
    stats = dict(system.stats)
    stats.update({
        "solve_s": time.perf_counter() - t0,
        "method": method,
        "residual_velocity_block": float(np.linalg.norm(resid_vec[:dofmap.n_u])) / scale,
        "residual_divergence_block":
            float(np.linalg.norm(resid_vec[dofmap.n_u:dofmap.n_u + dofmap.n_p])) / scale,
        "pressure_mean": float(system.constraint_vector @
                               (-x[dofmap.n_u:dofmap.n_u + dofmap.n_p])),
    })
    return SolveResult(field=fld, pressure=pressure,
                       multiplier=float(x[dofmap.multiplier_index]),
                       residual=residual, stats=stats)


def solve_stokes(mesh: PolyMesh, k: int, f, g=None, method: str = "direct",
                 factory: ElementFactory | None = None) -> tuple[SolveResult, GlobalSystem]:
    """Assemble and solve in one call; returns (result, system)."""
    system = assemble_system(mesh, k, f, g=g, factory=factory)
    return solve_system(system, method=method), system
