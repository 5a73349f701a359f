"""Manufactured solutions, discrete error norms, and convergence studies.

The error triple reported per refinement level matches the quantities a
convergence table is built from:

* velocity L2 error  |u - u_0|_0            (interior polynomial only),
* energy error       |P_r(grad u) - grad_w u_h|_0, with P_r the elementwise
  L2 projection onto the elevated operator degree -- identical to
  |grad_w(u - u_h)|_0 because the weak gradient commutes with that
  projection for smooth fields,
* pressure error     |P_{k-1} p - p_h|_0 (zero-mean adjusted), i.e. the
  error against the elementwise projection of the exact pressure, not
  against p itself.

Also here: empirical probes for the two stability constants the scheme
relies on -- the equivalence between the energy norm and the broken H1
seminorm (plus scaled jumps), and the discrete inf-sup constant computed
from the pressure Schur complement on small meshes.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .assembly import SolveResult, WeakField, solve_stokes
from .exceptions import ProbeTooLargeError
from .mesh import PolyMesh, build_mesh
from .weakops import ElementFactory, project_edge


# ---------------------------------------------------------------------------
# manufactured solutions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ManufacturedSolution:
    """Closed-form Stokes solution with forcing f = -laplace(u) + grad(p).

    velocity(pts) -> (n, 2); velocity_gradient(pts) -> (n, 2, 2) with
    [i, j] = d u_i / d x_j; pressure(pts) -> (n,); forcing(pts) -> (n, 2).
    The velocity is divergence-free and the pressure has zero mean.
    """

    name: str
    velocity: callable
    velocity_gradient: callable
    pressure: callable
    forcing: callable
    description: str = ""


def vortex_solution() -> ManufacturedSolution:
    """Smooth vortex on the unit square: u = curl of 16 (x-x^2)^2 (y-y^2)^2.

    u vanishes on the whole boundary (double roots), p = (y - 1/2)^3.
    """

    def _ab(x, y):
        a = (x - x * x) ** 2            # (x-x^2)^2
        b = (y - y * y) * (1.0 - 2.0 * y)  # (y-y^2)(1-2y)
        return a, b

    def velocity(pts):
        pts = np.atleast_2d(pts)
        x, y = pts[:, 0], pts[:, 1]
        a, b = _ab(x, y)
        a2, b2 = _ab(y, x)  # same polynomials with roles swapped
        return np.column_stack([-32.0 * a * b, 32.0 * b2 * a2])

    def velocity_gradient(pts):
        pts = np.atleast_2d(pts)
        x, y = pts[:, 0], pts[:, 1]
        a = (x - x * x) ** 2
        da = 2.0 * (x - x * x) * (1.0 - 2.0 * x)
        b = (y - y * y) * (1.0 - 2.0 * y)
        db = 1.0 - 6.0 * y + 6.0 * y * y
        a2 = (x - x * x) * (1.0 - 2.0 * x)
        da2 = 1.0 - 6.0 * x + 6.0 * x * x
        b2 = (y - y * y) ** 2
        db2 = 2.0 * (y - y * y) * (1.0 - 2.0 * y)
        out = np.empty((len(x), 2, 2))
        out[:, 0, 0] = -32.0 * da * b
        out[:, 0, 1] = -32.0 * a * db
        out[:, 1, 0] = 32.0 * da2 * b2
        out[:, 1, 1] = 32.0 * a2 * db2
        return out

    def pressure(pts):
        pts = np.atleast_2d(pts)
        return (pts[:, 1] - 0.5) ** 3

    def forcing(pts):
        pts = np.atleast_2d(pts)
        x, y = pts[:, 0], pts[:, 1]
        a = (x - x * x) ** 2
        dda = 2.0 * (1.0 - 6.0 * x + 6.0 * x * x)
        b = (y - y * y) * (1.0 - 2.0 * y)
        ddb = 12.0 * y - 6.0
        a2 = (x - x * x) * (1.0 - 2.0 * x)
        dda2 = 12.0 * x - 6.0
        b2 = (y - y * y) ** 2
        ddb2 = 2.0 * (1.0 - 6.0 * y + 6.0 * y * y)
        f1 = 32.0 * (dda * b + a * ddb)
        f2 = -32.0 * (dda2 * b2 + a2 * ddb2) + 3.0 * (y - 0.5) ** 2
        return np.column_stack([f1, f2])

    return ManufacturedSolution(
        name="s1", velocity=velocity, velocity_gradient=velocity_gradient,
        pressure=pressure, forcing=forcing,
        description="stream-function vortex, homogeneous Dirichlet, cubic pressure")


def patch_solution_k1() -> ManufacturedSolution:
    """Rigid rotation u = (y, -x), p = 0: exactly representable at k = 1."""

    def velocity(pts):
        pts = np.atleast_2d(pts)
        return np.column_stack([pts[:, 1], -pts[:, 0]])

    def velocity_gradient(pts):
        n = len(np.atleast_2d(pts))
        out = np.zeros((n, 2, 2))
        out[:, 0, 1] = 1.0
        out[:, 1, 0] = -1.0
        return out

    def pressure(pts):
        return np.zeros(len(np.atleast_2d(pts)))

    def forcing(pts):
        return np.zeros((len(np.atleast_2d(pts)), 2))

    return ManufacturedSolution(
        name="patch-k1", velocity=velocity, velocity_gradient=velocity_gradient,
        pressure=pressure, forcing=forcing,
        description="linear velocity patch test")


def patch_solution_k2() -> ManufacturedSolution:
    """Quadratic patch u = (x^2, -2xy), p = x - 1/2, f = (-1, 0)."""

    def velocity(pts):
        pts = np.atleast_2d(pts)
        return np.column_stack([pts[:, 0] ** 2, -2.0 * pts[:, 0] * pts[:, 1]])

    def velocity_gradient(pts):
        pts = np.atleast_2d(pts)
        n = len(pts)
        out = np.zeros((n, 2, 2))
        out[:, 0, 0] = 2.0 * pts[:, 0]
        out[:, 1, 0] = -2.0 * pts[:, 1]
        out[:, 1, 1] = -2.0 * pts[:, 0]
        return out

    def pressure(pts):
        return np.atleast_2d(pts)[:, 0] - 0.5

    def forcing(pts):
        n = len(np.atleast_2d(pts))
        out = np.zeros((n, 2))
        out[:, 0] = -1.0
        return out

    return ManufacturedSolution(
        name="patch-k2", velocity=velocity, velocity_gradient=velocity_gradient,
        pressure=pressure, forcing=forcing,
        description="quadratic velocity / linear pressure patch test")


PROBLEMS = {
    "s1": vortex_solution,
    "patch-k1": patch_solution_k1,
    "patch-k2": patch_solution_k2,
}


def get_problem(problem) -> ManufacturedSolution:
    if isinstance(problem, ManufacturedSolution):
        return problem
    try:
        return PROBLEMS[problem]()
    except KeyError:
        raise ValueError(
            f"unknown problem {problem!r}; expected one of {sorted(PROBLEMS)}") from None


# ---------------------------------------------------------------------------
# error norms
# ---------------------------------------------------------------------------

@dataclass
class ErrorReport:
    h: float
    n_dofs: int
    err_l2: float
    err_energy: float
    err_pressure: float


def compute_errors(mesh: PolyMesh, k: int, result: SolveResult,
                   exact: ManufacturedSolution,
                   factory: ElementFactory | None = None) -> ErrorReport:
    """Elementwise quadrature sums of the three discretization errors."""
    if factory is None:
        factory = ElementFactory(mesh, k)
    e_l2 = 0.0
    e_energy = 0.0
    p_diffs = []
    mean_shift = 0.0
    ops_list = []
    for cid in range(mesh.n_cells):
        ops = factory(cid)
        ops_list.append(ops)
        vdofs = result.field.local_dofs(mesh, cid, ops.layout)

        u_exact = exact.velocity(ops.err_points)
        u_vals = ops.interior_values_at_err(result.field.u0[cid])
        diff = u_exact - u_vals.T
        e_l2 += float(ops.err_weights @ (diff * diff).sum(axis=1))

        proj_grad = ops.project_elevated_tensor(exact.velocity_gradient)
        wgrad = ops.apply_weak_gradient(vdofs)
        e_energy += ops.elevated_norm_sq(proj_grad - wgrad)

        p_diff = ops.project_pressure(exact.pressure) - result.pressure[cid]
        p_diffs.append(p_diff)
        mean_shift += float(ops.pressure_integrals @ p_diff)

    # compare zero-mean representatives (|Omega| = 1)
    e_pressure = 0.0
    for ops, p_diff in zip(ops_list, p_diffs):
        p_diff = p_diff.copy()
        p_diff[0] -= mean_shift
        e_pressure += ops.pressure_norm_sq(p_diff)

    dofmap_n = result.stats.get("n_u", 0) + result.stats.get("n_p", 0)
    return ErrorReport(h=mesh.h, n_dofs=dofmap_n,
                       err_l2=math.sqrt(e_l2),
                       err_energy=math.sqrt(e_energy),
                       err_pressure=math.sqrt(max(e_pressure, 0.0)))


def project_exact_field(mesh: PolyMesh, k: int, exact: ManufacturedSolution,
                        factory: ElementFactory | None = None):
    """Elementwise projections of the exact solution onto the discrete spaces.

    Returns (WeakField with interior/edge projections, pressure coefficient
    array); the benchmark a patch test must reproduce exactly.
    """
    if factory is None:
        factory = ElementFactory(mesh, k)
    fld = WeakField(mesh, k)
    pressure = np.zeros((mesh.n_cells, factory(0).layout.pressure_dim))
    for cid in range(mesh.n_cells):
        ops = factory(cid)
        fld.u0[cid] = ops.project_interior(exact.velocity)
        pressure[cid] = ops.project_pressure(exact.pressure)
    for eid in range(mesh.n_edges):
        fld.ub[eid] = project_edge(mesh, eid, k, exact.velocity)
    return fld, pressure


def field_errors_against_projection(mesh: PolyMesh, k: int, result: SolveResult,
                                    exact: ManufacturedSolution,
                                    factory: ElementFactory | None = None) -> dict:
    """L2 distances between the discrete solution and the projected exact one."""
    if factory is None:
        factory = ElementFactory(mesh, k)
    proj, p_proj = project_exact_field(mesh, k, exact, factory)
    u0_sq = 0.0
    ub_sq = 0.0
    p_sq = 0.0
    for cid in range(mesh.n_cells):
        ops = factory(cid)
        u0_sq += ops.interior_norm_sq(result.field.u0[cid] - proj.u0[cid])
        p_sq += ops.pressure_norm_sq(result.pressure[cid] - p_proj[cid])
    for eid, edge in enumerate(mesh.edges):
        d = result.field.ub[eid] - proj.ub[eid]
        w = edge.length / (2.0 * np.arange(k + 1) + 1.0)
        ub_sq += float(((d * d) @ w).sum())
    return {"u0": math.sqrt(u0_sq), "ub": math.sqrt(ub_sq), "p": math.sqrt(p_sq)}


# ---------------------------------------------------------------------------
# convergence studies
# ---------------------------------------------------------------------------

@dataclass
class LevelResult:
    label: int
    n: int
    report: ErrorReport
    timings: dict = field(default_factory=dict)


@dataclass
class RateTable:
    problem: str
    family: str
    k: int
    levels: list[LevelResult] = field(default_factory=list)

    def rates(self) -> list[tuple[float, float, float] | None]:
        """Observed orders per level from consecutive-level log ratios."""
        out: list[tuple[float, float, float] | None] = [None]
        for prev, cur in zip(self.levels, self.levels[1:]):
            hr = math.log(prev.report.h / cur.report.h)
            out.append(tuple(
                math.log(getattr(prev.report, a) / getattr(cur.report, a)) / hr
                if getattr(cur.report, a) > 0 and getattr(prev.report, a) > 0 else math.nan
                for a in ("err_l2", "err_energy", "err_pressure")))
        return out


def run_convergence(problem, family: str, k: int, ns, labels=None,
                    solver: str = "direct", quad_degree: int | None = None) -> RateTable:
    """Solve the problem on each refinement level and collect the error triple."""
    ns = list(ns)
    if len(ns) < 1:
        raise ValueError("need at least one refinement level")
    exact = get_problem(problem)
    if labels is None:
        labels = [int(round(math.log2(n))) for n in ns]
    table = RateTable(problem=exact.name, family=family, k=k)
    for label, n in zip(labels, ns):
        t0 = time.perf_counter()
        mesh = build_mesh(family, n)
        factory = ElementFactory(mesh, k, vol_degree=quad_degree, err_degree=quad_degree)
        result, _system = solve_stokes(mesh, k, exact.forcing, g=exact.velocity,
                                       method=solver, factory=factory)
        report = compute_errors(mesh, k, result, exact, factory)
        timings = {
            "total_s": time.perf_counter() - t0,
            "assembly_s": result.stats.get("assembly_s"),
            "solve_s": result.stats.get("solve_s"),
            "residual": result.residual,
        }
        table.levels.append(LevelResult(label=label, n=n, report=report,
                                        timings=timings))
    return table


# ---------------------------------------------------------------------------
# stability probes
# ---------------------------------------------------------------------------

def _flat_size(mesh: PolyMesh, k: int, dim_k: int) -> int:
    return mesh.n_cells * 2 * dim_k + mesh.n_edges * 2 * (k + 1)


def _random_field(mesh: PolyMesh, k: int, dim_k: int, rng) -> WeakField:
    fld = WeakField(mesh, k)
    fld.u0 = rng.standard_normal(fld.u0.shape)
    fld.ub = rng.standard_normal(fld.ub.shape)
    return fld


def _remove_constant_component(fld: WeakField) -> None:
    # the shared kernel of both norms is the two-parameter family of
    # constant fields (v0 = c, vb = c); project it out in coefficient space
    for comp in (0, 1):
        ones_sq = fld.u0.shape[0] + fld.ub.shape[0]
        total = fld.u0[:, comp, 0].sum() + fld.ub[:, comp, 0].sum()
        shift = total / ones_sq
        fld.u0[:, comp, 0] -= shift
        fld.ub[:, comp, 0] -= shift


def probe_norm_equivalence(mesh: PolyMesh, k: int, n_samples: int = 20,
                           seed: int = 0,
                           factory: ElementFactory | None = None) -> dict:
    """Ratios of the energy norm to the discrete H1 seminorm on random fields.

    Samples unit-variance coefficient fields, removes the constant-field
    kernel component, and returns per-sample ratios plus the min/max.  The
    discrete H1 seminorm combines broken gradients with h^{-1}-scaled
    boundary mismatch terms.
    """
    if factory is None:
        factory = ElementFactory(mesh, k)
    rng = np.random.default_rng(seed)
    ops_all = [factory(cid) for cid in range(mesh.n_cells)]
    ratios = []
    for _ in range(n_samples):
        fld = _random_field(mesh, k, ops_all[0].layout.dim_interior, rng)
        _remove_constant_component(fld)
        energy_sq = 0.0
        h1_sq = 0.0
        for cid, ops in enumerate(ops_all):
            vdofs = fld.local_dofs(mesh, cid, ops.layout)
            energy_sq += ops.energy_sq(vdofs)
            h1_sq += ops.gradient_seminorm_sq(vdofs) + ops.jump_sq(vdofs) / ops.diameter
        if h1_sq <= 0.0:
            continue  # kernel draw; excluded from the statistics
        ratios.append(math.sqrt(energy_sq / h1_sq))
    return {"ratios": ratios, "min": min(ratios), "max": max(ratios),
            "n_samples": len(ratios)}


def probe_infsup(mesh: PolyMesh, k: int, factory: ElementFactory | None = None,
                 max_unknowns: int = 26000) -> float:
    """Discrete inf-sup constant from the dense pressure Schur complement.

    beta = sqrt of the smallest eigenvalue of B A^{-1} B' in the pressure
    mass inner product, restricted to zero-mean pressures.  Dense linear
    algebra: refuses systems beyond max_unknowns unknowns.
    """
    if factory is None:
        factory = ElementFactory(mesh, k)
    _, system = solve_stokes(mesh, k, lambda p: np.zeros((len(p), 2)), factory=factory)
    n = system.n_u + system.n_p
    if n > max_unknowns:
        raise ProbeTooLargeError(
            f"{n} unknowns exceeds the dense probe cap {max_unknowns}")
    a = system.velocity_block.toarray()
    b = system.divergence_block.toarray()
    c = system.constraint_vector
    mass_p = np.zeros((system.n_p, system.n_p))
    off = 0
    for cid in range(mesh.n_cells):
        ops = factory(cid)
        dim_p = ops.layout.pressure_dim
        mass_p[off:off + dim_p, off:off + dim_p] = ops.mass_pressure
        off += dim_p
    cho = sla.cho_factor(a)
    schur = b @ sla.cho_solve(cho, b.T)
    schur = 0.5 * (schur + schur.T)
    basis_zero_mean = sla.null_space(c[None, :])
    evals = sla.eigh(basis_zero_mean.T @ schur @ basis_zero_mean,
                     basis_zero_mean.T @ mass_p @ basis_zero_mean,
                     eigvals_only=True)
    return math.sqrt(max(float(evals.min()), 0.0))
