"""Polynomial bases and quadrature on polygonal cells and edges.

Cell bases are scaled monomials ((x - x_T)/h_T)^alpha about the cell
centroid, ordered by total degree then descending x-exponent.  At the
elevated degrees needed on non-convex cells the monomial Gram matrix is
hopelessly ill-conditioned (>1e20 for degree 12+), so an orthonormalized
basis is provided as a drop-in replacement: tensor Legendre polynomials on
the cell bounding box, Gram-Schmidt orthonormalized against the cell's own
quadrature inner product in 80-bit arithmetic.  Edge bases are Legendre
polynomials in the arclength parameter t in [-1, 1] of a fixed edge
parameterization.

Quadrature over a polygon triangulates it (fan from the centroid when
convex, ear clipping otherwise) and maps a tensor Gauss rule through the
Duffy transform onto each triangle; weights are positive and the rule is
exact to any requested degree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .exceptions import DegenerateCellError

GEOM_TOL = 1e-12
AREA_TOL = 1e-14

_LONG = np.longdouble


def dim_poly(degree: int, dim: int = 2) -> int:
    """Dimension of the space of polynomials of total degree <= degree."""
    if degree < 0:
        raise ValueError(f"degree must be >= 0, got {degree}")
    return math.comb(degree + dim, dim)


@lru_cache(maxsize=None)
def monomial_exponents(degree: int) -> tuple[tuple[int, int], ...]:
    """Graded exponent pairs (a, b), a + b <= degree, x-major within a grade."""
    return tuple((d - j, j) for d in range(degree + 1) for j in range(d + 1))


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QuadratureRule:
    """Points (n, 2), positive weights (n,), and the exactness degree."""

    points: np.ndarray
    weights: np.ndarray
    degree: int

    @property
    def measure(self) -> float:
        return float(self.weights.sum())


@lru_cache(maxsize=None)
def _gauss_unit(n: int) -> tuple[np.ndarray, np.ndarray]:
    """n-point Gauss-Legendre rule on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def _reference_triangle_rule(degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Rule on the unit right triangle exact for total degree <= degree.

    Duffy map x = u, y = v(1-u) from the unit square: the Jacobian (1-u)
    raises the u-degree by one, so Gauss counts are ceil((q+2)/2) in u and
    ceil((q+1)/2) in v.
    """
    q = max(degree, 0)
    xu, wu = _gauss_unit((q + 3) // 2)
    xv, wv = _gauss_unit((q + 2) // 2)
    u = np.repeat(xu, len(xv))
    v = np.tile(xv, len(xu))
    w = np.repeat(wu, len(wv)) * np.tile(wv, len(wu)) * (1.0 - u)
    pts = np.column_stack([u, v * (1.0 - u)])
    return pts, w


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def polygon_area(coords: np.ndarray) -> float:
    """Signed shoelace area; positive for counter-clockwise polygons."""
    x, y = coords[:, 0], coords[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def polygon_is_convex(coords: np.ndarray, tol: float = GEOM_TOL) -> bool:
    """False iff some cross product of consecutive edge vectors is < -tol."""
    n = len(coords)
    for i in range(n):
        if _cross(coords[i - 1], coords[i], coords[(i + 1) % n]) < -tol:
            return False
    return True


def triangulate_polygon(coords: np.ndarray) -> list[tuple[int, int, int]]:
    """Ear-clip a simple CCW polygon into triangles (vertex index triples).

    Collinear chains are tolerated: a straight-angle corner is removed
    without emitting a (zero-area) triangle.  Raises DegenerateCellError if
    no ear can be found or the triangle areas do not sum to the polygon
    area.
    """
    coords = np.asarray(coords, dtype=float)
    n = len(coords)
    area = polygon_area(coords)
    if area <= AREA_TOL:
        raise DegenerateCellError(f"polygon area {area:.3e} too small")
    eps = GEOM_TOL * max(1.0, float(np.abs(coords).max()) ** 2)

    idx = list(range(n))
    tris: list[tuple[int, int, int]] = []
    while len(idx) > 3:
        m = len(idx)
        for ii in range(m):
            ia, ib, ic = idx[ii - 1], idx[ii], idx[(ii + 1) % m]
            a, b, c = coords[ia], coords[ib], coords[ic]
            cr = _cross(a, b, c)
            if cr < -eps:
                continue  # reflex corner
            if cr <= eps:
                # straight angle: drop the middle vertex, emit nothing
                if np.dot(b - a, c - b) > 0.0:
                    del idx[ii]
                    break
                continue
            contains_other = False
            for jj in idx:
                if jj in (ia, ib, ic):
                    continue
                p = coords[jj]
                if (_cross(a, b, p) >= -eps and _cross(b, c, p) >= -eps
                        and _cross(c, a, p) >= -eps):
                    contains_other = True
                    break
            if not contains_other:
                tris.append((ia, ib, ic))
                del idx[ii]
                break
        else:
            raise DegenerateCellError("ear clipping failed; polygon not simple?")
    a, b, c = (coords[i] for i in idx)
    if _cross(a, b, c) > eps:
        tris.append(tuple(idx))

    tri_area = sum(0.5 * _cross(coords[i], coords[j], coords[k]) for i, j, k in tris)
    if abs(tri_area - area) > 1e-10 * area:
        raise DegenerateCellError(
            f"triangulation area mismatch: {tri_area:.15e} vs {area:.15e}")
    return tris


def cell_quadrature(coords: np.ndarray, degree: int) -> QuadratureRule:
    """Quadrature over a simple CCW polygon, exact for total degree <= degree.

    Convex polygons are fanned from the centroid; non-convex ones are ear
    clipped.  The per-triangle rule is the Duffy-mapped tensor Gauss rule.
    """
    coords = np.asarray(coords, dtype=float)
    if degree < 0:
        raise ValueError(f"degree must be >= 0, got {degree}")
    area = polygon_area(coords)
    if area <= AREA_TOL:
        raise DegenerateCellError(f"polygon area {area:.3e} too small")

    n = len(coords)
    if n == 3:
        triangles = [coords]
    elif polygon_is_convex(coords):
        centroid = _polygon_centroid(coords, area)
        triangles = [np.array([centroid, coords[i], coords[(i + 1) % n]])
                     for i in range(n)]
    else:
        triangles = [coords[list(t)] for t in triangulate_polygon(coords)]

    ref_pts, ref_w = _reference_triangle_rule(degree)
    pts_out, w_out = [], []
    for tri in triangles:
        p0, e1, e2 = tri[0], tri[1] - tri[0], tri[2] - tri[0]
        jac = e1[0] * e2[1] - e1[1] * e2[0]
        if jac <= AREA_TOL:
            continue
        pts_out.append(p0 + np.outer(ref_pts[:, 0], e1) + np.outer(ref_pts[:, 1], e2))
        w_out.append(ref_w * jac)
    return QuadratureRule(np.vstack(pts_out), np.concatenate(w_out), degree)


def _polygon_centroid(coords: np.ndarray, area: float) -> np.ndarray:
    x, y = coords[:, 0], coords[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    cx = float(np.dot(x + xn, cross)) / (6.0 * area)
    cy = float(np.dot(y + yn, cross)) / (6.0 * area)
    return np.array([cx, cy])


def edge_quadrature(a, b, degree: int) -> QuadratureRule:
    """Gauss rule with ceil((degree+1)/2) points on the segment a-b."""
    if degree < 0:
        raise ValueError(f"degree must be >= 0, got {degree}")
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    t, w = np.polynomial.legendre.leggauss(max((degree + 2) // 2, 1))
    pts = 0.5 * (a + b) + 0.5 * np.outer(t, b - a)
    length = float(np.linalg.norm(b - a))
    return QuadratureRule(pts, 0.5 * length * w, degree)


# ---------------------------------------------------------------------------
# cell bases
# ---------------------------------------------------------------------------

class CellBasis:
    """Scaled monomial basis phi_alpha(x) = ((x - center)/scale)^alpha."""

    def __init__(self, degree: int, center, scale: float):
        self.degree = degree
        self.center = np.asarray(center, dtype=float)
        self.scale = float(scale)
        self.exponents = np.array(monomial_exponents(degree), dtype=int)
        self.dim = len(self.exponents)

    def eval(self, points: np.ndarray) -> np.ndarray:
        """Basis values at points, shape (npts, dim)."""
        x = (np.atleast_2d(points) - self.center) / self.scale
        ex, ey = self.exponents[:, 0], self.exponents[:, 1]
        return x[:, 0:1] ** ex[None, :] * x[:, 1:2] ** ey[None, :]

    def eval_grad(self, points: np.ndarray) -> np.ndarray:
        """Gradients at points, shape (npts, dim, 2); includes the 1/scale factor."""
        x = (np.atleast_2d(points) - self.center) / self.scale
        ex, ey = self.exponents[:, 0], self.exponents[:, 1]
        px = x[:, 0:1] ** np.maximum(ex - 1, 0)[None, :]
        py = x[:, 1:2] ** np.maximum(ey - 1, 0)[None, :]
        vx = x[:, 0:1] ** ex[None, :]
        vy = x[:, 1:2] ** ey[None, :]
        out = np.empty((x.shape[0], self.dim, 2))
        out[:, :, 0] = ex[None, :] * px * vy / self.scale
        out[:, :, 1] = ey[None, :] * vx * py / self.scale
        return out


def _legendre_values(t: np.ndarray, degree: int) -> np.ndarray:
    """P_0..P_degree at t via the three-term recurrence, shape t.shape + (degree+1,)."""
    out = np.empty(t.shape + (degree + 1,), dtype=t.dtype)
    out[..., 0] = 1.0
    if degree >= 1:
        out[..., 1] = t
    for n in range(1, degree):
        out[..., n + 1] = ((2 * n + 1) * t * out[..., n] - n * out[..., n - 1]) / (n + 1)
    return out


def _legendre_derivatives(t: np.ndarray, degree: int) -> np.ndarray:
    """P'_0..P'_degree via P'_n = n P_{n-1} + t P'_{n-1}."""
    vals = _legendre_values(t, degree)
    out = np.zeros_like(vals)
    for n in range(1, degree + 1):
        out[..., n] = n * vals[..., n - 1] + t * out[..., n - 1]
    return out


class BoxLegendreBasis:
    """Tensor Legendre products P_a(xh) P_b(yh), a + b <= degree, on a bounding box.

    xh, yh are the box coordinates mapped to [-1, 1].  Spans the same total
    degree space as the monomials but with a far better conditioned Gram
    matrix, which makes it a usable starting point for orthonormalization.
    """

    def __init__(self, degree: int, lo, hi):
        self.degree = degree
        self.lo = np.asarray(lo, dtype=float)
        self.hi = np.asarray(hi, dtype=float)
        self.exponents = np.array(monomial_exponents(degree), dtype=int)
        self.dim = len(self.exponents)
        self._mid = 0.5 * (self.lo + self.hi)
        self._half = 0.5 * (self.hi - self.lo)

    def _mapped(self, points, dtype):
        return ((np.atleast_2d(points) - self._mid) / self._half).astype(dtype)

    def eval(self, points, dtype=np.float64) -> np.ndarray:
        xh = self._mapped(points, dtype)
        lx = _legendre_values(xh[:, 0], self.degree)
        ly = _legendre_values(xh[:, 1], self.degree)
        ex, ey = self.exponents[:, 0], self.exponents[:, 1]
        return lx[:, ex] * ly[:, ey]

    def eval_grad(self, points, dtype=np.float64) -> np.ndarray:
        xh = self._mapped(points, dtype)
        lx = _legendre_values(xh[:, 0], self.degree)
        ly = _legendre_values(xh[:, 1], self.degree)
        dx = _legendre_derivatives(xh[:, 0], self.degree)
        dy = _legendre_derivatives(xh[:, 1], self.degree)
        ex, ey = self.exponents[:, 0], self.exponents[:, 1]
        out = np.empty((xh.shape[0], self.dim, 2), dtype=dtype)
        out[:, :, 0] = dx[:, ex] * ly[:, ey] / dtype(self._half[0])
        out[:, :, 1] = lx[:, ex] * dy[:, ey] / dtype(self._half[1])
        return out


class OrthonormalCellBasis:
    """Basis orthonormal in the L2(T) inner product of a given cell rule.

    Built by modified Gram-Schmidt (with reorthogonalization) on the
    weighted Vandermonde of a BoxLegendreBasis.  The whole pipeline runs in
    numpy longdouble: the change of basis can amplify rounding by ~1e8 at
    degree 18, and 80-bit arithmetic keeps evaluated values accurate to
    ~1e-12, which double precision cannot.
    """

    def __init__(self, start: BoxLegendreBasis, coeff: np.ndarray):
        self.degree = start.degree
        self.dim = start.dim
        self._start = start
        self._coeff = coeff  # longdouble (dim, dim)

    def eval(self, points) -> np.ndarray:
        vals = self._start.eval(points, dtype=_LONG)
        return np.asarray(vals @ self._coeff, dtype=np.float64)

    def eval_grad(self, points) -> np.ndarray:
        grads = self._start.eval_grad(points, dtype=_LONG)
        out = np.empty((grads.shape[0], self.dim, 2))
        out[:, :, 0] = np.asarray(grads[:, :, 0] @ self._coeff, dtype=np.float64)
        out[:, :, 1] = np.asarray(grads[:, :, 1] @ self._coeff, dtype=np.float64)
        return out


def orthonormalize_cell_basis(coords: np.ndarray, degree: int,
                              rule: QuadratureRule) -> OrthonormalCellBasis:
    """Orthonormal basis for P_degree on the polygon w.r.t. rule's inner product.

    rule must be exact for degree 2*degree so that the discrete inner
    product coincides with L2(T).
    """
    coords = np.asarray(coords, dtype=float)
    start = BoxLegendreBasis(degree, coords.min(axis=0), coords.max(axis=0))
    vand = start.eval(rule.points, dtype=_LONG)
    vand *= np.sqrt(rule.weights.astype(_LONG))[:, None]

    n = start.dim
    if vand.shape[0] < n:
        raise DegenerateCellError(
            f"quadrature rule with {vand.shape[0]} points cannot resolve "
            f"the {n}-dimensional degree-{degree} space")
    q = vand  # orthonormalized in place, column by column
    r = np.zeros((n, n), dtype=_LONG)
    for j in range(n):
        v = q[:, j].copy()
        scale = np.sqrt(v @ v)
        for _ in range(2):  # reorthogonalization pass; "twice is enough"
            if j > 0:
                proj = q[:, :j].T @ v
                r[:j, j] += proj
                v -= q[:, :j] @ proj
        nrm = np.sqrt(v @ v)
        if not nrm > 1e-12 * scale:
            raise DegenerateCellError(
                f"rank deficiency while orthonormalizing degree {degree} basis")
        r[j, j] = nrm
        q[:, j] = v / nrm
    # coeff = r^{-1} by back substitution, kept in longdouble
    coeff = np.zeros((n, n), dtype=_LONG)
    for j in range(n - 1, -1, -1):
        coeff[j, j] = 1.0 / r[j, j]
        for i in range(j - 1, -1, -1):
            coeff[i, j] = -(r[i, i + 1:j + 1] @ coeff[i + 1:j + 1, j]) / r[i, i]
    return OrthonormalCellBasis(start, coeff)


# ---------------------------------------------------------------------------
# edge basis
# ---------------------------------------------------------------------------

class EdgeBasis:
    """Legendre basis P_0..P_k in the parameter t in [-1, 1] of the edge a->b."""

    def __init__(self, degree: int, a, b):
        self.degree = degree
        self.a = np.asarray(a, dtype=float)
        self.b = np.asarray(b, dtype=float)
        self.dim = degree + 1
        self.length = float(np.linalg.norm(self.b - self.a))
        self._mid = 0.5 * (self.a + self.b)
        self._half = 0.5 * (self.b - self.a)

    def param(self, points: np.ndarray) -> np.ndarray:
        """Parameter values of (on-edge) physical points."""
        rel = np.atleast_2d(points) - self._mid
        return rel @ self._half / (self._half @ self._half)

    def eval(self, points: np.ndarray) -> np.ndarray:
        return _legendre_values(self.param(points), self.degree)

    def eval_param(self, t: np.ndarray) -> np.ndarray:
        return _legendre_values(np.asarray(t, dtype=float), self.degree)

    def point(self, t) -> np.ndarray:
        return self._mid + np.outer(np.atleast_1d(t), self._half).reshape(-1, 2)

    def mass_diagonal(self) -> np.ndarray:
        """Edge mass matrix is diagonal: int_e P_m^2 ds = length/(2m+1)."""
        return self.length / (2.0 * np.arange(self.dim) + 1.0)
