"""Polygonal meshes of the unit square with full edge topology.

Two built-in families refine the unit square:

* ``tri`` -- n x n squares each split along the same diagonal into two
  right triangles (all cells convex, 3 edges).
* ``nonconvex-l`` -- each of the n x n squares is cut into an L-shaped
  hexagon with one reflex vertex (locally (0,0),(1,0),(1,1/2),(1/2,1/2),
  (1/2,1),(0,1)) plus the complementary quarter square.  Conformity is
  restored by inserting collinear vertices where a neighbor's cut lands on
  a cell side, so interior L-cells have 8 edge segments.

Edges are globally unique; each stores its adjacent cells and the outward
unit normal with respect to each of them.  The canonical edge direction
(lower vertex id to higher) fixes the parameterization shared by edge
polynomial bases.  Meshes are immutable after construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import DegenerateCellError
from .polybasis import GEOM_TOL, polygon_area, polygon_is_convex, _polygon_centroid

DOMAIN_AREA = 1.0
FAMILIES = ("tri", "nonconvex-l")


def polygon_geometry(coords: np.ndarray) -> tuple[float, np.ndarray, float]:
    """(area, centroid, diameter) of a simple CCW polygon.

    Area by the shoelace formula, centroid by the standard polygon formula,
    diameter as the maximum pairwise vertex distance.
    """
    coords = np.asarray(coords, dtype=float)
    area = polygon_area(coords)
    if area <= 1e-14:
        raise DegenerateCellError(f"cell area {area:.3e} is degenerate")
    centroid = _polygon_centroid(coords, area)
    diffs = coords[:, None, :] - coords[None, :, :]
    diameter = float(np.sqrt((diffs ** 2).sum(axis=2)).max())
    return area, centroid, diameter


@dataclass
class Cell:
    """Polygonal cell: CCW vertex ids, aligned edge ids, cached geometry."""

    vertex_ids: np.ndarray
    edge_ids: np.ndarray
    area: float
    centroid: np.ndarray
    diameter: float
    convex: bool

    @property
    def n_edges(self) -> int:
        return len(self.vertex_ids)


@dataclass
class Edge:
    """Mesh edge in canonical direction (lower vertex id first).

    cell_ids holds one (boundary) or two (interior) adjacent cells;
    normals[i] is the outward unit normal with respect to cell_ids[i].
    """

    vertex_ids: tuple[int, int]
    length: float
    cell_ids: list[int] = field(default_factory=list)
    normals: list[np.ndarray] = field(default_factory=list)

    @property
    def boundary(self) -> bool:
        return len(self.cell_ids) == 1


class PolyMesh:
    """Conforming polygonal mesh: vertices (nv, 2), cells, edges.

    Treat as immutable after construction; safe to share across threads.
    """

    def __init__(self, vertices, cells, edges, family="custom", level=None):
        self.vertices = np.asarray(vertices, dtype=float)
        self.cells: list[Cell] = cells
        self.edges: list[Edge] = edges
        self.family = family
        self.level = level
        self.h = max(c.diameter for c in cells)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    def cell_coords(self, cell_id: int) -> np.ndarray:
        return self.vertices[self.cells[cell_id].vertex_ids]

    def edge_coords(self, edge_id: int) -> tuple[np.ndarray, np.ndarray]:
        a, b = self.edges[edge_id].vertex_ids
        return self.vertices[a], self.vertices[b]

    def boundary_edge_ids(self) -> list[int]:
        return [i for i, e in enumerate(self.edges) if e.boundary]

    def __repr__(self) -> str:
        return (f"PolyMesh(family={self.family!r}, level={self.level}, "
                f"cells={self.n_cells}, edges={self.n_edges}, h={self.h:.4g})")


def mesh_from_cells(vertices, cell_vertex_lists, family="custom", level=None) -> PolyMesh:
    """Build a PolyMesh from vertex coordinates and CCW cell vertex lists.

    Derives the unique edge set, adjacency, and outward normals.  Raises
    ValueError for non-CCW cells and DegenerateCellError for degenerate
    ones.
    """
    vertices = np.asarray(vertices, dtype=float)
    edge_table: dict[tuple[int, int], int] = {}
    edges: list[Edge] = []
    cells: list[Cell] = []

    for cid, vids in enumerate(cell_vertex_lists):
        vids = np.asarray(vids, dtype=int)
        if len(vids) < 3:
            raise ValueError(f"cell {cid} has fewer than 3 vertices")
        coords = vertices[vids]
        if polygon_area(coords) <= 0:
            raise ValueError(f"cell {cid} is not counter-clockwise")
        area, centroid, diameter = polygon_geometry(coords)
        eids = np.empty(len(vids), dtype=int)
        for i in range(len(vids)):
            a, b = int(vids[i]), int(vids[(i + 1) % len(vids)])
            key = (min(a, b), max(a, b))
            eid = edge_table.get(key)
            if eid is None:
                eid = len(edges)
                edge_table[key] = eid
                length = float(np.linalg.norm(vertices[key[1]] - vertices[key[0]]))
                if length <= GEOM_TOL:
                    raise DegenerateCellError(f"edge {key} has zero length")
                edges.append(Edge(vertex_ids=key, length=length))
            tangent = (vertices[b] - vertices[a])
            tangent /= np.linalg.norm(tangent)
            edges[eid].cell_ids.append(cid)
            edges[eid].normals.append(np.array([tangent[1], -tangent[0]]))
            eids[i] = eid
        cells.append(Cell(vertex_ids=vids, edge_ids=eids, area=area,
                          centroid=centroid, diameter=diameter,
                          convex=polygon_is_convex(coords)))

    mesh = PolyMesh(vertices, cells, edges, family=family, level=level)
    return mesh


class _VertexPool:
    """Vertices on the half-step integer grid (i, j) -> (i, j)/(2n)."""

    def __init__(self, n: int):
        self.n = n
        self.index: dict[tuple[int, int], int] = {}
        self.coords: list[tuple[float, float]] = []

    def get(self, gi: int, gj: int) -> int:
        key = (gi, gj)
        vid = self.index.get(key)
        if vid is None:
            vid = len(self.coords)
            self.index[key] = vid
            self.coords.append((gi / (2 * self.n), gj / (2 * self.n)))
        return vid


def uniform_triangle_mesh(n: int) -> PolyMesh:
    """Uniform triangulation: n x n squares split along the same diagonal.

    2 n^2 congruent right triangles, h = sqrt(2)/n.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    pool = _VertexPool(n)
    cell_lists = []
    for j in range(n):
        for i in range(n):
            a = pool.get(2 * i, 2 * j)
            b = pool.get(2 * i + 2, 2 * j)
            c = pool.get(2 * i + 2, 2 * j + 2)
            d = pool.get(2 * i, 2 * j + 2)
            cell_lists.append([a, b, c])
            cell_lists.append([a, c, d])
    return mesh_from_cells(pool.coords, cell_lists, family="tri", level=n)


def nonconvex_l_mesh(n: int) -> PolyMesh:
    """Non-convex family: each square cut into an L-hexagon and a quarter square.

    The L-cell carries the reflex corner at the square's midpoint and is
    flagged non-convex.  Where a neighbor's cut meets a cell side, the
    collinear vertex is inserted so every interior edge is shared as a
    whole segment; the inserted split edges count toward the cell's edge
    number.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    pool = _VertexPool(n)
    cell_lists = []
    for j in range(n):
        for i in range(n):
            gx, gy = 2 * i, 2 * j
            hexagon = [pool.get(gx, gy)]
            if j > 0:  # neighbor below splits our bottom side at its midpoint
                hexagon.append(pool.get(gx + 1, gy))
            hexagon += [
                pool.get(gx + 2, gy),
                pool.get(gx + 2, gy + 1),
                pool.get(gx + 1, gy + 1),
                pool.get(gx + 1, gy + 2),
                pool.get(gx, gy + 2),
            ]
            if i > 0:  # left neighbor splits our left side at its midpoint
                hexagon.append(pool.get(gx, gy + 1))
            square = [
                pool.get(gx + 1, gy + 1),
                pool.get(gx + 2, gy + 1),
                pool.get(gx + 2, gy + 2),
                pool.get(gx + 1, gy + 2),
            ]
            cell_lists.append(hexagon)
            cell_lists.append(square)
    return mesh_from_cells(pool.coords, cell_lists, family="nonconvex-l", level=n)


def build_mesh(family: str, n: int) -> PolyMesh:
    """Dispatch on the family tag ("tri" or "nonconvex-l")."""
    if family == "tri":
        return uniform_triangle_mesh(n)
    if family == "nonconvex-l":
        return nonconvex_l_mesh(n)
    raise ValueError(f"unknown mesh family {family!r}; expected one of {FAMILIES}")


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __str__(self) -> str:
        if self.ok:
            return "mesh OK"
        return "\n".join(self.violations)


def _segments_intersect(p1, p2, p3, p4, eps) -> bool:
    """Proper intersection test for open segments p1-p2 and p3-p4."""
    d1 = (p2[0] - p1[0]) * (p3[1] - p1[1]) - (p2[1] - p1[1]) * (p3[0] - p1[0])
    d2 = (p2[0] - p1[0]) * (p4[1] - p1[1]) - (p2[1] - p1[1]) * (p4[0] - p1[0])
    d3 = (p4[0] - p3[0]) * (p1[1] - p3[1]) - (p4[1] - p3[1]) * (p1[0] - p3[0])
    d4 = (p4[0] - p3[0]) * (p2[1] - p3[1]) - (p4[1] - p3[1]) * (p2[0] - p3[0])
    return (d1 * d2 < -eps) and (d3 * d4 < -eps)


def validate_mesh(mesh: PolyMesh, unit_square: bool | None = None) -> ValidationReport:
    """Check mesh invariants; returns a report rather than raising.

    Checked: distinct vertices, simple CCW cells of positive area,
    conforming edge adjacency (2 cells interior / 1 on the boundary),
    outward unit normals, cell areas summing to the domain area, and the
    Euler relation #V - #E + #C = 1.
    """
    rep = ValidationReport()
    if unit_square is None:
        unit_square = mesh.family in FAMILIES

    order = np.lexsort((mesh.vertices[:, 1], mesh.vertices[:, 0]))
    sv = mesh.vertices[order]
    dup = np.nonzero((np.abs(np.diff(sv, axis=0)) < GEOM_TOL).all(axis=1))[0]
    for i in dup:
        rep.violations.append(
            f"vertices {order[i]} and {order[i + 1]} coincide within {GEOM_TOL}")
    if not np.isfinite(mesh.vertices).all():
        rep.violations.append("non-finite vertex coordinates")

    for cid, cell in enumerate(mesh.cells):
        coords = mesh.cell_coords(cid)
        area = polygon_area(coords)
        if area <= 1e-14:
            rep.violations.append(f"cell {cid}: non-positive area {area:.3e}")
            continue
        if abs(area - cell.area) > 1e-12 * max(1.0, area):
            rep.violations.append(f"cell {cid}: stored area stale")
        if cell.convex != polygon_is_convex(coords):
            rep.violations.append(f"cell {cid}: convexity flag wrong")
        m = len(coords)
        for i in range(m):
            for j in range(i + 1, m):
                if j == i + 1 or (i == 0 and j == m - 1):
                    continue
                if _segments_intersect(coords[i], coords[(i + 1) % m],
                                       coords[j], coords[(j + 1) % m], 1e-14):
                    rep.violations.append(f"cell {cid}: self-intersecting polygon")
        for i, eid in enumerate(cell.edge_ids):
            a, b = cell.vertex_ids[i], cell.vertex_ids[(i + 1) % m]
            if set(mesh.edges[eid].vertex_ids) != {int(a), int(b)}:
                rep.violations.append(f"cell {cid}: edge {eid} misaligned")

    for eid, edge in enumerate(mesh.edges):
        if len(edge.cell_ids) not in (1, 2):
            rep.violations.append(
                f"edge {eid}: {len(edge.cell_ids)} adjacent cells (conformity)")
            continue
        pa, pb = mesh.edge_coords(eid)
        if edge.boundary and unit_square:
            on_side = any(abs(pa[ax] - v) < GEOM_TOL and abs(pb[ax] - v) < GEOM_TOL
                          for ax in (0, 1) for v in (0.0, 1.0))
            if not on_side:
                rep.violations.append(f"edge {eid}: boundary edge not on the boundary")
        mid = 0.5 * (pa + pb)
        tangent = (pb - pa) / edge.length
        for cid, normal in zip(edge.cell_ids, edge.normals):
            if abs(np.linalg.norm(normal) - 1.0) > 1e-12:
                rep.violations.append(f"edge {eid}: normal not unit for cell {cid}")
            cell = mesh.cells[cid]
            # outward orientation from the CCW winding: the cell traverses
            # a->b or b->a, and the normal must be the -90 deg rotation of
            # the traversal direction
            k = int(np.nonzero(cell.edge_ids == eid)[0][0])
            va = cell.vertex_ids[k]
            sgn = 1.0 if va == edge.vertex_ids[0] else -1.0
            expect = sgn * np.array([tangent[1], -tangent[0]])
            if np.linalg.norm(normal - expect) > 1e-12:
                rep.violations.append(f"edge {eid}: normal not outward for cell {cid}")
            if cell.convex and np.dot(normal, mid - cell.centroid) <= 0:
                rep.violations.append(
                    f"edge {eid}: normal points inward for convex cell {cid}")

    total = sum(c.area for c in mesh.cells)
    if unit_square and abs(total - DOMAIN_AREA) > 1e-10:
        rep.violations.append(f"cell areas sum to {total!r}, expected 1")
    euler = mesh.n_vertices - mesh.n_edges + mesh.n_cells
    if euler != 1:
        rep.violations.append(f"Euler relation violated: V-E+C = {euler}")
    return rep


# ---------------------------------------------------------------------------
# text format
# ---------------------------------------------------------------------------

def save_mesh_text(mesh: PolyMesh, path) -> None:
    """Write the line-oriented text format (VERTICES / CELLS sections)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# wgstokes mesh 1\n")
        fh.write(f"FAMILY {mesh.family}\n")
        if mesh.level is not None:
            fh.write(f"LEVEL {mesh.level}\n")
        fh.write(f"VERTICES {mesh.n_vertices}\n")
        for x, y in mesh.vertices:
            fh.write(f"{float(x)!r} {float(y)!r}\n")
        fh.write(f"CELLS {mesh.n_cells}\n")
        for cell in mesh.cells:
            fh.write(" ".join(str(int(v)) for v in cell.vertex_ids) + "\n")


def load_mesh_text(path) -> PolyMesh:
    """Read the text format written by save_mesh_text; edges are rebuilt."""
    family, level = "custom", None
    vertices: list[tuple[float, float]] = []
    cell_lists: list[list[int]] = []
    with open(path, encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]
    i = 0
    while i < len(lines):
        tok = lines[i].split()
        if tok[0] == "FAMILY":
            family = tok[1]
            i += 1
        elif tok[0] == "LEVEL":
            level = int(tok[1])
            i += 1
        elif tok[0] == "VERTICES":
            count = int(tok[1])
            for ln in lines[i + 1:i + 1 + count]:
                x, y = ln.split()
                vertices.append((float(x), float(y)))
            i += 1 + count
        elif tok[0] == "CELLS":
            count = int(tok[1])
            for ln in lines[i + 1:i + 1 + count]:
                cell_lists.append([int(v) for v in ln.split()])
            i += 1 + count
        else:
            raise ValueError(f"unrecognized mesh file line: {lines[i]!r}")
    return mesh_from_cells(vertices, cell_lists, family=family, level=level)
