"""Simplicial 2D meshes: construction, MEDIT I/O, bisection refinement,
vertex patches, and per-element geometry."""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .basis import LOCAL_EDGES, triangle_area


class MeshError(ValueError):
    pass


class MeshParseError(MeshError):
    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class RefinementBudgetError(MeshError):
    pass


@dataclass(frozen=True)
class ElementGeometry:
    """Geometric quantities of one triangle."""

    h: float  # diameter (longest edge)
    rho: float  # inscribed-ball diameter
    kappa: float  # h / rho
    tau: np.ndarray  # distance from each local vertex to the opposite edge line

    def __post_init__(self):
        assert self.rho <= self.tau.min() + 1e-12 and self.tau.max() <= self.h + 1e-12


@dataclass(frozen=True)
class VertexPatch:
    """The elements sharing one mesh vertex and their local numbering."""

    center: int
    elements: np.ndarray  # triangle indices
    h: float  # max element diameter over the patch
    is_boundary: bool
    local_vertex: np.ndarray  # index of `center` within each element's triple


@dataclass
class Mesh:
    """Matching triangulation with canonically oriented edges.

    Edges are stored low vertex index to high; ``edge_tris[e]`` holds the one
    or two adjacent triangles (second entry -1 on the boundary).
    ``tri_edges[t, i]`` is the edge opposite local vertex i of triangle t.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    vertex_refs: np.ndarray = field(default=None)  # type: ignore[assignment]
    triangle_refs: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float)
        self.triangles = np.asarray(self.triangles, dtype=int)
        if self.vertex_refs is None:
            self.vertex_refs = np.zeros(len(self.vertices), dtype=int)
        if self.triangle_refs is None:
            self.triangle_refs = np.zeros(len(self.triangles), dtype=int)
        self._build_topology()

    def _build_topology(self):
        nv = len(self.vertices)
        if self.triangles.min(initial=0) < 0 or self.triangles.max(initial=-1) >= nv:
            raise MeshError("triangle vertex index out of range")
        for t, tri in enumerate(self.triangles):
            if triangle_area(self.vertices[tri]) <= 0:
                raise MeshError(f"triangle {t} has nonpositive area")
        edge_map: dict[tuple[int, int], int] = {}
        edges: list[tuple[int, int]] = []
        edge_tris: list[list[int]] = []
        tri_edges = np.empty_like(self.triangles)
        for t, tri in enumerate(self.triangles):
            for i, (j, k) in enumerate(LOCAL_EDGES):
                key = (min(tri[j], tri[k]), max(tri[j], tri[k]))
                e = edge_map.get(key)
                if e is None:
                    e = len(edges)
                    edge_map[key] = e
                    edges.append(key)
                    edge_tris.append([])
                if len(edge_tris[e]) >= 2:
                    raise MeshError(f"edge {key} shared by more than two triangles")
                edge_tris[e].append(t)
                tri_edges[t, i] = e
        self.edges = np.array(edges, dtype=int).reshape(-1, 2)
        self.edge_tris = np.array(
            [pair + [-1] * (2 - len(pair)) for pair in edge_tris], dtype=int
        )
        self.tri_edges = tri_edges
        self.boundary_edge = self.edge_tris[:, 1] < 0
        self.boundary_vertex = np.zeros(nv, dtype=bool)
        self.boundary_vertex[self.edges[self.boundary_edge].ravel()] = True

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def coords(self, t: int) -> np.ndarray:
        return self.vertices[self.triangles[t]]


def element_geometry(mesh: Mesh, t: int) -> ElementGeometry:
    coords = mesh.coords(t)
    sides = np.array(
        [np.linalg.norm(coords[k] - coords[j]) for j, k in LOCAL_EDGES]
    )  # side i opposite vertex i
    area = triangle_area(coords)
    h = sides.max()
    rho = 4.0 * area / sides.sum()  # inscribed diameter: 2 * area / semiperimeter
    tau = 2.0 * area / sides
    return ElementGeometry(h=h, rho=rho, kappa=h / rho, tau=tau)


def element_diameters(mesh: Mesh) -> np.ndarray:
    out = np.empty(mesh.n_triangles)
    for t in range(mesh.n_triangles):
        coords = mesh.coords(t)
        out[t] = max(np.linalg.norm(coords[k] - coords[j]) for j, k in LOCAL_EDGES)
    return out


def vertex_patches(mesh: Mesh) -> list[VertexPatch]:
    members: list[list[int]] = [[] for _ in range(mesh.n_vertices)]
    local: list[list[int]] = [[] for _ in range(mesh.n_vertices)]
    for t, tri in enumerate(mesh.triangles):
        for i, v in enumerate(tri):
            members[v].append(t)
            local[v].append(i)
    diam = element_diameters(mesh)
    patches = []
    for v in range(mesh.n_vertices):
        els = np.array(members[v], dtype=int)
        patches.append(
            VertexPatch(
                center=v,
                elements=els,
                h=float(diam[els].max()) if len(els) else 0.0,
                is_boundary=bool(mesh.boundary_vertex[v]),
                local_vertex=np.array(local[v], dtype=int),
            )
        )
    return patches


# ---------------------------------------------------------------------------
# structured criss-cross construction

DOMAINS = ("unit_square", "square2", "lshape")


def build_crisscross(n: int, domain: str = "unit_square") -> Mesh:
    """Cartesian grid of squares, each split into four triangles by its
    barycenter.  ``n`` is the number of squares across the full side."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if domain == "unit_square":
        lo, hi = 0.0, 1.0
        keep = lambda cx, cy: True
    elif domain == "square2":
        lo, hi = -1.0, 1.0
        keep = lambda cx, cy: True
    elif domain == "lshape":
        if n % 2:
            raise ValueError("lshape requires an even n")
        lo, hi = -1.0, 1.0
        keep = lambda cx, cy: not (cx > 0 and cy > 0)
    else:
        raise ValueError(f"unknown domain {domain!r} (choose from {DOMAINS})")

    h = (hi - lo) / n
    grid = {}
    verts: list[tuple[float, float]] = []

    def vid(key, x, y):
        if key not in grid:
            grid[key] = len(verts)
            verts.append((x, y))
        return grid[key]

    tris = []
    for iy in range(n):
        for ix in range(n):
            cx = lo + (ix + 0.5) * h
            cy = lo + (iy + 0.5) * h
            if not keep(cx, cy):
                continue
            c00 = vid(("g", ix, iy), lo + ix * h, lo + iy * h)
            c10 = vid(("g", ix + 1, iy), lo + (ix + 1) * h, lo + iy * h)
            c11 = vid(("g", ix + 1, iy + 1), lo + (ix + 1) * h, lo + (iy + 1) * h)
            c01 = vid(("g", ix, iy + 1), lo + ix * h, lo + (iy + 1) * h)
            cc = vid(("c", ix, iy), cx, cy)
            tris += [(c00, c10, cc), (c10, c11, cc), (c11, c01, cc), (c01, c00, cc)]
    return Mesh(np.array(verts), np.array(tris, dtype=int))


# ---------------------------------------------------------------------------
# MEDIT ASCII format


def read_medit(stream) -> Mesh:
    """Parse an ASCII MEDIT (.mesh) stream with 2D vertices and triangles."""
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    tokens: list[tuple[str, int]] = []
    for lineno, line in enumerate(stream, start=1):
        body = line.split("#", 1)[0]
        for tok in body.split():
            tokens.append((tok, lineno))
    pos = 0

    def next_token():
        nonlocal pos
        if pos >= len(tokens):
            raise MeshParseError("unexpected end of file")
        tok = tokens[pos]
        pos += 1
        return tok

    def read_int(what):
        tok, ln = next_token()
        try:
            return int(tok)
        except ValueError:
            raise MeshParseError(f"expected integer {what}, got {tok!r}", ln) from None

    def read_float(what):
        tok, ln = next_token()
        try:
            return float(tok)
        except ValueError:
            raise MeshParseError(f"expected number {what}, got {tok!r}", ln) from None

    verts = tris = vrefs = trefs = None
    dim = None
    while pos < len(tokens):
        tok, ln = next_token()
        key = tok.lower()
        if key == "meshversionformatted":
            read_int("version")
        elif key == "dimension":
            dim = read_int("dimension")
            if dim != 2:
                raise MeshParseError(f"dimension {dim} unsupported, need 2", ln)
        elif key == "vertices":
            nv = read_int("vertex count")
            verts = np.empty((nv, 2))
            vrefs = np.empty(nv, dtype=int)
            for i in range(nv):
                verts[i, 0] = read_float("x")
                verts[i, 1] = read_float("y")
                vrefs[i] = read_int("vertex reference")
        elif key == "triangles":
            nt = read_int("triangle count")
            tris = np.empty((nt, 3), dtype=int)
            trefs = np.empty(nt, dtype=int)
            for i in range(nt):
                for j in range(3):
                    tris[i, j] = read_int("triangle vertex") - 1
                trefs[i] = read_int("triangle reference")
        elif key == "edges":
            ne = read_int("edge count")
            for _ in range(3 * ne):
                next_token()
        elif key == "end":
            break
        else:
            raise MeshParseError(f"unknown section {tok!r}", ln)
    if dim is None:
        raise MeshParseError("missing Dimension section")
    if verts is None or tris is None:
        raise MeshParseError("missing Vertices or Triangles section")
    if tris.min(initial=0) < 0 or tris.max(initial=-1) >= len(verts):
        raise MeshParseError("triangle vertex index out of range")
    for t in range(len(tris)):
        if triangle_area(verts[tris[t]]) <= 0:
            raise MeshParseError(f"triangle {t + 1} has nonpositive area")
    return Mesh(verts, tris, vertex_refs=vrefs, triangle_refs=trefs)


def write_medit(mesh: Mesh, stream) -> None:
    w = stream.write
    w("MeshVersionFormatted 2\n\nDimension 2\n\n")
    w(f"Vertices\n{mesh.n_vertices}\n")
    for (x, y), r in zip(mesh.vertices, mesh.vertex_refs):
        w(f"{float(x)!r} {float(y)!r} {int(r)}\n")
    w(f"\nTriangles\n{mesh.n_triangles}\n")
    for tri, r in zip(mesh.triangles, mesh.triangle_refs):
        w(f"{tri[0] + 1} {tri[1] + 1} {tri[2] + 1} {int(r)}\n")
    w("\nEnd\n")


def medit_roundtrip_string(mesh: Mesh) -> str:
    buf = io.StringIO()
    write_medit(mesh, buf)
    return buf.getvalue()


# ---------------------------------------------------------------------------
# newest-vertex bisection


def _longest_edge_first(verts: np.ndarray, tri) -> tuple[int, int, int]:
    """Cyclically rotate so the bisection edge (first two vertices) is the
    longest edge; preserves orientation."""
    a, b, c = tri
    lens = [
        np.linalg.norm(verts[b] - verts[a]),
        np.linalg.norm(verts[c] - verts[b]),
        np.linalg.norm(verts[a] - verts[c]),
    ]
    rot = int(np.argmax(lens))
    order = [(a, b, c), (b, c, a), (c, a, b)][rot]
    return order


class _Bisector:
    """Mutable newest-vertex bisection state.

    Each alive triangle (a, b, c) has bisection edge (a, b) and newest vertex
    c; input triangles start with their longest edge as bisection edge.
    """

    def __init__(self, mesh: Mesh, max_elements: int):
        self.verts = [tuple(v) for v in mesh.vertices]
        self.tris: list[tuple[int, int, int] | None] = [
            _longest_edge_first(mesh.vertices, tri) for tri in mesh.triangles
        ]
        self.alive = len(self.tris)
        self.max_elements = max_elements
        self.edge_owner: dict[tuple[int, int], list[int]] = {}
        self.midpoints: dict[tuple[int, int], int] = {}
        for t in range(len(self.tris)):
            self._register(t)

    def _register(self, t):
        a, b, c = self.tris[t]
        for u, v in ((a, b), (b, c), (c, a)):
            self.edge_owner.setdefault((min(u, v), max(u, v)), []).append(t)

    def _unregister(self, t):
        a, b, c = self.tris[t]
        for u, v in ((a, b), (b, c), (c, a)):
            self.edge_owner[(min(u, v), max(u, v))].remove(t)

    def _midpoint(self, u, v):
        key = (min(u, v), max(u, v))
        if key not in self.midpoints:
            self.midpoints[key] = len(self.verts)
            self.verts.append(
                (
                    0.5 * (self.verts[u][0] + self.verts[v][0]),
                    0.5 * (self.verts[u][1] + self.verts[v][1]),
                )
            )
        return self.midpoints[key]

    def _split(self, t):
        """Bisect triangle t across its bisection edge (no neighbor checks)."""
        a, b, c = self.tris[t]
        m = self._midpoint(a, b)
        self._unregister(t)
        self.tris[t] = None
        for child in ((c, a, m), (b, c, m)):
            self.tris.append(child)
            self._register(len(self.tris) - 1)
        self.alive += 1
        if self.alive > self.max_elements:
            raise RefinementBudgetError(
                f"refinement exceeded the {self.max_elements}-element budget"
            )

    def bisect(self, t, depth=0):
        """Conformingly bisect triangle t (recursive compatibility closure)."""
        if depth > 500:
            raise MeshError("bisection compatibility recursion too deep")
        if self.tris[t] is None:
            return
        a, b, _ = self.tris[t]
        key = (min(a, b), max(a, b))
        while True:
            nbs = [s for s in self.edge_owner[key] if s != t]
            if not nbs:
                break
            na, nb_b, _ = self.tris[nbs[0]]
            if (min(na, nb_b), max(na, nb_b)) == key:
                break  # neighbor's bisection edge is the shared edge
            self.bisect(nbs[0], depth + 1)
        self._split(t)
        # the compatible neighbor across the split edge must split too
        for s in list(self.edge_owner[key]):
            self._split(s)

    def to_mesh(self) -> Mesh:
        alive = [tri for tri in self.tris if tri is not None]
        return Mesh(np.array(self.verts), np.array(alive, dtype=int))


def refine_bisection(mesh: Mesh, marked, max_elements: int = 2_000_000) -> Mesh:
    """Conforming newest-vertex bisection: every triangle in ``marked`` is
    bisected at least once; hanging nodes are resolved by recursive
    compatibility refinement."""
    bis = _Bisector(mesh, max_elements)
    for t in sorted(set(int(t) for t in marked)):
        bis.bisect(t)
    return bis.to_mesh()


def refine_graded(
    mesh: Mesh,
    h_max: float,
    size_rule=None,
    grading_const: float = 1.0,
    max_elements: int = 500_000,
    max_rounds: int = 100,
) -> Mesh:
    """Bisect until every element K satisfies h_K <= C_g * rule(K).

    The default size rule grades toward the origin:
    rule = max(h_max**1.5, |x_K| ** (1/3) * h_max) with x_K the barycenter.
    """
    if size_rule is None:

        def size_rule(center):
            return max(h_max**1.5, np.linalg.norm(center) ** (1.0 / 3.0) * h_max)

    bis = _Bisector(mesh, max_elements)
    for rnd in range(max_rounds):
        marked = []
        for t, tri in enumerate(bis.tris):
            if tri is None:
                continue
            pts = np.array([bis.verts[v] for v in tri])
            h = max(
                np.linalg.norm(pts[1] - pts[0]),
                np.linalg.norm(pts[2] - pts[1]),
                np.linalg.norm(pts[0] - pts[2]),
            )
            if h > grading_const * size_rule(pts.mean(axis=0)):
                marked.append(t)
        if not marked:
            if rnd == 0:
                return mesh  # no violations: fixed point
            return bis.to_mesh()
        for t in marked:
            bis.bisect(t)
    raise RefinementBudgetError(f"grading did not settle within {max_rounds} rounds")
