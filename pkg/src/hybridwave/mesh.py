"""Conforming hybrid meshes of triangles and axis-aligned rectangles.

Conventions
-----------
* Vertex indices are 0-based; triangles are stored counterclockwise, and
  rectangle vertex cycles are rolled at construction so index 0 is the
  bottom-left corner (still counterclockwise).
* Every edge is stored once as the pair ``(vmin, vmax)`` with its global
  orientation running from the smaller to the larger vertex index; edges are
  numbered in lexicographic order of those pairs, which makes the numbering
  reproducible.
* Local edge conventions: triangle edge k is opposite local vertex k and runs
  from vertex k+1 to vertex k+2 (cyclic); rectangle edges are
  [bottom, right, top, left] with local directions +x, +y, +x, +y. The local
  sign of an element edge is +1 when the local direction agrees with the
  global (vmin -> vmax) orientation, else -1.
* The global element ordering used by assembly and output is: all rectangles
  in storage order, then all triangles.

Meshes are immutable after construction (the arrays are locked), so they can
be shared freely.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidGeometryError, MeshConformityError, MeshFormatError
from .fem_local import canonical_rectangle, cross2

TRI_LOCAL_EDGES = ((1, 2), (2, 0), (0, 1))
RECT_LOCAL_EDGES = ((0, 1), (1, 2), (3, 2), (0, 3))
# Rectangle local directions are +x, +y, +x, +y; the CCW element cycle
# traverses top and left edges the other way round.
RECT_CCW_FACTOR = (1, 1, -1, -1)


@dataclass(frozen=True)
class MeshStatistics:
    """Summary quantities reported by validate_mesh."""

    h_max: float
    h_min: float
    n_vertices: int
    n_triangles: int
    n_rectangles: int
    n_edges: int
    shape_ratio_min: float
    quasi_uniformity: float  # h_max / h_min


class HybridMesh:
    """Immutable conforming mesh of triangles and axis-aligned rectangles.

    Parameters
    ----------
    vertices : (nv, 2) float array
    triangles : (nt, 3) int array, counterclockwise
    rectangles : (nr, 4) int array, counterclockwise, axis-aligned
    boundary_tags : optional dict mapping an edge to a tag string; keys may be
        edge indices or (unordered) vertex pairs.
    """

    def __init__(self, vertices, triangles=None, rectangles=None, boundary_tags=None):
        self.vertices = np.ascontiguousarray(vertices, dtype=float).reshape(-1, 2)
        self.triangles = self._index_array(triangles, 3, "triangle")
        self.rectangles = self._index_array(rectangles, 4, "rectangle")
        if self.rectangles.shape[0]:
            canon = canonical_rectangle(self.vertices[self.rectangles])
            # Recover the roll applied to the coordinates on the index cycle.
            rolled = np.empty_like(self.rectangles)
            for r in range(self.rectangles.shape[0]):
                coords = self.vertices[self.rectangles[r]]
                shift = int(
                    np.argmin(np.abs(coords - canon[r, 0]).sum(axis=1))
                )
                rolled[r] = np.roll(self.rectangles[r], -shift)
            self.rectangles = rolled
        self._check_structure()
        self._build_edges()
        self.boundary_tags = self._normalize_tags(boundary_tags)
        for arr in (self.vertices, self.triangles, self.rectangles, self.edges,
                    self.tri_edges, self.tri_edge_signs, self.rect_edges,
                    self.rect_edge_signs, self.edge_use_count):
            arr.setflags(write=False)

    # -- construction helpers ------------------------------------------------

    @staticmethod
    def _index_array(arr, width, name):
        if arr is None:
            return np.zeros((0, width), dtype=np.int64)
        out = np.ascontiguousarray(arr, dtype=np.int64)
        if out.size == 0:
            return out.reshape(0, width)
        if out.ndim != 2 or out.shape[1] != width:
            raise MeshConformityError(
                f"{name} connectivity must have {width} vertex indices per row"
            )
        return out

    def _check_structure(self):
        nv = self.n_vertices
        for name, arr in (("triangle", self.triangles), ("rectangle", self.rectangles)):
            if arr.size == 0:
                continue
            if arr.min() < 0 or arr.max() >= nv:
                raise MeshConformityError(f"{name} references a vertex out of range")
            sorted_rows = np.sort(arr, axis=1)
            dup = (np.diff(sorted_rows, axis=1) == 0).any(axis=1)
            if dup.any():
                bad = int(np.flatnonzero(dup)[0])
                raise MeshConformityError(
                    f"{name} {bad} repeats a vertex (degenerate edge)"
                )

    def _build_edges(self):
        nr, nt = self.n_rectangles, self.n_triangles
        chunks_a, chunks_b = [], []
        if nr:
            chunks_a.append(self.rectangles[:, [p[0] for p in RECT_LOCAL_EDGES]])
            chunks_b.append(self.rectangles[:, [p[1] for p in RECT_LOCAL_EDGES]])
        if nt:
            chunks_a.append(self.triangles[:, [p[0] for p in TRI_LOCAL_EDGES]])
            chunks_b.append(self.triangles[:, [p[1] for p in TRI_LOCAL_EDGES]])
        if not chunks_a:
            raise MeshConformityError("mesh has no elements")
        a = np.concatenate([c.ravel() for c in chunks_a])
        b = np.concatenate([c.ravel() for c in chunks_b])
        signs = np.where(a < b, 1, -1).astype(np.int8)
        pairs = np.stack([np.minimum(a, b), np.maximum(a, b)], axis=1)
        self.edges, inverse = np.unique(pairs, axis=0, return_inverse=True)
        inverse = inverse.ravel()
        self.rect_edges = inverse[: nr * 4].reshape(nr, 4)
        self.rect_edge_signs = signs[: nr * 4].reshape(nr, 4)
        self.tri_edges = inverse[nr * 4:].reshape(nt, 3)
        self.tri_edge_signs = signs[nr * 4:].reshape(nt, 3)
        self.edge_use_count = np.bincount(inverse, minlength=self.n_edges)
        # Incidence table: for each slot, the (kind, element, local) triple.
        kind = np.concatenate([np.zeros(nr * 4, np.int64), np.ones(nt * 3, np.int64)])
        elem = np.concatenate(
            [np.repeat(np.arange(nr), 4), np.repeat(np.arange(nt), 3)]
        )
        local = np.concatenate([np.tile(np.arange(4), nr), np.tile(np.arange(3), nt)])
        order = np.argsort(inverse, kind="stable")
        self._inc_kind = kind[order]
        self._inc_elem = elem[order]
        self._inc_local = local[order]
        self._inc_ptr = np.concatenate([[0], np.cumsum(self.edge_use_count)])

    def _normalize_tags(self, tags):
        out = {}
        if not tags:
            return out
        for key, tag in tags.items():
            if isinstance(key, (tuple, list, np.ndarray)):
                idx = self.edge_index(int(key[0]), int(key[1]))
                if idx < 0:
                    raise MeshConformityError(
                        f"boundary tag references unknown edge {tuple(key)}"
                    )
                out[idx] = str(tag)
            else:
                out[int(key)] = str(tag)
        return out

    # -- basic queries ---------------------------------------------------------

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def n_triangles(self):
        return self.triangles.shape[0]

    @property
    def n_rectangles(self):
        return self.rectangles.shape[0]

    @property
    def n_edges(self):
        return self.edges.shape[0]

    @property
    def n_elements(self):
        return self.n_triangles + self.n_rectangles

    def edge_index(self, v0, v1):
        """Edge id of the vertex pair, or -1 if absent."""
        a, b = (v0, v1) if v0 < v1 else (v1, v0)
        keys = self.edges[:, 0] * self.n_vertices + self.edges[:, 1]
        pos = np.searchsorted(keys, a * self.n_vertices + b)
        if pos < len(keys) and keys[pos] == a * self.n_vertices + b:
            return int(pos)
        return -1

    def edge_lengths(self):
        d = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        return np.linalg.norm(d, axis=1)

    def edge_midpoints(self):
        return 0.5 * (self.vertices[self.edges[:, 0]] + self.vertices[self.edges[:, 1]])

    @property
    def boundary_edges(self):
        return np.flatnonzero(self.edge_use_count == 1)

    def elements_of_edge(self, e):
        """List of (kind, element, local_edge) with kind 'rect' or 'tri'."""
        lo, hi = self._inc_ptr[e], self._inc_ptr[e + 1]
        names = ("rect", "tri")
        return [
            (names[self._inc_kind[i]], int(self._inc_elem[i]), int(self._inc_local[i]))
            for i in range(lo, hi)
        ]

    def ccw_sign(self, kind, elem, local):
        """Sign s with s * (global tangent) = CCW traversal of the element."""
        if kind == "rect":
            return int(self.rect_edge_signs[elem, local]) * RECT_CCW_FACTOR[local]
        return int(self.tri_edge_signs[elem, local])

    def boundary_edge_ccw_sign(self, e):
        """Sign s with s * (global tangent) = counterclockwise boundary tangent.

        Defined for edges with exactly one incident element: the CCW cycle of
        that element keeps the interior on the left, which is the
        counterclockwise direction of the domain boundary.
        """
        kind, elem, local = self.elements_of_edge(e)[0]
        return self.ccw_sign(kind, elem, local)

    def element_interface_pairs(self):
        """Edge ids shared by one rectangle and one triangle."""
        out = []
        for e in range(self.n_edges):
            lo, hi = self._inc_ptr[e], self._inc_ptr[e + 1]
            if hi - lo == 2 and self._inc_kind[lo] != self._inc_kind[hi - 1]:
                out.append(e)
        return np.array(out, dtype=np.int64)

    def element_areas(self):
        """Per-element areas in global element order (rectangles then triangles)."""
        areas = []
        if self.n_rectangles:
            v = self.vertices[self.rectangles]
            areas.append((v[:, 1, 0] - v[:, 0, 0]) * (v[:, 3, 1] - v[:, 0, 1]))
        if self.n_triangles:
            v = self.vertices[self.triangles]
            areas.append(0.5 * cross2(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]))
        return np.concatenate(areas) if areas else np.zeros(0)


def meshes_equal(m1, m2, tol=0.0):
    """Exact structural equality (used by the file round-trip tests)."""
    if m1.vertices.shape != m2.vertices.shape:
        return False
    if tol == 0.0:
        if not np.array_equal(m1.vertices, m2.vertices):
            return False
    elif not np.allclose(m1.vertices, m2.vertices, atol=tol, rtol=0.0):
        return False
    return (
        np.array_equal(m1.triangles, m2.triangles)
        and np.array_equal(m1.rectangles, m2.rectangles)
        and m1.boundary_tags == m2.boundary_tags
    )


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

def validate_mesh(mesh):
    """Check all mesh invariants; return MeshStatistics or raise.

    Covers inverted/degenerate elements, non-axis-aligned rectangles, edges
    used by more than two elements, inconsistent neighbor orientations,
    duplicated vertices, hanging nodes on boundary-like edges, and element
    overlaps probed from every single-use edge.
    """
    _check_element_geometry(mesh)
    _check_edge_topology(mesh)
    _check_duplicate_vertices(mesh)
    _check_hanging_and_overlap(mesh)
    lengths = mesh.edge_lengths()
    h_max, h_min = float(lengths.max()), float(lengths.min())
    return MeshStatistics(
        h_max=h_max,
        h_min=h_min,
        n_vertices=mesh.n_vertices,
        n_triangles=mesh.n_triangles,
        n_rectangles=mesh.n_rectangles,
        n_edges=mesh.n_edges,
        shape_ratio_min=_shape_ratio_min(mesh),
        quasi_uniformity=h_max / h_min,
    )


def _check_element_geometry(mesh):
    if mesh.n_triangles:
        v = mesh.vertices[mesh.triangles]
        area2 = cross2(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])
        if np.any(area2 <= 0):
            bad = int(np.flatnonzero(area2 <= 0)[0])
            raise InvalidGeometryError(
                f"triangle {bad} is inverted or degenerate (signed area {0.5 * area2[bad]:.3e})"
            )
    if mesh.n_rectangles:
        v = mesh.vertices[mesh.rectangles]
        a = v[:, 1] - v[:, 0]
        b = v[:, 3] - v[:, 0]
        diag = v[:, 2] - v[:, 0]
        scale = np.maximum(np.abs(a).max(axis=1), np.abs(b).max(axis=1))
        tol = 1e-12 * np.maximum(scale, 1e-300)
        ok = (
            (a[:, 0] > 0)
            & (np.abs(a[:, 1]) <= tol)
            & (b[:, 1] > 0)
            & (np.abs(b[:, 0]) <= tol)
            & (np.abs(diag - a - b).max(axis=1) <= tol)
        )
        if not ok.all():
            bad = int(np.flatnonzero(~ok)[0])
            raise InvalidGeometryError(
                f"rectangle {bad} is inverted, degenerate or not axis-aligned"
            )


def _check_edge_topology(mesh):
    over = np.flatnonzero(mesh.edge_use_count > 2)
    if over.size:
        e = int(over[0])
        raise MeshConformityError(
            f"edge {e} {tuple(mesh.edges[e])} is shared by "
            f"{mesh.edge_use_count[e]} elements"
        )
    for e in np.flatnonzero(mesh.edge_use_count == 2):
        (k1, e1, l1), (k2, e2, l2) = mesh.elements_of_edge(e)
        s1 = mesh.ccw_sign(k1, e1, l1)
        s2 = mesh.ccw_sign(k2, e2, l2)
        if s1 * s2 != -1:
            raise MeshConformityError(
                f"edge {int(e)} {tuple(mesh.edges[e])}: adjacent elements "
                "traverse it in the same direction (inverted or overlapping element)"
            )


def _check_duplicate_vertices(mesh):
    if mesh.n_vertices < 2:
        return
    scale = max(float(np.ptp(mesh.vertices, axis=0).max()), 1e-300)
    order = np.lexsort((mesh.vertices[:, 1], mesh.vertices[:, 0]))
    pts = mesh.vertices[order]
    close = np.linalg.norm(np.diff(pts, axis=0), axis=1) <= 1e-12 * scale
    if close.any():
        i = int(np.flatnonzero(close)[0])
        raise MeshConformityError(
            f"vertices {int(order[i])} and {int(order[i + 1])} coincide"
        )


def _point_in_triangles(tri_verts, p, margin=1e-9):
    v0, v1, v2 = tri_verts[:, 0], tri_verts[:, 1], tri_verts[:, 2]
    area2 = cross2(v1 - v0, v2 - v0)
    l0 = cross2(v1 - p, v2 - p) / area2
    l1 = cross2(v2 - p, v0 - p) / area2
    l2 = cross2(v0 - p, v1 - p) / area2
    return (l0 > margin) & (l1 > margin) & (l2 > margin)


def _point_in_rects(rect_verts, p, margin=1e-9):
    x0, y0 = rect_verts[:, 0, 0], rect_verts[:, 0, 1]
    x1, y1 = rect_verts[:, 2, 0], rect_verts[:, 2, 1]
    dx, dy = x1 - x0, y1 - y0
    return (
        (p[0] > x0 + margin * dx)
        & (p[0] < x1 - margin * dx)
        & (p[1] > y0 + margin * dy)
        & (p[1] < y1 - margin * dy)
    )


def _check_hanging_and_overlap(mesh):
    boundary = mesh.boundary_edges
    if boundary.size == 0:
        return
    verts = mesh.vertices
    tri_verts = verts[mesh.triangles] if mesh.n_triangles else None
    rect_verts = verts[mesh.rectangles] if mesh.n_rectangles else None
    for e in boundary:
        i0, i1 = mesh.edges[e]
        p0, p1 = verts[i0], verts[i1]
        d = p1 - p0
        length = float(np.hypot(d[0], d[1]))
        # Hanging node: some other vertex lies strictly inside this segment.
        rel = verts - p0
        off = np.abs(cross2(d, rel)) / length
        t = (rel @ d) / (length * length)
        on_seg = (off <= 1e-9 * length) & (t > 1e-9) & (t < 1 - 1e-9)
        on_seg[i0] = on_seg[i1] = False
        if on_seg.any():
            v = int(np.flatnonzero(on_seg)[0])
            raise MeshConformityError(
                f"hanging node: vertex {v} lies inside edge {int(e)} {(int(i0), int(i1))}"
            )
        # Overlap: a probe just outside the owning element falls inside another.
        kind, elem, local = mesh.elements_of_edge(e)[0]
        if kind == "rect":
            pair = RECT_LOCAL_EDGES[local]
            ea, eb = mesh.rectangles[elem, pair[0]], mesh.rectangles[elem, pair[1]]
        else:
            pair = TRI_LOCAL_EDGES[local]
            ea, eb = mesh.triangles[elem, pair[0]], mesh.triangles[elem, pair[1]]
        dd = verts[eb] - verts[ea]
        outward = np.array([dd[1], -dd[0]]) / np.hypot(dd[0], dd[1])
        probe = 0.5 * (p0 + p1) + 1e-3 * length * outward
        hit = None
        if tri_verts is not None:
            inside = _point_in_triangles(tri_verts, probe)
            if kind == "tri":
                inside[elem] = False
            if inside.any():
                hit = ("triangle", int(np.flatnonzero(inside)[0]))
        if hit is None and rect_verts is not None:
            inside = _point_in_rects(rect_verts, probe)
            if kind == "rect":
                inside[elem] = False
            if inside.any():
                hit = ("rectangle", int(np.flatnonzero(inside)[0]))
        if hit is not None:
            raise MeshConformityError(
                f"edge {int(e)} {(int(i0), int(i1))} is not conforming: its exterior "
                f"side overlaps {hit[0]} {hit[1]}"
            )


def _shape_ratio_min(mesh):
    ratios = []
    if mesh.n_triangles:
        v = mesh.vertices[mesh.triangles]
        a = np.linalg.norm(v[:, 1] - v[:, 0], axis=1)
        b = np.linalg.norm(v[:, 2] - v[:, 1], axis=1)
        c = np.linalg.norm(v[:, 0] - v[:, 2], axis=1)
        area = 0.5 * np.abs(cross2(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]))
        ratios.append((8.0 * area**2 / ((a + b + c) * a * b * c)).min())
    if mesh.n_rectangles:
        v = mesh.vertices[mesh.rectangles]
        a = v[:, 1, 0] - v[:, 0, 0]
        b = v[:, 3, 1] - v[:, 0, 1]
        ratios.append((np.minimum(a, b) / np.maximum(a, b)).min())
    return float(min(ratios))


# ---------------------------------------------------------------------------
# Structured generators
# ---------------------------------------------------------------------------

def _check_grid_args(nx, ny, bbox):
    if nx < 1 or ny < 1:
        raise InvalidGeometryError(f"cell counts must be >= 1, got nx={nx} ny={ny}")
    x0, y0, x1, y1 = bbox
    if not (x1 > x0 and y1 > y0):
        raise InvalidGeometryError(f"degenerate bounding box {bbox}")


def _grid_vertices(nx, ny, bbox):
    x0, y0, x1, y1 = bbox
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    xx, yy = np.meshgrid(xs, ys)  # row-major in iy
    return np.column_stack([xx.ravel(), yy.ravel()])


def _vid(ix, iy, nx):
    return iy * (nx + 1) + ix


def _tag_boundary(vertices, triangles, rectangles, tagger, extra_tags=None):
    mesh = HybridMesh(vertices, triangles, rectangles)
    mids = mesh.edge_midpoints()
    tags = {int(e): tagger(mids[e, 0], mids[e, 1]) for e in mesh.boundary_edges}
    if extra_tags:
        tags.update(extra_tags)
    return HybridMesh(vertices, triangles, rectangles, boundary_tags=tags)


def _default_tagger(x, y):
    return "other"


def build_structured_rect_mesh(nx, ny, bbox=(0.0, 0.0, 1.0, 1.0), boundary_tagger=None):
    """Uniform nx-by-ny rectangle grid over the bounding box."""
    _check_grid_args(nx, ny, bbox)
    verts = _grid_vertices(nx, ny, bbox)
    rects = []
    for iy in range(ny):
        for ix in range(nx):
            rects.append(
                [_vid(ix, iy, nx), _vid(ix + 1, iy, nx),
                 _vid(ix + 1, iy + 1, nx), _vid(ix, iy + 1, nx)]
            )
    return _tag_boundary(verts, None, rects, boundary_tagger or _default_tagger)


def _split_cell(c00, c10, c11, c01, right):
    if right:  # diagonal from bottom-left to top-right
        return [(c00, c10, c11), (c00, c11, c01)]
    return [(c00, c10, c01), (c10, c11, c01)]


def build_structured_tri_mesh(nx, ny, bbox=(0.0, 0.0, 1.0, 1.0),
                              split_direction="right", boundary_tagger=None):
    """Uniform triangle grid: each grid cell split along one diagonal.

    split_direction is "right" (bottom-left to top-right diagonal), "left",
    or "alternate" (checkerboard of the two).
    """
    _check_grid_args(nx, ny, bbox)
    if split_direction not in ("right", "left", "alternate"):
        raise ValueError(f"unknown split_direction {split_direction!r}")
    verts = _grid_vertices(nx, ny, bbox)
    tris = []
    for iy in range(ny):
        for ix in range(nx):
            if split_direction == "alternate":
                right = (ix + iy) % 2 == 0
            else:
                right = split_direction == "right"
            tris.extend(
                _split_cell(
                    _vid(ix, iy, nx), _vid(ix + 1, iy, nx),
                    _vid(ix + 1, iy + 1, nx), _vid(ix, iy + 1, nx), right
                )
            )
    return _tag_boundary(verts, tris, None, boundary_tagger or _default_tagger)


def build_structured_hybrid_mesh(nx, ny, bbox=(0.0, 0.0, 1.0, 1.0),
                                 rect_fraction=0.5, split_direction="alternate",
                                 boundary_tagger=None):
    """Grid with rectangles on the left part and split triangles on the right.

    The vertical interface sits after round(nx * rect_fraction) columns; the
    two regions share the grid vertices, so the mesh is conforming.
    """
    _check_grid_args(nx, ny, bbox)
    nx_rect = int(round(nx * rect_fraction))
    verts = _grid_vertices(nx, ny, bbox)
    rects, tris = [], []
    for iy in range(ny):
        for ix in range(nx):
            c = (_vid(ix, iy, nx), _vid(ix + 1, iy, nx),
                 _vid(ix + 1, iy + 1, nx), _vid(ix, iy + 1, nx))
            if ix < nx_rect:
                rects.append(list(c))
            else:
                right = (ix + iy) % 2 == 0 if split_direction == "alternate" \
                    else split_direction == "right"
                tris.extend(_split_cell(*c, right))
    return _tag_boundary(verts, tris, rects, boundary_tagger or _default_tagger)


# ---------------------------------------------------------------------------
# Pulse-scattering demo mesh
# ---------------------------------------------------------------------------

DEMO_HOLE_CENTER = (3.0, 0.0)
DEMO_HOLE_RADIUS = 0.3


def demo_hole_polygon_area(n_circle):
    """Area of the inscribed n-gon approximating the circular hole."""
    return 0.5 * n_circle * DEMO_HOLE_RADIUS**2 * math.sin(2.0 * math.pi / n_circle)


def _zipper_band(inner_ids, inner_ang, outer_ids, outer_ang):
    """Triangulate the band between two CCW rings that both start at angle 0."""
    na, nb = len(inner_ids), len(outer_ids)
    tris = []
    ai = bi = 0
    for _ in range(na + nb):
        next_a = inner_ang[ai + 1] if ai + 1 < na else 2.0 * math.pi
        next_b = outer_ang[bi + 1] if bi + 1 < nb else 2.0 * math.pi
        if next_a <= next_b and ai < na:
            tris.append(
                (inner_ids[ai], outer_ids[bi % nb], inner_ids[(ai + 1) % na])
            )
            ai += 1
        else:
            tris.append(
                (inner_ids[ai % na], outer_ids[bi], outer_ids[(bi + 1) % nb])
            )
            bi += 1
    return tris


def build_scattering_demo_mesh(h, n_circle=64):
    """Mesh of (0,2)x(-1,1) in rectangles plus (2,4)x(-1,1) minus a hole in
    triangles, conforming across the x = 2 interface.

    The circular hole of radius 0.3 around (3, 0) is approximated by an
    inscribed n_circle-gon; an O-grid of rings blends the polygon into a
    grid-aligned square frame which connects to the uniform outer grid.
    Boundary tags: "left" (x = 0), "ball" (hole polygon), "other" (remaining
    boundary); interior rectangle/triangle interface edges get "interface".
    """
    if h >= DEMO_HOLE_RADIUS:
        raise InvalidGeometryError(
            f"h = {h:g} is too large to resolve the hole (need h < {DEMO_HOLE_RADIUS})"
        )
    if h <= 0:
        raise InvalidGeometryError("h must be positive")
    if n_circle < 8:
        raise InvalidGeometryError("n_circle must be at least 8")

    ny = 2 * max(1, round(1.0 / h))
    h2 = 2.0 / ny
    nx = 2 * ny  # columns across the full width 4
    xs = np.linspace(0.0, 4.0, nx + 1)
    ys = np.linspace(-1.0, 1.0, ny + 1)
    icx, icy = 3 * ny // 2, ny // 2  # lattice index of the hole center (3, 0)
    m = math.ceil(0.45 / h2)
    w = m * h2
    ia, ib = icx - m, icx + m
    ja, jb = icy - m, icy + m
    if ia <= ny or ib >= nx or ja < 1 or jb > ny - 1:
        raise InvalidGeometryError(
            f"h = {h:g} is too coarse to embed the hole frame inside the domain"
        )

    # Lattice vertices, skipping points strictly inside the frame box.
    keep = np.ones((ny + 1, nx + 1), dtype=bool)
    keep[ja + 1: jb, ia + 1: ib] = False
    vid = -np.ones((ny + 1, nx + 1), dtype=np.int64)
    vid[keep] = np.arange(keep.sum())
    grid_pts = np.column_stack(
        [np.broadcast_to(xs, (ny + 1, nx + 1))[keep],
         np.broadcast_to(ys[:, None], (ny + 1, nx + 1))[keep]]
    )

    # Rings blending the hole polygon toward the square frame.
    cx, cy = DEMO_HOLE_CENTER
    n_rings = max(1, round((w * math.sqrt(2.0) - DEMO_HOLE_RADIUS) / h2))
    theta = 2.0 * math.pi * np.arange(n_circle) / n_circle
    direction = np.column_stack([np.cos(theta), np.sin(theta)])
    frame_dist = w / np.maximum(np.abs(direction[:, 0]), np.abs(direction[:, 1]))
    ring_pts = []
    for level in range(n_rings):
        t = level / n_rings
        radius = (1.0 - t) * DEMO_HOLE_RADIUS + t * frame_dist
        ring_pts.append(
            np.column_stack([cx + radius * direction[:, 0], cy + radius * direction[:, 1]])
        )
    ring_pts = np.concatenate(ring_pts)
    ring_id = grid_pts.shape[0] + np.arange(n_rings * n_circle).reshape(
        n_rings, n_circle
    )
    vertices = np.concatenate([grid_pts, ring_pts])

    rects, tris = [], []
    for iy in range(ny):
        for ix in range(nx):
            in_frame = ia <= ix < ib and ja <= iy < jb
            if ix < ny:  # left subdomain (0, 2) x (-1, 1)
                rects.append([vid[iy, ix], vid[iy, ix + 1],
                              vid[iy + 1, ix + 1], vid[iy + 1, ix]])
            elif not in_frame:
                right = (ix + iy) % 2 == 0
                tris.extend(
                    _split_cell(vid[iy, ix], vid[iy, ix + 1],
                                vid[iy + 1, ix + 1], vid[iy + 1, ix], right)
                )
    # Annulus bands between consecutive rings.
    for level in range(n_rings - 1):
        inner, outer = ring_id[level], ring_id[level + 1]
        for j in range(n_circle):
            j1 = (j + 1) % n_circle
            tris.append((inner[j], outer[j], outer[j1]))
            tris.append((inner[j], outer[j1], inner[j1]))
    # Stitch the outermost ring to the frame lattice points.
    frame_ids = []
    for iy in range(ja, jb + 1):
        for ix in range(ia, ib + 1):
            if ix in (ia, ib) or iy in (ja, jb):
                frame_ids.append(vid[iy, ix])
    frame_ids = np.array(frame_ids, dtype=np.int64)
    ang = np.arctan2(vertices[frame_ids, 1] - cy, vertices[frame_ids, 0] - cx)
    ang = np.mod(ang, 2.0 * math.pi)
    order = np.argsort(ang, kind="stable")
    frame_ids, frame_ang = frame_ids[order], ang[order]
    start = int(np.argmin(frame_ang))
    frame_ids = np.roll(frame_ids, -start)
    frame_ang = np.roll(frame_ang, -start)
    inner_ang = np.mod(theta, 2.0 * math.pi)
    tris.extend(
        _zipper_band(list(ring_id[n_rings - 1]), inner_ang, list(frame_ids), frame_ang)
    )

    tris = np.asarray(tris, dtype=np.int64)
    v = vertices[tris]
    area2 = cross2(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])
    if np.any(area2 <= 0):
        raise InvalidGeometryError("demo mesh construction produced an inverted triangle")

    mesh = HybridMesh(vertices, tris, rects)
    mids = mesh.edge_midpoints()
    tags = {}
    rad = np.linalg.norm(mesh.vertices - np.array([cx, cy]), axis=1)
    on_hole = rad <= DEMO_HOLE_RADIUS * (1.0 + 1e-9)
    for e in mesh.boundary_edges:
        i0, i1 = mesh.edges[e]
        if abs(mids[e, 0]) <= 1e-12:
            tags[int(e)] = "left"
        elif on_hole[i0] and on_hole[i1]:
            tags[int(e)] = "ball"
        else:
            tags[int(e)] = "other"
    for e in mesh.element_interface_pairs():
        tags[int(e)] = "interface"
    return HybridMesh(vertices, tris, rects, boundary_tags=tags)


# ---------------------------------------------------------------------------
# Plain-text mesh files
# ---------------------------------------------------------------------------

def write_mesh(mesh, path):
    """Write the sectioned ASCII mesh format (see read_mesh)."""
    lines = ["# hybridwave mesh"]
    lines.append("$Vertices")
    lines.append(str(mesh.n_vertices))
    for x, y in mesh.vertices:
        lines.append(f"{x:.17g} {y:.17g}")
    lines.append("$Triangles")
    lines.append(str(mesh.n_triangles))
    for row in mesh.triangles:
        lines.append(" ".join(str(int(i)) for i in row))
    lines.append("$Rectangles")
    lines.append(str(mesh.n_rectangles))
    for row in mesh.rectangles:
        lines.append(" ".join(str(int(i)) for i in row))
    lines.append("$BoundaryTags")
    lines.append(str(len(mesh.boundary_tags)))
    for e in sorted(mesh.boundary_tags):
        v0, v1 = mesh.edges[e]
        lines.append(f"{int(v0)} {int(v1)} {mesh.boundary_tags[e]}")
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


class _Lines:
    def __init__(self, path):
        with open(path, encoding="ascii") as fh:
            raw = fh.readlines()
        self.items = []
        for no, line in enumerate(raw, start=1):
            text = line.split("#", 1)[0].strip()
            if text:
                self.items.append((no, text))
        self.pos = 0

    def next(self, what):
        if self.pos >= len(self.items):
            raise MeshFormatError(f"unexpected end of file while reading {what}")
        item = self.items[self.pos]
        self.pos += 1
        return item

    def expect_section(self, name):
        no, text = self.next(f"section {name}")
        if text != name:
            raise MeshFormatError(f"line {no}: expected {name}, got {text!r}")

    def read_count(self, what):
        no, text = self.next(f"{what} count")
        try:
            n = int(text)
        except ValueError:
            raise MeshFormatError(f"line {no}: expected {what} count, got {text!r}")
        if n < 0:
            raise MeshFormatError(f"line {no}: negative {what} count")
        return n


def read_mesh(path, validate=True):
    """Read the sectioned ASCII format and (by default) validate the mesh.

    Sections in order: $Vertices (count, then "x y" lines), $Triangles
    (count, then 3 indices), $Rectangles (count, then 4 indices),
    $BoundaryTags (count, then "v0 v1 tagname"). '#' starts a comment.
    """
    lines = _Lines(path)
    lines.expect_section("$Vertices")
    nv = lines.read_count("vertex")
    verts = np.empty((nv, 2))
    for i in range(nv):
        no, text = lines.next("vertex")
        parts = text.split()
        if len(parts) != 2:
            raise MeshFormatError(f"line {no}: vertex needs 2 coordinates")
        try:
            verts[i] = [float(parts[0]), float(parts[1])]
        except ValueError:
            raise MeshFormatError(f"line {no}: bad vertex coordinates {text!r}")

    def read_elements(section, width, what):
        lines.expect_section(section)
        n = lines.read_count(what)
        rows = np.empty((n, width), dtype=np.int64)
        for i in range(n):
            no, text = lines.next(what)
            parts = text.split()
            if len(parts) != width:
                raise MeshFormatError(
                    f"line {no}: {what} needs {width} vertex indices, got {len(parts)}"
                )
            try:
                rows[i] = [int(p) for p in parts]
            except ValueError:
                raise MeshFormatError(f"line {no}: bad {what} indices {text!r}")
        return rows

    tris = read_elements("$Triangles", 3, "triangle")
    rects = read_elements("$Rectangles", 4, "rectangle")
    lines.expect_section("$BoundaryTags")
    ntag = lines.read_count("boundary tag")
    tag_items = []
    for _ in range(ntag):
        no, text = lines.next("boundary tag")
        parts = text.split()
        if len(parts) != 3:
            raise MeshFormatError(f"line {no}: boundary tag needs 'v0 v1 name'")
        try:
            tag_items.append((int(parts[0]), int(parts[1]), parts[2], no))
        except ValueError:
            raise MeshFormatError(f"line {no}: bad tag vertex indices {text!r}")

    mesh = HybridMesh(verts, tris, rects)
    tags = {}
    for v0, v1, name, no in tag_items:
        e = mesh.edge_index(v0, v1)
        if e < 0:
            raise MeshFormatError(f"line {no}: tag references non-existing edge ({v0}, {v1})")
        tags[e] = name
    mesh = HybridMesh(verts, tris, rects, boundary_tags=tags)
    if validate:
        validate_mesh(mesh)
    return mesh
