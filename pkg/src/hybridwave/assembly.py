"""Global degrees of freedom, operator assembly and projections.

DOF layout: one tangential-moment DOF per mesh edge (ids 0 .. n_edges-1,
oriented by the global vmin -> vmax edge direction), followed by three
interior bubble DOFs per triangle (id n_edges + 3 * tri + local_edge).

Assembly is vectorized over elements and strictly deterministic: elements are
visited rectangles first, then triangles, and duplicate sparse entries are
combined in a fixed order, so repeated assembly is bit-identical.
"""

import numpy as np

from . import fem_local, kernels
from .errors import ConfigError, LumpingError
from .fem_local import (
    rect_unit_coords,
    rectangle_basis_values,
    rectangle_curls,
    rectangle_geometry,
    rectangle_lumped_mass,
    rectangle_quadrature_gram,
    rectangle_stiffness,
    triangle_basis_values,
    triangle_bubble_coeffs,
    triangle_curl_values,
    triangle_geometry,
    triangle_lumped_mass,
    triangle_quadrature_gram,
    triangle_stiffness,
    whitney_at_midpoints,
)
from .quadrature import (
    TRI_CENTROID_BARY,
    TRI_CENTROID_W,
    edge_gauss_points,
    rect_rule,
    tri_rule,
)

DEFAULT_ESSENTIAL_TAGS = ("left", "ball")


class DofMap:
    """Global numbering of edge and bubble DOFs plus the constrained set."""

    def __init__(self, mesh, essential_tags=DEFAULT_ESSENTIAL_TAGS):
        self.mesh = mesh
        self.n_edges = mesh.n_edges
        self.n_bubbles = 3 * mesh.n_triangles
        self.n_dofs = self.n_edges + self.n_bubbles
        self.essential_tags = tuple(essential_tags)

        self.rect_dofs = mesh.rect_edges.copy()
        self.rect_signs = mesh.rect_edge_signs.astype(float)
        bubble_ids = self.n_edges + 3 * np.arange(mesh.n_triangles)[:, None] + np.arange(3)
        self.tri_dofs = np.concatenate([mesh.tri_edges, bubble_ids], axis=1)
        self.tri_signs = np.concatenate(
            [mesh.tri_edge_signs.astype(float), np.ones((mesh.n_triangles, 3))], axis=1
        )

        dir_dofs, dir_len, dir_sign, dir_mid, dir_tag = [], [], [], [], []
        lengths = mesh.edge_lengths()
        mids = mesh.edge_midpoints()
        for e, tag in sorted(mesh.boundary_tags.items()):
            if tag in self.essential_tags:
                dir_dofs.append(e)
                dir_len.append(lengths[e])
                dir_sign.append(mesh.boundary_edge_ccw_sign(e))
                dir_mid.append(mids[e])
                dir_tag.append(tag)
        self.dirichlet_dofs = np.array(dir_dofs, dtype=np.int64)
        self._dir_len = np.array(dir_len)
        self._dir_sign = np.array(dir_sign, dtype=float)
        self._dir_mid = np.array(dir_mid).reshape(-1, 2)
        self._dir_tag = dir_tag

    @property
    def free_mask(self):
        mask = np.ones(self.n_dofs, dtype=bool)
        mask[self.dirichlet_dofs] = False
        return mask


def build_dof_map(mesh, essential_tags=DEFAULT_ESSENTIAL_TAGS):
    return DofMap(mesh, essential_tags)


class DiagonalOperator:
    """Positive diagonal matrix (the lumped mass)."""

    def __init__(self, diag):
        self.diag = np.asarray(diag, dtype=float)

    @property
    def shape(self):
        n = len(self.diag)
        return (n, n)

    def matvec(self, x, out=None):
        if out is None:
            return self.diag * x
        np.multiply(self.diag, x, out=out)
        return out

    def solve(self, x):
        return x / self.diag

    def __matmul__(self, x):
        return self.diag * x


class SparseOperator:
    """Symmetric sparse matrix in CSR form (plain arrays, no library type)."""

    def __init__(self, n, indptr, indices, data):
        self.n = n
        self.indptr = np.ascontiguousarray(indptr, dtype=np.int64)
        self.indices = np.ascontiguousarray(indices, dtype=np.int64)
        self.data = np.ascontiguousarray(data, dtype=float)

    @property
    def shape(self):
        return (self.n, self.n)

    @property
    def nnz(self):
        return len(self.data)

    def matvec(self, x, out=None):
        if out is None:
            out = np.empty(self.n)
        return kernels.csr_matvec(self.indptr, self.indices, self.data, x, out)

    def __matmul__(self, x):
        return self.matvec(x)

    def to_dense(self):
        dense = np.zeros(self.shape)
        for i in range(self.n):
            lo, hi = self.indptr[i], self.indptr[i + 1]
            dense[i, self.indices[lo:hi]] = self.data[lo:hi]
        return dense

    def norm_inf(self):
        if self.nnz == 0:
            return 0.0
        rowsum = np.zeros(self.n)
        np.add.at(rowsum, np.repeat(np.arange(self.n), np.diff(self.indptr)),
                  np.abs(self.data))
        return float(rowsum.max())


def _coo_to_csr(n, rows, cols, vals):
    order = np.lexsort((cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    if len(rows) == 0:
        return SparseOperator(n, np.zeros(n + 1, np.int64), cols, vals)
    fresh = np.ones(len(rows), dtype=bool)
    fresh[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
    starts = np.flatnonzero(fresh)
    data = np.add.reduceat(vals, starts)
    r, c = rows[starts], cols[starts]
    indptr = np.concatenate([[0], np.cumsum(np.bincount(r, minlength=n))])
    return SparseOperator(n, indptr, c, data)


def _element_tables(mesh):
    rect = tri = None
    if mesh.n_rectangles:
        rect = rectangle_geometry(mesh.vertices[mesh.rectangles])
    if mesh.n_triangles:
        geo = triangle_geometry(mesh.vertices[mesh.triangles])
        tri = (geo, triangle_bubble_coeffs(geo))
    return rect, tri


def assemble_mass(mesh, dofmap):
    """Lumped mass diagonal; every entry is a sum of positive local entries."""
    diag = np.zeros(dofmap.n_dofs)
    rect, tri = _element_tables(mesh)
    if rect is not None:
        np.add.at(diag, dofmap.rect_dofs, rectangle_lumped_mass(rect))
    if tri is not None:
        np.add.at(diag, dofmap.tri_dofs, triangle_lumped_mass(*tri))
    if np.any(diag <= 0):
        bad = int(np.flatnonzero(diag <= 0)[0])
        raise LumpingError(f"global mass entry {bad} is not positive")
    return DiagonalOperator(diag)


def assemble_stiffness(mesh, dofmap):
    """Curl-curl matrix as a symmetric CSR operator."""
    rows, cols, vals = [], [], []
    rect, tri = _element_tables(mesh)
    if rect is not None:
        blocks = rectangle_stiffness(rect)
        blocks = blocks * dofmap.rect_signs[:, :, None] * dofmap.rect_signs[:, None, :]
        rows.append(np.broadcast_to(dofmap.rect_dofs[:, :, None], blocks.shape).ravel())
        cols.append(np.broadcast_to(dofmap.rect_dofs[:, None, :], blocks.shape).ravel())
        vals.append(blocks.ravel())
    if tri is not None:
        blocks = triangle_stiffness(*tri)
        blocks = blocks * dofmap.tri_signs[:, :, None] * dofmap.tri_signs[:, None, :]
        rows.append(np.broadcast_to(dofmap.tri_dofs[:, :, None], blocks.shape).ravel())
        cols.append(np.broadcast_to(dofmap.tri_dofs[:, None, :], blocks.shape).ravel())
        vals.append(blocks.ravel())
    return _coo_to_csr(
        dofmap.n_dofs,
        np.concatenate(rows),
        np.concatenate(cols),
        np.concatenate(vals),
    )


def assemble_mass_quadrature_dense(mesh, dofmap):
    """Dense Gram matrix of the lumping quadrature (small meshes, testing)."""
    dense = np.zeros((dofmap.n_dofs, dofmap.n_dofs))
    rect, tri = _element_tables(mesh)
    if rect is not None:
        grams = rectangle_quadrature_gram(rect)
        grams = grams * dofmap.rect_signs[:, :, None] * dofmap.rect_signs[:, None, :]
        for e in range(grams.shape[0]):
            idx = dofmap.rect_dofs[e]
            dense[np.ix_(idx, idx)] += grams[e]
    if tri is not None:
        grams = triangle_quadrature_gram(*tri)
        grams = grams * dofmap.tri_signs[:, :, None] * dofmap.tri_signs[:, None, :]
        for e in range(grams.shape[0]):
            idx = dofmap.tri_dofs[e]
            dense[np.ix_(idx, idx)] += grams[e]
    return dense


# ---------------------------------------------------------------------------
# Field evaluation tables
# ---------------------------------------------------------------------------

class FieldEvaluator:
    """Precomputed basis tables at per-element quadrature points.

    Supports field/curl reconstruction from a coefficient vector, exact inner
    products of discrete fields, and squared error integrals against callback
    fields. `degree` picks the quadrature (use "centroid" for one point per
    element).
    """

    def __init__(self, mesh, dofmap, degree=6):
        self.mesh = mesh
        self.dofmap = dofmap
        rect, tri = _element_tables(mesh)
        self.tri = tri is not None
        self.rect = rect is not None
        if self.rect:
            if degree == "centroid":
                unit_pts, unit_w = np.array([[0.5, 0.5]]), np.array([1.0])
            else:
                unit_pts, unit_w = rect_rule(degree)
            geo = rect
            self.rect_points = np.stack(
                [geo.x0[:, None] + unit_pts[None, :, 0] * geo.a[:, None],
                 geo.y0[:, None] + unit_pts[None, :, 1] * geo.b[:, None]], axis=2
            )
            self.rect_weights = geo.area[:, None] * unit_w[None, :]
            self.rect_basis = rectangle_basis_values(geo, unit_pts)
            self.rect_curl = np.broadcast_to(
                rectangle_curls(geo)[:, None, :], self.rect_basis.shape[:3]
            )
        if self.tri:
            if degree == "centroid":
                bary, w = TRI_CENTROID_BARY, TRI_CENTROID_W
            else:
                bary, w = tri_rule(degree)
            geo, coeffs = tri
            self.tri_points = np.einsum("qi,nid->nqd", bary, geo.verts)
            self.tri_weights = geo.area[:, None] * w[None, :]
            self.tri_basis = triangle_basis_values(geo, coeffs, bary)
            self.tri_curl = triangle_curl_values(geo, coeffs, bary)

    def _local(self, coeffs, which):
        dofs = getattr(self.dofmap, f"{which}_dofs")
        signs = getattr(self.dofmap, f"{which}_signs")
        return coeffs[dofs] * signs

    def field(self, coeffs):
        """Reconstructed field values: (rect (nr, q, 2), tri (nt, q, 2))."""
        rect_vals = tri_vals = None
        if self.rect:
            rect_vals = np.einsum(
                "nqbd,nb->nqd", self.rect_basis, self._local(coeffs, "rect")
            )
        if self.tri:
            tri_vals = np.einsum(
                "nqbd,nb->nqd", self.tri_basis, self._local(coeffs, "tri")
            )
        return rect_vals, tri_vals

    def curl(self, coeffs):
        rect_vals = tri_vals = None
        if self.rect:
            rect_vals = np.einsum(
                "nqb,nb->nq", self.rect_curl, self._local(coeffs, "rect")
            )
        if self.tri:
            tri_vals = np.einsum(
                "nqb,nb->nq", self.tri_curl, self._local(coeffs, "tri")
            )
        return rect_vals, tri_vals

    def _masked(self, weights, mask):
        return weights if mask is None else weights * mask[:, None]

    def inner(self, c1, c2, rect_mask=None, tri_mask=None):
        """Exact L2 inner product of two discrete fields."""
        r1, t1 = self.field(c1)
        r2, t2 = self.field(c2)
        total = 0.0
        if self.rect:
            total += np.einsum(
                "nq,nqd,nqd->", self._masked(self.rect_weights, rect_mask), r1, r2
            )
        if self.tri:
            total += np.einsum(
                "nq,nqd,nqd->", self._masked(self.tri_weights, tri_mask), t1, t2
            )
        return float(total)

    def curl_inner(self, c1, c2, rect_mask=None, tri_mask=None):
        r1, t1 = self.curl(c1)
        r2, t2 = self.curl(c2)
        total = 0.0
        if self.rect:
            total += np.einsum(
                "nq,nq,nq->", self._masked(self.rect_weights, rect_mask), r1, r2
            )
        if self.tri:
            total += np.einsum(
                "nq,nq,nq->", self._masked(self.tri_weights, tri_mask), t1, t2
            )
        return float(total)

    def field_error_sq(self, coeffs, exact, t, rect_mask=None, tri_mask=None):
        """Integral of |u_h - exact|^2; `exact(points, t) -> (..., 2)`."""
        rv, tv = self.field(coeffs)
        total = 0.0
        if self.rect:
            diff = rv - exact(self.rect_points.reshape(-1, 2), t).reshape(rv.shape)
            total += np.einsum(
                "nq,nqd,nqd->", self._masked(self.rect_weights, rect_mask), diff, diff
            )
        if self.tri:
            diff = tv - exact(self.tri_points.reshape(-1, 2), t).reshape(tv.shape)
            total += np.einsum(
                "nq,nqd,nqd->", self._masked(self.tri_weights, tri_mask), diff, diff
            )
        return float(total)

    def curl_error_sq(self, coeffs, exact_curl, t, rect_mask=None, tri_mask=None):
        rv, tv = self.curl(coeffs)
        total = 0.0
        if self.rect:
            diff = rv - exact_curl(self.rect_points.reshape(-1, 2), t).reshape(rv.shape)
            total += np.einsum(
                "nq,nq,nq->", self._masked(self.rect_weights, rect_mask), diff, diff
            )
        if self.tri:
            diff = tv - exact_curl(self.tri_points.reshape(-1, 2), t).reshape(tv.shape)
            total += np.einsum(
                "nq,nq,nq->", self._masked(self.tri_weights, tri_mask), diff, diff
            )
        return float(total)

    def exact_mass_apply(self, coeffs):
        """Action of the exact (consistent) mass matrix on a coefficient vector."""
        out = np.zeros(self.dofmap.n_dofs)
        rv, tv = self.field(coeffs)
        if self.rect:
            contrib = np.einsum("nq,nqd,nqbd->nb", self.rect_weights, rv, self.rect_basis)
            np.add.at(out, self.dofmap.rect_dofs, self.dofmap.rect_signs * contrib)
        if self.tri:
            contrib = np.einsum("nq,nqd,nqbd->nb", self.tri_weights, tv, self.tri_basis)
            np.add.at(out, self.dofmap.tri_dofs, self.dofmap.tri_signs * contrib)
        return out


def assemble_load(mesh, dofmap, f, t, evaluator=None):
    """Load vector (f(t), basis) with exact (degree-4) element quadrature."""
    load = np.zeros(dofmap.n_dofs)
    if f is None:
        return load
    ev = evaluator or FieldEvaluator(mesh, dofmap, degree=4)
    if ev.rect:
        fv = f(ev.rect_points.reshape(-1, 2), t).reshape(ev.rect_points.shape)
        contrib = np.einsum("nq,nqd,nqbd->nb", ev.rect_weights, fv, ev.rect_basis)
        np.add.at(load, dofmap.rect_dofs, dofmap.rect_signs * contrib)
    if ev.tri:
        fv = f(ev.tri_points.reshape(-1, 2), t).reshape(ev.tri_points.shape)
        contrib = np.einsum("nq,nqd,nqbd->nb", ev.tri_weights, fv, ev.tri_basis)
        np.add.at(load, dofmap.tri_dofs, dofmap.tri_signs * contrib)
    return load


# ---------------------------------------------------------------------------
# Essential boundary conditions
# ---------------------------------------------------------------------------

def set_essential_values(vec, dofmap, bc, t):
    """Impose prescribed tangential traces on the constrained edge DOFs.

    `bc` maps tag -> g(points, t) returning the scalar trace with respect to
    the counterclockwise boundary tangent (interior on the left). Each DOF is
    set to the midpoint-rule moment: ccw_sign * edge_length * g(midpoint, t).
    """
    if len(dofmap.dirichlet_dofs) == 0:
        return vec
    vals = np.empty(len(dofmap.dirichlet_dofs))
    for i, tag in enumerate(dofmap._dir_tag):
        if tag not in bc:
            raise ConfigError(
                f"no boundary expression for essential tag {tag!r}; "
                f"configured tags: {sorted(bc)}"
            )
        g = bc[tag]
        vals[i] = g(dofmap._dir_mid[i: i + 1], t)[0]
    vec[dofmap.dirichlet_dofs] = dofmap._dir_sign * dofmap._dir_len * vals
    return vec


# ---------------------------------------------------------------------------
# Projections
# ---------------------------------------------------------------------------

def _edge_moments(mesh, E, t, n_gauss=3):
    p0 = mesh.vertices[mesh.edges[:, 0]]
    p1 = mesh.vertices[mesh.edges[:, 1]]
    pts, w = edge_gauss_points(p0, p1, n_gauss)
    lengths = mesh.edge_lengths()
    tang = (p1 - p0) / lengths[:, None]
    vals = E(pts.reshape(-1, 2), t).reshape(pts.shape)
    return lengths * np.einsum("q,nqd,nd->n", w, vals, tang)


def _bubble_dofs_of_whitney(mesh, dofmap, edge_moments):
    """Bubble DOFs that make the field with the given edge moments land in
    the plain lowest-order (Whitney) space on every triangle."""
    if mesh.n_triangles == 0:
        return np.zeros(0)
    geo = triangle_geometry(mesh.vertices[mesh.triangles])
    local_moments = dofmap.tri_signs[:, :3] * edge_moments[mesh.tri_edges]
    wmid = whitney_at_midpoints(geo.grads)
    w_at_mid = np.einsum("nk,nkmd->nmd", local_moments, wmid)
    return geo.edge_len * np.einsum("nmd,nmd->nm", geo.normal, w_at_mid)


def project_pi_h(mesh, dofmap, E, t=0.0, n_gauss=3):
    """Edge interpolant of a smooth field (tangential edge moments).

    The result is, on every element, the standard lowest-order edge
    interpolant: on triangles the bubble DOFs are filled with the bubble
    moments of the local Whitney field, which is exactly the representation
    of that plain interpolant in the enriched basis.
    """
    coeffs = np.zeros(dofmap.n_dofs)
    mom = _edge_moments(mesh, E, t, n_gauss)
    coeffs[: dofmap.n_edges] = mom
    bub = _bubble_dofs_of_whitney(mesh, dofmap, mom)
    if bub.size:
        coeffs[dofmap.n_edges:] = bub.ravel()
    return coeffs


def gradient_coefficients(mesh, dofmap, vertex_values):
    """Discrete gradient of a vertex function (exact curl-free field).

    Edge moments of grad(phi) are endpoint differences of phi; bubble DOFs
    are filled as in project_pi_h so the element fields are the constant
    per-element gradients, hence the stiffness operator annihilates them.
    """
    vertex_values = np.asarray(vertex_values, dtype=float)
    mom = vertex_values[mesh.edges[:, 1]] - vertex_values[mesh.edges[:, 0]]
    coeffs = np.zeros(dofmap.n_dofs)
    coeffs[: dofmap.n_edges] = mom
    bub = _bubble_dofs_of_whitney(mesh, dofmap, mom)
    if bub.size:
        coeffs[dofmap.n_edges:] = bub.ravel()
    return coeffs


def project_pi0(mesh, E, t=0.0, degree=4):
    """Element means of a vector field, global element order, shape (nel, 2)."""
    out = []
    if mesh.n_rectangles:
        geo = rectangle_geometry(mesh.vertices[mesh.rectangles])
        unit_pts, w = rect_rule(degree)
        pts = np.stack(
            [geo.x0[:, None] + unit_pts[None, :, 0] * geo.a[:, None],
             geo.y0[:, None] + unit_pts[None, :, 1] * geo.b[:, None]], axis=2
        )
        vals = E(pts.reshape(-1, 2), t).reshape(pts.shape)
        out.append(np.einsum("q,nqd->nd", w, vals))
    if mesh.n_triangles:
        geo = triangle_geometry(mesh.vertices[mesh.triangles])
        bary, w = tri_rule(degree)
        pts = np.einsum("qi,nid->nqd", bary, geo.verts)
        vals = E(pts.reshape(-1, 2), t).reshape(pts.shape)
        out.append(np.einsum("q,nqd->nd", w, vals))
    return np.concatenate(out) if out else np.zeros((0, 2))


def tangential_trace(mesh, dofmap, coeffs, edge, side, n_gauss=3):
    """Tangential component of the reconstructed field along an edge.

    Evaluated from one incident element (`side` indexes elements_of_edge)
    with respect to the global vmin -> vmax tangent; used to verify the
    conformity of the discrete space.
    """
    kind, elem, _local = mesh.elements_of_edge(edge)[side]
    p0 = mesh.vertices[mesh.edges[edge, 0]]
    p1 = mesh.vertices[mesh.edges[edge, 1]]
    pts, _w = edge_gauss_points(p0[None], p1[None], n_gauss)
    pts = pts[0]
    tang = (p1 - p0) / np.linalg.norm(p1 - p0)
    if kind == "rect":
        geo = rectangle_geometry(mesh.vertices[mesh.rectangles[elem]][None])
        unit = rect_unit_coords(geo, pts)
        basis = rectangle_basis_values(geo, unit)[0]
        local = coeffs[dofmap.rect_dofs[elem]] * dofmap.rect_signs[elem]
    else:
        geo = triangle_geometry(mesh.vertices[mesh.triangles[elem]][None])
        co = triangle_bubble_coeffs(geo)
        bary = fem_local.barycentric_coords(geo, pts)
        basis = triangle_basis_values(geo, co, bary)[0]
        local = coeffs[dofmap.tri_dofs[elem]] * dofmap.tri_signs[elem]
    vals = np.einsum("qbd,b->qd", basis, local)
    return vals @ tang
