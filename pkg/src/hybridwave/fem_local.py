"""Reference bases, lumping quadratures and local element matrices.

Triangle space (6 DOFs): three modified edge functions plus three interior
bubbles. With edge k opposite vertex k and running from vertex k+1 to k+2,

    W_k   = lam_{k+1} grad(lam_{k+2}) - lam_{k+2} grad(lam_{k+1})   (Whitney)
    B_k   = lam_{k+1} lam_{k+2} grad(lam_k)                         (bubble)
    Phi_k = W_k + sum_m c[k, m] B_m

where the coefficients c are chosen so that the normal component of Phi_k
vanishes at all three edge midpoints. Each bubble is nonzero at exactly one
midpoint (its own, where it is purely normal) and each Phi_k is nonzero at
exactly one midpoint (its own, where it is purely tangential), so the
edge-midpoint rule with weights area/3 produces a diagonal 6x6 mass matrix.

Rectangle space (4 DOFs): the lowest-order edge functions on an axis-aligned
rectangle, one per edge in local order [bottom, right, top, left] with local
tangents +x, +y, +x, +y. The split quadrature (x-components at the two
horizontal edge midpoints, y-components at the two vertical ones, weights
area/2) gives a diagonal 4x4 mass matrix.

Degrees of freedom: edge DOF = tangential moment along the edge (the dual
basis has unit moment on its own edge); bubble DOF = normal component at the
bubble's own edge midpoint times the edge length. Bubbles are rescaled so the
full DOF/basis pairing is the identity.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidGeometryError, LumpingError
from .quadrature import (
    TRI_MIDPOINT_BARY,
    edge_gauss_points,
    rect_rule,
    tri_rule,
)

DIAG_TOL = 1e-12

# Local DOF layout.
TRI_NDOF = 6
RECT_NDOF = 4


def _perp(v):
    """Rotate 2-vectors by +90 degrees: (x, y) -> (-y, x)."""
    out = np.empty_like(v)
    out[..., 0] = -v[..., 1]
    out[..., 1] = v[..., 0]
    return out


def cross2(a, b):
    """Scalar cross product of 2-vectors (z-component of the 3D cross)."""
    a = np.asarray(a)
    b = np.asarray(b)
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


# ---------------------------------------------------------------------------
# Triangles
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TriGeometry:
    """Batched triangle geometry; all arrays lead with the element axis."""

    verts: np.ndarray      # (n, 3, 2)
    area: np.ndarray       # (n,)
    grads: np.ndarray      # (n, 3, 2) gradient of barycentric coordinate i
    edge_len: np.ndarray   # (n, 3) length of edge k (opposite vertex k)
    tangent: np.ndarray    # (n, 3, 2) unit tangent of edge k (vertex k+1 -> k+2)
    midpoint: np.ndarray   # (n, 3, 2) midpoint of edge k
    normal: np.ndarray     # (n, 3, 2) outward unit normal of edge k


def triangle_geometry(verts):
    verts = np.asarray(verts, dtype=float)
    if verts.ndim == 2:
        verts = verts[None]
    v0, v1, v2 = verts[:, 0], verts[:, 1], verts[:, 2]
    area = 0.5 * cross2(v1 - v0, v2 - v0)
    if np.any(area <= 0):
        bad = int(np.flatnonzero(area <= 0)[0])
        raise InvalidGeometryError(
            f"triangle {bad} has non-positive area {area[bad]:.3e} "
            "(vertices must be distinct and counterclockwise)"
        )
    # Edge k runs from vertex k+1 to k+2 (cyclic) and is opposite vertex k.
    evec = verts[:, [2, 0, 1]] - verts[:, [1, 2, 0]]
    grads = _perp(evec) / (2.0 * area[:, None, None])
    edge_len = np.linalg.norm(evec, axis=2)
    tangent = evec / edge_len[:, :, None]
    midpoint = 0.5 * (verts[:, [1, 2, 0]] + verts[:, [2, 0, 1]])
    # Outward normal is the tangent rotated by -90 degrees (interior lies
    # left of the cyclic edge direction on a CCW triangle).
    normal = -_perp(tangent)
    return TriGeometry(verts, area, grads, edge_len, tangent, midpoint, normal)


def whitney_at_midpoints(grads):
    """Values W_k(m_j) as an array (n, k, j, 2) from gradients (n, 3, 2).

    On the midpoint table: W_k(m_k) = (grad_{k+2} - grad_{k+1}) / 2,
    W_k(m_{k+1}) = -grad_{k+1} / 2 and W_k(m_{k+2}) = grad_{k+2} / 2.
    """
    n = grads.shape[0]
    w = np.zeros((n, 3, 3, 2))
    for k in range(3):
        i, j = (k + 1) % 3, (k + 2) % 3
        w[:, k, k] = 0.5 * (grads[:, j] - grads[:, i])
        w[:, k, i] = -0.5 * grads[:, i]
        w[:, k, j] = 0.5 * grads[:, j]
    return w


def triangle_bubble_coeffs(geo):
    """Coefficients c (n, 3, 3): edge function k gets c[k, m] of bubble m.

    The defining conditions (zero normal component of Phi_k at all three edge
    midpoints) decouple because bubble m is nonzero only at its own midpoint,
    where its value is grad(lam_m) / 4.
    """
    wmid = whitney_at_midpoints(geo.grads)
    n_dot_w = np.einsum("nkjd,njd->nkj", wmid, geo.normal)
    denom = 0.25 * np.einsum("njd,njd->nj", geo.normal, geo.grads)
    return -n_dot_w / denom[:, None, :]


def triangle_bubble_coeffs_full(geo):
    """Same coefficients via the explicit 3x3 solve (cross-check path)."""
    n = geo.verts.shape[0]
    wmid = whitney_at_midpoints(geo.grads)
    # A[j, m] = normal_j . B_m(m_j); B_m(m_j) = delta_{mj} grad(lam_m) / 4.
    bub_at_mid = np.zeros((n, 3, 3, 2))
    for m in range(3):
        bub_at_mid[:, m, m] = 0.25 * geo.grads[:, m]
    a = np.einsum("nmjd,njd->njm", bub_at_mid, geo.normal)
    rhs = -np.einsum("nkjd,njd->njk", wmid, geo.normal)
    return np.linalg.solve(a, rhs).transpose(0, 2, 1)


def triangle_bubble_scale(geo):
    """Scale d (n, 3) with bubble basis Bhat_m = B_m / d_m (unit DOF)."""
    return 0.25 * geo.edge_len * np.einsum("njd,njd->nj", geo.normal, geo.grads)


def barycentric_coords(geo, points):
    """Barycentric coordinates of physical points, shape (n, q, 3)."""
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[None]
    const = 1.0 - np.einsum("nid,nid->ni", geo.grads, geo.verts)
    return const[:, None, :] + np.einsum("nid,qd->nqi", geo.grads, points)


def triangle_basis_values(geo, coeffs, bary):
    """Basis values at barycentric points, shape (n, q, 6, 2).

    DOF order: [Phi_0, Phi_1, Phi_2, Bhat_0, Bhat_1, Bhat_2].
    `bary` may be (q, 3) shared across elements or (n, q, 3).
    """
    bary = np.asarray(bary, dtype=float)
    if bary.ndim == 2:
        lam = np.broadcast_to(bary, (geo.verts.shape[0],) + bary.shape)
    else:
        lam = bary
    n, q = lam.shape[0], lam.shape[1]
    vals = np.zeros((n, q, TRI_NDOF, 2))
    raw_bub = np.empty((n, q, 3, 2))
    for m in range(3):
        i, j = (m + 1) % 3, (m + 2) % 3
        raw_bub[:, :, m] = (lam[:, :, i] * lam[:, :, j])[:, :, None] * geo.grads[:, None, m]
    for k in range(3):
        i, j = (k + 1) % 3, (k + 2) % 3
        whit = (
            lam[:, :, i, None] * geo.grads[:, None, j]
            - lam[:, :, j, None] * geo.grads[:, None, i]
        )
        vals[:, :, k] = whit + np.einsum("nm,nqmd->nqd", coeffs[:, k], raw_bub)
    scale = triangle_bubble_scale(geo)
    vals[:, :, 3:] = raw_bub / scale[:, None, :, None]
    return vals


def triangle_curl_values(geo, coeffs, bary):
    """Scalar curls at barycentric points, shape (n, q, 6).

    Whitney curls are the constant 1/area; bubble curls are affine,
    curl B_m = (lam_{m+1} - lam_{m+2}) / (2 area).
    """
    bary = np.asarray(bary, dtype=float)
    if bary.ndim == 2:
        lam = np.broadcast_to(bary, (geo.verts.shape[0],) + bary.shape)
    else:
        lam = bary
    n, q = lam.shape[0], lam.shape[1]
    inv2a = 1.0 / (2.0 * geo.area)
    raw_bub = np.empty((n, q, 3))
    for m in range(3):
        i, j = (m + 1) % 3, (m + 2) % 3
        raw_bub[:, :, m] = (lam[:, :, i] - lam[:, :, j]) * inv2a[:, None]
    curls = np.zeros((n, q, TRI_NDOF))
    curls[:, :, :3] = (2.0 * inv2a)[:, None, None] + np.einsum(
        "nkm,nqm->nqk", coeffs, raw_bub
    )
    curls[:, :, 3:] = raw_bub / triangle_bubble_scale(geo)[:, None, :]
    return curls


def triangle_quadrature_gram(geo, coeffs):
    """Full 6x6 mass matrix from the edge-midpoint rule, shape (n, 6, 6)."""
    vals = triangle_basis_values(geo, coeffs, TRI_MIDPOINT_BARY)
    gram = np.einsum("nqad,nqbd->nab", vals, vals)
    gram *= (geo.area / 3.0)[:, None, None]
    return gram


def triangle_lumped_mass(geo, coeffs):
    """Diagonal of the lumped mass matrix, shape (n, 6); raises if invalid."""
    gram = triangle_quadrature_gram(geo, coeffs)
    diag = np.einsum("naa->na", gram).copy()
    off = gram - diag[:, :, None] * np.eye(TRI_NDOF)
    limit = DIAG_TOL * diag.max(axis=1)
    worst = np.abs(off).max(axis=(1, 2))
    if np.any(worst > limit):
        bad = int(np.argmax(worst / limit))
        raise LumpingError(
            f"triangle {bad}: off-diagonal {worst[bad]:.3e} exceeds tolerance"
        )
    if np.any(diag <= 0):
        bad = int(np.flatnonzero((diag <= 0).any(axis=1))[0])
        raise LumpingError(f"triangle {bad}: non-positive lumped mass entry")
    return diag


def triangle_stiffness(geo, coeffs, degree=4):
    """Exact curl-curl blocks (n, 6, 6) via a rule of the given degree."""
    bary, w = tri_rule(degree)
    curls = triangle_curl_values(geo, coeffs, bary)
    stiff = np.einsum("q,nqa,nqb->nab", w, curls, curls)
    stiff *= geo.area[:, None, None]
    return stiff


# ---------------------------------------------------------------------------
# Rectangles
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RectGeometry:
    """Batched axis-aligned rectangle geometry (canonical CCW from bottom-left)."""

    verts: np.ndarray     # (n, 4, 2)
    x0: np.ndarray
    y0: np.ndarray
    a: np.ndarray         # width
    b: np.ndarray         # height
    area: np.ndarray
    edge_len: np.ndarray  # (n, 4) in order [bottom, right, top, left]
    midpoint: np.ndarray  # (n, 4, 2)


def canonical_rectangle(verts):
    """Roll CCW vertex cycles so index 0 is the bottom-left corner."""
    verts = np.asarray(verts, dtype=float)
    single = verts.ndim == 2
    if single:
        verts = verts[None]
    x, y = verts[..., 0], verts[..., 1]
    scale = np.maximum(np.ptp(x, axis=1), np.ptp(y, axis=1))
    tol = 1e-9 * np.maximum(scale, 1e-300)
    on_bottom = y <= y.min(axis=1, keepdims=True) + tol[:, None]
    idx = np.argmin(np.where(on_bottom, x, np.inf), axis=1)
    cols = (idx[:, None] + np.arange(4)) % 4
    rolled = np.take_along_axis(verts, cols[:, :, None], axis=1)
    return rolled[0] if single else rolled


def rectangle_geometry(verts):
    verts = canonical_rectangle(verts)
    if verts.ndim == 2:
        verts = verts[None]
    x0, y0 = verts[:, 0, 0], verts[:, 0, 1]
    a = verts[:, 1, 0] - x0
    b = verts[:, 3, 1] - y0
    if np.any(a <= 0) or np.any(b <= 0):
        bad = int(np.flatnonzero((a <= 0) | (b <= 0))[0])
        raise InvalidGeometryError(
            f"rectangle {bad} is degenerate, inverted or not axis-aligned"
        )
    area = a * b
    edge_len = np.stack([a, b, a, b], axis=1)
    mid = np.empty((verts.shape[0], 4, 2))
    mid[:, 0] = np.stack([x0 + 0.5 * a, y0], axis=1)
    mid[:, 1] = np.stack([x0 + a, y0 + 0.5 * b], axis=1)
    mid[:, 2] = np.stack([x0 + 0.5 * a, y0 + b], axis=1)
    mid[:, 3] = np.stack([x0, y0 + 0.5 * b], axis=1)
    return RectGeometry(verts, x0, y0, a, b, area, edge_len, mid)


def rect_unit_coords(geo, points):
    """Map physical points to unit-square coordinates, shape (n, q, 2)."""
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[None]
    xi = (points[None, :, 0] - geo.x0[:, None]) / geo.a[:, None]
    eta = (points[None, :, 1] - geo.y0[:, None]) / geo.b[:, None]
    return np.stack([xi, eta], axis=2)


def rectangle_basis_values(geo, unit_pts):
    """Basis values at unit-square points, shape (n, q, 4, 2).

    DOF order [bottom, right, top, left], local tangents +x, +y, +x, +y,
    each normalized to unit tangential moment along its own edge.
    """
    unit_pts = np.asarray(unit_pts, dtype=float)
    if unit_pts.ndim == 2:
        unit_pts = np.broadcast_to(
            unit_pts, (geo.verts.shape[0],) + unit_pts.shape
        )
    xi, eta = unit_pts[..., 0], unit_pts[..., 1]
    n, q = xi.shape
    inv_a = (1.0 / geo.a)[:, None]
    inv_b = (1.0 / geo.b)[:, None]
    vals = np.zeros((n, q, RECT_NDOF, 2))
    vals[:, :, 0, 0] = (1.0 - eta) * inv_a
    vals[:, :, 1, 1] = xi * inv_b
    vals[:, :, 2, 0] = eta * inv_a
    vals[:, :, 3, 1] = (1.0 - xi) * inv_b
    return vals


def rectangle_curls(geo):
    """Constant curls per DOF, shape (n, 4): [1, 1, -1, -1] / area."""
    sign = np.array([1.0, 1.0, -1.0, -1.0])
    return sign[None, :] / geo.area[:, None]


def rectangle_quadrature_gram(geo):
    """4x4 mass matrix from the split midpoint rule, shape (n, 4, 4)."""
    # x-components sampled on the two horizontal edge midpoints (eta = 0, 1),
    # y-components on the two vertical ones (xi = 0, 1).
    pts = np.array([[0.5, 0.0], [0.5, 1.0], [0.0, 0.5], [1.0, 0.5]])
    vals = rectangle_basis_values(geo, pts)
    comp = np.concatenate([vals[:, :2, :, 0], vals[:, 2:, :, 1]], axis=1)
    gram = 0.5 * np.einsum("nqa,nqb->nab", comp, comp)
    gram *= geo.area[:, None, None]
    return gram


def rectangle_lumped_mass(geo):
    """Diagonal [b/2a, a/2b, b/2a, a/2b] via the quadrature rule."""
    gram = rectangle_quadrature_gram(geo)
    diag = np.einsum("naa->na", gram).copy()
    if np.any(diag <= 0):
        bad = int(np.flatnonzero((diag <= 0).any(axis=1))[0])
        raise LumpingError(f"rectangle {bad}: non-positive lumped mass entry")
    return diag


def rectangle_stiffness(geo):
    """Exact curl-curl blocks area * c c^T (rank one), shape (n, 4, 4)."""
    c = rectangle_curls(geo)
    return geo.area[:, None, None] * np.einsum("na,nb->nab", c, c)


# ---------------------------------------------------------------------------
# Per-element wrappers
# ---------------------------------------------------------------------------

class TriangleElement:
    """Single triangle with the enriched 6-DOF edge/bubble basis."""

    ndof = TRI_NDOF

    def __init__(self, verts):
        self.geo = triangle_geometry(np.asarray(verts, dtype=float))
        self.coeffs = triangle_bubble_coeffs(self.geo)

    @property
    def area(self):
        return float(self.geo.area[0])

    @property
    def grads(self):
        return self.geo.grads[0]

    @property
    def bubble_coefficients(self):
        """(3, 3) array; row k holds the bubble weights of edge function k."""
        return self.coeffs[0]

    def eval_basis(self, points):
        bary = barycentric_coords(self.geo, points)
        out = triangle_basis_values(self.geo, self.coeffs, bary)[0]
        return out[0] if np.asarray(points).ndim == 1 else out

    def eval_curl(self, points):
        bary = barycentric_coords(self.geo, points)
        out = triangle_curl_values(self.geo, self.coeffs, bary)[0]
        return out[0] if np.asarray(points).ndim == 1 else out

    def lumped_mass(self):
        return triangle_lumped_mass(self.geo, self.coeffs)[0]

    def mass_quadrature_matrix(self):
        return triangle_quadrature_gram(self.geo, self.coeffs)[0]

    def stiffness(self):
        return triangle_stiffness(self.geo, self.coeffs)[0]


class RectangleElement:
    """Single axis-aligned rectangle with the 4-DOF edge basis."""

    ndof = RECT_NDOF

    def __init__(self, verts):
        self.geo = rectangle_geometry(np.asarray(verts, dtype=float))

    @property
    def area(self):
        return float(self.geo.area[0])

    def eval_basis(self, points):
        unit = rect_unit_coords(self.geo, points)
        out = rectangle_basis_values(self.geo, unit)[0]
        return out[0] if np.asarray(points).ndim == 1 else out

    def eval_curl(self, points):
        pts = np.asarray(points)
        q = 1 if pts.ndim == 1 else pts.shape[0]
        out = np.broadcast_to(rectangle_curls(self.geo)[0], (q, RECT_NDOF)).copy()
        return out[0] if pts.ndim == 1 else out

    def lumped_mass(self):
        return rectangle_lumped_mass(self.geo)[0]

    def mass_quadrature_matrix(self):
        return rectangle_quadrature_gram(self.geo)[0]

    def stiffness(self):
        return rectangle_stiffness(self.geo)[0]


def barycentric_gradients(verts):
    """Gradients of the three barycentric coordinates, shape (3, 2)."""
    return triangle_geometry(np.asarray(verts, dtype=float)).grads[0]


def solve_bubble_coefficients(verts):
    """Bubble weights (3, 3) for one triangle (decoupled closed form)."""
    geo = triangle_geometry(np.asarray(verts, dtype=float))
    return triangle_bubble_coeffs(geo)[0]


def solve_bubble_coefficients_full(verts):
    """Bubble weights via the explicit 3x3 solve, kept as a cross-check."""
    geo = triangle_geometry(np.asarray(verts, dtype=float))
    return triangle_bubble_coeffs_full(geo)[0]


# ---------------------------------------------------------------------------
# Quadrature exactness probe
# ---------------------------------------------------------------------------

def _factorial(n):
    out = 1
    for i in range(2, n + 1):
        out *= i
    return out


def check_quadrature_exactness(element_type, polynomial_degree):
    """Worst monomial error of the lumping rule on the reference element.

    Monomials x^p y^q with p + q equal to `polynomial_degree` are integrated
    on the unit triangle (edge-midpoint rule) or unit square (per-component
    split rule, both component rules probed) and compared against the
    analytic integrals.
    """
    if polynomial_degree > 4:
        raise ValueError("degree must be <= 4")
    worst = 0.0
    for p in range(polynomial_degree + 1):
        q = polynomial_degree - p

        def mono(pts):
            return pts[:, 0] ** p * pts[:, 1] ** q

        if element_type == "triangle":
            pts = np.array([[0.5, 0.0], [0.5, 0.5], [0.0, 0.5]])
            approx = mono(pts).sum() / 6.0
            exact = _factorial(p) * _factorial(q) / _factorial(p + q + 2)
            worst = max(worst, abs(approx - exact))
        elif element_type == "rectangle":
            exact = 1.0 / ((p + 1) * (q + 1))
            horiz = 0.5 * mono(np.array([[0.5, 0.0], [0.5, 1.0]])).sum()
            vert = 0.5 * mono(np.array([[0.0, 0.5], [1.0, 0.5]])).sum()
            worst = max(worst, abs(horiz - exact), abs(vert - exact))
        else:
            raise ValueError(f"unknown element type {element_type!r}")
    return worst


def edge_tangential_moments(element, n_gauss=3):
    """Moments int_e (basis . tangent) ds for every (edge, basis) pair.

    Returns (n_edges, ndof); the local edge tangent/orientation conventions
    of the element are used. Mainly a testing aid for the duality property.
    """
    if isinstance(element, TriangleElement):
        geo = element.geo
        starts = geo.verts[0, [1, 2, 0]]
        ends = geo.verts[0, [2, 0, 1]]
    else:
        geo = element.geo
        v = geo.verts[0]
        starts = np.array([v[0], v[1], v[3], v[0]])
        ends = np.array([v[1], v[2], v[2], v[3]])
    pts, w = edge_gauss_points(starts, ends, n_gauss)
    lengths = np.linalg.norm(ends - starts, axis=1)
    tangents = (ends - starts) / lengths[:, None]
    n_edges = len(starts)
    out = np.empty((n_edges, element.ndof))
    for e in range(n_edges):
        vals = element.eval_basis(pts[e])
        out[e] = lengths[e] * np.einsum("q,qbd,d->b", w, vals, tangents[e])
    return out
