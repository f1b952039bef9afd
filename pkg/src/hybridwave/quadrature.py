"""Quadrature rules used for exact (non-lumped) integration.

Triangle rules are stored in barycentric coordinates with weights summing to
one (multiply by the element area). Rectangle rules are Gauss-Legendre tensor
products on the unit square, weights summing to one (multiply by the area).
The edge-midpoint lumping rules live in fem_local next to the bases they
diagonalize.
"""

import numpy as np

# Edge midpoints of the reference triangle; midpoint m_k sits on the edge
# opposite vertex k (lambda_k = 0). Degree 2 exact.
TRI_MIDPOINT_BARY = np.array(
    [[0.0, 0.5, 0.5], [0.5, 0.0, 0.5], [0.5, 0.5, 0.0]]
)
TRI_MIDPOINT_W = np.full(3, 1.0 / 3.0)


def _sym3(a, b):
    return [(a, b, b), (b, a, b), (b, b, a)]


def _perm6(a, b, c):
    return [(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)]


# Dunavant degree-4 rule, 6 points.
_D4_A1, _D4_B1, _D4_W1 = 0.108103018168070, 0.445948490915965, 0.223381589678011
_D4_A2, _D4_B2, _D4_W2 = 0.816847572980459, 0.091576213509771, 0.109951743655322
TRI_DEG4_BARY = np.array(_sym3(_D4_A1, _D4_B1) + _sym3(_D4_A2, _D4_B2))
TRI_DEG4_W = np.array([_D4_W1] * 3 + [_D4_W2] * 3)

# Dunavant degree-6 rule, 12 points.
_D6_A1, _D6_B1, _D6_W1 = 0.501426509658179, 0.249286745170910, 0.116786275726379
_D6_A2, _D6_B2, _D6_W2 = 0.873821971016996, 0.063089014491502, 0.050844906370207
_D6_P3 = (0.053145049844816, 0.310352451033785, 0.636502499121399)
_D6_W3 = 0.082851075618374
TRI_DEG6_BARY = np.array(
    _sym3(_D6_A1, _D6_B1) + _sym3(_D6_A2, _D6_B2) + _perm6(*_D6_P3)
)
TRI_DEG6_W = np.array([_D6_W1] * 3 + [_D6_W2] * 3 + [_D6_W3] * 6)

TRI_CENTROID_BARY = np.array([[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]])
TRI_CENTROID_W = np.array([1.0])


def tri_rule(degree):
    """Barycentric points and unit weights for a rule exact to `degree`."""
    if degree <= 2:
        return TRI_MIDPOINT_BARY, TRI_MIDPOINT_W
    if degree <= 4:
        return TRI_DEG4_BARY, TRI_DEG4_W
    if degree <= 6:
        return TRI_DEG6_BARY, TRI_DEG6_W
    raise ValueError(f"no triangle rule for degree {degree}")


def gauss01(n):
    """n-point Gauss-Legendre nodes/weights on [0, 1], weights sum to 1."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def rect_rule(degree):
    """Tensor Gauss rule on the unit square exact to `degree` per variable."""
    n = degree // 2 + 1
    x, w = gauss01(n)
    xi, eta = np.meshgrid(x, x, indexing="ij")
    pts = np.column_stack([xi.ravel(), eta.ravel()])
    wts = np.outer(w, w).ravel()
    return pts, wts


def edge_gauss_points(p0, p1, n=3):
    """Gauss points along segments p0->p1 (arrays (m, 2)) plus unit weights.

    Returns points of shape (m, n, 2) and weights (n,) summing to 1; scale by
    the segment length for the line integral.
    """
    s, w = gauss01(n)
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    pts = p0[:, None, :] + s[None, :, None] * (p1 - p0)[:, None, :]
    return pts, w
