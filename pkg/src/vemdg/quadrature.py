"""Quadrature rules on intervals, triangles, polygons and mesh edges."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre as npleg
from scipy.special import roots_jacobi


class QuadratureError(ValueError):
    pass


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes (n, 2) and weights (n,) of a rule on a planar region."""

    nodes: np.ndarray
    weights: np.ndarray
    order: int

    def integrate(self, values) -> float:
        return float(np.dot(self.weights, values))


@lru_cache(maxsize=None)
def gauss_legendre01(n: int) -> tuple[np.ndarray, np.ndarray]:
    """n-point Gauss-Legendre rule on [0, 1]."""
    x, w = npleg.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def gauss_lobatto01(n_points: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Lobatto rule with ``n_points`` >= 2 nodes on [0, 1], endpoints included."""
    if n_points < 2:
        raise QuadratureError("Gauss-Lobatto needs at least two points")
    p = n_points - 1
    # interior nodes are the roots of P_p'
    coef = np.zeros(p + 1)
    coef[p] = 1.0
    interior = np.sort(npleg.legroots(npleg.legder(coef))) if p > 1 else np.empty(0)
    x = np.concatenate(([-1.0], interior, [1.0]))
    w = 2.0 / (p * (p + 1) * npleg.legval(x, coef) ** 2)
    # symmetrize against root-finder noise
    x = 0.5 * (x - x[::-1])
    w = 0.5 * (w + w[::-1])
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def _reference_triangle(order: int) -> tuple[np.ndarray, np.ndarray]:
    # collapsed (Duffy) product of Gauss-Legendre and Gauss-Jacobi(1, 0) rules on
    # the unit triangle (0,0),(1,0),(0,1); exact to total degree 2n-1
    n = max(1, (order + 2) // 2)
    xi, wxi = gauss_legendre01(n)
    eta, weta = roots_jacobi(n, 1.0, 0.0)
    eta = 0.5 * (eta + 1.0)
    weta = 0.25 * weta
    X = np.outer(1.0 - eta, xi)
    Y = np.repeat(eta[:, None], n, axis=1)
    W = np.outer(weta, wxi)
    return np.column_stack([X.ravel(), Y.ravel()]), W.ravel()


def triangle_quadrature(a, b, c, order: int) -> QuadratureRule:
    """Rule exact for polynomials of total degree <= ``order`` on triangle abc."""
    a, b, c = (np.asarray(p, dtype=float) for p in (a, b, c))
    ref, w = _reference_triangle(order)
    J = np.column_stack([b - a, c - a])
    det = np.linalg.det(J)
    nodes = a + ref @ J.T
    return QuadratureRule(nodes, w * abs(det), order)


def polygon_quadrature(vertices, order: int, center=None) -> QuadratureRule:
    """Fan the polygon from ``center`` (default: area centroid) into triangles.

    Each fan triangle must have positive area, which holds for polygons
    star-shaped with respect to the center.
    """
    if order < 0:
        raise QuadratureError("quadrature order must be non-negative")
    V = np.asarray(vertices, dtype=float)
    if center is None:
        center = polygon_centroid(V)
    center = np.asarray(center, dtype=float)
    ref, w = _reference_triangle(order)
    P = V
    Q = np.roll(V, -1, axis=0)
    e1 = P - center
    e2 = Q - center
    dets = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    if np.any(dets <= 0.0):
        bad = int(np.argmin(dets))
        raise QuadratureError(
            f"fan triangle {bad} has non-positive area {0.5 * dets[bad]:.3e}; "
            "polygon is not star-shaped with respect to its centroid"
        )
    # nodes[t, q] = center + ref_x * e1[t] + ref_y * e2[t]
    nodes = (
        center[None, None, :]
        + ref[None, :, 0:1] * e1[:, None, :]
        + ref[None, :, 1:2] * e2[:, None, :]
    )
    weights = w[None, :] * dets[:, None]
    return QuadratureRule(nodes.reshape(-1, 2), weights.ravel(), order)


def polygon_area(vertices) -> float:
    V = np.asarray(vertices, dtype=float)
    x, y = V[:, 0], V[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def polygon_centroid(vertices) -> np.ndarray:
    V = np.asarray(vertices, dtype=float)
    x, y = V[:, 0], V[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    area = 0.5 * cross.sum()
    cx = ((x + xn) * cross).sum() / (6.0 * area)
    cy = ((y + yn) * cross).sum() / (6.0 * area)
    return np.array([cx, cy])


def edge_gauss_lobatto(p0, p1, k: int) -> list[tuple[np.ndarray, float]]:
    """k+1 Gauss-Lobatto points on the segment p0-p1, endpoints first and last.

    Weights are scaled by the segment length; the rule is exact for
    polynomials of degree 2k-1 along the edge.
    """
    if k < 1:
        raise QuadratureError("edge degree k must be >= 1")
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    s, w = gauss_lobatto01(k + 1)
    length = float(np.hypot(*(p1 - p0)))
    return [(p0 + si * (p1 - p0), wi * length) for si, wi in zip(s, w)]
