import numpy as np
import pytest

from vemdg.quadrature import (QuadratureError, edge_gauss_lobatto, gauss_lobatto01,
                              polygon_area, polygon_quadrature, triangle_quadrature)

SQUARE = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])


def pentagon(radius=1.0):
    a = 2 * np.pi * np.arange(5) / 5
    return radius * np.column_stack([np.cos(a), np.sin(a)])


def monomial_integral_by_edges(V, a, b):
    """int_P x^a y^b via the divergence theorem: int_dP x^(a+1) y^b / (a+1) n_x ds.

    Each edge integrand is a polynomial of degree a+b+1 in the edge
    parameter, integrated with a Gauss rule exact to that degree.
    """
    s, w = np.polynomial.legendre.leggauss(a + b + 2)
    s, w = 0.5 * (s + 1), 0.5 * w
    total = 0.0
    W = np.roll(V, -1, axis=0)
    for p, q in zip(V, W):
        pts = p + s[:, None] * (q - p)
        nx_ds = q[1] - p[1]  # n_x * |edge|
        total += nx_ds * np.sum(w * pts[:, 0] ** (a + 1) * pts[:, 1] ** b) / (a + 1)
    return total


def test_unit_square_weights_sum_to_one():
    q = polygon_quadrature(SQUARE, 2)
    assert q.integrate(np.ones(len(q.weights))) == pytest.approx(1.0, abs=1e-14)


def test_unit_square_x2y2():
    q = polygon_quadrature(SQUARE, 4)
    x, y = q.nodes.T
    assert abs(q.integrate(x**2 * y**2) - 1 / 9) <= 1e-13


def test_pentagon_area_order_zero():
    V = pentagon()
    q = polygon_quadrature(V, 0)
    exact = 2.5 * np.sin(2 * np.pi / 5)
    assert abs(q.weights.sum() - exact) <= 1e-12
    assert abs(polygon_area(V) - exact) <= 1e-12


@pytest.mark.parametrize("order", range(0, 9))
def test_polygon_rule_exact_for_monomials(order):
    V = pentagon(0.7) + np.array([0.3, -0.2])
    q = polygon_quadrature(V, order)
    x, y = q.nodes.T
    for d in range(order + 1):
        for b in range(d + 1):
            a = d - b
            ref = monomial_integral_by_edges(V, a, b)
            assert q.integrate(x**a * y**b) == pytest.approx(ref, rel=1e-12, abs=1e-14)


def test_triangle_rule_exact():
    q = triangle_quadrature([0, 0], [2, 0], [0, 1], 6)
    x, y = q.nodes.T
    V = np.array([[0, 0], [2, 0], [0, 1]], dtype=float)
    assert q.integrate(x**3 * y**3) == pytest.approx(monomial_integral_by_edges(V, 3, 3), rel=1e-13)


def test_non_star_shaped_raises():
    # a thin "C" whose centroid lies outside the polygon
    V = np.array([[0, 0], [3, 0], [3, 0.2], [0.2, 0.2], [0.2, 2.8], [3, 2.8], [3, 3], [0, 3]],
                 dtype=float)
    with pytest.raises(QuadratureError):
        polygon_quadrature(V, 2)


def test_negative_order_raises():
    with pytest.raises(QuadratureError):
        polygon_quadrature(SQUARE, -1)


def test_edge_lobatto_k1_endpoints():
    pts = edge_gauss_lobatto([0, 0], [1, 0], 1)
    assert np.allclose([p for p, _ in pts], [[0, 0], [1, 0]])
    assert np.allclose([w for _, w in pts], [0.5, 0.5])


def test_edge_lobatto_k2_midpoint_weight():
    pts = edge_gauss_lobatto([0, 0], [2, 0], 2)
    p, w = pts[1]
    assert np.allclose(p, [1.0, 0.0])
    assert w == pytest.approx(4 / 6 * 2, abs=1e-15)


def test_edge_lobatto_k3_nodes():
    pts = edge_gauss_lobatto([0, 0], [1, 0], 3)
    xs = [p[0] for p, _ in pts[1:-1]]
    assert np.allclose(xs, [(1 - 1 / np.sqrt(5)) / 2, (1 + 1 / np.sqrt(5)) / 2], atol=1e-15)


@pytest.mark.parametrize("n", range(2, 9))
def test_lobatto_exactness(n):
    s, w = gauss_lobatto01(n)
    for p in range(2 * n - 2):
        assert w @ s**p == pytest.approx(1 / (p + 1), rel=1e-13)


def test_lobatto_rejects_degenerate():
    with pytest.raises(QuadratureError):
        gauss_lobatto01(1)
    with pytest.raises(QuadratureError):
        edge_gauss_lobatto([0, 0], [1, 0], 0)
