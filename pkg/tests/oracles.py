"""Independent reference computations shared by the unit and acceptance tests.

Polynomials are raw-coordinate coefficient arrays C[a, b] for x^a y^b.
Integrals over polygons use the divergence theorem on the edges, so they
never touch the triangle-fan rules used by the library.
"""

from __future__ import annotations

import numpy as np
from numpy.polynomial import legendre as npleg
from scipy.spatial import ConvexHull


def random_polygon(rng, n_points=None, min_sep=0.08):
    """Counter-clockwise convex polygon with reasonably separated vertices."""
    while True:
        n = n_points or int(rng.integers(5, 12))
        P = rng.uniform(-1, 1, (n, 2)) * rng.uniform(0.2, 2.0, 2)
        V = P[ConvexHull(P).vertices]
        d = np.sqrt(((V[:, None] - V[None]) ** 2).sum(-1))
        diam = d.max()
        np.fill_diagonal(d, np.inf)
        if len(V) >= 3 and d.min() >= min_sep * diam:
            return V + rng.uniform(-3, 3, 2)


def random_poly(rng, k):
    C = np.zeros((k + 1, k + 1))
    for a in range(k + 1):
        for b in range(k + 1 - a):
            C[a, b] = rng.normal()
    return C


def peval(C, x, y):
    x, y = np.asarray(x, float), np.asarray(y, float)
    return sum(C[a, b] * x**a * y**b for a in range(C.shape[0]) for b in range(C.shape[1]) if C[a, b])


def pdx(C):
    D = np.zeros_like(C)
    D[:-1] = C[1:] * np.arange(1, C.shape[0])[:, None]
    return D


def pdy(C):
    D = np.zeros_like(C)
    D[:, :-1] = C[:, 1:] * np.arange(1, C.shape[1])[None, :]
    return D


def pmul(A, B):
    out = np.zeros((A.shape[0] + B.shape[0] - 1, A.shape[1] + B.shape[1] - 1))
    for a in range(A.shape[0]):
        for b in range(A.shape[1]):
            if A[a, b]:
                out[a:a + B.shape[0], b:b + B.shape[1]] += A[a, b] * B
    return out


def integrate_poly(C, V):
    """int_P p via int_dP P_x n_x ds, with P_x the x-antiderivative of p."""
    deg = C.shape[0] + C.shape[1]
    s, w = npleg.leggauss(deg + 2)
    s, w = 0.5 * (s + 1), 0.5 * w
    W = np.roll(V, -1, axis=0)
    total = 0.0
    for p, q in zip(V, W):
        pts = p + s[:, None] * (q - p)
        x, y = pts[:, 0], pts[:, 1]
        anti = sum(C[a, b] * x ** (a + 1) * y**b / (a + 1)
                   for a in range(C.shape[0]) for b in range(C.shape[1]) if C[a, b])
        total += (q[1] - p[1]) * np.dot(w, anti)
    return float(total)


def scaled_monomial(el, a, b):
    """Raw coefficients of ((x - xc)/h)^a ((y - yc)/h)^b."""
    from math import comb

    xc, yc = el.basis.center
    h = el.basis.h
    C = np.zeros((a + 1, b + 1))
    for i in range(a + 1):
        for j in range(b + 1):
            C[i, j] = comb(a, i) * comb(b, j) * (-xc) ** (a - i) * (-yc) ** (b - j) / h ** (a + b)
    return C


def poly_dofs(el, C):
    """Element DOF vector of the polynomial C: point values, then scaled moments."""
    vals = peval(C, el.dof_points[:, 0], el.dof_points[:, 1])
    k = el.k
    moments = [integrate_poly(pmul(C, scaled_monomial(el, a, b)), el.vertices) / el.area
               for d in range(k - 1) for b in range(d + 1) for a in [d - b]]
    return np.concatenate([vals, moments])


def stiffness_oracle(el, C, w):
    """a^E(q, w) = int_dE (grad q . n) w ds - int_E (Lap q) w for a VE function w.

    The edge trace of w is the degree-k Lagrange interpolant through its
    Gauss-Lobatto point values; the volume term uses w's moments, since
    Lap q has degree <= k-2.
    """
    k = el.k
    V = el.vertices
    nE = len(V)
    W = np.roll(V, -1, axis=0)
    s_lob = lobatto_nodes01(k + 1)
    s, gw = npleg.leggauss(2 * k + 2)
    s, gw = 0.5 * (s + 1), 0.5 * gw
    Cx, Cy = pdx(C), pdy(C)
    total = 0.0
    for i in range(nE):
        p, q = V[i], W[i]
        d = q - p
        length = np.hypot(*d)
        nrm = np.array([d[1], -d[0]]) / length
        nodes = [w[i]] + [w[nE + i * (k - 1) + j] for j in range(k - 1)] + [w[(i + 1) % nE]]
        coef = np.polyfit(s_lob, nodes, k)
        trace = np.polyval(coef, s)
        pts = p + s[:, None] * d
        dn = peval(Cx, pts[:, 0], pts[:, 1]) * nrm[0] + peval(Cy, pts[:, 0], pts[:, 1]) * nrm[1]
        total += length * np.dot(gw, dn * trace)
    if k >= 2:
        lap = pdx(pdx(C)) + pdy(pdy(C))
        # express Lap q in the scaled monomials of degree <= k-2 by collocation
        exps = [(d - b, b) for d in range(k - 1) for b in range(d + 1)]
        rng = np.random.default_rng(0)
        X = el.basis.center + el.basis.h * rng.uniform(-0.5, 0.5, (4 * len(exps), 2))
        Bm = np.column_stack([peval(scaled_monomial(el, a, b), X[:, 0], X[:, 1]) for a, b in exps])
        c, *_ = np.linalg.lstsq(Bm, peval(lap, X[:, 0], X[:, 1]), rcond=None)
        total -= el.area * np.dot(c, w[nE * k:])
    return float(total)


def grad_inner(C, D, V):
    return integrate_poly(pmul(pdx(C), pdx(D)) + pmul(pdy(C), pdy(D)), V)


def lobatto_nodes01(n):
    """Endpoints plus the roots of P_{n-1}', mapped to [0, 1]."""
    c = np.zeros(n)
    c[-1] = 1.0
    inner = np.sort(npleg.legroots(npleg.legder(c))) if n > 2 else np.empty(0)
    return 0.5 * (np.concatenate(([-1.0], inner, [1.0])) + 1.0)


def legendre_exact_integral(f_coef, g_coef):
    """int_0^1 f g for numpy polynomial coefficient arrays (highest power first)."""
    prod = np.polymul(f_coef, g_coef)
    anti = np.polyint(prod)
    return float(np.polyval(anti, 1.0) - np.polyval(anti, 0.0))
