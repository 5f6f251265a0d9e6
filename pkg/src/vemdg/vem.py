"""Enhanced virtual element space of degree k on a polygonal mesh.

Local DOF ordering on a cell with n_E vertices:

    [vertex values (n_E)] [edge Gauss-Lobatto interior values, edge by edge,
    (k-1) each, ordered from v_i to v_{i+1}] [scaled moments (k(k-1)/2)]

Moments are (1/|E|) * integral(w * m_a) for the scaled monomials
m_a = ((x - x_E)/h_E)^a with |a| <= k-2.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .linalg import LinAlgError, assemble
from .mesh import PolygonalMesh
from .quadrature import gauss_lobatto01, polygon_area, polygon_centroid, polygon_quadrature

log = logging.getLogger(__name__)


class VemError(ValueError):
    pass


@lru_cache(maxsize=None)
def monomial_exponents(k: int) -> tuple:
    """Exponent pairs of total degree <= k, ordered by degree then by decreasing x-power."""
    return tuple((d - j, j) for d in range(k + 1) for j in range(d + 1))


def n_poly(k: int) -> int:
    return (k + 1) * (k + 2) // 2 if k >= 0 else 0


@dataclass(frozen=True)
class ScaledMonomialBasis:
    center: np.ndarray
    h: float
    k: int

    @property
    def exponents(self):
        return monomial_exponents(self.k)

    @property
    def size(self) -> int:
        return n_poly(self.k)

    def values(self, pts) -> np.ndarray:
        """(size, n_pts) values at ``pts`` (n_pts, 2)."""
        pts = np.atleast_2d(pts)
        X = (pts[:, 0] - self.center[0]) / self.h
        Y = (pts[:, 1] - self.center[1]) / self.h
        xp = X[None, :] ** np.arange(self.k + 1)[:, None]
        yp = Y[None, :] ** np.arange(self.k + 1)[:, None]
        return np.array([xp[a] * yp[b] for a, b in self.exponents])

    def gradients(self, pts) -> np.ndarray:
        """(size, n_pts, 2) gradients."""
        pts = np.atleast_2d(pts)
        X = (pts[:, 0] - self.center[0]) / self.h
        Y = (pts[:, 1] - self.center[1]) / self.h
        out = np.zeros((self.size, len(pts), 2))
        for i, (a, b) in enumerate(self.exponents):
            if a:
                out[i, :, 0] = a * X ** (a - 1) * Y**b / self.h
            if b:
                out[i, :, 1] = b * X**a * Y ** (b - 1) / self.h
        return out

    def laplacian_matrix(self) -> np.ndarray:
        """L with Delta m_a = sum_b L[a, b] m_b, the m_b of degree <= k-2."""
        idx = {e: i for i, e in enumerate(monomial_exponents(max(self.k - 2, 0)))}
        L = np.zeros((self.size, n_poly(self.k - 2)))
        for i, (a, b) in enumerate(self.exponents):
            if a >= 2:
                L[i, idx[(a - 2, b)]] += a * (a - 1) / self.h**2
            if b >= 2:
                L[i, idx[(a, b - 2)]] += b * (b - 1) / self.h**2
        return L


@dataclass(frozen=True, eq=False)
class LocalVemElement:
    """Projectors and local forms on one polygon.

    ``pi_nabla`` / ``pi_zero`` map local DOF vectors to coefficients in the
    scaled monomial basis m, whose Gram matrix is ``H``.  The projections
    are computed in an L2-orthonormalized basis p = T^T m (coefficients
    c_m = T c_p); ``D``, ``B``, ``G`` and ``Hp`` refer to p, which keeps the
    local solves well conditioned for high k and stretched cells.
    """

    vertices: np.ndarray
    k: int
    basis: ScaledMonomialBasis
    area: float
    dof_points: np.ndarray  # boundary DOF locations (n_E * k, 2)
    T: np.ndarray
    D: np.ndarray
    B: np.ndarray
    G: np.ndarray
    H: np.ndarray
    Hp: np.ndarray
    pi_nabla: np.ndarray
    pi_zero: np.ndarray
    stiffness: np.ndarray
    mass: np.ndarray
    stab_a: np.ndarray
    stab_m: np.ndarray

    @property
    def n_dofs(self) -> int:
        return self.D.shape[0]

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)


def local_dof_count(n_vertices: int, k: int) -> int:
    return n_vertices * k + k * (k - 1) // 2


def boundary_dof_points(V: np.ndarray, k: int) -> np.ndarray:
    s, _ = gauss_lobatto01(k + 1)
    s_int = s[1:-1]
    W = np.roll(V, -1, axis=0)
    edge_pts = V[:, None, :] + s_int[None, :, None] * (W - V)[:, None, :]
    return np.vstack([V, edge_pts.reshape(-1, 2)])


def _orthonormalize(mq, w, area):
    """Upper-triangular T with (T^T m) orthonormal in L2(E)/|E|; two Cholesky passes."""
    T = np.eye(len(mq))
    for _ in range(2):
        P = T.T @ mq
        Hp = (P * w) @ P.T / area
        try:
            L = np.linalg.cholesky(0.5 * (Hp + Hp.T))
        except np.linalg.LinAlgError:
            raise VemError("singular local mass Gram matrix (degenerate cell geometry)") from None
        T = T @ np.linalg.inv(L).T
    return T


def build_local_element(vertices, k: int) -> LocalVemElement:
    """Compute Pi-nabla, Pi-zero and the stabilized local forms for one cell."""
    if k < 1:
        raise VemError("VEM degree k must be >= 1")
    V = np.asarray(vertices, dtype=float)
    nE = len(V)
    area = polygon_area(V)
    if area <= 0:
        raise VemError("cell must be counter-clockwise with positive area")
    xc = polygon_centroid(V)
    diam = float(np.sqrt(((V[:, None] - V[None]) ** 2).sum(-1)).max())
    basis = ScaledMonomialBasis(xc, diam, k)
    nk = basis.size
    nL = n_poly(k - 2)
    nb = nE * k
    NE = nb + nL

    quad = polygon_quadrature(V, 2 * k, xc)
    mq = basis.values(quad.nodes)
    H = (mq * quad.weights) @ mq.T
    T = _orthonormalize(mq, quad.weights, area)
    pq = T.T @ mq
    Hp = (pq * quad.weights) @ pq.T

    pts = boundary_dof_points(V, k)
    D = np.zeros((NE, nk))
    D[:nb] = (T.T @ basis.values(pts)).T
    D[nb:] = (mq[:nL] * quad.weights) @ pq.T / area

    # B[a, i] = a^E(p_a, phi_i) by integration by parts
    B = np.zeros((nk, NE))
    s, w = gauss_lobatto01(k + 1)
    W = np.roll(V, -1, axis=0)
    for i in range(nE):
        p0, p1 = V[i], W[i]
        d = p1 - p0
        length = np.hypot(*d)
        normal = np.array([d[1], -d[0]]) / length
        nodes = p0 + s[:, None] * d
        dn = T.T @ (basis.gradients(nodes) @ normal)  # (nk, k+1)
        local = [i] + [nE + i * (k - 1) + j for j in range(k - 1)] + [(i + 1) % nE]
        np.add.at(B, (slice(None), local), dn * (w * length))
    if nL:
        # Delta p_a in terms of m_b (|b| <= k-2); int m_b w = |E| * moment DOF b
        lap = T.T @ basis.laplacian_matrix()
        B[:, nb:] -= area * lap
    # p_0 is constant: its row is replaced by the constant-fixing functional
    B[0] = 0.0
    if k == 1:
        B[0, :nE] = 1.0 / nE
    else:
        B[0, nb] = 1.0

    G = B @ D
    try:
        pi_nabla = np.linalg.solve(G, B)
    except np.linalg.LinAlgError:
        raise VemError("singular local Gram system (degenerate cell geometry)") from None

    # moments against P_k: P_{k-2} part from DOFs, the complement from Pi-nabla
    HP = Hp @ pi_nabla
    C = HP.copy()
    if nL:
        C[:nL] = 0.0
        C[:nL, nb:] = area * T[:nL, :nL].T
        X = np.linalg.solve(Hp[:nL, :nL], Hp[:nL, nL:]).T
        C[nL:] = HP[nL:] - X @ (HP[:nL] - C[:nL])
    pi_zero = np.linalg.solve(Hp, C)

    Gt = G.copy()
    Gt[0] = 0.0
    I = np.eye(NE)
    Rn = I - D @ pi_nabla
    R0 = I - D @ pi_zero
    stab_a = Rn.T @ Rn
    stab_m = area * (R0.T @ R0)
    K = pi_nabla.T @ Gt @ pi_nabla + stab_a
    Mloc = pi_zero.T @ Hp @ pi_zero + stab_m
    K = 0.5 * (K + K.T)
    Mloc = 0.5 * (Mloc + Mloc.T)
    return LocalVemElement(V, k, basis, area, pts, T, D, B, G, H, Hp, T @ pi_nabla, T @ pi_zero,
                           K, Mloc, stab_a, stab_m)


def build_pi_nabla(vertices, k: int) -> np.ndarray:
    return build_local_element(vertices, k).pi_nabla


def build_pi_zero(vertices, k: int) -> np.ndarray:
    return build_local_element(vertices, k).pi_zero


def local_forms(vertices, k: int) -> tuple[np.ndarray, np.ndarray]:
    el = build_local_element(vertices, k)
    return el.stiffness, el.mass


class VemSpace:
    """Global DOF layout and assembled matrices with homogeneous Dirichlet elimination.

    Global DOF numbering: vertices, then k-1 points per edge (oriented from
    the lower to the higher vertex index), then k(k-1)/2 moments per cell.
    ``M`` and ``A`` act on the free (interior) DOFs only.
    """

    def __init__(self, mesh: PolygonalMesh, k: int, load_order: int | None = None):
        if k < 1:
            raise VemError("VEM degree k must be >= 1")
        self.mesh = mesh
        self.k = k
        self.load_order = 2 * k + 2 if load_order is None else load_order
        nV, nE, nP = mesh.n_vertices, mesh.n_edges, mesh.n_cells
        nL = n_poly(k - 2)
        self.n_moments = nL
        self.ndof_full = nV + (k - 1) * nE + nP * nL
        self.elements = [build_local_element(mesh.cell_vertices(c), k) for c in range(nP)]
        self.cell_dofs = [self._local_to_global(c) for c in range(nP)]

        boundary = np.zeros(self.ndof_full, dtype=bool)
        boundary[:nV] = mesh.boundary_vertices
        be = np.nonzero(mesh.boundary_edges)[0]
        for j in range(k - 1):
            boundary[nV + be * (k - 1) + j] = True
        self.boundary = boundary
        self.free = np.nonzero(~boundary)[0]
        self.full_to_free = np.full(self.ndof_full, -1, dtype=np.int64)
        self.full_to_free[self.free] = np.arange(len(self.free))

        rows, cols, kv, mv = [], [], [], []
        for el, dofs in zip(self.elements, self.cell_dofs):
            r = np.repeat(dofs, len(dofs))
            c = np.tile(dofs, len(dofs))
            rows.append(r)
            cols.append(c)
            kv.append(el.stiffness.ravel())
            mv.append(el.mass.ravel())
        rows, cols = np.concatenate(rows), np.concatenate(cols)
        self.A_full = assemble(rows, cols, np.concatenate(kv), self.ndof_full, rtol=1e-10)
        self.M_full = assemble(rows, cols, np.concatenate(mv), self.ndof_full, rtol=1e-10)
        self.A = self.A_full[self.free][:, self.free].tocsr()
        self.M = self.M_full[self.free][:, self.free].tocsr()

    @property
    def n_free(self) -> int:
        return len(self.free)

    def _local_to_global(self, c: int) -> np.ndarray:
        mesh, k = self.mesh, self.k
        loop = mesh.cells[c]
        nV = mesh.n_vertices
        out = list(loop)
        for i, e in enumerate(mesh.cell_edges[c]):
            ids = nV + e * (k - 1) + np.arange(k - 1)
            if loop[i] != mesh.edges[e][0]:
                ids = ids[::-1]
            out.extend(ids)
        base = nV + (k - 1) * mesh.n_edges + c * self.n_moments
        out.extend(range(base, base + self.n_moments))
        return np.array(out, dtype=np.int64)

    def check_spd(self) -> None:
        """Raise if M or A has a non-positive pivot in a symmetric LU (Cholesky-equivalent)."""
        for name, K in (("M_h", self.M), ("A_h", self.A)):
            if K.shape[0] == 0:
                continue
            try:
                lu = spla.splu(K.tocsc(), permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                               options={"SymmetricMode": True})
            except RuntimeError as exc:
                raise LinAlgError(f"{name} is singular ({exc})") from None
            piv = lu.U.diagonal()
            if piv.min() <= 0.0:
                raise LinAlgError(f"{name} is not positive definite (min pivot {piv.min():.3e})")

    # DOF vectors -----------------------------------------------------------

    def extend(self, U_free: np.ndarray) -> np.ndarray:
        """Free DOF vector(s) -> full vector(s) with zero boundary values (leading axis)."""
        U_free = np.asarray(U_free)
        out = np.zeros((self.ndof_full,) + U_free.shape[1:], dtype=U_free.dtype)
        out[self.free] = U_free
        return out

    def restrict(self, U_full: np.ndarray) -> np.ndarray:
        return np.asarray(U_full)[self.free]

    @cached_property
    def dof_coordinates(self) -> np.ndarray:
        """Location of point DOFs; moment DOFs get their cell centroid."""
        X = np.zeros((self.ndof_full, 2))
        for el, dofs in zip(self.elements, self.cell_dofs):
            nb = len(el.dof_points)
            X[dofs[:nb]] = el.dof_points
            X[dofs[nb:]] = el.basis.center
        return X

    @cached_property
    def _interpolation_operator(self):
        """(point mask, sparse moment operator, quadrature nodes) for interpolate_full."""
        point = np.ones(self.ndof_full, dtype=bool)
        rows, cols, vals, nodes = [], [], [], []
        offset = 0
        for c, (el, dofs) in enumerate(zip(self.elements, self.cell_dofs)):
            mdofs = dofs[len(el.dof_points):]
            point[mdofs] = False
            if not self.n_moments:
                continue
            q = self.mesh.quadrature(c, self.load_order)
            mq = el.basis.values(q.nodes)[: self.n_moments] * (q.weights / el.area)
            nq = len(q.weights)
            rows.append(np.repeat(mdofs, nq))
            cols.append(np.tile(np.arange(offset, offset + nq), len(mdofs)))
            vals.append(mq.ravel())
            nodes.append(q.nodes)
            offset += nq
        if not nodes:
            return point, None, np.zeros((0, 2))
        Q = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(self.ndof_full, offset))
        return point, Q, np.vstack(nodes)

    def interpolate_full(self, g) -> np.ndarray:
        """DOF-wise interpolant of g(x, y) over all DOFs, boundary included."""
        point, Q, Xq = self._interpolation_operator
        X = self.dof_coordinates
        out = np.zeros(self.ndof_full)
        out[point] = g(X[point, 0], X[point, 1])
        if Q is not None:
            out += Q @ np.broadcast_to(g(Xq[:, 0], Xq[:, 1]), (Xq.shape[0],))
        return out

    def interpolate(self, g) -> np.ndarray:
        """Interpolant restricted to the free DOFs (homogeneous Dirichlet)."""
        return self.interpolate_full(g)[self.free]

    # load ------------------------------------------------------------------

    @cached_property
    def _load_operator(self):
        rows, cols, vals, nodes = [], [], [], []
        offset = 0
        for c, (el, dofs) in enumerate(zip(self.elements, self.cell_dofs)):
            q = self.mesh.quadrature(c, self.load_order)
            mq = el.basis.values(q.nodes) * q.weights  # (nk, nq)
            local = el.pi_zero.T @ mq  # (N_E, nq)
            nq = len(q.weights)
            rows.append(np.repeat(dofs, nq))
            cols.append(np.tile(np.arange(offset, offset + nq), len(dofs)))
            vals.append(local.ravel())
            nodes.append(q.nodes)
            offset += nq
        Q = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(self.ndof_full, offset))
        Q.sum_duplicates()
        return Q[self.free].tocsr(), np.vstack(nodes), Q

    def project_load(self, f, t: float) -> np.ndarray:
        """F_i(t) = (Pi0 f(t), phi_i) on the free DOFs; f is f(x, y, t)."""
        Q, X, _ = self._load_operator
        return Q @ np.broadcast_to(f(X[:, 0], X[:, 1], t), (X.shape[0],))

    def project_load_full(self, f, t: float) -> np.ndarray:
        """Load vector over all DOFs, boundary included."""
        _, X, Q = self._load_operator
        return Q @ np.broadcast_to(f(X[:, 0], X[:, 1], t), (X.shape[0],))

    def load_projection(self, f, t: float, cell: int) -> np.ndarray:
        """Scaled-monomial coefficients of Pi0 f(t) on one cell."""
        el = self.elements[cell]
        q = self.mesh.quadrature(cell, self.load_order)
        vals = np.broadcast_to(f(q.nodes[:, 0], q.nodes[:, 1], t), (len(q.weights),))
        pq = el.T.T @ el.basis.values(q.nodes)
        return el.T @ np.linalg.solve(el.Hp, (pq * q.weights) @ vals)

    def load_matrix(self, f, times) -> np.ndarray:
        """Columns F(t_q) for each time in ``times``: shape (n_free, len(times))."""
        Q, X, _ = self._load_operator
        vals = np.column_stack([np.broadcast_to(f(X[:, 0], X[:, 1], t), (X.shape[0],))
                                for t in times]) if len(times) else np.zeros((X.shape[0], 0))
        return np.asarray(Q @ vals)

    def load_l2_norm_sq(self, f, t: float) -> float:
        """||Pi0 f(t)||^2 over the mesh (the L2 norm of the discrete load)."""
        total = 0.0
        for c, el in enumerate(self.elements):
            q = self.mesh.quadrature(c, self.load_order)
            pq = el.T.T @ el.basis.values(q.nodes)
            vals = np.broadcast_to(f(q.nodes[:, 0], q.nodes[:, 1], t), (len(q.weights),))
            b = (pq * q.weights) @ vals
            total += b @ np.linalg.solve(el.Hp, b)
        return float(total)

    # functions of DOF vectors ---------------------------------------------

    def mh(self, v: np.ndarray, w: np.ndarray) -> float:
        """Element-by-element m_h on free DOF vectors."""
        vf, wf = self.extend(v), self.extend(w)
        return float(sum(vf[d] @ el.mass @ wf[d] for el, d in zip(self.elements, self.cell_dofs)))

    def ah(self, v: np.ndarray, w: np.ndarray) -> float:
        vf, wf = self.extend(v), self.extend(w)
        return float(sum(vf[d] @ el.stiffness @ wf[d] for el, d in zip(self.elements, self.cell_dofs)))

    def pi_zero_coefficients(self, U_free: np.ndarray, cell: int) -> np.ndarray:
        Uf = self.extend(U_free)
        return self.elements[cell].pi_zero @ Uf[self.cell_dofs[cell]]

    def evaluate(self, U_free: np.ndarray, x) -> float:
        """Point value of the Pi0 polynomial of the VE function at x."""
        c = self.mesh.locate(x)
        coef = self.pi_zero_coefficients(U_free, c)
        return float(coef @ self.elements[c].basis.values(np.asarray(x, dtype=float)[None])[:, 0])

    def point_evaluator(self, x) -> np.ndarray:
        """Row vector e with e @ U_free equal to evaluate(U_free, x)."""
        c = self.mesh.locate(x)
        el = self.elements[c]
        row = el.basis.values(np.asarray(x, dtype=float)[None])[:, 0] @ el.pi_zero
        e = np.zeros(self.ndof_full)
        np.add.at(e, self.cell_dofs[c], row)
        return e[self.free]

    def broken_errors(self, U_free: np.ndarray, u, grad_u) -> tuple[float, float]:
        """(||u - Pi0 U||_L2, |u - Pi-nabla U|_H1 broken) by quadrature."""
        Uf = self.extend(U_free)
        l2 = h1 = 0.0
        for c, (el, dofs) in enumerate(zip(self.elements, self.cell_dofs)):
            q = self.mesh.quadrature(c, self.load_order)
            x, y = q.nodes[:, 0], q.nodes[:, 1]
            p0 = el.pi_zero @ Uf[dofs]
            pn = el.pi_nabla @ Uf[dofs]
            val = el.basis.values(q.nodes).T @ p0
            gr = np.einsum("a,aqd->qd", pn, el.basis.gradients(q.nodes))
            gx, gy = grad_u(x, y)
            l2 += q.weights @ (u(x, y) - val) ** 2
            h1 += q.weights @ ((gx - gr[:, 0]) ** 2 + (gy - gr[:, 1]) ** 2)
        return float(np.sqrt(l2)), float(np.sqrt(h1))

    # export ----------------------------------------------------------------

    def write_dof_map(self, path) -> None:
        mesh, k = self.mesh, self.k
        nV, nE = mesh.n_vertices, mesh.n_edges
        X = self.dof_coordinates
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["dof", "type", "entity", "x", "y", "boundary"])
            for i in range(self.ndof_full):
                if i < nV:
                    kind, ent = "vertex", i
                elif i < nV + (k - 1) * nE:
                    kind, ent = "edge", (i - nV) // (k - 1)
                else:
                    kind, ent = "moment", (i - nV - (k - 1) * nE) // self.n_moments
                xs = (f"{X[i, 0]:.17g}", f"{X[i, 1]:.17g}") if kind != "moment" else ("", "")
                w.writerow([i, kind, ent, *xs, int(self.boundary[i])])


def interior_dimension(mesh: PolygonalMesh, k: int) -> int:
    """n_V^int + (k-1) n_e^int + n_P k(k-1)/2."""
    nVi = int((~mesh.boundary_vertices).sum())
    nEi = int((~mesh.boundary_edges).sum())
    return nVi + (k - 1) * nEi + mesh.n_cells * n_poly(k - 2)
