"""Polygonal meshes of a rectangle: construction, validation, I/O and queries."""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.spatial import Voronoi, cKDTree

from .quadrature import QuadratureRule, polygon_area, polygon_centroid, polygon_quadrature

log = logging.getLogger(__name__)

UNIT_BOX = (0.0, 0.0, 1.0, 1.0)


class MeshError(ValueError):
    pass


class MeshQualityWarning(UserWarning):
    pass


@dataclass(frozen=True)
class CellGeometry:
    centroid: np.ndarray
    diameter: float
    area: float
    normals: np.ndarray  # (n_E, 2) outward unit normals, edge i = v_i -> v_{i+1}
    lengths: np.ndarray


@dataclass(frozen=True, eq=False)
class PolygonalMesh:
    """Immutable polygonal tessellation of an axis-aligned box.

    ``cells`` holds counter-clockwise vertex loops.  Edges, cell-edge
    incidence and per-cell geometry are derived lazily and cached.
    """

    vertices: np.ndarray
    cells: tuple
    box: tuple = UNIT_BOX

    def __post_init__(self):
        V = np.array(self.vertices, dtype=float)
        V.setflags(write=False)
        cells = []
        for c in self.cells:
            a = np.array(c, dtype=np.int64)
            a.setflags(write=False)
            cells.append(a)
        object.__setattr__(self, "vertices", V)
        object.__setattr__(self, "cells", tuple(cells))
        object.__setattr__(self, "box", tuple(float(b) for b in self.box))

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @cached_property
    def _topology(self):
        index = {}
        edges = []
        edge_cells = []
        cell_edges = []
        for ci, loop in enumerate(self.cells):
            ce = []
            for i in range(len(loop)):
                a, b = int(loop[i]), int(loop[(i + 1) % len(loop)])
                key = (min(a, b), max(a, b))
                e = index.get(key)
                if e is None:
                    e = len(edges)
                    index[key] = e
                    edges.append(key)
                    edge_cells.append([])
                edge_cells[e].append(ci)
                ce.append(e)
            cell_edges.append(np.array(ce, dtype=np.int64))
        return np.array(edges, dtype=np.int64).reshape(-1, 2), edge_cells, tuple(cell_edges)

    @property
    def edges(self) -> np.ndarray:
        """(n_e, 2) vertex pairs stored with the lower index first."""
        return self._topology[0]

    @property
    def edge_cells(self) -> list:
        return self._topology[1]

    @property
    def cell_edges(self) -> tuple:
        """Per cell, the global edge id of local edge i (v_i -> v_{i+1})."""
        return self._topology[2]

    @cached_property
    def boundary_edges(self) -> np.ndarray:
        return np.array([len(c) == 1 for c in self.edge_cells], dtype=bool)

    @cached_property
    def boundary_vertices(self) -> np.ndarray:
        mask = np.zeros(self.n_vertices, dtype=bool)
        mask[self.edges[self.boundary_edges].ravel()] = True
        return mask

    @cached_property
    def geometry(self) -> tuple:
        out = []
        for loop in self.cells:
            V = self.vertices[loop]
            d = np.roll(V, -1, axis=0) - V
            lengths = np.hypot(d[:, 0], d[:, 1])
            normals = np.column_stack([d[:, 1], -d[:, 0]]) / lengths[:, None]
            diff = V[:, None, :] - V[None, :, :]
            diam = float(np.sqrt((diff**2).sum(-1)).max())
            out.append(CellGeometry(polygon_centroid(V), diam, polygon_area(V), normals, lengths))
        return tuple(out)

    @cached_property
    def h(self) -> float:
        return max(g.diameter for g in self.geometry)

    def cell_vertices(self, c: int) -> np.ndarray:
        return self.vertices[self.cells[c]]

    def quadrature(self, c: int, order: int) -> QuadratureRule:
        return polygon_quadrature(self.cell_vertices(c), order, self.geometry[c].centroid)

    @cached_property
    def _bboxes(self) -> np.ndarray:
        return np.array([[*self.cell_vertices(c).min(0), *self.cell_vertices(c).max(0)]
                         for c in range(self.n_cells)])

    def locate(self, x) -> int:
        """Index of a cell containing ``x``; ties on shared boundaries go to the lowest index."""
        x = np.asarray(x, dtype=float)
        x0, y0, x1, y1 = self.box
        tol = 1e-12 * max(x1 - x0, y1 - y0)
        if not (x0 - tol <= x[0] <= x1 + tol and y0 - tol <= x[1] <= y1 + tol):
            raise MeshError(f"point {tuple(x)} lies outside the domain box {self.box}")
        bb = self._bboxes
        cand = np.nonzero((bb[:, 0] - tol <= x[0]) & (x[0] <= bb[:, 2] + tol)
                          & (bb[:, 1] - tol <= x[1]) & (x[1] <= bb[:, 3] + tol))[0]
        for c in cand:
            if point_in_polygon(x, self.cell_vertices(c), tol):
                return int(c)
        raise MeshError(f"no cell contains point {tuple(x)}")


def point_in_polygon(x, V, tol: float = 0.0) -> bool:
    """Closed point-in-polygon test (boundary counts as inside)."""
    P = V
    Q = np.roll(V, -1, axis=0)
    d = Q - P
    t = np.clip(((x - P) * d).sum(1) / (d * d).sum(1), 0.0, 1.0)
    dist = np.hypot(*(P + t[:, None] * d - x).T)
    if dist.min() <= tol:
        return True
    # even-odd ray cast along +x
    crosses = (P[:, 1] > x[1]) != (Q[:, 1] > x[1])
    with np.errstate(divide="ignore", invalid="ignore"):
        xint = P[:, 0] + (x[1] - P[:, 1]) * d[:, 0] / d[:, 1]
    return bool(np.count_nonzero(crosses & (xint > x[0])) % 2)


def validate(mesh: PolygonalMesh, gamma: float = 0.1, c_sep: float = 0.05) -> None:
    """Raise MeshError for broken meshes; warn on regularity-gate violations.

    ``gamma`` bounds the centroid's distance to every edge line relative to
    h_E (star-shapedness w.r.t. a ball), ``c_sep`` bounds the minimum vertex
    separation relative to h_E.
    """
    x0, y0, x1, y1 = mesh.box
    if not (x1 > x0 and y1 > y0):
        raise MeshError(f"degenerate box {mesh.box}")
    scale = max(x1 - x0, y1 - y0)
    for ci, loop in enumerate(mesh.cells):
        if len(loop) < 3:
            raise MeshError(f"cell {ci}: loop with {len(loop)} vertices is not a closed polygon")
        if len(set(loop.tolist())) != len(loop):
            raise MeshError(f"cell {ci}: duplicated vertex index in loop {loop.tolist()}")
        if loop.min() < 0 or loop.max() >= mesh.n_vertices:
            raise MeshError(f"cell {ci}: vertex index out of range")
        area = polygon_area(mesh.vertices[loop])
        if area <= 0.0:
            raise MeshError(f"cell {ci}: clockwise or degenerate orientation (signed area {area:.3e})")
    for e, cells in enumerate(mesh.edge_cells):
        if len(cells) > 2:
            raise MeshError(f"edge {tuple(mesh.edges[e])} shared by cells {cells}")
        if len(cells) == 2:
            a, b = mesh.edges[e]
            ca, cb = (mesh.cells[c].tolist() for c in cells)
            da = ca[(ca.index(a) + 1) % len(ca)] == b
            db = cb[(cb.index(a) + 1) % len(cb)] == b
            if da == db:
                raise MeshError(f"cells {cells} traverse edge {(int(a), int(b))} in the same direction")
        else:
            pa, pb = mesh.vertices[mesh.edges[e]]
            tol = 1e-12 * scale
            on = any(abs(pa[i] - v) <= tol and abs(pb[i] - v) <= tol
                     for i, v in ((0, x0), (0, x1), (1, y0), (1, y1)))
            if not on:
                raise MeshError(f"cell {cells[0]}: boundary edge {tuple(mesh.edges[e])} "
                                "is not on the box; loop not closed against neighbours")
    total = sum(g.area for g in mesh.geometry)
    box_area = (x1 - x0) * (y1 - y0)
    if abs(total - box_area) > 1e-10 * box_area:
        raise MeshError(f"cells cover area {total!r}, box area is {box_area!r}")
    for ci, g in enumerate(mesh.geometry):
        V = mesh.cell_vertices(ci)
        # signed distance from the centroid to each edge line
        dist = ((V - g.centroid) * g.normals).sum(1)
        if dist.min() <= 0.0:
            warnings.warn(f"cell {ci} is not star-shaped w.r.t. its centroid", MeshQualityWarning)
        elif dist.min() < gamma * g.diameter:
            warnings.warn(f"cell {ci}: inscribed-ball ratio {dist.min() / g.diameter:.3f} < {gamma}",
                          MeshQualityWarning)
        diff = V[:, None, :] - V[None, :, :]
        sep = np.sqrt((diff**2).sum(-1))
        sep[np.diag_indices(len(V))] = np.inf
        if sep.min() < c_sep * g.diameter:
            warnings.warn(f"cell {ci}: vertex separation ratio {sep.min() / g.diameter:.3f} < {c_sep}",
                          MeshQualityWarning)


def generate_structured(nx: int, ny: int, box=UNIT_BOX) -> PolygonalMesh:
    if nx < 1 or ny < 1:
        raise MeshError(f"grid counts must be positive, got ({nx}, {ny})")
    x0, y0, x1, y1 = box
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    vertices = np.column_stack([X.ravel(), Y.ravel()])
    cells = []
    for j in range(ny):
        for i in range(nx):
            v = j * (nx + 1) + i
            cells.append((v, v + 1, v + nx + 2, v + nx + 1))
    mesh = PolygonalMesh(vertices, tuple(cells), box)
    validate(mesh)
    return mesh


def _mirrored(points, box, reach=np.inf):
    """Seeds plus their reflections across each box side within distance ``reach``."""
    x0, y0, x1, y1 = box
    p = points
    out = [p]
    for col, side in ((0, x0), (0, x1), (1, y0), (1, y1)):
        near = p[np.abs(p[:, col] - side) <= reach]
        q = near.copy()
        q[:, col] = 2 * side - q[:, col]
        out.append(q)
    return np.vstack(out)


def _voronoi_cells(seeds, box, reach=np.inf):
    """Bounded Voronoi regions of ``seeds`` clipped to ``box`` by mirroring.

    Returns the Voronoi vertices, the flattened CCW region loops, the
    owning seed of each loop entry and the loop offsets.
    """
    vor = Voronoi(_mirrored(seeds, box, reach))
    n = len(seeds)
    regs = [vor.regions[r] for r in vor.point_region[:n]]
    lens = np.array([len(r) for r in regs])
    flat = np.fromiter((v for r in regs for v in r), dtype=np.int64, count=lens.sum())
    if np.any(flat < 0) or np.any(lens < 3):
        raise MeshError("unbounded Voronoi region for an interior seed")
    owner = np.repeat(np.arange(n), lens)
    P = vor.vertices[flat]
    ang = np.arctan2(P[:, 1] - seeds[owner, 1], P[:, 0] - seeds[owner, 0])
    order = np.lexsort((ang, owner))
    offsets = np.concatenate(([0], np.cumsum(lens)))
    verts, flat = vor.vertices, flat[order]
    if np.isfinite(reach):
        x0, y0, x1, y1 = box
        tol = 1e-9 * max(x1 - x0, y1 - y0)
        inside = ((verts[flat, 0] >= x0 - tol) & (verts[flat, 0] <= x1 + tol)
                  & (verts[flat, 1] >= y0 - tol) & (verts[flat, 1] <= y1 + tol))
        if not inside.all():
            # partial mirroring missed a boundary cell
            return _voronoi_cells(seeds, box)
    return verts, flat, owner, offsets


def _centroids(verts, flat, owner, offsets):
    P = verts[flat]
    nxt = np.arange(len(flat)) + 1
    nxt[offsets[1:] - 1] = offsets[:-1]
    Q = P[nxt]
    cross = P[:, 0] * Q[:, 1] - Q[:, 0] * P[:, 1]
    n = len(offsets) - 1
    area = 0.5 * np.bincount(owner, cross, minlength=n)
    cx = np.bincount(owner, (P[:, 0] + Q[:, 0]) * cross, minlength=n) / (6.0 * area)
    cy = np.bincount(owner, (P[:, 1] + Q[:, 1]) * cross, minlength=n) / (6.0 * area)
    return np.column_stack([cx, cy])


def _dejitter(seeds, box, rng):
    x0, y0, x1, y1 = box
    scale = max(x1 - x0, y1 - y0)
    for _ in range(100):
        tree = cKDTree(seeds)
        pairs = tree.query_pairs(1e-9 * scale, output_type="ndarray")
        if len(pairs) == 0:
            return seeds
        idx = np.unique(pairs[:, 1])
        seeds[idx] += rng.uniform(-1e-6, 1e-6, size=(len(idx), 2)) * scale
        seeds[:, 0] = np.clip(seeds[:, 0], x0, x1)
        seeds[:, 1] = np.clip(seeds[:, 1], y0, y1)
    return seeds


def generate_voronoi_lloyd(n_cells: int, box=UNIT_BOX, seed: int = 0,
                           lloyd_iters: int = 50, collapse_tol: float = 0.06) -> PolygonalMesh:
    """Lloyd-relaxed bounded Voronoi mesh; deterministic for a fixed seed."""
    if n_cells < 1:
        raise MeshError("n_cells must be >= 1")
    x0, y0, x1, y1 = box
    if n_cells == 1:
        return generate_structured(1, 1, box)
    rng = np.random.default_rng(seed)
    seeds = np.column_stack([rng.uniform(x0, x1, n_cells), rng.uniform(y0, y1, n_cells)])
    # keep seeds off the box boundary so mirrored copies are distinct
    margin = 1e-6 * max(x1 - x0, y1 - y0)
    seeds[:, 0] = np.clip(seeds[:, 0], x0 + margin, x1 - margin)
    seeds[:, 1] = np.clip(seeds[:, 1], y0 + margin, y1 - margin)
    seeds = _dejitter(seeds, box, rng)
    reach = 4.0 * np.sqrt((x1 - x0) * (y1 - y0) / n_cells)
    for it in range(lloyd_iters):
        new = _centroids(*_voronoi_cells(seeds, box, reach))
        shift = np.abs(new - seeds).max()
        seeds = _dejitter(new, box, rng)
        if shift < 1e-12:
            log.debug("Lloyd converged after %d iterations", it + 1)
            break
    verts, flat, _, offsets = _voronoi_cells(seeds, box)
    regions = [flat[offsets[i]:offsets[i + 1]] for i in range(n_cells)]
    return _assemble_voronoi(verts, regions, box, collapse_tol)


def _assemble_voronoi(verts, regions, box, collapse_tol) -> PolygonalMesh:
    x0, y0, x1, y1 = box
    scale = max(x1 - x0, y1 - y0)
    used = np.unique(np.concatenate(regions))
    P = verts[used].copy()
    # snap onto the box sides (mirroring puts them there up to rounding)
    for col, lo, hi in ((0, x0, x1), (1, y0, y1)):
        P[np.abs(P[:, col] - lo) <= 1e-10 * scale, col] = lo
        P[np.abs(P[:, col] - hi) <= 1e-10 * scale, col] = hi
    # merge numerically coincident Voronoi vertices (cocircular seeds)
    tree = cKDTree(P)
    pairs = tree.query_pairs(1e-10 * scale, output_type="ndarray")
    parent = np.arange(len(P))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for a, b in pairs:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    roots = np.array([find(i) for i in range(len(P))])
    keep, new_index = np.unique(roots, return_inverse=True)
    remap = np.full(verts.shape[0], -1, dtype=np.int64)
    remap[used] = new_index
    vertices = P[keep]
    cells = []
    for r in regions:
        loop = remap[r]
        # drop repeats produced by merging
        out = [int(v) for i, v in enumerate(loop) if v != loop[i - 1]]
        if len(out) > 1 and out[0] == out[-1]:
            out.pop()
        cells.append(out)
    vertices, cells = collapse_short_edges(vertices, cells, box, collapse_tol)
    mesh = PolygonalMesh(vertices, tuple(tuple(c) for c in cells), box)
    validate(mesh)
    return mesh


def _on_sides(p, box, tol):
    x0, y0, x1, y1 = box
    return {i for i, (c, v) in enumerate(((0, x0), (0, x1), (1, y0), (1, y1)))
            if abs(p[c] - v) <= tol}


def collapse_short_edges(vertices, cells, box, tol: float):
    """Merge the endpoints of edges shorter than ``tol`` times the adjacent cell diameters.

    Box corners never move and boundary vertices stay on their side.  A
    collapse is skipped when it would leave a cell with fewer than three
    vertices or break star-shapedness of an adjacent cell.
    """
    if tol <= 0.0:
        return vertices, cells
    x0, y0, x1, y1 = box
    eps = 1e-12 * max(x1 - x0, y1 - y0)
    V = np.array(vertices, dtype=float)
    cells = [list(c) for c in cells]
    rejected = set()
    changed = True
    while changed:
        changed = False
        diam = [np.sqrt(((V[c][:, None] - V[c][None]) ** 2).sum(-1)).max() for c in cells]
        owners = {}
        for ci, c in enumerate(cells):
            for i in range(len(c)):
                a, b = c[i], c[(i + 1) % len(c)]
                owners.setdefault((min(a, b), max(a, b)), []).append(ci)
        short = []
        for (a, b), cs in owners.items():
            ratio = np.hypot(*(V[a] - V[b])) / min(diam[ci] for ci in cs)
            if ratio < tol and (a, b) not in rejected:
                short.append((ratio, a, b))
        short.sort()
        vcells = {}
        for ci, c in enumerate(cells):
            for v in c:
                vcells.setdefault(v, set()).add(ci)
        dirty = set()
        for _, a, b in short:
            touched = sorted(vcells[a] | vcells[b])
            if dirty.intersection(touched):
                continue
            sa, sb = _on_sides(V[a], box, eps), _on_sides(V[b], box, eps)
            if (len(sa) == 2 and len(sb) == 2) or (sa and sb and not (sa & sb)):
                rejected.add((a, b))
                continue
            if len(sa) == 2 or (sa and not sb):
                target = V[a].copy()
            elif len(sb) == 2 or (sb and not sa):
                target = V[b].copy()
            else:
                target = 0.5 * (V[a] + V[b])
            trial = {}
            for ci in touched:
                c = [v if v != b else a for v in cells[ci]]
                trial[ci] = [v for i, v in enumerate(c) if v != c[i - 1]]
            if any(len(c) < 3 for c in trial.values()):
                rejected.add((a, b))
                continue
            Vt = V.copy()
            Vt[a] = target
            ok = True
            for c in trial.values():
                P = Vt[c]
                cen = polygon_centroid(P)
                e1, e2 = P - cen, np.roll(P, -1, axis=0) - cen
                if np.any(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0] <= 0.0):
                    ok = False
                    break
            if not ok:
                rejected.add((a, b))
                continue
            V = Vt
            for ci, c in trial.items():
                cells[ci] = c
            dirty.update(touched)
            changed = True
    used = sorted({v for c in cells for v in c})
    remap = {v: i for i, v in enumerate(used)}
    return V[used], [[remap[v] for v in c] for c in cells]


def write_mesh(mesh: PolygonalMesh, path) -> None:
    """JSON with coordinates in 17-significant-digit decimal form."""
    def num(x):
        return format(float(x), ".17g")

    verts = ",\n    ".join(f"[{num(x)}, {num(y)}]" for x, y in mesh.vertices)
    cells = ",\n    ".join(json.dumps([int(v) for v in c]) for c in mesh.cells)
    text = (
        "{\n"
        f'  "box": [{", ".join(num(b) for b in mesh.box)}],\n'
        f'  "vertices": [\n    {verts}\n  ],\n'
        f'  "cells": [\n    {cells}\n  ]\n'
        "}\n"
    )
    Path(path).write_text(text)


def read_mesh(path) -> PolygonalMesh:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise MeshError(f"{path}: not valid JSON ({exc})") from None
    return mesh_from_dict(data)


def mesh_from_dict(data) -> PolygonalMesh:
    if not isinstance(data, dict):
        raise MeshError("mesh document must be a JSON object")
    missing = {"box", "vertices", "cells"} - set(data)
    if missing:
        raise MeshError(f"mesh document lacks keys {sorted(missing)}")
    box = data["box"]
    if not (isinstance(box, list) and len(box) == 4 and all(isinstance(b, (int, float)) for b in box)):
        raise MeshError("'box' must be [x0, y0, x1, y1]")
    verts = data["vertices"]
    if not (isinstance(verts, list) and all(
            isinstance(v, list) and len(v) == 2 and all(isinstance(c, (int, float)) for c in v)
            for v in verts)):
        raise MeshError("'vertices' must be a list of [x, y] pairs")
    cells = data["cells"]
    if not isinstance(cells, list):
        raise MeshError("'cells' must be a list of vertex-index loops")
    for ci, c in enumerate(cells):
        if not (isinstance(c, list) and all(isinstance(v, int) and not isinstance(v, bool) for v in c)):
            raise MeshError(f"cell {ci}: loop must be a list of integer vertex indices")
        if len(set(c)) != len(c):
            raise MeshError(f"cell {ci}: duplicated vertex index in loop {c}")
        if c and (min(c) < 0 or max(c) >= len(verts)):
            raise MeshError(f"cell {ci}: vertex index out of range")
    mesh = PolygonalMesh(np.array(verts, dtype=float).reshape(-1, 2), tuple(tuple(c) for c in cells),
                         tuple(box))
    validate(mesh)
    return mesh
