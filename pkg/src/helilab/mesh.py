"""Triangle meshes with half-edge connectivity, discrete operators and file I/O.

Vertex roles: FREE vertices move during solves; BOUNDARY vertices are pinned to
their boundary-curve targets; ORIGIN marks the two copies of the origin double
point of Gamma (pinned as well, kept as distinct vertices in a disk).
"""
from __future__ import annotations

import csv
import json
import logging
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse import csgraph
from scipy.spatial import cKDTree

from .errors import ParseError, TopologyError

log = logging.getLogger(__name__)

FREE, BOUNDARY, ORIGIN = 0, 1, 2


class TriMesh:
    """Oriented triangle mesh with optional rotY pairing and per-vertex tags.

    `pair[i]` is the index of the vertex at rotY(x_i) (or i itself on the fixed
    point).  `tags` holds small integer axis labels used by the weld routines.
    """

    def __init__(self, vertices, faces, roles=None, pair=None, tags=None, meta=None, check=True):
        self.V = np.ascontiguousarray(vertices, dtype=float)
        self.F = np.ascontiguousarray(faces, dtype=np.int64)
        if self.V.ndim != 2 or self.V.shape[1] != 3 or self.F.ndim != 2 or self.F.shape[1] != 3:
            raise TopologyError("vertices must be (n,3) and faces (m,3)")
        n = len(self.V)
        if self.F.size and (self.F.min() < 0 or self.F.max() >= n):
            raise TopologyError("face index out of range")
        if roles is None:
            roles = np.where(self.boundary_vertex_mask_topological(), BOUNDARY, FREE)
        self.roles = np.asarray(roles, dtype=np.int8).copy()
        self.pair = None if pair is None else np.asarray(pair, dtype=np.int64).copy()
        self.tags = np.zeros(n, np.int8) if tags is None else np.asarray(tags, np.int8).copy()
        self.meta = dict(meta or {})
        self._he = None
        if check:
            self.check_integrity()

    # -- basic properties --------------------------------------------------
    @property
    def n_vertices(self) -> int:
        return len(self.V)

    @property
    def n_faces(self) -> int:
        return len(self.F)

    @property
    def fixed(self):
        return self.roles != FREE

    @property
    def interior(self):
        return np.flatnonzero(self.roles == FREE)

    def copy(self, vertices=None) -> "TriMesh":
        m = TriMesh.__new__(TriMesh)
        m.V = (self.V if vertices is None else np.asarray(vertices, float)).copy()
        m.F = self.F
        m.roles = self.roles.copy()
        m.pair = None if self.pair is None else self.pair.copy()
        m.tags = self.tags.copy()
        m.meta = dict(self.meta)
        m._he = self._he
        return m

    def edges(self):
        """Unique undirected edges (E, 2) and the number of faces per edge."""
        E = np.sort(np.concatenate([self.F[:, [0, 1]], self.F[:, [1, 2]], self.F[:, [2, 0]]]), axis=1)
        u, cnt = np.unique(E, axis=0, return_counts=True)
        return u, cnt

    def boundary_vertex_mask_topological(self):
        E, cnt = self.edges()
        mask = np.zeros(len(self.V), bool)
        mask[E[cnt == 1].ravel()] = True
        return mask

    # -- half-edge structure -------------------------------------------------
    def halfedges(self):
        if self._he is None:
            self._he = _build_halfedges(self.F, len(self.V))
        return self._he

    def check_integrity(self):
        he = self.halfedges()
        twin, nxt = he["twin"], he["next"]
        if np.any(twin[twin] != np.arange(len(twin))):
            raise TopologyError("twin(twin(e)) != e")
        nf = 3 * len(self.F)
        e = np.arange(nf)
        if np.any(nxt[nxt[nxt[e]]] != e):
            raise TopologyError("next^3(e) != e on a face")
        if np.any(he["src"][twin] != he["dst"]):
            raise TopologyError("inconsistent twin orientation")
        return True

    def boundary_loops(self):
        return self.halfedges()["loops"]

    def vertex_adjacency(self):
        n = len(self.V)
        E, _ = self.edges()
        A = sp.coo_matrix((np.ones(len(E)), (E[:, 0], E[:, 1])), shape=(n, n))
        return (A + A.T).tocsr()

    def n_components(self) -> int:
        return csgraph.connected_components(self.vertex_adjacency(), directed=False)[0]


def _build_halfedges(F, n):
    m = len(F)
    src = F.ravel()
    dst = F[:, [1, 2, 0]].ravel()
    nxt = (np.arange(3 * m).reshape(m, 3)[:, [1, 2, 0]]).ravel()
    key = np.minimum(src, dst).astype(np.int64) * n + np.maximum(src, dst)
    order = np.argsort(key, kind="stable")
    ks = key[order]
    _, start, cnt = np.unique(ks, return_index=True, return_counts=True)
    if np.any(cnt > 2):
        raise TopologyError("non-manifold edge (more than two faces)")
    twin = np.full(3 * m, -1, np.int64)
    two = start[cnt == 2]
    a, b = order[two], order[two + 1]
    if np.any(src[a] == src[b]):
        raise TopologyError("inconsistent face winding across an edge")
    twin[a], twin[b] = b, a
    # boundary half-edges
    lone = order[start[cnt == 1]]
    nb = len(lone)
    bsrc, bdst = dst[lone], src[lone]
    bid = 3 * m + np.arange(nb)
    twin[lone] = bid
    twin = np.concatenate([twin, lone])
    src_all = np.concatenate([src, bsrc])
    dst_all = np.concatenate([dst, bdst])
    face = np.concatenate([np.repeat(np.arange(m), 3), -np.ones(nb, np.int64)])
    start_at = {}
    for k, s in enumerate(bsrc):
        if s in start_at:
            raise TopologyError(f"boundary passes twice through vertex {s}")
        start_at[s] = bid[k]
    bnext = np.array([start_at[d] for d in bdst], dtype=np.int64) if nb else np.zeros(0, np.int64)
    nxt_all = np.concatenate([nxt, bnext])
    loops = []
    seen = np.zeros(nb, bool)
    for k in range(nb):
        if seen[k]:
            continue
        loop = []
        e = bid[k]
        while not seen[e - 3 * m]:
            seen[e - 3 * m] = True
            loop.append(int(src_all[e]))
            e = nxt_all[e]
        loops.append(loop)
    return dict(src=src_all, dst=dst_all, next=nxt_all, twin=twin, face=face, loops=loops)


# ---------------------------------------------------------------------------
# topology


def euler_characteristic(m: TriMesh) -> int:
    E, _ = m.edges()
    used = np.unique(m.F)
    return int(len(used) - len(E) + len(m.F))


def genus_with_boundary(m: TriMesh) -> int:
    if m.n_components() != 1:
        raise TopologyError("genus needs a connected mesh")
    chi = euler_characteristic(m)
    b = len(m.boundary_loops())
    two_g = 2 - b - chi
    if two_g % 2 or two_g < 0:
        raise TopologyError(f"chi={chi} inconsistent with {b} boundary loops")
    return two_g // 2


# ---------------------------------------------------------------------------
# discrete operators


def face_normals(X, F, unit=True):
    n = np.cross(X[F[:, 1]] - X[F[:, 0]], X[F[:, 2]] - X[F[:, 0]])
    if unit:
        n /= np.maximum(np.linalg.norm(n, axis=1), 1e-300)[:, None]
    return n


def face_areas(X, F):
    return 0.5 * np.linalg.norm(face_normals(X, F, unit=False), axis=1)


def total_area(X, F) -> float:
    return float(face_areas(X, F).sum())


def vertex_normals(X, F):
    fn = face_normals(X, F, unit=False)
    n = np.zeros_like(X)
    for k in range(3):
        np.add.at(n, F[:, k], fn)
    return n / np.maximum(np.linalg.norm(n, axis=1), 1e-300)[:, None]


def cotangents(X, F):
    """cot of the angle at each corner, shape (m, 3)."""
    out = np.empty((len(F), 3))
    for k in range(3):
        p, q, r = X[F[:, k]], X[F[:, (k + 1) % 3]], X[F[:, (k + 2) % 3]]
        u, w = q - p, r - p
        cr = np.linalg.norm(np.cross(u, w), axis=1)
        out[:, k] = np.einsum("ij,ij->i", u, w) / np.maximum(cr, 1e-300)
    return out


def cotan_laplacian(X, F, n=None):
    """Positive semidefinite stiffness L with grad(area) = L X."""
    n = len(X) if n is None else n
    c = cotangents(X, F)
    I = np.concatenate([F[:, 1], F[:, 2], F[:, 0]])
    J = np.concatenate([F[:, 2], F[:, 0], F[:, 1]])
    W = 0.5 * np.concatenate([c[:, 0], c[:, 1], c[:, 2]])
    off = sp.coo_matrix((np.concatenate([-W, -W]), (np.concatenate([I, J]), np.concatenate([J, I]))), shape=(n, n)).tocsr()
    d = -np.asarray(off.sum(axis=1)).ravel()
    return (off + sp.diags(d)).tocsr()


def lumped_mass(X, F, n=None):
    n = len(X) if n is None else n
    a = face_areas(X, F) / 3
    M = np.zeros(n)
    for k in range(3):
        np.add.at(M, F[:, k], a)
    return M


def mixed_voronoi_area(X, F):
    n = len(X)
    c = cotangents(X, F)
    A = face_areas(X, F)
    out = np.zeros(n)
    obtuse = c < 0  # cot < 0 means angle > 90
    any_obt = obtuse.any(axis=1)
    for k in range(3):
        i, j, l = F[:, k], F[:, (k + 1) % 3], F[:, (k + 2) % 3]
        # voronoi part: edges (i,j) opposite corner l and (i,l) opposite corner j
        eij = np.sum((X[j] - X[i]) ** 2, axis=1)
        eil = np.sum((X[l] - X[i]) ** 2, axis=1)
        vor = (eij * c[:, (k + 2) % 3] + eil * c[:, (k + 1) % 3]) / 8
        val = np.where(any_obt, np.where(obtuse[:, k], A / 2, A / 4), vor)
        np.add.at(out, i, val)
    return out


def mean_edge_length(X, F) -> float:
    E = np.concatenate([F[:, [0, 1]], F[:, [1, 2]], F[:, [2, 0]]])
    return float(np.linalg.norm(X[E[:, 0]] - X[E[:, 1]], axis=1).mean())


def triangle_quality(X, F):
    """4 sqrt(3) area / sum of squared edges: 1 for equilateral."""
    a = np.sum((X[F[:, 1]] - X[F[:, 0]]) ** 2, 1)
    b = np.sum((X[F[:, 2]] - X[F[:, 1]]) ** 2, 1)
    c = np.sum((X[F[:, 0]] - X[F[:, 2]]) ** 2, 1)
    return 4 * math.sqrt(3) * face_areas(X, F) / (a + b + c)


# ---------------------------------------------------------------------------
# curvature


@dataclass
class CurvatureField:
    mean_curvature_vector: np.ndarray
    normal: np.ndarray
    B: np.ndarray
    kappa: np.ndarray
    k1: np.ndarray
    k2: np.ndarray
    degenerate: np.ndarray

    def max_B(self, mask=None):
        ok = ~self.degenerate if mask is None else (~self.degenerate & mask)
        return float(np.nanmax(self.B[ok])) if ok.any() else float("nan")


def two_ring_pairs(m: TriMesh):
    A = m.vertex_adjacency()
    A2 = (A + A @ A).tocoo()
    keep = A2.row != A2.col
    return A2.row[keep], A2.col[keep]


def curvature_field(m: TriMesh) -> CurvatureField:
    X, F = m.V, m.F
    n = len(X)
    L = cotan_laplacian(X, F)
    Amix = np.maximum(mixed_voronoi_area(X, F), 1e-300)
    Hvec = -(L @ X) / (2 * Amix[:, None])
    N = vertex_normals(X, F)
    # tangent frames
    ref = np.where(np.abs(N[:, 0:1]) < 0.9, np.array([[1.0, 0, 0]]), np.array([[0, 1.0, 0]]))
    t1 = np.cross(N, ref)
    t1 /= np.linalg.norm(t1, axis=1)[:, None]
    t2 = np.cross(N, t1)
    i, j = two_ring_pairs(m)
    d = X[j] - X[i]
    ell = np.zeros(n)
    cnt = np.bincount(i, minlength=n)
    np.add.at(ell, i, np.linalg.norm(d, axis=1))
    ell = np.maximum(ell / np.maximum(cnt, 1), 1e-300)
    x = np.einsum("ij,ij->i", d, t1[i]) / ell[i]
    y = np.einsum("ij,ij->i", d, t2[i]) / ell[i]
    z = np.einsum("ij,ij->i", d, N[i]) / ell[i]
    Phi = np.stack([x * x, x * y, y * y, x, y], axis=1)
    G = np.zeros((n, 5, 5))
    g = np.zeros((n, 5))
    np.add.at(G, i, Phi[:, :, None] * Phi[:, None, :])
    np.add.at(g, i, Phi * z[:, None])
    ev = np.linalg.eigvalsh(G)
    degenerate = (cnt < 6) | (ev[:, 0] <= 1e-10 * np.maximum(ev[:, -1], 1e-300))
    G[degenerate] = np.eye(5)
    coef = np.linalg.solve(G, g[..., None])[..., 0]
    a, b, c, fx, fy = coef.T
    a, b, c = a / ell, b / ell, c / ell
    E11, E12, E22 = 1 + fx * fx, fx * fy, 1 + fy * fy
    W = np.sqrt(1 + fx * fx + fy * fy)
    L11, L12, L22 = 2 * a / W, b / W, 2 * c / W
    det1 = E11 * E22 - E12 * E12
    S11 = (E22 * L11 - E12 * L12) / det1
    S12 = (E22 * L12 - E12 * L22) / det1
    S21 = (E11 * L12 - E12 * L11) / det1
    S22 = (E11 * L22 - E12 * L12) / det1
    tr = S11 + S22
    det = S11 * S22 - S12 * S21
    disc = np.sqrt(np.maximum(tr * tr / 4 - det, 0))
    k1, k2 = tr / 2 + disc, tr / 2 - disc
    B = np.sqrt(np.maximum(tr * tr - 2 * det, 0))
    B[degenerate] = np.nan
    if degenerate.any():
        log.debug("curvature_field: %d degenerate stencils", int(degenerate.sum()))
    return CurvatureField(Hvec, N, B, B / math.sqrt(2), k1, k2, degenerate)


# ---------------------------------------------------------------------------
# builders


def grid_faces(idx):
    """Two triangles per quad of an index grid, consistently oriented."""
    a = idx[:-1, :-1].ravel()
    b = idx[:-1, 1:].ravel()
    c = idx[1:, 1:].ravel()
    d = idx[1:, :-1].ravel()
    return np.concatenate([np.stack([a, b, c], 1), np.stack([a, c, d], 1)])


def grid_mesh(P, **kw) -> TriMesh:
    """Mesh of a (n1, n2, 3) point grid."""
    n1, n2 = P.shape[:2]
    idx = np.arange(n1 * n2).reshape(n1, n2)
    return TriMesh(P.reshape(-1, 3), grid_faces(idx), **kw)


def helicoid_patch(u0, u1, v0, v1, nu, nv, meta=None) -> TriMesh:
    from .geometry import helicoid_point

    U, Vv = np.meshgrid(np.linspace(u0, u1, nu + 1), np.linspace(v0, v1, nv + 1), indexing="ij")
    return grid_mesh(helicoid_point(U, Vv), meta=meta)


def disk_mesh(radius: float = 1.0, n_rings: int = 20, center=(0.0, 0.0, 0.0)) -> TriMesh:
    """Concentric-ring triangulation of a flat disk with 6 n_rings^2 faces."""
    pts = [np.zeros(3)]
    ring_start = [0]
    for k in range(1, n_rings + 1):
        t = np.arange(6 * k) * 2 * np.pi / (6 * k)
        ring_start.append(len(pts))
        pts.extend(np.stack([radius * k / n_rings * np.cos(t), radius * k / n_rings * np.sin(t), 0 * t], 1))
    F = []
    for k in range(1, n_rings + 1):
        inner = [0] if k == 1 else list(range(ring_start[k - 1], ring_start[k - 1] + 6 * (k - 1)))
        outer = list(range(ring_start[k], ring_start[k] + 6 * k))
        ni, no = len(inner), len(outer)
        i = o = 0
        # merge two rings by angle
        while i < ni or o < no:
            ai = (i + 1) / ni if ni > 1 else 2.0
            ao = (o + 1) / no
            if o < no and (ao <= ai or i >= ni):
                F.append([inner[i % ni], outer[o], outer[(o + 1) % no]])
                o += 1
            else:
                F.append([inner[i % ni], outer[(o) % no], inner[(i + 1) % ni]])
                i += 1
        if k == 1:
            F = F[:6] if len(F) > 6 else F
    V = np.array(pts) + np.asarray(center, float)
    F = np.array(F)
    meta = {"boundary": ["circle", list(map(float, center)), float(radius)]}
    return TriMesh(V, F, meta=meta)


def annulus_mesh(radius_fn, z0, z1, n_phi, n_z) -> TriMesh:
    """Surface of revolution rho = radius_fn(z) between two boundary circles."""
    z = np.linspace(z0, z1, n_z + 1)
    phi = np.linspace(0, 2 * np.pi, n_phi, endpoint=False)
    rho = radius_fn(z)
    P = np.stack([rho[:, None] * np.cos(phi), rho[:, None] * np.sin(phi), np.broadcast_to(z[:, None], (n_z + 1, n_phi))], -1)
    idx = np.arange((n_z + 1) * n_phi).reshape(n_z + 1, n_phi)
    idx = np.concatenate([idx, idx[:, :1]], axis=1)
    return TriMesh(P.reshape(-1, 3), grid_faces(idx)[:, ::-1], meta={"boundary": ["revolution"]})


def icosphere(level: int = 2) -> TriMesh:
    t = (1 + math.sqrt(5)) / 2
    V = np.array([[-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0], [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
                  [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1]], float)
    F = np.array([[0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11], [1, 5, 9], [5, 11, 4], [11, 10, 2],
                  [10, 7, 6], [7, 1, 8], [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9], [4, 9, 5],
                  [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1]])
    m = TriMesh(V / np.linalg.norm(V, axis=1)[:, None], F)
    for _ in range(level):
        m = refine(m)
        m.V /= np.linalg.norm(m.V, axis=1)[:, None]
    return m


# ---------------------------------------------------------------------------
# refinement


def _project_boundary(meta, P, A, B):
    """Place new boundary midpoints on the exact boundary curve when known."""
    kind = (meta or {}).get("boundary")
    if not kind:
        return P
    if kind[0] == "circle":
        c = np.asarray(kind[1], float)
        d = P - c
        d[:, :2] *= kind[2] / np.maximum(np.hypot(d[:, 0], d[:, 1]), 1e-300)[:, None]
        return c + d
    if kind[0] == "revolution":
        # boundary circles about the z-axis: keep the endpoint radius
        r = 0.5 * (np.hypot(A[:, 0], A[:, 1]) + np.hypot(B[:, 0], B[:, 1]))
        out = P.copy()
        out[:, :2] *= (r / np.maximum(np.hypot(P[:, 0], P[:, 1]), 1e-300))[:, None]
        return out
    if kind[0] == "helicoid":
        R = kind[1]
        rA = np.hypot(A[:, 0], A[:, 1])
        rB = np.hypot(B[:, 0], B[:, 1])
        hel = (np.abs(rA - R) < 1e-9 * R) & (np.abs(rB - R) < 1e-9 * R) & (np.abs(A[:, 2] - B[:, 2]) > 1e-12)
        if hel.any():
            v = 0.5 * (A[hel, 2] + B[hel, 2])
            out = P.copy()
            for sgn in (1.0, -1.0):
                Q = np.stack([sgn * R * np.cos(v), sgn * R * np.sin(v), v], 1)
                close = np.linalg.norm(Q - P[hel], axis=1) < 0.5 * np.linalg.norm(A[hel] - B[hel], axis=1) + 1e-12
                sub = np.flatnonzero(hel)[close]
                out[sub] = Q[close]
            return out
    return P


def refine(m: TriMesh, strategy: str = "uniform") -> TriMesh:
    if strategy == "uniform":
        return _refine_uniform(m)
    if strategy == "longest-edge":
        return _refine_longest(m)
    raise ValueError(f"unknown refinement strategy {strategy!r}")


def _edge_midpoints(m, E, cnt):
    n = m.n_vertices
    mids = 0.5 * (m.V[E[:, 0]] + m.V[E[:, 1]])
    bnd = cnt == 1
    if bnd.any():
        mids[bnd] = _project_boundary(m.meta, mids[bnd], m.V[E[bnd, 0]], m.V[E[bnd, 1]])
    roles = np.where(bnd, BOUNDARY, FREE).astype(np.int8)
    # tags are bit masks; a boundary midpoint keeps the bits shared by its ends
    ta, tb = m.tags[E[:, 0]], m.tags[E[:, 1]]
    tags = np.where(bnd, ta & tb, 0).astype(np.int8)
    return mids, roles, tags


def _edge_lookup(E, n):
    key = E[:, 0].astype(np.int64) * n + E[:, 1]
    order = np.argsort(key)
    return key[order], order


def _find_edges(lookup, a, b, n):
    keys, order = lookup
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    q = lo.astype(np.int64) * n + hi
    pos = np.searchsorted(keys, q)
    pos = np.minimum(pos, len(keys) - 1)
    ok = keys[pos] == q
    return np.where(ok, order[pos], -1)


def _refine_uniform(m: TriMesh) -> TriMesh:
    n = m.n_vertices
    E, cnt = m.edges()
    look = _edge_lookup(E, n)
    mids, roles, tags = _edge_midpoints(m, E, cnt)
    F = m.F
    e01 = n + _find_edges(look, F[:, 0], F[:, 1], n)
    e12 = n + _find_edges(look, F[:, 1], F[:, 2], n)
    e20 = n + _find_edges(look, F[:, 2], F[:, 0], n)
    NF = np.concatenate([
        np.stack([F[:, 0], e01, e20], 1),
        np.stack([e01, F[:, 1], e12], 1),
        np.stack([e20, e12, F[:, 2]], 1),
        np.stack([e01, e12, e20], 1),
    ])
    pair = None
    if m.pair is not None:
        pe = _find_edges(look, m.pair[E[:, 0]], m.pair[E[:, 1]], n)
        if np.any(pe < 0):
            log.warning("refine: pairing not edge-compatible, dropped")
        else:
            pair = np.concatenate([m.pair, n + pe])
    out = TriMesh(np.concatenate([m.V, mids]), NF, roles=np.concatenate([m.roles, roles]), pair=pair,
                  tags=np.concatenate([m.tags, tags]), meta=m.meta, check=False)
    out.check_integrity()
    return out


def _refine_longest(m: TriMesh) -> TriMesh:
    """Conforming longest-edge bisection of every face (with closure)."""
    n = m.n_vertices
    E, cnt = m.edges()
    look = _edge_lookup(E, n)
    F = m.F
    fe = np.stack([_find_edges(look, F[:, k], F[:, (k + 1) % 3], n) for k in range(3)], 1)
    elen = np.linalg.norm(m.V[E[:, 0]] - m.V[E[:, 1]], axis=1)
    longest = fe[np.arange(len(F)), np.argmax(elen[fe] + 1e-12 * np.arange(3), axis=1)]
    marked = np.zeros(len(E), bool)
    marked[longest] = True
    mids, roles, tags = _edge_midpoints(m, E, cnt)
    mid_id = n + np.arange(len(E))
    out = []

    def split(tri, edges):
        # tri: 3 vertex ids, edges: 3 edge ids (-1 for sub-edges), split at first marked
        lens = [np.linalg.norm(_pos(tri[(k + 1) % 3]) - _pos(tri[k])) for k in range(3)]
        cand = [k for k in range(3) if edges[k] >= 0 and marked[edges[k]]]
        if not cand:
            out.append(tri)
            return
        k = max(cand, key=lambda q: lens[q])
        a, b, c = tri[k], tri[(k + 1) % 3], tri[(k + 2) % 3]
        ea, eb, ec = edges[k], edges[(k + 1) % 3], edges[(k + 2) % 3]
        mm = mid_id[ea]
        split([a, mm, c], [-1, -1, ec])
        split([mm, b, c], [-1, eb, -1])

    allpos = np.concatenate([m.V, mids])

    def _pos(i):
        return allpos[i]

    for f in range(len(F)):
        split(list(F[f]), list(fe[f]))
    used_mid = np.zeros(len(E), bool)
    used_mid[marked] = True
    NF = np.array(out)
    keep = np.concatenate([np.ones(n, bool), used_mid])
    remap = np.cumsum(keep) - 1
    pair = None
    if m.pair is not None:
        pe = _find_edges(look, m.pair[E[:, 0]], m.pair[E[:, 1]], n)
        if np.all(marked[pe[marked]]) and np.all(pe[marked] >= 0):
            pair_full = np.concatenate([m.pair, n + pe])
            pair = remap[pair_full[keep]]
    res = TriMesh(allpos[keep], remap[NF], roles=np.concatenate([m.roles, roles])[keep], pair=pair,
                  tags=np.concatenate([m.tags, tags])[keep], meta=m.meta, check=False)
    res.check_integrity()
    return res


# ---------------------------------------------------------------------------
# self intersection


def _seg_tri(S0, S1, A, B, C, eps=1e-12):
    """Segment-triangle crossing (Moller-Trumbore); returns mask and points."""
    d = S1 - S0
    e1, e2 = B - A, C - A
    p = np.cross(d, e2)
    det = np.einsum("ij,ij->i", e1, p)
    ok = np.abs(det) > eps * np.linalg.norm(e1, axis=1) * np.linalg.norm(e2, axis=1) * np.maximum(np.linalg.norm(d, axis=1), 1e-300)
    inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    s = S0 - A
    u = np.einsum("ij,ij->i", s, p) * inv
    q = np.cross(s, e1)
    v = np.einsum("ij,ij->i", d, q) * inv
    t = np.einsum("ij,ij->i", e2, q) * inv
    hit = ok & (u >= 0) & (v >= 0) & (u + v <= 1) & (t >= 0) & (t <= 1)
    return hit, S0 + t[:, None] * d


def _coplanar_overlap(P, Q, tol):
    """2D overlap test for coplanar triangle pairs (k, 3, 3)."""
    nrm = np.cross(P[:, 1] - P[:, 0], P[:, 2] - P[:, 0])
    ax = np.argmax(np.abs(nrm), axis=1)
    keep = np.array([[1, 2], [0, 2], [0, 1]])[ax]
    p = np.take_along_axis(P, keep[:, None, :], axis=2)
    q = np.take_along_axis(Q, keep[:, None, :], axis=2)

    def cross2(a, b):
        return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]

    hit = np.zeros(len(P), bool)
    for i in range(3):
        a0, a1 = p[:, i], p[:, (i + 1) % 3]
        for j in range(3):
            b0, b1 = q[:, j], q[:, (j + 1) % 3]
            d1 = cross2(a1 - a0, b0 - a0)
            d2 = cross2(a1 - a0, b1 - a0)
            d3 = cross2(b1 - b0, a0 - b0)
            d4 = cross2(b1 - b0, a1 - b0)
            hit |= (d1 * d2 < -tol) & (d3 * d4 < -tol)

    def inside(pt, tri):
        s = [cross2(tri[:, (k + 1) % 3] - tri[:, k], pt - tri[:, k]) for k in range(3)]
        return ((s[0] > tol) & (s[1] > tol) & (s[2] > tol)) | ((s[0] < -tol) & (s[1] < -tol) & (s[2] < -tol))

    for k in range(3):
        hit |= inside(q[:, k], p) | inside(p[:, k], q)
    hit |= inside(q.mean(axis=1), p)
    return hit


def _candidate_pairs(X, F, faces_a=None, faces_b=None):
    P = X[F]
    c = P.mean(axis=1)
    rad = np.linalg.norm(P - c[:, None], axis=2).max(axis=1)
    cls = np.floor(np.log2(np.maximum(rad, 1e-300))).astype(int)
    out = []
    classes = np.unique(cls)
    groups = {k: np.flatnonzero(cls == k) for k in classes}
    trees = {k: cKDTree(c[g]) for k, g in groups.items()}
    for ia, ka in enumerate(classes):
        for kb in classes[ia:]:
            ga, gb = groups[ka], groups[kb]
            r = rad[ga].max() + rad[gb].max()
            res = trees[ka].query_ball_tree(trees[kb], r)
            la = np.repeat(np.arange(len(ga)), [len(x) for x in res])
            lb = np.fromiter((y for x in res for y in x), dtype=np.int64, count=len(la))
            a, b = ga[la], gb[lb]
            if ka == kb:
                sel = a < b
                a, b = a[sel], b[sel]
            ok = np.linalg.norm(c[a] - c[b], axis=1) <= rad[a] + rad[b]
            out.append(np.stack([a[ok], b[ok]], 1))
    pairs = np.concatenate(out) if out else np.zeros((0, 2), np.int64)
    pairs = np.sort(pairs, axis=1)
    return np.unique(pairs, axis=0)


def self_intersects(m: TriMesh, tol: float = 1e-9):
    """Return (flag, witnesses) with witnesses [(face_a, face_b, point)].

    Pairs sharing a vertex position are skipped, which also covers the
    sanctioned contact at the origin double point.
    """
    X, F = m.V, m.F
    scale = max(np.ptp(X, axis=0).max(), 1e-300)
    q = np.round(X / (tol * scale)).astype(np.int64)
    _, pid = np.unique(q, axis=0, return_inverse=True)
    pid = pid.ravel()
    pairs = _candidate_pairs(X, F)
    if len(pairs) == 0:
        return False, []
    PF = pid[F]
    a, b = pairs[:, 0], pairs[:, 1]
    share = np.zeros(len(a), bool)
    for i in range(3):
        for j in range(3):
            share |= PF[a, i] == PF[b, j]
    a, b = a[~share], b[~share]
    witnesses = []
    if len(a) == 0:
        return False, witnesses
    P, Q = X[F[a]], X[F[b]]
    hit = np.zeros(len(a), bool)
    pts = np.zeros((len(a), 3))
    for T0, T1 in ((P, Q), (Q, P)):
        for k in range(3):
            h, p = _seg_tri(T0[:, k], T0[:, (k + 1) % 3], T1[:, 0], T1[:, 1], T1[:, 2])
            new = h & ~hit
            pts[new] = p[new]
            hit |= h
    # coplanar pairs
    nP = face_normals(X, F[a])
    dist = np.abs(np.einsum("kij,kj->ki", Q - P[:, :1], nP)).max(axis=1)
    cop = dist <= tol * scale
    if cop.any():
        ch = _coplanar_overlap(P[cop], Q[cop], (tol * scale) ** 2)
        idx = np.flatnonzero(cop)[ch]
        pts[idx[~hit[idx]]] = Q[idx[~hit[idx]]].mean(axis=1)
        hit[idx] = True
    for k in np.flatnonzero(hit):
        witnesses.append((int(a[k]), int(b[k]), pts[k].copy()))
    return bool(witnesses), witnesses


def write_witness_csv(path, witnesses):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["face_a", "face_b", "px", "py", "pz"])
        for fa, fb, p in witnesses:
            w.writerow([fa, fb, repr(float(p[0])), repr(float(p[1])), repr(float(p[2]))])


# ---------------------------------------------------------------------------
# file I/O


def export_mesh(m: TriMesh, path, fmt=None, scalars=None):
    path = Path(path)
    fmt = (fmt or path.suffix.lstrip(".")).lower()
    if fmt == "obj":
        _write_obj(m, path)
    elif fmt == "ply":
        _write_ply(m, path, scalars or {})
    else:
        raise ValueError(f"unknown mesh format {fmt!r}")


def import_mesh(path, fmt=None, with_scalars=False):
    path = Path(path)
    fmt = (fmt or path.suffix.lstrip(".")).lower()
    if fmt == "obj":
        m, sc = _read_obj(path), {}
    elif fmt == "ply":
        m, sc = _read_ply(path)
    else:
        raise ParseError(f"unknown mesh format {fmt!r}")
    return (m, sc) if with_scalars else m


def _write_obj(m, path):
    with open(path, "w") as fh:
        for p in m.V:
            fh.write(f"v {p[0]:.9g} {p[1]:.9g} {p[2]:.9g}\n")
        for f in m.F + 1:
            fh.write(f"f {f[0]} {f[1]} {f[2]}\n")


def _read_obj(path):
    V, F = [], []
    try:
        with open(path) as fh:
            for ln in fh:
                s = ln.split()
                if not s or s[0].startswith("#"):
                    continue
                if s[0] == "v":
                    V.append([float(t) for t in s[1:4]])
                elif s[0] == "f":
                    idx = [int(t.split("/")[0]) for t in s[1:]]
                    if len(idx) != 3:
                        raise ParseError("only triangles are supported")
                    F.append([i - 1 if i > 0 else len(V) + i for i in idx])
    except ValueError as exc:
        raise ParseError(f"malformed OBJ: {exc}") from exc
    if not V or not F:
        raise ParseError("OBJ without vertices or faces")
    try:
        return TriMesh(np.array(V), np.array(F))
    except TopologyError as exc:
        raise ParseError(str(exc)) from exc


def _write_ply(m, path, scalars):
    n = m.n_vertices
    fields = [("x", "<f8"), ("y", "<f8"), ("z", "<f8"), ("role", "u1"), ("tag", "i1")]
    if m.pair is not None:
        fields.append(("pair", "<i4"))
    for k in scalars:
        fields.append((k, "<f8"))
    vert = np.zeros(n, dtype=fields)
    vert["x"], vert["y"], vert["z"] = m.V[:, 0], m.V[:, 1], m.V[:, 2]
    vert["role"], vert["tag"] = m.roles, m.tags
    if m.pair is not None:
        vert["pair"] = m.pair
    for k, v in scalars.items():
        vert[k] = np.asarray(v, float)
    faces = np.zeros(m.n_faces, dtype=[("n", "u1"), ("i", "<i4", (3,))])
    faces["n"] = 3
    faces["i"] = m.F
    names = {"<f8": "double", "u1": "uchar", "i1": "char", "<i4": "int"}
    head = ["ply", "format binary_little_endian 1.0", f"comment meta {json.dumps(m.meta)}", f"element vertex {n}"]
    head += [f"property {names[t]} {k}" for k, t in fields]
    head += [f"element face {m.n_faces}", "property list uchar int vertex_indices", "end_header"]
    with open(path, "wb") as fh:
        fh.write(("\n".join(head) + "\n").encode("ascii"))
        fh.write(vert.tobytes())
        fh.write(faces.tobytes())


_PLY_TYPES = {"double": "<f8", "float64": "<f8", "float": "<f4", "float32": "<f4", "uchar": "u1", "uint8": "u1",
              "char": "i1", "int8": "i1", "int": "<i4", "int32": "<i4", "uint": "<u4", "uint32": "<u4",
              "short": "<i2", "ushort": "<u2"}


def _read_ply(path):
    with open(path, "rb") as fh:
        data = fh.read()
    end = data.find(b"end_header\n")
    if not data.startswith(b"ply") or end < 0:
        raise ParseError("not a PLY file")
    header = data[:end].decode("ascii", "replace").splitlines()
    body = data[end + len(b"end_header\n"):]
    fmt, meta, elems = None, {}, []
    try:
        for ln in header[1:]:
            s = ln.split()
            if not s:
                continue
            if s[0] == "format":
                fmt = s[1]
            elif s[0] == "comment" and len(s) > 2 and s[1] == "meta":
                meta = json.loads(ln.split("meta", 1)[1])
            elif s[0] == "element":
                elems.append([s[1], int(s[2]), []])
            elif s[0] == "property":
                if s[1] == "list":
                    elems[-1][2].append((s[4], ("list", _PLY_TYPES[s[2]], _PLY_TYPES[s[3]])))
                else:
                    elems[-1][2].append((s[2], _PLY_TYPES[s[1]]))
    except (KeyError, IndexError, ValueError) as exc:
        raise ParseError(f"bad PLY header: {exc}") from exc
    vert = dict(elems and [(e[0], e) for e in elems]).get("vertex")
    face = dict([(e[0], e) for e in elems]).get("face")
    if vert is None or face is None:
        raise ParseError("PLY needs vertex and face elements")
    if fmt == "binary_little_endian":
        vdt = np.dtype([(k, t) for k, t in vert[2]])
        nv = vert[1]
        if len(body) < nv * vdt.itemsize:
            raise ParseError("truncated PLY vertex block")
        va = np.frombuffer(body, vdt, count=nv)
        rest = body[nv * vdt.itemsize:]
        lt = face[2][0][1]
        if lt[0] != "list":
            raise ParseError("face element must be a list")
        fdt = np.dtype([("n", lt[1]), ("i", lt[2], (3,))])
        if len(rest) < face[1] * fdt.itemsize:
            raise ParseError("truncated PLY face block")
        fa = np.frombuffer(rest, fdt, count=face[1])
        if np.any(fa["n"] != 3):
            raise ParseError("only triangles are supported")
        F = fa["i"].astype(np.int64)
    elif fmt == "ascii":
        toks = body.decode("ascii").split()
        try:
            nv = vert[1]
            k = len(vert[2])
            vals = np.array(toks[: nv * k], float).reshape(nv, k)
            va = {name: vals[:, i] for i, (name, _) in enumerate(vert[2])}
            rest = np.array(toks[nv * k:], float).astype(np.int64).reshape(face[1], 4)
        except ValueError as exc:
            raise ParseError(f"malformed ascii PLY: {exc}") from exc
        if np.any(rest[:, 0] != 3):
            raise ParseError("only triangles are supported")
        F = rest[:, 1:]
    else:
        raise ParseError(f"unsupported PLY format {fmt!r}")
    names = [k for k, _ in vert[2]]
    V = np.stack([np.asarray(va["x"], float), np.asarray(va["y"], float), np.asarray(va["z"], float)], 1)
    roles = np.asarray(va["role"], np.int8) if "role" in names else None
    tags = np.asarray(va["tag"], np.int8) if "tag" in names else None
    pair = np.asarray(va["pair"], np.int64) if "pair" in names else None
    scalars = {k: np.asarray(va[k], float) for k in names if k not in ("x", "y", "z", "role", "tag", "pair")}
    try:
        m = TriMesh(V, F, roles=roles, pair=pair, tags=tags, meta=meta)
    except TopologyError as exc:
        raise ParseError(str(exc)) from exc
    return m, scalars
