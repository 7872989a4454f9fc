"""Schwarz reflection of D across the axes, screw tiling, and the closed geodesic."""
from __future__ import annotations

import csv
import heapq
import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse import csgraph
from scipy.spatial import cKDTree

from . import geometry as geo
from .errors import NoHandle, TopologyError, WeldMismatch
from .mesh import BOUNDARY, FREE, ORIGIN, TriMesh, euler_characteristic, mean_edge_length

log = logging.getLogger(__name__)

AXIS_BITS = 3  # TAG_X | TAG_Z


def _axis_mask(m: TriMesh, tol):
    if m.tags.any():
        return (m.tags & AXIS_BITS) != 0
    # untagged input: boundary vertices lying on X or Z
    bnd = m.boundary_vertex_mask_topological()
    V = m.V
    onz = np.hypot(V[:, 0], V[:, 1]) <= tol
    onx = (np.abs(V[:, 1]) <= tol) & (np.abs(V[:, 2]) <= tol)
    return bnd & (onz | onx)


def weld(V, F, candidates, tol):
    """Merge candidate vertices closer than tol; returns (V, F, old->new map)."""
    n = len(V)
    idx = np.flatnonzero(candidates)
    pairs = cKDTree(V[idx]).query_pairs(tol, output_type="ndarray") if len(idx) else np.zeros((0, 2), int)
    G = sp.coo_matrix((np.ones(len(pairs)), (idx[pairs[:, 0]], idx[pairs[:, 1]])), shape=(n, n))
    _, lab = csgraph.connected_components(G, directed=False)
    # keep first occurrence order
    _, first, inv = np.unique(lab, return_index=True, return_inverse=True)
    order = np.argsort(first)
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    new = rank[inv]
    V2 = np.zeros((len(order), 3))
    V2[new] = V
    return V2, new[F], new


def _check_disk(D: TriMesh):
    if D.n_components() != 1:
        raise WeldMismatch(f"input has {D.n_components()} components; a connected disk is required")
    chi = euler_characteristic(D)
    loops = len(D.boundary_loops())
    if chi != 1 or loops != 1:
        raise WeldMismatch(f"input is not a disk (chi={chi}, boundary loops={loops})")


def assemble_M(D: TriMesh, tol: float | None = None) -> TriMesh:
    """M = D + rotZ(D), welded along X and Z with the origin copies merged crosswise."""
    _check_disk(D)
    R = float(D.meta.get("R", np.hypot(D.V[:, 0], D.V[:, 1]).max()))
    tol = 1e-9 * R if tol is None else tol
    n = D.n_vertices
    V2 = geo.rot_z_points(D.V)
    F2 = D.F[:, ::-1] + n  # rotZ reverses the orientation of H
    V = np.concatenate([D.V, V2])
    F = np.concatenate([D.F, F2])
    ax = _axis_mask(D, 10 * tol)
    cand = np.concatenate([ax, ax])
    # every axis vertex needs exactly one counterpart in the other copy (origins: all four)
    tree = cKDTree(V2[ax])
    d, _ = tree.query(D.V[ax])
    if d.size == 0 or d.max() > tol:
        raise WeldMismatch(f"axis vertices do not correspond (max gap {d.max(initial=np.inf):.3e})")
    Vw, Fw, new = weld(V, F, cand, tol)
    n0 = np.count_nonzero(np.linalg.norm(Vw, axis=1) <= tol)
    if n0 != 1:
        raise WeldMismatch(f"origin copies did not merge into one vertex ({n0})")
    roles = np.full(len(Vw), FREE, np.int8)
    tags = np.zeros(len(Vw), np.int8)
    tags[new] = np.concatenate([D.tags, D.tags])
    pair = None
    if D.pair is not None:
        p = np.concatenate([D.pair, D.pair + n])
        pair = np.zeros(len(Vw), np.int64)
        pair[new] = new[p]
    meta = dict(D.meta)
    meta.update(kind="M", boundary=["helicoid", R])
    try:
        M = TriMesh(Vw, Fw, roles=roles, pair=pair, tags=tags, meta=meta)
    except TopologyError as exc:
        raise WeldMismatch(f"weld produced a non-manifold mesh: {exc}") from exc
    M.roles[M.boundary_vertex_mask_topological()] = BOUNDARY
    loops = len(M.boundary_loops())
    if loops != 1:
        raise WeldMismatch(f"assembled surface has {loops} boundary loops")
    log.info("assemble_M: %d vertices, %d faces, chi=%d", M.n_vertices, M.n_faces, euler_characteristic(M))
    return M


def tile_screw(M: TriMesh, h: float, n_copies: int, tol: float | None = None) -> TriMesh:
    """Union of screw(2 h k) M for |k| <= n_copies // 2, welded along the lines z = (2k+1) h."""
    if n_copies < 1 or n_copies % 2 == 0:
        raise TopologyError("n_copies must be odd and positive")
    if n_copies == 1:
        return M.copy()
    R = float(M.meta.get("R", np.hypot(M.V[:, 0], M.V[:, 1]).max()))
    tol = 1e-9 * R if tol is None else tol
    K = n_copies // 2
    n = M.n_vertices
    bnd = M.boundary_vertex_mask_topological()
    z = M.V[:, 2]
    line = bnd & ((np.abs(z - h) <= tol) | (np.abs(z + h) <= tol))
    Vs, Fs, cand, tags = [], [], [], []
    for j, k in enumerate(range(-K, K + 1)):
        Vs.append(geo.apply_symmetry(geo.screw(2 * h * k), M.V))
        Fs.append(M.F + j * n)
        c = line.copy()
        if k == -K:
            c &= z > 0
        if k == K:
            c &= z < 0
        cand.append(c)
        tags.append(M.tags)
    V, F = np.concatenate(Vs), np.concatenate(Fs)
    Vw, Fw, new = weld(V, F, np.concatenate(cand), tol)
    expect = n_copies * n - 2 * K * np.count_nonzero(line & (z > 0))
    if len(Vw) != expect:
        raise WeldMismatch(f"screw weld merged {n_copies * n - len(Vw)} vertices, expected {n_copies * n - expect}")
    t = np.zeros(len(Vw), np.int8)
    t[new] = np.concatenate(tags)
    meta = dict(M.meta)
    meta.update(kind="N", copies=n_copies, h=float(h))
    meta.pop("boundary", None)
    try:
        N = TriMesh(Vw, Fw, tags=t, meta=meta)
    except TopologyError as exc:
        raise WeldMismatch(f"screw weld is non-manifold: {exc}") from exc
    return N


def tiled_euler_characteristic(chi_M: int, n_copies: int) -> int:
    """Each weld along one segment removes one from chi."""
    return n_copies * chi_M - (n_copies - 1)


# ---------------------------------------------------------------------------
# closed geodesic


@dataclass
class Geodesic:
    points: np.ndarray
    length: float
    dijkstra_length: float
    midpoint: np.ndarray
    midpoint_error: float
    symmetry_error: float

    def arclength(self):
        return np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(self.points, axis=0), axis=1))])

    def write_csv(self, path):
        s = self.arclength()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "y", "z", "s"])
            for p, si in zip(self.points, s):
                w.writerow([repr(float(p[0])), repr(float(p[1])), repr(float(p[2])), repr(float(si))])


def closest_point_on_triangles(p, A, B, C):
    """Closest points from p (3,) to each triangle (A, B, C) (k, 3); returns (points, dist)."""
    ab, ac, ap = B - A, C - A, p - A
    d1, d2 = np.einsum("ij,ij->i", ab, ap), np.einsum("ij,ij->i", ac, ap)
    bp = p - B
    d3, d4 = np.einsum("ij,ij->i", ab, bp), np.einsum("ij,ij->i", ac, bp)
    cp = p - C
    d5, d6 = np.einsum("ij,ij->i", ab, cp), np.einsum("ij,ij->i", ac, cp)
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2
    den = np.where(np.abs(va + vb + vc) > 1e-300, va + vb + vc, 1e-300)
    v = vb / den
    w = vc / den
    out = A + v[:, None] * ab + w[:, None] * ac
    # edge and vertex regions
    with np.errstate(divide="ignore", invalid="ignore"):
        m = (vc <= 0) & (d1 >= 0) & (d3 <= 0)
        t = d1 / (d1 - d3)
        out[m] = (A + t[:, None] * ab)[m]
        m2 = (vb <= 0) & (d2 >= 0) & (d6 <= 0)
        t = d2 / (d2 - d6)
        out[m2] = (A + t[:, None] * ac)[m2]
        m3 = (va <= 0) & ((d4 - d3) >= 0) & ((d5 - d6) >= 0)
        t = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        out[m3] = (B + t[:, None] * (C - B))[m3]
    out[(d1 <= 0) & (d2 <= 0)] = A[(d1 <= 0) & (d2 <= 0)]
    out[(d3 >= 0) & (d4 <= d3)] = B[(d3 >= 0) & (d4 <= d3)]
    out[(d6 >= 0) & (d5 <= d6)] = C[(d6 >= 0) & (d5 <= d6)]
    dist = np.linalg.norm(out - p, axis=1)
    return out, dist


def _vertex_faces(m: TriMesh):
    n = m.n_vertices
    rows = m.F.ravel()
    cols = np.repeat(np.arange(m.n_faces), 3)
    return sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, m.n_faces))


def _resample(P, k):
    s = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(P, axis=0), axis=1))])
    t = np.linspace(0, s[-1], k)
    return np.stack([np.interp(t, s, P[:, j]) for j in range(3)], 1)


def _origin_pair(D: TriMesh):
    o = np.flatnonzero(D.roles == ORIGIN)
    if len(o) != 2:
        near = np.flatnonzero(D.fixed & (np.linalg.norm(D.V, axis=1) <= 1e-9 * max(1.0, np.abs(D.V).max())))
        o = near
    if len(o) != 2:
        raise NoHandle(f"expected two origin vertices, found {len(o)}")
    return int(o[0]), int(o[1])


def shortest_closed_geodesic(D: TriMesh, iters: int = 200, n_points: int = 200, step: float = 0.5) -> Geodesic:
    """Loop through the origin: shortest interior edge path O_a -> O_b, then on-surface shortening."""
    oa, ob = _origin_pair(D)
    keep = D.roles == FREE
    keep[[oa, ob]] = True
    E, _ = D.edges()
    E = E[keep[E[:, 0]] & keep[E[:, 1]]]
    w = np.linalg.norm(D.V[E[:, 0]] - D.V[E[:, 1]], axis=1)
    n = D.n_vertices
    G = sp.coo_matrix((w, (E[:, 0], E[:, 1])), shape=(n, n)).tocsr()
    dist, pred = csgraph.dijkstra(G, directed=False, indices=oa, return_predecessors=True)
    if not np.isfinite(dist[ob]):
        raise NoHandle("origin vertices are connected only through the boundary")
    path = [ob]
    while path[-1] != oa:
        path.append(int(pred[path[-1]]))
    path = path[::-1]
    d_len = float(dist[ob])
    # on-surface shortening
    VF = _vertex_faces(D).tocsr()
    FV = D.F
    X = D.V
    P = _resample(X[path], n_points)
    cent = X[FV].mean(1)
    tree = cKDTree(cent)
    _, face = tree.query(P)
    ell = mean_edge_length(X, FV)
    for it in range(iters):
        Q = P.copy()
        Q[1:-1] = P[1:-1] + step * (0.5 * (P[:-2] + P[2:]) - P[1:-1])
        for i in range(1, len(P) - 1):
            vs = FV[face[i]]
            cand = np.unique(VF[vs].indices)
            cp, dd = closest_point_on_triangles(Q[i], X[FV[cand, 0]], X[FV[cand, 1]], X[FV[cand, 2]])
            j = int(np.argmin(dd))
            Q[i] = cp[j]
            face[i] = cand[j]
        P = Q
        if (it + 1) % 20 == 0 and it + 1 < iters:
            P = _resample(P, n_points)
            for i in range(1, len(P) - 1):
                vs = FV[face[i]]
                cand = np.unique(VF[vs].indices)
                cp, dd = closest_point_on_triangles(P[i], X[FV[cand, 0]], X[FV[cand, 1]], X[FV[cand, 2]])
                j = int(np.argmin(dd))
                if dd[j] > 2 * ell:
                    _, fj = tree.query(P[i])
                    face[i] = fj
                    continue
                P[i] = cp[j]
                face[i] = cand[j]
    seg = np.linalg.norm(np.diff(P, axis=0), axis=1)
    length = float(seg.sum())
    s = np.concatenate([[0.0], np.cumsum(seg)])
    mid = np.array([np.interp(length / 2, s, P[:, j]) for j in range(3)])
    fv = D.meta.get("fixed_vertex")
    if fv is not None:
        target = D.V[int(fv)]
    else:
        target = np.array([0.0, mid[1], 0.0])
    mid_err = float(np.linalg.norm(mid - target))
    img = geo.rot_y_points(P)[::-1]
    sym = float(np.max(cKDTree(P).query(img)[0]))
    log.info("geodesic: dijkstra %.6g, shortened %.6g, midpoint error %.3e", d_len, length, mid_err)
    return Geodesic(P, length, d_len, mid, mid_err, sym)
