"""Checks on constructed surfaces: tangent censuses, slices, level sets, asymptotics."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse import csgraph

from . import geometry as geo
from .errors import LevelOnVertex, NonTransverse, SheetAmbiguity
from .mesh import FREE, TriMesh, curvature_field, mean_edge_length, vertex_normals

log = logging.getLogger(__name__)

TAG_X, TAG_Z = 1, 2


# ---------------------------------------------------------------------------
# helpers


def ring_mask(m: TriMesh, seed_mask, rings: int):
    """Vertices within `rings` edge hops of seed_mask."""
    A = m.vertex_adjacency()
    cur = np.asarray(seed_mask, bool).copy()
    for _ in range(rings):
        cur = cur | ((A @ cur.astype(float)) > 0)
    return cur


def continuous_theta(P):
    """Angle function on closure(H+) \\ Z; nan on the axis."""
    r, theta, w = geo.box_coordinates(P)
    return np.where(w >= 1.5, theta - 2 * np.pi, theta), np.where(w >= 1.5, w - 2, w)


def axis_vertices(m: TriMesh, tol=None):
    """(on Z, on X) vertex masks from tags, or from positions when untagged."""
    if m.tags.any():
        return (m.tags & TAG_Z) != 0, (m.tags & TAG_X) != 0
    tol = 1e-9 * max(1.0, np.abs(m.V).max()) if tol is None else tol
    V = m.V
    onz = np.hypot(V[:, 0], V[:, 1]) <= tol
    onx = (np.abs(V[:, 1]) <= tol) & (np.abs(V[:, 2]) <= tol)
    return onz, onx


def _face_clusters(m: TriMesh, faces):
    """Group faces that share a vertex; returns list of face index arrays."""
    if len(faces) == 0:
        return []
    k = len(faces)
    rows = np.repeat(np.arange(k), 3)
    G = sp.csr_matrix((np.ones(3 * k), (rows, m.F[faces].ravel())), shape=(k, m.n_vertices))
    C = (G @ G.T).tocsr()
    n, lab = csgraph.connected_components(C, directed=False)
    return [faces[lab == i] for i in range(n)]


# ---------------------------------------------------------------------------
# vertical tangent census


@dataclass
class Cluster:
    direction: int
    faces: np.ndarray
    position: np.ndarray
    theta: float
    z: float
    f_sign: int
    on_axis: bool = False
    near_degenerate: bool = False


@dataclass
class CensusReport:
    n_dirs: int
    angles: np.ndarray
    interior: list            # per direction: list of Cluster
    axis_counts: np.ndarray   # per direction: clusters discarded at the boundary / axes
    max_interior: int = 0
    z_bound_ok: bool = True
    pairs_opposite_ok: bool = True
    passed: bool = True

    def counts(self):
        return np.array([len(c) for c in self.interior])

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["direction", "angle", "x", "y", "z", "theta", "f_sign", "on_axis"])
            for k, cl in enumerate(self.interior):
                for c in cl:
                    w.writerow([k, repr(float(self.angles[k])), *[repr(float(v)) for v in c.position],
                                repr(float(c.theta)), c.f_sign, int(c.on_axis)])


def _critical_faces(N, F, q):
    """Faces whose vertex-normal spherical triangle contains +q or -q; margin per face."""
    n0, n1, n2 = N[F[:, 0]], N[F[:, 1]], N[F[:, 2]]
    c01, c12, c20 = np.cross(n0, n1), np.cross(n1, n2), np.cross(n2, n0)
    s = np.einsum("ij,ij->i", n0, c12)
    out = np.zeros(len(F), bool)
    margin = np.full(len(F), np.inf)
    for sgn in (1.0, -1.0):
        qq = sgn * q
        a, b, c = c01 @ qq, c12 @ qq, c20 @ qq
        hemi = (n0 + n1 + n2) @ qq > 0
        inside = hemi & (((a >= 0) & (b >= 0) & (c >= 0)) | ((a <= 0) & (b <= 0) & (c <= 0)))
        inside &= np.abs(s) > 0
        out |= inside
        mg = np.minimum(np.minimum(np.abs(a), np.abs(b)), np.abs(c))
        margin = np.where(inside, np.minimum(margin, mg), margin)
    return out, margin


def vertical_tangent_census(D: TriMesh, n_dirs: int = 180, exclude_rings: int = 2,
                            z_slack: float = 0.1, offset: float = 0.0) -> CensusReport:
    """Interior critical points of f = a x + b y over a half-circle of directions (a, b)."""
    if n_dirs < 36:
        raise ValueError("n_dirs must be >= 36")
    N = vertex_normals(D.V, D.F)
    excl = ring_mask(D, D.fixed, exclude_rings)
    bad_face = excl[D.F].any(1)
    angles = offset + np.pi * np.arange(n_dirs) / n_dirs
    interior, axis_counts = [], np.zeros(n_dirs, int)
    ell = mean_edge_length(D.V, D.F)
    for k, phi in enumerate(angles):
        a, b = math.cos(phi), math.sin(phi)
        q = np.array([a, b, 0.0])
        crit, margin = _critical_faces(N, D.F, q)
        clusters = _face_clusters(D, np.flatnonzero(crit))
        found = []
        for fc in clusters:
            if bad_face[fc].any():
                axis_counts[k] += 1
                continue
            P = D.V[D.F[fc]].reshape(-1, 3).mean(0)
            th, _ = continuous_theta(P[None])
            fval = a * P[0] + b * P[1]
            found.append(Cluster(k, fc, P, float(th[0]), float(P[2]), int(np.sign(fval)),
                                 near_degenerate=bool(margin[fc].min() < 1e-6)))
        interior.append(found)
    rep = CensusReport(n_dirs, angles, interior, axis_counts)
    counts = rep.counts()
    rep.max_interior = int(counts.max(initial=0))
    rep.z_bound_ok = all(abs(c.z) < 2 * np.pi + z_slack for cl in interior for c in cl)
    rep.pairs_opposite_ok = all(len(cl) != 2 or cl[0].f_sign * cl[1].f_sign < 0 for cl in interior)
    rep.passed = rep.max_interior <= 2 and rep.z_bound_ok and rep.pairs_opposite_ok
    log.info("census: %d directions, max interior clusters %d", n_dirs, rep.max_interior)
    return rep


def slab_census(Nm: TriMesh, z_lo: float, n_dirs: int = 180, exclude_rings: int = 2,
                offset: float = 0.0, return_detail: bool = False):
    """Max over directions of tangency clusters with the vertical plane, inside (z_lo, z_lo + pi)."""
    Nrm = vertex_normals(Nm.V, Nm.F)
    bnd = Nm.boundary_vertex_mask_topological()
    excl = ring_mask(Nm, bnd, exclude_rings)
    onz, _ = axis_vertices(Nm)
    bad = excl[Nm.F].any(1)
    axisf = onz[Nm.F].any(1)
    total = np.zeros(n_dirs, int)
    off_axis = np.zeros(n_dirs, int)
    for k in range(n_dirs):
        phi = offset + np.pi * k / n_dirs
        # tangent plane parallel to V_phi  <=>  normal along (-sin, cos, 0)
        q = np.array([-math.sin(phi), math.cos(phi), 0.0])
        crit, _ = _critical_faces(Nrm, Nm.F, q)
        for fc in _face_clusters(Nm, np.flatnonzero(crit)):
            if bad[fc].any():
                continue
            z = Nm.V[Nm.F[fc]].reshape(-1, 3)[:, 2].mean()
            if not (z_lo < z < z_lo + np.pi):
                continue
            total[k] += 1
            if not axisf[fc].any():
                off_axis[k] += 1
    if return_detail:
        return int(total.max(initial=0)), dict(total=total, off_axis=off_axis)
    return int(total.max(initial=0))


# ---------------------------------------------------------------------------
# zero sets on triangle meshes


@dataclass
class Curve:
    points: np.ndarray
    closed: bool
    ends: tuple          # node keys of the two ends (None when closed)
    tag: str = "curve"


def _zero_set(m: TriMesh, g, special, join_special: bool):
    """Polylines of {g = 0}.  `special` vertices are on the set by definition.

    Regular vertices must have g != 0.  Returns (curves, node info).
    """
    F = m.F
    V = m.V
    pos = {}
    segs = []

    def ekey(a, b):
        a, b = (a, b) if a < b else (b, a)
        k = ("e", a, b)
        if k not in pos:
            t = g[a] / (g[a] - g[b])
            pos[k] = V[a] + t * (V[b] - V[a])
        return k

    def vkey(i):
        k = ("v", int(i))
        pos.setdefault(k, V[i].copy())
        return k

    sp_f = special[F]
    sgn = np.sign(g)[F]
    cand = np.flatnonzero(sp_f.any(1) | (sgn.min(1) < 0) & (sgn.max(1) > 0))
    for fi in cand:
        f = F[fi]
        s = sp_f[fi]
        ns = int(s.sum())
        if ns == 0:
            keys = []
            for a, b in ((f[0], f[1]), (f[1], f[2]), (f[2], f[0])):
                if (g[a] < 0) != (g[b] < 0):
                    keys.append(ekey(a, b))
            if len(keys) == 2:
                segs.append((keys[0], keys[1]))
        elif ns == 1:
            i = int(np.flatnonzero(s)[0])
            p, a, b = f[i], f[(i + 1) % 3], f[(i + 2) % 3]
            if (g[a] < 0) != (g[b] < 0):
                segs.append((vkey(p), ekey(a, b)))
        elif ns == 2:
            i = int(np.flatnonzero(~s)[0])
            a, b = f[(i + 1) % 3], f[(i + 2) % 3]
            segs.append((vkey(a), vkey(b)) + ("special-edge",))
    return segs, pos


def _link(segs, pos, joinable):
    """Chain segments into polylines; nodes with degree != 2 or non-joinable end chains."""
    adj = {}
    for k, s in enumerate(segs):
        for n in s[:2]:
            adj.setdefault(n, []).append(k)
    used = np.zeros(len(segs), bool)
    curves = []

    def is_end(n):
        return len(adj[n]) != 2 or not joinable(n)

    def walk(start, k0):
        nodes = [start]
        n, k = start, k0
        while True:
            used[k] = True
            a, b = segs[k][:2]
            n = b if a == n else a
            nodes.append(n)
            if is_end(n):
                return nodes, False
            nxt = [j for j in adj[n] if not used[j]]
            if not nxt:
                return nodes, n == start
            k = nxt[0]

    for n in list(adj):
        if is_end(n):
            for k in adj[n]:
                if not used[k]:
                    nodes, _ = walk(n, k)
                    curves.append(Curve(np.array([pos[x] for x in nodes]), False, (nodes[0], nodes[-1])))
    for k in range(len(segs)):
        if not used[k]:
            n0 = segs[k][0]
            nodes, closed = walk(n0, k)
            curves.append(Curve(np.array([pos[x] for x in nodes]), True, (None, None)))
    return curves


# ---------------------------------------------------------------------------
# axis slices


@dataclass
class SliceReport:
    theta: float
    curves: list
    n_curves: int
    z_endpoints: int
    boundary_endpoints: int
    graph_property: bool
    within_bounds: bool


def axis_slice_analysis(D: TriMesh, theta: float, tol: float = 1e-12) -> SliceReport:
    """D intersected with W = {p in H+ : angle(p) = theta}."""
    onz, _ = axis_vertices(D)
    th, _ = continuous_theta(D.V)
    g = th - theta
    regular = ~onz
    if np.any(np.abs(g[regular]) <= tol):
        raise NonTransverse(f"slice theta={theta:.12g} passes through a vertex")
    g = np.where(onz, 0.0, g)
    segs, pos = _zero_set(D, g, onz, join_special=False)
    segs = [s for s in segs if len(s) == 2]
    curves = _link(segs, pos, joinable=lambda n: n[0] == "e")
    bnd = D.boundary_vertex_mask_topological()
    z_end = b_end = 0
    graph = True
    for c in curves:
        for n in c.ends:
            if n is None:
                continue
            if n[0] == "v" and onz[n[1]]:
                z_end += 1
            elif n[0] == "e" and bnd[n[1]] and bnd[n[2]]:
                b_end += 1
        r = np.hypot(c.points[:, 0], c.points[:, 1])
        dr = np.diff(r)
        scale = max(r.max(), 1.0) * 1e-9
        graph &= bool(np.all(dr >= -scale) or np.all(dr <= scale))
    rep = SliceReport(theta, curves, len(curves), z_end, b_end, bool(graph and len(curves) > 0),
                      len(curves) <= 3 and z_end <= 4)
    log.info("slice theta=%.4f: %d curves, %d Z endpoints, graph=%s", theta, rep.n_curves, z_end, rep.graph_property)
    return rep


# ---------------------------------------------------------------------------
# level sets


@dataclass
class LevelSetReport:
    c: float
    components: list
    x_crossings: int
    singular_points: list

    def count(self, tag=None, closed=None):
        return sum(1 for k in self.components if (tag is None or k.tag == tag)
                   and (closed is None or k.closed == closed))


def level_set(Mm: TriMesh, c: float, rim_band: float | None = None, tol: float = 1e-12) -> LevelSetReport:
    """Components of Mm ∩ {z = c}; X appears as its own component when c = 0."""
    z = Mm.V[:, 2] - c
    _, onx = axis_vertices(Mm)
    special = onx & (np.abs(z) <= tol) if abs(c) <= tol else np.zeros(len(z), bool)
    hit = ~special & (np.abs(z) <= tol)
    if hit.any():
        if not special.any():
            raise LevelOnVertex(f"level {c!r} hits a vertex; perturb c")
        # at c = 0 symmetric vertices (the rotY-fixed point) sit on the level: nudge symbolically
        z = np.where(hit, 1e-300, z)
    z = np.where(special, 0.0, z)
    segs, pos = _zero_set(Mm, z, special, join_special=True)
    x_segs = sorted({tuple(sorted(s[:2])) for s in segs if len(s) == 3})
    segs = [s for s in segs if len(s) == 2]

    def joinable(n):
        return True

    curves = _link(segs, pos, joinable)
    crossings = []
    for n, k in _degree(segs).items():
        if n[0] == "v" and special[n[1]] and k == 2:
            crossings.append(pos[n])
    comps = []
    if x_segs:
        for cx in _link(x_segs, pos, joinable):
            cx.tag = "x-axis"
            comps.append(cx)
    bnd = Mm.boundary_vertex_mask_topological()
    R = float(Mm.meta.get("R", np.hypot(Mm.V[:, 0], Mm.V[:, 1]).max()))
    band = rim_band if rim_band is not None else 3 * mean_edge_length(Mm.V, Mm.F)
    for cv in curves:
        if not cv.closed:
            on_rim = all(n is not None and n[0] == "e" and bnd[n[1]] and bnd[n[2]] for n in cv.ends)
            r = np.hypot(cv.points[:, 0], cv.points[:, 1])
            if on_rim and r.min() > R - band:
                cv.tag = "rim"
        comps.append(cv)
    rep = LevelSetReport(c, comps, len(crossings), crossings)
    log.info("level %.6g: %d components (%d rim), %d X crossings", c, len(comps), rep.count("rim"), rep.x_crossings)
    return rep


def _degree(segs):
    d = {}
    for s in segs:
        for n in s[:2]:
            d[n] = d.get(n, 0) + 1
    return d


# ---------------------------------------------------------------------------
# asymptotics


@dataclass
class PitchReport:
    slope: float
    residual: float
    radii: np.ndarray
    slopes: np.ndarray
    ring_error: float


def pitch_estimate(D: TriMesh, r_min: float, n_radii: int = 12) -> PitchReport:
    """Fit z against the angle on the upper sheet along circles r in [r_min, R)."""
    R = float(D.meta.get("R", np.hypot(D.V[:, 0], D.V[:, 1]).max()))
    h = float(D.meta.get("h", np.nan))
    rho = np.hypot(D.V[:, 0], D.V[:, 1])
    ell = mean_edge_length(D.V, D.F)
    radii = np.linspace(r_min, R - 0.5 * ell, n_radii)
    slopes, resid, ring = [], 0.0, 0.0
    for r0 in radii:
        g = rho - r0
        if np.any(np.abs(g) <= 1e-12):
            g = g + 1e-9
        segs, pos = _zero_set(D, g, np.zeros(len(g), bool), False)
        curves = _link([s for s in segs if len(s) == 2], pos, lambda n: True)
        upper = []
        for cv in curves:
            th, w = continuous_theta(cv.points)
            if np.nanmean(w) < 0.5:
                upper.append((cv, th))
        if len(upper) != 1:
            raise SheetAmbiguity(f"circle r={r0:.4g} meets the upper sheet in {len(upper)} arcs")
        cv, th = upper[0]
        zz = cv.points[:, 2]
        A = np.stack([th, np.ones_like(th)], 1)
        coef, *_ = np.linalg.lstsq(A, zz, rcond=None)
        slopes.append(coef[0])
        resid = max(resid, float(np.abs(A @ coef - zz).max()))
        if np.isfinite(h):
            ends = cv.points[[0, -1]]
            the, _ = continuous_theta(ends)
            err = np.minimum(np.abs(ends[:, 2] - 0.0) + np.abs(the), np.abs(ends[:, 2] - h) + np.abs(the - h))
            ring = max(ring, float(err.max()))
    slopes = np.array(slopes)
    return PitchReport(float(slopes.mean()), resid, radii, slopes, ring)


def annular_intersection_test(D: TriMesh, barriers) -> list:
    """True per barrier iff D crosses its clipped catenoid annulus."""
    E, _ = D.edges()
    out = []
    for b in barriers:
        R = float(D.meta.get("R", np.inf))
        cr = b.neck * math.cosh(max(abs(b.slab[0] - b.center[2]), abs(b.slab[1] - b.center[2])) / b.neck)
        if math.hypot(b.center[0], b.center[1]) + cr >= R:
            log.warning("barrier annulus reaches beyond the boundary cylinder")
        lv = b.level(D.V)
        a, c = E[:, 0], E[:, 1]
        cross = (lv[a] < 0) != (lv[c] < 0)
        hit = False
        if cross.any():
            t = lv[a][cross] / (lv[a][cross] - lv[c][cross])
            P = D.V[a[cross]] + t[:, None] * (D.V[c[cross]] - D.V[a[cross]])
            hit = bool(b.in_slab(P[:, 2]).any())
        out.append(hit)
    return out


@dataclass
class CurvatureReport:
    max_B: float
    bins: np.ndarray          # bin edges in distance to Z
    max_angle_deg: np.ndarray  # per bin: max angle between the normal and the vertical


def curvature_report(m: TriMesh, n_bins: int = 6, exclude_rings: int = 2) -> CurvatureReport:
    cf = curvature_field(m)
    keep = ~ring_mask(m, m.fixed | m.boundary_vertex_mask_topological(), exclude_rings) & ~cf.degenerate
    B = cf.B[keep]
    maxB = float(np.nanmax(B)) if B.size else float("nan")
    rho = np.hypot(m.V[:, 0], m.V[:, 1])
    R = float(m.meta.get("R", rho.max()))
    edges = np.linspace(0, R, n_bins + 1)
    N = vertex_normals(m.V, m.F)
    ang = np.degrees(np.arccos(np.clip(np.abs(N[:, 2]), 0, 1)))
    mx = np.full(n_bins, np.nan)
    for i in range(n_bins):
        sel = keep & (rho >= edges[i]) & (rho < edges[i + 1])
        if sel.any():
            mx[i] = ang[sel].max()
    return CurvatureReport(maxB, edges, mx)


def horizontal_tangent_points(Mm: TriMesh, tol_deg: float = 1.5):
    """Vertices of Mm whose normal is within tol of vertical, interior only."""
    N = vertex_normals(Mm.V, Mm.F)
    ok = (Mm.roles == FREE) & (np.degrees(np.arccos(np.clip(np.abs(N[:, 2]), 0, 1))) < tol_deg)
    return np.flatnonzero(ok)


def rotation_invariance_error(m: TriMesh, kind: str) -> float:
    """Hausdorff-type distance between m's vertices and their image under a rotation."""
    from scipy.spatial import cKDTree

    img = geo.apply_symmetry(geo.SymmetryElement(kind), m.V)
    return float(cKDTree(m.V).query(img)[0].max())


# ---------------------------------------------------------------------------
# summary


class Summary:
    """Plain-text PASS/FAIL lines keyed by short check names."""

    def __init__(self):
        self.lines = []

    def add(self, key: str, ok: bool, detail: str = ""):
        self.lines.append((key, bool(ok), detail))
        log.info("%s %s %s", "PASS" if ok else "FAIL", key, detail)
        return ok

    @property
    def passed(self) -> bool:
        return all(ok for _, ok, _ in self.lines)

    def text(self) -> str:
        return "".join(f"{'PASS' if ok else 'FAIL'} {k} {d}".rstrip() + "\n" for k, ok, d in self.lines)

    def write(self, path):
        with open(path, "w") as fh:
            fh.write(self.text())
