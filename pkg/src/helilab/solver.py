"""Discrete minimal surfaces spanning the bowtie curve inside H+.

Backends:
  dirichlet-iterate  the cotangent-Laplace (Pinkall-Polthier) iteration
  gradient-descent   explicit mean-curvature flow with mass-lumped steps
  newton             damped Newton on the normal residual, index-agnostic

Containment in H+ and catenoid obstacles are handled by penalty corrections
after each linear solve.  Every accepted step is checked for monotone
area + penalty with step halving.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import geometry as geo
from .errors import (ConfigError, ConstraintUnsatisfiable, Diverged, NoConvergence,
                     PairingMissing, SingularSystem, TopologyError)
from .mesh import (BOUNDARY, FREE, ORIGIN, TriMesh, cotan_laplacian, face_areas,
                   grid_faces, lumped_mass, mean_edge_length, total_area, vertex_normals)

log = logging.getLogger(__name__)

BACKENDS = ("dirichlet-iterate", "gradient-descent", "newton")
SIDES = ("keep-outside", "keep-inside")

# axis tag bits carried by boundary vertices
TAG_X, TAG_Z, TAG_HELIX, TAG_LINE = 1, 2, 4, 8
TAG_ORIGIN = TAG_X | TAG_Z

_SY = np.array([-1.0, 1.0, -1.0])


class MaxItersExceeded(NoConvergence):
    pass


@dataclass
class SolveConfig:
    backend: str = "dirichlet-iterate"
    max_iters: int = 500
    residual_tol: float = 1e-6
    containment_weight: float = 0.0  # 0 switches containment off
    containment_mode: str = "vertical-gap"
    containment_tol: float = 1e-6
    obstacle: Optional[geo.CatenoidBarrier] = None
    obstacle_side: str = "keep-outside"
    obstacle_weight: float = 1e3
    equivariance: bool = True
    step: float = 1.0
    max_halvings: int = 30
    mu0: float = 0.0
    mu_max: float = 1e8
    seed: int = 0
    classify: bool = True

    def validate(self):
        if self.backend not in BACKENDS:
            raise ConfigError(f"backend must be one of {BACKENDS}")
        if not self.residual_tol > 0:
            raise ConfigError("residual_tol must be positive")
        if self.containment_weight < 0 or self.obstacle_weight < 0:
            raise ConfigError("penalty weights must be >= 0")
        if self.containment_mode not in ("vertical-gap",):
            raise ConfigError(f"unknown containment mode {self.containment_mode!r}")
        if self.obstacle_side not in SIDES:
            raise ConfigError(f"obstacle side must be one of {SIDES}")
        if self.max_iters < 0 or self.max_halvings < 1 or self.step <= 0:
            raise ConfigError("bad step controls")
        return self


@dataclass
class SolveResult:
    mesh: TriMesh
    history: list = field(default_factory=list)  # (iter, area, residual, violation)
    final_area: float = float("nan")
    constraint_violation: float = 0.0
    converged: bool = False
    iterations: int = 0
    residual: float = float("nan")
    classification: Optional[str] = None
    lambda1: Optional[float] = None

    @property
    def residual_history(self):
        return [h[2] for h in self.history]

    def write_history(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iter", "area", "residual", "violation"])
            for row in self.history:
                w.writerow([row[0]] + [repr(float(v)) for v in row[1:]])


# ---------------------------------------------------------------------------
# area derivatives


def area_gradient(X, F):
    """dA/dX, equal to L X for the cotangent Laplacian."""
    P = X[F]
    n = np.cross(P[:, 1] - P[:, 0], P[:, 2] - P[:, 0])
    t = n / np.maximum(np.linalg.norm(n, axis=1), 1e-300)[:, None]
    g = np.zeros_like(X)
    for i in range(3):
        E = P[:, (i + 2) % 3] - P[:, (i + 1) % 3]
        np.add.at(g, F[:, i], 0.5 * np.cross(t, E))
    return g


def _skew(v):
    z = np.zeros(v.shape[:-1] + (3, 3))
    z[..., 0, 1], z[..., 0, 2] = -v[..., 2], v[..., 1]
    z[..., 1, 0], z[..., 1, 2] = v[..., 2], -v[..., 0]
    z[..., 2, 0], z[..., 2, 1] = -v[..., 1], v[..., 0]
    return z


def area_hessian(X, F):
    """Exact Hessian of the triangle-area sum, (3n x 3n) sparse, xyz-interleaved."""
    P = X[F]
    n = np.cross(P[:, 1] - P[:, 0], P[:, 2] - P[:, 0])
    nn = np.maximum(np.linalg.norm(n, axis=1), 1e-300)
    t = n / nn[:, None]
    # E_i = x_{i+2} - x_{i+1}
    E = np.stack([P[:, 2] - P[:, 1], P[:, 0] - P[:, 2], P[:, 1] - P[:, 0]], axis=1)
    Pr = np.eye(3)[None] - t[:, :, None] * t[:, None, :]
    SE, St = _skew(E), _skew(t)
    rows, cols, vals = [], [], []
    ar = np.arange(3)
    for i in range(3):
        for j in range(3):
            B = -0.5 * np.einsum("mab,mbc,mcd->mad", SE[:, i], Pr, SE[:, j]) / nn[:, None, None]
            if j == (i + 2) % 3:
                B = B + 0.5 * St
            if j == (i + 1) % 3:
                B = B - 0.5 * St
            r = 3 * F[:, i][:, None, None] + ar[None, :, None]
            c = 3 * F[:, j][:, None, None] + ar[None, None, :]
            rows.append(np.broadcast_to(r, B.shape).ravel())
            cols.append(np.broadcast_to(c, B.shape).ravel())
            vals.append(B.ravel())
    n3 = 3 * len(X)
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n3, n3))


def normal_residual(X, F, free_mask):
    """r_i = n_i . dA/dx_i on free vertices, zero elsewhere."""
    r = np.einsum("ij,ij->i", area_gradient(X, F), vertex_normals(X, F))
    r[~free_mask] = 0.0
    return r


def residual_norm(X, F, free_mask, exclude=None) -> float:
    """max |n . grad A| over free vertices divided by the mean edge length."""
    r = np.abs(normal_residual(X, F, free_mask))
    if exclude is not None:
        r[exclude] = 0.0
    return float(r.max() / mean_edge_length(X, F)) if len(r) else 0.0


# ---------------------------------------------------------------------------
# equivariance


def _symmetrize(X, pair):
    Y = 0.5 * (X + X[pair] * _SY)
    fix = pair == np.arange(len(pair))
    Y[fix, 0] = 0.0
    Y[fix, 2] = 0.0
    return Y


def project_equivariant(m: TriMesh) -> TriMesh:
    """Average each vertex with the rotY image of its partner."""
    if m.pair is None:
        raise PairingMissing("mesh has no rotY pairing")
    Y = _symmetrize(m.V, m.pair)
    Y[m.fixed] = m.V[m.fixed]
    return m.copy(Y)


def check_pairing(m: TriMesh, tol: float = 1e-9):
    """Pairing must be an involution that maps faces to faces (orientation kept)."""
    p = m.pair
    if p is None:
        raise PairingMissing("mesh has no rotY pairing")
    if np.any(p[p] != np.arange(len(p))):
        raise TopologyError("pairing is not an involution")
    key = lambda F: {tuple(np.roll(f, -int(np.argmin(f)))) for f in F}
    if key(m.F) != key(p[m.F]):
        raise TopologyError("connectivity is not rotY-symmetric")
    err = np.abs(m.V[p] * _SY - m.V)[m.fixed].max(initial=0.0)
    if err > tol * max(1.0, np.abs(m.V).max()):
        raise TopologyError(f"boundary not rotY-invariant (err {err:.2e})")
    return True


# ---------------------------------------------------------------------------
# constraints


def _constraint_state(X, cfg: SolveConfig, free_mask):
    """Per-vertex violations (containment, obstacle) and the corrected positions."""
    Y = X.copy()
    viol = np.zeros(len(X))
    active = np.zeros(len(X), bool)
    fi = np.flatnonzero(free_mask)
    if cfg.containment_weight > 0 and len(fi):
        P = X[fi]
        r, theta, w = geo.box_coordinates(P)
        gap = np.nan_to_num(geo.vertical_gap(P), nan=0.0)
        bad = (gap < 0) & (r > 0)
        viol[fi] = np.maximum(viol[fi], np.maximum(-gap, 0.0))
        frac = cfg.containment_weight / (1.0 + cfg.containment_weight)
        # push back vertically through the nearer sheet
        up = (w - 1) < (2 - w)
        dz = np.where(up, np.pi * (w - 1), -np.pi * (2 - w))
        k = fi[bad]
        Y[k, 2] += frac * dz[bad]
        active[k] = True
    ob = cfg.obstacle
    if ob is not None and len(fi):
        P = Y[fi]
        s = ob.signed_distance(P)
        s = np.where(np.isfinite(s), s, np.inf if cfg.obstacle_side == "keep-outside" else -np.inf)
        pen = np.maximum(-s, 0.0) if cfg.obstacle_side == "keep-outside" else np.maximum(s, 0.0)
        pen = np.where(np.isfinite(pen), pen, 0.0)
        viol[fi] = np.maximum(viol[fi], pen)
        bad = pen > 0
        if bad.any():
            frac = cfg.obstacle_weight / (1.0 + cfg.obstacle_weight)
            k = fi[bad]
            d = Y[k, :2] - np.asarray(ob.center[:2])
            rho = np.maximum(np.linalg.norm(d, axis=1), 1e-300)
            target = ob.radius_at(Y[k, 2])
            Y[k, :2] += frac * (target - rho)[:, None] * d / rho[:, None]
            active[k] = True
    return viol, Y, active


def constraint_violation(X, cfg: SolveConfig, free_mask) -> float:
    v = _constraint_state(X, cfg, free_mask)[0]
    return float(v.max()) if len(v) else 0.0


def _merit(X, F, cfg, free_mask, M=None):
    A = total_area(X, F)
    if cfg.containment_weight == 0 and cfg.obstacle is None:
        return A, A
    v = _constraint_state(X, cfg, free_mask)[0]
    if M is None:
        M = lumped_mass(X, F)
    w = max(cfg.containment_weight, cfg.obstacle_weight if cfg.obstacle is not None else 0.0)
    return A + 0.5 * w * float(np.sum(M * v * v)), A


# ---------------------------------------------------------------------------
# steps


def dirichlet_step(X, F, free_mask):
    """One cotangent-Laplace solve with the boundary held fixed."""
    L = cotan_laplacian(X, F)
    I = np.flatnonzero(free_mask)
    B = np.flatnonzero(~free_mask)
    Y = X.copy()
    try:
        lu = spla.splu(L[I][:, I].tocsc())
    except RuntimeError as exc:
        raise SingularSystem(f"cotangent system singular: {exc}") from exc
    Y[I] = lu.solve(-(L[I][:, B] @ X[B]))
    return Y


def gradient_step(X, F, free_mask, scale=1.0):
    L = cotan_laplacian(X, F)
    M = lumped_mass(X, F)
    d = L.diagonal()
    I = np.flatnonzero(free_mask)
    alpha = 0.5 * scale * np.min(M[I] / np.maximum(d[I], 1e-300))
    g = L @ X
    Y = X.copy()
    Y[I] -= alpha * g[I] / M[I, None]
    return Y


def _free_mask(m: TriMesh):
    return m.roles == FREE


def minimize_area(m: TriMesh, cfg: SolveConfig | None = None) -> SolveResult:
    cfg = (cfg or SolveConfig()).validate()
    if cfg.backend == "newton":
        return newton_refine(m, cfg)
    free = _free_mask(m)
    use_pair = cfg.equivariance and m.pair is not None
    X = m.V.copy()
    X0fixed = X[~free].copy()
    F = m.F
    merit, area = _merit(X, F, cfg, free)
    viol, _, active = _constraint_state(X, cfg, free)
    res = residual_norm(X, F, free)
    hist = [(0, area, res, float(viol.max(initial=0.0)))]
    best = (res, X.copy())
    converged = False
    it = 0
    for it in range(1, cfg.max_iters + 1):
        if cfg.backend == "dirichlet-iterate":
            Y = dirichlet_step(X, F, free)
        else:
            Y = gradient_step(X, F, free, cfg.step)
        t = 1.0
        accepted = False
        for _ in range(cfg.max_halvings):
            # projected step: shorten first, then correct and symmetrise
            _, C, active = _constraint_state(X + t * (Y - X), cfg, free)
            if use_pair:
                C = _symmetrize(C, m.pair)
            C[~free] = X0fixed
            new_merit, new_area = _merit(C, F, cfg, free)
            if np.isfinite(new_merit) and new_merit <= merit + 1e-13 * abs(merit):
                accepted = True
                break
            t *= 0.5
        if not accepted:
            log.info("minimize_area: no descent after %d halvings at iter %d", cfg.max_halvings, it)
            break
        X, merit, area = C, new_merit, new_area
        viol, _, active = _constraint_state(X, cfg, free)
        v = float(viol.max(initial=0.0))
        res = residual_norm(X, F, free, exclude=active)
        hist.append((it, area, res, v))
        if res < best[0]:
            best = (res, X.copy())
        if it % 50 == 0:
            log.debug("iter %d area %.8g residual %.3e violation %.2e t=%g", it, area, res, v, t)
        if res <= cfg.residual_tol:
            converged = True
            break
    Xout = X
    viol = constraint_violation(Xout, cfg, free)
    out = SolveResult(m.copy(Xout), hist, total_area(Xout, F), viol, False, it, residual_norm(Xout, F, free))
    if converged:
        if viol > cfg.containment_tol:
            raise ConstraintUnsatisfiable(
                f"residual converged but violation {viol:.3e} > {cfg.containment_tol:.1e}", out)
        out.converged = True
    else:
        log.warning("minimize_area stopped after %d iterations (residual %.3e)", it, out.residual)
    return out


def newton_refine(m: TriMesh, cfg: SolveConfig | None = None) -> SolveResult:
    """Damped Newton on the normal residual with Levenberg regularisation."""
    cfg = cfg or SolveConfig(backend="newton", max_iters=30, residual_tol=1e-9)
    cfg.validate()
    free = _free_mask(m)
    I = np.flatnonzero(free)
    n = m.n_vertices
    F = m.F
    use_pair = cfg.equivariance and m.pair is not None
    X = m.V.copy()
    if use_pair:
        X = _symmetrize(X, m.pair)
        X[~free] = m.V[~free]
    r = normal_residual(X, F, free)
    nr = np.linalg.norm(r)
    nr0 = nr
    res = residual_norm(X, F, free)
    hist = [(0, total_area(X, F), res, constraint_violation(X, cfg, free))]
    mu = cfg.mu0
    converged = res <= cfg.residual_tol
    it = 0
    rows = np.repeat(np.arange(n), 3)
    while not converged and it < cfg.max_iters:
        it += 1
        N = vertex_normals(X, F)
        Nb = sp.csr_matrix((N.ravel(), (rows, np.arange(3 * n))), shape=(n, 3 * n))
        J = (Nb @ area_hessian(X, F) @ Nb.T).tocsr()[I][:, I]
        Md = sp.diags(lumped_mass(X, F)[I])
        while True:
            try:
                lu = spla.splu((J + mu * Md).tocsc())
                phi_i = lu.solve(-r[I])
                if not np.all(np.isfinite(phi_i)):
                    raise RuntimeError("non-finite solve")
            except RuntimeError:
                mu = max(10 * mu, 1e-8)
                if mu > cfg.mu_max:
                    raise SingularSystem("Jacobian singular up to the regularisation limit")
                continue
            phi = np.zeros(n)
            phi[I] = phi_i
            t = 1.0
            ok = False
            for _ in range(cfg.max_halvings):
                Y = X + t * phi[:, None] * N
                if use_pair:
                    Y = _symmetrize(Y, m.pair)
                Y[~free] = m.V[~free]
                r2 = normal_residual(Y, F, free)
                n2 = np.linalg.norm(r2)
                if np.isfinite(n2) and n2 < nr:
                    ok = True
                    break
                t *= 0.5
            if ok:
                break
            mu = max(10 * mu, 1e-6)
            if mu > cfg.mu_max:
                raise Diverged(f"no residual decrease at iteration {it}")
        X, r, nr = Y, r2, n2
        if t == 1.0:
            mu = mu / 10 if mu > 1e-12 else 0.0
        if not np.isfinite(nr) or nr > 1e6 * max(nr0, 1e-300):
            raise Diverged("residual blew up")
        res = residual_norm(X, F, free)
        hist.append((it, total_area(X, F), res, constraint_violation(X, cfg, free)))
        log.debug("newton %d area %.10g residual %.3e t=%g mu=%.1e", it, hist[-1][1], res, t, mu)
        converged = res <= cfg.residual_tol
    out = SolveResult(m.copy(X), hist, total_area(X, F), constraint_violation(X, cfg, free),
                      False, it, res)
    out.converged = bool(converged and out.constraint_violation <= cfg.containment_tol)
    if not converged:
        log.warning("newton_refine: residual %.3e after %d iterations", res, it)
    if cfg.classify:
        from .jacobi import classify_stability, first_eigenpair
        try:
            eig = first_eigenpair(out.mesh)
            out.lambda1 = eig.lambda1
            out.classification = classify_stability(out.mesh, eig=eig)
        except Exception as exc:  # classification is advisory here
            log.warning("classification failed: %s", exc)
    return out


# ---------------------------------------------------------------------------
# seeds


@dataclass(frozen=True)
class Bump:
    """Neck connecting the two sheets through H+; amplitude is the neck radius."""

    amplitude: float
    center_theta: float = math.pi / 2


def _gamma_nodes(gamma: geo.BoundaryCurve):
    if gamma.smoothing > 0:
        raise ConfigError("grid seeds need the sharp boundary curve (smoothing = 0)")
    runs = gamma.runs()
    rho = runs["x+"][:, 0].copy()
    th = runs["helix-upper"][:, 2].copy()
    zz = runs["z+"][:, 2][::-1].copy()
    return rho, th, zz


def _profile(tau, center):
    """sin bump on [0, 1] peaking at `center`."""
    tau = np.asarray(tau, float)
    s = np.where(tau <= center, 0.5 * tau / center, 0.5 + 0.5 * (tau - center) / (1 - center))
    return np.sin(np.pi * np.clip(s, 0, 1))


def _u_grid(R, h, rho, tau, wn, eps0, dl0, center):
    """Rows tau, columns: arm 1 (R..0), neck (w), arm 2 (0..R).  h <= pi."""
    kinds = [(0, x) for x in rho[::-1]] + [(1, w) for w in wn[1:-1]] + [(2, x) for x in rho]
    kk = np.array([k for k, _ in kinds])
    xx = np.array([x for _, x in kinds])
    T = tau[:, None]
    eps = eps0 * _profile(tau, center)[:, None]
    dl = dl0 * _profile(tau, center)[:, None]
    rr = np.where(kk == 1, eps, eps + xx * (R - eps) / R)
    ww = np.where(kk == 0, dl * (1 - xx / R),
                  np.where(kk == 2, 1 - dl * (1 - xx / R), dl + xx * (1 - 2 * dl)))
    th = np.where(kk == 0, T * h, np.where(kk == 2, np.pi - h + T * h, T * h + ww * (np.pi - h)))
    P = geo.box_to_xyz(rr, th, ww)
    idx = np.arange(P.shape[0] * P.shape[1]).reshape(P.shape[:2])
    roles = np.zeros(idx.shape, np.int8)
    roles[0], roles[-1], roles[:, 0], roles[:, -1] = BOUNDARY, BOUNDARY, BOUNDARY, BOUNDARY
    pair = idx[::-1, ::-1].ravel()
    center_v = int(idx[idx.shape[0] // 2, idx.shape[1] // 2])
    return P.reshape(-1, 3), grid_faces(idx), roles.ravel(), pair, center_v


def _three_patch(R, h, rho, th1, wn, eps0, dl0):
    """Two arm sheets plus a neck spanning theta in [0, pi].  h > pi."""
    m = int(np.count_nonzero(th1 <= np.pi + 1e-12))
    nr, na, nn = len(th1), len(rho), len(wn)
    s = np.clip(th1, 0, np.pi)
    eps = eps0 * np.sin(s) * (th1 <= np.pi + 1e-12)
    dl = dl0 * np.sin(s) * (th1 <= np.pi + 1e-12)
    P, A1, NK = [], np.zeros((nr, na), int), np.zeros((m, nn), int)
    for i in range(m):
        ww = dl[i] + wn * (1 - 2 * dl[i])
        pts = geo.box_to_xyz(np.full(nn, eps[i]), np.full(nn, th1[i]), ww)
        NK[i] = np.arange(len(P), len(P) + nn)
        P.extend(pts)
    for i in range(nr):
        rr = eps[i] + rho * (R - eps[i]) / R
        pts = geo.box_to_xyz(rr, np.full(na, th1[i]), dl[i] * (1 - rho / R))
        for j in range(na):
            if j == 0 and i < m:
                A1[i, j] = NK[i, 0]
            else:
                A1[i, j] = len(P)
                P.append(pts[j])
    P = np.array(P)
    A2 = np.zeros_like(A1)
    extra = []
    for i in range(nr):
        for j in range(na):
            if j == 0 and i < m:
                A2[i, j] = NK[m - 1 - i, nn - 1]
            else:
                A2[i, j] = len(P) + len(extra)
                extra.append(P[A1[i, j]] * _SY)
    P = np.concatenate([P, np.array(extra)])
    F = np.concatenate([grid_faces(A1[:, ::-1]), grid_faces(NK), grid_faces(A2[::-1])])
    pair = np.arange(len(P))
    pair[A1.ravel()] = A2.ravel()
    pair[A2.ravel()] = A1.ravel()
    pair[NK.ravel()] = NK[::-1, ::-1].ravel()
    return P, F, pair, int(NK[m // 2, nn // 2])


def _outer_grid(R, h, rho, tau, wn):
    """Sheet through the far side of the box: rows w, path tau=0 face, r=R, tau=1 face."""
    path_r = np.concatenate([rho, np.full(len(tau) - 2, R), rho[::-1]])
    path_t = np.concatenate([np.zeros(len(rho)), tau[1:-1], np.ones(len(rho))])
    W = wn[:, None]
    th = path_t[None] * h + W * (np.pi - h)
    P = geo.box_to_xyz(np.broadcast_to(path_r, th.shape), th, np.broadcast_to(W, th.shape))
    idx = np.arange(P.shape[0] * P.shape[1]).reshape(P.shape[:2])
    roles = np.zeros(idx.shape, np.int8)
    roles[0], roles[-1], roles[:, 0], roles[:, -1] = BOUNDARY, BOUNDARY, BOUNDARY, BOUNDARY
    # orientation matching the other seeds: normal toward +y at the fixed point
    F = grid_faces(idx)[:, ::-1]
    return P.reshape(-1, 3), F, roles.ravel(), idx[::-1, ::-1].ravel(), int(idx[idx.shape[0] // 2, idx.shape[1] // 2])


def initial_disk(gamma: geo.BoundaryCurve, handle=None, delta: float = 0.05) -> TriMesh:
    """Disk-topology, rotY-symmetric seed spanning gamma.

    handle: None / "none" (infinitesimal connection at the axis), Bump(amplitude),
    or "outer" (a sheet through the far side of the slab region).
    """
    R, h = gamma.R, gamma.h
    rho, th, zz = _gamma_nodes(gamma)
    if handle is None or handle == "none":
        amp = 0.05 * rho[1]
        kind = "none"
    elif handle == "outer":
        amp, kind = None, "outer"
    elif isinstance(handle, Bump):
        amp, kind = float(handle.amplitude), "bump"
        if not 0 < amp < 0.5 * R:
            raise ConfigError(f"bump amplitude {amp} outside (0, R/2)")
    else:
        raise ConfigError(f"unknown handle {handle!r}")
    if kind == "outer":
        wn = 1 - zz[::-1] / h if h <= np.pi else None
        if wn is None:
            raise ConfigError("outer seed implemented for h <= pi")
        P, F, roles, pair, cv = _outer_grid(R, h, rho, th / h, wn)
    elif h <= np.pi + 1e-12:
        center = 0.5
        if kind == "bump":
            # neck centreline theta = tau h + (pi - h)/2
            center = (handle.center_theta - 0.5 * (np.pi - h)) / h
            if not 0 < center < 1:
                raise ConfigError("bump centre outside the helix range")
            if abs(center - 0.5) > 1e-12:
                log.warning("off-centre bump breaks rotY symmetry of the seed")
        wn = 1 - zz[::-1] / h
        P, F, roles, pair, cv = _u_grid(R, h, rho, th / h, wn, amp, delta * (kind == "bump") + 1e-3 * (kind == "none"), center)
    else:
        if kind == "bump" and abs(handle.center_theta - np.pi / 2) > 1e-12:
            raise ConfigError("for h > pi the neck is centred at theta = pi/2")
        neck_z = zz[zz <= np.pi + 1e-12]
        wn = 1 - neck_z[::-1] / np.pi
        P, F, pair, cv = _three_patch(R, h, rho, th, wn, amp, delta * (kind == "bump") + 1e-3 * (kind == "none"))
        roles = None
    m = TriMesh(P, F, roles=roles)
    # snap boundary to gamma exactly and derive tags
    bmask = m.boundary_vertex_mask_topological()
    from scipy.spatial import cKDTree
    tree = cKDTree(gamma.vertices)
    bi = np.flatnonzero(bmask)
    d, j = tree.query(P[bi])
    if d.max() > 1e-7 * max(R, 1.0):
        raise TopologyError(f"seed boundary misses gamma by {d.max():.2e}")
    V = m.V
    V[bi] = gamma.vertices[j]
    # origin: two distinct copies (indices 0 and n/2 of gamma)
    roles = np.where(bmask, BOUNDARY, FREE).astype(np.int8)
    tags = np.zeros(len(V), np.int8)
    bit = {"x-axis-segment": TAG_X, "z-axis-segment": TAG_Z, "upper-helical-arc": TAG_HELIX,
           "lower-helical-arc": TAG_HELIX, "top-edge": TAG_LINE, "bottom-edge": TAG_LINE,
           "origin-double-point": TAG_ORIGIN}
    gt = np.array([bit.get(t, 0) for t in gamma.tags], np.int8)
    ci = gamma.corner_indices()
    for k, c in enumerate(ci):
        prev_t = gamma.tags[(c - 1) % gamma.n]
        next_t = gamma.tags[(c + 1) % gamma.n]
        gt[c] = bit[prev_t] | bit[next_t] if gamma.tags[c] == "corner" else TAG_ORIGIN
    tags[bi] = gt[j]
    # the two origin copies: the seed keeps them apart (r = eps on the neck side)
    near0 = bi[np.linalg.norm(V[bi], axis=1) < 1e-12]
    roles[near0] = ORIGIN
    meta = dict(kind=kind, R=float(R), h=float(h), boundary=["helicoid", float(R)],
                fixed_vertex=cv, amplitude=amp)
    out = TriMesh(V, F, roles=roles, pair=pair, tags=tags, meta=meta)
    check_pairing(out)
    out = project_equivariant(out)
    if kind == "bump":
        gap = geo.vertical_gap(out.V[out.interior])
        if np.nanmin(gap) < -1e-9:
            raise ConfigError("bump seed leaves H+ at mesh scale")
    log.info("initial_disk: %s seed, %d vertices, %d faces", kind, out.n_vertices, out.n_faces)
    return out


# ---------------------------------------------------------------------------
# shooting for the unstable disk


def y_observable(m: TriMesh):
    c = m.meta.get("fixed_vertex")
    if c is None:
        raise ConfigError("mesh has no fixed vertex recorded")
    return lambda X: float(X[c, 1])


def threshold_fate(observable, lo: float, hi: float):
    def fate(X):
        y = observable(X)
        return 1 if y > hi else (-1 if y < lo else 0)
    return fate


def relax_until_fate(m: TriMesh, fate, iters: int = 150):
    """Dirichlet iteration until `fate` decides; returns (fate, best residual, best X)."""
    free = _free_mask(m)
    X = m.V.copy()
    best = (np.inf, X.copy())
    for _ in range(iters):
        X = dirichlet_step(X, m.F, free)
        if m.pair is not None:
            X = _symmetrize(X, m.pair)
            X[~free] = m.V[~free]
        r = np.abs(normal_residual(X, m.F, free)).max()
        if r < best[0]:
            best = (r, X.copy())
        f = fate(X)
        if f:
            return f, best[0], best[1]
    return 0, best[0], best[1]


def shoot_saddle(family: Callable[[float], TriMesh], lo: float, hi: float, fate,
                 n_bisect: int = 14, iters: int = 150):
    """Bisect a one-parameter family of seeds on the fate of their descent.

    Both ends must fall to different sides; the iterate with the smallest
    residual along the last runs approximates the saddle between them.
    Returns (mesh, (lo, hi)).
    """
    f_lo = relax_until_fate(family(lo), fate, iters)[0]
    f_hi = relax_until_fate(family(hi), fate, iters)[0]
    if f_lo == f_hi or 0 in (f_lo, f_hi):
        raise NoConvergence(f"bracket [{lo}, {hi}] does not separate fates ({f_lo}, {f_hi})")
    best = (np.inf, None, None)
    for k in range(n_bisect):
        mid = 0.5 * (lo + hi)
        seed = family(mid)
        f, r, X = relax_until_fate(seed, fate, iters)
        log.debug("shoot %d: t=%.6g fate=%d residual=%.2e", k, mid, f, r)
        if r < best[0]:
            best = (r, X, seed)
        if f == f_lo:
            lo = mid
        elif f == f_hi:
            hi = mid
        else:
            break
    return best[2].copy(best[1]), (lo, hi)


def find_handle_disk(gamma: geo.BoundaryCurve, bracket=(0.5, 4.0), y_band=(0.3, 4.5),
                     n_bisect: int = 14, refine_levels: int = 0, tol: float = 1e-8,
                     newton_iters: int = 30) -> SolveResult:
    """The rotY-invariant unstable disk D captured from the handle family."""
    from .mesh import refine

    base = initial_disk(gamma, Bump(0.5 * sum(bracket)))
    obs = y_observable(base)
    fate = threshold_fate(obs, *y_band)
    seed, br = shoot_saddle(lambda a: initial_disk(gamma, Bump(a)), bracket[0], bracket[1], fate, n_bisect)
    log.info("shooting bracket for the neck amplitude: [%.6g, %.6g]", *br)
    cfg = SolveConfig(backend="newton", max_iters=newton_iters, residual_tol=tol, classify=False)
    res = newton_refine(seed, cfg)
    for lev in range(refine_levels):
        fine = refine(res.mesh, "uniform")
        res = newton_refine(fine, cfg)
        log.info("level %d: %d faces, residual %.2e", lev + 1, fine.n_faces, res.residual)
    from .jacobi import classify_stability, first_eigenpair
    eig = first_eigenpair(res.mesh)
    res.lambda1 = eig.lambda1
    res.classification = classify_stability(res.mesh, eig=eig)
    return res


def find_hugging_disk(gamma: geo.BoundaryCurve, obstacle: geo.CatenoidBarrier | None = None,
                      iters: int = 300, tol: float = 1e-8, newton_iters: int = 12) -> SolveResult:
    """Obstacle-constrained minimiser D* from the outer seed."""
    seed = initial_disk(gamma, "outer")
    cfg = SolveConfig(max_iters=iters, residual_tol=tol, obstacle=obstacle, containment_weight=1e3,
                      containment_tol=1e-6)
    res = minimize_area(seed, cfg)
    if res.constraint_violation <= cfg.containment_tol:
        ncfg = SolveConfig(backend="newton", max_iters=newton_iters, residual_tol=tol, obstacle=obstacle,
                           containment_weight=1e3, classify=True)
        res2 = newton_refine(res.mesh, ncfg)
        if res2.constraint_violation <= cfg.containment_tol:
            res = res2
    return res
