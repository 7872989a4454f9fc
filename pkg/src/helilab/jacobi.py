"""Second variation of area: Jacobi operator, first eigenpair, stability, pushes.

The operator acts on normal variations u with Dirichlet conditions on the
fixed vertices:  K = L - M |A|^2  (cotangent stiffness minus lumped potential),
so that  K u = lambda M u  and lambda_1 > 0 means strictly stable.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConfigError, NoConvergence, PathCollapse, StepTooLarge
from .mesh import (FREE, TriMesh, cotan_laplacian, curvature_field, lumped_mass, self_intersects,
                   total_area, vertex_normals)

log = logging.getLogger(__name__)

STRICTLY_STABLE, NEAR_DEGENERATE, UNSTABLE = "strictly_stable", "near_degenerate", "unstable"


@dataclass
class JacobiOperator:
    K: sp.csr_matrix          # interior block, symmetric
    M: np.ndarray             # lumped mass on interior vertices
    interior: np.ndarray      # vertex indices of the rows
    potential: np.ndarray     # |A|^2 per vertex (all vertices)
    n_vertices: int

    @property
    def scale(self) -> float:
        p = self.potential[self.interior]
        return float(np.mean(np.abs(p))) if len(p) else 0.0


@dataclass
class JacobiSpectrum:
    lambda1: float
    u1: np.ndarray            # per-vertex, zero on fixed vertices, max = 1
    iters: int
    tol: float
    rayleigh: float = float("nan")

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["lambda1", "iters", "tol"])
            w.writerow([repr(float(self.lambda1)), self.iters, repr(float(self.tol))])


def _fill_degenerate(m: TriMesh, values, bad):
    """Copy values from the nearest valid neighbour across the 1-ring graph."""
    values = values.copy()
    bad = bad.copy()
    if bad.all():
        values[:] = 0.0
        return values
    A = m.vertex_adjacency()
    for _ in range(len(values)):
        if not bad.any():
            break
        good = (~bad).astype(float)
        s = A @ (np.where(bad, 0.0, values))
        c = A @ good
        newly = bad & (c > 0)
        values[newly] = s[newly] / c[newly]
        bad &= ~newly
    return values


def potential(m: TriMesh, dirichlet=None):
    """|A|^2 from the quadric-fit shape operator, degenerate stencils filled."""
    cf = curvature_field(m)
    p = cf.B ** 2
    bad = cf.degenerate | ~np.isfinite(p)
    if dirichlet is not None:
        bad &= ~dirichlet
    n_bad = int((bad & (m.roles == FREE)).sum())
    if n_bad:
        log.info("jacobi: %d degenerate stencils filled from neighbours", n_bad)
    p = _fill_degenerate(m, np.where(bad, 0.0, p), bad)
    return p


def assemble_jacobi(m: TriMesh, dirichlet=None, potential_values=None) -> JacobiOperator:
    """K = L - diag(M |A|^2) restricted to the free vertices.

    `dirichlet` adds extra pinned vertices (boolean mask).
    """
    X, F = m.V, m.F
    L = cotan_laplacian(X, F)
    M = lumped_mass(X, F)
    pin = m.roles != FREE
    if dirichlet is not None:
        pin = pin | np.asarray(dirichlet, bool)
    I = np.flatnonzero(~pin)
    P = potential(m) if potential_values is None else np.asarray(potential_values, float)
    K = L[I][:, I] - sp.diags(M[I] * P[I])
    K = ((K + K.T) * 0.5).tocsr()
    return JacobiOperator(K, M[I], I, P, m.n_vertices)


def first_eigenpair(op, tol: float = 1e-8, max_iters: int = 200, dirichlet=None) -> JacobiSpectrum:
    """Lowest eigenpair of K u = lambda M u by shift-invert plus inverse iteration."""
    if isinstance(op, TriMesh):
        op = assemble_jacobi(op, dirichlet=dirichlet)
    K, Mv = op.K, op.M
    n = K.shape[0]
    if n == 0:
        raise NoConvergence("no free vertices")
    Md = sp.diags(Mv)
    pmax = float(np.max(op.potential[op.interior] if len(op.interior) else 0.0))
    sigma = -max(pmax, 0.0) - 1.0
    try:
        w, v = spla.eigsh(K.tocsc(), k=1, M=Md.tocsc(), sigma=sigma, which="LM", tol=tol * 1e-2,
                         v0=np.ones(n))  # fixed start vector keeps runs reproducible
        lam, u = float(w[0]), v[:, 0]
    except spla.ArpackNoConvergence as exc:
        raise NoConvergence(f"eigsh did not converge: {exc}") from exc
    # polish with shifted inverse iteration
    lu = spla.splu((K - sigma * Md).tocsc())
    iters = 0
    for iters in range(1, max_iters + 1):
        y = lu.solve(Mv * u)
        y /= np.sqrt(y @ (Mv * y))
        lam_new = float(y @ (K @ y))
        u = y
        if abs(lam_new - lam) <= tol * max(abs(lam_new), 1e-300):
            lam = lam_new
            break
        lam = lam_new
    else:
        raise NoConvergence(f"inverse iteration stalled at lambda={lam:.6g}")
    if u[np.argmax(np.abs(u))] < 0:
        u = -u
    full = np.zeros(op.n_vertices)
    full[op.interior] = u / np.abs(u).max()
    ray = float(u @ (K @ u) / (u @ (Mv * u)))
    return JacobiSpectrum(lam, full, iters, tol, ray)


def classify_stability(m: TriMesh, tol: float = 1e-3, eig: JacobiSpectrum | None = None,
                       op: JacobiOperator | None = None) -> str:
    """Sign of lambda_1 with a band |lambda_1| <= tol * mean |A|^2."""
    if op is None:
        op = assemble_jacobi(m)
    if eig is None:
        eig = first_eigenpair(op)
    band = tol * op.scale
    if abs(eig.lambda1) <= band:
        return NEAR_DEGENERATE
    return STRICTLY_STABLE if eig.lambda1 > 0 else UNSTABLE


def normal_mean_curvature(m: TriMesh):
    """Phi = -(n . grad A) / mass on free vertices (zero elsewhere)."""
    from .solver import area_gradient

    X, F = m.V, m.F
    r = np.einsum("ij,ij->i", area_gradient(X, F), vertex_normals(X, F))
    phi = -r / np.maximum(lumped_mass(X, F), 1e-300)
    phi[m.roles != FREE] = 0.0
    return phi


def normal_push(m: TriMesh, t: float, u=None, eig: JacobiSpectrum | None = None, max_rel: float = 0.3):
    """Move x -> x + t u(x) nu(x) and compare the curvature with -t lambda u.

    Returns (mesh, report) where report holds measured and predicted values,
    their relative deviation and the sign of the mean curvature.
    """
    if eig is None:
        eig = first_eigenpair(m)
    if u is None:
        u = eig.u1
    u = np.asarray(u, float)
    if t == 0:
        return m.copy(), dict(t=0.0, rel_error=0.0, sign=0, measured=np.zeros(m.n_vertices),
                              predicted=np.zeros(m.n_vertices))
    N = vertex_normals(m.V, m.F)
    base = normal_mean_curvature(m)
    out = m.copy(m.V + t * u[:, None] * N)
    phi = normal_mean_curvature(out) - base
    pred = -t * eig.lambda1 * u
    free = m.roles == FREE
    denom = np.abs(pred[free]).max()
    rel = float(np.abs(phi[free] - pred[free]).max() / max(denom, 1e-300))
    k = free & (np.abs(u) > 0.5)
    sign = int(np.sign(np.median(phi[k]))) if k.any() else 0
    report = dict(t=float(t), rel_error=rel, sign=sign, measured=phi, predicted=pred, lambda1=eig.lambda1)
    if rel > max_rel:
        raise StepTooLarge(f"quadratic term dominates: relative deviation {rel:.2f} at t={t:g}")
    log.info("normal_push t=%g: relative deviation %.3e, sign %+d", t, rel, sign)
    return out, report


# ---------------------------------------------------------------------------
# mountain pass


def progress(X, X_low, X_high):
    """Per-vertex progress coordinate along the straight segment low -> high."""
    d = X_high - X_low
    dd = np.einsum("ij,ij->i", d, d)
    ok = dd > 1e-24 * max(dd.max(initial=0.0), 1e-300)
    s = np.zeros(len(X))
    s[ok] = np.einsum("ij,ij->i", X - X_low, d)[ok] / dd[ok]
    return s, ok


def _relax_slice(m, X, X_low, X_high, t, halfwidth, iters):
    from .solver import _symmetrize, dirichlet_step

    free = m.roles == FREE
    d = X_high - X_low
    for _ in range(iters):
        X = dirichlet_step(X, m.F, free)
        if m.pair is not None:
            X = _symmetrize(X, m.pair)
            X[~free] = X_low[~free]
        s, ok = progress(X, X_low, X_high)
        sc = np.clip(s, t - halfwidth, t + halfwidth)
        k = ok & free
        X[k] += (sc - s)[k, None] * d[k]
    return X


def mountain_pass_family(family: Callable[[float], TriMesh], lo: float, hi: float, fate,
                         n_bisect: int = 14, iters: int = 150, newton_cfg=None):
    """Bisect the family on descent fate, then Newton from the best state."""
    from .solver import SolveConfig, newton_refine, shoot_saddle

    seed, br = shoot_saddle(family, lo, hi, fate, n_bisect=n_bisect, iters=iters)
    log.info("mountain pass bracket [%.6g, %.6g]", *br)
    cfg = newton_cfg or SolveConfig(backend="newton", max_iters=40, residual_tol=1e-9)
    return newton_refine(seed, cfg)


def endpoint_fate(X_low, X_high, margin: float = 0.1):
    """-1 near the low disk, +1 near the high disk, 0 undecided (mean progress)."""
    def fate(X):
        s, ok = progress(X, X_low, X_high)
        mp = float(np.mean(s[ok])) if ok.any() else 0.5
        return -1 if mp < margin else (1 if mp > 1 - margin else 0)
    return fate


def mountain_pass(D_low: TriMesh, D_high: TriMesh, cfg=None, n_slices: int = 16, slice_iters: int = 20,
                  fate=None, require_stable: bool = True, n_bisect: int = 14, iters: int = 300):
    """Unstable equilibrium between two disjoint stable disks with the same boundary."""
    if D_low.F.shape != D_high.F.shape or np.any(D_low.F != D_high.F):
        raise ConfigError("mountain pass needs meshes with identical connectivity")
    fixed = D_low.roles != FREE
    if np.abs(D_low.V[fixed] - D_high.V[fixed]).max(initial=0.0) > 1e-9:
        raise ConfigError("inputs do not share their boundary")
    gap = np.linalg.norm(D_low.V - D_high.V, axis=1)[~fixed]
    scale = max(np.abs(D_low.V).max(), 1.0)
    if gap.size == 0 or gap.min() <= 1e-9 * scale:
        raise ConfigError("inputs are not disjoint")
    both = TriMesh(np.concatenate([D_low.V, D_high.V]), np.concatenate([D_low.F, D_high.F + D_low.n_vertices]),
                   check=False)
    hit, _ = self_intersects(both)
    if hit:
        raise ConfigError("inputs are not disjoint")
    if require_stable:
        for name, D in (("low", D_low), ("high", D_high)):
            c = classify_stability(D)
            if c != STRICTLY_STABLE:
                raise ConfigError(f"D_{name} is {c}, expected strictly stable")
    X_low, X_high = D_low.V, D_high.V
    ts = np.arange(1, n_slices + 1) / (n_slices + 1)
    hw = 0.5 / (n_slices + 1)
    areas, slices = [], []
    for t in ts:
        X = _relax_slice(D_low, (1 - t) * X_low + t * X_high, X_low, X_high, t, hw, slice_iters)
        if slices and np.abs(X - slices[-1]).max() < 1e-9 * scale:
            raise PathCollapse(f"slices merged at t={t:.3f}")
        slices.append(X)
        areas.append(total_area(X, D_low.F))
    k = int(np.argmax(areas))
    log.info("mountain pass: max-area slice %d/%d (t=%.3f, area %.6g)", k + 1, n_slices, ts[k], areas[k])
    lo = ts[k - 1] if k > 0 else 0.0
    hi = ts[k + 1] if k + 1 < n_slices else 1.0
    fate = fate or endpoint_fate(X_low, X_high)

    def family(t):
        return D_low.copy((1 - t) * X_low + t * X_high)

    res = mountain_pass_family(family, lo, hi, fate, n_bisect=n_bisect, iters=iters, newton_cfg=cfg)
    if res.classification not in (UNSTABLE, NEAR_DEGENERATE):
        log.warning("mountain pass ended at a %s equilibrium", res.classification)
    return res
