"""Analytic geometry of the helicoid H = {(u cos v, u sin v, v)}.

Covers the screw motion and the three axis rotations, the angle function on
the positive side H+, the bowtie boundary curve Gamma(R, h) and the clipped
catenoid annuli used as barriers.

Box coordinates: a point of the closed slab region H+ is written as (r, theta, w)
with x + iy = r exp(i theta), z = theta - pi*w and 0 <= w <= 1.  The sheet w = 0
is the part of H swept by the upper helical arc, w = 1 the part swept by the
lower one.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import BarrierInfeasible, ConfigError, DomainError, ParseError

log = logging.getLogger(__name__)

TAGS = (
    "upper-helical-arc",
    "lower-helical-arc",
    "x-axis-segment",
    "z-axis-segment",
    "top-edge",
    "bottom-edge",
    "corner",
    "origin-double-point",
)
RUN_NAMES = ("x+", "helix-upper", "top", "z+", "x-", "helix-lower", "bottom", "z-")
_RUN_TAGS = {
    "x+": "x-axis-segment",
    "helix-upper": "upper-helical-arc",
    "top": "top-edge",
    "z+": "z-axis-segment",
    "x-": "x-axis-segment",
    "helix-lower": "lower-helical-arc",
    "bottom": "bottom-edge",
    "z-": "z-axis-segment",
}


def helicoid_point(u, v):
    """F(u, v) = (u cos v, u sin v, v); broadcasts over arrays."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    return np.stack(np.broadcast_arrays(u * np.cos(v), u * np.sin(v), v), axis=-1)


def box_to_xyz(r, theta, w):
    r, theta, w = np.broadcast_arrays(np.asarray(r, float), np.asarray(theta, float), np.asarray(w, float))
    return np.stack([r * np.cos(theta), r * np.sin(theta), theta - np.pi * w], axis=-1)


# ---------------------------------------------------------------------------
# symmetries


@dataclass(frozen=True)
class SymmetryElement:
    """One of screw(s), rotX, rotY, rotZ, identity."""

    kind: str
    s: float = 0.0

    def __post_init__(self):
        if self.kind not in ("screw", "rotX", "rotY", "rotZ", "identity"):
            raise ConfigError(f"unknown symmetry kind {self.kind!r}")

    def apply(self, p):
        return apply_symmetry(self, p)

    def then(self, other: "SymmetryElement") -> "SymmetryElement":
        """Composition other o self, closed only for screws and identity."""
        if self.kind == "identity":
            return other
        if other.kind == "identity":
            return self
        if self.kind == other.kind == "screw":
            return screw(self.s + other.s)
        if self.kind == other.kind and self.kind.startswith("rot"):
            return IDENTITY
        raise NotImplementedError("composition outside the screw subgroup")

    @property
    def orientation_sign(self) -> int:
        """+1 if the map preserves the orientation of H, -1 otherwise."""
        return -1 if self.kind in ("rotX", "rotZ") else 1


def screw(s: float) -> SymmetryElement:
    return SymmetryElement("screw", float(s))


IDENTITY = SymmetryElement("identity")
ROT_X = SymmetryElement("rotX")
ROT_Y = SymmetryElement("rotY")
ROT_Z = SymmetryElement("rotZ")

_ROT_SIGNS = {
    "rotX": np.array([1.0, -1.0, -1.0]),
    "rotY": np.array([-1.0, 1.0, -1.0]),
    "rotZ": np.array([-1.0, -1.0, 1.0]),
    "identity": np.array([1.0, 1.0, 1.0]),
}


def apply_symmetry(g: SymmetryElement, p):
    p = np.asarray(p, dtype=float)
    if g.kind == "screw":
        c, s = math.cos(g.s), math.sin(g.s)
        x, y, z = p[..., 0], p[..., 1], p[..., 2]
        return np.stack([c * x - s * y, s * x + c * y, z + g.s], axis=-1)
    return p * _ROT_SIGNS[g.kind]


def rot_y_points(P):
    return np.asarray(P, float) * _ROT_SIGNS["rotY"]


def rot_z_points(P):
    return np.asarray(P, float) * _ROT_SIGNS["rotZ"]


# ---------------------------------------------------------------------------
# angle function and sides


def box_coordinates(P, eps: float = 1e-12):
    """Return (r, theta, w) for points P (..., 3).

    theta is the smallest lift of the polar angle with theta >= z, so points
    of H+ get 0 < w < 1 and points of H- get 1 < w < 2.  Undefined on Z, where
    theta is returned as nan.
    """
    P = np.asarray(P, dtype=float)
    x, y, z = P[..., 0], P[..., 1], P[..., 2]
    r = np.hypot(x, y)
    phi = np.arctan2(y, x)
    k = np.ceil((z - phi) / (2 * np.pi) - eps)
    theta = phi + 2 * np.pi * k
    w = (theta - z) / np.pi
    theta = np.where(r > 0, theta, np.nan)
    return r, theta, w


def angle_function(p, tol: float = 1e-9) -> float:
    """The continuous angle theta on closure(H+) minus Z, with theta(x,0,0) = 0 for x > 0."""
    p = np.asarray(p, dtype=float)
    r, theta, w = box_coordinates(p)
    if r <= tol:
        raise DomainError(f"point {p} lies on the z-axis")
    if w > 1 + tol / max(r, 1.0) and w < 2 - tol / max(r, 1.0):
        raise DomainError(f"point {p} lies in H-")
    if w >= 1.5:
        # on H from below the lift: w close to 2 means the sheet w = 0
        theta -= 2 * np.pi
    return float(theta)


def vertical_gap(P):
    """Signed vertical clearance to H: positive in H+, negative in H-."""
    r, theta, w = box_coordinates(P)
    plus = np.pi * np.minimum(w, 1 - w)
    minus = -np.pi * np.minimum(w - 1, 2 - w)
    return np.where(w <= 1, plus, minus)


def side_of_helicoid(p, tol: float = 1e-9) -> str:
    """Classify p as 'on', 'plus' (component of the positive y-axis) or 'minus'."""
    p = np.asarray(p, dtype=float)
    r = math.hypot(p[0], p[1])
    gap = float(vertical_gap(p))
    # vertical gap -> approximate normal distance
    dist = abs(gap) * r / math.sqrt(1 + r * r) if r > 0 else 0.0
    if dist <= tol:
        return "on"
    return "plus" if gap > 0 else "minus"


def distance_to_helicoid(P, iters: int = 30):
    """Euclidean distance from points to H by Newton on (u, v)."""
    P = np.atleast_2d(np.asarray(P, dtype=float))
    x, y, z = P[:, 0], P[:, 1], P[:, 2]
    # start from the nearest sheet along the vertical line
    r, theta, w = box_coordinates(P)
    v = np.where(w < 0.5, theta, np.where(w < 1.5, theta - np.pi, theta - 2 * np.pi))
    v = np.where(np.isfinite(v), v, z)
    u = x * np.cos(v) + y * np.sin(v)
    for _ in range(iters):
        c, s = np.cos(v), np.sin(v)
        dx, dy, dz = u * c - x, u * s - y, v - z
        gu = dx * c + dy * s
        gv = dx * (-u * s) + dy * (u * c) + dz
        huu = np.ones_like(u)
        huv = dx * (-s) + dy * c
        hvv = u * u + 1 + dx * (-u * c) + dy * (-u * s)
        det = huu * hvv - huv * huv
        det = np.where(np.abs(det) < 1e-300, 1e-300, det)
        du = (hvv * gu - huv * gv) / det
        dv = (huu * gv - huv * gu) / det
        u, v = u - du, v - dv
        if max(np.abs(du).max(), np.abs(dv).max()) < 1e-15:
            break
    return np.linalg.norm(helicoid_point(u, v) - P, axis=1)


# ---------------------------------------------------------------------------
# boundary curve


def run_counts(R: float, h: float, n: int, grading: float = 2.5) -> dict:
    """Edge counts per run for a target total of n vertices.

    The proportions follow one radial and one angular density; for h > pi the
    z-axis runs consist of the helix rows above |z| = pi plus a neck stretch below.
    """
    if n < 64:
        raise ConfigError("boundary curve needs n >= 64")

    # even counts put a grid vertex on the rotY-fixed point
    def counts(k):
        n_pi = max(4, 2 * int(round(20 * k)))
        n_x = max(3, int(round(29 * k)))
        n_neck = max(2, 2 * int(round(5 * k)))
        if h > np.pi:
            n_up = max(1, int(round(n_pi * (h - np.pi) / np.pi)))
            n_t, n_z = n_pi + n_up, n_neck + n_up
        else:
            n_up = 0
            n_t = max(4, 2 * int(round(n_pi * h / (2 * np.pi))))
            n_z = n_neck
        return dict(n_x=n_x, n_t=n_t, n_z=n_z, n_neck=n_neck, n_upper=n_up)

    k = 0.05
    while True:
        c = counts(k)
        total = 2 * (2 * c["n_x"] + c["n_t"] + c["n_z"])
        if total >= n:
            c["total"] = total
            c["grading"] = grading
            return c
        k *= 1.02


def graded_nodes(R: float, n_edges: int, grading: float):
    """Radii 0..R, denser near the axis where the curvature concentrates."""
    s = np.linspace(0.0, 1.0, n_edges + 1)
    if grading <= 0:
        return R * s
    out = R * np.expm1(grading * s) / np.expm1(grading)
    out[-1] = R
    return out


@dataclass
class BoundaryCurve:
    vertices: np.ndarray
    tags: list
    R: float
    h: float
    smoothing: float = 0.0

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise ConfigError("vertices must be (n, 3)")
        if len(self.tags) != len(self.vertices):
            raise ConfigError("one tag per vertex required")
        for t in self.tags:
            if t not in TAGS:
                raise ConfigError(f"unknown tag {t!r}")

    @property
    def n(self) -> int:
        return len(self.vertices)

    def corner_indices(self):
        return [i for i, t in enumerate(self.tags) if t in ("corner", "origin-double-point")]

    def runs(self) -> dict:
        """Split a sharp curve into its eight runs (endpoints included)."""
        if self.smoothing > 0:
            raise ConfigError("runs are defined for the sharp curve only")
        ci = self.corner_indices()
        if len(ci) != 8 or ci[0] != 0:
            raise ConfigError("sharp curve must start at the origin and have 8 corner occurrences")
        ci = ci + [self.n]
        out = {}
        for k, name in enumerate(RUN_NAMES):
            a, b = ci[k], ci[k + 1]
            idx = list(range(a, b + 1)) if b < self.n else list(range(a, b)) + [0]
            out[name] = self.vertices[idx]
        return out

    def to_text(self) -> str:
        lines = [f"GAMMA {float(self.R)!r} {float(self.h)!r} {float(self.smoothing)!r} {self.n}"]
        for p, t in zip(self.vertices, self.tags):
            lines.append(f"{float(p[0])!r} {float(p[1])!r} {float(p[2])!r} {t}")
        return "\n".join(lines) + "\n"

    def write(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_text())

    @classmethod
    def from_text(cls, text: str) -> "BoundaryCurve":
        rows = [ln.split() for ln in text.splitlines() if ln.strip()]
        if not rows or rows[0][0] != "GAMMA" or len(rows[0]) != 5:
            raise ParseError("missing 'GAMMA R h smoothing n' header")
        try:
            R, h, sm = (float(v) for v in rows[0][1:4])
            n = int(rows[0][4])
            verts = np.array([[float(v) for v in r[:3]] for r in rows[1:]])
            tags = [r[3] for r in rows[1:]]
        except (ValueError, IndexError) as exc:
            raise ParseError(f"malformed boundary file: {exc}") from exc
        if len(tags) != n or any(len(r) != 4 for r in rows[1:]):
            raise ParseError("vertex count does not match header")
        try:
            return cls(verts, tags, R, h, sm)
        except ConfigError as exc:
            raise ParseError(str(exc)) from exc

    @classmethod
    def read(cls, path) -> "BoundaryCurve":
        with open(path) as fh:
            return cls.from_text(fh.read())

    def total_curvature(self) -> float:
        P = self.vertices
        d = np.roll(P, -1, axis=0) - P
        d /= np.linalg.norm(d, axis=1)[:, None]
        c = np.clip(np.einsum("ij,ij->i", d, np.roll(d, 1, axis=0)), -1, 1)
        return float(np.arccos(c).sum())


def _sharp_curve(R, h, c):
    rho = graded_nodes(R, c["n_x"], c["grading"])
    if h > np.pi:
        th = np.concatenate([np.linspace(0, np.pi, c["n_t"] - c["n_upper"] + 1),
                             np.linspace(np.pi, h, c["n_upper"] + 1)[1:]])
        zl = np.linspace(0, np.pi, c["n_neck"] + 1)
        zz = np.concatenate([zl, th[th > np.pi + 1e-12]])
    else:
        th = np.linspace(0, h, c["n_t"] + 1)
        zz = np.linspace(0, h, c["n_z"] + 1)
    pts, tags = [], []

    def add(P, tag, first_tag):
        for k, p in enumerate(P[:-1]):
            pts.append(p)
            tags.append(first_tag if k == 0 else tag)

    zero = np.zeros_like(rho)
    add(np.stack([rho, zero, zero], 1), "x-axis-segment", "origin-double-point")
    add(helicoid_point(R, th), "upper-helical-arc", "corner")
    add(helicoid_point(rho[::-1], h), "top-edge", "corner")
    add(np.stack([0 * zz, 0 * zz, zz[::-1]], 1), "z-axis-segment", "corner")
    upper = np.array(pts)
    P = np.concatenate([upper, rot_y_points(upper)])
    tags = tags + [t.replace("upper", "lower").replace("top", "bottom") for t in tags]
    return P, tags


def _fillet_curve(R, h, n, rad):
    """Bowtie in the (u, v) plane with right-angle corners rounded, mapped by F."""
    corners = [(0, 0), (R, 0), (R, h), (0, h), (0, 0), (-R, 0), (-R, -h), (0, -h)]
    kinds = ["x-axis-segment", "upper-helical-arc", "top-edge", "z-axis-segment",
             "x-axis-segment", "lower-helical-arc", "bottom-edge", "z-axis-segment"]
    pieces = []
    m = len(corners)
    for k in range(m):
        P = np.array(corners[k], float)
        A = np.array(corners[k - 1], float)
        B = np.array(corners[(k + 1) % m], float)
        d1 = (P - A) / np.linalg.norm(P - A)
        d2 = (B - P) / np.linalg.norm(B - P)
        s0, s1 = P - rad * d1, P + rad * d2
        c = s0 + rad * d2
        a0 = math.atan2(*(s0 - c)[::-1])
        a1 = math.atan2(*(s1 - c)[::-1])
        da = (a1 - a0 + np.pi) % (2 * np.pi) - np.pi
        pieces.append(("corner", lambda t, c=c, a0=a0, da=da: c + rad * np.stack([np.cos(a0 + da * t), np.sin(a0 + da * t)], -1)))
        Bn = np.array(corners[(k + 1) % m], float)
        e0, e1 = s1, Bn - rad * d2
        pieces.append((kinds[k], lambda t, e0=e0, e1=e1: e0 + (e1 - e0) * t[:, None]))

    def length(fn):
        t = np.linspace(0, 1, 400)
        uv = fn(t)
        X = helicoid_point(uv[:, 0], uv[:, 1])
        return np.linalg.norm(np.diff(X, axis=0), axis=1).sum()

    L = np.array([length(fn) for _, fn in pieces])
    cnt = np.maximum(2, np.round(n * L / L.sum()).astype(int))
    pts, tags = [], []
    for (tag, fn), c in zip(pieces, cnt):
        t = np.linspace(0, 1, c + 1)[:-1]
        uv = fn(t)
        pts.append(helicoid_point(uv[:, 0], uv[:, 1]))
        tags += [tag] * c
    return np.concatenate(pts), tags


def boundary_curve(R: float, h: float, n: int = 216, smoothing: float = 0.0, grading: float = 2.5) -> BoundaryCurve:
    """Polyline realization of Gamma(R, h), or a filleted approximant when smoothing > 0.

    With smoothing = 0 the loop starts at the origin, runs out along X+, up the
    upper helical arc, back along the top edge and down Z+ to the origin again,
    then through the rotY images.  The vertex count is the smallest admissible
    count >= n (the runs must mirror under rotY and share nodes with the mesh grid).
    """
    if not (R > 0 and h > 0):
        raise ConfigError("R and h must be positive")
    if smoothing < 0 or smoothing >= 0.5 * min(R, h):
        raise ConfigError("smoothing must be in [0, min(R, h)/2)")
    if n < 64:
        raise ConfigError("boundary curve needs n >= 64")
    if smoothing == 0:
        c = run_counts(R, h, n, grading)
        P, tags = _sharp_curve(R, h, c)
    else:
        P, tags = _fillet_curve(R, h, n, smoothing)
    gamma = BoundaryCurve(P, tags, float(R), float(h), float(smoothing))
    log.debug("boundary curve R=%.4g h=%.4g: %d vertices", R, h, gamma.n)
    return gamma


def quadrant_boundary_nodes(R: float, h: float, nu: int, nv: int):
    """Boundary of the single quadrant F([0,R] x [0,h]) as (u, v) runs."""
    return np.linspace(0, R, nu + 1), np.linspace(0, h, nv + 1)


def cell_counts():
    """Vertex, edge and face counts of the cell structure of M = D + rotZ(D).

    Vertices: the origin, the four endpoints of X and Z inside the cylinder,
    and the four corners F(+-R, +-h).  Edges: X, Z, the two horizontal lines and
    the two helices, each split at its midpoint.  Faces: D and rotZ(D).
    """
    return 9, 12, 2


# ---------------------------------------------------------------------------
# catenoid barriers


@dataclass(frozen=True)
class CatenoidBarrier:
    center: tuple
    neck: float
    slab: tuple  # (z_lo, z_hi), absolute heights

    def radius_at(self, z):
        return self.neck * np.cosh((np.asarray(z, float) - self.center[2]) / self.neck)

    def in_slab(self, z):
        z = np.asarray(z, float)
        return (z >= self.slab[0]) & (z <= self.slab[1])

    def signed_distance(self, P):
        """Radial signed distance, negative inside the neck region within the slab.

        Outside the slab the value is +inf (no constraint).
        """
        P = np.asarray(P, float)
        rho = np.hypot(P[..., 0] - self.center[0], P[..., 1] - self.center[1])
        s = rho - self.radius_at(P[..., 2])
        return np.where(self.in_slab(P[..., 2]), s, np.inf)

    def level(self, P):
        """Smooth level function whose zero set is the untrimmed catenoid."""
        P = np.asarray(P, float)
        rho = np.hypot(P[..., 0] - self.center[0], P[..., 1] - self.center[1])
        return rho - self.radius_at(P[..., 2])

    def transformed(self, g: SymmetryElement) -> "CatenoidBarrier":
        c = apply_symmetry(g, np.array(self.center, float))
        lo, hi = self.slab
        ends = apply_symmetry(g, np.array([[self.center[0], self.center[1], lo], [self.center[0], self.center[1], hi]]))
        zs = sorted(ends[:, 2])
        return CatenoidBarrier(tuple(float(v) for v in c), self.neck, (float(zs[0]), float(zs[1])))

    def translated(self, d) -> "CatenoidBarrier":
        d = np.asarray(d, float)
        c = np.array(self.center) + d
        return CatenoidBarrier(tuple(float(v) for v in c), self.neck, (self.slab[0] + d[2], self.slab[1] + d[2]))

    def sample(self, n_phi: int = 64, n_z: int = 16):
        """Grid of points on the clipped annulus, shape (n_z, n_phi, 3)."""
        z = np.linspace(self.slab[0], self.slab[1], n_z)
        phi = np.linspace(0, 2 * np.pi, n_phi, endpoint=False)
        rr = self.radius_at(z)[:, None]
        return np.stack([self.center[0] + rr * np.cos(phi), self.center[1] + rr * np.sin(phi),
                         np.broadcast_to(z[:, None], (n_z, n_phi))], -1)


def catenoid_annulus(R: float, neck: float = 1.0, margin: float = 0.5, half_height: float = np.pi / 2) -> CatenoidBarrier:
    """Vertical catenoid centered at (0, R/2, 0), clipped to |z| <= half_height."""
    if neck <= 0:
        raise ConfigError("neck must be positive")
    clip_r = neck * math.cosh(half_height / neck)
    if R / 2 - clip_r <= margin:
        raise BarrierInfeasible(
            f"R={R:.4g} too small: clip radius {clip_r:.4g} leaves margin {R / 2 - clip_r:.3g} <= {margin}")
    return CatenoidBarrier((0.0, R / 2, 0.0), float(neck), (-half_height, half_height))
