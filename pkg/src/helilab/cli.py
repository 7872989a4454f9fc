"""Configuration-driven experiment runner.

Config grammar (plain text, one ``key = value`` per line)::

    # comment
    [section]
    key = value

Numeric values may use the token ``pi``: ``6pi``, ``6*pi``, ``pi/2``,
``1.5 pi``.  Lists are comma separated.  Any key can be overridden from the
environment as ``HELILAB_<SECTION>_<KEY>`` (for example
``HELILAB_GEOMETRY_R=8pi``).  Sections and keys are listed in DEFAULTS.

Exit codes: 0 all requested checks pass, 1 a check failed, 2 a solver did
not converge, 3 bad configuration or input.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import logging
import math
import os
import re
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import assembly as asm
from . import geometry as geo
from . import jacobi
from . import mesh as msh
from . import solver
from . import verify as ver
from .errors import (BarrierInfeasible, ConfigError, ConstraintUnsatisfiable, Diverged, HelilabError, NoConvergence,
                     ParseError, SingularSystem)

log = logging.getLogger(__name__)

EXIT_OK, EXIT_VERIFY, EXIT_SOLVER, EXIT_CONFIG = 0, 1, 2, 3
STAGES = ("gen-boundary", "seed", "solve", "refine", "assemble", "tile", "verify")

DEFAULTS = {
    "geometry": {"R": "6pi", "h": "pi", "n": "216", "smoothing": "0"},
    "solver": {"handle": "bump", "residual_tol": "1e-8", "newton_iters": "30", "refine_levels": "0",
               "bracket": "0.5, 4.0", "n_bisect": "14"},
    "barrier": {"neck": "1.0", "margin": "0.5"},
    "verify": {"n_dirs": "180", "copies": "3", "level": "0.3pi", "geodesic": "yes"},
    "sweep": {"R": "4pi, 6pi, 8pi", "hugging": "no"},
    "run": {"stages": ",".join(STAGES), "threads": "1", "seed": "0"},
}

_NUM = re.compile(r"^\s*([+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)?\s*\*?\s*(pi)?\s*(?:/\s*(\d+(?:\.\d*)?))?\s*$")


def parse_number(text: str) -> float:
    """Float with an optional ``pi`` factor and ``/d`` divisor."""
    m = _NUM.match(str(text))
    if not m or (m.group(1) is None and m.group(2) is None):
        raise ConfigError(f"not a number: {text!r}")
    val = float(m.group(1)) if m.group(1) is not None else 1.0
    if m.group(2):
        val *= math.pi
    if m.group(3):
        d = float(m.group(3))
        if d == 0:
            raise ConfigError(f"division by zero in {text!r}")
        val /= d
    return val


def parse_list(text: str):
    return [parse_number(t) for t in str(text).split(",") if t.strip()]


def parse_bool(text: str) -> bool:
    t = str(text).strip().lower()
    if t in ("1", "yes", "true", "on"):
        return True
    if t in ("0", "no", "false", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


@dataclass
class ExperimentConfig:
    R: float = 6 * math.pi
    h: float = math.pi
    n: int = 216
    smoothing: float = 0.0
    handle: str = "bump"
    residual_tol: float = 1e-8
    newton_iters: int = 30
    refine_levels: int = 0
    bracket: tuple = (0.5, 4.0)
    n_bisect: int = 14
    neck: float = 1.0
    margin: float = 0.5
    n_dirs: int = 180
    copies: int = 3
    level: float = 0.3 * math.pi
    geodesic: bool = True
    sweep_R: list = field(default_factory=lambda: [4 * math.pi, 6 * math.pi, 8 * math.pi])
    sweep_hugging: bool = False
    stages: list = field(default_factory=lambda: list(STAGES))
    threads: int = 1
    seed: int = 0

    def validate(self):
        if not (self.R > 0 and self.h > 0):
            raise ConfigError("R and h must be positive")
        if self.n < 24:
            raise ConfigError("n must be >= 24")
        if self.handle not in ("bump", "none", "outer"):
            raise ConfigError(f"unknown handle {self.handle!r}")
        if self.copies < 1 or self.copies % 2 == 0:
            raise ConfigError("copies must be odd and positive")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if self.refine_levels < 0:
            raise ConfigError("refine_levels must be >= 0")
        bad = [s for s in self.stages if s not in STAGES]
        if bad:
            raise ConfigError(f"unknown stages {bad}; choose from {STAGES}")
        if not 0 < self.bracket[0] < self.bracket[1]:
            raise ConfigError("bracket must be increasing and positive")
        return self


def load_config(path=None, environ=None) -> ExperimentConfig:
    """Read a config file (optional), apply HELILAB_ overrides, return a validated config."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    cp.read_dict(DEFAULTS)
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        try:
            cp.read_string(p.read_text())
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse {p}: {exc}") from exc
        for sec in cp.sections():
            if sec not in DEFAULTS:
                raise ConfigError(f"unknown section [{sec}]")
            for key in cp[sec]:
                if key not in DEFAULTS[sec]:
                    raise ConfigError(f"unknown key {key!r} in [{sec}]")
    env = os.environ if environ is None else environ
    for name, value in env.items():
        if not name.startswith("HELILAB_"):
            continue
        sec, _, key = name[len("HELILAB_"):].partition("_")
        sec = sec.lower()
        if sec not in DEFAULTS:
            continue
        match = {k.lower(): k for k in DEFAULTS[sec]}.get(key.lower())
        if match is None:
            raise ConfigError(f"environment override {name} names no config key")
        cp[sec][match] = value
    g, s, b, v, sw, r = (cp[k] for k in ("geometry", "solver", "barrier", "verify", "sweep", "run"))
    try:
        br = parse_list(s["bracket"])
        if len(br) != 2:
            raise ConfigError("bracket needs two values")
        cfg = ExperimentConfig(
            R=parse_number(g["R"]), h=parse_number(g["h"]), n=int(parse_number(g["n"])),
            smoothing=parse_number(g["smoothing"]), handle=s["handle"].strip(),
            residual_tol=parse_number(s["residual_tol"]), newton_iters=int(parse_number(s["newton_iters"])),
            refine_levels=int(parse_number(s["refine_levels"])), bracket=tuple(br),
            n_bisect=int(parse_number(s["n_bisect"])), neck=parse_number(b["neck"]), margin=parse_number(b["margin"]),
            n_dirs=int(parse_number(v["n_dirs"])), copies=int(parse_number(v["copies"])),
            level=parse_number(v["level"]), geodesic=parse_bool(v["geodesic"]), sweep_R=parse_list(sw["R"]),
            sweep_hugging=parse_bool(sw["hugging"]),
            stages=[t.strip() for t in r["stages"].split(",") if t.strip()],
            threads=int(parse_number(r["threads"])), seed=int(parse_number(r["seed"])))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg.validate()


# ---------------------------------------------------------------------------
# pipeline pieces


class SolverFailure(HelilabError):
    pass


def make_gamma(cfg: ExperimentConfig, R=None):
    return geo.boundary_curve(cfg.R if R is None else R, cfg.h, cfg.n, cfg.smoothing)


def solve_disk(gamma, cfg: ExperimentConfig):
    """Seed and solve for D according to the configured handle."""
    if cfg.handle == "bump":
        res = solver.find_handle_disk(gamma, bracket=cfg.bracket, n_bisect=cfg.n_bisect,
                                      refine_levels=cfg.refine_levels, tol=cfg.residual_tol,
                                      newton_iters=cfg.newton_iters)
    elif cfg.handle == "outer":
        res = solver.find_hugging_disk(gamma, geo.catenoid_annulus(gamma.R, cfg.neck, cfg.margin),
                                       tol=cfg.residual_tol)
    else:
        seed = solver.initial_disk(gamma, "none")
        scfg = solver.SolveConfig(max_iters=500, residual_tol=cfg.residual_tol, containment_weight=1e3,
                                  seed=cfg.seed)
        res = solver.minimize_area(seed, scfg)
    if not res.converged:
        raise SolverFailure(f"solver stopped at residual {res.residual:.3e}")
    return res


def _z_lo(h):
    # a height-pi slab centred on the x-axis level
    return -0.5 * math.pi


def verify_D(D: msh.TriMesh, summary: ver.Summary, cfg: ExperimentConfig, reports: Path | None = None,
             result: solver.SolveResult | None = None, M=None):
    """Checks that apply to a solved disk D (and its double M)."""
    R = float(D.meta.get("R", np.hypot(D.V[:, 0], D.V[:, 1]).max()))
    h = float(D.meta.get("h", cfg.h))
    if result is not None:
        summary.add("solve-converged", result.converged, f"residual={result.residual:.3e}")
    si, wit = msh.self_intersects(D)
    summary.add("embedded", not si, f"witnesses={len(wit)}")
    if reports is not None and si:
        msh.write_witness_csv(reports / "self_intersections.csv", wit)
    free = D.roles == msh.FREE
    gap = geo.vertical_gap(D.V[free])
    mg = float(np.nanmin(gap)) if np.isfinite(gap).any() else float("nan")
    summary.add("containment", mg >= -1e-6, f"min_gap={mg:.3e}")
    if M is None:
        M = asm.assemble_M(D)
    chi, gen, loops = msh.euler_characteristic(M), msh.genus_with_boundary(M), len(M.boundary_loops())
    summary.add("topology", chi == -1 and gen == 1 and loops == 1, f"genus={gen} chi={chi} loops={loops}")
    eig = jacobi.first_eigenpair(D)
    cls = jacobi.classify_stability(D, eig=eig)
    summary.add("stability-unstable", cls == "unstable", f"lambda1={eig.lambda1:.6g} class={cls}")
    census = ver.vertical_tangent_census(D, cfg.n_dirs)
    k_y = cfg.n_dirs // 2
    fy = census.interior[k_y]
    fx = len(fy) == 1 and abs(fy[0].position[0]) < 0.1 and abs(fy[0].position[2]) < 0.1
    summary.add("vertical-tangent-census", census.max_interior <= 2 and census.z_bound_ok,
                f"max_per_direction={census.max_interior} z_bound_ok={census.z_bound_ok}")
    summary.add("census-fy-fixed-point", fx, f"clusters={len(fy)}")
    N = asm.tile_screw(M, h, cfg.copies)
    slab, detail = ver.slab_census(N, _z_lo(h), cfg.n_dirs, return_detail=True)
    summary.add("slab-census<=16", slab <= 16, f"max={slab} off_axis_max={int(detail['off_axis'].max())}")
    L0 = ver.level_set(M, 0.0)
    ok0 = L0.count("x-axis") == 1 and L0.count("curve", closed=True) == 1 and L0.x_crossings == 2 \
        and L0.count("curve", closed=False) == 0
    summary.add("level-set-c0", ok0, f"closed={L0.count('curve', closed=True)} x_crossings={L0.x_crossings}")
    c = cfg.level + 1e-9
    Lc = ver.level_set(M, c)
    okc = Lc.count("curve", closed=False) == 1 and Lc.count("curve", closed=True) == 0
    summary.add("level-set-generic", okc, f"c={c:.6g} open={Lc.count('curve', closed=False)} rim={Lc.count('rim')}")
    pitch = ver.pitch_estimate(D, 2 * R / 3)
    summary.add("pitch", abs(pitch.slope - 1) < 0.05, f"slope={pitch.slope:.5f}")
    cr = ver.curvature_report(D)
    ang = cr.max_angle_deg[np.isfinite(cr.max_angle_deg)]
    outer = float(ang[-1]) if ang.size else float("nan")
    summary.add("outer-normal-angle<10deg", outer < 10, f"angle={outer:.3f} max_B={cr.max_B:.4g}")
    row = dict(faces=D.n_faces, lambda1=eig.lambda1, max_B=cr.max_B, pitch_slope=pitch.slope,
               slab_max=slab, census_max=census.max_interior)
    try:
        bar = geo.catenoid_annulus(R, cfg.neck, cfg.margin)
        hit = ver.annular_intersection_test(D, [bar])[0]
        summary.add("annular-intersection", hit, "")
    except BarrierInfeasible as exc:
        log.info("annular test skipped: %s", exc)
    if h > 2 * math.pi:
        # a slice inside 2 pi < z < 3 pi, nudged off the mesh vertices
        th = min(2.75 * math.pi, 2 * math.pi + 0.75 * (h - 2 * math.pi)) + 1.234e-6
        s = ver.axis_slice_analysis(D, th)
        summary.add("axis-slice-graph", s.n_curves == 1 and s.graph_property,
                    f"theta={th:.6g} curves={s.n_curves}")
    if cfg.geodesic:
        g = asm.shortest_closed_geodesic(D)
        summary.add("geodesic-midpoint-on-y", g.midpoint_error < 0.05 * g.length,
                    f"length={g.length:.6g} midpoint_error={g.midpoint_error:.3e}")
        row["geodesic_length"] = g.length
        if reports is not None:
            g.write_csv(reports / "geodesic.csv")
    if reports is not None:
        census.write_csv(reports / "census.csv")
        eig.write_csv(reports / "eigen.csv")
        _write_rows(reports / "levels.csv", [
            dict(c=0.0, component=i, tag=k.tag, closed=int(k.closed)) for i, k in enumerate(L0.components)] + [
            dict(c=c, component=i, tag=k.tag, closed=int(k.closed)) for i, k in enumerate(Lc.components)])
        _write_rows(reports / "pitch.csv", [dict(radius=float(r), slope=float(s))
                                            for r, s in zip(pitch.radii, pitch.slopes)])
    return row


def verify_generic(m: msh.TriMesh, summary: ver.Summary, cfg: ExperimentConfig, z_lo=None):
    """Checks for an externally produced mesh: topology counts and the slab census."""
    chi, gen, loops = msh.euler_characteristic(m), msh.genus_with_boundary(m), len(m.boundary_loops())
    summary.add("topology-counts", True, f"genus={gen} chi={chi} loops={loops} faces={m.n_faces}")
    zl = _z_lo(cfg.h) if z_lo is None else z_lo
    slab, detail = ver.slab_census(m, zl, cfg.n_dirs, return_detail=True)
    summary.add("slab-census<=16", slab <= 16, f"max={slab} off_axis_max={int(detail['off_axis'].max())}")
    return dict(genus=gen, chi=chi, loops=loops, slab_max=slab, off_axis_max=int(detail["off_axis"].max()))


def _write_rows(path, rows):
    keys = []
    for r in rows:
        keys += [k for k in r if k not in keys]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys)
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(float(v)) if isinstance(v, (float, np.floating)) else v) for k, v in r.items()})


def _layout(out: Path):
    (out / "meshes").mkdir(parents=True, exist_ok=True)
    (out / "reports").mkdir(exist_ok=True)
    return out


def _default_out():
    return Path("runs") / time.strftime("run-%Y%m%d-%H%M%S")


def run_pipeline(cfg: ExperimentConfig, out: Path) -> int:
    """The staged pipeline; returns an exit code."""
    out = _layout(Path(out))
    stages = set(cfg.stages)
    summary = ver.Summary()
    gamma = make_gamma(cfg)
    if "gen-boundary" in stages:
        gamma.write(out / "boundary.txt")
        log.info("boundary written: %d vertices", gamma.n)
    if not stages - {"gen-boundary"}:
        return EXIT_OK
    res = D = M = None
    if "seed" in stages:
        handle = solver.Bump(0.5 * sum(cfg.bracket)) if cfg.handle == "bump" else cfg.handle
        seed = solver.initial_disk(gamma, handle)
        msh.export_mesh(seed, out / "meshes" / "seed.ply")
    if "solve" in stages:
        level_cfg = cfg if "refine" in stages else _replace(cfg, refine_levels=0)
        res = solve_disk(gamma, level_cfg)
        D = res.mesh
        res.write_history(out / "reports" / "history.csv")
        msh.export_mesh(D, out / "meshes" / "D.ply")
    if D is None and stages & {"assemble", "tile", "verify"}:
        p = out / "meshes" / "D.ply"
        if not p.is_file():
            raise ConfigError("later stages need the solve stage or an existing meshes/D.ply")
        D = msh.import_mesh(p)
    if stages & {"assemble", "tile"}:
        M = asm.assemble_M(D)
        msh.export_mesh(M, out / "meshes" / "M.ply")
    if "tile" in stages:
        N = asm.tile_screw(M, float(D.meta.get("h", cfg.h)), cfg.copies)
        msh.export_mesh(N, out / "meshes" / "N.ply")
    if "verify" in stages:
        row = verify_D(D, summary, cfg, out / "reports", res, M)
        _write_rows(out / "reports" / "verify.csv", [dict(R=cfg.R, h=cfg.h, **row)])
    summary.write(out / "summary.txt")
    return EXIT_OK if summary.passed else EXIT_VERIFY


def _replace(cfg, **kw):
    from dataclasses import replace

    return replace(cfg, **kw)


def sweep_row(args):
    cfg, R = args
    gamma = make_gamma(cfg, R)
    res = solver.find_handle_disk(gamma, bracket=cfg.bracket, n_bisect=cfg.n_bisect,
                                  refine_levels=cfg.refine_levels, tol=cfg.residual_tol,
                                  newton_iters=cfg.newton_iters)
    D = res.mesh
    g = asm.shortest_closed_geodesic(D)
    cr = ver.curvature_report(D)
    p = ver.pitch_estimate(D, 2 * R / 3)
    row = dict(R=R, h=cfg.h, faces=D.n_faces, converged=int(res.converged), lambda1=res.lambda1,
               area=res.final_area, geodesic_length=g.length, max_B=cr.max_B, pitch_slope=p.slope)
    try:
        bar = geo.catenoid_annulus(R, cfg.neck, cfg.margin)
        row["annular"] = int(ver.annular_intersection_test(D, [bar])[0])
    except BarrierInfeasible:
        bar = None
        row["annular"] = -1
    if cfg.sweep_hugging and bar is not None:
        hs = solver.find_hugging_disk(gamma, bar, tol=cfg.residual_tol)
        row["hug_converged"] = int(hs.converged)
        row["hug_lambda1"] = hs.lambda1
        row["hug_annular"] = int(ver.annular_intersection_test(hs.mesh, [bar])[0])
        try:
            row["hug_geodesic_length"] = asm.shortest_closed_geodesic(hs.mesh).length
        except HelilabError as exc:
            log.info("geodesic on the hugging disk failed: %s", exc)
            row["hug_geodesic_length"] = float("nan")
    return row


def run_sweep(cfg: ExperimentConfig, out: Path) -> int:
    out = _layout(Path(out))
    jobs = [(cfg, R) for R in cfg.sweep_R]
    if cfg.threads > 1:
        with ProcessPoolExecutor(max_workers=cfg.threads) as ex:
            rows = list(ex.map(sweep_row, jobs))
    else:
        rows = [sweep_row(j) for j in jobs]
    _write_rows(out / "sweep.csv", rows)
    summary = ver.Summary()
    summary.add("sweep-converged", all(r["converged"] for r in rows), f"runs={len(rows)}")
    L = np.array([r["geodesic_length"] for r in rows])
    if len(L) > 1:
        spread = float(L.max() / L.min() - 1)
        summary.add("geodesic-length-bounded", spread < 0.2, f"spread={spread:.4f}")
        B = np.array([r["max_B"] for r in rows])
        summary.add("max-B-uniform", float(B.max() / B.min() - 1) < 0.15, f"spread={B.max() / B.min() - 1:.4f}")
    summary.add("pitch", all(abs(r["pitch_slope"] - 1) < 0.05 for r in rows), "")
    summary.write(out / "summary.txt")
    return EXIT_OK if summary.passed else EXIT_VERIFY


# ---------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _common(p):
    p.add_argument("--config", help="config file")
    p.add_argument("--out", help="output directory")
    p.add_argument("--threads", type=int, help="worker processes for sweeps (1 = reproducible serial mode)")
    p.add_argument("--seed", type=int, help="random seed recorded with the run")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    ap = _Parser(prog="helilab", description="Genus-one helicoid laboratory")
    sub = ap.add_subparsers(dest="cmd", parser_class=_Parser)
    p = sub.add_parser("run", help="staged pipeline from a config")
    _common(p)
    p.add_argument("--stage", nargs="+", choices=STAGES, help="subset of stages to run")
    p = sub.add_parser("gen-boundary", help="write the boundary curve")
    _common(p)
    p = sub.add_parser("solve", help="solve for the disk D")
    _common(p)
    p.add_argument("--boundary", help="boundary text file (default: from config)")
    p.add_argument("--mesh", help="seed mesh to solve from")
    p.add_argument("--backend", choices=solver.BACKENDS)
    p.add_argument("--handle", choices=("bump", "none", "outer"))
    p = sub.add_parser("assemble", help="double D into M and tile")
    _common(p)
    p.add_argument("--mesh", required=True)
    p.add_argument("--copies", type=int)
    p = sub.add_parser("verify", help="run checks on a mesh")
    _common(p)
    p.add_argument("--mesh", required=True)
    p.add_argument("--generic", action="store_true", help="only topology counts and slab census")
    p.add_argument("--z-lo", type=parse_number, help="lower end of the census slab")
    p = sub.add_parser("sweep", help="R sweep into sweep.csv")
    _common(p)
    p = sub.add_parser("export", help="convert a mesh or write the helicoid control")
    _common(p)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--mesh")
    src.add_argument("--helicoid-control", action="store_true", help="tiled exact helicoid")
    p.add_argument("--format", choices=("obj", "ply"), default="ply")
    p.add_argument("--output", help="output file (default: <out>/meshes/<name>.<format>)")
    return ap


def _config_from_args(args):
    cfg = load_config(getattr(args, "config", None))
    if getattr(args, "threads", None) is not None:
        cfg.threads = args.threads
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "stage", None):
        cfg.stages = list(args.stage)
    if getattr(args, "handle", None):
        cfg.handle = args.handle
    return cfg.validate()


def _dispatch(args) -> int:
    cfg = _config_from_args(args)
    out = Path(args.out) if args.out else _default_out()
    if args.cmd == "run":
        return run_pipeline(cfg, out)
    if args.cmd == "sweep":
        return run_sweep(cfg, out)
    _layout(out)
    if args.cmd == "gen-boundary":
        make_gamma(cfg).write(out / "boundary.txt")
        return EXIT_OK
    if args.cmd == "solve":
        gamma = geo.BoundaryCurve.read(args.boundary) if args.boundary else make_gamma(cfg)
        if args.mesh is None and args.backend == "newton":
            raise ConfigError("the newton backend needs a seed mesh (--mesh)")
        if args.mesh is not None:
            seed = msh.import_mesh(args.mesh)
            backend = args.backend or "newton"
            scfg = solver.SolveConfig(backend=backend, residual_tol=cfg.residual_tol, seed=cfg.seed,
                                      max_iters=cfg.newton_iters if backend == "newton" else 500)
            res = solver.minimize_area(seed, scfg)
            if not res.converged:
                raise SolverFailure(f"solver stopped at residual {res.residual:.3e}")
        else:
            cfg.R, cfg.h = gamma.R, gamma.h
            res = solve_disk(gamma, cfg)
        msh.export_mesh(res.mesh, out / "meshes" / "D.ply")
        res.write_history(out / "reports" / "history.csv")
        return EXIT_OK
    if args.cmd == "assemble":
        D = _read_mesh(args.mesh)
        M = asm.assemble_M(D)
        msh.export_mesh(M, out / "meshes" / "M.ply")
        N = asm.tile_screw(M, float(D.meta.get("h", cfg.h)), args.copies or cfg.copies)
        msh.export_mesh(N, out / "meshes" / "N.ply")
        return EXIT_OK
    if args.cmd == "verify":
        m = _read_mesh(args.mesh)
        summary = ver.Summary()
        if args.generic or m.meta.get("kind") not in ("bump", "none", "outer"):
            row = verify_generic(m, summary, cfg, args.z_lo)
        else:
            row = verify_D(m, summary, cfg, out / "reports")
        _write_rows(out / "reports" / "verify.csv", [row])
        summary.write(out / "summary.txt")
        return EXIT_OK if summary.passed else EXIT_VERIFY
    if args.cmd == "export":
        if args.helicoid_control:
            R, h = cfg.R, cfg.h
            # even u count so that the z-axis is a mesh line
            nv = max(8, int(round(cfg.n / 8)))
            H = msh.helicoid_patch(-R, R, -h, h, 4 * nv, nv, meta={"R": R, "h": h, "kind": "helicoid"})
            m, name = asm.tile_screw(H, h, cfg.copies), "helicoid_control"
        else:
            m, name = _read_mesh(args.mesh), Path(args.mesh).stem
        dest = Path(args.output) if args.output else out / "meshes" / f"{name}.{args.format}"
        msh.export_mesh(m, dest, args.format)
        return EXIT_OK
    raise ConfigError("a subcommand is required")


def _read_mesh(path):
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"mesh file not found: {p}")
    return msh.import_mesh(p)


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.cmd is None:
        ap.print_help()
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _dispatch(args)
    except (ConfigError, ParseError, BarrierInfeasible) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverFailure, NoConvergence, Diverged, SingularSystem, ConstraintUnsatisfiable) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except HelilabError as exc:
        print(f"verification error: {exc}", file=sys.stderr)
        return EXIT_VERIFY


if __name__ == "__main__":
    sys.exit(main())
