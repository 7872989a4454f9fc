import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helilab import assembly, geometry as g, mesh as msh, solver, verify
from helilab.errors import ConfigError, PairingMissing


def _quadrant(nu, nv, R=2 * np.pi, h=np.pi):
    m = msh.helicoid_patch(0, R, 0, h, nu, nv, meta={"boundary": ["helicoid", R]})
    X = m.V.copy()
    free = m.roles == msh.FREE
    U = np.hypot(X[:, 0], X[:, 1])
    X[free, 2] += 0.5 * np.sin(np.pi * U[free] / R) * np.sin(X[free, 2])
    return m.copy(X)


@pytest.mark.parametrize("handle", ["none", solver.Bump(1.5)])
def test_initial_disk_is_symmetric_disk(gamma, handle):
    m = solver.initial_disk(gamma, handle)
    assert msh.euler_characteristic(m) == 1 and len(m.boundary_loops()) == 1
    assert msh.genus_with_boundary(m) == 0
    assert solver.check_pairing(m)
    assert verify.rotation_invariance_error(m, "rotY") < 1e-9
    # seeds stay in closure(H+)
    free = m.roles == msh.FREE
    assert np.nanmin(g.vertical_gap(m.V[free])) > -1e-12


def test_bump_seed_closes_up_to_genus_one(gamma):
    m = solver.initial_disk(gamma, solver.Bump(1.5))
    M = assembly.assemble_M(m)
    assert msh.genus_with_boundary(M) == 1


def test_bad_bump_amplitude(gamma):
    with pytest.raises(ConfigError):
        solver.initial_disk(gamma, solver.Bump(100.0))
    with pytest.raises(ConfigError):
        solver.SolveConfig(backend="magic").validate()


def test_flat_disk_area():
    m = msh.disk_mesh(1.0, 41)
    assert m.n_faces > 9000
    rng = np.random.default_rng(0)
    X = m.V.copy()
    free = m.roles == msh.FREE
    X[free, 2] = 0.2 * (1 - np.hypot(X[free, 0], X[free, 1]) ** 2) + 1e-3 * rng.normal(size=free.sum())
    res = solver.minimize_area(m.copy(X), solver.SolveConfig(residual_tol=1e-7, equivariance=False))
    assert res.converged
    assert res.final_area == pytest.approx(np.pi, rel=5e-3)
    areas = [a for _, a, _, _ in res.history]
    assert np.all(np.diff(areas) <= 1e-12 * areas[0])
    fixed = m.roles != msh.FREE
    np.testing.assert_array_equal(res.mesh.V[fixed], m.V[fixed])


def test_quadrant_recovers_helicoid():
    devs = []
    for nu, nv in ((20, 10), (40, 20)):
        r = solver.minimize_area(_quadrant(nu, nv), solver.SolveConfig(max_iters=60, residual_tol=1e-9))
        n = solver.newton_refine(r.mesh, solver.SolveConfig(backend="newton", max_iters=30, residual_tol=1e-10,
                                                            classify=False))
        assert n.converged
        devs.append(g.distance_to_helicoid(n.mesh.V).max())
    assert devs[1] < 0.5 * devs[0]


def test_newton_on_noisy_helicoid():
    m = msh.helicoid_patch(0.5, 2.0, 0, 1.5, 20, 20)
    rng = np.random.default_rng(1)
    N = msh.vertex_normals(m.V, m.F)
    free = m.roles == msh.FREE
    X = m.V + (1e-3 * rng.normal(size=m.n_vertices) * free)[:, None] * N
    res = solver.newton_refine(m.copy(X), solver.SolveConfig(backend="newton", max_iters=20, residual_tol=1e-9))
    assert res.converged and res.residual < 1e-8
    assert g.distance_to_helicoid(res.mesh.V).max() < 5e-3


def test_newton_flat_disk_unchanged():
    m = msh.disk_mesh(1.0, 8)
    res = solver.newton_refine(m, solver.SolveConfig(backend="newton", residual_tol=1e-9))
    assert res.converged and res.iterations == 0
    np.testing.assert_array_equal(res.mesh.V, m.V)


def test_handle_disk(handle_result, D):
    assert handle_result.converged and handle_result.residual < 1e-8
    assert handle_result.classification == "unstable" and handle_result.lambda1 < 0
    free = D.roles == msh.FREE
    assert np.nanmin(g.vertical_gap(D.V[free])) > -1e-6
    assert verify.rotation_invariance_error(D, "rotY") < 1e-9


def test_project_equivariant(D):
    p = solver.project_equivariant(D)
    assert np.abs(p.V - D.V).max() < 1e-14
    with pytest.raises(PairingMissing):
        solver.project_equivariant(msh.disk_mesh(1.0, 3))


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(1e-6, 1e-2))
def test_projection_makes_invariant(D, seed, eps):
    rng = np.random.default_rng(seed)
    X = D.V.copy()
    free = D.roles == msh.FREE
    sheet = free & (X[:, 0] > 0)
    X[sheet] += eps * rng.normal(size=(sheet.sum(), 3))
    p = solver.project_equivariant(D.copy(X))
    img = p.V[p.pair] * np.array([-1.0, 1.0, -1.0])
    assert np.abs(img - p.V).max() < 1e-12
    q = solver.project_equivariant(p)
    assert np.abs(q.V - p.V).max() < 1e-14


def test_hugging_disk(hug_result, barrier):
    assert hug_result.converged
    assert hug_result.classification == "strictly_stable"
    X = hug_result.mesh.V
    free = hug_result.mesh.roles == msh.FREE
    sd = barrier.signed_distance(X[free])
    assert np.min(sd[np.isfinite(sd)]) >= -1e-6
    # most of the disk lies on the flat strips of the xz-plane
    assert np.median(np.abs(X[free, 1])) < 0.05


def test_max_iters_returns_unconverged():
    res = solver.minimize_area(_quadrant(10, 5), solver.SolveConfig(max_iters=1, residual_tol=1e-14))
    assert not res.converged and res.iterations == 1


def test_history_csv(tmp_path, handle_result):
    handle_result.write_history(tmp_path / "h.csv")
    with open(tmp_path / "h.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["iter", "area", "residual", "violation"] and len(rows) > 1


def test_shooting_observable_brackets(gamma):
    lo = solver.initial_disk(gamma, solver.Bump(0.5))
    hi = solver.initial_disk(gamma, solver.Bump(4.0))
    obs = solver.y_observable(lo)
    assert obs(lo.V) < obs(hi.V)
