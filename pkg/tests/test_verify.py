import numpy as np
import pytest

from helilab import assembly as A
from helilab import geometry as g
from helilab import mesh as msh
from helilab import solver
from helilab import verify as V
from helilab.errors import LevelOnVertex, NonTransverse

R6 = 6 * np.pi


@pytest.fixture(scope="module")
def census(D):
    return V.vertical_tangent_census(D, 180)


@pytest.fixture(scope="module")
def D3():
    return solver.find_handle_disk(g.boundary_curve(R6, 3 * np.pi, 216)).mesh


@pytest.fixture(scope="module")
def N(M):
    return A.tile_screw(M, np.pi, 3)


def test_census_bounds(census):
    assert census.max_interior <= 2
    assert census.z_bound_ok and census.pairs_opposite_ok and census.passed
    for cl in census.interior:
        for c in cl:
            assert abs(c.z) < 2 * np.pi + 0.1


def test_census_fy_fixed_point(D, census):
    fy = census.interior[90]
    assert len(fy) == 1
    ell = msh.mean_edge_length(D.V, D.F)
    assert np.linalg.norm(fy[0].position - D.V[D.meta["fixed_vertex"]]) < 2 * ell
    assert fy[0].position[1] > 0


def test_census_offset_invariance(D, census):
    other = V.vertical_tangent_census(D, 180, offset=np.pi / 720)
    assert other.max_interior == census.max_interior


def test_census_needs_directions(D):
    with pytest.raises(ValueError):
        V.vertical_tangent_census(D, 10)


def test_census_csv(tmp_path, census):
    census.write_csv(tmp_path / "c.csv")
    assert (tmp_path / "c.csv").read_text().startswith("direction,angle")


def test_slab_census(N):
    mx, det = V.slab_census(N, -np.pi / 2, return_detail=True)
    assert 1 <= mx <= 16


def test_slab_census_helicoid_control():
    H = msh.helicoid_patch(-R6, R6, -np.pi, np.pi, 120, 40, meta={"R": R6})
    NH = A.tile_screw(H, np.pi, 3)
    mx, det = V.slab_census(NH, -np.pi / 2, return_detail=True)
    assert det["off_axis"].max() == 0


def test_slab_census_far_slab(D3):
    N3 = A.tile_screw(A.assemble_M(D3), 3 * np.pi, 3)
    _, det = V.slab_census(N3, 2.2 * np.pi, return_detail=True)
    assert det["off_axis"].max() == 0


def test_axis_slices(D3):
    s = V.axis_slice_analysis(D3, 2.75 * np.pi + 1.234e-6)
    assert s.n_curves == 1 and s.graph_property
    for th in (0.3, 0.9, 1.5, 2.1, 2.9):
        s = V.axis_slice_analysis(D3, th * np.pi + 1.234e-6)
        assert s.n_curves <= 3 and s.z_endpoints <= 4
    assert V.axis_slice_analysis(D3, 3.5 * np.pi + 1.234e-6).n_curves == 0


def test_axis_slice_nontransverse(D3):
    th, _ = V.continuous_theta(D3.V)
    k = np.flatnonzero(np.isfinite(th) & (D3.roles == msh.FREE))[10]
    with pytest.raises(NonTransverse):
        V.axis_slice_analysis(D3, float(th[k]))


def test_level_set_c0(M):
    L = V.level_set(M, 0.0)
    assert L.count("x-axis") == 1
    assert L.count("curve", closed=True) == 1 and L.count("curve", closed=False) == 0
    assert L.x_crossings == 2


def test_level_set_generic(M):
    c = 0.3 * np.pi + 1e-9
    L = V.level_set(M, c)
    assert L.count("curve", closed=False) == 1 and L.count("curve", closed=True) == 0
    L2 = V.level_set(M, c + 1e-6)
    assert [(k.tag, k.closed) for k in L2.components] == [(k.tag, k.closed) for k in L.components]


def test_level_on_vertex(M):
    z = M.V[M.roles == msh.FREE, 2]
    c = float(z[np.argmax(np.abs(z) > 0.5)])
    with pytest.raises(LevelOnVertex):
        V.level_set(M, c)


def test_level_set_helicoid_line():
    H = msh.helicoid_patch(-R6, R6, 0, np.pi, 60, 20, meta={"R": R6})
    for c in (0.5, 1.7):
        L = V.level_set(H, c + 1e-9)
        assert len(L.components) == 1 and not L.components[0].closed


def test_horizontal_tangents_near_x(M):
    idx = V.horizontal_tangent_points(M)
    if len(idx):
        assert np.abs(M.V[idx, 1]).max() < 0.5 and np.abs(M.V[idx, 2]).max() < 0.5


def test_pitch(D):
    p = V.pitch_estimate(D, 2 * R6 / 3)
    assert abs(p.slope - 1) < 0.05
    assert p.ring_error < 1e-12


def test_pitch_exact_helicoid():
    H = msh.helicoid_patch(-R6, R6, 0, np.pi, 60, 20, meta={"R": R6, "h": np.pi})
    p = V.pitch_estimate(H, 2 * R6 / 3)
    # piecewise-linear circle sections: exact up to chord error
    assert abs(p.slope - 1) < 1e-5


def test_annular_intersection(D, hug_result, barrier):
    assert V.annular_intersection_test(D, [barrier]) == [True]
    assert V.annular_intersection_test(hug_result.mesh, [barrier]) == [False]
    far = barrier.translated((0.0, 10 * R6, 0.0))
    assert V.annular_intersection_test(D, [far]) == [False]
    Dy = D.copy(g.rot_y_points(D.V))
    by = barrier.transformed(g.ROT_Y)
    assert V.annular_intersection_test(Dy, [by]) == V.annular_intersection_test(D, [barrier])


def test_curvature_report(D):
    flat = V.curvature_report(msh.disk_mesh(1.0, 10))
    assert flat.max_B < 1e-9
    cr = V.curvature_report(D)
    ang = cr.max_angle_deg[np.isfinite(cr.max_angle_deg)]
    assert ang[-1] < 10
    assert np.isfinite(cr.max_B) and cr.max_B > 0


def test_M_meets_H_only_on_axes(M):
    free = M.roles == msh.FREE
    P = M.V[free]
    d = g.distance_to_helicoid(P)
    near = d < 1e-6
    onx = (np.abs(P[:, 1]) < 1e-6) & (np.abs(P[:, 2]) < 1e-6)
    onz = np.hypot(P[:, 0], P[:, 1]) < 1e-6
    assert np.all(onx[near] | onz[near])


def test_summary(tmp_path):
    s = V.Summary()
    s.add("one", True, "x=1")
    s.add("two", False)
    assert not s.passed
    s.write(tmp_path / "s.txt")
    assert (tmp_path / "s.txt").read_text() == "PASS one x=1\nFAIL two\n"
