import numpy as np
import pytest
from scipy.spatial import cKDTree

from helilab import assembly as A
from helilab import geometry as g
from helilab import mesh as msh
from helilab import solver, verify
from helilab.errors import NoHandle, TopologyError, WeldMismatch

R6 = 6 * np.pi


def test_M_topology(M):
    assert msh.euler_characteristic(M) == -1
    assert msh.genus_with_boundary(M) == 1
    assert len(M.boundary_loops()) == 1
    assert M.check_integrity()
    assert np.count_nonzero(np.linalg.norm(M.V, axis=1) < 1e-12) == 1


@pytest.mark.parametrize("kind", ["rotX", "rotY", "rotZ"])
def test_M_symmetric(M, kind):
    assert verify.rotation_invariance_error(M, kind) < 1e-9


def test_M_rotZ_exact(D, M):
    # the second copy is the image of the first
    img = g.rot_z_points(D.V)
    d, _ = cKDTree(M.V).query(img)
    assert d.max() < 1e-12


def test_quadrants_rejected():
    q1 = msh.helicoid_patch(0, R6, 0, np.pi, 20, 10)
    q2 = msh.helicoid_patch(-R6, 0, -np.pi, 0, 20, 10)
    Q = msh.TriMesh(np.vstack([q1.V, q2.V]), np.vstack([q1.F, q2.F + q1.n_vertices]), meta={"R": R6})
    with pytest.raises(WeldMismatch):
        A.assemble_M(Q)


def test_weld_mismatch_on_broken_axis(D):
    X = D.V.copy()
    ax = np.flatnonzero((D.tags & 1) != 0)
    X[ax[len(ax) // 3], 1] += 1e-3
    with pytest.raises(WeldMismatch):
        A.assemble_M(D.copy(X))


def test_tile_screw(M):
    assert A.tile_screw(M, np.pi, 1).n_faces == M.n_faces
    with pytest.raises(TopologyError):
        A.tile_screw(M, np.pi, 2)
    N = A.tile_screw(M, np.pi, 3)
    assert N.check_integrity()
    bnd = N.boundary_vertex_mask_topological()
    z = N.V[:, 2]
    on_lines = (np.abs(np.abs(z) - np.pi) < 1e-9) & (np.abs(N.V[:, 1]) < 1e-9) & (np.hypot(N.V[:, 0], N.V[:, 1]) < R6 - 1e-6)
    assert on_lines.any() and not bnd[on_lines].any()
    chi = [msh.euler_characteristic(A.tile_screw(M, np.pi, k)) for k in (1, 3, 5)]
    assert chi == [A.tiled_euler_characteristic(-1, k) for k in (1, 3, 5)] == [-1, -5, -9]


def test_tile_screw_invariance(M):
    N = A.tile_screw(M, np.pi, 3)
    mid = np.abs(N.V[:, 2]) < np.pi
    img = g.apply_symmetry(g.screw(2 * np.pi), N.V[mid])
    d, _ = cKDTree(N.V).query(img)
    assert d.max() < 1e-9


@pytest.fixture(scope="module")
def geodesic(D):
    return A.shortest_closed_geodesic(D)


def test_geodesic_properties(D, geodesic):
    G = geodesic
    assert G.length < G.dijkstra_length
    fv = D.V[D.meta["fixed_vertex"]]
    ell = msh.mean_edge_length(D.V, D.F)
    assert np.linalg.norm(G.midpoint - fv) < ell
    assert G.midpoint_error < 0.05 * ell * 10
    assert G.symmetry_error < 1e-9
    assert np.linalg.norm(G.points[0]) < 1e-12 and np.linalg.norm(G.points[-1]) < 1e-12


def test_geodesic_refinement(D, geodesic):
    fine = solver.newton_refine(msh.refine(D), solver.SolveConfig(backend="newton", max_iters=30,
                                                                  residual_tol=1e-8, classify=False))
    G1 = A.shortest_closed_geodesic(fine.mesh)
    assert G1.length == pytest.approx(geodesic.length, rel=0.02)


def test_geodesic_csv(tmp_path, geodesic):
    geodesic.write_csv(tmp_path / "g.csv")
    lines = (tmp_path / "g.csv").read_text().splitlines()
    assert lines[0] == "x,y,z,s" and len(lines) == len(geodesic.points) + 1


def test_no_handle_on_separate_quadrants():
    q1 = msh.helicoid_patch(0, R6, 0, np.pi, 20, 10)
    q2 = msh.helicoid_patch(-R6, 0, -np.pi, 0, 20, 10)
    Q = msh.TriMesh(np.vstack([q1.V, q2.V]), np.vstack([q1.F, q2.F + q1.n_vertices]), meta={"R": R6})
    with pytest.raises(NoHandle):
        A.shortest_closed_geodesic(Q)
