import numpy as np
import pytest
from scipy.optimize import brentq
from scipy.special import jn_zeros

from helilab import jacobi as J
from helilab import mesh as msh
from helilab import solver
from helilab.errors import ConfigError, StepTooLarge

J01_SQ = float(jn_zeros(0, 1)[0] ** 2)


def test_flat_disk_operator():
    m = msh.disk_mesh(1.0, 12)
    op = J.assemble_jacobi(m)
    assert np.abs(op.potential).max() < 1e-12
    assert abs(op.K - op.K.T).max() == 0
    L = msh.cotan_laplacian(m.V, m.F)
    I = op.interior
    assert abs(op.K - L[I][:, I]).max() < 1e-12


def test_helicoid_potential_converges():
    errs = []
    for n in (20, 40):
        m = msh.helicoid_patch(1, 2, 0, 1, n, n)
        op = J.assemble_jacobi(m)
        U = np.hypot(m.V[:, 0], m.V[:, 1])
        inner = (U > 1.25) & (U < 1.75) & (m.V[:, 2] > 0.25) & (m.V[:, 2] < 0.75)
        errs.append(np.abs(op.potential[inner] - 2 / (1 + U[inner] ** 2) ** 2).max())
    assert errs[1] < errs[0] and errs[1] < 0.05


def test_flat_disk_eigenpair():
    eig = J.first_eigenpair(msh.disk_mesh(1.0, 20))
    assert eig.lambda1 == pytest.approx(J01_SQ, rel=0.02)
    assert abs(eig.rayleigh - eig.lambda1) <= 1e-8 * abs(eig.lambda1)
    m = msh.disk_mesh(1.0, 20)
    fixed = m.roles != msh.FREE
    assert np.all(eig.u1[fixed] == 0) and np.all(eig.u1[~fixed] > 0) and eig.u1.max() == pytest.approx(1.0)


def test_domain_monotonicity():
    lams = [J.first_eigenpair(msh.disk_mesh(r, 12)).lambda1 for r in (0.8, 1.0, 1.25)]
    assert lams[0] > lams[1] > lams[2]


def test_quadrant_stable():
    m = msh.helicoid_patch(0, 2 * np.pi, 0, np.pi, 40, 20)
    eig = J.first_eigenpair(m)
    assert eig.lambda1 > 0
    assert J.classify_stability(m, eig=eig) == "strictly_stable"


def test_catenoid_band_threshold():
    cstar = brentq(lambda c: 1 / np.tanh(c) - c, 0.5, 3.0)
    assert cstar == pytest.approx(1.19968, abs=1e-5)
    below = msh.annulus_mesh(np.cosh, -1.0, 1.0, 96, 48)
    above = msh.annulus_mesh(np.cosh, -1.3, 1.3, 96, 48)
    assert J.first_eigenpair(below).lambda1 > 0
    assert J.first_eigenpair(above).lambda1 < 0
    assert J.classify_stability(above) == "unstable"


def test_classification_examples(handle_result, hug_result):
    assert J.classify_stability(msh.disk_mesh(1.0, 8)) == "strictly_stable"
    assert handle_result.classification == "unstable"
    assert hug_result.classification == "strictly_stable"


def test_normal_push():
    m = msh.disk_mesh(1.0, 16)
    out, rep = J.normal_push(m, 0.0)
    np.testing.assert_array_equal(out.V, m.V)
    eig = J.first_eigenpair(m)
    _, r1 = J.normal_push(m, 1e-3, eig=eig)
    _, r2 = J.normal_push(m, 2e-3, eig=eig)
    _, rm = J.normal_push(m, -1e-3, eig=eig)
    assert r1["rel_error"] < 0.05
    assert r1["sign"] == -rm["sign"] != 0
    # leading-order identity: relative error bounded by C |t|
    for t, r in ((1e-3, r1), (2e-3, r2)):
        assert r["rel_error"] <= 1.0 * t
    with pytest.raises(StepTooLarge):
        J.normal_push(m, 2.0, eig=eig)


def test_spectrum_csv(tmp_path):
    eig = J.first_eigenpair(msh.disk_mesh(1.0, 6))
    eig.write_csv(tmp_path / "e.csv")
    assert (tmp_path / "e.csv").read_text().splitlines()[0] == "lambda1,iters,tol"


def test_mountain_pass_rejects_identical(D):
    with pytest.raises(ConfigError):
        J.mountain_pass(D, D)


def test_mountain_pass_catenoid_neck():
    # two catenoids span the circles r=1 at z=+-0.6; the thin one is unstable
    f = lambda a: a * np.cosh(0.6 / a) - 1
    a_stable, a_unstable = brentq(f, 0.5, 1.0), brentq(f, 0.2, 0.5)
    seed = msh.annulus_mesh(lambda z: a_stable * np.cosh(z / a_stable) + 0.05 * (1 - (z / 0.6) ** 2),
                            -0.6, 0.6, 64, 32)
    low = solver.newton_refine(seed, solver.SolveConfig(backend="newton", max_iters=30, residual_tol=1e-9,
                                                        equivariance=False))
    assert low.converged and low.classification == "strictly_stable"
    high = msh.annulus_mesh(lambda z: 0.12 + 0.88 * (z / 0.6) ** 2, -0.6, 0.6, 64, 32)
    res = J.mountain_pass(low.mesh, high, require_stable=False)
    assert res.converged and res.lambda1 < 0 and res.classification == "unstable"
    X = res.mesh.V
    neck = np.hypot(X[:, 0], X[:, 1])[np.abs(X[:, 2]) < 1e-9].mean()
    assert neck == pytest.approx(a_unstable, rel=0.01)
    # between the inputs
    r = np.hypot(X[:, 0], X[:, 1])
    assert np.all(r <= np.hypot(low.mesh.V[:, 0], low.mesh.V[:, 1]) + 1e-9)
