import csv
import math

import pytest
from hypothesis import given, strategies as st

from helilab import cli
from helilab.errors import ConfigError


@pytest.mark.parametrize("text,value", [("6pi", 6 * math.pi), ("pi/2", math.pi / 2), ("1.5 pi", 1.5 * math.pi),
                                        ("2", 2.0), ("-3e-2", -0.03), ("pi", math.pi), ("0.3*pi", 0.3 * math.pi)])
def test_parse_number(text, value):
    assert cli.parse_number(text) == pytest.approx(value, rel=1e-15)


@pytest.mark.parametrize("text", ["", "abc", "pi pi", "1/0", "2pi/0", "1,2"])
def test_parse_number_rejects(text):
    with pytest.raises(ConfigError):
        cli.parse_number(text)


@given(st.floats(min_value=-1e6, max_value=1e6, allow_nan=False), st.booleans())
def test_parse_number_roundtrip(x, with_pi):
    text = repr(x) + ("pi" if with_pi else "")
    assert cli.parse_number(text) == (x * math.pi if with_pi else x)


def test_defaults_and_env_override(tmp_path):
    cfg = cli.load_config(environ={})
    assert cfg.R == pytest.approx(6 * math.pi) and cfg.n == 216 and cfg.copies == 3
    cfg = cli.load_config(environ={"HELILAB_GEOMETRY_R": "4pi", "HELILAB_VERIFY_GEODESIC": "no"})
    assert cfg.R == pytest.approx(4 * math.pi) and not cfg.geodesic
    with pytest.raises(ConfigError):
        cli.load_config(environ={"HELILAB_GEOMETRY_NOPE": "1"})


def test_config_file(tmp_path):
    p = tmp_path / "c.ini"
    p.write_text("[geometry]\nR = 8pi\nn = 120\n[verify]\ncopies = 5\n")
    cfg = cli.load_config(p, environ={})
    assert cfg.R == pytest.approx(8 * math.pi) and cfg.n == 120 and cfg.copies == 5


@pytest.mark.parametrize("body", ["[nope]\nx=1\n", "[geometry]\nbogus=1\n", "[geometry]\nR=-1\n",
                                  "[verify]\ncopies=2\n", "[geometry]\nR = six\n", "not an ini"])
def test_bad_config_exit_code(tmp_path, body):
    p = tmp_path / "bad.ini"
    p.write_text(body)
    assert cli.main(["run", "--config", str(p), "--out", str(tmp_path / "o")]) == 3


def test_missing_config_file(tmp_path):
    assert cli.main(["run", "--config", str(tmp_path / "none.ini"), "--out", str(tmp_path / "o")]) == 3


def test_unknown_subcommand():
    assert cli.main(["frobnicate"]) == 3
    assert cli.main([]) == 3


def test_gen_boundary_stage(tmp_path):
    out = tmp_path / "o"
    assert cli.main(["run", "--stage", "gen-boundary", "--out", str(out)]) == 0
    assert (out / "boundary.txt").is_file()
    assert not (out / "meshes" / "D.ply").exists()


def test_newton_needs_mesh(tmp_path):
    assert cli.main(["solve", "--backend", "newton", "--out", str(tmp_path)]) == 3


def test_verify_missing_mesh(tmp_path):
    assert cli.main(["verify", "--mesh", str(tmp_path / "x.ply"), "--out", str(tmp_path)]) == 3


def test_helicoid_control_and_obj_roundtrip(tmp_path):
    out = tmp_path / "o"
    assert cli.main(["export", "--helicoid-control", "--out", str(out)]) == 0
    ply = out / "meshes" / "helicoid_control.ply"
    assert cli.main(["verify", "--mesh", str(ply), "--out", str(out / "v1")]) == 0
    rows1 = list(csv.DictReader(open(out / "v1" / "reports" / "verify.csv")))
    assert rows1[0]["off_axis_max"] == "0"
    obj = out / "hc.obj"
    assert cli.main(["export", "--mesh", str(ply), "--format", "obj", "--output", str(obj), "--out", str(out)]) == 0
    assert cli.main(["verify", "--mesh", str(obj), "--generic", "--out", str(out / "v2")]) == 0
    rows2 = list(csv.DictReader(open(out / "v2" / "reports" / "verify.csv")))
    for k in ("genus", "chi", "loops", "slab_max", "off_axis_max"):
        assert rows1[0][k] == rows2[0][k]


@pytest.fixture(scope="module")
def pipeline_runs(tmp_path_factory):
    base = tmp_path_factory.mktemp("runs")
    cfgp = base / "fast.ini"
    cfgp.write_text("[verify]\ngeodesic = no\n")
    codes = [cli.main(["run", "--config", str(cfgp), "--out", str(base / f"r{i}")]) for i in range(2)]
    return base, codes


def test_pipeline_run(pipeline_runs):
    base, codes = pipeline_runs
    assert codes == [0, 0]
    text = (base / "r0" / "summary.txt").read_text()
    assert "genus=1" in text
    assert all(line.startswith("PASS") for line in text.splitlines())
    for name in ("D.ply", "M.ply", "N.ply", "seed.ply"):
        assert (base / "r0" / "meshes" / name).is_file()


def test_pipeline_deterministic(pipeline_runs):
    base, _ = pipeline_runs
    for name in ("census.csv", "levels.csv", "pitch.csv", "verify.csv"):
        assert (base / "r0" / "reports" / name).read_bytes() == (base / "r1" / "reports" / name).read_bytes()
    assert (base / "r0" / "summary.txt").read_text() == (base / "r1" / "summary.txt").read_text()


def test_assemble_then_verify(pipeline_runs, tmp_path):
    base, _ = pipeline_runs
    D = base / "r0" / "meshes" / "D.ply"
    assert cli.main(["assemble", "--mesh", str(D), "--out", str(tmp_path)]) == 0
    assert cli.main(["verify", "--mesh", str(tmp_path / "meshes" / "N.ply"), "--generic",
                     "--out", str(tmp_path / "v")]) == 0
    row = next(csv.DictReader(open(tmp_path / "v" / "reports" / "verify.csv")))
    assert row["chi"] == "-5"
