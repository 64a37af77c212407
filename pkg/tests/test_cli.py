"""Command-line interface: file formats, command plumbing, exit codes.

Every command is driven in-process through ``main(argv)``; outputs land in
``tmp_path``.  The test command is cross-checked against the library call
it wraps, so the CLI cannot silently drift from the statistics.
"""

import json
from pathlib import Path

import numpy as np
import numpy.testing as npt
import pytest

from mesonet import cli, numkit, stattests
from mesonet.cli import main, parse_hypothesis, read_network_stack, write_network_stack
from mesonet.errors import ArgumentError, DataFormatError
from mesonet.netmodel import (
    GAUSSIAN,
    HypothesisSet,
    NetworkStack,
    ProjectionPair,
    TwoSampleData,
)


def _write_stack(path, layers):
    write_network_stack(str(path), NetworkStack(np.asarray(layers, dtype=float)))


def _gaussian_files(tmp_path, n=8, m=4, seed=0, diff=None):
    rng = np.random.default_rng(seed)
    layers1 = rng.standard_normal((m, n, n))
    layers2 = rng.standard_normal((m, n, n))
    if diff is not None:
        layers1 = layers1 + diff[None]
    p1, p2 = tmp_path / "s1.txt", tmp_path / "s2.txt"
    _write_stack(p1, layers1)
    _write_stack(p2, layers2)
    return str(p1), str(p2), layers1, layers2


# ---------------------------------------------------------------------------
# Network stack files.
# ---------------------------------------------------------------------------


def test_network_stack_round_trip(tmp_path, rng):
    layers = rng.standard_normal((3, 5, 5))
    path = tmp_path / "stack.txt"
    _write_stack(path, layers)
    back = read_network_stack(str(path))
    npt.assert_array_equal(back.layers, layers)  # %.17g is lossless for float64


def test_network_stack_error_line_numbers(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("")
    with pytest.raises(DataFormatError, match="empty file"):
        read_network_stack(str(path))
    path.write_text("2 1 9\n1 0\n0 1\n")
    with pytest.raises(DataFormatError, match=r"bad\.txt:1"):
        read_network_stack(str(path))
    # blank lines are skipped but reported line numbers stay physical
    path.write_text("2 1\n1 0\n\n0 oops\n")
    with pytest.raises(DataFormatError, match=r"bad\.txt:4: non-numeric"):
        read_network_stack(str(path))
    path.write_text("2 1\n1 0 0\n0 1\n")
    with pytest.raises(DataFormatError, match=r"bad\.txt:2: expected 2 values"):
        read_network_stack(str(path))
    path.write_text("2 2\n1 0\n0 1\n")
    with pytest.raises(DataFormatError, match="expected 4 matrix rows"):
        read_network_stack(str(path))
    path.write_text("0 1\n")
    with pytest.raises(DataFormatError, match="n >= 1"):
        read_network_stack(str(path))


def test_parse_hypothesis_rectangle():
    S = parse_hypothesis("rows=1..3,cols=8..10")
    assert S.is_rectangle and S.directed
    npt.assert_array_equal(S.rows, [0, 1, 2])
    npt.assert_array_equal(S.cols, [7, 8, 9])
    with pytest.raises(ArgumentError):
        parse_hypothesis("rows=3..1,cols=8..10")
    with pytest.raises(ArgumentError):
        parse_hypothesis("rows=0..2,cols=1..2")
    with pytest.raises(ArgumentError):
        parse_hypothesis("no-such-file-or-pattern")


def test_parse_hypothesis_pair_list(tmp_path):
    path = tmp_path / "pairs.txt"
    path.write_text("1 2\n3 4\n\n5 1\n")
    S = parse_hypothesis(str(path))
    assert not S.is_rectangle
    npt.assert_array_equal(sorted(map(tuple, S.canonical_pairs())),
                           [(0, 1), (2, 3), (4, 0)])
    path.write_text("1 2 3\n")
    with pytest.raises(DataFormatError, match=":1:"):
        parse_hypothesis(str(path))
    path.write_text("1 2\n0 4\n")
    with pytest.raises(DataFormatError, match=":2: pairs are 1-indexed"):
        parse_hypothesis(str(path))
    path.write_text("1 x\n")
    with pytest.raises(DataFormatError, match="non-integer"):
        parse_hypothesis(str(path))
    path.write_text("\n\n")
    with pytest.raises(DataFormatError, match="empty"):
        parse_hypothesis(str(path))


def test_parse_hypothesis_undirected_flag(tmp_path):
    path = tmp_path / "pairs.txt"
    path.write_text("1 2\n2 1\n1 1\n")
    S = parse_hypothesis(str(path), undirected=True)
    assert not S.directed


# ---------------------------------------------------------------------------
# The test command.
# ---------------------------------------------------------------------------


def test_cmd_test_matches_library_statistic(tmp_path, capsys):
    n, m = 8, 4
    s1, s2, layers1, layers2 = _gaussian_files(tmp_path, n=n, m=m, seed=1)
    U = numkit.orthonormal_basis(np.arange(1.0, 3.0).reshape(2, 1))
    V = numkit.orthonormal_basis(np.arange(1.0, 4.0).reshape(3, 1))
    u_path, v_path = tmp_path / "U.csv", tmp_path / "V.csv"
    cli._save_matrix(str(u_path), U)
    cli._save_matrix(str(v_path), V)
    out = tmp_path / "report.json"
    code = main([
        "test", s1, s2, "--family", "gaussian",
        "--hypothesis", "rows=1..2,cols=6..8",
        "--proj", "file", "--proj-u", str(u_path), "--proj-v", str(v_path),
        "--out", str(out),
    ])
    assert code == 0
    with open(out) as fh:
        report = json.load(fh)
    data = TwoSampleData(NetworkStack(layers1), NetworkStack(layers2), GAUSSIAN)
    S = HypothesisSet.rectangle([0, 1], [5, 6, 7])
    direct = stattests.stat_GP(data, S, ProjectionPair(U=U, V=V, source="file"))
    npt.assert_allclose(report["statistic"], direct.statistic, rtol=1e-12)
    npt.assert_allclose(report["p_value"], direct.p_value, rtol=1e-12)
    assert report["method"] == "G-P"
    assert report["df"]["kind"] == "f"
    assert report["df"]["nu1"] == direct.ref_dist.nu1
    assert report["df"]["nu2"] == direct.ref_dist.nu2
    assert (tmp_path / "report.json.manifest.json").exists()
    assert "wrote" in capsys.readouterr().out


def test_cmd_test_binary_defaults_to_wald(tmp_path):
    rng = np.random.default_rng(2)
    n, m = 8, 12
    layers1 = (rng.uniform(size=(m, n, n)) < 0.5).astype(float)
    layers2 = (rng.uniform(size=(m, n, n)) < 0.5).astype(float)
    s1, s2 = tmp_path / "b1.txt", tmp_path / "b2.txt"
    _write_stack(s1, layers1)
    _write_stack(s2, layers2)
    out = tmp_path / "report.json"
    code = main([
        "test", str(s1), str(s2), "--family", "logit",
        "--hypothesis", "rows=1..2,cols=6..8",
        "--proj", "learned-rect", "--d", "1", "--out", str(out),
    ])
    assert code == 0
    with open(out) as fh:
        report = json.load(fh)
    assert report["method"] == "E"
    assert report["df"]["kind"] == "chi2"


def test_cmd_test_undirected_rectangle(tmp_path):
    rng = np.random.default_rng(3)
    n, m = 10, 5
    layers1 = rng.standard_normal((m, n, n))
    layers2 = rng.standard_normal((m, n, n))
    layers1 = 0.5 * (layers1 + layers1.transpose(0, 2, 1))
    layers2 = 0.5 * (layers2 + layers2.transpose(0, 2, 1))
    s1, s2 = tmp_path / "u1.txt", tmp_path / "u2.txt"
    _write_stack(s1, layers1)
    _write_stack(s2, layers2)
    out = tmp_path / "report.json"
    code = main([
        "test", str(s1), str(s2), "--family", "gaussian", "--undirected",
        "--hypothesis", "rows=1..3,cols=1..3",
        "--proj", "learned-rect", "--d", "1", "--out", str(out),
    ])
    assert code == 0
    with open(out) as fh:
        report = json.load(fh)
    assert 0.0 <= report["p_value"] <= 1.0


# ---------------------------------------------------------------------------
# learn-proj and projection reuse.
# ---------------------------------------------------------------------------


def test_learn_proj_outputs_feed_back_into_test(tmp_path):
    rng = np.random.default_rng(4)
    n, m = 14, 5
    diff = np.zeros((n, n))
    diff[:3, 9:] = np.outer([1.0, -0.5, 0.8], [0.6, 1.2, -0.9, 0.4, 1.0])
    base = rng.standard_normal((n, n))
    layers1 = base[None] + diff[None] + 0.2 * rng.standard_normal((m, n, n))
    layers2 = base[None] + 0.2 * rng.standard_normal((m, n, n))
    s1, s2 = tmp_path / "l1.txt", tmp_path / "l2.txt"
    _write_stack(s1, layers1)
    _write_stack(s2, layers2)
    proj_dir = tmp_path / "proj"
    code = main([
        "learn-proj", str(s1), str(s2), "--family", "gaussian",
        "--hypothesis", "rows=1..3,cols=10..14",
        "--proj", "learned-rect", "--d", "1", "--out-dir", str(proj_dir),
    ])
    assert code == 0
    U = np.loadtxt(proj_dir / "U.csv", delimiter=",", ndmin=2)
    V = np.loadtxt(proj_dir / "V.csv", delimiter=",", ndmin=2)
    assert U.shape == (3, 1) and V.shape == (5, 1)
    scree = np.loadtxt(proj_dir / "scree.csv", delimiter=",", ndmin=2)
    assert scree.shape[0] >= 1
    with open(proj_dir / "manifest.json") as fh:
        manifest = json.load(fh)
    assert manifest["command"] == "learn-proj"
    assert manifest["warning"] is None

    out = tmp_path / "report.json"
    code = main([
        "test", str(s1), str(s2), "--family", "gaussian",
        "--hypothesis", "rows=1..3,cols=10..14",
        "--proj", "file", "--proj-u", str(proj_dir / "U.csv"),
        "--proj-v", str(proj_dir / "V.csv"), "--out", str(out),
    ])
    assert code == 0
    with open(out) as fh:
        report = json.load(fh)
    data = TwoSampleData(NetworkStack(layers1), NetworkStack(layers2), GAUSSIAN)
    S = HypothesisSet.rectangle([0, 1, 2], range(9, 14))
    P = ProjectionPair(U=U, V=V, source="file")
    direct = stattests.stat_GP(data, S, P)
    npt.assert_allclose(report["statistic"], direct.statistic, rtol=1e-12)


def test_learn_proj_impute_general_set(tmp_path):
    rng = np.random.default_rng(5)
    n, m = 10, 4
    layers1 = rng.standard_normal((m, n, n))
    layers2 = rng.standard_normal((m, n, n))
    s1, s2 = tmp_path / "g1.txt", tmp_path / "g2.txt"
    _write_stack(s1, layers1)
    _write_stack(s2, layers2)
    pairs = tmp_path / "pairs.txt"
    pairs.write_text("1 4\n2 5\n3 6\n1 7\n")
    proj_dir = tmp_path / "proj"
    code = main([
        "learn-proj", str(s1), str(s2), "--family", "gaussian",
        "--hypothesis", str(pairs),
        "--proj", "learned-impute", "--d", "2", "--out-dir", str(proj_dir),
    ])
    assert code == 0
    U = np.loadtxt(proj_dir / "U.csv", delimiter=",", ndmin=2)
    assert U.shape == (n, 2)  # full-matrix bases for non-rectangle sets


# ---------------------------------------------------------------------------
# simulate and rerun.
# ---------------------------------------------------------------------------


def _scenario_file(tmp_path):
    config = {
        "generator": "gaussian_ip", "n": 16, "m": 3, "reps": 4,
        "rows": [0, 1, 2], "cols": [12, 13, 14, 15],
        "methods": [
            {"name": "basic", "kind": "basic"},
            {"name": "rand2", "kind": "rand", "d": 2},
        ],
        "seed": 0, "sigma2": 1.0,
    }
    path = tmp_path / "scenario.json"
    path.write_text(json.dumps(config))
    return str(path)


def test_simulate_then_rerun_reproduces_csv(tmp_path):
    config = _scenario_file(tmp_path)
    out1 = tmp_path / "sim1"
    code = main(["simulate", "--config", config, "--seed", "7",
                 "--out-dir", str(out1)])
    assert code == 0
    csv1 = (out1 / "rejections.csv").read_bytes()
    assert (out1 / "manifest.json").exists()
    out2 = tmp_path / "sim2"
    code = main(["rerun", "--manifest", str(out1 / "manifest.json"),
                 "--out-dir", str(out2)])
    assert code == 0
    csv2 = (out2 / "rejections.csv").read_bytes()
    assert csv1 == csv2


def test_simulate_seed_overrides_config(tmp_path):
    config = _scenario_file(tmp_path)
    out = tmp_path / "sim"
    main(["simulate", "--config", config, "--seed", "99", "--out-dir", str(out)])
    with open(out / "manifest.json") as fh:
        manifest = json.load(fh)
    assert manifest["seed"] == 99
    assert manifest["config"]["config"]["seed"] == 99


def test_rerun_test_command(tmp_path):
    s1, s2, _, _ = _gaussian_files(tmp_path, seed=6)
    out = tmp_path / "report.json"
    code = main([
        "test", s1, s2, "--family", "gaussian",
        "--hypothesis", "rows=1..2,cols=6..8",
        "--proj", "block", "--out", str(out),
    ])
    assert code == 0
    redo_dir = tmp_path / "redo"  # not created beforehand: rerun must make it
    code = main(["rerun", "--manifest", str(out) + ".manifest.json",
                 "--out-dir", str(redo_dir)])
    assert code == 0
    with open(out) as fh:
        first = json.load(fh)
    with open(redo_dir / "report.json") as fh:
        second = json.load(fh)
    assert first == second


# ---------------------------------------------------------------------------
# power.
# ---------------------------------------------------------------------------


def test_power_at_zero_noncentrality_equals_alpha(tmp_path):
    out = tmp_path / "power.csv"
    code = main(["power", "--psi", "0", "--nu1", "4", "--nu2", "32",
                 "--alpha", "0.05", "--out", str(out)])
    assert code == 0
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "psi,power"
    psi, power = (float(v) for v in lines[1].split(","))
    assert psi == 0.0
    npt.assert_allclose(power, 0.05, rtol=1e-9)
    assert (tmp_path / "power.csv.manifest.json").exists()


def test_power_grid_is_monotone(tmp_path):
    out = tmp_path / "power.csv"
    code = main(["power", "--psi", "0,2,5,10,20", "--nu1", "4", "--nu2", "32",
                 "--out", str(out)])
    assert code == 0
    rows = [line.split(",") for line in out.read_text().strip().splitlines()[1:]]
    powers = [float(p) for _, p in rows]
    assert all(b > a for a, b in zip(powers, powers[1:]))


def test_power_from_difference_matrix(tmp_path):
    diff = np.array([[1.0, -0.5], [0.25, 2.0]])
    diff_path = tmp_path / "diff.csv"
    cli._save_matrix(str(diff_path), diff)
    out = tmp_path / "power.csv"
    code = main(["power", "--diff", str(diff_path), "--m", "6",
                 "--sigma2", "2.0", "--out", str(out)])
    assert code == 0
    line = out.read_text().strip().splitlines()[1]
    psi, power = (float(v) for v in line.split(","))
    expected_psi = 6.0 / (2.0 * 2.0) * float(np.sum(diff * diff))
    npt.assert_allclose(psi, expected_psi, rtol=1e-12)
    expected_power = stattests.power_oracle_GP(expected_psi, 4, 2 * 5 * 4, 0.05)
    npt.assert_allclose(power, expected_power, rtol=1e-12)


def test_power_argument_errors(tmp_path):
    out = str(tmp_path / "p.csv")
    assert main(["power", "--psi", "1,2", "--out", out]) == 2  # missing nu1/nu2
    assert main(["power", "--out", out]) == 2  # neither psi nor diff
    diff_path = tmp_path / "d.csv"
    cli._save_matrix(str(diff_path), np.eye(2))
    assert main(["power", "--diff", str(diff_path), "--out", out]) == 2  # no m/sigma2


# ---------------------------------------------------------------------------
# Exit codes and version.
# ---------------------------------------------------------------------------


def test_exit_codes(tmp_path):
    s1, s2, _, _ = _gaussian_files(tmp_path, seed=8)
    # missing data file: format error
    code = main(["test", str(tmp_path / "nope.txt"), s2, "--family", "gaussian",
                 "--hypothesis", "rows=1..2,cols=6..8"])
    assert code == 3
    # malformed hypothesis: argument error
    code = main(["test", s1, s2, "--family", "gaussian",
                 "--hypothesis", "rows=5..2,cols=6..8"])
    assert code == 2
    # identical samples leave nothing to learn from: numerical failure
    code = main(["test", s1, s1, "--family", "gaussian",
                 "--hypothesis", "rows=1..2,cols=6..8",
                 "--proj", "learned-rect", "--d", "1",
                 "--out", str(tmp_path / "r.json")])
    assert code == 4
    # random projections insist on a seed
    code = main(["test", s1, s2, "--family", "gaussian",
                 "--hypothesis", "rows=1..2,cols=6..8",
                 "--proj", "random", "--d", "1",
                 "--out", str(tmp_path / "r.json")])
    assert code == 2


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    assert "mesonet" in capsys.readouterr().out


def test_report_json_validates_against_schema(tmp_path):
    jsonschema = pytest.importorskip("jsonschema")
    with open(Path(__file__).resolve().parents[1] / "docs" / "report.schema.json") as fh:
        schema = json.load(fh)

    s1, s2, _, _ = _gaussian_files(tmp_path, seed=9)
    out = tmp_path / "report.json"
    assert main(["test", s1, s2, "--family", "gaussian",
                 "--hypothesis", "rows=1..2,cols=6..8",
                 "--proj", "block", "--out", str(out)]) == 0
    with open(out) as fh:
        jsonschema.validate(json.load(fh), schema)  # f reference branch

    rng = np.random.default_rng(10)
    n, m = 8, 12
    b1, b2 = tmp_path / "b1.txt", tmp_path / "b2.txt"
    _write_stack(b1, (rng.uniform(size=(m, n, n)) < 0.5).astype(float))
    _write_stack(b2, (rng.uniform(size=(m, n, n)) < 0.5).astype(float))
    assert main(["test", str(b1), str(b2), "--family", "logit",
                 "--hypothesis", "rows=1..2,cols=6..8",
                 "--proj", "learned-rect", "--d", "1", "--out", str(out)]) == 0
    with open(out) as fh:
        jsonschema.validate(json.load(fh), schema)  # chi2 reference branch
