"""Tests for the command line front end.

Oracles: generated answer sidecars must verify at quality one, reports
are parsed back as JSON and cross-checked against the library calls
they wrap, and determinism is checked as byte equality of stdout.
"""

import json

import numpy as np
import pytest

from rankone.bss import (
    MeasurementOperator,
    planted_yes,
    read_subspace,
    write_measurement,
    write_subspace,
)
from rankone.cli import load_config, main, read_candidate, write_candidate
from rankone.errors import IllFormed
from rankone.rectangle import FactorMatrix, write_factors


def run_cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr().out
    return code, json.loads(out), out


# ------------------------------------------------------------------ gen


def test_gen_planted_yes_writes_instance_and_answer(tmp_path, capsys):
    out = tmp_path / "w.txt"
    code, report, _ = run_cli(capsys, "gen", "planted-yes", "--n", "3",
                              "--dim-w", "2", "--seed", "5",
                              "--out", str(out))
    assert code == 0
    assert report["schema"] == 1
    assert report["status"] == "OK"
    assert report["config"]["seed"] == 5
    assert report["checks"]["plant_quality"] == pytest.approx(1.0)
    w = read_subspace(out)
    assert (w.ambient, w.dim) == (3, 2)
    u0, v0, kind = read_candidate(str(out) + ".answer")
    assert kind == "CANDIDATE"
    w_ref, u_ref, v_ref = planted_yes(3, 2, 5)
    assert np.array_equal(u0, u_ref) and np.array_equal(v0, v_ref)


def test_gen_is_deterministic(tmp_path, capsys):
    texts = []
    for name in ("a.txt", "b.txt"):
        out = tmp_path / name
        code = main(["gen", "planted-yes", "--n", "2", "--seed", "3",
                     "--out", str(out)])
        raw = capsys.readouterr().out
        assert code == 0
        texts.append(raw.replace(name, "SAME"))
    assert texts[0] == texts[1]


def test_gen_random_no_certifies_small_ambient(tmp_path, capsys):
    out = tmp_path / "no.txt"
    code, report, _ = run_cli(capsys, "gen", "random-no", "--n", "2",
                              "--dim-w", "1", "--seed", "1",
                              "--out", str(out))
    assert code == 0
    assert report["checks"]["certified"] is True
    assert report["checks"]["farness"] >= 0.5
    assert "FARNESS" in (tmp_path / "no.txt.answer").read_text()


def test_gen_random_no_flags_large_ambient_uncertified(tmp_path, capsys):
    out = tmp_path / "no4.txt"
    code, report, _ = run_cli(capsys, "gen", "random-no", "--n", "4",
                              "--dim-w", "3", "--out", str(out))
    assert code == 0
    assert report["checks"]["certified"] is False
    assert report["checks"]["farness"] is None


def test_gen_rejects_missing_n(tmp_path, capsys):
    code, report, _ = run_cli(capsys, "gen", "planted-yes",
                              "--out", str(tmp_path / "w.txt"))
    assert code == 2
    assert report["status"] == "ERROR"
    assert report["error"]["type"] == "IllFormed"


# ---------------------------------------------------------------- solve


def test_solve_planted_subspace(tmp_path, capsys):
    out = tmp_path / "w.txt"
    main(["gen", "planted-yes", "--n", "2", "--dim-w", "2", "--seed", "4",
          "--out", str(out)])
    capsys.readouterr()
    code, report, _ = run_cli(capsys, "solve", str(out), "--eps", "0.25")
    assert code == 0
    assert report["status"] == "OK"
    assert report["config"]["input_kind"] == "SUBSPACE"
    assert report["checks"]["quality"] >= 1 - 0.25 ** 2
    assert report["checks"]["consistent"] is True
    cand = report["result"]["candidate"]
    assert len(cand["u0"]) == 2 and len(cand["v0"]) == 2


def test_solve_measurement_routing(tmp_path, capsys):
    w, u, v = planted_yes(2, 1, seed=8)
    proj = sum(np.outer(b.ravel(), b.ravel()) for b in w.basis)
    path = tmp_path / "m.txt"
    write_measurement(path, MeasurementOperator(proj))
    code, report, _ = run_cli(capsys, "solve", str(path), "--eps", "0.25")
    assert code == 0
    assert report["config"]["input_kind"] == "MEASUREMENT"
    assert report["checks"]["acceptance"] >= report["checks"]["acceptance_floor"]
    assert report["checks"]["quality"] >= 1 - 0.25 ** 2


def test_solve_far_instance_reports_fail(tmp_path, capsys):
    out = tmp_path / "no.txt"
    main(["gen", "random-no", "--n", "2", "--dim-w", "1", "--seed", "1",
          "--out", str(out)])
    capsys.readouterr()
    code, report, _ = run_cli(capsys, "solve", str(out))
    assert code == 1
    assert report["status"] == "FAIL"
    assert "infeasible" in report["result"]["note"]


def test_solve_complex_reduces_and_lifts(tmp_path, capsys):
    out = tmp_path / "wc.txt"
    main(["gen", "complex-planted", "--n", "2", "--dim-w", "1", "--seed", "2",
          "--out", str(out)])
    capsys.readouterr()
    code, report, _ = run_cli(capsys, "solve", str(out), "--eps", "0.3")
    assert code == 0
    assert report["config"]["input_kind"] == "CSUBSPACE"
    lift = report["result"]["lift"]
    assert lift["relative_residual"] <= 0.3
    assert report["checks"]["lift_within_eps"] is True


def test_solve_rejects_wrong_file_kind(tmp_path, capsys):
    path = tmp_path / "f.txt"
    write_factors(path, FactorMatrix(np.eye(3)))
    code, report, _ = run_cli(capsys, "solve", str(path))
    assert code == 2
    assert report["error"]["type"] == "IllFormed"


def test_missing_file_is_an_input_error(capsys):
    code, report, _ = run_cli(capsys, "solve", "/nonexistent/w.txt")
    assert code == 2
    assert report["status"] == "ERROR"


# ------------------------------------------------------------ rectangle


def orthonormal_class_factors(tmp_path):
    rng = np.random.default_rng(11)
    basis = np.linalg.qr(rng.standard_normal((4, 4)))[0]
    fm = FactorMatrix(basis[rng.integers(0, 4, size=200)])
    path = tmp_path / "cols.txt"
    write_factors(path, fm)
    return path


def test_rectangle_search_reports_verified_submatrix(tmp_path, capsys):
    path = orthonormal_class_factors(tmp_path)
    code, report, _ = run_cli(capsys, "rectangle", str(path), "--eps", "0.3",
                              "--k", "2", "--seed", "1")
    assert code == 0
    assert report["checks"]["passes_at_eps"] is True
    assert report["checks"]["matches_reported"] is True
    assert report["result"]["size"] == len(report["result"]["indices"])
    assert report["config"]["k"] == 2
    # resolved defaults are echoed, not left null
    assert report["config"]["min_size"] == 8
    assert report["config"]["max_iters"] >= 4


def test_rectangle_is_deterministic(tmp_path, capsys):
    path = orthonormal_class_factors(tmp_path)
    outs = []
    for _ in range(2):
        code, _, raw = run_cli(capsys, "rectangle", str(path), "--eps", "0.3",
                               "--k", "2", "--seed", "7")
        assert code == 0
        outs.append(raw)
    assert outs[0] == outs[1]


def test_rectangle_budget_exhaustion_exits_three(tmp_path, capsys):
    rng = np.random.default_rng(0)
    fm = FactorMatrix.normalized(rng.standard_normal((60, 6)))
    path = tmp_path / "r.txt"
    write_factors(path, fm)
    code, report, _ = run_cli(capsys, "rectangle", str(path), "--eps", "0.1",
                              "--max-iters", "0")
    assert code == 3
    assert report["error"]["type"] == "MaxRounds"


# ----------------------------------------------------- reduce and check


def test_reduce_writes_real_subspace(tmp_path, capsys):
    src = tmp_path / "wc.txt"
    main(["gen", "complex-planted", "--n", "2", "--dim-w", "2", "--seed", "6",
          "--out", str(src)])
    capsys.readouterr()
    dst = tmp_path / "wr.txt"
    code, report, _ = run_cli(capsys, "reduce", str(src), "--out", str(dst))
    assert code == 0
    assert report["checks"]["dim_matches"] is True
    w = read_subspace(dst)
    assert w.ambient == 4 and w.dim == report["result"]["dim"]


def test_check_accepts_planted_answer(tmp_path, capsys):
    out = tmp_path / "w.txt"
    main(["gen", "planted-yes", "--n", "3", "--dim-w", "3", "--seed", "7",
          "--out", str(out)])
    capsys.readouterr()
    code, report, _ = run_cli(capsys, "check", str(out),
                              str(out) + ".answer")
    assert code == 0
    assert report["result"]["quality"] == pytest.approx(1.0)


def test_check_complex_answer_round_trips(tmp_path, capsys):
    out = tmp_path / "wc.txt"
    main(["gen", "complex-planted", "--n", "2", "--dim-w", "1", "--seed", "9",
          "--out", str(out)])
    capsys.readouterr()
    code, report, _ = run_cli(capsys, "check", str(out),
                              str(out) + ".answer", "--eps", "0.3")
    assert code == 0
    assert report["result"]["lift_relative_residual"] < 1e-8


def test_check_rejects_quality_below_bar(tmp_path, capsys):
    w, u, v = planted_yes(2, 1, seed=3)
    inst = tmp_path / "w.txt"
    write_subspace(inst, w)
    # a quarter-turn of v has zero overlap with the plant direction
    bad = tmp_path / "bad.txt"
    write_candidate(bad, u, np.array([-v[1], v[0]]))
    code, report, _ = run_cli(capsys, "check", str(inst), str(bad))
    assert code == 1
    assert report["status"] == "FAIL"
    assert report["result"]["quality"] < report["result"]["target"]


def test_check_rejects_mismatched_candidate_kind(tmp_path, capsys):
    out = tmp_path / "wc.txt"
    main(["gen", "complex-planted", "--n", "2", "--out", str(out)])
    capsys.readouterr()
    real = tmp_path / "cand.txt"
    write_candidate(real, np.ones(4) / 2.0, np.ones(4) / 2.0)
    code, report, _ = run_cli(capsys, "check", str(out), str(real))
    assert code == 2
    assert "CCANDIDATE" in report["error"]["message"]


# ------------------------------------------------------------- plumbing


def test_candidate_file_round_trip(tmp_path):
    path = tmp_path / "c.txt"
    u = np.array([0.6, 0.8])
    v = np.array([1.0, 0.0])
    write_candidate(path, u, v)
    u2, v2, kind = read_candidate(path)
    assert kind == "CANDIDATE"
    assert np.array_equal(u, u2) and np.array_equal(v, v2)
    with pytest.raises(IllFormed):
        write_candidate(tmp_path / "bad.txt", np.array([np.inf, 0.0]), v)
    with pytest.raises(DimensionMismatch):
        write_candidate(tmp_path / "bad.txt", np.ones(3) / np.sqrt(3), v)


def test_read_candidate_rejects_corrupt_files(tmp_path):
    path = tmp_path / "c.txt"
    path.write_text("WRONG 2\n2 2\n1 0\n0 1\n")
    with pytest.raises(IllFormed):
        read_candidate(path)
    path.write_text("CANDIDATE 3\n2 3\n1 0 0\n")
    with pytest.raises(IllFormed):
        read_candidate(path)


def test_config_file_supplies_defaults_and_flags_win(tmp_path, capsys):
    out = tmp_path / "w.txt"
    main(["gen", "planted-yes", "--n", "2", "--seed", "2", "--out", str(out)])
    capsys.readouterr()
    cfg = tmp_path / "run.cfg"
    cfg.write_text("eps = 0.5\ndegree = 6   # relaxation size\n")
    code, report, _ = run_cli(capsys, "solve", str(out),
                              "--config", str(cfg))
    assert code == 0
    assert report["config"]["eps"] == 0.5
    code, report, _ = run_cli(capsys, "solve", str(out),
                              "--config", str(cfg), "--eps", "0.25")
    assert report["config"]["eps"] == 0.25


def test_config_rejects_unknown_keys(tmp_path, capsys):
    out = tmp_path / "w.txt"
    main(["gen", "planted-yes", "--n", "2", "--out", str(out)])
    capsys.readouterr()
    cfg = tmp_path / "run.cfg"
    cfg.write_text("epsilon = 0.5\n")
    code, report, _ = run_cli(capsys, "solve", str(out),
                              "--config", str(cfg))
    assert code == 2
    assert "epsilon" in report["error"]["message"]


def test_load_config_parses_types(tmp_path):
    cfg = tmp_path / "t.cfg"
    cfg.write_text('a = 3\nb = 0.5\nc = true\nd = "text"\n\n# comment\n')
    values = load_config(cfg)
    assert values == {"a": 3, "b": 0.5, "c": True, "d": "text"}
