import json

import numpy as np

from foldfree.cli import fixture_main, main
from foldfree.medit import load_problem


def _write_fixture(tmp_path, name, extra=()):
    rest = str(tmp_path / "rest.mesh")
    init = str(tmp_path / "init.mesh")
    rc = fixture_main([name, "--out-rest", rest, "--out-init", init, *extra])
    assert rc == 0
    return rest, init


def test_cli_untangles_point_swap(tmp_path, capsys):
    rest, init = _write_fixture(tmp_path, "point_swap_square", ("--n", "8"))
    out = str(tmp_path / "out.mesh")
    rep = str(tmp_path / "report.json")
    rc = main([
        "--rest", rest, "--init", init, "--out", out, "--report", rep,
        "--lambda", "1.0", "--scheme", "quasi_newton", "--eps-rule", "heuristic",
    ])
    assert rc == 0
    payload = json.loads(open(rep).read())
    assert payload["success"] is True
    assert payload["min_det"] > 0.0
    for key in ("success", "min_det", "max_stretch", "min_det_p95",
                "max_stretch_p95", "iterations", "wall_time_s", "trace"):
        assert key in payload
    assert payload["trace"]
    assert payload["config"]["lambda"] == 1.0
    # output mesh loads back with the same connectivity and the locked
    # vertices exactly at their input positions
    solved = load_problem(rest, out)
    src = load_problem(rest, init)
    assert solved.elements == src.elements
    assert np.array_equal(solved.initial_map[src.locked], src.initial_map[src.locked])


def test_cli_exit_code_nonzero_on_failure(tmp_path):
    rest, init = _write_fixture(tmp_path, "point_swap_square", ("--n", "8"))
    out = str(tmp_path / "out.mesh")
    rep = str(tmp_path / "report.json")
    rc = main([
        "--rest", rest, "--init", init, "--out", out, "--report", rep,
        "--scheme", "newton", "--eps-rule", "theory", "--max-outer", "1",
    ])
    assert rc == 1
    payload = json.loads(open(rep).read())
    assert payload["success"] is False
    assert payload["trace"]  # failure still carries the trace


def test_cli_identity_run_preserves_map(tmp_path):
    rest, init = _write_fixture(tmp_path, "stretched_bar", ("--stretch", "1.0"))
    out = str(tmp_path / "out.mesh")
    rep = str(tmp_path / "report.json")
    rc = main(["--rest", rest, "--init", init, "--out", out, "--report", rep])
    assert rc == 0
    src = load_problem(rest, init)
    solved = load_problem(rest, out)
    assert np.allclose(solved.initial_map, src.initial_map, atol=1e-12)


def test_cli_missing_input_is_error(tmp_path):
    rc = main([
        "--rest", str(tmp_path / "nope.mesh"), "--init", str(tmp_path / "nope.mesh"),
        "--out", str(tmp_path / "o.mesh"), "--report", str(tmp_path / "r.json"),
    ])
    assert rc == 2


def test_cli_figures_and_csv(tmp_path):
    rest, init = _write_fixture(tmp_path, "point_swap_square", ("--n", "8"))
    out = str(tmp_path / "out.mesh")
    rep = str(tmp_path / "report.json")
    figs = tmp_path / "figs"
    rc = main([
        "--rest", rest, "--init", init, "--out", out, "--report", rep,
        "--figures", str(figs),
    ])
    assert rc == 0
    assert (figs / "per_corner.csv").exists()
    assert (figs / "convergence.png").exists()
    assert (figs / "map_detj.png").exists()
    header = (figs / "per_corner.csv").read_text().splitlines()[0]
    assert header == "element_id,corner_id,det_j,stretch"


def test_cli_determinism(tmp_path):
    rest, init = _write_fixture(tmp_path, "point_swap_square", ("--n", "8"))
    outs = []
    for tag in ("a", "b"):
        out = str(tmp_path / f"out_{tag}.mesh")
        rep = str(tmp_path / f"report_{tag}.json")
        rc = main(["--rest", rest, "--init", init, "--out", out, "--report", rep])
        assert rc == 0
        outs.append((out, rep))
    assert open(outs[0][0], "rb").read() == open(outs[1][0], "rb").read()
    tr_a = json.loads(open(outs[0][1]).read())["trace"]
    tr_b = json.loads(open(outs[1][1]).read())["trace"]
    for ra, rb in zip(tr_a, tr_b):
        ra.pop("wall_time_s")
        rb.pop("wall_time_s")
    assert tr_a == tr_b


def test_fixture_cli_writes_lock_list(tmp_path):
    rest = str(tmp_path / "r.mesh")
    init = str(tmp_path / "i.mesh")
    locks = str(tmp_path / "l.txt")
    rc = fixture_main(["cavity_cube", "--n", "4", "--angle", "30",
                       "--out-rest", rest, "--out-init", init, "--out-locks", locks])
    assert rc == 0
    mesh = load_problem(rest, init, locks)
    assert mesh.dimension == 3
    assert mesh.locked.sum() > 0
