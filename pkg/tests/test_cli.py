from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from biased_inflap import fieldio
from biased_inflap.cli import ConfigError, main, parse_config
from biased_inflap.expr import ExprError, parse
from biased_inflap.geometry import DomainSpec, build_grid

LINE = {"dimension": 1, "shape": "box", "bounds": [[0, 1]], "dirichlet": ["x1-", "x1+"], "delta": 0.0125}
EXACT = "(1 - exp(-x1)) / (1 - exp(-1))"


def _write(tmp_path: Path, cfg: dict, name="run.json") -> Path:
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return p


def test_minimal_config_defaults():
    cfg = parse_config(json.dumps({"domain": LINE, "scheme": {"eps": 0.05}}))
    assert cfg.mode == "solve"
    assert cfg.tol == 1e-8 and cfg.max_sweeps == 100_000 and cfg.seed == "from_above"
    assert cfg.beta == 0.0


def test_empty_dirichlet_rejected():
    dom = dict(LINE, dirichlet=[], neumann=["x1-", "x1+"])
    with pytest.raises(ConfigError) as exc:
        parse_config(json.dumps({"domain": dom, "scheme": {"eps": 0.05}}))
    assert "Dirichlet part must be nonempty" in exc.value.errors


def test_nonconvex_with_neumann_rejected():
    dom = {"dimension": 2, "shape": "polygon", "vertices": [[0, 0], [2, 0], [2, 1], [1, 1], [1, 2], [0, 2]],
           "dirichlet": ["1", "2", "3", "4", "5"], "neumann": ["0"], "delta": 0.1}
    with pytest.raises(ConfigError) as exc:
        parse_config(json.dumps({"domain": dom, "scheme": {"eps": 0.2}}))
    assert any("convex" in e for e in exc.value.errors)


def test_all_errors_collected():
    text = json.dumps({"domain": dict(LINE, delta=0.5, extra=1), "scheme": {"eps": 0.1, "beta": "x"},
                       "data": {"f": "sin(x1)"}, "bogus": 1, "solver": {"seed": "nope.csv"}})
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    errs = " | ".join(exc.value.errors)
    for piece in ("bogus", "extra", "beta", "sin", "exceeds eps", "nope.csv"):
        assert piece in errs


def test_json_syntax_error_has_position():
    with pytest.raises(ConfigError) as exc:
        parse_config('{"mode": "solve",\n "domain": }')
    assert "line 2" in exc.value.errors[0]


def test_solve_mode_writes_artifacts(tmp_path):
    cfg = {"domain": LINE, "scheme": {"eps": 0.05, "beta": 1.0},
           "data": {"g": "x1", "exact": EXACT}, "solver": {"tol": 1e-10}, "output": {"directory": "out"}}
    assert main(["--config", str(_write(tmp_path, cfg))]) == 0
    out = tmp_path / "out"
    report = json.loads((out / "report.json").read_text())
    assert report["all_passed"] and report["solve"]["status"] == "converged"
    grid = build_grid(DomainSpec.box([0.0], [1.0]), 0.0125)
    u = fieldio.read_field_csv((out / "solution.csv").read_text(), grid)
    x = grid.coords[:, 0]
    err = np.abs(u - (1 - np.exp(-x)) / (1 - np.exp(-1)))
    assert err.max() == pytest.approx(report["error"]["sup_all"], rel=1e-12)
    assert err[grid.omega_mask(0.05)].max() < 0.07
    prof = (out / "profile.csv").read_text().splitlines()
    assert prof[0] == "x,u" and len(prof) == grid.n_nodes + 1


def test_outputs_are_reproducible(tmp_path):
    cfg = {"domain": {"dimension": 2, "shape": "box", "bounds": [[0, 1], [0, 1]], "dirichlet": ["x1-", "x1+"],
                      "neumann": ["x2-", "x2+"], "delta": 0.05},
           "scheme": {"eps": 0.15, "beta": 1.0}, "data": {"g": "x1"}}
    path = _write(tmp_path, cfg)
    assert main(["--config", str(path), "--out", str(tmp_path / "a")]) == 0
    assert main(["--config", str(path), "--out", str(tmp_path / "b"), "--threads", "1"]) == 0
    for name in ("solution.csv", "heatmap.pgm", "heatmap.scale.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    ra = json.loads((tmp_path / "a" / "report.json").read_text())
    rb = json.loads((tmp_path / "b" / "report.json").read_text())
    ra.pop("timing"), rb.pop("timing")
    ra["config"], rb["config"] = None, None
    assert ra == rb
    head = (tmp_path / "a" / "heatmap.pgm").read_bytes()[:15]
    assert head.startswith(b"P5\n21 21\n255\n")


def test_converge_mode(tmp_path):
    cfg = {"mode": "converge", "domain": dict(LINE, delta=0.05), "scheme": {"beta": 1.0},
           "data": {"g": "x1", "exact": EXACT}, "converge": {"eps_list": [0.2, 0.1, 0.05]}}
    assert main(["--config", str(_write(tmp_path, cfg)), "--out", str(tmp_path / "c")]) == 0
    rows = (tmp_path / "c" / "convergence.csv").read_text().splitlines()
    assert len(rows) == 4
    errs = [float(r.split(",")[3]) for r in rows[1:]]
    assert errs[0] > errs[1] > errs[2]


def test_stability_mode(tmp_path):
    cfg = {"mode": "stability", "domain": dict(LINE, delta=0.025), "scheme": {"eps": 0.1, "beta": 1.0},
           "data": {"g": "x1"}, "stability": {"betas": [1 + 2 ** -j for j in range(1, 9)]}}
    assert main(["--config", str(_write(tmp_path, cfg)), "--out", str(tmp_path / "s")]) == 0
    assert len((tmp_path / "s" / "stability.csv").read_text().splitlines()) == 9


def test_default_verify_suite_all_pass(tmp_path):
    assert main(["--mode", "verify", "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["all_passed"] and len(report["checks"]) >= 10


def test_config_verify_suite(tmp_path, capsys):
    cfg = {"mode": "verify", "domain": {"dimension": 2, "shape": "ball", "center": [0, 0], "radius": 1,
                                        "dirichlet": ["sphere"], "delta": 0.05},
           "scheme": {"eps": 0.2, "beta": 0.5}, "data": {"f": "-1 + 0.5 * x1", "g": "max(x1, x2)"}}
    assert main(["--config", str(_write(tmp_path, cfg)), "--out", str(tmp_path / "v")]) == 0
    lines = [ln for ln in capsys.readouterr().out.splitlines() if ln.startswith(("PASS", "FAIL"))]
    assert len(lines) >= 4 and all(ln.startswith("PASS") for ln in lines)


def test_partial_artifacts_and_exit_status(tmp_path):
    cfg = {"domain": LINE, "scheme": {"eps": 0.05, "beta": 1.0}, "data": {"g": "x1"},
           "solver": {"max_sweeps": 3, "tol": 1e-12}}
    assert main(["--config", str(_write(tmp_path, cfg)), "--out", str(tmp_path / "p")]) == 1
    assert (tmp_path / "p" / "solution.csv.partial").exists()
    assert (tmp_path / "p" / "report.json.partial").exists()
    assert not (tmp_path / "p" / "solution.csv").exists()


def test_seed_field_and_tol_override(tmp_path):
    cfg = {"domain": LINE, "scheme": {"eps": 0.05, "beta": 1.0}, "data": {"g": "x1"}}
    path = _write(tmp_path, cfg)
    assert main(["--config", str(path), "--out", str(tmp_path / "first"), "--tol", "1e-10"]) == 0
    seed = tmp_path / "first" / "solution.csv"
    assert main(["--config", str(path), "--out", str(tmp_path / "second"), "--seed-field", str(seed)]) == 0
    rep = json.loads((tmp_path / "second" / "report.json").read_text())
    assert rep["solve"]["iterations"] == 0 and rep["solve"]["seed"] == "given"


def test_bad_config_exit_code(tmp_path, capsys):
    assert main(["--config", str(_write(tmp_path, {"mode": "dance"}))]) == 2
    assert "CONFIG ERROR" in capsys.readouterr().err


# ---------------------------------------------------------------- expressions


def test_expression_grammar():
    pts = np.array([[0.5, -1.0], [2.0, 3.0]])
    np.testing.assert_allclose(parse("max(x1, x2) + abs(x2) * exp(0) - 1 / 2", 2)(pts), [1.0, 5.5])
    np.testing.assert_allclose(parse("min(x, y, 0)", 2)(pts), [-1.0, 0.0])
    np.testing.assert_allclose(parse(3, 2)(pts), [3.0, 3.0])
    np.testing.assert_allclose(parse("-x1**2 + pi", 2)(pts), [np.pi - 0.25, np.pi - 4])


@pytest.mark.parametrize("bad", ["__import__('os')", "x1.real", "x3", "sin(x1)", "1 +", "[1]", "x1 if x2 else 0",
                                 "True"])
def test_expression_rejects(bad):
    with pytest.raises(ExprError):
        parse(bad, 2)


def test_expression_nonfinite():
    with pytest.raises(ExprError):
        parse("1 / (x1 - x1)", 1)(np.array([[0.5]]))


# ---------------------------------------------------------------- field io


def test_field_csv_roundtrip_and_hash_check():
    grid = build_grid(DomainSpec.box([0, 0], [1, 1]), 0.25)
    u = np.linspace(-1, 1, grid.n_nodes) / 3
    text = fieldio.field_csv(grid, u)
    assert text.splitlines()[0] == f"# grid_hash={grid.grid_hash()}"
    np.testing.assert_array_equal(fieldio.read_field_csv(text, grid), u)
    other = build_grid(DomainSpec.box([0, 0], [1, 1]), 0.5)
    with pytest.raises(fieldio.FieldIOError, match="hash"):
        fieldio.read_field_csv(text, other)


def test_grid_csv_columns():
    grid = build_grid(DomainSpec.box([0, 0], [1, 1], neumann=("x2-",)), 0.25)
    lines = fieldio.grid_csv(grid, 0.3).splitlines()
    assert lines[0] == "node_id,x1,x2,class,dist_gammaD"
    assert len(lines) == grid.n_nodes + 1
    assert "dirichlet_collar" in lines[1]


def test_heatmap_levels():
    grid = build_grid(DomainSpec.ball([0, 0], 1.0), 0.25)
    data, scale = fieldio.heatmap_pgm(grid, grid.coords[:, 0])
    header = b"P5\n9 9\n255\n"
    assert data.startswith(header)
    pix = np.frombuffer(data[len(header):], np.uint8).reshape(9, 9)
    assert pix[0, 0] == 0  # outside the disc
    assert pix[4, 0] == 1 and pix[4, 8] == 255
    assert scale["vmin"] == -1.0 and scale["vmax"] == 1.0


def test_slice_csv():
    grid = build_grid(DomainSpec.box([0, 0, 0], [1, 1, 1]), 0.25)
    text = fieldio.slice_csv(grid, grid.coords[:, 2], 2, 0.6)
    lines = text.splitlines()
    assert lines[0] == "# axis=x3 level=0.5" and len(lines) == 2 + 25
