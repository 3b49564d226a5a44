import json
import math

import pytest

from concavlab import cli, harness
from concavlab.errors import AllCensored, ConfigError

DISK = {"shape": "disk", "params": {"center": [0, 0], "radius": 1}}


def config(**over):
    d = {"domain": DISK, "grid": {"h": 0.125}, "coefficients": {"template": "diag-wave"},
         "nonlinearity": {"kind": "power", "beta": 0.5},
         "sweep": {"eps": [0.02, 0.05, 0.1, 0.2]}, "seed": 3}
    d.update(over)
    return d


def write(tmp_path, d, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(d) if not isinstance(d, str) else d)
    return p


def test_malformed_json_reports_position(tmp_path):
    p = write(tmp_path, '{\n  "domain": {\n    "shape": "disk",,\n}')
    with pytest.raises(ConfigError, match=r"line 3, column 21"):
        harness.ExperimentConfig.load(p)


@pytest.mark.parametrize("over, msg", [
    ({"nonlinearity": {"kind": "power", "beta": 1.0}}, "beta"),
    ({"sweep": {"eps": [0.1, 0.05, 0.2, 0.3]}}, "ascending"),
    ({"sweep": {"eps": [-0.1, 0.05, 0.2, 0.3]}}, "positive"),
    ({"coefficients": {"template": "nope"}}, "template"),
    ({"coefficients": {"a": "open('x')", "alpha": [["1", "0"], ["0", "1"]]}}, "not allowed"),
    ({"domain": {"shape": "triangle", "params": {}}}, "domain"),
    ({"grid": {"h": -1}}, "positive"),
    ({"colour": "red"}, "unknown"),
])
def test_invalid_configs_rejected(over, msg):
    with pytest.raises(ConfigError, match=msg):
        harness.ExperimentConfig.from_dict(config(**over))


def test_sweep_needs_four_values():
    cfg = harness.ExperimentConfig.from_dict(config(sweep={"eps": [0.1, 0.2, 0.3]}))
    with pytest.raises(ConfigError, match="at least 4"):
        harness.run_sweep(cfg)


def test_fit_uses_uncensored_rows_only():
    rows = [{"status": "ok", "eps": e, "eps_meas": e, "deficit": 2 * e, "censored": c}
            for e, c in ((0.1, True), (0.2, False), (0.4, False), (0.8, False))]
    fit = harness.fit_loglog(rows)
    assert fit["rows"] == 3 and fit["slope"] == pytest.approx(1.0)
    assert fit["intercept"] == pytest.approx(math.log(2))
    with pytest.raises(AllCensored):
        harness.fit_loglog([dict(r, censored=True) for r in rows])


def test_monotonicity_flags():
    rows = [{"status": "ok", "eps": e, "deficit": d, "censored": False}
            for e, d in ((1, 1.0), (2, 0.95), (3, 0.5))]
    kinds = [f["kind"] for f in harness._monotonicity(rows)]
    assert kinds == ["noise", "inversion"]


def test_isotropic_sweep_all_censored(tmp_path):
    cfg = harness.ExperimentConfig.from_dict(config(coefficients={"template": "isotropic"},
                                                    audit={"theorems": False}))
    rep = harness.run_sweep(cfg, tmp_path)
    assert rep.fit is None and rep.fit_error.startswith("all-censored")
    assert all(r["censored"] for r in rep.rows)


def test_divergent_row_recorded(tmp_path):
    cfg = harness.ExperimentConfig.from_dict(config(
        coefficients={"a": "5*eps", "alpha": [["1", "0"], ["0", "1"]]},
        nonlinearity={"kind": "eigen", "phi": "one", "eps_phi": 0.1},
        sweep={"eps": [0.2, 0.4, 0.6, 2.0]}))
    rep = harness.run_sweep(cfg, tmp_path)
    assert [r["status"] for r in rep.rows][:3] == ["ok"] * 3
    assert rep.rows[3]["status"] in ("NewtonDivergence", "PositivityLoss")
    assert "reason" in rep.rows[3]
    csv = (tmp_path / "sweep.csv").read_text().splitlines()
    assert csv[0] == "#SWEEP v1" and csv[1].startswith("eps,eps_meas,deficit")


def test_sweep_outputs_deterministic_and_parallel_equal(tmp_path, monkeypatch):
    cfg = harness.ExperimentConfig.from_dict(config())
    harness.run_sweep(cfg, tmp_path / "a")
    harness.run_sweep(cfg, tmp_path / "b")
    monkeypatch.setenv("CONCAVLAB_THREADS", "2")
    harness.run_sweep(cfg, tmp_path / "c", threads=1)
    for name in ("sweep.csv", "sweep.json", "sweep_plot.dat", "sweep.svg"):
        a = (tmp_path / "a" / name).read_bytes()
        assert a == (tmp_path / "b" / name).read_bytes() == (tmp_path / "c" / name).read_bytes()
    assert (tmp_path / "a" / "sweep.svg").read_text().startswith("<svg")


def test_cli_exit_codes(tmp_path, capsys):
    bad = write(tmp_path, "{", "bad.json")
    assert cli.main(["solve", "--config", str(bad)]) == cli.EXIT_CONFIG
    beta1 = write(tmp_path, config(nonlinearity={"kind": "power", "beta": 1}), "b1.json")
    assert cli.main(["solve", "--config", str(beta1)]) == cli.EXIT_CONFIG
    div = write(tmp_path, config(solver={"max_iter": 1}), "div.json")
    assert cli.main(["solve", "--config", str(div), "--out", str(tmp_path / "o")]) == cli.EXIT_SOLVER
    ok = write(tmp_path, config(), "ok.json")
    out = tmp_path / "run"
    assert cli.main(["solve", "--config", str(ok), "--out", str(out)]) == cli.EXIT_OK
    assert (out / "solution.field").read_text().startswith("#FIELD v1")
    first = (out / "solve.json").read_bytes()
    assert cli.main(["solve", "--config", str(ok), "--out", str(out)]) == cli.EXIT_OK
    assert (out / "solve.json").read_bytes() == first
    for cmd in ("deficit", "envelope", "check"):
        assert cli.main([cmd, "--config", str(ok), "--out", str(out)]) == cli.EXIT_OK
    assert cli.main(["check", "--config", str(ok), "--out", str(out), "--theorem", "1"]) == cli.EXIT_CONFIG
    assert cli.main(["check", "--config", str(ok), "--out", str(out), "--theorem", "remark"]) == cli.EXIT_OK
    capsys.readouterr()


def test_field_input_is_used(tmp_path):
    out = tmp_path / "s"
    harness.run_solve(harness.ExperimentConfig.from_dict(config()), out)
    cfg = harness.ExperimentConfig.from_dict(config(field=str(out / "solution.field")))
    res = harness.run_deficit(cfg, tmp_path / "d")
    assert res["report"]["deficit"] >= 0
