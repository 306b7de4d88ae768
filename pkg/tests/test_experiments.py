import json
import math

import numpy as np
import pytest

from ratesplit.dof import STRATEGIES, dof_region_two_user
from ratesplit.errors import ConfigError, DomainError, PreconditionError
from ratesplit.experiments import cli
from ratesplit.experiments.config import DEFAULT_TRIALS, load_config, parse_config
from ratesplit.experiments.results import HEADER, ResultTable, measure_slope, parse_csv, read_csv
from ratesplit.experiments.runner import _chunk, run_experiment

SUMRATE = """
experiment = sumrate-vs-snr
trials = 100
seed = 4
scenario.bits = 6
scenario.snr_db = 10, 30
"""


def test_defaults_and_presets():
    cfg = parse_config("experiment = two-cell\n")
    assert cfg.trials == DEFAULT_TRIALS["two-cell"]
    assert cfg.topology["antennas"] == 2 and cfg.seed == 0
    cfg = parse_config("experiment = trs-three-cell\n", default_seed=9)
    assert cfg.topology["antennas"] == 3 and cfg.seed == 9


def test_every_problem_is_reported():
    text = """
experiment = sumrate-vs-snr
trials = 10
scenario.snr_db = 20, 10
scenario.bits = 40
output.format = xml
"""
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    problems = exc.value.problems
    assert len(problems) == 4
    for needle in ("trials", "snr_db", "bits", "output.format"):
        assert any(needle in p for p in problems)


def test_unknown_and_malformed_keys():
    with pytest.raises(ConfigError) as exc:
        parse_config("experiment = two-cell\nscenario.Mm = 4\ntopology.alpha = half\n")
    assert any("unknown key 'scenario.Mm'" in p for p in exc.value.problems)
    assert any("topology.alpha" in p for p in exc.value.problems)
    with pytest.raises(ConfigError):
        parse_config("scenario.M = 4\n")
    with pytest.raises(ConfigError):
        parse_config("experiment = fig9\n")
    with pytest.raises(ConfigError):
        parse_config("experiment = two-cell\nexperiment = two-cell\n")


def test_topology_constraints():
    with pytest.raises(ConfigError) as exc:
        parse_config("experiment = trs-three-cell\ntopology.alpha = 0.9\ntopology.beta = 0.4\n"
                     "topology.antennas = 2\n")
    assert len(exc.value.problems) == 2


def test_missing_file():
    with pytest.raises(ConfigError):
        load_config("/nonexistent/run.cfg")


def test_overrides_revalidate():
    cfg = parse_config(SUMRATE)
    assert cfg.with_overrides(seed=8, trials=200).seed == 8
    with pytest.raises(ConfigError):
        cfg.with_overrides(trials=5)


def test_shipped_configs_parse():
    import glob
    import pathlib
    root = pathlib.Path(__file__).resolve().parents[1] / "configs"
    paths = sorted(glob.glob(str(root / "*.cfg")))
    assert len(paths) == 8
    for p in paths:
        load_config(p)


def test_csv_header_and_round_trip(tmp_path):
    table = run_experiment(parse_config(SUMRATE))
    text = table.to_csv()
    assert text.splitlines()[0] == "experiment,scheme,x_name,x_value,metric,mean,ci95,trials,seed"
    assert ",".join(HEADER) == text.splitlines()[0]
    rows = parse_csv(text)
    assert rows == table.rows
    path = tmp_path / "out.csv"
    table.write(path)
    assert read_csv(path) == table.rows
    assert {r.seed for r in rows} == {4}


def test_json_output():
    table = ResultTable("feedback-bits", 1, {"scenario.M": 4, "scenario.snr_db": (15.0,)})
    table.add("rs", "snr_db", 15.0, "required_bits", float("nan"), 0.0, 100)
    doc = json.loads(table.to_json())
    assert doc["rows"][0]["mean"] is None
    assert doc["scenario"]["scenario.snr_db"] == [15.0]


def test_rerun_is_byte_identical(tmp_path):
    cfg = parse_config(SUMRATE)
    a = run_experiment(cfg).to_csv()
    b = run_experiment(cfg).to_csv()
    c = run_experiment(cfg.with_overrides(workers=2)).to_csv()
    assert a == b == c


def test_sumrate_rows_and_common_random_numbers():
    table = run_experiment(parse_config(SUMRATE))
    schemes = {r.scheme for r in table.rows}
    assert schemes == {"rs", "zfbf", "tdma", "sumu", "zfbf-perfect", "rs-minus-sumu"}
    for db in (10.0, 30.0):
        rs = table.value("rs", "sum_rate", db).mean
        sumu = table.value("sumu", "sum_rate", db).mean
        gap = table.value("rs-minus-sumu", "sum_rate_gap", db).mean
        assert gap == pytest.approx(rs - sumu, abs=1e-12)
        assert table.value("rs", "sum_rate", db).mean >= table.value("zfbf", "sum_rate", db).mean
        assert table.value("zfbf-perfect", "sum_rate", db).trials == 100


def test_ci_shrinks_with_more_trials():
    base = parse_config(SUMRATE)
    small = run_experiment(base.with_overrides(trials=500)).value("zfbf", "sum_rate", 30.0)
    large = run_experiment(base.with_overrides(trials=1000)).value("zfbf", "sum_rate", 30.0)
    assert 1.3 <= small.ci95 / large.ci95 <= 1.6


def test_tdma_single_user_slope():
    cfg = parse_config("""
experiment = sumrate-vs-snr
trials = 500
scenario.K = 1
scenario.csit = perfect
scenario.snr_db = 30, 40
""")
    table = run_experiment(cfg)
    assert 0.85 <= measure_slope(table, "tdma", 30, 40) <= 1.15


def test_measure_slope_errors():
    table = run_experiment(parse_config(SUMRATE))
    with pytest.raises(PreconditionError):
        measure_slope(table, "rs", 10, 40)
    with pytest.raises(PreconditionError):
        measure_slope(table, "rs", 30, 10)


def test_dof_region_passthrough():
    table = run_experiment(parse_config("experiment = dof-region\nscenario.alpha = 0.6\n"))
    for strategy in STRATEGIES:
        reg = dof_region_two_user(strategy, 0.6)
        rows = table.select(strategy)
        verts = [(rows[2 * i].mean, rows[2 * i + 1].mean) for i in range(len(reg.vertices))]
        assert verts == reg.vertices
        assert table.value(strategy, "max_sum_dof", 0.6).mean == reg.max_sum()
    assert all(r.ci95 == 0.0 for r in table.rows)


def test_small_runs_of_every_rate_experiment():
    configs = {
        "two-cell": "experiment = two-cell\ntrials = 100\nscenario.snr_db = 20, 30\n",
        "trs-three-cell": "experiment = trs-three-cell\ntrials = 100\ntopology.alpha = 0.3\n"
                          "topology.beta = 0.8\nscenario.snr_db = 30\n",
        "hrs-massive": "experiment = hrs-massive\ntrials = 100\n",
        "feedback-bits": "experiment = feedback-bits\ntrials = 100\nscenario.target_gap = 8\n",
        "optimized-precoders": "experiment = optimized-precoders\ntrials = 100\n"
                               "scenario.samples = 4\nscenario.eval_samples = 20\n"
                               "scenario.max_iter = 10\nscenario.rho_trials = 100\n"
                               "scenario.objective = sumrate, maxmin\nscenario.private_only = yes\n",
    }
    expected = {
        "two-cell": {"rs", "zf"},
        "trs-three-cell": {"trs", "rs", "zf"},
        "hrs-massive": {"hrs", "rs", "two-tier", "hrs-minus-rs", "rs-minus-two-tier"},
        "feedback-bits": {"zfbf", "rs"},
        "optimized-precoders": {"rs-wmmse", "mu-wmmse", "rs-zf", "zfbf", "rs-wmmse-minus-rs-zf"},
    }
    for name, text in configs.items():
        table = run_experiment(parse_config(text))
        assert {r.scheme for r in table.rows} == expected[name], name
        assert all(math.isfinite(r.mean) for r in table.rows if r.metric != "required_bits")


def test_trial_errors_carry_the_index():
    def bad(seed, trial):
        if trial == 3:
            raise DomainError("boom")
        return trial
    with pytest.raises(DomainError, match="trial 3: boom"):
        _chunk(bad, (), 0, 0, 5)


def test_cli_success_and_stdout(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(SUMRATE)
    assert cli.main(["run", str(cfg)]) == 0
    out = capsys.readouterr().out
    assert out.startswith("experiment,scheme,")
    dest = tmp_path / "res.json"
    assert cli.main(["run", str(cfg), "--format", "json", "--out", str(dest), "--seed", "11"]) == 0
    doc = json.loads(dest.read_text())
    assert doc["seed"] == 11 and all(r["seed"] == 11 for r in doc["rows"])


def test_cli_config_failure(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("experiment = two-cell\ntrials = 3\nscenario.typo = 1\n")
    assert cli.main(["run", str(cfg)]) == 2
    err = capsys.readouterr().err
    assert "typo" in err and "trials" in err
    assert cli.main(["run", str(tmp_path / "missing.cfg")]) == 2
    good = tmp_path / "good.cfg"
    good.write_text(SUMRATE)
    assert cli.main(["run", str(good), "--trials", "5"]) == 2


def test_cli_numerical_failure(tmp_path, capsys):
    # wide clusters on four antennas leave no null space for the outer precoder
    cfg = tmp_path / "hrs.cfg"
    cfg.write_text("experiment = hrs-massive\ntrials = 100\nscenario.M = 4\nscenario.K = 4\n"
                   "scenario.azimuths = -20, 20\nscenario.spread = 40\n")
    assert cli.main(["run", str(cfg)]) == 3
    assert "run failed" in capsys.readouterr().err


def test_env_seed_is_echoed(tmp_path, monkeypatch):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(SUMRATE.replace("seed = 4\n", ""))
    out = tmp_path / "o.csv"
    monkeypatch.setenv(cli.SEED_ENV, "17")
    assert cli.main(["run", str(cfg), "--out", str(out)]) == 0
    assert {r.seed for r in read_csv(out)} == {17}
    monkeypatch.setenv(cli.SEED_ENV, "x")
    assert cli.main(["run", str(cfg)]) == 2
