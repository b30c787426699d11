import json

from click.testing import CliRunner

from dopepool.cli import main
from dopepool.harness import load_metrics

SCENARIO = {
    "n_individuals": 4,
    "clusters": [[0, 1], [2, 3]],
    "p_primary": 0.2,
    "p_secondary": 0.2,
    "p_basal": 0.01,
    "p_false_negative": 0.1,
    "p_false_positive": 0.01,
    "n_populations": 4,
    "mc_samples": 600,
    "seed": 5,
    "strategies": [
        {"strategy": "dorfman", "pool_size": 2},
        {"strategy": "separate"},
        {
            "strategy": "dope",
            "k_pools_per_step": 1,
            "max_rounds": 6,
            "gibbs_burn_in": 150,
            "gibbs_max_thinning": 8,
            "hill_climb": {"n_restarts": 1, "n_perturbations": 3, "max_steps": 3},
        },
    ],
    "interval_grid": {"pairs": [[0.05, 0.5], [0.05, 0.9]]},
    "connectivity_grid": {"p_primary": [0.1, 0.3], "p_secondary": [0.2]},
}


def write_scenario(tmp_path):
    path = tmp_path / "scenario.json"
    path.write_text(json.dumps(SCENARIO))
    return path


def test_simulate_writes_tables(tmp_path):
    runner = CliRunner()
    out_dir = tmp_path / "out"
    result = runner.invoke(
        main, ["simulate", "--config", str(write_scenario(tmp_path)), "--out", str(out_dir)]
    )
    assert result.exit_code == 0, result.output
    rows, meta = load_metrics(out_dir / "metrics.csv")
    assert len(rows) == 2 + 2  # two baselines + dope x two intervals
    assert meta["seed"] == "5"
    for name in (
        "tests_vs_fnr.csv",
        "tests_vs_entropy.csv",
        "prevalence_vs_tests.csv",
        "prevalence_vs_fnr.csv",
    ):
        assert (out_dir / name).exists()


def test_simulate_seed_override(tmp_path):
    runner = CliRunner()
    out = tmp_path / "o"
    result = runner.invoke(
        main,
        ["simulate", "--config", str(write_scenario(tmp_path)), "--out", str(out), "--seed", "9"],
    )
    assert result.exit_code == 0, result.output
    _, meta = load_metrics(out / "metrics.csv")
    assert meta["seed"] == "9"


def test_sweep_runs_grid(tmp_path):
    runner = CliRunner()
    out = tmp_path / "sweep"
    result = runner.invoke(
        main, ["sweep", "--config", str(write_scenario(tmp_path)), "--out", str(out)]
    )
    assert result.exit_code == 0, result.output
    rows, _ = load_metrics(out / "metrics.csv")
    assert len(rows) == 2 * 4  # two grid points x (2 baselines + 2 dope rows)


def test_select_interval_and_report(tmp_path):
    runner = CliRunner()
    out = tmp_path / "out"
    runner.invoke(
        main, ["simulate", "--config", str(write_scenario(tmp_path)), "--out", str(out)]
    )
    tables = str(out / "metrics.csv")
    picked = runner.invoke(main, ["select-interval", "--tables", tables, "--target-fnr", "0.99"])
    assert picked.exit_code == 0, picked.output
    assert json.loads(picked.output)["feasible"] is True

    infeasible = runner.invoke(
        main, ["select-interval", "--tables", tables, "--target-fnr", "0.0"]
    )
    assert infeasible.exit_code == 1
    assert "infeasible" in infeasible.output

    report = runner.invoke(main, ["report", "--tables", tables, "--out", str(out / "r.txt")])
    assert report.exit_code == 0, report.output
    assert (out / "r.txt").exists()
