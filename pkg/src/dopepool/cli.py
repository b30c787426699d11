"""Command line interface: simulation campaigns, reports, and the service."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .harness import (
    config_digest,
    connectivity_grid_from_dict,
    dominance_report,
    emit_tables,
    load_metrics,
    prevalence_sweep,
    run_scenario,
    scenario_from_dict,
    select_interval,
)


def _apply_overrides(raw: dict, seed, workers, samples) -> dict:
    if seed is not None:
        raw["seed"] = seed
    if workers is not None:
        raw["workers"] = workers
    if samples is not None:
        raw["mc_samples"] = samples
    return raw


@click.group()
def main():
    """Bayesian pooled-testing toolkit."""


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), required=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--seed", type=int, default=None, help="Override the scenario seed.")
@click.option("--workers", type=int, default=None, help="Parallel replicate workers.")
@click.option("--samples", type=int, default=None, help="Override mc_samples (L).")
def simulate(config_path, out_dir, seed, workers, samples):
    """Run one scenario file and write metrics tables."""
    raw = _apply_overrides(json.loads(Path(config_path).read_text()), seed, workers, samples)
    cfg = scenario_from_dict(raw)
    rows = run_scenario(cfg)
    written = emit_tables(rows, out_dir, seed=cfg.seed, config_digest=config_digest(raw))
    click.echo(f"wrote {written['metrics']}")


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), required=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--seed", type=int, default=None)
@click.option("--workers", type=int, default=None)
@click.option("--samples", type=int, default=None)
def sweep(config_path, out_dir, seed, workers, samples):
    """Run a scenario across a (p_primary, p_secondary) connectivity grid."""
    raw = _apply_overrides(json.loads(Path(config_path).read_text()), seed, workers, samples)
    cfg = scenario_from_dict(raw)
    grid = connectivity_grid_from_dict(raw)
    rows = prevalence_sweep(cfg, grid)
    written = emit_tables(rows, out_dir, seed=cfg.seed, config_digest=config_digest(raw))
    click.echo(f"wrote {written['metrics']}")


@main.command("select-interval")
@click.option("--tables", "tables_path", type=click.Path(exists=True), required=True,
              help="metrics.csv produced by simulate/sweep.")
@click.option("--target-fnr", type=float, required=True)
@click.option("--out", "out_path", type=click.Path(), default=None,
              help="Optional JSON file for the selected interval.")
def select_interval_cmd(tables_path, target_fnr, out_path):
    """Pick the cheapest decision interval beating a target FNR."""
    rows, _meta = load_metrics(tables_path)
    interval = select_interval(rows, target_fnr)
    if interval is None:
        click.echo("infeasible: no interval meets the target false-negative rate")
        if out_path:
            Path(out_path).write_text(json.dumps({"feasible": False}) + "\n")
        sys.exit(1)
    result = {"feasible": True, "lower": interval.lower, "upper": interval.upper}
    click.echo(json.dumps(result))
    if out_path:
        Path(out_path).write_text(json.dumps(result) + "\n")


@main.command()
@click.option("--tables", "tables_path", type=click.Path(exists=True), required=True)
@click.option("--out", "out_path", type=click.Path(), default=None)
def report(tables_path, out_path):
    """List all pairwise dominance findings in a metrics table."""
    rows, _meta = load_metrics(tables_path)
    findings = dominance_report(rows)
    text = "".join(
        f"{f['dominator']} dominates {f['dominated']} on {f['metric']}\n" for f in findings
    )
    click.echo(text, nl=False)
    if out_path:
        Path(out_path).write_text(text)


@main.command()
@click.option("--host", default=None, help="Bind host (default from DOPE_BIND_ADDR).")
@click.option("--port", type=int, default=None, help="Bind port.")
@click.option("--data-dir", default=None, help="Session log directory (DOPE_DATA_DIR).")
def serve(host, port, data_dir):
    """Run the live session service."""
    import os

    import uvicorn

    from .service import create_app

    bind = os.environ.get("DOPE_BIND_ADDR", "127.0.0.1:8000")
    default_host, _, default_port = bind.rpartition(":")
    uvicorn.run(
        create_app(data_dir=data_dir),
        host=host or default_host or "127.0.0.1",
        port=port if port is not None else int(default_port or 8000),
    )


if __name__ == "__main__":  # pragma: no cover
    main()
