"""Simulation campaigns comparing pooling strategies.

Populations are drawn from the prior; every configured strategy screens
each population through the shared noisy-test likelihood; false-negative /
false-positive rates, mean test counts, and posterior entropies are
aggregated into plot-ready tables.

Sequential sessions are simulated once per population and evaluated
against every decision interval afterwards: the trajectory of proposals,
results, and marginals does not depend on the interval (only the stopping
round does), so a single trajectory replayed against the whole interval
grid is identical to running each interval separately with the same seeds.

Replicates are independent work units with derived seeds; aggregation
sorts by replicate index before reducing, so results are identical for any
worker count.
"""

from __future__ import annotations

import csv
import hashlib
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .baselines import (
    DorfmanConfig,
    MatrixConfig,
    RecursiveConfig,
    StrategyOutcome,
    dorfman_run,
    matrix_run,
    recursive_run,
    separate_run,
)
from .design import HillClimbConfig
from .errors import InvalidArgumentError
from .model import (
    Design,
    InfectionState,
    Pool,
    PopulationSpec,
    PriorParams,
    TestData,
    TestErrorParams,
    model_config_from_dict,
    sample_prior_matrix,
)
from .posterior import MAX_ENUM_N, GibbsConfig, exact_posterior, posterior_entropy
from .seeding import TAG_POPULATION, TAG_STRATEGY, substream, substream_seed
from .sequential import (
    DecisionInterval,
    DopeConfig,
    SessionState,
    classify,
    ingest,
    propose,
    should_stop,
    simulation_executor,
)

PAPER_INTERVAL_GRID_LOWER = [i / 100 for i in range(1, 16)]
PAPER_INTERVAL_GRID_UPPER = [j / 100 for j in range(30, 100, 5)]


@dataclass(frozen=True)
class DopeStrategyConfig:
    """Sequential-strategy settings for a campaign (per-interval rows come
    from the scenario's interval grid)."""

    k_pools_per_step: int = 1
    gibbs_burn_in: int = 800
    gibbs_max_thinning: int = 25
    hill_climb: HillClimbConfig = HillClimbConfig(
        n_restarts=2, n_perturbations=6, max_steps=12
    )
    max_rounds: int | None = None


@dataclass(frozen=True)
class StrategyRun:
    """One strategy entry of a scenario, with a stable display id."""

    kind: str  # dorfman | recursive | matrix | separate | dope
    config: object | None
    strategy_id: str


@dataclass(frozen=True)
class ScenarioConfig:
    spec: PopulationSpec
    prior: PriorParams
    err: TestErrorParams
    n_populations: int
    strategies: tuple[StrategyRun, ...]
    interval_grid: tuple[DecisionInterval, ...]
    mc_samples: int
    seed: int
    workers: int = 1

    def __post_init__(self):
        if self.n_populations < 1:
            raise InvalidArgumentError("n_populations must be >= 1", field="n_populations")
        if any(s.kind == "dope" for s in self.strategies) and not self.interval_grid:
            raise InvalidArgumentError(
                "interval_grid must be non-empty when a dope strategy is configured",
                field="interval_grid",
            )


@dataclass(frozen=True)
class MetricsRow:
    strategy: str
    interval: DecisionInterval | None
    mean_tests: float
    fnr: float
    fpr: float
    mean_posterior_entropy: float | None
    prevalence: float
    n_populations: int

    @property
    def label(self) -> str:
        if self.interval is None:
            return self.strategy
        if self.interval.is_empty:
            return f"{self.strategy}[empty]"
        return f"{self.strategy}[{self.interval.lower:g},{self.interval.upper:g}]"


# ---------------------------------------------------------------------------
# Per-replicate simulation
# ---------------------------------------------------------------------------


def _entropy_from_transcript(
    cfg: ScenarioConfig, outcome: StrategyOutcome
) -> float | None:
    if cfg.spec.n_individuals > MAX_ENUM_N:
        return None
    pools = tuple(Pool(frozenset(members)) for members, _ in outcome.transcript)
    results = tuple(result for _, result in outcome.transcript)
    dist = exact_posterior(
        cfg.spec, cfg.prior, cfg.err, Design(pools), TestData(results)
    )
    return dist.entropy()


def _dope_trajectory(
    cfg: ScenarioConfig, strat: DopeStrategyConfig, true_state: InfectionState, seed: int
) -> list[dict]:
    """Round-by-round snapshots of one sequential session.

    The loop never consults a decision interval; it runs until every
    interval in the scenario grid would have stopped (or the round cap),
    recording (tests, marginals, exact entropy) after each round.
    """
    never_stop = DecisionInterval(0.0, 1.0)  # contains every marginal
    dope_cfg = DopeConfig(
        k_pools_per_step=strat.k_pools_per_step,
        interval=never_stop,
        gibbs=GibbsConfig(
            n_samples=cfg.mc_samples,
            burn_in=strat.gibbs_burn_in,
            max_thinning=strat.gibbs_max_thinning,
        ),
        hill_climb=strat.hill_climb,
        max_rounds=strat.max_rounds,
        seed=seed,
    )
    executor = simulation_executor(true_state, cfg.err, substream_seed(seed, TAG_STRATEGY))
    state = SessionState()
    max_rounds = dope_cfg.effective_max_rounds(cfg.spec)
    exact_ok = cfg.spec.n_individuals <= MAX_ENUM_N
    snapshots = []
    while True:
        proposal = propose(state, dope_cfg, cfg.spec, cfg.prior, cfg.err)
        results = executor(proposal)
        ingest(state, proposal, results, dope_cfg, cfg.spec, cfg.prior, cfg.err)
        entropy = (
            exact_posterior(cfg.spec, cfg.prior, cfg.err, state.design, state.data).entropy()
            if exact_ok
            else posterior_entropy(state.marginals)
        )
        snapshots.append(
            {
                "round": state.round,
                "tests": state.tests_used,
                "marginals": np.array(state.marginals),
                "entropy": entropy,
            }
        )
        all_stopped = all(should_stop(state.marginals, iv) for iv in cfg.interval_grid)
        if all_stopped or state.round >= max_rounds:
            break
    return snapshots


def evaluate_interval(snapshots: list[dict], interval: DecisionInterval) -> dict:
    """First stopping round of a recorded trajectory under one interval."""
    for snap in snapshots:
        if should_stop(snap["marginals"], interval):
            return {
                "tests": snap["tests"],
                "classification": classify(snap["marginals"]),
                "entropy": snap["entropy"],
                "truncated": False,
            }
    last = snapshots[-1]
    return {
        "tests": last["tests"],
        "classification": classify(last["marginals"]),
        "entropy": last["entropy"],
        "truncated": True,
    }


def _run_replicate(cfg: ScenarioConfig, index: int) -> dict:
    bits = sample_prior_matrix(
        cfg.spec, cfg.prior, substream(cfg.seed, TAG_POPULATION, index), 1
    )[0]
    true_state = InfectionState(tuple(int(b) for b in bits))
    out: dict = {"index": index, "true_bits": true_state.bits, "strategies": {}}
    for s_idx, strat in enumerate(cfg.strategies):
        seed = substream_seed(cfg.seed, TAG_STRATEGY, index, s_idx)
        if strat.kind == "dope":
            snapshots = _dope_trajectory(cfg, strat.config, true_state, seed)
            out["strategies"][strat.strategy_id] = {
                "per_interval": [
                    evaluate_interval(snapshots, interval)
                    for interval in cfg.interval_grid
                ]
            }
            continue
        rng = substream(seed)
        if strat.kind == "dorfman":
            outcome = dorfman_run(true_state, cfg.err, strat.config, rng)
        elif strat.kind == "recursive":
            outcome = recursive_run(true_state, cfg.err, strat.config, rng)
        elif strat.kind == "matrix":
            outcome = matrix_run(true_state, cfg.err, strat.config, rng)
        elif strat.kind == "separate":
            outcome = separate_run(true_state, cfg.err, rng)
        else:
            raise InvalidArgumentError(f"unknown strategy kind {strat.kind!r}")
        out["strategies"][strat.strategy_id] = {
            "tests": outcome.tests_used,
            "classification": outcome.classification,
            "entropy": _entropy_from_transcript(cfg, outcome),
        }
    return out


def _replicate_task(args) -> dict:
    return _run_replicate(*args)


# ---------------------------------------------------------------------------
# Aggregation
# ---------------------------------------------------------------------------


def _aggregate(
    truths: list[tuple[int, ...]], results: list[dict]
) -> tuple[float, float, float, float | None]:
    """Pool error counts over replicates: (mean_tests, fnr, fpr, mean entropy).

    FNR divides by the total number of truly infected individuals across
    all replicates (FPR by truly healthy), so zero-infected replicates
    contribute only to FPR and test counts.
    """
    fn = fp = infected = healthy = 0
    tests_total = 0
    entropies = []
    for truth, res in zip(truths, results):
        cls = res["classification"]
        for t, c in zip(truth, cls):
            if t == 1:
                infected += 1
                if c == 0:
                    fn += 1
            else:
                healthy += 1
                if c == 1:
                    fp += 1
        tests_total += res["tests"]
        if res["entropy"] is not None:
            entropies.append(res["entropy"])
    n = len(results)
    mean_tests = tests_total / n
    fnr = fn / infected if infected else 0.0
    fpr = fp / healthy if healthy else 0.0
    entropy = sum(entropies) / len(entropies) if len(entropies) == n and n > 0 else None
    return mean_tests, fnr, fpr, entropy


def run_scenario(cfg: ScenarioConfig, workers: int | None = None) -> list[MetricsRow]:
    """Simulate the scenario and aggregate one MetricsRow per strategy
    (per interval for sequential strategies)."""
    workers = workers if workers is not None else cfg.workers
    indices = list(range(cfg.n_populations))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            replicates = list(pool.map(_replicate_task, [(cfg, i) for i in indices]))
    else:
        replicates = [_run_replicate(cfg, i) for i in indices]
    replicates.sort(key=lambda r: r["index"])

    truths = [r["true_bits"] for r in replicates]
    n_bits = cfg.spec.n_individuals * cfg.n_populations
    prevalence = sum(sum(t) for t in truths) / n_bits

    rows = []
    for strat in cfg.strategies:
        if strat.kind == "dope":
            for iv_idx, interval in enumerate(cfg.interval_grid):
                per = [
                    r["strategies"][strat.strategy_id]["per_interval"][iv_idx]
                    for r in replicates
                ]
                mean_tests, fnr, fpr, entropy = _aggregate(truths, per)
                rows.append(
                    MetricsRow(
                        strategy=strat.strategy_id,
                        interval=interval,
                        mean_tests=mean_tests,
                        fnr=fnr,
                        fpr=fpr,
                        mean_posterior_entropy=entropy,
                        prevalence=prevalence,
                        n_populations=cfg.n_populations,
                    )
                )
        else:
            per = [r["strategies"][strat.strategy_id] for r in replicates]
            mean_tests, fnr, fpr, entropy = _aggregate(truths, per)
            rows.append(
                MetricsRow(
                    strategy=strat.strategy_id,
                    interval=None,
                    mean_tests=mean_tests,
                    fnr=fnr,
                    fpr=fpr,
                    mean_posterior_entropy=entropy,
                    prevalence=prevalence,
                    n_populations=cfg.n_populations,
                )
            )
    return rows


def prevalence_sweep(
    cfg: ScenarioConfig,
    connectivity_grid: list[tuple[float, float]],
    workers: int | None = None,
) -> list[MetricsRow]:
    """One run_scenario per (p_primary, p_secondary) point, sorted by
    realized prevalence."""
    if not connectivity_grid:
        raise InvalidArgumentError("connectivity grid must be non-empty")
    rows: list[MetricsRow] = []
    for g_idx, (pp, ps) in enumerate(connectivity_grid):
        point_cfg = replace(
            cfg,
            prior=PriorParams(p_primary=pp, p_secondary=ps, p_basal=cfg.prior.p_basal),
            seed=substream_seed(cfg.seed, 23, g_idx),
        )
        rows.extend(run_scenario(point_cfg, workers=workers))
    rows.sort(key=lambda r: (r.prevalence, r.label))
    return rows


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


def dominance_report(rows: list[MetricsRow]) -> list[dict]:
    """All (A dominates B) findings on false-negative rate and entropy.

    A dominates B for FNR when fnr_A < fnr_B with mean_tests_A <=
    mean_tests_B; analogously for posterior entropy.
    """
    findings = []
    for a in rows:
        for b in rows:
            if a is b:
                continue
            if a.fnr < b.fnr and a.mean_tests <= b.mean_tests:
                findings.append({"metric": "fnr", "dominator": a.label, "dominated": b.label})
            if (
                a.mean_posterior_entropy is not None
                and b.mean_posterior_entropy is not None
                and a.mean_posterior_entropy < b.mean_posterior_entropy
                and a.mean_tests <= b.mean_tests
            ):
                findings.append(
                    {"metric": "entropy", "dominator": a.label, "dominated": b.label}
                )
    return findings


def select_interval(rows: list[MetricsRow], target_fnr: float) -> DecisionInterval | None:
    """Cheapest interval whose FNR beats the target; None when infeasible.

    Ties break by lower FNR, then lexicographic (lower, upper) bounds.
    """
    candidates = [r for r in rows if r.interval is not None and r.fnr < target_fnr]
    if not candidates:
        return None
    def key(r: MetricsRow):
        iv = r.interval
        bounds = (iv.lower, iv.upper) if not iv.is_empty else (-1.0, -1.0)
        return (r.mean_tests, r.fnr, bounds)
    return min(candidates, key=key).interval


# ---------------------------------------------------------------------------
# Tables
# ---------------------------------------------------------------------------

_COLUMNS = [
    "strategy",
    "interval",
    "mean_tests",
    "fnr",
    "fpr",
    "mean_posterior_entropy",
    "prevalence",
    "n_populations",
]


def _interval_str(interval: DecisionInterval | None) -> str:
    if interval is None:
        return ""
    if interval.is_empty:
        return "empty"
    return f"{interval.lower!r}:{interval.upper!r}"


def _interval_parse(text: str) -> DecisionInterval | None:
    if text == "":
        return None
    if text == "empty":
        return DecisionInterval.empty()
    lo, hi = text.split(":")
    return DecisionInterval(lower=float(lo), upper=float(hi))


def emit_tables(
    rows: list[MetricsRow],
    destination: str | Path,
    seed: int,
    config_digest: str,
) -> dict[str, Path]:
    """Write the full metrics table plus plot-ready projections.

    Floats are written with repr so a round-trip parse reproduces the rows
    exactly. Every file carries the seed and configuration digest as
    comment lines.
    """
    dest = Path(destination)
    dest.mkdir(parents=True, exist_ok=True)
    provenance = [f"# seed={seed}", f"# config_digest={config_digest}"]

    def write(name: str, header: list[str], records: list[list]) -> Path:
        path = dest / name
        with path.open("w", newline="") as fh:
            for line in provenance:
                fh.write(line + "\n")
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerows(records)
        return path

    def fmt(value) -> str:
        if value is None:
            return ""
        return repr(value)

    written = {}
    written["metrics"] = write(
        "metrics.csv",
        _COLUMNS,
        [
            [
                r.strategy,
                _interval_str(r.interval),
                repr(r.mean_tests),
                repr(r.fnr),
                repr(r.fpr),
                fmt(r.mean_posterior_entropy),
                repr(r.prevalence),
                str(r.n_populations),
            ]
            for r in rows
        ],
    )
    written["tests_vs_fnr"] = write(
        "tests_vs_fnr.csv",
        ["label", "mean_tests", "fnr"],
        [[r.label, repr(r.mean_tests), repr(r.fnr)] for r in rows],
    )
    written["tests_vs_entropy"] = write(
        "tests_vs_entropy.csv",
        ["label", "mean_tests", "mean_posterior_entropy"],
        [
            [r.label, repr(r.mean_tests), repr(r.mean_posterior_entropy)]
            for r in rows
            if r.mean_posterior_entropy is not None
        ],
    )
    written["prevalence_vs_tests"] = write(
        "prevalence_vs_tests.csv",
        ["label", "prevalence", "mean_tests"],
        [[r.label, repr(r.prevalence), repr(r.mean_tests)] for r in rows],
    )
    written["prevalence_vs_fnr"] = write(
        "prevalence_vs_fnr.csv",
        ["label", "prevalence", "fnr"],
        [[r.label, repr(r.prevalence), repr(r.fnr)] for r in rows],
    )
    return written


def load_metrics(path: str | Path) -> tuple[list[MetricsRow], dict]:
    """Parse a metrics.csv written by emit_tables; exact inverse."""
    meta = {}
    rows = []
    with Path(path).open() as fh:
        lines = fh.read().splitlines()
    body = []
    for line in lines:
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            meta[key.strip()] = value.strip()
        else:
            body.append(line)
    reader = csv.reader(body)
    header = next(reader)
    if header != _COLUMNS:
        raise InvalidArgumentError(f"unexpected metrics header: {header}")
    for rec in reader:
        if not rec:
            continue
        rows.append(
            MetricsRow(
                strategy=rec[0],
                interval=_interval_parse(rec[1]),
                mean_tests=float(rec[2]),
                fnr=float(rec[3]),
                fpr=float(rec[4]),
                mean_posterior_entropy=float(rec[5]) if rec[5] != "" else None,
                prevalence=float(rec[6]),
                n_populations=int(rec[7]),
            )
        )
    return rows, meta


# ---------------------------------------------------------------------------
# Scenario files
# ---------------------------------------------------------------------------


def _strategy_from_dict(entry: dict) -> StrategyRun:
    if not isinstance(entry, dict) or "strategy" not in entry:
        raise InvalidArgumentError(
            "each strategies entry needs a 'strategy' field", field="strategies"
        )
    kind = entry["strategy"]
    if kind == "dorfman":
        config = DorfmanConfig(pool_size=entry["pool_size"])
        return StrategyRun(kind, config, f"dorfman-{config.pool_size}")
    if kind == "recursive":
        config = RecursiveConfig(initial_pool_size=entry["initial_pool_size"])
        return StrategyRun(kind, config, f"recursive-{config.initial_pool_size}")
    if kind == "matrix":
        config = MatrixConfig(rows=entry["rows"], cols=entry["cols"])
        return StrategyRun(kind, config, f"matrix-{config.rows}x{config.cols}")
    if kind == "separate":
        return StrategyRun(kind, None, "separate")
    if kind == "dope":
        hc = entry.get("hill_climb", {})
        config = DopeStrategyConfig(
            k_pools_per_step=entry.get("k_pools_per_step", 1),
            gibbs_burn_in=entry.get("gibbs_burn_in", 800),
            gibbs_max_thinning=entry.get("gibbs_max_thinning", 25),
            hill_climb=HillClimbConfig(
                n_restarts=hc.get("n_restarts", 2),
                n_perturbations=hc.get("n_perturbations", 6),
                max_steps=hc.get("max_steps", 12),
            ),
            max_rounds=entry.get("max_rounds"),
        )
        return StrategyRun(kind, config, f"dope-k{config.k_pools_per_step}")
    raise InvalidArgumentError(f"unknown strategy {kind!r}", field="strategies")


def _interval_grid_from_dict(obj) -> tuple[DecisionInterval, ...]:
    if obj is None:
        return ()
    if isinstance(obj, dict) and "pairs" in obj:
        return tuple(DecisionInterval(float(a), float(b)) for a, b in obj["pairs"])
    if isinstance(obj, dict) and "lower" in obj and "upper" in obj:
        return tuple(
            DecisionInterval(float(a), float(b))
            for a in obj["lower"]
            for b in obj["upper"]
        )
    raise InvalidArgumentError(
        "interval_grid must contain 'pairs' or 'lower'+'upper' lists",
        field="interval_grid",
    )


def scenario_from_dict(d: dict) -> ScenarioConfig:
    spec, prior, err = model_config_from_dict(d)
    for field in ("n_populations", "mc_samples", "seed", "strategies"):
        if field not in d:
            raise InvalidArgumentError(f"missing scenario field {field!r}", field=field)
    return ScenarioConfig(
        spec=spec,
        prior=prior,
        err=err,
        n_populations=int(d["n_populations"]),
        strategies=tuple(_strategy_from_dict(e) for e in d["strategies"]),
        interval_grid=_interval_grid_from_dict(d.get("interval_grid")),
        mc_samples=int(d["mc_samples"]),
        seed=int(d["seed"]),
        workers=int(d.get("workers", 1)),
    )


def load_scenario(path: str | Path) -> tuple[ScenarioConfig, dict]:
    raw = json.loads(Path(path).read_text())
    return scenario_from_dict(raw), raw


def connectivity_grid_from_dict(d: dict) -> list[tuple[float, float]]:
    grid = d.get("connectivity_grid")
    if not isinstance(grid, dict) or "p_primary" not in grid or "p_secondary" not in grid:
        raise InvalidArgumentError(
            "sweep configs need connectivity_grid with p_primary/p_secondary lists",
            field="connectivity_grid",
        )
    return [(float(pp), float(ps)) for pp in grid["p_primary"] for ps in grid["p_secondary"]]


def config_digest(raw: dict) -> str:
    return hashlib.sha256(
        json.dumps(raw, sort_keys=True, allow_nan=False).encode()
    ).hexdigest()[:16]
