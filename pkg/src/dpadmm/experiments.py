"""Batch experiment driver: config parsing, seeded grids, metrics files.

A config file (INI sections, see ``parse_config``) describes one problem
instance and a grid of mechanism variants. Every grid cell runs with a
seed derived from the master seed and the cell position, writes one
metrics CSV per repetition, and contributes a row to the summary table.
Numbers are formatted with their shortest round-trip representation, so
reruns of the same config are byte-identical apart from wall-clock times.
"""

from __future__ import annotations

import configparser
import csv
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import applications, engine, mechanisms
from .applications import (
    loadshed_sensitivity,
    logistic_error_rate,
    logistic_sensitivity,
    logistic_value_and_gradient,
)
from .engine import DynamicRho, ScheduleConfig
from .mechanisms import MechanismConfig, SensitivityRecord

METRICS_COLUMNS = [
    "run_id",
    "seed",
    "t",
    "objective",
    "consensus",
    "violation",
    "noise_magnitude",
    "eps_basic",
    "eps_strong",
    "wall_ms",
]

PROBLEM_KINDS = ("consensus_qp", "logistic", "loadshed")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    problem_kind: str
    problem_params: dict
    problem_seed: int
    kinds: list[str]
    modes: list[str]
    epsilons: list[float]
    delta: float
    beta: float
    rho: float | DynamicRho
    regime: str
    rounds: int
    local_updates: list[int]
    repetitions: int
    master_seed: int
    output_dir: Path

    def validate(self) -> None:
        if self.problem_kind not in PROBLEM_KINDS:
            raise ConfigError(f"unknown problem kind {self.problem_kind!r}")
        if not self.kinds:
            raise ConfigError("at least one mechanism kind is required")
        for k in self.kinds:
            if k not in (mechanisms.LAPLACE, mechanisms.GAUSSIAN, mechanisms.NONE):
                raise ConfigError(f"unknown mechanism kind {k!r}")
        for m in self.modes:
            if m not in (mechanisms.OBJECTIVE, mechanisms.OUTPUT):
                raise ConfigError(f"unknown perturbation mode {m!r}")
        if not self.epsilons or any(e <= 0 for e in self.epsilons):
            raise ConfigError("epsilons must be positive (inf allowed)")
        if mechanisms.GAUSSIAN in self.kinds and not 0.0 < self.delta < 1.0:
            raise ConfigError("gaussian cells need delta in (0, 1)")
        if self.beta <= 0:
            raise ConfigError("beta must be positive")
        if self.rounds < 1:
            raise ConfigError("rounds must be >= 1")
        if not self.local_updates or any(E < 1 for E in self.local_updates):
            raise ConfigError("local_updates entries must be >= 1")
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")
        if self.problem_kind != "consensus_qp" and self.regime != "nonsmooth":
            raise ConfigError(
                f"{self.problem_kind} objectives only support the nonsmooth schedule"
            )
        try:
            ScheduleConfig(rho=self.rho, regime=self.regime)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


@dataclass(frozen=True)
class GridCell:
    index: int
    kind: str
    mode: str
    epsilon: float
    local_updates: int

    @property
    def label(self) -> str:
        eps = "inf" if math.isinf(self.epsilon) else repr(self.epsilon)
        return f"{self.kind}-{self.mode}-eps{eps}-E{self.local_updates}"


def _parse_floats(raw: str) -> list[float]:
    return [float(tok) for tok in raw.replace(",", " ").split()]


def _parse_names(raw: str) -> list[str]:
    return [tok.strip() for tok in raw.replace(",", " ").split()]


def parse_config(path) -> ExperimentConfig:
    """Read an experiment description from an INI file.

    Sections: [problem] kind/seed plus generator sizes, [mechanisms]
    kinds/modes/epsilons/delta/beta, [schedule] rho (constant or
    rho_c1/rho_c2/rho_period for the dynamic staircase) and regime,
    [run] rounds/local_updates/repetitions/seed, [output] directory.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    parser = configparser.ConfigParser()
    try:
        parser.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    try:
        problem = parser["problem"]
        mech = parser["mechanisms"]
        schedule = parser["schedule"]
        run_section = parser["run"]
        output = parser["output"]

        params = {
            key: _coerce(problem[key])
            for key in problem
            if key not in ("kind", "seed")
        }
        if "rho" in schedule:
            rho = float(schedule["rho"])
        else:
            rho = DynamicRho(
                c1=float(schedule["rho_c1"]),
                c2=float(schedule["rho_c2"]),
                period=int(schedule["rho_period"]),
                cap=float(schedule.get("rho_cap", "1e9")),
            )
        config = ExperimentConfig(
            problem_kind=problem["kind"],
            problem_params=params,
            problem_seed=int(problem.get("seed", "0")),
            kinds=_parse_names(mech["kinds"]),
            modes=_parse_names(mech.get("modes", mechanisms.OBJECTIVE)),
            epsilons=_parse_floats(mech["epsilons"]),
            delta=float(mech.get("delta", "0.01")),
            beta=float(mech.get("beta", "0.01")),
            rho=rho,
            regime=schedule.get("regime", "nonsmooth"),
            rounds=int(run_section["rounds"]),
            local_updates=[int(v) for v in _parse_floats(run_section.get("local_updates", "1"))],
            repetitions=int(run_section.get("repetitions", "1")),
            master_seed=int(run_section.get("seed", "0")),
            output_dir=Path(output["directory"]),
        )
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"invalid config value: {exc}") from exc
    config.validate()
    return config


def _coerce(raw: str):
    try:
        value = float(raw)
    except ValueError:
        return raw
    return int(value) if value.is_integer() and "." not in raw and "e" not in raw.lower() else value


def build_problem(config: ExperimentConfig):
    """Instantiate the configured synthetic problem (deterministic per seed)."""
    params = {k: v for k, v in config.problem_params.items() if k != "agents"}
    if config.problem_kind == "consensus_qp":
        params.setdefault("regime", config.regime)
    return applications.make_synthetic(
        config.problem_kind,
        config.problem_params.get("agents", 3),
        config.problem_seed,
        **params,
    )


def sensitivity_source(config: ExperimentConfig, instance, mode: str):
    """Worst-case sensitivity callable for one grid cell.

    Logistic objectives use the iterate-dependent added-sample bound; the
    output variant rescales it by the closed-form solve's contraction
    1/(1/eta + rho). The other problems use the constant demand-adjacency
    bound. L1 components fall back to sqrt(n) times the L2 bound.
    """
    if config.problem_kind == "logistic":
        dataset = instance.dataset
        J, K = dataset.feature_dim, dataset.label_count
        total = dataset.total_count
        root_n = math.sqrt(J * K)

        def source(ctx):
            delta2 = logistic_sensitivity(ctx.z.reshape(J, K), total)
            if mode == mechanisms.OUTPUT:
                delta2 = delta2 / (1.0 / ctx.eta + ctx.rho)
            return SensitivityRecord(l1=root_n * delta2, l2=delta2)

        return source
    return mechanisms.constant_sensitivity(loadshed_sensitivity(config.beta, mode))


def grid_cells(config: ExperimentConfig) -> list[GridCell]:
    cells = []
    index = 0
    for kind in config.kinds:
        for mode in config.modes:
            for eps in config.epsilons:
                for E in config.local_updates:
                    cells.append(GridCell(index, kind, mode, eps, E))
                    index += 1
    return cells


def _format(value: float) -> str:
    if isinstance(value, float) and math.isnan(value):
        return "nan"
    return repr(float(value))


def run_cell(config: ExperimentConfig, cell: GridCell, rep: int) -> dict:
    """Run one (cell, repetition) and write its metrics file.

    Returns the final-round metrics used by the summary, including the
    held-out loss/error for logistic problems.
    """
    instance = build_problem(config)
    problem = instance.problem
    mech = MechanismConfig(
        kind=cell.kind if math.isfinite(cell.epsilon) else mechanisms.NONE,
        epsilon_bar=cell.epsilon,
        delta_bar=config.delta if cell.kind == mechanisms.GAUSSIAN and math.isfinite(cell.epsilon) else 0.0,
        mode=cell.mode,
        sensitivity=sensitivity_source(config, instance, cell.mode),
    )
    schedules = ScheduleConfig(
        rho=config.rho, regime=config.regime, epsilon_bar=cell.epsilon
    )
    seed = (config.master_seed, cell.index, rep)
    seed_label = "-".join(str(s) for s in seed)
    started = time.perf_counter()
    result = engine.run(
        problem,
        schedules,
        mech,
        rounds=config.rounds,
        local_updates=cell.local_updates,
        seed=seed,
    )
    wall_ms = (time.perf_counter() - started) * 1000.0

    run_id = f"{cell.label}-rep{rep}"
    out_path = config.output_dir / f"{run_id}.csv"
    with out_path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_COLUMNS)
        per_round_ms = wall_ms / config.rounds
        for rec in result.rounds:
            writer.writerow(
                [
                    run_id,
                    seed_label,
                    str(rec.t),
                    _format(rec.objective),
                    _format(rec.consensus),
                    _format(rec.violation),
                    _format(rec.noise_magnitude),
                    _format(rec.eps_basic),
                    _format(rec.eps_strong),
                    _format(per_round_ms),
                ]
            )

    last = result.rounds[-1]
    summary = {
        "cell": cell.label,
        "rep": rep,
        "objective": last.objective,
        "consensus": last.consensus,
        "violation": last.violation,
        "max_violation": max(r.violation for r in result.rounds),
        "noise_magnitude": last.noise_magnitude,
        "eps_basic": last.eps_basic,
        "eps_strong": last.eps_strong,
        "heldout_loss": math.nan,
        "heldout_error": math.nan,
    }
    if config.problem_kind == "logistic" and instance.dataset.test_features is not None:
        dataset = instance.dataset
        z_bar = result.state.z.mean(axis=0).reshape(dataset.feature_dim, dataset.label_count)
        loss, _ = logistic_value_and_gradient(
            dataset.test_features, dataset.test_labels, z_bar, dataset.test_features.shape[0]
        )
        summary["heldout_loss"] = loss
        summary["heldout_error"] = logistic_error_rate(
            dataset.test_features, dataset.test_labels, z_bar
        )
    return summary


SUMMARY_COLUMNS = [
    "cell",
    "repetitions",
    "objective_mean",
    "objective_std",
    "consensus_mean",
    "consensus_std",
    "violation_mean",
    "violation_max",
    "noise_magnitude_mean",
    "eps_basic",
    "eps_strong",
    "heldout_loss_mean",
    "heldout_error_mean",
]


def _write_summary(rows: list[dict], path: Path) -> None:
    by_cell: dict[str, list[dict]] = {}
    for row in rows:
        by_cell.setdefault(row["cell"], []).append(row)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SUMMARY_COLUMNS)
        for cell, reps in by_cell.items():

            def agg(key):
                return np.array([r[key] for r in reps], dtype=float)

            writer.writerow(
                [
                    cell,
                    str(len(reps)),
                    _format(agg("objective").mean()),
                    _format(agg("objective").std()),
                    _format(agg("consensus").mean()),
                    _format(agg("consensus").std()),
                    _format(agg("violation").mean()),
                    _format(agg("max_violation").max()),
                    _format(agg("noise_magnitude").mean()),
                    _format(reps[0]["eps_basic"]),
                    _format(reps[0]["eps_strong"]),
                    _format(agg("heldout_loss").mean()),
                    _format(agg("heldout_error").mean()),
                ]
            )


def run_experiment(config: ExperimentConfig, workers: int = 1) -> Path:
    """Execute the whole grid and write metrics plus ``summary.csv``.

    The grid is validated before anything runs; cell order and seeds are
    deterministic, so workers > 1 only changes the schedule, not the
    output bytes.
    """
    config.validate()
    build_problem(config)  # fail on bad generator parameters before any run
    config.output_dir.mkdir(parents=True, exist_ok=True)
    probe = config.output_dir / ".write_probe"
    try:
        probe.write_text("", encoding="utf-8")
        probe.unlink()
    except OSError as exc:
        raise ConfigError(f"output directory not writable: {exc}") from exc

    jobs = [(cell, rep) for cell in grid_cells(config) for rep in range(config.repetitions)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_cell_job, [(config, c, r) for c, r in jobs]))
    else:
        rows = [run_cell(config, cell, rep) for cell, rep in jobs]

    summary_path = config.output_dir / "summary.csv"
    _write_summary(rows, summary_path)
    return summary_path


def _run_cell_job(args):
    config, cell, rep = args
    return run_cell(config, cell, rep)


def summarize_metrics(metrics_dir) -> Path:
    """Rebuild summary.csv from the metrics files already in a directory."""
    metrics_dir = Path(metrics_dir)
    rows = []
    for path in sorted(metrics_dir.glob("*-rep*.csv")):
        with path.open("r", encoding="utf-8", newline="") as fh:
            records = list(csv.DictReader(fh))
        if not records:
            continue
        last = records[-1]
        cell, _, rep = path.stem.rpartition("-rep")
        rows.append(
            {
                "cell": cell,
                "rep": int(rep),
                "objective": float(last["objective"]),
                "consensus": float(last["consensus"]),
                "violation": float(last["violation"]),
                "max_violation": max(float(r["violation"]) for r in records),
                "noise_magnitude": float(last["noise_magnitude"]),
                "eps_basic": float(last["eps_basic"]),
                "eps_strong": float(last["eps_strong"]),
                "heldout_loss": math.nan,
                "heldout_error": math.nan,
            }
        )
    if not rows:
        raise ConfigError(f"no metrics files found under {metrics_dir}")
    summary_path = metrics_dir / "summary.csv"
    _write_summary(rows, summary_path)
    return summary_path


FIGURE_METRICS = {
    "noise": "noise_magnitude",
    "objective": "objective",
    "feasibility": "consensus",
    "violation": "violation",
}


def figure_tables(metrics_dir, out_dir=None) -> list[Path]:
    """Aggregate per-round means across repetitions into per-figure tables.

    One file per metric, rows indexed by round, one column per grid cell;
    these match the round-indexed axes used to plot noise magnitude,
    objective value, and feasibility.
    """
    metrics_dir = Path(metrics_dir)
    out_dir = Path(out_dir) if out_dir is not None else metrics_dir
    series: dict[str, dict[str, dict[int, list[float]]]] = {
        name: {} for name in FIGURE_METRICS
    }
    for path in sorted(metrics_dir.glob("*-rep*.csv")):
        cell, _, _ = path.stem.rpartition("-rep")
        with path.open("r", encoding="utf-8", newline="") as fh:
            for record in csv.DictReader(fh):
                t = int(record["t"])
                for name, column in FIGURE_METRICS.items():
                    series[name].setdefault(cell, {}).setdefault(t, []).append(
                        float(record[column])
                    )
    written = []
    for name, cells in series.items():
        if not cells:
            continue
        labels = sorted(cells)
        rounds = sorted({t for per_cell in cells.values() for t in per_cell})
        path = out_dir / f"figure_{name}.csv"
        with path.open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t"] + labels)
            for t in rounds:
                row = [str(t)]
                for label in labels:
                    values = cells[label].get(t, [])
                    row.append(_format(float(np.mean(values))) if values else "nan")
                writer.writerow(row)
        written.append(path)
    return written
