"""End-to-end run: data -> surrogates -> NSGA-II / R-NSGA-II -> bargaining -> report."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .bargain import (
    BargainResult,
    DisagreementPoint,
    bargain,
)
from .dataset import CONTROLLED, MANIPULATED, Dataset, SyntheticSpec, load_csv, synthesize, train_test_split
from .errors import ConfigError, FurnaceOptError, GridSizeError, ModelQualityError
from .evolve import BoundsBox, GaParams, derive_seed, make_rng
from .moo import MooTrace, Objective, ParetoFront, ProblemSpec, nondominated_mask, nsga2_run, rnsga2_run, RnsgaParams
from .surrogate import (
    CartParams,
    ModelMetrics,
    SurrogateSet,
    fit_surrogates,
    read_metrics_csv,
    select_models,
    write_metrics_csv,
)

log = logging.getLogger(__name__)

OBJECTIVE_TARGETS = ("absorbed_duty", "cot")  # Y1, Y2
MAX_GRID_POINTS = 10**7
STACK_O2_BAND = (1.5, 2.0)
REPORT_FILES = ("metrics.csv", "front_nsga2.csv", "front_rnsga2.csv", "nash.json",
                "comparison.csv", "feasible_scatter.csv", "report.md")


# --------------------------------------------------------------------------
# config


@dataclass
class PipelineConfig:
    csv_path: str | None = None
    synthetic: SyntheticSpec | None = field(default_factory=SyntheticSpec)
    test_fraction: float = 0.2
    split_seed: int = 0
    cart: dict[str, CartParams] = field(default_factory=lambda: {t: CartParams() for t in CONTROLLED})
    test_r2_threshold: float = 0.5
    bounds: BoundsBox = field(default_factory=BoundsBox.default)
    ga: GaParams = field(default_factory=GaParams)
    rnsga: RnsgaParams = field(default_factory=RnsgaParams)
    oracle_resolution: int = 50
    scatter_samples: int = 500
    output_dir: str = "out"

    def __post_init__(self):
        if self.csv_path is None and self.synthetic is None:
            raise ConfigError("config needs a data source: csv_path or synthetic")
        if self.oracle_resolution and self.oracle_resolution < 2:
            raise ConfigError("oracle_resolution must be 0 (off) or >= 2")

    def with_seed(self, seed: int) -> "PipelineConfig":
        """Override every seed in the config with ``seed``."""
        seed = int(seed)
        syn = replace(self.synthetic, seed=seed) if self.synthetic is not None else None
        return replace(self, synthetic=syn, split_seed=seed, ga=self.ga.with_seed(seed),
                       rnsga=replace(self.rnsga, base=self.rnsga.base.with_seed(seed)))

    @classmethod
    def from_dict(cls, d: Mapping, base_dir: Path | None = None) -> "PipelineConfig":
        d = dict(d)
        known = {"data", "split", "cart", "test_r2_threshold", "bounds", "ga", "rnsga",
                 "oracle_resolution", "scatter_samples", "output_dir"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config key(s): {sorted(unknown)}")
        kw: dict = {}
        data = d.get("data", {"synthetic": {}})
        if "csv" in data:
            p = Path(data["csv"])
            kw["csv_path"] = str(base_dir / p if base_dir and not p.is_absolute() else p)
            kw["synthetic"] = None
        elif "synthetic" in data:
            kw["synthetic"] = SyntheticSpec.from_dict(data["synthetic"])
        else:
            raise ConfigError("data block needs 'csv' or 'synthetic'")
        split = d.get("split", {})
        kw["test_fraction"] = float(split.get("test_fraction", 0.2))
        kw["split_seed"] = int(split.get("seed", 0))
        cart = d.get("cart", {})
        default = CartParams.from_dict(cart.get("default", {}))
        kw["cart"] = {t: CartParams.from_dict(cart[t]) if t in cart else default for t in CONTROLLED}
        if "test_r2_threshold" in d:
            kw["test_r2_threshold"] = float(d["test_r2_threshold"])
        if "bounds" in d:
            kw["bounds"] = BoundsBox.from_dict(d["bounds"])
        ga = GaParams.from_dict(d.get("ga", {}))
        kw["ga"] = ga
        r = dict(d.get("rnsga", {}))
        base = GaParams.from_dict({**ga.to_dict(), **r.pop("ga", {})})
        unknown = set(r) - {"reference_points", "epsilon", "weights"}
        if unknown:
            raise ConfigError(f"unknown rnsga key(s): {sorted(unknown)}")
        kw["rnsga"] = RnsgaParams(base=base, **{k: tuple(map(tuple, v)) if k == "reference_points" else v
                                               for k, v in r.items()})
        for key in ("oracle_resolution", "scatter_samples"):
            if key in d:
                kw[key] = int(d[key])
        if "output_dir" in d:
            kw["output_dir"] = str(d["output_dir"])
        return cls(**kw)

    @classmethod
    def from_json(cls, path) -> "PipelineConfig":
        path = Path(path)
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
        return cls.from_dict(raw, base_dir=path.parent)

    def to_dict(self) -> dict:
        data = {"csv": self.csv_path} if self.csv_path else {"synthetic": self.synthetic.to_dict()}
        rn = self.rnsga.to_dict()
        rn["ga"] = self.rnsga.base.to_dict()
        return {
            "data": data,
            "split": {"test_fraction": self.test_fraction, "seed": self.split_seed},
            "cart": {t: {"max_depth": p.max_depth, "min_samples_leaf": p.min_samples_leaf,
                         "min_samples_split": p.min_samples_split} for t, p in self.cart.items()},
            "test_r2_threshold": self.test_r2_threshold,
            "bounds": self.bounds.to_dict(),
            "ga": self.ga.to_dict(),
            "rnsga": rn,
            "oracle_resolution": self.oracle_resolution,
            "scatter_samples": self.scatter_samples,
            "output_dir": self.output_dir,
        }


# --------------------------------------------------------------------------
# oracle


@dataclass
class OracleResult:
    front_genomes: np.ndarray
    front_objectives: np.ndarray
    nash_genome: np.ndarray | None
    nash_payoffs: np.ndarray | None
    nash_product: float
    nash_cell: tuple[int, ...] | None
    resolution: int


def grid_axes(bounds: BoundsBox, resolution: int) -> list[np.ndarray]:
    return [np.linspace(lo, hi, resolution) for lo, hi in zip(bounds.lower, bounds.upper)]


def grid_points(bounds: BoundsBox, resolution: int) -> np.ndarray:
    """All grid points, C-order (last variable fastest)."""
    if resolution < 2:
        raise ConfigError("resolution must be >= 2")
    if resolution ** bounds.dim > MAX_GRID_POINTS:
        raise GridSizeError(f"{resolution}^{bounds.dim} grid points exceeds the {MAX_GRID_POINTS} guard")
    mesh = np.meshgrid(*grid_axes(bounds, resolution), indexing="ij")
    return np.column_stack([m.ravel() for m in mesh])


def grid_best_responses(problem: ProblemSpec, resolution: int) -> tuple[np.ndarray, np.ndarray]:
    """Grid argmax point for each objective (first in C-order on ties)."""
    X = grid_points(problem.bounds, resolution)
    F = problem.evaluate_many(X)
    return X[np.argmax(F[:, 0])], X[np.argmax(F[:, 1])]


def brute_force_oracle(problem: ProblemSpec, d: DisagreementPoint, resolution: int) -> OracleResult:
    """Exhaustive grid evaluation: exact non-dominated set and Nash argmax."""
    X = grid_points(problem.bounds, resolution)
    F = problem.evaluate_many(X)
    mask = nondominated_mask(F)
    gain = F[:, :2] - d.as_array()
    feasible = np.all(gain >= 0, axis=1)
    product = np.where(feasible, gain[:, 0] * gain[:, 1], -np.inf)
    k = int(np.argmax(product))
    ties = np.flatnonzero(product == product[k])
    if ties.size > 1:
        # degenerate (e.g. all-zero) products: prefer an efficient cell
        k = int(ties[np.argmax(nondominated_mask(F[ties, :2]))])
    if not feasible[k]:
        return OracleResult(X[mask], F[mask], None, None, float("nan"), None, resolution)
    cell = tuple(int(i) for i in np.unravel_index(k, (resolution,) * problem.bounds.dim))
    return OracleResult(X[mask], F[mask], X[k], F[k], float(product[k]), cell, resolution)


# --------------------------------------------------------------------------
# report


@dataclass
class ComparisonReport:
    metrics: dict[str, ModelMetrics]
    retained: list[str]
    nsga2_front: ParetoFront
    rnsga2_population: ParetoFront
    nash: BargainResult
    scatter: ParetoFront | None = None
    oracle: OracleResult | None = None
    agreement: dict = field(default_factory=dict)
    hypervolume: list[float] = field(default_factory=list)
    convergence: dict[str, list[float]] = field(default_factory=dict)


def relative_spread(F: np.ndarray) -> np.ndarray:
    """Per-objective (max - min) / max |value|."""
    F = np.atleast_2d(F)
    scale = np.maximum(np.abs(F).max(axis=0), np.finfo(float).tiny)
    return (F.max(axis=0) - F.min(axis=0)) / scale


def agreement_stats(front: np.ndarray, rnsga: np.ndarray, nash_payoffs) -> dict:
    """Nash payoffs vs closest NSGA-II front point, plus spreads."""
    front = np.atleast_2d(front)
    nash = np.asarray(nash_payoffs, dtype=float)
    scale = np.maximum(np.abs(nash), np.finfo(float).tiny)
    rel = np.abs(front - nash) / scale
    k = int(np.argmin(rel.max(axis=1)))
    return {
        "closest_front_index": k,
        "gap_abs": np.abs(front[k] - nash).tolist(),
        "gap_rel": rel[k].tolist(),
        "max_gap_rel": float(rel[k].max()),
        "nsga2_spread_rel": relative_spread(front).tolist(),
        "rnsga2_spread_rel": relative_spread(rnsga).tolist(),
    }


def _fmt(v) -> str:
    return repr(float(v))


def write_rows(path: Path, header: Sequence[str], rows) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow(r)


def _point_rows(genomes: np.ndarray, objectives: np.ndarray):
    for x, y in zip(genomes, objectives):
        yield [*(_fmt(v) for v in x), *(_fmt(v) for v in y)]


POINT_HEADER = ["x1", "x2", "x3", "Y1", "Y2"]
COMPARISON_HEADER = ["method", "Y1", "Y2", "x1", "x2", "x3"]


def write_front_csv(path, genomes, objectives) -> None:
    write_rows(Path(path), POINT_HEADER, _point_rows(genomes, objectives))


def read_front_csv(path) -> ParetoFront:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = [[float(v) for v in r] for r in list(csv.reader(fh))[1:] if r]
    arr = np.array(rows).reshape(-1, 5)
    return ParetoFront(arr[:, :3], arr[:, 3:])


def write_comparison_csv(path, report: ComparisonReport) -> None:
    rows = []
    for method, pf in (("NSGA-II", report.nsga2_front), ("RNSGA-II", report.rnsga2_population)):
        for x, y in pf:
            rows.append([method, _fmt(y[0]), _fmt(y[1]), *(_fmt(v) for v in x)])
    n = report.nash
    rows.append(["Nash", _fmt(n.payoffs[0]), _fmt(n.payoffs[1]), *(_fmt(v) for v in n.x_best)])
    write_rows(Path(path), COMPARISON_HEADER, rows)


def render_markdown(report: ComparisonReport) -> str:
    n = report.nash
    a = report.agreement
    lines = [
        "# Furnace optimization report",
        "",
        f"Generated {datetime.now(timezone.utc).isoformat(timespec='seconds')}",
        "",
        "## Surrogates",
        "",
        "| target | train MSE | test MSE | train R2 | test R2 | kept |",
        "|---|---|---|---|---|---|",
    ]
    for name, m in report.metrics.items():
        kept = "yes" if name in report.retained else "no"
        lines.append(f"| {name} | {m.train_mse:.4g} | {m.test_mse:.4g} | {m.train_r2:.3f} | {m.test_r2:.3f} | {kept} |")
    lines += [
        "",
        f"Stack O2 operating band {STACK_O2_BAND[0]}-{STACK_O2_BAND[1]} % is context only; "
        "no constraint is enforced on it.",
        "",
        "## Bargaining",
        "",
        f"- payoff matrix: {n.payoff_matrix.tolist()}",
        f"- disagreement point: ({n.disagreement.y1_worst:.6g}, {n.disagreement.y2_worst:.6g})",
        f"- compromise x: ({', '.join(f'{v:.4f}' for v in n.x_best)})",
        f"- payoffs: Y1 = {n.payoffs[0]:.6g}, Y2 = {n.payoffs[1]:.6g}; Nash product {n.nash_product:.6g}",
        "",
        "## Comparison",
        "",
        f"- NSGA-II front size: {len(report.nsga2_front)}; R-NSGA-II population: {len(report.rnsga2_population)}",
    ]
    if a:
        lines += [
            f"- closest NSGA-II point to the Nash payoffs: relative gap {a['max_gap_rel']:.3g}",
            f"- NSGA-II relative spread: {', '.join(f'{v:.3g}' for v in a['nsga2_spread_rel'])}",
            f"- R-NSGA-II relative spread: {', '.join(f'{v:.3g}' for v in a['rnsga2_spread_rel'])}",
        ]
    if report.oracle is not None and report.oracle.nash_payoffs is not None:
        o = report.oracle
        lines += [
            f"- grid oracle ({o.resolution} per axis): Nash product {o.nash_product:.6g} at "
            f"({', '.join(f'{v:.4f}' for v in o.nash_genome)}); front size {len(o.front_objectives)}",
        ]
    return "\n".join(lines) + "\n"


def emit_report(report: ComparisonReport, out_dir) -> list[Path]:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        write_metrics_csv(report.metrics, out / "metrics.csv")
        write_front_csv(out / "front_nsga2.csv", report.nsga2_front.genomes, report.nsga2_front.objectives)
        write_front_csv(out / "front_rnsga2.csv", report.rnsga2_population.genomes,
                        report.rnsga2_population.objectives)
        report.nash.to_json(out / "nash.json")
        write_comparison_csv(out / "comparison.csv", report)
        sc = report.scatter if report.scatter is not None else ParetoFront(np.empty((0, 3)), np.empty((0, 2)))
        write_front_csv(out / "feasible_scatter.csv", sc.genomes, sc.objectives)
        (out / "report.md").write_text(render_markdown(report), encoding="utf-8")
        if report.hypervolume:
            write_rows(out / "hypervolume_nsga2.csv", ["generation", "hypervolume"],
                        ([g, _fmt(v)] for g, v in enumerate(report.hypervolume)))
        for role, values in report.convergence.items():
            write_rows(out / f"convergence_{role}.csv", ["generation", "best_value"],
                        ([g, _fmt(v)] for g, v in enumerate(values)))
    except OSError as exc:
        raise OSError(f"writing report to {out}: {exc}") from exc
    return [out / name for name in REPORT_FILES]


def load_report(out_dir) -> ComparisonReport:
    """Rebuild a report from the artifacts of an earlier run."""
    out = Path(out_dir)
    metrics = read_metrics_csv(out / "metrics.csv")
    front = read_front_csv(out / "front_nsga2.csv")
    rn = read_front_csv(out / "front_rnsga2.csv")
    nash = BargainResult.from_json(out / "nash.json")
    scatter = read_front_csv(out / "feasible_scatter.csv") if (out / "feasible_scatter.csv").exists() else None
    return ComparisonReport(metrics=metrics, retained=[t for t in metrics if t in OBJECTIVE_TARGETS],
                            nsga2_front=front, rnsga2_population=rn, nash=nash, scatter=scatter,
                            agreement=agreement_stats(front.objectives, rn.objectives, nash.payoffs))


# --------------------------------------------------------------------------
# stages


def _stage(name: str):
    class _Tag:
        def __enter__(self):
            log.info("stage %s", name)

        def __exit__(self, et, exc, tb):
            if isinstance(exc, FurnaceOptError) and exc.stage is None:
                exc.stage = name
            return False
    return _Tag()


def load_data(config: PipelineConfig) -> Dataset:
    if config.csv_path:
        return load_csv(config.csv_path)
    return synthesize(config.synthetic)


def fit_stage(config: PipelineConfig, data: Dataset | None = None
              ) -> tuple[SurrogateSet, dict[str, ModelMetrics], list[str]]:
    data = load_data(config) if data is None else data
    train, test = train_test_split(data, config.test_fraction, config.split_seed)
    models, metrics = fit_surrogates(train, test, CONTROLLED, config.cart)
    retained = select_models(metrics, config.test_r2_threshold)
    return models, metrics, retained


def build_problem(models: SurrogateSet, retained: Sequence[str], metrics: Mapping[str, ModelMetrics],
                  bounds: BoundsBox) -> ProblemSpec:
    r2 = {k: m.test_r2 for k, m in metrics.items()}
    if len(retained) < 2 or not all(t in retained for t in OBJECTIVE_TARGETS):
        raise ModelQualityError(
            "surrogates below the test R^2 threshold: "
            + ", ".join(f"{k}={v:.3f}" for k, v in r2.items() if k not in retained), test_r2=r2)
    objectives = []
    for t in OBJECTIVE_TARGETS:
        tree = models.models[t]
        objectives.append(Objective(tree.predict, t, batch=tree.predict_many))
    return ProblemSpec(objectives, bounds)


def run_pipeline(config: PipelineConfig, *, write: bool = True) -> ComparisonReport:
    with _stage("data"):
        data = load_data(config)
    with _stage("surrogate"):
        models, metrics, retained = fit_stage(config, data)
        problem = build_problem(models, retained, metrics, config.bounds)
    with _stage("nsga2"):
        hv_trace = MooTrace(auto_reference=True)
        pop, front = nsga2_run(problem, config.ga.with_seed(derive_seed(config.ga.seed, "nsga2")),
                               trace=hv_trace)
    with _stage("rnsga2"):
        rn_params = replace(config.rnsga, base=config.rnsga.base.with_seed(
            derive_seed(config.rnsga.base.seed, "rnsga2")))
        rn_pop = rnsga2_run(problem, rn_params)
        rn = ParetoFront(np.array([i.genome for i in rn_pop]), np.array([i.objectives for i in rn_pop]))
    with _stage("bargain"):
        traces: dict = {}
        nash = bargain(problem, config.ga, base_seed=config.ga.seed, traces=traces)
    with _stage("oracle"):
        oracle = (brute_force_oracle(problem, nash.disagreement, config.oracle_resolution)
                  if config.oracle_resolution else None)
    with _stage("scatter"):
        rng = make_rng(derive_seed(config.ga.seed, "scatter"))
        sx = config.bounds.sample(rng, config.scatter_samples)
        scatter = ParetoFront(sx, problem.evaluate_many(sx) if len(sx) else np.empty((0, 2)))
    report = ComparisonReport(
        metrics=metrics, retained=retained, nsga2_front=front, rnsga2_population=rn, nash=nash,
        scatter=scatter, oracle=oracle,
        agreement=agreement_stats(front.objectives, rn.objectives, nash.payoffs),
        hypervolume=hv_trace.hypervolume,
        convergence={role: t.best_values for role, t in traces.items()},
    )
    if write:
        with _stage("report"):
            emit_report(report, config.output_dir)
    return report

