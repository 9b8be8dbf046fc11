"""Command line entry point: ``furnace-opt <command> [--config F] [--seed N] [--out D]``.

Exit codes: 0 ok, 2 config/schema error, 3 model-quality error,
4 infeasible bargaining problem, 5 I/O error.
"""

from __future__ import annotations

import argparse
import contextlib
import io
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import pipeline as pl
from .bargain import BargainResult, bargain, disagreement, payoff_matrix
from .dataset import CONTROLLED, MANIPULATED, correlation_matrix, synthesize
from .errors import ConfigError, FurnaceOptError
from .evolve import derive_seed
from .moo import MooTrace, nsga2_run, rnsga2_run
from .surrogate import write_metrics_csv

log = logging.getLogger("furnace_opt")


def _config(args) -> pl.PipelineConfig:
    cfg = pl.PipelineConfig.from_json(args.config) if args.config else pl.PipelineConfig()
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    if args.out is not None:
        cfg.output_dir = args.out
    return cfg


def _out(cfg: pl.PipelineConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _problem(cfg):
    models, metrics, retained = pl.fit_stage(cfg)
    return pl.build_problem(models, retained, metrics, cfg.bounds), models, metrics


def cmd_synth(cfg, args) -> None:
    if cfg.synthetic is None:
        raise ConfigError("config has no synthetic block")
    out = _out(cfg)
    synthesize(cfg.synthetic).to_csv(out / "data.csv")
    (out / "synthetic_spec.json").write_text(json.dumps(cfg.synthetic.to_dict(), indent=2) + "\n")
    print(f"wrote {out / 'data.csv'} ({cfg.synthetic.n_samples} rows)")


def cmd_fit(cfg, args) -> None:
    out = _out(cfg)
    data = pl.load_data(cfg)
    models, metrics, retained = pl.fit_stage(cfg, data)
    write_metrics_csv(metrics, out / "metrics.csv")
    for name, tree in models.models.items():
        tree.to_json(out / f"tree_{name}.json")
    cols = list(MANIPULATED + CONTROLLED)
    corr = correlation_matrix(data, cols)
    pl.write_rows(out / "correlation.csv", ["column", *cols],
                   ([c, *(repr(float(v)) for v in row)] for c, row in zip(cols, corr)))
    for name, m in metrics.items():
        print(f"{name:14s} test R2 {m.test_r2:7.3f}  {'kept' if name in retained else 'dropped'}")


def cmd_optimize(cfg, args) -> None:
    out = _out(cfg)
    problem, _, _ = _problem(cfg)
    trace = MooTrace(auto_reference=True)
    _, front = nsga2_run(problem, cfg.ga.with_seed(derive_seed(cfg.ga.seed, "nsga2")), trace=trace)
    rn_params = replace(cfg.rnsga, base=cfg.rnsga.base.with_seed(derive_seed(cfg.rnsga.base.seed, "rnsga2")))
    rn = rnsga2_run(problem, rn_params)
    pl.write_front_csv(out / "front_nsga2.csv", front.genomes, front.objectives)
    pl.write_front_csv(out / "front_rnsga2.csv", np.array([i.genome for i in rn]), np.array([i.objectives for i in rn]))
    pl.write_rows(out / "hypervolume_nsga2.csv", ["generation", "hypervolume"],
                   ([g, repr(v)] for g, v in enumerate(trace.hypervolume)))
    print(f"NSGA-II front: {len(front)} points; R-NSGA-II population: {len(rn)}")


def cmd_bargain(cfg, args) -> None:
    out = _out(cfg)
    problem, _, _ = _problem(cfg)
    result = bargain(problem, cfg.ga, base_seed=cfg.ga.seed)
    result.to_json(out / "nash.json")
    print(f"x_best = {np.round(result.x_best, 4).tolist()}  payoffs = {np.round(result.payoffs, 4).tolist()}")


def cmd_oracle(cfg, args) -> None:
    out = _out(cfg)
    problem, _, _ = _problem(cfg)
    if (out / "nash.json").exists():
        d = BargainResult.from_json(out / "nash.json").disagreement
    else:
        x1, x2 = pl.grid_best_responses(problem, cfg.oracle_resolution or 50)
        d = disagreement(payoff_matrix(problem.objectives, x1, x2))
    res = pl.brute_force_oracle(problem, d, cfg.oracle_resolution or 50)
    pl.write_front_csv(out / "oracle_front.csv", res.front_genomes, res.front_objectives)
    doc = {"resolution": res.resolution, "disagreement": [d.y1_worst, d.y2_worst],
           "nash_genome": None if res.nash_genome is None else res.nash_genome.tolist(),
           "nash_payoffs": None if res.nash_payoffs is None else res.nash_payoffs.tolist(),
           "nash_product": res.nash_product, "nash_cell": res.nash_cell}
    (out / "oracle_nash.json").write_text(json.dumps(doc, indent=2) + "\n")
    print(f"oracle front: {len(res.front_objectives)} grid points; Nash product {res.nash_product:.6g}")


def cmd_run(cfg, args) -> None:
    report = pl.run_pipeline(cfg)
    n = report.nash
    print(f"retained: {', '.join(report.retained)}")
    print(f"Nash x = {np.round(n.x_best, 4).tolist()}  payoffs = {np.round(n.payoffs, 4).tolist()}")
    print(f"closest NSGA-II gap (relative): {report.agreement['max_gap_rel']:.3g}")
    print(f"artifacts in {cfg.output_dir}")


def cmd_compare(cfg, args) -> None:
    out = Path(cfg.output_dir)
    report = pl.load_report(out)
    pl.write_comparison_csv(out / "comparison.csv", report)
    (out / "report.md").write_text(pl.render_markdown(report), encoding="utf-8")
    print(f"rewrote {out / 'comparison.csv'} and {out / 'report.md'}")


COMMANDS = {
    "synth": (cmd_synth, "write a synthetic furnace CSV"),
    "fit": (cmd_fit, "train the CART surrogates and report train/test error metrics"),
    "optimize": (cmd_optimize, "run NSGA-II and R-NSGA-II on the surrogates"),
    "bargain": (cmd_bargain, "solve the two-player Nash bargaining problem"),
    "oracle": (cmd_oracle, "brute-force grid reference front and Nash point"),
    "run": (cmd_run, "full pipeline with report"),
    "compare": (cmd_compare, "re-emit comparison.csv and report.md from existing artifacts"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="pipeline JSON config")
    common.add_argument("--seed", type=int, help="override every seed in the config")
    common.add_argument("--out", help="output directory")
    common.add_argument("--quiet", action="store_true", help="suppress progress output")
    parser = argparse.ArgumentParser(prog="furnace-opt", description="Furnace setpoint optimization with tree surrogates, NSGA-II, R-NSGA-II and Nash bargaining.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=help_text)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    sink = io.StringIO() if args.quiet else sys.stdout
    try:
        with contextlib.redirect_stdout(sink):
            cfg = _config(args)
            COMMANDS[args.command][0](cfg, args)
    except FurnaceOptError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 5
    return 0


if __name__ == "__main__":
    sys.exit(main())
