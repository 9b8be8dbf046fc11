"""Two-player Nash bargaining over surrogate payoffs.

Each controlled variable is a player.  The players' individual optima
(best responses) are cross-evaluated into a 2x2 payoff matrix whose column
minima form the disagreement point; the compromise maximizes the product
of gains over that point.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import EvaluationError, InfeasibleError
from .evolve import GaParams, GaTrace, derive_seed, ga_maximize
from .moo import ProblemSpec

# added to the violation of infeasible points; feasible fitness is >= 0
INFEASIBLE_OFFSET = 1.0


@dataclass(frozen=True)
class PayoffMatrix:
    """``values[i][j]``: player j's payoff at player i's best-response point."""

    values: np.ndarray
    points: tuple[np.ndarray, np.ndarray] | None = None

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (2, 2):
            raise ValueError(f"payoff matrix must be 2x2, got {v.shape}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def tolist(self) -> list[list[float]]:
        return self.values.tolist()


@dataclass(frozen=True)
class DisagreementPoint:
    y1_worst: float
    y2_worst: float

    def as_array(self) -> np.ndarray:
        return np.array([self.y1_worst, self.y2_worst])


@dataclass
class BargainResult:
    x_best: np.ndarray
    payoffs: tuple[float, float]
    nash_product: float
    disagreement: DisagreementPoint
    payoff_matrix: PayoffMatrix
    best_response_points: tuple[np.ndarray, np.ndarray]
    best_response_values: tuple[float, float] = (float("nan"), float("nan"))
    seeds: dict[str, int] = field(default_factory=dict)
    generations: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "x_best": [float(v) for v in self.x_best],
            "payoffs": [float(v) for v in self.payoffs],
            "nash_product": float(self.nash_product),
            "disagreement": [self.disagreement.y1_worst, self.disagreement.y2_worst],
            "payoff_matrix": self.payoff_matrix.tolist(),
            "best_response_points": [[float(v) for v in p] for p in self.best_response_points],
            "best_response_values": [float(v) for v in self.best_response_values],
            "seeds": {k: int(v) for k, v in self.seeds.items()},
            "generations": {k: int(v) for k, v in self.generations.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BargainResult":
        pts = tuple(np.array(p, dtype=float) for p in d["best_response_points"])
        return cls(
            x_best=np.array(d["x_best"], dtype=float),
            payoffs=tuple(d["payoffs"]),
            nash_product=d["nash_product"],
            disagreement=DisagreementPoint(*d["disagreement"]),
            payoff_matrix=PayoffMatrix(np.array(d["payoff_matrix"]), pts),
            best_response_points=pts,
            best_response_values=tuple(d.get("best_response_values", (float("nan"),) * 2)),
            seeds=dict(d.get("seeds", {})),
            generations=dict(d.get("generations", {})),
        )

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def from_json(cls, path) -> "BargainResult":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def best_response(problem: ProblemSpec, player: int, params: GaParams,
                  trace: GaTrace | None = None) -> tuple[np.ndarray, float]:
    """Maximize one player's payoff alone over the bounds."""
    return ga_maximize(problem.objectives[player], problem.bounds, params, trace=trace)


def _eval(f: Callable, x) -> float:
    v = float(f(np.asarray(x, dtype=float)))
    if not np.isfinite(v):
        raise EvaluationError(f"non-finite payoff {v} at {np.asarray(x).tolist()}", genome=np.asarray(x))
    return v


def payoff_matrix(objectives: Sequence[Callable], x1_best, x2_best) -> PayoffMatrix:
    f1, f2 = objectives
    pts = (np.asarray(x1_best, dtype=float), np.asarray(x2_best, dtype=float))
    return PayoffMatrix([[_eval(f1, pts[0]), _eval(f2, pts[0])],
                         [_eval(f1, pts[1]), _eval(f2, pts[1])]], pts)


def disagreement(P: PayoffMatrix) -> DisagreementPoint:
    col_min = P.values.min(axis=0)
    return DisagreementPoint(float(col_min[0]), float(col_min[1]))


def nash_product(payoffs, d: DisagreementPoint) -> float:
    return (float(payoffs[0]) - d.y1_worst) * (float(payoffs[1]) - d.y2_worst)


def nash_fitness(problem: ProblemSpec, d: DisagreementPoint) -> Callable[[np.ndarray], float]:
    """Nash product when both payoffs reach ``d``; otherwise a negative
    penalty below every feasible value."""
    f1, f2 = problem.objectives[:2]

    def fitness(x: np.ndarray) -> float:
        y1, y2 = f1(x), f2(x)
        violation = max(0.0, d.y1_worst - y1) + max(0.0, d.y2_worst - y2)
        if violation > 0:
            return -violation - INFEASIBLE_OFFSET
        return (y1 - d.y1_worst) * (y2 - d.y2_worst)

    return fitness


def nash_solve(problem: ProblemSpec, P: PayoffMatrix, d: DisagreementPoint, params: GaParams,
               trace: GaTrace | None = None) -> BargainResult:
    """Constrained maximization of the Nash product over the decision box.

    The best-response points in ``P`` (feasible by construction) are
    injected into the initial population.
    """
    fitness = nash_fitness(problem, d)
    initial = [p for p in (P.points or ()) if p is not None]
    x, value = ga_maximize(fitness, problem.bounds, params, initial=initial or None, trace=trace)
    if value < 0:
        raise InfeasibleError(f"no point reached the disagreement payoffs; least violation "
                              f"{-value - INFEASIBLE_OFFSET:g}", genome=x, violation=-value - INFEASIBLE_OFFSET)
    payoffs = (float(problem.objectives[0](x)), float(problem.objectives[1](x)))
    points = P.points if P.points is not None else (np.full(problem.bounds.dim, np.nan),) * 2
    return BargainResult(
        x_best=x, payoffs=payoffs, nash_product=nash_product(payoffs, d), disagreement=d,
        payoff_matrix=P, best_response_points=points,
        best_response_values=(float(P.values[0, 0]), float(P.values[1, 1])),
        seeds={"nash": params.seed}, generations={"nash": params.generations},
    )


def bargain(problem: ProblemSpec, params: GaParams, base_seed: int | None = None,
            traces: dict[str, GaTrace] | None = None) -> BargainResult:
    """Best responses, payoff matrix, disagreement and Nash solution.

    Each GA runs on its own seed derived from ``base_seed`` (default
    ``params.seed``) and a role tag.  If ``traces`` is a dict it receives a
    :class:`GaTrace` per role.
    """
    if problem.n_obj != 2:
        raise ValueError("bargaining is defined for exactly two players")
    base = params.seed if base_seed is None else base_seed
    seeds = {"best_response_1": derive_seed(base, "best_response_1"),
             "best_response_2": derive_seed(base, "best_response_2"),
             "nash": derive_seed(base, "nash")}
    tr = {role: GaTrace() for role in seeds}
    if traces is not None:
        traces.update(tr)
    x1, _ = best_response(problem, 0, params.with_seed(seeds["best_response_1"]), tr["best_response_1"])
    x2, _ = best_response(problem, 1, params.with_seed(seeds["best_response_2"]), tr["best_response_2"])
    P = payoff_matrix(problem.objectives, x1, x2)
    d = disagreement(P)
    result = nash_solve(problem, P, d, params.with_seed(seeds["nash"]), tr["nash"])
    result.seeds = {"base": int(base), **seeds}
    result.generations = {k: params.generations for k in ("best_response_1", "best_response_2", "nash")}
    return result

