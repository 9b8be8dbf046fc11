"""Pareto machinery, NSGA-II and reference-point R-NSGA-II.

Every objective is maximized.  Minimization objectives must be negated
when the :class:`ProblemSpec` is built.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, DegenerateRangeError, DimensionError, EvaluationError, StateError
from .evolve import BoundsBox, GaParams, Individual, make_offspring, make_rng


class Objective:
    """Named genome -> scalar function with an optional batch form."""

    def __init__(self, func: Callable[[np.ndarray], float], name: str = "",
                 batch: Callable[[np.ndarray], np.ndarray] | None = None):
        self.func = func
        self.name = name or getattr(func, "__name__", "objective")
        self.batch = batch

    def __call__(self, x) -> float:
        return float(self.func(np.asarray(x, dtype=float)))

    def many(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.batch is not None:
            return np.asarray(self.batch(X), dtype=float)
        return np.array([self.func(x) for x in X], dtype=float)

    def __repr__(self) -> str:
        return f"Objective({self.name!r})"


def as_objective(f, name: str = "") -> Objective:
    return f if isinstance(f, Objective) else Objective(f, name)


@dataclass
class ProblemSpec:
    objectives: list
    bounds: BoundsBox

    def __post_init__(self):
        self.objectives = [as_objective(f, f"Y{i + 1}") for i, f in enumerate(self.objectives)]
        if not self.objectives:
            raise ConfigError("problem needs at least one objective")

    @property
    def n_obj(self) -> int:
        return len(self.objectives)

    @property
    def names(self) -> list[str]:
        return [o.name for o in self.objectives]

    def evaluate(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = np.array([o(x) for o in self.objectives])
        if not np.all(np.isfinite(y)):
            raise EvaluationError(f"non-finite objective {y.tolist()} at {x.tolist()}", genome=x.copy())
        return y

    def evaluate_many(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        F = np.column_stack([o.many(X) for o in self.objectives])
        bad = np.flatnonzero(~np.all(np.isfinite(F), axis=1))
        if bad.size:
            raise EvaluationError(f"non-finite objective at {X[bad[0]].tolist()}", genome=X[bad[0]].copy())
        return F


@dataclass
class ParetoFront:
    genomes: np.ndarray
    objectives: np.ndarray

    def __len__(self) -> int:
        return len(self.objectives)

    def __iter__(self):
        return iter(zip(self.genomes, self.objectives))


# --------------------------------------------------------------------------
# dominance / sorting / crowding


def dominates(a, b) -> bool:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise DimensionError(f"objective vectors differ in length: {a.shape} vs {b.shape}")
    return bool(np.all(a >= b) and np.any(a > b))


def dominance_matrix(F: np.ndarray) -> np.ndarray:
    """``D[i, j]`` is True when row ``i`` dominates row ``j``."""
    ge = np.all(F[:, None, :] >= F[None, :, :], axis=2)
    gt = np.any(F[:, None, :] > F[None, :, :], axis=2)
    return ge & gt


def _objective_matrix(pop) -> np.ndarray:
    if isinstance(pop, np.ndarray):
        return np.atleast_2d(pop.astype(float))
    rows = []
    for k, ind in enumerate(pop):
        if isinstance(ind, Individual):
            if ind.objectives is None:
                raise StateError(f"individual {k} has not been evaluated")
            rows.append(ind.objectives)
        else:
            rows.append(ind)
    return np.atleast_2d(np.asarray(rows, dtype=float)) if rows else np.empty((0, 0))


def fast_nondominated_sort(pop) -> list[list[int]]:
    """Rank-ordered fronts of indices; front members keep input order."""
    F = _objective_matrix(pop)
    n = F.shape[0]
    if n == 0:
        return []
    D = dominance_matrix(F)
    counts = D.sum(axis=0)
    fronts = []
    current = np.flatnonzero(counts == 0)
    while current.size:
        fronts.append(current.tolist())
        counts = counts - D[current].sum(axis=0)
        counts[current] = -1
        current = np.flatnonzero(counts == 0)
    return fronts


def nondominated_mask(F) -> np.ndarray:
    """Exact non-dominated mask; O(n log n) for two objectives."""
    F = np.atleast_2d(np.asarray(F, dtype=float))
    n, m = F.shape
    if m != 2:
        mask = np.ones(n, dtype=bool)
        for start in range(0, n, 512):
            block = F[start:start + 512]
            ge = np.all(F[:, None, :] >= block[None, :, :], axis=2)
            gt = np.any(F[:, None, :] > block[None, :, :], axis=2)
            mask[start:start + 512] = ~np.any(ge & gt, axis=0)
        return mask
    order = np.lexsort((-F[:, 1], -F[:, 0]))
    mask = np.zeros(n, dtype=bool)
    best_prev = -math.inf  # max f2 over strictly larger f1
    k = 0
    f1s, f2s = F[order, 0].tolist(), F[order, 1].tolist()
    while k < n:
        j = k
        while j < n and f1s[j] == f1s[k]:
            j += 1
        group_max = f2s[k]
        for t in range(k, j):
            mask[order[t]] = f2s[t] > best_prev and f2s[t] == group_max
        best_prev = max(best_prev, group_max)
        k = j
    return mask


def crowding_distance(front) -> np.ndarray:
    F = _objective_matrix(front)
    n = F.shape[0]
    if n <= 2:
        return np.full(n, math.inf)
    dist = np.zeros(n)
    for j in range(F.shape[1]):
        order = np.argsort(F[:, j], kind="stable")
        vals = F[order, j]
        dist[order[0]] = dist[order[-1]] = math.inf
        span = vals[-1] - vals[0]
        if span <= 0:
            continue
        dist[order[1:-1]] += (vals[2:] - vals[:-2]) / span
    return dist


def hypervolume_2d(F, ref) -> float:
    """Area dominated by ``F`` (maximized) and dominating ``ref``."""
    F = np.atleast_2d(np.asarray(F, dtype=float))
    r1, r2 = float(ref[0]), float(ref[1])
    F = F[(F[:, 0] > r1) & (F[:, 1] > r2)]
    if F.size == 0:
        return 0.0
    F = F[nondominated_mask(F)]
    F = F[np.argsort(-F[:, 0], kind="stable")]
    area, prev2 = 0.0, r2
    for f1, f2 in F:
        if f2 > prev2:
            area += (f1 - r1) * (f2 - prev2)
            prev2 = f2
    return area


# --------------------------------------------------------------------------
# NSGA-II


def _rank_key_comparator(key: dict[int, tuple]) -> Callable:
    """Tournament comparator over precomputed (rank, -secondary) keys: lower wins."""
    def cmp(a: Individual, b: Individual) -> float:
        ka, kb = key[id(a)], key[id(b)]
        return int(ka < kb) - int(ka > kb)
    return cmp


def _evaluate_children(problem: ProblemSpec, children: np.ndarray) -> list[Individual]:
    return [Individual(c, problem.evaluate(c)) for c in children]


def _initial_population(problem: ProblemSpec, params: GaParams, rng) -> list[Individual]:
    genomes = problem.bounds.sample(rng, params.population_size)
    return [Individual(g, problem.evaluate(g)) for g in genomes]


def nsga2_survival(pool: Sequence[Individual], size: int) -> tuple[list[int], dict[int, tuple]]:
    """Pick ``size`` survivors by rank then crowding.

    Returns survivor indices into ``pool`` and the tournament key of each
    survivor, keyed by survivor position.
    """
    fronts = fast_nondominated_sort(pool)
    chosen: list[int] = []
    keys: dict[int, tuple] = {}
    for rank, front in enumerate(fronts):
        cd = crowding_distance([pool[i] for i in front])
        # larger crowding first; stable on input index
        order = sorted(range(len(front)), key=lambda k: (-cd[k], front[k]))
        for k in order:
            if len(chosen) == size:
                break
            keys[len(chosen)] = (rank, -float(cd[k]))
            chosen.append(front[k])
        if len(chosen) == size:
            break
    return chosen, keys


def _front_of(pop: Sequence[Individual]) -> ParetoFront:
    front = fast_nondominated_sort(pop)[0]
    return ParetoFront(np.array([pop[i].genome for i in front]),
                       np.array([pop[i].objectives for i in front]))


@dataclass
class MooTrace:
    """Optional per-generation log for the multi-objective runners."""

    hv_reference: Sequence[float] | None = None
    auto_reference: bool = False  # fix the reference at the initial population's worst corner
    hypervolume: list[float] = field(default_factory=list)
    archive_hypervolume: list[float] = field(default_factory=list)
    fronts: list[np.ndarray] = field(default_factory=list)
    keep_fronts: bool = False
    archive: np.ndarray | None = None

    def record(self, pop: Sequence[Individual]) -> None:
        """Log one generation.

        ``hypervolume`` follows the population's first front, which may dip
        when crowding truncation drops a boundary-adjacent point;
        ``archive_hypervolume`` follows every non-dominated point seen so
        far and never decreases.
        """
        F = np.array([ind.objectives for ind in pop])
        front = F[nondominated_mask(F)]
        pool = front if self.archive is None else np.vstack([self.archive, front])
        self.archive = np.unique(pool[nondominated_mask(pool)], axis=0)
        if self.hv_reference is None and self.auto_reference:
            self.hv_reference = tuple(F.min(axis=0))
        if self.hv_reference is not None:
            self.hypervolume.append(hypervolume_2d(front, self.hv_reference))
            self.archive_hypervolume.append(hypervolume_2d(self.archive, self.hv_reference))
        if self.keep_fronts:
            self.fronts.append(front)


def nsga2_run(problem: ProblemSpec, params: GaParams, *, trace: MooTrace | None = None
              ) -> tuple[list[Individual], ParetoFront]:
    if problem.n_obj < 2:
        raise ConfigError("NSGA-II needs at least two objectives")
    rng = make_rng(params.seed)
    pop = _initial_population(problem, params, rng)
    idx, keys = nsga2_survival(pop, len(pop))
    pop = [pop[i] for i in idx]
    if trace is not None:
        trace.record(pop)
    for _ in range(params.generations):
        cmp = _rank_key_comparator({id(ind): keys[k] for k, ind in enumerate(pop)})
        children = make_offspring(pop, cmp, params.offspring_size, params, problem.bounds, rng)
        pool = pop + _evaluate_children(problem, children)
        idx, keys = nsga2_survival(pool, params.population_size)
        pop = [pool[i] for i in idx]
        if trace is not None:
            trace.record(pop)
    return pop, _front_of(pop)


# --------------------------------------------------------------------------
# R-NSGA-II


@dataclass(frozen=True)
class RnsgaParams:
    base: GaParams = field(default_factory=GaParams)
    reference_points: tuple[tuple[float, ...], ...] = ((40.0, 90.0), (10.0, 278.0))
    epsilon: float = 0.01
    weights: tuple[float, ...] = (0.5, 0.5)

    def __post_init__(self):
        object.__setattr__(self, "reference_points",
                           tuple(tuple(float(v) for v in p) for p in self.reference_points))
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        if not self.reference_points:
            raise ConfigError("at least one reference point is required")
        if not self.epsilon > 0:
            raise ConfigError("epsilon must be > 0")
        if any(w < 0 for w in self.weights) or not any(w > 0 for w in self.weights):
            raise ConfigError("weights must be nonnegative with at least one positive")
        dims = {len(p) for p in self.reference_points}
        if dims != {len(self.weights)}:
            raise ConfigError("reference points and weights must share the objective count")

    def to_dict(self) -> dict:
        return {"reference_points": [list(p) for p in self.reference_points],
                "epsilon": self.epsilon, "weights": list(self.weights)}


def normalized_ref_distance(obj, ref, weights, ideal, nadir) -> float:
    obj, ref, w, ideal, nadir = (np.asarray(v, dtype=float) for v in (obj, ref, weights, ideal, nadir))
    span = nadir - ideal
    used = w > 0
    if np.any(span[used] == 0):
        raise DegenerateRangeError("ideal and nadir coincide in a weighted objective")
    z = np.zeros_like(obj)
    z[used] = (obj[used] - ref[used]) / span[used]
    return float(math.sqrt(np.sum(w * z * z)))


def _ideal_nadir(F: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Maximize-all ideal (column max) and nadir (column min).

    Zero-range columns get a unit span so distances stay defined once the
    population has collapsed onto a single objective value.
    """
    ideal, nadir = F.max(axis=0), F.min(axis=0)
    flat = ideal == nadir
    nadir = np.where(flat, ideal - 1.0, nadir)
    return ideal, nadir


def _weighted_scaled(F: np.ndarray, weights, ideal, nadir) -> np.ndarray:
    """Rows scaled so Euclidean distance equals the weighted normalized one."""
    return F * (np.sqrt(np.asarray(weights, dtype=float)) / (nadir - ideal))


def preference_order(F: np.ndarray, params: RnsgaParams, ideal: np.ndarray, nadir: np.ndarray
                     ) -> tuple[list[int], np.ndarray]:
    """Selection order of one front's members, with epsilon-clearing.

    Returns (order, preference rank).  Members within ``epsilon`` of an
    already-selected member are demoted behind all undemoted members;
    demoted members keep their preference order among themselves.
    """
    n = F.shape[0]
    Z = _weighted_scaled(F, params.weights, ideal, nadir)
    R = _weighted_scaled(np.asarray(params.reference_points), params.weights, ideal, nadir)
    to_ref = np.sqrt(((Z[:, None, :] - R[None, :, :]) ** 2).sum(axis=2))  # (n, n_ref)
    ranks = np.empty_like(to_ref, dtype=int)
    for r in range(R.shape[0]):
        ranks[np.argsort(to_ref[:, r], kind="stable"), r] = np.arange(n)
    pref = ranks.min(axis=1)
    pairwise = np.sqrt(((Z[:, None, :] - Z[None, :, :]) ** 2).sum(axis=2))
    cleared = np.zeros(n, dtype=bool)
    selected: list[int] = []
    demoted: list[int] = []
    for k in sorted(range(n), key=lambda k: (pref[k], k)):
        if cleared[k]:
            demoted.append(k)
            continue
        selected.append(k)
        cleared |= pairwise[k] <= params.epsilon
    return selected + demoted, pref


def rnsga2_survival(pool: Sequence[Individual], size: int, params: RnsgaParams
                    ) -> tuple[list[int], dict[int, tuple]]:
    F = np.array([ind.objectives for ind in pool])
    ideal, nadir = _ideal_nadir(F)
    chosen: list[int] = []
    keys: dict[int, tuple] = {}
    for rank, front in enumerate(fast_nondominated_sort(F)):
        order, _ = preference_order(F[front], params, ideal, nadir)
        for pos, k in enumerate(order):
            if len(chosen) == size:
                break
            keys[len(chosen)] = (rank, pos)
            chosen.append(front[k])
        if len(chosen) == size:
            break
    return chosen, keys


def rnsga2_run(problem: ProblemSpec, params: RnsgaParams, *, trace: MooTrace | None = None
               ) -> list[Individual]:
    if problem.n_obj < 2:
        raise ConfigError("R-NSGA-II needs at least two objectives")
    if len(params.weights) != problem.n_obj:
        raise ConfigError("weights/reference points do not match the objective count")
    base = params.base
    rng = make_rng(base.seed)
    pop = _initial_population(problem, base, rng)
    idx, keys = rnsga2_survival(pop, len(pop), params)
    pop = [pop[i] for i in idx]
    if trace is not None:
        trace.record(pop)
    for _ in range(base.generations):
        cmp = _rank_key_comparator({id(ind): keys[k] for k, ind in enumerate(pop)})
        children = make_offspring(pop, cmp, base.offspring_size, base, problem.bounds, rng)
        pool = pop + _evaluate_children(problem, children)
        idx, keys = rnsga2_survival(pool, base.population_size, params)
        pop = [pool[i] for i in idx]
        if trace is not None:
            trace.record(pop)
    return pop
