"""Real-coded evolutionary primitives.

All randomness flows through an explicit ``numpy.random.Generator`` backed
by PCG64 (see :func:`make_rng`).  Operators are written over batches of
rows; the single-genome functions are thin wrappers around the batch code,
so there is one implementation of each operator.

RNG draw order (fixed, relied on by the determinism tests):

* SBX over ``k`` pairs: ``k`` uniforms for the crossover decisions, then a
  ``(k, n_var)`` block of uniforms for the spread factors (drawn for every
  pair, crossing or not).
* Polynomial mutation over ``k`` genomes: a ``(k, n_var)`` block for the
  mutate/keep decisions, then a ``(k, n_var)`` block for the perturbations.
* Binary tournament: two integers for the contestants, then one uniform
  only when the comparator reports an exact tie.
"""

from __future__ import annotations

import zlib
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .errors import BoundsError, ConfigError, EvaluationError

DEFAULT_LOWER = (44.4, 58.6, 176.3)
DEFAULT_UPPER = (103.0, 107.0, 223.0)
VARIABLE_NAMES = ("fired_duty", "throughput", "cit")


def make_rng(seed: int) -> np.random.Generator:
    """Portable, seedable 64-bit stream (PCG64)."""
    return np.random.Generator(np.random.PCG64(int(seed)))


def derive_seed(base: int, tag: str) -> int:
    """Independent child seed for a named role, e.g. ``"nash"``."""
    ss = np.random.SeedSequence([int(base) & 0xFFFFFFFFFFFFFFFF, zlib.crc32(tag.encode())])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class BoundsBox:
    lower: tuple[float, ...]
    upper: tuple[float, ...]
    names: tuple[str, ...] = ()

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lower)
        hi = tuple(float(v) for v in self.upper)
        if len(lo) != len(hi) or not lo:
            raise BoundsError(f"lower/upper length mismatch: {len(lo)} vs {len(hi)}")
        for i, (a, b) in enumerate(zip(lo, hi)):
            if not (np.isfinite(a) and np.isfinite(b)) or a >= b:
                raise BoundsError(f"variable {i}: lower {a} must be < upper {b}")
        names = tuple(self.names) or tuple(f"x{i + 1}" for i in range(len(lo)))
        if len(names) != len(lo):
            raise BoundsError("names length does not match bounds")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "names", names)

    @classmethod
    def default(cls) -> "BoundsBox":
        return cls(DEFAULT_LOWER, DEFAULT_UPPER, VARIABLE_NAMES)

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def lo(self) -> np.ndarray:
        return np.asarray(self.lower)

    @property
    def hi(self) -> np.ndarray:
        return np.asarray(self.upper)

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all((x >= self.lo) & (x <= self.hi)))

    def clip(self, x) -> np.ndarray:
        return np.clip(np.asarray(x, dtype=float), self.lo, self.hi)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        u = rng.random((n, self.dim))
        return self.clip(self.lo + u * (self.hi - self.lo))

    def to_dict(self) -> dict:
        return {"lower": list(self.lower), "upper": list(self.upper), "names": list(self.names)}

    @classmethod
    def from_dict(cls, d: dict) -> "BoundsBox":
        try:
            return cls(tuple(d["lower"]), tuple(d["upper"]), tuple(d.get("names", ())))
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"bad bounds block: {exc}") from exc


@dataclass
class Individual:
    genome: np.ndarray
    objectives: np.ndarray | None = None

    @property
    def evaluated(self) -> bool:
        return self.objectives is not None


Population = list  # list[Individual]


@dataclass(frozen=True)
class GaParams:
    population_size: int = 40
    offspring_size: int = 10
    crossover_probability: float = 0.9
    eta_crossover: float = 15.0
    mutation_probability: float = 0.1
    eta_mutation: float = 20.0
    generations: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.population_size < 2:
            raise ConfigError("population_size must be >= 2")
        if self.offspring_size < 1:
            raise ConfigError("offspring_size must be >= 1")
        for name in ("crossover_probability", "mutation_probability"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {p}")
        for name in ("eta_crossover", "eta_mutation"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0")
        if self.generations < 0:
            raise ConfigError("generations must be >= 0")

    def with_seed(self, seed: int) -> "GaParams":
        return replace(self, seed=int(seed))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "GaParams":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown GA parameter(s): {sorted(unknown)}")
        return cls(**d)


# --------------------------------------------------------------------------
# operators


def sbx_spread_factor(u, eta: float):
    """Spread factor of unbounded SBX for uniform draw(s) ``u``."""
    u = np.asarray(u, dtype=float)
    exp = 1.0 / (eta + 1.0)
    low = np.power(2.0 * u, exp)
    with np.errstate(divide="ignore"):
        high = np.power(1.0 / (2.0 * (1.0 - u)), exp)
    return np.where(u <= 0.5, low, high)


def _check_within(x: np.ndarray, bounds: BoundsBox, what: str) -> None:
    if x.shape[-1] != bounds.dim:
        raise BoundsError(f"{what}: expected {bounds.dim} variables, got {x.shape[-1]}")
    if not np.all((x >= bounds.lo) & (x <= bounds.hi)):
        raise BoundsError(f"{what} outside bounds")


def sbx_pairs(p1, p2, eta: float, crossover_probability: float, bounds: BoundsBox,
              rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """SBX over row-aligned parent matrices; children clipped to bounds."""
    p1 = np.atleast_2d(np.asarray(p1, dtype=float))
    p2 = np.atleast_2d(np.asarray(p2, dtype=float))
    _check_within(p1, bounds, "parent 1")
    _check_within(p2, bounds, "parent 2")
    cross = rng.random(p1.shape[0]) < crossover_probability
    beta = sbx_spread_factor(rng.random(p1.shape), eta)
    mid = 0.5 * (p1 + p2)
    with np.errstate(over="ignore", invalid="ignore"):
        half = 0.5 * beta * (p2 - p1)
        a, b = mid - half, mid + half
    # inf * 0 guard for extreme spread factors
    a = np.where(np.isnan(a), mid, a)
    b = np.where(np.isnan(b), mid, b)
    c1 = np.where(cross[:, None], np.clip(a, bounds.lo, bounds.hi), p1)
    c2 = np.where(cross[:, None], np.clip(b, bounds.lo, bounds.hi), p2)
    return c1, c2


def sbx_crossover(p1, p2, eta: float, crossover_probability: float, bounds: BoundsBox,
                  rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    c1, c2 = sbx_pairs(p1, p2, eta, crossover_probability, bounds, rng)
    return c1[0], c2[0]


def mutate_rows(x, eta: float, mutation_probability: float, bounds: BoundsBox,
                rng: np.random.Generator) -> np.ndarray:
    """Bounded polynomial mutation applied to every row of ``x``."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    _check_within(x, bounds, "genome")
    mask = rng.random(x.shape) < mutation_probability
    u = rng.random(x.shape)
    lo, hi = bounds.lo, bounds.hi
    span = hi - lo
    exp = 1.0 / (eta + 1.0)
    d1 = (x - lo) / span
    d2 = (hi - x) / span
    left = np.power(2.0 * u + (1.0 - 2.0 * u) * np.power(1.0 - d1, eta + 1.0), exp) - 1.0
    right = 1.0 - np.power(2.0 * (1.0 - u) + 2.0 * (u - 0.5) * np.power(1.0 - d2, eta + 1.0), exp)
    delta = np.where(u < 0.5, left, right)
    return np.where(mask, np.clip(x + delta * span, lo, hi), x)


def polynomial_mutation(x, eta: float, mutation_probability: float, bounds: BoundsBox,
                        rng: np.random.Generator) -> np.ndarray:
    return mutate_rows(x, eta, mutation_probability, bounds, rng)[0]


Comparator = Callable[[Individual, Individual], float]


def maximize_first() -> Comparator:
    """Comparator preferring the larger first objective."""
    return lambda a, b: float(a.objectives[0] - b.objectives[0])


def minimize_first() -> Comparator:
    return lambda a, b: float(b.objectives[0] - a.objectives[0])


def tournament_select(pop: Sequence[Individual], fitness: Comparator,
                      rng: np.random.Generator) -> Individual:
    """Binary tournament with replacement.

    ``fitness(a, b)`` is positive when ``a`` should win, negative when
    ``b`` should, zero for an exact tie (decided by a fair coin).
    """
    if len(pop) == 0:
        raise ValueError("tournament on an empty population")
    i, j = rng.integers(0, len(pop), size=2)
    a, b = pop[i], pop[j]
    c = fitness(a, b)
    if c > 0:
        return a
    if c < 0:
        return b
    return a if rng.random() < 0.5 else b


def make_offspring(parents: Sequence[Individual], fitness: Comparator, n: int,
                   params: GaParams, bounds: BoundsBox, rng: np.random.Generator) -> np.ndarray:
    """Tournament -> SBX -> mutation, producing ``n`` child genomes.

    All tournaments are drawn first, then all crossovers, then all
    mutations.
    """
    n_pairs = (n + 1) // 2
    picks = [tournament_select(parents, fitness, rng) for _ in range(2 * n_pairs)]
    p1 = np.array([p.genome for p in picks[0::2]])
    p2 = np.array([p.genome for p in picks[1::2]])
    c1, c2 = sbx_pairs(p1, p2, params.eta_crossover, params.crossover_probability, bounds, rng)
    children = np.empty((2 * n_pairs, bounds.dim))
    children[0::2], children[1::2] = c1, c2
    children = mutate_rows(children, params.eta_mutation, params.mutation_probability, bounds, rng)
    return children[:n]


# --------------------------------------------------------------------------
# single-objective GA


def _evaluate_scalar(objective: Callable, genome: np.ndarray) -> float:
    value = float(objective(genome))
    if not np.isfinite(value):
        raise EvaluationError(f"objective returned {value} at {genome.tolist()}", genome=genome.copy())
    return value


@dataclass
class GaTrace:
    """Optional per-generation record filled by :func:`ga_maximize`."""

    best_values: list[float] = field(default_factory=list)
    populations: list[np.ndarray] = field(default_factory=list)
    keep_populations: bool = False


def ga_maximize(objective: Callable[[np.ndarray], float], bounds: BoundsBox, params: GaParams,
                *, initial: Sequence | None = None, trace: GaTrace | None = None
                ) -> tuple[np.ndarray, float]:
    """Elitist (mu + lambda) real-coded GA; returns best-ever (genome, value).

    ``initial`` genomes, if given, replace the first rows of the random
    initial population.  ``trace.best_values[g]`` is the best-ever value
    after generation ``g`` (index 0 is the initial population).
    """
    rng = make_rng(params.seed)
    genomes = bounds.sample(rng, params.population_size)
    if initial is not None:
        seeds = np.atleast_2d(np.asarray(initial, dtype=float))[: params.population_size]
        _check_within(seeds, bounds, "initial genome")
        genomes[: len(seeds)] = seeds
    pop = [Individual(g, np.array([_evaluate_scalar(objective, g)])) for g in genomes]
    best = max(pop, key=lambda ind: ind.objectives[0])
    best_genome, best_value = best.genome.copy(), float(best.objectives[0])
    cmp = maximize_first()

    def record():
        if trace is not None:
            trace.best_values.append(best_value)
            if trace.keep_populations:
                trace.populations.append(np.array([ind.genome for ind in pop]))

    record()
    for _ in range(params.generations):
        children = make_offspring(pop, cmp, params.offspring_size, params, bounds, rng)
        kids = [Individual(c, np.array([_evaluate_scalar(objective, c)])) for c in children]
        merged = pop + kids
        # stable sort: on ties, incumbents stay ahead of children
        order = sorted(range(len(merged)), key=lambda i: -merged[i].objectives[0])
        pop = [merged[i] for i in order[: params.population_size]]
        if pop[0].objectives[0] > best_value:
            best_genome, best_value = pop[0].genome.copy(), float(pop[0].objectives[0])
        record()
    return best_genome, best_value
