"""Shared fixtures and problem generators."""

from __future__ import annotations

import numpy as np
import pytest

from furnace_opt.evolve import BoundsBox
from furnace_opt.moo import Objective, ProblemSpec

# best-response points and the payoffs each player gets there
X1_BEST = np.array([86.18, 101.71, 176.88])
X2_BEST = np.array([60.0, 70.0, 215.0])
X_COMPROMISE = np.array([83.41, 95.11, 202.85])
PINNED = {
    tuple(X1_BEST): (75.2, 337.17),
    tuple(X2_BEST): (47.27, 361.29),
    tuple(X_COMPROMISE): (75.20, 361.29),
}


def stub_objectives():
    """Two lookup-table objectives reproducing fixed payoffs at fixed points."""
    def make(i):
        def f(x):
            return PINNED[tuple(np.asarray(x, dtype=float))][i]
        return Objective(f, f"Y{i + 1}")
    return make(0), make(1)


def random_quadratic(rng: np.random.Generator, bounds: BoundsBox, name: str) -> Objective:
    """Random strictly concave quadratic in box-normalized coordinates.

    The peak center may lie outside the box so optima land on faces and
    edges as well as in the interior.
    """
    lo, hi = bounds.lo, bounds.hi
    m = rng.normal(size=(bounds.dim, bounds.dim))
    A = m @ m.T + 0.2 * np.eye(bounds.dim)
    c = rng.uniform(-0.2, 1.2, bounds.dim)
    peak = rng.uniform(10, 400)
    scale = rng.uniform(5, 50)

    def f(x):
        z = (np.asarray(x) - lo) / (hi - lo) - c
        return peak - scale * float(z @ A @ z)

    def fb(X):
        Z = (X - lo) / (hi - lo) - c
        return peak - scale * np.einsum("ni,ij,nj->n", Z, A, Z)

    return Objective(f, name, batch=fb)


def quadratic_instance(seed: int, bounds: BoundsBox | None = None) -> ProblemSpec:
    bounds = bounds or BoundsBox.default()
    rng = np.random.default_rng(1000 + seed)
    return ProblemSpec([random_quadratic(rng, bounds, "Y1"), random_quadratic(rng, bounds, "Y2")], bounds)


def linear_objective(coef, const=0.0, name=""):
    coef = np.asarray(coef, dtype=float)
    return Objective(lambda x: const + float(np.dot(coef, x)), name, batch=lambda X: const + X @ coef)


@pytest.fixture
def plant_bounds() -> BoundsBox:
    return BoundsBox.default()


@pytest.fixture
def unit_box() -> BoundsBox:
    return BoundsBox((0.0,), (1.0,), ("x",))


def pytest_terminal_summary(terminalreporter):
    import test_acceptance

    lines = getattr(test_acceptance, "RESULTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
