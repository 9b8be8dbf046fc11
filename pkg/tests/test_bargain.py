import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import X1_BEST, X2_BEST, X_COMPROMISE, linear_objective, quadratic_instance, stub_objectives
from furnace_opt.bargain import (
    INFEASIBLE_OFFSET, BargainResult, DisagreementPoint, PayoffMatrix, bargain, best_response,
    disagreement, nash_fitness, nash_product, nash_solve, payoff_matrix,
)
from furnace_opt.errors import EvaluationError, InfeasibleError
from furnace_opt.evolve import BoundsBox, GaParams, GaTrace
from furnace_opt.moo import Objective, ProblemSpec
from furnace_opt.pipeline import brute_force_oracle


def test_pinned_payoff_matrix_and_disagreement():
    f1, f2 = stub_objectives()
    P = payoff_matrix([f1, f2], X1_BEST, X2_BEST)
    assert P.tolist() == [[75.2, 337.17], [47.27, 361.29]]
    d = disagreement(P)
    assert (d.y1_worst, d.y2_worst) == (47.27, 337.17)
    assert nash_product((f1(X_COMPROMISE), f2(X_COMPROMISE)), d) == pytest.approx(673.6716, abs=1e-9)


def test_payoff_matrix_linear_objectives():
    f1 = linear_objective([1, 0, 0])
    f2 = linear_objective([-1, 0, 0])
    x1, x2 = np.array([103.0, 80, 200]), np.array([44.4, 80, 200])
    P = payoff_matrix([f1, f2], x1, x2)
    assert P.tolist() == [[103.0, -103.0], [44.4, -44.4]]
    d = disagreement(P)
    assert (d.y1_worst, d.y2_worst) == (44.4, -103.0)


def test_identical_players_give_flat_matrix():
    f = linear_objective([1, 1, 1])
    x = np.array([50.0, 60.0, 200.0])
    P = payoff_matrix([f, f], x, x)
    assert np.all(P.values == 310.0)
    assert disagreement(P) == DisagreementPoint(310.0, 310.0)


def test_payoff_matrix_rejects_non_finite():
    bad = Objective(lambda x: float("nan"))
    with pytest.raises(EvaluationError):
        payoff_matrix([bad, bad], np.zeros(3), np.zeros(3))
    with pytest.raises(ValueError):
        PayoffMatrix([[1, 2, 3], [4, 5, 6]])


def test_nash_product_sign_rules():
    d = DisagreementPoint(1.0, 2.0)
    assert nash_product((1.0, 2.0), d) == 0.0
    assert nash_product((0.5, 5.0), d) < 0


def test_fitness_puts_infeasible_below_feasible():
    b = BoundsBox((0.0,), (1.0,))
    p = ProblemSpec([lambda x: x[0], lambda x: 1 - x[0]], b)
    fit = nash_fitness(p, DisagreementPoint(0.2, 0.2))
    assert fit(np.array([0.5])) == pytest.approx(0.09)
    assert fit(np.array([0.2])) == 0.0
    assert fit(np.array([0.1])) == pytest.approx(-0.1 - INFEASIBLE_OFFSET)
    assert fit(np.array([0.95])) < fit(np.array([0.85])) < 0


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-100, 100), min_size=4, max_size=4))
def test_disagreement_is_column_minimum(v):
    P = PayoffMatrix(np.reshape(v, (2, 2)))
    d = disagreement(P)
    assert d.y1_worst == min(v[0], v[2]) and d.y2_worst == min(v[1], v[3])
    # each diagonal entry is at least its disagreement coordinate
    assert P.values[0, 0] >= d.y1_worst and P.values[1, 1] >= d.y2_worst


def test_best_response_monotone():
    p = ProblemSpec([linear_objective([1, 0, 0]), linear_objective([0, 1, 0])], BoundsBox.default())
    x, v = best_response(p, 0, GaParams())
    assert abs(x[0] - 103.0) < 0.1 and v == pytest.approx(x[0])


def test_best_response_constant():
    p = ProblemSpec([lambda x: 4.0, lambda x: 1.0], BoundsBox.default())
    x, v = best_response(p, 0, GaParams(generations=5))
    assert v == 4.0 and BoundsBox.default().contains(x)


def test_conflicting_toy_splits_the_difference():
    b = BoundsBox((0.0,), (1.0,))
    p = ProblemSpec([linear_objective([1.0]), linear_objective([-1.0], const=1.0)], b)
    r = bargain(p, GaParams(seed=0))
    np.testing.assert_allclose(r.payoff_matrix.values, [[1, 0], [0, 1]], atol=1e-6)
    assert abs(r.disagreement.y1_worst) < 1e-6 and abs(r.disagreement.y2_worst) < 1e-6
    assert abs(r.x_best[0] - 0.5) < 1e-2
    assert abs(r.nash_product - 0.25) < 1e-3


def test_common_peak_gives_the_ideal_point():
    b = BoundsBox.default()
    peak = np.array([80.0, 90.0, 200.0])
    f = lambda s: Objective(lambda x: s - float(np.sum(((x - peak) / 10) ** 2)))
    r = bargain(ProblemSpec([f(75.0), f(360.0)], b), GaParams(seed=1))
    np.testing.assert_allclose(r.x_best, peak, atol=0.5)
    assert r.payoffs[0] == pytest.approx(r.best_response_values[0], abs=1e-2)
    assert r.payoffs[1] == pytest.approx(r.best_response_values[1], abs=1e-2)


def test_result_invariants_and_round_trip(tmp_path):
    p = quadratic_instance(3)
    r = bargain(p, GaParams(seed=3, generations=60))
    d = r.disagreement
    assert r.payoffs[0] >= d.y1_worst and r.payoffs[1] >= d.y2_worst
    assert r.nash_product == pytest.approx((r.payoffs[0] - d.y1_worst) * (r.payoffs[1] - d.y2_worst))
    assert r.payoff_matrix.values[0, 0] == r.best_response_values[0]
    assert r.payoff_matrix.values[0, 0] >= r.payoff_matrix.values[1, 0]
    assert r.payoff_matrix.values[1, 1] >= r.payoff_matrix.values[0, 1]
    assert set(r.seeds) == {"base", "best_response_1", "best_response_2", "nash"}
    r.to_json(tmp_path / "n.json")
    back = BargainResult.from_json(tmp_path / "n.json")
    assert back.to_dict() == r.to_dict()


def test_bargain_deterministic_and_traced():
    p = quadratic_instance(4)
    traces = {}
    a = bargain(p, GaParams(seed=2, generations=40), traces=traces)
    b = bargain(p, GaParams(seed=2, generations=40))
    assert a.to_dict() == b.to_dict()
    assert set(traces) == {"best_response_1", "best_response_2", "nash"}
    assert all(len(t.best_values) == 41 for t in traces.values())


def test_nash_point_is_efficient_on_grid():
    p = quadratic_instance(7)
    r = bargain(p, GaParams(seed=7))
    o = brute_force_oracle(p, r.disagreement, 30)
    y = np.asarray(r.payoffs)
    F = o.front_objectives
    dominating = np.all(F >= y + 1e-6 * np.abs(y), axis=1) & np.any(F > y + 1e-6 * np.abs(y), axis=1)
    assert not dominating.any()


def test_infeasible_disagreement_raises():
    b = BoundsBox((0.0,), (1.0,))
    p = ProblemSpec([linear_objective([1.0]), linear_objective([-1.0], const=1.0)], b)
    P = PayoffMatrix([[1.0, 0.0], [0.0, 1.0]])
    with pytest.raises(InfeasibleError) as err:
        nash_solve(p, P, DisagreementPoint(0.8, 0.8), GaParams(generations=20), GaTrace())
    assert err.value.violation > 0
    assert err.value.exit_code == 4


def test_two_players_required():
    p = ProblemSpec([lambda x: 1.0] * 3, BoundsBox((0.0,), (1.0,)))
    with pytest.raises(ValueError):
        bargain(p, GaParams(generations=1))
