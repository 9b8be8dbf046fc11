import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from furnace_opt.dataset import (
    CSV_COLUMNS, NUMERIC_COLUMNS, Dataset, FurnaceRecord, QuadraticSurface, SyntheticSpec,
    correlation_matrix, load_csv, synthesize, train_test_split,
)
from furnace_opt.errors import (
    BoundsError, ConfigError, DataValidationError, DegenerateVarianceError, EmptyInputError,
    InsufficientDataError, ParseError, SchemaError,
)
from furnace_opt.evolve import BoundsBox

HEADER = list(CSV_COLUMNS)


def _row(i, **over):
    base = {"Timestamp": f"2021-01-01T00:0{i}:00", "Stack-O2": 1.8, "Efficiency": 80.0,
            "Fuel-Gas": 5000.0, "Fired-duty-MW": 90.0 + i, "Absorbed-duty-MW": 72.0,
            "Throughput": 100.0, "CIT-degC": 200.0, "COT-degC": 360.0 + i}
    base.update(over)
    return base


def write_csv(path, rows, header=HEADER):
    lines = [",".join(header)]
    for r in rows:
        lines.append(",".join(str(r[h]) for h in header))
    path.write_text("\n".join(lines) + "\n")
    return path


def test_load_three_rows_any_column_order(tmp_path):
    rows = [_row(i) for i in range(3)]
    a = load_csv(write_csv(tmp_path / "a.csv", rows))
    b = load_csv(write_csv(tmp_path / "b.csv", rows, header=HEADER[::-1]))
    assert len(a) == 3
    assert a == b
    assert a.column("cot").tolist() == [360.0, 361.0, 362.0]
    assert a.timestamps[0] == "2021-01-01T00:00:00"


def test_missing_column_is_named(tmp_path):
    header = [h for h in HEADER if h != "COT-degC"]
    with pytest.raises(SchemaError) as err:
        load_csv(write_csv(tmp_path / "x.csv", [_row(0)], header=header))
    assert err.value.column == "COT-degC"
    assert "COT-degC" in str(err.value)


def test_unexpected_and_duplicate_columns(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text(",".join(HEADER + ["Extra"]) + "\n")
    with pytest.raises(SchemaError, match="Extra"):
        load_csv(p)
    p.write_text(",".join(HEADER + ["COT-degC"]) + "\n")
    with pytest.raises(SchemaError, match="duplicate"):
        load_csv(p)


def test_unparseable_cell_cites_row_and_column(tmp_path):
    rows = [_row(0), _row(1, **{"Fired-duty-MW": "abc"})]
    with pytest.raises(ParseError) as err:
        load_csv(write_csv(tmp_path / "x.csv", rows))
    assert err.value.row == 2
    assert err.value.column == "Fired-duty-MW"


def test_empty_inputs(tmp_path):
    p = tmp_path / "empty.csv"
    p.write_text("")
    with pytest.raises(EmptyInputError):
        load_csv(p)
    p.write_text(",".join(HEADER) + "\n")
    with pytest.raises(EmptyInputError):
        load_csv(p)


def test_validation_rejects_negative_o2(tmp_path):
    with pytest.raises(DataValidationError):
        load_csv(write_csv(tmp_path / "x.csv", [_row(0, **{"Stack-O2": -0.1})]))


def test_csv_round_trip(tmp_path):
    data = synthesize(SyntheticSpec(n_samples=25, seed=3))
    data.to_csv(tmp_path / "d.csv")
    assert load_csv(tmp_path / "d.csv") == data


def test_records_round_trip():
    data = synthesize(SyntheticSpec(n_samples=5))
    recs = data.records
    assert isinstance(recs[0], FurnaceRecord)
    assert Dataset.from_records(recs) == data


def test_columns_are_read_only():
    data = synthesize(SyntheticSpec(n_samples=5))
    with pytest.raises(ValueError):
        data.column("cot")[0] = 0.0


def _linear_spec(**kw):
    lin = QuadraticSurface(10.0, (3.0, -1.0, 2.0), ((0.0,) * 3,) * 3)
    return SyntheticSpec(surfaces={"absorbed_duty": lin, "cot": QuadraticSurface(300.0, (5.0, 1.0, -2.0),
                                                                                 ((0.0,) * 3,) * 3),
                                   "stack_o2": QuadraticSurface(1.0, (0.5, 0.0, 0.0), ((0.0,) * 3,) * 3)},
                         noise_sd={"absorbed_duty": 0.0, "cot": 0.0, "stack_o2": 0.0}, **kw)


def test_zero_noise_linear_surfaces_are_exact():
    spec = _linear_spec(n_samples=200)
    data = synthesize(spec)
    b = spec.bounds
    z = (data.matrix(["fired_duty", "throughput", "cit"]) - b.lo) / (b.hi - b.lo)
    np.testing.assert_allclose(data.column("absorbed_duty"), 10 + z @ np.array([3.0, -1.0, 2.0]), rtol=0, atol=1e-12)
    np.testing.assert_allclose(data.column("cot"), 300 + z @ np.array([5.0, 1.0, -2.0]), rtol=0, atol=1e-12)


def test_synthesize_deterministic_and_bounded(tmp_path):
    spec = SyntheticSpec(n_samples=1000, seed=11)
    a, b = synthesize(spec), synthesize(spec)
    assert a == b
    a.to_csv(tmp_path / "a.csv")
    b.to_csv(tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    fd = a.column("fired_duty")
    assert fd.min() >= 44.4 and fd.max() <= 103.0
    np.testing.assert_allclose(a.column("efficiency"), a.column("absorbed_duty") / fd * 100)


def test_degenerate_bounds_rejected():
    with pytest.raises(BoundsError):
        BoundsBox((1.0, 0.0, 0.0), (0.0, 1.0, 1.0))
    with pytest.raises(BoundsError):
        SyntheticSpec(bounds=BoundsBox((0.0,), (1.0,)))


def test_synthetic_spec_from_dict():
    spec = SyntheticSpec.from_dict({"preset": "conflicting", "n_samples": 10, "noise_sd": {"cot": 0.0}})
    assert spec.n_samples == 10
    assert spec.noise_sd["cot"] == 0.0 and spec.noise_sd["absorbed_duty"] == 0.3
    assert spec.surfaces == SyntheticSpec.conflicting().surfaces
    with pytest.raises(ConfigError):
        SyntheticSpec.from_dict({"bogus": 1})
    with pytest.raises(ConfigError):
        SyntheticSpec.from_dict({"preset": "weird"})


def test_quadratic_surface_peak():
    s = QuadraticSurface.peaked(5.0, (0.2, 0.4, 0.6), (1.0, 2.0, 3.0))
    assert s([0.2, 0.4, 0.6])[0] == pytest.approx(5.0)
    assert s([0.3, 0.4, 0.6])[0] == pytest.approx(5.0 - 0.01)
    assert QuadraticSurface.from_dict(s.to_dict()) == s


# correlation -----------------------------------------------------------


def _dataset_with(**cols):
    n = len(next(iter(cols.values())))
    base = {c: np.full(n, 1.0) for c in NUMERIC_COLUMNS}
    base.update({k: np.asarray(v, dtype=float) for k, v in cols.items()})
    return Dataset([str(i) for i in range(n)], base)


def test_correlation_perfect_relations():
    x = np.arange(1.0, 11.0)
    d = _dataset_with(fired_duty=x, cot=2 * x + 1, throughput=-x)
    C = correlation_matrix(d, ["fired_duty", "cot", "throughput"])
    assert C[0, 1] == pytest.approx(1.0)
    assert C[0, 2] == pytest.approx(-1.0)
    np.testing.assert_array_equal(np.diag(C), 1.0)
    np.testing.assert_array_equal(C, C.T)


def test_correlation_constant_column_named():
    d = _dataset_with(fired_duty=np.arange(1.0, 6.0))
    with pytest.raises(DegenerateVarianceError) as err:
        correlation_matrix(d, ["fired_duty", "cit"])
    assert err.value.column == "cit"


def test_correlation_needs_two_rows():
    with pytest.raises(InsufficientDataError):
        correlation_matrix(_dataset_with(fired_duty=[1.0]), ["fired_duty"])


def test_correlation_matches_definition_on_synthetic():
    quad = {"absorbed_duty": QuadraticSurface(0.0, (50.0, 0.0, 0.0), ((0.0,) * 3,) * 3),
            "cot": QuadraticSurface.peaked(360, (0.5, 0.5, 0.5), (1, 1, 1)),
            "stack_o2": QuadraticSurface(1.0, (0.0,) * 3, ((0.0,) * 3,) * 3)}
    spec = SyntheticSpec(surfaces=quad, noise_sd={"absorbed_duty": 0.0, "cot": 0.0, "stack_o2": 0.1},
                         n_samples=400, seed=2)
    d = synthesize(spec)
    x, y = d.column("fired_duty"), d.column("absorbed_duty")
    xm, ym = math.fsum(x) / x.size, math.fsum(y) / y.size
    ref = math.fsum((a - xm) * (b - ym) for a, b in zip(x, y)) / math.sqrt(
        math.fsum((a - xm) ** 2 for a in x) * math.fsum((b - ym) ** 2 for b in y))
    r = correlation_matrix(d, ["absorbed_duty", "fired_duty"])[0, 1]
    assert r > 0.9
    assert r == pytest.approx(ref, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=30),
       st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=30))
def test_correlation_bounded_symmetric(a, b):
    n = min(len(a), len(b))
    a, b = np.array(a[:n]), np.array(b[:n])
    if np.ptp(a) < 1e-6 or np.ptp(b) < 1e-6:
        return
    C = correlation_matrix(_dataset_with(cot=a, cit=b), ["cot", "cit"])
    assert np.all(np.abs(C) <= 1.0)
    assert C[0, 1] == C[1, 0]


# split -----------------------------------------------------------------


def test_split_sizes_and_determinism():
    d = synthesize(SyntheticSpec(n_samples=10))
    tr, te = train_test_split(d, 0.2, seed=4)
    assert (len(tr), len(te)) == (8, 2)
    tr2, te2 = train_test_split(d, 0.2, seed=4)
    assert tr == tr2 and te == te2


def test_split_errors():
    d = synthesize(SyntheticSpec(n_samples=1))
    with pytest.raises(InsufficientDataError):
        train_test_split(d)
    with pytest.raises(ConfigError):
        train_test_split(synthesize(SyntheticSpec(n_samples=5)), 1.5)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 60), st.floats(0.01, 0.99), st.integers(0, 2**31))
def test_split_is_partition(n, frac, seed):
    d = synthesize(SyntheticSpec(n_samples=n, seed=1))
    tr, te = train_test_split(d, frac, seed)
    assert len(tr) >= 1 and len(te) >= 1 and len(tr) + len(te) == n
    both = sorted(tr.timestamps + te.timestamps)
    assert both == sorted(d.timestamps)
    assert list(tr.timestamps) == sorted(tr.timestamps)
