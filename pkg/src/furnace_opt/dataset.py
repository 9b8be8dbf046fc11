"""Furnace operating data: CSV ingestion, synthesis, splitting, correlation."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    BoundsError,
    ConfigError,
    DataValidationError,
    DegenerateVarianceError,
    EmptyInputError,
    InsufficientDataError,
    ParseError,
    SchemaError,
)
from .evolve import BoundsBox, make_rng

# CSV header -> internal column name
CSV_COLUMNS = {
    "Timestamp": "timestamp",
    "Stack-O2": "stack_o2",
    "Efficiency": "efficiency",
    "Fuel-Gas": "fuel_gas",
    "Fired-duty-MW": "fired_duty",
    "Absorbed-duty-MW": "absorbed_duty",
    "Throughput": "throughput",
    "CIT-degC": "cit",
    "COT-degC": "cot",
}
HEADER_FOR = {v: k for k, v in CSV_COLUMNS.items()}
NUMERIC_COLUMNS = tuple(v for v in CSV_COLUMNS.values() if v != "timestamp")
MANIPULATED = ("fired_duty", "throughput", "cit")
CONTROLLED = ("absorbed_duty", "stack_o2", "cot")

# lower heating value of the fuel gas, MJ/kg; only used to derive Fuel-Gas
FUEL_LHV_MJ_PER_KG = 47.0


@dataclass(frozen=True)
class FurnaceRecord:
    timestamp: str
    stack_o2: float
    efficiency: float
    fuel_gas: float
    fired_duty: float
    absorbed_duty: float
    throughput: float
    cit: float
    cot: float


class Dataset:
    """Immutable column-oriented table of :class:`FurnaceRecord` rows."""

    def __init__(self, timestamps: Sequence[str], columns: Mapping[str, Iterable[float]]):
        missing = [c for c in NUMERIC_COLUMNS if c not in columns]
        if missing:
            raise SchemaError(f"missing column {missing[0]!r}", column=missing[0])
        self._timestamps = tuple(str(t) for t in timestamps)
        cols = {}
        for name in NUMERIC_COLUMNS:
            arr = np.array(columns[name], dtype=float)
            if arr.shape != (len(self._timestamps),):
                raise SchemaError(f"column {name!r} has length {arr.size}, expected {len(self._timestamps)}",
                                  column=name)
            arr.setflags(write=False)
            cols[name] = arr
        self._cols = cols
        self._validate()

    def _validate(self) -> None:
        for name, arr in self._cols.items():
            bad = np.flatnonzero(~np.isfinite(arr))
            if bad.size:
                raise DataValidationError(f"non-finite {name} at row {bad[0] + 1}")
        for name, ok in (("stack_o2", self._cols["stack_o2"] >= 0),
                         ("fired_duty", self._cols["fired_duty"] > 0),
                         ("absorbed_duty", self._cols["absorbed_duty"] >= 0)):
            bad = np.flatnonzero(~ok)
            if bad.size:
                raise DataValidationError(f"{name} out of range at row {bad[0] + 1}: {self._cols[name][bad[0]]}")

    def __len__(self) -> int:
        return len(self._timestamps)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return self._timestamps == other._timestamps and all(
            np.array_equal(self._cols[c], other._cols[c]) for c in NUMERIC_COLUMNS)

    @property
    def timestamps(self) -> tuple[str, ...]:
        return self._timestamps

    @property
    def column_names(self) -> tuple[str, ...]:
        return ("timestamp",) + NUMERIC_COLUMNS

    def column(self, name: str) -> np.ndarray:
        if name == "timestamp":
            return np.array(self._timestamps, dtype=object)
        try:
            return self._cols[name]
        except KeyError:
            raise SchemaError(f"unknown column {name!r}", column=name) from None

    def matrix(self, names: Sequence[str]) -> np.ndarray:
        return np.column_stack([self.column(n) for n in names]) if names else np.empty((len(self), 0))

    @property
    def records(self) -> list[FurnaceRecord]:
        return [FurnaceRecord(t, *(float(self._cols[c][i]) for c in NUMERIC_COLUMNS))
                for i, t in enumerate(self._timestamps)]

    @classmethod
    def from_records(cls, records: Sequence[FurnaceRecord]) -> "Dataset":
        return cls([r.timestamp for r in records],
                   {c: [getattr(r, c) for r in records] for c in NUMERIC_COLUMNS})

    def take(self, indices: Sequence[int]) -> "Dataset":
        idx = np.asarray(indices, dtype=int)
        return Dataset([self._timestamps[i] for i in idx], {c: a[idx] for c, a in self._cols.items()})

    def to_csv(self, path) -> None:
        path = Path(path)
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(list(CSV_COLUMNS))
            for i, t in enumerate(self._timestamps):
                w.writerow([t] + [repr(float(self._cols[c][i])) for c in NUMERIC_COLUMNS])


def load_csv(path) -> Dataset:
    """Read the canonical furnace CSV (columns in any order)."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise EmptyInputError(f"{path}: empty file")
        header = [h.strip() for h in header]
        for h in header:
            if h not in CSV_COLUMNS:
                raise SchemaError(f"{path}: unexpected column {h!r}", column=h)
        dupes = {h for h in header if header.count(h) > 1}
        if dupes:
            col = sorted(dupes)[0]
            raise SchemaError(f"{path}: duplicate column {col!r}", column=col)
        for h in CSV_COLUMNS:
            if h not in header:
                raise SchemaError(f"{path}: missing column {h!r}", column=h)
        pos = {h: header.index(h) for h in CSV_COLUMNS}
        timestamps: list[str] = []
        cols: dict[str, list[float]] = {c: [] for c in NUMERIC_COLUMNS}
        for row_no, row in enumerate(reader, start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"{path}: row {row_no} has {len(row)} cells, expected {len(header)}",
                                 row=row_no, column="")
            timestamps.append(row[pos["Timestamp"]].strip())
            for h, name in CSV_COLUMNS.items():
                if name == "timestamp":
                    continue
                cell = row[pos[h]].strip()
                try:
                    cols[name].append(float(cell))
                except ValueError:
                    raise ParseError(f"{path}: row {row_no}, column {h!r}: cannot parse {cell!r}",
                                     row=row_no, column=h) from None
    if not timestamps:
        raise EmptyInputError(f"{path}: no data rows")
    return Dataset(timestamps, cols)


# --------------------------------------------------------------------------
# synthesis


@dataclass(frozen=True)
class QuadraticSurface:
    """``y = c + b.z + z'Qz`` over box-normalized inputs ``z`` in [0, 1]^3."""

    intercept: float
    linear: tuple[float, ...]
    quadratic: tuple[tuple[float, ...], ...]

    @classmethod
    def peaked(cls, peak: float, center: Sequence[float], curvature: Sequence[float],
               interaction: Sequence[Sequence[float]] | None = None) -> "QuadraticSurface":
        """``peak - sum_i a_i (z_i - c_i)^2`` plus optional extra ``z'Mz``."""
        c = np.asarray(center, dtype=float)
        a = np.asarray(curvature, dtype=float)
        q = -np.diag(a)
        if interaction is not None:
            q = q + np.asarray(interaction, dtype=float)
        return cls(float(peak - np.sum(a * c * c)), tuple(2 * a * c), tuple(map(tuple, q)))

    def __call__(self, z) -> np.ndarray:
        z = np.atleast_2d(np.asarray(z, dtype=float))
        q = np.asarray(self.quadratic)
        return self.intercept + z @ np.asarray(self.linear) + np.einsum("ni,ij,nj->n", z, q, z)

    def to_dict(self) -> dict:
        return {"intercept": self.intercept, "linear": list(self.linear),
                "quadratic": [list(r) for r in self.quadratic]}

    @classmethod
    def from_dict(cls, d: dict) -> "QuadraticSurface":
        try:
            q = np.asarray(d["quadratic"], dtype=float)
            lin = np.asarray(d["linear"], dtype=float)
        except KeyError as exc:
            raise ConfigError(f"surface block missing {exc}") from exc
        if q.shape != (lin.size, lin.size):
            raise ConfigError(f"quadratic must be {lin.size}x{lin.size}")
        return cls(float(d["intercept"]), tuple(lin), tuple(map(tuple, q)))


def _default_surfaces(conflicting: bool) -> dict[str, QuadraticSurface]:
    if conflicting:
        ad_center, cot_center = (0.9, 0.85, 0.15), (0.3, 0.45, 0.9)
    else:
        ad_center = cot_center = (0.65, 0.75, 0.55)
    return {
        "absorbed_duty": QuadraticSurface.peaked(75.2, ad_center, (30.0, 20.0, 10.0)),
        "cot": QuadraticSurface.peaked(361.29, cot_center, (25.0, 15.0, 40.0)),
        "stack_o2": QuadraticSurface(1.75, (0.3, -0.2, 0.0), ((0.0,) * 3,) * 3),
    }


@dataclass(frozen=True)
class SyntheticSpec:
    """Ground truth for a synthetic furnace dataset.

    Responses are quadratic surfaces in box-normalized manipulated
    variables plus Gaussian noise.  ``stack_o2`` defaults to a weak signal
    under heavy noise so its surrogate scores poorly.
    """

    bounds: BoundsBox = field(default_factory=BoundsBox.default)
    surfaces: Mapping[str, QuadraticSurface] = field(default_factory=lambda: _default_surfaces(False))
    noise_sd: Mapping[str, float] = field(
        default_factory=lambda: {"absorbed_duty": 0.3, "cot": 0.5, "stack_o2": 0.3})
    n_samples: int = 2000
    seed: int = 0
    start: str = "2021-01-01T00:00:00"
    interval_minutes: int = 1

    def __post_init__(self):
        if self.n_samples < 1:
            raise ConfigError("n_samples must be >= 1")
        for name in CONTROLLED:
            if name not in self.surfaces:
                raise ConfigError(f"missing surface for {name!r}")
            if self.noise_sd.get(name, 0.0) < 0:
                raise ConfigError(f"noise_sd for {name!r} must be >= 0")
        if self.bounds.dim != 3:
            raise BoundsError("synthetic bounds must cover exactly (fired_duty, throughput, cit)")

    @classmethod
    def conflicting(cls, **kw) -> "SyntheticSpec":
        return cls(surfaces=_default_surfaces(True), **kw)

    def to_dict(self) -> dict:
        return {
            "bounds": self.bounds.to_dict(),
            "surfaces": {k: s.to_dict() for k, s in self.surfaces.items()},
            "noise_sd": dict(self.noise_sd),
            "n_samples": self.n_samples,
            "seed": self.seed,
            "start": self.start,
            "interval_minutes": self.interval_minutes,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticSpec":
        d = dict(d)
        preset = d.pop("preset", "coincident")
        if preset not in ("coincident", "conflicting"):
            raise ConfigError(f"unknown synthetic preset {preset!r}")
        kw = {}
        if "bounds" in d:
            kw["bounds"] = BoundsBox.from_dict(d.pop("bounds"))
        surfaces = _default_surfaces(preset == "conflicting")
        surfaces.update({k: QuadraticSurface.from_dict(v) for k, v in d.pop("surfaces", {}).items()})
        kw["surfaces"] = surfaces
        if "noise_sd" in d:
            noise = {"absorbed_duty": 0.3, "cot": 0.5, "stack_o2": 0.3}
            noise.update({k: float(v) for k, v in d.pop("noise_sd").items()})
            kw["noise_sd"] = noise
        unknown = set(d) - {"n_samples", "seed", "start", "interval_minutes"}
        if unknown:
            raise ConfigError(f"unknown synthetic field(s): {sorted(unknown)}")
        return cls(**kw, **d)

    @classmethod
    def from_json(cls, path) -> "SyntheticSpec":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def synthesize(spec: SyntheticSpec) -> Dataset:
    """Sample the box uniformly and evaluate the noisy ground truth.

    Negative absorbed duty / stack O2 (possible only under noise) are
    clipped to zero.
    """
    rng = make_rng(spec.seed)
    x = spec.bounds.sample(rng, spec.n_samples)
    z = (x - spec.bounds.lo) / (spec.bounds.hi - spec.bounds.lo)
    responses = {}
    for name in CONTROLLED:
        y = spec.surfaces[name](z)
        sd = float(spec.noise_sd.get(name, 0.0))
        noise = rng.normal(0.0, 1.0, spec.n_samples)
        responses[name] = y + sd * noise if sd > 0 else y
    absorbed = np.maximum(responses["absorbed_duty"], 0.0)
    fired = x[:, 0]
    t0 = datetime.fromisoformat(spec.start)
    step = timedelta(minutes=spec.interval_minutes)
    stamps = [(t0 + i * step).isoformat() for i in range(spec.n_samples)]
    return Dataset(stamps, {
        "fired_duty": fired,
        "throughput": x[:, 1],
        "cit": x[:, 2],
        "absorbed_duty": absorbed,
        "cot": responses["cot"],
        "stack_o2": np.maximum(responses["stack_o2"], 0.0),
        "efficiency": absorbed / fired * 100.0,
        "fuel_gas": fired * 3600.0 / FUEL_LHV_MJ_PER_KG,
    })


# --------------------------------------------------------------------------
# statistics / splitting


def correlation_matrix(data: Dataset, columns: Sequence[str]) -> np.ndarray:
    """Pearson correlation between the named columns (two-pass formula)."""
    if len(data) < 2:
        raise InsufficientDataError("correlation needs at least 2 rows")
    centered = []
    norms = []
    for name in columns:
        v = data.column(name)
        c = v - v.mean()
        ss = float(np.dot(c, c))
        if ss == 0.0:
            raise DegenerateVarianceError(f"column {name!r} has zero variance", column=name)
        centered.append(c)
        norms.append(math.sqrt(ss))
    k = len(columns)
    out = np.eye(k)
    for i in range(k):
        for j in range(i + 1, k):
            r = float(np.dot(centered[i], centered[j])) / (norms[i] * norms[j])
            out[i, j] = out[j, i] = min(1.0, max(-1.0, r))
    return out


def train_test_split(data: Dataset, test_fraction: float = 0.2, seed: int = 0) -> tuple[Dataset, Dataset]:
    """Uniform random split without replacement; row order kept within parts."""
    n = len(data)
    if n < 2:
        raise InsufficientDataError(f"need at least 2 rows to split, got {n}")
    if not 0.0 < test_fraction < 1.0:
        raise ConfigError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    n_test = min(max(int(round(test_fraction * n)), 1), n - 1)
    perm = make_rng(seed).permutation(n)
    test_idx = np.sort(perm[:n_test])
    train_idx = np.sort(perm[n_test:])
    return data.take(train_idx), data.take(test_idx)
