"""CART regression surrogates for the controlled variables."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .dataset import MANIPULATED, Dataset, HEADER_FOR
from .errors import (
    ConfigError,
    DegenerateR2Error,
    DimensionError,
    DomainError,
    InsufficientDataError,
    SchemaError,
)

METRICS_HEADER = ["Manipulated Variables", "Controlled Variables", "Train MSE", "Test MSE",
                  "Train RMSE", "Test RMSE", "Train Rsquare", "Test Rsquare"]


@dataclass(frozen=True)
class CartParams:
    max_depth: int | None = 8  # None = unconstrained
    min_samples_leaf: int = 5
    min_samples_split: int = 10

    def __post_init__(self):
        if self.max_depth is not None and self.max_depth < 1:
            raise ConfigError("max_depth must be >= 1 (or None)")
        if self.min_samples_leaf < 1:
            raise ConfigError("min_samples_leaf must be >= 1")
        if self.min_samples_split < 2:
            raise ConfigError("min_samples_split must be >= 2")

    @classmethod
    def from_dict(cls, d: Mapping) -> "CartParams":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown CART parameter(s): {sorted(unknown)}")
        return cls(**d)


class RegressionTree:
    """Binary regression tree stored as flat node arrays (preorder).

    ``feature[k] == -1`` marks a leaf.  Internal nodes send ``x[f] <= t``
    left.
    """

    def __init__(self, feature, threshold, left, right, value, n_samples, n_features: int,
                 feature_names: Sequence[str] = ()):
        self.feature = np.asarray(feature, dtype=int)
        self.threshold = np.asarray(threshold, dtype=float)
        self.left = np.asarray(left, dtype=int)
        self.right = np.asarray(right, dtype=int)
        self.value = np.asarray(value, dtype=float)
        self.n_samples = np.asarray(n_samples, dtype=int)
        self.n_features = int(n_features)
        self.feature_names = tuple(feature_names)
        for a in (self.feature, self.threshold, self.left, self.right, self.value, self.n_samples):
            a.setflags(write=False)
        # plain lists make scalar traversal much cheaper than numpy indexing
        self._nodes = list(zip(self.feature.tolist(), self.threshold.tolist(), self.left.tolist(),
                               self.right.tolist(), self.value.tolist()))

    @property
    def n_nodes(self) -> int:
        return self.feature.size

    @property
    def leaves(self) -> np.ndarray:
        return np.flatnonzero(self.feature < 0)

    def depth(self) -> int:
        depths = np.zeros(self.n_nodes, dtype=int)
        for k in range(self.n_nodes):
            if self.feature[k] >= 0:
                depths[self.left[k]] = depths[self.right[k]] = depths[k] + 1
        return int(depths.max())

    def _check(self, x: np.ndarray) -> None:
        if x.shape[-1] != self.n_features:
            raise DimensionError(f"expected {self.n_features} features, got {x.shape[-1]}")
        if not np.all(np.isfinite(x)):
            raise DomainError("non-finite feature value")

    def predict(self, x) -> float:
        x = np.asarray(x, dtype=float)
        if x.ndim != 1:
            raise DimensionError("predict expects one feature vector; use predict_many")
        self._check(x)
        xs = x.tolist()
        nodes = self._nodes
        f, t, l, r, v = nodes[0]
        while f >= 0:
            f, t, l, r, v = nodes[l] if xs[f] <= t else nodes[r]
        return v

    def apply(self, X) -> np.ndarray:
        """Leaf node index for each row of ``X``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        self._check(X)
        idx = np.zeros(X.shape[0], dtype=int)
        active = self.feature[idx] >= 0
        rows = np.arange(X.shape[0])
        while active.any():
            a = idx[active]
            go_left = X[rows[active], self.feature[a]] <= self.threshold[a]
            idx[active] = np.where(go_left, self.left[a], self.right[a])
            active = self.feature[idx] >= 0
        return idx

    def predict_many(self, X) -> np.ndarray:
        return self.value[self.apply(X)]

    def structure(self) -> tuple:
        """Hashable structural fingerprint (for equality checks)."""
        return (self.feature.tobytes(), self.threshold.tobytes(), self.left.tobytes(),
                self.right.tobytes(), self.value.tobytes(), self.n_samples.tobytes())

    def to_dict(self) -> dict:
        nodes = []
        for k in range(self.n_nodes):
            if self.feature[k] < 0:
                nodes.append({"id": k, "leaf": True, "value": float(self.value[k]),
                              "n_samples": int(self.n_samples[k])})
            else:
                nodes.append({"id": k, "leaf": False, "feature": int(self.feature[k]),
                              "threshold": float(self.threshold[k]), "left": int(self.left[k]),
                              "right": int(self.right[k]), "value": float(self.value[k]),
                              "n_samples": int(self.n_samples[k])})
        return {"n_features": self.n_features, "feature_names": list(self.feature_names), "nodes": nodes}

    @classmethod
    def from_dict(cls, d: Mapping) -> "RegressionTree":
        nodes = sorted(d["nodes"], key=lambda n: n["id"])
        return cls(
            [-1 if n["leaf"] else n["feature"] for n in nodes],
            [0.0 if n["leaf"] else n["threshold"] for n in nodes],
            [-1 if n["leaf"] else n["left"] for n in nodes],
            [-1 if n["leaf"] else n["right"] for n in nodes],
            [n["value"] for n in nodes],
            [n["n_samples"] for n in nodes],
            d["n_features"], d.get("feature_names", ()),
        )

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1), encoding="utf-8")

    @classmethod
    def from_json(cls, path) -> "RegressionTree":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _best_split(X: np.ndarray, y: np.ndarray, min_leaf: int):
    """Lowest weighted child SSE over all (feature, midpoint) candidates.

    Returns ``(sse, feature, threshold)`` or ``None``.  Ties go to the lower
    feature index, then the lower threshold.  ``y`` should be centered.
    """
    n = y.size
    best = None
    # candidates within rounding noise of each other count as ties
    tol = 1e-12 * max(float(np.dot(y, y)), np.finfo(float).tiny)
    for f in range(X.shape[1]):
        # sort by value then target so sums do not depend on row order
        order = np.lexsort((y, X[:, f]))
        xs, ys = X[order, f], y[order]
        cs = np.cumsum(ys)
        cs2 = np.cumsum(ys * ys)
        # split after position i-1: left = first i rows
        i = np.arange(min_leaf, n - min_leaf + 1)
        i = i[xs[i - 1] < xs[i]]
        if i.size == 0:
            continue
        nl = i.astype(float)
        nr = n - nl
        sl, sl2 = cs[i - 1], cs2[i - 1]
        sr, sr2 = cs[-1] - sl, cs2[-1] - sl2
        sse = (sl2 - sl * sl / nl) + (sr2 - sr * sr / nr)
        k = int(np.flatnonzero(sse <= sse.min() + tol)[0])
        if best is None or sse[k] < best[0] - tol:
            a, b = xs[i[k] - 1], xs[i[k]]
            t = 0.5 * (a + b)
            if not a <= t < b:  # adjacent floats
                t = a
            best = (float(sse[k]), f, float(t))
    return best


def fit_cart(train: Dataset, features: Sequence[str], target: str, params: CartParams = CartParams()
             ) -> RegressionTree:
    """Greedy variance-reduction CART fit."""
    if len(train) == 0:
        raise InsufficientDataError("empty training set")
    for name in list(features) + [target]:
        if name not in train.column_names or name == "timestamp":
            raise SchemaError(f"unknown column {name!r}", column=name)
    return fit_arrays(train.matrix(features), train.column(target), params, feature_names=features)


def fit_arrays(X, y, params: CartParams = CartParams(), feature_names: Sequence[str] = ()) -> RegressionTree:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if y.size == 0:
        raise InsufficientDataError("empty training set")
    if X.ndim != 2 or X.shape[0] != y.size:
        raise DimensionError("X must be (n, d) with one row per target")
    feature, threshold, left, right, value, count = [], [], [], [], [], []
    # (row indices, depth, parent id, is_left)
    stack = [(np.arange(y.size), 0, -1, False)]
    while stack:
        idx, depth, parent, is_left = stack.pop()
        node = len(feature)
        if parent >= 0:
            (left if is_left else right)[parent] = node
        ys = y[idx]
        mean = math.fsum(ys.tolist()) / idx.size  # exact, so independent of row order
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(mean)
        count.append(idx.size)
        sse_parent = float(np.sum((ys - mean) ** 2))
        if (params.max_depth is not None and depth >= params.max_depth) \
                or idx.size < params.min_samples_split or idx.size < 2 * params.min_samples_leaf \
                or sse_parent <= 0.0 or np.ptp(ys) == 0.0:
            continue
        split = _best_split(X[idx], ys - mean, params.min_samples_leaf)
        if split is None or not split[0] < sse_parent * (1.0 - 1e-12):
            continue
        _, f, t = split
        go_left = X[idx, f] <= t
        feature[node], threshold[node] = f, t
        # push right first so the left subtree is numbered next (preorder)
        stack.append((idx[~go_left], depth + 1, node, False))
        stack.append((idx[go_left], depth + 1, node, True))
    return RegressionTree(feature, threshold, left, right, value, count, X.shape[1], feature_names)


@dataclass(frozen=True)
class ModelMetrics:
    train_mse: float
    test_mse: float
    train_rmse: float
    test_rmse: float
    train_r2: float
    test_r2: float

    def row(self, target: str, features: Sequence[str] = MANIPULATED) -> list:
        """Metrics CSV row: feature labels, target label, then the six scores."""
        return [", ".join(_label(f) for f in features), _label(target),
                *(repr(float(v)) for v in (self.train_mse, self.test_mse, self.train_rmse,
                                           self.test_rmse, self.train_r2, self.test_r2))]


_LABELS = {"fired_duty": "Fired Duty", "throughput": "Throughput", "cit": "CIT",
           "absorbed_duty": "Absorbed Duty", "cot": "COT", "stack_o2": "Stack O2"}


def _label(name: str) -> str:
    return _LABELS.get(name, HEADER_FOR.get(name, name))


def _scores(y: np.ndarray, pred: np.ndarray) -> tuple[float, float, float]:
    resid = y - pred
    mse = float(np.mean(resid * resid))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid * resid)) / ss_tot if ss_tot > 0 else math.nan
    return mse, math.sqrt(mse), r2


def evaluate(tree: RegressionTree, train: Dataset, test: Dataset, target: str) -> ModelMetrics:
    if len(train) == 0 or len(test) == 0:
        raise InsufficientDataError("evaluate needs non-empty train and test sets")
    names = tree.feature_names or MANIPULATED
    out = []
    for part in (train, test):
        y = part.column(target)
        out.append(_scores(y, tree.predict_many(part.matrix(names))))
    (a_mse, a_rmse, a_r2), (b_mse, b_rmse, b_r2) = out
    metrics = ModelMetrics(a_mse, b_mse, a_rmse, b_rmse, a_r2, b_r2)
    if math.isnan(a_r2) or math.isnan(b_r2):
        which = "train" if math.isnan(a_r2) else "test"
        raise DegenerateR2Error(f"{target}: {which} target has zero variance; R^2 undefined", metrics=metrics)
    return metrics


def select_models(metrics: Mapping[str, ModelMetrics], test_r2_threshold: float = 0.5) -> list[str]:
    """Names whose test R^2 reaches the threshold, in input order."""
    return [name for name, m in metrics.items() if m.test_r2 >= test_r2_threshold]


def write_metrics_csv(metrics: Mapping[str, ModelMetrics], path, features: Sequence[str] = MANIPULATED) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRICS_HEADER)
        for name, m in metrics.items():
            w.writerow(m.row(name, features))


def read_metrics_csv(path) -> dict[str, ModelMetrics]:
    inverse = {v: k for k, v in _LABELS.items()}
    out = {}
    with Path(path).open(newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            name = inverse.get(row["Controlled Variables"], row["Controlled Variables"])
            out[name] = ModelMetrics(*(float(row[h]) for h in METRICS_HEADER[2:]))
    return out


@dataclass
class SurrogateSet:
    models: dict[str, RegressionTree]
    features: tuple[str, ...] = MANIPULATED

    def retain(self, names: Sequence[str]) -> "SurrogateSet":
        return SurrogateSet({n: self.models[n] for n in names}, self.features)


def fit_surrogates(train: Dataset, test: Dataset, targets: Sequence[str],
                   params: Mapping[str, CartParams] | CartParams = CartParams(),
                   features: Sequence[str] = MANIPULATED) -> tuple[SurrogateSet, dict[str, ModelMetrics]]:
    """Fit and score one tree per target (order preserved)."""
    models, metrics = {}, {}
    for target in targets:
        p = params if isinstance(params, CartParams) else params.get(target, CartParams())
        models[target] = fit_cart(train, features, target, p)
        metrics[target] = evaluate(models[target], train, test, target)
    return SurrogateSet(models, tuple(features)), metrics


def metrics_dict(m: ModelMetrics) -> dict:
    return asdict(m)
