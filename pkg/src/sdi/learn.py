"""Feature ranking, tree training and evaluation for the single-sensor defence.

Everything here is deterministic.  Ties are resolved the same way
everywhere: lowest feature index first, then lowest threshold, and a
value equal to a threshold goes to the left child.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence, Union

import numpy as np

from sdi import features as feat
from sdi.errors import DataError, NumericError

# relative slack when comparing split impurities; distinct Gini values of
# small datasets differ by far more than this
_TIE_TOL = 1e-12

DEFAULT_MAX_DEPTH = 8
DEFAULT_MIN_LEAF = 5


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    feature_names: list = field(default_factory=list)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y, dtype=int)
        if self.X.ndim != 2:
            raise DataError("feature matrix must be 2-D")
        if len(self.X) != len(self.y):
            raise DataError("features and labels differ in length")
        if not self.feature_names:
            self.feature_names = [f"f{i}" for i in range(self.X.shape[1])]
        if len(self.feature_names) != self.X.shape[1]:
            raise DataError("feature_names does not match feature count")

    def __len__(self):
        return len(self.y)

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.X[idx], self.y[idx], list(self.feature_names))

    def class_counts(self) -> dict:
        values, counts = np.unique(self.y, return_counts=True)
        return dict(zip(values.tolist(), counts.tolist()))


# --------------------------------------------------------------------------
# ReliefF


@dataclass(frozen=True)
class FeatureWeights:
    names: tuple
    weights: np.ndarray

    def ranking(self) -> list:
        """Feature names, best first (stable for equal weights)."""
        order = np.argsort(-self.weights, kind="stable")
        return [self.names[i] for i in order]


def minmax_scale(X: np.ndarray) -> np.ndarray:
    lo = X.min(axis=0)
    span = X.max(axis=0) - lo
    safe = np.where(span > 0, span, 1.0)
    return np.where(span > 0, (X - lo) / safe, 0.0)


def relieff_rank(ds: Dataset, k: int = 20) -> FeatureWeights:
    """ReliefF weights using every instance once and ``k`` hits/misses each.

    Features are min-max scaled first, so diffs lie in [0, 1].  Neighbours
    are ranked by Euclidean distance on the scaled features, ties going to
    the lower row index.  For more than two classes the miss terms are
    weighted by class priors as in the standard algorithm.
    """
    counts = ds.class_counts()
    if len(counts) < 2:
        raise DataError("ReliefF needs at least two classes")
    small = [c for c, n in counts.items() if n < k + 1]
    if small:
        raise DataError(f"classes {small} have fewer than k+1={k + 1} rows")

    Z = minmax_scale(ds.X)
    y = ds.y
    n, f = Z.shape
    sq = np.sum(Z * Z, axis=1)
    D = np.sqrt(np.maximum(sq[:, None] + sq[None, :] - 2.0 * Z @ Z.T, 0.0))
    priors = {c: counts[c] / n for c in counts}
    members = {c: np.flatnonzero(y == c) for c in counts}

    w = np.zeros(f)
    for i in range(n):
        ci = y[i]
        hits = members[ci][members[ci] != i]
        near = hits[np.argsort(D[i, hits], kind="stable")[:k]]
        w -= np.abs(Z[near] - Z[i]).sum(axis=0) / k
        for c, idx in members.items():
            if c == ci:
                continue
            near = idx[np.argsort(D[i, idx], kind="stable")[:k]]
            scale = priors[c] / (1.0 - priors[ci])
            w += scale * np.abs(Z[near] - Z[i]).sum(axis=0) / k
    return FeatureWeights(tuple(ds.feature_names), w / n)


# --------------------------------------------------------------------------
# CART


@dataclass(frozen=True)
class Leaf:
    cls: int
    proba: tuple


@dataclass(frozen=True)
class Split:
    feature: int
    threshold: float
    left: Union["Split", Leaf]
    right: Union["Split", Leaf]


def gini(counts) -> float:
    counts = np.asarray(counts, dtype=float)
    n = counts.sum()
    return 0.0 if n == 0 else 1.0 - float(np.sum((counts / n) ** 2))


def _midpoint(a: float, b: float) -> float:
    m = a + (b - a) / 2.0
    return a if m >= b else m


def best_split(X: np.ndarray, y: np.ndarray, min_leaf: int = 1, n_classes: int = 2):
    """Gini-optimal ``(feature, threshold, weighted_gini)`` or ``None``.

    Candidates are midpoints between consecutive distinct values of each
    feature, and both children must hold at least ``min_leaf`` rows.
    """
    n = len(y)
    if n < 2:
        return None
    onehot = np.eye(n_classes)[y]
    best = None
    for j in range(X.shape[1]):
        order = np.argsort(X[:, j], kind="stable")
        xs = X[order, j]
        left = np.cumsum(onehot[order], axis=0)[:-1]
        n_left = np.arange(1, n, dtype=float)
        n_right = n - n_left
        right = left[-1] + onehot[order][-1] - left if n > 1 else left
        ok = (xs[1:] > xs[:-1]) & (n_left >= min_leaf) & (n_right >= min_leaf)
        if not ok.any():
            continue
        g_left = n_left - np.sum(left**2, axis=1) / n_left
        g_right = n_right - np.sum(right**2, axis=1) / n_right
        score = (g_left + g_right) / n
        score = np.where(ok, score, np.inf)
        lowest = score.min()
        pos = int(np.flatnonzero(score <= lowest + _TIE_TOL)[0])
        if best is None or lowest < best[2] - _TIE_TOL:
            best = (j, _midpoint(float(xs[pos]), float(xs[pos + 1])), float(lowest))
    return best


class DecisionTree:
    """Binary classification tree; ``x[feature] <= threshold`` goes left."""

    def __init__(self, root, n_features: int, max_depth: int = DEFAULT_MAX_DEPTH,
                 min_leaf: int = DEFAULT_MIN_LEAF):
        self.root = root
        self.n_features = n_features
        self.max_depth = max_depth
        self.min_leaf = min_leaf

    def _check(self, x) -> np.ndarray:
        x = np.asarray(getattr(x, "values", x), dtype=float)
        if x.shape[-1] != self.n_features:
            raise DataError(f"expected {self.n_features} features, got {x.shape[-1]}")
        return x

    def leaf_for(self, x) -> Leaf:
        x = self._check(x)
        node = self.root
        while isinstance(node, Split):
            node = node.left if x[node.feature] <= node.threshold else node.right
        return node

    def path_length(self, x) -> int:
        x = self._check(x)
        node, steps = self.root, 0
        while isinstance(node, Split):
            node = node.left if x[node.feature] <= node.threshold else node.right
            steps += 1
        return steps

    def predict(self, x) -> int:
        return self.leaf_for(x).cls

    def predict_many(self, X) -> np.ndarray:
        X = self._check(np.atleast_2d(X))
        return np.array([self.predict(row) for row in X], dtype=int)

    def depth(self) -> int:
        def walk(node):
            return 0 if isinstance(node, Leaf) else 1 + max(walk(node.left), walk(node.right))
        return walk(self.root)

    def __eq__(self, other):
        return isinstance(other, DecisionTree) and self.to_text() == other.to_text()

    def to_text(self) -> str:
        lines = [f"tree n_features={self.n_features} max_depth={self.max_depth} min_leaf={self.min_leaf}"]
        body = []
        counter = iter(range(1 << 30))

        def emit(node) -> int:
            nid = next(counter)
            slot = len(body)
            body.append(None)
            if isinstance(node, Leaf):
                body[slot] = f"node {nid} leaf {node.cls} {node.proba[0]!r} {node.proba[1]!r}"
            else:
                left = emit(node.left)
                right = emit(node.right)
                body[slot] = f"node {nid} split {node.feature} {node.threshold!r} {left} {right}"
            return nid

        emit(self.root)
        return "\n".join(lines + body) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "DecisionTree":
        lines = [ln.split() for ln in text.splitlines() if ln.strip()]
        if not lines or lines[0][0] != "tree":
            raise DataError("not a tree model")
        header = dict(kv.split("=") for kv in lines[0][1:])
        raw = {}
        for parts in lines[1:]:
            if parts[0] != "node":
                raise DataError(f"bad model line: {' '.join(parts)}")
            raw[int(parts[1])] = parts[2:]

        def build(nid):
            spec = raw[nid]
            if spec[0] == "leaf":
                return Leaf(int(spec[1]), (float(spec[2]), float(spec[3])))
            return Split(int(spec[1]), float(spec[2]), build(int(spec[3])), build(int(spec[4])))

        return cls(build(0), int(header["n_features"]), int(header["max_depth"]), int(header["min_leaf"]))


def _leaf(y: np.ndarray, n_classes: int = 2) -> Leaf:
    counts = np.bincount(y, minlength=n_classes).astype(float)
    proba = counts / counts.sum()
    return Leaf(int(np.argmax(counts)), tuple(float(p) for p in proba))


def train_tree(ds: Dataset, max_depth: int = DEFAULT_MAX_DEPTH, min_leaf: int = DEFAULT_MIN_LEAF) -> DecisionTree:
    """Greedy CART with Gini impurity.

    A node becomes a leaf when it is pure, at ``max_depth``, too small to
    give both children ``min_leaf`` rows, or has no distinct values left to
    split on.  Splits are taken even when they do not lower impurity, which
    lets the tree get past XOR-like plateaus.
    """
    if len(ds) == 0:
        raise DataError("empty dataset")
    if max_depth < 0 or min_leaf < 1:
        raise DataError("max_depth must be >= 0 and min_leaf >= 1")

    def grow(idx: np.ndarray, depth: int):
        y = ds.y[idx]
        if depth >= max_depth or len(idx) < 2 * min_leaf or np.all(y == y[0]):
            return _leaf(y)
        found = best_split(ds.X[idx], y, min_leaf)
        if found is None:
            return _leaf(y)
        j, thr, _ = found
        mask = ds.X[idx, j] <= thr
        return Split(j, thr, grow(idx[mask], depth + 1), grow(idx[~mask], depth + 1))

    return DecisionTree(grow(np.arange(len(ds)), 0), ds.n_features, max_depth, min_leaf)


@dataclass(frozen=True)
class Stump:
    """Single threshold on one feature; ``polarity="above"`` flags values above it."""

    threshold: float
    feature_index: int = 0
    polarity: str = "above"

    def __post_init__(self):
        if not math.isfinite(self.threshold):
            raise DataError("stump threshold must be finite")

    def predict(self, x) -> int:
        x = np.atleast_1d(np.asarray(getattr(x, "values", x), dtype=float))
        above = x[self.feature_index] > self.threshold
        return int(above if self.polarity == "above" else not above)

    def predict_many(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        col = X[:, self.feature_index] if X.ndim == 2 else X
        above = col > self.threshold
        return (above if self.polarity == "above" else ~above).astype(int)

    def to_text(self) -> str:
        return (
            "model=stump\n"
            f"feature_index={self.feature_index}\n"
            f"threshold={self.threshold!r}\n"
            f"polarity={self.polarity}\n"
        )


def fit_stump(ds: Dataset) -> Stump:
    tree = train_tree(ds, max_depth=1, min_leaf=1)
    root = tree.root
    if isinstance(root, Leaf):
        raise DataError("no threshold separates the classes (all values identical)")
    polarity = "above" if root.right.cls == 1 else "below"
    return Stump(root.threshold, root.feature, polarity)


# --------------------------------------------------------------------------
# one-sided detector


@dataclass(frozen=True)
class OneSidedModel:
    """Benign envelope: diagonal Mahalanobis distance against a quantile cut."""

    mean: np.ndarray
    var: np.ndarray
    tau: float
    q: float = 0.99

    def distance(self, X) -> np.ndarray:
        X = np.asarray(getattr(X, "values", X), dtype=float)
        if X.shape[-1] != len(self.mean):
            raise DataError(f"expected {len(self.mean)} features, got {X.shape[-1]}")
        return np.sqrt(np.sum((X - self.mean) ** 2 / self.var, axis=-1))

    def predict(self, x) -> int:
        return int(self.distance(x) > self.tau)

    def predict_many(self, X) -> np.ndarray:
        return (self.distance(np.atleast_2d(X)) > self.tau).astype(int)

    def to_text(self) -> str:
        def fmt(a):
            return ",".join(repr(float(v)) for v in a)

        return (
            "model=one_sided\n"
            f"mean={fmt(self.mean)}\n"
            f"var={fmt(self.var)}\n"
            f"tau={self.tau!r}\n"
            f"q={self.q!r}\n"
        )


def train_one_sided(benign_only: Dataset, q: float = 0.99, reg: float = 1e-9) -> OneSidedModel:
    """Fit on benign rows only; ``tau`` is the ``q`` quantile of training distances.

    Uses the inverted-CDF quantile, so at most ``ceil((1 - q) N)`` training
    rows fall outside the envelope.
    """
    X = benign_only.X[benign_only.y == 0] if np.any(benign_only.y == 0) else benign_only.X
    if len(X) < 10:
        raise DataError("one-sided training needs at least 10 benign rows")
    mean = X.mean(axis=0)
    var = X.var(axis=0) + reg
    d = np.sqrt(np.sum((X - mean) ** 2 / var, axis=1))
    tau = float(np.quantile(d, q, method="inverted_cdf"))
    if not tau > 0:
        raise NumericError("degenerate benign data: every training row is identical")
    return OneSidedModel(mean, var, tau, q)


# --------------------------------------------------------------------------
# persistence


def save_model(model, path) -> None:
    Path(path).write_text(model.to_text())


def _kv(text: str) -> dict:
    return dict(line.split("=", 1) for line in text.splitlines() if "=" in line)


def load_model(path):
    text = Path(path).read_text()
    if text.startswith("tree "):
        return DecisionTree.from_text(text)
    kv = _kv(text)
    kind = kv.get("model")
    if kind == "stump":
        return Stump(float(kv["threshold"]), int(kv["feature_index"]), kv["polarity"])
    if kind == "one_sided":
        arr = lambda s: np.array([float(v) for v in s.split(",")])  # noqa: E731
        return OneSidedModel(arr(kv["mean"]), arr(kv["var"]), float(kv["tau"]), float(kv["q"]))
    raise DataError(f"{path}: unrecognised model file")


def predict(model, fv) -> int:
    return int(model.predict(fv))


# --------------------------------------------------------------------------
# evaluation


@dataclass(frozen=True)
class Confusion:
    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0

    @classmethod
    def from_predictions(cls, y_true, y_pred) -> "Confusion":
        t = np.asarray(y_true, dtype=int)
        p = np.asarray(y_pred, dtype=int)
        return cls(
            int(np.sum((t == 1) & (p == 1))),
            int(np.sum((t == 0) & (p == 0))),
            int(np.sum((t == 0) & (p == 1))),
            int(np.sum((t == 1) & (p == 0))),
        )

    def __add__(self, other: "Confusion") -> "Confusion":
        return Confusion(self.tp + other.tp, self.tn + other.tn, self.fp + other.fp, self.fn + other.fn)

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    @property
    def accuracy(self) -> float:
        return (self.tp + self.tn) / self.total if self.total else float("nan")

    @property
    def recall(self) -> float:
        pos = self.tp + self.fn
        return self.tp / pos if pos else float("nan")


@dataclass(frozen=True)
class EvalResult:
    confusion: Confusion
    folds: tuple

    @property
    def accuracy(self) -> float:
        return self.confusion.accuracy


def stratified_folds(y, k: int, seed: int = 0) -> list:
    """Shuffle each class with ``seed`` and deal rows round-robin into ``k`` folds.

    Classes are dealt one after another without resetting the dealer, so
    fold sizes differ by at most one overall and per class.
    """
    y = np.asarray(y)
    rng = np.random.default_rng(seed)
    order = np.concatenate([rng.permutation(np.flatnonzero(y == c)) for c in np.unique(y)])
    assignment = np.empty(len(y), dtype=int)
    assignment[order] = np.arange(len(y)) % k
    return [np.flatnonzero(assignment == f) for f in range(k)]


def kfold_eval(ds: Dataset, k: int, trainer: Callable[[Dataset], object], seed: int = 0) -> EvalResult:
    if k < 2:
        raise DataError("k-fold needs k >= 2")
    if k > len(ds):
        raise DataError(f"k={k} exceeds the {len(ds)} rows")
    smallest = min(ds.class_counts().values())
    if k > smallest:
        raise DataError(f"k={k} exceeds the smallest class ({smallest} rows)")
    folds = stratified_folds(ds.y, k, seed)
    results = []
    for test_idx in folds:
        train_idx = np.setdiff1d(np.arange(len(ds)), test_idx)
        model = trainer(ds.subset(train_idx))
        pred = model.predict_many(ds.X[test_idx])
        results.append(Confusion.from_predictions(ds.y[test_idx], pred))
    total = sum(results, Confusion())
    return EvalResult(total, tuple(results))


def tree_trainer(max_depth: int = DEFAULT_MAX_DEPTH, min_leaf: int = DEFAULT_MIN_LEAF):
    return lambda ds: train_tree(ds, max_depth, min_leaf)


# --------------------------------------------------------------------------
# streaming


@dataclass(frozen=True)
class DetectionResult:
    verdicts: list  # (window_start_ns, verdict)
    dropped_samples: int
    compute_seconds: list  # per-window feature + inference time

    @property
    def labels(self) -> np.ndarray:
        return np.array([v for _, v in self.verdicts], dtype=int)


def windowed_detect(trace, window_ms: float, model, variant: str) -> DetectionResult:
    """Tumbling-window detection over a sample stream.

    Windows hold ``round(window_ms * rate / 1000)`` samples at the trace's
    nominal rate; an incomplete trailing window is dropped and counted.
    """
    n = feat.window_samples(window_ms, trace.nominal_rate)
    if n < 2:
        raise DataError("window shorter than two samples")
    verdicts, timings = [], []
    n_windows = len(trace) // n
    for w in range(n_windows):
        lo = w * n
        t0 = time.perf_counter()
        fv = feat.trace_features(trace.slice(lo, lo + n), variant)
        verdict = int(model.predict(fv))
        timings.append(time.perf_counter() - t0)
        verdicts.append((int(trace.t_ns[lo]), verdict))
    return DetectionResult(verdicts, len(trace) - n_windows * n, timings)


def dataset_from_rows(rows: Sequence, labels: Sequence, names: Sequence) -> Dataset:
    return Dataset(np.array(rows, dtype=float).reshape(len(rows), len(names)), np.asarray(labels), list(names))
