"""Random forest with Gini splits, built from scratch.

Trees are stored as flat node arrays (feature, threshold, left, right,
class counts) so they serialize directly and predict without recursion.
A sample goes left when ``x[feature] <= threshold``.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .errors import (
    ClassTooSmall,
    DimensionMismatch,
    EmptyTestSet,
    EmptyTrainingSet,
    NonFiniteInput,
    VersionUnsupported,
)
from .labels import N_CLASSES, GestureClass
from .seeding import rng_for

MODEL_SCHEMA = "pedgesture.forest"
MODEL_SCHEMA_VERSION = 1


@dataclass
class LabeledDataset:
    X: np.ndarray
    y: np.ndarray
    ids: list[str]
    feature_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y, dtype=np.int64)
        self.ids = [str(i) for i in self.ids]
        if self.X.ndim != 2:
            raise DimensionMismatch(f"feature matrix must be 2-D, got shape {self.X.shape}")
        if not (len(self.X) == len(self.y) == len(self.ids)):
            raise DimensionMismatch(
                f"rows ({len(self.X)}), labels ({len(self.y)}) and ids ({len(self.ids)}) differ"
            )
        if not self.feature_names:
            self.feature_names = [f"f{j}" for j in range(self.X.shape[1])]
        if len(self.feature_names) != self.X.shape[1]:
            raise DimensionMismatch("feature_names length does not match column count")
        if len(self.y) and (self.y.min() < 0 or self.y.max() >= N_CLASSES):
            raise ValueError(f"labels must be class codes in 0..{N_CLASSES - 1}")

    def __len__(self):
        return len(self.y)

    def subset(self, rows) -> "LabeledDataset":
        rows = np.asarray(rows, dtype=np.int64)
        return LabeledDataset(
            self.X[rows], self.y[rows], [self.ids[i] for i in rows], list(self.feature_names)
        )

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.y, minlength=N_CLASSES)


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 200
    max_depth: Optional[int] = None
    min_samples_leaf: int = 1
    mtry: Optional[int] = None  # None -> floor(sqrt(d))
    bootstrap: bool = True
    master_seed: int = 0

    def resolved_mtry(self, d: int) -> int:
        m = self.mtry if self.mtry is not None else max(1, math.isqrt(d))
        if not 1 <= m <= d:
            raise ValueError(f"mtry must be in [1, {d}], got {m}")
        return m

    def validate(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")


@dataclass
class Tree:
    feature: np.ndarray  # int, -1 at leaves
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray  # (n_nodes, n_classes) class counts
    n_samples: np.ndarray
    impurity: np.ndarray

    @property
    def node_count(self) -> int:
        return len(self.feature)

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by every row of ``X``."""
        node = np.zeros(len(X), dtype=np.int64)
        rows = np.arange(len(X))
        active = self.feature[node] >= 0
        while active.any():
            r = rows[active]
            nd = node[r]
            go_left = X[r, self.feature[nd]] <= self.threshold[nd]
            node[r] = np.where(go_left, self.left[nd], self.right[nd])
            active = self.feature[node] >= 0
        return node

    def leaf_class(self) -> np.ndarray:
        # argmax picks the lowest class code on ties
        return np.argmax(self.value, axis=1)

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": [float(t) for t in self.threshold],
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.astype(np.int64).tolist(),
            "n_samples": self.n_samples.tolist(),
            "impurity": [float(v) for v in self.impurity],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        return cls(
            feature=np.asarray(d["feature"], dtype=np.int64),
            threshold=np.asarray(d["threshold"], dtype=float),
            left=np.asarray(d["left"], dtype=np.int64),
            right=np.asarray(d["right"], dtype=np.int64),
            value=np.asarray(d["value"], dtype=float).reshape(-1, N_CLASSES),
            n_samples=np.asarray(d["n_samples"], dtype=np.int64),
            impurity=np.asarray(d["impurity"], dtype=float),
        )


def _gini(counts, n):
    p = counts / n
    return 1.0 - float(np.sum(p * p))


def _best_split(X, y_onehot, rows, features, min_leaf):
    """Best (feature, threshold) over ``features`` for the samples ``rows``.

    Maximizes sum(cl^2)/nl + sum(cr^2)/nr, which is equivalent to maximizing the
    Gini decrease. Scores depend only on integer counts, so equal partitions tie
    exactly and the (feature index, threshold) tie-break is well defined.
    Returns None when no feature admits a valid split.
    """
    m = len(rows)
    feats = np.asarray(features)
    vals = X[np.ix_(rows, feats)]  # (m, f)
    order = np.argsort(vals, axis=0, kind="stable")
    sv = np.take_along_axis(vals, order, axis=0)
    oh = y_onehot[rows][order]  # (m, f, K)
    left = np.cumsum(oh, axis=0)[:-1]  # (m-1, f, K)
    total = left[-1] + oh[-1]
    right = total[None] - left
    nl = np.arange(1, m, dtype=float)[:, None]
    nr = m - nl
    valid = sv[:-1] < sv[1:]
    if min_leaf > 1:
        valid &= (nl >= min_leaf) & (nr >= min_leaf)
    if not valid.any():
        return None
    score = (left * left).sum(axis=2) / nl + (right * right).sum(axis=2) / nr
    score = np.where(valid, score, -np.inf)
    best = score.max()
    pos, col = np.nonzero(score == best)
    # lowest feature index first, then lowest threshold (lowest position)
    k = np.lexsort((pos, feats[col]))[0]
    i, c = pos[k], col[k]
    lo, hi = sv[i, c], sv[i + 1, c]
    thr = lo + (hi - lo) / 2.0
    if not thr < hi:
        thr = lo
    return int(feats[c]), float(thr)


def _grow_tree(X, y, params: ForestParams, tree_index: int) -> Tree:
    n, d = X.shape
    rng = rng_for(params.master_seed, tree_index)
    rows = rng.integers(0, n, size=n) if params.bootstrap else np.arange(n)
    mtry = params.resolved_mtry(d)
    y_onehot = np.eye(N_CLASSES)[y]
    max_depth = params.max_depth if params.max_depth is not None else np.inf
    min_leaf = params.min_samples_leaf

    feature, threshold, left, right, value, n_samples, impurity = [], [], [], [], [], [], []

    def new_node(r):
        counts = np.bincount(y[r], minlength=N_CLASSES).astype(float)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(counts)
        n_samples.append(len(r))
        impurity.append(_gini(counts, len(r)))
        return len(feature) - 1

    stack = [(new_node(rows), rows, 0)]
    while stack:
        node, r, depth = stack.pop()
        if impurity[node] <= 0.0 or depth >= max_depth or len(r) < 2 * min_leaf:
            continue
        # draw the full permutation so later fallback candidates come from the same stream
        perm = rng.permutation(d)
        split = None
        for start in range(0, d, mtry):
            split = _best_split(X, y_onehot, r, perm[start:start + mtry], min_leaf)
            if split is not None:
                break
        if split is None:
            continue
        f, t = split
        mask = X[r, f] <= t
        feature[node], threshold[node] = f, t
        li = new_node(r[mask])
        ri = new_node(r[~mask])
        left[node], right[node] = li, ri
        # right pushed first so the left subtree is expanded first
        stack.append((ri, r[~mask], depth + 1))
        stack.append((li, r[mask], depth + 1))

    return Tree(
        feature=np.asarray(feature, dtype=np.int64),
        threshold=np.asarray(threshold, dtype=float),
        left=np.asarray(left, dtype=np.int64),
        right=np.asarray(right, dtype=np.int64),
        value=np.asarray(value, dtype=float),
        n_samples=np.asarray(n_samples, dtype=np.int64),
        impurity=np.asarray(impurity, dtype=float),
    )


def _tree_importance(tree: Tree, d: int) -> np.ndarray:
    imp = np.zeros(d)
    root_n = tree.n_samples[0]
    for k in np.flatnonzero(tree.feature >= 0):
        n, l, r = tree.n_samples[k], tree.left[k], tree.right[k]
        decrease = tree.impurity[k] - (
            tree.n_samples[l] / n * tree.impurity[l] + tree.n_samples[r] / n * tree.impurity[r]
        )
        imp[tree.feature[k]] += n / root_n * decrease
    return imp


@dataclass
class ForestModel:
    trees: list[Tree]
    params: ForestParams
    feature_names: list[str]
    importances: np.ndarray
    train_ids: list[str] = field(default_factory=list)

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def votes(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None]
        if X.shape[1] != self.n_features:
            raise DimensionMismatch(
                f"model expects {self.n_features} features, got {X.shape[1]}"
            )
        out = np.zeros((len(X), N_CLASSES), dtype=np.int64)
        rows = np.arange(len(X))
        for tree in self.trees:
            out[rows, tree.leaf_class()[tree.apply(X)]] += 1
        return out

    def predict_many(self, X: np.ndarray) -> np.ndarray:
        return np.argmax(self.votes(X), axis=1)

    def to_dict(self) -> dict:
        return {
            "schema": MODEL_SCHEMA,
            "schema_version": MODEL_SCHEMA_VERSION,
            "params": asdict(self.params),
            "feature_names": list(self.feature_names),
            "importances": [float(v) for v in self.importances],
            "train_ids": list(self.train_ids),
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ForestModel":
        if d.get("schema") != MODEL_SCHEMA:
            raise VersionUnsupported(f"not a forest model document: schema={d.get('schema')!r}")
        if d.get("schema_version") != MODEL_SCHEMA_VERSION:
            raise VersionUnsupported(f"unsupported model schema_version {d.get('schema_version')!r}")
        return cls(
            trees=[Tree.from_dict(t) for t in d["trees"]],
            params=ForestParams(**d["params"]),
            feature_names=list(d["feature_names"]),
            importances=np.asarray(d["importances"], dtype=float),
            train_ids=list(d.get("train_ids", [])),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    @classmethod
    def loads(cls, text: str) -> "ForestModel":
        return cls.from_dict(json.loads(text))


def train_forest(train: LabeledDataset, params: ForestParams = ForestParams(), n_jobs: int = 1) -> ForestModel:
    """Fit ``params.n_trees`` Gini trees.

    Tree ``k`` draws everything (bootstrap rows and candidate features) from its
    own generator seeded with ``mix(master_seed, k)``, so ``n_jobs`` changes only
    the wall-clock time, never the model.
    """
    params.validate()
    if len(train) == 0:
        raise EmptyTrainingSet("cannot train on an empty dataset")
    X, y = train.X, train.y
    if not np.all(np.isfinite(X)):
        raise NonFiniteInput("training features must be finite")
    params.resolved_mtry(X.shape[1])

    def build(k):
        return _grow_tree(X, y, params, k)

    if n_jobs == 1:
        trees = [build(k) for k in range(params.n_trees)]
    else:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            trees = list(pool.map(build, range(params.n_trees)))

    d = X.shape[1]
    imp = np.mean([_tree_importance(t, d) for t in trees], axis=0)
    total = imp.sum()
    if total > 0:
        imp = imp / total
    return ForestModel(trees, params, list(train.feature_names), imp, list(train.ids))


def predict(model: ForestModel, x) -> tuple[GestureClass, np.ndarray]:
    """Majority vote over trees; ties go to the lowest class code."""
    values = getattr(x, "values", x)
    values = np.asarray(values, dtype=float)
    if values.ndim != 1:
        raise DimensionMismatch("predict takes one feature vector; use predict_many for matrices")
    votes = model.votes(values)[0]
    return GestureClass(int(np.argmax(votes))), votes


def gini_importance(model: ForestModel) -> list[tuple[str, float]]:
    order = sorted(range(model.n_features), key=lambda j: (-model.importances[j], j))
    return [(model.feature_names[j], float(model.importances[j])) for j in order]


@dataclass(frozen=True)
class ConfusionMatrix:
    counts: np.ndarray  # rows: true class, columns: predicted

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def accuracy(self) -> float:
        return int(np.trace(self.counts)) / self.total

    def row_normalized(self) -> np.ndarray:
        rows = self.counts.sum(axis=1, keepdims=True)
        return np.divide(self.counts, rows, out=np.zeros(self.counts.shape), where=rows > 0)

    def recall(self, cls) -> float:
        row = self.counts[int(cls)]
        return float(row[int(cls)] / row.sum()) if row.sum() else float("nan")


def confusion_matrix(y_true, y_pred) -> ConfusionMatrix:
    counts = np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64)
    np.add.at(counts, (np.asarray(y_true), np.asarray(y_pred)), 1)
    return ConfusionMatrix(counts)


def evaluate(model: ForestModel, test: LabeledDataset) -> ConfusionMatrix:
    if len(test) == 0:
        raise EmptyTestSet("cannot evaluate on an empty test set")
    return confusion_matrix(test.y, model.predict_many(test.X))


def _round_half_up(x: float) -> int:
    # tolerance absorbs binary representation error in products like 0.3 * 5
    return int(math.floor(x + 0.5 + 1e-9))


def stratified_split(
    data: LabeledDataset, test_fraction: float = 0.3, seed: int = 0
) -> tuple[LabeledDataset, LabeledDataset]:
    """Per class, send round-half-up(fraction * count) samples to the test side.

    Samples of a class are ordered by id, shuffled with a class-specific
    generator derived from ``seed``, and the first ones become test samples.
    Both sides keep at least one sample of every class.
    """
    if not 0 < test_fraction < 1:
        raise ValueError(f"test_fraction must be in (0, 1), got {test_fraction}")
    train_rows, test_rows = [], []
    for cls in range(N_CLASSES):
        rows = np.flatnonzero(data.y == cls)
        if len(rows) == 0:
            continue
        if len(rows) < 2:
            raise ClassTooSmall(
                f"class {GestureClass(cls).slug} has {len(rows)} sample; need >= 2 to split"
            )
        rows = sorted(rows, key=lambda i: data.ids[i])
        n_test = min(max(_round_half_up(test_fraction * len(rows)), 1), len(rows) - 1)
        shuffled = rng_for(seed, cls).permutation(len(rows))
        test_rows.extend(rows[i] for i in shuffled[:n_test])
        train_rows.extend(rows[i] for i in shuffled[n_test:])
    return data.subset(sorted(train_rows)), data.subset(sorted(test_rows))
