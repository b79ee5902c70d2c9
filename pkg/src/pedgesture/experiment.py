"""One subset's train/evaluate/rank/embed run, shared by the CLI and tests.

Every random choice below the global seed comes from ``derive_seeds``, so a
report's echoed ``seeds`` block is enough to reproduce it.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np

from . import __version__
from .clustering import TSNEParams, fit_class_gaussians, silhouette_score, tsne_embed
from .errors import DimensionMismatch, SchemaViolation
from .features import FEATURE_NAMES, SUBSETS, project, subset_names
from .forest import (
    ConfusionMatrix,
    ForestModel,
    ForestParams,
    LabeledDataset,
    evaluate,
    gini_importance,
    stratified_split,
    train_forest,
)
from .labels import GestureClass
from .seeding import mix

REPORT_SCHEMA = "pedgesture.report"
REPORT_SCHEMA_VERSION = 1
DEFAULT_TOP_K = 10

_SEED_TAGS = {"split": 0x5B1, "forest": 0xF0E, "tsne": 0x75E}


def derive_seeds(seed: int) -> dict[str, int]:
    """Stage seeds for one global seed. The corpus uses the global seed itself."""
    out = {"global": int(seed), "corpus": int(seed)}
    for name, tag in _SEED_TAGS.items():
        out[name] = mix(seed, tag) & 0xFFFFFFFF
    return out


@dataclass
class PipelineConfig:
    manifest: Optional[str] = None
    out: Optional[str] = None
    subset: str = "combined"
    test_fraction: float = 0.3
    forest: ForestParams = field(default_factory=ForestParams)
    tsne: TSNEParams = field(default_factory=TSNEParams)
    seed: int = 0
    top_k: int = DEFAULT_TOP_K
    confidence_threshold: float = 0.3

    def __post_init__(self):
        if not 0 < self.test_fraction < 1:
            raise ValueError(f"test fraction must be in (0, 1), got {self.test_fraction}")
        if self.subset not in SUBSETS + ("all",):
            raise ValueError(f"unknown subset {self.subset!r}")
        self.forest.validate()

    @property
    def subsets(self) -> tuple[str, ...]:
        return SUBSETS if self.subset == "all" else (self.subset,)


@dataclass
class AnalysisReport:
    subset: str
    accuracy: float
    confusion: ConfusionMatrix
    silhouette: float
    top_features: list[tuple[str, float]]
    seeds: dict
    params: dict
    manifest_hash: str = ""
    n_train: int = 0
    n_test: int = 0
    tool_version: str = __version__

    def recall(self, cls) -> float:
        return self.confusion.recall(cls)

    def to_dict(self) -> dict:
        return {
            "schema": REPORT_SCHEMA,
            "schema_version": REPORT_SCHEMA_VERSION,
            "tool_version": self.tool_version,
            "subset": self.subset,
            "manifest_hash": self.manifest_hash,
            "n_train": self.n_train,
            "n_test": self.n_test,
            "accuracy": self.accuracy,
            "classes": [c.slug for c in GestureClass],
            "confusion": {
                "counts": self.confusion.counts.tolist(),
                "row_normalized": self.confusion.row_normalized().tolist(),
            },
            "recall": {c.slug: self.confusion.recall(c) for c in GestureClass},
            "silhouette": self.silhouette,
            "top_features": [{"name": n, "importance": v} for n, v in self.top_features],
            "seeds": dict(self.seeds),
            "params": self.params,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "AnalysisReport":
        if d.get("schema") != REPORT_SCHEMA:
            raise ValueError(f"not an analysis report: schema={d.get('schema')!r}")
        return cls(
            subset=d["subset"],
            accuracy=float(d["accuracy"]),
            confusion=ConfusionMatrix(np.asarray(d["confusion"]["counts"], dtype=np.int64)),
            silhouette=float(d["silhouette"]),
            top_features=[(f["name"], float(f["importance"])) for f in d["top_features"]],
            seeds=dict(d["seeds"]),
            params=d["params"],
            manifest_hash=d.get("manifest_hash", ""),
            n_train=int(d.get("n_train", 0)),
            n_test=int(d.get("n_test", 0)),
            tool_version=d.get("tool_version", ""),
        )


@dataclass
class SubsetRun:
    report: AnalysisReport
    model: ForestModel
    embedding: object  # clustering.Embedding2D
    gaussians: list
    test_ids: list[str]


def _dataset(X, y, ids, subset) -> LabeledDataset:
    # accept either the full 76 columns or a matrix already cut to the subset
    names = subset_names(subset)
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] not in (len(names), len(FEATURE_NAMES)):
        raise DimensionMismatch(f"{subset} analysis needs {len(names)} or 76 columns, got shape {X.shape}")
    if X.shape[1] != len(names):
        X = project(X, subset)
    return LabeledDataset(X, np.asarray(y), list(ids), names)


def train_subset(X, y, ids, subset, seed=0, forest=ForestParams(), test_fraction=0.3, n_jobs=1):
    """Only the training half of ``run_subset``: same split, same forest."""
    seeds = derive_seeds(seed)
    data = _dataset(X, y, ids, subset)
    train, _ = stratified_split(data, test_fraction, seed=seeds["split"])
    return train_forest(train, replace(forest, master_seed=seeds["forest"]), n_jobs=n_jobs)


def run_subset(
    X: np.ndarray,
    y: np.ndarray,
    ids,
    subset: str,
    seed: int = 0,
    forest: ForestParams = ForestParams(),
    tsne: TSNEParams = TSNEParams(),
    test_fraction: float = 0.3,
    top_k: int = DEFAULT_TOP_K,
    manifest_hash: str = "",
    n_jobs: int = 1,
    model: Optional[ForestModel] = None,
) -> SubsetRun:
    """Split, train, evaluate, rank and embed one feature subset.

    ``X`` is the full 76-column matrix; the subset's columns are taken from it.
    The embedding covers every sample, not just the test side. A ``model``
    trained earlier on the same split is used as is instead of retraining.
    """
    seeds = derive_seeds(seed)
    data = _dataset(X, y, ids, subset)
    train, test = stratified_split(data, test_fraction, seed=seeds["split"])
    fparams = replace(forest, master_seed=seeds["forest"])
    if model is None:
        model = train_forest(train, fparams, n_jobs=n_jobs)
    elif list(model.feature_names) != data.feature_names:
        raise DimensionMismatch(f"model features do not match the {subset} subset")
    else:
        fparams = model.params
    cm = evaluate(model, test)
    emb = tsne_embed(data.X, seed=seeds["tsne"], ids=data.ids, labels=data.y, params=tsne)
    sil = silhouette_score(emb.points, data.y)
    report = AnalysisReport(
        subset=subset,
        accuracy=cm.accuracy,
        confusion=cm,
        silhouette=sil,
        top_features=gini_importance(model)[:top_k],
        seeds=seeds,
        params={
            "test_fraction": test_fraction,
            "forest": asdict(fparams),
            "tsne": asdict(tsne),
            "top_k": top_k,
        },
        manifest_hash=manifest_hash,
        n_train=len(train),
        n_test=len(test),
    )
    return SubsetRun(report, model, emb, fit_class_gaussians(emb), list(test.ids))


@dataclass
class FeatureTable:
    """Rows of the extract command's output: ids, labels and a feature matrix."""

    ids: list[str]
    labels: np.ndarray
    X: np.ndarray
    names: list[str]
    meta: dict = field(default_factory=dict)

    @property
    def subset(self) -> str:
        return self.meta.get("subset", "combined")

    def dumps(self) -> str:
        lines = ["# " + json.dumps(self.meta, sort_keys=True)]
        lines.append(",".join(["id", "label"] + list(self.names)))
        for i, lab, row in zip(self.ids, self.labels, self.X):
            cells = [i, GestureClass(int(lab)).slug] + [repr(float(v)) for v in row]
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "FeatureTable":
        lines = text.splitlines()
        meta = {}
        if lines and lines[0].startswith("#"):
            meta = json.loads(lines[0][1:])
            lines = lines[1:]
        if not lines:
            raise SchemaViolation("feature table has no header row")
        header = lines[0].split(",")
        if header[:2] != ["id", "label"]:
            raise SchemaViolation("feature table header must start with id,label")
        names = header[2:]
        ids, labels, rows = [], [], []
        for n, line in enumerate(lines[1:], start=2):
            cells = line.split(",")
            if len(cells) != len(header):
                raise SchemaViolation(f"line {n}: expected {len(header)} cells, got {len(cells)}")
            ids.append(cells[0])
            labels.append(int(GestureClass.parse(cells[1])))
            try:
                rows.append([float(c) for c in cells[2:]])
            except ValueError as exc:
                raise SchemaViolation(f"line {n}: {exc}") from None
        X = np.asarray(rows, dtype=float).reshape(len(rows), len(names))
        return cls(ids, np.asarray(labels, dtype=np.int64), X, names, meta)
