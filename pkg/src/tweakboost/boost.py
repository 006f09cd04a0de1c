"""Adaptive boosting (SAMME) over weighted CART trees.

Records everything the pruning analysis needs: stage weights alpha_k, staged
per-tree predictions, and the full post-normalization sample-weight
trajectory matrix (row 0 is the uniform w_0).
"""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .cart import Tree, apply_tree, fit_tree, predict_tree, tree_from_dict, tree_to_dict
from .data import Dataset, FeatureSchema
from . import cart

log = logging.getLogger(__name__)

__all__ = [
    "ERR_CLAMP",
    "MODEL_VERSION",
    "Ensemble",
    "alpha",
    "update_weights",
    "train_adaboost",
    "predict_ensemble",
    "ensemble_margins",
    "staged_predictions",
    "weight_trajectory",
    "model_to_dict",
    "model_from_dict",
    "save_model",
    "load_model",
]

# err is clamped into [ERR_CLAMP, 1-ERR_CLAMP] before the stage-weight formula,
# which is singular at err in {0,1}; separable data then yields one dominant
# tree instead of an infinite weight.
ERR_CLAMP = 1e-10

MODEL_VERSION = "tweakboost-model/1"


@dataclass
class Ensemble:
    """Ordered trees T_1..T_K with stage weights and training trajectories.

    trajectories[k][i] is instance i's normalized weight after round k
    (trajectories[0] is uniform), so the matrix has len(trees)+1 rows.
    Immutable by convention after training; reads are concurrency-safe.
    """

    trees: list[Tree]
    alphas: np.ndarray
    trajectories: np.ndarray
    staged_errors: np.ndarray
    schema: list[FeatureSchema]
    config: dict = field(default_factory=dict)
    n_classes: int = 2

    def __post_init__(self):
        self.alphas = np.asarray(self.alphas, dtype=np.float64)
        self.trajectories = np.asarray(self.trajectories, dtype=np.float64)
        self.staged_errors = np.asarray(self.staged_errors, dtype=np.float64)
        k = len(self.trees)
        if self.alphas.shape != (k,):
            raise ValueError(f"{k} trees but {self.alphas.shape[0]} alphas")
        if self.staged_errors.shape != (k,):
            raise ValueError(f"{k} trees but {self.staged_errors.shape[0]} staged errors")
        if self.trajectories.ndim != 2 or self.trajectories.shape[0] != k + 1:
            raise ValueError(
                f"trajectories must have K+1={k + 1} rows, got {self.trajectories.shape}"
            )
        if not np.all(np.abs(self.trajectories.sum(axis=1) - 1.0) <= 1e-9):
            raise ValueError("every trajectory row must sum to 1")
        if not np.all(np.isfinite(self.alphas)):
            raise ValueError("alphas must be finite")

    @property
    def k(self) -> int:
        return len(self.trees)

    @property
    def n_features(self) -> int:
        return len(self.schema)

    @property
    def n_train(self) -> int:
        return self.trajectories.shape[1]

    def check_arity(self, values: np.ndarray) -> None:
        if values.shape != (self.n_features,):
            raise ValueError(
                f"instance has shape {values.shape}, model expects ({self.n_features},)"
            )


def alpha(err_k: float, n_classes: int = 2) -> float:
    """Stage weight log((1-err)/err) + log(n_classes-1); err is clamped into
    [ERR_CLAMP, 1-ERR_CLAMP] first (clamping is logged). For binary
    classification the second term is log(1) = 0."""
    if n_classes < 2:
        raise ValueError(f"n_classes must be >= 2, got {n_classes}")
    e = min(max(err_k, ERR_CLAMP), 1.0 - ERR_CLAMP)
    if e != err_k:
        log.warning("stage error %r clamped to %r before weight formula", err_k, e)
    return math.log((1.0 - e) / e) + math.log(n_classes - 1)


def update_weights(w, miss, alpha_k: float) -> np.ndarray:
    """Multiply every missed instance's weight by e^{alpha_k}, then
    renormalize to sum 1. The renormalization is what downweights the
    correctly classified instances."""
    w = np.asarray(w, dtype=np.float64)
    miss = np.asarray(miss, dtype=bool)
    if w.shape != miss.shape:
        raise ValueError(f"weights shape {w.shape} != miss shape {miss.shape}")
    u = w * np.exp(alpha_k * miss)
    total = u.sum()
    if total <= 0:
        raise ValueError("degenerate weights: renormalization impossible")
    return u / total


def train_adaboost(ds: Dataset, K: int, max_depth: int, seed: int = 0,
                   min_leaf_weight: float = cart.MIN_LEAF_WEIGHT) -> Ensemble:
    """SAMME loop: fit tree on current weights, measure weighted error,
    weight the tree, upweight its mistakes, repeat.

    Halts early on a perfect round (err 0 after clamp: tree kept, weight
    huge) or a worse-than-chance round (alpha <= 0: tree discarded). The
    seed is recorded in the config for provenance; the loop itself is
    deterministic and consumes no randomness.
    """
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    for cls in (-1, 1):
        if not np.any(ds.labels == cls):
            raise ValueError(f"class {cls:+d} absent from training data")

    n = ds.n_rows
    w = np.full(n, 1.0 / n)
    trees: list[Tree] = []
    alphas: list[float] = []
    errors: list[float] = []
    rows = [w.copy()]

    for k in range(1, K + 1):
        tree = fit_tree(ds, w, max_depth=max_depth, min_leaf_weight=min_leaf_weight)
        preds = apply_tree(tree, ds.rows)
        miss = preds != ds.labels
        err = float(w[miss].sum())
        if err >= 0.5:
            log.warning(
                "round %d: weighted error %.6f >= 0.5 (stage weight <= 0); "
                "tree discarded, training halted", k, err,
            )
            break
        a = alpha(err, n_classes=2)
        trees.append(tree)
        alphas.append(a)
        errors.append(err)
        w = update_weights(w, miss, a)
        rows.append(w.copy())
        if err == 0.0:
            log.warning("round %d: perfect separation, training halted early", k)
            break

    return Ensemble(
        trees=trees,
        alphas=np.array(alphas),
        trajectories=np.array(rows),
        staged_errors=np.array(errors),
        schema=list(ds.schema),
        config={"K": K, "max_depth": max_depth, "seed": seed},
    )


def _margin(e: Ensemble, values: np.ndarray, upto: int) -> float:
    total = 0.0
    for k in range(upto):
        total += e.alphas[k] * predict_tree(e.trees[k], values)
    return total


def predict_ensemble(e: Ensemble, x, upto: int | None = None) -> tuple[int, float]:
    """Weighted-vote prediction and its margin sum(alpha_k * h_k(x)).

    A zero margin resolves to -1 (documented tie rule, mirroring the leaf
    rule). upto restricts the vote to the first `upto` trees.
    """
    values = cart._values_of(x)
    e.check_arity(values)
    if upto is None:
        upto = e.k
    elif not 1 <= upto <= e.k:
        raise ValueError(f"upto must be in [1, {e.k}], got {upto}")
    m = _margin(e, values, upto)
    return (1 if m > 0 else -1), m


def ensemble_margins(e: Ensemble, X: np.ndarray, upto: int | None = None) -> np.ndarray:
    """Vectorized margins for a matrix of instances."""
    X = np.asarray(X, dtype=np.float64)
    if upto is None:
        upto = e.k
    m = np.zeros(X.shape[0])
    for k in range(upto):
        m += e.alphas[k] * apply_tree(e.trees[k], X)
    return m


def staged_predictions(e: Ensemble, x) -> np.ndarray:
    """Per-tree prediction h_k(x) for every round, length K."""
    values = cart._values_of(x)
    e.check_arity(values)
    return np.array([predict_tree(t, values) for t in e.trees], dtype=np.int64)


def weight_trajectory(e: Ensemble, i: int) -> np.ndarray:
    """Training instance i's weight series w_0..w_K, the data behind the
    sample-weight evolution plots."""
    n = e.trajectories.shape[1]
    if not 0 <= i < n:
        raise IndexError(f"training instance {i} out of range [0, {n})")
    return e.trajectories[:, i].copy()


def model_to_dict(e: Ensemble) -> dict:
    """Single-document JSON form; key order fixed for byte-stable output."""
    return {
        "version": MODEL_VERSION,
        "schema": [
            {
                "name": f.name,
                "index": f.index,
                "kind": f.kind,
                "min": f.min,
                "max": f.max,
                "mean": f.mean,
                "stddev": f.stddev,
            }
            for f in e.schema
        ],
        "alphas": e.alphas.tolist(),
        "trees": [tree_to_dict(t) for t in e.trees],
        "trajectories": e.trajectories.tolist(),
        "staged_errors": e.staged_errors.tolist(),
        "config": {
            "K": e.config.get("K"),
            "max_depth": e.config.get("max_depth"),
            "seed": e.config.get("seed"),
        },
    }


def model_from_dict(d: dict) -> Ensemble:
    version = d.get("version")
    if version != MODEL_VERSION:
        raise ValueError(f"unsupported model version {version!r}, expected {MODEL_VERSION!r}")
    schema = [
        FeatureSchema(
            name=s["name"],
            index=int(s["index"]),
            kind=s.get("kind", "numeric"),
            min=float(s["min"]),
            max=float(s["max"]),
            mean=float(s["mean"]),
            stddev=float(s["stddev"]),
        )
        for s in d["schema"]
    ]
    return Ensemble(
        trees=[tree_from_dict(t) for t in d["trees"]],
        alphas=np.array(d["alphas"], dtype=np.float64),
        trajectories=np.array(d["trajectories"], dtype=np.float64),
        staged_errors=np.array(d["staged_errors"], dtype=np.float64),
        schema=schema,
        config=dict(d["config"]),
    )


def save_model(e: Ensemble, path: str | os.PathLike) -> None:
    """Atomic write: temp file in the target directory, then rename."""
    text = json.dumps(model_to_dict(e))
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def load_model(path: str | os.PathLike) -> Ensemble:
    with open(path, "r", encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))
