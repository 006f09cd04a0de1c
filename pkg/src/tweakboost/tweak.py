"""Counterfactual engine: epsilon-transformation over sign-opposite paths.

Given an instance and the ensemble's current verdict s, every tree that
agrees with s contributes its opposite-sign paths as flip candidates: each
violated threshold condition of such a path is tweaked to sit epsilon inside
the path's feasible interval, the FULL ensemble is evaluated on the tweaked
vector (truncation narrows the search, never the verdict), and the closest
flipping candidate is the counterfactual. Both symmetric cases are handled:
positive paths in negative-voting trees and negative paths in positive ones.
"""

from __future__ import annotations

import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .boost import Ensemble, ensemble_margins, predict_ensemble
from .cart import FeasibleBox, Path, enumerate_paths, path_to_box
from .data import FeatureSchema, FeatureStat
from . import cart

log = logging.getLogger(__name__)

__all__ = [
    "GRID_GUARD",
    "NORMS",
    "GridGuardError",
    "EpsilonPolicy",
    "Candidate",
    "Counterfactual",
    "NotFound",
    "epsilon_transform",
    "generate_candidates",
    "distance",
    "explain",
    "brute_force_oracle",
    "oracle_grid",
]

GRID_GUARD = 10**6  # max enumerable grid points for the brute-force oracle

NORMS = ("L2_std", "L1_std", "L0")


class GridGuardError(ValueError):
    """Oracle grid larger than the enumeration guard allows."""


@dataclass(frozen=True)
class EpsilonPolicy:
    """How far inside a threshold a tweaked value lands.

    range_scaled: per-feature eps = value * (max - min) from the training
    schema (constant features fall back to the raw value). absolute: the
    same eps for every feature.
    """

    mode: str = "range_scaled"
    value: float = 0.01

    def __post_init__(self):
        if self.mode not in ("absolute", "range_scaled"):
            raise ValueError(f"epsilon mode must be absolute|range_scaled, got {self.mode!r}")
        if not self.value > 0:
            raise ValueError(f"epsilon value must be > 0, got {self.value}")

    def per_feature(self, schema: list[FeatureSchema]) -> np.ndarray:
        if self.mode == "absolute":
            return np.full(len(schema), self.value)
        eps = np.array([self.value * (f.max - f.min) for f in schema])
        eps[eps == 0.0] = self.value
        return eps


@dataclass(frozen=True)
class Candidate:
    """A tweaked instance satisfying one opposite-sign path, with provenance."""

    values: np.ndarray
    tree_index: int
    path_index: int
    tweaked_features: frozenset[int]
    ensemble_verdict: int
    distance: float


@dataclass(frozen=True)
class Counterfactual:
    original: np.ndarray
    transformed: np.ndarray
    delta: dict[int, tuple[float, float]]  # feature -> (old, new)
    distance: float
    n_candidates_evaluated: int
    k_prime_used: int | None = None
    source_tree: int | None = None
    source_path: int | None = None


@dataclass(frozen=True)
class NotFound:
    """No candidate flipped the full ensemble. An ordinary outcome: single-path
    epsilon tweaks need not overturn a strong vote."""

    n_candidates_evaluated: int
    k_prime_used: int | None = None
    message: str = (
        "no candidate flipped the ensemble; consider raising epsilon, "
        "dropping the K' truncation, or both"
    )


def _stat_arrays(stats) -> tuple[np.ndarray, np.ndarray]:
    """Accepts a FeatureStat table or a schema list; returns (sigma, included)."""
    sigma, included = [], []
    for s in stats:
        if isinstance(s, FeatureStat):
            sigma.append(s.stddev)
            included.append(not s.excluded)
        else:  # FeatureSchema
            sigma.append(s.stddev)
            included.append(not s.constant)
    return np.asarray(sigma, dtype=np.float64), np.asarray(included, dtype=bool)


def distance(x, x_cand, stats, norm: str = "L2_std") -> float:
    """Distance between an instance and a candidate under training stats.

    L2_std: sqrt(sum ((dx/sigma)^2)); L1_std: sum |dx|/sigma; L0: count of
    changed features. Constant features are excluded throughout.
    """
    if norm not in NORMS:
        raise ValueError(f"norm must be one of {NORMS}, got {norm!r}")
    a = cart._values_of(x)
    b = np.asarray(x_cand, dtype=np.float64)
    sigma, included = _stat_arrays(stats)
    d = (b - a)[included]
    if norm == "L0":
        return float(np.count_nonzero(d))
    z = d / sigma[included]
    if norm == "L1_std":
        return float(np.abs(z).sum())
    return float(np.sqrt((z**2).sum()))


def epsilon_transform(x, p: Path | FeasibleBox, eps_per_feature: np.ndarray,
                      n_features: int | None = None):
    """Minimal per-feature edit of x that satisfies the path.

    Features already inside the path's interval are left alone; a violated
    feature is set to the nearest epsilon-inside point (upper bound - eps
    when violating from above, lower bound + eps from below). Returns
    (values, tweaked_feature_set) or None when some required interval is too
    narrow (width <= eps) for an epsilon-inside point to exist.
    """
    values = cart._values_of(x).copy()
    if isinstance(p, Path):
        if n_features is None:
            n_features = values.shape[0]
        box = path_to_box(p, n_features)
    else:
        box = p
    if values.shape[0] != box.lower.shape[0]:
        raise ValueError(
            f"instance arity {values.shape[0]} != box arity {box.lower.shape[0]}"
        )
    if not box.feasible:
        raise ValueError(f"path is infeasible on features {box.infeasible_features}")
    tweaked: set[int] = set()
    for f in range(values.shape[0]):
        lo, hi = box.lower[f], box.upper[f]
        v = values[f]
        if lo < v <= hi:
            continue
        if hi - lo <= eps_per_feature[f]:
            return None  # no epsilon-inside point in this interval
        values[f] = hi - eps_per_feature[f] if v > hi else lo + eps_per_feature[f]
        tweaked.add(f)
    return values, frozenset(tweaked)


def generate_candidates(e: Ensemble, x, eps: EpsilonPolicy,
                        k_prime: int | None = None, norm: str = "L2_std",
                        threads: int = 1) -> list[Candidate]:
    """All epsilon-transform candidates from opposite-sign paths of trees
    that currently agree with the ensemble verdict, restricted to the first
    k_prime trees when given. Every candidate's verdict comes from the FULL
    ensemble. Deterministic ascending (tree, path) order.
    """
    values = cart._values_of(x)
    e.check_arity(values)
    s, _ = predict_ensemble(e, values)
    if k_prime is not None and not 1 <= k_prime <= e.k:
        raise ValueError(f"k_prime must be in [1, {e.k}], got {k_prime}")
    limit = e.k if k_prime is None else k_prime
    eps_vec = eps.per_feature(e.schema)

    def tree_candidates(k: int) -> list[tuple[int, int, np.ndarray, frozenset]]:
        from .cart import predict_tree

        if predict_tree(e.trees[k], values) != s:
            return []
        out = []
        for path in enumerate_paths(e.trees[k], -s, tree_index=k):
            box = path_to_box(path, e.n_features)
            if not box.feasible:
                log.debug("tree %d path %d infeasible, skipped", k, path.path_index)
                continue
            res = epsilon_transform(values, box, eps_vec)
            if res is None:
                continue
            out.append((k, path.path_index, res[0], res[1]))
        return out

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            per_tree = list(pool.map(tree_candidates, range(limit)))
    else:
        per_tree = [tree_candidates(k) for k in range(limit)]
    raw = [item for sub in per_tree for item in sub]  # ascending (k, j) by construction

    if not raw:
        return []
    mat = np.stack([r[2] for r in raw])
    margins = ensemble_margins(e, mat)  # full ensemble, never truncated
    verdicts = np.where(margins > 0, 1, -1)
    return [
        Candidate(
            values=vals,
            tree_index=k,
            path_index=j,
            tweaked_features=tw,
            ensemble_verdict=int(verdicts[i]),
            distance=distance(values, vals, e.schema, norm),
        )
        for i, (k, j, vals, tw) in enumerate(raw)
    ]


def explain(e: Ensemble, x, eps: EpsilonPolicy | None = None,
            norm: str = "L2_std", k_prime: int | None = None,
            target: int | None = None, label: int | None = None,
            threads: int = 1) -> Counterfactual | NotFound:
    """Closest flipping candidate, ties broken by (lower tree, lower path).

    target, when given, must be the opposite of the current prediction.
    label, when given, asserts provenance: the instance must be correctly
    predicted (the classic setting explains true negatives / true positives).
    """
    eps = eps or EpsilonPolicy()
    values = cart._values_of(x)
    e.check_arity(values)
    pred, _ = predict_ensemble(e, values)
    if target is not None and target == pred:
        raise ValueError(
            f"instance is already predicted {pred:+d}; the request must target the opposite class"
        )
    if label is not None and label != pred:
        raise ValueError(
            f"provenance assertion failed: label {label:+d} but prediction {pred:+d}"
        )
    cands = generate_candidates(e, values, eps, k_prime=k_prime, norm=norm, threads=threads)
    flipped = [c for c in cands if c.ensemble_verdict != pred]
    if not flipped:
        return NotFound(n_candidates_evaluated=len(cands), k_prime_used=k_prime)
    best = min(flipped, key=lambda c: (c.distance, c.tree_index, c.path_index))
    delta = {
        int(f): (float(values[f]), float(best.values[f]))
        for f in sorted(best.tweaked_features)
        if best.values[f] != values[f]
    }
    return Counterfactual(
        original=values.copy(),
        transformed=best.values.copy(),
        delta=delta,
        distance=best.distance,
        n_candidates_evaluated=len(cands),
        k_prime_used=k_prime,
        source_tree=best.tree_index,
        source_path=best.path_index,
    )


def brute_force_oracle(e: Ensemble, x, grid: list[np.ndarray],
                       norm: str = "L2_std") -> Counterfactual | NotFound:
    """Independent verifier: exhaustively evaluate every grid point that
    differs from x and return the flipping point of minimum distance.
    Used only by tests and the verify command."""
    values = cart._values_of(x)
    e.check_arity(values)
    if len(grid) != e.n_features:
        raise ValueError(f"grid has {len(grid)} axes, model expects {e.n_features}")
    size = 1
    for axis in grid:
        size *= len(axis)
        if size > GRID_GUARD:
            raise GridGuardError(f"grid size exceeds the {GRID_GUARD} point guard")
    pred, _ = predict_ensemble(e, values)
    pts = np.array(list(itertools.product(*[np.asarray(a, dtype=np.float64) for a in grid])))
    differs = np.any(pts != values, axis=1)
    pts = pts[differs]
    if pts.shape[0] == 0:
        return NotFound(n_candidates_evaluated=0)
    margins = ensemble_margins(e, pts)
    verdicts = np.where(margins > 0, 1, -1)
    flip = verdicts != pred
    n_eval = int(pts.shape[0])
    if not np.any(flip):
        return NotFound(n_candidates_evaluated=n_eval)
    flipping = pts[flip]
    dists = np.array([distance(values, p, e.schema, norm) for p in flipping])
    i = int(np.argmin(dists))  # first minimum: deterministic in product order
    bestv = flipping[i]
    delta = {
        int(f): (float(values[f]), float(bestv[f]))
        for f in range(e.n_features)
        if bestv[f] != values[f]
    }
    return Counterfactual(
        original=values.copy(),
        transformed=bestv.copy(),
        delta=delta,
        distance=float(dists[i]),
        n_candidates_evaluated=n_eval,
    )


def oracle_grid(e: Ensemble, x, eps: EpsilonPolicy, resolution: int = 50) -> list[np.ndarray]:
    """Per-feature grids for the oracle that dominate the explain search:
    each axis carries the instance's own value and every epsilon-inside
    point of every threshold on that feature, padded with uniform fill over
    the training range up to `resolution` values."""
    values = cart._values_of(x)
    e.check_arity(values)
    eps_vec = eps.per_feature(e.schema)
    thresholds: list[set[float]] = [set() for _ in range(e.n_features)]

    def collect(node):
        from .cart import Internal

        if isinstance(node, Internal):
            thresholds[node.feature].add(node.threshold)
            collect(node.left)
            collect(node.right)

    for t in e.trees:
        collect(t.root)

    grid = []
    for f in range(e.n_features):
        pts = {float(values[f])}
        for thr in thresholds[f]:
            pts.add(float(thr - eps_vec[f]))
            pts.add(float(thr + eps_vec[f]))
        fill = max(0, resolution - len(pts))
        if fill:
            lo, hi = e.schema[f].min, e.schema[f].max
            if hi <= lo:
                hi = lo + 1.0
            pts.update(float(v) for v in np.linspace(lo, hi, fill))
        grid.append(np.array(sorted(pts)))
    return grid
