"""Coefficient-based feature ranking and the two-penalty synthesis.

A ranking aggregates each feature's per-class coefficients into one score
(mean of absolute values by default), sorts descending, and records the
order.  The "common" set intersects the top MAX_L1 features of the L1
ranking with the top MAX_L2 of the L2 ranking; members keep both ranks and
are listed by ascending L1 rank.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .ingest import Dataset, ScalerParams, SplitPair
from .linear import fit as lr_fit
from .linear import predict as lr_predict
from .metrics import accuracy, confusion
from .optim import PenaltySpec, SagaConfig
from .trees import ForestParams, TreeParams, dt_fit, dt_predict, rf_fit, rf_predict

AGGREGATIONS = ("mean-abs", "max-abs", "l2-norm", "mean-signed")
MODEL_FAMILIES = ("lr-l1", "lr-l2", "rf", "dt")


@dataclass
class FeatureRanking:
    """Feature indices with aggregated scores, best first."""

    ordered: list[tuple[int, float]]
    aggregation: str
    penalty_kind: str

    def top(self, k: int) -> list[int]:
        return [idx for idx, _ in self.ordered[:k]]

    def rank_of(self, feature: int) -> int:
        """1-based rank of a feature index."""
        for pos, (idx, _) in enumerate(self.ordered, start=1):
            if idx == feature:
                return pos
        raise KeyError(feature)

    def __len__(self) -> int:
        return len(self.ordered)


@dataclass
class AccuracyCurve:
    points: list[tuple[int, float]]  # (k, test accuracy), k strictly increasing
    model_family: str
    ranking_used: str


@dataclass
class CommonFeatureSet:
    """(feature index, L1 rank, L2 rank), ordered by ascending L1 rank."""

    entries: list[tuple[int, int, int]]

    def indices(self) -> list[int]:
        return [idx for idx, _, _ in self.entries]

    def __len__(self) -> int:
        return len(self.entries)


def rank_features(coeffs: np.ndarray, aggregation: str = "mean-abs", penalty_kind: str = "") -> FeatureRanking:
    """Rank features by aggregated coefficient magnitude, descending.

    `mean-signed` ranks by the signed mean instead, for experiments that
    need fidelity to raw coefficient values; the absolute modes are the
    ones whose scores are guaranteed non-negative and non-increasing.
    """
    coeffs = np.asarray(coeffs, dtype=np.float64)
    if coeffs.ndim != 2 or coeffs.size == 0:
        raise ValueError("coefficient matrix must be non-empty and 2-D")
    if not np.isfinite(coeffs).all():
        raise ValueError("coefficient matrix must be finite")
    if aggregation == "mean-abs":
        scores = np.abs(coeffs).mean(axis=0)
    elif aggregation == "max-abs":
        scores = np.abs(coeffs).max(axis=0)
    elif aggregation == "l2-norm":
        scores = np.sqrt((coeffs**2).sum(axis=0))
    elif aggregation == "mean-signed":
        scores = coeffs.mean(axis=0)
    else:
        raise ValueError(f"unknown aggregation {aggregation!r}")
    order = np.argsort(-scores, kind="stable")  # ties keep the lower index first
    return FeatureRanking(
        ordered=[(int(i), float(scores[i])) for i in order],
        aggregation=aggregation,
        penalty_kind=penalty_kind,
    )


def _fit_predict(
    family: str,
    train: Dataset,
    test: Dataset,
    subset: list[int],
    *,
    penalty_c: float,
    solver: SagaConfig,
    tree: TreeParams,
    forest: ForestParams,
    scaler: ScalerParams | None,
    seed: int,
) -> np.ndarray:
    """Fit one model family on the subset columns and predict the test rows."""
    if family in ("lr-l1", "lr-l2"):
        penalty = PenaltySpec(kind=family.split("-")[1], inverse_strength_c=penalty_c)
        cfg = SagaConfig(
            max_epochs=solver.max_epochs,
            step_size=solver.step_size,
            tolerance=solver.tolerance,
            seed=seed,
        )
        model = lr_fit(train, subset, penalty, cfg, scaler=scaler)
        return lr_predict(model, test.X)
    cols = list(subset)
    sliced_train = Dataset(
        X=train.X[:, cols],
        y=train.y,
        feature_names=[train.feature_names[i] for i in cols],
        class_names=list(train.class_names),
    )
    Xtest = test.X[:, cols]
    if family == "dt":
        params = TreeParams(
            max_depth=tree.max_depth,
            min_samples_split=tree.min_samples_split,
            seed=seed,
        )
        return dt_predict(dt_fit(sliced_train, params), Xtest)
    if family == "rf":
        params = ForestParams(
            n_trees=forest.n_trees,
            features_per_split=forest.features_per_split,
            bootstrap=forest.bootstrap,
            tree=forest.tree,
            seed=seed,
        )
        return rf_predict(rf_fit(sliced_train, params), Xtest)
    raise ValueError(f"unknown model family {family!r}")


def accuracy_curve(
    split: SplitPair,
    ranking: FeatureRanking,
    model_family: str,
    k_values,
    *,
    penalty_c: float = 0.5,
    solver: SagaConfig = SagaConfig(),
    tree: TreeParams = TreeParams(),
    forest: ForestParams = ForestParams(),
    scaler: ScalerParams | None = None,
    seed: int = 0,
) -> AccuracyCurve:
    """Test accuracy of the family retrained on the top-k features, per k.

    Each point retrains from scratch on the top-k subset (passed in sorted
    column order, so k = m reproduces a full-width fit exactly) with the
    per-point seed `seed + k`; points are therefore independent of the order
    in which they are computed.
    """
    m = len(ranking)
    k_values = sorted({int(k) for k in k_values})
    if not k_values or k_values[0] < 1 or k_values[-1] > m:
        raise ValueError("k values must lie in [1, m]")
    points = []
    for k in k_values:
        subset = sorted(ranking.top(k))
        pred = _fit_predict(
            model_family,
            split.train,
            split.test,
            subset,
            penalty_c=penalty_c,
            solver=solver,
            tree=tree,
            forest=forest,
            scaler=scaler,
            seed=seed + k,
        )
        cm = confusion(split.test.y, pred, split.test.class_names)
        points.append((k, accuracy(cm)))
    return AccuracyCurve(
        points=points, model_family=model_family, ranking_used=ranking.penalty_kind
    )


def find_max_k(curve: AccuracyCurve, target: float) -> int | None:
    """Smallest k whose accuracy reaches the target; None if never reached."""
    if not curve.points:
        raise ValueError("empty curve")
    for k, acc in curve.points:
        if acc >= target:
            return k
    return None


def common_features(
    rank_l1: FeatureRanking,
    max_l1: int,
    rank_l2: FeatureRanking,
    max_l2: int,
) -> CommonFeatureSet:
    """Intersect the top `max_l1` L1 features with the top `max_l2` L2 ones."""
    if not (1 <= max_l1 <= len(rank_l1) and 1 <= max_l2 <= len(rank_l2)):
        raise ValueError("max values must lie in [1, m]")
    l1_rank = {idx: pos for pos, idx in enumerate(rank_l1.top(max_l1), start=1)}
    l2_rank = {idx: pos for pos, idx in enumerate(rank_l2.top(max_l2), start=1)}
    entries = [
        (idx, pos, l2_rank[idx])
        for idx, pos in sorted(l1_rank.items(), key=lambda kv: kv[1])
        if idx in l2_rank
    ]
    return CommonFeatureSet(entries=entries)


def rank_statistics(common: CommonFeatureSet) -> dict:
    """Count, mean and min-max span of the stored L1/L2 ranks."""
    if not common.entries:
        raise ValueError("empty common feature set")
    l1 = np.array([e[1] for e in common.entries], dtype=np.float64)
    l2 = np.array([e[2] for e in common.entries], dtype=np.float64)
    return {
        "count": len(common.entries),
        "l1_rank_mean": float(l1.mean()),
        "l2_rank_mean": float(l2.mean()),
        "l1_span": (int(l1.min()), int(l1.max())),
        "l2_span": (int(l2.min()), int(l2.max())),
    }


def ranking_to_csv(ranking: FeatureRanking, feature_names: list[str], path: str | Path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rank", "feature_index", "feature_name", "score"])
        for pos, (idx, score) in enumerate(ranking.ordered, start=1):
            writer.writerow([pos, idx, feature_names[idx], repr(score)])


def curve_to_csv(curves: list[AccuracyCurve], path: str | Path):
    """One row per k; one accuracy column per curve (same k grid required)."""
    grids = [[k for k, _ in c.points] for c in curves]
    if any(g != grids[0] for g in grids):
        raise ValueError("curves must share the same k grid")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k"] + [f"{c.model_family}_accuracy" for c in curves])
        for i, k in enumerate(grids[0]):
            writer.writerow([k] + [repr(c.points[i][1]) for c in curves])


def common_to_csv(common: CommonFeatureSet, feature_names: list[str], path: str | Path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["l1_rank", "l2_rank", "feature_index", "feature_name"])
        for idx, r1, r2 in common.entries:
            writer.writerow([r1, r2, idx, feature_names[idx]])


def common_to_json(common: CommonFeatureSet, feature_names: list[str]) -> list[dict]:
    return [
        {"feature_index": idx, "feature_name": feature_names[idx], "l1_rank": r1, "l2_rank": r2}
        for idx, r1, r2 in common.entries
    ]
