"""Multinomial logistic-regression facade over the SAGA solver.

A fitted model remembers which original feature columns it was trained on
and the scaler in force at fit time, so prediction always accepts rows at
the source width and repeats the exact train-time transform.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .ingest import Dataset, ScalerParams, apply_scaler
from .optim import (
    PenaltySpec,
    SagaConfig,
    WeightMatrix,
    saga_fit,
    softmax,
    weights_from_doc,
    weights_to_doc,
)


@dataclass
class LogRegModel:
    weights: WeightMatrix
    feature_subset: list[int]
    feature_names: list[str]
    class_names: list[str]
    penalty: PenaltySpec
    scaler: ScalerParams | None
    source_width: int
    solver_seed: int


def fit(
    train: Dataset,
    subset,
    penalty: PenaltySpec,
    cfg: SagaConfig = SagaConfig(),
    scaler: ScalerParams | None = None,
) -> LogRegModel:
    """Fit on the given feature columns of `train`.

    `scaler`, when provided, carries full-width parameters fit elsewhere on
    training data; the relevant columns are standardized here before solving
    and the same transform is replayed at prediction time.
    """
    subset = [int(i) for i in subset]
    if not subset:
        raise ValueError("feature subset must be non-empty")
    if len(set(subset)) != len(subset):
        raise ValueError("duplicate index in feature subset")
    if min(subset) < 0 or max(subset) >= train.m:
        raise ValueError("feature subset index out of range")

    X = train.X[:, subset]
    if scaler is not None:
        X = apply_scaler(X, scaler, subset)
    sliced = Dataset(
        X=X,
        y=train.y,
        feature_names=[train.feature_names[i] for i in subset],
        class_names=list(train.class_names),
    )
    weights = saga_fit(sliced, penalty, cfg)
    return LogRegModel(
        weights=weights,
        feature_subset=subset,
        feature_names=sliced.feature_names,
        class_names=sliced.class_names,
        penalty=penalty,
        scaler=scaler,
        source_width=train.m,
        solver_seed=cfg.seed,
    )


def _scores(model: LogRegModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.source_width:
        raise ValueError(
            f"rows must have width {model.source_width}, got {X.shape[1] if X.ndim == 2 else X.shape}"
        )
    Xs = X[:, model.feature_subset]
    if model.scaler is not None:
        Xs = apply_scaler(Xs, model.scaler, model.feature_subset)
    return Xs @ model.weights.coefficients.T + model.weights.intercepts


def predict(model: LogRegModel, X) -> np.ndarray:
    """Class indices; ties broken by the lowest class index."""
    return _scores(model, X).argmax(axis=1)


def predict_proba(model: LogRegModel, X) -> np.ndarray:
    return softmax(_scores(model, X))


def coefficients(model: LogRegModel) -> tuple[np.ndarray, list[str]]:
    """Learned (K, m') coefficients with the matching feature names."""
    return model.weights.coefficients, list(model.feature_names)


def save_model(model: LogRegModel, path: str | Path):
    doc = weights_to_doc(
        model.weights,
        model.class_names,
        model.feature_names,
        model.penalty,
        model.solver_seed,
    )
    doc["feature_subset"] = list(model.feature_subset)
    doc["source_width"] = model.source_width
    doc["scaler"] = (
        None
        if model.scaler is None
        else {
            "means": model.scaler.means.tolist(),
            "std_devs": model.scaler.std_devs.tolist(),
        }
    )
    Path(path).write_text(json.dumps(doc, sort_keys=True) + "\n")


def load_model(path: str | Path) -> LogRegModel:
    doc = json.loads(Path(path).read_text())
    weights, penalty = weights_from_doc(doc)
    scaler = None
    if doc["scaler"] is not None:
        scaler = ScalerParams(
            means=np.array(doc["scaler"]["means"]),
            std_devs=np.array(doc["scaler"]["std_devs"]),
        )
    return LogRegModel(
        weights=weights,
        feature_subset=[int(i) for i in doc["feature_subset"]],
        feature_names=list(doc["feature_names"]),
        class_names=list(doc["class_names"]),
        penalty=penalty,
        scaler=scaler,
        source_width=int(doc["source_width"]),
        solver_seed=int(doc["seed"]),
    )
