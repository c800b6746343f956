"""Penalized multinomial cross-entropy and a SAGA-style stochastic solver.

Objective convention (sum, not mean):

    J(W, b) = sum_i -log p(y_i | x_i; W, b) + (1/C) * P(W)

with P(W) = sum |W_kj| for the L1 penalty and sum W_kj**2 for L2.  C is the
inverse regularization strength, so lambda = 1/C.  Intercepts are never
penalized.

The solver keeps one residual vector (softmax probabilities minus the one-hot
target) per sample; since each per-sample gradient is an outer product of
that residual with the input row, this is enough to reconstruct the stored
gradient and maintain the running average that SAGA's variance-reduced step
needs.  The L1 penalty enters through a soft-threshold proximal step after
every update; the L2 penalty through plain gradient shrinkage.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Union

import numpy as np

from ._jit import njit
from .errors import SolverError
from .ingest import Dataset

# Coefficients this close to zero after an L1 fit are snapped to exactly 0.0
# so sparsity can be queried with == 0.
SNAP_TOLERANCE = 1e-10


@dataclass(frozen=True)
class PenaltySpec:
    """Which penalty to apply and its inverse strength C (lambda = 1/C)."""

    kind: Literal["l1", "l2"]
    inverse_strength_c: float = 0.5

    def __post_init__(self):
        if self.kind not in ("l1", "l2"):
            raise ValueError(f"unknown penalty kind {self.kind!r}")
        if not self.inverse_strength_c > 0:
            raise ValueError("inverse_strength_c must be positive")

    @property
    def lam(self) -> float:
        return 1.0 / self.inverse_strength_c


@dataclass
class WeightMatrix:
    """Per-class coefficient rows plus intercepts."""

    coefficients: np.ndarray  # (K, m)
    intercepts: np.ndarray  # (K,)

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=np.float64)
        self.intercepts = np.asarray(self.intercepts, dtype=np.float64)
        if self.coefficients.ndim != 2 or self.intercepts.ndim != 1:
            raise ValueError("coefficients must be 2-D, intercepts 1-D")
        if self.coefficients.shape[0] != self.intercepts.shape[0]:
            raise ValueError("class counts of coefficients/intercepts differ")

    @property
    def n_classes(self) -> int:
        return self.coefficients.shape[0]

    @property
    def n_features(self) -> int:
        return self.coefficients.shape[1]


@dataclass(frozen=True)
class SagaConfig:
    max_epochs: int = 100
    step_size: Union[float, Literal["auto"]] = "auto"
    tolerance: float = 1e-4  # relative objective change per epoch
    seed: int = 0

    def __post_init__(self):
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if self.step_size != "auto" and not self.step_size > 0:
            raise ValueError("step_size must be positive or 'auto'")


def softmax(scores: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max-subtraction for overflow safety."""
    scores = np.asarray(scores, dtype=np.float64)
    z = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def soft_threshold(w, t):
    """Proximal operator of t*|.|: sign(w) * max(|w| - t, 0)."""
    if np.any(np.asarray(t) < 0):
        raise ValueError("threshold must be non-negative")
    return np.sign(w) * np.maximum(np.abs(w) - t, 0.0)


def _check_dims(weights: WeightMatrix, data: Dataset):
    if weights.n_features != data.m:
        raise ValueError(
            f"weights have {weights.n_features} features, data has {data.m}"
        )
    if weights.n_classes != data.k:
        raise ValueError(f"weights have {weights.n_classes} classes, data has {data.k}")


def _log_losses(weights: WeightMatrix, data: Dataset) -> np.ndarray:
    """Per-sample -log p(y_i | x_i)."""
    scores = data.X @ weights.coefficients.T + weights.intercepts
    zmax = scores.max(axis=1, keepdims=True)
    lse = np.log(np.exp(scores - zmax).sum(axis=1)) + zmax[:, 0]
    return lse - scores[np.arange(data.n), data.y]


def penalty_value(weights: WeightMatrix, penalty: PenaltySpec) -> float:
    if penalty.kind == "l1":
        return penalty.lam * float(np.abs(weights.coefficients).sum())
    return penalty.lam * float((weights.coefficients**2).sum())


def objective(weights: WeightMatrix, data: Dataset, penalty: PenaltySpec) -> float:
    """Total cross-entropy over the dataset plus the penalty term."""
    _check_dims(weights, data)
    data_term = float(_log_losses(weights, data).sum()) if data.n else 0.0
    return data_term + penalty_value(weights, penalty)


def gradient(weights: WeightMatrix, data: Dataset, penalty: PenaltySpec) -> WeightMatrix:
    """Analytic gradient of the objective, shaped like the weights.

    For L2 the penalty gradient (2/C) * W is included on the coefficient
    block; for L1 only the data term is returned because the solver handles
    the non-smooth part proximally.
    """
    _check_dims(weights, data)
    if data.n:
        resid = softmax(data.X @ weights.coefficients.T + weights.intercepts)
        resid[np.arange(data.n), data.y] -= 1.0
        gcoef = resid.T @ data.X
        gint = resid.sum(axis=0)
    else:
        gcoef = np.zeros_like(weights.coefficients)
        gint = np.zeros_like(weights.intercepts)
    if penalty.kind == "l2":
        gcoef = gcoef + 2.0 * penalty.lam * weights.coefficients
    return WeightMatrix(coefficients=gcoef, intercepts=gint)


@njit(cache=True)
def _saga_epoch(Xb, y, W, mem, avg, order, step, l1_thresh, l2_coef):
    """One pass of n SAGA updates, in place.

    Xb has a trailing all-ones bias column; W/avg are (K, m+1); mem holds the
    per-sample softmax residuals at the time each sample was last visited.
    The penalty never touches the bias column.
    """
    n, d = Xb.shape
    K = W.shape[0]
    m = d - 1
    inv_n = 1.0 / n
    z = np.empty(K)
    for t in range(order.shape[0]):
        j = order[t]
        xj = Xb[j]
        zmax = -np.inf
        for k in range(K):
            s = 0.0
            for c in range(d):
                s += W[k, c] * xj[c]
            z[k] = s
            if s > zmax:
                zmax = s
        se = 0.0
        for k in range(K):
            z[k] = np.exp(z[k] - zmax)
            se += z[k]
        for k in range(K):
            z[k] /= se
        z[y[j]] -= 1.0
        # variance-reduced step: (g_j(W) - stored_j + mean of stored),
        # reading avg before folding the new residual into it
        for k in range(K):
            dk = z[k] - mem[j, k]
            for c in range(d):
                g = dk * xj[c] + avg[k, c]
                if c < m:
                    g += l2_coef * W[k, c]
                W[k, c] -= step * g
                avg[k, c] += dk * xj[c] * inv_n
            mem[j, k] = z[k]
        if l1_thresh > 0.0:
            for k in range(K):
                for c in range(m):
                    w = W[k, c]
                    if w > l1_thresh:
                        W[k, c] = w - l1_thresh
                    elif w < -l1_thresh:
                        W[k, c] = w + l1_thresh
                    else:
                        W[k, c] = 0.0


def auto_step_size(Xb: np.ndarray, n_classes: int, penalty: PenaltySpec, n: int) -> float:
    """1 / (3 * L-hat), the usual safe SAGA step.

    L-hat bounds the per-sample gradient Lipschitz constant: max squared row
    norm (bias included) times (K-1)/K, plus the per-sample L2 curvature.
    """
    row_norm = float((Xb**2).sum(axis=1).max())
    lhat = row_norm * (n_classes - 1) / n_classes
    if penalty.kind == "l2":
        lhat += 2.0 * penalty.lam / n
    return 1.0 / (3.0 * lhat)


def saga_fit(data: Dataset, penalty: PenaltySpec, cfg: SagaConfig) -> WeightMatrix:
    """Fit multinomial logistic regression with SAGA.

    Deterministic given (data, penalty, cfg).  Stops when the relative
    objective change over an epoch drops below cfg.tolerance or max_epochs
    is reached.  Raises SolverError if the objective goes non-finite (step
    size too large), rather than clamping silently.
    """
    if data.n < data.k:
        raise ValueError("need at least as many samples as classes")
    n, m, K = data.n, data.m, data.k
    Xb = np.ascontiguousarray(np.hstack([data.X, np.ones((n, 1))]))
    y = np.ascontiguousarray(data.y)

    W = np.zeros((K, m + 1))
    # residual memory at W = 0: uniform softmax minus one-hot target
    mem = np.full((n, K), 1.0 / K)
    mem[np.arange(n), y] -= 1.0
    avg = np.ascontiguousarray(mem.T @ Xb) / n

    step = cfg.step_size if cfg.step_size != "auto" else auto_step_size(Xb, K, penalty, n)
    l1_thresh = step * penalty.lam / n if penalty.kind == "l1" else 0.0
    l2_coef = 2.0 * penalty.lam / n if penalty.kind == "l2" else 0.0

    rng = np.random.default_rng(cfg.seed)

    def current() -> WeightMatrix:
        return WeightMatrix(coefficients=W[:, :m].copy(), intercepts=W[:, m].copy())

    prev = objective(current(), data, penalty)
    for _ in range(cfg.max_epochs):
        order = rng.integers(0, n, size=n)
        _saga_epoch(Xb, y, W, mem, avg, order, step, l1_thresh, l2_coef)
        obj = objective(current(), data, penalty)
        if not np.isfinite(obj):
            raise SolverError(
                f"objective became non-finite (step size {step:g} too large?)"
            )
        if abs(prev - obj) / max(abs(prev), 1.0) < cfg.tolerance:
            prev = obj
            break
        prev = obj

    weights = current()
    if penalty.kind == "l1":
        coefs = weights.coefficients
        coefs[np.abs(coefs) < SNAP_TOLERANCE] = 0.0
    return weights


def weights_to_doc(
    weights: WeightMatrix,
    class_names: list[str],
    feature_names: list[str],
    penalty: PenaltySpec,
    seed: int,
) -> dict:
    """JSON-ready document for a fitted weight matrix."""
    return {
        "class_names": list(class_names),
        "feature_names": list(feature_names),
        "coefficients": weights.coefficients.tolist(),
        "intercepts": weights.intercepts.tolist(),
        "penalty": penalty.kind,
        "C": penalty.inverse_strength_c,
        "seed": seed,
    }


def weights_from_doc(doc: dict) -> tuple[WeightMatrix, PenaltySpec]:
    weights = WeightMatrix(
        coefficients=np.array(doc["coefficients"], dtype=np.float64),
        intercepts=np.array(doc["intercepts"], dtype=np.float64),
    )
    penalty = PenaltySpec(kind=doc["penalty"], inverse_strength_c=doc["C"])
    return weights, penalty


def save_weights(doc: dict, path: str | Path):
    Path(path).write_text(json.dumps(doc, sort_keys=True) + "\n")


def load_weights(path: str | Path) -> dict:
    return json.loads(Path(path).read_text())
