"""Cheap objective predictors trained on evaluated genotypes.

Genotypes are featurized as concatenated one-hot blocks (one block per gene,
inactive precision genes zeroed out), so predictors carry no ordering
assumption about the categorical choices.  Two regressors are provided:
ridge regression on the normal equations and radial-basis kernel ridge.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .search_space import (
    JointGenotype,
    SearchSpaceSpec,
    active_quant_mask_batch,
    encode,
)


def feature_width(spec: SearchSpaceSpec) -> int:
    return int(spec.gene_sizes.sum())


def featurize_batch(spec: SearchSpaceSpec, flat: np.ndarray) -> np.ndarray:
    """One-hot feature matrix for encoded genotypes (rows assumed valid)."""
    flat = np.asarray(flat, dtype=np.int64)
    if flat.ndim == 1:
        flat = flat.reshape(1, -1)
    n = flat.shape[0]
    sizes = spec.gene_sizes
    offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]])
    out = np.zeros((n, int(sizes.sum())))
    rows = np.arange(n)[:, None]
    out[rows, offsets[None, :] + flat] = 1.0
    if spec.quant_gene_count:
        mask = active_quant_mask_batch(spec, flat)
        qcols = offsets[spec.arch_gene_count :][None, :] + flat[:, spec.arch_gene_count :]
        out[rows, qcols] = mask.astype(float)
    return out


def featurize(spec: SearchSpaceSpec, genotype: JointGenotype) -> np.ndarray:
    """One-hot blocks in gene order; genes of pruned layers become all-zero blocks."""
    return featurize_batch(spec, encode(spec, genotype))[0]


@dataclass(frozen=True, eq=False)
class RidgeModel:
    weights: np.ndarray
    intercept: float
    lambda_: float
    feature_width: int
    n_train: int


@dataclass(frozen=True, eq=False)
class KernelRidgeModel:
    support_features: np.ndarray
    dual_coefficients: np.ndarray
    gamma: float
    lambda_: float
    n_train: int


def _check_training_data(features, targets):
    X = np.asarray(features, dtype=float)
    y = np.asarray(targets, dtype=float)
    if X.ndim != 2:
        raise ValueError(f"feature matrix must be 2-D, got shape {X.shape}")
    if y.ndim != 1 or y.shape[0] != X.shape[0]:
        raise ValueError(f"targets shape {y.shape} does not match {X.shape[0]} rows")
    if X.shape[0] < 1:
        raise ValueError("need at least one training row")
    if not np.all(np.isfinite(X)) or not np.all(np.isfinite(y)):
        raise ValueError("training data contains non-finite values")
    return X, y


def fit_ridge(features, targets, lambda_: float) -> RidgeModel:
    """Solve (X'X + lambda I) w = X' (y - mean(y)); the intercept is mean(y).

    Targets are centered so the intercept stays unpenalized; features are
    used as-is (they are 0/1 blocks, no scaling needed).
    """
    X, y = _check_training_data(features, targets)
    if not (math.isfinite(lambda_) and lambda_ >= 0):
        raise ValueError("lambda must be finite and >= 0")
    intercept = float(y.mean())
    yc = y - intercept
    if lambda_ > 0:
        A = X.T @ X + lambda_ * np.eye(X.shape[1])
        w = scipy.linalg.solve(A, X.T @ yc, assume_a="pos")
    else:
        w = np.linalg.lstsq(X, yc, rcond=None)[0]
    return RidgeModel(
        weights=w,
        intercept=intercept,
        lambda_=float(lambda_),
        feature_width=X.shape[1],
        n_train=X.shape[0],
    )


def predict_ridge(model: RidgeModel, x) -> float:
    x = np.asarray(x, dtype=float)
    if x.shape != (model.feature_width,):
        raise ValueError(
            f"feature width mismatch: model expects {model.feature_width}, got {x.shape}"
        )
    return float(model.weights @ x + model.intercept)


def fit_kernel_ridge(features, targets, lambda_: float, gamma: float) -> KernelRidgeModel:
    """Dual solve (K + lambda I) alpha = y with K_ij = exp(-gamma ||xi - xj||^2)."""
    X, y = _check_training_data(features, targets)
    if not (math.isfinite(lambda_) and lambda_ > 0):
        raise ValueError("lambda must be finite and > 0")
    if not (math.isfinite(gamma) and gamma > 0):
        raise ValueError("gamma must be finite and > 0")
    K = np.exp(-gamma * _sq_dists(X, X))
    alpha = scipy.linalg.solve(K + lambda_ * np.eye(X.shape[0]), y, assume_a="pos")
    return KernelRidgeModel(
        support_features=X,
        dual_coefficients=alpha,
        gamma=float(gamma),
        lambda_=float(lambda_),
        n_train=X.shape[0],
    )


def _sq_dists(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    sq = (
        np.sum(A * A, axis=1)[:, None]
        + np.sum(B * B, axis=1)[None, :]
        - 2.0 * (A @ B.T)
    )
    return np.maximum(sq, 0.0)


def predict_kernel_ridge(model: KernelRidgeModel, x) -> float:
    x = np.asarray(x, dtype=float).reshape(1, -1)
    if x.shape[1] != model.support_features.shape[1]:
        raise ValueError(
            f"feature width mismatch: model expects "
            f"{model.support_features.shape[1]}, got {x.shape[1]}"
        )
    K = np.exp(-model.gamma * _sq_dists(x, model.support_features))
    return float((K @ model.dual_coefficients)[0])


def predict_batch(model, X) -> np.ndarray:
    """Vectorized prediction for either model kind."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if isinstance(model, RidgeModel):
        return X @ model.weights + model.intercept
    K = np.exp(-model.gamma * _sq_dists(X, model.support_features))
    return K @ model.dual_coefficients


@dataclass(frozen=True)
class PredictorMetrics:
    mape: float          # nan when every target is zero
    kendall_tau: float
    n_train: int
    n_test: int


def kendall_tau(a, b) -> float:
    """Tau over all pairs; tied pairs contribute zero to the numerator."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n = len(a)
    sa = np.sign(a[:, None] - a[None, :])
    sb = np.sign(b[:, None] - b[None, :])
    upper = np.triu_indices(n, k=1)
    return float(np.sum(sa[upper] * sb[upper]) / (n * (n - 1) / 2))


def evaluate_predictor(model, features, targets) -> PredictorMetrics:
    """Held-out MAPE (over nonzero targets) and rank agreement."""
    X = np.asarray(features, dtype=float)
    y = np.asarray(targets, dtype=float)
    if X.shape[0] < 2:
        raise ValueError("need at least two held-out rows")
    if y.shape != (X.shape[0],):
        raise ValueError(f"targets shape {y.shape} does not match {X.shape[0]} rows")
    preds = predict_batch(model, X)
    nz = y != 0
    mape = float(np.mean(np.abs((preds[nz] - y[nz]) / y[nz]))) if nz.any() else math.nan
    return PredictorMetrics(
        mape=mape,
        kendall_tau=kendall_tau(preds, y),
        n_train=model.n_train,
        n_test=X.shape[0],
    )
