"""L2-regularized logistic regression, used as an independent cross-check scorer."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Mapping

import numpy as np
from scipy.special import expit

from ..dataset import Dataset
from ..errors import EmptyFeatureSet, FeatureMismatch, NonConvergence, SingleClassTarget

GRAD_TOL = 1e-8


def logistic_objective(theta: np.ndarray, X: np.ndarray, y: np.ndarray, l2: float):
    """Mean log-loss plus ``l2/2 * ||w||^2`` and its gradient.

    ``theta[0]`` is the unpenalized intercept.
    """
    raw = theta[0] + X @ theta[1:]
    loss = np.mean(np.logaddexp(0.0, raw) - y * raw) + 0.5 * l2 * theta[1:] @ theta[1:]
    r = (expit(raw) - y) / len(y)
    grad = np.concatenate([[r.sum()], X.T @ r + l2 * theta[1:]])
    return float(loss), grad


def _hessian(theta, X, y, l2):
    p = expit(theta[0] + X @ theta[1:])
    s = p * (1 - p) / len(y)
    Xa = np.column_stack([np.ones(len(y)), X])
    H = Xa.T @ (Xa * s[:, None])
    H[1:, 1:] += l2 * np.eye(X.shape[1])
    return H


@dataclass(frozen=True)
class _Encoding:
    name: str
    categorical: bool
    mean: float = 0.0
    scale: float = 1.0
    levels: tuple = ()


def _fit_encoding(data: Dataset, features):
    out = []
    for f in features:
        col = data.schema[f]
        if col.is_categorical:
            out.append(_Encoding(f, True, levels=col.type.levels))
        else:
            v = data.values(f)[~data.missing(f)]
            mean = float(v.mean()) if len(v) else 0.0
            sd = float(v.std()) if len(v) else 0.0
            out.append(_Encoding(f, False, mean, sd if sd > 0 else 1.0))
    return out


def _design(enc: list[_Encoding], data: Dataset) -> np.ndarray:
    blocks = []
    for e in enc:
        if e.name not in data.schema:
            raise FeatureMismatch(f"data lacks feature {e.name!r}", name=e.name)
        miss = data.missing(e.name)
        if e.categorical:
            names = data.labels(e.name)
            # drop-first one-hot keeps the design full rank with an intercept
            cols = [(names == lv) & ~miss for lv in e.levels[1:]]
            blocks.append(np.column_stack(cols).astype(np.float64) if cols
                          else np.empty((data.n_rows, 0)))
        else:
            v = np.where(miss, e.mean, data.values(e.name))
            blocks.append(((v - e.mean) / e.scale)[:, None])
    return np.hstack(blocks) if blocks else np.empty((data.n_rows, 0))


class LogisticModel:
    """Scorer with the same ``features``/``predict_proba`` surface as the GBDT."""

    def __init__(self, encoding, theta, l2, metadata=None, iterations=0):
        self.encoding = list(encoding)
        self.theta = np.asarray(theta, dtype=np.float64)
        self.l2 = float(l2)
        self.metadata = dict(metadata or {})
        self.iterations = iterations

    @property
    def features(self) -> list[str]:
        return [e.name for e in self.encoding]

    @property
    def intercept(self) -> float:
        return float(self.theta[0])

    @property
    def coef(self) -> np.ndarray:
        return self.theta[1:]

    def predict_proba(self, data: Dataset) -> np.ndarray:
        X = _design(self.encoding, data)
        return expit(self.theta[0] + X @ self.theta[1:])

    def with_metadata(self, **extra) -> "LogisticModel":
        return LogisticModel(self.encoding, self.theta, self.l2, {**self.metadata, **extra},
                             self.iterations)


def train_logistic(data: Dataset, features: list[str], l2: float = 1e-4, seed: int = 0,
                   max_iter: int = 200, metadata: Mapping[str, Any] | None = None) -> LogisticModel:
    """Damped Newton on the regularized log-loss, down to gradient norm 1e-8.

    The optimization is deterministic; ``seed`` is recorded for parity with
    the GBDT but draws nothing.
    """
    features = list(features)
    if not features:
        raise EmptyFeatureSet("at least one feature is required")
    y = data.target.astype(np.float64)
    if y.min() == y.max():
        raise SingleClassTarget("training data needs both classes")
    enc = _fit_encoding(data, features)
    X = _design(enc, data)
    theta = np.zeros(X.shape[1] + 1)
    p0 = y.mean()
    theta[0] = np.log(p0 / (1 - p0))
    loss, grad = logistic_objective(theta, X, y, l2)
    for it in range(max_iter):
        if np.linalg.norm(grad) <= GRAD_TOL:
            return LogisticModel(enc, theta, l2, {"seed": seed, **(metadata or {})}, it)
        H = _hessian(theta, X, y, l2)
        step = np.linalg.lstsq(H, -grad, rcond=None)[0]
        t = 1.0
        while True:
            cand = theta + t * step
            new_loss, new_grad = logistic_objective(cand, X, y, l2)
            if new_loss <= loss + 1e-4 * t * grad @ step or t < 1e-10:
                break
            t *= 0.5
        theta, loss, grad = cand, new_loss, new_grad
    if np.linalg.norm(grad) <= GRAD_TOL:
        return LogisticModel(enc, theta, l2, {"seed": seed, **(metadata or {})}, max_iter)
    raise NonConvergence(f"gradient norm {np.linalg.norm(grad):.3g} after {max_iter} iterations")
