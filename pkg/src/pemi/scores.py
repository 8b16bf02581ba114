"""Conformity scores and the models they wrap.

A score is order-sensitive in general (``of_sequence``).  The closed-form
prediction-set paths additionally require a *last-point* score ``v(x, y)``
together with its sublevel-set inverter ``{y : v(x, y) <= tau}`` returned
as a finite union of closed intervals.
"""

from __future__ import annotations

import abc
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DomainError

__all__ = [
    "ConformityScore",
    "LastPointScore",
    "AbsoluteResidualScore",
    "QuantileIntervalScore",
    "as_model",
    "LinearModel",
    "fit_linear_model",
]

Intervals = tuple[tuple[float, float], ...]

# A model maps an (n, d) covariate matrix to n real predictions.
ModelFn = Callable[[np.ndarray], np.ndarray]


def as_model(fn) -> ModelFn:
    """Wrap a scalar-or-vector callable into the (n, d) -> (n,) convention."""
    def model(X: np.ndarray) -> np.ndarray:
        out = np.asarray(fn(np.asarray(X, dtype=float)), dtype=float)
        return out.reshape(-1)
    return model


@dataclass(frozen=True)
class LinearModel:
    """Affine prediction model; picklable, deterministic."""

    intercept: float
    coef: tuple[float, ...]

    def __call__(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        return self.intercept + X @ np.asarray(self.coef)


def fit_linear_model(X: np.ndarray, y: np.ndarray) -> LinearModel:
    """Least-squares affine fit."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    design = np.concatenate([np.ones((X.shape[0], 1)), X], axis=1)
    beta, *_ = np.linalg.lstsq(design, np.asarray(y, dtype=float), rcond=None)
    return LinearModel(intercept=float(beta[0]), coef=tuple(float(b) for b in beta[1:]))


class ConformityScore(abc.ABC):
    """Order-sensitive real-valued score of an ordered labeled sequence."""

    @abc.abstractmethod
    def of_sequence(self, xs: np.ndarray, ys: np.ndarray) -> float:
        """Score of the full ordered sequence (last entry = test point)."""


class LastPointScore(ConformityScore):
    """A score that reads only the final data point.

    Subclasses provide the pointwise value and the exact sublevel set in
    label space; batch evaluation has a generic fallback.
    """

    @abc.abstractmethod
    def of_point(self, x: np.ndarray, y: float) -> float: ...

    @abc.abstractmethod
    def sublevel(self, x: np.ndarray, tau: float) -> Intervals:
        """{y : v(x, y) <= tau} as a finite union of closed intervals."""

    def of_points(self, X: np.ndarray, ys: np.ndarray) -> np.ndarray:
        return np.array([self.of_point(x, float(y)) for x, y in zip(X, ys)])

    def of_sequence(self, xs: np.ndarray, ys: np.ndarray) -> float:
        return self.of_point(xs[-1], float(ys[-1]))


@dataclass(frozen=True)
class AbsoluteResidualScore(LastPointScore):
    """v(x, y) = |y - model(x)|; sublevel sets are symmetric intervals."""

    model: ModelFn

    def of_point(self, x: np.ndarray, y: float) -> float:
        return abs(y - float(self.model(np.asarray(x).reshape(1, -1))[0]))

    def of_points(self, X: np.ndarray, ys: np.ndarray) -> np.ndarray:
        if X.shape[0] == 0:
            return np.empty(0)
        return np.abs(np.asarray(ys, dtype=float) - self.model(X))

    def sublevel(self, x: np.ndarray, tau: float) -> Intervals:
        if tau < 0 or math.isnan(tau):
            return ()
        if math.isinf(tau):
            return ((-math.inf, math.inf),)
        mu = float(self.model(np.asarray(x).reshape(1, -1))[0])
        return ((mu - tau, mu + tau),)


@dataclass(frozen=True)
class QuantileIntervalScore(LastPointScore):
    """v(x, y) = max(lo(x) - y, y - hi(x)); CQR-style interval score."""

    lower_model: ModelFn
    upper_model: ModelFn

    def of_point(self, x: np.ndarray, y: float) -> float:
        x2 = np.asarray(x).reshape(1, -1)
        lo = float(self.lower_model(x2)[0])
        hi = float(self.upper_model(x2)[0])
        return max(lo - y, y - hi)

    def of_points(self, X: np.ndarray, ys: np.ndarray) -> np.ndarray:
        if X.shape[0] == 0:
            return np.empty(0)
        ys = np.asarray(ys, dtype=float)
        return np.maximum(self.lower_model(X) - ys, ys - self.upper_model(X))

    def sublevel(self, x: np.ndarray, tau: float) -> Intervals:
        if math.isnan(tau):
            return ()
        if math.isinf(tau):
            return ((-math.inf, math.inf),) if tau > 0 else ()
        x2 = np.asarray(x).reshape(1, -1)
        lo = float(self.lower_model(x2)[0]) - tau
        hi = float(self.upper_model(x2)[0]) + tau
        return ((lo, hi),) if lo <= hi else ()


def score_each_point(score: LastPointScore, X: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Per-point last-point scores; NaN where the label is unknown."""
    vals = np.full(ys.shape[0], np.nan)
    known = np.isfinite(np.asarray(ys, dtype=float))
    if known.any():
        vals[known] = score.of_points(np.asarray(X)[known], np.asarray(ys)[known])
    return vals


def require_last_point(score: ConformityScore) -> LastPointScore:
    if not isinstance(score, LastPointScore):
        raise DomainError("this operation needs a last-point score with an inverter")
    return score
