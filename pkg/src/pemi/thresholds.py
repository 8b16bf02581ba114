"""Adaptive significance-threshold engines for online testing.

Every engine computes the level ``alpha_j`` for step ``j`` as a
deterministic function of the step index, the realized p-value history
``p_1..p_{j-1}``, and its own hyper-parameters — the one interface the
p-value-thresholding selection rules need.  State is always rebuilt from
the supplied history, never mutated in place, so engines can be replayed
on permuted histories.

``lond_threshold`` and ``default_gamma`` are the building blocks of the
discovery-count procedures; SAFFRON and ADDIS are provided as plug-ins
following their published wealth recursions and are exercised only
through this interface.
"""

from __future__ import annotations

import abc
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigurationError

__all__ = [
    "default_gamma",
    "lond_threshold",
    "ThresholdEngine",
    "FixedThreshold",
    "LondEngine",
    "SaffronEngine",
    "AddisEngine",
    "lond_rejections",
]


def default_gamma(t: int) -> float:
    """The standard summable discovery-weight sequence 6 / (pi^2 t^2)."""
    return 6.0 / (math.pi**2 * t * t)


def lond_threshold(alpha: float, gamma_t: float, rejections: int) -> float:
    """Per-step level alpha * gamma_t * (rejections + 1)."""
    if gamma_t < 0:
        raise ConfigurationError(f"gamma must be >= 0, got {gamma_t}")
    if rejections < 0:
        raise ConfigurationError("rejection count must be >= 0")
    return alpha * gamma_t * (rejections + 1)


def _gamma_array(gamma: Callable[[int], float], T: int) -> np.ndarray:
    g = np.array([gamma(j) for j in range(1, T + 1)], dtype=float)
    if np.any(g < 0):
        raise ConfigurationError("gamma sequence must be non-negative")
    return g


class ThresholdEngine(abc.ABC):
    """alpha_j = G(j; p_1..p_{j-1}, theta), replayable on any history."""

    @abc.abstractmethod
    def alphas(self, pvals: np.ndarray) -> np.ndarray:
        """Thresholds for steps 1..T given the p-values of those steps.

        ``alpha_j`` may depend on ``pvals[:j-1]`` only; the j-th entry of
        the input is never read when computing the j-th output.
        """

    def next_alpha(self, past_pvals) -> float:
        """Threshold for the step following the given history."""
        hist = np.concatenate([np.asarray(past_pvals, dtype=float), [1.0]])
        return float(self.alphas(hist)[-1])

    def alphas_batch(self, pvals: np.ndarray) -> np.ndarray:
        """Row-wise ``alphas``; override when a vectorized form exists."""
        return np.stack([self.alphas(row) for row in np.asarray(pvals, dtype=float)])


@dataclass(frozen=True)
class FixedThreshold(ThresholdEngine):
    q: float

    def __post_init__(self) -> None:
        if not 0 < self.q < 1:
            raise ConfigurationError(f"fixed threshold must be in (0,1), got {self.q}")

    def alphas(self, pvals: np.ndarray) -> np.ndarray:
        return np.full(np.asarray(pvals).shape[-1], self.q)

    def alphas_batch(self, pvals: np.ndarray) -> np.ndarray:
        return np.full(np.asarray(pvals).shape, self.q)


def lond_rejections(pvals: np.ndarray, alpha: float, gamma: Callable[[int], float]) -> np.ndarray:
    """Boolean rejection profile of the discovery-count procedure."""
    p = np.asarray(pvals, dtype=float)
    g = _gamma_array(gamma, p.shape[-1])
    if p.ndim == 1:
        rej = np.zeros(p.shape[0], dtype=bool)
        d = 0
        for j in range(p.shape[0]):
            rej[j] = p[j] <= alpha * g[j] * (d + 1)
            d += int(rej[j])
        return rej
    rej = np.zeros(p.shape, dtype=bool)
    d = np.zeros(p.shape[0], dtype=np.int64)
    for j in range(p.shape[1]):
        rej[:, j] = p[:, j] <= alpha * g[j] * (d + 1)
        d += rej[:, j]
    return rej


@dataclass(frozen=True)
class LondEngine(ThresholdEngine):
    """Level alpha * gamma_j * (discoveries so far + 1)."""

    alpha: float
    gamma: Callable[[int], float] = default_gamma

    def alphas(self, pvals: np.ndarray) -> np.ndarray:
        p = np.asarray(pvals, dtype=float)
        g = _gamma_array(self.gamma, p.shape[0])
        out = np.empty(p.shape[0])
        d = 0
        for j in range(p.shape[0]):
            out[j] = self.alpha * g[j] * (d + 1)
            d += int(p[j] <= out[j])
        return out

    def alphas_batch(self, pvals: np.ndarray) -> np.ndarray:
        p = np.asarray(pvals, dtype=float)
        g = _gamma_array(self.gamma, p.shape[1])
        out = np.empty(p.shape)
        d = np.zeros(p.shape[0], dtype=np.int64)
        for j in range(p.shape[1]):
            out[:, j] = self.alpha * g[j] * (d + 1)
            d += p[:, j] <= out[:, j]
        return out


@dataclass(frozen=True)
class SaffronEngine(ThresholdEngine):
    """Adaptive alpha-investing with candidate screening at level lam.

    Wealth recursion (constant lam): a step is a candidate when
    ``p_j <= lam``; with tau_k the k-th rejection time and C_{k+} the
    candidate count since it,

        alpha_t = min(lam, W0 * g[t - C_{0+}]
                          + ((1-lam)*alpha - W0) * g[t - tau_1 - C_{1+}]
                          + (1-lam)*alpha * sum_{k>=2} g[t - tau_k - C_{k+}])
    """

    alpha: float
    lam: float = 0.5
    w0: float | None = None
    gamma: Callable[[int], float] = default_gamma

    def _w0(self) -> float:
        w0 = self.w0 if self.w0 is not None else (1 - self.lam) * self.alpha / 2
        if not 0 < w0 <= (1 - self.lam) * self.alpha:
            raise ConfigurationError("initial wealth must lie in (0, (1-lam)*alpha]")
        return w0

    def alphas(self, pvals: np.ndarray) -> np.ndarray:
        p = np.asarray(pvals, dtype=float)
        T = p.shape[0]
        g = _gamma_array(self.gamma, T + 1)

        def g_at(k: int) -> float:
            return g[k - 1] if k >= 1 else g[0]

        w0 = self._w0()
        earn = (1 - self.lam) * self.alpha
        out = np.empty(T)
        cand: list[int] = []  # candidate steps so far
        rej_times: list[int] = []
        for t in range(1, T + 1):
            c0 = len(cand)
            val = w0 * g_at(t - c0)
            for k, tau in enumerate(rej_times, start=1):
                ck = sum(1 for c in cand if c > tau)
                coef = earn - w0 if k == 1 else earn
                val += coef * g_at(t - tau - ck)
            out[t - 1] = min(self.lam, val)
            if p[t - 1] <= self.lam:
                cand.append(t)
            if p[t - 1] <= out[t - 1]:
                rej_times.append(t)
        return out


@dataclass(frozen=True)
class AddisEngine(ThresholdEngine):
    """SAFFRON-style investing with discarding of clearly-null steps.

    Steps with ``p_j > tau_discard`` are discarded; among the rest,
    candidates have ``p_j <= lam * tau_discard``.  Time is counted in
    non-discarded steps and wealth is earned at (1 - lam) * tau * alpha.
    """

    alpha: float
    lam: float = 0.25
    tau_discard: float = 0.5
    w0: float | None = None
    gamma: Callable[[int], float] = default_gamma

    def alphas(self, pvals: np.ndarray) -> np.ndarray:
        p = np.asarray(pvals, dtype=float)
        T = p.shape[0]
        g = _gamma_array(self.gamma, T + 1)

        def g_at(k: int) -> float:
            return g[k - 1] if k >= 1 else g[0]

        earn = (1 - self.lam) * self.tau_discard * self.alpha
        w0 = self.w0 if self.w0 is not None else earn / 2
        if not 0 < w0 <= earn:
            raise ConfigurationError("initial wealth must lie in (0, (1-lam)*tau*alpha]")
        out = np.empty(T)
        kept = 0  # non-discarded steps so far
        cand: list[int] = []  # kept-time of candidate steps
        rej_kept: list[int] = []  # kept-time of rejections
        for t in range(1, T + 1):
            s = kept + 1  # kept-time this step would have
            c0 = len(cand)
            val = w0 * g_at(s - c0)
            for k, kappa in enumerate(rej_kept, start=1):
                ck = sum(1 for c in cand if c > kappa)
                coef = earn - w0 if k == 1 else earn
                val += coef * g_at(s - kappa - ck)
            out[t - 1] = min(self.lam * self.tau_discard, val)
            if p[t - 1] <= self.tau_discard:
                kept += 1
                if p[t - 1] <= self.lam * self.tau_discard:
                    cand.append(kept)
                if p[t - 1] <= out[t - 1]:
                    rej_kept.append(kept)
        return out
