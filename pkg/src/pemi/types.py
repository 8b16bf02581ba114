"""Core data model: labeled points, online sequences, and permutations.

Conventions used throughout the package:

* A data sequence at online time ``t`` consists of an optional *offline*
  block of labeled points (collected before the online process started),
  the online labeled history (times ``1 .. t-1``), and the covariates of
  the test point at time ``t`` whose label is unknown.
* Internally all points live in one array in *slot order*:
  ``[offline..., online..., test]``.  Slots are 0-based; the test point
  always occupies the last slot.  The classic 1-based time indices
  (offline points carry indices ``-n_off+1 .. 0``) are exposed through
  ``index_range`` for reporting only.
* A permutation is stored as ``order`` with ``order[s] = p`` meaning the
  point originally in slot ``p`` now occupies slot ``s``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .errors import DomainError

__all__ = [
    "LabeledPoint",
    "DataSequence",
    "OrderedSequence",
    "Permutation",
    "PermutationSample",
    "MultiTestData",
]


@dataclass(frozen=True)
class LabeledPoint:
    """A single observation: covariates, label, optional selection cutoff."""

    x: np.ndarray
    y: float
    cutoff: float | None = None

    def __post_init__(self) -> None:
        x = np.asarray(self.x, dtype=float).reshape(-1)
        object.__setattr__(self, "x", x)
        if not np.isfinite(self.y):
            raise DomainError(f"label must be finite, got {self.y!r}")


def _as_matrix(x, name: str) -> np.ndarray:
    a = np.asarray(x, dtype=float)
    if a.ndim == 1:
        a = a.reshape(-1, 1)
    if a.ndim != 2:
        raise DomainError(f"{name} must be a (n, d) array, got shape {a.shape}")
    return a


@dataclass(frozen=True)
class DataSequence:
    """The data available when deciding whether to issue a set at time t.

    ``x``/``y`` hold the online labeled history (times ``1..t-1``),
    ``test_x`` the covariates of the test point (time ``t``).  An offline
    block, when present, precedes the online points.  Cutoffs are only
    required by cutoff-based selection rules and travel with their points.
    """

    x: np.ndarray
    y: np.ndarray
    test_x: np.ndarray
    offline_x: np.ndarray | None = None
    offline_y: np.ndarray | None = None
    cutoffs: np.ndarray | None = None
    test_cutoff: float | None = None
    offline_cutoffs: np.ndarray | None = None

    def __post_init__(self) -> None:
        x = _as_matrix(self.x, "x") if np.size(self.x) else np.zeros((0, np.size(self.test_x)))
        y = np.asarray(self.y, dtype=float).reshape(-1)
        test_x = np.asarray(self.test_x, dtype=float).reshape(-1)
        if x.shape[0] != y.shape[0]:
            raise DomainError(f"x has {x.shape[0]} rows but y has {y.shape[0]} entries")
        if x.shape[0] and x.shape[1] != test_x.shape[0]:
            raise DomainError("feature dimension differs between history and test point")
        if not np.all(np.isfinite(y)):
            raise DomainError("labels must be finite")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "test_x", test_x)
        if (self.offline_x is None) != (self.offline_y is None):
            raise DomainError("offline covariates and labels must be given together")
        if self.offline_x is not None:
            ox = _as_matrix(self.offline_x, "offline_x")
            oy = np.asarray(self.offline_y, dtype=float).reshape(-1)
            if ox.shape[0] != oy.shape[0]:
                raise DomainError("offline x/y length mismatch")
            if ox.shape[0] and ox.shape[1] != test_x.shape[0]:
                raise DomainError("offline feature dimension differs from test point")
            object.__setattr__(self, "offline_x", ox)
            object.__setattr__(self, "offline_y", oy)
        if self.cutoffs is not None:
            c = np.asarray(self.cutoffs, dtype=float).reshape(-1)
            if c.shape[0] != y.shape[0]:
                raise DomainError("cutoffs length must match the labeled history")
            if self.test_cutoff is None:
                raise DomainError("test_cutoff required when history cutoffs are given")
            object.__setattr__(self, "cutoffs", c)
        if self.offline_cutoffs is not None:
            oc = np.asarray(self.offline_cutoffs, dtype=float).reshape(-1)
            if self.offline_y is None or oc.shape[0] != self.offline_y.shape[0]:
                raise DomainError("offline cutoffs length mismatch")
            object.__setattr__(self, "offline_cutoffs", oc)

    @classmethod
    def from_points(
        cls,
        labeled: Sequence[LabeledPoint],
        test_x,
        test_cutoff: float | None = None,
        offline: Sequence[LabeledPoint] | None = None,
    ) -> "DataSequence":
        test_x = np.asarray(test_x, dtype=float).reshape(-1)
        d = test_x.shape[0]
        xs = np.array([p.x for p in labeled], dtype=float).reshape(len(labeled), d)
        ys = np.array([p.y for p in labeled], dtype=float)
        have_cut = any(p.cutoff is not None for p in labeled) or test_cutoff is not None
        cut = np.array([np.nan if p.cutoff is None else p.cutoff for p in labeled]) if have_cut else None
        kw = {}
        if offline:
            kw["offline_x"] = np.array([p.x for p in offline], dtype=float).reshape(len(offline), d)
            kw["offline_y"] = np.array([p.y for p in offline], dtype=float)
            if have_cut:
                kw["offline_cutoffs"] = np.array(
                    [np.nan if p.cutoff is None else p.cutoff for p in offline]
                )
        return cls(xs, ys, test_x, cutoffs=cut, test_cutoff=test_cutoff, **kw)

    # -- geometry -----------------------------------------------------

    @property
    def n_offline(self) -> int:
        return 0 if self.offline_y is None else int(self.offline_y.shape[0])

    @property
    def t(self) -> int:
        """Online time index of the test point."""
        return int(self.y.shape[0]) + 1

    @property
    def n_slots(self) -> int:
        return self.n_offline + self.t

    @property
    def index_range(self) -> range:
        """Classic indices: offline -n_off+1..0, online 1..t."""
        return range(-self.n_offline + 1, self.t + 1)

    def full_x(self) -> np.ndarray:
        parts = []
        if self.n_offline:
            parts.append(self.offline_x)
        parts.append(self.x)
        parts.append(self.test_x.reshape(1, -1))
        return np.concatenate(parts, axis=0)

    def full_y(self) -> np.ndarray:
        """Labels in slot order; the unknown test label is NaN."""
        parts = []
        if self.n_offline:
            parts.append(self.offline_y)
        parts.append(self.y)
        parts.append(np.array([np.nan]))
        return np.concatenate(parts)

    def full_cutoffs(self) -> np.ndarray | None:
        if self.cutoffs is None:
            return None
        parts = []
        if self.n_offline:
            if self.offline_cutoffs is None:
                raise DomainError("offline block present but offline cutoffs missing")
            parts.append(self.offline_cutoffs)
        parts.append(self.cutoffs)
        parts.append(np.array([self.test_cutoff], dtype=float))
        return np.concatenate(parts)


@dataclass(frozen=True)
class OrderedSequence:
    """A concrete ordered sequence as consumed by rules and scores.

    The labeled prefix occupies slots ``0 .. n-2``; the final slot exposes
    covariates only.  ``n_offline`` marks how many leading slots belong to
    the offline block (slot positions keep that designation even after the
    contents are permuted).
    """

    prefix_x: np.ndarray
    prefix_y: np.ndarray
    final_x: np.ndarray
    prefix_cutoffs: np.ndarray | None = None
    final_cutoff: float | None = None
    n_offline: int = 0

    @property
    def length(self) -> int:
        return int(self.prefix_y.shape[0]) + 1

    @property
    def online_length(self) -> int:
        return self.length - self.n_offline

    def prefix(self, i: int) -> "OrderedSequence":
        """The sequence visible at online step ``i``: offline block plus the
        first ``i-1`` online slots labeled, the ``i``-th online slot as test."""
        if not 1 <= i <= self.online_length:
            raise DomainError(f"prefix step {i} outside 1..{self.online_length}")
        if i == self.online_length:
            return self
        k = self.n_offline + i - 1  # slot that becomes the final one
        return OrderedSequence(
            prefix_x=self.prefix_x[:k],
            prefix_y=self.prefix_y[:k],
            final_x=self.prefix_x[k],
            prefix_cutoffs=None if self.prefix_cutoffs is None else self.prefix_cutoffs[:k],
            final_cutoff=None if self.prefix_cutoffs is None else float(self.prefix_cutoffs[k]),
            n_offline=self.n_offline,
        )


def _check_order(order: tuple[int, ...]) -> None:
    if sorted(order) != list(range(len(order))):
        raise DomainError(f"not a permutation of 0..{len(order) - 1}: {order!r}")


@dataclass(frozen=True)
class Permutation:
    """A bijection on the slots of a sequence.

    ``order[s]`` is the original slot whose point occupies slot ``s`` after
    permuting.  ``index_start`` records the classic index of slot 0 so the
    mapping can be reported in time-index coordinates.
    """

    order: tuple[int, ...]
    index_start: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "order", tuple(int(v) for v in self.order))
        _check_order(self.order)

    @classmethod
    def identity(cls, n: int, index_start: int = 1) -> "Permutation":
        if n < 1:
            raise DomainError("permutation domain must be non-empty")
        return cls(tuple(range(n)), index_start)

    @property
    def n(self) -> int:
        return len(self.order)

    def is_identity(self) -> bool:
        return all(v == s for s, v in enumerate(self.order))

    def as_mapping(self) -> dict[int, int]:
        """{slot index -> original index} in classic coordinates."""
        s0 = self.index_start
        return {s0 + s: s0 + p for s, p in enumerate(self.order)}

    def inverse(self) -> "Permutation":
        inv = [0] * self.n
        for s, p in enumerate(self.order):
            inv[p] = s
        return Permutation(tuple(inv), self.index_start)

    def compose(self, other: "Permutation") -> "Permutation":
        """self after other: slot s gets other.order[self.order[s]]."""
        if self.n != other.n:
            raise DomainError("cannot compose permutations of different sizes")
        return Permutation(tuple(other.order[p] for p in self.order), self.index_start)


@dataclass(frozen=True)
class PermutationSample:
    """A Monte-Carlo batch of permutations of one slot range.

    ``matrix`` has one permutation per row; rows were drawn i.i.d. uniform
    (with replacement, so duplicates carry multiplicity).  Reference sets
    append the identity on top of the sample; a sampled row that happens
    to equal it still counts as an ordinary draw.
    """

    matrix: np.ndarray
    seed: int
    n_points: int
    index_start: int = 1

    def __post_init__(self) -> None:
        m = np.asarray(self.matrix, dtype=np.int64)
        if m.ndim != 2 or m.shape[1] != self.n_points:
            raise DomainError(f"permutation matrix must be (M, {self.n_points})")
        if m.size and not np.array_equal(np.sort(m, axis=1), np.tile(np.arange(self.n_points), (m.shape[0], 1))):
            raise DomainError("a row of the permutation matrix is not a bijection")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def m(self) -> int:
        return int(self.matrix.shape[0])

    def __len__(self) -> int:
        return self.m

    def __iter__(self) -> Iterator[Permutation]:
        for row in self.matrix:
            yield Permutation(tuple(int(v) for v in row), self.index_start)


@dataclass(frozen=True)
class MultiTestData:
    """Calibration data plus several unlabeled test points."""

    calib_x: np.ndarray
    calib_y: np.ndarray
    test_x: np.ndarray

    def __post_init__(self) -> None:
        cx = _as_matrix(self.calib_x, "calib_x")
        cy = np.asarray(self.calib_y, dtype=float).reshape(-1)
        tx = _as_matrix(self.test_x, "test_x")
        if cx.shape[0] != cy.shape[0]:
            raise DomainError("calibration x/y length mismatch")
        if cx.shape[1] != tx.shape[1]:
            raise DomainError("feature dimension differs between calibration and test")
        object.__setattr__(self, "calib_x", cx)
        object.__setattr__(self, "calib_y", cy)
        object.__setattr__(self, "test_x", tx)

    @property
    def n(self) -> int:
        return int(self.calib_y.shape[0])

    @property
    def m(self) -> int:
        return int(self.test_x.shape[0])
