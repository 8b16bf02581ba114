"""Generic selection-calibrated permutation inference.

For a candidate label ``y``, the reference set collects the sampled
permutations under which the imputed, permuted sequence would still be
selected (the identity is always a member, with multiplicity one); the
p-value compares the identity's conformity score against the scores over
that reference set.  Everything here works for arbitrary rules and
scores by direct evaluation — the closed-form module reproduces these
answers without enumerating candidate labels.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError, DomainError, PreconditionError
from .permutations import permute_with_imputation
from .quantiles import exceeds_level
from .rules import SelectionRule, SelectionTaxonomy
from .scores import ConformityScore, LastPointScore
from .sets import FiniteLabelSet, ThresholdSet
from .types import DataSequence, MultiTestData, PermutationSample

__all__ = [
    "SelectionPValue",
    "pemi_pvalue",
    "pemi_pvalue_randomized",
    "pemi_set_finite",
    "pemi_set_grid",
    "reference_mask",
    "MultiTestRule",
    "TopPredictionRule",
    "multi_test_pvalue",
    "multi_test_set_grid",
    "multi_test_threshold_set",
]


@dataclass(frozen=True)
class SelectionPValue:
    """A permutation p-value over a selection-preserving reference set.

    ``value = exceed_count / ref_size`` for the deterministic form; the
    randomized form stores the strict-exceedance and tie counts plus the
    uniform draw that mixed them.
    """

    value: float
    ref_size: int
    exceed_count: int
    tie_count: int | None = None
    u: float | None = None

    def exceeds(self, alpha: float) -> bool:
        """p > alpha; exact count arithmetic for the deterministic form."""
        if self.tie_count is None:
            return exceeds_level(self.exceed_count, self.ref_size, alpha)
        return self.value > alpha


def _check_domain(data: DataSequence, perms: PermutationSample) -> None:
    if perms.n_points != data.n_slots:
        raise DomainError(
            f"permutations act on {perms.n_points} slots but the sequence has {data.n_slots}"
        )


def reference_mask(
    y: float,
    data: DataSequence,
    rule: SelectionRule,
    perms: PermutationSample,
    taxonomy: SelectionTaxonomy | None = None,
) -> np.ndarray:
    """Which sampled permutations preserve the selection event at ``y``.

    With a taxonomy, membership additionally requires the whole permuted
    selection trajectory to stay inside it.  The identity is not part of
    the sample and is accounted for separately by the p-value functions.
    """
    _check_domain(data, perms)
    out = np.zeros(perms.m, dtype=bool)
    for i, order in enumerate(perms.matrix):
        seq = permute_with_imputation(data, order, y)
        if taxonomy is None:
            out[i] = rule.select(seq)
        else:
            traj = rule.trajectory(seq)
            out[i] = traj[-1] == 1 and taxonomy.contains(traj)
    return out


def _scores_for(
    y: float,
    data: DataSequence,
    score: ConformityScore,
    orders: np.ndarray,
) -> tuple[float, np.ndarray]:
    """Conformity score of the identity and of each permuted sequence."""
    if isinstance(score, LastPointScore):
        full_x = data.full_x()
        full_y = data.full_y()
        test_slot = data.n_slots - 1
        point_scores = np.empty(data.n_slots)
        if test_slot:
            point_scores[:test_slot] = score.of_points(full_x[:test_slot], full_y[:test_slot])
        point_scores[test_slot] = score.of_point(data.test_x, y)
        v0 = float(point_scores[test_slot])
        return v0, point_scores[orders[:, -1]] if orders.size else np.empty(0)
    # order-sensitive score: materialize each permuted labeled sequence
    full_x = data.full_x()
    full_y = data.full_y()
    full_y = np.where(np.isnan(full_y), y, full_y)
    v0 = float(score.of_sequence(full_x, full_y))
    vals = np.array(
        [score.of_sequence(full_x[order], full_y[order]) for order in orders]
    )
    return v0, vals


def pemi_pvalue(
    y: float,
    data: DataSequence,
    rule: SelectionRule,
    score: ConformityScore,
    perms: PermutationSample,
    taxonomy: SelectionTaxonomy | None = None,
) -> SelectionPValue:
    """Deterministic selection-calibrated p-value for candidate ``y``.

    Handles plain online sequences and sequences with an offline block
    alike: the permutations simply act on every slot the sequence has.
    """
    mask = reference_mask(y, data, rule, perms, taxonomy)
    v0, vals = _scores_for(y, data, score, perms.matrix[mask])
    exceed = 1 + int(np.sum(v0 <= vals))  # identity tie with itself included
    ref_size = 1 + int(mask.sum())
    return SelectionPValue(value=exceed / ref_size, ref_size=ref_size, exceed_count=exceed)


def pemi_pvalue_randomized(
    y: float,
    data: DataSequence,
    rule: SelectionRule,
    score: ConformityScore,
    perms: PermutationSample,
    u: float,
    taxonomy: SelectionTaxonomy | None = None,
) -> SelectionPValue:
    """Tie-broken p-value: strict exceedances plus ``u`` times the ties.

    One uniform draw is shared by every candidate label of the same time
    step; at ``u = 1`` the value coincides with the deterministic form.
    """
    if not 0 <= u <= 1:
        raise DomainError(f"tie-break uniform must be in [0,1], got {u}")
    mask = reference_mask(y, data, rule, perms, taxonomy)
    v0, vals = _scores_for(y, data, score, perms.matrix[mask])
    strict = int(np.sum(v0 < vals))
    ties = 1 + int(np.sum(v0 == vals))  # identity always ties with itself
    ref_size = 1 + int(mask.sum())
    return SelectionPValue(
        value=(strict + u * ties) / ref_size,
        ref_size=ref_size,
        exceed_count=strict,
        tie_count=ties,
        u=u,
    )


def pemi_set_finite(
    labels: Sequence[float],
    data: DataSequence,
    rule: SelectionRule,
    score: ConformityScore,
    perms: PermutationSample,
    alpha: float,
    u: float | None = None,
    taxonomy: SelectionTaxonomy | None = None,
) -> FiniteLabelSet:
    """{y in labels : p(y) > alpha} by direct enumeration."""
    if len(labels) == 0:
        raise DomainError("label set must be non-empty")
    keep = []
    for y in labels:
        if u is None:
            p = pemi_pvalue(y, data, rule, score, perms, taxonomy)
        else:
            p = pemi_pvalue_randomized(y, data, rule, score, perms, u, taxonomy)
        if p.exceeds(alpha):
            keep.append(float(y))
    return FiniteLabelSet(labels=tuple(keep))


def pemi_set_grid(
    grid: Sequence[float],
    data: DataSequence,
    rule: SelectionRule,
    score: ConformityScore,
    perms: PermutationSample,
    alpha: float,
    u: float | None = None,
    taxonomy: SelectionTaxonomy | None = None,
) -> np.ndarray:
    """Per-grid-point membership 1{p(y) > alpha}; a verification utility."""
    g = np.asarray(grid, dtype=float)
    if np.any(np.diff(g) < 0):
        raise DomainError("grid must be sorted")
    out = np.zeros(g.shape[0], dtype=bool)
    for i, y in enumerate(g):
        if u is None:
            p = pemi_pvalue(float(y), data, rule, score, perms, taxonomy)
        else:
            p = pemi_pvalue_randomized(float(y), data, rule, score, perms, u, taxonomy)
        out[i] = p.exceeds(alpha)
    return out


# ---------------------------------------------------------------------------
# multiple test points
# ---------------------------------------------------------------------------


class MultiTestRule:
    """Selects a subset of test indices given calibration data.

    Subclasses set ``covariate_only`` when the decision never reads
    calibration labels and ``symmetric_in_calibration`` when it is
    invariant to reordering the calibration rows.
    """

    covariate_only: bool = False
    symmetric_in_calibration: bool = False

    def select(
        self, calib_x: np.ndarray, calib_y: np.ndarray, test_x: np.ndarray
    ) -> frozenset[int]:
        raise NotImplementedError


@dataclass(frozen=True)
class TopPredictionRule(MultiTestRule):
    """Pick the k test points with the highest predicted values."""

    mu: Callable[[np.ndarray], np.ndarray]
    k: int = 1

    covariate_only = True
    symmetric_in_calibration = True

    def select(self, calib_x, calib_y, test_x) -> frozenset[int]:
        preds = np.asarray(self.mu(test_x), dtype=float)
        order = np.argsort(-preds, kind="stable")
        return frozenset(int(i) for i in order[: self.k])


def _multi_test_mask(
    y: float,
    data: MultiTestData,
    j: int,
    rule: MultiTestRule,
    orders: np.ndarray,
) -> np.ndarray:
    n = data.n
    pool_x = np.concatenate([data.calib_x, data.test_x[j].reshape(1, -1)], axis=0)
    pool_y = np.concatenate([data.calib_y, [y]])
    out = np.zeros(orders.shape[0], dtype=bool)
    test_x = data.test_x
    for i, order in enumerate(orders):
        calib_x = pool_x[order[:n]]
        calib_y = pool_y[order[:n]]
        if order[n] == n:
            tx = test_x
        else:
            tx = test_x.copy()
            tx[j] = pool_x[order[n]]
        out[i] = j in rule.select(calib_x, calib_y, tx)
    return out


def multi_test_pvalue(
    y: float,
    data: MultiTestData,
    j: int,
    rule: MultiTestRule,
    score: LastPointScore,
    perms: PermutationSample,
    require_selected: bool = True,
) -> SelectionPValue:
    """Selection-calibrated p-value for selected test index ``j``.

    Permutations act on the calibration points plus test point ``j``; the
    other test covariates are held fixed.  Precondition: ``j`` is in the
    observed selection (checked unless ``require_selected=False``).
    """
    if not 0 <= j < data.m:
        raise DomainError(f"test index {j} outside 0..{data.m - 1}")
    if perms.n_points != data.n + 1:
        raise DomainError("permutations must act on the calibration points plus one test point")
    if require_selected and j not in rule.select(data.calib_x, data.calib_y, data.test_x):
        raise PreconditionError(f"test index {j} was not selected on the observed data")
    mask = _multi_test_mask(y, data, j, rule, perms.matrix)
    point_scores = np.empty(data.n + 1)
    if data.n:
        point_scores[: data.n] = score.of_points(data.calib_x, data.calib_y)
    point_scores[data.n] = score.of_point(data.test_x[j], y)
    v0 = point_scores[data.n]
    vals = point_scores[perms.matrix[mask][:, -1]] if mask.any() else np.empty(0)
    exceed = 1 + int(np.sum(v0 <= vals))
    ref_size = 1 + int(mask.sum())
    return SelectionPValue(value=exceed / ref_size, ref_size=ref_size, exceed_count=exceed)


def multi_test_set_grid(
    grid: Sequence[float],
    data: MultiTestData,
    j: int,
    rule: MultiTestRule,
    score: LastPointScore,
    perms: PermutationSample,
    alpha: float,
) -> np.ndarray:
    g = np.asarray(grid, dtype=float)
    return np.array(
        [multi_test_pvalue(float(y), data, j, rule, score, perms).exceeds(alpha) for y in g]
    )


def multi_test_threshold_set(
    data: MultiTestData,
    j: int,
    rule: MultiTestRule,
    score: LastPointScore,
    perms: PermutationSample,
    alpha: float,
) -> ThresholdSet:
    """Single-threshold set for rules whose selection ignores labels."""
    from .quantiles import coverage_rank, kth_smallest_or_inf

    if not rule.covariate_only:
        raise ConfigurationError("threshold form needs a label-free multi-test rule")
    mask = _multi_test_mask(0.0, data, j, rule, perms.matrix)  # imputed label unused
    moved = perms.matrix[:, -1] != data.n
    sel_moved = mask & moved
    scores_moved = score.of_points(
        data.calib_x[perms.matrix[sel_moved][:, -1]], data.calib_y[perms.matrix[sel_moved][:, -1]]
    ) if sel_moved.any() else np.empty(0)
    ref_size = 1 + int(mask.sum())
    k = coverage_rank(alpha, ref_size)
    return ThresholdSet(kth_smallest_or_inf(k, scores_moved))
