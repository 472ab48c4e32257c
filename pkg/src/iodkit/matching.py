"""One-to-one assignment of targets to predictions.

The cost of pairing target i with prediction j is the negated class
agreement plus the box regression loss; rows of background targets cost
nothing. The minimum-cost perfect assignment is solved exactly, with ties
broken toward the lexicographically smallest permutation.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .geometry import box_loss_matrix
from .labels import LabeledSet, foreground_mask

__all__ = ["CostMatrix", "Assignment", "build_cost", "hungarian", "brute_force_match"]

BRUTE_FORCE_LIMIT = 8


@dataclass
class CostMatrix:
    """Square pairing-cost matrix; rows index targets, columns predictions."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def validate(self) -> None:
        if self.values.ndim != 2 or self.values.shape[0] != self.values.shape[1]:
            raise ValueError("cost matrix must be square")
        if not np.isfinite(self.values).all():
            raise ValueError("non-finite entry")


@dataclass(frozen=True)
class Assignment:
    """A permutation sigma: target i -> prediction sigma[i], and its cost."""

    sigma: np.ndarray
    total_cost: float

    def validate(self, cost: CostMatrix | None = None) -> None:
        n = self.sigma.shape[0]
        if sorted(self.sigma.tolist()) != list(range(n)):
            raise ValueError("sigma is not a permutation")
        if cost is not None:
            expect = _path_cost(cost.values, self.sigma)
            if abs(expect - self.total_cost) > 1e-9:
                raise ValueError("total_cost does not match the matrix")


def _path_cost(values: np.ndarray, sigma: np.ndarray) -> float:
    # fsum keeps tie comparisons independent of summation order.
    return math.fsum(values[i, sigma[i]] for i in range(len(sigma)))


def build_cost(targets: LabeledSet, preds: LabeledSet, gamma1: float, gamma2: float) -> CostMatrix:
    """Pairing cost between every target row and prediction column.

    Entry (i, j) is ``-<p_hat_j, p_i> + box_loss(b_hat_j, b_i)`` over the
    full distribution including background; rows whose target is
    background are identically zero.
    """
    if len(targets) != len(preds):
        raise ValueError(f"length mismatch: {len(targets)} targets vs {len(preds)} predictions")
    class_cost = -(targets.probs @ preds.probs.T)
    box_cost = box_loss_matrix(preds.boxes, targets.boxes, gamma1, gamma2).T
    values = class_cost + box_cost
    values[~foreground_mask(targets.probs)] = 0.0
    return CostMatrix(values)


def hungarian(cost: CostMatrix, *, refine_ties: bool = True) -> Assignment:
    """Exact minimum-cost perfect assignment.

    With ``refine_ties=True`` (default) the lexicographically smallest
    permutation among all optimal ones is returned; with False the solver
    output is used directly (still optimal and deterministic, and it
    matches the refined answer whenever the optimum over the nonzero rows
    is unique). Training loops disable refinement for speed.
    """
    cost.validate()
    values = cost.values
    n = values.shape[0]
    if n == 0:
        return Assignment(np.zeros(0, dtype=np.int64), 0.0)

    zero_rows = ~values.any(axis=1)
    sigma = np.full(n, -1, dtype=np.int64)
    busy = np.flatnonzero(~zero_rows)
    if busy.size:
        _, cols = linear_sum_assignment(values[busy])
        sigma[busy] = cols
    free_cols = sorted(set(range(n)) - set(sigma[busy].tolist()))
    sigma[np.flatnonzero(zero_rows)] = free_cols

    if refine_ties:
        sigma = _lexicographic_min(values, sigma)
    return Assignment(sigma, _path_cost(values, sigma))


def _lexicographic_min(values: np.ndarray, sigma0: np.ndarray) -> np.ndarray:
    """Smallest permutation (in lexicographic order) among optimal assignments.

    Fixes rows top-down: a column smaller than the working solution's
    choice is accepted exactly when the remaining subproblem can still
    reach the same optimal total. Tie tests compare exact fsum totals, so
    only genuine value ties (not rounding noise) divert the assignment.
    """
    n = values.shape[0]
    rows = list(range(n))
    avail = list(range(n))
    working = {i: int(sigma0[i]) for i in rows}
    out = np.empty(n, dtype=np.int64)

    for i in rows:
        remaining = [r for r in range(n) if r > i]
        v_rem = math.fsum(values[r, working[r]] for r in [i] + remaining)
        chosen = working[i]
        for j in avail:
            if j == chosen:
                break
            sub_rows = remaining
            sub_cols = [c for c in avail if c != j]
            if sub_rows:
                sub = values[np.ix_(sub_rows, sub_cols)]
                ri, ci = linear_sum_assignment(sub)
                v_sub = math.fsum(sub[a, b] for a, b in zip(ri, ci))
            else:
                v_sub = 0.0
            if values[i, j] + v_sub == v_rem:
                chosen = j
                for a, b in zip(ri if sub_rows else [], ci if sub_rows else []):
                    working[sub_rows[a]] = sub_cols[b]
                break
        out[i] = chosen
        working.pop(i, None)
        avail.remove(chosen)
    return out


def brute_force_match(cost: CostMatrix) -> Assignment:
    """Exhaustive-minimum oracle; first (lexicographically) among exact ties."""
    cost.validate()
    n = cost.n
    if n > BRUTE_FORCE_LIMIT:
        raise ValueError(f"brute force limited to N <= {BRUTE_FORCE_LIMIT}, got {n}")
    values = cost.values
    best_sigma = None
    best_cost = math.inf
    for perm in itertools.permutations(range(n)):
        c = math.fsum(values[i, perm[i]] for i in range(n))
        if c < best_cost:
            best_cost = c
            best_sigma = perm
    return Assignment(np.array(best_sigma, dtype=np.int64), best_cost)
