"""Capacity-constrained user association: exact, brute-force and greedy solvers.

Every solver works on a K x J weight matrix ``w`` and per-BS capacities
``L``.  Forbidden links are ``-inf``.  For sum-rate maximization the weights
are the rates themselves; for proportional fairness they are ``log2`` of the
rates, which is equivalent because a user is served by at most one BS, so
``log2(sum_j x c) == sum_j x log2(c)`` on every feasible assignment.
"""

from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass

import numpy as np

from .flow import InfeasibleError, capacity_unit_costs, successive_shortest_paths
from .model import RateMatrix

OPTIONAL = "optional"
MANDATORY = "mandatory"

BRUTE_FORCE_MAX_USERS = 10
BRUTE_FORCE_MAX_BS = 4


class SizeError(ValueError):
    """Instance too large for exhaustive enumeration."""


@dataclass(frozen=True, eq=False)
class Assignment:
    """Binary K x J association matrix.

    Every user has at most one BS, exactly one in mandatory mode.  Capacity
    and candidacy depend on the instance and are checked by ``violations``.
    """

    x: np.ndarray
    mode: str = OPTIONAL

    def __post_init__(self):
        x = np.array(self.x, dtype=np.int8)
        if x.ndim != 2:
            raise ValueError("assignment must be a K x J matrix")
        if not np.isin(x, (0, 1)).all():
            raise ValueError("assignment entries must be 0 or 1")
        if self.mode not in (OPTIONAL, MANDATORY):
            raise ValueError(f"unknown mode {self.mode!r}")
        rows = x.sum(axis=1)
        if np.any(rows > 1):
            raise ValueError(f"users {np.flatnonzero(rows > 1).tolist()} have several BSs")
        if self.mode == MANDATORY and np.any(rows != 1):
            raise ValueError("mandatory mode leaves users unassigned")
        x.flags.writeable = False
        object.__setattr__(self, "x", x)

    def __eq__(self, other):
        if not isinstance(other, Assignment):
            return NotImplemented
        return self.mode == other.mode and np.array_equal(self.x, other.x)

    __hash__ = None

    @classmethod
    def from_choices(cls, choice, n_bs: int, mode: str = OPTIONAL) -> "Assignment":
        choice = np.asarray(choice, dtype=int)
        x = np.zeros((choice.size, n_bs), dtype=np.int8)
        k = np.flatnonzero(choice >= 0)
        x[k, choice[k]] = 1
        return cls(x, mode)

    @classmethod
    def empty(cls, n_users: int, n_bs: int, mode: str = OPTIONAL) -> "Assignment":
        return cls(np.zeros((n_users, n_bs), dtype=np.int8), mode)

    @property
    def shape(self) -> tuple[int, int]:
        return self.x.shape

    @property
    def choices(self) -> np.ndarray:
        """Serving BS per user, -1 when unassigned."""
        return np.where(self.x.any(axis=1), self.x.argmax(axis=1), -1)

    @property
    def loads(self) -> np.ndarray:
        return self.x.sum(axis=0).astype(int)

    def value(self, w) -> float:
        w = np.asarray(w, dtype=float)
        return float(np.sum(w[self.x == 1]))

    def violations(self, capacities, mask=None) -> list[str]:
        out = []
        over = np.flatnonzero(self.loads > np.asarray(capacities))
        if over.size:
            out.append(f"BSs {over.tolist()} exceed their capacity")
        if mask is not None and np.any(self.x.astype(bool) & ~np.asarray(mask, dtype=bool)):
            out.append("assignment uses non-candidate links")
        return out

    def check(self, capacities, mask=None) -> "Assignment":
        problems = self.violations(capacities, mask)
        if problems:
            raise ValueError("; ".join(problems))
        return self

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["user_id", "bs_id"])
        for k, j in enumerate(self.choices):
            if j >= 0:
                wr.writerow([k, int(j)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, n_users: int, n_bs: int, mode: str = OPTIONAL) -> "Assignment":
        choice = np.full(n_users, -1)
        for row in csv.DictReader(io.StringIO(text)):
            choice[int(row["user_id"])] = int(row["bs_id"])
        return cls.from_choices(choice, n_bs, mode)


def _weights(w) -> np.ndarray:
    if isinstance(w, RateMatrix):
        return w.masked()
    w = np.array(w, dtype=float)
    if w.ndim != 2:
        raise ValueError("weights must be a K x J matrix")
    if np.any(np.isnan(w)) or np.any(w == np.inf):
        raise ValueError("weights must be finite or -inf")
    return w


def _rates_and_mask(c):
    if isinstance(c, RateMatrix):
        return c.rates, c.candidate_mask
    c = np.array(c, dtype=float)
    if c.ndim != 2:
        raise ValueError("rates must be a K x J matrix")
    return c, np.ones(c.shape, dtype=bool)


def log_weights(c) -> np.ndarray:
    """``log2(c)`` on candidate links with ``c > 0``, ``-inf`` elsewhere."""
    rates, mask = _rates_and_mask(c)
    with np.errstate(divide="ignore"):
        lw = np.log2(rates)
    return np.where(mask & (rates > 0), lw, -np.inf)


def _check_capacities(capacities, J):
    cap = np.asarray(capacities, dtype=int)
    if cap.shape != (J,):
        raise ValueError(f"need {J} capacities, got shape {cap.shape}")
    if np.any(cap < 0):
        raise ValueError("capacities must be nonnegative")
    return cap


def solve_max_weight(w, capacities, mode: str = OPTIONAL) -> Assignment:
    """Maximum-weight capacitated assignment via min-cost flow.

    Optional mode never takes a link whose inclusion does not strictly raise
    the objective, so negative weights are left out.  Mandatory mode places
    every user and raises :class:`~hetassoc.flow.InfeasibleError` when the
    capacities cannot hold them.
    """
    w = _weights(w)
    K, J = w.shape
    cap = _check_capacities(capacities, J)
    mandatory = mode == MANDATORY
    if mode not in (OPTIONAL, MANDATORY):
        raise ValueError(f"unknown mode {mode!r}")
    if mandatory and cap.sum() < K:
        raise InfeasibleError(f"{K} users but total capacity {cap.sum()}")
    choice = successive_shortest_paths(w, capacity_unit_costs(cap), mandatory=mandatory)
    return Assignment.from_choices(choice, J, mode)


def _row_options(J: int, mandatory: bool) -> list[int]:
    # ordered so that the lexicographically smallest x-row comes first:
    # unassigned (all zeros), then BS J-1, ..., BS 0
    opts = list(range(J - 1, -1, -1))
    return opts if mandatory else [-1] + opts


def brute_force_assignment(w, capacities, mode: str = OPTIONAL) -> Assignment:
    """Exhaustive search over all ``(J+1)^K`` per-user choices.

    Ties go to the lexicographically smallest ``x`` (flattened row-major).
    The enumeration is split into a Python loop over the leading users and
    a vectorized table of all tails, which keeps K=10, J=4 tractable.
    """
    w = _weights(w)
    K, J = w.shape
    cap = _check_capacities(capacities, J)
    if K > BRUTE_FORCE_MAX_USERS or J > BRUTE_FORCE_MAX_BS:
        raise SizeError(f"brute force limited to K<={BRUTE_FORCE_MAX_USERS}, J<={BRUTE_FORCE_MAX_BS}")
    mandatory = mode == MANDATORY
    if mandatory and cap.sum() < K:
        raise InfeasibleError(f"{K} users but total capacity {cap.sum()}")
    opts = _row_options(J, mandatory)
    if K == 0:
        return Assignment.empty(0, J, mode)

    n_tail = min(K, 6)
    n_head = K - n_tail
    tail_users = np.arange(n_head, K)
    tails = np.array(list(itertools.product(opts, repeat=n_tail)), dtype=int).reshape(-1, n_tail)
    onehot = np.zeros(tails.shape + (J,), dtype=np.int16)
    for j in range(J):
        onehot[..., j] = tails == j
    tail_load = onehot.sum(axis=1)
    wt = np.where(tails >= 0, w[tail_users[None, :], np.maximum(tails, 0)], 0.0)
    bad = ~np.isfinite(wt)
    tail_val = np.where(bad, 0.0, wt).sum(axis=1)
    tail_ok = ~bad.any(axis=1)

    best_val, best = -np.inf, None
    for head in itertools.product(opts, repeat=n_head):
        head = np.array(head, dtype=int)
        hv = 0.0
        hl = np.zeros(J, dtype=int)
        ok = True
        for i, j in enumerate(head):
            if j >= 0:
                if not np.isfinite(w[i, j]):
                    ok = False
                    break
                hv += w[i, j]
                hl[j] += 1
        if not ok or np.any(hl > cap):
            continue
        feasible = tail_ok & np.all(tail_load + hl <= cap, axis=1)
        if not feasible.any():
            continue
        vals = np.where(feasible, hv + tail_val, -np.inf)
        i = int(np.argmax(vals))
        if vals[i] > best_val:
            best_val = vals[i]
            best = np.concatenate([head, tails[i]])
    if best is None:
        raise InfeasibleError("no feasible assignment")
    return Assignment.from_choices(best, J, mode)


def sum_rate_optimal(c, capacities) -> tuple[Assignment, float]:
    rates, mask = _rates_and_mask(c)
    a = solve_max_weight(np.where(mask, rates, -np.inf), capacities, OPTIONAL)
    return a, a.value(rates)


def propfair_optimal(c, capacities) -> tuple[Assignment, float]:
    """Proportional-fair association; value is ``sum_k log2(eta_k)`` with U(0)=0."""
    a = solve_max_weight(log_weights(c), capacities, OPTIONAL)
    return a, utility(a, c, alpha=1)


def ub1(c) -> float:
    """Upper bound ``sum_k max_j log2 c[k, j]`` on the proportional-fair optimum.

    Users whose best candidate rate is <= 1 contribute 0.
    """
    lw = log_weights(c)
    if lw.size == 0:
        return 0.0
    best = lw.max(axis=1, initial=-np.inf)
    return float(np.sum(np.where(best > 0, best, 0.0)))


def utility(assignment: Assignment, c, alpha: int = 0) -> float:
    """Network utility for alpha in {0, 1}: sum rate or sum of log2 rates."""
    rates, _ = _rates_and_mask(c)
    eta = (assignment.x * rates).sum(axis=1)
    if alpha == 0:
        return float(eta.sum())
    if alpha == 1:
        with np.errstate(divide="ignore"):
            u = np.where(eta > 0, np.log2(np.where(eta > 0, eta, 1.0)), 0.0)
        return float(u.sum())
    raise ValueError("only alpha = 0 (sum rate) and alpha = 1 (proportional fairness) are supported")


def greedy_global(w, capacities, positive_only: bool = False) -> Assignment:
    """Repeatedly take the largest remaining (user, BS) weight with spare capacity.

    ``positive_only`` is the log-utility variant: stop once no positive weight
    is left.  Ties go to the lower user index, then the lower BS index.
    """
    w = _weights(w)
    K, J = w.shape
    left = _check_capacities(capacities, J).copy()
    choice = np.full(K, -1)
    avail = w.copy()
    avail[:, left == 0] = -np.inf
    while True:
        flat = int(np.argmax(avail)) if avail.size else 0
        if avail.size == 0 or not np.isfinite(avail.flat[flat]):
            break
        k, j = divmod(flat, J)
        if positive_only and avail[k, j] <= 0:
            break
        choice[k] = j
        left[j] -= 1
        avail[k, :] = -np.inf
        if left[j] == 0:
            avail[:, j] = -np.inf
    return Assignment.from_choices(choice, J)


def greedy_per_bs(w, capacities, positive_only: bool = False) -> Assignment:
    """Visit BSs in index order; each fills its capacity with its best remaining users."""
    w = _weights(w)
    K, J = w.shape
    cap = _check_capacities(capacities, J)
    choice = np.full(K, -1)
    for j in range(J):
        for _ in range(cap[j]):
            col = np.where(choice < 0, w[:, j], -np.inf)
            if col.size == 0:
                break
            k = int(np.argmax(col))
            if not np.isfinite(col[k]) or (positive_only and col[k] <= 0):
                break
            choice[k] = j
    return Assignment.from_choices(choice, J)


def greedy_sum_rate(c, capacities, per_bs: bool = False) -> tuple[Assignment, float]:
    rates, mask = _rates_and_mask(c)
    fn = greedy_per_bs if per_bs else greedy_global
    a = fn(np.where(mask, rates, -np.inf), capacities)
    return a, utility(a, c, 0)


def greedy_propfair(c, capacities, per_bs: bool = False) -> tuple[Assignment, float]:
    fn = greedy_per_bs if per_bs else greedy_global
    a = fn(log_weights(c), capacities, positive_only=True)
    return a, utility(a, c, 1)
