"""Joint resource allocation and user association under log utility.

Each BS owns one unit of resource (all its resource blocks) and splits it
among its users as shares ``beta[k, j]``.  For a fixed association the best
split is equal shares, so the problem reduces to choosing ``x`` to maximize

    sum_{k,j} x[k, j] * ln(c[k, j]) - sum_j n_j ln n_j,    n_j = sum_k x[k, j]

in nats.  :func:`dual_decomposition` attacks the relaxed problem with load
variables ``xi_j = n_j`` priced by multipliers ``lambda_j`` and a
diminishing subgradient step.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

import numpy as np

from .assign import (BRUTE_FORCE_MAX_BS, BRUTE_FORCE_MAX_USERS, MANDATORY, OPTIONAL,
                     Assignment, SizeError, _rates_and_mask, _row_options)
from .flow import (InfeasibleError, cancel_negative_cycles, capacity_unit_costs,
                   successive_shortest_paths)


@dataclass(frozen=True)
class ResourceAllocation:
    beta: np.ndarray

    def __post_init__(self):
        b = np.array(self.beta, dtype=float)
        if b.ndim != 2 or np.any(b < 0) or np.any(b > 1):
            raise ValueError("beta must be a K x J matrix with entries in [0, 1]")
        b.flags.writeable = False
        object.__setattr__(self, "beta", b)

    def check(self, assignment: Assignment, atol: float = 1e-12) -> "ResourceAllocation":
        if np.any(self.beta.sum(axis=0) > 1 + atol):
            raise ValueError("a BS hands out more than its whole resource")
        if np.any((self.beta > 0) & (assignment.x == 0)):
            raise ValueError("resource given on a link that is not associated")
        return self


def ln_rates(c) -> np.ndarray:
    """Natural log of candidate rates, ``-inf`` on forbidden or zero links."""
    rates, mask = _rates_and_mask(c)
    with np.errstate(divide="ignore"):
        out = np.log(rates)
    return np.where(mask & (rates > 0), out, -np.inf)


def equal_share_beta(assignment: Assignment) -> ResourceAllocation:
    x = assignment.x.astype(float)
    n = x.sum(axis=0)
    return ResourceAllocation(np.divide(x, n, out=np.zeros_like(x), where=n > 0))


def joint_utility(assignment: Assignment, beta, c) -> float:
    """``sum x ln(c * beta)`` in nats; unassigned users contribute 0."""
    b = beta.beta if isinstance(beta, ResourceAllocation) else np.asarray(beta, dtype=float)
    rates, _ = _rates_and_mask(c)
    on = assignment.x == 1
    prod = rates[on] * b[on]
    if np.any(prod <= 0):
        raise ValueError("an associated user has zero rate or zero resource (utility -inf)")
    return float(np.log(prod).sum())


def load_penalty(n) -> np.ndarray:
    """``n ln n`` with ``0 ln 0 = 0``."""
    n = np.asarray(n, dtype=float)
    return np.where(n > 0, n * np.log(np.where(n > 0, n, 1.0)), 0.0)


def joint_unit_costs(capacities) -> np.ndarray:
    """Marginal ``n ln n - (n-1) ln(n-1)`` of the n-th user at each BS."""
    cap = np.asarray(capacities, dtype=int)
    width = int(max(cap.max(initial=0), 1))
    n = np.arange(1, width + 1)
    marg = load_penalty(n) - load_penalty(n - 1)
    return np.where(n[None, :] <= cap[:, None], marg[None, :], np.inf)


def _choice_value(lnc, choice) -> float:
    k = np.flatnonzero(choice >= 0)
    loads = np.bincount(choice[k], minlength=lnc.shape[1])
    return float(lnc[k, choice[k]].sum() - load_penalty(loads).sum())


def brute_force_joint(c, capacities, mode: str = OPTIONAL):
    """Enumerate every association, give each equal shares, keep the best.

    Returns ``(assignment, beta, value)``; ties go to the lexicographically
    smallest ``x``.
    """
    lnc = ln_rates(c)
    K, J = lnc.shape
    cap = np.asarray(capacities, dtype=int)
    if K > BRUTE_FORCE_MAX_USERS or J > BRUTE_FORCE_MAX_BS:
        raise SizeError(f"brute force limited to K<={BRUTE_FORCE_MAX_USERS}, J<={BRUTE_FORCE_MAX_BS}")
    mandatory = mode == MANDATORY
    if mandatory and cap.sum() < K:
        raise InfeasibleError(f"{K} users but total capacity {cap.sum()}")
    opts = _row_options(J, mandatory)
    if K == 0:
        a = Assignment.empty(0, J, mode)
        return a, equal_share_beta(a), 0.0

    n_tail = min(K, 6)
    n_head = K - n_tail
    tails = np.array(list(itertools.product(opts, repeat=n_tail)), dtype=int).reshape(-1, n_tail)
    tail_load = np.stack([(tails == j).sum(axis=1) for j in range(J)], axis=1)
    cols = np.arange(n_head, K)[None, :]
    lv = np.where(tails >= 0, lnc[cols, np.maximum(tails, 0)], 0.0)
    tail_ok = np.isfinite(lv).all(axis=1)
    tail_sum = np.where(tail_ok, np.where(np.isfinite(lv), lv, 0.0).sum(axis=1), 0.0)

    best_val, best = -np.inf, None
    for head in itertools.product(opts, repeat=n_head):
        hl = np.zeros(J, dtype=int)
        hv = 0.0
        ok = True
        for i, j in enumerate(head):
            if j >= 0:
                if not np.isfinite(lnc[i, j]):
                    ok = False
                    break
                hv += lnc[i, j]
                hl[j] += 1
        if not ok or np.any(hl > cap):
            continue
        loads = tail_load + hl
        feasible = tail_ok & np.all(loads <= cap, axis=1)
        if not feasible.any():
            continue
        vals = hv + tail_sum - load_penalty(loads).sum(axis=1)
        vals = np.where(feasible, vals, -np.inf)
        i = int(np.argmax(vals))
        if vals[i] > best_val:
            best_val = vals[i]
            best = np.concatenate([np.array(head, dtype=int), tails[i]])
    if best is None:
        raise InfeasibleError("no feasible association")
    a = Assignment.from_choices(best, J, mode)
    beta = equal_share_beta(a)
    return a, beta, joint_utility(a, beta, c)


@dataclass
class DualTrace:
    lam: np.ndarray
    xi: np.ndarray
    loads: np.ndarray
    utility: np.ndarray

    def __len__(self):
        return len(self.utility)

    def records(self):
        for i in range(len(self)):
            yield {
                "t": i + 1,
                "lambda": [float(v) for v in self.lam[i]],
                "xi": [float(v) for v in self.xi[i]],
                "assigned_per_bs": [int(v) for v in self.loads[i]],
                "utility": float(self.utility[i]),
            }

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.records())


@dataclass
class JointResult:
    assignment: Assignment
    beta: ResourceAllocation
    value: float
    converged: bool
    iterations: int
    trace: DualTrace
    iterate_value: float = field(default=-np.inf)
    cycles_cancelled: int = 0


def _repair(choice, lnc, cap, mandatory):
    """Make an iterate feasible: overloaded BSs keep their strongest users."""
    choice = choice.copy()
    K, J = lnc.shape
    dropped = []
    for j in range(J):
        members = np.flatnonzero(choice == j)
        if members.size > cap[j]:
            order = members[np.lexsort((members, -lnc[members, j]))]
            for k in order[cap[j]:]:
                choice[k] = -1
                dropped.append(k)
    if mandatory:
        loads = np.bincount(choice[choice >= 0], minlength=J)
        for k in sorted(dropped):
            room = np.where(loads < cap, lnc[k], -np.inf)
            j = int(np.argmax(room))
            if not np.isfinite(room[j]):
                return None
            choice[k] = j
            loads[j] += 1
        if np.any(choice < 0):
            return None
    return choice


def dual_decomposition(c, capacities, theta: float = 1.0, gamma: float = 10.0,
                       max_iter: int = 5000, tol: float = 1e-4, patience: int = 10,
                       mandatory: bool = False) -> JointResult:
    """Two-layer dual decomposition with step ``theta / (t + gamma)``.

    Per iteration each user picks ``argmax_j ln c[k, j] - lambda_j`` (and, in
    optional mode, connects only if that score is nonnegative); each BS sets
    ``xi_j = min(L_j, exp(lambda_j - 1))`` and moves ``lambda_j`` against the
    mismatch ``xi_j - n_j``.  The run counts as converged once the association
    has stayed fixed with ``|xi_j - n_j| < tol`` for ``patience`` iterations.

    Users tied at the dual optimum make the iterates oscillate, so the
    association returned is recovered from them: the best capacity-feasible
    iterate is polished by residual-cycle cancelling, which also certifies
    that no better integral association exists.
    """
    if theta <= 0 or gamma <= 0:
        raise ValueError("theta and gamma must be positive")
    lnc = ln_rates(c)
    K, J = lnc.shape
    cap = np.asarray(capacities, dtype=int)
    if cap.shape != (J,):
        raise ValueError(f"need {J} capacities")
    if mandatory:
        if cap.sum() < K:
            raise InfeasibleError(f"{K} users but total capacity {cap.sum()}")
        if np.any(~np.isfinite(lnc).any(axis=1)):
            raise InfeasibleError("a user has no candidate BS")

    live_bs = np.isfinite(lnc).any(axis=0)
    lam = np.zeros(J)
    lam_hist = np.zeros((max_iter, J))
    xi_hist = np.zeros((max_iter, J))
    load_hist = np.zeros((max_iter, J), dtype=int)
    util_hist = np.zeros(max_iter)
    users = np.arange(K)

    seen: dict[bytes, float] = {}
    best_val, best_choice = -np.inf, None
    prev = None
    streak = 0
    converged = False
    t = 0
    for t in range(1, max_iter + 1):
        score = lnc - lam
        jstar = np.argmax(score, axis=1) if J else np.zeros(K, dtype=int)
        top = score[users, jstar] if J else np.full(K, -np.inf)
        on = np.isfinite(top) if mandatory else np.isfinite(top) & (top >= 0)
        choice = np.where(on, jstar, -1)
        loads = np.bincount(choice[on], minlength=J)

        xi = np.minimum(cap, np.exp(lam - 1.0))
        mismatch = xi - loads
        lam_hist[t - 1], xi_hist[t - 1], load_hist[t - 1] = lam, xi, loads
        util_hist[t - 1] = _choice_value(lnc, choice)

        key = choice.tobytes()
        if key not in seen:
            fixed = _repair(choice, lnc, cap, mandatory)
            seen[key] = -np.inf if fixed is None else _choice_value(lnc, fixed)
            if seen[key] > best_val:
                best_val, best_choice = seen[key], fixed

        lam = lam - theta / (t + gamma) * mismatch

        if prev is not None and np.array_equal(choice, prev) and np.all(np.abs(mismatch[live_bs]) < tol):
            streak += 1
        else:
            streak = 0
        prev = choice
        if streak >= patience:
            converged = True
            break

    trace = DualTrace(lam_hist[:t], xi_hist[:t], load_hist[:t], util_hist[:t])
    unit = joint_unit_costs(cap)
    if best_choice is None:
        if mandatory:
            best_choice = successive_shortest_paths(np.where(np.isfinite(lnc), 0.0, -np.inf),
                                                    capacity_unit_costs(cap), mandatory=True)
        else:
            best_choice = np.full(K, -1)
        best_val = _choice_value(lnc, best_choice)
    final, n_cycles = cancel_negative_cycles(lnc, unit, best_choice, mandatory=mandatory)
    a = Assignment.from_choices(final, J, MANDATORY if mandatory else OPTIONAL)
    beta = equal_share_beta(a)
    value = joint_utility(a, beta, c)
    return JointResult(a, beta, value, converged, t, trace, best_val, n_cycles)


def dual_decomposition_mandatory(c, capacities, **kwargs) -> JointResult:
    """Same iteration with every user forced to connect."""
    return dual_decomposition(c, capacities, mandatory=True, **kwargs)


def greedy_joint_global(c):
    """Best remaining pair takes its BS's whole resource; user and BS leave."""
    lnc = ln_rates(c)
    K, J = lnc.shape
    avail = lnc.copy()
    choice = np.full(K, -1)
    while avail.size:
        flat = int(np.argmax(avail))
        k, j = divmod(flat, J)
        if not avail[k, j] > 0:
            break
        choice[k] = j
        avail[k, :] = -np.inf
        avail[:, j] = -np.inf
    a = Assignment.from_choices(choice, J)
    return a, equal_share_beta(a)


def greedy_joint_per_bs(c):
    """BSs in index order each serve their single best remaining user, if ln c > 0."""
    lnc = ln_rates(c)
    K, J = lnc.shape
    choice = np.full(K, -1)
    for j in range(J):
        col = np.where(choice < 0, lnc[:, j], -np.inf)
        if col.size == 0:
            break
        k = int(np.argmax(col))
        if col[k] > 0:
            choice[k] = j
    a = Assignment.from_choices(choice, J)
    return a, equal_share_beta(a)
