"""Distributed association as repeated games between a provider and users.

Price game: the provider binary-searches each user's weight with probe
prices ``w_hat * log2(c)``, then prices every link at the user's valuation
(or a hair above it on links it does not want used).  Bidding game: users
bid their valuation to their best remaining BS, BSs hold their top ``L_j``
bids and reject the rest, which is capacitated deferred acceptance.

Valuations are ``omega_k * log2(c[k, j])``; bids and probe prices are
clipped at zero.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .assign import OPTIONAL, Assignment, _rates_and_mask, solve_max_weight


@dataclass
class GameTrace:
    """Append-only per-round log shared by both games."""

    rounds: list = field(default_factory=list)

    def append(self, **record) -> None:
        self.rounds.append(record)

    def __len__(self):
        return len(self.rounds)

    def __getitem__(self, i):
        return self.rounds[i]

    def column(self, key):
        return [r[key] for r in self.rounds]

    def to_jsonl(self, verbose: bool = False) -> str:
        lines = []
        for r in self.rounds:
            rec = {
                "round": r["round"],
                "prices_or_bids_digest": digest(r["matrix"]),
                "connections": [int(v) for v in r["connections"]],
                "provider_utility": float(r["provider_utility"]),
                "user_utility_sum": float(r["user_utility_sum"]),
                "waiting_lists": [[int(k) for k in wl] for wl in r.get("waiting_lists", [])],
            }
            if verbose:
                rec["matrix"] = _jsonable(r["matrix"])
                for key in ("phase", "omega_hat", "omega_lower", "omega_upper", "capacity_violations"):
                    if key in r:
                        rec[key] = _jsonable(r[key])
            lines.append(json.dumps(rec, sort_keys=True) + "\n")
        return "".join(lines)


def _jsonable(v):
    if isinstance(v, np.ndarray):
        v = v.tolist()
    if isinstance(v, list):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.floating, float)):
        f = float(v)
        return f if np.isfinite(f) else str(f)
    if isinstance(v, np.integer):
        return int(v)
    return v


def digest(matrix) -> str:
    """Stable short hash of a price or bid matrix."""
    m = np.round(np.asarray(matrix, dtype=float), 12)
    payload = json.dumps(_jsonable(m)).encode()
    return hashlib.sha256(payload).hexdigest()[:16]


def valuations(c, weights) -> np.ndarray:
    """``omega_k log2 c[k, j]`` on candidate links, ``-inf`` elsewhere."""
    rates, mask = _rates_and_mask(c)
    with np.errstate(divide="ignore"):
        lg = np.log2(rates)
    ok = mask & (rates > 0)
    return np.where(ok, np.asarray(weights, dtype=float)[:, None] * np.where(ok, lg, 0.0), -np.inf)


def user_best_response(prices_row, c_row, omega, mask_row=None):
    """BS index the user connects to at these prices, or ``None``."""
    c_row = np.asarray(c_row, dtype=float)
    ok = c_row > 0 if mask_row is None else np.asarray(mask_row, dtype=bool) & (c_row > 0)
    if not ok.any():
        return None
    with np.errstate(divide="ignore"):
        value = np.where(ok, omega * np.log2(np.where(ok, c_row, 1.0)), -np.inf)
    surplus = value - np.asarray(prices_row, dtype=float)
    j = int(np.argmax(surplus))
    return j if surplus[j] >= 0 else None


def _respond_all(prices, vals):
    """Vectorized best response for every user; -1 means not connected."""
    surplus = vals - prices
    j = np.argmax(surplus, axis=1)
    top = surplus[np.arange(len(j)), j]
    return np.where(np.isfinite(top) & (top >= 0), j, -1)


def _payoffs(choice, prices, vals):
    k = np.flatnonzero(choice >= 0)
    paid = prices[k, choice[k]]
    return float(paid.sum()), float((vals[k, choice[k]] - paid).sum())


@dataclass
class PriceGameResult:
    prices: np.ndarray
    assignment: Assignment
    trace: GameTrace
    converged: bool
    probe_rounds: np.ndarray
    estimates: np.ndarray
    provider_utility: float
    user_utilities: np.ndarray

    @property
    def rounds(self) -> int:
        return int(self.probe_rounds.max(initial=0))


def _candidates_in(weight_set, lo, hi, hi_open):
    above = weight_set >= lo
    below = weight_set < hi if hi_open else weight_set <= hi
    return weight_set[above & below]


def price_game_run(c, true_weights, weight_set, capacities, epsilon: float = 1e-6,
                   max_rounds: int = 64, omega_min: float = 0.0,
                   evaluation: str = "log") -> PriceGameResult:
    """Provider-sets-price game.

    Probing: every unresolved user is offered ``w_hat = (upper + lower) / 2``
    on all its links; connecting raises the lower bound to ``w_hat``,
    staying away lowers the upper bound.  A user is resolved once at most
    one element of ``weight_set`` is consistent with its answers.  Then the
    provider solves the assignment problem on the estimated valuations and
    prices selected links at the valuation and every other link ``epsilon``
    higher.

    ``evaluation="linear"`` uses ``w_hat * c`` for the valuation matrix
    instead of ``w_hat * log2 c`` (for comparison only).  Capacity is not
    enforced while probing; violations are logged in the trace.
    """
    rates, mask = _rates_and_mask(c)
    K, J = rates.shape
    W = np.unique(np.asarray(weight_set, dtype=float))
    if W.size == 0 or W[0] <= omega_min:
        raise ValueError("weight_set must be nonempty with every weight above omega_min")
    omega = np.asarray(true_weights, dtype=float)
    if omega.shape != (K,):
        raise ValueError("need one true weight per user")
    if not np.all(np.isin(omega, W)):
        raise ValueError("true weights must belong to weight_set")
    if evaluation not in ("log", "linear"):
        raise ValueError("evaluation must be 'log' or 'linear'")
    cap = np.asarray(capacities, dtype=int)

    vals = valuations(c, omega)
    unit_vals = valuations(c, np.ones(K))  # log2 c, -inf off-candidate
    lower = np.full(K, float(omega_min))
    upper = np.full(K, float(W[-1]))
    upper_open = np.zeros(K, dtype=bool)
    estimate = np.full(K, np.nan)
    probes = np.zeros(K, dtype=int)
    trace = GameTrace()

    def resolve():
        for k in np.flatnonzero(np.isnan(estimate)):
            cand = _candidates_in(W, lower[k], upper[k], upper_open[k])
            if cand.size <= 1:
                estimate[k] = cand[0] if cand.size else lower[k]

    resolve()
    t = 0
    while np.isnan(estimate).any():
        if t >= max_rounds:
            break
        t += 1
        active = np.isnan(estimate)
        w_hat = np.where(active, 0.5 * (upper + lower), estimate)
        with np.errstate(invalid="ignore"):
            prices = np.maximum(w_hat[:, None] * np.where(np.isfinite(unit_vals), unit_vals, 0.0), 0.0)
        choice = _respond_all(prices, vals)
        connected = choice >= 0
        provider_u, user_u = _payoffs(choice, prices, vals)
        loads = np.bincount(choice[connected], minlength=J)
        trace.append(round=t, phase="probe", matrix=prices, connections=choice,
                     provider_utility=provider_u, user_utility_sum=user_u,
                     omega_hat=w_hat.copy(), omega_lower=lower.copy(), omega_upper=upper.copy(),
                     capacity_violations=np.flatnonzero(loads > cap).tolist(), waiting_lists=[])
        probes[active] += 1
        # feedback: one chosen BS raises the lower bound, none lowers the upper bound
        up = active & connected
        down = active & ~connected
        lower[up] = w_hat[up]
        upper[down] = w_hat[down]
        upper_open[down] = True
        resolve()

    converged = not np.isnan(estimate).any()
    if not converged:
        estimate = np.where(np.isnan(estimate), lower, estimate)

    if evaluation == "log":
        V = estimate[:, None] * np.where(np.isfinite(unit_vals), unit_vals, 0.0)
        V = np.where(np.isfinite(unit_vals), V, -np.inf)
    else:
        V = np.where(np.isfinite(unit_vals), estimate[:, None] * rates, -np.inf)
    selected = solve_max_weight(V, cap, OPTIONAL)
    sel = selected.x == 1
    prices = np.where(sel, V, np.maximum(np.where(np.isfinite(V), V, 0.0), 0.0) + epsilon)

    choice = _respond_all(prices, vals)
    provider_u, user_u = _payoffs(choice, prices, vals)
    loads = np.bincount(choice[choice >= 0], minlength=J)
    t += 1
    trace.append(round=t, phase="final", matrix=prices, connections=choice,
                 provider_utility=provider_u, user_utility_sum=user_u,
                 omega_hat=estimate.copy(), omega_lower=lower.copy(), omega_upper=upper.copy(),
                 capacity_violations=np.flatnonzero(loads > cap).tolist(), waiting_lists=[])
    assignment = Assignment.from_choices(choice, J)
    user_utils = np.zeros(K)
    on = np.flatnonzero(choice >= 0)
    user_utils[on] = vals[on, choice[on]] - prices[on, choice[on]]
    return PriceGameResult(prices, assignment, trace, converged, probes, estimate,
                           provider_u, user_utils)


@dataclass(frozen=True)
class Deviation:
    """A profitable unilateral move; ``bs == -1`` means disconnecting."""

    player: str
    user: int
    bs: int
    gain: float
    price: float | None = None


def verify_ne(prices, assignment, c, weights, capacities, tol: float = 1e-9):
    """Check that neither a user nor the provider can gain by deviating alone.

    Users may switch to any candidate BS or disconnect.  The provider may
    change one price entry; the affected user then best-responds and the
    move only counts if the target BS has room.  Returns ``(ok, witness)``.
    """
    prices = np.asarray(prices, dtype=float)
    vals = valuations(c, weights)
    choice = assignment.choices if isinstance(assignment, Assignment) else np.asarray(assignment)
    K, J = vals.shape
    cap = np.asarray(capacities, dtype=int)
    loads = np.bincount(choice[choice >= 0], minlength=J)
    surplus = vals - prices

    for k in range(K):
        cur = surplus[k, choice[k]] if choice[k] >= 0 else 0.0
        # staying out always pays 0
        alt, target = 0.0, -1
        if J:
            j = int(np.argmax(surplus[k]))
            if surplus[k, j] > alt:
                alt, target = float(surplus[k, j]), j
        if alt > cur + tol:
            return False, Deviation("user", k, target, float(alt - cur))

    for k in range(K):
        paid = prices[k, choice[k]] if choice[k] >= 0 else 0.0
        for j in range(J):
            if not np.isfinite(vals[k, j]):
                continue
            room = loads[j] - (choice[k] == j) + 1 <= cap[j]
            if not room:
                continue
            others = np.delete(surplus[k], j)
            outside = max(0.0, float(others.max(initial=-np.inf)))
            best_price = vals[k, j] - outside
            if best_price > paid + tol:
                return False, Deviation("provider", k, j, float(best_price - paid), float(best_price))
    return True, None


@dataclass
class BiddingResult:
    assignment: Assignment
    trace: GameTrace
    converged: bool
    rounds: int
    active_rounds: int
    bids: np.ndarray
    bid_history: list
    provider_utility: float


def bidding_game_run(c, weights, capacities, max_rounds: int | None = None) -> BiddingResult:
    """User-bidding game (capacitated deferred acceptance).

    Each round every user not held on a waiting list bids its clipped
    valuation to its favourite BS among those that have not rejected it;
    held users repeat their standing bid.  Each BS keeps its top ``L_j``
    bids and rejects the rest for good.  The game ends with the first round
    in which no waiting list changes and nobody is rejected; ``rounds``
    counts that quiet round, ``active_rounds`` does not.
    """
    vals = valuations(c, weights)
    K, J = vals.shape
    cap = np.asarray(capacities, dtype=int)
    bids = np.where(np.isfinite(vals), np.maximum(vals, 0.0), -np.inf)
    if max_rounds is None:
        max_rounds = K * J + 2
    rejected = ~np.isfinite(bids)
    held = [[] for _ in range(J)]
    placed = np.full(K, -1)
    trace = GameTrace()
    history = [[] for _ in range(K)]
    converged = False
    r = 0
    while r < max_rounds:
        r += 1
        pools = [list(h) for h in held]
        submitted = np.full((K, J), np.nan)
        for k in range(K):
            if placed[k] >= 0:
                j = placed[k]
            else:
                avail = np.where(rejected[k], -np.inf, bids[k])
                if not np.isfinite(avail).any():
                    continue
                j = int(np.argmax(avail))
                pools[j].append(k)
            submitted[k, j] = bids[k, j]
            history[k].append(float(bids[k, j]))
        new_held = []
        n_rejected = 0
        for j in range(J):
            pool = sorted(set(pools[j]), key=lambda k: (-bids[k, j], k))
            keep, drop = pool[:cap[j]], pool[cap[j]:]
            n_rejected += len(drop)
            for k in drop:
                rejected[k, j] = True
                placed[k] = -1
            for k in keep:
                placed[k] = j
            new_held.append(sorted(keep))
        changed = n_rejected > 0 or new_held != [sorted(h) for h in held]
        held = new_held
        provider_u = float(sum(bids[k, j] for j in range(J) for k in held[j]))
        trace.append(round=r, matrix=np.where(np.isnan(submitted), 0.0, submitted), connections=placed.copy(),
                     provider_utility=provider_u, user_utility_sum=provider_u,
                     waiting_lists=[list(h) for h in held],
                     list_minimum=[_list_floor(bids, h, j, cap[j]) for j, h in enumerate(held)])
        if not changed:
            converged = True
            break
    assignment = Assignment.from_choices(placed, J)
    return BiddingResult(assignment, trace, converged, r, r - 1 if converged else r,
                         bids, history, float(trace[-1]["provider_utility"]) if len(trace) else 0.0)


def _list_floor(bids, holders, j, cap_j):
    """Lowest bid needed to stay on the list; an open slot counts as a zero bid."""
    if len(holders) < cap_j or not holders:
        return 0.0
    return float(min(bids[k, j] for k in holders))


def verify_stability(matching, bids, capacities):
    """Look for a blocking pair ``(k, j)``.

    User ``k`` blocks with BS ``j`` if it strictly prefers ``j`` (higher bid
    value than where it sits, or than 0 when unplaced) and ``j`` has a free
    slot or holds a strictly lower bid.  Returns ``(stable, pair_or_None)``.
    """
    bids = np.asarray(bids, dtype=float)
    choice = matching.choices if isinstance(matching, Assignment) else np.asarray(matching)
    K, J = bids.shape
    cap = np.asarray(capacities, dtype=int)
    loads = np.bincount(choice[choice >= 0], minlength=J)
    if np.any(loads > cap):
        raise ValueError("matching exceeds a capacity")
    floor = np.full(J, np.inf)
    for j in range(J):
        members = np.flatnonzero(choice == j)
        if members.size:
            floor[j] = bids[members, j].min()
    for k in range(K):
        cur = bids[k, choice[k]] if choice[k] >= 0 else 0.0
        for j in range(J):
            if j == choice[k] or not np.isfinite(bids[k, j]) or not bids[k, j] > cur:
                continue
            if loads[j] < cap[j] or floor[j] < bids[k, j]:
                return False, (k, j)
    return True, None
