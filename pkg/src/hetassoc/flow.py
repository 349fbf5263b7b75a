"""Min-cost flow on the user -> BS transportation network.

Network: source -> user k (capacity 1) -> BS j (gain ``w[k, j]``) -> sink.
The BS -> sink arcs are unit parallel arcs whose costs ``unit_cost[j, n-1]``
(cost of the n-th user served by BS j) must be nondecreasing in n; ``inf``
marks units beyond the BS's capacity.  With all-zero unit costs this is the
capacitated assignment LP, whose constraint matrix is totally unimodular, so
the flow optimum is integral and solves the 0/1 problem exactly.

Forbidden links carry ``w = -inf``.

Two routines share the network:

* :func:`successive_shortest_paths` grows the flow one unit at a time along a
  cheapest augmenting path.  Because J is small, the shortest-path search
  runs on the BS nodes only: a path enters at BS ``j`` via a free user and
  may hop ``j -> j'`` by moving a user currently served by ``j`` to ``j'``.
* :func:`cancel_negative_cycles` starts from any feasible assignment and
  removes negative residual cycles until none is left, which certifies
  optimality.
"""

from __future__ import annotations

import numpy as np

GAIN_EPS = 1e-12


class InfeasibleError(ValueError):
    """Mandatory association cannot place every user within the capacities."""


def capacity_unit_costs(capacities, width: int | None = None) -> np.ndarray:
    """Zero cost for the first ``L_j`` units at every BS, ``inf`` afterwards."""
    cap = np.asarray(capacities, dtype=int)
    width = int(max(cap.max(initial=0), 1) if width is None else width)
    n = np.arange(1, width + 1)
    return np.where(n[None, :] <= cap[:, None], 0.0, np.inf)


def _unit_cost(unit_cost: np.ndarray, j: int, n: int) -> float:
    """Cost of the n-th unit (1-based) at BS j."""
    if n < 1:
        return 0.0
    return float(unit_cost[j, n - 1]) if n <= unit_cost.shape[1] else np.inf


def _check_inputs(w, unit_cost):
    w = np.asarray(w, dtype=float)
    if w.ndim != 2:
        raise ValueError("weight matrix must be K x J")
    if np.any(np.isnan(w)) or np.any(w == np.inf):
        raise ValueError("weights must be finite or -inf (forbidden link)")
    unit_cost = np.asarray(unit_cost, dtype=float)
    if unit_cost.shape[0] != w.shape[1]:
        raise ValueError("need one row of unit costs per BS")
    finite = np.where(np.isfinite(unit_cost), unit_cost, np.finfo(float).max)
    if np.any(np.isnan(unit_cost)) or np.any(np.diff(finite, axis=1) < -1e-12):
        raise ValueError("unit costs must be nondecreasing (convex sink arcs)")
    return w, unit_cost


def successive_shortest_paths(w, unit_cost, mandatory: bool = False) -> np.ndarray:
    """Maximize ``sum w[k, j] x[k, j] - sum_j sum_{n<=load_j} unit_cost[j, n-1]``.

    Returns the per-user BS choice (``-1`` for unassigned).  In optional mode
    augmentation stops as soon as the best path no longer gains; in mandatory
    mode every user must be placed or :class:`InfeasibleError` is raised.
    Ties resolve to the lowest user index, then the lowest BS index.
    """
    w, unit_cost = _check_inputs(w, unit_cost)
    K, J = w.shape
    choice = np.full(K, -1, dtype=int)
    load = np.zeros(J, dtype=int)
    users = np.arange(K)

    for _ in range(K):
        free = choice < 0
        if not free.any() or J == 0:
            break
        # entry cost: a free user joins BS j
        entry_cost = np.full(J, np.inf)
        entry_user = np.full(J, -1)
        cand = np.where(free[:, None], -w, np.inf)
        if cand.size:
            entry_user = np.argmin(cand, axis=0)
            entry_cost = cand[entry_user, np.arange(J)]

        # hop cost j -> j': move a user served by j over to j'
        hop_cost = np.full((J, J), np.inf)
        hop_user = np.full((J, J), -1)
        served = ~free
        if served.any():
            own = np.where(served, w[users, np.maximum(choice, 0)], 0.0)
            delta = own[:, None] - w  # +inf where the target link is forbidden
            for j in range(J):
                members = np.flatnonzero(choice == j)
                if members.size:
                    sub = delta[members]
                    idx = np.argmin(sub, axis=0)
                    hop_cost[j] = sub[idx, np.arange(J)]
                    hop_user[j] = members[idx]
            np.fill_diagonal(hop_cost, np.inf)

        # Bellman-Ford over the BS nodes; no negative cycles while the flow is optimal
        dist = entry_cost.copy()
        pred = np.full(J, -1)
        for _ in range(J):
            via = dist[:, None] + hop_cost
            best_from = np.argmin(via, axis=0)
            best = via[best_from, np.arange(J)]
            better = best < dist - 1e-15
            if not better.any():
                break
            dist = np.where(better, best, dist)
            pred = np.where(better, best_from, pred)

        exit_cost = np.array([_unit_cost(unit_cost, j, load[j] + 1) for j in range(J)])
        total = dist + exit_cost
        end = int(np.argmin(total))
        if not np.isfinite(total[end]):
            if mandatory:
                raise InfeasibleError("no augmenting path left; capacities or candidate links too tight")
            break
        if not mandatory and -total[end] <= GAIN_EPS:
            break

        # walk back from the exit BS, moving users along the path
        j = end
        seen = set()
        while pred[j] >= 0:
            if j in seen:
                raise RuntimeError("cycle in shortest-path tree")
            seen.add(j)
            prev = int(pred[j])
            k = int(hop_user[prev, j])
            choice[k] = j
            j = prev
        choice[int(entry_user[j])] = j
        load[end] += 1

    if mandatory and np.any(choice < 0):
        raise InfeasibleError("some users could not be placed")
    return choice


def assignment_value(w, unit_cost, choice) -> float:
    w = np.asarray(w, dtype=float)
    choice = np.asarray(choice)
    k = np.flatnonzero(choice >= 0)
    total = float(w[k, choice[k]].sum()) if k.size else 0.0
    for j in range(w.shape[1]):
        n = int(np.sum(choice == j))
        total -= sum(_unit_cost(unit_cost, j, m) for m in range(1, n + 1))
    return total


def _residual_arcs(w, unit_cost, choice, mandatory):
    """Residual arcs as (tail, head, cost, kind, payload) with nodes
    0 = source, 1..K = users, K+1..K+J = BSs, K+J+1 = sink."""
    K, J = w.shape
    s, t = 0, K + J + 1
    load = np.bincount(choice[choice >= 0], minlength=J)
    tails, heads, costs = [], [], []
    for k in range(K):
        u = 1 + k
        if choice[k] < 0:
            tails.append(s); heads.append(u); costs.append(0.0)
        else:
            jb = K + 1 + choice[k]
            tails.append(u); heads.append(s); costs.append(0.0)
            tails.append(jb); heads.append(u); costs.append(float(w[k, choice[k]]))
        for j in range(J):
            if j != choice[k] and np.isfinite(w[k, j]):
                tails.append(u); heads.append(K + 1 + j); costs.append(-float(w[k, j]))
    for j in range(J):
        nxt = _unit_cost(unit_cost, j, load[j] + 1)
        if np.isfinite(nxt):
            tails.append(K + 1 + j); heads.append(t); costs.append(nxt)
        if load[j] > 0:
            tails.append(t); heads.append(K + 1 + j); costs.append(-_unit_cost(unit_cost, j, load[j]))
    if not mandatory:
        # circulation arc lets the total number of served users change
        tails.append(t); heads.append(s); costs.append(0.0)
        if load.sum() > 0:
            tails.append(s); heads.append(t); costs.append(0.0)
    # in mandatory mode source arcs stay saturated: drop source->user arcs
    arcs = np.array(tails), np.array(heads), np.array(costs)
    if mandatory:
        keep = ~((arcs[0] == s) & (arcs[1] != t))
        arcs = tuple(a[keep] for a in arcs)
    return arcs


def _find_negative_cycle(n_nodes, tails, heads, costs, tol):
    dist = np.zeros(n_nodes)
    pred = np.full(n_nodes, -1)
    last = -1
    for _ in range(n_nodes):
        cand = dist[tails] + costs
        order = np.lexsort((cand, heads))
        first = np.ones(order.size, dtype=bool)
        first[1:] = heads[order][1:] != heads[order][:-1]
        best_arc = order[first]
        v = heads[best_arc]
        improve = cand[best_arc] < dist[v] - tol
        if not improve.any():
            return None
        dist[v[improve]] = cand[best_arc[improve]]
        pred[v[improve]] = best_arc[improve]
        last = int(v[improve][0])
    # step back n times to land on the cycle
    x = last
    for _ in range(n_nodes):
        x = int(tails[pred[x]])
    cycle = []
    y = x
    while True:
        a = int(pred[y])
        cycle.append(a)
        y = int(tails[a])
        if y == x:
            break
        if len(cycle) > n_nodes:
            return None
    return cycle[::-1]


def cancel_negative_cycles(w, unit_cost, choice, mandatory: bool = False,
                           max_cycles: int = 100_000, tol: float = 1e-10):
    """Improve a feasible assignment until no negative residual cycle remains.

    Returns ``(choice, n_cancelled)``.  The result is optimal for the same
    objective :func:`successive_shortest_paths` maximizes.
    """
    w, unit_cost = _check_inputs(w, unit_cost)
    K, J = w.shape
    choice = np.array(choice, dtype=int)
    load = np.bincount(choice[choice >= 0], minlength=J)
    for j in range(J):
        if not np.isfinite(_unit_cost(unit_cost, j, load[j]) if load[j] else 0.0):
            raise ValueError(f"starting assignment overloads BS {j}")
    if mandatory and np.any(choice < 0):
        raise ValueError("mandatory mode needs every user assigned in the starting point")
    n_nodes = K + J + 2
    s = 0
    cancelled = 0
    while cancelled < max_cycles:
        tails, heads, costs = _residual_arcs(w, unit_cost, choice, mandatory)
        cycle = _find_negative_cycle(n_nodes, tails, heads, costs, tol)
        if cycle is None:
            return choice, cancelled
        # a simple cycle leaves each user node by exactly one arc, which fixes its new BS
        for a in cycle:
            u, v = int(tails[a]), int(heads[a])
            if 1 <= u <= K:
                choice[u - 1] = v - K - 1 if v != s else -1
        cancelled += 1
    raise RuntimeError("cycle cancelling did not terminate")
