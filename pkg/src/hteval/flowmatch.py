"""Matching under multiplicity constraints via minimum-cost flow.

The bipartite matching problem is cast on the network

    source -> treated_i   capacity [m_t, M_t], cost 0
    treated_i -> control_j capacity [0, 1],    cost d_ij
    control_j -> sink      capacity [m_c, M_c], cost 0

Lower bounds are realized by splitting each bounded arc into a mandatory
part carrying a large negative reward and a regular part, so a single
successive-shortest-paths sweep (with node potentials, hence real-valued
costs are fine) yields the minimum-cost flow at every feasible flow value
k at once. The resulting cost profile f(k) is convex, so f(k)/k is
unimodal and the optimal pair count for the average objective is located
by binary search over the profile; this is the fully warm-started version
of re-solving at each probed k.
"""
from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass

import numpy as np

from .datamodel import Match, MatchSpec
from .distances import DistanceMatrix

_TOL = 1e-9


class InfeasibleMatchError(ValueError):
    """No match satisfies the multiplicity bounds; message names the bound."""


@dataclass(frozen=True)
class MatchSolution:
    match: Match
    total: float
    average: float
    k: int


def feasible_pair_range(D: DistanceMatrix, spec: MatchSpec) -> tuple[int, int]:
    """[k_min, k_max] of attainable pair counts; raises if empty."""
    n_t, n_c = D.n_treated, D.n_control
    if spec.m_t > n_c:
        raise InfeasibleMatchError(
            f"lower bound m_t={spec.m_t} exceeds the {n_c} available controls"
        )
    if spec.m_c > n_t:
        raise InfeasibleMatchError(
            f"lower bound m_c={spec.m_c} exceeds the {n_t} available treated units"
        )
    k_min = max(n_t * spec.m_t, n_c * spec.m_c)
    k_max = min(n_t * min(spec.M_t, n_c), n_c * min(spec.M_c, n_t))
    if k_min > k_max:
        if n_t * spec.m_t > n_c * min(spec.M_c, n_t):
            raise InfeasibleMatchError(
                f"treated lower bounds need {n_t * spec.m_t} pairs but control "
                f"upper bounds admit at most {n_c * min(spec.M_c, n_t)}"
            )
        raise InfeasibleMatchError(
            f"control lower bounds need {n_c * spec.m_c} pairs but treated "
            f"upper bounds admit at most {n_t * min(spec.M_t, n_c)}"
        )
    return k_min, k_max


class _FlowSolver:
    """Successive shortest paths with potentials on the matching network."""

    def __init__(self, D: DistanceMatrix, spec: MatchSpec):
        n_t, n_c = D.n_treated, D.n_control
        self.n_t, self.n_c = n_t, n_c
        self.source = 0
        self.sink = n_t + n_c + 1
        n_nodes = n_t + n_c + 2
        self.big = float(np.sum(D.values)) + 1.0  # reward for mandatory arcs
        self.mandatory_units = n_t * spec.m_t + n_c * spec.m_c

        self.head: list[list[int]] = [[] for _ in range(n_nodes)]
        self.to: list[int] = []
        self.cap: list[int] = []
        self.cost: list[float] = []

        def add_arc(u, v, cap, cost):
            self.head[u].append(len(self.to))
            self.to.append(v)
            self.cap.append(cap)
            self.cost.append(cost)
            self.head[v].append(len(self.to))
            self.to.append(u)
            self.cap.append(0)
            self.cost.append(-cost)

        for i in range(n_t):
            node = 1 + i
            if spec.m_t > 0:
                add_arc(self.source, node, spec.m_t, -self.big)
            if spec.M_t > spec.m_t:
                add_arc(self.source, node, spec.M_t - spec.m_t, 0.0)
        self.edge_arc = np.empty((n_t, n_c), dtype=int)
        for i in range(n_t):
            for j in range(n_c):
                self.edge_arc[i, j] = len(self.to)
                add_arc(1 + i, 1 + n_t + j, 1, float(D.values[i, j]))
        for j in range(n_c):
            node = 1 + n_t + j
            if spec.m_c > 0:
                add_arc(node, self.sink, spec.m_c, -self.big)
            if spec.M_c > spec.m_c:
                add_arc(node, self.sink, spec.M_c - spec.m_c, 0.0)

        # Initial exact shortest distances by relaxation in topological
        # order (source -> treated -> controls -> sink); makes all reduced
        # costs nonnegative despite the negative mandatory arcs.
        pot = np.full(n_nodes, np.inf)
        pot[self.source] = 0.0
        for u in [self.source] + list(range(1, n_t + 1)) + list(
            range(n_t + 1, n_t + n_c + 1)
        ):
            if not np.isfinite(pot[u]):
                continue
            for a in self.head[u]:
                if self.cap[a] > 0:
                    v = self.to[a]
                    pot[v] = min(pot[v], pot[u] + self.cost[a])
        pot[~np.isfinite(pot)] = 0.0
        self.pot = pot
        self.flow = 0
        self.marginals: list[float] = []  # modified-cost marginal per unit

    def _shortest_path(self):
        # Ties among equal-length paths settle the lower-numbered node
        # first; together with arc insertion order this is the documented
        # deterministic tie rule for equally optimal flows.
        n = len(self.head)
        dist = [float("inf")] * n
        prev_arc = [-1] * n
        dist[self.source] = 0.0
        pq = [(0.0, self.source)]
        pot = self.pot
        while pq:
            du, u = heapq.heappop(pq)
            if du > dist[u] + 1e-12:
                continue
            if u == self.sink:
                break
            for a in self.head[u]:
                if self.cap[a] <= 0:
                    continue
                v = self.to[a]
                nd = du + self.cost[a] + pot[u] - pot[v]
                if nd < dist[v] - 1e-12:
                    dist[v] = nd
                    prev_arc[v] = a
                    heapq.heappush(pq, (nd, v))
        if not np.isfinite(dist[self.sink]):
            return None
        return dist, prev_arc

    def advance_to(self, k: int) -> int:
        """Augment until ``flow == k`` (or exhaustion); returns the flow."""
        while self.flow < k:
            res = self._shortest_path()
            if res is None:
                break
            dist, prev_arc = res
            d_sink = dist[self.sink]
            for v in range(len(self.pot)):
                if np.isfinite(dist[v]):
                    self.pot[v] += min(dist[v], d_sink)
                else:
                    self.pot[v] += d_sink
            # bottleneck and true path cost
            bottleneck = k - self.flow
            path_cost = 0.0
            v = self.sink
            while v != self.source:
                a = prev_arc[v]
                bottleneck = min(bottleneck, self.cap[a])
                path_cost += self.cost[a]
                v = self.to[a ^ 1]
            v = self.sink
            while v != self.source:
                a = prev_arc[v]
                self.cap[a] -= bottleneck
                self.cap[a ^ 1] += bottleneck
                v = self.to[a ^ 1]
            self.marginals.extend([path_cost] * bottleneck)
            self.flow += bottleneck
        return self.flow

    def edge_flows(self) -> np.ndarray:
        """0/1 matrix of matched pairs in the current flow."""
        arcs = self.edge_arc
        used = np.zeros(arcs.shape, dtype=bool)
        for i in range(self.n_t):
            for j in range(self.n_c):
                used[i, j] = self.cap[arcs[i, j]] == 0
        return used


def _cost_profile(D: DistanceMatrix, spec: MatchSpec):
    """True exact-k optimal costs f(k) for every feasible k, in one sweep."""
    k_min, k_max = feasible_pair_range(D, spec)
    solver = _FlowSolver(D, spec)
    reached = solver.advance_to(k_max)
    if reached < k_max:
        raise InfeasibleMatchError(
            f"network admits only {reached} pairs, below the requested {k_max}"
        )
    shift = solver.big * solver.mandatory_units
    f_tilde = np.concatenate(([0.0], np.cumsum(solver.marginals)))
    ks = np.arange(k_min, k_max + 1)
    f = f_tilde[ks] + shift
    return ks, f


def mcf_exact_pairs(
    D: DistanceMatrix, spec: MatchSpec, k: int
) -> tuple[float, Match]:
    """Minimum-total-cost match with exactly ``k`` pairs."""
    if k < 0:
        raise InfeasibleMatchError("pair count must be nonnegative")
    k_min, k_max = feasible_pair_range(D, spec)
    if not (k_min <= k <= k_max):
        raise InfeasibleMatchError(
            f"pair count {k} outside the feasible range [{k_min}, {k_max}]"
        )
    solver = _FlowSolver(D, spec)
    if solver.advance_to(k) < k:
        raise InfeasibleMatchError(f"cannot realize {k} pairs")
    used = solver.edge_flows()
    pairs = tuple(
        (int(i), int(j), float(D.values[i, j]))
        for i, j in zip(*np.nonzero(used))
    )
    match = Match(pairs=pairs)
    _check_bounds(match, spec, pruned=False)
    cost = float(sum(solver.marginals) + solver.big * solver.mandatory_units)
    return cost, match


def _check_bounds(match: Match, spec: MatchSpec, pruned: bool) -> None:
    t_deg = match.treated_degrees()
    c_deg = match.control_degrees()
    for deg in t_deg.values():
        low = 1 if pruned else spec.m_t
        if not (low <= deg <= spec.M_t):
            raise AssertionError("treated multiplicity bound violated")
    for deg in c_deg.values():
        low = 1 if pruned else spec.m_c
        if not (low <= deg <= spec.M_c):
            raise AssertionError("control multiplicity bound violated")


def _solution(D: DistanceMatrix, spec: MatchSpec, k: int) -> MatchSolution:
    total, match = mcf_exact_pairs(D, spec, k)
    avg = total / k if k > 0 else 0.0
    return MatchSolution(match=match, total=total, average=avg, k=k)


def min_total_match(D: DistanceMatrix, spec: MatchSpec) -> MatchSolution:
    """Minimize the total distance over all feasible pair counts.

    f(k) is nondecreasing (costs are nonnegative), so the optimum sits at
    the smallest k; ties over k go to the largest optimal k.
    """
    ks, f = _cost_profile(D, spec)
    f_min = float(f.min())
    best = int(ks[np.nonzero(f <= f_min + _TOL)[0][-1]])
    if best == 0:
        return MatchSolution(match=Match(pairs=()), total=0.0, average=0.0, k=0)
    return _solution(D, spec, best)


def min_avg_match(D: DistanceMatrix, spec: MatchSpec) -> MatchSolution:
    """Minimize the average distance f(k)/k by binary search on the
    unimodal per-pair cost; ties go to the largest optimal k."""
    ks, f = _cost_profile(D, spec)
    k_lo = max(int(ks[0]), 1)
    k_hi = int(ks[-1])
    if k_lo > k_hi:
        raise InfeasibleMatchError("no nonempty match is feasible")

    def g(k: int) -> float:
        return float(f[k - ks[0]]) / k

    lo, hi = k_lo, k_hi
    while lo < hi:
        mid = (lo + hi) // 2
        if g(mid + 1) <= g(mid) + _TOL / mid:
            lo = mid + 1
        else:
            hi = mid
    return _solution(D, spec, lo)


def _transpose(D: DistanceMatrix) -> DistanceMatrix:
    return DistanceMatrix(
        values=D.values.T.copy(),
        kind=D.kind,
        treated_ids=D.control_ids,
        control_ids=D.treated_ids,
    )


def brute_force_match(
    D: DistanceMatrix, spec: MatchSpec, objective: str = "avg"
) -> MatchSolution:
    """Exact optimum by exhaustive enumeration, collapsed over equivalent
    partial configurations; independent of the flow solver.

    Enumerates, control by control, every admissible subset of treated
    partners, carrying the vector of treated degrees; only instances with
    n_t * n_c <= 36 are accepted.
    """
    if objective not in ("avg", "total"):
        raise ValueError("objective must be 'avg' or 'total'")
    n_t, n_c = D.n_treated, D.n_control
    if n_t * n_c > 36:
        raise ValueError("instance too large for brute force")
    feasible_pair_range(D, spec)  # fail fast with the named bound

    # Orient so that the degree-state space is over the smaller side.
    base_t = min(spec.M_t, n_c) + 1
    base_c = min(spec.M_c, n_t) + 1
    if base_t**n_t <= base_c**n_c:
        sol = _brute_core(D.values.T, n_c, n_t, spec.m_c, spec.M_c, spec.m_t,
                          spec.M_t, objective)
        if sol is None:
            raise InfeasibleMatchError("no feasible match exists")
        pairs, total, k = sol
        pairs = [(t, c) for c, t in pairs]
    else:
        sol = _brute_core(D.values, n_t, n_c, spec.m_t, spec.M_t, spec.m_c,
                          spec.M_c, objective)
        if sol is None:
            raise InfeasibleMatchError("no feasible match exists")
        pairs, total, k = sol
    match = Match(
        pairs=tuple((t, c, float(D.values[t, c])) for t, c in sorted(pairs))
    )
    avg = total / k if k > 0 else 0.0
    return MatchSolution(match=match, total=total, average=avg, k=k)


def _brute_core(values, n_items, n_state, m_item, M_item, m_state, M_state,
                objective):
    """DP over items (one side); state = degree vector of the other side,
    encoded in mixed radix base (degree cap + 1)."""
    cap = min(M_state, n_items)
    base = cap + 1
    n_states = base**n_state
    weights = base ** np.arange(n_state)
    digits = (np.arange(n_states)[:, None] // weights[None, :]) % base

    subsets = []
    max_size = min(M_item, n_state)
    for size in range(m_item, max_size + 1):
        subsets.extend(itertools.combinations(range(n_state), size))
    if not subsets:
        return None

    V = np.full(n_states, np.inf)
    V[0] = 0.0
    choice = np.full((n_items, n_states), -1, dtype=np.int32)
    for item in range(n_items):
        V_new = np.full(n_states, np.inf)
        for s_idx, subset in enumerate(subsets):
            cols = list(subset)
            offset = int(weights[cols].sum()) if cols else 0
            cost_s = float(values[item, cols].sum()) if cols else 0.0
            if cols:
                ok = np.all(digits[:, cols] < cap, axis=1) & np.isfinite(V)
            else:
                ok = np.isfinite(V)
            src = np.nonzero(ok)[0]
            if src.size == 0:
                continue
            tgt = src + offset
            cand = V[src] + cost_s
            better = cand < V_new[tgt] - 1e-12
            upd = tgt[better]
            V_new[upd] = cand[better]
            choice[item, upd] = s_idx
        V = V_new

    final_ok = np.all(digits >= m_state, axis=1) & np.isfinite(V)
    if not np.any(final_ok):
        return None
    k_of_state = digits.sum(axis=1)
    if objective == "total":
        obj = np.where(final_ok, V, np.inf)
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            obj = np.where(final_ok & (k_of_state > 0), V / k_of_state, np.inf)
        if not np.any(np.isfinite(obj)):
            return None
    best_state = int(np.argmin(obj))

    pairs = []
    state = best_state
    for item in range(n_items - 1, -1, -1):
        s_idx = int(choice[item, state])
        subset = subsets[s_idx]
        for col in subset:
            pairs.append((item, col))
        state -= int(weights[list(subset)].sum()) if subset else 0
    total = float(V[best_state])
    return pairs, total, int(k_of_state[best_state])
