"""Greedy pruning of a match to star-shaped components.

An edge is removable when both endpoints have degree >= 2; deleting the
highest-distance removable edge repeatedly leaves only components with one
treated unit and several controls, or one control and several treateds,
which is what makes pair-preserving fold splits possible.
"""
from __future__ import annotations

from .datamodel import Match


def removable_edges(m: Match) -> set[tuple[int, int]]:
    """Edges whose treated AND control endpoints both have degree >= 2."""
    t_deg = m.treated_degrees()
    c_deg = m.control_degrees()
    return {
        (t, c) for t, c, _ in m.pairs if t_deg[t] >= 2 and c_deg[c] >= 2
    }


def prune_with_trace(m: Match) -> tuple[Match, list[tuple[int, int]]]:
    """Prune and also report the deletion order.

    Equal maximal distances are broken lexicographically on
    (treated, control); degree counters are maintained incrementally,
    matching a from-scratch recomputation of the removable set.
    """
    pairs = {(t, c): d for t, c, d in m.pairs}
    t_deg = m.treated_degrees()
    c_deg = m.control_degrees()
    removable = {
        (t, c) for (t, c) in pairs if t_deg[t] >= 2 and c_deg[c] >= 2
    }
    deleted: list[tuple[int, int]] = []
    while removable:
        t, c = max(removable, key=lambda e: (pairs[e], -e[0], -e[1]))
        del pairs[(t, c)]
        removable.discard((t, c))
        t_deg[t] -= 1
        c_deg[c] -= 1
        if t_deg[t] < 2:
            removable -= {(t, ck) for (tk, ck) in list(removable) if tk == t}
        if c_deg[c] < 2:
            removable -= {(tk, c) for (tk, ck) in list(removable) if ck == c}
        deleted.append((t, c))
    pruned = Match(pairs=tuple((t, c, d) for (t, c), d in sorted(pairs.items())))
    return pruned, deleted


def prune(m: Match) -> Match:
    """Delete removable edges (highest distance first) until none remain."""
    pruned, _ = prune_with_trace(m)
    return pruned


def components(m: Match) -> list[tuple[set[int], set[int]]]:
    """Connected components as (treated set, control set) pairs."""
    adj_t: dict[int, set[int]] = {}
    adj_c: dict[int, set[int]] = {}
    for t, c, _ in m.pairs:
        adj_t.setdefault(t, set()).add(c)
        adj_c.setdefault(c, set()).add(t)
    seen_t: set[int] = set()
    out = []
    for start in sorted(adj_t):
        if start in seen_t:
            continue
        comp_t, comp_c = set(), set()
        stack = [("t", start)]
        while stack:
            side, node = stack.pop()
            if side == "t":
                if node in comp_t:
                    continue
                comp_t.add(node)
                stack.extend(("c", c) for c in adj_t[node])
            else:
                if node in comp_c:
                    continue
                comp_c.add(node)
                stack.extend(("t", t) for t in adj_c[node])
        seen_t |= comp_t
        out.append((comp_t, comp_c))
    return out


def is_star_shaped(m: Match) -> bool:
    """True when every component has a single treated or a single control."""
    return all(
        len(ts) == 1 or len(cs) == 1 for ts, cs in components(m)
    )
