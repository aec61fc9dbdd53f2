import numpy as np
import pytest

from hteval import Match, MatchSpec, min_avg_match, prune, removable_edges
from hteval.flowmatch import InfeasibleMatchError
from hteval.prune import components, is_star_shaped, prune_with_trace

from conftest import random_distance_matrix


def test_perfect_match_has_no_removable_edges():
    m = Match(pairs=((0, 0, 1.0), (1, 1, 2.0), (2, 2, 3.0)))
    assert removable_edges(m) == set()
    assert prune(m).pairs == m.pairs


def test_chain_removable_edges(chain_match):
    # degrees: c1:2, t2:2, c2:2, t3:2 -> middle edges are removable
    assert removable_edges(chain_match) == {(1, 0), (1, 1), (2, 1)}


def test_star_has_no_removable_edges():
    star = Match(pairs=((0, 0, 1.0), (0, 1, 2.0), (0, 2, 3.0)))
    assert removable_edges(star) == set()
    assert prune(star).pairs == star.pairs
    assert is_star_shaped(star)


def test_chain_prune_trace_and_components(chain_match):
    pruned, deleted = prune_with_trace(chain_match)
    # the maximal-distance removable edge is (t2, c2) at distance 2
    assert deleted == [(1, 1)]
    comps = components(pruned)
    assert sorted((sorted(ts), sorted(cs)) for ts, cs in comps) == [
        ([0, 1], [0]),
        ([2], [1, 2]),
    ]
    assert is_star_shaped(pruned)
    assert removable_edges(pruned) == set()


def test_prune_tie_breaks_lexicographically():
    # two removable edges of equal distance: delete smallest (t, c) first
    m = Match(
        pairs=(
            (0, 0, 1.0),
            (0, 1, 5.0),
            (1, 1, 5.0),
            (1, 2, 1.0),
        )
    )
    _, deleted = prune_with_trace(m)
    assert deleted[0] == (0, 1)


def test_random_pruned_matches_are_star_shaped():
    rng = np.random.default_rng(9)
    checked = 0
    while checked < 50:
        D = random_distance_matrix(rng)
        spec = MatchSpec(1, 1, int(rng.integers(2, 4)), int(rng.integers(2, 4)))
        try:
            sol = min_avg_match(D, spec)
        except InfeasibleMatchError:
            continue
        checked += 1
        pruned = prune(sol.match)
        assert removable_edges(pruned) == set()
        assert is_star_shaped(pruned)
        # every unit of the original match survives pruning
        assert {t for t, _, _ in pruned.pairs} == {t for t, _, _ in sol.match.pairs}
        assert {c for _, c, _ in pruned.pairs} == {c for _, c, _ in sol.match.pairs}


def test_components_of_empty_match():
    assert components(Match(pairs=())) == []
    assert is_star_shaped(Match(pairs=()))
