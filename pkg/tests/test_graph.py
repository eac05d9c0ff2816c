import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from casimir.errors import EmptySpaceError, EnumerationCapError, InvalidInputError, InvalidTopologyError
from casimir.graph import (
    NEG_INF,
    Constraint,
    LabelDomain,
    PotentialTable,
    TreeTopology,
    all_labelings,
    constrain,
    enumerate_scored,
    is_feasible,
    jitter,
    random_potentials,
    random_tree_topology,
    score,
    score_all,
)

from conftest import random_chain, random_tree


def test_score_reference(reference_pair):
    assert score(reference_pair, (0, 1)) == 3.0
    assert score(reference_pair, (1, 1)) == 2.5


def test_score_zero_tables():
    pot = PotentialTable.chain([np.zeros(3), np.zeros(2)], [np.zeros((2, 3))])
    assert score(pot, (2, 1)) == 0.0


def test_score_rejects_bad_labeling(reference_pair):
    with pytest.raises(InvalidInputError):
        score(reference_pair, (0,))
    with pytest.raises(InvalidInputError):
        score(reference_pair, (0, 2))


def test_enumerate_reference(reference_pair):
    assert enumerate_scored(reference_pair) == [(3.0, (0, 1)), (2.5, (1, 1)), (1.0, (0, 0)), (0.0, (1, 0))]


def test_enumerate_singleton():
    pot = PotentialTable.chain([[5.0]], [])
    assert enumerate_scored(pot) == [(5.0, (0,))]


def test_enumerate_ties_lexicographic():
    pot = PotentialTable.chain([np.zeros(2)] * 3, [np.zeros((2, 2))] * 2)
    rows = enumerate_scored(pot)
    assert [y for _, y in rows] == list(itertools.product(range(2), repeat=3))
    assert all(s == 0.0 for s, _ in rows)


def test_enumeration_cap():
    pot = PotentialTable.chain([np.zeros(10)] * 3, [np.zeros((10, 10))] * 2)
    with pytest.raises(EnumerationCapError) as info:
        enumerate_scored(pot, cap=999)
    assert info.value.size == 1000


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_score_matches_enumeration_bitwise(seed):
    rng = np.random.default_rng(seed)
    pot = random_tree(rng) if seed % 2 else random_chain(rng)
    rows = enumerate_scored(pot)
    assert len(rows) == int(np.prod(pot.sizes))
    for s, y in rows:
        assert score(pot, y) == s


def test_constrain_examples(reference_pair):
    req = constrain(reference_pair, [Constraint(0, 1)])
    assert enumerate_scored(req)[0][0] == 2.5
    forbid = constrain(reference_pair, [Constraint(1, 1, equal=False)])
    assert enumerate_scored(forbid)[0][0] == 1.0
    assert constrain(reference_pair, []) is reference_pair


def test_constrain_empty_space(reference_pair):
    with pytest.raises(EmptySpaceError):
        constrain(reference_pair, [Constraint(0, 0, False), Constraint(0, 1, False)])
    with pytest.raises(EmptySpaceError):
        constrain(reference_pair, [Constraint(0, 0), Constraint(0, 1)])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_constrain_keeps_feasible_scores(seed):
    rng = np.random.default_rng(seed)
    pot = random_chain(rng)
    v = int(rng.integers(pot.num_nodes))
    c = Constraint(v, int(rng.integers(pot.sizes[v])), bool(rng.integers(2)))
    if not c.equal and pot.sizes[v] == 1:
        return
    cons = constrain(pot, [c])
    for y in itertools.product(*(range(s) for s in pot.sizes)):
        ok = (y[v] == c.label) == c.equal
        if ok:
            assert score(cons, y) == score(pot, y)
        else:
            assert not is_feasible(score(cons, y))


def test_sentinel_sums_stay_finite():
    total = NEG_INF * 50 + 1e6
    assert np.isfinite(total) and not is_feasible(total)


@pytest.mark.parametrize(
    "parent",
    [(-1, -1), (1, 0), (0, 1, 2), (-1, 5), (-1, 0, 3, 2)],
)
def test_invalid_topologies(parent):
    with pytest.raises(InvalidTopologyError):
        TreeTopology(parent)


def test_chain_kind_requires_chain_parents():
    with pytest.raises(InvalidTopologyError):
        TreeTopology((-1, 0, 0), kind="chain")


def test_tree_order_children_first():
    topo = TreeTopology((-1, 0, 0, 1, 1))
    pos = {v: i for i, v in enumerate(topo.order)}
    for v, q in enumerate(topo.parent):
        if q != -1:
            assert pos[v] < pos[q]
    assert topo.root == 0


def test_table_shape_validation():
    with pytest.raises(InvalidInputError):
        PotentialTable.chain([np.zeros(2), np.zeros(3)], [np.zeros((2, 3))])
    with pytest.raises(InvalidInputError):
        LabelDomain((2, 0))


def test_tables_are_read_only(reference_pair):
    with pytest.raises(ValueError):
        reference_pair.node_scores[0][0] = 7.0


def test_all_labelings_lexicographic():
    ys = all_labelings((2, 3))
    assert [tuple(r) for r in ys] == list(itertools.product(range(2), range(3)))


def test_score_all_matches_score():
    rng = np.random.default_rng(3)
    pot = random_potentials(rng, random_tree_topology(rng, 5), (2, 3, 2, 2, 3))
    scores, ys = score_all(pot)
    for s, y in zip(scores, ys):
        assert s == score(pot, y)


def test_jitter_is_seeded_and_small(reference_pair):
    a, b = jitter(reference_pair, 1), jitter(reference_pair, 1)
    assert all(np.array_equal(x, y) for x, y in zip(a.node_scores, b.node_scores))
    diff = np.abs(a.node_scores[0] - reference_pair.node_scores[0]).max()
    assert 0 < diff <= 1e-6
