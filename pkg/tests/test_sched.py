import pytest
from fixtures import eleven, frontal_labels
from hypothesis import given, settings
from hypothesis import strategies as st

from ess.sched import (SKIP, Action, ActionKind, EpochDelta, FeaturizerSpec, RewardWeights,
                       StateKey, TaskTree, add_candidates, apply_action, delete_candidates,
                       enumerate_actions, featurize, reward)
from ess.symbolic import analyze

# frontal ids of the 11-column example: F0={2,3} F1={5} F2={8} F3={1} F4={4} F5={6}
# F6={7,9} F7={10,11}; edges are named by their child frontal
A, B, C, D, E, F = 2, 6, 0, 1, 3, 4


@pytest.fixture(scope="module")
def ex():
    a, order = eleven()
    an = analyze(a, order=order, relax=0)
    return an, frontal_labels(an)


def cut(t0, edges):
    return TaskTree(t0.shape, frozenset(edges))


def delete(s, *kids):
    return apply_action(s, Action(ActionKind.DELETE, tuple((k, s.parent[k]) for k in kids)))


def add(s, *kids):
    return apply_action(s, Action(ActionKind.ADD, tuple((k, s.parent[k]) for k in kids)))


def task_sets(s, labels):
    return sorted([labels[f] for f in mem] for mem in s.tasks.values())


def test_t1_split(ex):
    an, lab = ex
    t1 = delete(an.tree, A, B)
    assert task_sets(t1, lab) == [[[1], [4], [6], [7, 9]], [[2, 3], [5], [8]], [[10, 11]]]
    assert sorted(t1.ready_tasks) == [2, 6]


def test_t0_delete_candidates_are_root_edges(ex):
    an, _ = ex
    t0 = an.tree
    assert delete_candidates(t0)[:2] == [B, A]
    dels = [a for a in enumerate_actions(t0, 2) if a.kind is ActionKind.DELETE]
    assert Action(ActionKind.DELETE, ((B, 7), (A, 7))) in dels


def test_t2_and_t3(ex):
    an, lab = ex
    t1 = delete(an.tree, A, B)
    t2 = add(delete(t1, C, D), A)
    assert t2.cut == {B, C, D}
    assert len(t2.ready_tasks) == 3
    t3 = delete(add(t2, B), E, F)
    assert t3.cut == {C, D, E, F}
    assert sorted(lab[f] for f in t3.ready_tasks) == [[1], [2, 3], [4], [5]]


def test_t2_back_to_t1(ex):
    an, _ = ex
    t2 = cut(an.tree, {B, C, D})
    assert delete(add(t2, C, D), A) == cut(an.tree, {A, B})


def test_t3_add_candidates_reattach_below_six(ex):
    an, _ = ex
    t3 = cut(an.tree, {C, D, E, F})
    assert {E, F} <= set(add_candidates(t3))


def test_single_node_only_skip():
    assert enumerate_actions(TaskTree.initial([-1], [5]), 4) == [SKIP]


def test_skip_is_identity_and_errors(ex):
    an, _ = ex
    t0 = an.tree
    assert apply_action(t0, SKIP) == t0
    with pytest.raises(ValueError):
        apply_action(t0, Action(ActionKind.DELETE, ((0, 5),)))      # not an edge
    with pytest.raises(ValueError):
        apply_action(t0, Action(ActionKind.ADD, ((A, 7),)))         # not cut
    with pytest.raises(ValueError):
        delete(delete(t0, A), A)                                     # already cut
    with pytest.raises(ValueError):
        enumerate_actions(t0, 0)


def test_started_tasks_are_frozen(ex):
    an, _ = ex
    t1 = delete(an.tree, A, B)
    running = t1.start(2)
    assert C not in delete_candidates(running)
    assert A not in add_candidates(running)
    with pytest.raises(ValueError):
        delete(running, C)
    with pytest.raises(ValueError):
        running.start(7)


def random_tree(data, n):
    parent = [data.draw(st.integers(v + 1, n - 1)) if v < n - 1 else -1 for v in range(n)]
    work = data.draw(st.lists(st.integers(1, 50), min_size=n, max_size=n))
    return TaskTree.initial(parent, work)


@settings(max_examples=60, deadline=None)
@given(st.data(), st.integers(1, 25))
def test_random_action_sequences_keep_invariants(data, n):
    s = random_tree(data, n)
    for _ in range(8):
        acts = enumerate_actions(s, 4)
        a = acts[data.draw(st.integers(0, len(acts) - 1))]
        before = s
        s = apply_action(s, a)
        members = sorted(v for mem in s.tasks.values() for v in mem)
        assert members == list(range(n))
        assert len(s.tasks) == len(s.cut) + 1
        for mem in s.tasks.values():
            assert mem == sorted(mem)
        if a.kind is ActionKind.DELETE:
            undo = Action(ActionKind.ADD, a.edges)
            assert apply_action(s, undo).cut == before.cut


@settings(max_examples=40, deadline=None)
@given(st.data(), st.integers(2, 20))
def test_done_is_closed_downward(data, n):
    s = random_tree(data, n)
    s = apply_action(s, enumerate_actions(s, 4)[-1])
    while not s.terminal:
        r = s.ready_tasks[data.draw(st.integers(0, len(s.ready_tasks) - 1))]
        s = s.start(r).finish(r)
        for v in s.done:
            assert all(c in s.done for c in s.shape.children[v])


def test_reward_examples():
    w = RewardWeights()
    assert reward(EpochDelta(0.0, 0.0, (1.0, 1.0)), w) == 0.0
    assert reward(EpochDelta(1.0, 0.0, (0.0,)), RewardWeights(1.0, 0.0, 0.0)) == -1.0
    assert reward(EpochDelta(0.0, 0.0, (1.0, 0.5)), RewardWeights(0.0, 0.0, 1.0)) == -0.25
    assert reward(EpochDelta(0.0, 2.0**30, (1.0,)), w) == -1.0
    with pytest.raises(ValueError):
        reward(EpochDelta(0.0, 0.0, ()), w)
    with pytest.raises(ValueError):
        RewardWeights(float("inf"))


def test_featurize_examples(ex):
    an, _ = ex
    equal = TaskTree.initial(an.tree.parent, [1] * len(an.tree.parent))
    t3 = cut(equal, {C, D, E, F})
    assert featurize(t3, 4, 4) == StateKey(3, 4, 0, 3)
    t3c = cut(an.tree, {C, D, E, F})
    assert featurize(t3c, 4, 4) == StateKey(3, 4, 2, 3)    # max/mean = 13/6.25
    s = an.tree
    while not s.terminal:
        r = s.ready_tasks[0]
        s = s.start(r).finish(r)
    assert featurize(s, 4, 4) == StateKey(0, 4, 0, 0)
    with pytest.raises(ValueError):
        featurize(s, 4, 5)


def test_key_space():
    for cores in (1, 2, 4, 8):
        assert FeaturizerSpec(cores).key_space == 4 * (cores + 1) * 4 * 4
