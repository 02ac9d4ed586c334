import json
import math

import numpy as np
import pytest
from fixtures import eleven, frontal_labels
from hypothesis import given, settings
from hypothesis import strategies as st

from ess.qlearn import (CLASS_ORDER, ActionClass, ChainMDP, Hyper, QPolicy, QTable, QTableError,
                        SchedulingEnv, SpecMismatchError, VersionMismatchError, dumps_qtable,
                        greedy_return, infer_policy, load_qtable, q_update, realizable, realize,
                        save_qtable, train, train_env)
from ess.sched import SKIP, ActionKind, FeaturizerSpec, StateKey, TaskTree, apply_action
from ess.sparse import from_coo
from ess.symbolic import analyze

S = StateKey(1, 1, 0, 3)
S2 = StateKey(2, 0, 1, 2)


def table(**hyper):
    return QTable(FeaturizerSpec(2), Hyper(**hyper))


def test_update_fixed_point():
    q = q_update(table(), S, ActionClass.SKIP, 0.0, S2, ActionClass.SKIP)
    assert q.q(S, ActionClass.SKIP) == 0.0


def test_update_hand_value():
    q = table(alpha=0.5, gamma=0.9)
    q.entries[(S2, ActionClass.ADD)] = 2.0
    q_update(q, S, ActionClass.DELETE1, 1.0, S2, ActionClass.ADD)
    assert q.q(S, ActionClass.DELETE1) == pytest.approx(1.4, abs=1e-15)


def test_update_terminal_alpha_one():
    q = table(alpha=1.0)
    q.entries[(S, ActionClass.SKIP)] = 7.0
    q_update(q, S, ActionClass.SKIP, -3.25, None, None)
    assert q.q(S, ActionClass.SKIP) == -3.25


def test_update_rejects_nonfinite():
    with pytest.raises(ValueError):
        q_update(table(), S, ActionClass.SKIP, math.nan, None, None)


@settings(max_examples=100, deadline=None)
@given(st.floats(-10, 10), st.floats(-10, 10), st.floats(-10, 10), st.floats(0.01, 1.0),
       st.floats(0.0, 0.99))
def test_update_closed_form(q0, r, q1, alpha, gamma):
    q = table(alpha=alpha, gamma=gamma)
    q.entries[(S, ActionClass.ADD)] = q0
    q.entries[(S2, ActionClass.SKIP)] = q1
    q_update(q, S, ActionClass.ADD, r, S2, ActionClass.SKIP)
    assert q.q(S, ActionClass.ADD) == q0 + alpha * (r + gamma * q1 - q0)


def test_max_target():
    q = table(alpha=1.0, gamma=0.5, target="max")
    q.entries[(S2, ActionClass.ADD)] = 4.0
    q_update(q, S, ActionClass.SKIP, 0.0, S2, ActionClass.SKIP,
             next_actions=[ActionClass.ADD, ActionClass.SKIP])
    assert q.q(S, ActionClass.SKIP) == 2.0


@pytest.mark.parametrize("bad", [dict(alpha=0.0), dict(gamma=1.0), dict(epsilon=2.0),
                                 dict(target="soft"), dict(alpha_decay="exp")])
def test_hyper_validation(bad):
    with pytest.raises(ValueError):
        Hyper(**bad).validate()


def test_epsilon_schedule():
    h = Hyper()
    assert h.epsilon_at(1, 100) == 0.5
    assert h.epsilon_at(100, 100) == pytest.approx(0.05)


def test_chain_transition_rows_sum_to_one():
    for slip in (0.0, 0.1):
        assert np.allclose(ChainMDP(slip).P.sum(axis=2), 1.0)


def test_one_by_one_corpus():
    a = from_coo(1, [0], [0], [2.0])
    q = train([a], 1, episodes=20, seed=0)
    assert len(q.entries) == 1
    ((key, cls), v), = q.entries.items()
    assert cls is ActionClass.SKIP and v < 0


def test_training_is_deterministic(tmp_path):
    a, order = eleven()
    an = analyze(a, order=order, relax=0)
    q1 = train([an], 2, episodes=60, seed=3)
    q2 = train([an], 2, episodes=60, seed=3)
    assert dumps_qtable(q1) == dumps_qtable(q2)


def test_restarts_keep_best_greedy_return():
    a, order = eleven()
    an = analyze(a, order=order, relax=0)
    env = SchedulingEnv([an], 2)
    singles = [train([an], 2, episodes=40, seed=5 + i) for i in range(3)]
    returns = [greedy_return(env, q) for q in singles]
    best = train([an], 2, episodes=40, seed=5, restarts=3)
    assert dumps_qtable(best) == dumps_qtable(singles[int(np.argmax(returns))])
    with pytest.raises(ValueError):
        train([an], 2, episodes=1, restarts=0)


def test_eleven_first_inference_is_t1_split():
    a, order = eleven()
    an = analyze(a, order=order, relax=0)
    # with two actions per epoch a three-edge first cut ties T1 on makespan
    q = train([an], 2, episodes=300, seed=0, max_actions=4)
    act = infer_policy(q, an.tree, 2, 2)
    assert act.kind is ActionKind.DELETE
    s = apply_action(an.tree, act)
    lab = frontal_labels(an)
    tasks = sorted([lab[f] for f in s.tasks[r]] for r in s.ready_tasks)
    assert tasks == [[[1], [4], [6], [7, 9]], [[2, 3], [5], [8]]]


def test_infer_policy_rules():
    a, order = eleven()
    an = analyze(a, order=order, relax=0)
    q = QTable(FeaturizerSpec(2))
    t0 = an.tree
    assert infer_policy(q, t0, 2, 2) == SKIP                   # unknown key
    from ess.sched import featurize
    key = featurize(t0, 2, 2)
    q.entries[(key, ActionClass.DELETE1)] = 5.0
    act = infer_policy(q, t0, 2, 2)
    assert act == realize(t0, ActionClass.DELETE1)
    # ties resolve in class order
    q.entries[(key, ActionClass.DELETE1)] = 0.0
    q.entries[(key, ActionClass.SKIP)] = 0.0
    assert infer_policy(q, t0, 2, 2) == realize(t0, ActionClass.DELETE1)
    # unrealizable classes are skipped even with high value
    q.entries[(key, ActionClass.ADD)] = 99.0
    assert ActionClass.ADD not in realizable(t0)
    assert infer_policy(q, t0, 2, 2).kind is ActionKind.DELETE


def test_terminal_state_skips():
    s = TaskTree.initial([-1], [1])
    s = s.start(0).finish(0)
    assert infer_policy(QTable(FeaturizerSpec(1)), s, 1, 1) == SKIP
    assert realizable(s) == [ActionClass.SKIP]


def test_qpolicy_core_mismatch():
    q = QTable(FeaturizerSpec(2))
    t = TaskTree.initial([1, -1], [1, 1])
    assert QPolicy(q).decide(t, 4, 4) == SKIP
    with pytest.raises(ValueError):
        QPolicy(q, strict=True).decide(t, 4, 4)


def test_save_load_roundtrip(tmp_path):
    q = table(alpha=0.3)
    rng = np.random.default_rng(0)
    for i, c in enumerate(CLASS_ORDER):
        q.entries[(StateKey(i % 4, 1, 2, 3), c)] = float(rng.standard_normal())
    path = tmp_path / "q.json"
    save_qtable(q, path)
    back = load_qtable(path, FeaturizerSpec(2))
    assert back.entries == q.entries and back.hyper == q.hyper
    doc = json.loads(path.read_text())
    assert doc["version"] == "ess-q1"
    assert set(doc["hyper"]) >= {"alpha", "gamma", "epsilon"}


def test_load_errors(tmp_path):
    path = tmp_path / "q.json"
    save_qtable(table(), path)
    doc = json.loads(path.read_text())
    with pytest.raises(SpecMismatchError):
        load_qtable(path, FeaturizerSpec(2, imbalance_edges=(1.5, 2.0, 4.0)))
    doc["version"] = "ess-q0"
    path.write_text(json.dumps(doc))
    with pytest.raises(VersionMismatchError):
        load_qtable(path)
    path.write_text("{not json")
    with pytest.raises(QTableError):
        load_qtable(path)
    doc["version"] = "ess-q1"
    doc["entries"] = [{"key": [0, 0, 0], "action": "skip", "q": 1.0}]
    path.write_text(json.dumps(doc))
    with pytest.raises(QTableError):
        load_qtable(path)


def test_chain_converges_small_budget():
    env = ChainMDP(seed=1)
    q = train_env(env, 2000, seed=1, hyper=Hyper(alpha=0.5, target="max"))
    qs = env.optimal_q(0.95)
    assert max(abs(q.q(k, c) - v) for (k, c), v in qs.items()) < 0.05


class _TwoStep:
    """A free zero-cost action followed by a timed terminal step."""

    spec = FeaturizerSpec(1)

    def reset(self, episode):
        self.t = 0
        return S

    def actions(self):
        return [ActionClass.DELETE1] if self.t == 0 else [ActionClass.SKIP]

    def step(self, cls):
        self.t += 1
        self.advanced = self.t == 2
        return (0.0, S2, False) if self.t == 1 else (-1.0, None, True)


def test_no_discount_between_epochs():
    q = train_env(_TwoStep(), 50, hyper=Hyper(alpha=1.0, gamma=0.5, alpha_decay="none"))
    assert q.q(S, ActionClass.DELETE1) == -1.0
