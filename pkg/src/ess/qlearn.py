"""Offline tabular Q-learning over scheduling episodes and greedy inference.

The table is indexed by a discretized state (``StateKey``) and one of five
action classes.  A class is turned into a concrete Delete/Add/Skip on the
live task tree at decision time, so one table serves matrices of any size.

Episodes run against an environment with the interface::

    env.reset(episode) -> key
    env.actions()      -> realizable ActionClass list (never empty)
    env.step(cls)      -> (reward, next_key, terminal)
    env.advanced       -> optional; False if the step spent no time, so no discount

``SchedulingEnv`` wraps the task-tree coordinator; ``ChainMDP`` is a small
explicit MDP with a known optimum, used to check convergence.
"""

from __future__ import annotations

import enum
import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .runtime import MAX_ACTIONS, ScheduleRun, SimBackend
from .sched import (SKIP, Action, ActionKind, FeaturizerSpec, RewardWeights, StateKey,
                    TaskTree, add_candidates, delete_candidates, featurize)
from .sparse import CscMatrix

log = logging.getLogger(__name__)

VERSION = "ess-q1"


class ActionClass(enum.Enum):
    DELETE1 = "delete1"
    DELETE2 = "delete2"
    DELETE3 = "delete3"
    ADD = "add"
    SKIP = "skip"


CLASS_ORDER = tuple(ActionClass)   # greedy ties resolve to the earliest
_RANK = {c: i for i, c in enumerate(CLASS_ORDER)}
_DELETE_N = {ActionClass.DELETE1: 1, ActionClass.DELETE2: 2, ActionClass.DELETE3: 3}


def realize(s: TaskTree, cls: ActionClass, k: int = 3) -> Action | None:
    """Concrete action for a class on the live tree, or None if unrealizable."""
    if cls is ActionClass.SKIP:
        return SKIP
    if cls is ActionClass.ADD:
        adds = add_candidates(s, 1)
        return Action(ActionKind.ADD, ((adds[0], s.parent[adds[0]]),)) if adds else None
    n = _DELETE_N[cls]
    dels = delete_candidates(s, max(k, n))
    if len(dels) < n:
        return None
    return Action(ActionKind.DELETE, tuple((v, s.parent[v]) for v in dels[:n]))


def realizable(s: TaskTree, k: int = 3) -> list:
    if s.terminal:
        return [ActionClass.SKIP]
    nd = min(len(s.delete_ranked), k)
    out = [c for c, n in _DELETE_N.items() if n <= nd]
    if add_candidates(s, 1):
        out.append(ActionClass.ADD)
    out.append(ActionClass.SKIP)
    return out


# -- table --------------------------------------------------------------------

@dataclass(frozen=True)
class Hyper:
    alpha: float = 0.2             # initial learning rate
    gamma: float = 0.95
    epsilon: float = 0.5           # initial exploration rate
    epsilon_end: float = 0.05
    alpha_decay: str = "sqrt"      # sqrt: alpha/sqrt(episode); visits: 1/n(s,a); none
    target: str = "next"           # next: Q(s',a') as printed; max: max_a' Q(s',a')

    def validate(self) -> None:
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must lie in (0, 1]")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        if not (0.0 <= self.epsilon <= 1.0 and 0.0 <= self.epsilon_end <= 1.0):
            raise ValueError("epsilon must lie in [0, 1]")
        if self.alpha_decay not in ("sqrt", "visits", "none"):
            raise ValueError(f"unknown alpha decay {self.alpha_decay!r}")
        if self.target not in ("next", "max"):
            raise ValueError(f"unknown target {self.target!r}")

    def alpha_at(self, episode: int, visits: int) -> float:
        if self.alpha_decay == "sqrt":
            return self.alpha / math.sqrt(episode)
        if self.alpha_decay == "visits":
            return 1.0 / visits
        return self.alpha

    def epsilon_at(self, episode: int, episodes: int) -> float:
        if episodes <= 1:
            return self.epsilon
        frac = (episode - 1) / (episodes - 1)
        return self.epsilon + (self.epsilon_end - self.epsilon) * frac


@dataclass
class QTable:
    featurizer: FeaturizerSpec
    hyper: Hyper = field(default_factory=Hyper)
    entries: dict = field(default_factory=dict)    # (StateKey, ActionClass) -> q
    visits: dict = field(default_factory=dict)
    skipped: list = field(default_factory=list)

    def q(self, key, cls: ActionClass) -> float:
        return self.entries.get((key, cls), 0.0)

    def known(self, key) -> bool:
        return any((key, c) in self.entries for c in CLASS_ORDER)

    def greedy(self, key, classes) -> ActionClass:
        return max(classes, key=lambda c: (self.q(key, c), -_RANK[c]))

    def same_entries(self, other: QTable) -> bool:
        return self.entries == other.entries


def q_update(q: QTable, s, a: ActionClass, r: float, s2, a2: ActionClass | None,
             alpha: float | None = None, next_actions=None,
             gamma: float | None = None) -> QTable:
    """Q(s,a) += alpha * (r + gamma * Q(s',a') - Q(s,a)); ``s2=None`` is terminal.

    With ``hyper.target == "max"`` and ``next_actions`` given, Q(s',a') is
    replaced by the maximum over ``next_actions``.  ``gamma`` overrides the
    table's discount for this one transition.
    """
    if not math.isfinite(r):
        raise ValueError("reward must be finite")
    h = q.hyper
    alpha = h.alpha if alpha is None else alpha
    gamma = h.gamma if gamma is None else gamma
    if s2 is None:
        nxt = 0.0
    elif h.target == "max" and next_actions:
        nxt = max(q.q(s2, c) for c in next_actions)
    else:
        nxt = q.q(s2, a2)
    old = q.q(s, a)
    q.entries[(s, a)] = old + alpha * (r + gamma * nxt - old)
    return q


# -- environments -------------------------------------------------------------

class SchedulingEnv:
    """Episodes of the task-tree coordinator over a corpus, round-robin."""

    def __init__(self, corpus, cores: int, weights: RewardWeights | None = None,
                 featurizer: FeaturizerSpec | None = None, real_exec: bool = False,
                 max_actions: int = MAX_ACTIONS, k: int = 3, order="amd", relax: int = 4):
        from .symbolic import SymbolicAnalysis, analyze

        self.cores = cores
        self.weights = weights or RewardWeights()
        self.spec = featurizer or FeaturizerSpec(cores)
        self.real_exec = real_exec
        self.max_actions = max_actions
        self.k = k
        self.items = []        # (matrix or None, analysis)
        self.failures = []
        for i, m in enumerate(corpus):
            if isinstance(m, SymbolicAnalysis):
                self.items.append((None, m))
                continue
            try:
                self.items.append((m, analyze(m, order=order, relax=relax)))
            except Exception as exc:       # reported, episode skipped
                log.warning("corpus matrix %d skipped: %s", i, exc)
                self.failures.append((i, str(exc)))
        if not self.items:
            raise ValueError("no usable corpus matrix")
        self._pool = None

    def _backend(self, a: CscMatrix | None, an):
        if not self.real_exec:
            rows = an.front_rows
            own = an.partition.frontals
            contrib = [8 * (r.size - o.size) ** 2 for r, o in zip(rows, own)]
            return SimBackend(contrib_bytes=contrib)
        from concurrent.futures import ThreadPoolExecutor

        from .numeric import ThreadBackend, _Factorizer
        if a is None:
            raise ValueError("real execution needs the matrix values")
        if self._pool is None:
            self._pool = ThreadPoolExecutor(max_workers=self.cores)
        vals = a.values
        return ThreadBackend(_Factorizer(an, vals, 1e-3), self._pool)

    def reset(self, episode: int):
        a, an = self.items[episode % len(self.items)]
        self.run = ScheduleRun(an.tree, self.cores, self._backend(a, an), self.weights,
                               max_actions=self.max_actions, k=self.k)
        return self._key()

    def _key(self):
        return featurize(self.run.state, self.cores, self.run.idle, self.spec)

    def actions(self) -> list:
        return realizable(self.run.state, self.k)

    def step(self, cls: ActionClass):
        r = self.run.step(realize(self.run.state, cls, self.k))
        done = self.run.terminal
        return r, (None if done else self._key()), done

    @property
    def advanced(self) -> bool:
        """Whether the last step closed a decision epoch (the clock moved)."""
        return self.run.advanced

    def close(self) -> None:
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None


class ChainMDP:
    """Five-state chain with an absorbing goal and explicit transition matrices.

    States 0..4, state 4 terminal.  ``P[a][s]`` is the next-state distribution
    of action ``a`` (each row sums to 1) and ``R[a][s]`` its reward.  Episodes
    start in a uniformly random non-terminal state.
    """

    ACTIONS = (ActionClass.DELETE1, ActionClass.SKIP)

    def __init__(self, slip: float = 0.0, seed: int = 0):
        n = 5
        self.n = n
        self.terminal = n - 1
        left, right = np.zeros((n, n)), np.zeros((n, n))
        for s in range(n - 1):
            right[s, s + 1] += 1 - slip
            right[s, s] += slip
            left[s, max(s - 1, 0)] += 1 - slip
            left[s, s] += slip
        left[n - 1, n - 1] = right[n - 1, n - 1] = 1.0
        self.P = np.stack([left, right])
        self.R = np.array([[-0.2, -0.1, -0.3, -0.2, 0.0],      # left
                           [-1.0, -0.5, -0.8, -0.6, 0.0]])     # right
        self.R[1, n - 2] = 1.0                                  # entering the goal pays
        self._rng = np.random.default_rng(seed)

    def key(self, s: int) -> StateKey:
        return StateKey(s, 0, 0, 0)

    def reset(self, episode: int):
        self.s = int(self._rng.integers(self.terminal))
        return self.key(self.s)

    def actions(self) -> list:
        return list(self.ACTIONS)

    def step(self, cls: ActionClass):
        a = self.ACTIONS.index(cls)
        r = float(self.R[a, self.s])
        self.s = int(self._rng.choice(self.n, p=self.P[a, self.s]))
        done = self.s == self.terminal
        return r, (None if done else self.key(self.s)), done

    def optimal_q(self, gamma: float, tol: float = 1e-13) -> dict:
        """Q* by value iteration, keyed like a QTable."""
        v = np.zeros(self.n)
        while True:
            q = self.R + gamma * self.P @ v
            q[:, self.terminal] = 0.0
            v2 = q.max(axis=0)
            if np.max(np.abs(v2 - v)) < tol:
                break
            v = v2
        return {(self.key(s), c): float(q[i, s])
                for s in range(self.terminal) for i, c in enumerate(self.ACTIONS)}


# -- training -----------------------------------------------------------------

def train_env(env, episodes: int, seed: int = 0, hyper: Hyper | None = None,
              featurizer: FeaturizerSpec | None = None) -> QTable:
    """Epsilon-greedy episodes applying the on-policy update until terminal."""
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    hyper = hyper or Hyper()
    hyper.validate()
    spec = featurizer or getattr(env, "spec", None) or FeaturizerSpec(1)
    q = QTable(spec, hyper)
    rng = np.random.default_rng(seed)

    def choose(key, classes, eps):
        if rng.random() < eps:
            return classes[int(rng.integers(len(classes)))]
        return q.greedy(key, classes)

    for ep in range(1, episodes + 1):
        eps = hyper.epsilon_at(ep, episodes)
        s = env.reset(ep - 1)
        a = choose(s, env.actions(), eps)
        while True:
            n = q.visits[(s, a)] = q.visits.get((s, a), 0) + 1
            alpha = hyper.alpha_at(ep, n)
            r, s2, done = env.step(a)
            if done:
                q_update(q, s, a, r, None, None, alpha)
                break
            nxt = env.actions()
            a2 = choose(s2, nxt, eps)
            # discount once per epoch: actions taken between epochs cost no time
            gamma = hyper.gamma if getattr(env, "advanced", True) else 1.0
            q_update(q, s, a, r, s2, a2, alpha, next_actions=nxt, gamma=gamma)
            s, a = s2, a2
    return q


def greedy_return(env, q: QTable) -> float:
    """Undiscounted return of the greedy policy summed over one pass of ``env``."""
    total = 0.0
    for i in range(len(env.items)):
        s = env.reset(i)
        done = False
        while not done:
            a = q.greedy(s, env.actions()) if q.known(s) else ActionClass.SKIP
            r, s, done = env.step(a)
            total += r
    return total


def train(corpus, cores: int, hyper: Hyper | None = None, weights: RewardWeights | None = None,
          episodes: int = 200, seed: int = 0, real_exec: bool = False,
          featurizer: FeaturizerSpec | None = None, max_actions: int = MAX_ACTIONS,
          restarts: int = 1) -> QTable:
    """Learn a table from scheduling the task trees of ``corpus`` on ``cores``.

    With ``restarts > 1`` tables are trained from seeds ``seed .. seed+restarts-1``
    and the one whose greedy policy earns the highest return on the training
    corpus is kept (earliest seed on ties).
    """
    corpus = list(corpus)
    if not corpus:
        raise ValueError("corpus is empty")
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    env = SchedulingEnv(corpus, cores, weights, featurizer, real_exec, max_actions)
    try:
        best, best_ret = None, -math.inf
        for i in range(restarts):
            q = train_env(env, episodes, seed + i, hyper, env.spec)
            if restarts == 1:
                best = q
                break
            ret = greedy_return(env, q)
            log.info("restart %d (seed %d): greedy return %.4f", i, seed + i, ret)
            if ret > best_ret:
                best, best_ret = q, ret
    finally:
        env.close()
    best.skipped = list(env.failures)
    return best


# -- inference ----------------------------------------------------------------

def infer_policy(q: QTable, s: TaskTree, cores: int, idle: int, k: int = 3) -> Action:
    """Greedy class among realizable ones; unknown states Skip."""
    if s.terminal:
        return SKIP
    key = featurize(s, cores, idle, q.featurizer)
    if not q.known(key):
        return SKIP
    return realize(s, q.greedy(key, realizable(s, k)), k)


class QPolicy:
    """Greedy table policy.

    A table keys idle cores over ``0..featurizer.cores``.  Run on a different
    core count, the idle feature is clamped into that range unless ``strict``
    is set, in which case a mismatch raises.
    """

    name = "qtable"

    def __init__(self, q: QTable, strict: bool = False):
        self.q = q
        self.strict = strict

    def decide(self, state: TaskTree, cores: int, idle: int) -> Action:
        tc = self.q.featurizer.cores
        if cores != tc:
            if self.strict:
                raise ValueError(f"table was trained for {tc} cores, not {cores}")
            return infer_policy(self.q, state, tc, min(idle, tc))
        return infer_policy(self.q, state, cores, idle)


# -- persistence --------------------------------------------------------------

class QTableError(ValueError):
    pass


class VersionMismatchError(QTableError):
    pass


class SpecMismatchError(QTableError):
    pass


def dumps_qtable(q: QTable) -> str:
    rows = sorted(q.entries.items(), key=lambda kv: (tuple(kv[0][0]), _RANK[kv[0][1]]))
    doc = {
        "version": VERSION,
        "hyper": asdict(q.hyper),
        "featurizer": q.featurizer.to_dict(),
        "entries": [{"key": [int(x) for x in key], "action": cls.value, "q": float(v)}
                    for (key, cls), v in rows],
    }
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def save_qtable(q: QTable, path) -> None:
    if not all(math.isfinite(v) for v in q.entries.values()):
        raise QTableError("table holds non-finite values")
    with open(path, "w") as fh:
        fh.write(dumps_qtable(q))


def load_qtable(path, featurizer: FeaturizerSpec | None = None) -> QTable:
    """Read a table; ``featurizer`` (if given) must equal the stored one."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise QTableError(f"cannot read Q-table: {exc}") from exc
    if not isinstance(doc, dict):
        raise QTableError("Q-table must be a JSON object")
    if doc.get("version") != VERSION:
        raise VersionMismatchError(f"expected version {VERSION!r}, got {doc.get('version')!r}")
    try:
        spec = FeaturizerSpec.from_dict(doc["featurizer"])
        hyper = Hyper(**doc["hyper"])
        hyper.validate()
        entries = {}
        for e in doc["entries"]:
            key = StateKey(*(int(x) for x in e["key"]))
            v = float(e["q"])
            if not math.isfinite(v):
                raise QTableError("non-finite q-value")
            entries[(key, ActionClass(e["action"]))] = v
    except QTableError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise QTableError(f"corrupt Q-table: {exc}") from exc
    if featurizer is not None and featurizer != spec:
        raise SpecMismatchError(f"table featurizer {spec} does not match {featurizer}")
    return QTable(spec, hyper, entries)
