"""Task-tree scheduling MDP: states, Delete/Add/Skip actions, reward, features.

A state is the frontal elimination tree plus a set of cut edges.  Removing
the cut edges splits the tree into connected components; each component is
a task that one core eliminates bottom-up.  A task may start once every
task hanging below one of its cut edges has finished.  Edges are named by
their child frontal since every frontal has at most one parent.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple

import numpy as np

NONE = -1
DEFAULT_K = 3


@dataclass(frozen=True, eq=False)
class TreeShape:
    parent: tuple
    work: tuple
    children: tuple
    total_work: int
    branch: tuple = ()      # children of frontals with two or more children
    views: dict = field(default_factory=dict, repr=False, compare=False)

    def cut_views(self, cut: frozenset) -> _CutViews:
        """Structural views of a cut set, shared by every state with that cut."""
        v = self.views.get(cut)
        if v is None:
            if len(self.views) >= 256:
                self.views.clear()
            v = self.views[cut] = _CutViews(self, cut)
        return v

    @classmethod
    def build(cls, parent, work) -> TreeShape:
        parent = tuple(int(p) for p in parent)
        work = tuple(int(w) for w in work)
        if len(parent) != len(work):
            raise ValueError("parent/work length mismatch")
        ch = [[] for _ in parent]
        for v, p in enumerate(parent):
            if p != NONE:
                if not v < p < len(parent):
                    raise ValueError("parents must have larger ids than children")
                ch[p].append(v)
        branch = tuple(v for v, p in enumerate(parent) if p != NONE and len(ch[p]) >= 2)
        return cls(parent, work, tuple(tuple(c) for c in ch), sum(work), branch)


class _CutViews:
    __slots__ = ("task_root", "tasks", "task_work", "sub_work", "child_tasks", "ranked")

    def __init__(self, shape: TreeShape, cut: frozenset):
        par, w = shape.parent, shape.work
        n = len(par)
        root = list(range(n))
        for v in range(n - 1, -1, -1):
            p = par[v]
            if p != NONE and v not in cut:
                root[v] = root[p]
        tasks: dict = {}
        for v, r in enumerate(root):
            tasks.setdefault(r, []).append(v)
        sub = list(w)
        for v in range(n):
            p = par[v]
            if p != NONE and v not in cut:
                sub[p] += sub[v]
        child: dict = {r: [] for r in tasks}
        for v in sorted(cut):
            child[root[par[v]]].append(v)
        self.task_root = root
        self.tasks = tasks
        self.task_work = {r: sub[r] for r in tasks}
        self.sub_work = sub
        self.child_tasks = child
        self.ranked = sorted((v for v in shape.branch if v not in cut),
                             key=lambda v: (-sub[v], v))


@dataclass(frozen=True, eq=False)
class TaskTree:
    """Immutable scheduling state; derived views are cached per instance."""

    shape: TreeShape
    cut: frozenset = frozenset()
    done: frozenset = frozenset()
    running: frozenset = frozenset()

    @classmethod
    def initial(cls, parent, work) -> TaskTree:
        return cls(TreeShape.build(parent, work))

    def __eq__(self, other):
        return (isinstance(other, TaskTree) and self.shape.parent == other.shape.parent
                and self.shape.work == other.shape.work and self.cut == other.cut
                and self.done == other.done and self.running == other.running)

    def __hash__(self):
        return hash((self.shape.parent, self.cut, self.done, self.running))

    # -- static views
    @property
    def size(self) -> int:
        return len(self.shape.parent)

    @property
    def parent(self) -> tuple:
        return self.shape.parent

    @property
    def work(self) -> np.ndarray:
        return np.asarray(self.shape.work, dtype=np.int64)

    @property
    def edges(self) -> list:
        return [(v, p) for v, p in enumerate(self.shape.parent) if p != NONE]

    def height(self) -> int:
        depth = [0] * self.size
        for v in range(self.size - 1, -1, -1):
            p = self.shape.parent[v]
            if p != NONE:
                depth[v] = depth[p] + 1
        return max(depth) + 1 if depth else 0

    # -- derived views
    @property
    def _views(self) -> _CutViews:
        return self.shape.cut_views(self.cut)

    @property
    def task_root(self) -> list:
        return self._views.task_root

    @property
    def tasks(self) -> dict:
        """Task root -> member frontals (ascending, i.e. a valid elimination order)."""
        return self._views.tasks

    @property
    def task_work(self) -> dict:
        return self._views.task_work

    @property
    def sub_work(self) -> list:
        """Workload of each frontal's subtree restricted to its own task."""
        return self._views.sub_work

    @cached_property
    def delete_ranked(self) -> list:
        return [v for v in self._views.ranked if self.is_pending(v)]

    def status(self, root: int) -> str:
        if root in self.done:
            return "done"
        if root in self.running:
            return "running"
        return "pending"

    def is_pending(self, v: int) -> bool:
        return v not in self.done and v not in self.running

    @cached_property
    def ready_tasks(self) -> list:
        """Pending tasks whose child tasks have all finished, by root id."""
        root, par = self.task_root, self.shape.parent
        blocked = set()
        for v in self.cut:
            if v not in self.done:
                blocked.add(root[par[v]])
        return [r for r in self.tasks
                if r not in blocked and self.is_pending(r)]

    @property
    def child_tasks(self) -> dict:
        return self._views.child_tasks

    @property
    def remaining_work(self) -> int:
        w = self.shape.work
        return self.shape.total_work - sum(w[v] for v in self.done)

    @property
    def terminal(self) -> bool:
        return len(self.done) == self.size

    # -- execution bookkeeping (used by the coordinator)
    def start(self, root: int) -> TaskTree:
        if root not in self.ready_tasks:
            raise ValueError(f"task {root} is not ready")
        return TaskTree(self.shape, self.cut, self.done, self.running | frozenset(self.tasks[root]))

    def finish(self, root: int) -> TaskTree:
        mem = frozenset(self.tasks[root])
        if not mem <= self.running:
            raise ValueError(f"task {root} is not running")
        return TaskTree(self.shape, self.cut, self.done | mem, self.running - mem)


class ActionKind(enum.Enum):
    DELETE = "delete"
    ADD = "add"
    SKIP = "skip"


@dataclass(frozen=True)
class Action:
    kind: ActionKind
    edges: tuple = ()

    def __post_init__(self):
        if self.kind is ActionKind.SKIP and self.edges:
            raise ValueError("Skip carries no edges")
        if self.kind is not ActionKind.SKIP and not self.edges:
            raise ValueError(f"{self.kind.value} needs at least one edge")


SKIP = Action(ActionKind.SKIP)


def delete_candidates(s: TaskTree, k: int = DEFAULT_K) -> list:
    """Uncut branch edges inside pending tasks, heaviest child subtree first.

    A branch edge hangs below a frontal with two or more children; cutting
    any other edge only serializes work without exposing parallelism.
    Ties break on the smallest child id.
    """
    return s.delete_ranked[:k]


def add_candidates(s: TaskTree, k: int = DEFAULT_K) -> list:
    """Cut edges joining two pending tasks, lightest combined workload first."""
    root, par, tw = s.task_root, s.shape.parent, s.task_work
    cand = [v for v in s.cut if s.is_pending(v) and s.is_pending(par[v])]
    cand.sort(key=lambda v: (tw[root[v]] + tw[root[par[v]]], v))
    return cand[:k]


def enumerate_actions(s: TaskTree, cores: int, k: int = DEFAULT_K) -> list:
    """Skip, then Delete of the top-1..top-k heaviest edges, then single-edge Adds."""
    if cores < 1:
        raise ValueError("cores must be >= 1")
    par = s.shape.parent
    out = [SKIP]
    dels = delete_candidates(s, k)
    for i in range(1, len(dels) + 1):
        out.append(Action(ActionKind.DELETE, tuple((v, par[v]) for v in dels[:i])))
    for v in add_candidates(s, k):
        out.append(Action(ActionKind.ADD, ((v, par[v]),)))
    return out


def apply_action(s: TaskTree, a: Action) -> TaskTree:
    if a.kind is ActionKind.SKIP:
        return s
    par = s.shape.parent
    kids = set()
    for v, p in a.edges:
        if not (0 <= v < s.size) or par[v] != p or p == NONE:
            raise ValueError(f"unknown edge ({v}, {p})")
        kids.add(v)
    if a.kind is ActionKind.DELETE:
        for v in kids:
            if v in s.cut:
                raise ValueError(f"edge ({v}, {par[v]}) is already cut")
            if not s.is_pending(v):
                raise ValueError(f"edge ({v}, {par[v]}) belongs to a started task")
        return TaskTree(s.shape, s.cut | kids, s.done, s.running)
    for v in kids:
        if v not in s.cut:
            raise ValueError(f"edge ({v}, {par[v]}) is not cut")
        if not (s.is_pending(v) and s.is_pending(par[v])):
            raise ValueError(f"edge ({v}, {par[v]}) touches a started task")
    return TaskTree(s.shape, s.cut - kids, s.done, s.running)


# -- reward -------------------------------------------------------------------

@dataclass(frozen=True)
class RewardWeights:
    """Cost weights; the reward is the negated weighted cost."""

    w_time: float = 1.0            # per second
    w_mem: float = 1.0 / 2**30     # per byte (1 per GiB)
    w_balance: float = 0.5

    def __post_init__(self):
        if not all(np.isfinite([self.w_time, self.w_mem, self.w_balance])):
            raise ValueError("reward weights must be finite")


@dataclass(frozen=True)
class EpochDelta:
    """Cost record of one decision epoch."""

    elapsed: float
    peak_mem: float
    busy: tuple     # per-core busy fraction over the epoch

    @property
    def imbalance(self) -> float:
        if not self.busy:
            raise ValueError("empty trace")
        hi = max(self.busy)
        if hi <= 0.0:
            return 0.0
        return 1.0 - (sum(self.busy) / len(self.busy)) / hi


def reward(delta: EpochDelta, w: RewardWeights) -> float:
    return 0.0 - (w.w_time * delta.elapsed + w.w_mem * delta.peak_mem
             + w.w_balance * delta.imbalance)


# -- featurization ------------------------------------------------------------

class StateKey(NamedTuple):
    ready: int
    idle: int
    imbalance: int
    remaining: int


@dataclass(frozen=True)
class FeaturizerSpec:
    cores: int
    ready_cap: int = 3
    imbalance_edges: tuple = (1.2, 2.0, 4.0)
    remaining_edges: tuple = (0.25, 0.5, 0.75)

    def to_dict(self) -> dict:
        return {"cores": self.cores, "ready_cap": self.ready_cap,
                "imbalance_edges": list(self.imbalance_edges),
                "remaining_edges": list(self.remaining_edges)}

    @classmethod
    def from_dict(cls, d: dict) -> FeaturizerSpec:
        return cls(int(d["cores"]), int(d["ready_cap"]), tuple(d["imbalance_edges"]),
                   tuple(d["remaining_edges"]))

    @property
    def key_space(self) -> int:
        return ((self.ready_cap + 1) * (self.cores + 1) * (len(self.imbalance_edges) + 1)
                * (len(self.remaining_edges) + 1))


def _bucket(x: float, edges) -> int:
    return int(np.searchsorted(np.asarray(edges), x, side="right"))


def featurize(s: TaskTree, cores: int, idle: int, spec: FeaturizerSpec | None = None) -> StateKey:
    """Discretize a state; wall-clock time never enters the key."""
    if not 0 <= idle <= cores:
        raise ValueError("idle must lie in [0, cores]")
    spec = spec or FeaturizerSpec(cores)
    ready = s.ready_tasks
    if ready:
        ws = [s.task_work[r] for r in ready]
        mean = sum(ws) / len(ws)
        ratio = max(ws) / mean if mean > 0 else 1.0
        imb = _bucket(ratio, spec.imbalance_edges)
    else:
        imb = 0
    total = s.shape.total_work
    frac = s.remaining_work / total if total else 0.0
    return StateKey(min(len(ready), spec.ready_cap), idle, imb,
                    _bucket(frac, spec.remaining_edges))
