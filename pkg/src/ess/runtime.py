"""Decision-epoch coordinator shared by the simulator and the numeric executor.

The coordinator owns the task-tree state.  At each epoch the policy is asked
for an action; non-Skip actions are applied immediately (up to
``max_actions`` per epoch), and a Skip commits the tree: ready tasks go to
idle cores and time advances to the next task completion.
"""

from __future__ import annotations

import csv
import heapq
from collections import deque
from dataclasses import dataclass, field

from .sched import (SKIP, Action, ActionKind, EpochDelta, RewardWeights, TaskTree,
                    apply_action, enumerate_actions, reward)

MAX_ACTIONS = 2     # Add/Delete actions per epoch before time must advance


@dataclass(frozen=True)
class TraceRow:
    task_id: int
    frontals: tuple
    core: int
    t_start_us: float
    t_end_us: float
    peak_bytes: int


@dataclass(frozen=True)
class EpochRow:
    epoch: int
    t_us: float
    idle: int
    action: str
    edges: tuple
    reward: float


@dataclass
class ScheduleTrace:
    rows: list = field(default_factory=list)
    epochs: list = field(default_factory=list)
    cut: frozenset = frozenset()

    @property
    def makespan_us(self) -> float:
        if not self.rows:
            return 0.0
        return max(r.t_end_us for r in self.rows) - min(r.t_start_us for r in self.rows)

    @property
    def peak_bytes(self) -> int:
        return max((r.peak_bytes for r in self.rows), default=0)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["task_id", "frontals", "core", "t_start_us", "t_end_us", "peak_bytes"])
            for r in self.rows:
                w.writerow([r.task_id, " ".join(map(str, r.frontals)), r.core,
                            f"{r.t_start_us:.3f}", f"{r.t_end_us:.3f}", r.peak_bytes])
            fh.write("\n")
            w.writerow(["epoch", "t_us", "idle", "action", "edges", "reward"])
            for e in self.epochs:
                w.writerow([e.epoch, f"{e.t_us:.3f}", e.idle, e.action,
                            " ".join(f"{c}>{p}" for c, p in e.edges), repr(e.reward)])


class SimBackend:
    """Virtual cores with workload-proportional task durations.

    A task lasts ``overhead + unit * sum(work)``.  ``unit`` defaults to
    ``1 / total_work`` so a serial run takes one virtual second whatever the
    matrix size.  ``contrib_bytes[f]`` is the update buffer frontal f hands
    to its parent; it stays live from the end of f's task until the parent's
    task starts.
    """

    def __init__(self, unit: float | None = None, overhead: float = 0.01, contrib_bytes=None):
        self.unit = unit
        self.overhead = overhead
        self.contrib_bytes = contrib_bytes

    def reset(self, tree: TaskTree) -> None:
        self._unit = self.unit if self.unit is not None else 1.0 / max(tree.shape.total_work, 1)
        self._work = tree.shape.work
        self._parent = tree.shape.parent
        self._bytes = (list(self.contrib_bytes) if self.contrib_bytes is not None
                       else [0] * tree.size)
        self._now = 0.0
        self._events: list = []
        self._live = 0
        self._peak = 0

    def now(self) -> float:
        return self._now

    def live_bytes(self) -> int:
        return self._live

    def take_peak(self) -> int:
        p, self._peak = self._peak, self._live
        return p

    def launch(self, task_id: int, frontals, cut_children, core: int) -> None:
        self._live -= sum(self._bytes[c] for c in cut_children)
        dur = self.overhead + self._unit * sum(self._work[f] for f in frontals)
        heapq.heappush(self._events, (self._now + dur, task_id, tuple(frontals), self._now))

    def wait(self) -> list:
        if not self._events:
            raise RuntimeError("no running task to wait for")
        t_end = self._events[0][0]
        out = []
        while self._events and self._events[0][0] == t_end:
            _, tid, frontals, t0 = heapq.heappop(self._events)
            root = frontals[-1]
            if self._parent[root] != -1:
                self._live += self._bytes[root]
            self._peak = max(self._peak, self._live)
            out.append((tid, t0, t_end, self._live))
        self._now = t_end
        return out


class ScheduleRun:
    """One episode: drive with ``step(action)`` until ``terminal``."""

    def __init__(self, tree: TaskTree, cores: int, backend, weights: RewardWeights | None = None,
                 max_actions: int = MAX_ACTIONS, k: int = 3):
        if cores < 1:
            raise ValueError("cores must be >= 1")
        self.state = tree
        self.cores = cores
        self.backend = backend
        self.weights = weights or RewardWeights()
        self.max_actions = max_actions
        self.k = k
        self.trace = ScheduleTrace()
        self._free = list(range(cores))
        self._running: dict = {}      # task_id -> (root, core, t_start)
        self._by_root: dict = {}
        self._n_actions = 0
        self.advanced = False
        self._next_id = 0
        backend.reset(tree)
        self._t_epoch = backend.now()

    @property
    def terminal(self) -> bool:
        return self.state.terminal

    @property
    def idle(self) -> int:
        return len(self._free)

    def actions(self) -> list:
        return enumerate_actions(self.state, self.cores, self.k)

    def _log(self, action: Action, r: float) -> None:
        self.trace.epochs.append(EpochRow(len(self.trace.epochs), self.backend.now() * 1e6,
                                          self.idle, action.kind.value, action.edges, r))

    def step(self, action: Action) -> float:
        self.state = apply_action(self.state, action)
        self._n_actions += 1
        self.advanced = action.kind is ActionKind.SKIP or self._n_actions >= self.max_actions
        if not self.advanced:
            r = reward(EpochDelta(0.0, float(self.backend.live_bytes()), (0.0,) * self.cores),
                       self.weights)
            self._log(action, r)
            return r
        r = self._advance()
        self._log(action, r)
        return r

    def _dispatch(self) -> None:
        s = self.state
        ready = sorted(s.ready_tasks, key=lambda t: (-s.task_work[t], t))
        for root in ready:
            if not self._free:
                break
            core = self._free.pop(0)
            s = s.start(root)
            tid = self._next_id
            self._next_id += 1
            self._running[tid] = (root, core, self.backend.now())
            self._by_root[root] = tid
            self.backend.launch(tid, s.tasks[root], s.child_tasks[root], core)
        self.state = s

    def _advance(self) -> float:
        self._dispatch()
        if not self._running:
            raise RuntimeError("scheduler stalled: no runnable task")
        t0 = self._t_epoch
        finished = self.backend.wait()
        t1 = self.backend.now()
        busy = [0.0] * self.cores
        for tid, ts, te, peak in finished:
            root, core, _ = self._running.pop(tid)
            busy[core] += te - max(ts, t0)
            self.trace.rows.append(TraceRow(tid, tuple(self.state.tasks[root]), core,
                                            ts * 1e6, te * 1e6, int(peak)))
            self.state = self.state.finish(root)
            self._free.append(core)
        for root, core, ts in self._running.values():
            busy[core] += t1 - max(ts, t0)
        self._free.sort()
        span = t1 - t0
        frac = tuple(min(b / span, 1.0) if span > 0 else 0.0 for b in busy)
        self._t_epoch = t1
        self._n_actions = 0
        self.trace.cut = self.state.cut
        return reward(EpochDelta(span, float(self.backend.take_peak()), frac), self.weights)


# -- baseline policies ------------------------------------------------------------

class SerialPolicy:
    """Never cuts: the whole tree runs as one task on one core."""

    name = "serial"

    def decide(self, state: TaskTree, cores: int, idle: int) -> Action:
        return SKIP


def level_order_cuts(state: TaskTree, cores: int) -> list:
    """Cut child edges of branching frontals in breadth-first order from the
    roots until at least ``cores`` tasks are ready at once."""
    par, ch = state.shape.parent, state.shape.children
    roots = sorted((v for v, p in enumerate(par) if p == -1), reverse=True)
    queue = deque(roots)
    cuts: list = []
    s = state
    while queue and len(s.ready_tasks) < cores:
        v = queue.popleft()
        kids = sorted(ch[v], key=lambda c: (-state.sub_work[c], c))
        if len(kids) >= 2:
            for c in kids:
                if len(s.ready_tasks) >= cores:
                    break
                cuts.append(c)
                s = TaskTree(s.shape, s.cut | {c}, s.done, s.running)
        queue.extend(kids)
    return cuts


class StaticPolicy:
    """One-shot level-order cuts sized to the core count, then Skip."""

    name = "static"

    def decide(self, state: TaskTree, cores: int, idle: int) -> Action:
        if state.cut or state.done or state.running:
            return SKIP
        cuts = level_order_cuts(state, cores)
        if not cuts:
            return SKIP
        return Action(ActionKind.DELETE, tuple((c, state.shape.parent[c]) for c in cuts))


class ScriptedPolicy:
    """Replays a fixed list of actions, then Skips."""

    name = "scripted"

    def __init__(self, actions):
        self._actions = list(actions)

    def decide(self, state, cores, idle):
        return self._actions.pop(0) if self._actions else SKIP


def run_policy(tree: TaskTree, cores: int, policy, backend, weights=None,
               max_actions: int = MAX_ACTIONS) -> ScheduleRun:
    run = ScheduleRun(tree, cores, backend, weights, max_actions=max_actions)
    while not run.terminal:
        run.step(policy.decide(run.state, run.cores, run.idle))
    return run
