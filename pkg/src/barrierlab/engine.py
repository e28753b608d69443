"""Deterministic discrete-event simulation of barrier-controlled SGD.

Events live in a binary heap ordered by ``(time, seq)``; ``seq`` is
assigned when an event is scheduled, so the processing order is total and
a run is a pure function of its :class:`~barrierlab.config.SimConfig`.

Each node cycles through compute -> commit -> admission check. A node that
fails its check is blocked until one of:

* centralised states, deterministic view (BSP, SSP, or a probabilistic
  sample that covers every peer): the global minimum counter reaches the
  node's threshold, tracked with a threshold heap;
* centralised states, partial probabilistic sample: every sampled laggard
  has caught up or left, after which a fresh sample is drawn;
* distributed states: a retry timer of ``retry_backoff`` seconds fires and
  the node re-samples.

Every node owns independent random substreams for step times, peer
sampling, workload minibatches and churn, keyed by ``(master_seed, purpose,
node id)``. Policies that do not sample never touch the sampling stream,
which is what makes e.g. ``SSP(s=inf)`` and ``ASP`` produce identical
step-time sequences.
"""

from __future__ import annotations

import heapq
import logging
import math
from collections import defaultdict

import numpy as np

from .barrier import Method, sample_indices
from .config import SimConfig
from .errors import ConfigError
from .model import NodeState, UpdateLog
from .trace import AuditRow, EventRecord, NodeFinal, RunTrace
from .workloads import AggregationTask, LinearTask

__all__ = ["run", "EventKind", "make_workload", "node_streams"]

log = logging.getLogger(__name__)


class EventKind:
    STEP_COMPLETE = 0
    ADMISSION_CHECK = 1
    WAKEUP = 2
    JOIN = 3
    LEAVE = 4

    names = ("StepComplete", "AdmissionCheck", "Wakeup", "Join", "Leave")


# spawn-key tags for random substreams
_STEP, _SAMPLE, _WORK, _CHURN, _SPEED, _STRAGGLERS, _JOINS = range(1, 8)


def _stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def node_streams(seed: int, node: int) -> dict[str, np.random.Generator]:
    return {
        "step": _stream(seed, _STEP, node),
        "sample": _stream(seed, _SAMPLE, node),
        "work": _stream(seed, _WORK, node),
        "churn": _stream(seed, _CHURN, node),
        "speed": _stream(seed, _SPEED, node),
    }


def make_workload(config: SimConfig):
    t = config.task
    if config.workload == "sgd":
        return LinearTask(config.model_dim, t.learning_rate, t.batch_size,
                          t.noise_sigma, t.samples_per_node, config.master_seed)
    return AggregationTask(t.batch_size, seed=config.master_seed)


class _Simulation:
    def __init__(self, config: SimConfig, update_log: UpdateLog | None = None):
        self.cfg = config
        self.update_log = update_log
        self.policy = config.effective_policy
        self.bound = self.policy.bound
        self.centralised = config.effective_placement == "centralised"
        self.probabilistic = self.policy.method is Method.PROBABILISTIC
        # unbounded staleness admits unconditionally; never sample for it
        self.asp = self.bound is None
        self.backoff = config.effective_backoff
        self.workload = make_workload(config)
        self.server = self.workload.initial_model()
        self.seed = config.master_seed

        st = config.step_time
        self._step_family = st.family
        self._step_mean = st.mean
        self._step_sigma = st.dispersion
        self._step_mu = math.log(st.mean) - 0.5 * st.dispersion ** 2

        self.heap: list = []
        self.seq = 0
        self.now = 0.0

        self.nodes: dict[int, NodeState] = {}
        self.streams: dict[int, dict] = {}
        self.blocked_time: dict[int, float] = {}
        self.live_list: list[int] = []
        self.pos: dict[int, int] = {}
        self.counts: dict[int, int] = defaultdict(int)
        self.min_c = 0
        self.max_c = 0
        self.max_spread = 0

        # blocked bookkeeping
        self.blocked: dict[int, float] = {}
        self.threshold: dict[int, int] = {}
        self.thr_heap: list[tuple[int, int]] = []
        self.waiting: dict[int, set[int]] = {}
        self.watchers: dict[int, set[int]] = defaultdict(set)
        self.wake_pending: set[int] = set()

        self.audits: list[AuditRow] = []
        self.loss_curve: list[tuple[float, float]] = []
        self.next_loss_t = 0.0
        self.membership: list[tuple[float, int]] = []
        self.events: list[EventRecord] | None = [] if config.keep_events else None
        self.total_commits = 0
        self.liveness_violations = 0
        self.own_write_violations = 0
        self.exhausted = False
        self.next_id = config.num_nodes
        self.eval_nodes = list(range(config.num_nodes))
        self._join_rng = _stream(self.seed, _JOINS)

    # scheduling

    def schedule(self, t: float, kind: int, node: int):
        heapq.heappush(self.heap, (t, self.seq, kind, node))
        self.seq += 1

    def record(self, kind: int, node: int, admitted: bool | None = None):
        if self.events is not None:
            self.events.append(EventRecord(self.now, len(self.events), EventKind.names[kind],
                                           node, self.nodes[node].counter,
                                           self.server.version, admitted))

    def step_duration(self, node: NodeState) -> float:
        rng = self.streams[node.id]["step"]
        if self._step_family == "lognormal":
            base = rng.lognormal(self._step_mu, self._step_sigma) if self._step_sigma else self._step_mean
        elif self._step_family == "exponential":
            base = rng.exponential(self._step_mean)
        else:
            base = self._step_mean
        return base * node.speed_factor

    # population

    def add_node(self, nid: int, counter: int, straggler: bool | None):
        streams = self.streams[nid] = node_streams(self.seed, nid)
        sigma = self.cfg.heterogeneity.sigma
        speed = streams["speed"].lognormal(-0.5 * sigma * sigma, sigma) if sigma else 1.0
        if straggler is None:
            straggler = streams["speed"].random() < self.cfg.straggler.fraction
        if straggler:
            speed *= self.cfg.straggler.slowdown
        node = NodeState(nid, counter=counter, speed_factor=float(speed))
        self.nodes[nid] = node
        self.blocked_time[nid] = 0.0
        self.pos[nid] = len(self.live_list)
        self.live_list.append(nid)
        if len(self.live_list) == 1:
            self.min_c = self.max_c = counter
        self.counts[counter] += 1
        self.max_c = max(self.max_c, counter)
        if self.cfg.churn.leave_rate > 0:
            t = self.now + streams["churn"].exponential(1.0 / self.cfg.churn.leave_rate)
            self.schedule(t, EventKind.LEAVE, nid)
        self.start_step(node)

    def remove_live(self, nid: int):
        i = self.pos.pop(nid)
        last = self.live_list.pop()
        if last != nid:
            self.live_list[i] = last
            self.pos[last] = i

    # counters

    def _drop_count(self, c: int):
        self.counts[c] -= 1
        if self.counts[c] == 0:
            del self.counts[c]

    def _refresh_extremes(self) -> bool:
        """Recompute min/max after a removal; True if the min moved."""
        if not self.counts:
            return False
        old = self.min_c
        while self.min_c not in self.counts:
            self.min_c += 1
        while self.max_c not in self.counts:
            self.max_c -= 1
        return self.min_c != old

    # compute / admission

    def start_step(self, node: NodeState):
        node.local_model = self.server
        node.last_synced_version = self.server.version
        if node.last_commit_version > node.last_synced_version:
            self.own_write_violations += 1
        self.schedule(self.now + self.step_duration(node), EventKind.STEP_COMPLETE, node.id)

    def on_step_complete(self, nid: int):
        node = self.nodes[nid]
        u = self.workload.compute(node.local_model, node, self.streams[nid]["work"])
        self.server = self.workload.commit(self.server, u)
        if self.update_log is not None:
            self.update_log.append(u)
        node.last_commit_version = self.server.version
        self.total_commits += 1
        old = node.counter
        node.counter = old + 1
        self._drop_count(old)
        self.counts[old + 1] += 1
        if old + 1 > self.max_c:
            self.max_c = old + 1
        woken = []
        if old == self.min_c and old not in self.counts:
            self.min_c = old + 1
            woken.extend(self._pop_thresholds())
        if self.watchers:
            woken.extend(self._progress_watch(nid, old + 1))
        self.admission(node, EventKind.ADMISSION_CHECK)
        self._wake(woken)

    def _pop_thresholds(self) -> list[int]:
        out = []
        heap = self.thr_heap
        while heap and heap[0][0] <= self.min_c:
            thr, nid = heapq.heappop(heap)
            if nid in self.blocked and self.threshold.get(nid) == thr and nid not in self.wake_pending:
                del self.threshold[nid]
                out.append(nid)
        return out

    def _progress_watch(self, nid: int, counter: int) -> list[int]:
        out = []
        ws = self.watchers.get(nid)
        if not ws:
            return out
        for w in list(ws):
            if counter >= self.threshold[w]:
                ws.discard(w)
                pending = self.waiting[w]
                pending.discard(nid)
                if not pending:
                    del self.waiting[w]
                    del self.threshold[w]
                    out.append(w)
        if not ws:
            del self.watchers[nid]
        return out

    def _wake(self, woken):
        for w in sorted(set(woken)):
            self.wake_pending.add(w)
            self.schedule(self.now, EventKind.WAKEUP, w)

    def _sample(self, nid: int) -> list[int]:
        pol = self.policy
        beta = pol.sample_size
        live = self.live_list
        if pol.sample_include_self:
            n, skip = len(live), None
        else:
            n, skip = len(live) - 1, self.pos[nid]
        if beta == 0 or n <= 0:
            return []
        rng = self.streams[nid]["sample"]
        if pol.sample_with_replacement:
            idx = rng.integers(0, n, size=beta).tolist()
        elif beta >= n:
            idx = range(n)
        else:
            idx = sample_indices(rng, n, beta)
        if skip is None:
            return [live[j] for j in idx]
        return [live[j if j < skip else j + 1] for j in idx]

    def admission(self, node: NodeState, kind: int):
        nid = node.id
        c = node.counter
        if self.asp:
            self.record(kind, nid, True)
            self.admit(node)
            return
        bound = self.bound
        sample = None
        if self.probabilistic:
            sample = self._sample(nid)
            if not sample:
                self.audits.append(AuditRow(self.now, nid, c, None, c - self.min_c, bound))
                self.record(kind, nid, True)
                self.admit(node)
                return
            nodes = self.nodes
            view_min = min(nodes[p].counter for p in sample)
        else:
            view_min = self.min_c
        lag = c - view_min
        if lag <= bound:
            self.audits.append(AuditRow(self.now, nid, c, lag, c - self.min_c, bound))
            self.record(kind, nid, True)
            self.admit(node)
        else:
            self.record(kind, nid, False)
            self.block(node, sample)

    def admit(self, node: NodeState):
        nid = node.id
        start = self.blocked.pop(nid, None)
        if start is not None:
            self.blocked_time[nid] += self.now - start
        self.start_step(node)

    def block(self, node: NodeState, sample):
        nid = node.id
        if nid not in self.blocked:
            self.blocked[nid] = self.now
        thr = node.counter - self.bound
        if not self.centralised:
            self.schedule(self.now + self.backoff, EventKind.ADMISSION_CHECK, nid)
            return
        self.threshold[nid] = thr
        full = sample is None or len(set(sample) - {nid}) >= len(self.live_list) - 1
        if full:
            heapq.heappush(self.thr_heap, (thr, nid))
            return
        nodes = self.nodes
        laggards = {p for p in sample if nodes[p].counter < thr}
        self.waiting[nid] = laggards
        for p in laggards:
            self.watchers[p].add(nid)

    # churn

    def on_leave(self, nid: int):
        node = self.nodes[nid]
        self.record(EventKind.LEAVE, nid)
        node.live = False
        self.remove_live(nid)
        self._drop_count(node.counter)
        start = self.blocked.pop(nid, None)
        if start is not None:
            self.blocked_time[nid] += self.now - start
        self.threshold.pop(nid, None)
        self.wake_pending.discard(nid)
        for p in self.waiting.pop(nid, ()):
            ws = self.watchers.get(p)
            if ws is not None:
                ws.discard(nid)
                if not ws:
                    del self.watchers[p]
        self.membership.append((self.now, len(self.live_list)))
        if not self.live_list:
            self.exhausted = True
            return
        woken = []
        if self._refresh_extremes():
            woken.extend(self._pop_thresholds())
        for w in self.watchers.pop(nid, ()):
            pending = self.waiting[w]
            pending.discard(nid)
            if not pending:
                del self.waiting[w]
                del self.threshold[w]
                woken.append(w)
        self._wake(woken)
        self._audit_watch_sets()

    def on_join(self):
        nid = self.next_id
        self.next_id += 1
        self.add_node(nid, self.min_c, None)
        self.record(EventKind.JOIN, nid)
        self.membership.append((self.now, len(self.live_list)))
        self._schedule_join()

    def _schedule_join(self):
        rate = self.cfg.churn.join_rate * self.cfg.num_nodes
        if rate > 0:
            self.schedule(self.now + self._join_rng.exponential(1.0 / rate), EventKind.JOIN, -1)

    # audits

    def _audit_watch_sets(self):
        for w, pending in self.waiting.items():
            if any(not self.nodes[p].live for p in pending):
                self.liveness_violations += 1

    def _audit_thresholds(self):
        heap = self.thr_heap
        while heap:
            thr, nid = heap[0]
            if nid in self.blocked and self.threshold.get(nid) == thr:
                break
            heapq.heappop(heap)
        if heap and heap[0][0] <= self.min_c:
            self.liveness_violations += 1

    # main loop

    def sample_loss(self, upto: float):
        """Record the server loss at every grid time not after ``upto``."""
        interval = self.cfg.loss_interval
        while self.next_loss_t <= upto:
            self.loss_curve.append(
                (self.next_loss_t, self.workload.evaluate(self.server, self.eval_nodes)))
            self.next_loss_t = len(self.loss_curve) * interval

    def run(self) -> RunTrace:
        cfg = self.cfg
        n = cfg.num_nodes
        k = int(round(cfg.straggler.fraction * n))
        stragglers = set(_stream(self.seed, _STRAGGLERS).choice(n, size=k, replace=False).tolist()) if k else set()
        for nid in range(n):
            self.add_node(nid, 0, nid in stragglers)
        self.membership.append((0.0, len(self.live_list)))
        self._schedule_join()

        duration = cfg.duration
        heap = self.heap
        nodes = self.nodes
        while heap:
            t, _, kind, nid = heap[0]
            if t >= duration:
                break
            heapq.heappop(heap)
            if t >= self.next_loss_t:
                self.sample_loss(t)
            self.now = t
            if kind == EventKind.JOIN:
                self.on_join()
            else:
                node = nodes[nid]
                if not node.live:
                    continue
                if kind == EventKind.STEP_COMPLETE:
                    self.record(kind, nid)
                    self.on_step_complete(nid)
                elif kind == EventKind.LEAVE:
                    self.on_leave(nid)
                    if self.exhausted:
                        log.info("population reached zero at t=%.6g", t)
                        break
                elif nid in self.blocked:
                    # Wakeup or retry AdmissionCheck
                    self.wake_pending.discard(nid)
                    self.admission(node, kind)
            if self.max_c - self.min_c > self.max_spread:
                self.max_spread = self.max_c - self.min_c
            if self.thr_heap:
                self._audit_thresholds()

        end = self.now if self.exhausted else duration
        self.now = end
        self.sample_loss(end)
        for nid, start in self.blocked.items():
            self.blocked_time[nid] += end - start
        self.blocked.clear()

        finals = [NodeFinal(nid, nd.counter, self.blocked_time[nid], nd.live)
                  for nid, nd in sorted(nodes.items())]
        return RunTrace(
            config=cfg,
            config_fingerprint=cfg.fingerprint(),
            per_node_final=finals,
            staleness_audits=self.audits,
            loss_curve=self.loss_curve,
            membership_curve=self.membership,
            events=self.events,
            final_model=self.server,
            total_commits=self.total_commits,
            max_spread=self.max_spread,
            liveness_violations=self.liveness_violations,
            own_write_violations=self.own_write_violations,
            population_exhausted=self.exhausted,
            end_time=end,
        )


def run(config: SimConfig, update_log: UpdateLog | None = None) -> RunTrace:
    """Simulate ``config`` and return its trace.

    The config is validated before any event is processed; the result
    depends only on the config (including ``master_seed``). If
    ``update_log`` is given, every committed update is appended to it in
    commit order.
    """
    if not isinstance(config, SimConfig):
        raise ConfigError("expected a SimConfig", "config")
    config.validate()
    return _Simulation(config, update_log).run()
