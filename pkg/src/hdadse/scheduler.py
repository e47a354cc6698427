"""
Layer scheduling on a fixed heterogeneous accelerator.

Pipeline: greedy per-layer assignment to the most-preferred sub-accelerator,
depth-first / breadth-first initial ordering, event-driven timeline
simulation under dependence and global-buffer constraints, load-balancing
feedback, and a post-processing pass that fills idle gaps with ready
per-model head layers.

All internal passes run on a :class:`CostTable` of per-(layer, sub-accelerator)
costs computed once per design point.
"""

import enum
import heapq
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

from .cost import CostParams, layer_profile, metric_value
from .hardware import HdaConfig
from .workload import Workload


class SchedulingError(RuntimeError):
    """The memory or dependence constraints can never be satisfied."""


class Metric(enum.Enum):
    LATENCY = "latency"
    ENERGY = "energy"
    EDP = "edp"


class Ordering(enum.Enum):
    DEPTH_FIRST = "depth_first"
    BREADTH_FIRST = "breadth_first"


@dataclass(frozen=True)
class SchedulerOptions:
    metric: Metric = Metric.EDP
    ordering: Optional[Ordering] = None   # None: try both, keep the better
    beta: float = 2.0
    rebalance_rounds: int = 10
    post_process: bool = True
    fallbacks: bool = True   # also try serial single-sub runs and an EFT list schedule

    def __post_init__(self):
        if self.beta < 1:
            raise ValueError("beta must be >= 1")
        if self.rebalance_rounds < 0:
            raise ValueError("rebalance_rounds must be >= 0")


GREEDY = SchedulerOptions(rebalance_rounds=0, post_process=False, fallbacks=False)


@dataclass(frozen=True)
class ScheduleEntry:
    layer_id: str
    model: str
    sub_acc: int
    start: int
    end: int
    energy: float
    ctx_energy: float = 0.0
    input_resident: bool = False
    output_resident: bool = False


@dataclass(frozen=True)
class Schedule:
    entries: Tuple[ScheduleEntry, ...]
    makespan: int
    total_energy: float
    per_subacc_busy: Tuple[int, ...]

    @property
    def edp(self) -> float:
        return self.makespan * self.total_energy

    def objective(self, metric: Metric) -> float:
        return metric_value(self.makespan, self.total_energy, metric.value)

    def assignment(self) -> Dict[str, int]:
        return {e.layer_id: e.sub_acc for e in self.entries}


# ---------------------------------------------------------------------------
# Cost table

class CostTable:
    """Per-(layer, sub-accelerator) latency, on-chip energy and working set."""

    def __init__(self, workload: Workload, hda: HdaConfig, params: CostParams,
                 latencies: Optional[Dict[str, Sequence[int]]] = None):
        self.workload = workload
        self.hda = hda
        self.params = params
        self.gb_capacity = hda.gb_capacity
        layers = workload.layers
        self.n = len(layers)
        self.nsub = len(hda.subaccs)
        self.ids = [l.id for l in layers]
        self.index = {lid: i for i, lid in enumerate(self.ids)}
        self.model = [workload.model_of(lid) for lid in self.ids]
        self.model_names = [m.name for m in workload.models]
        self.model_layers = [[self.index[l.id] for l in m.layers] for m in workload.models]
        self.preds = [[self.index[d] for d in l.depends_on] for l in layers]
        succs = [[] for _ in layers]
        for i, ps in enumerate(self.preds):
            for p in ps:
                succs[p].append(i)
        self.succs = succs
        self.dataflow = [s.dataflow.name for s in hda.subaccs]
        # weights of batch copies share one key: "<model>[b].<layer>" -> "<model>.<layer>"
        self.weight_key = [_weight_key(lid) for lid in self.ids]

        self.latency = [[0] * self.n for _ in range(self.nsub)]
        self.onchip = [[0.0] * self.n for _ in range(self.nsub)]
        self.ws = [[0] * self.n for _ in range(self.nsub)]
        self.tensors = [None] * self.n
        for s, sub in enumerate(hda.subaccs):
            lat, onc, ws = self.latency[s], self.onchip[s], self.ws[s]
            for i, layer in enumerate(layers):
                prof = layer_profile(layer, sub, params)
                lat[i] = prof.latency_cycles
                onc[i] = prof.onchip_energy
                ws[i] = prof.working_set
                self.tensors[i] = prof.tensors
        if latencies:
            for lid, per_sub in latencies.items():
                i = self.index[lid]
                for s in range(self.nsub):
                    self.latency[s][i] = int(per_sub[s])
        bpe = params.bytes_per_element
        self.out_bytes = [t[2] * bpe for t in self.tensors]

    def assignment_energy(self, s: int, i: int) -> float:
        """Energy with the optimistic resident-input estimate used for assignment."""
        w, _, o = self.tensors[i]
        spilled = self.out_bytes[i] > self.params.gb_capacity
        return self.onchip[s][i] + (w + (o if spilled else 0)) * self.params.e_dram

    def layer_metric(self, s: int, i: int, metric: Metric) -> float:
        return metric_value(self.latency[s][i], self.assignment_energy(s, i), metric.value)

    def to_indices(self, assignment: Dict[str, int]) -> List[int]:
        out = [0] * self.n
        for lid, s in assignment.items():
            out[self.index[lid]] = s
        return out

    def queues(self, assign: Sequence[int], order: Sequence[int]) -> List[List[int]]:
        qs = [[] for _ in range(self.nsub)]
        for i in order:
            qs[assign[i]].append(i)
        return qs


def _weight_key(layer_id: str) -> str:
    model, _, local = layer_id.partition(".")
    base = model.split("[", 1)[0]
    return f"{base}.{local}"


# ---------------------------------------------------------------------------
# Timeline simulation

@dataclass
class _Run:
    assign: List[int]
    queues: List[List[int]]
    start: List[int]
    end: List[int]
    energy: List[float]
    ctx_energy: List[float]
    in_res: List[bool]
    out_res: List[bool]
    makespan: int
    total_energy: float
    busy: List[int]

    def objective(self, metric: Metric) -> float:
        return metric_value(self.makespan, self.total_energy, metric.value)


def _simulate(table: CostTable, assign: Sequence[int], queues: Sequence[Sequence[int]],
              fill_gaps: bool = False) -> _Run:
    """Event-driven execution of per-sub-accelerator queues.

    A layer starts once its sub-accelerator is free, its predecessors are
    done and its working set fits in the global buffer. Outputs stay
    resident until their last consumer finishes if they fit while leaving
    room for the largest working set; otherwise they spill to DRAM.

    With ``fill_gaps`` an idle sub-accelerator whose queue head is blocked
    on a dependence pulls forward a ready head layer of another model that
    is assigned to it.
    """
    n, nsub = table.n, table.nsub
    params = table.params
    cap = table.gb_capacity
    e_dram = params.e_dram
    latency, onchip = table.latency, table.onchip
    preds, succs = table.preds, table.succs
    out_bytes, tensors = table.out_bytes, table.tensors
    ws = [table.ws[assign[i]][i] for i in range(n)]
    headroom = max(ws, default=0)
    if headroom > cap:
        worst = max(range(n), key=ws.__getitem__)
        raise SchedulingError(
            f"deadlock: layer {table.ids[worst]} needs {headroom} bytes of global buffer, "
            f"capacity is {cap}")
    res_limit = cap - headroom
    use_ctx = params.ctx_latency > 0 or params.ctx_energy > 0
    dataflow = table.dataflow
    share = params.share_weights
    fetched = set()

    queues = [list(q) for q in queues]
    pos = [0] * nsub
    waiting = [len(p) for p in preds]
    consumers_left = [len(s) for s in succs]
    started = [False] * n
    start = [0] * n
    end = [0] * n
    energy = [0.0] * n
    ctx_e = [0.0] * n
    in_res = [False] * n
    out_res = [False] * n
    running = [None] * nsub
    busy = [0] * nsub
    heap = []
    live = 0          # resident outputs + running working sets, bytes
    resident = 0      # resident outputs only
    model_ptr = [0] * len(table.model_layers)
    model_layers = table.model_layers
    n_started = 0

    def filler(s, now, z):
        est = None
        if all(started[p] for p in preds[z]):
            est = max(end[p] for p in preds[z])
        for m, ml in enumerate(model_layers):
            ptr = model_ptr[m]
            while ptr < len(ml) and started[ml[ptr]]:
                ptr += 1
            model_ptr[m] = ptr
            if ptr == len(ml):
                continue
            y = ml[ptr]
            if y == z or assign[y] != s or waiting[y] or live + ws[y] > cap:
                continue
            if est is not None and now + latency[s][y] > est:
                continue
            return y
        return None

    def try_start(now):
        nonlocal live, resident, n_started
        for s in range(nsub):
            if running[s] is not None:
                continue
            q = queues[s]
            p = pos[s]
            if p >= len(q):
                continue
            i = q[p]
            if waiting[i]:
                if not fill_gaps:
                    continue
                y = filler(s, now, i)
                if y is None:
                    continue
                q.remove(y)
                q.insert(p, y)
                i = y
            w = ws[i]
            if live + w > cap:
                continue
            dur = latency[s][i]
            if use_ctx and any(dataflow[assign[pp]] != dataflow[s] for pp in preds[i]):
                dur += params.ctx_latency
                ctx_e[i] = params.ctx_energy
            ob = out_bytes[i]
            keep = resident + ob <= res_limit and live + w + ob <= cap
            wt, it, ot = tensors[i]
            ir = bool(preds[i]) and all(out_res[pp] for pp in preds[i])
            if share:
                key = table.weight_key[i]
                if key in fetched:
                    wt = 0
                fetched.add(key)
            dram = wt + (0 if ir else it) + (0 if keep else ot)
            energy[i] = onchip[s][i] + dram * e_dram
            in_res[i] = ir
            out_res[i] = keep
            if keep:
                resident += ob
                live += ob
            live += w
            started[i] = True
            n_started += 1
            start[i] = now
            end[i] = now + dur
            busy[s] += dur
            running[s] = i
            pos[s] = p + 1
            heapq.heappush(heap, (now + dur, s, i))

    try_start(0)
    now = 0
    while heap:
        now = heap[0][0]
        while heap and heap[0][0] == now:
            _, s, i = heapq.heappop(heap)
            running[s] = None
            live -= ws[i]
            for c in succs[i]:
                waiting[c] -= 1
            for pp in preds[i]:
                consumers_left[pp] -= 1
                if consumers_left[pp] == 0 and out_res[pp]:
                    live -= out_bytes[pp]
                    resident -= out_bytes[pp]
            if not succs[i] and out_res[i]:
                live -= out_bytes[i]
                resident -= out_bytes[i]
        try_start(now)
    if n_started != n:
        stuck = [table.ids[q[pos[s]]] for s, q in enumerate(queues) if pos[s] < len(q)]
        raise SchedulingError(f"deadlock: queue heads {stuck} can never start")
    total = sum(energy) + sum(ctx_e)
    return _Run(list(assign), queues, start, end, energy, ctx_e, in_res, out_res,
                max(end, default=0), total, busy)


def _to_schedule(table: CostTable, run: _Run) -> Schedule:
    names = table.model_names
    entries = [
        ScheduleEntry(table.ids[i], names[table.model[i]], run.assign[i], run.start[i],
                      run.end[i], run.energy[i], run.ctx_energy[i], run.in_res[i], run.out_res[i])
        for i in range(table.n)]
    entries.sort(key=lambda e: (e.start, e.sub_acc, e.end))
    return Schedule(tuple(entries), run.makespan, run.total_energy, tuple(run.busy))


def _queues_from_schedule(table: CostTable, schedule: Schedule):
    assign = [0] * table.n
    queues = [[] for _ in range(table.nsub)]
    for e in sorted(schedule.entries, key=lambda e: (e.start, e.end)):
        i = table.index[e.layer_id]
        assign[i] = e.sub_acc
        queues[e.sub_acc].append(i)
    return assign, queues


# ---------------------------------------------------------------------------
# Pipeline stages (table level)

def greedy_assign(table: CostTable, metric: Metric) -> List[int]:
    out = []
    for i in range(table.n):
        cap = table.gb_capacity
        # a sub-accelerator that cannot hold the layer's working set is a last resort
        best = min(range(table.nsub),
                   key=lambda s: (table.ws[s][i] > cap, table.layer_metric(s, i, metric), s))
        out.append(best)
    return out


def _order_indices(table: CostTable, policy: Ordering) -> List[int]:
    if policy is Ordering.DEPTH_FIRST:
        return [i for ml in table.model_layers for i in ml]
    order = []
    depth = max((len(ml) for ml in table.model_layers), default=0)
    for k in range(depth):
        for ml in table.model_layers:
            if k < len(ml):
                order.append(ml[k])
    return order


def _eft_plan(table: CostTable) -> Tuple[List[int], List[int]]:
    """Earliest-finish-time list scheduling on upward critical-path rank.

    Ignores memory and energy; the result is only a proposal that the
    simulator then executes.
    """
    n, nsub, cap = table.n, table.nsub, table.gb_capacity
    lat = table.latency
    rank = [0.0] * n
    for i in reversed(range(n)):
        mean = sum(lat[s][i] for s in range(nsub)) / nsub
        rank[i] = mean + max((rank[c] for c in table.succs[i]), default=0.0)
    order = sorted(range(n), key=lambda i: (-rank[i], i))
    free = [0] * nsub
    end = [0] * n
    assign = [0] * n
    for i in order:
        ready = max((end[p] for p in table.preds[i]), default=0)
        best = None
        for s in range(nsub):
            finish = max(free[s], ready) + lat[s][i]
            key = (table.ws[s][i] > cap, finish, s)
            if best is None or key < best:
                best = key
        s = best[2]
        assign[i] = s
        end[i] = free[s] = best[1]
    return assign, order


def _better(a: _Run, b: _Run, metric: Metric) -> bool:
    return (a.objective(metric), a.makespan) < (b.objective(metric), b.makespan)


def _rebalance(table: CostTable, assign: List[int], order: List[int],
               options: SchedulerOptions, current: Optional[_Run] = None) -> _Run:
    metric = options.metric
    if current is None:
        current = _simulate(table, assign, table.queues(assign, order))
    if table.nsub < 2:
        return current
    assign = list(assign)
    rejected = set()
    best_obj = current.objective(metric)
    for _ in range(options.rebalance_rounds):
        busy = current.busy
        if max(busy) / max(min(busy), 1) <= options.beta:
            break
        hot = max(range(table.nsub), key=lambda s: (busy[s], -s))
        best = None
        for i in range(table.n):
            if assign[i] != hot or i in rejected:
                continue
            here = table.layer_metric(hot, i, metric)
            alts = [s for s in range(table.nsub) if s != hot and table.ws[s][i] <= table.gb_capacity]
            if not alts:
                continue
            alt = min(alts, key=lambda s: (table.layer_metric(s, i, metric), s))
            penalty = table.layer_metric(alt, i, metric) / here if here > 0 else float("inf")
            if best is None or penalty < best[0]:
                best = (penalty, i, alt)
        if best is None:
            break
        _, i, alt = best
        trial = list(assign)
        trial[i] = alt
        run = _simulate(table, trial, table.queues(trial, order))
        obj = run.objective(metric)
        if obj <= best_obj:
            assign, current, best_obj = trial, run, obj
        else:
            rejected.add(i)
    return current


def _post_process(table: CostTable, run: _Run) -> _Run:
    filled = _simulate(table, run.assign, run.queues, fill_gaps=True)
    return filled if filled.makespan <= run.makespan else run


def schedule_table(table: CostTable, options: SchedulerOptions = SchedulerOptions()) -> _Run:
    metric = options.metric
    assign = greedy_assign(table, metric)
    policies = [options.ordering] if options.ordering else list(Ordering)
    best_run, best_order = None, None
    for policy in policies:
        order = _order_indices(table, policy)
        run = _simulate(table, assign, table.queues(assign, order))
        if best_run is None or _better(run, best_run, metric):
            best_run, best_order = run, order
    candidates = [best_run]
    # everything serially on one sub-accelerator is always a legal fallback
    if options.fallbacks and table.nsub > 1:
        dfo = _order_indices(table, Ordering.DEPTH_FIRST)
        for s in range(table.nsub):
            if max(table.ws[s], default=0) <= table.gb_capacity:
                serial = [s] * table.n
                candidates.append(_simulate(table, serial, table.queues(serial, dfo)))
    if options.fallbacks and table.nsub > 1:
        eft_assign, eft_order = _eft_plan(table)
        try:
            eft = _simulate(table, eft_assign, table.queues(eft_assign, eft_order))
        except SchedulingError:
            eft = None
        if eft is not None:
            candidates.append(eft)
            if options.post_process:
                candidates.append(_post_process(table, eft))
    main = best_run
    if options.rebalance_rounds:
        main = _rebalance(table, assign, best_order, options, best_run)
        candidates.append(main)
    if options.post_process:
        candidates.append(_post_process(table, main))
    best = candidates[0]
    for run in candidates[1:]:
        if _better(run, best, metric):
            best = run
    return best


# ---------------------------------------------------------------------------
# Public API

def assign_layers(workload: Workload, hda: HdaConfig, params: CostParams,
                  metric: Metric = Metric.EDP) -> Dict[str, int]:
    """Map every layer to the sub-accelerator minimizing ``metric`` (ties: lowest index)."""
    table = CostTable(workload, hda, params)
    return dict(zip(table.ids, greedy_assign(table, metric)))


def order_layers(workload: Workload, policy: Ordering) -> List[str]:
    ids = []
    if policy is Ordering.DEPTH_FIRST:
        for model in workload.models:
            ids.extend(l.id for l in model.layers)
        return ids
    depth = max((len(m.layers) for m in workload.models), default=0)
    for k in range(depth):
        for model in workload.models:
            if k < len(model.layers):
                ids.append(model.layers[k].id)
    return ids


def simulate(workload: Workload, assignment: Dict[str, int], order: Sequence[str],
             hda: HdaConfig, params: CostParams, table: Optional[CostTable] = None) -> Schedule:
    table = table or CostTable(workload, hda, params)
    assign = table.to_indices(assignment)
    run = _simulate(table, assign, table.queues(assign, [table.index[l] for l in order]))
    return _to_schedule(table, run)


def post_process(schedule: Schedule, workload: Workload, hda: HdaConfig, params: CostParams,
                 table: Optional[CostTable] = None) -> Schedule:
    """Fill idle gaps with ready per-model head layers; never increases makespan."""
    table = table or CostTable(workload, hda, params)
    assign, queues = _queues_from_schedule(table, schedule)
    run = _simulate(table, assign, queues)
    filled = _post_process(table, run)
    if filled is run and run.makespan > schedule.makespan:
        return schedule
    result = _to_schedule(table, filled)
    return result if result.makespan <= schedule.makespan else schedule


def rebalance(workload: Workload, assignment: Dict[str, int], hda: HdaConfig,
              params: CostParams, options: SchedulerOptions = SchedulerOptions(),
              order: Optional[Sequence[str]] = None,
              table: Optional[CostTable] = None) -> Dict[str, int]:
    table = table or CostTable(workload, hda, params)
    policy = options.ordering or Ordering.DEPTH_FIRST
    order_idx = ([table.index[l] for l in order] if order is not None
                 else _order_indices(table, policy))
    run = _rebalance(table, table.to_indices(assignment), order_idx, options)
    return dict(zip(table.ids, run.assign))


def schedule_workload(workload: Workload, hda: HdaConfig, params: CostParams,
                      options: SchedulerOptions = SchedulerOptions(),
                      table: Optional[CostTable] = None) -> Schedule:
    table = table or CostTable(workload, hda, params)
    return _to_schedule(table, schedule_table(table, options))


@dataclass(frozen=True)
class Violation:
    rule: str
    layer_id: str
    message: str


def validate_schedule(schedule: Schedule, workload: Workload, hda: HdaConfig,
                      params: CostParams, table: Optional[CostTable] = None) -> List[Violation]:
    """Check a schedule against every schedule invariant; empty list means valid."""
    table = table or CostTable(workload, hda, params)
    out: List[Violation] = []
    by_id: Dict[str, ScheduleEntry] = {}
    for e in schedule.entries:
        if e.layer_id not in table.index:
            out.append(Violation("UNKNOWN", e.layer_id, "entry for a layer not in the workload"))
        elif e.layer_id in by_id:
            out.append(Violation("DUPLICATE", e.layer_id, "layer scheduled more than once"))
        else:
            by_id[e.layer_id] = e
        if not 0 <= e.sub_acc < table.nsub:
            out.append(Violation("SUBACC", e.layer_id, f"no sub-accelerator {e.sub_acc}"))
        if e.end <= e.start:
            out.append(Violation("DURATION", e.layer_id, f"empty interval [{e.start}, {e.end})"))
    for lid in table.ids:
        if lid not in by_id:
            out.append(Violation("MISSING", lid, "layer never scheduled"))
    if out:
        return out

    params_ctx = params.ctx_latency > 0 or params.ctx_energy > 0
    for lid, e in by_id.items():
        i = table.index[lid]
        expected = table.latency[e.sub_acc][i]
        if params_ctx and any(table.dataflow[by_id[table.ids[p]].sub_acc] != table.dataflow[e.sub_acc]
                              for p in table.preds[i]):
            expected += params.ctx_latency
        if e.end - e.start != expected:
            out.append(Violation("DURATION", lid,
                                 f"runs {e.end - e.start} cycles, model says {expected}"))
        for p in table.preds[i]:
            pe = by_id[table.ids[p]]
            if e.start < pe.end:
                out.append(Violation("DEPENDENCE", lid,
                                     f"starts at {e.start} before predecessor {pe.layer_id} ends at {pe.end}"))

    per_sub: Dict[int, List[ScheduleEntry]] = {}
    for e in by_id.values():
        per_sub.setdefault(e.sub_acc, []).append(e)
    for s, es in per_sub.items():
        es.sort(key=lambda e: (e.start, e.end))
        for a, b in zip(es, es[1:]):
            if b.start < a.end:
                out.append(Violation("OVERLAP", b.layer_id,
                                     f"overlaps {a.layer_id} on sub-accelerator {s}"))

    # global-buffer occupancy: working sets while running, resident outputs
    # until the last consumer finishes
    events = []
    for lid, e in by_id.items():
        i = table.index[lid]
        ws = table.ws[e.sub_acc][i]
        events.append((e.start, 1, ws, lid))
        events.append((e.end, 0, -ws, lid))
        if e.output_resident:
            release = max((by_id[table.ids[c]].end for c in table.succs[i]), default=e.end)
            events.append((e.start, 1, table.out_bytes[i], lid))
            events.append((release, 0, -table.out_bytes[i], lid))
    events.sort(key=lambda ev: (ev[0], ev[1]))
    live = 0
    flagged = set()
    for t, kind, delta, lid in events:
        live += delta
        if kind == 1 and live > table.gb_capacity and lid not in flagged:
            flagged.add(lid)
            out.append(Violation("MEMORY", lid,
                                 f"global buffer holds {live} bytes at cycle {t}, capacity {table.gb_capacity}"))

    makespan = max(e.end for e in by_id.values()) if by_id else 0
    if schedule.makespan != makespan:
        out.append(Violation("SUMMARY", "", f"makespan {schedule.makespan} != max end {makespan}"))
    for s in range(table.nsub):
        busy = sum(e.end - e.start for e in per_sub.get(s, []))
        if s < len(schedule.per_subacc_busy) and schedule.per_subacc_busy[s] != busy:
            out.append(Violation("SUMMARY", "", f"busy time of sub-accelerator {s} is {busy}, "
                                                f"summary says {schedule.per_subacc_busy[s]}"))
    return out
