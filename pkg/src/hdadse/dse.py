"""
Hardware partitioning search for heterogeneous dataflow accelerators, plus
the monolithic and scaled-out baselines it is compared against.
"""

import enum
import math
import random
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

from .cost import CostParams
from .dataflow import Dataflow, builtin_dataflow
from .hardware import HdaConfig, Totals
from .scheduler import (CostTable, Ordering, Schedule, SchedulerOptions, SchedulingError,
                        _order_indices, _simulate, _to_schedule, schedule_table)
from .workload import Workload


class Strategy(enum.Enum):
    EXHAUSTIVE = "exhaustive"
    BINARY = "binary"
    RANDOM = "random"


@dataclass(frozen=True)
class SearchOptions:
    strategy: Strategy = Strategy.EXHAUSTIVE
    g_pe: Optional[int] = None      # default: N_PE / 16
    g_bw: Optional[float] = None    # default: BW_G / 16 (GB/s)
    budget: int = 32
    seed: int = 0

    def granularities(self, totals: Totals) -> Tuple[int, float]:
        g_pe = self.g_pe if self.g_pe is not None else totals.n_pe // 16
        g_bw = self.g_bw if self.g_bw is not None else totals.bw_gbps / 16
        if g_pe < 1 or totals.n_pe % g_pe:
            raise ValueError(f"PE granularity {g_pe} does not divide {totals.n_pe}")
        if g_bw <= 0 or not _divides(g_bw, totals.bw_gbps):
            raise ValueError(f"bandwidth granularity {g_bw} does not divide {totals.bw_gbps}")
        if self.budget < 1:
            raise ValueError("search budget must be >= 1")
        return g_pe, g_bw


def _divides(g, total) -> bool:
    units = total / g
    return abs(units - round(units)) < 1e-9


@dataclass(frozen=True)
class DesignPoint:
    partition: str
    kind: str                       # hda | fda | smfda | rda
    makespan: float
    energy: float
    edp: float
    feasible: bool = True
    pe_split: Tuple[int, ...] = ()
    bw_split: Tuple[float, ...] = ()
    dataflows: Tuple[str, ...] = ()
    hda: Optional[HdaConfig] = field(default=None, compare=False, repr=False)
    schedule: Optional[Schedule] = field(default=None, compare=False, repr=False)
    sched_seconds: float = field(default=0.0, compare=False)
    note: str = ""

    @property
    def key(self):
        return (self.pe_split, self.bw_split)


def enumerate_partitions(total, parts: int, granularity) -> List[tuple]:
    """Compositions of ``total`` into ``parts`` positive multiples of ``granularity``,
    in lexicographic order."""
    if parts < 1:
        raise ValueError("parts must be >= 1")
    if not _divides(granularity, total):
        raise ValueError(f"granularity {granularity} does not divide {total}")
    units = round(total / granularity)
    if units < parts:
        raise ValueError(f"{total} cannot be split into {parts} parts of granularity {granularity}")
    as_int = isinstance(total, int) and isinstance(granularity, int)

    def scale(u):
        return u * granularity if as_int else u * granularity

    out = []

    def rec(prefix, left, k):
        if k == 1:
            out.append(tuple(scale(u) for u in prefix + [left]))
            return
        for u in range(1, left - k + 2):
            rec(prefix + [u], left - u, k - 1)

    rec([], units, parts)
    return out


def _num(x):
    return int(x) if float(x).is_integer() else x


def partition_descriptor(dataflows: Sequence[str], pe_split, bw_split) -> str:
    return "+".join(f"{d}:{p}/{_num(b):g}" for d, p, b in zip(dataflows, pe_split, bw_split))


def _names(dataflows) -> Tuple[str, ...]:
    return tuple(d.name if isinstance(d, Dataflow) else builtin_dataflow(d).name for d in dataflows)


def evaluate_hda(hda: HdaConfig, workload: Workload, params: CostParams,
                 options: SchedulerOptions = SchedulerOptions(), kind: str = "hda",
                 keep_schedule: bool = False) -> DesignPoint:
    """Schedule ``workload`` on ``hda``; deadlocks yield an infeasible point."""
    clock = params.clock
    pe_split = tuple(s.n_pe for s in hda.subaccs)
    bw_split = tuple(_num(round(s.bw * clock / 1e9, 9)) for s in hda.subaccs)
    names = tuple(s.dataflow.name for s in hda.subaccs)
    desc = partition_descriptor(names, pe_split, bw_split)
    t0 = time.perf_counter()
    try:
        table = CostTable(workload, hda, params)
        run = schedule_table(table, options)
    except SchedulingError as exc:
        return DesignPoint(desc, kind, math.inf, math.inf, math.inf, False, pe_split, bw_split,
                           names, hda, None, time.perf_counter() - t0, str(exc))
    elapsed = time.perf_counter() - t0
    schedule = _to_schedule(table, run) if keep_schedule else None
    return DesignPoint(desc, kind, run.makespan, run.total_energy, run.makespan * run.total_energy,
                       True, pe_split, bw_split, names, hda, schedule, elapsed)


def pareto_frontier(points: Sequence[DesignPoint]) -> List[DesignPoint]:
    """Points not dominated in (makespan, energy), sorted by makespan.

    Duplicated coordinates keep only the first point in (makespan, energy,
    partition) order.
    """
    pts = sorted((p for p in points if p.feasible),
                 key=lambda p: (p.makespan, p.energy, p.partition))
    out = []
    best_energy = math.inf
    last = None
    for p in pts:
        coords = (p.makespan, p.energy)
        if coords == last:
            continue
        if p.energy < best_energy:
            out.append(p)
            best_energy = p.energy
            last = coords
    return out


def best_edp(points: Sequence[DesignPoint]) -> Optional[DesignPoint]:
    feasible = [p for p in points if p.feasible]
    if not feasible:
        return None
    return min(feasible, key=lambda p: (p.edp, p.pe_split, p.bw_split))


def _hda(dataflows, pe_split, bw_split, totals: Totals, params: CostParams) -> HdaConfig:
    return HdaConfig.from_partition(dataflows, pe_split, bw_split, totals.gb_capacity, params)


def fda_baseline(dataflow, totals: Totals, workload: Workload, params: CostParams,
                 options: SchedulerOptions = SchedulerOptions(), keep_schedule: bool = False) -> DesignPoint:
    hda = _hda([dataflow], [totals.n_pe], [totals.bw_gbps], totals, params)
    return evaluate_hda(hda, workload, params, options, kind="fda", keep_schedule=keep_schedule)


def smfda_baseline(dataflow, n_subaccs: int, totals: Totals, workload: Workload,
                   params: CostParams, options: SchedulerOptions = SchedulerOptions()) -> DesignPoint:
    if totals.n_pe % n_subaccs or not _divides(totals.bw_gbps / n_subaccs, totals.bw_gbps):
        raise ValueError(f"{n_subaccs} sub-accelerators do not evenly split the totals")
    pe = [totals.n_pe // n_subaccs] * n_subaccs
    bw = [_num(totals.bw_gbps / n_subaccs)] * n_subaccs
    hda = _hda([dataflow] * n_subaccs, pe, bw, totals, params)
    return evaluate_hda(hda, workload, params, options, kind="smfda" if n_subaccs > 1 else "fda")


@dataclass(frozen=True)
class RdaOverheads:
    energy_factor: float = 1.117
    reconfig_cycles: int = 0

    def __post_init__(self):
        if self.energy_factor < 1:
            raise ValueError("RDA energy factor must be >= 1")
        if self.reconfig_cycles < 0:
            raise ValueError("reconfiguration cycles must be >= 0")


def rda_baseline(dataflows, totals: Totals, workload: Workload, params: CostParams,
                 overheads: RdaOverheads = RdaOverheads(),
                 options: SchedulerOptions = SchedulerOptions()) -> DesignPoint:
    """Monolithic reconfigurable accelerator: every layer runs with all PEs and
    bandwidth under whichever dataflow minimizes the scheduling metric."""
    names = _names(dataflows)
    hda = HdaConfig.from_partition(names, [totals.n_pe] * len(names),
                                   [totals.bw_gbps] * len(names), totals.gb_capacity, params)
    desc = "rda:" + "|".join(names) + f":{totals.n_pe}/{_num(totals.bw_gbps):g}"
    table = CostTable(workload, hda, params)
    choice = [min(range(table.nsub), key=lambda s: (table.layer_metric(s, i, options.metric), s))
              for i in range(table.n)]
    single = _collapse(table, choice)
    assign = [0] * single.n
    best = None
    try:
        for policy in ([options.ordering] if options.ordering else list(Ordering)):
            order = _order_indices(single, policy)
            run = _simulate(single, assign, [order])
            switches = sum(1 for a, b in zip(order, order[1:]) if choice[a] != choice[b])
            makespan = run.makespan + switches * overheads.reconfig_cycles
            energy = run.total_energy * overheads.energy_factor
            cand = (makespan, energy)
            if best is None or _metric(cand, options) < _metric(best, options):
                best = cand
    except SchedulingError as exc:
        return DesignPoint(desc, "rda", math.inf, math.inf, math.inf, False, (totals.n_pe,),
                           (_num(totals.bw_gbps),), names, note=str(exc))
    makespan, energy = best
    return DesignPoint(desc, "rda", makespan, energy, makespan * energy, True, (totals.n_pe,),
                       (_num(totals.bw_gbps),), names)


def _metric(pair, options: SchedulerOptions):
    from .cost import metric_value
    return metric_value(pair[0], pair[1], options.metric.value)


def _collapse(table: CostTable, choice: Sequence[int]) -> CostTable:
    """Single-resource view of ``table`` with each layer's cost taken from ``choice``."""
    single = object.__new__(CostTable)
    single.__dict__.update(table.__dict__)
    single.nsub = 1
    single.latency = [[table.latency[c][i] for i, c in enumerate(choice)]]
    single.onchip = [[table.onchip[c][i] for i, c in enumerate(choice)]]
    single.ws = [[table.ws[c][i] for i, c in enumerate(choice)]]
    single.dataflow = ["rda"]
    return single


# ---------------------------------------------------------------------------
# Search

@dataclass
class DseResult:
    points: List[DesignPoint]          # evaluated partition candidates
    endpoints: List[DesignPoint]       # single-dataflow FDAs with all resources
    pareto: List[DesignPoint]
    best: Optional[DesignPoint]        # minimum EDP over points and endpoints

    @property
    def all_points(self) -> List[DesignPoint]:
        return self.points + self.endpoints

    @property
    def best_partition(self) -> Optional[DesignPoint]:
        return best_edp(self.points)


def _candidates(totals: Totals, parts: int, g_pe, g_bw):
    pes = enumerate_partitions(totals.n_pe, parts, g_pe)
    bws = enumerate_partitions(_num(totals.bw_gbps), parts, _num(g_bw))
    return [(p, b) for p in pes for b in bws]


def _eval_job(args):
    names, pe, bw, totals, workload, params, options = args
    return evaluate_hda(_hda(names, pe, bw, totals, params), workload, params, options)


class _Evaluator:
    def __init__(self, names, totals, workload, params, options, workers):
        self.names = names
        self.totals = totals
        self.workload = workload
        self.params = params
        self.options = options
        self.workers = workers
        self.cache = {}

    def __call__(self, keys):
        todo = [k for k in dict.fromkeys(keys) if k not in self.cache]
        jobs = [(self.names, pe, bw, self.totals, self.workload, self.params, self.options)
                for pe, bw in todo]
        if self.workers > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(self.workers) as pool:
                results = list(pool.map(_eval_job, jobs, chunksize=max(1, len(jobs) // (4 * self.workers))))
        else:
            results = [_eval_job(j) for j in jobs]
        for k, r in zip(todo, results):
            self.cache[k] = r
        return [self.cache[k] for k in keys]


def _binary_keys(evaluate, totals: Totals, parts: int, g_pe, g_bw):
    """Coarse-to-fine search: evaluate a coarse grid, then halve the
    granularity around the incumbent until the requested granularity."""
    levels = []
    gp, gb, k = g_pe, g_bw, 0
    while True:
        levels.append((gp, gb))
        ngp, ngb = gp * 2, gb * 2
        if (totals.n_pe % ngp or totals.n_pe // ngp < parts
                or not _divides(ngb, totals.bw_gbps) or round(totals.bw_gbps / ngb) < parts):
            break
        gp, gb = ngp, ngb
    levels.reverse()
    coarse_p, coarse_b = levels[0]
    keys = _candidates(totals, parts, coarse_p, coarse_b)
    points = evaluate(keys)
    seen = list(keys)
    incumbent = best_edp(points)
    for gp, gb in levels[1:]:
        if incumbent is None:
            break
        cand = [(p, b) for p, b in _candidates(totals, parts, gp, gb)
                if all(abs(x - y) <= gp for x, y in zip(p, incumbent.pe_split))
                and all(abs(x - y) <= gb + 1e-9 for x, y in zip(b, incumbent.bw_split))]
        seen.extend(cand)
        incumbent = best_edp(evaluate(cand) + [incumbent])
    return list(dict.fromkeys(seen))


def run_dse(dataflows, totals: Totals, workload: Workload, params: CostParams,
            search: SearchOptions = SearchOptions(),
            options: SchedulerOptions = SchedulerOptions(), workers: int = 1) -> DseResult:
    names = _names(dataflows)
    if not names:
        raise ValueError("at least one dataflow is required")
    g_pe, g_bw = search.granularities(totals)
    parts = len(names)
    evaluate = _Evaluator(names, totals, workload, params, options, workers)
    full = _candidates(totals, parts, g_pe, g_bw)
    if search.strategy is Strategy.EXHAUSTIVE:
        keys = full
    elif search.strategy is Strategy.RANDOM:
        rng = random.Random(search.seed)
        keys = sorted(rng.sample(full, min(search.budget, len(full))))
    else:
        keys = _binary_keys(evaluate, totals, parts, g_pe, g_bw)
    points = evaluate(sorted(keys))
    endpoints = [fda_baseline(n, totals, workload, params, options) for n in dict.fromkeys(names)]
    every = points + endpoints
    best = best_edp(every)
    return DseResult(points, endpoints, pareto_frontier(every), best)


def design_schedule(point: DesignPoint, workload: Workload, params: CostParams,
                    options: SchedulerOptions = SchedulerOptions()) -> Schedule:
    """Re-run the scheduler for one design point and return its full schedule."""
    return evaluate_hda(point.hda, workload, params, options, keep_schedule=True).schedule
