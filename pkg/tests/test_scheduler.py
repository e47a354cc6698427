import random

import pytest
from hypothesis import given, settings, strategies as st

from generators import feasible_capacity, random_hda, random_workload
from oracles import optimal_makespan
from hdadse.cost import CostParams
from hdadse.hardware import HdaConfig
from hdadse.scheduler import (GREEDY, CostTable, Metric, Ordering, Schedule, ScheduleEntry,
                              SchedulerOptions, SchedulingError, assign_layers, greedy_assign,
                              order_layers, post_process, rebalance, schedule_workload, simulate,
                              validate_schedule)
from hdadse.workload import Layer, ModelGraph, OpKind, Workload

BIG = 2**40


def tiny(lid, deps=()):
    return Layer(lid, OpKind.FC, 2, 2, depends_on=deps)


def chain(name, n):
    layers = []
    for k in range(n):
        layers.append(tiny(f"{name}{k + 1}", (f"{name}{k}",) if k else ()))
    return ModelGraph(name, tuple(layers))


def hda(nsub=2, cap=BIG, dataflows=None):
    params = CostParams()
    dfs = dataflows or ["nvdla", "shi", "eye"][:nsub]
    return HdaConfig.from_partition(dfs, [64] * nsub, [4] * nsub, cap, params)


def table(wl, h, lat, params=None):
    return CostTable(wl, h, params or CostParams(), latencies=lat)


class TestAssign:
    def test_argmin_and_ties(self):
        wl = Workload((chain("a", 2),))
        t = table(wl, hda(), {"a1": (10, 20), "a2": (15, 15)})
        assert greedy_assign(t, Metric.LATENCY) == [0, 0]

    def test_deep_layer_prefers_nvdla(self, params):
        deep = Layer("deep", OpKind.CONV2D, 512, 512, 9, 9, 3, 3)
        wl = Workload((ModelGraph("m", (deep,)),))
        h = HdaConfig.from_partition(["shi", "nvdla"], [256, 256], [32, 32], BIG, params)
        assert assign_layers(wl, h, params, Metric.EDP) == {"deep": 1}


class TestOrder:
    def setup_method(self):
        self.wl = Workload((chain("a", 2), chain("b", 2)))

    def test_depth_first(self):
        assert order_layers(self.wl, Ordering.DEPTH_FIRST) == ["a1", "a2", "b1", "b2"]

    def test_breadth_first(self):
        assert order_layers(self.wl, Ordering.BREADTH_FIRST) == ["a1", "b1", "a2", "b2"]

    def test_uneven_models(self):
        wl = Workload((chain("a", 3), chain("b", 1)))
        assert order_layers(wl, Ordering.BREADTH_FIRST) == ["a1", "b1", "a2", "a3"]

    def test_single_model(self):
        wl = Workload((chain("a", 3),))
        assert order_layers(wl, Ordering.DEPTH_FIRST) == order_layers(wl, Ordering.BREADTH_FIRST)


def spans(schedule):
    return {e.layer_id: (e.sub_acc, e.start, e.end) for e in schedule.entries}


class TestSimulate:
    def test_serial_chain(self, params):
        wl = Workload((chain("L", 2),))
        h = hda(1)
        t = table(wl, h, {"L1": (10,), "L2": (10,)})
        s = simulate(wl, {"L1": 0, "L2": 0}, ["L1", "L2"], h, params, table=t)
        assert spans(s) == {"L1": (0, 0, 10), "L2": (0, 10, 20)}
        assert s.makespan == 20

    def test_two_models_overlap(self, params):
        wl = Workload((chain("a", 1), chain("b", 1)))
        h = hda()
        t = table(wl, h, {"a1": (10, 10), "b1": (10, 10)})
        s = simulate(wl, {"a1": 0, "b1": 1}, ["a1", "b1"], h, params, table=t)
        assert spans(s) == {"a1": (0, 0, 10), "b1": (1, 0, 10)}
        assert s.makespan == 10

    def test_footprint_too_large(self, params):
        wl = Workload((ModelGraph("m", (Layer("x", OpKind.PWCONV, 64, 64, 16, 16),)),))
        with pytest.raises(SchedulingError, match="deadlock"):
            schedule_workload(wl, hda(1, cap=100), params)

    def test_memory_stall(self, params):
        # two independent layers whose working sets cannot be live together
        x = Layer("x", OpKind.PWCONV, 16, 16, 8, 8)
        wl = Workload((ModelGraph("a", (x,)), ModelGraph("b", (Layer("y", OpKind.PWCONV, 16, 16, 8, 8),))))
        h = hda()
        ws = max(CostTable(wl, h, params).ws[s][i] for s in range(2) for i in range(2))
        h = hda(cap=ws + ws // 2)
        s = simulate(wl, {"x": 0, "y": 1}, ["x", "y"], h, params)
        (_, s0, e0), (_, s1, e1) = spans(s)["x"], spans(s)["y"]
        assert s1 >= e0 or s0 >= e1
        assert validate_schedule(s, wl, h, params) == []

    def test_residency(self, params):
        wl = Workload((chain("a", 2),))
        s = simulate(wl, {"a1": 0, "a2": 0}, ["a1", "a2"], hda(1), params)
        e = {x.layer_id: x for x in s.entries}
        assert e["a1"].output_resident and e["a2"].input_resident
        assert not e["a1"].input_resident

    def test_energy_identity(self):
        params = CostParams(ctx_latency=5, ctx_energy=7.0)
        wl = Workload((chain("a", 3),))
        h = hda()
        s = simulate(wl, {"a1": 0, "a2": 1, "a3": 1}, ["a1", "a2", "a3"], h, params)
        e = {x.layer_id: x for x in s.entries}
        assert e["a2"].ctx_energy == 7.0 and e["a3"].ctx_energy == 0
        assert s.total_energy == sum(x.energy + x.ctx_energy for x in s.entries)
        t = CostTable(wl, h, params)
        assert e["a2"].end - e["a2"].start == t.latency[1][1] + 5
        assert validate_schedule(s, wl, h, params) == []


class TestPostProcess:
    def gap_case(self, params):
        wl = Workload((chain("a", 1), chain("b", 2), chain("c", 1)))
        h = hda()
        t = table(wl, h, {"a1": (10, 10), "b1": (50, 50), "b2": (10, 10), "c1": (30, 30)})
        assign = {"a1": 0, "b1": 1, "b2": 0, "c1": 0}
        s = simulate(wl, assign, ["a1", "b1", "b2", "c1"], h, params, table=t)
        return wl, h, t, s

    def test_gap_filled(self, params):
        wl, h, t, s = self.gap_case(params)
        assert spans(s)["c1"] == (0, 60, 90)
        out = post_process(s, wl, h, params, table=t)
        assert spans(out)["c1"] == (0, 10, 40)
        assert out.makespan <= s.makespan
        assert validate_schedule(out, wl, h, params, table=t) == []

    def test_dense_schedule_unchanged(self, params):
        wl = Workload((chain("a", 1), chain("b", 1)))
        h = hda()
        t = table(wl, h, {"a1": (10, 10), "b1": (10, 10)})
        s = simulate(wl, {"a1": 0, "b1": 1}, ["a1", "b1"], h, params, table=t)
        assert spans(post_process(s, wl, h, params, table=t)) == spans(s)

    def test_single_chain_unchanged(self, params):
        wl = Workload((chain("a", 4),))
        h = hda()
        assign = {"a1": 0, "a2": 1, "a3": 0, "a4": 1}
        s = simulate(wl, assign, ["a1", "a2", "a3", "a4"], h, params)
        assert spans(post_process(s, wl, h, params)) == spans(s)


class TestRebalance:
    def test_within_threshold_no_move(self, params):
        wl = Workload((chain("a", 1), chain("b", 1), chain("c", 1)))
        h = hda()
        t = table(wl, h, {"a1": (20, 25), "b1": (20, 25), "c1": (20, 25)})
        assign = {"a1": 0, "b1": 0, "c1": 1}   # busy (40, 25)
        out = rebalance(wl, assign, h, params, SchedulerOptions(metric=Metric.LATENCY), table=t)
        assert out == assign

    def test_boundary_equal_to_beta(self, params):
        wl = Workload((chain("a", 1), chain("b", 1), chain("c", 1)))
        h = hda()
        t = table(wl, h, {"a1": (20, 20), "b1": (20, 20), "c1": (5, 20)})
        assign = {"a1": 0, "b1": 0, "c1": 1}   # busy (40, 20): imbalance exactly 2
        assert rebalance(wl, assign, h, params, SchedulerOptions(), table=t) == assign

    def test_migrates_from_overloaded(self, params):
        wl = Workload((chain("a", 1), chain("b", 1), chain("c", 1)))
        h = hda()
        t = table(wl, h, {"a1": (40, 41), "b1": (40, 90), "c1": (10, 10)})
        assign = {"a1": 0, "b1": 0, "c1": 1}   # busy (80, 10)
        out = rebalance(wl, assign, h, params, SchedulerOptions(metric=Metric.LATENCY), table=t)
        assert out["a1"] == 1
        assert out["b1"] == 0

    def test_single_subacc(self, params):
        wl = Workload((chain("a", 3),))
        assign = {"a1": 0, "a2": 0, "a3": 0}
        assert rebalance(wl, assign, hda(1), params) == assign


class TestPipeline:
    def test_toy_optimum(self, params):
        wl = Workload((chain("A", 2), chain("B", 2)))
        h = hda()
        t = table(wl, h, {"A1": (10, 20), "A2": (10, 20), "B1": (20, 10), "B2": (20, 10)})
        s = schedule_workload(wl, h, params, SchedulerOptions(metric=Metric.LATENCY), table=t)
        assert s.makespan == 20 == optimal_makespan(t.latency, t.preds)
        assert s.assignment() == {"A1": 0, "A2": 0, "B1": 1, "B2": 1}

    def test_single_sub_is_serial(self, params):
        wl = Workload((chain("a", 3),))
        h = hda(1)
        t = table(wl, h, {"a1": (7,), "a2": (11,), "a3": (13,)})
        assert schedule_workload(wl, h, params, table=t).makespan == 31

    def test_greedy_trap(self, params):
        wl = Workload((chain("a", 2), chain("b", 2)))
        h = hda()
        lat = {lid: (10, 12) for lid in ("a1", "a2", "b1", "b2")}
        t = table(wl, h, lat)
        opts = SchedulerOptions(metric=Metric.LATENCY, beta=1.5)
        greedy = schedule_workload(wl, h, params, GREEDY, table=t)
        full = schedule_workload(wl, h, params, opts, table=t)
        assert greedy.makespan == 40
        assert full.makespan < greedy.makespan
        moved = rebalance(wl, {k: 0 for k in lat}, h, params,
                          SchedulerOptions(metric=Metric.LATENCY, beta=1.5), table=t)
        assert set(moved.values()) == {0, 1}

    def test_deterministic(self, params):
        rng = random.Random(3)
        wl = random_workload(rng, 12)
        h = random_hda(rng, 3)
        assert schedule_workload(wl, h, params) == schedule_workload(wl, h, params)

    def test_fixed_ordering(self, params):
        wl = Workload((chain("a", 2), chain("b", 2)))
        s = schedule_workload(wl, hda(), params, SchedulerOptions(ordering=Ordering.BREADTH_FIRST))
        assert validate_schedule(s, wl, hda(), params) == []

    def test_options_validation(self):
        with pytest.raises(ValueError):
            SchedulerOptions(beta=0.5)


class TestValidate:
    def setup_method(self):
        self.params = CostParams()
        self.wl = Workload((chain("a", 2),))
        self.h = hda()
        self.t = table(self.wl, self.h, {"a1": (10, 10), "a2": (10, 10)})

    def sched(self, entries):
        makespan = max(e.end for e in entries)
        busy = [sum(e.end - e.start for e in entries if e.sub_acc == s) for s in range(2)]
        return Schedule(tuple(entries), makespan, 0.0, tuple(busy))

    def test_pipeline_output_valid(self):
        s = schedule_workload(self.wl, self.h, self.params, table=self.t)
        assert validate_schedule(s, self.wl, self.h, self.params, table=self.t) == []

    def test_dependence(self):
        s = self.sched([ScheduleEntry("a1", "a", 0, 5, 15, 0.0), ScheduleEntry("a2", "a", 1, 0, 10, 0.0)])
        rules = [v.rule for v in validate_schedule(s, self.wl, self.h, self.params, table=self.t)]
        assert rules == ["DEPENDENCE"]

    def test_overlap(self):
        wl = Workload((chain("a", 1), chain("b", 1)))
        t = table(wl, self.h, {"a1": (10, 10), "b1": (10, 10)})
        s = self.sched([ScheduleEntry("a1", "a", 0, 0, 10, 0.0), ScheduleEntry("b1", "b", 0, 5, 15, 0.0)])
        rules = [v.rule for v in validate_schedule(s, wl, self.h, self.params, table=t)]
        assert rules == ["OVERLAP"]

    def test_missing_and_unknown(self):
        s = self.sched([ScheduleEntry("a1", "a", 0, 0, 10, 0.0), ScheduleEntry("zz", "a", 0, 10, 20, 0.0)])
        rules = {v.rule for v in validate_schedule(s, self.wl, self.h, self.params, table=self.t)}
        assert rules == {"UNKNOWN", "MISSING"}

    def test_memory(self):
        wl = Workload((ModelGraph("a", (Layer("x", OpKind.PWCONV, 16, 16, 8, 8),)),
                       ModelGraph("b", (Layer("y", OpKind.PWCONV, 16, 16, 8, 8),))))
        h = hda()
        t = CostTable(wl, h, self.params)
        cap = max(t.ws[0][0], t.ws[1][1]) + 1
        h = hda(cap=cap)
        t = CostTable(wl, h, self.params)
        s = self.sched([ScheduleEntry("x", "a", 0, 0, t.latency[0][0], 0.0),
                        ScheduleEntry("y", "b", 1, 0, t.latency[1][1], 0.0)])
        rules = [v.rule for v in validate_schedule(s, wl, h, self.params, table=t)]
        assert rules == ["MEMORY"]


seeds = st.integers(0, 2**32 - 1)


@settings(max_examples=60)
@given(seeds, st.integers(1, 3))
def test_schedules_are_valid(seed, nsub):
    rng = random.Random(seed)
    params = CostParams()
    wl = random_workload(rng, 20)
    h = random_hda(rng, nsub)
    h = HdaConfig(h.subaccs, feasible_capacity(rng, wl, h, params))
    s = schedule_workload(wl, h, params)
    assert validate_schedule(s, wl, h, params) == []
    assert s.total_energy == pytest.approx(sum(e.energy + e.ctx_energy for e in s.entries))
    p = post_process(s, wl, h, params)
    assert p.makespan <= s.makespan
    assert validate_schedule(p, wl, h, params) == []


@settings(max_examples=60)
@given(seeds, st.integers(1, 3))
def test_never_worse_than_serial(seed, nsub):
    rng = random.Random(seed)
    params = CostParams()
    wl = random_workload(rng, 20)
    h = random_hda(rng, nsub)
    t = CostTable(wl, h, params)
    s = schedule_workload(wl, h, params, SchedulerOptions(metric=Metric.LATENCY), table=t)
    assert s.makespan <= min(sum(row) for row in t.latency)


@settings(max_examples=40)
@given(seeds)
def test_within_bound_of_optimum(seed):
    rng = random.Random(seed)
    params = CostParams()
    wl = random_workload(rng, 6)
    h = random_hda(rng, 2)
    t = CostTable(wl, h, params)
    s = schedule_workload(wl, h, params, SchedulerOptions(metric=Metric.LATENCY), table=t)
    assert s.makespan <= 1.5 * optimal_makespan(t.latency, t.preds)
