"""
Command-line front end.

    hdadse cost     --workload W.yaml [--dataflows nvdla,shi,eye]
    hdadse schedule --workload W.yaml --dataflows nvdla,shi --pe-split 128,896 --bw-split 4,12
    hdadse dse      --workload W.yaml --class edge --dataflows nvdla,shi --out runs/a
    hdadse report   --from runs/a

Tables are CSV, summaries JSON. Errors print one line
``hdadse: error: <kind>: <message>`` on stderr; exit codes are 0 (ok),
2 (configuration or input error) and 3 (infeasible design).
"""

import argparse
import logging
import sys
import time
from pathlib import Path
from typing import Dict, List, Optional

from . import report
from .config import ConfigError, Settings, load_config, parse_override, settings_from
from .cost import evaluate_layer
from .dataflow import BUILTIN_DATAFLOWS, builtin_dataflow
from .dse import (DesignPoint, best_edp, design_schedule, fda_baseline, rda_baseline, run_dse,
                  smfda_baseline)
from .hardware import HdaConfig
from .scheduler import SchedulingError, schedule_workload
from .workload import WorkloadError, parse_workload

log = logging.getLogger("hdadse")

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE = 0, 2, 3


class Infeasible(RuntimeError):
    pass


def _fail(kind: str, message: str, code: int) -> int:
    one_line = " ".join(str(message).split())
    print(f"hdadse: error: {kind}: {one_line}", file=sys.stderr)
    return code


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--workload", help="workload YAML file")
    common.add_argument("--accel", help="accelerator config YAML file")
    common.add_argument("--class", dest="accel_class", choices=["edge", "mobile", "cloud"])
    common.add_argument("--dataflows", help="comma-separated list, e.g. nvdla,shi")
    common.add_argument("--batch", type=int, help="override every model's batch size")
    common.add_argument("--metric", choices=["latency", "energy", "edp"])
    common.add_argument("--beta", type=float)
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override any config key, e.g. cost.e_dram=100")
    common.add_argument("--out", help="output directory (default: stdout where possible)")
    common.add_argument("-v", "--verbose", action="store_true")

    search = argparse.ArgumentParser(add_help=False)
    search.add_argument("--strategy", choices=["exhaustive", "binary", "random"])
    search.add_argument("--g-pe", type=int)
    search.add_argument("--g-bw", type=float)
    search.add_argument("--budget", type=int)
    search.add_argument("--seed", type=int)
    search.add_argument("--jobs", type=int, default=1, help="parallel design-point evaluations")

    p = argparse.ArgumentParser(prog="hdadse", description=__doc__.split("\n\n")[0].strip())
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("cost", parents=[common], help="per-layer cost table for each dataflow")
    sch = sub.add_parser("schedule", parents=[common], help="schedule on one fixed partition")
    sch.add_argument("--pe-split", help="PEs per sub-accelerator, e.g. 128,896")
    sch.add_argument("--bw-split", help="GB/s per sub-accelerator, e.g. 4,12")
    sub.add_parser("dse", parents=[common, search], help="partition search plus baselines")
    rep = sub.add_parser("report", parents=[common, search],
                         help="HDA vs FDA/SM-FDA/RDA comparison table")
    rep.add_argument("--from", dest="from_dir", help="directory written by a previous dse run")
    return p


def _settings(args) -> Settings:
    overrides = [parse_override(o) for o in args.overrides]
    flag_map = {"accel_class": "class", "dataflows": "dataflows", "metric": "scheduler.metric",
                "beta": "scheduler.beta", "strategy": "search.strategy", "g_pe": "search.g_pe",
                "g_bw": "search.g_bw", "budget": "search.budget", "seed": "search.seed",
                "pe_split": "partition.pe", "bw_split": "partition.bw"}
    for attr, key in flag_map.items():
        value = getattr(args, attr, None)
        if value is not None:
            overrides.append((key, value))
    return settings_from(load_config(args.accel, overrides))


def _dataflows(settings: Settings, default: List[str]) -> List[str]:
    names = settings.dataflows or default
    try:
        return [builtin_dataflow(n).name for n in names]
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _load_workload(args):
    if not args.workload:
        raise ConfigError("--workload is required")
    return parse_workload(args.workload, args.batch)


class _Sink:
    """Writes named outputs into a directory, or to stdout when none is given."""

    def __init__(self, out: Optional[str], stdout_name: Optional[str] = None):
        self.dir = Path(out) if out else None
        self.stdout_name = stdout_name
        if self.dir:
            self.dir.mkdir(parents=True, exist_ok=True)

    def write(self, name: str, text: str) -> None:
        if self.dir:
            (self.dir / name).write_text(text)
        elif name == self.stdout_name:
            sys.stdout.write(text)


# ---------------------------------------------------------------------------

COST_FIELDS = ["layer", "model", "op", "dataflow", "n_pe", "bw_gbps", "macs", "compute_cycles",
               "noc_w", "noc_i", "noc_o", "dram", "latency_cycles", "energy", "utilization"]


def cmd_cost(args, settings: Settings) -> int:
    wl = _load_workload(args)
    names = _dataflows(settings, list(BUILTIN_DATAFLOWS))
    t, params = settings.totals, settings.params
    hda = HdaConfig.from_partition(names, [t.n_pe] * len(names), [t.bw_gbps] * len(names),
                                   t.gb_capacity, params)
    rows = []
    for layer in wl.layers:
        model = wl.models[wl.model_of(layer.id)].name
        for sub in hda.subaccs:
            c = evaluate_layer(layer, sub, params, input_resident=bool(layer.depends_on))
            rows.append({"layer": layer.id, "model": model, "op": layer.op_kind.name,
                         "dataflow": sub.dataflow.name, "n_pe": sub.n_pe,
                         "bw_gbps": float(t.bw_gbps), "macs": c.macs,
                         "compute_cycles": c.compute_cycles, "noc_w": c.noc_traffic[0],
                         "noc_i": c.noc_traffic[1], "noc_o": c.noc_traffic[2],
                         "dram": c.dram_traffic, "latency_cycles": c.latency_cycles,
                         "energy": float(c.energy_units), "utilization": c.utilization})
    _Sink(args.out, "cost.csv").write("cost.csv", report.to_csv(COST_FIELDS, rows))
    return EXIT_OK


def cmd_schedule(args, settings: Settings) -> int:
    wl = _load_workload(args)
    names = _dataflows(settings, ["nvdla", "shi"])
    t, params = settings.totals, settings.params
    pe = settings.pe_split
    bw = settings.bw_split
    k = len(names)
    if pe is None:
        if t.n_pe % k:
            raise ConfigError(f"cannot split {t.n_pe} PEs evenly over {k} sub-accelerators")
        pe = [t.n_pe // k] * k
    if bw is None:
        bw = [t.bw_gbps / k] * k
    if len(pe) != k or len(bw) != k:
        raise ConfigError(f"partition needs {k} PE and bandwidth values, one per dataflow")
    if sum(pe) != t.n_pe:
        raise ConfigError(f"PE split sums to {sum(pe)}, totals say {t.n_pe}")
    if abs(sum(bw) - t.bw_gbps) > 1e-9 * t.bw_gbps:
        raise ConfigError(f"bandwidth split sums to {sum(bw):g}, totals say {t.bw_gbps:g}")
    try:
        hda = HdaConfig.from_partition(names, pe, bw, t.gb_capacity, params)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    schedule = schedule_workload(wl, hda, params, settings.scheduler)
    sink = _Sink(args.out, "schedule.csv")
    desc = hda.descriptor(params)
    sink.write("schedule.csv", report.schedule_csv(schedule, names))
    summary = report.schedule_summary(schedule, desc, names, params.clock)
    sink.write("summary.json", report.dumps(summary))
    log.info("%s makespan=%d energy=%g", desc, schedule.makespan, schedule.total_energy)
    return EXIT_OK


def _baselines(wl, settings: Settings, names: List[str]) -> List[DesignPoint]:
    t, params, opts = settings.totals, settings.params, settings.scheduler
    out = [fda_baseline(d, t, wl, params, opts) for d in BUILTIN_DATAFLOWS]
    for ways in settings.smfda_ways:
        if ways < 2 or t.n_pe % ways:
            continue
        out.extend(smfda_baseline(d, ways, t, wl, params, opts) for d in BUILTIN_DATAFLOWS)
    out.append(rda_baseline(names, t, wl, params, settings.rda, opts))
    return out


def run_dse_outputs(args, settings: Settings) -> Dict[str, str]:
    """All files a ``dse`` run emits, keyed by file name."""
    wl = _load_workload(args)
    names = _dataflows(settings, ["nvdla", "shi"])
    t0 = time.perf_counter()
    result = run_dse(names, settings.totals, wl, settings.params, settings.search,
                     settings.scheduler, workers=max(1, getattr(args, "jobs", 1) or 1))
    elapsed = time.perf_counter() - t0
    n_points = len(result.points) + len(result.endpoints)
    log.info("evaluated %d design points in %.2fs (%.3f ms per layer per point)", n_points,
             elapsed, 1e3 * elapsed / max(1, n_points * len(wl)))
    best = result.best
    if best is None:
        raise Infeasible("no feasible design point")
    files = {
        "points.csv": report.points_csv(result.points),
        "endpoints.csv": report.points_csv(result.endpoints),
        "pareto.csv": report.points_csv(result.pareto),
        "baselines.csv": report.points_csv(_baselines(wl, settings, names)),
    }
    schedule = design_schedule(best, wl, settings.params, settings.scheduler)
    files["best_schedule.csv"] = report.schedule_csv(schedule, best.dataflows)
    summary = report.schedule_summary(schedule, best.partition, best.dataflows, settings.params.clock)
    summary.update({"kind": best.kind, "dataflows": list(names),
                    "strategy": settings.search.strategy.value,
                    "candidates": len(result.points), "feasible": sum(p.feasible for p in result.points),
                    "pareto": [p.partition for p in result.pareto]})
    files["best.json"] = report.dumps(summary)
    return files


def report_from_tables(points_text: str, endpoints_text: str, baselines_text: str) -> str:
    hda = report.read_points(points_text) + report.read_points(endpoints_text)
    hda = [r for r in hda if r["kind"] == "hda"] or hda
    rows = report.comparison_rows(hda, report.read_points(baselines_text))
    if not rows:
        raise Infeasible("no feasible HDA design point to compare against")
    return report.report_csv(rows)


def cmd_dse(args, settings: Settings) -> int:
    files = run_dse_outputs(args, settings)
    sink = _Sink(args.out, "best.json")
    for name in sorted(files):
        sink.write(name, files[name])
    return EXIT_OK


def cmd_report(args, settings: Settings) -> int:
    if args.from_dir:
        src = Path(args.from_dir)
        try:
            texts = [(src / n).read_text() for n in ("points.csv", "endpoints.csv", "baselines.csv")]
        except OSError as exc:
            raise ConfigError(f"cannot read DSE outputs: {exc}") from None
        out = args.out or args.from_dir
        files = {}
    else:
        files = run_dse_outputs(args, settings)
        texts = [files["points.csv"], files["endpoints.csv"], files["baselines.csv"]]
        out = args.out
    files["report.csv"] = report_from_tables(*texts)
    sink = _Sink(out, "report.csv")
    for name in sorted(files):
        sink.write(name, files[name])
    return EXIT_OK


COMMANDS = {"cost": cmd_cost, "schedule": cmd_schedule, "dse": cmd_dse, "report": cmd_report}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s", stream=sys.stderr)
    try:
        needs_settings = not (args.command == "report" and args.from_dir)
        settings = _settings(args) if needs_settings else None
        return COMMANDS[args.command](args, settings)
    except (ConfigError, ValueError) as exc:
        kind = "workload" if isinstance(exc, WorkloadError) else "config"
        return _fail(kind, exc, EXIT_CONFIG)
    except OSError as exc:
        return _fail("config", f"{exc.filename or ''} {exc.strerror or exc}", EXIT_CONFIG)
    except (SchedulingError, Infeasible) as exc:
        return _fail("infeasible", exc, EXIT_INFEASIBLE)


if __name__ == "__main__":
    sys.exit(main())
