"""Tabular exports of costs, schedules and design points, and the baseline
comparison table built from them."""

import csv
import io
import json
import math
from typing import Dict, Iterable, List, Sequence

from .dse import DesignPoint
from .scheduler import Schedule

POINT_FIELDS = ["kind", "partition", "pe_split", "bw_split", "feasible", "makespan", "energy", "edp"]
REPORT_FIELDS = ["kind", "partition", "makespan", "energy", "edp",
                 "latency_vs_hda", "energy_vs_hda", "edp_vs_hda"]


def fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if math.isinf(value):
            return "inf"
        if value.is_integer() and abs(value) < 2**53:
            return str(int(value))
        return repr(value)
    return str(value)


def to_csv(fields: Sequence[str], rows: Iterable[Dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(fields)
    for row in rows:
        w.writerow([fmt(row[f]) for f in fields])
    return buf.getvalue()


def _split(values) -> str:
    return "/".join(fmt(float(v)) for v in values)


def point_row(p: DesignPoint) -> Dict:
    return {"kind": p.kind, "partition": p.partition, "pe_split": _split(p.pe_split),
            "bw_split": _split(p.bw_split), "feasible": p.feasible,
            "makespan": float(p.makespan), "energy": float(p.energy), "edp": float(p.edp)}


def points_csv(points: Sequence[DesignPoint]) -> str:
    return to_csv(POINT_FIELDS, (point_row(p) for p in points))


def read_points(text: str) -> List[Dict]:
    """Rows of a points table with numeric columns converted back to floats."""
    rows = []
    for raw in csv.DictReader(io.StringIO(text)):
        row = dict(raw)
        for k in ("makespan", "energy", "edp"):
            row[k] = float(row[k])
        row["feasible"] = row["feasible"] == "true"
        rows.append(row)
    return rows


SCHEDULE_FIELDS = ["layer", "model", "sub_acc", "dataflow", "start", "end", "energy",
                   "ctx_energy", "input_resident", "output_resident"]


def schedule_csv(schedule: Schedule, dataflows: Sequence[str]) -> str:
    rows = ({"layer": e.layer_id, "model": e.model, "sub_acc": e.sub_acc,
             "dataflow": dataflows[e.sub_acc] if e.sub_acc < len(dataflows) else "",
             "start": e.start, "end": e.end, "energy": float(e.energy),
             "ctx_energy": float(e.ctx_energy), "input_resident": e.input_resident,
             "output_resident": e.output_resident}
            for e in schedule.entries)
    return to_csv(SCHEDULE_FIELDS, rows)


def schedule_summary(schedule: Schedule, partition: str, dataflows: Sequence[str],
                     clock: float) -> Dict:
    span = schedule.makespan
    subs = [{"index": s, "dataflow": dataflows[s], "busy": busy, "idle": span - busy,
             "utilization": busy / span if span else 0.0}
            for s, busy in enumerate(schedule.per_subacc_busy)]
    return {"partition": partition, "makespan": span, "latency_s": span / clock,
            "energy": schedule.total_energy, "edp": schedule.edp, "layers": len(schedule.entries),
            "subaccs": subs}


def dumps(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def comparison_rows(hda_points: Sequence[Dict], baselines: Sequence[Dict]) -> List[Dict]:
    """Best-EDP HDA followed by every baseline, each normalized to the HDA."""
    feasible = [r for r in hda_points if r["feasible"]]
    if not feasible:
        return []
    best = min(feasible, key=lambda r: (r["edp"], r["partition"]))
    out = []
    for row in [dict(best, kind="hda")] + list(baselines):
        ok = row["feasible"]
        out.append({
            "kind": row["kind"], "partition": row["partition"],
            "makespan": row["makespan"], "energy": row["energy"], "edp": row["edp"],
            "latency_vs_hda": row["makespan"] / best["makespan"] if ok else math.inf,
            "energy_vs_hda": row["energy"] / best["energy"] if ok else math.inf,
            "edp_vs_hda": row["edp"] / best["edp"] if ok else math.inf,
        })
    return out


def report_csv(rows: Sequence[Dict]) -> str:
    return to_csv(REPORT_FIELDS, rows)
