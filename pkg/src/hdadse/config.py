"""
Run configuration: built-in defaults, overlaid by an accelerator config file,
then ``key=value`` overrides, then explicit command-line flags.

Config files are YAML mappings with the sections below; any subset may be
given::

    class: edge
    totals: {n_pe: 1024, bw_gbps: 16, gb_capacity: 4194304}
    dataflows: [nvdla, shi]
    partition: {pe: [128, 896], bw: [4, 12]}
    cost: {e_mac: 1, e_l1: 1, e_gb: 6, e_dram: 200, bytes_per_element: 1,
           clock: 1.0e9, ctx_latency: 0, ctx_energy: 0, share_weights: false}
    search: {strategy: exhaustive, g_pe: 64, g_bw: 1, budget: 32, seed: 0}
    scheduler: {metric: edp, ordering: null, beta: 2.0, rebalance_rounds: 10,
                post_process: true}
    rda: {energy_factor: 1.117, reconfig_cycles: 0}
    smfda: {ways: [2, 4]}
"""

import copy
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Tuple

import yaml

from .cost import CostParams
from .dse import RdaOverheads, SearchOptions, Strategy
from .hardware import Totals, accel_class
from .scheduler import Metric, Ordering, SchedulerOptions


class ConfigError(ValueError):
    pass


DEFAULTS: Dict[str, Any] = {
    "class": "edge",
    "totals": {"n_pe": None, "bw_gbps": None, "gb_capacity": None},
    "dataflows": None,
    "partition": {"pe": None, "bw": None},
    "cost": {"e_mac": 1.0, "e_l1": 1.0, "e_gb": 6.0, "e_dram": 200.0, "bytes_per_element": 1,
             "clock": 1e9, "ctx_latency": 0, "ctx_energy": 0.0, "share_weights": False},
    "search": {"strategy": "exhaustive", "g_pe": None, "g_bw": None, "budget": 32, "seed": 0},
    "scheduler": {"metric": "edp", "ordering": None, "beta": 2.0, "rebalance_rounds": 10,
                  "post_process": True},
    "rda": {"energy_factor": 1.117, "reconfig_cycles": 0},
    "smfda": {"ways": [2, 4]},
}


def known_keys() -> List[str]:
    keys = []
    for k, v in DEFAULTS.items():
        if isinstance(v, dict):
            keys.extend(f"{k}.{sub}" for sub in v)
        else:
            keys.append(k)
    return keys


def _merge(base: dict, layer: dict, where: str) -> None:
    for k, v in layer.items():
        if k not in DEFAULTS:
            raise ConfigError(f"{where}: unknown key {k!r}")
        if isinstance(DEFAULTS[k], dict):
            if not isinstance(v, dict):
                raise ConfigError(f"{where}: {k!r} must be a mapping")
            for sub, val in v.items():
                if sub not in DEFAULTS[k]:
                    raise ConfigError(f"{where}: unknown key {k}.{sub}")
                base[k][sub] = val
        else:
            base[k] = v


def set_key(cfg: dict, dotted: str, value) -> None:
    if dotted not in known_keys():
        raise ConfigError(f"unknown config key {dotted!r}")
    if "." in dotted:
        sect, sub = dotted.split(".", 1)
        cfg[sect][sub] = value
    else:
        cfg[dotted] = value


def parse_override(text: str) -> Tuple[str, Any]:
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not key=value")
    key, raw = text.split("=", 1)
    try:
        value = yaml.safe_load(raw) if raw else None
    except yaml.YAMLError:
        value = raw
    return key.strip(), value


def load_config(path: Optional[str] = None, overrides=()) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if path:
        try:
            with open(path) as fh:
                doc = yaml.safe_load(fh) or {}
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: invalid YAML: {exc}".replace("\n", " ")) from None
        if not isinstance(doc, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        _merge(cfg, doc, path)
    for key, value in overrides:
        set_key(cfg, key, value)
    return cfg


def _enum(cls, value, what):
    if isinstance(value, cls):
        return value
    try:
        return cls(str(value).lower())
    except ValueError:
        choices = ", ".join(m.value for m in cls)
        raise ConfigError(f"unknown {what} {value!r} (choose from {choices})") from None


@dataclass
class Settings:
    """Validated, typed view of a merged config dict."""
    totals: Totals
    dataflows: Optional[List[str]]
    pe_split: Optional[List[int]]
    bw_split: Optional[List[float]]
    params: CostParams
    search: SearchOptions
    scheduler: SchedulerOptions
    rda: RdaOverheads
    smfda_ways: List[int]


def settings_from(cfg: dict) -> Settings:
    try:
        base = accel_class(str(cfg["class"]))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    t = cfg["totals"]
    totals = Totals(int(t["n_pe"]) if t["n_pe"] is not None else base.n_pe,
                    t["bw_gbps"] if t["bw_gbps"] is not None else base.bw_gbps,
                    int(t["gb_capacity"]) if t["gb_capacity"] is not None else base.gb_capacity)
    if totals.n_pe < 1 or totals.bw_gbps <= 0 or totals.gb_capacity < 1:
        raise ConfigError("totals must be positive")
    dataflows = cfg["dataflows"]
    if isinstance(dataflows, str):
        dataflows = [d for d in dataflows.replace("+", ",").split(",") if d]
    c = cfg["cost"]
    s = cfg["search"]
    sch = cfg["scheduler"]
    try:
        params = CostParams(e_mac=float(c["e_mac"]), e_l1=float(c["e_l1"]), e_gb=float(c["e_gb"]),
                            e_dram=float(c["e_dram"]), bytes_per_element=int(c["bytes_per_element"]),
                            clock=float(c["clock"]), ctx_latency=int(c["ctx_latency"]),
                            ctx_energy=float(c["ctx_energy"]), gb_capacity=totals.gb_capacity,
                            share_weights=bool(c["share_weights"]))
        search = SearchOptions(_enum(Strategy, s["strategy"], "strategy"),
                               None if s["g_pe"] is None else int(s["g_pe"]),
                               None if s["g_bw"] is None else s["g_bw"],
                               int(s["budget"]), int(s["seed"]))
        search.granularities(totals)
        ordering = None if sch["ordering"] is None else _enum(Ordering, sch["ordering"], "ordering")
        scheduler = SchedulerOptions(_enum(Metric, sch["metric"], "metric"), ordering,
                                     float(sch["beta"]), int(sch["rebalance_rounds"]),
                                     bool(sch["post_process"]))
        rda = RdaOverheads(float(cfg["rda"]["energy_factor"]), int(cfg["rda"]["reconfig_cycles"]))
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    part = cfg["partition"]
    pe_split = _number_list(part["pe"], int, "partition.pe")
    bw_split = _number_list(part["bw"], float, "partition.bw")
    ways = _number_list(cfg["smfda"]["ways"], int, "smfda.ways") or []
    return Settings(totals, dataflows, pe_split, bw_split, params, search, scheduler, rda, ways)


def _number_list(value, kind, what):
    if value is None:
        return None
    if isinstance(value, str):
        value = [v for v in value.replace("/", ",").split(",") if v.strip()]
    if not isinstance(value, (list, tuple)):
        value = [value]
    try:
        return [kind(v) for v in value]
    except (TypeError, ValueError):
        raise ConfigError(f"{what} must be a list of numbers") from None
