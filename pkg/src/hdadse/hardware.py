"""Accelerator totals, class presets and heterogeneous (multi-dataflow) configurations."""

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

from .cost import CostParams, SubAcceleratorConfig
from .dataflow import Dataflow, builtin_dataflow

MIB = 2**20


@dataclass(frozen=True)
class Totals:
    """Chip-level resources: PE count, NoC bandwidth (GB/s) and global buffer (bytes)."""
    n_pe: int
    bw_gbps: float
    gb_capacity: int


ACCEL_CLASSES = {
    "edge": Totals(1024, 16, 4 * MIB),
    "mobile": Totals(4096, 64, 8 * MIB),
    "cloud": Totals(16384, 256, 16 * MIB),
}


def accel_class(name: str) -> Totals:
    try:
        return ACCEL_CLASSES[name.lower()]
    except KeyError:
        raise ValueError(f"unknown accelerator class {name!r}") from None


@dataclass(frozen=True)
class HdaConfig:
    subaccs: Tuple[SubAcceleratorConfig, ...]
    gb_capacity: int
    n_pe_total: Optional[int] = None
    bw_total: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "subaccs", tuple(self.subaccs))
        if not self.subaccs:
            raise ValueError("an HDA needs at least one sub-accelerator")
        pe_sum = sum(s.n_pe for s in self.subaccs)
        bw_sum = sum(s.bw for s in self.subaccs)
        if self.n_pe_total is None:
            object.__setattr__(self, "n_pe_total", pe_sum)
        elif pe_sum != self.n_pe_total:
            raise ValueError(f"PE partition sums to {pe_sum}, expected {self.n_pe_total}")
        if self.bw_total is None:
            object.__setattr__(self, "bw_total", bw_sum)
        elif not math.isclose(bw_sum, self.bw_total, rel_tol=1e-12):
            raise ValueError(f"bandwidth partition sums to {bw_sum}, expected {self.bw_total}")

    @classmethod
    def from_partition(cls, dataflows: Sequence, pe_split: Sequence[int],
                       bw_split_gbps: Sequence[float], gb_capacity: int,
                       params: CostParams) -> "HdaConfig":
        if not len(dataflows) == len(pe_split) == len(bw_split_gbps):
            raise ValueError("dataflows, PE split and bandwidth split differ in length")
        subs = []
        for df, n_pe, gbps in zip(dataflows, pe_split, bw_split_gbps):
            if not isinstance(df, Dataflow):
                df = builtin_dataflow(df)
            subs.append(SubAcceleratorConfig(df, int(n_pe), params.gbps_to_bytes_per_cycle(gbps)))
        return cls(tuple(subs), gb_capacity, sum(pe_split),
                   params.gbps_to_bytes_per_cycle(sum(bw_split_gbps)))

    def descriptor(self, params: Optional[CostParams] = None) -> str:
        clock = params.clock if params is not None else 1e9
        return "+".join(f"{s.dataflow.name}:{s.n_pe}/{s.bw * clock / 1e9:g}" for s in self.subaccs)
