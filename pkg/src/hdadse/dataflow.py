"""
Dataflow descriptors and spatial allocation of layers onto PE arrays.

A dataflow unrolls two loop dimensions across the PE array. Allocation fills
the second spatial dimension first and gives the first dimension whatever PE
count is left, so a mapping is fully determined by (dataflow, layer, n_pe).
"""

import enum
from dataclasses import dataclass
from typing import Dict, Tuple

from .workload import Layer, OpKind, output_dims

DIMS = ("K", "C", "Yo", "Xo", "R", "S")


class Stationary(enum.Enum):
    WEIGHT = "WEIGHT"
    OUTPUT = "OUTPUT"
    ROW = "ROW"


@dataclass(frozen=True)
class Dataflow:
    name: str
    spatial_dims: Tuple[str, str]
    stationary_tensor: Stationary
    spatial_reduce_C: bool

    def __post_init__(self):
        d1, d2 = self.spatial_dims
        if d1 == d2:
            raise ValueError(f"dataflow {self.name}: spatial dims must be distinct")
        for d in self.spatial_dims:
            if d not in ("K", "C", "Yo", "Xo", "R"):
                raise ValueError(f"dataflow {self.name}: unsupported spatial dim {d}")
        if self.spatial_reduce_C and "C" not in self.spatial_dims:
            raise ValueError(f"dataflow {self.name}: spatial_reduce_C needs C unrolled")


BUILTIN_DATAFLOWS: Dict[str, Dataflow] = {
    "shi": Dataflow("shi", ("Yo", "Xo"), Stationary.OUTPUT, False),
    "nvdla": Dataflow("nvdla", ("K", "C"), Stationary.WEIGHT, True),
    "eye": Dataflow("eye", ("Yo", "R"), Stationary.ROW, False),
}


def builtin_dataflow(name: str) -> Dataflow:
    try:
        return BUILTIN_DATAFLOWS[name.lower()]
    except KeyError:
        raise ValueError(f"unknown dataflow {name!r}; expected one of "
                         f"{', '.join(BUILTIN_DATAFLOWS)}") from None


@dataclass(frozen=True)
class Mapping:
    dataflow: Dataflow
    layer_id: str
    p1: int
    p2: int
    used_pes: int


def loop_extents(layer: Layer) -> Dict[str, int]:
    """Extents of the six loop dimensions as seen by a mapping.

    For depth-wise convolutions each output channel pairs with exactly one
    input channel, so the K loop runs only over the channel multiplier.
    """
    yo, xo = output_dims(layer)
    k = layer.multiplier if layer.op_kind is OpKind.DWCONV else layer.K
    return {"K": k, "C": layer.C, "Yo": yo, "Xo": xo, "R": layer.R, "S": layer.S}


def spatial_allocation(dataflow: Dataflow, layer: Layer, n_pe: int) -> Mapping:
    if n_pe < 1:
        raise ValueError("n_pe must be >= 1")
    ext = loop_extents(layer)
    d1, d2 = dataflow.spatial_dims
    p2 = min(ext[d2], n_pe)
    p1 = min(ext[d1], n_pe // p2)
    return Mapping(dataflow, layer.id, p1, p2, p1 * p2)


def mapping_utilization(mapping: Mapping, n_pe: int) -> float:
    return mapping.used_pes / n_pe
