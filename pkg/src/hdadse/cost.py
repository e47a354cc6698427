"""
Closed-form latency/energy model for one layer on one fixed-dataflow
sub-accelerator.

Each dataflow keeps its stationary tensor in place, so that tensor crosses
the NoC once; the other tensors are refetched once per tile of the loop that
does not reuse them. Communication overlaps computation (double buffering),
so latency is whichever of the two is larger.
"""

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Tuple

from .dataflow import Dataflow, Mapping, Stationary, loop_extents, spatial_allocation
from .workload import Layer, OpKind, mac_count, tensor_sizes


@dataclass(frozen=True)
class SubAcceleratorConfig:
    """A fixed-dataflow partition: dataflow, PE count and NoC bandwidth (bytes/cycle)."""
    dataflow: Dataflow
    n_pe: int
    bw: float
    local_buf: int = 0

    def __post_init__(self):
        if self.n_pe < 1:
            raise ValueError("sub-accelerator needs at least one PE")
        if not self.bw > 0:
            raise ValueError("sub-accelerator bandwidth must be positive")


@dataclass(frozen=True)
class CostParams:
    e_mac: float = 1.0
    e_l1: float = 1.0
    e_gb: float = 6.0
    e_dram: float = 200.0
    bytes_per_element: int = 1
    clock: float = 1e9
    ctx_latency: int = 0
    ctx_energy: float = 0.0
    gb_capacity: int = 4 * 2**20
    share_weights: bool = False

    def __post_init__(self):
        for name in ("e_mac", "e_l1", "e_gb", "e_dram", "ctx_latency", "ctx_energy", "gb_capacity"):
            if getattr(self, name) < 0:
                raise ValueError(f"CostParams.{name} must be nonnegative")
        if self.bytes_per_element < 1 or self.clock <= 0:
            raise ValueError("bytes_per_element and clock must be positive")
        if not self.e_dram >= self.e_gb >= self.e_l1:
            warnings.warn("energy constants are not ordered e_dram >= e_gb >= e_l1", stacklevel=3)

    def gbps_to_bytes_per_cycle(self, gbps: float) -> float:
        return gbps * 1e9 / self.clock


@dataclass(frozen=True)
class LayerCost:
    layer_id: str
    macs: int
    compute_cycles: int
    noc_traffic: Tuple[int, int, int]
    dram_traffic: int
    latency_cycles: int
    energy_units: float
    utilization: float

    @property
    def noc_total(self) -> int:
        return sum(self.noc_traffic)


def _reduction_channels(layer: Layer) -> int:
    # depth-wise layers never accumulate across input channels
    return 1 if layer.op_kind is OpKind.DWCONV else layer.C


def _unroll(mapping: Mapping):
    d1, d2 = mapping.dataflow.spatial_dims
    return {d1: mapping.p1, d2: mapping.p2}


def compute_cycles(mapping: Mapping, layer: Layer) -> int:
    if layer.op_kind is OpKind.ELEMWISE:
        return 0
    ext = loop_extents(layer)
    unroll = _unroll(mapping)
    cycles = 1
    for dim, e in ext.items():
        cycles *= -(-e // unroll.get(dim, 1))
    return cycles


def noc_traffic(mapping: Mapping, layer: Layer) -> Tuple[int, int, int]:
    """(W, I, O) elements crossing the global NoC for one layer execution."""
    w, i, o = tensor_sizes(layer)
    if layer.op_kind is OpKind.ELEMWISE:
        return 0, i, o
    ext = loop_extents(layer)
    unroll = _unroll(mapping)

    def tiles(dim):
        return -(-ext[dim] // unroll.get(dim, 1))

    c_red = _reduction_channels(layer)
    stationary = mapping.dataflow.stationary_tensor
    if stationary is Stationary.WEIGHT:
        c_tiles = -(-c_red // unroll.get("C", 1))
        return w, i * tiles("K"), o * (2 * c_tiles - 1)
    if stationary is Stationary.OUTPUT:
        py, px = unroll.get("Yo", 1), unroll.get("Xo", 1)
        t = tiles("Yo") * tiles("Xo")
        s = layer.stride
        halo = (py * s + layer.R - s) * (px * s + layer.S - s)
        return w * t, t * ext["K"] * ext["C"] * halo, o
    # row-stationary: filter rows stay put, channels accumulate temporally
    return w * tiles("Yo"), i * ext["K"], o * (2 * c_red - 1)


def output_overflows(layer: Layer, gb_capacity: int, bytes_per_element: int = 1) -> bool:
    return tensor_sizes(layer)[2] * bytes_per_element > gb_capacity


def dram_traffic(layer: Layer, input_resident: bool, output_spilled: bool = False) -> int:
    """Elements moved to/from DRAM.

    Weights always come from DRAM; the input does too unless the producer's
    output is still held in the global buffer; the output is written back
    only when it spills out of the global buffer.
    """
    w, i, o = tensor_sizes(layer)
    return w + (0 if input_resident else i) + (o if output_spilled else 0)


def buffer_requirement(mapping: Mapping, layer: Layer, bytes_per_element: int = 1) -> int:
    """Double-buffered global-buffer working set of one spatial tile, in bytes."""
    ext = loop_extents(layer)
    tile = {d: 1 for d in ext}
    tile["R"], tile["S"] = ext["R"], ext["S"]
    tile.update(_unroll(mapping))
    s = layer.stride
    w = 0 if layer.op_kind is OpKind.ELEMWISE else tile["K"] * tile["C"] * tile["R"] * tile["S"]
    i = tile["C"] * ((tile["Yo"] - 1) * s + tile["R"]) * ((tile["Xo"] - 1) * s + tile["S"])
    o = tile["K"] * tile["Yo"] * tile["Xo"]
    return 2 * (w + i + o) * bytes_per_element


@dataclass(frozen=True)
class LayerProfile:
    """Residency-independent part of a layer's cost on one sub-accelerator."""
    macs: int
    compute_cycles: int
    noc_traffic: Tuple[int, int, int]
    latency_cycles: int
    onchip_energy: float
    utilization: float
    working_set: int
    tensors: Tuple[int, int, int]


@lru_cache(maxsize=65536)
def _profile(layer: Layer, dataflow: Dataflow, n_pe: int, bw: float,
             params: CostParams) -> LayerProfile:
    mapping = spatial_allocation(dataflow, layer, n_pe)
    macs = mac_count(layer)
    cycles = compute_cycles(mapping, layer)
    traffic = noc_traffic(mapping, layer)
    noc = sum(traffic)
    latency = max(cycles, math.ceil(noc * params.bytes_per_element / bw))
    energy = macs * params.e_mac + 4 * macs * params.e_l1 + noc * params.e_gb
    return LayerProfile(macs, cycles, traffic, latency, energy, mapping.used_pes / n_pe,
                        buffer_requirement(mapping, layer, params.bytes_per_element),
                        tensor_sizes(layer))


def layer_profile(layer: Layer, sub: SubAcceleratorConfig, params: CostParams) -> LayerProfile:
    # keyed by shape so batch copies share one entry; the layer itself only
    # supplies dimensions
    return _profile(_canonical(layer), sub.dataflow, sub.n_pe, sub.bw, params)


@lru_cache(maxsize=65536)
def _canonical_by_shape(shape_key):
    kind, K, C, Y, X, R, S, stride, upscale = shape_key
    return Layer("_", kind, K, C, Y, X, R, S, stride, upscale)


def _canonical(layer: Layer) -> Layer:
    return _canonical_by_shape(layer.shape_key)


def evaluate_layer(layer: Layer, sub: SubAcceleratorConfig, params: CostParams,
                   input_resident: bool, output_spilled: Optional[bool] = None) -> LayerCost:
    """Latency and energy of ``layer`` on ``sub``.

    When ``output_spilled`` is None the output spills iff it alone exceeds
    the global buffer capacity.
    """
    prof = layer_profile(layer, sub, params)
    if output_spilled is None:
        output_spilled = output_overflows(layer, params.gb_capacity, params.bytes_per_element)
    dram = dram_traffic(layer, input_resident, output_spilled)
    return LayerCost(
        layer_id=layer.id,
        macs=prof.macs,
        compute_cycles=prof.compute_cycles,
        noc_traffic=prof.noc_traffic,
        dram_traffic=dram,
        latency_cycles=prof.latency_cycles,
        energy_units=prof.onchip_energy + dram * params.e_dram,
        utilization=prof.utilization,
    )


def metric_value(latency: float, energy: float, metric: str) -> float:
    metric = metric.lower()
    if metric == "latency":
        return latency
    if metric == "energy":
        return energy
    if metric == "edp":
        return latency * energy
    raise ValueError(f"unknown metric {metric!r}")
