"""
Multi-DNN workload representation.

A workload is a list of independent model graphs. Each model graph holds an
ordered list of layers whose dependence edges only point backwards, so the
listed order is always a valid topological order. Batches are expanded into
independent copies when a workload file is parsed.
"""

import enum
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

import yaml


class WorkloadError(ValueError):
    """Raised for malformed workload files or layers violating invariants."""


class OpKind(enum.Enum):
    CONV2D = "CONV2D"
    PWCONV = "PWCONV"
    DWCONV = "DWCONV"
    FC = "FC"
    TRCONV = "TRCONV"
    ELEMWISE = "ELEMWISE"


CONV_KINDS = (OpKind.CONV2D, OpKind.PWCONV, OpKind.DWCONV, OpKind.TRCONV)


@dataclass(frozen=True)
class Layer:
    """One DNN layer.

    ``Y``/``X`` are input activation extents (already padded), ``R``/``S``
    filter extents. For DWCONV the channel multiplier is ``K // C``.
    """
    id: str
    op_kind: OpKind
    K: int
    C: int
    Y: int = 1
    X: int = 1
    R: int = 1
    S: int = 1
    stride: int = 1
    upscale: int = 1
    depends_on: Tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "depends_on", tuple(self.depends_on))
        validate_layer(self)

    @property
    def multiplier(self) -> int:
        return self.K // self.C if self.op_kind is OpKind.DWCONV else 1

    @property
    def shape_key(self) -> tuple:
        """Everything that determines cost; identical across batch copies."""
        return (self.op_kind, self.K, self.C, self.Y, self.X, self.R, self.S,
                self.stride, self.upscale)


def validate_layer(layer: Layer) -> None:
    lid = layer.id
    for name in ("K", "C", "Y", "X", "R", "S", "stride", "upscale"):
        value = getattr(layer, name)
        if not isinstance(value, int) or isinstance(value, bool) or value < 1:
            raise WorkloadError(f"layer {lid}: {name} must be a positive integer, got {value!r}")
    kind = layer.op_kind
    if kind is not OpKind.TRCONV and layer.upscale != 1:
        raise WorkloadError(f"layer {lid}: upscale is only valid for TRCONV")
    if kind is OpKind.PWCONV and (layer.R != 1 or layer.S != 1):
        raise WorkloadError(f"layer {lid}: PWCONV requires R = S = 1")
    if kind is OpKind.FC and (layer.Y, layer.X, layer.R, layer.S, layer.stride) != (1, 1, 1, 1, 1):
        raise WorkloadError(f"layer {lid}: FC requires Y = X = R = S = stride = 1")
    if kind is OpKind.ELEMWISE and (layer.R != 1 or layer.S != 1):
        raise WorkloadError(f"layer {lid}: ELEMWISE requires R = S = 1")
    if kind is OpKind.DWCONV and layer.K % layer.C != 0:
        raise WorkloadError(f"layer {lid}: DWCONV K not a multiple of C (K={layer.K}, C={layer.C})")
    if kind in CONV_KINDS:
        if layer.stride > layer.R or layer.stride > layer.S:
            raise WorkloadError(f"layer {lid}: stride {layer.stride} exceeds filter size")
        if layer.Y * layer.upscale < layer.R or layer.X * layer.upscale < layer.S:
            raise WorkloadError(f"layer {lid}: filter larger than input activation")


@dataclass(frozen=True)
class ModelGraph:
    name: str
    layers: Tuple[Layer, ...]
    batch: int = 1

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if self.batch < 1:
            raise WorkloadError(f"model {self.name}: batch must be >= 1")
        seen = set()
        for i, layer in enumerate(self.layers):
            if layer.id in seen:
                raise WorkloadError(f"model {self.name}: duplicate layer id {layer.id}")
            for dep in layer.depends_on:
                if dep not in seen:
                    raise WorkloadError(
                        f"model {self.name}: layer {layer.id} depends on {dep}, "
                        "which is not an earlier layer of the model")
            if i > 0 and not layer.depends_on:
                raise WorkloadError(f"model {self.name}: layer {layer.id} has no predecessor")
            seen.add(layer.id)


@dataclass(frozen=True)
class Workload:
    """Batch-expanded multi-DNN workload; layers of different models are independent."""
    models: Tuple[ModelGraph, ...]
    _index: Dict[str, Tuple[int, int]] = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "models", tuple(self.models))
        index = {}
        for mi, model in enumerate(self.models):
            for li, layer in enumerate(model.layers):
                if layer.id in index:
                    raise WorkloadError(f"layer id {layer.id} is not globally unique")
                index[layer.id] = (mi, li)
        object.__setattr__(self, "_index", index)

    @property
    def layers(self) -> List[Layer]:
        return [layer for model in self.models for layer in model.layers]

    def layer(self, layer_id: str) -> Layer:
        mi, li = self._index[layer_id]
        return self.models[mi].layers[li]

    def model_of(self, layer_id: str) -> int:
        return self._index[layer_id][0]

    def __len__(self):
        return len(self._index)

    def consumers(self) -> Dict[str, List[str]]:
        out = {lid: [] for lid in self._index}
        for layer in self.layers:
            for dep in layer.depends_on:
                out[dep].append(layer.id)
        return out


def expand_batches(models: Iterable[ModelGraph]) -> Workload:
    """Replicate each model ``batch`` times with globally unique layer ids."""
    expanded = []
    for model in models:
        for b in range(model.batch):
            prefix = f"{model.name}[{b}]"
            layers = tuple(
                replace(layer, id=f"{prefix}.{layer.id}",
                        depends_on=tuple(f"{prefix}.{d}" for d in layer.depends_on))
                for layer in model.layers)
            expanded.append(ModelGraph(prefix, layers, 1))
    return Workload(tuple(expanded))


# ---------------------------------------------------------------------------
# Layer arithmetic

def output_dims(layer: Layer) -> Tuple[int, int]:
    kind = layer.op_kind
    if kind is OpKind.FC:
        return 1, 1
    if kind is OpKind.ELEMWISE:
        return layer.Y, layer.X
    y = layer.Y * layer.upscale
    x = layer.X * layer.upscale
    return (y - layer.R) // layer.stride + 1, (x - layer.S) // layer.stride + 1


def mac_count(layer: Layer) -> int:
    kind = layer.op_kind
    if kind is OpKind.ELEMWISE:
        return 0
    yo, xo = output_dims(layer)
    if kind is OpKind.DWCONV:
        return layer.K * yo * xo * layer.R * layer.S
    return layer.K * layer.C * yo * xo * layer.R * layer.S


def tensor_sizes(layer: Layer) -> Tuple[int, int, int]:
    """Element counts of the weight, input and output tensors."""
    yo, xo = output_dims(layer)
    kind = layer.op_kind
    if kind is OpKind.ELEMWISE:
        w = 0
    elif kind is OpKind.DWCONV:
        w = layer.K * layer.R * layer.S
    else:
        w = layer.K * layer.C * layer.R * layer.S
    return w, layer.C * layer.Y * layer.X, layer.K * yo * xo


def channel_activation_ratio(layer: Layer) -> float:
    return layer.C / layer.Y


def ready_set(workload: Workload, completed: Set[str]) -> Set[Layer]:
    """Layers not yet completed whose predecessors are all completed."""
    completed = set(completed)
    for lid in completed:
        for dep in workload.layer(lid).depends_on:
            if dep not in completed:
                raise WorkloadError(
                    f"completed set is not dependence-closed: {lid} completed before {dep}")
    return {layer for layer in workload.layers
            if layer.id not in completed and all(d in completed for d in layer.depends_on)}


# ---------------------------------------------------------------------------
# File format

_LAYER_KEYS = {"id", "name", "op", "K", "C", "Y", "X", "R", "S", "stride", "upscale", "depends_on"}


def _layer_from_dict(raw, index: int, prev_id: Optional[str], model_name: str) -> Layer:
    where = f"model {model_name}, layer #{index}"
    if not isinstance(raw, dict):
        raise WorkloadError(f"{where}: expected a mapping, got {type(raw).__name__}")
    unknown = set(raw) - _LAYER_KEYS
    if unknown:
        raise WorkloadError(f"{where}: unknown field(s) {sorted(unknown)}")
    lid = str(raw.get("id", raw.get("name", f"L{index}")))
    try:
        kind = OpKind(str(raw["op"]).upper())
    except KeyError:
        raise WorkloadError(f"{where} ({lid}): missing field 'op'") from None
    except ValueError:
        raise WorkloadError(f"{where} ({lid}): unknown op {raw['op']!r}") from None
    if "K" not in raw or "C" not in raw:
        raise WorkloadError(f"{where} ({lid}): fields 'K' and 'C' are required")
    deps = raw.get("depends_on")
    if deps is None:
        deps = [] if prev_id is None else [prev_id]
    elif isinstance(deps, str):
        deps = [deps]
    dims = {}
    for key in ("K", "C", "Y", "X", "R", "S", "stride", "upscale"):
        if key in raw:
            value = raw[key]
            if not isinstance(value, int) or isinstance(value, bool):
                raise WorkloadError(f"{where} ({lid}): field {key} must be an integer, got {value!r}")
            dims[key] = value
    try:
        return Layer(id=lid, op_kind=kind, depends_on=tuple(str(d) for d in deps), **dims)
    except WorkloadError as exc:
        raise WorkloadError(f"{where}: {exc}") from None


def models_from_dict(doc) -> List[ModelGraph]:
    if not isinstance(doc, dict) or not isinstance(doc.get("models"), list):
        raise WorkloadError("workload file must contain a top-level 'models' list")
    models = []
    for mi, raw in enumerate(doc["models"]):
        if not isinstance(raw, dict) or "name" not in raw or "layers" not in raw:
            raise WorkloadError(f"model #{mi}: 'name' and 'layers' are required")
        name = str(raw["name"])
        batch = raw.get("batch", 1)
        if not isinstance(batch, int) or batch < 1:
            raise WorkloadError(f"model {name}: batch must be a positive integer")
        layers = []
        prev = None
        for li, lraw in enumerate(raw["layers"]):
            layer = _layer_from_dict(lraw, li, prev, name)
            layers.append(layer)
            prev = layer.id
        models.append(ModelGraph(name, tuple(layers), batch))
    return models


def parse_workload(path, batch_override: Optional[int] = None) -> Workload:
    """Load a workload file and expand batches.

    ``batch_override`` replaces every model's batch count (used by the
    batch-size study). Layers without ``depends_on`` depend on the previous
    layer of their model.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise WorkloadError(f"{path}: cannot read workload file ({exc.strerror})") from None
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        loc = f" line {mark.line + 1}" if mark is not None else ""
        raise WorkloadError(f"{path}:{loc} parse error: {getattr(exc, 'problem', exc)}") from None
    try:
        models = models_from_dict(doc)
    except WorkloadError as exc:
        raise WorkloadError(f"{path}: {exc}") from None
    if batch_override is not None:
        models = [replace(m, batch=batch_override) for m in models]
    return expand_batches(models)


def dump_models(models: Sequence[ModelGraph]) -> str:
    """Serialize model graphs to the workload file format, one layer per line."""
    lines = ["models:"]
    for model in models:
        lines.append(f"- name: {model.name}")
        lines.append(f"  batch: {model.batch}")
        lines.append("  layers:")
        for i, layer in enumerate(model.layers):
            entry = {"id": layer.id, "op": layer.op_kind.value, "K": layer.K, "C": layer.C}
            for key in ("Y", "X", "R", "S", "stride", "upscale"):
                if getattr(layer, key) != 1:
                    entry[key] = getattr(layer, key)
            prev = model.layers[i - 1].id if i else None
            if list(layer.depends_on) != ([prev] if prev else []):
                entry["depends_on"] = list(layer.depends_on)
            flow = yaml.safe_dump(entry, sort_keys=False, default_flow_style=True, width=1000)
            lines.append(f"  - {flow.strip()}")
    return "\n".join(lines) + "\n"
