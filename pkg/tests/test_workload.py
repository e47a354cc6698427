import itertools
import statistics

import pytest
from hypothesis import given, strategies as st

from conftest import fixture_path
from oracles import nested_loop_macs
from hdadse.workload import (Layer, ModelGraph, OpKind, Workload, WorkloadError,
                             channel_activation_ratio, dump_models, expand_batches, mac_count,
                             models_from_dict, output_dims, parse_workload, ready_set, tensor_sizes)


def conv(lid="L", **kw):
    return Layer(lid, OpKind.CONV2D, **kw)


def write(tmp_path, text, name="w.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return p


class TestLayerValidation:
    def test_dwconv_k_must_be_multiple_of_c(self):
        with pytest.raises(WorkloadError, match="K not a multiple of C"):
            Layer("d", OpKind.DWCONV, 7, 3, 8, 8, 3, 3)

    @pytest.mark.parametrize("kw", [
        dict(op_kind=OpKind.PWCONV, K=4, C=4, Y=4, X=4, R=3, S=3),
        dict(op_kind=OpKind.FC, K=4, C=4, Y=2),
        dict(op_kind=OpKind.ELEMWISE, K=4, C=4, Y=4, X=4, R=2, S=2),
        dict(op_kind=OpKind.CONV2D, K=4, C=4, Y=8, X=8, R=3, S=3, stride=4),
        dict(op_kind=OpKind.CONV2D, K=4, C=4, Y=2, X=2, R=3, S=3),
        dict(op_kind=OpKind.CONV2D, K=0, C=4),
        dict(op_kind=OpKind.CONV2D, K=4, C=4, Y=4, X=4, upscale=2),
    ])
    def test_rejects(self, kw):
        with pytest.raises(WorkloadError):
            Layer("bad", **kw)

    def test_model_dependences_point_backwards(self):
        a = conv("a", K=1, C=1)
        b = conv("b", K=1, C=1, depends_on=("c",))
        with pytest.raises(WorkloadError, match="not an earlier layer"):
            ModelGraph("m", (a, b))

    def test_non_first_layer_needs_predecessor(self):
        with pytest.raises(WorkloadError, match="no predecessor"):
            ModelGraph("m", (conv("a", K=1, C=1), conv("b", K=1, C=1)))

    def test_global_ids_unique(self):
        m1 = ModelGraph("m1", (conv("x", K=1, C=1),))
        m2 = ModelGraph("m2", (conv("x", K=1, C=1),))
        with pytest.raises(WorkloadError, match="globally unique"):
            Workload((m1, m2))


class TestArithmetic:
    def test_output_dims(self):
        assert output_dims(conv(K=1, C=1, Y=224, X=224, R=7, S=7, stride=2)) == (109, 109)
        assert output_dims(Layer("p", OpKind.PWCONV, 4, 4, 56, 56)) == (56, 56)
        assert output_dims(Layer("t", OpKind.TRCONV, 4, 4, 28, 28, 2, 2, upscale=2)) == (55, 55)
        assert output_dims(Layer("f", OpKind.FC, 10, 10)) == (1, 1)
        assert output_dims(Layer("e", OpKind.ELEMWISE, 4, 4, 9, 7)) == (9, 7)

    def test_mac_count_examples(self):
        # Y chosen so the output is 112x112 under a 7x7 filter
        first = conv(K=64, C=3, Y=118, X=118, R=7, S=7)
        assert output_dims(first) == (112, 112)
        assert mac_count(first) == 118_013_952
        assert mac_count(Layer("f", OpKind.FC, 1000, 2048)) == 2_048_000
        assert mac_count(Layer("e", OpKind.ELEMWISE, 64, 64, 56, 56)) == 0

    def test_tensor_sizes_examples(self):
        assert tensor_sizes(Layer("f", OpKind.FC, 1000, 2048)) == (2_048_000, 2048, 1000)
        dw = Layer("d", OpKind.DWCONV, 32, 32, 112, 112, 3, 3)
        yo, xo = output_dims(dw)
        assert tensor_sizes(dw) == (288, 401_408, 32 * yo * xo)
        assert tensor_sizes(Layer("e", OpKind.ELEMWISE, 64, 64, 56, 56)) == (0, 200_704, 200_704)

    def test_channel_activation_ratio(self):
        assert channel_activation_ratio(conv(K=32, C=3, Y=224, X=224, R=3, S=3)) == pytest.approx(0.013, abs=5e-4)
        assert channel_activation_ratio(Layer("f", OpKind.FC, 1000, 1280)) == 1280
        assert channel_activation_ratio(conv(K=1, C=9, Y=9, X=9)) == 1.0


small = st.integers(1, 4)


@st.composite
def small_layers(draw):
    kind = draw(st.sampled_from(list(OpKind)))
    c = draw(small)
    if kind is OpKind.FC:
        return Layer("x", kind, draw(small), c)
    if kind is OpKind.ELEMWISE:
        return Layer("x", kind, c, c, draw(small), draw(small))
    if kind is OpKind.PWCONV:
        return Layer("x", kind, draw(small), c, draw(small), draw(small), stride=1)
    r, s = draw(st.integers(1, 3)), draw(st.integers(1, 3))
    stride = draw(st.integers(1, min(r, s)))
    up = draw(st.integers(1, 2)) if kind is OpKind.TRCONV else 1
    y = draw(st.integers(max(1, -(-r // up)), 8))
    x = draw(st.integers(max(1, -(-s // up)), 8))
    k = c * draw(st.integers(1, 2)) if kind is OpKind.DWCONV else draw(small)
    return Layer("x", kind, k, c, y, x, r, s, stride, up)


@given(small_layers())
def test_mac_count_matches_nested_loops(layer):
    assert mac_count(layer) == nested_loop_macs(layer)


@given(small_layers())
def test_tensor_sizes_match_enumeration(layer):
    w, i, o = tensor_sizes(layer)
    yo, xo = output_dims(layer)
    outs = {(k, y, x) for k in range(layer.K) for y in range(yo) for x in range(xo)}
    assert o == len(outs)
    if layer.op_kind is OpKind.ELEMWISE:
        assert w == 0
        return
    per_k = 1 if layer.op_kind is OpKind.DWCONV else layer.C
    weights = {(k, c, r, s) for k in range(layer.K) for c in range(per_k)
               for r in range(layer.R) for s in range(layer.S)}
    assert w == len(weights)
    assert i == layer.C * layer.Y * layer.X


class TestReadySet:
    def setup_method(self):
        a = ModelGraph("A", (conv("A1", K=1, C=1), conv("A2", K=1, C=1, depends_on=("A1",))))
        b = ModelGraph("B", (conv("B1", K=1, C=1), conv("B2", K=1, C=1, depends_on=("B1",))))
        self.wl = Workload((a, b))

    def ids(self, layers):
        return {l.id for l in layers}

    def test_examples(self):
        assert self.ids(ready_set(self.wl, set())) == {"A1", "B1"}
        assert self.ids(ready_set(self.wl, {"A1"})) == {"A2", "B1"}
        assert ready_set(self.wl, {"A1", "A2", "B1", "B2"}) == set()

    def test_not_dependence_closed(self):
        with pytest.raises(WorkloadError):
            ready_set(self.wl, {"A2"})

    def test_consumption_covers_each_layer_once(self):
        done, seen = set(), []
        while True:
            ready = sorted(self.ids(ready_set(self.wl, done)))
            if not ready:
                break
            seen.append(ready[0])
            done.add(ready[0])
        assert sorted(seen) == sorted(l.id for l in self.wl.layers)


class TestParsing:
    def test_single_layer(self, tmp_path):
        p = write(tmp_path, "models:\n- name: m\n  batch: 1\n  layers:\n  - {op: CONV2D, K: 4, C: 3, Y: 8, X: 8, R: 3, S: 3}\n")
        wl = parse_workload(p)
        assert len(wl) == 1

    def test_arvr_a_instances(self):
        wl = parse_workload(fixture_path("arvr_a"))
        names = [m.name.split("[")[0] for m in wl.models]
        assert names.count("Resnet50") == 2
        assert names.count("UNet") == 4
        assert names.count("MobileNetV2") == 4

    def test_dwconv_error(self, tmp_path):
        p = write(tmp_path, "models:\n- name: m\n  layers:\n  - {op: DWCONV, K: 7, C: 3, Y: 8, X: 8, R: 3, S: 3}\n")
        with pytest.raises(WorkloadError, match="K not a multiple of C"):
            parse_workload(p)

    def test_yaml_error_has_line(self, tmp_path):
        p = write(tmp_path, "models:\n- name: m\n  layers: [\n")
        with pytest.raises(WorkloadError, match="line"):
            parse_workload(p)

    def test_unknown_field(self, tmp_path):
        p = write(tmp_path, "models:\n- name: m\n  layers:\n  - {op: FC, K: 4, C: 3, pad: 1}\n")
        with pytest.raises(WorkloadError, match="unknown field"):
            parse_workload(p)

    def test_missing_file(self, tmp_path):
        with pytest.raises(WorkloadError, match="cannot read"):
            parse_workload(tmp_path / "nope.yaml")

    def test_default_dependence_is_previous_layer(self):
        models = models_from_dict({"models": [{"name": "m", "layers": [
            {"id": "a", "op": "FC", "K": 2, "C": 2}, {"id": "b", "op": "FC", "K": 2, "C": 2}]}]})
        assert models[0].layers[1].depends_on == ("a",)

    def test_batch_override_and_expansion(self):
        one = parse_workload(fixture_path("mlperf"))
        eight = parse_workload(fixture_path("mlperf"), batch_override=8)
        assert len(eight) == 8 * len(one)
        assert sum(mac_count(l) for l in eight.layers) == 8 * sum(mac_count(l) for l in one.layers)
        assert len({l.id for l in eight.layers}) == len(eight)

    def test_dump_roundtrip(self, tmp_path):
        wl = parse_workload(fixture_path("arvr_b"))
        base = {}
        for m in wl.models:
            base.setdefault(m.name.split("[")[0], m)
        models = [ModelGraph(name, tuple(l.__class__(l.id.split(".", 1)[1], l.op_kind, l.K, l.C, l.Y, l.X, l.R, l.S,
                                                     l.stride, l.upscale,
                                                     tuple(d.split(".", 1)[1] for d in l.depends_on))
                                         for l in m.layers))
                  for name, m in base.items()]
        p = write(tmp_path, dump_models(models))
        again = parse_workload(p)
        assert [l.shape_key for l in again.layers] == [l.shape_key for l in expand_batches(models).layers]


def test_batch_expansion_counts():
    m = ModelGraph("m", (conv("a", K=2, C=2, Y=4, X=4, R=3, S=3),
                         conv("b", K=2, C=2, Y=4, X=4, R=3, S=3, depends_on=("a",))), batch=3)
    wl = expand_batches([m])
    assert len(wl) == 6
    assert wl.layer("m[2].b").depends_on == ("m[2].a",)


class TestFixtures:
    def ratios(self, fixture, model):
        wl = parse_workload(fixture_path(fixture))
        m = next(m for m in wl.models if m.name.startswith(model))
        return [channel_activation_ratio(l) for l in m.layers]

    def test_mobilenet_v2_ratio_range(self):
        r = self.ratios("arvr_a", "MobileNetV2")
        assert min(r) == pytest.approx(0.013, abs=5e-4)
        assert max(r) == 1280

    def test_median_ratios(self):
        assert statistics.median(self.ratios("arvr_a", "Resnet50")) == pytest.approx(18.286, rel=1e-3)
        assert statistics.median(self.ratios("arvr_a", "UNet")) == pytest.approx(1.855, rel=1e-3)

    @pytest.mark.parametrize("name", ["arvr_a", "arvr_b", "mlperf"])
    def test_fixtures_parse(self, name):
        wl = parse_workload(fixture_path(name))
        assert len(wl) > 100
        kinds = {l.op_kind for l in wl.layers}
        assert OpKind.CONV2D in kinds and OpKind.FC in kinds
