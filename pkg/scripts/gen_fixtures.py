"""Regenerate the bundled workload fixtures under src/hdadse/fixtures/.

Padding is folded into the input extents (Y, X) and pooling layers are
dropped (the next layer sees the pooled extent). Strided 1x1 projections are
modeled on a pre-subsampled input. Models marked approximate are
reconstructions of published architectures, not exact replicas.

    python scripts/gen_fixtures.py
"""

from pathlib import Path

from hdadse.workload import Layer, ModelGraph, OpKind, dump_models

OUT = Path(__file__).resolve().parents[1] / "src" / "hdadse" / "fixtures"


class Builder:
    def __init__(self, name):
        self.name = name
        self.layers = []

    @property
    def last(self):
        return self.layers[-1].id if self.layers else None

    def add(self, lid, op, K, C, Y=1, X=None, R=1, S=None, stride=1, upscale=1, deps=None):
        if deps is None:
            deps = [self.last] if self.layers else []
        self.layers.append(Layer(lid, op, K, C, Y, Y if X is None else X, R, R if S is None else S,
                                 stride, upscale, tuple(deps)))
        return lid

    def conv(self, lid, K, C, H, R, stride=1, pad=None, deps=None):
        pad = R // 2 if pad is None else pad
        return self.add(lid, OpKind.CONV2D, K, C, H + 2 * pad, R=R, stride=stride, deps=deps)

    def pw(self, lid, K, C, H, deps=None):
        return self.add(lid, OpKind.PWCONV, K, C, H, deps=deps)

    def dw(self, lid, C, H, stride=1, deps=None):
        return self.add(lid, OpKind.DWCONV, C, C, H + 2, R=3, stride=stride, deps=deps)

    def add_join(self, lid, C, H, deps):
        return self.add(lid, OpKind.ELEMWISE, C, C, H, deps=deps)

    def fc(self, lid, K, C, deps=None):
        return self.add(lid, OpKind.FC, K, C, deps=deps)

    def model(self, batch=1):
        return ModelGraph(self.name, tuple(self.layers), batch)


def resnet50():
    b = Builder("Resnet50")
    b.conv("conv1", 64, 3, 224, 7, stride=2, pad=3)
    h, c = 56, 64
    for stage, (width, blocks) in enumerate([(64, 3), (128, 4), (256, 6), (512, 3)], start=2):
        out = width * 4
        for blk in range(blocks):
            p = f"s{stage}b{blk}"
            block_in = b.last
            stride = 2 if blk == 0 and stage > 2 else 1
            b.pw(f"{p}_reduce", width, c, h)
            b.conv(f"{p}_conv3x3", width, width, h, 3, stride=stride)
            h_out = h // stride
            main = b.pw(f"{p}_expand", out, width, h_out)
            if blk == 0:
                short = b.pw(f"{p}_proj", out, c, h_out, deps=[block_in])
            else:
                short = block_in
            b.add_join(f"{p}_add", out, h_out, deps=[main, short])
            h, c = h_out, out
    b.fc("fc", 1000, 2048)
    return b


def resnet34_backbone(b, h):
    """ResNet34 basic blocks through the 256-channel stage."""
    c = 64
    for stage, (width, blocks) in enumerate([(64, 3), (128, 4), (256, 6)], start=2):
        for blk in range(blocks):
            p = f"s{stage}b{blk}"
            block_in = b.last
            stride = 2 if blk == 0 and stage > 2 else 1
            b.conv(f"{p}_conv_a", width, c, h, 3, stride=stride)
            h_out = h // stride
            main = b.conv(f"{p}_conv_b", width, width, h_out, 3)
            if stride != 1 or c != width:
                short = b.pw(f"{p}_proj", width, c, h_out, deps=[block_in])
            else:
                short = block_in
            b.add_join(f"{p}_add", width, h_out, deps=[main, short])
            h, c = h_out, width
    return h, c


def unet():
    """Original valid-convolution UNet on a 572x572 single-channel input."""
    b = Builder("UNet")
    h, c = 572, 1
    skips = []
    for lvl, width in enumerate([64, 128, 256, 512]):
        b.conv(f"enc{lvl}_a", width, c, h, 3, pad=0)
        b.conv(f"enc{lvl}_b", width, width, h - 2, 3, pad=0)
        skips.append(b.last)
        h, c = (h - 4) // 2, width
    b.conv("mid_a", 1024, 512, h, 3, pad=0)
    b.conv("mid_b", 1024, 1024, h - 2, 3, pad=0)
    h, c = h - 4, 1024
    for lvl, width in zip([3, 2, 1, 0], [512, 256, 128, 64]):
        up = b.add(f"dec{lvl}_up", OpKind.TRCONV, width, c, h, R=2, upscale=2)
        h = 2 * h
        cat = b.add_join(f"dec{lvl}_cat", 2 * width, h, deps=[up, skips[lvl]])
        b.conv(f"dec{lvl}_a", width, 2 * width, h, 3, pad=0)
        b.conv(f"dec{lvl}_b", width, width, h - 2, 3, pad=0)
        h, c = h - 4, width
    b.pw("head", 2, 64, h)
    return b


def mobilenet_v2():
    b = Builder("MobileNetV2")
    b.conv("conv0", 32, 3, 224, 3, stride=2)
    h, c = 112, 32
    cfg = [(1, 16, 1, 1), (6, 24, 2, 2), (6, 32, 3, 2), (6, 64, 4, 2),
           (6, 96, 3, 1), (6, 160, 3, 2), (6, 320, 1, 1)]
    n = 0
    for t, out, reps, s in cfg:
        for r in range(reps):
            stride = s if r == 0 else 1
            block_in = b.last
            hidden = c * t
            if t != 1:
                b.pw(f"b{n}_expand", hidden, c, h)
            b.dw(f"b{n}_dw", hidden, h, stride=stride)
            h_out = h // stride
            proj = b.pw(f"b{n}_project", out, hidden, h_out)
            if stride == 1 and c == out:
                b.add_join(f"b{n}_add", out, h_out, deps=[proj, block_in])
            h, c = h_out, out
            n += 1
    b.pw("conv_last", 1280, 320, 7)
    b.fc("fc", 1000, 1280)
    return b


def mobilenet_v1_body(b, h, width=1.0):
    b.conv("conv0", 32, 3, h, 3, stride=2)
    h, c = h // 2, 32
    cfg = [(64, 1), (128, 2), (128, 1), (256, 2), (256, 1), (512, 2)] + [(512, 1)] * 5 + \
          [(1024, 2), (1024, 1)]
    for n, (out, s) in enumerate(cfg):
        b.dw(f"dw{n}", c, h, stride=s)
        h = h // s
        b.pw(f"pw{n}", out, c, h)
        c = out
    return h, c


def mobilenet_v1():
    b = Builder("MobileNetV1")
    mobilenet_v1_body(b, 224)
    b.fc("fc", 1000, 1024)
    return b


def ssd_heads(b, features, n_classes, anchors=(4, 6, 6, 6, 4, 4)):
    for k, ((src, h, c), a) in enumerate(zip(features, anchors)):
        b.conv(f"head{k}_loc", a * 4, c, h, 3, deps=[src])
        b.conv(f"head{k}_conf", a * n_classes, c, h, 3, deps=[src])


def ssd_resnet34():
    """Approximate SSD-ResNet34 (1200x1200 input, six feature maps)."""
    b = Builder("SSD-Resnet34")
    b.conv("conv1", 64, 3, 1200, 7, stride=2, pad=3)
    h, c = resnet34_backbone(b, 300)
    features = [(b.last, h, c)]
    for k, (mid, out, s) in enumerate([(256, 512, 2), (256, 512, 2), (128, 256, 2),
                                       (128, 256, 2), (128, 256, 2)]):
        b.pw(f"extra{k}_a", mid, c, h)
        b.conv(f"extra{k}_b", out, mid, h, 3, stride=s)
        h, c = h // s, out
        features.append((b.last, h, c))
    ssd_heads(b, features, 81)
    return b


def ssd_mobilenet_v1():
    """Approximate SSD-MobileNetV1 (300x300 input)."""
    b = Builder("SSD-MobileNetV1")
    h, c = mobilenet_v1_body(b, 300)
    features = [("pw10", 19, 512), (b.last, h, c)]
    for k, (mid, out) in enumerate([(256, 512), (128, 256), (128, 256), (64, 128)]):
        b.pw(f"extra{k}_a", mid, c, h)
        b.conv(f"extra{k}_b", out, mid, h, 3, stride=2)
        h, c = max(h // 2, 1), out
        features.append((b.last, h, c))
    ssd_heads(b, features, 91, anchors=(3, 6, 6, 6, 6, 6))
    return b


def gnmt():
    """GNMT as a sequence of fully connected LSTM/attention steps (one decode step)."""
    b = Builder("GNMT")
    b.fc("embed_enc", 1024, 1024)
    for k in range(8):
        b.fc(f"enc{k}", 4096, 2048 if k else 2048)
    b.fc("attn_query", 1024, 1024)
    b.fc("attn_score", 1024, 2048)
    for k in range(8):
        b.fc(f"dec{k}", 4096, 3072 if k else 2048)
    b.fc("proj", 32000, 1024)
    return b


def brq_handpose():
    """Approximate Br-Q HandposeNet: small conv trunk on a 64x64 depth map, FC head."""
    b = Builder("BRQ-Handpose")
    b.conv("conv1", 32, 1, 64, 5, pad=0)
    b.conv("conv2", 64, 32, 30, 5, pad=0)
    b.conv("conv3", 64, 64, 6, 3, pad=0)
    b.fc("fc1", 1024, 1024)
    b.fc("fc2", 1024, 1024)
    b.fc("fc3", 1024, 1024)
    b.fc("fc4", 63, 1024)
    return b


def focal_depthnet():
    """Approximate focal-length DepthNet: VGG-style encoder, FC bottleneck, up-convolution decoder."""
    b = Builder("FocalDepthNet")
    h, c = 224, 3
    for lvl, (width, reps) in enumerate([(64, 2), (128, 2), (256, 3), (512, 3)]):
        for r in range(reps):
            b.conv(f"conv{lvl}_{r}", width, c, h, 3)
            c = width
        h //= 2
    b.conv("squeeze", 256, 512, h, 3, stride=2)
    b.fc("fc1", 4096, 4096)
    b.fc("fc2", 4096, 4096)
    h, c = 8, 64
    for lvl, width in enumerate([64, 32, 16, 8]):
        b.add(f"up{lvl}", OpKind.TRCONV, width, c, h, R=2, upscale=2)
        h = 2 * h - 1
        b.conv(f"refine{lvl}", width, width, h, 3)
        c = width
    b.pw("depth", 1, c, h)
    return b


WORKLOADS = {
    "arvr_a": [(resnet50, 2), (unet, 4), (mobilenet_v2, 4)],
    "arvr_b": [(resnet50, 2), (unet, 2), (mobilenet_v2, 4), (brq_handpose, 2), (focal_depthnet, 2)],
    "mlperf": [(resnet50, 1), (mobilenet_v1, 1), (ssd_resnet34, 1), (ssd_mobilenet_v1, 1), (gnmt, 1)],
}


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    for name, spec in WORKLOADS.items():
        models = [fn().model(batch) for fn, batch in spec]
        text = dump_models(models)
        (OUT / f"{name}.yaml").write_text(f"# {name} workload (generated by scripts/gen_fixtures.py)\n" + text)
        print(name, sum(len(m.layers) * m.batch for m in models), "layers")


if __name__ == "__main__":
    main()
