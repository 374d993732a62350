"""Materialize serialized architectures as executable torch models.

The wire format describes every block as a flat chain of conv, pool,
fully connected, and elementwise layers with fully resolved shapes.  The
model rebuilt here replays that chain with torch modules and re-checks
each layer's output against its declared size on every forward pass, so
a geometry disagreement is a hard error instead of silent drift.
"""

import torch
from torch import nn

from .errors import MaterializeError


def _size(v) -> tuple:
    if not isinstance(v, (list, tuple)) or len(v) != 3:
        raise MaterializeError(f"expected a (c, h, w) size, got {v!r}")
    return tuple(int(u) for u in v)


def _pair(v) -> tuple:
    if not isinstance(v, (list, tuple)) or len(v) != 2:
        raise MaterializeError(f"expected a 2-element pair, got {v!r}")
    return int(v[0]), int(v[1])


def _quad(v) -> tuple:
    if not isinstance(v, (list, tuple)) or len(v) != 4:
        raise MaterializeError(f"expected a 4-element padding, got {v!r}")
    return tuple(int(u) for u in v)


class _Dense(nn.Module):
    """Fully connected layer that keeps the chain's 4-d tensor convention."""

    def __init__(self, in_features: int, out_features: int):
        super().__init__()
        self.linear = nn.Linear(in_features, out_features)

    def forward(self, x):
        y = self.linear(torch.flatten(x, 1))
        return y.reshape(y.shape[0], -1, 1, 1)


def _conv_module(spec) -> nn.Module:
    in_c, out_c = _size(spec["in"])[0], _size(spec["out"])[0]
    kernel = _pair(spec["kernel"])
    stride = _pair(spec["stride"])
    pt, pb, pl, pr = _quad(spec["padding"])
    conv_kw = dict(dilation=int(spec["dilation"]), groups=int(spec["groups"]),
                   bias=bool(spec["bias_used"]))
    if pt == pb and pl == pr:
        return nn.Conv2d(in_c, out_c, kernel, stride, padding=(pt, pl), **conv_kw)
    # torch pads (left, right, top, bottom); the wire order is (top, bottom, left, right)
    return nn.Sequential(nn.ZeroPad2d((pl, pr, pt, pb)),
                         nn.Conv2d(in_c, out_c, kernel, stride, padding=0, **conv_kw))


def _pool_module(spec) -> nn.Module:
    kernel = _pair(spec["kernel"])
    stride = _pair(spec["stride"])
    pt, pb, pl, pr = _quad(spec["padding"])
    if pt != pb or pl != pr:
        raise MaterializeError("asymmetric pool padding is not supported")
    dilation = int(spec["dilation"])
    kind = spec["pool_type"]
    if kind == "max":
        return nn.MaxPool2d(kernel, stride, padding=(pt, pl), dilation=dilation)
    if kind == "avg":
        if dilation != 1:
            raise MaterializeError("average pooling requires dilation 1")
        return nn.AvgPool2d(kernel, stride, padding=(pt, pl))
    raise MaterializeError(f"unknown pool type {kind!r}")


def _elementwise_module(spec) -> nn.Module:
    name = spec["name"]
    if name == "batchnorm":
        return nn.BatchNorm2d(_size(spec["in"])[0])
    if name == "relu":
        return nn.ReLU()
    if name == "sigmoid":
        return nn.Sigmoid()
    raise MaterializeError(f"unknown elementwise layer {name!r}")


def _layer_module(spec) -> nn.Module:
    category = spec.get("category")
    try:
        if category == "conv":
            return _conv_module(spec)
        if category == "pool":
            return _pool_module(spec)
        if category == "fc":
            c, h, w = _size(spec["in"])
            return _Dense(c * h * w, _size(spec["out"])[0])
        if category == "other":
            return _elementwise_module(spec)
    except KeyError as exc:
        raise MaterializeError(f"layer {spec.get('id')} is missing field {exc}") from exc
    except (ValueError, RuntimeError) as exc:
        raise MaterializeError(f"layer {spec.get('id')}: {exc}") from exc
    raise MaterializeError(f"unknown layer category {category!r}")


class MaterializedModel(nn.Module):
    """Chain of block layers plus a linear classifier head.

    Exposes the block-index to parameter-name mapping the trainable-scope
    rules operate on.
    """

    def __init__(self, arch: dict):
        super().__init__()
        if not isinstance(arch, dict):
            raise MaterializeError("architecture payload must be an object")
        try:
            self.input_shape = _size(arch["input_shape"])
            self.num_classes = int(arch["num_classes"])
            blocks = arch["blocks"]
        except KeyError as exc:
            raise MaterializeError(f"architecture is missing field {exc}") from exc
        if not blocks:
            raise MaterializeError("architecture has no blocks")
        mods, declared, ranges = [], [], []
        cur = self.input_shape
        for block in blocks:
            start = len(mods)
            for spec in block.get("layers", ()):
                ins = _size(spec["in"])
                if ins != cur:
                    raise MaterializeError(
                        f"layer {spec.get('id')} expects {ins}, chain is at {cur}")
                mods.append(_layer_module(spec))
                declared.append(_size(spec["out"]))
                cur = declared[-1]
            ranges.append((start, len(mods)))
        if not mods:
            raise MaterializeError("architecture has no layers")
        self.layers = nn.ModuleList(mods)
        self.head = nn.Linear(cur[0] * cur[1] * cur[2], self.num_classes)
        self._declared = declared
        self._ranges = ranges

    @property
    def n_blocks(self) -> int:
        return len(self._ranges)

    def forward(self, x):
        if tuple(x.shape[1:]) != self.input_shape:
            raise MaterializeError(
                f"input batch is {tuple(x.shape[1:])}, model wants {self.input_shape}")
        for mod, want in zip(self.layers, self._declared):
            x = mod(x)
            got = tuple(x.shape[1:])
            if got != want:
                raise MaterializeError(f"layer produced {got}, declared {want}")
        return self.head(torch.flatten(x, 1))

    # -- parameter-name views used by the scope rules --

    def block_parameter_names(self, index: int) -> list:
        lo, hi = self._ranges[index]
        names = []
        for i in range(lo, hi):
            names += [f"layers.{i}.{n}" for n, _ in self.layers[i].named_parameters()]
        return names

    def head_parameter_names(self) -> list:
        return [f"head.{n}" for n, _ in self.head.named_parameters()]

    def norm_parameter_names(self) -> list:
        names = []
        for mod_name, mod in self.named_modules():
            if isinstance(mod, nn.modules.batchnorm._BatchNorm):
                names += [f"{mod_name}.{n}"
                          for n, _ in mod.named_parameters(recurse=False)]
        return names


def materialize(arch: dict) -> MaterializedModel:
    """Build the model and prove it runs with a dry forward pass."""
    model = MaterializedModel(arch)
    try:
        with torch.no_grad():
            model(torch.zeros(2, *model.input_shape))
    except (RuntimeError, ValueError) as exc:
        raise MaterializeError(f"dry run failed: {exc}") from exc
    return model


def param_count(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())
