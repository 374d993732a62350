"""Architecture data model: layers, blocks, canonical keys, and the token codec.

Everything here is metadata — no tensors, no weights.  A network is an ordered
list of typed layer records grouped into blocks, closed by one fully connected
classifier layer.  Layers canonicalize to position-independent string keys;
a Vocabulary maps keys to token ids for the sequence model.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace
from enum import Enum
from typing import Iterable, Iterator, Optional, Sequence

from .errors import EncodingError, ShapeError, UnknownLayerError, VocabError

Size = tuple[int, int, int]  # (channels, height, width)


class LayerCategory(str, Enum):
    CONV = "conv"
    POOL = "pool"
    FC = "fc"
    OTHER = "other"


class PoolType(str, Enum):
    MAX = "max"
    AVG = "avg"


class BlockKind(str, Enum):
    """The 15-entry block vocabulary architectures are composed from."""

    CONV_NORM_ACT = "conv_norm_act"
    SQUEEZE_EXCITATION = "squeeze_excitation"
    INCEPTION = "inception"
    AVGPOOL = "avgpool"
    RES_BOTTLENECK = "res_bottleneck"
    STEM = "stem"
    BOTTLENECK_RESNET = "bottleneck_resnet"
    BASICBLOCK = "basicblock"
    BOTTLENECK_RESNEXT = "bottleneck_resnext"
    INVERTED_RESIDUAL = "inverted_residual"
    BOTTLENECK_WIDE = "bottleneck_wide"
    MAXPOOL = "maxpool"
    BATCH_NORM = "batch_norm"
    RELU = "relu"
    CONV = "conv"


#: Names accepted for `Other` layers; extensible without touching the codec.
OTHER_NAMES = ("batchnorm", "relu", "sigmoid")

CANONICALIZATION_MODES = ("full", "channels_only")


def _check_size(size, label):
    if (not isinstance(size, tuple) or len(size) != 3
            or not all(isinstance(v, int) and v > 0 for v in size)):
        raise EncodingError(f"{label} must be a 3-tuple of positive ints, got {size!r}")


@dataclass(frozen=True)
class LayerDescriptor:
    """One network layer with the per-category property set.

    Field presence is strict per category: Conv carries geometry plus groups
    and bias; Pool carries geometry plus pool_type and bias but no groups
    (and padding pinned to 0); FC carries only sizes; Other carries a name
    and a free `value` tuple.
    """

    category: LayerCategory
    id: int
    in_size: Size
    out_size: Size
    kernel: Optional[tuple[int, int]] = None
    stride: Optional[tuple[int, int]] = None
    padding: Optional[tuple[int, int, int, int]] = None
    dilation: Optional[int] = None
    groups: Optional[int] = None
    bias_used: Optional[bool] = None
    pool_type: Optional[PoolType] = None
    name: Optional[str] = None
    value: Optional[tuple[float, ...]] = None

    def __post_init__(self):
        if self.id < 0:
            raise EncodingError(f"layer id must be non-negative, got {self.id}")
        _check_size(self.in_size, "in_size")
        _check_size(self.out_size, "out_size")
        cat = self.category
        geo = ("kernel", "stride", "padding", "dilation", "bias_used")
        if cat in (LayerCategory.CONV, LayerCategory.POOL):
            for f in geo:
                if getattr(self, f) is None:
                    raise EncodingError(f"{cat.value} layer requires field {f}")
            kh, kw = self.kernel
            sh, sw = self.stride
            if kh < 1 or kw < 1 or sh < 1 or sw < 1:
                raise EncodingError("kernel and stride must be positive")
            if len(self.padding) != 4 or any(p < 0 for p in self.padding):
                raise EncodingError("padding must be a 4-tuple of non-negative ints")
            if self.dilation < 1:
                raise EncodingError("dilation must be positive")
        if cat is LayerCategory.CONV:
            if self.groups is None or self.groups < 1:
                raise EncodingError("conv layer requires positive groups")
            if self.pool_type is not None or self.name is not None or self.value is not None:
                raise EncodingError("conv layer carries no pool_type/name/value")
            if self.in_size[0] % self.groups != 0:
                raise EncodingError(
                    f"conv in channels {self.in_size[0]} not divisible by groups {self.groups}")
        elif cat is LayerCategory.POOL:
            if self.pool_type is None:
                raise EncodingError("pool layer requires pool_type")
            if self.groups is not None or self.name is not None or self.value is not None:
                raise EncodingError("pool layer carries no groups/name/value")
            if any(p != 0 for p in self.padding):
                raise EncodingError("pool padding is fixed at 0")
        elif cat is LayerCategory.FC:
            for f in geo + ("groups", "pool_type", "name", "value"):
                if getattr(self, f) is not None:
                    raise EncodingError(f"fc layer carries no {f}")
        else:  # OTHER
            if self.name is None or self.value is None:
                raise EncodingError("other layer requires name and value")
            if self.name not in OTHER_NAMES:
                raise EncodingError(f"unknown other-layer name {self.name!r}")
            for f in geo + ("groups", "pool_type"):
                if getattr(self, f) is not None:
                    raise EncodingError(f"other layer carries no {f}")


def conv_spatial_extent(extent: int, kernel: int, stride: int,
                        pad_lo: int, pad_hi: int, dilation: int) -> int:
    """Output extent of a strided, dilated window over one padded axis."""
    span = dilation * (kernel - 1) + 1
    out = (extent + pad_lo + pad_hi - span) // stride + 1
    if out < 1:
        raise ShapeError(
            f"window (k={kernel}, s={stride}, p=({pad_lo},{pad_hi}), d={dilation}) "
            f"does not fit extent {extent}")
    return out


def _spatial_out(in_size: Size, kernel, stride, padding, dilation) -> tuple[int, int]:
    _, h, w = in_size
    pt, pb, pl, pr = padding
    return (conv_spatial_extent(h, kernel[0], stride[0], pt, pb, dilation),
            conv_spatial_extent(w, kernel[1], stride[1], pl, pr, dilation))


def infer_out_size(layer: LayerDescriptor) -> Size:
    """Recompute out_size from in_size and geometry (shape oracle entry point)."""
    if layer.category is LayerCategory.CONV:
        h, w = _spatial_out(layer.in_size, layer.kernel, layer.stride,
                            layer.padding, layer.dilation)
        return (layer.out_size[0], h, w)
    if layer.category is LayerCategory.POOL:
        h, w = _spatial_out(layer.in_size, layer.kernel, layer.stride,
                            layer.padding, layer.dilation)
        return (layer.in_size[0], h, w)
    if layer.category is LayerCategory.FC:
        return layer.out_size
    return layer.in_size


# --- factories ---------------------------------------------------------------


def conv_layer(id: int, in_size: Size, out_channels: int, kernel, stride=(1, 1),
               padding=(0, 0, 0, 0), dilation=1, groups=1, bias=False) -> LayerDescriptor:
    h, w = _spatial_out(in_size, kernel, stride, padding, dilation)
    return LayerDescriptor(
        category=LayerCategory.CONV, id=id, in_size=in_size,
        out_size=(out_channels, h, w), kernel=tuple(kernel), stride=tuple(stride),
        padding=tuple(padding), dilation=dilation, groups=groups, bias_used=bias)


def pool_layer(id: int, in_size: Size, pool_type: PoolType, kernel, stride,
               padding=(0, 0, 0, 0), dilation=1) -> LayerDescriptor:
    h, w = _spatial_out(in_size, kernel, stride, padding, dilation)
    return LayerDescriptor(
        category=LayerCategory.POOL, id=id, in_size=in_size,
        out_size=(in_size[0], h, w), kernel=tuple(kernel), stride=tuple(stride),
        padding=tuple(padding), dilation=dilation, bias_used=False,
        pool_type=PoolType(pool_type))


def fc_layer(id: int, in_size: Size, out_features: int) -> LayerDescriptor:
    return LayerDescriptor(category=LayerCategory.FC, id=id, in_size=in_size,
                           out_size=(out_features, 1, 1))


def other_layer(id: int, in_size: Size, name: str, value=()) -> LayerDescriptor:
    return LayerDescriptor(category=LayerCategory.OTHER, id=id, in_size=in_size,
                           out_size=in_size, name=name, value=tuple(value))


# --- blocks and architectures -------------------------------------------------


@dataclass(frozen=True)
class Block:
    kind: BlockKind
    layers: tuple[LayerDescriptor, ...]
    width_param: int

    def __post_init__(self):
        if not self.layers:
            raise EncodingError("block requires at least one layer")
        if self.width_param < 1:
            raise EncodingError("width_param must be positive")
        for i in range(len(self.layers) - 1):
            if self.layers[i].out_size != self.layers[i + 1].in_size:
                raise ShapeError(
                    f"block {self.kind.value}: layer {i} out {self.layers[i].out_size} "
                    f"!= layer {i+1} in {self.layers[i+1].in_size}", index=i)

    @property
    def in_size(self) -> Size:
        return self.layers[0].in_size

    @property
    def out_size(self) -> Size:
        return self.layers[-1].out_size


@dataclass(frozen=True)
class Architecture:
    blocks: tuple[Block, ...]
    head: LayerDescriptor
    input_shape: Size
    num_classes: int

    @property
    def depth(self) -> int:
        return len(self.blocks)


DEFAULT_DEPTH_BOUNDS = (10, 20)


def iter_block_layers(arch: Architecture) -> Iterator[LayerDescriptor]:
    for block in arch.blocks:
        yield from block.layers


def validate_architecture(arch: Architecture, depth_bounds=DEFAULT_DEPTH_BOUNDS) -> None:
    """Full structural validation; raises ShapeError/EncodingError on violation.

    depth_bounds=None skips the depth check (benchmark-ingested corpora carry
    macro-skeleton depths outside the search bounds).
    """
    if not arch.blocks:
        raise EncodingError("architecture has no blocks")
    if depth_bounds is not None:
        lo, hi = depth_bounds
        if not lo <= len(arch.blocks) <= hi:
            raise EncodingError(
                f"depth {len(arch.blocks)} outside [{lo}, {hi}]")
    cur = arch.input_shape
    for i, layer in enumerate(iter_block_layers(arch)):
        if layer.in_size != cur:
            raise ShapeError(
                f"layer {i} expects in_size {layer.in_size}, chained shape is {cur}",
                index=i)
        inferred = infer_out_size(layer)
        if inferred != layer.out_size:
            raise ShapeError(
                f"layer {i} declares out_size {layer.out_size}, geometry gives {inferred}",
                index=i)
        cur = layer.out_size
    flat = cur[0] * cur[1] * cur[2]
    if arch.head.category is not LayerCategory.FC:
        raise EncodingError("head must be an FC layer")
    if arch.head.in_size != (flat, 1, 1):
        raise ShapeError(
            f"head in_size {arch.head.in_size} != flattened features ({flat}, 1, 1)")
    if arch.head.out_size != (arch.num_classes, 1, 1):
        raise ShapeError(
            f"head out_size {arch.head.out_size} != ({arch.num_classes}, 1, 1)")


def make_head(id: int, last_out: Size, num_classes: int) -> LayerDescriptor:
    flat = last_out[0] * last_out[1] * last_out[2]
    return fc_layer(id, (flat, 1, 1), num_classes)


def renumber_layers(blocks: Sequence[Block]) -> tuple[Block, ...]:
    """Reassign layer ids to global position order."""
    out = []
    n = 0
    for block in blocks:
        layers = []
        for layer in block.layers:
            layers.append(layer if layer.id == n else replace(layer, id=n))
            n += 1
        out.append(Block(kind=block.kind, layers=tuple(layers),
                         width_param=block.width_param))
    return tuple(out)


def assemble(blocks: Sequence[Block], input_shape: Size, num_classes: int) -> Architecture:
    """Renumber ids, attach a fresh head, and return the architecture."""
    blocks = renumber_layers(blocks)
    total = sum(len(b.layers) for b in blocks)
    head = make_head(total, blocks[-1].out_size, num_classes)
    return Architecture(blocks=blocks, head=head, input_shape=input_shape,
                        num_classes=num_classes)


# --- canonical keys -----------------------------------------------------------

CanonicalKey = str


def _size_str(size: Size, mode: str) -> str:
    if mode == "channels_only":
        return str(size[0])
    return f"{size[0]}x{size[1]}x{size[2]}"


def canonical_key(layer: LayerDescriptor, canonicalization: str = "full") -> CanonicalKey:
    """Position-independent key: all category-relevant fields except `id`."""
    if canonicalization not in CANONICALIZATION_MODES:
        raise EncodingError(f"unknown canonicalization {canonicalization!r}")
    i = _size_str(layer.in_size, canonicalization)
    o = _size_str(layer.out_size, canonicalization)
    cat = layer.category
    if cat is LayerCategory.CONV:
        return (f"conv|i={i}|o={o}|k={layer.kernel[0]}x{layer.kernel[1]}"
                f"|s={layer.stride[0]}x{layer.stride[1]}"
                f"|p={','.join(map(str, layer.padding))}"
                f"|d={layer.dilation}|g={layer.groups}|b={int(layer.bias_used)}")
    if cat is LayerCategory.POOL:
        return (f"pool({layer.pool_type.value})|i={i}|o={o}"
                f"|k={layer.kernel[0]}x{layer.kernel[1]}"
                f"|s={layer.stride[0]}x{layer.stride[1]}"
                f"|p={','.join(map(str, layer.padding))}"
                f"|d={layer.dilation}|b={int(layer.bias_used)}")
    if cat is LayerCategory.FC:
        return f"fc|i={i}|o={o}"
    vals = ",".join(repr(float(v)) for v in layer.value)
    return f"other({layer.name})|i={i}|o={o}|v={vals}"


def _parse_size(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split("x"))


def parse_canonical_key(key: CanonicalKey) -> dict:
    """Invert canonical_key into a field dict (geometry + channel info)."""
    try:
        parts = key.split("|")
        headpart = parts[0]
        fields = dict(p.split("=", 1) for p in parts[1:])
        out: dict = {"in": _parse_size(fields["i"]), "out": _parse_size(fields["o"])}
        if headpart == "conv" or headpart.startswith("pool("):
            out["kernel"] = _parse_size(fields["k"])
            out["stride"] = _parse_size(fields["s"])
            out["padding"] = tuple(int(v) for v in fields["p"].split(","))
            out["dilation"] = int(fields["d"])
            out["bias"] = bool(int(fields["b"]))
        if headpart == "conv":
            out["category"] = LayerCategory.CONV
            out["groups"] = int(fields["g"])
        elif headpart.startswith("pool("):
            out["category"] = LayerCategory.POOL
            out["pool_type"] = PoolType(headpart[5:-1])
        elif headpart == "fc":
            out["category"] = LayerCategory.FC
        elif headpart.startswith("other("):
            out["category"] = LayerCategory.OTHER
            out["name"] = headpart[6:-1]
            out["value"] = tuple(float(v) for v in fields["v"].split(",")) if fields["v"] else ()
        else:
            raise ValueError(headpart)
        return out
    except (KeyError, ValueError, IndexError) as exc:
        raise EncodingError(f"unparseable canonical key {key!r}: {exc}") from exc


def arch_hash(arch: Architecture, canonicalization: str = "full") -> str:
    """Content hash over the canonical key sequence plus head/io metadata."""
    h = hashlib.sha256()
    for layer in iter_block_layers(arch):
        h.update(canonical_key(layer, canonicalization).encode())
        h.update(b"\n")
    h.update(canonical_key(arch.head, canonicalization).encode())
    h.update(f"|{arch.input_shape}|{arch.num_classes}".encode())
    return h.hexdigest()


def param_count_estimate(arch: Architecture) -> int:
    """Weight-count estimate from layer metadata (no tensors involved)."""
    total = 0
    for layer in list(iter_block_layers(arch)) + [arch.head]:
        if layer.category is LayerCategory.CONV:
            cin, cout = layer.in_size[0], layer.out_size[0]
            kh, kw = layer.kernel
            total += (cin // layer.groups) * kh * kw * cout
            if layer.bias_used:
                total += cout
        elif layer.category is LayerCategory.FC:
            total += layer.in_size[0] * layer.out_size[0] + layer.out_size[0]
        elif layer.category is LayerCategory.OTHER and layer.name == "batchnorm":
            total += 2 * layer.in_size[0]
    return total


# --- vocabulary ----------------------------------------------------------------

SPECIAL_TOKENS = ("PAD", "BOS", "EOS", "SEP")


class Vocabulary:
    """Bijective canonical-key <-> token-id map with reserved special tokens.

    Layer tokens occupy [0, V); the four specials sit at [V, V+4) and are
    stable once the vocabulary is frozen.  Encoding an unseen key grows the
    map in build mode and raises UnknownLayerError once frozen.
    """

    def __init__(self, canonicalization: str = "full"):
        if canonicalization not in CANONICALIZATION_MODES:
            raise EncodingError(f"unknown canonicalization {canonicalization!r}")
        self.canonicalization = canonicalization
        self._keys: list[CanonicalKey] = []
        self._ids: dict[CanonicalKey, int] = {}
        self._frozen = False

    @property
    def size(self) -> int:
        return len(self._keys)

    @property
    def frozen(self) -> bool:
        return self._frozen

    @property
    def total_tokens(self) -> int:
        return self.size + len(SPECIAL_TOKENS)

    @property
    def pad_id(self) -> int:
        return self.size

    @property
    def bos_id(self) -> int:
        return self.size + 1

    @property
    def eos_id(self) -> int:
        return self.size + 2

    @property
    def sep_id(self) -> int:
        return self.size + 3

    def freeze(self) -> "Vocabulary":
        self._frozen = True
        return self

    def encode_key(self, key: CanonicalKey) -> int:
        tok = self._ids.get(key)
        if tok is not None:
            return tok
        if self._frozen:
            raise UnknownLayerError(f"key not in frozen vocabulary: {key}")
        tok = len(self._keys)
        self._keys.append(key)
        self._ids[key] = tok
        return tok

    def encode_layer(self, layer: LayerDescriptor) -> int:
        return self.encode_key(canonical_key(layer, self.canonicalization))

    def decode_id(self, token: int) -> CanonicalKey:
        if 0 <= token < self.size:
            return self._keys[token]
        raise VocabError(f"token {token} is not a layer token (V={self.size})")

    def vocab_hash(self) -> str:
        h = hashlib.sha256()
        h.update(self.canonicalization.encode())
        for key in self._keys:
            h.update(b"\n")
            h.update(key.encode())
        return h.hexdigest()

    def to_json(self) -> str:
        return json.dumps({"canonicalization": self.canonicalization,
                           "keys": self._keys, "frozen": self._frozen})

    @classmethod
    def from_json(cls, text: str) -> "Vocabulary":
        data = json.loads(text)
        vocab = cls(data["canonicalization"])
        for key in data["keys"]:
            vocab.encode_key(key)
        if data.get("frozen"):
            vocab.freeze()
        return vocab


@dataclass(frozen=True)
class TokenSequence:
    tokens: tuple[int, ...]
    boundaries: tuple[int, ...]

    def __post_init__(self):
        if self.tokens and (not self.boundaries or self.boundaries[0] != 0):
            raise EncodingError("first boundary must be 0")
        for a, b in zip(self.boundaries, self.boundaries[1:]):
            if b <= a:
                raise EncodingError("boundaries must be strictly increasing")
        if self.boundaries and self.boundaries[-1] >= max(len(self.tokens), 1):
            raise EncodingError("boundary beyond sequence end")


def encode_architecture(arch: Architecture, vocab: Vocabulary) -> TokenSequence:
    """Tokenize block layers in order; boundaries mark block starts."""
    if not arch.blocks:
        raise EncodingError("cannot encode an architecture with no blocks")
    tokens: list[int] = []
    boundaries: list[int] = []
    for block in arch.blocks:
        boundaries.append(len(tokens))
        for layer in block.layers:
            tokens.append(vocab.encode_layer(layer))
    return TokenSequence(tokens=tuple(tokens), boundaries=tuple(boundaries))


def _layer_from_key_fields(idx: int, fields: dict, cur: Size) -> LayerDescriptor:
    cat = fields["category"]
    in_ch = fields["in"][0]
    if in_ch != cur[0]:
        raise ShapeError(
            f"layer {idx} expects {in_ch} input channels, chained shape has {cur[0]}",
            index=idx)
    if len(fields["in"]) == 3 and tuple(fields["in"]) != cur:
        raise ShapeError(
            f"layer {idx} expects in_size {tuple(fields['in'])}, chained shape is {cur}",
            index=idx)
    try:
        if cat is LayerCategory.CONV:
            return conv_layer(idx, cur, fields["out"][0], fields["kernel"],
                              fields["stride"], fields["padding"], fields["dilation"],
                              fields["groups"], fields["bias"])
        if cat is LayerCategory.POOL:
            return pool_layer(idx, cur, fields["pool_type"], fields["kernel"],
                              fields["stride"], fields["padding"], fields["dilation"])
        if cat is LayerCategory.FC:
            return fc_layer(idx, cur, fields["out"][0])
        return other_layer(idx, cur, fields["name"], fields["value"])
    except ShapeError as exc:
        raise ShapeError(f"layer {idx}: {exc}", index=idx) from exc


def _recover_kind(layers: Sequence[LayerDescriptor], lib) -> tuple[BlockKind, int]:
    """Match a decoded layer run back to a library kind plus width."""
    first = layers[0]
    changes_channels = layers[-1].out_size[0] != first.in_size[0]
    width = layers[-1].out_size[0] if changes_channels else first.in_size[0]
    if lib is not None:
        keys = [canonical_key(l) for l in layers]
        exact = lib.match_layers(keys, first.in_size, width)
        if exact is not None:
            return exact, width
    # category-level fallback for sequences not produced by the library
    if len(layers) == 1:
        if first.category is LayerCategory.CONV:
            return BlockKind.CONV, width
        if first.category is LayerCategory.POOL:
            return (BlockKind.MAXPOOL if first.pool_type is PoolType.MAX
                    else BlockKind.AVGPOOL), width
        if first.category is LayerCategory.OTHER:
            if first.name == "batchnorm":
                return BlockKind.BATCH_NORM, width
            if first.name == "relu":
                return BlockKind.RELU, width
    raise EncodingError(
        f"cannot attribute a block kind to layer run of categories "
        f"{[l.category.value for l in layers]}")


def decode_architecture(seq: TokenSequence, vocab: Vocabulary, input_shape: Size,
                        num_classes: int, lib=None,
                        depth_bounds=DEFAULT_DEPTH_BOUNDS) -> Architecture:
    """Rebuild an Architecture from tokens; spatial sizes re-derived by chaining."""
    if not seq.tokens:
        raise EncodingError("cannot decode an empty token sequence")
    layers: list[LayerDescriptor] = []
    cur = input_shape
    for idx, token in enumerate(seq.tokens):
        try:
            key = vocab.decode_id(token)
        except VocabError as exc:
            raise EncodingError(f"layer token expected at {idx}: {exc}") from exc
        fields = parse_canonical_key(key)
        layer = _layer_from_key_fields(idx, fields, cur)
        if len(fields["out"]) == 3 and tuple(fields["out"]) != layer.out_size:
            raise ShapeError(
                f"layer {idx} key declares out {tuple(fields['out'])}, "
                f"geometry gives {layer.out_size}", index=idx)
        layers.append(layer)
        cur = layer.out_size
    if lib is None:
        from .corpus import BlockLibrary
        lib = BlockLibrary.default()
    blocks = []
    bounds = list(seq.boundaries) + [len(seq.tokens)]
    for start, end in zip(bounds, bounds[1:]):
        run = layers[start:end]
        kind, width = _recover_kind(run, lib)
        blocks.append(Block(kind=kind, layers=tuple(run), width_param=width))
    arch = assemble(tuple(blocks), input_shape, num_classes)
    validate_architecture(arch, depth_bounds=depth_bounds)
    return arch
