"""Corpus machinery: the 15-kind block library, architecture generators,
benchmark-format ingestion, file serialization, and windowed training pairs.
"""

from __future__ import annotations

import functools
import heapq
import json
import random
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional, Sequence

from . import arch as A
from .arch import BlockKind, LayerCategory, PoolType
from .errors import ConfigError, EncodingError, GraphError, ParseError, ShapeError

#: Kinds whose blocks keep the incoming channel count; their width_param is
#: defined as the input channels and the width palette does not apply.
PRESERVE_KINDS = frozenset({
    BlockKind.SQUEEZE_EXCITATION, BlockKind.AVGPOOL, BlockKind.MAXPOOL,
    BlockKind.BATCH_NORM, BlockKind.RELU,
})

DEFAULT_WIDTH_PALETTE = (32,)
DEFAULT_INPUT_SHAPE = (3, 32, 32)
DEFAULT_NUM_CLASSES = 10


class _Seq:
    """Sequential layer builder tracking the running shape within a block."""

    def __init__(self, in_size):
        self.cur = in_size
        self.layers = []

    def _push(self, layer):
        self.layers.append(layer)
        self.cur = layer.out_size

    def conv(self, out_ch, k, s=1, groups=1, bias=False):
        p = (k - 1) // 2  # same-size padding for odd kernels at stride 1
        self._push(A.conv_layer(len(self.layers), self.cur, out_ch,
                                kernel=(k, k), stride=(s, s), padding=(p, p, p, p),
                                groups=groups, bias=bias))
        return self

    def pool(self, pool_type):
        # halving window; falls back to a unit window once an axis hits 1
        k = 2 if min(self.cur[1], self.cur[2]) >= 2 else 1
        self._push(A.pool_layer(len(self.layers), self.cur, pool_type,
                                kernel=(k, k), stride=(k, k)))
        return self

    def op(self, name):
        self._push(A.other_layer(len(self.layers), self.cur, name))
        return self


def _grp(ch):
    return 4 if ch % 4 == 0 else 1


def _t_conv_norm_act(s, c, w):
    s.conv(w, 5).op("batchnorm").op("relu")


def _t_squeeze_excitation(s, c, w):
    mid = max(c // 4, 1)
    s.conv(mid, 1, bias=True).op("relu").conv(c, 1, bias=True).op("sigmoid")


def _t_inception(s, c, w):
    # parallel branches flattened widest-kernel first; keeps the opening
    # layer distinguishable from the 1x1 reduction kinds at any state
    s.conv(w, 5, bias=True).conv(w, 3, bias=True).conv(w, 1, bias=True).op("relu")


def _t_avgpool(s, c, w):
    s.pool(PoolType.AVG)


def _t_res_bottleneck(s, c, w):
    s.conv(w, 1).op("batchnorm").op("relu")
    s.conv(w, 3, groups=_grp(w)).op("batchnorm").op("relu")
    s.conv(w, 1).op("batchnorm")


def _t_stem(s, c, w):
    s.conv(w, 3, s=2).op("batchnorm").op("relu")


def _t_bottleneck_resnet(s, c, w):
    mid = max(w // 4, 1)
    s.conv(mid, 1).op("batchnorm").op("relu")
    s.conv(mid, 3).op("batchnorm").op("relu")
    s.conv(w, 1).op("batchnorm")


def _t_basicblock(s, c, w):
    s.conv(w, 3).op("batchnorm").op("relu").conv(w, 3).op("batchnorm")


def _t_bottleneck_resnext(s, c, w):
    mid = max(w // 2, 1)
    s.conv(mid, 1, bias=True).op("batchnorm").op("relu")
    s.conv(mid, 3, groups=_grp(mid)).op("batchnorm").op("relu")
    s.conv(w, 1, bias=True).op("batchnorm")


def _t_inverted_residual(s, c, w):
    expanded = 2 * w
    s.conv(expanded, 1).op("batchnorm").op("relu")
    s.conv(expanded, 3, groups=expanded).op("batchnorm").op("relu")  # depthwise
    s.conv(w, 1).op("batchnorm")


def _t_bottleneck_wide(s, c, w):
    expanded = 2 * w
    s.conv(expanded, 3).op("batchnorm").op("relu").conv(w, 3).op("batchnorm")


def _t_maxpool(s, c, w):
    s.pool(PoolType.MAX)


def _t_batch_norm(s, c, w):
    s.op("batchnorm")


def _t_relu(s, c, w):
    s.op("relu")


def _t_conv(s, c, w):
    s.conv(w, 3, bias=True)


@dataclass(frozen=True)
class LibraryEntry:
    kind: BlockKind
    source_tag: str
    builder: Callable


_DEFAULT_ENTRIES = (
    (BlockKind.CONV_NORM_ACT, "efficientnet", _t_conv_norm_act),
    (BlockKind.SQUEEZE_EXCITATION, "efficientnet", _t_squeeze_excitation),
    (BlockKind.INCEPTION, "googlenet", _t_inception),
    (BlockKind.AVGPOOL, "googlenet", _t_avgpool),
    (BlockKind.RES_BOTTLENECK, "regnet", _t_res_bottleneck),
    (BlockKind.STEM, "regnet", _t_stem),
    (BlockKind.BOTTLENECK_RESNET, "resnet", _t_bottleneck_resnet),
    (BlockKind.BASICBLOCK, "resnet", _t_basicblock),
    (BlockKind.BOTTLENECK_RESNEXT, "resnext", _t_bottleneck_resnext),
    (BlockKind.INVERTED_RESIDUAL, "shufflenet", _t_inverted_residual),
    (BlockKind.BOTTLENECK_WIDE, "wide_resnet", _t_bottleneck_wide),
    (BlockKind.MAXPOOL, "other", _t_maxpool),
    (BlockKind.BATCH_NORM, "other", _t_batch_norm),
    (BlockKind.RELU, "other", _t_relu),
    (BlockKind.CONV, "other", _t_conv),
)


_DEFAULT_LIB = None


@dataclass(frozen=True)
class BlockLibrary:
    """The fixed block vocabulary; entry order is the label order everywhere."""

    entries: tuple[LibraryEntry, ...]

    @classmethod
    def default(cls) -> "BlockLibrary":
        global _DEFAULT_LIB
        if _DEFAULT_LIB is None:
            _DEFAULT_LIB = cls(entries=tuple(
                LibraryEntry(k, t, b) for k, t, b in _DEFAULT_ENTRIES))
        return _DEFAULT_LIB

    @property
    def kinds(self) -> tuple[BlockKind, ...]:
        return tuple(e.kind for e in self.entries)

    def entry(self, kind: BlockKind) -> LibraryEntry:
        for e in self.entries:
            if e.kind == kind:
                return e
        raise EncodingError(f"kind {kind!r} not in library")

    def label_index(self, kind: BlockKind) -> int:
        for i, e in enumerate(self.entries):
            if e.kind == kind:
                return i
        raise EncodingError(f"kind {kind!r} not in library")

    def match_layers(self, keys: Sequence[str], in_size, width) -> Optional[BlockKind]:
        """Return the kind whose template reproduces `keys` at this state."""
        keys = tuple(keys)
        for e in self.entries:
            try:
                _, expect = _instantiate_cached(self, e.kind, tuple(in_size), width)
            except ShapeError:
                continue
            if expect == keys:
                return e.kind
        return None


@functools.lru_cache(maxsize=8192)
def _instantiate_cached(lib, kind, in_size, width):
    eff = in_size[0] if kind in PRESERVE_KINDS else width
    seq = _Seq(in_size)
    lib.entry(kind).builder(seq, in_size[0], eff)
    block = A.Block(kind=kind, layers=tuple(seq.layers), width_param=eff)
    keys = tuple(A.canonical_key(l) for l in block.layers)
    return block, keys


def instantiate_block(lib: BlockLibrary, kind: BlockKind, in_size, width: int) -> A.Block:
    """Materialize a library template at a concrete state.

    Width is taken from the palette for channel-changing kinds and pinned to
    the input channel count for the preserve kinds.  Layer ids are local to
    the block; `arch.assemble` renumbers them.
    """
    if width < 1:
        raise EncodingError("width must be positive")
    block, _ = _instantiate_cached(lib, kind, tuple(in_size), width)
    return block


def first_layer_key(lib: BlockLibrary, kind: BlockKind, in_size, width: int) -> str:
    _, keys = _instantiate_cached(lib, kind, tuple(in_size), width)
    return keys[0]


# --- corpus records -------------------------------------------------------------


class Source(str, Enum):
    NASBENCH = "nasbench"
    FINETUNE_LIBRARY = "finetune_library"
    SYNTHETIC = "synthetic"


@dataclass(frozen=True)
class CorpusRecord:
    arch: A.Architecture
    fitness: Optional[float]
    source: Source

    def __post_init__(self):
        if self.fitness is not None and not 0.0 <= self.fitness <= 1.0:
            raise EncodingError(f"fitness {self.fitness} outside [0, 1]")


@dataclass(frozen=True)
class TrainingPair:
    context: tuple[int, ...]
    target: int


def kind_sequence(arch: A.Architecture) -> tuple[BlockKind, ...]:
    return tuple(b.kind for b in arch.blocks)


# --- generators ----------------------------------------------------------------


def _pick_width(rng, kind, cur, width_palette):
    if kind in PRESERVE_KINDS:
        return cur[0]
    return width_palette[rng.randrange(len(width_palette))]


def sample_architecture(rng: random.Random, lib: BlockLibrary,
                        input_shape=DEFAULT_INPUT_SHAPE,
                        num_classes=DEFAULT_NUM_CLASSES,
                        depth_bounds=A.DEFAULT_DEPTH_BOUNDS,
                        width_palette=DEFAULT_WIDTH_PALETTE) -> A.Architecture:
    """Uniform random block composition; always shape-valid by construction."""
    depth = rng.randint(depth_bounds[0], depth_bounds[1])
    blocks = []
    cur = input_shape
    for _ in range(depth):
        kind = lib.kinds[rng.randrange(len(lib.kinds))]
        width = _pick_width(rng, kind, cur, width_palette)
        block = instantiate_block(lib, kind, cur, width)
        blocks.append(block)
        cur = block.out_size
    return A.assemble(tuple(blocks), input_shape, num_classes)


def build_finetune_corpus(lib: BlockLibrary, count: int, rng_seed: int,
                          input_shape=DEFAULT_INPUT_SHAPE,
                          num_classes=DEFAULT_NUM_CLASSES,
                          depth_bounds=A.DEFAULT_DEPTH_BOUNDS,
                          width_palette=DEFAULT_WIDTH_PALETTE) -> list[CorpusRecord]:
    rng = random.Random(rng_seed)
    return [
        CorpusRecord(
            arch=sample_architecture(rng, lib, input_shape, num_classes,
                                     depth_bounds, width_palette),
            fitness=None, source=Source.FINETUNE_LIBRARY)
        for _ in range(count)
    ]


def _draw(rng: random.Random, probs: Sequence[float]) -> int:
    r = rng.random()
    acc = 0.0
    for i, p in enumerate(probs):
        acc += p
        if r < acc:
            return i
    return len(probs) - 1  # float round-off fallthrough


def generate_teacher_corpus(teacher, n_archs: int, rng_seed: int,
                            input_shape=DEFAULT_INPUT_SHAPE,
                            num_classes=DEFAULT_NUM_CLASSES,
                            depth_bounds=A.DEFAULT_DEPTH_BOUNDS,
                            width_palette=DEFAULT_WIDTH_PALETTE,
                            lib: Optional[BlockLibrary] = None) -> list[CorpusRecord]:
    """Sample block-kind chains from an order-1 teacher and materialize them."""
    if lib is None:
        lib = BlockLibrary.default()
    for row in teacher.transitions:
        if abs(sum(row) - 1.0) > 1e-9 or any(p < 0 for p in row):
            raise ConfigError("teacher transition matrix is not row-stochastic")
    if abs(sum(teacher.initial) - 1.0) > 1e-9 or any(p < 0 for p in teacher.initial):
        raise ConfigError("teacher initial distribution is not stochastic")
    rng = random.Random(rng_seed)
    records = []
    for _ in range(n_archs):
        depth = rng.randint(depth_bounds[0], depth_bounds[1])
        idx = _draw(rng, teacher.initial)
        blocks = []
        cur = input_shape
        for _ in range(depth):
            kind = teacher.kinds[idx]
            width = _pick_width(rng, kind, cur, width_palette)
            block = instantiate_block(lib, kind, cur, width)
            blocks.append(block)
            cur = block.out_size
            idx = _draw(rng, teacher.transitions[idx])
        arch = A.assemble(tuple(blocks), input_shape, num_classes)
        records.append(CorpusRecord(arch=arch, fitness=None, source=Source.SYNTHETIC))
    return records


# --- windowed training pairs ------------------------------------------------------


def make_training_pairs(records: Sequence[CorpusRecord], vocab: A.Vocabulary,
                        k: int = 10, stride: int = 1) -> list[TrainingPair]:
    """One pair per (strided) token position; contexts left-padded to k."""
    if k < 1 or stride < 1:
        raise ConfigError("window size and stride must be positive")
    pairs = []
    for rec in records:
        tokens = A.encode_architecture(rec.arch, vocab).tokens
        for t in range(0, len(tokens), stride):
            ctx = tokens[max(0, t - k):t]
            pairs.append(TrainingPair(
                context=(vocab.pad_id,) * (k - len(ctx)) + ctx,
                target=tokens[t]))
    return pairs


# --- vocabulary closure ------------------------------------------------------------


def extend_vocab_closure(vocab: A.Vocabulary, lib: BlockLibrary,
                         input_shape=DEFAULT_INPUT_SHAPE,
                         width_palette=DEFAULT_WIDTH_PALETTE) -> int:
    """Add every layer key reachable from input_shape under the palette.

    Search-time reconstruction may visit states the training corpus never
    sampled; closing the vocabulary over the reachable state space keeps
    encode total.  Returns the number of keys added.
    """
    before = vocab.size
    seen = set()
    frontier = [tuple(input_shape)]
    while frontier:
        cur = frontier.pop()
        if cur in seen:
            continue
        seen.add(cur)
        for kind in lib.kinds:
            widths = (cur[0],) if kind in PRESERVE_KINDS else tuple(width_palette)
            for width in widths:
                block = instantiate_block(lib, kind, cur, width)
                for layer in block.layers:
                    vocab.encode_key(A.canonical_key(layer, vocab.canonicalization))
                nxt = tuple(block.out_size)
                if nxt not in seen:
                    frontier.append(nxt)
    return vocab.size - before


# --- corpus files -------------------------------------------------------------------


def _layer_to_dict(layer: A.LayerDescriptor) -> dict:
    d = {"category": layer.category.value, "id": layer.id,
         "in": list(layer.in_size), "out": list(layer.out_size)}
    if layer.category in (LayerCategory.CONV, LayerCategory.POOL):
        d.update(kernel=list(layer.kernel), stride=list(layer.stride),
                 padding=list(layer.padding), dilation=layer.dilation,
                 bias_used=layer.bias_used)
    if layer.category is LayerCategory.CONV:
        d["groups"] = layer.groups
    if layer.category is LayerCategory.POOL:
        d["pool_type"] = layer.pool_type.value
    if layer.category is LayerCategory.OTHER:
        d.update(name=layer.name, value=list(layer.value))
    return d


def _layer_from_dict(d: dict) -> A.LayerDescriptor:
    cat = LayerCategory(d["category"])
    kw = dict(category=cat, id=d["id"], in_size=tuple(d["in"]), out_size=tuple(d["out"]))
    if cat in (LayerCategory.CONV, LayerCategory.POOL):
        kw.update(kernel=tuple(d["kernel"]), stride=tuple(d["stride"]),
                  padding=tuple(d["padding"]), dilation=d["dilation"],
                  bias_used=d["bias_used"])
    if cat is LayerCategory.CONV:
        kw["groups"] = d["groups"]
    if cat is LayerCategory.POOL:
        kw["pool_type"] = PoolType(d["pool_type"])
    if cat is LayerCategory.OTHER:
        kw.update(name=d["name"], value=tuple(d["value"]))
    return A.LayerDescriptor(**kw)


def arch_to_dict(arch: A.Architecture) -> dict:
    """Wire/file form of an architecture; the schema external workers parse."""
    return {"input_shape": list(arch.input_shape),
            "num_classes": arch.num_classes,
            "blocks": [{"kind": b.kind.value, "width": b.width_param,
                        "layers": [_layer_to_dict(l) for l in b.layers]}
                       for b in arch.blocks]}


def arch_from_dict(d: dict) -> A.Architecture:
    blocks = tuple(
        A.Block(kind=BlockKind(b["kind"]),
                layers=tuple(_layer_from_dict(l) for l in b["layers"]),
                width_param=b["width"])
        for b in d["blocks"])
    return A.assemble(blocks, tuple(d["input_shape"]), d["num_classes"])


def record_to_dict(rec: CorpusRecord, rec_id: int) -> dict:
    d = {"id": rec_id, "source": rec.source.value, **arch_to_dict(rec.arch)}
    if rec.fitness is not None:
        d["fitness"] = rec.fitness
    return d


def record_from_dict(d: dict) -> CorpusRecord:
    return CorpusRecord(arch=arch_from_dict(d), fitness=d.get("fitness"),
                        source=Source(d["source"]))


def save_corpus(records: Sequence[CorpusRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for i, rec in enumerate(records):
            fh.write(json.dumps(record_to_dict(rec, i)) + "\n")


def load_corpus(path) -> list[CorpusRecord]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for n, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                records.append(record_from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError,
                    EncodingError, ShapeError) as exc:
                raise ParseError(f"corpus line {n}: {exc}", line=n) from exc
    return records


# --- benchmark-format ingestion ------------------------------------------------------

_NB_OPS = ("conv3x3-bn-relu", "conv1x1-bn-relu", "maxpool3x3")
_NB_MAX_VERTICES = 7
_NB_MAX_EDGES = 9
_NB_STACKS = 3
_NB_CELLS_PER_STACK = 3


def _nb_toposort(adj: list[list[int]], n: int) -> list[int]:
    indeg = [sum(adj[i][j] for i in range(n)) for j in range(n)]
    ready = [v for v in range(n) if indeg[v] == 0]
    heapq.heapify(ready)  # min vertex index first: deterministic tie-break
    order = []
    while ready:
        v = heapq.heappop(ready)
        order.append(v)
        for w in range(n):
            if adj[v][w]:
                indeg[w] -= 1
                if indeg[w] == 0:
                    heapq.heappush(ready, w)
    if len(order) != n:
        raise GraphError("cell graph contains a cycle")
    return order


def _nb_parse_line(d: dict) -> tuple[list[str], list[list[int]], float]:
    ops = d["ops"]
    flat = d["adjacency"]
    acc = float(d["val_accuracy"])
    n = len(ops)
    if n < 2 or n > _NB_MAX_VERTICES:
        raise ValueError(f"vertex count {n} outside [2, {_NB_MAX_VERTICES}]")
    if len(flat) != n * n:
        raise ValueError(f"adjacency length {len(flat)} != {n}*{n}")
    if any(v not in (0, 1) for v in flat):
        raise ValueError("adjacency entries must be 0/1")
    if sum(flat) > _NB_MAX_EDGES:
        raise ValueError(f"edge count {sum(flat)} exceeds {_NB_MAX_EDGES}")
    if ops[0] != "input" or ops[-1] != "output":
        raise ValueError("ops must start with 'input' and end with 'output'")
    for op in ops[1:-1]:
        if op not in _NB_OPS:
            raise ValueError(f"unknown op {op!r}")
    if not 0.0 <= acc <= 1.0:
        raise ValueError(f"val_accuracy {acc} outside [0, 1]")
    adj = [flat[i * n:(i + 1) * n] for i in range(n)]
    return ops, adj, acc


def _nb_vertex_block(op: str, cur, out_ch: int) -> A.Block:
    if op == "maxpool3x3":
        k = 3 if min(cur[1], cur[2]) >= 3 else 1
        layer = A.pool_layer(0, cur, PoolType.MAX, kernel=(k, k), stride=(1, 1))
        return A.Block(kind=BlockKind.MAXPOOL, layers=(layer,), width_param=cur[0])
    k = 3 if op == "conv3x3-bn-relu" else 1
    p = (k - 1) // 2
    layer = A.conv_layer(0, cur, out_ch, kernel=(k, k), stride=(1, 1),
                         padding=(p, p, p, p), bias=True)
    return A.Block(kind=BlockKind.CONV, layers=(layer,), width_param=out_ch)


def _nb_assemble(ops, adj, base_channels, input_shape, num_classes) -> A.Architecture:
    """Stack the flattened cell through the fixed macro skeleton.

    Skeleton: one stem conv, then 3 stacks of 3 cells with a halving maxpool
    between stacks; channels double at the first conv vertex of each new
    stack.  Each interior cell vertex contributes exactly one layer, ordered
    by deterministic topological sort (ties broken by vertex index).
    """
    n = len(ops)
    order = _nb_toposort(adj, n)
    interior = [v for v in order if 0 < v < n - 1]
    lib = BlockLibrary.default()
    blocks = []
    cur = input_shape
    stem = instantiate_block(lib, BlockKind.CONV, cur, base_channels)
    blocks.append(stem)
    cur = stem.out_size
    pending_double = False
    for stack in range(_NB_STACKS):
        if stack > 0:
            down = instantiate_block(lib, BlockKind.MAXPOOL, cur, cur[0])
            blocks.append(down)
            cur = down.out_size
            pending_double = True
        for _ in range(_NB_CELLS_PER_STACK):
            for v in interior:
                op = ops[v]
                if op == "maxpool3x3":
                    block = _nb_vertex_block(op, cur, cur[0])
                else:
                    out_ch = cur[0] * 2 if pending_double else cur[0]
                    block = _nb_vertex_block(op, cur, out_ch)
                    pending_double = False
                blocks.append(block)
                cur = block.out_size
    return A.assemble(tuple(blocks), input_shape, num_classes)


def load_nasbench(path, min_accuracy: float = 0.90, base_channels: int = 16,
                  input_shape=DEFAULT_INPUT_SHAPE,
                  num_classes=DEFAULT_NUM_CLASSES) -> list[CorpusRecord]:
    """Ingest line-delimited cell records and keep those at or above the
    accuracy floor, flattened through the fixed macro skeleton."""
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for ln, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                ops, adj, acc = _nb_parse_line(json.loads(line))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ParseError(f"benchmark line {ln}: {exc}", line=ln) from exc
            if acc < min_accuracy:
                continue
            arch = _nb_assemble(ops, adj, base_channels, input_shape, num_classes)
            records.append(CorpusRecord(arch=arch, fitness=acc, source=Source.NASBENCH))
    return records


def majority_baseline(pairs: Sequence[TrainingPair]) -> float:
    """Accuracy of always predicting the most frequent target token."""
    if not pairs:
        raise ConfigError("majority baseline needs a non-empty pair list")
    counts = Counter(p.target for p in pairs)
    return counts.most_common(1)[0][1] / len(pairs)
