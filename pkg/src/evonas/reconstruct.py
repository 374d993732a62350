"""Probabilistic block elimination with guided refill.

Each block of an architecture is independently dropped with the current
elimination rate; the predictor proposes a replacement layer token from the
already-rebuilt prefix, the classifier lifts it to a block kind, and the
chain is repaired left to right so the result always validates at the same
depth.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import arch as A
from .corpus import (BlockLibrary, DEFAULT_WIDTH_PALETTE, PRESERVE_KINDS,
                     instantiate_block)
from .errors import ConfigError, ShapeError
from .fcn import FcnModel, fcn_select
from .gpt import GptModel, predict_next


@dataclass(frozen=True)
class EliminationSchedule:
    """Linearly decaying elimination rate over the search iterations."""

    rate_ori: float = 0.4
    iter_max: int = 20

    def __post_init__(self):
        if not 0.0 <= self.rate_ori <= 1.0:
            raise ConfigError(f"rate_ori must be in [0, 1], got {self.rate_ori}")
        if self.iter_max < 1:
            raise ConfigError(f"iter_max must be >= 1, got {self.iter_max}")


def elimination_rate(sched: EliminationSchedule, t: int) -> float:
    """Rate at iteration t: rate_ori scaled down linearly, zero at the end."""
    if not 0 <= t <= sched.iter_max:
        raise ConfigError(
            f"iteration {t} outside [0, {sched.iter_max}]")
    return sched.rate_ori * (1.0 - t / sched.iter_max)


@dataclass(frozen=True)
class RepairAction:
    index: int
    action: str            # "rechain" | "fallback_conv"
    detail: str = ""


@dataclass(frozen=True)
class ReconstructionTrace:
    eliminated: tuple
    predicted: tuple
    kinds: tuple
    repairs: tuple = ()

    def __post_init__(self):
        if not all(a < b for a, b in
                   zip(self.eliminated, self.eliminated[1:])):
            raise ConfigError("eliminated indices must strictly increase")
        if not (len(self.eliminated) == len(self.predicted) == len(self.kinds)):
            raise ConfigError("one (token, kind) pair per eliminated index")


EMPTY_TRACE = ReconstructionTrace((), (), (), ())


def _draw_eliminations(blocks, rate: float, rng, unit: str) -> list:
    if unit == "block":
        return [bool(rng.random() < rate) for _ in blocks]
    if unit == "layer":
        # a block dies when any of its layers is drawn
        return [any(rng.random() < rate for _ in b.layers) for b in blocks]
    raise ConfigError(f"elimination_unit must be 'block' or 'layer', got {unit!r}")


def _nearest_width(palette, channels: int) -> int:
    return min(palette, key=lambda w: (abs(w - channels), w))


def _build_or_fallback(lib, kind, cur, width, index, repairs):
    """Instantiate the kind, or stand in a spatial-size-preserving conv."""
    try:
        return instantiate_block(lib, kind, cur, width), kind
    except ShapeError as exc:
        repairs.append(RepairAction(index, "fallback_conv",
                                    f"{kind.value}: {exc}"))
        block = instantiate_block(lib, A.BlockKind.CONV, cur, width)
        return block, A.BlockKind.CONV


def reconstruct(arch: A.Architecture, gpt, fcn: FcnModel, rate_t: float,
                rng: np.random.Generator, lib: Optional[BlockLibrary] = None,
                temperature: float = 1.0, elimination_unit: str = "block",
                width_palette=DEFAULT_WIDTH_PALETTE):
    """Eliminate blocks at rate_t and refill them with predicted structures.

    `gpt` is a (model, vocabulary) pair as returned by the checkpoint
    loader.  Returns (architecture, trace); depth never changes and the
    result passes full validation.  A zero rate returns the input untouched
    without consuming randomness.
    """
    if not 0.0 <= rate_t <= 1.0:
        raise ConfigError(f"elimination rate must be in [0, 1], got {rate_t}")
    try:
        model, vocab = gpt
    except (TypeError, ValueError):
        raise ConfigError("gpt must be a (model, vocabulary) pair") from None
    if not isinstance(model, GptModel):
        raise ConfigError("gpt must be a (model, vocabulary) pair")
    if lib is None:
        lib = BlockLibrary.default()
    if rate_t == 0.0:
        return arch, EMPTY_TRACE

    kill = _draw_eliminations(arch.blocks, rate_t, rng, elimination_unit)
    new_blocks = []
    ctx: list[int] = []
    eliminated, predicted, selected = [], [], []
    repairs: list[RepairAction] = []
    cur = arch.input_shape
    for i, old in enumerate(arch.blocks):
        if kill[i]:
            token = predict_next(model, ctx, temperature=temperature, rng=rng)
            kind = fcn_select(fcn, ctx, token)
            eliminated.append(i)
            predicted.append(token)
            selected.append(kind)
        else:
            kind = old.kind
        if old.kind in PRESERVE_KINDS:
            width = _nearest_width(width_palette, cur[0])
        else:
            width = old.width_param
        block, _used = _build_or_fallback(lib, kind, cur, width, i, repairs)
        if not kill[i]:
            got = tuple(A.canonical_key(l) for l in block.layers)
            want = tuple(A.canonical_key(l) for l in old.layers)
            if got != want:
                repairs.append(RepairAction(i, "rechain",
                                            f"rebuilt at {tuple(cur)}"))
        new_blocks.append(block)
        for layer in block.layers:
            ctx.append(vocab.encode_layer(layer))
        cur = block.out_size

    result = A.assemble(tuple(new_blocks), arch.input_shape, arch.num_classes)
    A.validate_architecture(result)
    trace = ReconstructionTrace(tuple(eliminated), tuple(predicted),
                                tuple(selected), tuple(repairs))
    return result, trace
