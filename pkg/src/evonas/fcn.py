"""Block-kind classifier: lifts a predicted layer token to a block choice.

A small dense network reads the k context layer tokens plus the newly
predicted layer token (as concatenated one-hots) and scores the 15 block
kinds.  The output layer starts at zero, so an untrained model is exactly
uniform and relabeling the class order permutes the learned scores without
touching the shared trunk.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Optional, Sequence

import numpy as np

from . import arch as A
from .corpus import BlockLibrary, CorpusRecord
from .errors import ConfigError, LabelError, TrainingDiverged, VocabError
from .nncore import Adam, expect_kind, load_checkpoint, save_checkpoint


@dataclass(frozen=True)
class FcnConfig:
    total_tokens: int
    pad_id: int
    context_len: int = 10
    hidden: tuple = (128, 128)
    n_classes: int = 15
    lr: float = 1e-3
    batch_size: int = 128
    epochs: int = 30
    seed: int = 0

    def __post_init__(self):
        if self.total_tokens < 1:
            raise ConfigError("total_tokens must be positive")
        if not 0 <= self.pad_id < self.total_tokens:
            raise ConfigError("pad_id must be a valid token id")
        if self.context_len < 1:
            raise ConfigError("context_len must be positive")
        if not self.hidden or any(h < 1 for h in self.hidden):
            raise ConfigError("hidden widths must be positive")
        if self.n_classes < 2:
            raise ConfigError("need at least two classes")
        if self.lr < 0:
            raise ConfigError("learning rate must be >= 0")
        if self.batch_size < 1 or self.epochs < 0:
            raise ConfigError("bad batch size or epoch count")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))

    def to_dict(self) -> dict:
        return {"total_tokens": self.total_tokens, "pad_id": self.pad_id,
                "context_len": self.context_len, "hidden": list(self.hidden),
                "n_classes": self.n_classes, "lr": self.lr,
                "batch_size": self.batch_size, "epochs": self.epochs,
                "seed": self.seed}

    @classmethod
    def from_dict(cls, d: dict) -> "FcnConfig":
        d = dict(d)
        d["hidden"] = tuple(d.get("hidden", (128, 128)))
        return cls(**d)


@dataclass
class FcnModel:
    config: FcnConfig
    params: Dict[str, np.ndarray]
    kinds: tuple


def init_fcn(cfg: FcnConfig, kinds: Sequence) -> FcnModel:
    if len(kinds) != cfg.n_classes:
        raise ConfigError(
            f"class count {cfg.n_classes} != library size {len(kinds)}")
    rng = np.random.default_rng(cfg.seed)
    slots = cfg.context_len + 1
    dims = [slots * cfg.total_tokens, *cfg.hidden, cfg.n_classes]
    params: Dict[str, np.ndarray] = {}
    for i in range(len(dims) - 1):
        fan_in, fan_out = dims[i], dims[i + 1]
        if i == len(dims) - 2:
            # zero head: uniform at init, class order strictly a relabeling
            w = np.zeros((fan_in, fan_out))
        else:
            w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out))
        params[f"w{i + 1}"] = w
        params[f"b{i + 1}"] = np.zeros(fan_out)
    return FcnModel(config=cfg, params=params, kinds=tuple(kinds))


def _window(cfg: FcnConfig, context) -> list:
    ctx = list(context)[-cfg.context_len:]
    return [cfg.pad_id] * (cfg.context_len - len(ctx)) + ctx


def _encode_ids(cfg: FcnConfig, contexts, tokens) -> np.ndarray:
    """(B, k+1) int array of token ids; one slot per input position."""
    rows = []
    for ctx, tok in zip(contexts, tokens):
        rows.append(_window(cfg, ctx) + [tok])
    ids = np.asarray(rows, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= cfg.total_tokens):
        raise VocabError("token id outside the classifier's vocabulary")
    return ids


def _forward(model: FcnModel, ids: np.ndarray, need_cache=False):
    cfg = model.config
    offset = np.arange(cfg.context_len + 1, dtype=np.int64) * cfg.total_tokens
    flat = ids + offset            # slot-local id -> row in the first matrix
    h = model.params["w1"][flat].sum(axis=1) + model.params["b1"]
    np.maximum(h, 0.0, out=h)
    cache = [(flat, h)]
    n_layers = len(cfg.hidden) + 1
    for i in range(2, n_layers + 1):
        h = h @ model.params[f"w{i}"] + model.params[f"b{i}"]
        if i < n_layers:
            np.maximum(h, 0.0, out=h)
            cache.append(h)
    return (h, cache) if need_cache else h


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    np.exp(z, out=z)
    z /= z.sum(axis=-1, keepdims=True)
    return z


def fcn_train(pairs, cfg: FcnConfig, lib: Optional[BlockLibrary] = None) -> FcnModel:
    """Train the classifier on (context, token, kind) triples.

    Deterministic for a fixed seed; the class order is the library entry
    order.
    """
    if lib is None:
        lib = BlockLibrary.default()
    if cfg.n_classes != len(lib.entries):
        raise ConfigError(
            f"class count {cfg.n_classes} != library size {len(lib.entries)}")
    label_of = {e.kind: i for i, e in enumerate(lib.entries)}
    contexts, tokens, labels = [], [], []
    for ctx, tok, kind in pairs:
        if kind not in label_of:
            raise LabelError(f"kind {kind!r} not in the block library")
        contexts.append(ctx)
        tokens.append(tok)
        labels.append(label_of[kind])
    ids = _encode_ids(cfg, contexts, tokens)
    y = np.asarray(labels, dtype=np.int64)

    model = init_fcn(cfg, lib.kinds)
    if cfg.epochs == 0 or len(pairs) == 0:
        return model
    rng = np.random.default_rng(cfg.seed)
    opt = Adam(cfg.lr)
    n = len(y)
    for _epoch in range(cfg.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            take = perm[start:start + cfg.batch_size]
            bi, by = ids[take], y[take]
            logits, cache = _forward(model, bi, need_cache=True)
            probs = _softmax(logits)
            b = len(by)
            loss = -np.mean(np.log(probs[np.arange(b), by] + 1e-300))
            if not np.isfinite(loss):
                raise TrainingDiverged(f"loss became {loss}")
            dlogits = probs
            dlogits[np.arange(b), by] -= 1.0
            dlogits /= b
            grads = _backward(model, cache, dlogits)
            opt.step(model.params, grads)
    for p in model.params.values():
        if not np.all(np.isfinite(p)):
            raise TrainingDiverged("non-finite parameter after training")
    return model


def _backward(model: FcnModel, cache, dlogits) -> Dict[str, np.ndarray]:
    cfg = model.config
    grads: Dict[str, np.ndarray] = {}
    n_layers = len(cfg.hidden) + 1
    d = dlogits
    for i in range(n_layers, 1, -1):
        h_prev = cache[i - 2][1] if i == 2 else cache[i - 2]
        grads[f"w{i}"] = h_prev.T @ d
        grads[f"b{i}"] = d.sum(axis=0)
        d = d @ model.params[f"w{i}"].T
        d *= (h_prev > 0)
    flat, _h1 = cache[0]
    grads["b1"] = d.sum(axis=0)
    dw1 = np.zeros_like(model.params["w1"])
    # each slot's one-hot routes the full d row into one matrix row
    slots = flat.shape[1]
    np.add.at(dw1, flat.reshape(-1), np.repeat(d, slots, axis=0))
    grads["w1"] = dw1
    return grads


def fcn_logits(model: FcnModel, context, token: int) -> np.ndarray:
    ids = _encode_ids(model.config, [context], [token])
    return _forward(model, ids)[0]


def fcn_proba(model: FcnModel, context, token: int) -> np.ndarray:
    """Class probabilities over the library kinds, in entry order."""
    return _softmax(fcn_logits(model, context, token))


def fcn_select(model: FcnModel, context, token: int):
    """Pick the block kind for a predicted layer token (lowest-index ties)."""
    return model.kinds[int(np.argmax(fcn_logits(model, context, token)))]


def make_fcn_pairs(records: Sequence[CorpusRecord], vocab: A.Vocabulary,
                   k: int = 10) -> list:
    """Derive (context, token, kind) triples from encoded architectures.

    The label for each layer position is the kind of its enclosing block;
    the context is the preceding layer tokens, left-padded to k.
    """
    if k < 1:
        raise ConfigError("window size must be positive")
    pairs = []
    for rec in records:
        tokens = A.encode_architecture(rec.arch, vocab).tokens
        t = 0
        for block in rec.arch.blocks:
            for _layer in block.layers:
                ctx = tokens[max(0, t - k):t]
                pairs.append(((vocab.pad_id,) * (k - len(ctx)) + ctx,
                              tokens[t], block.kind))
                t += 1
    return pairs


def save_fcn(model: FcnModel, path) -> None:
    meta = {"kinds": [str(getattr(k, "value", k)) for k in model.kinds]}
    save_checkpoint(path, "fcn", model.config.to_dict(), model.params, meta=meta)


def load_fcn(path) -> FcnModel:
    header, params = load_checkpoint(path)
    expect_kind(header, "fcn", path)
    cfg = FcnConfig.from_dict(header["config"])
    kinds = tuple(A.BlockKind(v) for v in header.get("kinds", ()))
    if len(kinds) != cfg.n_classes:
        raise ConfigError(f"checkpoint {path} has a bad class list")
    expected = {f"w{i}" for i in range(1, len(cfg.hidden) + 2)}
    expected |= {f"b{i}" for i in range(1, len(cfg.hidden) + 2)}
    if set(params) != expected:
        raise ConfigError(f"checkpoint {path} parameter set mismatch")
    return FcnModel(config=cfg, params=params, kinds=kinds)
