"""Decoder-only autoregressive model over layer-token sequences.

The network reads a fixed window of 10 tokens (left-padded with PAD) and
predicts the next layer token. Forward, loss, and the full reverse-mode
gradient are written out by hand on numpy arrays; no autograd framework is
involved. Parameter layout (all under ``model.params``):

    tok          (vocab_size + 4, d_model)   embeddings incl. PAD/BOS/EOS/SEP
    pos          (context_len, d_model)      learned positional table
    l{i}.ln1.g/b  pre-attention layer norm
    l{i}.wq/bq, wk/bk, wv/bv, wo/bo          attention projections, x @ W + b
    l{i}.ln2.g/b  pre-feedforward layer norm
    l{i}.w1/b1, w2/b2                        feedforward (gelu between)
    lnf.g/b       final layer norm
    head.w/b     (d_model, vocab_size)       output projection

Heads split the model dimension into contiguous column slices. The output
projection covers only real layer tokens, so specials can never be predicted.
Masked attention weights (future positions, PAD keys) are exactly zero, which
is what makes the causality guarantee bitwise rather than approximate.
"""

from __future__ import annotations

import hashlib
import math
import time
from dataclasses import dataclass, field, asdict
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import nncore
from .arch import Vocabulary
from .corpus import TrainingPair
from .errors import ConfigError, TrainingDiverged, VocabError

LN_EPS = 1e-5
_GELU_C = math.sqrt(2.0 / math.pi)
N_SPECIALS = 4
CONTEXT_LEN = 10


@dataclass(frozen=True)
class GptConfig:
    vocab_size: int
    n_layers: int = 4
    n_heads: int = 4
    context_len: int = CONTEXT_LEN
    d_model: int = 64
    d_ff: int = 256
    dropout_rate: float = 0.1
    lr: float = 1e-4
    batch_size: int = 128
    epochs: int = 300
    seed: int = 0
    dtype: str = "float32"

    def __post_init__(self):
        if self.vocab_size < 1:
            raise ConfigError(f"vocab_size must be positive, got {self.vocab_size}")
        if self.context_len != CONTEXT_LEN:
            raise ConfigError(
                f"context window is fixed at {CONTEXT_LEN}, got {self.context_len}")
        if self.d_model % self.n_heads != 0:
            raise ConfigError(
                f"d_model={self.d_model} not divisible by n_heads={self.n_heads}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout_rate out of range: {self.dropout_rate}")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError(f"unsupported dtype {self.dtype!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "GptConfig":
        return cls(**d)


@dataclass
class GptModel:
    config: GptConfig
    params: Dict[str, np.ndarray]

    @property
    def pad_id(self) -> int:
        return self.config.vocab_size


@dataclass(frozen=True)
class TrainReport:
    losses: List[float]
    accuracies: List[float]
    wall_time: float
    checkpoint_id: str
    epochs: int
    phase: str


def init_model(cfg: GptConfig) -> GptModel:
    rng = np.random.default_rng(cfg.seed)
    dt = np.dtype(cfg.dtype)
    d, dff, V = cfg.d_model, cfg.d_ff, cfg.vocab_size
    scale = 0.02
    # residual-branch output projections get a depth-scaled init
    res_scale = scale / math.sqrt(2.0 * cfg.n_layers)

    def mat(shape, s=scale):
        return (rng.standard_normal(shape) * s).astype(dt)

    p: Dict[str, np.ndarray] = {
        "tok": mat((V + N_SPECIALS, d)),
        "pos": mat((cfg.context_len, d)),
    }
    for i in range(cfg.n_layers):
        L = f"l{i}."
        p[L + "ln1.g"] = np.ones(d, dt)
        p[L + "ln1.b"] = np.zeros(d, dt)
        for nm in ("wq", "wk", "wv"):
            p[L + nm] = mat((d, d))
            p[L + "b" + nm[1]] = np.zeros(d, dt)
        p[L + "wo"] = mat((d, d), res_scale)
        p[L + "bo"] = np.zeros(d, dt)
        p[L + "ln2.g"] = np.ones(d, dt)
        p[L + "ln2.b"] = np.zeros(d, dt)
        p[L + "w1"] = mat((d, dff))
        p[L + "b1"] = np.zeros(dff, dt)
        p[L + "w2"] = mat((dff, d), res_scale)
        p[L + "b2"] = np.zeros(d, dt)
    p["lnf.g"] = np.ones(d, dt)
    p["lnf.b"] = np.zeros(d, dt)
    p["head.w"] = mat((d, V))
    p["head.b"] = np.zeros(V, dt)
    return GptModel(config=cfg, params=p)


# --- forward machinery ---------------------------------------------------------


def _check_ids(ids: np.ndarray, cfg: GptConfig) -> None:
    hi = cfg.vocab_size + N_SPECIALS
    if ids.size and (ids.min() < 0 or ids.max() >= hi):
        bad = int(ids.min()) if ids.min() < 0 else int(ids.max())
        raise VocabError(f"token id {bad} outside embedding range [0, {hi})")


def _ln_fwd(x, g, b):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = np.mean(xc * xc, axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LN_EPS)
    xhat = xc * inv
    return xhat * g + b, (xhat, inv, g)


def _ln_bwd(dy, cache):
    xhat, inv, g = cache
    lead = tuple(range(dy.ndim - 1))
    tmp = dy * xhat
    dg = tmp.sum(axis=lead)
    db = dy.sum(axis=lead)
    dxhat = dy * g
    mean2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
    dx = dxhat
    dx -= dxhat.mean(axis=-1, keepdims=True)
    tmp = np.multiply(xhat, mean2, out=tmp)
    dx -= tmp
    dx *= inv
    return dx, dg, db


def _gelu_fwd(u):
    # factored u(1 + 0.044715 u^2); ** on float32 arrays is two orders slower
    t = u * u
    t *= 0.044715
    t += 1.0
    t *= u
    t *= _GELU_C
    np.tanh(t, out=t)
    g = t + 1.0
    g *= u
    g *= 0.5
    return g, t


def _gelu_bwd(du_out, u, t):
    # 0.5 * ((1 + t) + u * (1 - t^2) * c * (1 + 3*0.044715 u^2))
    w = u * u
    w *= 3 * 0.044715
    w += 1.0
    w *= _GELU_C
    sech2 = t * t
    np.subtract(1.0, sech2, out=sech2)
    w *= sech2
    w *= u
    w += t
    w += 1.0
    w *= 0.5
    w *= du_out
    return w


def _dropout_mask(shape, rate, rng, dtype):
    draw_dt = np.float32 if dtype == np.float32 else np.float64
    keep = (rng.random(shape, dtype=draw_dt) >= rate).astype(dtype)
    keep /= np.asarray(1.0 - rate, dtype=dtype)
    return keep


def _forward_full(model: GptModel, ids: np.ndarray, train_mode: bool = False,
                  rng: Optional[np.random.Generator] = None,
                  need_cache: bool = False, keep_weights: bool = False):
    """Runs the stack over a (B, k) id batch; returns (x_final, cache)."""
    cfg = model.config
    p = model.params
    _check_ids(ids, cfg)
    B, k = ids.shape
    H = cfg.n_heads
    dh = cfg.d_model // H
    dt = p["tok"].dtype
    drop = train_mode and cfg.dropout_rate > 0.0

    x = p["tok"][ids] + p["pos"][np.newaxis, :k, :]
    cache: dict = {"ids": ids, "layers": [], "maps": []}
    if drop:
        m = _dropout_mask(x.shape, cfg.dropout_rate, rng, dt)
        cache["emb_mask"] = m
        x = x * m

    # Masking is additive: disallowed scores get -1e30, which underflows to an
    # exact +0.0 after the shifted exp, keeping masked weights bitwise zero.
    # Rows whose every key is masked (PAD queries) are zeroed afterwards.
    causal = np.tril(np.ones((k, k), dtype=bool))
    not_pad = (ids != cfg.vocab_size)
    allowed = causal[np.newaxis, np.newaxis, :, :] & not_pad[:, np.newaxis, np.newaxis, :]
    bias = np.where(allowed, np.asarray(0.0, dt), np.asarray(-1e30, dt))
    rowmask = not_pad[:, np.newaxis, :, np.newaxis].astype(dt)
    sqrt_dh = np.asarray(math.sqrt(dh), dtype=dt)

    for i in range(cfg.n_layers):
        L = f"l{i}."
        lc: dict = {}
        a, lc["ln1"] = _ln_fwd(x, p[L + "ln1.g"], p[L + "ln1.b"])
        lc["a"] = a
        # one fused projection instead of three separate BLAS calls
        wqkv = np.concatenate((p[L + "wq"], p[L + "wk"], p[L + "wv"]), axis=1)
        bqkv = np.concatenate((p[L + "bq"], p[L + "bk"], p[L + "bv"]))
        lc["wqkv"] = wqkv
        qkv = a @ wqkv + bqkv
        q, kk, v = np.split(qkv, 3, axis=-1)
        qh = q.reshape(B, k, H, dh).transpose(0, 2, 1, 3)
        kh = kk.reshape(B, k, H, dh).transpose(0, 2, 1, 3)
        vh = v.reshape(B, k, H, dh).transpose(0, 2, 1, 3)
        s = qh @ kh.transpose(0, 1, 3, 2)
        s /= sqrt_dh
        s += bias
        s -= s.max(axis=-1, keepdims=True)
        np.exp(s, out=s)
        s /= s.sum(axis=-1, keepdims=True)
        s *= rowmask
        w = s
        ctx = w @ vh
        merged = ctx.transpose(0, 2, 1, 3).reshape(B, k, cfg.d_model)
        attn = merged @ p[L + "wo"] + p[L + "bo"]
        if drop:
            m = _dropout_mask(attn.shape, cfg.dropout_rate, rng, dt)
            lc["attn_mask"] = m
            attn *= m
        x += attn
        lc.update(qh=qh, kh=kh, vh=vh, w=w, merged=merged)
        f, lc["ln2"] = _ln_fwd(x, p[L + "ln2.g"], p[L + "ln2.b"])
        lc["f"] = f
        u = f @ p[L + "w1"] + p[L + "b1"]
        g, t = _gelu_fwd(u)
        ff = g @ p[L + "w2"] + p[L + "b2"]
        if drop:
            m = _dropout_mask(ff.shape, cfg.dropout_rate, rng, dt)
            lc["ff_mask"] = m
            ff *= m
        x += ff
        lc.update(u=u, t=t, g=g)
        if need_cache:
            cache["layers"].append(lc)
        if keep_weights:
            cache["maps"].append(w)
    xf, lnf_cache = _ln_fwd(x, p["lnf.g"], p["lnf.b"])
    cache["lnf"] = lnf_cache
    cache["xf"] = xf
    return xf, cache


def _backward_full(model: GptModel, dxf: np.ndarray, cache: dict) -> Dict[str, np.ndarray]:
    cfg = model.config
    p = model.params
    B, k, d = dxf.shape
    H = cfg.n_heads
    dh = d // H
    grads: Dict[str, np.ndarray] = {}

    dx, grads["lnf.g"], grads["lnf.b"] = _ln_bwd(dxf, cache["lnf"])
    for i in reversed(range(cfg.n_layers)):
        L = f"l{i}."
        lc = cache["layers"][i]
        dff = dx * lc["ff_mask"] if "ff_mask" in lc else dx
        dg = dff @ p[L + "w2"].T
        grads[L + "w2"] = lc["g"].reshape(-1, cfg.d_ff).T @ dff.reshape(-1, d)
        grads[L + "b2"] = dff.sum(axis=(0, 1))
        du = _gelu_bwd(dg, lc["u"], lc["t"])
        df = du @ p[L + "w1"].T
        grads[L + "w1"] = lc["f"].reshape(-1, d).T @ du.reshape(-1, cfg.d_ff)
        grads[L + "b1"] = du.sum(axis=(0, 1))
        dmid_ln, grads[L + "ln2.g"], grads[L + "ln2.b"] = _ln_bwd(df, lc["ln2"])
        dmid = dx + dmid_ln

        dattn = dmid * lc["attn_mask"] if "attn_mask" in lc else dmid
        dmerged = dattn @ p[L + "wo"].T
        grads[L + "wo"] = lc["merged"].reshape(-1, d).T @ dattn.reshape(-1, d)
        grads[L + "bo"] = dattn.sum(axis=(0, 1))
        dctx = dmerged.reshape(B, k, H, dh).transpose(0, 2, 1, 3)
        w, vh, qh, kh = lc["w"], lc["vh"], lc["qh"], lc["kh"]
        dw = dctx @ vh.transpose(0, 1, 3, 2)
        dvh = w.transpose(0, 1, 3, 2) @ dctx
        ds = w * (dw - (dw * w).sum(axis=-1, keepdims=True))
        ds = ds / np.asarray(math.sqrt(dh), dtype=ds.dtype)
        dqh = ds @ kh
        dkh = ds.transpose(0, 1, 3, 2) @ qh
        dqkv = np.concatenate(
            (dqh.transpose(0, 2, 1, 3).reshape(B, k, d),
             dkh.transpose(0, 2, 1, 3).reshape(B, k, d),
             dvh.transpose(0, 2, 1, 3).reshape(B, k, d)), axis=-1)
        a2 = lc["a"].reshape(-1, d)
        dwqkv = a2.T @ dqkv.reshape(-1, 3 * d)
        grads[L + "wq"], grads[L + "wk"], grads[L + "wv"] = \
            np.split(dwqkv, 3, axis=1)
        dbqkv = dqkv.sum(axis=(0, 1))
        grads[L + "bq"], grads[L + "bk"], grads[L + "bv"] = np.split(dbqkv, 3)
        da = dqkv @ lc["wqkv"].T
        din_ln, grads[L + "ln1.g"], grads[L + "ln1.b"] = _ln_bwd(da, lc["ln1"])
        dx = dmid + din_ln

    if "emb_mask" in cache:
        dx = dx * cache["emb_mask"]
    grads["pos"] = dx.sum(axis=0)
    dtok = np.zeros_like(p["tok"])
    np.add.at(dtok, cache["ids"], dx)
    grads["tok"] = dtok
    return grads


# --- public operations ------------------------------------------------------------


def forward(model: GptModel, context: Sequence[int]) -> np.ndarray:
    """Logits for every position of one context; shape (len, vocab_size)."""
    ids = np.asarray([context], dtype=np.int64)
    xf, _ = _forward_full(model, ids)
    return (xf @ model.params["head.w"] + model.params["head.b"])[0]


def attention_maps(model: GptModel, context: Sequence[int]) -> np.ndarray:
    """Attention weight tensors, shape (n_layers, n_heads, k, k). Diagnostic."""
    ids = np.asarray([context], dtype=np.int64)
    _, cache = _forward_full(model, ids, keep_weights=True)
    return np.stack([m[0] for m in cache["maps"]])


def _batch_arrays(batch: Sequence[TrainingPair], cfg: GptConfig):
    ids = np.asarray([pair.context for pair in batch], dtype=np.int64)
    tgt = np.asarray([pair.target for pair in batch], dtype=np.int64)
    if ids.ndim != 2 or ids.shape[1] != cfg.context_len:
        raise ConfigError(
            f"contexts must have length {cfg.context_len}, got shape {ids.shape}")
    if tgt.size and (tgt.min() < 0 or tgt.max() >= cfg.vocab_size):
        raise VocabError(
            f"target ids must lie in [0, {cfg.vocab_size}); specials are not "
            "predictable")
    return ids, tgt


def _last_logits_f64(model, xf):
    last = xf[:, -1, :].astype(np.float64)
    w = model.params["head.w"].astype(np.float64)
    b = model.params["head.b"].astype(np.float64)
    return last @ w + b


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    m = logits.max(axis=-1, keepdims=True)
    e = np.exp(logits - m)
    return e / e.sum(axis=-1, keepdims=True)


def loss(model: GptModel, batch: Sequence[TrainingPair]) -> float:
    """Mean cross-entropy of each target under the last-position softmax."""
    if not batch:
        raise ConfigError("loss needs a non-empty batch")
    ids, tgt = _batch_arrays(batch, model.config)
    xf, _ = _forward_full(model, ids)
    logits = _last_logits_f64(model, xf)
    m = logits.max(axis=-1, keepdims=True)
    logz = np.log(np.exp(logits - m).sum(axis=-1)) + m[:, 0]
    return float(np.mean(logz - logits[np.arange(len(tgt)), tgt]))


def backward(model: GptModel, batch: Sequence[TrainingPair]) -> Dict[str, np.ndarray]:
    """Exact gradient of loss() for every parameter, keyed like params."""
    if not batch:
        raise ConfigError("backward needs a non-empty batch")
    ids, tgt = _batch_arrays(batch, model.config)
    val, grads, _ = _loss_and_grads(model, ids, tgt, train_mode=False, rng=None)
    return grads


def _loss_and_grads(model: GptModel, ids: np.ndarray, tgt: np.ndarray,
                    train_mode: bool, rng):
    p = model.params
    xf, cache = _forward_full(model, ids, train_mode=train_mode, rng=rng,
                              need_cache=True)
    last = xf[:, -1, :]
    logits = last @ p["head.w"] + p["head.b"]
    probs = _softmax_rows(logits)
    n = len(tgt)
    rows = np.arange(n)
    tiny = 1e-38 if probs.dtype == np.float32 else 1e-300
    val = float(np.mean(-np.log(np.maximum(probs[rows, tgt], tiny))))
    correct = int((logits.argmax(axis=1) == tgt).sum())

    dlog = probs
    dlog[rows, tgt] -= 1.0
    dlog /= n
    grads = {
        "head.w": last.T @ dlog,
        "head.b": dlog.sum(axis=0),
    }
    dxf = np.zeros_like(xf)
    dxf[:, -1, :] = dlog @ p["head.w"].T
    grads.update(_backward_full(model, dxf, cache))
    return val, grads, correct


def train(model: GptModel, pairs: Sequence[TrainingPair], cfg: GptConfig,
          phase: str, checkpoint_dir=None, checkpoint_every: int = 50,
          vocab: Optional[Vocabulary] = None, epoch_hook=None,
          freeze: Sequence[str] = ()) -> TrainReport:
    """Adam over shuffled minibatches; deterministic for a fixed cfg.seed.

    Parameters named in `freeze` keep their initial values: their gradients
    are zeroed before every optimizer step, so with a fresh optimizer the
    update is exactly zero.
    """
    if phase not in ("pretrain", "finetune"):
        raise ConfigError(f"phase must be pretrain or finetune, got {phase!r}")
    if not pairs:
        raise ConfigError("train needs a non-empty pair list")
    for name in freeze:
        if name not in model.params:
            raise ConfigError(f"cannot freeze unknown parameter {name!r}")
    ids, tgt = _batch_arrays(pairs, cfg)
    _check_ids(ids, cfg)
    n = len(pairs)
    rng = np.random.default_rng(cfg.seed)
    opt = nncore.Adam(cfg.lr)
    losses: List[float] = []
    accs: List[float] = []
    t0 = time.perf_counter()
    for epoch in range(cfg.epochs):
        perm = rng.permutation(n)
        tot = 0.0
        correct = 0
        for start in range(0, n, cfg.batch_size):
            sel = perm[start:start + cfg.batch_size]
            val, grads, c = _loss_and_grads(model, ids[sel], tgt[sel],
                                            train_mode=True, rng=rng)
            if not math.isfinite(val):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch + 1} (phase {phase})")
            for name in freeze:
                grads[name][...] = 0.0
            opt.step(model.params, grads)
            tot += val * len(sel)
            correct += c
        for name, arr in model.params.items():
            if not np.all(np.isfinite(arr)):
                raise TrainingDiverged(
                    f"parameter {name} went non-finite at epoch {epoch + 1}")
        losses.append(tot / n)
        accs.append(correct / n)
        if checkpoint_dir is not None and (epoch + 1) % checkpoint_every == 0 \
                and (epoch + 1) < cfg.epochs:
            _save_snapshot(model, checkpoint_dir, phase, epoch + 1, vocab)
        if epoch_hook is not None:
            epoch_hook(epoch + 1, model)
    wall = time.perf_counter() - t0
    ckpt_id = model_fingerprint(model)
    if checkpoint_dir is not None:
        _save_snapshot(model, checkpoint_dir, phase, cfg.epochs, vocab,
                       final=True)
    return TrainReport(losses=losses, accuracies=accs, wall_time=wall,
                       checkpoint_id=ckpt_id, epochs=len(losses), phase=phase)


def model_fingerprint(model: GptModel) -> str:
    h = hashlib.sha256()
    for name in sorted(model.params):
        h.update(name.encode())
        h.update(np.ascontiguousarray(model.params[name]).tobytes())
    return h.hexdigest()[:12]


def _save_snapshot(model, checkpoint_dir, phase, epoch, vocab, final=False):
    import os

    os.makedirs(checkpoint_dir, exist_ok=True)
    name = f"gpt-{phase}-{'final' if final else f'e{epoch:04d}'}.npz"
    save_gpt(model, os.path.join(checkpoint_dir, name), vocab=vocab,
             phase=phase, epoch=epoch)
    return name


# --- sampling ------------------------------------------------------------------


def _window(context: Sequence[int], cfg: GptConfig) -> tuple:
    k = cfg.context_len
    ctx = tuple(context)[-k:]
    if len(ctx) < k:
        ctx = (cfg.vocab_size,) * (k - len(ctx)) + ctx
    return ctx


def predict_distribution(model: GptModel, context: Sequence[int],
                         temperature: float = 1.0) -> np.ndarray:
    """Next-token probabilities over the layer vocabulary (float64)."""
    if temperature < 0:
        raise ConfigError(f"temperature must be >= 0, got {temperature}")
    logits = forward(model, _window(context, model.config))[-1].astype(np.float64)
    if temperature == 0.0:
        out = np.zeros_like(logits)
        out[int(np.argmax(logits))] = 1.0
        return out
    return _softmax_rows(logits / temperature)


def predict_next(model: GptModel, context: Sequence[int],
                 temperature: float = 1.0,
                 rng: Optional[np.random.Generator] = None) -> int:
    """Samples the next layer token; temperature 0 is greedy argmax with
    ties resolved toward the lowest token id."""
    if temperature < 0:
        raise ConfigError(f"temperature must be >= 0, got {temperature}")
    logits = forward(model, _window(context, model.config))[-1].astype(np.float64)
    if temperature == 0.0:
        return int(np.argmax(logits))  # argmax picks the first maximal entry
    probs = _softmax_rows(logits / temperature)
    if rng is None:
        rng = np.random.default_rng()
    r = rng.random()
    idx = int(np.searchsorted(np.cumsum(probs), r, side="right"))
    return min(idx, len(probs) - 1)


# --- persistence ------------------------------------------------------------------


def save_gpt(model: GptModel, path, vocab: Optional[Vocabulary] = None,
             phase: str = "", epoch: Optional[int] = None) -> None:
    meta: dict = {"phase": phase}
    if epoch is not None:
        meta["epoch"] = epoch
    if vocab is not None:
        meta["vocab"] = vocab.to_json()
        meta["vocab_hash"] = vocab.vocab_hash()
    nncore.save_checkpoint(path, kind="gpt", config=model.config.to_dict(),
                           params=model.params, meta=meta)


def load_gpt(path) -> tuple[GptModel, Optional[Vocabulary]]:
    header, params = nncore.load_checkpoint(path)
    nncore.expect_kind(header, "gpt", path)
    cfg = GptConfig.from_dict(header["config"])
    vocab = None
    if header.get("vocab") is not None:
        vocab = Vocabulary.from_json(header["vocab"])
        if header.get("vocab_hash") and vocab.vocab_hash() != header["vocab_hash"]:
            raise ConfigError(f"{path}: vocabulary hash mismatch")
    model = GptModel(config=cfg, params=params)
    missing = _expected_param_names(cfg) - set(params)
    if missing:
        raise ConfigError(f"{path}: checkpoint missing parameters {sorted(missing)}")
    return model, vocab


def _expected_param_names(cfg: GptConfig) -> set:
    names = {"tok", "pos", "lnf.g", "lnf.b", "head.w", "head.b"}
    for i in range(cfg.n_layers):
        L = f"l{i}."
        names |= {L + s for s in ("ln1.g", "ln1.b", "wq", "bq", "wk", "bk",
                                  "wv", "bv", "wo", "bo", "ln2.g", "ln2.b",
                                  "w1", "b1", "w2", "b2")}
    return names
