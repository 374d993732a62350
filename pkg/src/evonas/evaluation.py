"""Fitness evaluators: a deterministic chain-based surrogate, tabular lookup,
and a line-protocol client for external trainer workers.

The surrogate scores an architecture by how well its block-kind transitions
agree with a reference Markov chain, squashed through a logistic and penalized
for straying from the target depth.  It is a pure function, which makes search
runs reproducible bit for bit.
"""

from __future__ import annotations

import json
import math
import os
import random
import select
import subprocess
import time
from dataclasses import InitVar, dataclass
from enum import Enum
from typing import Optional, Sequence

from . import arch as A
from .arch import BlockKind
from .corpus import arch_to_dict, kind_sequence
from .errors import ConfigError, EvalError, ProtocolError, ReportError, VersionMismatch

PROTOCOL_VERSION = 1

DEFAULT_A = 2.0
DEFAULT_B = 3.0
DEFAULT_DEPTH_PENALTY = 0.1
DEFAULT_NOISE_AMPLITUDE = 0.03
TARGET_DEPTH = 15


@dataclass(frozen=True)
class MarkovTeacher:
    """Order-1 chain over block kinds; the desk-scale fitness landscape."""

    kinds: tuple[BlockKind, ...]
    transitions: tuple[tuple[float, ...], ...]
    initial: tuple[float, ...]
    a: float = DEFAULT_A
    b: float = DEFAULT_B
    depth_penalty: float = DEFAULT_DEPTH_PENALTY
    validate: InitVar[bool] = True

    def __post_init__(self, validate):
        object.__setattr__(self, "kinds", tuple(self.kinds))
        object.__setattr__(self, "transitions",
                           tuple(tuple(float(p) for p in row) for row in self.transitions))
        object.__setattr__(self, "initial", tuple(float(p) for p in self.initial))
        object.__setattr__(self, "_index", {k: i for i, k in enumerate(self.kinds)})
        if validate:
            self.check_stochastic()

    def check_stochastic(self):
        n = len(self.kinds)
        if len(set(self.kinds)) != n:
            raise ConfigError("teacher kinds must be distinct")
        if len(self.transitions) != n or any(len(r) != n for r in self.transitions):
            raise ConfigError("transition matrix must be square over the kinds")
        for row in self.transitions:
            if any(p < 0 for p in row) or abs(sum(row) - 1.0) > 1e-9:
                raise ConfigError("transition rows must be non-negative and sum to 1")
        if any(p < 0 for p in self.initial) or abs(sum(self.initial) - 1.0) > 1e-9:
            raise ConfigError("initial distribution must be non-negative and sum to 1")

    def index(self, kind: BlockKind) -> int:
        try:
            return self._index[kind]
        except KeyError:
            raise EvalError(f"kind {kind!r} not in teacher alphabet") from None

    def prob(self, src: BlockKind, dst: BlockKind) -> float:
        return self.transitions[self.index(src)][self.index(dst)]

    def row(self, src: BlockKind) -> tuple[float, ...]:
        return self.transitions[self.index(src)]

    @classmethod
    def default_ring(cls, p_next: float = 0.5, p_skip: float = 0.2,
                     a: float = DEFAULT_A, b: float = DEFAULT_B,
                     depth_penalty: float = DEFAULT_DEPTH_PENALTY) -> "MarkovTeacher":
        """Ring chain: kind i prefers i+1 strongly and i+2 weakly."""
        kinds = tuple(BlockKind)
        n = len(kinds)
        rest = (1.0 - p_next - p_skip) / (n - 2)
        if rest < 0:
            raise ConfigError("p_next + p_skip must not exceed 1")
        rows = []
        for i in range(n):
            row = [rest] * n
            row[(i + 1) % n] = p_next
            row[(i + 2) % n] = p_skip
            rows.append(tuple(row))
        return cls(kinds=kinds, transitions=tuple(rows),
                   initial=(1.0 / n,) * n, a=a, b=b, depth_penalty=depth_penalty)


class Provenance(str, Enum):
    SURROGATE = "surrogate"
    TABULAR = "tabular"
    EXTERNAL = "external"


@dataclass(frozen=True)
class FitnessRecord:
    fitness: float
    param_count: int
    provenance: Provenance
    mode: str
    wall_time: float = 0.0
    error: bool = False

    def __post_init__(self):
        if not 0.0 <= self.fitness <= 1.0:
            raise EvalError(f"fitness {self.fitness} outside [0, 1]")


def logistic(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-min(x, 700.0)))
    return math.exp(max(x, -700.0)) / (1.0 + math.exp(max(x, -700.0)))


def _chain_base(teacher: MarkovTeacher, kinds: Sequence[BlockKind]) -> float:
    """Mean log transition probability along the block sequence."""
    if len(kinds) < 2:
        return 0.0
    total = 0.0
    for src, dst in zip(kinds, kinds[1:]):
        p = teacher.prob(src, dst)
        total += math.log(p) if p > 0.0 else -745.0  # exp(-745) underflows to 0
    return total / (len(kinds) - 1)


def surrogate_fitness(teacher: MarkovTeacher, arch: A.Architecture, mode: str = "full",
                      noise_amplitude: float = DEFAULT_NOISE_AMPLITUDE) -> FitnessRecord:
    """Deterministic chain-agreement fitness; cheap mode adds hash-seeded noise."""
    if mode not in ("cheap", "full"):
        raise EvalError(f"unknown surrogate mode {mode!r}")
    kinds = kind_sequence(arch)
    base = _chain_base(teacher, kinds)
    depth = len(kinds)
    score = logistic(teacher.a * base + teacher.b)
    score -= teacher.depth_penalty * abs(depth - TARGET_DEPTH) / TARGET_DEPTH
    if mode == "cheap":
        seed = int(A.arch_hash(arch)[:16], 16)
        noise = (random.Random(seed).random() * 2.0 - 1.0) * noise_amplitude
        score += noise
    return FitnessRecord(
        fitness=min(1.0, max(0.0, score)),
        param_count=A.param_count_estimate(arch),
        provenance=Provenance.SURROGATE,
        mode=mode)


class SurrogateEvaluator:
    """Evaluator-protocol wrapper around surrogate_fitness."""

    def __init__(self, teacher: MarkovTeacher, mode: str = "full",
                 noise_amplitude: float = DEFAULT_NOISE_AMPLITUDE):
        self.teacher = teacher
        self.mode = mode
        self.noise_amplitude = noise_amplitude

    def evaluate(self, arch: A.Architecture, trace=None) -> FitnessRecord:
        return surrogate_fitness(self.teacher, arch, self.mode, self.noise_amplitude)

    def close(self):
        pass


# --- tabular ---------------------------------------------------------------------


def table_key(arch: A.Architecture) -> str:
    return A.arch_hash(arch)


def save_table(entries: dict, path) -> None:
    """entries: key_hash -> (accuracy, params)."""
    with open(path, "w", encoding="utf-8") as fh:
        for key, (acc, params) in entries.items():
            fh.write(json.dumps({"key_hash": key, "accuracy": acc, "params": params}) + "\n")


def load_table(path) -> dict:
    from .errors import ParseError

    table = {}
    with open(path, "r", encoding="utf-8") as fh:
        for n, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
                table[d["key_hash"]] = (float(d["accuracy"]), int(d["params"]))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ParseError(f"table line {n}: {exc}", line=n) from exc
    return table


def tabular_fitness(table: dict, arch: A.Architecture) -> FitnessRecord:
    entry = table.get(table_key(arch))
    if entry is None:
        raise EvalError(f"architecture {table_key(arch)[:12]} not in table",
                        code=EvalError.NOT_IN_TABLE)
    acc, params = entry
    return FitnessRecord(fitness=acc, param_count=params,
                         provenance=Provenance.TABULAR, mode="lookup")


class TabularEvaluator:
    def __init__(self, table: dict):
        self.table = table

    def evaluate(self, arch: A.Architecture, trace=None) -> FitnessRecord:
        return tabular_fitness(self.table, arch)

    def close(self):
        pass


# --- proxy-vs-full correlation ------------------------------------------------------


def pearson(x: Sequence[float], y: Sequence[float]) -> tuple[float, float]:
    """Pearson r with two-sided p-value."""
    if len(x) != len(y) or len(x) < 3:
        raise ReportError("correlation needs at least 3 paired samples")
    if len(set(x)) == 1 or len(set(y)) == 1:
        raise ReportError("zero-variance vector has no defined correlation")
    from scipy import stats

    r, p = stats.pearsonr(x, y)
    return float(r), float(p)


def correlation_report(evaluate_mode, archs: Sequence[A.Architecture],
                       mode_pairs: Sequence[tuple[str, str]]) -> dict:
    """Correlate fitness vectors across evaluation modes.

    evaluate_mode: callable (arch, mode) -> fitness in [0,1].  Returns a dict
    keyed by mode pair with entries {"pcc", "p_value", "n"}.
    """
    if len(archs) < 3:
        raise ReportError("correlation needs at least 3 architectures")
    out = {}
    cache: dict[str, list[float]] = {}

    def vector(mode):
        if mode not in cache:
            cache[mode] = [float(evaluate_mode(a, mode)) for a in archs]
        return cache[mode]

    for m1, m2 in mode_pairs:
        r, p = pearson(vector(m1), vector(m2))
        out[(m1, m2)] = {"pcc": r, "p_value": p, "n": len(archs)}
    return out


# --- external trainer protocol ---------------------------------------------------------


def has_batchnorm(arch: A.Architecture) -> bool:
    return any(l.category is A.LayerCategory.OTHER and l.name == "batchnorm"
               for l in A.iter_block_layers(arch))


def choose_scope(arch: A.Architecture, predicted_blocks: Sequence[int]) -> str:
    """Train predicted structures when there are any, else normalization
    parameters when present, else the full network."""
    if predicted_blocks:
        return "predicted_only"
    if has_batchnorm(arch):
        return "bn_only"
    return "full"


class _LineChannel:
    """Blocking line reader/writer with timeouts over raw file descriptors."""

    def __init__(self, read_fd: int, write_fn, close_fn):
        self._rfd = read_fd
        self._write = write_fn
        self._close = close_fn
        self._buf = b""

    def read_line(self, timeout: float) -> str:
        deadline = time.monotonic() + timeout
        while b"\n" not in self._buf:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise ProtocolError(f"no response within {timeout:.0f}s")
            ready, _, _ = select.select([self._rfd], [], [], remaining)
            if not ready:
                raise ProtocolError(f"no response within {timeout:.0f}s")
            chunk = os.read(self._rfd, 65536)
            if not chunk:
                raise ProtocolError("worker closed its output stream")
            self._buf += chunk
        line, self._buf = self._buf.split(b"\n", 1)
        return line.decode("utf-8")

    def write_line(self, text: str):
        try:
            self._write((text + "\n").encode("utf-8"))
        except (BrokenPipeError, OSError) as exc:
            raise ProtocolError(f"worker pipe broken: {exc}") from exc

    def close(self):
        self._close()


class ExternalEvaluator:
    """Client for external trainer workers.

    Spawns the worker command (or connects to a socket endpoint), performs the
    hello/version handshake, and exchanges one evaluate/result message pair per
    architecture.  Any malformed or late response degrades that one evaluation
    to an error-flagged zero-fitness record and recycles the worker; the
    search loop never sees an exception except a protocol version mismatch.
    """

    def __init__(self, worker_cmd: Optional[Sequence[str]] = None,
                 connect: Optional[tuple[str, int]] = None,
                 dataset: str = "cifar10", epochs: int = 6, batch_size: int = 512,
                 lr_target: float = 0.01, train_head: bool = True,
                 handshake_timeout: float = 10.0, eval_timeout: float = 600.0,
                 protocol_version: int = PROTOCOL_VERSION):
        if (worker_cmd is None) == (connect is None):
            raise ConfigError("provide exactly one of worker_cmd or connect")
        self.worker_cmd = list(worker_cmd) if worker_cmd else None
        self.connect = connect
        self.dataset = dataset
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr_target = lr_target
        self.train_head = train_head
        self.handshake_timeout = handshake_timeout
        self.eval_timeout = eval_timeout
        self.protocol_version = protocol_version
        self._proc = None
        self._sock = None
        self._chan: Optional[_LineChannel] = None

    # -- connection management --

    def _spawn(self):
        if self.worker_cmd is not None:
            self._proc = subprocess.Popen(
                self.worker_cmd, stdin=subprocess.PIPE, stdout=subprocess.PIPE)

            def write(data):
                self._proc.stdin.write(data)
                self._proc.stdin.flush()

            def close():
                try:
                    self._proc.stdin.close()
                except OSError:
                    pass
                self._proc.kill()
                self._proc.wait()

            self._chan = _LineChannel(self._proc.stdout.fileno(), write, close)
        else:
            import socket

            self._sock = socket.create_connection(self.connect,
                                                  timeout=self.handshake_timeout)
            self._sock.settimeout(None)
            self._chan = _LineChannel(self._sock.fileno(), self._sock.sendall,
                                      self._sock.close)
        self._handshake()

    def _handshake(self):
        line = self._chan.read_line(self.handshake_timeout)
        try:
            msg = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"bad hello frame: {exc}") from exc
        if msg.get("type") != "hello":
            raise ProtocolError(f"expected hello, got {msg.get('type')!r}")
        if msg.get("protocol_version") != self.protocol_version:
            raise VersionMismatch(
                f"worker speaks protocol {msg.get('protocol_version')!r}, "
                f"client speaks {self.protocol_version}")
        self._chan.write_line(json.dumps(
            {"type": "hello", "protocol_version": self.protocol_version,
             "role": "client"}))

    def _ensure_worker(self):
        if self._chan is None:
            self._spawn()

    def _recycle(self):
        if self._chan is not None:
            try:
                self._chan.close()
            except OSError:
                pass
        self._proc = None
        self._sock = None
        self._chan = None

    def close(self):
        self._recycle()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    # -- evaluation --

    def build_request(self, arch: A.Architecture, predicted_blocks: Sequence[int],
                      scope: Optional[str] = None, seed: int = 0) -> dict:
        scope = scope or choose_scope(arch, predicted_blocks)
        if scope == "predicted_only" and not predicted_blocks:
            raise EvalError("scope predicted_only requires predicted block indices")
        return {"protocol_version": self.protocol_version,
                "arch": arch_to_dict(arch),
                "dataset": self.dataset,
                "epochs": self.epochs,
                "batch_size": self.batch_size,
                "lr_target": self.lr_target,
                "trainable_scope": scope,
                "predicted_blocks": list(predicted_blocks),
                "train_head": self.train_head,
                "seed": seed}

    def _error_record(self, message: str) -> FitnessRecord:
        return FitnessRecord(fitness=0.0, param_count=0,
                             provenance=Provenance.EXTERNAL,
                             mode=f"e{self.epochs}", error=True)

    def evaluate(self, arch: A.Architecture, trace=None, scope: Optional[str] = None,
                 seed: int = 0) -> FitnessRecord:
        predicted = tuple(getattr(trace, "predicted", ()) or ())
        start = time.monotonic()
        try:
            self._ensure_worker()
            request = self.build_request(arch, predicted, scope, seed)
            self._chan.write_line(json.dumps({"type": "evaluate", "request": request}))
            line = self._chan.read_line(self.eval_timeout)
            msg = json.loads(line)
        except VersionMismatch:
            self._recycle()
            raise
        except (ProtocolError, json.JSONDecodeError, OSError) as exc:
            self._recycle()
            return self._error_record(str(exc))
        scope_used = request["trainable_scope"]
        if msg.get("type") == "result":
            try:
                resp = msg["response"]
                return FitnessRecord(
                    fitness=float(resp["accuracy"]),
                    param_count=int(resp.get("param_count", 0)),
                    provenance=Provenance.EXTERNAL,
                    mode=f"e{self.epochs}:{scope_used}",
                    wall_time=float(resp.get("wall_ms", 0.0)) / 1000.0)
            except (KeyError, TypeError, ValueError, EvalError):
                self._recycle()
                return self._error_record("malformed result payload")
        if msg.get("type") == "error":
            # worker-reported failure: connection stays up, record is flagged
            return self._error_record(str(msg.get("error")))
        self._recycle()
        return self._error_record(f"unexpected message type {msg.get('type')!r}")


def teacher_kl(model, records, vocab, teacher: MarkovTeacher, lib=None,
               width: int = 32, max_records: int = 300) -> float:
    """Mean KL from teacher transition rows to the model's block-kind belief.

    At every block boundary of the given corpus records, the model's next-token
    probabilities are gathered over the candidate first-layer tokens of each
    block kind (instantiated at the incoming tensor state) and renormalized
    into a kind distribution; the teacher row conditioned on the previous kind,
    renormalized over the same candidates, is the reference.
    """
    from . import gpt as _gpt
    from .corpus import BlockLibrary, first_layer_key
    from .errors import ShapeError, UnknownLayerError

    if lib is None:
        lib = BlockLibrary.default()
    k = model.config.context_len
    pad = vocab.pad_id
    cand_cache: dict = {}

    def candidates(state):
        if state not in cand_cache:
            found = {}
            for kind in teacher.kinds:
                try:
                    key = first_layer_key(lib, kind, state, width)
                    found[kind] = vocab.encode_key(key)
                except (ShapeError, UnknownLayerError):
                    continue  # kind not instantiable here or never seen in corpus
            cand_cache[state] = found
        return cand_cache[state]

    contexts = []
    for rec in records[:max_records]:
        seq = A.encode_architecture(rec.arch, vocab)
        blocks = rec.arch.blocks
        bounds = list(seq.boundaries)
        for bi in range(1, len(blocks)):
            cand = candidates(blocks[bi].layers[0].in_size)
            if len(cand) < 2:
                continue
            prefix = seq.tokens[:bounds[bi]][-k:]
            contexts.append((prefix, cand, teacher.row(blocks[bi - 1].kind)))
    if not contexts:
        raise ReportError("no block boundaries available for the KL estimate")

    import numpy as np

    ids = np.full((len(contexts), k), pad, dtype=np.int64)
    for i, (prefix, _, _) in enumerate(contexts):
        ids[i, k - len(prefix):] = prefix
    xf, _ = _gpt._forward_full(model, ids)
    logits = (xf[:, -1, :] @ model.params["head.w"]
              + model.params["head.b"]).astype(np.float64)
    probs = _gpt._softmax_rows(logits)
    kls = []
    for i, (_, cand, trow) in enumerate(contexts):
        kinds = list(cand)
        q = np.array([probs[i, cand[kd]] for kd in kinds])
        p = np.array([trow[teacher.index(kd)] for kd in kinds])
        if p.sum() <= 0:
            continue
        q = q / q.sum()
        p = p / p.sum()
        live = p > 0
        kls.append(float(np.sum(p[live] * np.log(p[live] / q[live]))))
    if not kls:
        raise ReportError("teacher rows put no mass on any instantiable kind")
    return float(np.mean(kls))
