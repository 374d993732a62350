"""Shared numeric plumbing for the neural models: Adam and checkpoints.

Checkpoints are numpy ``.npz`` containers that carry their own description:
a ``meta`` JSON blob (format version, model kind, config, anything the model
wants to stash) plus one array entry per parameter under ``p:<name>``.
"""

from __future__ import annotations

import json
from typing import Dict

import numpy as np

from .errors import ConfigError

FORMAT_VERSION = 1


class Adam:
    """Plain Adam with bias correction; state lives per-parameter by name."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        if lr < 0:
            raise ConfigError(f"learning rate must be >= 0, got {lr}")
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m: Dict[str, np.ndarray] = {}
        self._v: Dict[str, np.ndarray] = {}

    def step(self, params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray]) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1 ** self.t
        bc2 = 1.0 - b2 ** self.t
        for name, p in params.items():
            g = grads[name]
            if name not in self._m:
                self._m[name] = np.zeros_like(p)
                self._v[name] = np.zeros_like(p)
            m = self._m[name]
            v = self._v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * np.square(g)
            p -= (self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)).astype(p.dtype)


def save_checkpoint(path, kind: str, config: dict, params: Dict[str, np.ndarray],
                    meta: dict | None = None) -> None:
    header = {"format_version": FORMAT_VERSION, "kind": kind, "config": config}
    if meta:
        header.update(meta)
    arrays = {f"p:{name}": arr for name, arr in params.items()}
    np.savez(path, meta=np.array(json.dumps(header)), **arrays)


def load_checkpoint(path) -> tuple[dict, Dict[str, np.ndarray]]:
    """Returns (header, params). Rejects containers missing the version tag."""
    with np.load(path, allow_pickle=False) as z:
        if "meta" not in z:
            raise ConfigError(f"{path}: not a model checkpoint (no meta entry)")
        header = json.loads(str(z["meta"]))
        params = {key[2:]: z[key] for key in z.files if key.startswith("p:")}
    if "format_version" not in header:
        raise ConfigError(f"{path}: checkpoint missing format_version")
    if header["format_version"] > FORMAT_VERSION:
        raise ConfigError(
            f"{path}: checkpoint format {header['format_version']} is newer "
            f"than supported ({FORMAT_VERSION})")
    return header, params


def expect_kind(header: dict, kind: str, path) -> None:
    if header.get("kind") != kind:
        raise ConfigError(
            f"{path}: checkpoint holds a {header.get('kind')!r} model, "
            f"expected {kind!r}")
