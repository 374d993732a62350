"""Trainable-scope rules: which parameters a request may update.

predicted_only trains exactly the parameters of the listed blocks (plus
the classifier head when the request asks for it), bn_only trains exactly
the normalization parameters, full trains everything.  A bn_only request
against a normalization-free network widens to full with a warning, per
the client's documented fallback chain.
"""

import logging

from torch import nn

from .errors import ProtocolViolation
from .model import MaterializedModel

log = logging.getLogger(__name__)

SCOPES = ("predicted_only", "bn_only", "full")


def resolve_scope(model: MaterializedModel, scope: str, predicted_blocks=(),
                  train_head: bool = True) -> tuple:
    """Return (set of trainable parameter names, scope actually in effect)."""
    if scope not in SCOPES:
        raise ProtocolViolation(f"unknown trainable scope {scope!r}")
    all_names = {n for n, _ in model.named_parameters()}
    if scope == "full":
        return all_names, "full"
    if scope == "predicted_only":
        if not predicted_blocks:
            raise ProtocolViolation(
                "scope predicted_only requires at least one predicted block index")
        names = set()
        for index in predicted_blocks:
            if not isinstance(index, int) or not 0 <= index < model.n_blocks:
                raise ProtocolViolation(
                    f"predicted block index {index!r} outside 0..{model.n_blocks - 1}")
            names.update(model.block_parameter_names(index))
        if train_head:
            names.update(model.head_parameter_names())
        return names, "predicted_only"
    names = set(model.norm_parameter_names())
    if not names:
        log.warning("bn_only scope on a normalization-free network; "
                    "widening to full")
        return all_names, "full"
    return names, "bn_only"


def apply_scope(model: MaterializedModel, scope: str, predicted_blocks=(),
                train_head: bool = True) -> tuple:
    """Set requires_grad per the scope; returns (trainable names, effective scope)."""
    names, effective = resolve_scope(model, scope, predicted_blocks, train_head)
    for name, param in model.named_parameters():
        param.requires_grad_(name in names)
    return names, effective


def set_train_mode(model: nn.Module, trainable: set) -> None:
    """train() everywhere, then freeze running stats of untouched BN layers."""
    model.train()
    for mod_name, mod in model.named_modules():
        if isinstance(mod, nn.modules.batchnorm._BatchNorm):
            owned = {f"{mod_name}.{n}" for n, _ in mod.named_parameters(recurse=False)}
            if owned and not owned & trainable:
                mod.eval()
