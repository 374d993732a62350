"""Trainable-scope resolution against hand-enumerated parameter sets."""

import logging

import pytest
import torch

from trainer_bridge.errors import ProtocolViolation
from trainer_bridge.model import materialize
from trainer_bridge.scopes import apply_scope, resolve_scope, set_train_mode

from archspecs import arch_dict, block, conv_spec, pool_spec

BLOCK0 = {"layers.0.weight", "layers.0.bias", "layers.1.weight", "layers.1.bias"}
BLOCK2 = {"layers.4.weight", "layers.4.bias"}
BLOCK3 = {"layers.5.weight", "layers.5.bias"}
HEAD = {"head.weight", "head.bias"}


def test_full_scope_is_every_parameter(five_block_arch):
    model = materialize(five_block_arch)
    names, effective = resolve_scope(model, "full")
    assert effective == "full"
    assert names == BLOCK0 | BLOCK2 | BLOCK3 | HEAD


def test_predicted_only_matches_hand_enumerated_set(five_block_arch):
    model = materialize(five_block_arch)
    names, effective = resolve_scope(model, "predicted_only", [0, 2],
                                     train_head=True)
    assert effective == "predicted_only"
    assert names == BLOCK0 | BLOCK2 | HEAD
    names, _ = resolve_scope(model, "predicted_only", [0, 2], train_head=False)
    assert names == BLOCK0 | BLOCK2


def test_predicted_only_without_indices_is_a_violation(five_block_arch):
    model = materialize(five_block_arch)
    with pytest.raises(ProtocolViolation):
        resolve_scope(model, "predicted_only", [])
    with pytest.raises(ProtocolViolation):
        resolve_scope(model, "predicted_only", [7])
    with pytest.raises(ProtocolViolation):
        resolve_scope(model, "unheard_of")


def test_bn_only_is_exactly_normalization(five_block_arch):
    model = materialize(five_block_arch)
    names, effective = resolve_scope(model, "bn_only")
    assert effective == "bn_only"
    assert names == {"layers.1.weight", "layers.1.bias",
                     "layers.5.weight", "layers.5.bias"}


def test_bn_only_on_norm_free_network_falls_back_to_full(caplog):
    a = arch_dict([block("c", 8, [conv_spec(0, (3, 32, 32), 8)]),
                   block("p", 8, [pool_spec(1, (8, 32, 32))])])
    model = materialize(a)
    with caplog.at_level(logging.WARNING):
        names, effective = resolve_scope(model, "bn_only")
    assert effective == "full"
    assert names == {n for n, _ in model.named_parameters()}
    assert any("widening to full" in r.message for r in caplog.records)


def test_apply_scope_sets_requires_grad_exactly(five_block_arch):
    model = materialize(five_block_arch)
    names, _ = apply_scope(model, "predicted_only", [2], train_head=False)
    for name, param in model.named_parameters():
        assert param.requires_grad == (name in names), name


def test_frozen_batchnorm_modules_stay_in_eval_mode(five_block_arch):
    model = materialize(five_block_arch)
    trainable, _ = apply_scope(model, "predicted_only", [0], train_head=True)
    set_train_mode(model, trainable)
    assert model.layers[1].training       # block 0's norm is being trained
    assert not model.layers[5].training   # block 3's norm is frozen
    before = model.layers[5].running_mean.clone()
    model(torch.randn(4, 3, 32, 32))
    assert torch.equal(model.layers[5].running_mean, before)
    assert not torch.equal(model.layers[1].running_mean,
                           torch.zeros_like(model.layers[1].running_mean))
