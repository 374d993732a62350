"""One evaluation: materialize, scope, warm up, train, score.

The learning rate rises linearly from zero to the requested target across
every optimizer step of the run; the realized per-step values are echoed
back in the response so clients can audit the schedule.
"""

import math
import time

import torch
from torch import nn

from .datasets import Splits, load_dataset
from .errors import ProtocolViolation
from .model import MaterializedModel, materialize, param_count
from .scopes import apply_scope, set_train_mode

REQUIRED_FIELDS = ("arch", "dataset", "epochs", "batch_size", "lr_target",
                   "trainable_scope", "predicted_blocks", "train_head", "seed")

EVAL_BATCH = 512


def warmup_schedule(total_steps: int, lr_target: float) -> list:
    """Per-step learning rate, linear from zero up to exactly lr_target."""
    if total_steps < 1:
        return []
    if total_steps == 1:
        return [lr_target]
    return [lr_target * t / (total_steps - 1) for t in range(total_steps)]


def _accuracy(model: nn.Module, x: torch.Tensor, y: torch.Tensor, device) -> float:
    model.eval()
    correct = 0
    with torch.no_grad():
        for lo in range(0, x.shape[0], EVAL_BATCH):
            logits = model(x[lo:lo + EVAL_BATCH].to(device))
            correct += int((logits.argmax(1).cpu() == y[lo:lo + EVAL_BATCH]).sum())
    return correct / x.shape[0]


def train_model(model: MaterializedModel, data: Splits, request: dict,
                device="cpu") -> dict:
    """Train under the requested scope and return the response payload."""
    epochs = int(request["epochs"])
    batch_size = int(request["batch_size"])
    if epochs < 0 or batch_size < 1:
        raise ProtocolViolation(
            f"bad budget: epochs={request['epochs']!r} "
            f"batch_size={request['batch_size']!r}")
    start = time.monotonic()
    trainable, effective = apply_scope(
        model, request["trainable_scope"], request["predicted_blocks"],
        bool(request["train_head"]))
    params = [p for n, p in model.named_parameters() if n in trainable]
    n = data.train_x.shape[0]
    steps = epochs * math.ceil(n / batch_size) if params else 0
    schedule = warmup_schedule(steps, float(request["lr_target"]))
    recorded = []
    if params:
        optimizer = torch.optim.SGD(params, lr=0.0)
        loss_fn = nn.CrossEntropyLoss()
        shuffler = torch.Generator().manual_seed(int(request["seed"]))
        step = 0
        for _ in range(epochs):
            set_train_mode(model, trainable)
            order = torch.randperm(n, generator=shuffler)
            for lo in range(0, n, batch_size):
                idx = order[lo:lo + batch_size]
                lr = schedule[step]
                for group in optimizer.param_groups:
                    group["lr"] = lr
                recorded.append(lr)
                optimizer.zero_grad()
                loss = loss_fn(model(data.train_x[idx].to(device)),
                               data.train_y[idx].to(device))
                loss.backward()
                optimizer.step()
                step += 1
    accuracy = _accuracy(model, data.val_x, data.val_y, device)
    return {"accuracy": float(accuracy),
            "param_count": param_count(model),
            "wall_ms": (time.monotonic() - start) * 1000.0,
            "lr_schedule": recorded,
            "trainable_scope_used": effective}


def run_evaluation(request: dict, *, data_dir, device="cpu",
                   download: bool = False) -> dict:
    """Full request handler used by the serve loop."""
    missing = [k for k in REQUIRED_FIELDS if k not in request]
    if missing:
        raise ProtocolViolation(f"request is missing fields: {', '.join(missing)}")
    torch.manual_seed(int(request["seed"]))
    torch.use_deterministic_algorithms(True, warn_only=True)
    data = load_dataset(request["dataset"], data_dir, download=download)
    model = materialize(request["arch"]).to(device)
    if data.num_classes != model.num_classes:
        raise ProtocolViolation(
            f"dataset {request['dataset']!r} has {data.num_classes} classes, "
            f"the architecture head emits {model.num_classes}")
    return train_model(model, data, request, device=device)
