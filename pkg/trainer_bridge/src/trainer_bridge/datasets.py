"""Dataset registry: CIFAR variants via torchvision plus a synthetic set.

The worker owns download and caching; the engine only ever names datasets
by id.  All splits come back as normalized float32 tensors, which for the
full CIFAR sets costs a few hundred MB of RAM; the subset ids exist so
protocol-level smoke runs stay cheap.
"""

import logging
from typing import NamedTuple

import torch

from .errors import DatasetUnavailable, ProtocolViolation

log = logging.getLogger(__name__)

CIFAR_MEAN = (0.4914, 0.4822, 0.4465)
CIFAR_STD = (0.2470, 0.2435, 0.2616)


class Splits(NamedTuple):
    train_x: torch.Tensor
    train_y: torch.Tensor
    val_x: torch.Tensor
    val_y: torch.Tensor
    num_classes: int


def _normalize(data, targets) -> tuple:
    # data: uint8 NHWC as torchvision stores it
    x = torch.from_numpy(data).permute(0, 3, 1, 2).float().div_(255.0)
    mean = torch.tensor(CIFAR_MEAN).view(1, 3, 1, 1)
    std = torch.tensor(CIFAR_STD).view(1, 3, 1, 1)
    x = (x - mean) / std
    return x, torch.tensor(targets, dtype=torch.long)


def _cifar(name: str, data_dir, download: bool) -> tuple:
    import torchvision

    cls = {"cifar10": torchvision.datasets.CIFAR10,
           "cifar100": torchvision.datasets.CIFAR100}[name]
    try:
        train = cls(root=str(data_dir), train=True, download=download)
        test = cls(root=str(data_dir), train=False, download=download)
    except (RuntimeError, OSError, ValueError) as exc:
        raise DatasetUnavailable(
            f"{name} is not cached under {data_dir} and could not be "
            f"downloaded: {exc}") from exc
    return train, test


def synth10(n_train: int = 2000, n_val: int = 1000) -> Splits:
    """Deterministic 10-class blob images, learnable in a few epochs.

    Every image is its class prototype plus Gaussian pixel noise, drawn
    from a fixed-seed generator so repeated loads are bitwise identical.
    """
    gen = torch.Generator().manual_seed(909)
    protos = torch.randn(10, 3, 32, 32, generator=gen)

    def split(n):
        y = torch.arange(n) % 10
        x = protos[y] + 0.75 * torch.randn(n, 3, 32, 32, generator=gen)
        return x, y

    train_x, train_y = split(n_train)
    val_x, val_y = split(n_val)
    return Splits(train_x, train_y, val_x, val_y, 10)


def load_dataset(name: str, data_dir, download: bool = False) -> Splits:
    """Resolve a protocol dataset id to tensors; raises on unknown ids."""
    if name == "synth10":
        return synth10()
    if name in ("cifar10", "cifar10-subset-2k"):
        train, test = _cifar("cifar10", data_dir, download)
        train_x, train_y = _normalize(train.data, train.targets)
        val_x, val_y = _normalize(test.data, test.targets)
        if name == "cifar10-subset-2k":
            train_x, train_y = train_x[:2000], train_y[:2000]
            val_x, val_y = val_x[:1000], val_y[:1000]
        return Splits(train_x, train_y, val_x, val_y, 10)
    if name == "cifar100":
        train, test = _cifar("cifar100", data_dir, download)
        train_x, train_y = _normalize(train.data, train.targets)
        val_x, val_y = _normalize(test.data, test.targets)
        return Splits(train_x, train_y, val_x, val_y, 100)
    raise ProtocolViolation(f"unknown dataset id {name!r}")
