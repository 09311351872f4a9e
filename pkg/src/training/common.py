import hashlib
import random
from contextlib import contextmanager
from typing import Iterable, Iterator

import numpy as np
import torch
import torch.nn as nn


def seed_everything(seed: int):
    random.seed(seed)
    np.random.seed(seed % (2**32))
    torch.manual_seed(seed)


def parameter_checksum(module: nn.Module) -> str:
    """SHA-256 over every tensor of the state dict, in key order."""
    digest = hashlib.sha256()
    for key, tensor in module.state_dict().items():
        digest.update(key.encode("utf-8"))
        digest.update(tensor.detach().cpu().contiguous().numpy().tobytes())
    return digest.hexdigest()


@contextmanager
def frozen(modules: Iterable[nn.Module]) -> Iterator[None]:
    """Disables gradients of every parameter inside the block and restores the flags after."""
    saved = [
        (parameter, parameter.requires_grad)
        for module in modules
        for parameter in module.parameters()
    ]
    for parameter, _ in saved:
        parameter.requires_grad_(False)
    try:
        yield
    finally:
        for parameter, flag in saved:
            parameter.requires_grad_(flag)


def batched(tensor: torch.Tensor, batch_size: int) -> Iterator[torch.Tensor]:
    for start in range(0, tensor.shape[0], batch_size):
        yield tensor[start : start + batch_size]
