"""Seeding and small torch helpers."""

import random
from contextlib import contextmanager
from typing import Iterator, Optional

import numpy as np
import torch
import torch.nn as nn


def set_seeds(seed: int) -> None:
    """Seed python, numpy and torch global generators."""
    random.seed(seed)
    np.random.seed(seed)
    torch.manual_seed(seed)


def make_generator(seed: int) -> torch.Generator:
    """CPU generator seeded for explicit randomness plumbing."""
    generator = torch.Generator()
    generator.manual_seed(seed)
    return generator


def set_threads(threads: Optional[int]) -> None:
    if threads is not None and threads > 0:
        torch.set_num_threads(threads)


@contextmanager
def frozen(module: Optional[nn.Module]) -> Iterator[None]:
    """Temporarily disable gradients for every parameter of ``module``."""
    if module is None:
        yield
        return
    previous = [(p, p.requires_grad) for p in module.parameters()]
    for param, _ in previous:
        param.requires_grad_(False)
    try:
        yield
    finally:
        for param, flag in previous:
            param.requires_grad_(flag)


def count_parameters(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())
