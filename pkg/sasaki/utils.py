import os
import random
from typing import Callable, Optional

import numpy as np
import torch
from rich.console import Console

__all__ = [
    "DTYPE",
    "console",
    "log",
    "set_log_file",
    "seed_everything",
    "make_generator",
    "as_tensor",
    "max_abs",
    "central_difference",
]

DTYPE = torch.float64

console = Console(stderr=True)
_log_ptr = None


def set_log_file(path: Optional[str]):
    global _log_ptr
    if _log_ptr is not None:
        _log_ptr.close()
        _log_ptr = None
    if path is not None:
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        _log_ptr = open(path, "a+")


def log(*args, **kwargs):
    console.print(*args, **kwargs)
    if _log_ptr is not None:
        print(*args, file=_log_ptr)
        _log_ptr.flush()  # write immediately to file


def seed_everything(seed: int):
    random.seed(seed)
    os.environ["PYTHONHASHSEED"] = str(seed)
    np.random.seed(seed % 2**32)
    torch.manual_seed(seed)


def make_generator(seed: int) -> torch.Generator:
    generator = torch.Generator()
    generator.manual_seed(seed)
    return generator


def as_tensor(values) -> torch.Tensor:
    if isinstance(values, torch.Tensor):
        return values.to(DTYPE)
    return torch.tensor(values, dtype=DTYPE)


def max_abs(t: torch.Tensor) -> float:
    if t.numel() == 0:
        return 0.0
    return t.detach().abs().max().item()


def central_difference(fn: Callable[[torch.Tensor], torch.Tensor], x: torch.Tensor, h: float = 1e-5) -> torch.Tensor:
    """Jacobian of ``fn`` at ``x`` by central differences, laid out like ``jacfwd``: [*out, n]."""
    columns = []
    for i in range(x.shape[0]):
        offset = torch.zeros_like(x)
        offset[i] = h
        columns.append((fn(x + offset) - fn(x - offset)) / (2 * h))
    return torch.stack(columns, dim=-1)
