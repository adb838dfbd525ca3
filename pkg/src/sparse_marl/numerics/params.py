"""Helpers for parameter collections stored as (nested) dataclasses of Tensors."""

from __future__ import annotations

import dataclasses

import numpy as np

from ..errors import CheckpointMismatch
from .tensor import Tensor, affine


def uniform(rng: np.random.Generator, shape, fan_in: int) -> Tensor:
    """Trainable tensor drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in))."""
    bound = 1.0 / np.sqrt(max(fan_in, 1))
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


@dataclasses.dataclass
class Linear:
    """Affine map ``x @ W + b``."""

    W: Tensor
    b: Tensor

    @classmethod
    def init(cls, rng: np.random.Generator, d_in: int, d_out: int) -> "Linear":
        return cls(uniform(rng, (d_in, d_out), d_in), uniform(rng, (d_out,), d_in))

    def __call__(self, x):
        return affine(x, self.W, self.b)


def named_tensors(obj, prefix: str = "") -> dict[str, Tensor]:
    """Flatten a dataclass tree into ``{"a.b.W": Tensor}`` in field order."""
    out: dict[str, Tensor] = {}
    if obj is None:
        return out
    for f in dataclasses.fields(obj):
        value = getattr(obj, f.name)
        name = f"{prefix}{f.name}"
        if isinstance(value, Tensor):
            out[name] = value
        elif dataclasses.is_dataclass(value):
            out.update(named_tensors(value, name + "."))
    return out


def _map_tensors(obj, fn):
    if obj is None:
        return None
    changes = {}
    for f in dataclasses.fields(obj):
        value = getattr(obj, f.name)
        if isinstance(value, Tensor):
            changes[f.name] = fn(value)
        elif dataclasses.is_dataclass(value):
            changes[f.name] = _map_tensors(value, fn)
    return dataclasses.replace(obj, **changes)


def clone(obj, requires_grad: bool = True):
    """Deep copy with fresh storage."""
    return _map_tensors(obj, lambda t: Tensor(t.data.copy(), requires_grad=requires_grad))


def detached(obj):
    """Same storage, no gradient tracking (for acting and target evaluation)."""
    return _map_tensors(obj, lambda t: t.detach())


def load_arrays(obj, arrays: dict[str, np.ndarray], prefix: str = "") -> None:
    """Copy arrays into the tensors of ``obj`` in place, checking names and shapes."""
    tensors = named_tensors(obj, prefix)
    missing = sorted(set(tensors) - set(arrays))
    if missing:
        raise CheckpointMismatch(f"missing parameters: {missing}")
    for name, t in tensors.items():
        src = np.asarray(arrays[name], dtype=np.float64)
        if src.shape != t.shape:
            raise CheckpointMismatch(f"{name}: shape {src.shape} != expected {t.shape}")
        t.data[...] = src


def copy_into(dst, src) -> None:
    """Overwrite ``dst`` tensors with a bitwise copy of ``src`` tensors."""
    load_arrays(dst, {k: v.data for k, v in named_tensors(src).items()})


def zeros_like(obj):
    return _map_tensors(obj, lambda t: Tensor(np.zeros_like(t.data), requires_grad=t.requires_grad))


__all__ = [
    "Linear",
    "clone",
    "copy_into",
    "detached",
    "load_arrays",
    "named_tensors",
    "uniform",
    "zeros_like",
]
