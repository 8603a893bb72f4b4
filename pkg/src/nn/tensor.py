# src/nn/tensor.py
from collections import OrderedDict
from dataclasses import dataclass
from typing import Dict, Iterator, Mapping, Optional, Tuple

import numpy as np

from src.errors import ShapeError


@dataclass(eq=False)
class Tensor:
    """A real array with an optional same-shape gradient slot."""

    data: np.ndarray
    grad: Optional[np.ndarray] = None

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.grad is not None and self.grad.shape != self.data.shape:
            raise ShapeError(f"gradient shape {self.grad.shape} != data shape {self.data.shape}")

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return int(self.data.size)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    @classmethod
    def zeros(cls, shape: Tuple[int, ...], dtype=np.float32) -> "Tensor":
        return cls(np.zeros(shape, dtype=dtype))


class ModelParams:
    """Named, ordered parameter tensors of one or more networks."""

    def __init__(self, tensors: Mapping[str, Tensor]):
        self.tensors: "OrderedDict[str, Tensor]" = OrderedDict(tensors)

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self.tensors)

    def __len__(self) -> int:
        return len(self.tensors)

    def items(self):
        return self.tensors.items()

    @property
    def total_count(self) -> int:
        return sum(t.size for t in self.tensors.values())

    def gradients(self) -> Dict[str, np.ndarray]:
        return {
            name: t.grad if t.grad is not None else np.zeros_like(t.data)
            for name, t in self.tensors.items()
        }

    def snapshot(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((name, t.data.copy()) for name, t in self.tensors.items())

    def load(self, arrays: Mapping[str, np.ndarray]) -> None:
        missing = set(self.tensors) - set(arrays)
        extra = set(arrays) - set(self.tensors)
        if missing or extra:
            raise ShapeError(f"parameter names differ: missing {sorted(missing)}, unexpected {sorted(extra)}")
        for name, tensor in self.tensors.items():
            value = np.asarray(arrays[name])
            if value.shape != tensor.shape:
                raise ShapeError(f"parameter '{name}' expects shape {tensor.shape}, got {value.shape}")
            tensor.data = value.astype(tensor.data.dtype, copy=True)

    def prefixed(self, prefix: str) -> "ModelParams":
        return ModelParams((f"{prefix}{name}", t) for name, t in self.tensors.items())

    def merged(self, other: "ModelParams") -> "ModelParams":
        overlap = set(self.tensors) & set(other.tensors)
        if overlap:
            raise ValueError(f"duplicate parameter names: {sorted(overlap)}")
        return ModelParams(list(self.tensors.items()) + list(other.tensors.items()))
