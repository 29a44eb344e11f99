"""Flat float64 parameter storage with a deterministic named layout."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ShapeError
from .graph import Node, leaf

__all__ = ["ParamLayout", "ParamVector"]


@dataclass(frozen=True)
class ParamLayout:
    """Ordered (name, shape) table mapping tensors into one flat vector.

    Order is fixed at construction and identical between a vector and its
    gradient, so optimizer updates are plain element-wise array operations.
    """

    names: tuple[str, ...]
    shapes: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        if len(self.names) != len(self.shapes):
            raise ShapeError("layout names and shapes differ in length")
        if len(set(self.names)) != len(self.names):
            raise ShapeError("layout names must be unique")

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(int(np.prod(s, dtype=np.int64)) for s in self.shapes)

    @property
    def offsets(self) -> tuple[int, ...]:
        out, off = [], 0
        for s in self.sizes:
            out.append(off)
            off += s
        return tuple(out)

    @property
    def size(self) -> int:
        return sum(self.sizes)

    def slot(self, name: str) -> tuple[int, int, tuple[int, ...]]:
        """(offset, size, shape) of one tensor."""
        try:
            i = self.names.index(name)
        except ValueError:
            raise KeyError(f"no parameter named '{name}' in layout") from None
        return self.offsets[i], self.sizes[i], self.shapes[i]


class ParamVector:
    """All parameters of a model as one flat float64 array."""

    __slots__ = ("layout", "data")

    def __init__(self, layout: ParamLayout, data: np.ndarray):
        data = np.asarray(data, dtype=np.float64)
        if data.shape != (layout.size,):
            raise ShapeError(f"expected flat data of shape ({layout.size},), got {data.shape}")
        self.layout = layout
        self.data = data

    @classmethod
    def zeros(cls, layout: ParamLayout) -> "ParamVector":
        return cls(layout, np.zeros(layout.size))

    def copy(self) -> "ParamVector":
        return ParamVector(self.layout, self.data.copy())

    def view(self, name: str) -> np.ndarray:
        """Reshaped view into the flat storage (shares memory)."""
        off, size, shape = self.layout.slot(name)
        return self.data[off : off + size].reshape(shape)

    def unflatten(self) -> dict[str, np.ndarray]:
        return {n: self.view(n) for n in self.layout.names}

    @classmethod
    def flatten(cls, layout: ParamLayout, tensors: dict[str, np.ndarray]) -> "ParamVector":
        out = cls.zeros(layout)
        for n in layout.names:
            out.view(n)[...] = np.asarray(tensors[n], dtype=np.float64)
        return out

    def leaves(self) -> dict[str, Node]:
        """Fresh named graph leaves over views of the flat storage."""
        return {n: leaf(self.view(n), name=n) for n in self.layout.names}

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, ParamVector)
            and self.layout == other.layout
            and np.array_equal(self.data, other.data)
        )

    def __repr__(self):  # pragma: no cover - debugging aid
        return f"ParamVector({len(self.layout.names)} tensors, size={self.layout.size})"
