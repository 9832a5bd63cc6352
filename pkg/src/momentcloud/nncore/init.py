"""Seeded weight initialization."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..rng import RandomStream
from .tensor import Tensor

LAYER_KINDS = frozenset({
    "linear", "shared_mlp", "relu", "sigmoid", "maxpool_over_axis",
    "softmax_xent", "square_unit", "high_order_unit", "learnable_order_unit",
})


@dataclass(frozen=True)
class LayerSpec:
    """Shape and init scheme of one layer's weight tensor."""

    kind: str
    in_dim: int
    out_dim: int
    std: float | None = None  # None: fan-in scaled, sqrt(2 / in_dim)

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.in_dim <= 0 or self.out_dim <= 0:
            raise ValueError("layer dimensions must be positive")
        if self.std is not None and self.std < 0:
            raise ValueError("std must be >= 0")


def init_weights(spec: LayerSpec, seed: int) -> Tensor:
    """Normal(0, std) weight matrix, deterministic per seed.

    std defaults to sqrt(2 / in_dim) when the layer spec leaves it unset.
    """
    std = spec.std if spec.std is not None else float(np.sqrt(2.0 / spec.in_dim))
    stream = RandomStream(seed)
    data = stream.normal(spec.in_dim * spec.out_dim, std).reshape(spec.in_dim, spec.out_dim)
    return Tensor(data, requires_grad=True, name=f"{spec.kind}[{spec.in_dim}x{spec.out_dim}]")
