"""Learnable parameter container with gradient and Adam moment slots."""

from __future__ import annotations

from typing import Iterator

import numpy as np

from .diffgraph import Parameter

INIT_SCALE = 0.08


class ModelParams:
    """Ordered collection of named parameters.

    Insertion order is the persistence order and the gradient reduction order.
    """

    def __init__(self):
        self._params: dict[str, Parameter] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def add(self, name: str, value: np.ndarray) -> Parameter:
        if name in self._params:
            raise KeyError(f"duplicate parameter {name!r}")
        p = Parameter(name, value)
        self._params[name] = p
        self.grads[name] = np.zeros_like(p.value)
        self.m[name] = np.zeros_like(p.value)
        self.v[name] = np.zeros_like(p.value)
        return p

    def uniform(self, name: str, shape, rng: np.random.Generator, scale: float = INIT_SCALE) -> Parameter:
        return self.add(name, rng.uniform(-scale, scale, size=shape))

    def __getitem__(self, name: str) -> Parameter:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def __len__(self) -> int:
        return len(self._params)

    def items(self):
        return self._params.items()

    def values(self):
        return self._params.values()

    def zero_grad(self):
        for g in self.grads.values():
            g.fill(0.0)

    def accumulate(self, grads: dict[str, np.ndarray]):
        for name in self._params:
            g = grads.get(name)
            if g is not None:
                self.grads[name] += g

    def size(self) -> int:
        return int(sum(p.value.size for p in self._params.values()))

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: p.value.copy() for k, p in self._params.items()}

    def restore(self, snap: dict[str, np.ndarray]):
        for k, v in snap.items():
            self._params[k].value[...] = v

    def zero_(self):
        """Set every parameter to zero (analytic test configurations)."""
        for p in self._params.values():
            p.value.fill(0.0)
