"""Reverse-mode gradients versus central differences on sampled coordinates."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .diffgraph import Node, Tape
from .numerics import GradCheckReport, compare_gradients, finite_difference_gradient


def sample_coords(params, analytic: dict[str, np.ndarray], rng: np.random.Generator,
                  extra: int = 0) -> list[tuple[str, int]]:
    """Per tensor: one uniformly random coordinate and one random coordinate whose
    analytic gradient is non-zero (when there is one); then ``extra`` more at random."""
    coords = []
    names = list(params)
    for name in names:
        size = params[name].value.size
        coords.append((name, int(rng.integers(size))))
        nz = np.flatnonzero(analytic.get(name, np.zeros(size)).reshape(-1))
        if nz.size:
            coords.append((name, int(rng.choice(nz))))
    for _ in range(extra):
        name = names[int(rng.integers(len(names)))]
        coords.append((name, int(rng.integers(params[name].value.size))))
    return list(dict.fromkeys(coords))


def check_gradient(params, loss_fn: Callable[[Tape], Node], rng: np.random.Generator, min_coords: int = 10,
                   step: float = 1e-4, tolerance: float = 1e-4) -> GradCheckReport:
    tape = Tape()
    analytic = tape.backward(loss_fn(tape))
    coords = sample_coords(params, analytic, rng)
    if len(coords) < min_coords:
        coords = sample_coords(params, analytic, rng, extra=min_coords - len(coords))
    numeric = finite_difference_gradient(lambda: float(loss_fn(Tape()).value), params, step, coords)
    return compare_gradients(analytic, numeric, tolerance)
