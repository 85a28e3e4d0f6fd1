"""Forward and reverse embeddings of every span up to a maximum length.

Spans are filled one length at a time. For length ``l`` the forward cells are
``h_fwd(i, i+l-1) = step(h_fwd(i, i+l-2), c[i+l-1])`` and the reverse cells are
``h_rev(i, i+l-1) = step(h_rev(i+1, i+l-1), c[i])``, so every cell costs one
LSTM step and all starts of one length share a single batched step.
Positions are 0-based and spans inclusive.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .diffgraph import Node, Tape
from .encoder import LstmCell


@dataclass
class SegmentTable:
    fwd: dict[int, Node]  # length -> (n - length + 1, d); row i is span (i, i + length - 1)
    rev: dict[int, Node]
    max_len: int
    n: int

    def has(self, i: int, j: int) -> bool:
        return 0 <= i <= j < self.n and j - i + 1 <= self.max_len

    def cell(self, i: int, j: int, direction: str = "fwd") -> np.ndarray:
        if not self.has(i, j):
            raise KeyError(f"span ({i}, {j}) not in table (n={self.n}, L={self.max_len})")
        tab = self.fwd if direction == "fwd" else self.rev
        return tab[j - i + 1].value[i]

    def cell_count(self) -> int:
        return int(sum(node.value.shape[0] for node in self.fwd.values()))


def build_segment_table(tape: Tape, fwd: LstmCell, rev: LstmCell, context: Node, max_len: int) -> SegmentTable:
    if max_len < 1:
        raise ValueError("max segment length must be >= 1")
    n = context.value.shape[0]
    L = min(max_len, n)
    fwd_cells: dict[int, Node] = {}
    rev_cells: dict[int, Node] = {}
    sf = sr = None
    for length in range(1, L + 1):
        m = n - length + 1
        if length == 1:
            prev_f = fwd.zero_state(tape, m)
            prev_r = rev.zero_state(tape, m)
        else:
            prev_f = (sf[0][:m], sf[1][:m])
            prev_r = (sr[0][1 : m + 1], sr[1][1 : m + 1])
        sf = fwd.step(tape, context[length - 1 : n], prev_f)
        sr = rev.step(tape, context[0:m], prev_r)
        fwd_cells[length] = sf[0]
        rev_cells[length] = sr[0]
    return SegmentTable(fwd_cells, rev_cells, L, n)


def encode_span_naive(cell: LstmCell, context: np.ndarray, i: int, j: int, reverse: bool = False) -> np.ndarray:
    """From-scratch encoding of ``context[i..j]`` with plain numpy (no tape).

    Used as an independent check on :func:`build_segment_table`.
    """
    W, b, d = cell.W.value, cell.b.value, cell.hidden
    h = np.zeros(d)
    c = np.zeros(d)
    order = range(j, i - 1, -1) if reverse else range(i, j + 1)
    for t in order:
        z = W @ np.concatenate([context[t], h]) + b
        s = 1.0 / (1.0 + np.exp(-z[: 3 * d]))
        g = np.tanh(z[3 * d :])
        c = s[:d] * g + s[d : 2 * d] * c
        h = s[2 * d :] * np.tanh(c)
    return h
