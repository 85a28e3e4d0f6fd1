"""Token front ends and the bidirectional LSTM context encoder.

The LSTM cell is the common variant: input, forget and output gates, a tanh
candidate, tanh on the cell output and no peepholes. Gates are packed in the
order ``[input, forget, output, candidate]`` in one weight matrix of shape
``(4d, in + d)`` acting on ``[x; h]``.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np

from . import diffgraph as dg
from .diffgraph import Node, Tape
from .params import INIT_SCALE, ModelParams

UNK = "<unk>"


class LstmCell:
    """Named view onto the weights of one LSTM cell inside a :class:`ModelParams`."""

    def __init__(self, params: ModelParams, prefix: str, n_in: int, hidden: int, rng=None):
        self.prefix = prefix
        self.n_in = n_in
        self.hidden = hidden
        w_name, b_name = f"{prefix}.W", f"{prefix}.b"
        if w_name not in params:
            params.uniform(w_name, (4 * hidden, n_in + hidden), rng)
            b = rng.uniform(-INIT_SCALE, INIT_SCALE, size=4 * hidden)
            b[hidden : 2 * hidden] = 1.0  # forget gate
            params.add(b_name, b)
        self.W = params[w_name]
        self.b = params[b_name]
        if self.W.shape != (4 * hidden, n_in + hidden):
            raise dg.ShapeError(f"{w_name} has shape {self.W.shape}")

    def zero_state(self, tape: Tape, rows: int) -> tuple[Node, Node]:
        z = np.zeros((rows, self.hidden))
        return tape.const(z), tape.const(z)

    def step(self, tape: Tape, x: Node, state: tuple[Node, Node]) -> tuple[Node, Node]:
        """One step for a batch of rows; ``x`` is (rows, n_in), state is (h, c)."""
        h, c = state
        d = self.hidden
        z = dg.affine(tape.param(self.W), dg.concat([x, h], axis=-1), tape.param(self.b))
        gates = dg.sigmoid(z[:, : 3 * d])
        cand = dg.tanh(z[:, 3 * d :])
        c_new = gates[:, :d] * cand + gates[:, d : 2 * d] * c
        h_new = gates[:, 2 * d :] * dg.tanh(c_new)
        return h_new, c_new

    def run(self, tape: Tape, xs: Node, reverse: bool = False) -> list[Node]:
        """Run over the rows of ``xs`` (T, n_in); returns per-position (1, d) hidden states in input order."""
        T = xs.value.shape[0]
        state = self.zero_state(tape, 1)
        hs: list[Node] = [None] * T  # type: ignore[list-item]
        order = range(T - 1, -1, -1) if reverse else range(T)
        for t in order:
            state = self.step(tape, xs[t : t + 1], state)
            hs[t] = state[0]
        return hs


class BiLstm:
    def __init__(self, params: ModelParams, prefix: str, n_in: int, hidden: int, rng=None):
        self.fwd = LstmCell(params, f"{prefix}.fwd", n_in, hidden, rng)
        self.bwd = LstmCell(params, f"{prefix}.bwd", n_in, hidden, rng)

    @property
    def out_dim(self) -> int:
        return 2 * self.fwd.hidden


def encode_context(tape: Tape, encoder: BiLstm, xs: Node) -> Node:
    """Per-position context vectors ``c_i = [fwd h_i; bwd h_i]``, shape (T, 2d)."""
    if xs.value.ndim != 2 or xs.value.shape[0] == 0:
        raise ValueError("encode_context needs a non-empty (T, dim) input")
    f = encoder.fwd.run(tape, xs)
    b = encoder.bwd.run(tape, xs, reverse=True)
    return dg.concat([dg.concat(f, axis=0), dg.concat(b, axis=0)], axis=-1)


# -- strokes -----------------------------------------------------------------


def stroke_features(strokes: Sequence[np.ndarray]) -> list[np.ndarray]:
    """Turn raw (k, 2) point paths into (k, 4) vectors ``(x, y, dx, dy)``.

    Coordinates are min-max normalised to [0, 1] per axis over the whole
    instance; deltas are taken within a stroke and are zero at its first point.
    """
    pts = [np.asarray(s, dtype=np.float64).reshape(-1, 2) for s in strokes]
    if any(len(p) == 0 for p in pts):
        raise ValueError("empty stroke")
    allp = np.concatenate(pts, axis=0)
    lo = allp.min(axis=0)
    span = allp.max(axis=0) - lo
    span[span == 0] = 1.0
    out = []
    for p in pts:
        q = (p - lo) / span
        d = np.zeros_like(q)
        d[1:] = q[1:] - q[:-1]
        out.append(np.concatenate([q, d], axis=1))
    return out


class StrokeEmbedder:
    """BiLSTM over 4-dim point vectors; a stroke maps to both final hidden states."""

    def __init__(self, params: ModelParams, hidden: int, rng=None, prefix: str = "stroke"):
        self.lstm = BiLstm(params, prefix, 4, hidden, rng)

    @property
    def out_dim(self) -> int:
        return self.lstm.out_dim

    def embed(self, tape: Tape, strokes: Sequence[np.ndarray]) -> Node:
        """Embed every stroke of an instance; returns (n_strokes, 2*hidden).

        Strokes of equal length are batched together.
        """
        if len(strokes) == 0:
            raise ValueError("no strokes to embed")
        groups: dict[int, list[int]] = {}
        for k, s in enumerate(strokes):
            if len(s) == 0:
                raise ValueError("empty stroke")
            groups.setdefault(len(s), []).append(k)
        pieces, order = [], []
        for length, idx in sorted(groups.items()):
            batch = np.stack([np.asarray(strokes[k], dtype=np.float64) for k in idx])  # (B, len, 4)
            pieces.append(self._embed_batch(tape, batch))
            order.extend(idx)
        out = dg.concat(pieces, axis=0) if len(pieces) > 1 else pieces[0]
        if order != sorted(order):
            out = out[np.argsort(order)]
        return out

    def _embed_batch(self, tape: Tape, batch: np.ndarray) -> Node:
        B, T, _ = batch.shape
        fwd, bwd = self.lstm.fwd, self.lstm.bwd
        sf = fwd.zero_state(tape, B)
        for t in range(T):
            sf = fwd.step(tape, tape.const(batch[:, t, :]), sf)
        sb = bwd.zero_state(tape, B)
        for t in range(T - 1, -1, -1):
            sb = bwd.step(tape, tape.const(batch[:, t, :]), sb)
        return dg.concat([sf[0], sb[0]], axis=-1)


def embed_stroke(tape: Tape, embedder: StrokeEmbedder, points: np.ndarray) -> Node:
    """Fixed-length vector for one stroke of pre-normalised 4-dim points."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or len(points) == 0:
        raise ValueError("embed_stroke needs at least one 4-dim point")
    return embedder.embed(tape, [points])[0]


# -- symbols -----------------------------------------------------------------


class Vocab:
    """Symbol to row mapping; row 0 is reserved for unknown symbols."""

    def __init__(self, symbols: Sequence[str] = ()):
        self.itos = [UNK]
        self.stoi = {UNK: 0}
        for s in symbols:
            self.add(s)

    def add(self, s: str) -> int:
        if s not in self.stoi:
            self.stoi[s] = len(self.itos)
            self.itos.append(s)
        return self.stoi[s]

    def index(self, s: str) -> int:
        return self.stoi.get(s, 0)

    def encode(self, symbols: Sequence[str]) -> np.ndarray:
        return np.array([self.index(s) for s in symbols], dtype=np.int64)

    def __len__(self):
        return len(self.itos)


def embed_symbols(tape: Tape, symbols: Sequence[int], table: Node) -> Node:
    """Rows of the (learnable) embedding table; indices past the table map to UNK (row 0)."""
    idx = np.asarray(symbols, dtype=np.int64)
    n = table.value.shape[0]
    idx = np.where((idx >= 0) & (idx < n), idx, 0)
    return dg.lookup(table, idx)


def load_pretrained(path: str | Path, vocab: Vocab, dim: int, table: np.ndarray | None = None, rng=None) -> np.ndarray:
    """Fill an embedding table from ``symbol v1 ... v_dim`` lines.

    Symbols not yet in ``vocab`` are added. Rows without a pretrained vector
    keep their existing (or freshly drawn) values.
    """
    vectors = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != dim + 1:
                raise ValueError(f"{path}:{lineno}: expected symbol and {dim} values, got {len(parts) - 1}")
            try:
                vectors[parts[0]] = np.array([float(v) for v in parts[1:]])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-numeric embedding value") from None
    for s in vectors:
        vocab.add(s)
    rng = rng or np.random.default_rng(0)
    out = rng.uniform(-INIT_SCALE, INIT_SCALE, size=(len(vocab), dim))
    if table is not None:
        out[: len(table)] = table
    for s, v in vectors.items():
        out[vocab.index(s)] = v
    return out


# -- input layer ---------------------------------------------------------------

INPUT_KINDS = ("vectors", "strokes", "symbols")


class InputLayer:
    """Maps an instance's raw tokens to a (T, dim) node.

    ``vectors`` pass numeric tokens through, ``strokes`` pool each stroke's
    points with a :class:`StrokeEmbedder`, ``symbols`` look up a learnable
    embedding table.
    """

    def __init__(self, params: ModelParams, kind: str, dims, rng=None, input_dim: int | None = None,
                 vocab: Vocab | None = None):
        if kind not in INPUT_KINDS:
            raise ValueError(f"input kind must be one of {INPUT_KINDS}, got {kind!r}")
        self.kind = kind
        self.vocab = vocab
        if kind == "vectors":
            if not input_dim:
                raise ValueError("vector inputs need input_dim")
            self.out_dim = int(input_dim)
        elif kind == "strokes":
            self.strokes = StrokeEmbedder(params, dims.stroke, rng)
            self.out_dim = self.strokes.out_dim
        else:
            if vocab is None:
                raise ValueError("symbol inputs need a vocabulary")
            if "embed" not in params:
                params.uniform("embed", (len(vocab), dims.emb), rng)
            self.table = params["embed"]
            self.out_dim = self.table.shape[1]

    def __call__(self, tape: Tape, tokens) -> Node:
        if len(tokens) == 0:
            raise ValueError("empty input")
        if self.kind == "vectors":
            xs = np.asarray(tokens, dtype=np.float64)
            if xs.ndim != 2 or xs.shape[1] != self.out_dim:
                raise ValueError(f"expected (T, {self.out_dim}) token vectors, got shape {xs.shape}")
            return tape.const(xs)
        if self.kind == "strokes":
            return self.strokes.embed(tape, stroke_features(tokens))
        return embed_symbols(tape, self.vocab.encode(tokens), tape.param(self.table))
