"""Semi-Markov CRF over neural segment potentials.

Every chart cell is an ordinary tape node, so gradients of ``log Z(x)``,
``log Z(x, y)`` and the gold path score come from :meth:`Tape.backward`.
All scores are log-domain float64; positions are 0-based.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import diffgraph as dg
from .diffgraph import Node, Tape
from .params import ModelParams
from .segment_embed import SegmentTable

NEG_INF = -math.inf


class SegmentationError(ValueError):
    """Gold annotation incompatible with the model (bad durations, over-long segments)."""


@dataclass(frozen=True)
class LabeledSegmentation:
    """Segments as ``(start, duration, label)`` with 0-based starts."""

    segments: tuple

    @classmethod
    def from_durations(cls, durations: Sequence[int], labels: Sequence) -> "LabeledSegmentation":
        if len(durations) != len(labels):
            raise SegmentationError(f"{len(durations)} durations but {len(labels)} labels")
        segs, start = [], 0
        for z, y in zip(durations, labels):
            z = int(z)
            if z < 1:
                raise SegmentationError(f"non-positive duration {z}")
            segs.append((start, z, y))
            start += z
        return cls(tuple(segs))

    @property
    def durations(self) -> list[int]:
        return [z for _, z, _ in self.segments]

    @property
    def labels(self) -> list:
        return [y for _, _, y in self.segments]

    @property
    def n_tokens(self) -> int:
        return sum(self.durations)

    def __len__(self):
        return len(self.segments)

    def validate(self, n_tokens: int, max_len: int | None = None):
        expect = 0
        for k, (s, z, _) in enumerate(self.segments):
            if s != expect or z < 1:
                raise SegmentationError(f"segment {k} {self.segments[k]} does not continue at {expect}")
            if max_len is not None and z > max_len:
                raise SegmentationError(
                    f"segment {k} {self.segments[k]} has duration {z} > max segment length {max_len}"
                )
            expect = s + z
        if expect != n_tokens:
            raise SegmentationError(f"durations sum to {expect}, expected {n_tokens}")

    def map_labels(self, fn) -> "LabeledSegmentation":
        return LabeledSegmentation(tuple((s, z, fn(y)) for s, z, y in self.segments))


class SegmentPotential:
    """Parameters of ``f = w . tanh(V [g_y(y); g_z(z); h_fwd; h_rev] + a) + b``."""

    def __init__(self, params: ModelParams, n_labels: int, max_len: int, seg_dim: int,
                 label_dim: int = 8, dur_dim: int = 4, hidden: int = 16, rng=None, prefix: str = "pot"):
        self.n_labels = n_labels
        self.max_len = max_len
        self.seg_dim = seg_dim
        self.label_dim = label_dim
        self.dur_dim = dur_dim
        self.hidden = hidden
        names = {k: f"{prefix}.{k}" for k in ("label_emb", "dur_emb", "V", "a", "w", "b")}
        if names["V"] not in params:
            params.uniform(names["label_emb"], (n_labels, label_dim), rng)
            params.uniform(names["dur_emb"], (max_len, dur_dim), rng)
            params.uniform(names["V"], (hidden, label_dim + dur_dim + 2 * seg_dim), rng)
            params.uniform(names["a"], (hidden,), rng)
            params.uniform(names["w"], (hidden,), rng)
            params.add(names["b"], np.zeros(1))
        self.label_emb = params[names["label_emb"]]
        self.dur_emb = params[names["dur_emb"]]
        self.V = params[names["V"]]
        self.a = params[names["a"]]
        self.w = params[names["w"]]
        self.b = params[names["b"]]

    def _blocks(self, tape: Tape):
        V = tape.param(self.V)
        dy, dz, dh = self.label_dim, self.dur_dim, self.seg_dim
        return (V[:, :dy], V[:, dy : dy + dz], V[:, dy + dz : dy + dz + dh], V[:, dy + dz + dh :])


def potential(tape: Tape, pot: SegmentPotential, label: int, duration: int, span: tuple[int, int],
              table: SegmentTable) -> Node:
    """Score of one labeled segment, evaluated literally on the concatenated feature vector."""
    i, j = span
    if j - i + 1 != duration:
        raise SegmentationError(f"span {span} does not have duration {duration}")
    if duration > table.max_len or duration > pot.max_len:
        raise SegmentationError(f"duration {duration} exceeds max segment length {min(table.max_len, pot.max_len)}")
    feats = dg.concat([
        tape.param(pot.label_emb)[label],
        tape.param(pot.dur_emb)[duration - 1],
        table.fwd[duration][i],
        table.rev[duration][i],
    ])
    hidden = dg.tanh(dg.affine(tape.param(pot.V), feats, tape.param(pot.a)))
    return dg.dot(tape.param(pot.w), hidden) + tape.param(pot.b)[0]


@dataclass
class SpanScores:
    """All span/label scores in one flat node.

    The score of (start ``i``, duration ``l``, label ``y``) sits at
    ``offsets[l] + i * n_labels + y``.
    """

    flat: Node
    offsets: dict[int, int]
    n: int
    max_len: int
    n_labels: int

    def index(self, i, length, y):
        return self.offsets[length] + np.asarray(i) * self.n_labels + np.asarray(y)

    def value(self, i: int, length: int, y: int) -> float:
        return float(self.flat.value[self.index(i, length, y)])

    def matrix(self, length: int) -> np.ndarray:
        m = self.n - length + 1
        o = self.offsets[length]
        return self.flat.value[o : o + m * self.n_labels].reshape(m, self.n_labels)


def score_spans(tape: Tape, pot: SegmentPotential, table: SegmentTable) -> SpanScores:
    """Evaluate the potential of every (span, label) in the table.

    The affine layer is split column-wise over the concatenated features so
    the span part and label part are computed once and broadcast.
    """
    if table.max_len > pot.max_len:
        raise SegmentationError(f"table max length {table.max_len} exceeds model max length {pot.max_len}")
    Vy, Vz, Vf, Vr = pot._blocks(tape)
    K, Y = pot.hidden, pot.n_labels
    label_part = dg.reshape(dg.affine(Vy, tape.param(pot.label_emb)), (1, Y, K))
    dur_part = dg.affine(Vz, tape.param(pot.dur_emb), tape.param(pot.a))
    w, b = tape.param(pot.w), tape.param(pot.b)
    pieces, offsets, off = [], {}, 0
    for length in range(1, table.max_len + 1):
        m = table.n - length + 1
        span_part = dg.affine(Vf, table.fwd[length]) + dg.affine(Vr, table.rev[length]) + dur_part[length - 1]
        act = dg.tanh(dg.reshape(span_part, (m, 1, K)) + label_part)
        pieces.append(dg.matmul(dg.reshape(act, (m * Y, K)), w))
        offsets[length] = off
        off += m * Y
    flat = dg.concat(pieces, axis=0) + b
    return SpanScores(flat, offsets, table.n, table.max_len, Y)


def log_partition(scores: SpanScores) -> Node:
    """``log Z(x)`` via the forward chart ``alpha_j = lse_{i, y}(alpha_i + f(y, j - i, (i, j - 1)))``."""
    n, L, Y = scores.n, scores.max_len, scores.n_labels
    if n == 0:
        raise ValueError("empty input")
    tape = scores.flat.tape
    per_span = []
    span_off, off = {}, 0
    for length in range(1, L + 1):
        m = n - length + 1
        o = scores.offsets[length]
        per_span.append(dg.logsumexp_node(dg.reshape(scores.flat[o : o + m * Y], (m, Y)), axis=1))
        span_off[length] = off
        off += m
    span_lse = dg.concat(per_span, axis=0)
    alpha = [tape.const(0.0)]
    for j in range(1, n + 1):
        starts = range(max(0, j - L), j)
        idx = np.array([span_off[j - i] + i for i in starts])
        prev = dg.stack([alpha[i] for i in starts])
        alpha.append(dg.logsumexp_node(prev + span_lse[idx]))
    return alpha[n]


def alpha_chart(scores: SpanScores) -> np.ndarray:
    """Numeric forward chart ``alpha_0..alpha_n`` (no tape), for inspection and tests."""
    from .numerics import logsumexp

    n, L = scores.n, scores.max_len
    alpha = np.full(n + 1, NEG_INF)
    alpha[0] = 0.0
    for j in range(1, n + 1):
        cand = [alpha[i] + logsumexp(scores.matrix(j - i)[i]) for i in range(max(0, j - L), j)]
        alpha[j] = logsumexp(np.array(cand))
    return alpha


def map_decode(scores: SpanScores) -> LabeledSegmentation:
    """Highest-scoring labeled segmentation (integer labels).

    Ties prefer the longer final segment, then the lower label id.
    """
    n, L = scores.n, scores.max_len
    if n == 0:
        raise ValueError("empty input")
    best = np.full(n + 1, NEG_INF)
    best[0] = 0.0
    back = [None] * (n + 1)
    for j in range(1, n + 1):
        for i in range(max(0, j - L), j):  # longest segment first
            row = scores.matrix(j - i)[i]
            y = int(np.argmax(row))  # first maximum = lowest label id
            cand = best[i] + row[y]
            if cand > best[j]:
                best[j] = cand
                back[j] = (i, y)
    segs, j = [], n
    while j > 0:
        i, y = back[j]
        segs.append((i, j - i, y))
        j = i
    return LabeledSegmentation(tuple(reversed(segs)))


def log_constrained(scores: SpanScores, labels: Sequence[int]) -> Node:
    """``log Z(x, y)``: sum over segmentations whose label sequence is exactly ``labels``.

    Returns a ``-inf`` node when no segmentation into ``|y|`` segments fits
    under the length bound.
    """
    return log_constrained_batch(scores, [labels])[0]


def log_constrained_batch(scores: SpanScores, label_seqs: Sequence[Sequence[int]]) -> Node:
    """``log Z(x, y)`` for several reference sequences of one common length.

    The chart ``gamma_j`` has shape (B, |y| + 1) with column ``m`` counting
    consumed reference labels; the m-th segment is scored with ``y[m - 1]``.
    Returns a (B,) node.
    """
    n, L, Y = scores.n, scores.max_len, scores.n_labels
    tape = scores.flat.tape
    lab = np.asarray(label_seqs, dtype=np.int64)
    if lab.ndim != 2:
        raise SegmentationError("reference label sequences must share one length")
    B, M = lab.shape
    if M < 1 or M > n or M < math.ceil(n / L):
        return dg.scale(dg.sum(scores.flat), 0.0) + np.full(B, NEG_INF)
    if lab.min() < 0 or lab.max() >= Y:
        raise SegmentationError(f"label ids {lab.tolist()} outside 0..{Y - 1}")
    init = np.full((B, M + 1), NEG_INF)
    init[:, 0] = 0.0
    gamma = [tape.const(init)]
    head = tape.const(np.full((B, 1), NEG_INF))
    for j in range(1, n + 1):
        starts = range(max(0, j - L), j)
        prev = dg.stack([gamma[i] for i in starts])[:, :, :M]  # gamma_i(m - 1) for m = 1..M
        idx = np.array([scores.offsets[j - i] + i * Y for i in starts])[:, None, None] + lab
        cand = prev + scores.flat[idx]
        gamma.append(dg.concat([head, dg.logsumexp_node(cand, axis=0)], axis=-1))
    return gamma[n][:, M]


def gamma_chart(scores: SpanScores, labels: Sequence[int]) -> np.ndarray:
    """Numeric ``gamma_j(m)`` chart of shape (n + 1, |y| + 1), no tape."""
    from .numerics import logsumexp

    n, L, M = scores.n, scores.max_len, len(labels)
    g = np.full((n + 1, M + 1), NEG_INF)
    g[0, 0] = 0.0
    for j in range(1, n + 1):
        for m in range(1, M + 1):
            cand = [g[i, m - 1] + scores.value(i, j - i, labels[m - 1]) for i in range(max(0, j - L), j)]
            g[j, m] = logsumexp(np.array(cand))
    return g


def log_path_score(scores: SpanScores, gold: LabeledSegmentation) -> Node:
    """Score of one labeled segmentation, ``log Z(x, y, z) = sum_i f(y_i, z_i, span_i)``."""
    gold.validate(scores.n, scores.max_len)
    idx = np.array([scores.index(s, z, y) for s, z, y in gold.segments])
    return dg.sum(scores.flat[idx])


def path_score_value(scores: SpanScores, seg: LabeledSegmentation) -> float:
    return float(sum(scores.value(s, z, y) for s, z, y in seg.segments))
