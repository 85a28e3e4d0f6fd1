"""BIO tagging and blank-only CTC on top of the shared context encoder."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from . import diffgraph as dg
from .diffgraph import Node
from .segcrf import LabeledSegmentation

NEG_INF = -math.inf


# -- BIO ---------------------------------------------------------------------


class BioTagSet:
    """Tags ``B-y`` and ``I-y`` for every base label; tag id ``2k`` is ``B-k`` and ``2k+1`` is ``I-k``."""

    def __init__(self, labels: Sequence[str]):
        self.labels = list(labels)
        self.tags = [f"{p}-{y}" for y in self.labels for p in ("B", "I")]

    def __len__(self):
        return len(self.tags)

    @staticmethod
    def begin(label_id: int) -> int:
        return 2 * label_id

    @staticmethod
    def inside(label_id: int) -> int:
        return 2 * label_id + 1

    @staticmethod
    def split(tag_id: int) -> tuple[str, int]:
        return ("B" if tag_id % 2 == 0 else "I"), tag_id // 2


def segments_to_bio(seg: LabeledSegmentation) -> list[int]:
    tags = []
    for _, z, y in seg.segments:
        tags.append(BioTagSet.begin(y))
        tags.extend([BioTagSet.inside(y)] * (z - 1))
    return tags


def bio_to_segments(tags: Sequence[int]) -> LabeledSegmentation:
    """Convert tag ids to segments; an ``I-y`` that cannot continue a ``y`` segment opens one."""
    segs: list[list] = []
    prev_label = None
    for t, tag in enumerate(tags):
        prefix, y = BioTagSet.split(int(tag))
        if prefix == "I" and prev_label == y and segs:
            segs[-1][1] += 1
        else:
            segs.append([t, 1, y])
        prev_label = y
    return LabeledSegmentation(tuple(tuple(s) for s in segs))


def bio_tag_logprobs(tape, W, b, context: Node) -> Node:
    """Per-position log-distribution over tags: ``log_softmax(W tanh(c) + b)``."""
    return dg.log_softmax(dg.affine(W, dg.tanh(context), b), axis=-1)


def bio_tag(logp: np.ndarray) -> list[int]:
    """Greedy per-position argmax."""
    return [int(k) for k in np.argmax(np.asarray(logp), axis=-1)]


def bio_loss(logp: Node, tags: Sequence[int]) -> Node:
    T = logp.value.shape[0]
    if len(tags) != T:
        raise ValueError(f"{len(tags)} gold tags for {T} positions")
    return -dg.sum(logp[np.arange(T), np.asarray(tags)])


# -- CTC with blank-only duration --------------------------------------------
#
# Each non-blank frame emits one output symbol, so "a a" reads as "aa" and only
# blanks extend a duration. The lattice state is the number of reference
# symbols consumed; blank is a self-loop, a frame showing r[k] advances k -> k+1.


def ctc_interpret(frames: Sequence[int], blank: int) -> list[int]:
    return [int(f) for f in frames if f != blank]


def ctc_log_marginal(logp: Node, reference: Sequence[int], blank: int) -> Node:
    """Log-probability that the frame labeling interprets to ``reference``.

    ``logp`` is (T, |Y| + 1) per-frame log-probabilities.
    """
    T = logp.value.shape[0]
    M = len(reference)
    if M > T:
        return dg.scale(dg.sum(logp), 0.0) + NEG_INF
    tape = logp.tape
    ref = np.asarray(reference, dtype=np.int64)
    if M and (ref.min() < 0 or ref.max() >= logp.value.shape[1] or np.any(ref == blank)):
        raise ValueError(f"reference {list(reference)} contains invalid symbol ids")
    init = np.full(M + 1, NEG_INF)
    init[0] = 0.0
    alpha = tape.const(init)
    head = tape.const(np.array([NEG_INF]))
    for t in range(T):
        stay = alpha + logp[t, blank]
        if M:
            adv = dg.concat([head, alpha[:M] + logp[t, ref]])
            alpha = dg.logsumexp_node(dg.stack([stay, adv]), axis=0)
        else:
            alpha = stay
    return alpha[M]


def ctc_best_path_decode(logp: np.ndarray, blank: int) -> list[int]:
    """Per-frame argmax followed by blank removal (repeats are kept)."""
    return ctc_interpret(np.argmax(np.asarray(logp), axis=-1), blank)
