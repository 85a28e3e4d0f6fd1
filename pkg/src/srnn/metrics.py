"""Segmentation and labeling metrics."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .segcrf import LabeledSegmentation


@dataclass
class SegMetrics:
    """Segment-boundary (``seg``) and boundary+label (``tag``) P/R/F plus label error rate.

    The P/R/F fields are ``None`` when predictions carry no durations (CTC).
    """

    P_seg: float | None
    R_seg: float | None
    F_seg: float | None
    P_tag: float | None
    R_tag: float | None
    F_tag: float | None
    error_rate: float

    COLUMNS = ("P_seg", "R_seg", "F_seg", "P_tag", "R_tag", "F_tag", "error_rate")

    def row(self) -> list[str]:
        return ["-" if getattr(self, c) is None else f"{getattr(self, c):.4f}" for c in self.COLUMNS]

    def table(self, name: str = "model") -> str:
        """Tab-separated header and one row."""
        return "\t".join(("system",) + self.COLUMNS) + "\n" + "\t".join([name] + self.row()) + "\n"


def f_score(p: float, r: float) -> float:
    return 0.0 if p + r == 0 else 2 * p * r / (p + r)


def levenshtein(a: Sequence, b: Sequence) -> int:
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, 1):
        cur = [i]
        for j, y in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y)))
        prev = cur
    return prev[-1]


def _ratio(num: int, den: int) -> float:
    return num / den if den else 0.0


def evaluate(pred: Sequence, gold: Sequence[LabeledSegmentation]) -> SegMetrics:
    """Corpus-level metrics.

    A predicted segment counts for ``seg`` when its (start, duration) matches a
    gold segment and for ``tag`` when its label matches too. The error rate is
    the summed edit distance between label sequences over the total number of
    gold labels. ``pred`` entries may be plain label lists, in which case only
    the error rate is computed.
    """
    if len(pred) != len(gold):
        raise ValueError(f"{len(pred)} predictions for {len(gold)} gold instances")
    with_spans = all(isinstance(p, LabeledSegmentation) for p in pred)
    n_pred = n_gold = seg_hit = tag_hit = 0
    edits = gold_labels = 0
    for k, (p, g) in enumerate(zip(pred, gold)):
        g_labels = g.labels
        p_labels = p.labels if isinstance(p, LabeledSegmentation) else list(p)
        edits += levenshtein(p_labels, g_labels)
        gold_labels += len(g_labels)
        if not with_spans:
            continue
        if p.n_tokens != g.n_tokens:
            raise ValueError(f"instance {k}: prediction covers {p.n_tokens} tokens, gold {g.n_tokens}")
        g_spans = {(s, z): y for s, z, y in g.segments}
        for s, z, y in p.segments:
            if (s, z) in g_spans:
                seg_hit += 1
                tag_hit += g_spans[(s, z)] == y
        n_pred += len(p)
        n_gold += len(g)
    err = _ratio(edits, gold_labels)
    if not with_spans:
        return SegMetrics(None, None, None, None, None, None, err)
    ps, rs = _ratio(seg_hit, n_pred), _ratio(seg_hit, n_gold)
    pt, rt = _ratio(tag_hit, n_pred), _ratio(tag_hit, n_gold)
    return SegMetrics(ps, rs, f_score(ps, rs), pt, rt, f_score(pt, rt), err)
