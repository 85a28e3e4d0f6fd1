"""Brute-force references for the dynamic programs.

Everything here is plain numpy written independently of the tape: the
context is recomputed with a naive LSTM loop, every span is re-encoded from
scratch, potentials are evaluated on the literal concatenated feature vector,
and the sums run over explicitly enumerated segmentations and labelings.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .numerics import log_sum_exp


def _lstm_run(W, b, xs, reverse=False):
    d = W.shape[0] // 4
    h, c = np.zeros(d), np.zeros(d)
    out = [None] * len(xs)
    order = range(len(xs) - 1, -1, -1) if reverse else range(len(xs))
    for t in order:
        z = W @ np.concatenate([xs[t], h]) + b
        s = 1.0 / (1.0 + np.exp(-z[: 3 * d]))
        c = s[:d] * np.tanh(z[3 * d :]) + s[d : 2 * d] * c
        h = s[2 * d :] * np.tanh(c)
        out[t] = h
    return out


def naive_context(params, xs: np.ndarray, prefix: str = "ctx") -> np.ndarray:
    f = _lstm_run(params[f"{prefix}.fwd.W"].value, params[f"{prefix}.fwd.b"].value, xs)
    b = _lstm_run(params[f"{prefix}.bwd.W"].value, params[f"{prefix}.bwd.b"].value, xs, reverse=True)
    return np.stack([np.concatenate([u, v]) for u, v in zip(f, b)])


def naive_potential(params, context: np.ndarray, label: int, start: int, duration: int, prefix: str = "pot") -> float:
    span = context[start : start + duration]
    hf = _lstm_run(params["seg.fwd.W"].value, params["seg.fwd.b"].value, span)[-1]
    hr = _lstm_run(params["seg.rev.W"].value, params["seg.rev.b"].value, span, reverse=True)[0]
    feats = np.concatenate([
        params[f"{prefix}.label_emb"].value[label],
        params[f"{prefix}.dur_emb"].value[duration - 1],
        hf,
        hr,
    ])
    hidden = np.tanh(params[f"{prefix}.V"].value @ feats + params[f"{prefix}.a"].value)
    return float(params[f"{prefix}.w"].value @ hidden + params[f"{prefix}.b"].value[0])


def compositions(n: int, max_len: int):
    """All duration tuples summing to ``n`` with every part in 1..max_len."""
    if n == 0:
        yield ()
        return
    for first in range(1, min(n, max_len) + 1):
        for rest in compositions(n - first, max_len):
            yield (first,) + rest


def enumerate_paths(params, context: np.ndarray, n_labels: int, max_len: int):
    """Yield ``(durations, labels, score)`` for every labeled segmentation."""
    n = len(context)
    cache = {}
    for durs in compositions(n, max_len):
        starts = np.concatenate([[0], np.cumsum(durs)[:-1]]).astype(int)
        for labs in itertools.product(range(n_labels), repeat=len(durs)):
            total = 0.0
            for s, z, y in zip(starts, durs, labs):
                key = (int(s), int(z), y)
                if key not in cache:
                    cache[key] = naive_potential(params, context, y, int(s), int(z))
                total += cache[key]
            yield durs, labs, total


def brute_force(params, context: np.ndarray, n_labels: int, max_len: int) -> dict:
    """log Z(x), log Z(x, y) per label sequence, path scores and the argmax path."""
    paths = list(enumerate_paths(params, context, n_labels, max_len))
    by_labels: dict[tuple, list[float]] = {}
    for durs, labs, s in paths:
        by_labels.setdefault(labs, []).append(s)
    best = max(paths, key=lambda p: p[2])
    return {
        "log_z": log_sum_exp(p[2] for p in paths),
        "log_z_y": {k: log_sum_exp(v) for k, v in by_labels.items()},
        "paths": {(d, l): s for d, l, s in paths},
        "argmax": (best[0], best[1]),
        "argmax_score": best[2],
    }


def ctc_brute_force(logp: np.ndarray, blank: int) -> dict[tuple, float]:
    """Log-probability of every reference, by summing all frame labelings with blanks removed."""
    T, S = logp.shape
    acc: dict[tuple, list[float]] = {}
    for frames in itertools.product(range(S), repeat=T):
        ref = tuple(f for f in frames if f != blank)
        acc.setdefault(ref, []).append(float(sum(logp[t, f] for t, f in enumerate(frames))))
    return {k: log_sum_exp(v) for k, v in acc.items()}


@dataclass
class OracleReport:
    max_dev: dict = field(default_factory=lambda: {"log_z": 0.0, "log_z_y": 0.0, "log_z_y_z": 0.0, "map": 0.0})
    map_mismatches: int = 0
    cases: int = 0
    seconds: float = 0.0
    tolerance: float = 1e-9

    @property
    def passed(self) -> bool:
        return self.map_mismatches == 0 and all(v <= self.tolerance for v in self.max_dev.values())


def run_oracle_suite(max_n: int = 6, max_labels: int = 3, seeds: int = 20, tolerance: float = 1e-9,
                     input_dim: int = 3, dims=None, scale: float = 1.0) -> OracleReport:
    """Compare every DP quantity to enumeration over all small configurations.

    Sizes: ``|x|`` in 1..max_n, ``|Y|`` in 1..max_labels, ``L`` in {2, 3, |x|}.
    Parameters are drawn uniform in ``[-scale, scale]`` so scores are well
    separated and argmax ties have probability zero.
    """
    from .config import Dims
    from .diffgraph import Tape
    from .models import SRNN
    from .segcrf import (
        LabeledSegmentation,
        log_constrained,
        log_constrained_batch,
        log_partition,
        log_path_score,
        map_decode,
    )

    dims = dims or Dims(ctx=4, seg=3, label=2, dur=2, ffn=3)
    report = OracleReport(tolerance=tolerance)
    t0 = time.perf_counter()
    for n in range(1, max_n + 1):
        for Y in range(1, max_labels + 1):
            for L in sorted({min(2, n), min(3, n), n}):
                for seed in range(seeds):
                    rng = np.random.default_rng([seed, n, Y, L])
                    model = SRNN([f"y{k}" for k in range(Y)], "vectors", dims, max_len=L, input_dim=input_dim, rng=rng)
                    for p in model.params.values():
                        p.value[...] = rng.uniform(-scale, scale, size=p.shape)
                    xs = rng.normal(size=(n, input_dim))
                    ref = brute_force(model.params, naive_context(model.params, xs), Y, L)
                    tape = Tape()
                    scores = model.scores(tape, xs)
                    dev = report.max_dev
                    dev["log_z"] = max(dev["log_z"], abs(float(log_partition(scores).value) - ref["log_z"]))
                    by_len: dict[int, list] = {}
                    for labs in ref["log_z_y"]:
                        by_len.setdefault(len(labs), []).append(labs)
                    for group in by_len.values():
                        got = log_constrained_batch(scores, group).value
                        want = np.array([ref["log_z_y"][labs] for labs in group])
                        dev["log_z_y"] = max(dev["log_z_y"], float(np.max(np.abs(got - want))))
                    # the single-sequence entry point shares the code path; spot-check it
                    labs = next(iter(ref["log_z_y"]))
                    got = float(log_constrained(scores, list(labs)).value)
                    dev["log_z_y"] = max(dev["log_z_y"], abs(got - ref["log_z_y"][labs]))
                    for (durs, labs), s in ref["paths"].items():
                        got = float(log_path_score(scores, LabeledSegmentation.from_durations(durs, labs)).value)
                        dev["log_z_y_z"] = max(dev["log_z_y_z"], abs(got - s))
                    pred = map_decode(scores)
                    if (tuple(pred.durations), tuple(pred.labels)) != ref["argmax"]:
                        report.map_mismatches += 1
                    pred_score = ref["paths"][(tuple(pred.durations), tuple(pred.labels))]
                    dev["map"] = max(dev["map"], abs(pred_score - ref["argmax_score"]))
                    report.cases += 1
    report.seconds = time.perf_counter() - t0
    return report
