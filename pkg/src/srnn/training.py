"""Objectives, Adam, and the epoch loop with development-set model selection."""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import TrainConfig, default_max_seg_len, rng_stream
from .data import Corpus
from .diffgraph import Node, Tape
from .metrics import SegMetrics, evaluate
from .models import BaseModel, build_model
from .params import ModelParams
from .segcrf import log_constrained, log_partition, log_path_score

log = logging.getLogger(__name__)

__all__ = ["ModelParams", "TrainConfig", "supervised_loss", "partial_loss", "adam_step", "train"]

DIVERGENCE_LIMIT = 10


class DivergenceError(RuntimeError):
    pass


def supervised_loss(model, tape: Tape, seq) -> Node:
    """``log Z(x) - log Z(x, y, z)``."""
    return model.loss(tape, seq, "full")


def partial_loss(model, tape: Tape, seq) -> Node:
    """``log Z(x) - log Z(x, y)`` with the segmentation marginalised out."""
    return model.loss(tape, seq, "partial")


def loss_triple(model, seq) -> tuple[float, float, float]:
    """``(log Z(x, y, z), log Z(x, y), log Z(x))`` for an instance with full gold."""
    tape = Tape()
    scores = model.scores(tape, seq.tokens)
    gold = model.gold(seq.durations, seq.labels)
    return (
        float(log_path_score(scores, gold).value),
        float(log_constrained(scores, gold.labels).value),
        float(log_partition(scores).value),
    )


def adam_step(params: ModelParams, config: TrainConfig) -> bool:
    """One bias-corrected Adam update from ``params.grads`` plus the L2 term ``l2 * theta``.

    Returns False (and leaves every parameter untouched) if any gradient is non-finite.
    """
    for name, g in params.grads.items():
        if not np.all(np.isfinite(g)):
            log.warning("non-finite gradient in %s; update skipped", name)
            return False
    params.t += 1
    b1, b2, t = config.beta1, config.beta2, params.t
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for name, p in params.items():
        g = params.grads[name]
        if config.l2:
            g = g + config.l2 * p.value
        m, v = params.m[name], params.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p.value -= config.lr * (m / c1) / (np.sqrt(v / c2) + config.eps)
    return True


def instance_gradient(model: BaseModel, seq, mode: str) -> tuple[float, dict]:
    tape = Tape()
    loss = model.loss(tape, seq, mode)
    value = float(loss.value)
    if not math.isfinite(value):
        return value, {}
    return value, tape.backward(loss)


def dev_metric(model: BaseModel, corpus: Corpus, mode: str) -> tuple[float, SegMetrics]:
    """Selection metric: F_tag (F_seg for one label), or 1 - error rate without durations/for CTC."""
    metrics = evaluate_model(model, corpus)
    if mode == "ctc" or metrics.F_seg is None:
        return 1.0 - metrics.error_rate, metrics
    if len(model.labels) == 1:
        return metrics.F_seg, metrics
    return metrics.F_tag, metrics


def decode_corpus(model: BaseModel, corpus: Corpus) -> list:
    return [model.decode(s.tokens) for s in corpus]


def evaluate_model(model: BaseModel, corpus: Corpus) -> SegMetrics:
    pred = decode_corpus(model, corpus)
    if corpus.has_durations:
        gold = [s.gold for s in corpus]
    else:
        from .segcrf import LabeledSegmentation

        # label-only gold: give each label a unit span so only the error rate is meaningful
        gold = [LabeledSegmentation.from_durations([1] * len(s.labels), s.labels) for s in corpus]
        pred = [p.labels if isinstance(p, LabeledSegmentation) else p for p in pred]
    return evaluate(pred, gold)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    dev_metric: float
    seconds: float

    def line(self) -> str:
        return f"{self.epoch}, {self.train_loss:.6f}, {self.dev_metric:.6f}, {self.seconds:.3f}"


@dataclass
class TrainResult:
    model: BaseModel
    best_epoch: int
    best_metric: float
    history: list[EpochRecord] = field(default_factory=list)
    updates: int = 0


def make_model(train_corpus: Corpus, config: TrainConfig, vocab=None) -> BaseModel:
    from .encoder import Vocab

    kind = train_corpus.input_kind
    if kind == "symbols" and vocab is None:
        vocab = Vocab(train_corpus.symbols())
    max_len = config.max_seg_len or default_max_seg_len(train_corpus.max_tokens(), train_corpus.kind)
    return build_model(config.mode, train_corpus.labels, kind, config.dims, max_len=max_len,
                       rng=rng_stream(config.seed, "init"), input_dim=train_corpus.input_dim, vocab=vocab)


def train(train_corpus: Corpus, dev_corpus: Corpus | None, config: TrainConfig, model: BaseModel | None = None,
          log_path: str | Path | None = None, select_on_dev: bool = True) -> TrainResult:
    """Per-instance Adam training; keeps the parameters of the best dev epoch.

    With ``config.workers > 1`` that many instances have their gradients
    computed concurrently and summed in instance order before one update.
    """
    if len(train_corpus) == 0:
        raise ValueError("empty training corpus")
    model = model or make_model(train_corpus, config)
    mode = config.mode
    if mode in ("full", "partial"):
        train_corpus.validate(model.max_len if mode == "full" else None)
    if dev_corpus is not None:
        missing = {y for s in dev_corpus for y in (s.labels or [])} - set(model.labels)
        if missing:
            raise ValueError(f"dev corpus labels {sorted(missing)} not in training inventory")
    shuffle = rng_stream(config.seed, "shuffle")
    params = model.params
    eval_corpus = dev_corpus if (dev_corpus is not None and select_on_dev) else None
    best = (-math.inf, 0, params.snapshot())
    history: list[EpochRecord] = []
    bad_streak = 0
    since_best = 0
    updates = 0
    pool = ThreadPoolExecutor(config.workers) if config.workers > 1 else None
    logfh = open(log_path, "a", encoding="utf-8") if log_path else None
    try:
        for epoch in range(1, config.epochs + 1):
            t0 = time.perf_counter()
            order = shuffle.permutation(len(train_corpus))
            total, counted = 0.0, 0
            for start in range(0, len(order), config.workers):
                batch = [train_corpus.instances[k] for k in order[start : start + config.workers]]
                if pool is None:
                    results = [instance_gradient(model, batch[0], mode)]
                else:
                    results = list(pool.map(lambda s: instance_gradient(model, s, mode), batch))
                params.zero_grad()
                finite = True
                for value, grads in results:
                    if not math.isfinite(value):
                        finite = False
                        continue
                    total += value
                    counted += 1
                    params.accumulate(grads)
                stepped = finite and adam_step(params, config)
                if stepped:
                    bad_streak = 0
                    updates += 1
                else:
                    bad_streak += 1
                    if bad_streak >= DIVERGENCE_LIMIT:
                        raise DivergenceError(
                            f"{bad_streak} consecutive non-finite losses or gradients at epoch {epoch}"
                        )
            train_loss = total / max(counted, 1)
            if eval_corpus is not None:
                metric, _ = dev_metric(model, eval_corpus, mode)
            else:
                metric = -train_loss
            rec = EpochRecord(epoch, train_loss, metric, time.perf_counter() - t0)
            history.append(rec)
            log.info("epoch %s", rec.line())
            if logfh:
                logfh.write(rec.line() + "\n")
                logfh.flush()
            if metric > best[0]:
                best = (metric, epoch, params.snapshot())
                since_best = 0
            else:
                since_best += 1
                if since_best >= config.patience:
                    break
    finally:
        if pool is not None:
            pool.shutdown()
        if logfh:
            logfh.close()
    params.restore(best[2])
    return TrainResult(model, best[1], best[0], history, updates)
