"""Synthetic experiments shared by the scripts and the acceptance suite."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

from .config import Dims, TrainConfig
from .data import Corpus, gen_synthetic_segmental, separated_profile, split_corpus
from .metrics import SegMetrics
from .training import evaluate_model, train


@dataclass
class RunResult:
    mode: str
    seed: int
    metrics: SegMetrics
    best_epoch: int
    seconds: float


@dataclass
class ExperimentConfig:
    """Defaults for the held-out comparison between SRNN, BIO and CTC."""

    labels: int = 4
    sigma: float = 0.5
    n_train: int = 100
    n_dev: int = 50
    n_test: int = 200
    epochs: int = 20
    patience: int = 5
    lr: float = 5e-3
    max_seg_len: int | None = 6
    dims: Dims = field(default_factory=Dims)


def overfit(seed: int = 0, n: int = 50, epochs: int = 50, lr: float = 5e-3, labels: int = 4,
            durations=((1, 4),) * 4, sigma: float = 0.1, dims: Dims | None = None) -> tuple[SegMetrics, RunResult]:
    """Fully supervised training on a small corpus, scored on that same corpus."""
    corpus = gen_synthetic_segmental(n, labels=labels, durations=list(durations), sigma=sigma, seed=seed)
    config = TrainConfig(mode="full", epochs=epochs, patience=epochs, lr=lr, seed=seed, dims=dims or Dims())
    t0 = time.perf_counter()
    res = train(corpus, corpus, config)
    metrics = evaluate_model(res.model, corpus)
    return metrics, RunResult("full", seed, metrics, res.best_epoch, time.perf_counter() - t0)


def separated_splits(seed: int, cfg: ExperimentConfig) -> tuple[Corpus, Corpus, Corpus]:
    """Train/dev/test drawn from one generator run where each label has its own fixed duration."""
    total = cfg.n_train + cfg.n_dev + cfg.n_test
    corpus = gen_synthetic_segmental(total, labels=cfg.labels, durations=separated_profile(cfg.labels),
                                     sigma=cfg.sigma, seed=1000 + seed)
    return tuple(split_corpus(corpus, [cfg.n_train, cfg.n_dev, cfg.n_test]))


def run_system(mode: str, seed: int, splits, cfg: ExperimentConfig) -> RunResult:
    train_c, dev_c, test_c = splits
    config = TrainConfig(mode=mode, epochs=cfg.epochs, patience=cfg.patience, lr=cfg.lr, seed=seed,
                         max_seg_len=cfg.max_seg_len, dims=cfg.dims)
    t0 = time.perf_counter()
    res = train(train_c, dev_c, config)
    return RunResult(mode, seed, evaluate_model(res.model, test_c), res.best_epoch, time.perf_counter() - t0)


def compare(modes=("full", "bio", "ctc"), seeds=(0, 1, 2), cfg: ExperimentConfig | None = None,
            progress=None) -> dict[str, list[RunResult]]:
    cfg = cfg or ExperimentConfig()
    out: dict[str, list[RunResult]] = {m: [] for m in modes}
    for seed in seeds:
        splits = separated_splits(seed, cfg)
        for mode in modes:
            r = run_system(mode, seed, splits, cfg)
            out[mode].append(r)
            if progress:
                progress(r)
    return out


def mean(results: list[RunResult], attr: str) -> float:
    vals = [getattr(r.metrics, attr) for r in results]
    return sum(vals) / len(vals)
