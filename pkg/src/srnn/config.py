"""Dataclass configs for model dimensions and training."""

from __future__ import annotations

import zlib
from dataclasses import asdict, dataclass, field, fields

import numpy as np

MODES = ("full", "partial", "bio", "ctc")


@dataclass
class Dims:
    emb: int = 64  # symbol embedding
    stroke: int = 5  # stroke BiLSTM hidden, per direction
    ctx: int = 24  # context vector c, both directions together
    seg: int = 18  # segment embedding, per direction
    label: int = 8  # label embedding g_y
    dur: int = 4  # duration embedding g_z
    ffn: int = 32  # output size of the V/a affine layer
    bio_ctx: int = 128  # BIO tagger context, both directions together

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 1:
                raise ValueError(f"dimension {f.name} must be >= 1")
        for name in ("ctx", "bio_ctx"):
            if getattr(self, name) % 2:
                raise ValueError(f"{name} is split across two directions and must be even")

    @classmethod
    def parse(cls, spec: str | None) -> "Dims":
        """Parse ``"ctx=24,seg=18"`` style overrides."""
        if not spec:
            return cls()
        kw = {}
        names = {f.name for f in fields(cls)}
        for part in spec.split(","):
            key, sep, val = part.partition("=")
            key = key.strip()
            if not sep or key not in names:
                raise ValueError(f"bad --dims entry {part!r}; known keys: {sorted(names)}")
            kw[key] = int(val)
        return cls(**kw)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainConfig:
    mode: str = "full"
    lr: float = 1e-3
    l2: float = 1e-6
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs: int = 30
    patience: int = 10
    seed: int = 0
    max_seg_len: int | None = None
    dims: Dims = field(default_factory=Dims)
    workers: int = 1

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not self.lr > 0:
            raise ValueError("learning rate must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("beta1 and beta2 must lie in [0, 1)")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.max_seg_len is not None and self.max_seg_len < 1:
            raise ValueError("max segment length must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


def default_max_seg_len(max_tokens: int, kind: str) -> int:
    """Unbounded (the longest input) up to 64 tokens, else 8 for text and 6 for strokes."""
    if max_tokens <= 64:
        return max(1, max_tokens)
    return 8 if kind == "symbols" else 6


def rng_stream(seed: int, name: str) -> np.random.Generator:
    """Independent named random stream (``init``, ``shuffle``, ``data``...) derived from one seed."""
    return np.random.default_rng([int(seed), zlib.crc32(name.encode())])
