import numpy as np
import pytest

from srnn.config import Dims
from srnn.data import Sequence
from srnn.models import SRNN, BioTagger, CtcModel

SMALL = Dims(emb=5, stroke=2, ctx=4, seg=3, label=2, dur=2, ffn=3, bio_ctx=4)


def randomize(model, rng, scale=0.5):
    for p in model.params.values():
        p.value[...] = rng.uniform(-scale, scale, size=p.shape)
    return model


def make_srnn(n_labels=2, max_len=3, seed=0, input_dim=3, dims=SMALL, scale=0.5, kind="vectors", vocab=None):
    rng = np.random.default_rng(seed)
    labels = [f"y{k}" for k in range(n_labels)]
    model = SRNN(labels, kind, dims, max_len, rng=rng, input_dim=input_dim if kind == "vectors" else None, vocab=vocab)
    return randomize(model, rng, scale) if scale else model


def make_baseline(cls, n_labels=2, seed=0, input_dim=3, dims=SMALL, scale=0.5):
    rng = np.random.default_rng(seed)
    model = cls([f"y{k}" for k in range(n_labels)], "vectors", dims, rng=rng, input_dim=input_dim)
    return randomize(model, rng, scale) if scale else model


def random_sequence(rng, n, n_labels=2, max_len=3, input_dim=3):
    durs = []
    while sum(durs) < n:
        durs.append(int(rng.integers(1, min(max_len, n - sum(durs)) + 1)))
    labels = [f"y{int(rng.integers(n_labels))}" for _ in durs]
    return Sequence(rng.normal(size=(n, input_dim)), labels, durs)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


__all__ = ["SMALL", "make_srnn", "make_baseline", "random_sequence", "randomize", "BioTagger", "CtcModel"]
