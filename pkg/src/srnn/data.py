"""Corpora: the line-delimited JSON format and synthetic generators.

One JSON object per line::

    {"tokens": [...], "labels": ["N", "V"], "durations": [2, 1]}

``tokens`` holds strings (symbol corpora), numeric vectors, or strokes given
as lists of ``[x, y]`` points. ``durations`` is optional.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .config import rng_stream
from .segcrf import LabeledSegmentation


class CorpusError(ValueError):
    pass


@dataclass
class Sequence:
    tokens: Any
    labels: list[str] | None = None
    durations: list[int] | None = None

    def __len__(self):
        return len(self.tokens)

    @property
    def gold(self) -> LabeledSegmentation | None:
        if self.durations is None or self.labels is None:
            return None
        return LabeledSegmentation.from_durations(self.durations, self.labels)

    def to_record(self) -> dict:
        if isinstance(self.tokens, np.ndarray):
            toks = self.tokens.tolist()
        else:
            toks = [t.tolist() if isinstance(t, np.ndarray) else t for t in self.tokens]
        rec = {"tokens": toks}
        if self.labels is not None:
            rec["labels"] = list(self.labels)
        if self.durations is not None:
            rec["durations"] = [int(z) for z in self.durations]
        return rec


@dataclass
class Corpus:
    instances: list[Sequence]
    labels: list[str]
    kind: str = "points"  # "points" or "symbols"
    strokes: bool = False
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.instances)

    def __iter__(self):
        return iter(self.instances)

    @property
    def input_kind(self) -> str:
        if self.kind == "symbols":
            return "symbols"
        return "strokes" if self.strokes else "vectors"

    @property
    def input_dim(self) -> int | None:
        if self.input_kind != "vectors" or not self.instances:
            return None
        return int(np.asarray(self.instances[0].tokens).shape[1])

    @property
    def has_durations(self) -> bool:
        return bool(self.instances) and all(s.durations is not None for s in self.instances)

    def max_tokens(self) -> int:
        return max((len(s) for s in self.instances), default=0)

    def symbols(self) -> list[str]:
        seen = {}
        for s in self.instances:
            for t in s.tokens:
                seen.setdefault(t, None)
        return list(seen)

    def validate(self, max_len: int | None = None):
        """Check label inventory, duration sums and (optionally) the segment length bound."""
        inventory = set(self.labels)
        bad = []
        for k, s in enumerate(self.instances):
            if s.labels is not None:
                unknown = [y for y in s.labels if y not in inventory]
                if unknown:
                    raise CorpusError(f"instance {k}: labels {unknown} not in inventory")
            if s.durations is not None:
                if s.labels is None or len(s.durations) != len(s.labels):
                    raise CorpusError(f"instance {k}: durations and labels differ in length")
                if any(z < 1 for z in s.durations):
                    raise CorpusError(f"instance {k}: non-positive duration")
                if sum(s.durations) != len(s):
                    raise CorpusError(f"instance {k}: durations sum to {sum(s.durations)} but there are {len(s)} tokens")
                if max_len is not None:
                    bad.extend((k, i, z) for i, z in enumerate(s.durations) if z > max_len)
        if bad:
            shown = ", ".join(f"instance {k} segment {i} (duration {z})" for k, i, z in bad[:10])
            raise CorpusError(f"{len(bad)} gold segments longer than max segment length {max_len}: {shown}")


def _parse_tokens(raw, where: str):
    if not isinstance(raw, list) or not raw:
        raise CorpusError(f"{where}: 'tokens' must be a non-empty list")
    first = raw[0]
    if isinstance(first, str):
        if not all(isinstance(t, str) for t in raw):
            raise CorpusError(f"{where}: mixed token types")
        return "symbols", False, list(raw)
    if isinstance(first, list) and first and isinstance(first[0], list):
        try:
            strokes = [np.asarray(s, dtype=np.float64).reshape(-1, 2) for s in raw]
        except (ValueError, TypeError):
            raise CorpusError(f"{where}: strokes must be lists of [x, y] points") from None
        if any(len(s) == 0 for s in strokes):
            raise CorpusError(f"{where}: empty stroke")
        return "points", True, strokes
    try:
        arr = np.asarray(raw, dtype=np.float64)
    except (ValueError, TypeError):
        raise CorpusError(f"{where}: tokens must be strings or equal-length number lists") from None
    if arr.ndim != 2:
        raise CorpusError(f"{where}: numeric tokens must be equal-length number lists")
    return "points", False, arr


def parse_records(lines, source: str = "<corpus>") -> Corpus:
    instances, kinds, labels_seen = [], set(), {}
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        where = f"{source}:{lineno}"
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CorpusError(f"{where}: malformed line ({exc.msg})") from None
        if not isinstance(rec, dict) or "tokens" not in rec:
            raise CorpusError(f"{where}: expected an object with a 'tokens' field")
        kind, strokes, tokens = _parse_tokens(rec["tokens"], where)
        kinds.add((kind, strokes))
        labels = rec.get("labels")
        if labels is not None:
            if not isinstance(labels, list) or not all(isinstance(y, str) for y in labels):
                raise CorpusError(f"{where}: 'labels' must be a list of strings")
            for y in labels:
                labels_seen.setdefault(y, None)
        durations = rec.get("durations")
        if durations is not None:
            if not isinstance(durations, list) or not all(isinstance(z, int) and z >= 1 for z in durations):
                raise CorpusError(f"{where}: 'durations' must be a list of positive integers")
            if labels is None or len(labels) != len(durations):
                raise CorpusError(f"{where}: 'durations' and 'labels' differ in length")
            if sum(durations) != len(tokens):
                raise CorpusError(f"{where}: durations sum to {sum(durations)} but there are {len(tokens)} tokens")
        instances.append(Sequence(tokens, labels, durations))
    if not instances:
        raise CorpusError(f"{source}: empty corpus")
    if len(kinds) > 1:
        raise CorpusError(f"{source}: mixed token kinds {sorted(kinds)}")
    if kinds == {("points", False)}:
        dims = {s.tokens.shape[1] for s in instances}
        if len(dims) > 1:
            raise CorpusError(f"{source}: token vectors have differing dimensions {sorted(dims)}")
    kind, strokes = kinds.pop()
    return Corpus(instances, sorted(labels_seen), kind, strokes)


def load_corpus(path: str | Path, format: str = "jsonl", max_len: int | None = None) -> Corpus:
    if format != "jsonl":
        raise CorpusError(f"unsupported corpus format {format!r}")
    path = Path(path)
    if not path.exists():
        raise CorpusError(f"{path}: no such file")
    with open(path, encoding="utf-8") as fh:
        corpus = parse_records(fh, str(path))
    corpus.validate(max_len)
    return corpus


def save_corpus(corpus: Corpus | list[Sequence], path: str | Path):
    instances = corpus.instances if isinstance(corpus, Corpus) else corpus
    with open(path, "w", encoding="utf-8") as fh:
        for s in instances:
            fh.write(json.dumps(s.to_record()) + "\n")


# -- synthetic data --------------------------------------------------------------


def separated_profile(n_labels: int, max_duration: int = 4) -> list[tuple[int, int]]:
    """Label ``k`` always lasts ``1 + k mod max_duration`` tokens."""
    return [(1 + k % max_duration, 1 + k % max_duration) for k in range(n_labels)]


def gen_synthetic_segmental(n: int, labels: int = 4, durations: list[tuple[int, int]] | None = None,
                            sigma: float = 0.1, seed: int = 0, dim: int | None = None,
                            means: np.ndarray | None = None, segments: tuple[int, int] = (2, 6)) -> Corpus:
    """Segments whose tokens are a label mean plus Gaussian noise.

    Each instance draws 2-6 segments; each segment draws a label uniformly,
    a duration uniformly from that label's ``(lo, hi)`` range, and tokens
    ``mu_y + sigma * N(0, I)``. Means default to one-hot vectors.
    """
    durations = durations or separated_profile(labels)
    if len(durations) != labels or any(lo < 1 or hi < lo for lo, hi in durations):
        raise ValueError("need one (lo, hi) duration range with 1 <= lo <= hi per label")
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if means is None:
        dim = dim or labels
        means = np.zeros((labels, dim))
        means[np.arange(labels), np.arange(labels) % dim] = 1.0
    means = np.asarray(means, dtype=np.float64)
    rng = rng_stream(seed, "data")
    names = [f"L{k}" for k in range(labels)]
    out = []
    for _ in range(n):
        n_seg = int(rng.integers(segments[0], segments[1] + 1))
        labs, durs, toks = [], [], []
        for _ in range(n_seg):
            y = int(rng.integers(labels))
            lo, hi = durations[y]
            z = int(rng.integers(lo, hi + 1))
            labs.append(names[y])
            durs.append(z)
            toks.append(means[y] + sigma * rng.standard_normal((z, means.shape[1])))
        out.append(Sequence(np.concatenate(toks, axis=0), labs, durs))
    meta = {"generator": "segmental", "durations": [list(d) for d in durations], "sigma": sigma, "seed": seed}
    return Corpus(out, names, "points", False, meta)


def _stroke_prototypes(alphabet: str, rng: np.random.Generator, points: tuple[int, int]) -> dict:
    protos = {}
    for ch in alphabet:
        strokes = []
        for _ in range(int(rng.integers(1, 4))):
            k = int(rng.integers(points[0], points[1] + 1))
            start = rng.uniform(0.0, 1.0, size=2)
            steps = rng.normal(0.0, 0.25, size=(k - 1, 2))
            strokes.append(np.vstack([start, start + np.cumsum(steps, axis=0)]))
        protos[ch] = strokes
    return protos


def gen_synthetic_strokes(n: int, alphabet: str = "abcdef", seed: int = 0, jitter: float = 0.02,
                          word_len: tuple[int, int] = (1, 5), points: tuple[int, int] = (4, 7)) -> Corpus:
    """Handwriting stand-in: words of characters drawn as 1-3 prototype strokes each.

    A character's prototype is fixed for the seed; every occurrence is shifted
    right by its position in the word and perturbed by Gaussian ``jitter``.
    Tokens are strokes (raw ``[x, y]`` paths); a character's duration is its
    stroke count.
    """
    if not alphabet:
        raise ValueError("alphabet must be non-empty")
    protos = _stroke_prototypes(alphabet, rng_stream(seed, "prototypes"), points)
    rng = rng_stream(seed, "data")
    out = []
    for _ in range(n):
        length = int(rng.integers(word_len[0], word_len[1] + 1))
        chars = [alphabet[int(rng.integers(len(alphabet)))] for _ in range(length)]
        strokes, durs = [], []
        for pos, ch in enumerate(chars):
            for s in protos[ch]:
                strokes.append(s + np.array([1.2 * pos, 0.0]) + jitter * rng.standard_normal(s.shape))
            durs.append(len(protos[ch]))
        out.append(Sequence(strokes, chars, durs))
    return Corpus(out, sorted(set(alphabet)), "points", True, {"generator": "strokes", "seed": seed})


def split_corpus(corpus: Corpus, sizes: list[int]) -> list[Corpus]:
    parts, start = [], 0
    for k in sizes:
        parts.append(Corpus(corpus.instances[start : start + k], corpus.labels, corpus.kind, corpus.strokes, dict(corpus.meta)))
        start += k
    return parts


def multinomial_bounds(p: float, n: int, k: float = 3.0) -> tuple[float, float]:
    """``n p +- k sqrt(n p (1 - p))``: acceptance band for a multinomial cell count."""
    sd = math.sqrt(n * p * (1 - p))
    return n * p - k * sd, n * p + k * sd
