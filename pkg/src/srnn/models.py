"""Trainable models: the segmental RNN and the two baselines, plus persistence.

Each model owns a :class:`ModelParams`, exposes ``loss(tape, seq, mode)``
returning a scalar tape node and ``decode(tokens)``.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Sequence

import numpy as np

from . import baselines as bl
from .config import Dims
from .diffgraph import Node, Tape
from .encoder import BiLstm, InputLayer, LstmCell, Vocab, encode_context
from .params import ModelParams
from .segcrf import (
    LabeledSegmentation,
    SegmentationError,
    SegmentPotential,
    log_constrained,
    log_partition,
    log_path_score,
    map_decode,
    score_spans,
)
from .segment_embed import build_segment_table


class BaseModel:
    model_type = "base"

    def __init__(self, labels: Sequence[str], kind: str, dims: Dims, rng=None,
                 input_dim: int | None = None, vocab: Vocab | None = None):
        self.labels = list(labels)
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("duplicate labels")
        self.label_index = {y: k for k, y in enumerate(self.labels)}
        self.kind = kind
        self.dims = dims
        self.input_dim = input_dim
        self.vocab = vocab
        self.params = ModelParams()
        self.rng = rng if rng is not None else np.random.default_rng(0)

    def label_ids(self, labels: Sequence[str]) -> list[int]:
        try:
            return [self.label_index[y] for y in labels]
        except KeyError as exc:
            raise SegmentationError(f"label {exc.args[0]!r} not in model inventory {self.labels}") from None

    def gold(self, durations, labels) -> LabeledSegmentation:
        return LabeledSegmentation.from_durations(durations, self.label_ids(labels))

    def meta(self) -> dict:
        return {
            "model_type": self.model_type,
            "labels": self.labels,
            "kind": self.kind,
            "dims": self.dims.to_dict(),
            "input_dim": self.input_dim,
            "vocab": self.vocab.itos if self.vocab is not None else None,
        }


class SRNN(BaseModel):
    """Segmental RNN: BiLSTM context, span LSTMs, neural potentials, semi-Markov CRF."""

    model_type = "srnn"

    def __init__(self, labels, kind, dims: Dims, max_len: int, rng=None, input_dim=None, vocab=None):
        super().__init__(labels, kind, dims, rng, input_dim, vocab)
        if max_len < 1:
            raise ValueError("max segment length must be >= 1")
        self.max_len = max_len
        p, r = self.params, self.rng
        self.frontend = InputLayer(p, kind, dims, r, input_dim, vocab)
        self.context = BiLstm(p, "ctx", self.frontend.out_dim, dims.ctx // 2, r)
        self.seg_fwd = LstmCell(p, "seg.fwd", dims.ctx, dims.seg, r)
        self.seg_rev = LstmCell(p, "seg.rev", dims.ctx, dims.seg, r)
        self.potential = SegmentPotential(p, len(self.labels), max_len, dims.seg, dims.label, dims.dur, dims.ffn, r)

    def meta(self) -> dict:
        return {**super().meta(), "max_len": self.max_len}

    def encode(self, tape: Tape, tokens) -> Node:
        return encode_context(tape, self.context, self.frontend(tape, tokens))

    def table(self, tape: Tape, tokens):
        return build_segment_table(tape, self.seg_fwd, self.seg_rev, self.encode(tape, tokens), self.max_len)

    def scores(self, tape: Tape, tokens):
        return score_spans(tape, self.potential, self.table(tape, tokens))

    def loss(self, tape: Tape, seq, mode: str = "full") -> Node:
        scores = self.scores(tape, seq.tokens)
        log_z = log_partition(scores)
        if mode == "full":
            if seq.durations is None:
                raise SegmentationError("full supervision needs gold durations")
            return log_z - log_path_score(scores, self.gold(seq.durations, seq.labels))
        if mode == "partial":
            num = log_constrained(scores, self.label_ids(seq.labels))
            if not np.isfinite(num.value):
                raise SegmentationError(
                    f"no segmentation of {scores.n} tokens into {len(seq.labels)} segments "
                    f"with max length {scores.max_len}"
                )
            return log_z - num
        raise ValueError(f"SRNN trains in full or partial mode, not {mode!r}")

    def decode(self, tokens) -> LabeledSegmentation:
        seg = map_decode(self.scores(Tape(), tokens))
        return seg.map_labels(lambda k: self.labels[k])


class BioTagger(BaseModel):
    """BiLSTM tagger over composed ``B-y`` / ``I-y`` tags with greedy decoding."""

    model_type = "bio"

    def __init__(self, labels, kind, dims: Dims, rng=None, input_dim=None, vocab=None):
        super().__init__(labels, kind, dims, rng, input_dim, vocab)
        p, r = self.params, self.rng
        self.tagset = bl.BioTagSet(self.labels)
        self.frontend = InputLayer(p, kind, dims, r, input_dim, vocab)
        self.context = BiLstm(p, "ctx", self.frontend.out_dim, dims.bio_ctx // 2, r)
        self.W = p.uniform("bio.W", (len(self.tagset), dims.bio_ctx), r)
        self.b = p.add("bio.b", np.zeros(len(self.tagset)))

    def logprobs(self, tape: Tape, tokens) -> Node:
        ctx = encode_context(tape, self.context, self.frontend(tape, tokens))
        return bl.bio_tag_logprobs(tape, tape.param(self.W), tape.param(self.b), ctx)

    def loss(self, tape: Tape, seq, mode: str = "bio") -> Node:
        if seq.durations is None:
            raise SegmentationError("BIO training needs gold durations")
        tags = bl.segments_to_bio(self.gold(seq.durations, seq.labels))
        return bl.bio_loss(self.logprobs(tape, seq.tokens), tags)

    def decode(self, tokens) -> LabeledSegmentation:
        tags = bl.bio_tag(self.logprobs(Tape(), tokens).value)
        return bl.bio_to_segments(tags).map_labels(lambda k: self.labels[k])


class CtcModel(BaseModel):
    """Per-frame softmax over labels plus blank (the last index), blank-only durations."""

    model_type = "ctc"

    def __init__(self, labels, kind, dims: Dims, rng=None, input_dim=None, vocab=None):
        super().__init__(labels, kind, dims, rng, input_dim, vocab)
        p, r = self.params, self.rng
        self.blank = len(self.labels)
        self.frontend = InputLayer(p, kind, dims, r, input_dim, vocab)
        self.context = BiLstm(p, "ctx", self.frontend.out_dim, dims.ctx // 2, r)
        self.W = p.uniform("ctc.W", (len(self.labels) + 1, dims.ctx), r)
        self.b = p.add("ctc.b", np.zeros(len(self.labels) + 1))

    def logprobs(self, tape: Tape, tokens) -> Node:
        from . import diffgraph as dg

        ctx = encode_context(tape, self.context, self.frontend(tape, tokens))
        return dg.log_softmax(dg.affine(tape.param(self.W), ctx, tape.param(self.b)), axis=-1)

    def loss(self, tape: Tape, seq, mode: str = "ctc") -> Node:
        lp = self.logprobs(tape, seq.tokens)
        ll = bl.ctc_log_marginal(lp, self.label_ids(seq.labels), self.blank)
        if not np.isfinite(ll.value):
            raise SegmentationError(f"{len(seq.labels)} labels cannot be emitted from {lp.value.shape[0]} frames")
        return -ll

    def decode(self, tokens) -> list[str]:
        ids = bl.ctc_best_path_decode(self.logprobs(Tape(), tokens).value, self.blank)
        return [self.labels[k] for k in ids]


MODEL_TYPES = {"srnn": SRNN, "bio": BioTagger, "ctc": CtcModel}


def build_model(mode: str, labels, kind, dims: Dims, max_len: int | None = None, rng=None,
                input_dim=None, vocab=None) -> BaseModel:
    if mode in ("full", "partial", "srnn"):
        return SRNN(labels, kind, dims, max_len, rng, input_dim, vocab)
    if mode == "bio":
        return BioTagger(labels, kind, dims, rng, input_dim, vocab)
    if mode == "ctc":
        return CtcModel(labels, kind, dims, rng, input_dim, vocab)
    raise ValueError(f"unknown mode {mode!r}")


# -- persistence ---------------------------------------------------------------
#
# Layout (little endian):
#   b"SRNNMODL" | u32 format version | u32 header length | header JSON (UTF-8)
#   then for every parameter, in header order, its float64 payload in C order.
# The header holds the model metadata and a table of (name, shape) entries.

MAGIC = b"SRNNMODL"
FORMAT_VERSION = 1


def save_model(model: BaseModel, path: str | Path):
    header = dict(model.meta())
    header["params"] = [[name, list(p.shape)] for name, p in model.params.items()]
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, len(blob)))
        fh.write(blob)
        for p in model.params.values():
            fh.write(p.value.astype("<f8").tobytes(order="C"))


def load_model(path: str | Path) -> BaseModel:
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise ValueError(f"{path}: not a model file")
        version, hlen = struct.unpack("<II", fh.read(8))
        if version != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported model format version {version}")
        header = json.loads(fh.read(hlen).decode("utf-8"))
        payload = fh.read()
    dims = Dims(**header["dims"])
    vocab = Vocab(header["vocab"][1:]) if header.get("vocab") else None
    kwargs = dict(rng=np.random.default_rng(0), input_dim=header.get("input_dim"), vocab=vocab)
    mtype = header["model_type"]
    if mtype == "srnn":
        model = SRNN(header["labels"], header["kind"], dims, header["max_len"], **kwargs)
    else:
        model = MODEL_TYPES[mtype](header["labels"], header["kind"], dims, **kwargs)
    offset = 0
    for name, shape in header["params"]:
        p = model.params[name]
        if list(p.shape) != shape:
            raise ValueError(f"{path}: parameter {name} has shape {shape}, model expects {list(p.shape)}")
        n = int(np.prod(shape)) if shape else 1
        p.value[...] = np.frombuffer(payload, dtype="<f8", count=n, offset=offset).reshape(shape)
        offset += 8 * n
    if offset != len(payload):
        raise ValueError(f"{path}: trailing bytes in parameter payload")
    return model
