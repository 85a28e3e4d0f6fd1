import json
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from srnn.data import (
    CorpusError,
    gen_synthetic_segmental,
    gen_synthetic_strokes,
    load_corpus,
    multinomial_bounds,
    save_corpus,
    split_corpus,
)
from srnn.encoder import stroke_features
from srnn.metrics import SegMetrics, evaluate, f_score, levenshtein
from srnn.segcrf import LabeledSegmentation


def _write(path, records):
    path.write_text("".join(json.dumps(r) + "\n" for r in records), encoding="utf-8")
    return path


# -- loading ----------------------------------------------------------------------


def test_empty_corpus_rejected(tmp_path):
    p = tmp_path / "c.jsonl"
    p.write_text("\n", encoding="utf-8")
    with pytest.raises(CorpusError, match="empty corpus"):
        load_corpus(p)


def test_consistent_symbol_instance_accepted(tmp_path):
    p = _write(tmp_path / "c.jsonl", [{"tokens": ["a", "b", "c"], "labels": ["N", "V"], "durations": [2, 1]}])
    c = load_corpus(p)
    assert c.kind == "symbols" and c.input_kind == "symbols" and c.labels == ["N", "V"]
    assert c.instances[0].gold.segments == ((0, 2, "N"), (2, 1, "V"))


def test_duration_sum_mismatch_rejected(tmp_path):
    p = _write(tmp_path / "c.jsonl", [{"tokens": ["a", "b", "c"], "labels": ["N", "V"], "durations": [2, 2]}])
    with pytest.raises(CorpusError, match=":1:"):
        load_corpus(p)


def test_malformed_line_reports_line_number(tmp_path):
    p = tmp_path / "c.jsonl"
    p.write_text('{"tokens": ["a"], "labels": ["N"]}\n{"tokens": [\n', encoding="utf-8")
    with pytest.raises(CorpusError, match=":2:"):
        load_corpus(p)


def test_overlong_segments_listed(tmp_path):
    p = _write(tmp_path / "c.jsonl", [
        {"tokens": ["a"] * 5, "labels": ["N", "V"], "durations": [4, 1]},
        {"tokens": ["a"] * 3, "labels": ["N"], "durations": [3]},
    ])
    with pytest.raises(CorpusError) as exc:
        load_corpus(p, max_len=2)
    assert "instance 0 segment 0" in str(exc.value) and "instance 1 segment 0" in str(exc.value)


def test_missing_file_and_bad_format(tmp_path):
    with pytest.raises(CorpusError):
        load_corpus(tmp_path / "nope.jsonl")
    p = _write(tmp_path / "c.jsonl", [{"tokens": ["a"]}])
    with pytest.raises(CorpusError):
        load_corpus(p, format="xml")


def test_mixed_token_kinds_rejected(tmp_path):
    p = _write(tmp_path / "c.jsonl", [{"tokens": ["a"]}, {"tokens": [[1.0, 2.0]]}])
    with pytest.raises(CorpusError, match="mixed"):
        load_corpus(p)


@pytest.mark.parametrize("make", [
    lambda: gen_synthetic_segmental(5, labels=3, seed=2),
    lambda: gen_synthetic_strokes(4, seed=2),
])
def test_round_trip_through_file(make, tmp_path):
    c = make()
    save_corpus(c, tmp_path / "c.jsonl")
    back = load_corpus(tmp_path / "c.jsonl")
    assert back.input_kind == c.input_kind and len(back) == len(c)
    for a, b in zip(c, back):
        assert a.labels == b.labels and a.durations == b.durations
        if c.strokes:
            assert all(np.array_equal(x, y) for x, y in zip(a.tokens, b.tokens))
        else:
            assert np.array_equal(a.tokens, b.tokens)


# -- generators ---------------------------------------------------------------------


def test_noise_free_segments_are_constant():
    c = gen_synthetic_segmental(20, labels=3, sigma=0.0, seed=1, durations=[(1, 4)] * 3)
    for s in c:
        start = 0
        for y, z in zip(s.labels, s.durations):
            block = s.tokens[start : start + z]
            assert np.all(block == block[0])
            start += z


def test_generator_is_seeded():
    a, b = gen_synthetic_segmental(10, seed=7), gen_synthetic_segmental(10, seed=7)
    assert all(np.array_equal(x.tokens, y.tokens) and x.labels == y.labels for x, y in zip(a, b))
    c = gen_synthetic_segmental(10, seed=8)
    assert any(x.labels != y.labels or x.durations != y.durations for x, y in zip(a, c))


def test_segment_counts_in_range():
    c = gen_synthetic_segmental(200, seed=3)
    assert {len(s.labels) for s in c} == {2, 3, 4, 5, 6}


def test_label_duration_histogram_within_three_sigma():
    profile = [(1, 2), (2, 4), (3, 3), (1, 4)]
    c = gen_synthetic_segmental(1000, labels=4, durations=profile, seed=11)
    counts = Counter((y, z) for s in c for y, z in zip(s.labels, s.durations))
    total = sum(counts.values())
    for k, (lo, hi) in enumerate(profile):
        for z in range(1, 5):
            p = (1 / 4) * (1 / (hi - lo + 1)) if lo <= z <= hi else 0.0
            got = counts.get((f"L{k}", z), 0)
            if p == 0:
                assert got == 0
            else:
                low, high = multinomial_bounds(p, total)
                assert low <= got <= high, (k, z, got, low, high)


def test_generator_argument_checks():
    with pytest.raises(ValueError):
        gen_synthetic_segmental(1, labels=2, durations=[(0, 1), (1, 1)])
    with pytest.raises(ValueError):
        gen_synthetic_segmental(1, sigma=-1.0)
    with pytest.raises(ValueError):
        gen_synthetic_strokes(1, alphabet="")


def test_single_character_word_is_one_segment():
    c = gen_synthetic_strokes(30, seed=0, word_len=(1, 1))
    assert all(len(s.labels) == 1 for s in c)
    assert all(sum(s.durations) == len(s.tokens) for s in c)


def test_zero_jitter_prototypes_repeat():
    c = gen_synthetic_strokes(30, seed=4, jitter=0.0, word_len=(1, 1))
    seen = {}
    for s in c:
        strokes = tuple(map(tuple, (np.round(t, 12).ravel() for t in s.tokens)))
        assert seen.setdefault(s.labels[0], strokes) == strokes


def test_stroke_instances_have_zero_first_delta():
    c = gen_synthetic_strokes(3, seed=1)
    for s in c:
        for f in stroke_features(s.tokens):
            assert np.all(f[0, 2:] == 0.0)


def test_split_corpus_sizes():
    parts = split_corpus(gen_synthetic_segmental(10), [6, 4])
    assert [len(p) for p in parts] == [6, 4]


# -- metrics ---------------------------------------------------------------------------


def _seg(*triples):
    return LabeledSegmentation(tuple(triples))


def test_perfect_prediction():
    gold = [_seg((0, 2, "N"), (2, 1, "V")), _seg((0, 1, "V"))]
    m = evaluate(gold, gold)
    assert (m.P_seg, m.R_seg, m.F_seg, m.P_tag, m.R_tag, m.F_tag, m.error_rate) == (1, 1, 1, 1, 1, 1, 0)


def test_no_boundary_agreement():
    gold = [_seg((0, 1, "N"), (1, 1, "V"), (2, 2, "N"))]
    m = evaluate([_seg((0, 4, "N"))], gold)
    assert m.P_seg == 0 and m.R_seg == 0 and m.F_seg == 0


def test_hand_counted_tag_scores():
    m = evaluate([_seg((0, 2, "N"), (2, 1, "N"))], [_seg((0, 2, "N"), (2, 1, "V"))])
    assert m.P_seg == m.R_seg == 1.0
    assert m.P_tag == m.R_tag == 0.5
    assert m.error_rate == 0.5


def test_count_mismatch_rejected():
    with pytest.raises(ValueError):
        evaluate([], [_seg((0, 1, "N"))])
    with pytest.raises(ValueError):
        evaluate([_seg((0, 2, "N"))], [_seg((0, 1, "N"))])


def test_label_only_predictions():
    m = evaluate([["N", "V"]], [_seg((0, 1, "N"), (1, 1, "N"), (2, 1, "V"))])
    assert m.F_seg is None and m.error_rate == pytest.approx(1 / 3)
    assert m.row()[0] == "-"


def test_metrics_table_layout():
    table = SegMetrics(1, 0.5, 2 / 3, 1, 0.5, 2 / 3, 0.25).table("srnn").splitlines()
    assert table[0].split("\t") == ["system", "P_seg", "R_seg", "F_seg", "P_tag", "R_tag", "F_tag", "error_rate"]
    assert table[1].split("\t")[0] == "srnn" and table[1].split("\t")[3] == "0.6667"


def test_f_score_zero_case():
    assert f_score(0.0, 0.0) == 0.0
    assert f_score(1.0, 0.5) == pytest.approx(2 / 3)


segmentations = st.lists(st.tuples(st.integers(1, 3), st.sampled_from("NV")), min_size=1, max_size=5)


def _from(pairs, n):
    durs = [z for z, _ in pairs]
    labs = [y for _, y in pairs]
    durs[-1] += n - sum(durs) if sum(durs) < n else 0
    return LabeledSegmentation.from_durations(durs, labs)


@settings(max_examples=60)
@given(segmentations, segmentations)
def test_swapping_pred_and_gold_swaps_p_and_r(a, b):
    n = max(sum(z for z, _ in a), sum(z for z, _ in b))
    pa, pb = _from(a, n), _from(b, n)
    m1, m2 = evaluate([pa], [pb]), evaluate([pb], [pa])
    assert m1.P_seg == pytest.approx(m2.R_seg) and m1.R_seg == pytest.approx(m2.P_seg)
    assert m1.P_tag == pytest.approx(m2.R_tag)
    for v in (m1.P_seg, m1.R_seg, m1.F_seg, m1.P_tag, m1.R_tag, m1.F_tag):
        assert 0.0 <= v <= 1.0
    assert 0.0 <= m1.error_rate <= max(1.0, len(pa) / len(pb))
    assert (m1.error_rate == 0) == (pa.labels == pb.labels)


@given(st.text("ab", max_size=6), st.text("ab", max_size=6))
def test_levenshtein_symmetric_and_bounded(a, b):
    d = levenshtein(a, b)
    assert d == levenshtein(b, a) and abs(len(a) - len(b)) <= d <= max(len(a), len(b))
