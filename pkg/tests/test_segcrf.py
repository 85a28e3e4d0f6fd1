import math
from itertools import product

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_srnn
from srnn import diffgraph as dg
from srnn.diffgraph import Tape
from srnn.encoder import LstmCell
from srnn.gradcheck import check_gradient
from srnn.numerics import log_sum_exp
from srnn.oracle import compositions, naive_context, naive_potential, run_oracle_suite
from srnn.params import ModelParams
from srnn.segcrf import (
    LabeledSegmentation,
    SegmentationError,
    SegmentPotential,
    gamma_chart,
    log_constrained,
    log_partition,
    log_path_score,
    map_decode,
    path_score_value,
    potential,
    score_spans,
)
from srnn.segment_embed import build_segment_table


def _scores(model, xs, tape=None):
    return model.scores(tape or Tape(), xs)


def _zero_head(model):
    model.params["pot.w"].value[...] = 0.0
    model.params["pot.b"].value[...] = 0.0


# -- potential ------------------------------------------------------------------


def test_zero_projection_gives_zero_potential(rng):
    model = make_srnn(3, 3)
    _zero_head(model)
    tape = Tape()
    tab = model.table(tape, rng.normal(size=(4, 3)))
    assert float(potential(tape, model.potential, 1, 2, (1, 2), tab).value) == 0.0
    assert np.all(score_spans(tape, model.potential, tab).flat.value == 0.0)


def test_hand_set_potential_is_tanh_two():
    rng = np.random.default_rng(0)
    params = ModelParams()
    fwd = LstmCell(params, "seg.fwd", 1, 1, rng)
    rev = LstmCell(params, "seg.rev", 1, 1, rng)
    pot = SegmentPotential(params, 1, 1, seg_dim=1, label_dim=1, dur_dim=1, hidden=1, rng=rng)
    pot.V.value[...] = [[1.0, 0.0, 0.0, 0.0]]
    pot.a.value[...] = 0.0
    pot.w.value[...] = 1.0
    pot.b.value[...] = 0.0
    pot.label_emb.value[...] = 2.0
    tape = Tape()
    tab = build_segment_table(tape, fwd, rev, tape.const(np.array([[0.3]])), 1)
    assert float(potential(tape, pot, 0, 1, (0, 0), tab).value) == pytest.approx(math.tanh(2.0), abs=1e-15)


def test_potential_matches_formula_oracle(rng):
    for seed in range(5):
        model = make_srnn(3, 4, seed=seed)
        xs = rng.normal(size=(5, 3))
        tape = Tape()
        tab = model.table(tape, xs)
        scores = score_spans(tape, model.potential, tab)
        ctx = naive_context(model.params, xs)
        for i, z, y in [(0, 1, 0), (1, 4, 2), (3, 2, 1), (4, 1, 2)]:
            want = naive_potential(model.params, ctx, y, i, z)
            assert float(potential(tape, model.potential, y, z, (i, i + z - 1), tab).value) == pytest.approx(want, abs=1e-12)
            assert scores.value(i, z, y) == pytest.approx(want, abs=1e-12)


def test_potential_rejects_overlong_duration(rng):
    model = make_srnn(2, 2)
    tape = Tape()
    tab = model.table(tape, rng.normal(size=(4, 3)))
    with pytest.raises(SegmentationError):
        potential(tape, model.potential, 0, 3, (0, 2), tab)


def test_potential_is_recomputable(rng):
    model = make_srnn(2, 3)
    xs = rng.normal(size=(4, 3))
    a = _scores(model, xs).flat.value
    assert np.array_equal(a, _scores(model, xs).flat.value)


# -- partition and decoding ------------------------------------------------------


def test_single_token_single_label(rng):
    model = make_srnn(1, 1)
    s = _scores(model, rng.normal(size=(1, 3)))
    assert float(log_partition(s).value) == s.value(0, 1, 0)
    assert map_decode(s) == LabeledSegmentation(((0, 1, 0),))


def test_zero_potentials_count_eighteen_paths(rng):
    model = make_srnn(2, 3)
    _zero_head(model)
    s = _scores(model, rng.normal(size=(3, 3)))
    assert float(log_partition(s).value) == pytest.approx(math.log(18), abs=1e-12)
    assert float(log_partition(s).value) == pytest.approx(2.890372, abs=1e-6)


def test_zero_potential_ties_prefer_long_final_then_low_label(rng):
    model = make_srnn(2, 3)
    _zero_head(model)
    assert map_decode(_scores(model, rng.normal(size=(3, 3)))) == LabeledSegmentation(((0, 3, 0),))
    model2 = make_srnn(3, 2)
    _zero_head(model2)
    assert map_decode(_scores(model2, rng.normal(size=(5, 3)))).durations == [1, 2, 2]


def test_single_token_map_takes_argmax_label(rng):
    model = make_srnn(3, 1)
    s = _scores(model, rng.normal(size=(1, 3)))
    best = int(np.argmax(s.matrix(1)[0]))
    assert map_decode(s).segments == ((0, 1, best),)


@pytest.mark.parametrize("seed", range(4))
def test_map_score_self_consistent(seed):
    rng = np.random.default_rng(seed)
    model = make_srnn(3, 3, seed=seed)
    s = _scores(model, rng.normal(size=(7, 3)))
    pred = map_decode(s)
    pred.validate(7, 3)
    assert path_score_value(s, pred) == pytest.approx(float(log_path_score(s, pred).value), abs=1e-12)


def test_small_enumeration_oracle():
    report = run_oracle_suite(max_n=4, max_labels=2, seeds=2)
    assert report.passed, report.max_dev
    assert report.cases > 0


# -- constrained marginal ---------------------------------------------------------


def test_full_length_reference_is_the_unit_path(rng):
    model = make_srnn(2, 3)
    s = _scores(model, rng.normal(size=(4, 3)))
    labs = [1, 0, 0, 1]
    unit = LabeledSegmentation.from_durations([1] * 4, labs)
    assert float(log_constrained(s, labs).value) == pytest.approx(path_score_value(s, unit), abs=1e-12)


def test_infeasible_reference_lengths_are_neg_inf(rng):
    model = make_srnn(2, 2)
    s = _scores(model, rng.normal(size=(5, 3)))
    assert float(log_constrained(s, [0] * 6).value) == -math.inf
    assert float(log_constrained(s, [0, 1]).value) == -math.inf  # needs at least ceil(5/2) segments
    assert np.isfinite(float(log_constrained(s, [0, 1, 0]).value))


@pytest.mark.parametrize("n,Y", [(n, Y) for n in range(1, 6) for Y in (1, 2)])
def test_constrained_marginals_sum_to_partition(n, Y):
    rng = np.random.default_rng(n * 10 + Y)
    model = make_srnn(Y, n, seed=n + Y)
    s = _scores(model, rng.normal(size=(n, 3)))
    total = [float(log_constrained(s, list(y)).value) for m in range(1, n + 1) for y in product(range(Y), repeat=m)]
    assert log_sum_exp(total) == pytest.approx(float(log_partition(s).value), abs=1e-10)


def test_gamma_chart_boundary_cells(rng):
    model = make_srnn(2, 2)
    s = _scores(model, rng.normal(size=(5, 3)))
    g = gamma_chart(s, [0, 1, 1, 0])
    assert g[0, 0] == 0.0
    for j in range(6):
        for m in range(5):
            if m > j or m < math.ceil(j / 2):
                assert g[j, m] == -math.inf


def test_gamma_shifts_by_m_delta(rng):
    model = make_srnn(2, 3)
    xs = rng.normal(size=(6, 3))
    labs = [0, 1, 1, 0]
    g0 = gamma_chart(_scores(model, xs), labs)
    delta = 0.37
    model.params["pot.b"].value += delta
    g1 = gamma_chart(_scores(model, xs), labs)
    finite = np.isfinite(g0)
    assert np.array_equal(finite, np.isfinite(g1))
    shift = (g1 - np.where(finite, g0, 0))[finite]
    expect = np.broadcast_to(np.arange(5) * delta, g0.shape)[finite]
    assert np.max(np.abs(shift - expect)) < 1e-12


# -- gold path ---------------------------------------------------------------------


def test_zero_potentials_path_score_zero(rng):
    model = make_srnn(2, 3)
    _zero_head(model)
    s = _scores(model, rng.normal(size=(4, 3)))
    assert float(log_path_score(s, LabeledSegmentation.from_durations([3, 1], [1, 0])).value) == 0.0


def test_single_segment_path_equals_potential(rng):
    model = make_srnn(2, 3)
    tape = Tape()
    tab = model.table(tape, rng.normal(size=(3, 3)))
    s = score_spans(tape, model.potential, tab)
    gold = LabeledSegmentation.from_durations([3], [1])
    assert float(log_path_score(s, gold).value) == pytest.approx(
        float(potential(tape, model.potential, 1, 3, (0, 2), tab).value), abs=1e-12)


def test_overlong_gold_segment_is_named(rng):
    model = make_srnn(2, 2)
    s = _scores(model, rng.normal(size=(4, 3)))
    with pytest.raises(SegmentationError, match="segment 1"):
        log_path_score(s, LabeledSegmentation.from_durations([1, 3], [0, 0]))


@pytest.mark.parametrize("seed", range(6))
def test_log_quantities_ordered(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 7))
    model = make_srnn(3, 3, seed=seed)
    s = _scores(model, rng.normal(size=(n, 3)))
    durs = list(next(iter(compositions(n, 3))))
    labs = list(rng.integers(0, 3, size=len(durs)))
    gold = LabeledSegmentation.from_durations(durs, labs)
    a = float(log_path_score(s, gold).value)
    b = float(log_constrained(s, labs).value)
    c = float(log_partition(s).value)
    assert a <= b + 1e-12 and b < c


@pytest.mark.parametrize("quantity", ["path", "constrained", "partition"])
def test_log_quantity_gradients(quantity, rng):
    model = make_srnn(2, 3, seed=11)
    xs = rng.normal(size=(4, 3))
    gold = LabeledSegmentation.from_durations([2, 1, 1], [1, 0, 1])

    def loss(tape):
        s = model.scores(tape, xs)
        if quantity == "path":
            return log_path_score(s, gold)
        if quantity == "constrained":
            return log_constrained(s, gold.labels)
        return log_partition(s)

    report = check_gradient(model.params, loss, rng, min_coords=30)
    assert report.max_rel_error < 1e-4, report.failures


# -- segmentation value type ----------------------------------------------------------


@settings(max_examples=40)
@given(st.lists(st.integers(1, 5), min_size=1, max_size=8))
def test_from_durations_invariants(durs):
    seg = LabeledSegmentation.from_durations(durs, ["a"] * len(durs))
    seg.validate(sum(durs))
    assert seg.segments[0][0] == 0
    assert all(seg.segments[k + 1][0] == s + z for k, (s, z, _) in enumerate(seg.segments[:-1]))
    assert len(seg) <= seg.n_tokens


def test_segmentation_validation_errors():
    with pytest.raises(SegmentationError):
        LabeledSegmentation.from_durations([1, 0], ["a", "b"])
    with pytest.raises(SegmentationError):
        LabeledSegmentation.from_durations([1], ["a", "b"])
    with pytest.raises(SegmentationError, match="sum"):
        LabeledSegmentation.from_durations([1, 2], ["a", "b"]).validate(4)


def test_partial_loss_rejects_infeasible_reference(rng):
    from conftest import random_sequence

    model = make_srnn(2, 2)
    seq = random_sequence(rng, 5, 2, 2)
    seq.labels = ["y0"]
    with pytest.raises(SegmentationError):
        model.loss(Tape(), seq, "partial")


def test_constrained_node_is_on_tape(rng):
    model = make_srnn(2, 3)
    tape = Tape()
    s = model.scores(tape, rng.normal(size=(3, 3)))
    node = log_constrained(s, [0, 1])
    assert node.tape is tape and isinstance(node, dg.Node)
