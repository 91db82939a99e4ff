import math

import numpy as np
import pytest

from graphtransducer import (
    CTC_LIKE,
    MONO_RNNT,
    CountsLm,
    DecodeConfig,
    PosteriorTensor,
    TensorPosteriors,
    UniformLm,
    beam_search,
    edit_distance,
    greedy_search,
    prune,
)
from graphtransducer.verify import exhaustive_best_prefix


def tensor_from_probs(rows):
    """rows[t][i] is a probability row; log is already normalized."""
    return PosteriorTensor(np.log(np.asarray(rows, dtype=float)))


def tiled(rows, states):
    """One probability row per frame, shared by every decoder state."""
    arr = np.asarray(rows, dtype=float)[:, None, :]
    return tensor_from_probs(np.tile(arr, (1, states, 1)))


def no_pruning(total_prefixes):
    return DecodeConfig(beam_size=total_prefixes, theta1=0.0, theta2=math.inf)


# --- prune ------------------------------------------------------------------


def test_prune_keeps_top_p():
    hyps = [(1,), (2,), (3,), (4,), (5,)]
    scores = {(1,): -1.0, (2,): -5.0, (3,): -0.5, (4,): -3.0, (5,): -2.0}
    assert prune(hyps, scores, 2, math.inf) == [(3,), (1,)]


def test_prune_threshold_is_strict():
    hyps = [(1,), (2,), (3,)]
    theta2 = 2.0
    scores = {(1,): 0.0, (2,): -theta2 - 1e-9, (3,): -theta2 + 1e-9}
    assert prune(hyps, scores, 10, theta2) == [(1,), (3,)]
    boundary = {(1,): 0.0, (2,): -theta2}
    assert prune([(1,), (2,)], boundary, 10, theta2) == [(1,), (2,)]


def test_prune_breaks_ties_lexicographically():
    hyps = [(2,), (1, 3), (1, 2)]
    scores = {(2,): -1.0, (1, 3): -1.0, (1, 2): -1.0}
    assert prune(hyps, scores, 2, math.inf) == [(1, 2), (1, 3)]


# --- config and LM ------------------------------------------------------------


@pytest.mark.parametrize(
    "kwargs",
    [dict(beam_size=0), dict(theta1=-0.1), dict(theta1=1.0), dict(theta2=0.0), dict(kind="best")],
)
def test_config_invariants(kwargs):
    with pytest.raises(ValueError):
        DecodeConfig(**kwargs)


def test_uniform_lm_scores_zero():
    lm = UniformLm()
    assert lm.score(()) == 0.0 and lm.score((1, 2, 3)) == 0.0


def test_counts_lm_extension_probabilities_are_proper(tmp_path):
    path = tmp_path / "counts.tsv"
    path.write_text("\t1\t3\n\t2\t1\n1\t2\t4\n", encoding="utf-8")
    lm = CountsLm.load(path, vocab_size=3)
    assert lm.order == 2
    for ctx in ((), (1,), (2,)):  # seen, seen, unseen
        total = sum(math.exp(lm.extension_score(ctx, k)) for k in (1, 2))
        assert total == pytest.approx(1.0, abs=1e-12)
    # unseen context backs off to uniform over the two labels
    assert lm.extension_score((2,), 1) == pytest.approx(math.log(0.5), abs=1e-12)
    # add-one smoothing inside a seen context
    assert lm.extension_score((1,), 2) == pytest.approx(math.log(5 / 6), abs=1e-12)
    assert lm.score((1, 2)) == pytest.approx(math.log(4 / 6) + math.log(5 / 6), abs=1e-12)


def test_counts_lm_rejects_malformed_lines(tmp_path):
    path = tmp_path / "bad.tsv"
    path.write_text("1 2\t3\n", encoding="utf-8")
    with pytest.raises(ValueError, match="bad.tsv:1"):
        CountsLm.load(path, vocab_size=4)
    path.write_text("\tx\t3\n", encoding="utf-8")
    with pytest.raises(ValueError, match=":1"):
        CountsLm.load(path, vocab_size=4)
    path.write_text("\t9\t3\n", encoding="utf-8")
    with pytest.raises(ValueError, match="label 9"):
        CountsLm.load(path, vocab_size=4)


# --- greedy -------------------------------------------------------------------


def test_greedy_collapse_rules():
    # frame argmaxes: a, a, blank, b
    rows = [[0.1, 0.8, 0.1], [0.2, 0.7, 0.1], [0.8, 0.1, 0.1], [0.1, 0.2, 0.7]]
    provider = TensorPosteriors(tiled(rows, states=5))
    assert greedy_search(provider, CTC_LIKE) == (1, 2)
    assert greedy_search(provider, MONO_RNNT) == (1, 1, 2)


def test_greedy_all_blank_is_empty():
    rows = [[0.9, 0.05, 0.05]] * 4
    provider = TensorPosteriors(tiled(rows, states=5))
    assert greedy_search(provider, CTC_LIKE) == ()
    assert greedy_search(provider, MONO_RNNT) == ()


def test_greedy_matches_collapse_of_argmax_sequence():
    rng = np.random.default_rng(0)
    for _ in range(25):
        frames = int(rng.integers(1, 8))
        post = PosteriorTensor(np.tile(rng.normal(0, 1, (frames, 1, 4)), (1, frames + 1, 1)))
        argmaxes = post.logprobs[:, 0, :].argmax(axis=1)
        expected, previous = [], 0
        for k in argmaxes:
            if k != 0 and (k != previous or previous == 0):
                expected.append(int(k))
            previous = k
        assert greedy_search(TensorPosteriors(post), CTC_LIKE) == tuple(expected)


# --- beam search ---------------------------------------------------------------


def test_beam_single_frame_hand_trace():
    provider = TensorPosteriors(tensor_from_probs([[[0.2, 0.7, 0.1], [1 / 3, 1 / 3, 1 / 3]]]))
    best, score = beam_search(provider, DecodeConfig(beam_size=4, theta1=0.0))
    assert best == (1,)
    assert score == pytest.approx(math.log(0.7), abs=1e-12)


def test_beam_all_blank_returns_empty_prefix_score_zero():
    logits = np.zeros((3, 4, 3))
    logits[:, :, 0] = 100.0
    best, score = beam_search(TensorPosteriors(PosteriorTensor(logits)), DecodeConfig(beam_size=4))
    assert best == ()
    assert abs(score) < 1e-12


def test_beam_revival_restores_pruned_mass():
    # frame 1 favors blank so the beam of size 1 drops (1,); frame 2 must
    # revive it with its own continuation for the prefix to win.
    rows = [
        [[0.8, 0.2], [0.5, 0.5]],
        [[0.6, 0.4], [0.9, 0.1]],
    ]
    provider = TensorPosteriors(tensor_from_probs(rows))
    best, score = beam_search(provider, DecodeConfig(beam_size=1))
    # full mass of (1,): 0.8*0.4 (late emit) + 0.2*0.9 (early, then blank)
    # + 0.2*0.1 (early, then repeat) = 0.52 > 0.48 = mass of ()
    assert best == (1,)
    assert score == pytest.approx(math.log(0.52), abs=1e-12)
    # without the revived continuation the late emit alone (0.32) would lose


def test_beam_rejects_greedy_config():
    provider = TensorPosteriors(tensor_from_probs([[[0.5, 0.5]]]))
    with pytest.raises(ValueError, match="prefix-beam"):
        beam_search(provider, DecodeConfig(kind="greedy"))


def test_beam_matches_exhaustive_oracle_unpruned():
    rng = np.random.default_rng(1)
    for _ in range(10):
        frames = int(rng.integers(1, 5))
        post = PosteriorTensor(rng.normal(0, 1, (frames, frames + 1, 3)))
        total = sum(2**n for n in range(frames + 1))
        best, score = beam_search(TensorPosteriors(post), no_pruning(total))
        want, want_score = exhaustive_best_prefix(post)
        assert best == want
        assert score == pytest.approx(want_score, abs=1e-9)


def test_widening_the_beam_never_lowers_the_best_score():
    rng = np.random.default_rng(2)
    for _ in range(10):
        frames = int(rng.integers(2, 5))
        post = PosteriorTensor(rng.normal(0, 1, (frames, frames + 1, 3)))
        provider = TensorPosteriors(post)
        scores = [
            beam_search(provider, DecodeConfig(beam_size=p))[1] for p in (1, 2, 4, 8, 64)
        ]
        assert all(a <= b + 1e-12 for a, b in zip(scores, scores[1:]))


def test_prefix_mass_never_exceeds_one_without_lm():
    rng = np.random.default_rng(3)
    for _ in range(10):
        frames = int(rng.integers(1, 5))
        post = PosteriorTensor(rng.normal(0, 1, (frames, frames + 1, 3)))
        _, score = beam_search(TensorPosteriors(post), DecodeConfig(beam_size=16))
        assert score <= 1e-9


def test_theta1_floor_limits_candidates():
    # with theta1 above the probability of label 2, only label 1 extends
    rows = [[0.3, 0.55, 0.15]]
    provider = TensorPosteriors(tiled(rows, states=2))
    best, _ = beam_search(provider, DecodeConfig(beam_size=8, theta1=0.2))
    assert best == (1,)


def test_uniform_lm_and_zero_weights_change_nothing():
    rng = np.random.default_rng(4)
    post = PosteriorTensor(rng.normal(0, 1, (3, 4, 3)))
    provider = TensorPosteriors(post)
    cfg = DecodeConfig(beam_size=8, lm_weight=0.0, insertion_bonus=0.0)
    counts = CountsLm({(): {1: 2, 2: 1}}, vocab_size=3)
    plain = beam_search(provider, cfg)
    with_lm_object = beam_search(provider, cfg, counts)
    assert plain == with_lm_object


def test_lm_weight_can_flip_the_ranking():
    rows = [[0.10, 0.45, 0.45]]
    provider = TensorPosteriors(tiled(rows, states=2))
    neutral, _ = beam_search(provider, DecodeConfig(beam_size=8))
    assert neutral == (1,)  # tie broken toward the smaller label
    lm = CountsLm({(): {1: 1, 2: 9}}, vocab_size=3)
    biased, _ = beam_search(provider, DecodeConfig(beam_size=8, lm_weight=1.0), lm)
    assert biased == (2,)


def test_insertion_bonus_favors_longer_prefixes():
    provider = TensorPosteriors(PosteriorTensor(np.zeros((2, 3, 3))))
    plain, _ = beam_search(provider, DecodeConfig(beam_size=32))
    assert plain == (1,)
    longer, _ = beam_search(provider, DecodeConfig(beam_size=32, insertion_bonus=3.0))
    assert longer == (1, 2)


def test_empty_prefix_takes_no_insertion_bonus():
    logits = np.zeros((2, 3, 2))
    logits[:, :, 0] = 100.0
    provider = TensorPosteriors(PosteriorTensor(logits))
    best, score = beam_search(provider, DecodeConfig(beam_size=4, insertion_bonus=2.0))
    assert best == ()
    assert math.isfinite(score)


# --- edit distance -------------------------------------------------------------


@pytest.mark.parametrize(
    "a,b,want",
    [((), (), 0), ((1, 2), (1, 2), 0), ((1, 2, 3), (1, 3), 1), ((1,), (2,), 1), ((), (1, 2), 2)],
)
def test_edit_distance(a, b, want):
    assert edit_distance(a, b) == want
