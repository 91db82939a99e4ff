import numpy as np
import pytest

from graphtransducer import (
    CTC_LIKE,
    MONO_RNNT,
    ToyModel,
    Utterance,
    forward_logits,
    load_model,
    make_synthetic_task,
    save_model,
    train_step,
    utterance_loss,
)
from graphtransducer.model import greedy_labels


def clone(model: ToyModel) -> ToyModel:
    twin = ToyModel(model.feat_dim, model.hidden, model.vocab_size, lr=model.lr, seed=0)
    for name, value in model.params().items():
        setattr(twin, name, value.copy())
    return twin


def test_logit_shapes():
    m = ToyModel(4, 8, 5, seed=0)
    utt = Utterance(np.zeros((7, 4)), (1, 3))
    assert forward_logits(m, utt).shape == (7, 3, 5)


def test_zero_weights_give_uniform_posteriors():
    m = ToyModel(4, 8, 5, seed=0)
    for p in m.params().values():
        p[...] = 0.0
    logits = forward_logits(m, Utterance(np.ones((3, 4)), (1,)))
    assert np.all(logits == 0.0)


def test_states_depend_only_on_their_last_label():
    m = ToyModel(4, 8, 5, seed=1)
    feats = np.random.default_rng(0).normal(0, 1, (6, 4))
    one = forward_logits(m, Utterance(feats, (1, 2)))
    two = forward_logits(m, Utterance(feats, (3, 2)))
    # state 2 conditions on the last label (2) in both; state 1 differs
    assert np.array_equal(one[:, 2, :], two[:, 2, :])
    assert not np.array_equal(one[:, 1, :], two[:, 1, :])


def test_feature_dim_mismatch_raises():
    m = ToyModel(4, 8, 5, seed=0)
    with pytest.raises(ValueError, match="features"):
        forward_logits(m, Utterance(np.zeros((3, 5)), (1,)))


def test_synthetic_task_is_deterministic():
    a = make_synthetic_task(11, 10, 6, 5)
    b = make_synthetic_task(11, 10, 6, 5)
    assert len(a) == len(b) == 10
    for ua, ub in zip(a, b):
        assert ua.labels == ub.labels
        assert np.array_equal(ua.features, ub.features)


def test_synthetic_task_is_feasible_and_blank_free():
    for utt in make_synthetic_task(12, 20, 6, 5):
        assert all(k != 0 for k in utt.labels)
        assert all(a != b for a, b in zip(utt.labels, utt.labels[1:]))
        assert utt.features.shape[0] >= 2 * len(utt.labels) + 1


def test_zero_learning_rate_keeps_parameters_bitwise():
    data = make_synthetic_task(13, 3, 6, 4)
    m = ToyModel(6, 8, 6, lr=0.0, seed=2)
    before = {k: v.copy() for k, v in m.params().items()}
    train_step(m, data, CTC_LIKE)
    for name, value in m.params().items():
        assert np.array_equal(value, before[name])


def test_single_utterance_memorization():
    data = make_synthetic_task(3, 1, 6, 5)
    m = ToyModel(6, 32, 6, lr=0.1, seed=1)
    losses = [train_step(m, data, CTC_LIKE) for _ in range(200)]
    assert losses[-1] <= 0.1 * losses[0]


def test_infeasible_utterance_is_skipped_with_warning():
    data = make_synthetic_task(14, 2, 6, 3)
    short = Utterance(np.zeros((1, 6)), (1, 2, 3))  # one frame cannot carry three labels
    m = ToyModel(6, 8, 6, lr=0.1, seed=3)
    twin = clone(m)
    with pytest.warns(UserWarning, match="infeasible"):
        with_bad = train_step(m, data + [short], CTC_LIKE)
    without_bad = train_step(twin, data, CTC_LIKE)
    assert with_bad == without_bad
    for name in ("enc_w", "embed", "join_w", "bias"):
        assert np.array_equal(getattr(m, name), getattr(twin, name))


def test_batch_of_only_infeasible_utterances_raises():
    short = Utterance(np.zeros((1, 6)), (1, 2, 3))
    m = ToyModel(6, 8, 6, lr=0.1, seed=3)
    with pytest.warns(UserWarning):
        with pytest.raises(ValueError, match="no feasible"):
            train_step(m, [short], CTC_LIKE)


@pytest.mark.parametrize("kind", [CTC_LIKE, MONO_RNNT])
def test_joiner_gradient_matches_finite_differences(kind):
    data = make_synthetic_task(15, 1, 4, 2)
    m = ToyModel(4, 6, 4, lr=1.0, seed=4)
    from graphtransducer.model import _utterance_grads

    _, grads = _utterance_grads(m, data[0], kind)
    step = 1e-6
    for name in ("join_w", "enc_w", "bias", "embed"):
        param = getattr(m, name)
        fd = np.zeros_like(param)
        for idx in np.ndindex(param.shape):
            keep = param[idx]
            param[idx] = keep + step
            plus = utterance_loss(m, data[0], kind)
            param[idx] = keep - step
            minus = utterance_loss(m, data[0], kind)
            param[idx] = keep
            fd[idx] = (plus - minus) / (2 * step)
        scale = max(np.abs(grads[name]).max(), np.abs(fd).max(), 1e-8)
        assert np.abs(grads[name] - fd).max() / scale < 1e-4, name


def test_training_curve_is_smoothly_nonincreasing():
    data = make_synthetic_task(7, 20, 6, 5)
    m = ToyModel(6, 32, 6, lr=0.3, seed=0)
    losses = np.array([train_step(m, data, CTC_LIKE) for _ in range(200)])
    smoothed = np.convolve(losses, np.ones(10) / 10, mode="valid")
    assert np.all(np.diff(smoothed[50:]) <= 1e-9)


def test_checkpoint_round_trip_is_bitwise(tmp_path):
    m = ToyModel(6, 8, 6, lr=0.25, seed=5)
    path = tmp_path / "model.ckpt"
    save_model(path, m, step=42)
    back, step = load_model(path)
    assert step == 42
    assert back.lr == m.lr and back.hidden == m.hidden
    for name, value in m.params().items():
        assert np.array_equal(getattr(back, name), value)


def test_resume_matches_uninterrupted_run(tmp_path):
    data = make_synthetic_task(16, 5, 6, 4)
    straight = ToyModel(6, 8, 6, lr=0.2, seed=6)
    losses = [train_step(straight, data, CTC_LIKE) for _ in range(8)]

    restarted = ToyModel(6, 8, 6, lr=0.2, seed=6)
    for _ in range(5):
        train_step(restarted, data, CTC_LIKE)
    path = tmp_path / "mid.ckpt"
    save_model(path, restarted, step=5)
    resumed, _ = load_model(path)
    resumed_losses = [train_step(resumed, data, CTC_LIKE) for _ in range(3)]
    assert abs(resumed_losses[0] - losses[5]) < 1e-9
    assert resumed_losses == losses[5:]
    for name in ("enc_w", "embed", "join_w", "bias"):
        assert np.array_equal(getattr(resumed, name), getattr(straight, name))


def test_greedy_labels_on_trained_model():
    data = make_synthetic_task(17, 5, 6, 3)
    m = ToyModel(6, 32, 6, lr=0.3, seed=7)
    for _ in range(150):
        train_step(m, data, CTC_LIKE)
    hits = sum(greedy_labels(m, utt, CTC_LIKE) == utt.labels for utt in data)
    assert hits >= 4


def test_load_rejects_garbage(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"\x00\x01\x02 not a checkpoint\n")
    with pytest.raises(ValueError, match="header"):
        load_model(path)
