"""A miniature encoder/predictor/joiner with hand-written gradients.

The model exists to show the loss drives learning, not to be a serious
recognizer.  The predictor is order-1: decoder state i conditions only on
the last label of the length-i prefix, which keeps manual backprop small
while still exercising every decoder-state code path of the loss.
"""

from __future__ import annotations

import json
import os
import warnings
from dataclasses import dataclass

import numpy as np

from .lattice import TopologySpec, build_lattice
from .loss import InfeasibleLengthError, log_marginal, loss_and_grad
from .posteriors import PosteriorTensor, read_tensor, write_tensor

PARAM_NAMES = ("enc_w", "embed", "join_w", "bias")


@dataclass
class Utterance:
    """Feature matrix (T, feat_dim) with its blank-free label sequence."""

    features: np.ndarray
    labels: tuple[int, ...]


class ToyModel:
    """Linear encoder + embedding predictor + tanh joiner.

    Logits for frame t and decoder state i are
    ``join_w @ tanh(enc_w @ x_t + embed[last label of the length-i prefix] + bias)``;
    state 0 uses ``embed[0]`` as a learned start-of-sequence embedding
    (label 0 is blank and never consumed, so the slot is free).
    """

    def __init__(self, feat_dim: int, hidden: int, vocab_size: int, lr: float = 0.1, seed: int = 0):
        if vocab_size < 2:
            raise ValueError("vocab_size must be at least 2 (blank plus one label)")
        rng = np.random.default_rng(seed)
        self.feat_dim = feat_dim
        self.hidden = hidden
        self.vocab_size = vocab_size
        self.lr = float(lr)
        self.enc_w = rng.normal(0.0, 1.0 / np.sqrt(feat_dim), (hidden, feat_dim))
        self.embed = rng.normal(0.0, 0.1, (vocab_size, hidden))
        self.join_w = rng.normal(0.0, 1.0 / np.sqrt(hidden), (vocab_size, hidden))
        self.bias = np.zeros(hidden)

    def params(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_NAMES}


def _state_embedding_indices(labels: tuple[int, ...]) -> np.ndarray:
    # state i consumed i labels; its conditioning label is labels[i - 1]
    return np.asarray((0,) + tuple(labels), dtype=np.int64)


def forward_logits(model: ToyModel, utt: Utterance) -> np.ndarray:
    """Logits of shape (T, U + 1, vocab) for the utterance's decoder states."""
    feats = np.asarray(utt.features, dtype=np.float64)
    if feats.ndim != 2 or feats.shape[1] != model.feat_dim:
        raise ValueError(
            f"features must have shape (T, {model.feat_dim}); got {feats.shape}"
        )
    idx = _state_embedding_indices(utt.labels)
    pre = feats @ model.enc_w.T + model.bias  # (T, H)
    act = np.tanh(pre[:, None, :] + model.embed[idx][None, :, :])  # (T, I, H)
    return act @ model.join_w.T


def utterance_loss(model: ToyModel, utt: Utterance, kind: str) -> float:
    """Loss of one utterance under the given topology (no gradients)."""
    lat = build_lattice(TopologySpec(kind, utt.labels, model.vocab_size))
    post = PosteriorTensor(forward_logits(model, utt))
    return -log_marginal(lat, post)


def _utterance_grads(model: ToyModel, utt: Utterance, kind: str):
    feats = np.asarray(utt.features, dtype=np.float64)
    idx = _state_embedding_indices(utt.labels)
    pre = feats @ model.enc_w.T + model.bias
    act = np.tanh(pre[:, None, :] + model.embed[idx][None, :, :])
    logits = act @ model.join_w.T

    lat = build_lattice(TopologySpec(kind, utt.labels, model.vocab_size))
    result = loss_and_grad(lat, PosteriorTensor(logits))
    d_logits = result.grad  # (T, I, K)

    d_act = d_logits @ model.join_w  # (T, I, H)
    d_pre = d_act * (1.0 - act**2)
    grads = {
        "join_w": np.einsum("tik,tih->kh", d_logits, act),
        "enc_w": np.einsum("tih,td->hd", d_pre, feats),
        "bias": d_pre.sum(axis=(0, 1)),
        "embed": np.zeros_like(model.embed),
    }
    np.add.at(grads["embed"], idx, d_pre.sum(axis=0))
    return result.loss, grads


def train_step(model: ToyModel, batch: list[Utterance], kind: str) -> float:
    """One full-batch gradient step; returns the batch mean loss.

    Utterances whose frame count cannot realize their labels under the
    topology are skipped with a warning rather than corrupting the step.
    """
    losses = []
    total = {name: np.zeros_like(p) for name, p in model.params().items()}
    for i, utt in enumerate(batch):
        try:
            loss, grads = _utterance_grads(model, utt, kind)
        except InfeasibleLengthError as exc:
            warnings.warn(f"skipping infeasible utterance {i}: {exc}", stacklevel=2)
            continue
        losses.append(loss)
        for name in total:
            total[name] += grads[name]
    if not losses:
        raise ValueError("no feasible utterance in batch")
    scale = model.lr / len(losses)
    for name, param in model.params().items():
        param -= scale * total[name]
    return float(np.mean(losses))


def greedy_labels(model: ToyModel, utt: Utterance, kind: str) -> tuple[int, ...]:
    """Greedy decode of one utterance (convenience wrapper)."""
    from .decode import ModelPosteriors, greedy_search

    return greedy_search(ModelPosteriors(model, utt.features), kind)


def sequence_score(model: ToyModel, utt: Utterance, labels: tuple[int, ...], kind: str) -> float:
    """Log marginal of an arbitrary label sequence under the model's
    posteriors for this utterance; -inf when the sequence is infeasible."""
    try:
        lat = build_lattice(TopologySpec(kind, labels, model.vocab_size))
        post = PosteriorTensor(forward_logits(model, Utterance(utt.features, tuple(labels))))
        return log_marginal(lat, post)
    except InfeasibleLengthError:
        return float("-inf")


def make_synthetic_task(seed: int, count: int, vocab: int, max_len: int) -> list[Utterance]:
    """Deterministic toy dataset: each label becomes 1-3 noisy one-hot
    frames preceded by a blank-ish separator frame (plus one trailing), so
    T >= 2U + 1 and every utterance is feasible for both topologies.

    Adjacent labels are always distinct.  With a repeat, the pair
    (label-k frame, last consumed label k) would have to emit k when a new
    run starts but blank when a run continues; the order-1 predictor cannot
    tell those apart, so the task would not be memorizable.
    """
    if vocab < 2:
        raise ValueError("vocab must be at least 2 (blank plus one label)")
    if max_len < 1:
        raise ValueError("max_len must be at least 1")
    rng = np.random.default_rng(seed)
    data = []
    for _ in range(count):
        n_labels = int(rng.integers(1, max_len + 1))
        labels: list[int] = []
        for _ in range(n_labels):
            choices = [k for k in range(1, vocab) if not labels or k != labels[-1]]
            labels.append(choices[int(rng.integers(0, len(choices)))])
        rows = []
        for k in labels:
            rows.append(np.eye(vocab)[0])
            for _ in range(int(rng.integers(1, 4))):
                rows.append(np.eye(vocab)[k])
        rows.append(np.eye(vocab)[0])
        feats = np.stack(rows) + rng.normal(0.0, 0.1, (len(rows), vocab))
        data.append(Utterance(feats, tuple(labels)))
    return data


def save_model(path: str | os.PathLike, model: ToyModel, step: int = 0) -> None:
    """Checkpoint: one JSON header line, then each parameter block in the
    binary tensor format, in the header's listed order."""
    header = {
        "format": "toy-model",
        "version": 1,
        "hyper": {
            "feat_dim": model.feat_dim,
            "hidden": model.hidden,
            "vocab_size": model.vocab_size,
            "lr": model.lr,
        },
        "step": int(step),
        "params": [
            {"name": name, "shape": list(p.shape)} for name, p in model.params().items()
        ],
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8") + b"\n")
        for p in model.params().values():
            write_tensor(fh, p)


def load_model(path: str | os.PathLike) -> tuple[ToyModel, int]:
    with open(path, "rb") as fh:
        line = fh.readline()
        try:
            header = json.loads(line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ValueError(f"bad checkpoint header: {exc}") from exc
        if header.get("format") != "toy-model" or header.get("version") != 1:
            raise ValueError("not a version-1 toy-model checkpoint")
        hyper = header["hyper"]
        model = ToyModel(
            hyper["feat_dim"], hyper["hidden"], hyper["vocab_size"], lr=hyper["lr"], seed=0
        )
        for entry in header["params"]:
            name = entry["name"]
            if name not in PARAM_NAMES:
                raise ValueError(f"unknown parameter block {name!r}")
            arr = read_tensor(fh)
            if list(arr.shape) != entry["shape"] or arr.shape != getattr(model, name).shape:
                raise ValueError(f"parameter {name!r} has shape {arr.shape}, expected {entry['shape']}")
            setattr(model, name, arr)
    return model, int(header.get("step", 0))
