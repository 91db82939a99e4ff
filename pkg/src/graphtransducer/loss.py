"""Exact log-space marginalization and gradients over (lattice, posteriors).

The marginal probability of a lattice given a posterior tensor is the sum
over all start-to-end node sequences with exactly T emissions of the
product of edge weights and the per-frame posterior of each emitted label,
taken from the decoder state carried by the traversed edge.  All dynamic
programming here runs in log space with log-sum-exp; T in the hundreds
underflows double precision otherwise.

Every operation is a pure function of its arguments, so distinct
utterances can be processed concurrently and lattices reused freely.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lattice import Lattice
from .posteriors import PosteriorTensor

NEG_INF = float("-inf")


class InfeasibleLengthError(ValueError):
    """No start-to-end path with exactly the requested number of frames."""

    def __init__(self, frames: int, min_frames: int):
        self.frames = frames
        self.min_frames = min_frames
        super().__init__(
            f"no alignment of exactly {frames} frames exists; "
            f"the shortest start-to-end path needs {min_frames}"
        )


@dataclass
class LossResult:
    """Negative log marginal and its gradient w.r.t. the raw logits.

    ``grad`` has the exact shape of the logits; every (t, i) row sums to
    zero because the loss is invariant to shifting a softmax row.
    """

    loss: float
    log_marginal: float
    grad: np.ndarray


def _check_compat(lat: Lattice, post: PosteriorTensor) -> None:
    em = lat.emit
    if em.src.size:
        max_state = int(em.state.max())
        if max_state >= post.num_states:
            raise ValueError(
                f"lattice references decoder state {max_state} but the tensor has "
                f"only {post.num_states} states"
            )
        max_label = int(em.label.max())
        if max_label >= post.vocab_size:
            raise ValueError(
                f"lattice emits label {max_label} but the tensor vocab is {post.vocab_size}"
            )


def _scatter_logsumexp(values: np.ndarray, index: np.ndarray, size: int) -> np.ndarray:
    """Grouped log-sum-exp: out[j] = logsumexp(values[index == j])."""
    out = np.full(size, NEG_INF)
    if values.size == 0:
        return out
    peak = np.full(size, NEG_INF)
    np.maximum.at(peak, index, values)
    shifted = peak[index]
    ok = shifted > NEG_INF  # exp(-inf - -inf) would be NaN
    sums = np.zeros(size)
    np.add.at(sums, index[ok], np.exp(values[ok] - shifted[ok]))
    finite = peak > NEG_INF
    out[finite] = peak[finite] + np.log(sums[finite])
    return out


def _forward_reachable(lat: Lattice, frames: int) -> np.ndarray:
    """reach[t, g] is True iff some path emits exactly t steps from start to g."""
    n = len(lat.nodes)
    em = lat.emit
    reach = np.zeros((frames + 1, n), dtype=bool)
    reach[0, lat.start_id] = True
    for t in range(1, frames + 1):
        live = reach[t - 1, em.src]
        if live.any():
            reach[t, em.dst[live]] = True
    return reach


def _backward_reachable(lat: Lattice, frames: int) -> np.ndarray:
    """reach[t, g] is True iff g can emit exactly frames - t more steps and finish."""
    n = len(lat.nodes)
    em = lat.emit
    reach = np.zeros((frames + 1, n), dtype=bool)
    reach[frames, lat.final.src] = True
    for t in range(frames - 1, -1, -1):
        live = reach[t + 1, em.dst]
        if live.any():
            reach[t, em.src[live]] = True
    return reach


def forward_vars(lat: Lattice, post: PosteriorTensor) -> np.ndarray:
    """Forward table logAlpha of shape (T + 1, num_nodes).

    logAlpha[t, g] sums, over prefixes of full-length alignments that reach
    node g in exactly t emissions, the log product of edge weights and
    emitted-label posteriors.  Row 0 is the initialization: 0 at the start
    node, -inf elsewhere.  Cells whose node cannot complete an alignment in
    the remaining frames are -inf (such prefixes extend no full-length
    path, so they contribute nothing).

    Too small a T is not an error here; the marginal simply comes out as
    -inf and the loss entry point reports infeasibility.
    """
    _check_compat(lat, post)
    frames = post.num_frames
    n = len(lat.nodes)
    em = lat.emit
    lp = post.logprobs
    completable = _backward_reachable(lat, frames)
    alpha = np.full((frames + 1, n), NEG_INF)
    alpha[0, lat.start_id] = 0.0
    for t in range(1, frames + 1):
        scores = alpha[t - 1, em.src] + em.log_weight + lp[t - 1, em.state, em.label]
        row = _scatter_logsumexp(scores, em.dst, n)
        row[~completable[t]] = NEG_INF
        alpha[t] = row
    return alpha


def backward_vars(lat: Lattice, post: PosteriorTensor) -> np.ndarray:
    """Backward table logBeta of shape (T + 1, num_nodes).

    logBeta[t, g] sums, over continuations that finish the alignment from
    node g after frame t, the log product of remaining edge weights and
    posteriors, including the terminal weight of the edge into the end
    node.  Row T holds that terminal weight for nodes with an end edge and
    -inf elsewhere; the recursion fills rows T-1 down to 1.
    """
    _check_compat(lat, post)
    frames = post.num_frames
    n = len(lat.nodes)
    em = lat.emit
    lp = post.logprobs
    beta = np.full((frames + 1, n), NEG_INF)
    beta[frames, lat.final.src] = lat.final.log_weight
    for t in range(frames - 1, 0, -1):
        scores = beta[t + 1, em.dst] + em.log_weight + lp[t, em.state, em.label]
        beta[t] = _scatter_logsumexp(scores, em.src, n)
    return beta


def marginal(
    lat: Lattice, post: PosteriorTensor, alpha: np.ndarray, beta: np.ndarray, t: int
) -> float:
    """Log marginal evaluated at frame t by joining the tables over edges.

    The result is the same (up to rounding) for every t in 1..T, which is
    the cross-check exploited by the verification suite.
    """
    frames = post.num_frames
    if not 1 <= t <= frames:
        raise ValueError(f"frame index t={t} outside 1..{frames}")
    em = lat.emit
    if em.src.size == 0:
        return NEG_INF
    lp = post.logprobs
    scores = alpha[t - 1, em.src] + em.log_weight + lp[t - 1, em.state, em.label] + beta[t, em.dst]
    peak = scores.max()
    if peak == NEG_INF:
        return NEG_INF
    return float(peak + np.log(np.exp(scores - peak).sum()))


def _terminal_log_marginal(lat: Lattice, alpha: np.ndarray) -> float:
    scores = alpha[-1, lat.final.src] + lat.final.log_weight
    if scores.size == 0:
        return NEG_INF
    peak = scores.max()
    if peak == NEG_INF:
        return NEG_INF
    return float(peak + np.log(np.exp(scores - peak).sum()))


def log_marginal(lat: Lattice, post: PosteriorTensor) -> float:
    """Log of the total alignment probability; raises
    :class:`InfeasibleLengthError` when no alignment of length T exists."""
    _require_feasible(lat, post.num_frames)
    return _terminal_log_marginal(lat, forward_vars(lat, post))


def _require_feasible(lat: Lattice, frames: int) -> None:
    if not _backward_reachable(lat, frames)[0, lat.start_id]:
        raise InfeasibleLengthError(frames, lat.min_emissions)


def loss_and_grad(lat: Lattice, post: PosteriorTensor) -> LossResult:
    """Negative log marginal plus its gradient w.r.t. the logits.

    The gradient row for (t, i) combines two edge sums computed in one pass
    over the lattice edges at frame t: one restricted to edges carrying
    decoder state i (weighted by the posterior of each edge's emitted
    label), and one further restricted to edges emitting label k.  Both are
    accumulated in log space and combined with a single subtraction in
    linear space per coordinate, which avoids signed log arithmetic.
    """
    _check_compat(lat, post)
    _require_feasible(lat, post.num_frames)
    frames = post.num_frames
    n_states, vocab = post.num_states, post.vocab_size
    em = lat.emit
    lp = post.logprobs

    alpha = forward_vars(lat, post)
    beta = backward_vars(lat, post)
    logp = _terminal_log_marginal(lat, alpha)
    if logp == NEG_INF:
        raise InfeasibleLengthError(frames, lat.min_emissions)

    flat_key = em.state * vocab + em.label
    grad = np.empty((frames, n_states, vocab))
    for t in range(1, frames + 1):
        span = alpha[t - 1, em.src] + em.log_weight + beta[t, em.dst]
        # per-(state, label) restricted sum, then the per-state sum as its
        # posterior-weighted total over labels
        by_label = _scatter_logsumexp(span, flat_key, n_states * vocab).reshape(n_states, vocab)
        by_state = np.logaddexp.reduce(lp[t - 1] + by_label, axis=1)
        grad[t - 1] = np.exp(lp[t - 1] + by_state[:, None] - logp) - np.exp(
            lp[t - 1] + by_label - logp
        )
    return LossResult(loss=-logp, log_marginal=logp, grad=grad)
