"""CTC loss with exact gradients, and greedy decoding.

The loss is the standard alignment-marginalized negative log-likelihood:
labels are expanded with blanks (blank, l1, blank, l2, ..., blank) and a
forward-backward recursion sums over every frame-level path that collapses
to the label sequence. All recursions run in log space; at 200 frames the
probability-space form underflows float64.

The blank is always the LAST class: a (T, K) input has K - 1 usable labels
and blank id K - 1.

The decoder applies the usual collapse (merge frame repeats, drop blanks)
and then additionally merges any remaining adjacent identical labels, so
even a blank-separated repeat comes out once. Consequently decoded
sequences never contain the same phoneme twice in a row.
"""

from __future__ import annotations

from itertools import groupby
from typing import Sequence

import numpy as np

NEG_INF = -np.inf


class InfeasibleLengthError(ValueError):
    def __init__(self, t_len: int, min_frames: int):
        self.t_len = t_len
        self.min_frames = min_frames
        super().__init__(
            f"{t_len} frames cannot emit the label sequence "
            f"(needs at least {min_frames})"
        )


def log_softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise log-softmax, stable for large logits."""
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def log_softmax_backward(dlogp: np.ndarray, logp: np.ndarray) -> np.ndarray:
    """Gradient w.r.t. logits given the gradient w.r.t. log_softmax output."""
    return dlogp - np.exp(logp) * dlogp.sum(axis=-1, keepdims=True)


def min_frames(labels: Sequence[int]) -> int:
    """Shortest input that can emit ``labels``: repeats need a blank between."""
    repeats = sum(1 for a, b in zip(labels, labels[1:]) if a == b)
    return len(labels) + repeats


def ctc_loss(logp: np.ndarray, labels: Sequence[int]) -> tuple[float, np.ndarray]:
    """Negative log-likelihood of ``labels`` and its exact gradient.

    ``logp`` is a (T, K) matrix of per-frame log-probabilities (rows summing
    to one in probability space); the returned gradient is with respect to
    those log-probabilities and composes with ``log_softmax_backward``.

    Raises InfeasibleLengthError when T is too short for the labels.
    """
    logp = np.asarray(logp, dtype=np.float64)
    t_len, n_classes = logp.shape
    blank = n_classes - 1
    labels = list(labels)
    if not labels:
        raise ValueError("labels must be non-empty")
    if any(not 0 <= l < blank for l in labels):
        raise ValueError(f"label ids must be in [0, {blank})")
    needed = min_frames(labels)
    if t_len < needed:
        raise InfeasibleLengthError(t_len, needed)

    # Blank-expanded state sequence: blank, l1, blank, l2, ..., lL, blank.
    n_states = 2 * len(labels) + 1
    states = np.full(n_states, blank, dtype=np.int64)
    states[1::2] = labels

    # A state may receive from s-2 only if it is a label differing from the
    # label two states back (skipping the separating blank).
    skip_ok = np.zeros(n_states, dtype=bool)
    skip_ok[3::2] = states[3::2] != states[1:-2:2]

    emit = logp[:, states]  # (T, S)

    alpha = np.full((t_len, n_states), NEG_INF)
    alpha[0, 0] = emit[0, 0]
    alpha[0, 1] = emit[0, 1]
    for t in range(1, t_len):
        prev = alpha[t - 1]
        stay = prev
        step = np.concatenate(([NEG_INF], prev[:-1]))
        skip = np.concatenate(([NEG_INF, NEG_INF], prev[:-2]))
        skip = np.where(skip_ok, skip, NEG_INF)
        alpha[t] = np.logaddexp(np.logaddexp(stay, step), skip) + emit[t]

    log_p = np.logaddexp(alpha[t_len - 1, n_states - 1],
                         alpha[t_len - 1, n_states - 2])

    beta = np.full((t_len, n_states), NEG_INF)
    beta[t_len - 1, n_states - 1] = 0.0
    beta[t_len - 1, n_states - 2] = 0.0
    # Receiving mask transposed: state s feeds s+2 when skip_ok[s+2].
    feed_skip = np.concatenate((skip_ok[2:], [False, False]))
    for t in range(t_len - 2, -1, -1):
        nxt = beta[t + 1] + emit[t + 1]
        stay = nxt
        step = np.concatenate((nxt[1:], [NEG_INF]))
        skip = np.concatenate((nxt[2:], [NEG_INF, NEG_INF]))
        skip = np.where(feed_skip, skip, NEG_INF)
        beta[t] = np.logaddexp(np.logaddexp(stay, step), skip)

    # State posteriors; each row of exp(gamma - log_p) sums to 1.
    gamma = alpha + beta
    posterior = np.exp(gamma - log_p)
    grad = np.zeros_like(logp)
    rows = np.broadcast_to(np.arange(t_len)[:, None], posterior.shape)
    cols = np.broadcast_to(states[None, :], posterior.shape)
    np.add.at(grad, (rows, cols), posterior)
    return float(-log_p), -grad


def greedy_decode(logp: np.ndarray) -> list[int]:
    """Best-per-frame decode; ties go to the lowest class id.

    Returns label ids with blanks removed and no two adjacent ids equal.
    """
    logp = np.asarray(logp)
    blank = logp.shape[1] - 1
    frame_ids = logp.argmax(axis=1)
    collapsed = [k for k, _ in groupby(frame_ids) if k != blank]
    return [int(k) for k, _ in groupby(collapsed)]
