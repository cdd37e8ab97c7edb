"""Small numpy helpers shared across modules."""

import numpy as np


def sigmoid_np(x):
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[np.logical_not(pos)])
    out[np.logical_not(pos)] = ex / (1.0 + ex)
    return out


def nll_of_probs(probs, target, include, floor=1e-7):
    """Bernoulli NLL of explicit probabilities, clamped away from 0/1.

    Used only for evaluation of baseline guesses, never inside a training
    loss; the clamp keeps exact template self-matches finitely scored.
    """
    p = np.clip(probs, floor, 1.0 - floor)
    per_pix = target * np.log(p) + (1.0 - target) * np.log(1.0 - p)
    return -(per_pix * include).sum(axis=1)


def ema(values, decay=0.9):
    out = np.empty(len(values))
    acc = values[0]
    for i, v in enumerate(values):
        acc = decay * acc + (1.0 - decay) * v
        out[i] = acc
    return out
