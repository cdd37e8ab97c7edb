"""Policy construction and the deployment-side imputation entry point."""

import numpy as np

from .._util import sigmoid_np
from .baselines import VaeModel, template_match, vae_impute
from .common import Trajectory
from .generator import Generator
from .gpsi import GpsiImputer
from .lstm_imputer import LstmImputer

MODEL_KINDS = ("gen_add", "gen_jump", "gpsi_add", "gpsi_jump",
               "lstm_add", "lstm_jump", "vae")


def build_model(kind, dim, T=6, hidden=64, depth=2, z_dim=32, z0_dim=16,
                act="relu", feed_mask=True, read_op="concat", seed=0):
    if kind not in MODEL_KINDS:
        raise ValueError(f"unknown model kind {kind!r}; pick one of {MODEL_KINDS}")
    family, _, constructor = kind.partition("_")
    if family == "gpsi":
        return GpsiImputer(dim, constructor, T=T, hidden=hidden, depth=depth,
                           z_dim=z_dim, act=act, feed_mask=feed_mask, seed=seed)
    if family == "lstm":
        return LstmImputer(dim, constructor, T=T, hidden=hidden, depth=depth,
                           z_dim=z_dim, z0_dim=z0_dim, act=act, feed_mask=feed_mask,
                           read_op=read_op, seed=seed)
    if family == "gen":
        return Generator(dim, constructor, T=T, hidden=hidden, depth=depth,
                         z_dim=z_dim, z0_dim=z0_dim, act=act, seed=seed)
    return VaeModel(dim, hidden=hidden, depth=depth, z_dim=z_dim, act=act, seed=seed)


def impute(model, x, mask, T=None, samples=1, rng=None):
    """Deploy the primary policy on (x, mask) without peeking at missing values.

    Averages sigma(c_T) over `samples` roll-outs at the missing sites, scores
    each roll-out's canvas against the true missing values, and returns
    (point imputation, per-example per-pixel NLL, one canvas trajectory).
    """
    x = np.asarray(x, dtype=np.float64)
    counts = mask.missing_counts()
    if np.any(counts == 0):
        raise ValueError("nothing to impute: a mask row has no missing pixels")
    guesses = np.zeros_like(x)
    nll_rows = np.zeros(x.shape[0])
    canvases = None
    for _ in range(samples):
        traj = model.primary_rollout(x, mask, rng, T=T)
        guesses += sigmoid_np(traj.final_canvas.data)
        nll_rows += traj.terminal_nll.data[:, 0]
        canvases = traj.canvas_arrays()
    point = x * mask.known + (guesses / samples) * mask.missing
    per_pixel = (nll_rows / samples) / counts
    return point, per_pixel, canvases
