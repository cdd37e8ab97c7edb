"""Baselines: iterative VAE imputation and template matching.

The VAE trains unconditionally on complete observations; imputation runs
repeated encode/decode cycles with the known pixels pinned to their true
values, so its guesses at the missing pixels are only as coherent as the
information its latent actually carries. Template matching copies missing
values from the closest training image, matched on the known pixels
(honest) or directly on the missing ones (oracle).
"""

import logging

import numpy as np

from .. import autodiff as ad
from .. import nn
from ..distributions import GaussianParams, bernoulli_nll, gauss_kl, reparam_sample
from .common import Trajectory, gauss_head, mlp_acts, mlp_dims

log = logging.getLogger(__name__)


class VaeModel:
    kind = "vae"

    def __init__(self, dim, T=1, hidden=64, depth=2, z_dim=32, act="relu",
                 seed=0, **_ignored):
        self.dim = dim
        self.T = 1
        self.z_dim = z_dim
        self.trained = False
        rng = np.random.default_rng(seed)
        self.params = nn.ParamSet()
        self.encoder = nn.MLPParams(self.params, "guide/encoder",
                                    mlp_dims(dim, hidden, depth, 2 * z_dim),
                                    mlp_acts(depth, act), rng)
        self.decoder = nn.MLPParams(self.params, "policy/decoder",
                                    mlp_dims(z_dim, hidden, depth, dim),
                                    mlp_acts(depth, act), rng)

    def guide_param_names(self):
        return [n for n in self.params.names() if n.startswith("guide/")]

    def guided_rollout(self, x, mask=None, rng=None):
        """One reconstruction cycle, packaged like a single-step trajectory."""
        x = np.asarray(x, dtype=np.float64)
        target = ad.constant(x)
        q_dist = gauss_head(self.encoder, target)
        step = reparam_sample(q_dist, rng)
        logits = self.decoder.apply(step.z)
        prior = GaussianParams.standard(x.shape[0], self.z_dim)
        kl = gauss_kl(q_dist, prior)
        nll = bernoulli_nll(logits, target)
        return Trajectory("guide", None, [step], [(q_dist, prior)], [], [logits],
                          step_kls=[kl], terminal_nll=nll)

    def reconstruct(self, guess, rng):
        """Encode the current guess, sample a latent, return decoder logits."""
        q_dist = gauss_head(self.encoder, ad.constant(guess))
        step = reparam_sample(q_dist, rng)
        return self.decoder.apply(step.z).data


def vae_impute(model, x, mask, steps=16, rng=None):
    """Iterative reconstruction with known values held fixed each cycle.

    Returns the final guess (known pixels pinned, missing pixels the mean
    decoder output) and the per-step guess sequence.
    """
    if not model.trained:
        log.warning("vae_impute called with an untrained VAE")
    x = np.asarray(x, dtype=np.float64)
    known = mask.known
    guess = x * known + 0.5 * (1.0 - known)
    history = [guess.copy()]
    for _ in range(steps):
        from .._util import sigmoid_np

        logits = model.reconstruct(guess, rng)
        guess = x * known + sigmoid_np(logits) * (1.0 - known)
        history.append(guess.copy())
    return guess, history


def template_match(train, x, mask, mode="honest"):
    """Copy the missing values of the best-matching training image.

    honest matches on known pixels, oracle on the missing ones; ties break
    toward the lowest training row index.
    """
    images = train.images if hasattr(train, "images") else np.asarray(train)
    if images.shape[0] == 0:
        raise ValueError("template matching needs a non-empty training set")
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    sites = mask.known if mode == "honest" else mask.missing
    if mode not in ("honest", "oracle"):
        raise ValueError(f"mode must be honest or oracle, got {mode!r}")
    # ||(b - x) . s||^2 expanded so one GEMM covers the whole batch
    sq = images * images
    cross = images @ (x * sites).T                # (train, batch)
    quad = sq @ sites.T                           # (train, batch)
    dist = quad - 2.0 * cross + ((x * x) * sites).sum(axis=1)[None, :]
    best = np.argmin(dist, axis=0)
    guesses = x * mask.known + images[best] * mask.missing
    return (guesses[0], int(best[0])) if single else (guesses, best)
