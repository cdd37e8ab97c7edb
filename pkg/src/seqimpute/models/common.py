"""Shared roll-out record keeping for all policies."""

import numpy as np

from .. import autodiff as ad
from ..distributions import GaussianParams, gauss_logpdf


class Trajectory:
    """One roll-out: latent steps, state logs, canvases, KLs, terminal NLL.

    `dists` holds one (guide, primary) GaussianParams pair per latent step;
    the guide slot is None on primary roll-outs. `constructor` tags how the
    canvas was advanced ('add' accumulates deltas, 'jump' replaces).
    """

    def __init__(self, policy, constructor, latents, dists, states, canvases,
                 deltas=None, step_kls=None, terminal_nll=None):
        self.policy = policy
        self.constructor = constructor
        self.latents = latents
        self.dists = dists
        self.states = states
        self.canvases = canvases
        self.deltas = deltas
        self.step_kls = step_kls or []
        self.terminal_nll = terminal_nll

    @property
    def final_canvas(self):
        return self.canvases[-1]

    def kl_sum(self):
        if not self.step_kls:
            raise ValueError("trajectory has no KL terms (primary roll-out?)")
        total = self.step_kls[0]
        for term in self.step_kls[1:]:
            total = ad.add(total, term)
        return total

    def step_kl_matrix(self):
        cols = self.step_kls[0]
        for term in self.step_kls[1:]:
            cols = ad.concat_cols(cols, term)
        return cols

    def log_prob_guide(self):
        """Sum over steps of log q(z_t) at the sampled latents, (batch, 1)."""
        total = None
        for step, (q_dist, _) in zip(self.latents, self.dists):
            if q_dist is None:
                raise ValueError("primary roll-out has no guide densities")
            term = gauss_logpdf(q_dist, step.z)
            total = term if total is None else ad.add(total, term)
        return total

    def log_prob_primary(self):
        """Sum over steps of log p(z_t) at the sampled latents, (batch, 1)."""
        total = None
        for step, (_, p_dist) in zip(self.latents, self.dists):
            term = gauss_logpdf(p_dist, step.z)
            total = term if total is None else ad.add(total, term)
        return total

    def canvas_arrays(self):
        return [c.data.copy() for c in self.canvases]


def broadcast_rows(bias, batch):
    """Tile a (1, D) parameter down a batch, keeping the gradient route."""
    return ad.add(ad.constant(np.zeros((batch, bias.cols))), bias)


def gauss_head(affine, x):
    return GaussianParams.from_packed(affine.apply(x))


def mlp_dims(in_dim, hidden, depth, out_dim):
    return [in_dim] + [hidden] * depth + [out_dim]


def mlp_acts(depth, act):
    return [act] * depth + ["identity"]
