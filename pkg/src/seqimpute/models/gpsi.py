"""Direct imputation policy: a stationary step selector plus a guess constructor.

The primary step selector sees the current guess (through a sigmoid), the
known pixel values, and the mask; the guide additionally sees the missing
values. Both share the constructor network and the initial canvas bias, so
the guide's gradients shape the machinery the primary deploys.
"""

import numpy as np

from .. import autodiff as ad
from .. import nn
from ..distributions import bernoulli_nll, gauss_kl, reparam_sample
from .common import Trajectory, broadcast_rows, gauss_head, mlp_acts, mlp_dims


class GpsiImputer:
    def __init__(self, dim, constructor, T=6, hidden=64, depth=2, z_dim=32,
                 act="relu", feed_mask=True, seed=0):
        if constructor not in ("add", "jump"):
            raise ValueError(f"constructor must be add or jump, got {constructor!r}")
        self.kind = f"gpsi_{constructor}"
        self.dim = dim
        self.constructor = constructor
        self.T = T
        self.z_dim = z_dim
        self.feed_mask = feed_mask
        rng = np.random.default_rng(seed)
        self.params = nn.ParamSet()
        side = 2 * dim + (dim if feed_mask else 0)
        self.policy_net = nn.MLPParams(
            self.params, "policy/step", mlp_dims(side, hidden, depth, 2 * z_dim),
            mlp_acts(depth, act), rng)
        self.guide_net = nn.MLPParams(
            self.params, "guide/step", mlp_dims(side + dim, hidden, depth, 2 * z_dim),
            mlp_acts(depth, act), rng)
        self.constructor_net = nn.MLPParams(
            self.params, "shared/constructor", mlp_dims(z_dim, hidden, depth, dim),
            mlp_acts(depth, act), rng)
        self.canvas0 = self.params.add("shared/canvas0", np.zeros((1, dim)))

    def guide_param_names(self):
        return [n for n in self.params.names() if n.startswith("guide/")]

    def rollout(self, x, mask, rng, policy="guide", T=None):
        T = self.T if T is None else T
        if T < 1:
            raise ValueError("roll-outs need T >= 1")
        x = np.asarray(x, dtype=np.float64)
        batch = x.shape[0]
        guided = policy == "guide"
        known = ad.constant(x * mask.known)
        mask_t = ad.constant(mask.known)
        missing_t = ad.constant(mask.missing)
        target = ad.constant(x)
        if guided:
            unknown = ad.constant(x * mask.missing)

        c = broadcast_rows(self.canvas0, batch)
        canvases, latents, dists, kls = [c], [], [], []
        deltas = [] if self.constructor == "add" else None
        for _ in range(T):
            feat = ad.sigmoid(c)
            base = [feat, known] + ([mask_t] if self.feed_mask else [])
            p_dist = gauss_head(self.policy_net, ad.concat_many(base))
            if guided:
                q_dist = gauss_head(self.guide_net, ad.concat_many(base + [unknown]))
                step = reparam_sample(q_dist, rng)
                kls.append(gauss_kl(q_dist, p_dist))
            else:
                q_dist = None
                step = reparam_sample(p_dist, rng)
            guess = self.constructor_net.apply(step.z)
            if self.constructor == "add":
                deltas.append(guess)
                c = ad.add(c, guess)
            else:
                c = guess
            canvases.append(c)
            latents.append(step)
            dists.append((q_dist, p_dist))
        nll = bernoulli_nll(c, target, mask=missing_t)
        return Trajectory(policy, self.constructor, latents, dists, [], canvases,
                          deltas=deltas, step_kls=kls, terminal_nll=nll)

    def guided_rollout(self, x, mask, rng, T=None):
        return self.rollout(x, mask, rng, policy="guide", T=T)

    def primary_rollout(self, x, mask, rng, T=None):
        return self.rollout(x, mask, rng, policy="primary", T=T)
