"""Sequential LSTM generator with state-conditioned steps.

The decoder LSTM rolls a canvas forward for T steps; each step's latent is
drawn from a prior head over the previous visible state, making the step
distribution depend on where the roll-out currently is. The initial state is
itself sampled (an infinite mixture over starting points): z0 comes from a
standard normal at sampling time or from an image encoder during training,
and a state expander turns it into initial decoder and guide states.
"""

import numpy as np

from .. import autodiff as ad
from .. import nn
from ..distributions import GaussianParams, bernoulli_nll, gauss_kl, reparam_sample
from .common import Trajectory, broadcast_rows, gauss_head, mlp_acts, mlp_dims


class Generator:
    def __init__(self, dim, constructor, T=16, hidden=64, depth=1, z_dim=32,
                 z0_dim=16, act="tanh", seed=0, **_ignored):
        if constructor not in ("add", "jump"):
            raise ValueError(f"constructor must be add or jump, got {constructor!r}")
        self.kind = f"gen_{constructor}"
        self.dim = dim
        self.constructor = constructor
        self.T = T
        self.n = hidden
        self.z_dim = z_dim
        self.z0_dim = z0_dim
        rng = np.random.default_rng(seed)
        self.params = nn.ParamSet()

        n = hidden
        self.decoder = nn.LSTMParams(self.params, "policy/decoder", z_dim, n, rng)
        self.prior_head = nn.AffineParams(self.params, "policy/prior_head", n, 2 * z_dim, rng)
        self.output = nn.AffineParams(self.params, "policy/output", n, dim, rng)
        self.expander = nn.MLPParams(self.params, "policy/expander",
                                     mlp_dims(z0_dim, hidden, depth, 4 * n),
                                     mlp_acts(depth, act), rng)
        self.canvas0 = self.params.add("policy/canvas0", np.zeros((1, dim)))
        # guide reads the target, the residual error, and the decoder's state
        self.encoder = nn.MLPParams(self.params, "guide/encoder",
                                    mlp_dims(dim, hidden, depth, 2 * z0_dim),
                                    mlp_acts(depth, act), rng)
        self.guide = nn.LSTMParams(self.params, "guide/lstm", 2 * dim + n, n, rng)
        self.guide_head = nn.AffineParams(self.params, "guide/step_head", n, 2 * z_dim, rng)

    def guide_param_names(self):
        return [n for n in self.params.names() if n.startswith("guide/")]

    def _expand_states(self, z0):
        n = self.n
        out = self.expander.apply(z0)
        chunks = [ad.slice_cols(out, i * n, (i + 1) * n) for i in range(4)]
        return nn.LSTMState(chunks[0], chunks[1]), nn.LSTMState(chunks[2], chunks[3])

    def rollout(self, x=None, rng=None, batch=None, T=None):
        """Guided roll-out when x is given, otherwise a prior sample."""
        T = self.T if T is None else T
        if T < 1:
            raise ValueError("roll-outs need T >= 1")
        guided = x is not None
        if guided:
            x = np.asarray(x, dtype=np.float64)
            batch = x.shape[0]
            target = ad.constant(x)
        elif batch is None:
            raise ValueError("prior roll-outs need an explicit batch size")

        z0_prior = GaussianParams.standard(batch, self.z0_dim)
        if guided:
            q0_dist = gauss_head(self.encoder, target)
            z0 = reparam_sample(q0_dist, rng)
            kls = [gauss_kl(q0_dist, z0_prior)]
        else:
            q0_dist = None
            z0 = reparam_sample(z0_prior, rng)
            kls = []
        s, s_g = self._expand_states(z0.z)

        c = broadcast_rows(self.canvas0, batch)
        canvases = [c]
        latents = [z0]
        dists = [(q0_dist, z0_prior)]
        states = [{"decoder": s}]
        deltas = [] if self.constructor == "add" else None
        for _ in range(T):
            p_dist = gauss_head(self.prior_head, s.v)
            if guided:
                residual = ad.sub(target, ad.sigmoid(c))
                read = ad.concat_many([target, residual, s.v])
                s_g = nn.lstm_step(self.guide, s_g, read)
                q_dist = gauss_head(self.guide_head, s_g.v)
                step = reparam_sample(q_dist, rng)
                kls.append(gauss_kl(q_dist, p_dist))
            else:
                q_dist = None
                step = reparam_sample(p_dist, rng)
            s = nn.lstm_step(self.decoder, s, step.z)
            if self.constructor == "add":
                guess = self.output.apply(s.v)
                deltas.append(guess)
                c = ad.add(c, guess)
            else:
                c = self.output.apply(s.h)
            canvases.append(c)
            latents.append(step)
            dists.append((q_dist, p_dist))
            states.append({"decoder": s})
        nll = bernoulli_nll(c, target) if guided else None
        return Trajectory("guide" if guided else "primary", self.constructor, latents,
                          dists, states, canvases, deltas=deltas, step_kls=kls,
                          terminal_nll=nll)

    def guided_rollout(self, x, mask=None, rng=None, T=None):
        return self.rollout(x=x, rng=rng, T=T)

    def prior_rollout(self, batch, rng, T=None):
        return self.rollout(x=None, rng=rng, batch=batch, T=T)
