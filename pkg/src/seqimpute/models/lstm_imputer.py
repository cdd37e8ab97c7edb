"""Imputation policy spread over reader and writer LSTMs.

Per step the reader digests (current guess, known values, mask, previous
writer output) and proposes a latent step; the writer turns the step into a
canvas update. The guide owns its own reader (which also sees the missing
values) but shares the writer stack, the write op, and the state expander
with the primary policy. Initial states come from an infinite-mixture step:
a latent z0 drawn from an encoder over the (fully or partially) visible
image, expanded into all LSTM states and the initial canvas.
"""

import numpy as np

from .. import autodiff as ad
from .. import nn
from ..distributions import bernoulli_nll, gauss_kl, reparam_sample
from .common import Trajectory, gauss_head, mlp_acts, mlp_dims


class LstmImputer:
    def __init__(self, dim, constructor, T=16, hidden=64, depth=1, z_dim=32,
                 z0_dim=16, act="tanh", feed_mask=True, read_op="concat", seed=0):
        if constructor not in ("add", "jump"):
            raise ValueError(f"constructor must be add or jump, got {constructor!r}")
        if read_op not in ("concat", "mlp"):
            raise ValueError(f"read_op must be concat or mlp, got {read_op!r}")
        self.kind = f"lstm_{constructor}"
        self.dim = dim
        self.constructor = constructor
        self.T = T
        self.n = hidden
        self.z_dim = z_dim
        self.z0_dim = z0_dim
        self.feed_mask = feed_mask
        self.read_op = read_op
        rng = np.random.default_rng(seed)
        self.params = nn.ParamSet()

        n = hidden
        base_in = 2 * dim + (dim if feed_mask else 0) + n   # guess, known, [mask], prev writer v
        if read_op == "mlp":
            self.read_net = nn.MLPParams(self.params, "policy/read",
                                         [base_in, n], ["tanh"], rng)
            self.guide_read_net = nn.MLPParams(self.params, "guide/read",
                                               [base_in + dim, n], ["tanh"], rng)
            reader_in, guide_in = n, n
        else:
            self.read_net = self.guide_read_net = None
            reader_in, guide_in = base_in, base_in + dim
        self.reader = nn.LSTMParams(self.params, "policy/reader", reader_in, n, rng)
        self.step_head = nn.AffineParams(self.params, "policy/step_head", n, 2 * z_dim, rng)
        self.init_net = nn.MLPParams(self.params, "policy/init",
                                     mlp_dims(2 * dim, hidden, depth, 2 * z0_dim),
                                     mlp_acts(depth, act), rng)
        self.guide = nn.LSTMParams(self.params, "guide/reader", guide_in, n, rng)
        self.guide_head = nn.AffineParams(self.params, "guide/step_head", n, 2 * z_dim, rng)
        self.guide_init_net = nn.MLPParams(self.params, "guide/init",
                                           mlp_dims(2 * dim, hidden, depth, 2 * z0_dim),
                                           mlp_acts(depth, act), rng)
        self.writer = nn.LSTMParams(self.params, "shared/writer", z_dim, n, rng)
        self.write_op = nn.AffineParams(self.params, "shared/write_op", n, dim, rng)
        self.expander = nn.MLPParams(self.params, "shared/expander",
                                     mlp_dims(z0_dim, hidden, depth, 6 * n + dim),
                                     mlp_acts(depth, act), rng)

    def guide_param_names(self):
        return [n for n in self.params.names() if n.startswith("guide/")]

    def _expand_states(self, z0):
        n = self.n
        out = self.expander.apply(z0)
        chunks = [ad.slice_cols(out, i * n, (i + 1) * n) for i in range(6)]
        c0 = ad.slice_cols(out, 6 * n, 6 * n + self.dim)
        reader = nn.LSTMState(chunks[0], chunks[1])
        writer = nn.LSTMState(chunks[2], chunks[3])
        guide = nn.LSTMState(chunks[4], chunks[5])
        return reader, writer, guide, c0

    def rollout(self, x, mask, rng, policy="guide", T=None):
        T = self.T if T is None else T
        if T < 1:
            raise ValueError("roll-outs need T >= 1")
        x = np.asarray(x, dtype=np.float64)
        guided = policy == "guide"
        known = ad.constant(x * mask.known)
        mask_t = ad.constant(mask.known)
        missing_t = ad.constant(mask.missing)
        target = ad.constant(x)
        full = ad.constant(x)

        # infinite-mixture initialization
        p0_dist = gauss_head(self.init_net, ad.concat_cols(known, mask_t))
        if guided:
            q0_dist = gauss_head(self.guide_init_net, ad.concat_cols(full, mask_t))
            z0 = reparam_sample(q0_dist, rng)
            kls = [gauss_kl(q0_dist, p0_dist)]
        else:
            q0_dist = None
            z0 = reparam_sample(p0_dist, rng)
            kls = []
        s_r, s_w, s_q, c = self._expand_states(z0.z)

        canvases = [c]
        latents = [z0]
        dists = [(q0_dist, p0_dist)]
        states = [{"reader": s_r, "writer": s_w}]
        deltas = [] if self.constructor == "add" else None
        for _ in range(T):
            feat = ad.sigmoid(c)
            base = [feat, known] + ([mask_t] if self.feed_mask else []) + [s_w.v]
            r_in = ad.concat_many(base)
            if self.read_net is not None:
                r_in = self.read_net.apply(r_in)
            s_r = nn.lstm_step(self.reader, s_r, r_in)
            p_dist = gauss_head(self.step_head, s_r.v)
            if guided:
                q_in = ad.concat_many(base[:-1] + [full, s_w.v])
                if self.guide_read_net is not None:
                    q_in = self.guide_read_net.apply(q_in)
                s_q = nn.lstm_step(self.guide, s_q, q_in)
                q_dist = gauss_head(self.guide_head, s_q.v)
                step = reparam_sample(q_dist, rng)
                kls.append(gauss_kl(q_dist, p_dist))
            else:
                q_dist = None
                step = reparam_sample(p_dist, rng)
            s_w = nn.lstm_step(self.writer, s_w, step.z)
            if self.constructor == "add":
                guess = self.write_op.apply(s_w.v)
                deltas.append(guess)
                c = ad.add(c, guess)
            else:
                c = self.write_op.apply(s_w.h)
            canvases.append(c)
            latents.append(step)
            dists.append((q_dist, p_dist))
            states.append({"reader": s_r, "writer": s_w})
        nll = bernoulli_nll(c, target, mask=missing_t)
        return Trajectory(policy, self.constructor, latents, dists, states, canvases,
                          deltas=deltas, step_kls=kls, terminal_nll=nll)

    def guided_rollout(self, x, mask, rng, T=None):
        return self.rollout(x, mask, rng, policy="guide", T=T)

    def primary_rollout(self, x, mask, rng, T=None):
        return self.rollout(x, mask, rng, policy="primary", T=T)
