"""Toy reversible chains on mixture-of-Gaussian targets.

A fixed reverse-time shrinkage process carries target samples back to a
standard normal; a trainable forward-time chain (one shared network with a
one-hot time input) learns to run the same trajectories forwards. The module
also verifies numerically that the sampled trajectory objective lower-bounds
the terminal log-likelihood computed by exhaustive 1D quadrature.
"""

import numpy as np

from . import autodiff as ad
from . import nn
from . import training
from .distributions import GaussianParams, gauss_logpdf

_LOG_2PI = float(np.log(2.0 * np.pi))


class ToyTarget:
    """Mixture of diagonal Gaussians with exact densities."""

    def __init__(self, weights, means, variances):
        self.weights = np.asarray(weights, dtype=np.float64)
        self.means = np.atleast_2d(np.asarray(means, dtype=np.float64).T).T \
            if np.asarray(means).ndim == 1 else np.asarray(means, dtype=np.float64)
        self.means = np.asarray(means, dtype=np.float64).reshape(len(self.weights), -1)
        self.variances = np.asarray(variances, dtype=np.float64).reshape(len(self.weights), -1)
        if np.any(self.weights <= 0) or abs(self.weights.sum() - 1.0) > 1e-12:
            raise ValueError("mixture weights must be positive and sum to 1")
        self.dim = self.means.shape[1]

    @staticmethod
    def bimodal(sep=2.0, sigma=0.6):
        return ToyTarget([0.5, 0.5], [[-sep], [sep]], [[sigma ** 2], [sigma ** 2]])

    def sample(self, n, rng):
        comp = rng.choice(len(self.weights), size=n, p=self.weights)
        eps = rng.standard_normal((n, self.dim))
        return self.means[comp] + np.sqrt(self.variances[comp]) * eps

    def logpdf(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.dim:
            x = x.reshape(-1, self.dim)
        parts = []
        for w, mu, var in zip(self.weights, self.means, self.variances):
            quad = ((x - mu) ** 2 / var).sum(axis=1)
            norm = (np.log(var).sum() + self.dim * _LOG_2PI)
            parts.append(np.log(w) - 0.5 * (quad + norm))
        return np.logaddexp.reduce(np.stack(parts, axis=0), axis=0)

    def cdf_1d(self, x):
        from scipy.special import erf

        x = np.asarray(x, dtype=np.float64)
        acc = np.zeros_like(x)
        for w, mu, var in zip(self.weights, self.means[:, 0], self.variances[:, 0]):
            acc += w * 0.5 * (1.0 + erf((x - mu) / np.sqrt(2.0 * var)))
        return acc


def _gauss_logpdf_np(x, mean, var):
    return -0.5 * ((x - mean) ** 2 / var + np.log(var) + _LOG_2PI).sum(axis=-1)


class ChainSpec:
    """T-step chain: fixed reverse shrinkage kernels plus a trainable forward net.

    Reverse kernel at step t draws x_{t-1} ~ N(alpha_t x_t, beta_t I); with
    beta_t = 1 - alpha_t^2 the reverse chain is stationary for N(0, I), which
    is also the forward chain's starting distribution p0.
    """

    def __init__(self, T, dim=1, alpha=0.9, beta=None, hidden=64, seed=0):
        if T < 1:
            raise ValueError("chains need T >= 1")
        self.T = T
        self.dim = dim
        self.alphas = np.full(T, float(alpha)) if np.isscalar(alpha) else np.asarray(alpha, float)
        if np.any(self.alphas <= 0) or np.any(self.alphas >= 1):
            raise ValueError("shrink factors must lie in (0, 1)")
        self.betas = 1.0 - self.alphas ** 2 if beta is None else (
            np.full(T, float(beta)) if np.isscalar(beta) else np.asarray(beta, float))
        self.params = nn.ParamSet()
        rng = np.random.default_rng(seed)
        self.net = nn.MLPParams(self.params, "chain/net",
                                [dim + T, hidden, 2 * dim], ["tanh", "identity"], rng)

    def step_params(self, x_prev, t):
        """Forward kernel parameters p_t(. | x_prev) for step t in 1..T."""
        x_prev = np.atleast_2d(np.asarray(x_prev, dtype=np.float64))
        onehot = np.zeros((x_prev.shape[0], self.T))
        onehot[:, t - 1] = 1.0
        packed = self.net.apply(ad.constant(np.concatenate([x_prev, onehot], axis=1)))
        return GaussianParams.from_packed(packed)

    def step_params_np(self, x_prev, t):
        p = self.step_params(x_prev, t)
        return p.mean.data, np.exp(p.logvar.data)


def sample_reverse(spec, target, n, rng, start=None):
    """Trajectories (n, T+1, dim) laid out as x_0..x_T, generated backwards.

    start pins every trajectory's terminal point instead of drawing from the
    target (used when bounding log p at specific points)."""
    trajs = np.zeros((n, spec.T + 1, spec.dim))
    trajs[:, spec.T] = target.sample(n, rng) if start is None else start
    for t in range(spec.T, 0, -1):
        eps = rng.standard_normal((n, spec.dim))
        trajs[:, t - 1] = spec.alphas[t - 1] * trajs[:, t] + np.sqrt(spec.betas[t - 1]) * eps
    return trajs


def reverse_logpdf(spec, trajs):
    """Sum over steps of log q_t(x_{t-1} | x_t), (n,)."""
    total = np.zeros(trajs.shape[0])
    for t in range(spec.T, 0, -1):
        total += _gauss_logpdf_np(trajs[:, t - 1], spec.alphas[t - 1] * trajs[:, t],
                                  spec.betas[t - 1])
    return total


def forward_log_terms(spec, trajs):
    """(log p0(x_0), sum_t log p_t(x_t|x_{t-1})) with gradients on the sum."""
    n = trajs.shape[0]
    logp0 = _gauss_logpdf_np(trajs[:, 0], 0.0, np.ones(spec.dim))
    total = None
    for t in range(1, spec.T + 1):
        dist = spec.step_params(trajs[:, t - 1], t)
        term = gauss_logpdf(dist, ad.constant(trajs[:, t].reshape(n, -1)))
        total = term if total is None else ad.add(total, term)
    return logp0, total


def chain_objective(spec, target, trajs, full=False):
    """Monte-Carlo objective value on given trajectories (no gradients).

    The simplified form scores only the forward chain; the full form adds the
    reverse-kernel and target log-densities, which do not depend on the
    trainable forward parameters."""
    logp0, logp_steps = forward_log_terms(spec, trajs)
    simplified = float(np.mean(-logp0 - logp_steps.data[:, 0]))
    if not full:
        return simplified
    qside = float(np.mean(reverse_logpdf(spec, trajs) + target.logpdf(trajs[:, spec.T])))
    return simplified + qside


def train_forward(spec, target, updates, rng, batch=256, lr=1e-3,
                  divergence_limit=1e6):
    """ADAM on the simplified objective over fresh reverse roll-outs."""
    adam = training.AdamState()
    losses = []
    for update in range(updates):
        trajs = sample_reverse(spec, target, batch, rng)
        logp0, logp_steps = forward_log_terms(spec, trajs)
        loss = ad.mean(ad.scale(logp_steps, -1.0))
        value = loss.item() - float(np.mean(logp0))
        if not np.isfinite(value) or value > divergence_limit:
            raise RuntimeError(f"forward chain diverged at update {update}: loss {value}")
        ad.backward(loss)
        grads = {name: t.grad for name, t in spec.params.items() if t.grad is not None}
        training.adam_step(spec.params.items(), grads, adam, lr)
        losses.append(value)
    return losses


def sample_forward(spec, n, rng):
    """Run the trained forward chain from p0; returns terminal samples (n, dim)."""
    x = rng.standard_normal((n, spec.dim))
    for t in range(1, spec.T + 1):
        mean, var = spec.step_params_np(x, t)
        x = mean + np.sqrt(var) * rng.standard_normal((n, spec.dim))
    return x


# ---------------------------------------------------------------------------
# bound verification


def mc_bound(spec, points, mc_samples, rng):
    """Monte-Carlo trajectory bound on log p(x_T) at given 1D points.

    Returns (bound, se) per point; bound = E_q[log p0 + sum log p_t - log q]."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, spec.dim)
    n = points.shape[0]
    start = np.repeat(points, mc_samples, axis=0)
    trajs = sample_reverse(spec, None, start.shape[0], rng, start=start)
    logp0, logp_steps = forward_log_terms(spec, trajs)
    vals = logp0 + logp_steps.data[:, 0] - reverse_logpdf(spec, trajs)
    vals = vals.reshape(n, mc_samples)
    return vals.mean(axis=1), vals.std(axis=1, ddof=1) / np.sqrt(mc_samples)


def quadrature_logpdf(spec, points, lo=-8.0, hi=8.0, n_grid=2048):
    """Exact-to-quadrature log p(x_T) for a 1D chain via transfer matrices."""
    if spec.dim != 1:
        raise ValueError("grid quadrature only supports dim = 1")
    grid = np.linspace(lo, hi, n_grid).reshape(-1, 1)
    dx = (hi - lo) / (n_grid - 1)
    density = np.exp(_gauss_logpdf_np(grid, 0.0, np.ones(1)))
    for t in range(1, spec.T):
        mean, var = spec.step_params_np(grid, t)
        kernel = np.exp(-0.5 * ((grid.T - mean) ** 2 / var)) / np.sqrt(2.0 * np.pi * var)
        density = kernel.T @ density * dx
    points = np.asarray(points, dtype=np.float64).reshape(-1)
    mean, var = spec.step_params_np(grid, spec.T)
    kernel = np.exp(-0.5 * ((points[None, :] - mean) ** 2 / var)) / np.sqrt(2.0 * np.pi * var)
    return np.log(kernel.T @ density * dx)


def verify_bound(spec, target, points, mc_samples=100, rng=None,
                 lo=-8.0, hi=8.0, n_grid=2048):
    """Bound vs quadrature report for each terminal point (1D chains)."""
    bound, se = mc_bound(spec, points, mc_samples, rng)
    logp = quadrature_logpdf(spec, points, lo=lo, hi=hi, n_grid=n_grid)
    return {"points": np.asarray(points, float).reshape(-1), "bound": bound,
            "se": se, "logp": logp, "holds": bound - 3.0 * se <= logp}


def tv_distance(samples, target, lo=-8.0, hi=8.0, bins=160):
    """Total variation between a 1D sample histogram and the target density."""
    edges = np.linspace(lo, hi, bins + 1)
    counts, _ = np.histogram(samples[:, 0] if samples.ndim == 2 else samples, bins=edges)
    inside = counts.sum()
    empirical = counts / max(len(samples), 1)
    cdf = target.cdf_1d(edges)
    expected = np.diff(cdf)
    tail_emp = 1.0 - inside / max(len(samples), 1)
    tail_exp = 1.0 - (cdf[-1] - cdf[0])
    return 0.5 * (np.abs(empirical - expected).sum() + abs(tail_emp - tail_exp))
