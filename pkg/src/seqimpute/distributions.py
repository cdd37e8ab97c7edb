"""Diagonal Gaussian steps and Bernoulli canvas scoring.

All step distributions are diagonal Gaussians carried as (mean, logvar)
pairs; log-variances are hard-clamped to [-8, 8] at construction so KL and
sigma terms stay finite in early training.
"""

import numpy as np

from . import autodiff as ad

LOGVAR_MIN = -8.0
LOGVAR_MAX = 8.0
_LOG_2PI = float(np.log(2.0 * np.pi))


class GaussianParams:
    def __init__(self, mean, logvar):
        if mean.shape != logvar.shape:
            raise ad.ShapeMismatch(f"gaussian: mean {mean.shape} vs logvar {logvar.shape}")
        self.mean = mean
        self.logvar = ad.clip(logvar, LOGVAR_MIN, LOGVAR_MAX)

    @property
    def shape(self):
        return self.mean.shape

    @staticmethod
    def standard(batch, dim):
        zeros = np.zeros((batch, dim))
        return GaussianParams(ad.constant(zeros), ad.constant(zeros))

    @staticmethod
    def from_packed(packed):
        """Split an affine head's (batch, 2d) output into means and logvars."""
        d = packed.cols // 2
        return GaussianParams(ad.slice_cols(packed, 0, d), ad.slice_cols(packed, d, 2 * d))


class LatentStep:
    """A sampled step z together with the noise draw that produced it."""

    def __init__(self, z, eps):
        self.z = z
        self.eps = eps


def reparam_sample(params, rng):
    """z = mean + exp(logvar/2) * eps with eps ~ N(0, I) held out of the tape."""
    eps = ad.constant(rng.standard_normal(params.shape))
    sigma = ad.exp(ad.scale(params.logvar, 0.5))
    z = ad.add(params.mean, ad.mul(sigma, eps))
    return LatentStep(z, eps)


def gauss_kl(q, p):
    """Per-row KL(q || p) between diagonal Gaussians, (batch, 1)."""
    if q.shape != p.shape:
        raise ad.ShapeMismatch(f"gauss_kl: shapes {q.shape} vs {p.shape}")
    dlv = ad.sub(q.logvar, p.logvar)
    dmu = ad.sub(q.mean, p.mean)
    ratio = ad.exp(dlv)
    mahal = ad.mul(ad.mul(dmu, dmu), ad.exp(ad.scale(p.logvar, -1.0)))
    per_dim = ad.add_scalar(ad.sub(ad.add(ratio, mahal), dlv), -1.0)
    return ad.scale(ad.sum_rows(per_dim), 0.5)


def gauss_logpdf(params, x):
    """Per-row log density of x under a diagonal Gaussian, (batch, 1)."""
    if x.shape != params.shape:
        raise ad.ShapeMismatch(f"gauss_logpdf: x {x.shape} vs params {params.shape}")
    dmu = ad.sub(x, params.mean)
    mahal = ad.mul(ad.mul(dmu, dmu), ad.exp(ad.scale(params.logvar, -1.0)))
    per_dim = ad.add_scalar(ad.add(params.logvar, mahal), _LOG_2PI)
    return ad.scale(ad.sum_rows(per_dim), -0.5)


def bernoulli_nll(logits, target, mask=None):
    """Per-row cross-entropy of targets in [0, 1] against sigmoid(logits).

    mask marks the included columns with 1; everything else contributes zero.
    Computed through the stable log-sigmoid, returned in nats, (batch, 1).
    """
    if logits.shape != target.shape:
        raise ad.ShapeMismatch(f"bernoulli_nll: logits {logits.shape} vs target {target.shape}")
    t = target.data if isinstance(target, ad.Tensor) else np.asarray(target)
    if np.any(t < 0.0) or np.any(t > 1.0):
        raise ad.DomainError("bernoulli_nll: targets must lie in [0, 1]")
    log_p1 = ad.logsigmoid(logits)
    log_p0 = ad.logsigmoid(ad.scale(logits, -1.0))
    one_minus = ad.add_scalar(ad.scale(target, -1.0), 1.0)
    per_pix = ad.add(ad.mul(target, log_p1), ad.mul(one_minus, log_p0))
    if mask is not None:
        if mask.shape != logits.shape:
            raise ad.ShapeMismatch(f"bernoulli_nll: mask {mask.shape} vs logits {logits.shape}")
        per_pix = ad.mul(per_pix, mask)
    return ad.scale(ad.sum_rows(per_pix), -1.0)
