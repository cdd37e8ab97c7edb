"""Scoring: per-pixel normalized bounds, importance-weighted estimates,
refinement-step sweeps, and PGM image grids."""

import dataclasses
import os

import numpy as np
from scipy.special import logsumexp

from . import data as dt
from ._util import nll_of_probs, sigmoid_np
from .models import vae_impute
from .training import free_energy

REPORT_HEADER = ["model", "mask", "T", "samples", "trials", "mean_score", "stderr"]


@dataclasses.dataclass
class EvalReport:
    model: str
    mask_spec: str
    T: int
    samples: int
    bounds: np.ndarray          # per-example bound in nats
    missing_counts: np.ndarray

    @property
    def scores(self):
        return self.bounds / self.missing_counts

    @property
    def trials(self):
        return len(self.bounds)

    @property
    def mean_score(self):
        return float(self.scores.mean())

    @property
    def stderr(self):
        return float(self.scores.std(ddof=1) / np.sqrt(len(self.bounds)))

    def row(self):
        return {"model": self.model, "mask": self.mask_spec, "T": str(self.T),
                "samples": str(self.samples), "trials": str(self.trials),
                "mean_score": repr(self.mean_score), "stderr": repr(self.stderr)}


def write_report_csv(path, reports):
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=REPORT_HEADER, lineterminator="\n")
        writer.writeheader()
        for rep in reports:
            writer.writerow(rep.row() if isinstance(rep, EvalReport) else rep)


def sample_trials(dataset, mask_spec, trials, rng):
    """Draw (image, mask) trial pairs; masks with nothing missing are redrawn."""
    idx = rng.integers(0, len(dataset), size=trials)
    x = dataset.images[idx]
    mask = dt.sample_mask(mask_spec, trials, dataset.width, dataset.height, rng)
    for _ in range(100):
        empty = np.where(mask.missing_counts() == 0)[0]
        if empty.size == 0:
            break
        redraw = dt.sample_mask(mask_spec, empty.size, dataset.width, dataset.height, rng)
        mask.known[empty] = redraw.known
    else:
        raise ValueError(f"mask spec {mask_spec} keeps producing nothing to impute")
    return x, mask


def _chunks(n, size):
    for lo in range(0, n, size):
        yield lo, min(lo + size, n)


def score_trials(model, x, mask, samples, rng, lam=1.0, chunk=200):
    """Per-trial variational bound averaged over guided roll-outs, (trials,)."""
    bounds = np.zeros(x.shape[0])
    for lo, hi in _chunks(x.shape[0], chunk):
        sub = dt.Mask(mask.known[lo:hi], mask.width, mask.height)
        acc = np.zeros(hi - lo)
        for _ in range(samples):
            traj = model.guided_rollout(x[lo:hi], sub, rng)
            acc += free_energy(traj, lam).data[:, 0]
        bounds[lo:hi] = acc / samples
    return bounds


def score_imputer(model, dataset, mask_spec, trials, samples, rng, lam=1.0):
    x, mask = sample_trials(dataset, mask_spec, trials, rng)
    bounds = score_trials(model, x, mask, samples, rng, lam=lam)
    return EvalReport(model.kind, mask_spec, getattr(model, "T", 1), samples,
                      bounds, mask.missing_counts())


def score_template(train_ds, x, mask, mode):
    from .models import template_match

    guesses, _ = template_match(train_ds, x, mask, mode=mode)
    return nll_of_probs(guesses, x, mask.missing)


def score_vae_imputation(model, x, mask, steps=16, runs=4, rng=None):
    """Expected missing-pixel NLL of the iterative VAE imputer over runs."""
    totals = np.zeros(x.shape[0])
    for _ in range(runs):
        guess, _ = vae_impute(model, x, mask, steps=steps, rng=rng)
        totals += nll_of_probs(guess, x, mask.missing)
    return totals / runs


def iwae_bound(model, x, mask, K, rng, k_values=None):
    """Importance-weighted bound(s) using the guide as proposal, per example.

    Returns {k: (batch,) array} for each k in k_values (default just K),
    computed from nested prefixes of the same K roll-outs via log-sum-exp.
    """
    if K < 1:
        raise ValueError("iwae_bound needs K >= 1")
    k_values = sorted(set(k_values or [K]))
    if max(k_values) > K:
        raise ValueError(f"k_values {k_values} exceed K={K}")
    x = np.asarray(x, dtype=np.float64)
    log_w = np.zeros((K, x.shape[0]))
    for k in range(K):
        traj = model.guided_rollout(x, mask, rng)
        log_w[k] = (-traj.terminal_nll.data[:, 0]
                    + traj.log_prob_primary().data[:, 0]
                    - traj.log_prob_guide().data[:, 0])
    return {k: -(logsumexp(log_w[:k], axis=0) - np.log(k)) for k in k_values}


def step_sweep(models_by_t, dataset, mask_spec, t_values, trials, samples, rng):
    """Score one model per refinement-step count; returns report rows."""
    if not t_values:
        raise ValueError("step sweep needs at least one T value")
    reports = []
    for t in t_values:
        if t not in models_by_t:
            raise KeyError(f"no trained model for T={t}")
        reports.append(score_imputer(models_by_t[t], dataset, mask_spec,
                                     trials, samples, rng))
    return reports


# ---------------------------------------------------------------------------
# PGM image grids

SEPARATOR = 128


def dump_grid(tiles, layout, path, pre_sigmoid=True, width=None, height=None):
    """Write an 8-bit binary PGM of tiles with 1-pixel separator lines.

    tiles is (n, width*height) or a list of 2D arrays of one common shape;
    pre_sigmoid routes values through sigma before the 0..255 scaling
    (round half up)."""
    if isinstance(tiles, np.ndarray) and tiles.ndim == 2 and width and height:
        tiles = [tiles[i].reshape(height, width) for i in range(tiles.shape[0])]
    else:
        tiles = [np.asarray(t) for t in tiles]
    shapes = {t.shape for t in tiles}
    if len(shapes) != 1:
        raise ValueError(f"inconsistent tile sizes: {sorted(shapes)}")
    th, tw = tiles[0].shape
    rows, cols = layout
    canvas = np.full(((th + 1) * rows + 1, (tw + 1) * cols + 1), SEPARATOR, dtype=np.uint8)
    for i, tile in enumerate(tiles[:rows * cols]):
        vals = sigmoid_np(tile.astype(np.float64)) if pre_sigmoid else tile
        bytes_ = np.clip(np.floor(vals * 255.0 + 0.5), 0, 255).astype(np.uint8)
        r, c = divmod(i, cols)
        top, left = 1 + r * (th + 1), 1 + c * (tw + 1)
        canvas[top:top + th, left:left + tw] = bytes_
    h, w = canvas.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(canvas.tobytes())
    return canvas.shape


def load_pgm(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    fields, pos = [], 0
    while len(fields) < 4:
        while pos < len(blob) and blob[pos:pos + 1].isspace():
            pos += 1
        start = pos
        while pos < len(blob) and not blob[pos:pos + 1].isspace():
            pos += 1
        fields.append(blob[start:pos])
    if fields[0] != b"P5" or fields[3] != b"255":
        raise ValueError(f"{path}: not an 8-bit P5 PGM")
    w, h = int(fields[1]), int(fields[2])
    pos += 1
    return np.frombuffer(blob, dtype=np.uint8, offset=pos).reshape(h, w)
