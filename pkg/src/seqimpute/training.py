"""Objective assembly, ADAM, the training loop, and guide-only fine-tuning."""

import csv
import dataclasses
import logging
import os

import numpy as np

from . import autodiff as ad
from . import data as dt
from . import models as model_zoo
from . import nn

log = logging.getLogger(__name__)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

METRICS_HEADER = ["update", "train_fe", "valid_fe", "kl_sum", "nll", "grad_norm", "skipped"]


@dataclasses.dataclass
class TrainConfig:
    model: str = "gpsi_add"
    data: str = "digits"
    mask: str = "mcar-80"
    T: int = 6
    width: int = 64
    z_dim: int = 32
    z0_dim: int = 16
    depth: int = 2
    act: str = "relu"
    feed_mask: bool = True
    read_op: str = "concat"
    batch: int = 250
    lr: float = 0.0002
    updates: int = 5000
    lam: float = 1.0
    clip: float = 10.0
    seed: int = 0
    valid_every: int = 250
    checkpoint: str = ""
    finetune_updates: int = 1000
    finetune_split: str = "valid"
    trials: int = 1000
    samples: int = 1
    iwae_k: str = "1,8,64"
    workers: int = 1

    def validate(self):
        if self.model not in model_zoo.MODEL_KINDS:
            raise ValueError(f"unknown model {self.model!r}")
        for field in ("T", "width", "z_dim", "z0_dim", "depth", "batch", "updates",
                      "valid_every", "trials", "samples", "workers"):
            if getattr(self, field) < (0 if field == "updates" else 1):
                raise ValueError(f"config {field} must be positive, got {getattr(self, field)}")
        if self.lam < 0:
            raise ValueError(f"lambda must be >= 0, got {self.lam}")
        if self.model not in ("gen_add", "gen_jump", "vae"):
            dt.validate_mask_spec_for_imputation(self.mask)
        return self


def _coerce(field_type, raw):
    if field_type is bool:
        if raw.lower() in ("1", "true", "on", "yes"):
            return True
        if raw.lower() in ("0", "false", "off", "no"):
            return False
        raise ValueError(f"bad boolean {raw!r}")
    return field_type(raw)


def parse_config(text, base=None):
    """Flat key=value lines; '#' comments; unknown keys rejected."""
    cfg = dataclasses.replace(base) if base else TrainConfig()
    types = {f.name: f.type for f in dataclasses.fields(TrainConfig)}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected key=value, got {line!r}")
        key, _, raw = line.partition("=")
        key, raw = key.strip(), raw.strip()
        if key not in types:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
        setattr(cfg, key, _coerce(types[key], raw))
    return cfg


def config_text(cfg):
    lines = [f"{f.name}={getattr(cfg, f.name)}" for f in dataclasses.fields(TrainConfig)]
    return "\n".join(lines) + "\n"


def load_config(path, base=None):
    with open(path) as fh:
        return parse_config(fh.read(), base=base)


def build_model_from_config(cfg, dim):
    return model_zoo.build_model(cfg.model, dim, T=cfg.T, hidden=cfg.width,
                                 depth=cfg.depth, z_dim=cfg.z_dim, z0_dim=cfg.z0_dim,
                                 act=cfg.act, feed_mask=cfg.feed_mask,
                                 read_op=cfg.read_op, seed=cfg.seed)


# ---------------------------------------------------------------------------
# objective and optimizer


def free_energy(trajectory, lam=1.0):
    """Per-row terminal NLL plus lam * summed step KLs, (batch, 1)."""
    if trajectory.policy != "guide" or trajectory.terminal_nll is None:
        raise ValueError("free energy needs a guided roll-out with a terminal NLL")
    return ad.add(trajectory.terminal_nll, ad.scale(trajectory.kl_sum(), lam))


class AdamState:
    def __init__(self):
        self.m = {}
        self.v = {}
        self.t = 0
        self.skipped = 0


def adam_step(params, grads, state, lr):
    """One ADAM update over named parameters; a non-finite gradient anywhere
    skips the whole update and bumps the skip counter."""
    items = [(name, tensor) for name, tensor in params if name in grads]
    for name, _ in items:
        if not np.all(np.isfinite(grads[name])):
            state.skipped += 1
            log.warning("skipping update %d: non-finite gradient in %s", state.t + 1, name)
            return False
    state.t += 1
    correct1 = 1.0 - ADAM_BETA1 ** state.t
    correct2 = 1.0 - ADAM_BETA2 ** state.t
    for name, tensor in items:
        g = grads[name]
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(tensor.data)
            state.v[name] = np.zeros_like(tensor.data)
        v = state.v[name]
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * (g * g)
        tensor.data = tensor.data - lr * (m / correct1) / (np.sqrt(v / correct2) + ADAM_EPS)
    return True


def global_norm(grads):
    return float(np.sqrt(np.sum([float((g * g).sum()) for g in grads.values()])))


def clip_grads(grads, max_norm):
    norm = global_norm(grads)
    if np.isfinite(norm) and norm > max_norm > 0:
        factor = max_norm / norm
        for g in grads.values():
            g *= factor
    return norm


# ---------------------------------------------------------------------------
# data plumbing


class BatchSampler:
    """Shuffled row sampler with wrap-around reshuffling."""

    def __init__(self, n_rows, rng):
        self.n = n_rows
        self.rng = rng
        self.queue = list(rng.permutation(n_rows))

    def take(self, count):
        out = []
        while len(out) < count:
            if not self.queue:
                self.queue = list(self.rng.permutation(self.n))
            out.append(self.queue.pop())
        return np.array(out)


def _collect_grads(model, loss):
    ad.backward(loss)
    return {name: tensor.grad for name, tensor in model.params.items()
            if tensor.grad is not None}


def _batch_loss(model, x, mask, rng, lam):
    traj = model.guided_rollout(x, mask, rng)
    fe_rows = free_energy(traj, lam)
    return fe_rows, traj


# ---------------------------------------------------------------------------
# checkpoints


def _encode_meta(text):
    raw = np.frombuffer(text.encode("utf-8"), dtype=np.uint8)
    return raw.astype(np.float64).reshape(1, -1) if raw.size else np.zeros((1, 1)) - 1.0


def _decode_meta(arr):
    vals = arr.reshape(-1)
    if vals.size == 1 and vals[0] < 0:
        return ""
    return bytes(vals.astype(np.uint8)).decode("utf-8")


def save_checkpoint(path, model, cfg):
    arrays = model.params.state()
    arrays["__kind__"] = _encode_meta(model.kind)
    arrays["__config__"] = _encode_meta(config_text(cfg))
    arrays["__dim__"] = np.array([[float(model.dim)]])
    nn.save_arrays(path, arrays)


def load_checkpoint(path):
    arrays = nn.load_arrays(path)
    kind = _decode_meta(arrays.pop("__kind__"))
    cfg = parse_config(_decode_meta(arrays.pop("__config__")))
    dim = int(arrays.pop("__dim__")[0, 0])
    model = build_model_from_config(cfg, dim)
    if model.kind != kind:
        raise ValueError(f"checkpoint kind {kind} does not match config model {cfg.model}")
    model.params.load_state(arrays)
    if hasattr(model, "trained"):
        model.trained = True
    return model, cfg


# ---------------------------------------------------------------------------
# training loops


def _metrics_row(update, train_fe, valid_fe, kl, nll, grad_norm, skipped):
    fmt = lambda v: "" if v is None else repr(float(v))
    return {"update": str(update), "train_fe": fmt(train_fe), "valid_fe": fmt(valid_fe),
            "kl_sum": fmt(kl), "nll": fmt(nll), "grad_norm": fmt(grad_norm),
            "skipped": str(skipped)}


def write_metrics(path, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=METRICS_HEADER, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)


def _validation_fe(model, images, cfg, rng):
    batch = min(len(images), cfg.batch)
    x = images[:batch]
    mask = dt.sample_mask(cfg.mask, batch, *_mask_dims(cfg, x), rng)
    fe_rows, _ = _batch_loss(model, x, mask, rng, cfg.lam)
    return float(fe_rows.data.mean())


def _mask_dims(cfg, x):
    side = int(round(np.sqrt(x.shape[1])))
    return side, side


class TrainResult:
    def __init__(self, model, cfg, metrics, best_valid=None):
        self.model = model
        self.cfg = cfg
        self.metrics = metrics
        self.best_valid = best_valid


def train(cfg, train_ds, valid_ds=None, out_dir=None, model=None,
          trainable_names=None, progress=False):
    """Run the guided-roll-out training loop; returns the model and metrics.

    One guide trajectory per example per update; gradients are clipped at a
    global norm and applied with ADAM. With workers > 1 the minibatch is
    sharded and shard gradients are summed in shard order.
    """
    cfg.validate()
    images = train_ds.images if hasattr(train_ds, "images") else np.asarray(train_ds)
    valid_images = None
    if valid_ds is not None:
        valid_images = valid_ds.images if hasattr(valid_ds, "images") else np.asarray(valid_ds)
    if model is None:
        model = build_model_from_config(cfg, images.shape[1])
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)

    seeds = np.random.SeedSequence(cfg.seed).spawn(4)
    batch_rng = np.random.default_rng(seeds[0])
    mask_rng = np.random.default_rng(seeds[1])
    noise_seq = seeds[2]
    valid_rng = np.random.default_rng(seeds[3])
    sampler = BatchSampler(images.shape[0], batch_rng)
    width = height = int(round(np.sqrt(images.shape[1])))

    adam = AdamState()
    params = model.params.items()
    if trainable_names is not None:
        keep = set(trainable_names)
        params = [(n, t) for n, t in params if n in keep]

    rows = []
    best_valid = None
    valid_fe = None
    for update in range(1, cfg.updates + 1):
        idx = sampler.take(cfg.batch)
        x = images[idx]
        mask = dt.sample_mask(cfg.mask, cfg.batch, width, height, mask_rng)
        shard_seeds = noise_seq.spawn(cfg.workers)
        bounds = np.linspace(0, cfg.batch, cfg.workers + 1).astype(int)

        total_grads = {}
        train_fe = kl_val = nll_val = 0.0
        failed = False
        for w in range(cfg.workers):
            lo, hi = bounds[w], bounds[w + 1]
            if lo == hi:
                continue
            shard_mask = dt.Mask(mask.known[lo:hi], width, height)
            rng = np.random.default_rng(shard_seeds[w])
            fe_rows, traj = _batch_loss(model, x[lo:hi], shard_mask, rng, cfg.lam)
            weight = (hi - lo) / cfg.batch
            loss = ad.scale(ad.mean(fe_rows), weight)
            if not np.isfinite(loss.item()):
                failed = True
                break
            train_fe += loss.item()
            kl_val += weight * float(traj.kl_sum().data.mean())
            nll_val += weight * float(traj.terminal_nll.data.mean())
            grads = _collect_grads(model, loss)
            for name, g in grads.items():
                if name in total_grads:
                    total_grads[name] += g
                else:
                    total_grads[name] = g.copy()

        if failed:
            adam.skipped += 1
            log.warning("skipping update %d: non-finite loss", update)
            rows.append(_metrics_row(update, None, valid_fe, None, None, None, adam.skipped))
            continue

        norm = clip_grads(total_grads, cfg.clip)
        applied = adam_step(params, total_grads, adam, cfg.lr)
        if applied and valid_images is not None and update % cfg.valid_every == 0:
            valid_fe = _validation_fe(model, valid_images, cfg, valid_rng)
            if out_dir and (best_valid is None or valid_fe < best_valid):
                best_valid = valid_fe
                save_checkpoint(os.path.join(out_dir, "best.bin"), model, cfg)
        rows.append(_metrics_row(update, train_fe, valid_fe, kl_val, nll_val, norm,
                                 adam.skipped))
        if progress and update % max(1, cfg.updates // 20) == 0:
            log.info("update %d/%d fe=%.3f", update, cfg.updates, train_fe)

    if hasattr(model, "trained"):
        model.trained = True
    if out_dir:
        save_checkpoint(os.path.join(out_dir, "checkpoint.bin"), model, cfg)
        write_metrics(os.path.join(out_dir, "metrics.csv"), rows)
    return TrainResult(model, cfg, rows, best_valid)


def finetune_q(model, cfg, dataset, updates=None, out_dir=None):
    """Adapt guide-only parameters on a new split; everything else is frozen."""
    ft_cfg = dataclasses.replace(cfg, updates=cfg.finetune_updates if updates is None else updates,
                                 seed=cfg.seed + 1)
    return train(ft_cfg, dataset, out_dir=out_dir, model=model,
                 trainable_names=model.guide_param_names())
