"""Desk-scale dataset construction and split loading.

No full-size benchmark corpus ships with the package; build_digits upscales
scikit-learn's bundled 8x8 handwritten digits to 28x28, augments with one-pixel
shifts, and writes standard IDX files. Sources are split before augmentation
so no test image has a shifted twin in the training set.
"""

import os

import numpy as np

from . import data as dt

SPLITS = ("train", "valid", "test")
DEFAULT_SIZES = {"train": 5000, "valid": 1000, "test": 2000}


def _upscale(img8, width=28, height=28):
    from scipy.ndimage import zoom

    out = zoom(img8, (height / img8.shape[0], width / img8.shape[1]), order=1)
    return np.clip(out, 0.0, 1.0)


def _shift(img, dy, dx):
    out = np.zeros_like(img)
    h, w = img.shape
    ys = slice(max(dy, 0), h + min(dy, 0))
    xs = slice(max(dx, 0), w + min(dx, 0))
    out[ys, xs] = img[max(-dy, 0):h - max(dy, 0), max(-dx, 0):w - max(dx, 0)]
    return out


def build_digits(out_dir, seed=0, sizes=None, width=28, height=28):
    """Write digits_{split}_images.idx / digits_{split}_labels.idx under out_dir."""
    from sklearn.datasets import load_digits

    sizes = dict(DEFAULT_SIZES, **(sizes or {}))
    os.makedirs(out_dir, exist_ok=True)
    rng = np.random.default_rng(seed)
    raw = load_digits()
    sources = raw.images / 16.0
    labels = raw.target
    order = rng.permutation(len(sources))
    cut1 = int(0.60 * len(order))
    cut2 = int(0.75 * len(order))
    source_split = {
        "train": order[:cut1],
        "valid": order[cut1:cut2],
        "test": order[cut2:],
    }
    paths = {}
    for split in SPLITS:
        imgs, labs = [], []
        for idx in source_split[split]:
            big = _upscale(sources[idx], width, height)
            for dy in (-1, 0, 1):
                for dx in (-1, 0, 1):
                    imgs.append(_shift(big, dy, dx).reshape(-1))
                    labs.append(labels[idx])
        imgs = np.array(imgs)
        labs = np.array(labs)
        pick = rng.permutation(len(imgs))[:sizes[split]]
        img_path = os.path.join(out_dir, f"digits_{split}_images.idx")
        lab_path = os.path.join(out_dir, f"digits_{split}_labels.idx")
        dt.save_idx(img_path, imgs[pick], width, height)
        dt.save_idx_labels(lab_path, labs[pick])
        paths[split] = img_path
    return paths


def load_split(data_dir, name, split):
    """Load one split of a named dataset from data_dir (IDX or amat layout)."""
    idx_path = os.path.join(data_dir, f"{name}_{split}_images.idx")
    amat_path = os.path.join(data_dir, f"{name}_{split}.amat")
    if os.path.exists(idx_path):
        lab_path = os.path.join(data_dir, f"{name}_{split}_labels.idx")
        return dt.load_idx(idx_path, lab_path if os.path.exists(lab_path) else None, split=split)
    if os.path.exists(amat_path):
        return dt.load_amat(amat_path, split=split)
    raise FileNotFoundError(f"no dataset files for {name}/{split}: tried {idx_path}, {amat_path}")


def binarize(dataset, threshold=0.5):
    return dt.Dataset((dataset.images > threshold).astype(np.float64), split=dataset.split,
                      domain="binary", labels=dataset.labels,
                      width=dataset.width, height=dataset.height)


if __name__ == "__main__":
    import sys

    target = sys.argv[1] if len(sys.argv) > 1 else "data"
    built = build_digits(target)
    for s, p in built.items():
        print(f"wrote {p}")
