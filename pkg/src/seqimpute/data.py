"""Datasets on disk, and the missingness mechanisms that define each trial.

Images are flat (N, width*height) float64 rows in [0, 1]. A Mask partitions
each row into known and missing pixels; policies see missing sites as zeros
plus the mask channel itself, so "known black" stays distinguishable from
"missing".
"""

import struct

import numpy as np

IDX_MAGIC_IMAGES = 0x00000803
IDX_MAGIC_LABELS = 0x00000801


class FormatError(ValueError):
    pass


class Dataset:
    def __init__(self, images, split="train", domain="unit-interval", labels=None,
                 width=None, height=None):
        images = np.asarray(images, dtype=np.float64)
        if images.ndim != 2:
            raise FormatError(f"images must be (N, D), got rank {images.ndim}")
        if images.size and (images.min() < 0.0 or images.max() > 1.0):
            raise FormatError("pixel values must lie in [0, 1]")
        if domain == "binary" and images.size and not np.isin(images, (0.0, 1.0)).all():
            raise FormatError("binary dataset contains values outside {0, 1}")
        self.images = images
        self.split = split
        self.domain = domain
        self.labels = labels
        side = int(round(np.sqrt(images.shape[1]))) if images.shape[1] else 0
        self.width = width if width is not None else side
        self.height = height if height is not None else side

    def __len__(self):
        return self.images.shape[0]

    @property
    def dim(self):
        return self.images.shape[1]


class Mask:
    """known is (batch, D) in {0, 1}; 1 marks a known pixel."""

    def __init__(self, known, width, height):
        known = np.asarray(known, dtype=np.float64)
        if not np.isin(known, (0.0, 1.0)).all():
            raise FormatError("mask entries must be exactly 0 or 1")
        if known.shape[1] != width * height:
            raise FormatError(f"mask has {known.shape[1]} columns for {width}x{height} image")
        self.known = known
        self.width = width
        self.height = height

    @property
    def missing(self):
        return 1.0 - self.known

    def missing_counts(self):
        return self.missing.sum(axis=1)


# ---------------------------------------------------------------------------
# loaders


def _read_idx(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 4:
        raise FormatError(f"{path}: truncated IDX header")
    (magic,) = struct.unpack_from(">I", blob, 0)
    if magic == IDX_MAGIC_IMAGES:
        ndim = 3
    elif magic == IDX_MAGIC_LABELS:
        ndim = 1
    else:
        raise FormatError(f"{path}: bad IDX magic 0x{magic:08x}")
    need = 4 + 4 * ndim
    if len(blob) < need:
        raise FormatError(f"{path}: truncated IDX dimension header")
    dims = struct.unpack_from(f">{ndim}I", blob, 4)
    total = int(np.prod([int(d) for d in dims], dtype=np.int64))
    if total < 0 or total > 1 << 33:
        raise FormatError(f"{path}: IDX dims {dims} overflow")
    if len(blob) != need + total:
        raise FormatError(f"{path}: expected {need + total} bytes, found {len(blob)}")
    data = np.frombuffer(blob, dtype=np.uint8, offset=need)
    return magic, dims, data


def load_idx(path, labels_path=None, split="train"):
    """Load big-endian IDX image data, u8 pixels scaled by 1/255."""
    magic, dims, data = _read_idx(path)
    if magic != IDX_MAGIC_IMAGES:
        raise FormatError(f"{path}: magic 0x{magic:08x} is not an image file")
    n, rows, cols = (int(d) for d in dims)
    images = data.astype(np.float64).reshape(n, rows * cols) / 255.0
    labels = load_idx_labels(labels_path) if labels_path else None
    if labels is not None and labels.shape[0] != n:
        raise FormatError(f"{labels_path}: {labels.shape[0]} labels for {n} images")
    return Dataset(images, split=split, domain="unit-interval", labels=labels,
                   width=cols, height=rows)


def load_idx_labels(path):
    magic, dims, data = _read_idx(path)
    if magic != IDX_MAGIC_LABELS:
        raise FormatError(f"{path}: magic 0x{magic:08x} is not a label file")
    return data.astype(np.int64)


def save_idx(path, images, width, height):
    images = np.asarray(images)
    pixels = np.clip(np.floor(images * 255.0 + 0.5), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_MAGIC_IMAGES, images.shape[0], height, width))
        fh.write(pixels.tobytes())


def save_idx_labels(path, labels):
    labels = np.asarray(labels).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(struct.pack(">II", IDX_MAGIC_LABELS, labels.shape[0]))
        fh.write(labels.tobytes())


def load_amat(path, split="train", columns=784):
    """Text format: one image per line, whitespace-separated {0, 1} values."""
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            tokens = line.split()
            if not tokens:
                continue
            if len(tokens) != columns:
                raise FormatError(f"{path}:{lineno}: {len(tokens)} values, expected {columns}")
            try:
                vals = np.array([float(t) for t in tokens])
            except ValueError:
                raise FormatError(f"{path}:{lineno}: non-numeric token") from None
            if not np.isin(vals, (0.0, 1.0)).all():
                raise FormatError(f"{path}:{lineno}: values must be 0 or 1")
            rows.append(vals)
    return Dataset(np.array(rows).reshape(-1, columns), split=split, domain="binary")


# ---------------------------------------------------------------------------
# missingness mechanisms


def sample_mcar(batch, dim, drop_percent, rng, width=None, height=None):
    """Drop an exact, uniformly chosen subset of round(D*d/100) pixels per row."""
    if not 0.0 <= drop_percent <= 100.0:
        raise ValueError(f"drop percent must be in [0, 100], got {drop_percent}")
    n_missing = int(np.floor(dim * drop_percent / 100.0 + 0.5))
    known = np.ones((batch, dim))
    for r in range(batch):
        idx = rng.choice(dim, size=n_missing, replace=False)
        known[r, idx] = 0.0
    side = int(round(np.sqrt(dim)))
    return Mask(known, width or side, height or side)


def sample_mar(batch, width, height, square, rng):
    """Occlude one square x square block placed uniformly inside the borders."""
    if square > min(width, height):
        raise ValueError(f"square side {square} exceeds image {width}x{height}")
    known = np.ones((batch, height, width))
    tops = rng.integers(0, height - square + 1, size=batch)
    lefts = rng.integers(0, width - square + 1, size=batch)
    for r in range(batch):
        known[r, tops[r]:tops[r] + square, lefts[r]:lefts[r] + square] = 0.0
    return Mask(known.reshape(batch, width * height), width, height)


def apply_mask(x, mask):
    """Split x into (known-part, missing-part); the two sum back to x exactly."""
    x = np.asarray(x)
    if x.shape != mask.known.shape:
        raise ValueError(f"apply_mask: x {x.shape} vs mask {mask.known.shape}")
    x_known = x * mask.known
    x_missing = x * (1.0 - mask.known)
    return x_known, x_missing


def parse_mask_spec(spec):
    """'mcar-80' / 'mcar80' -> ('mcar', 80); 'mar-16' / 'mar16' -> ('mar', 16)."""
    s = spec.strip().lower().replace("-", "")
    for kind in ("mcar", "mar"):
        if s.startswith(kind):
            try:
                d = int(s[len(kind):])
            except ValueError:
                raise ValueError(f"bad mask spec {spec!r}") from None
            return kind, d
    raise ValueError(f"bad mask spec {spec!r}")


def sample_mask(spec, batch, width, height, rng):
    kind, d = parse_mask_spec(spec) if isinstance(spec, str) else spec
    if kind == "mcar":
        return sample_mcar(batch, width * height, d, rng, width=width, height=height)
    return sample_mar(batch, width, height, d, rng)


def validate_mask_spec_for_imputation(spec):
    kind, d = parse_mask_spec(spec)
    if kind == "mcar" and d == 0:
        raise ValueError("mcar-0 leaves nothing to impute; rejected at config time")
    if d < 0:
        raise ValueError(f"mask parameter must be non-negative, got {d}")
    return kind, d
