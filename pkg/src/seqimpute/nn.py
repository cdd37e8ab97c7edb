"""Affine maps, small MLPs, and an LSTM cell with peephole connections.

Parameters live in a ParamSet (ordered name -> leaf tensor) so optimizers,
checkpointing, and the guide-only fine-tuning split can address them by name.
"""

import struct

import numpy as np

from . import autodiff as ad

MAGIC = b"SQIM"
FORMAT_VERSION = 1

# gate order inside fused LSTM blocks
_I, _F, _O, _G = 0, 1, 2, 3


class ParamSet:
    """Ordered collection of named leaf tensors."""

    def __init__(self):
        self._params = {}

    def add(self, name, values):
        if name in self._params:
            raise ValueError(f"duplicate parameter name: {name}")
        t = ad.parameter(values, name=name)
        self._params[name] = t
        return t

    def __getitem__(self, name):
        return self._params[name]

    def __contains__(self, name):
        return name in self._params

    def names(self):
        return list(self._params)

    def tensors(self):
        return list(self._params.values())

    def items(self):
        return list(self._params.items())

    def count(self):
        return int(np.sum([t.data.size for t in self._params.values()]))

    def state(self):
        return {name: t.data.copy() for name, t in self._params.items()}

    def load_state(self, arrays):
        for name, t in self._params.items():
            if name not in arrays:
                raise KeyError(f"missing parameter in checkpoint: {name}")
            src = arrays[name]
            if src.shape != t.data.shape:
                raise ad.ShapeMismatch(
                    f"parameter {name}: checkpoint shape {src.shape} != model shape {t.data.shape}")
            t.data = src.astype(np.float64).copy()


def save_arrays(path, arrays):
    """Flat binary container: magic, version, count, then named f64 records."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, len(arrays)))
        for name, arr in arrays.items():
            raw = name.encode("utf-8")
            rows, cols = arr.shape
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<II", rows, cols))
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_arrays(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise ValueError(f"bad magic {blob[:4]!r}, expected {MAGIC!r}")
    version, count = struct.unpack_from("<II", blob, 4)
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported container version {version}")
    arrays, off = {}, 12
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", blob, off)
        off += 2
        name = blob[off:off + nlen].decode("utf-8")
        off += nlen
        rows, cols = struct.unpack_from("<II", blob, off)
        off += 8
        n = rows * cols * 8
        if off + n > len(blob):
            raise ValueError(f"truncated container at record {name}")
        arrays[name] = np.frombuffer(blob[off:off + n], dtype="<f8").reshape(rows, cols).copy()
        off += n
    return arrays


# ---------------------------------------------------------------------------
# initialization


def glorot(rng, rows, cols):
    if rows <= 0 or cols <= 0:
        raise ValueError(f"layer dims must be positive, got ({rows}, {cols})")
    bound = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-bound, bound, size=(rows, cols))


class AffineParams:
    """y = x W + b with W (in, out) and b (1, out)."""

    def __init__(self, params, prefix, in_dim, out_dim, rng):
        self.in_dim, self.out_dim = in_dim, out_dim
        self.weight = params.add(f"{prefix}/w", glorot(rng, in_dim, out_dim))
        self.bias = params.add(f"{prefix}/b", np.zeros((1, out_dim)))

    def apply(self, x):
        if x.cols != self.in_dim:
            raise ad.ShapeMismatch(f"affine: input has {x.cols} cols, expected {self.in_dim}")
        return ad.add(ad.matmul(x, self.weight), self.bias)


_ACTIVATIONS = {"tanh": ad.tanh, "relu": ad.relu, "identity": lambda t: t}


class MLPParams:
    """Stack of affine layers with per-layer activation tags."""

    def __init__(self, params, prefix, dims, activations, rng):
        if len(dims) < 2 or len(activations) != len(dims) - 1:
            raise ValueError("dims must chain and match activations")
        for act in activations:
            if act not in _ACTIVATIONS:
                raise ValueError(f"unknown activation tag {act!r}")
        self.layers = [
            (AffineParams(params, f"{prefix}/{i}", dims[i], dims[i + 1], rng), activations[i])
            for i in range(len(dims) - 1)
        ]
        self.in_dim, self.out_dim = dims[0], dims[-1]

    def apply(self, x):
        for affine, act in self.layers:
            x = _ACTIVATIONS[act](affine.apply(x))
        return x


def mlp_apply(params, x):
    return params.apply(x)


class LSTMState:
    """Joint state of one LSTM: hidden (cell memory) h and gated output v."""

    def __init__(self, h, v):
        if h.shape != v.shape:
            raise ad.ShapeMismatch(f"LSTM state halves differ: {h.shape} vs {v.shape}")
        self.h = h
        self.v = v

    @staticmethod
    def zeros(batch, n):
        return LSTMState(ad.constant(np.zeros((batch, n))), ad.constant(np.zeros((batch, n))))


class LSTMParams:
    """Input/forget/output/candidate gates with peepholes, stored fused.

    Gate blocks sit at columns [i | f | o | g]; pre-activations are computed
    as one affine and column-sliced. Forget-gate bias starts at 1.0 to keep
    long roll-outs stable early in training; peepholes start at zero.
    """

    def __init__(self, params, prefix, in_dim, n, rng):
        self.in_dim, self.n = in_dim, n
        if in_dim <= 0 or n <= 0:
            raise ValueError(f"LSTM dims must be positive, got ({in_dim}, {n})")
        w_x = np.concatenate([glorot(rng, in_dim, n) for _ in range(4)], axis=1)
        w_r = np.concatenate([glorot(rng, n, n) for _ in range(4)], axis=1)
        bias = np.zeros((1, 4 * n))
        bias[0, _F * n:(_F + 1) * n] = 1.0
        self.w_x = params.add(f"{prefix}/w_x", w_x)
        self.w_r = params.add(f"{prefix}/w_r", w_r)
        self.bias = params.add(f"{prefix}/b", bias)
        self.peep_i = params.add(f"{prefix}/p_i", np.zeros((1, n)))
        self.peep_f = params.add(f"{prefix}/p_f", np.zeros((1, n)))
        self.peep_o = params.add(f"{prefix}/p_o", np.zeros((1, n)))


def lstm_step(params, state, x):
    """One LSTM update; peepholes read h for i/f and the new h for o."""
    n = params.n
    if x.cols != params.in_dim:
        raise ad.ShapeMismatch(f"lstm_step: input has {x.cols} cols, expected {params.in_dim}")
    if state.h.cols != n:
        raise ad.ShapeMismatch(f"lstm_step: state width {state.h.cols}, expected {n}")
    pre = ad.add(ad.add(ad.matmul(x, params.w_x), ad.matmul(state.v, params.w_r)), params.bias)
    pre_i = ad.slice_cols(pre, _I * n, (_I + 1) * n)
    pre_f = ad.slice_cols(pre, _F * n, (_F + 1) * n)
    pre_o = ad.slice_cols(pre, _O * n, (_O + 1) * n)
    pre_g = ad.slice_cols(pre, _G * n, (_G + 1) * n)
    gate_i = ad.sigmoid(ad.add(pre_i, ad.mul(state.h, params.peep_i)))
    gate_f = ad.sigmoid(ad.add(pre_f, ad.mul(state.h, params.peep_f)))
    cand = ad.tanh(pre_g)
    h_new = ad.add(ad.mul(gate_f, state.h), ad.mul(gate_i, cand))
    gate_o = ad.sigmoid(ad.add(pre_o, ad.mul(h_new, params.peep_o)))
    v_new = ad.mul(gate_o, ad.tanh(h_new))
    return LSTMState(h_new, v_new)
