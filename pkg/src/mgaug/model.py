"""MLP parameter containers, masked forward passes, and width slimming.

The network is a plain fully connected ReLU stack. Parameters live in a
ParamSet: an ordered tuple of (weight, bias) pairs whose dimensions chain.
Gradient collections reuse the same container since they are congruent by
construction. Masks are binary ParamSet-shaped overlays; a masked forward
multiplies parameters by the mask inside the graph, so masked coordinates
receive exactly zero gradient.

Checkpoint container (version 1, little-endian):

    bytes 0..3   magic "MGCK"
    u32          format version (1)
    u32          L, number of linear layers
    L x (u32 I, u32 O)
    per layer    weight as I*O f64 row-major, then bias as O f64
    u64          epoch counter (last completed epoch, 0 for fresh)
    u8           flags (bit 0: an RLE mask section follows)
    [mask]       opaque RLE block as produced by pruning.mask_to_rle
"""

from __future__ import annotations

import math
import os
import struct

import numpy as np

from .autodiff import ShapeError, Tape, Tensor

MAGIC = b"MGCK"
CHECKPOINT_VERSION = 1


class ParamSet:
    """Ordered (weight, bias) pairs of a fully connected network.

    weight l has shape (I_l, O_l) and bias l has shape (O_l,); adjacent
    layers must chain (O_l == I_{l+1}). The container is treated as
    immutable: updates build new ParamSets.
    """

    __slots__ = ("layers",)

    def __init__(self, layers):
        layers = tuple((np.asarray(w, dtype=np.float64), np.asarray(b, dtype=np.float64))
                       for w, b in layers)
        if not layers:
            raise ValueError("ParamSet: at least one layer required")
        for i, (w, b) in enumerate(layers):
            if w.ndim != 2 or b.ndim != 1 or w.shape[1] != b.shape[0]:
                raise ShapeError(f"ParamSet: layer {i} shapes {w.shape} / {b.shape} invalid")
            if i and layers[i - 1][0].shape[1] != w.shape[0]:
                raise ShapeError(f"ParamSet: layer {i-1} output {layers[i-1][0].shape[1]} "
                                 f"does not chain into layer {i} input {w.shape[0]}")
        self.layers = layers

    @property
    def arch(self) -> list[int]:
        return [self.layers[0][0].shape[0]] + [w.shape[1] for w, _ in self.layers]

    @property
    def n(self) -> int:
        """Total parameter count, weights and biases."""
        return sum(w.size + b.size for w, b in self.layers)

    def copy(self) -> "ParamSet":
        return ParamSet([(w.copy(), b.copy()) for w, b in self.layers])

    def norm_sq(self) -> float:
        return float(sum((w * w).sum() + (b * b).sum() for w, b in self.layers))

    def __len__(self) -> int:
        return len(self.layers)

    def __repr__(self) -> str:
        return f"ParamSet(arch={self.arch}, n={self.n})"


# Gradient collections are ParamSet-congruent, so the same container is used.
Gradients = ParamSet


class Mask:
    """Binary overlay congruent to a ParamSet. 1 keeps, 0 prunes."""

    __slots__ = ("layers", "pruned_fraction")

    def __init__(self, layers):
        layers = tuple((np.asarray(mw, dtype=np.float64), np.asarray(mb, dtype=np.float64))
                       for mw, mb in layers)
        zeros = 0
        total = 0
        for i, (mw, mb) in enumerate(layers):
            for part in (mw, mb):
                if not np.all((part == 0.0) | (part == 1.0)):
                    raise ValueError(f"Mask: layer {i} has entries outside {{0, 1}}")
                zeros += int(part.size - part.sum())
                total += part.size
        self.layers = layers
        self.pruned_fraction = zeros / total if total else 0.0

    @classmethod
    def ones_like(cls, params: ParamSet) -> "Mask":
        return cls([(np.ones_like(w), np.ones_like(b)) for w, b in params.layers])

    def __len__(self) -> int:
        return len(self.layers)


def congruent(a, b) -> bool:
    """True when two layered containers have identical per-layer shapes."""
    return (len(a.layers) == len(b.layers)
            and all(aw.shape == bw.shape and ab.shape == bb.shape
                    for (aw, ab), (bw, bb) in zip(a.layers, b.layers)))


def init_params(arch: list[int], seed) -> ParamSet:
    """Seeded init: weights uniform in +-sqrt(6/(I+O)), biases zero."""
    if len(arch) < 2 or any(int(d) < 1 for d in arch):
        raise ValueError(f"init_params: arch {arch} needs >= 2 positive dims")
    rng = np.random.default_rng(seed)
    layers = []
    for i_dim, o_dim in zip(arch[:-1], arch[1:]):
        bound = math.sqrt(6.0 / (i_dim + o_dim))
        layers.append((rng.uniform(-bound, bound, size=(i_dim, o_dim)),
                       np.zeros(o_dim)))
    return ParamSet(layers)


def register_network(tape: Tape, params: ParamSet, mask: Mask | None = None) -> list:
    """Register every weight and bias as a tape parameter, once.

    Returns per-layer effective tensors: the raw parameters, or mask * param
    products when a mask is given. The mask enters as a tape constant, so
    masked coordinates get exact zero gradients. Registration order is
    (w0, b0, w1, b1, ...), which collect_grads relies on.
    """
    if mask is not None and not congruent(params, mask):
        raise ShapeError("register_network: mask is not congruent to params")
    effective = []
    for i, (w, b) in enumerate(params.layers):
        wt = tape.param(w)
        bt = tape.param(b)
        if mask is not None:
            wt = tape.mul(wt, tape.leaf(mask.layers[i][0]))
            bt = tape.mul(bt, tape.leaf(mask.layers[i][1]))
        effective.append((wt, bt))
    return effective


def run_network(tape: Tape, effective: list, x) -> Tensor:
    """ReLU MLP forward through registered layer tensors (no final ReLU)."""
    h = tape.leaf(x)
    last = len(effective) - 1
    for i, (wt, bt) in enumerate(effective):
        h = tape.linear(h, wt, bt)
        if i != last:
            h = tape.relu(h)
    return h


def build_network(tape: Tape, params: ParamSet, x, mask: Mask | None = None) -> Tensor:
    """Register parameters and run one (masked) forward; returns the output."""
    return run_network(tape, register_network(tape, params, mask), x)


def collect_grads(tape: Tape, loss: Tensor, params: ParamSet) -> Gradients:
    """Run backward and zip the flat gradient list back into layer pairs."""
    flat = tape.backward(loss)
    if len(flat) != 2 * len(params.layers):
        raise ShapeError("collect_grads: tape parameters do not match the ParamSet")
    return ParamSet([(flat[2 * i], flat[2 * i + 1]) for i in range(len(params.layers))])


def forward(params: ParamSet, x) -> np.ndarray:
    """Plain forward pass; returns output values."""
    return build_network(Tape(), params, x).data


def forward_masked(params: ParamSet, mask: Mask, x) -> np.ndarray:
    """Forward pass of the masked network m * theta; returns output values."""
    return build_network(Tape(), params, x, mask).data


def apply_mask(params: ParamSet, mask: Mask) -> ParamSet:
    """Elementwise m * theta as a new ParamSet."""
    if not congruent(params, mask):
        raise ShapeError("apply_mask: mask is not congruent to params")
    return ParamSet([(w * mw, b * mb)
                     for (w, b), (mw, mb) in zip(params.layers, mask.layers)])


# ---- ParamSet arithmetic (used by the inner and outer loops) ----

def zeros_like(params: ParamSet) -> ParamSet:
    return ParamSet([(np.zeros_like(w), np.zeros_like(b)) for w, b in params.layers])


def combine(a: ParamSet, b: ParamSet, cb: float) -> ParamSet:
    """a + cb * b, layerwise. The workhorse of every gradient update."""
    if not congruent(a, b):
        raise ShapeError("combine: operands are not congruent")
    return ParamSet([(aw + cb * bw, ab + cb * bb)
                     for (aw, ab), (bw, bb) in zip(a.layers, b.layers)])


def accumulate(total: ParamSet | None, g: ParamSet) -> ParamSet:
    """Running sum of gradient collections; total may start as None."""
    if total is None:
        return ParamSet([(w.copy(), b.copy()) for w, b in g.layers])
    return combine(total, g, 1.0)


# ---- width slimming ----

def slim_widths(arch: list[int], rho: float) -> list[int]:
    """Hidden widths after keeping the first ceil((1-rho) * d) units.

    Input and output dimensions never change, and ceil keeps at least one
    unit per hidden layer. rho must lie in [0, 1).
    """
    if not 0.0 <= rho < 1.0:
        raise ValueError(f"slim_widths: rho {rho} outside [0, 1)")
    return [arch[0]] + [math.ceil((1.0 - rho) * d) for d in arch[1:-1]] + [arch[-1]]


def slim(params: ParamSet, rho: float) -> ParamSet:
    """Structured width pruning: drop the trailing units of each hidden layer.

    Removed units lose their incoming weights, their bias, and their outgoing
    weights. The output layer keeps its width.
    """
    widths = slim_widths(params.arch, rho)
    layers = []
    for i, (w, b) in enumerate(params.layers):
        keep_in, keep_out = widths[i], widths[i + 1]
        layers.append((w[:keep_in, :keep_out].copy(), b[:keep_out].copy()))
    return ParamSet(layers)


def slim_mask(params: ParamSet, rho: float) -> Mask:
    """Structured mask equivalent to slim(): zero everything a slim removes."""
    widths = slim_widths(params.arch, rho)
    layers = []
    for i, (w, b) in enumerate(params.layers):
        mw = np.zeros_like(w)
        mb = np.zeros_like(b)
        mw[:widths[i], :widths[i + 1]] = 1.0
        mb[:widths[i + 1]] = 1.0
        layers.append((mw, mb))
    return Mask(layers)


def scatter_slim(template: ParamSet, slim_grads: ParamSet, rho: float) -> Gradients:
    """Embed slim-network gradients into full-shape gradients.

    Retained coordinates (the leading blocks) receive the slim gradients;
    everything a slim removed gets exact zeros.
    """
    widths = slim_widths(template.arch, rho)
    layers = []
    for i, ((w, b), (gw, gb)) in enumerate(zip(template.layers, slim_grads.layers)):
        if gw.shape != (widths[i], widths[i + 1]):
            raise ShapeError(f"scatter_slim: layer {i} gradient shape {gw.shape} "
                             f"does not match slim widths")
        fw = np.zeros_like(w)
        fb = np.zeros_like(b)
        fw[:widths[i], :widths[i + 1]] = gw
        fb[:widths[i + 1]] = gb
        layers.append((fw, fb))
    return ParamSet(layers)


# ---- checkpoint I/O ----

def save_checkpoint(path: str, params: ParamSet, epoch: int = 0,
                    mask_rle: bytes | None = None) -> None:
    """Write the MGCK container. The write is atomic (tmp file + rename)."""
    parts = [MAGIC, struct.pack("<I", CHECKPOINT_VERSION),
             struct.pack("<I", len(params.layers))]
    for w, b in params.layers:
        parts.append(struct.pack("<II", w.shape[0], w.shape[1]))
    for w, b in params.layers:
        parts.append(np.ascontiguousarray(w, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
    parts.append(struct.pack("<Q", int(epoch)))
    parts.append(struct.pack("<B", 1 if mask_rle else 0))
    if mask_rle:
        parts.append(mask_rle)
    tmp = path + ".tmp"
    with open(tmp, "wb") as f:
        f.write(b"".join(parts))
        f.flush()
        os.fsync(f.fileno())
    os.replace(tmp, path)


def load_checkpoint(path: str) -> tuple[ParamSet, int, bytes | None]:
    """Read an MGCK container; returns (params, epoch, raw mask section or None)."""
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != MAGIC:
        raise ValueError(f"{path}: not a checkpoint (bad magic)")
    version, = struct.unpack_from("<I", blob, 4)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    nlayers, = struct.unpack_from("<I", blob, 8)
    off = 12
    dims = []
    for _ in range(nlayers):
        i_dim, o_dim = struct.unpack_from("<II", blob, off)
        dims.append((i_dim, o_dim))
        off += 8
    layers = []
    for i_dim, o_dim in dims:
        w = np.frombuffer(blob, dtype="<f8", count=i_dim * o_dim, offset=off).reshape(i_dim, o_dim)
        off += 8 * i_dim * o_dim
        b = np.frombuffer(blob, dtype="<f8", count=o_dim, offset=off)
        off += 8 * o_dim
        layers.append((w.copy(), b.copy()))
    epoch, = struct.unpack_from("<Q", blob, off)
    off += 8
    flags, = struct.unpack_from("<B", blob, off)
    off += 1
    mask_rle = blob[off:] if flags & 1 else None
    return ParamSet(layers), int(epoch), mask_rle
