"""Sub-network construction: score-based, random, and structured pruning.

Three strategies produce pruned views of a ParamSet:

    cp  catfish pruning: score each parameter by how much query loss it
        carries (first-order estimate grad * value) and zero the top rho
        fraction by |score| within each layer. Pruning the carriers knocks
        the network off its memorized solution and forces the inner loop to
        re-adapt from the support set.
    pp  random parameter pruning: exactly floor(rho * n_l) uniformly chosen
        zeros per layer.
    wp  width pruning: structurally drop the trailing units of every hidden
        layer (see model.slim).

A layer's parameter pool is concat(W.ravel(), bias): biases are ordinary
prunable parameters for cp/pp, while wp removes them with their units.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .autodiff import ShapeError
from .model import Gradients, Mask, ParamSet, congruent, slim_widths


@dataclass
class MMCAScores:
    """Per-parameter carrying amounts, congruent to the scored ParamSet."""
    layers: tuple
    episode_id: int | None = None

    def __post_init__(self):
        self.layers = tuple((np.asarray(sw, dtype=np.float64), np.asarray(sb, dtype=np.float64))
                            for sw, sb in self.layers)


@dataclass
class PruningPlan:
    """How to build one sub-network: a mask (cp/pp) or slim widths (wp)."""
    strategy: str                       # "wp" | "pp" | "cp" | "none"
    rho: float
    mask: Mask | None = None
    widths: list[int] | None = None


def mmca(params: ParamSet, query_grad: Gradients, episode_id: int | None = None) -> MMCAScores:
    """First-order loss change from zeroing each parameter alone.

    score_j = dL/dtheta_j * theta_j, the linearization of
    L(theta) - L(theta with j zeroed). Zero-valued parameters carry nothing.
    """
    if not congruent(params, query_grad):
        raise ShapeError("mmca: gradient is not congruent to params")
    return MMCAScores(tuple((gw * w, gb * b)
                            for (w, b), (gw, gb) in zip(params.layers, query_grad.layers)),
                      episode_id)


def _topk_mask(flat_scores: np.ndarray, k: int) -> np.ndarray:
    """Ones with the k largest-|score| positions zeroed, ties by lower index."""
    mask = np.ones(flat_scores.size)
    if k > 0:
        # stable sort on -|s| prunes lower flat indices first among ties
        order = np.argsort(-np.abs(flat_scores), kind="stable")
        mask[order[:k]] = 0.0
    return mask


def build_mask_cp(scores: MMCAScores, rho: float) -> Mask:
    """Zero the floor(rho * n_l) largest-|score| parameters of each layer."""
    if not 0.0 <= rho < 1.0:
        raise ValueError(f"build_mask_cp: rho {rho} outside [0, 1)")
    layers = []
    for sw, sb in scores.layers:
        flat = np.concatenate([sw.ravel(), sb.ravel()])
        k = int(rho * flat.size)
        m = _topk_mask(flat, k)
        layers.append((m[:sw.size].reshape(sw.shape), m[sw.size:]))
    return Mask(layers)


def build_mask_pp(params: ParamSet, rho: float, seed) -> Mask:
    """Exactly floor(rho * n_l) uniformly random zeros per layer, seeded."""
    if not 0.0 <= rho < 1.0:
        raise ValueError(f"build_mask_pp: rho {rho} outside [0, 1)")
    rng = np.random.default_rng(seed)
    layers = []
    for w, b in params.layers:
        n = w.size + b.size
        k = int(rho * n)
        m = np.ones(n)
        if k > 0:
            m[rng.choice(n, size=k, replace=False)] = 0.0
        layers.append((m[:w.size].reshape(w.shape), m[w.size:]))
    return Mask(layers)


def build_plan_wp(arch: list[int], rho: float) -> PruningPlan:
    """Width-pruning plan: keep the first ceil((1-rho) * d) units per hidden
    layer. The realized widths are recorded in the plan."""
    return PruningPlan("wp", float(rho), widths=slim_widths(arch, rho))


def sample_rho(rho_min: float, rho_max: float, seed) -> float:
    """One pruning rate uniform in [rho_min, rho_max)."""
    if not (0.0 <= rho_min < rho_max <= 1.0):
        raise ValueError(f"sample_rho: need 0 <= rho_min < rho_max <= 1, "
                         f"got [{rho_min}, {rho_max})")
    return float(np.random.default_rng(seed).uniform(rho_min, rho_max))


# ---- mask serialization (RLE section of the checkpoint container) ----

def mask_to_rle(mask: Mask) -> bytes:
    """Run-length encode a mask: u32 layer count, then per layer the weight
    and bias vectors each as (u8 first_bit, u32 n_runs, n_runs x u32)."""
    parts = [struct.pack("<I", len(mask.layers))]
    for mw, mb in mask.layers:
        for part in (mw.ravel(), mb.ravel()):
            bits = part.astype(np.uint8)
            if bits.size == 0:
                parts.append(struct.pack("<BI", 0, 0))
                continue
            edges = np.flatnonzero(np.diff(bits)) + 1
            bounds = np.concatenate([[0], edges, [bits.size]])
            runs = np.diff(bounds).astype(np.uint64)
            parts.append(struct.pack("<BI", int(bits[0]), len(runs)))
            parts.append(runs.astype("<u4").tobytes())
    return b"".join(parts)


def mask_from_rle(blob: bytes, template: ParamSet) -> Mask:
    """Decode mask_to_rle output against the ParamSet it was built for."""
    nlayers, = struct.unpack_from("<I", blob, 0)
    if nlayers != len(template.layers):
        raise ValueError(f"mask_from_rle: blob has {nlayers} layers, "
                         f"template has {len(template.layers)}")
    off = 4
    layers = []
    for w, b in template.layers:
        decoded = []
        for ref in (w, b):
            first, n_runs = struct.unpack_from("<BI", blob, off)
            off += 5
            runs = np.frombuffer(blob, dtype="<u4", count=n_runs, offset=off)
            off += 4 * n_runs
            vals = np.empty(int(runs.sum()) if n_runs else 0)
            pos, bit = 0, float(first)
            for r in runs:
                vals[pos:pos + r] = bit
                pos += int(r)
                bit = 1.0 - bit
            if vals.size != ref.size:
                raise ValueError("mask_from_rle: run lengths do not match template shape")
            decoded.append(vals.reshape(ref.shape))
        layers.append((decoded[0], decoded[1]))
    return Mask(layers)
