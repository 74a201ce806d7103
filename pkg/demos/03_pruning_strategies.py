"""The three pruning strategies and the saliency score behind CP.

WP slims whole units, PP zeroes random coordinates, CP zeroes the
coordinates whose removal would change the query loss most. The CP score is
a first-order estimate: score_j = dL/dtheta_j * theta_j, the Taylor
prediction of the loss change from zeroing coordinate j. The demo checks
that prediction against actually zeroing each coordinate, one at a time.
"""

import numpy as np

from mgaug.autodiff import Tape
from mgaug.model import (Mask, apply_mask, build_network, collect_grads,
                         forward, init_params, slim, slim_widths)
from mgaug.pruning import build_mask_cp, build_mask_pp, build_plan_wp, mmca

rng = np.random.default_rng(5)
params = init_params([4, 6, 3], seed=11)
x = rng.normal(size=(9, 4))
y = rng.integers(0, 3, size=9)


def loss_of(p):
    t = Tape()
    return float(t.cross_entropy(build_network(t, p, x), y).data)

tape = Tape()
loss = tape.cross_entropy(build_network(tape, params, x), y)
tape.backward(loss)
scores = mmca(params, collect_grads(tape, loss, params))

# 1. the saliency scores really do predict leave-one-out loss changes.
#    Shrink the parameters and the first-order estimate tightens.
print("scale   median |predicted - actual| / |actual|")
for scale in (1e-1, 1e-2, 1e-3):
    small = params.copy()
    for w, b in small.layers:
        w *= scale
        b *= scale
    t = Tape()
    ls = t.cross_entropy(build_network(t, small, x), y)
    t.backward(ls)
    sc = mmca(small, collect_grads(t, ls, small))
    base = loss_of(small)
    rels = []
    for li, (w, b) in enumerate(small.layers):
        for arr, sarr in ((w, sc.layers[li][0]), (b, sc.layers[li][1])):
            for idx in np.ndindex(arr.shape):
                kept = arr[idx]
                arr[idx] = 0.0
                actual = loss_of(small) - base
                arr[idx] = kept
                if abs(actual) > 1e-10:
                    rels.append(abs(-sarr[idx] - actual) / abs(actual))
    print(f"{scale:.0e}   {np.median(rels):.2e}")

# 2. CP masks the largest |score| coordinates per layer
mask = build_mask_cp(scores, rho=0.25)
for li, (mw, mb) in enumerate(mask.layers):
    pool = np.concatenate([scores.layers[li][0].ravel(), scores.layers[li][1].ravel()])
    kept = np.concatenate([mw.ravel(), mb.ravel()]).astype(bool)
    print(f"cp layer {li}: zeroed {int((~kept).sum())}/{pool.size}, "
          f"largest kept |score| {np.abs(pool[kept]).max():.4f} <= "
          f"smallest zeroed {np.abs(pool[~kept]).min():.4f}")

# 3. PP zeroes an exact per-layer count, position chosen by seed
pp = build_mask_pp(params, rho=0.25, seed=3)
counts = [int((np.concatenate([mw.ravel(), mb.ravel()]) == 0).sum())
          for mw, mb in pp.layers]
print(f"pp zeros per layer: {counts}")

# 4. WP keeps a prefix of each hidden layer; the slim network computes the
#    same function as masking the dropped units in the full network
widths = slim_widths([4, 6, 3], rho=0.5)
small = slim(params, rho=0.5)
keep = Mask.ones_like(params)
keep.layers[0][0][:, widths[1]:] = 0.0
keep.layers[0][1][widths[1]:] = 0.0
keep.layers[1][0][widths[1]:, :] = 0.0
diff = np.abs(forward(small, x) - forward(apply_mask(params, keep), x)).max()
print(f"wp: widths {[4, 6, 3]} -> {widths}, slim vs masked forward gap {diff:.2e}")
