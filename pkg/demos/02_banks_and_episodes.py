"""Class banks and the two episode constructions.

A bank is a set of Gaussian classes split into train/val/test. Episodes are
N-way K-shot tasks drawn from one split. The construction mode decides what
the labels mean:

  me   mutually exclusive: labels are a fresh random permutation per
       episode, so a label carries no information across episodes.
  nme  non mutually exclusive: class id mod N is the label, forever. A
       meta-learner can exploit that and stop adapting.
"""

import os
import tempfile

import numpy as np

from mgaug.tasks import load_bank, make_bank, sample_episode, save_bank

bank = make_bank(num_classes=15, d=16, spread=0.3, seed=7,
                 split_fractions=(1 / 3, 1 / 3, 1 / 3))
counts = {s: bank.splits.count(s) for s in ("train", "val", "test")}
print(f"bank: {len(bank.splits)} classes in 16 dims, splits {counts}")

# NME: same classes drawn twice keep their labels
ep1 = sample_episode(bank, n_way=5, k_shot=1, q_queries=3, mode="nme", seed=0)
ep2 = sample_episode(bank, n_way=5, k_shot=1, q_queries=3, mode="nme", seed=99)
print("\nnme label maps (class id -> label) for two different draws:")
print(" ", dict(sorted(ep1.label_map.items())))
print(" ", dict(sorted(ep2.label_map.items())))
print("  every class keeps label = id mod 5")

# ME: the same episode seed reshuffles labels independently of identity
print("\nme label maps for two draws:")
for s in (0, 1):
    ep = sample_episode(bank, 5, 1, 3, mode="me", seed=s)
    print(" ", dict(sorted(ep.label_map.items())))

# episode geometry
ep = sample_episode(bank, n_way=5, k_shot=2, q_queries=4, mode="me", seed=3)
print(f"\n5-way 2-shot episode: support {ep.support_x.shape}, query {ep.query_x.shape}")
print(f"support labels {np.bincount(ep.support_y, minlength=5)} per class (balanced)")

# banks round-trip through a plain text file
path = os.path.join(tempfile.mkdtemp(), "bank.txt")
save_bank(bank, path)
again = load_bank(path)
assert np.array_equal(bank.means, again.means) and bank.splits == again.splits
print(f"\nbank round-trips through {path}")
