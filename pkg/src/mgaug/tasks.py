"""Synthetic few-shot episodes from banks of Gaussian classes.

A ClassBank holds C isotropic Gaussian classes (mean in [-1, 1]^d, shared
per-class std) tagged train/val/test. Episodes are N-way K-shot tasks with Q
queries per way, sampled from one split.

Label modes, the lever that separates the two overfitting regimes:

    me   mutually exclusive: each episode draws a fresh uniform random
         permutation of the N way labels, so a label carries no information
         across episodes and rote label memorization is impossible.
    nme  non-mutually-exclusive: the label of class c is globally fixed to
         c mod N, and the N classes of an episode are chosen one per residue
         so the fixed assignment is a bijection onto {0..N-1}. A meta-learner
         can then score on queries without using the support set at all.

All sampling is driven by numpy Generators seeded from the caller's seed, so
episodes are reproducible; a (seed, episode_index) tuple gives independent
per-episode streams.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SPLITS = ("train", "val", "test")
MODES = ("me", "nme")


@dataclass
class ClassBank:
    """means (C, d), stds (C,), splits: per-class tag from SPLITS."""
    means: np.ndarray
    stds: np.ndarray
    splits: tuple[str, ...]

    def __post_init__(self):
        self.means = np.asarray(self.means, dtype=np.float64)
        self.stds = np.asarray(self.stds, dtype=np.float64)
        if self.means.ndim != 2 or self.stds.shape != (self.means.shape[0],):
            raise ValueError("ClassBank: means must be (C, d) and stds (C,)")
        if len(self.splits) != self.means.shape[0]:
            raise ValueError("ClassBank: one split tag per class required")
        if any(s not in SPLITS for s in self.splits):
            raise ValueError(f"ClassBank: split tags must be in {SPLITS}")

    @property
    def num_classes(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def split_ids(self, split: str) -> np.ndarray:
        if split not in SPLITS:
            raise ValueError(f"unknown split {split!r}")
        return np.array([i for i, s in enumerate(self.splits) if s == split], dtype=np.int64)


@dataclass
class Episode:
    """One N-way K-shot task with Q queries per way.

    Rows are grouped by way: way w occupies support rows [w*K, (w+1)*K) and
    query rows [w*Q, (w+1)*Q). label_map maps bank class id -> way label.
    """
    support_x: np.ndarray
    support_y: np.ndarray
    query_x: np.ndarray
    query_y: np.ndarray
    class_ids: np.ndarray
    label_map: dict[int, int]

    @property
    def n_way(self) -> int:
        return len(self.class_ids)


def make_bank(num_classes: int, d: int, spread: float, seed,
              split_fractions: tuple[float, float, float] = (0.5, 0.25, 0.25)) -> ClassBank:
    """Bank of isotropic Gaussian classes, means uniform in [-1, 1]^d.

    Split tags are assigned contiguously by class id: the first chunk is
    train, then val, then test, sized by split_fractions (train gets the
    rounding remainder). Every class shares the same std = spread.
    """
    if num_classes < 1 or d < 1:
        raise ValueError("make_bank: num_classes and d must be positive")
    if spread <= 0:
        raise ValueError("make_bank: spread must be positive")
    if len(split_fractions) != 3 or any(f < 0 for f in split_fractions) or sum(split_fractions) > 1 + 1e-9:
        raise ValueError("make_bank: split_fractions must be three non-negative values summing to <= 1")
    rng = np.random.default_rng(seed)
    means = rng.uniform(-1.0, 1.0, size=(num_classes, d))
    n_val = int(round(split_fractions[1] * num_classes))
    n_test = int(round(split_fractions[2] * num_classes))
    n_train = num_classes - n_val - n_test
    if n_train < 1:
        raise ValueError("make_bank: split fractions leave no training classes")
    splits = ("train",) * n_train + ("val",) * n_val + ("test",) * n_test
    return ClassBank(means, np.full(num_classes, float(spread)), splits)


def sample_episode(bank: ClassBank, n_way: int, k_shot: int, q_queries: int = 15,
                   mode: str = "me", seed=0, split: str = "train") -> Episode:
    """Draw one episode from a split.

    me: n_way distinct classes uniformly without replacement, labels assigned
    by a fresh uniform permutation. nme: one class per residue r = id mod
    n_way (uniformly within each residue group), labeled r. A split that
    cannot support the mode raises ValueError.
    """
    if mode not in MODES:
        raise ValueError(f"sample_episode: mode must be one of {MODES}")
    if n_way < 2 or k_shot < 1 or q_queries < 1:
        raise ValueError("sample_episode: need n_way >= 2, k_shot >= 1, q_queries >= 1")
    rng = np.random.default_rng(seed)
    ids = bank.split_ids(split)

    if mode == "me":
        if len(ids) < n_way:
            raise ValueError(f"sample_episode: split {split!r} has {len(ids)} classes, "
                             f"need {n_way}")
        class_ids = rng.choice(ids, size=n_way, replace=False)
        labels = rng.permutation(n_way)
    else:
        groups = [ids[ids % n_way == r] for r in range(n_way)]
        if any(len(g) == 0 for g in groups):
            missing = [r for r, g in enumerate(groups) if len(g) == 0]
            raise ValueError(f"sample_episode: split {split!r} has no class with "
                             f"id mod {n_way} in {missing}")
        class_ids = np.array([g[rng.integers(len(g))] for g in groups])
        labels = np.arange(n_way)    # residue r is labeled r by construction

    sx, sy, qx, qy = [], [], [], []
    for cid, lab in zip(class_ids, labels):
        mean, std = bank.means[cid], bank.stds[cid]
        pts = rng.normal(0.0, 1.0, size=(k_shot + q_queries, bank.dim)) * std + mean
        sx.append(pts[:k_shot])
        qx.append(pts[k_shot:])
        sy.append(np.full(k_shot, lab, dtype=np.int64))
        qy.append(np.full(q_queries, lab, dtype=np.int64))
    return Episode(
        support_x=np.concatenate(sx), support_y=np.concatenate(sy),
        query_x=np.concatenate(qx), query_y=np.concatenate(qy),
        class_ids=np.asarray(class_ids, dtype=np.int64),
        label_map={int(c): int(l) for c, l in zip(class_ids, labels)},
    )


def save_bank(bank: ClassBank, path: str) -> None:
    """One class per line: id,split,std,m0,...,m{d-1}. Floats use repr for
    exact round-trips."""
    with open(path, "w", encoding="utf-8") as f:
        f.write("# class bank: id,split,std,mean...\n")
        for i in range(bank.num_classes):
            mean = ",".join(repr(float(v)) for v in bank.means[i])
            f.write(f"{i},{bank.splits[i]},{float(bank.stds[i])!r},{mean}\n")


def load_bank(path: str) -> ClassBank:
    means, stds, splits = [], [], []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            fields = line.split(",")
            idx, split, std = int(fields[0]), fields[1], float(fields[2])
            if idx != len(means):
                raise ValueError(f"{path}: class ids must be consecutive, got {idx}")
            means.append([float(v) for v in fields[3:]])
            stds.append(std)
            splits.append(split)
    return ClassBank(np.array(means), np.array(stds), tuple(splits))
