"""Generalization bound for pruned two-loop meta-learning.

The transfer error of the meta-learner is bounded by three terms: the mean
empirical error over the T training tasks, an environment-level complexity
term shrinking in T, and a per-task complexity term shrinking in the task
sample counts m_i. Sparsity enters through the per-task KL divergence

    kl_term = D(Q||P) + (1 - rho) / 2 * ||Theta_i||^2

so a larger pruning rate rho provably tightens the bound whenever the
parameter norms are nonzero. D(Q||P), the hyper-posterior divergence, is
model- and prior-specific; the calculator refuses to guess it and requires
the caller to supply kl_hyper. All logarithms are natural.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass
class BoundInputs:
    """Everything the bound needs; validated on construction.

    tasks: T >= 2. sample_counts: per-task m_i >= 2, length T.
    delta: confidence in (0, 1]. kl_hyper: D(Q||P) >= 0. theta_norms_sq:
    per-task squared parameter norms >= 0. rho: pruning rate in [0, 1].
    empirical_errors: per-task empirical errors in [0, 1].
    """
    tasks: int
    sample_counts: list[int]
    delta: float
    kl_hyper: float
    theta_norms_sq: list[float]
    rho: float
    empirical_errors: list[float]

    def __post_init__(self):
        if self.kl_hyper is None:
            raise ValueError("kl_hyper (the hyper-posterior divergence) must be supplied; "
                             "there is no defensible default")
        if self.tasks < 2:
            raise ValueError(f"tasks must be >= 2, got {self.tasks}")
        if not 0.0 < self.delta <= 1.0:
            raise ValueError(f"delta must be in (0, 1], got {self.delta}")
        if self.kl_hyper < 0.0:
            raise ValueError(f"kl_hyper must be >= 0, got {self.kl_hyper}")
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError(f"rho must be in [0, 1], got {self.rho}")
        for name, vals, T in (("sample_counts", self.sample_counts, self.tasks),
                              ("theta_norms_sq", self.theta_norms_sq, self.tasks),
                              ("empirical_errors", self.empirical_errors, self.tasks)):
            if len(vals) != T:
                raise ValueError(f"{name} must have length tasks={T}, got {len(vals)}")
        if any(m < 2 for m in self.sample_counts):
            raise ValueError("every sample count must be >= 2")
        if any(v < 0 for v in self.theta_norms_sq):
            raise ValueError("theta_norms_sq entries must be >= 0")
        if any(not 0.0 <= e <= 1.0 for e in self.empirical_errors):
            raise ValueError("empirical errors must lie in [0, 1]")


def kl_term(kl_hyper: float, rho: float, theta_norm_sq: float) -> float:
    """Task-level KL under sparsified posteriors: D(Q||P) + (1-rho)/2 * ||Theta||^2.

    Averaging the Gaussian KL over random sparsity patterns that keep each
    coordinate with probability (1 - rho) scales the norm contribution by
    exactly (1 - rho); at rho = 1 only the hyper divergence survives.
    """
    if kl_hyper < 0.0:
        raise ValueError(f"kl_hyper must be >= 0, got {kl_hyper}")
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"rho must be in [0, 1], got {rho}")
    if theta_norm_sq < 0.0:
        raise ValueError(f"theta_norm_sq must be >= 0, got {theta_norm_sq}")
    return kl_hyper + 0.5 * (1.0 - rho) * theta_norm_sq


@dataclass
class BoundTerms:
    empirical: float
    environment: float
    task: float

    @property
    def total(self) -> float:
        return self.empirical + self.environment + self.task


def bound_terms(inputs: BoundInputs) -> BoundTerms:
    """The three bound terms, separately (the CLI prints each)."""
    T = inputs.tasks
    d = inputs.delta
    empirical = float(np.mean(inputs.empirical_errors))
    environment = math.sqrt((inputs.kl_hyper + math.log(2.0 * T / d)) / (2.0 * (T - 1)))
    task = 0.0
    for m_i, norm_sq in zip(inputs.sample_counts, inputs.theta_norms_sq):
        kl = kl_term(inputs.kl_hyper, inputs.rho, norm_sq)
        task += math.sqrt((kl + math.log(2.0 * T * m_i / d)) / (2.0 * (m_i - 1)))
    return BoundTerms(empirical, environment, task / T)


def bound(inputs: BoundInputs) -> float:
    """Upper bound on the transfer error (sum of the three terms)."""
    return bound_terms(inputs).total
