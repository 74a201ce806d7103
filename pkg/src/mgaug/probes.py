"""Behavioral probes that make memorization visible.

A meta-learner that memorizes fixed task labels scores above chance on query
sets before any fine-tuning. The memorization probe measures per-step query
accuracy with and without pruning at several rates: rote solutions show a
high step-0 accuracy that pruning knocks back toward chance, followed by a
recovery during fine-tuning (accuracy curves shaped like a hat brim rising
again). The reactivation probe compares fine-tuning gains across trained
model variants on identical fresh tasks.

Probes never modify the parameters they are given, and identical seeds
reproduce identical profiles.

Thresholds for "memorized" and "reactivated" at desk scale are calibrated
against the pilot run logged in docs/calibration.md; the two structural
constants below are protocol-level and not tuned.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .meta import inner_fomaml, inner_protonet
from .model import ParamSet, slim
from .pruning import build_mask_cp, build_mask_pp, mmca
from .tasks import ClassBank, sample_episode

# step-0 accuracy must beat chance by this much to count as memorization
MEMORIZATION_GAP_MIN = 0.10
# pruning must remove at least this fraction of the memorization gap
REACTIVATION_DROP_FRACTION = 0.5

DEFAULT_PROBE_TASKS = 100


@dataclass
class HatProfile:
    """Mean query accuracy per (pruning rate, inner step).

    baseline is the unpruned profile (rho = 0); profiles maps each probed
    rate to its curve. Index 0 of every curve is before any fine-tuning.
    Arrays are (steps + 1,) means with matching standard errors.
    """
    strategy: str
    rhos: list[float]
    baseline: np.ndarray
    baseline_stderr: np.ndarray
    profiles: dict[float, np.ndarray]
    profile_stderrs: dict[float, np.ndarray]
    n_tasks: int

    def step0_drop(self, rho: float) -> float:
        """How much step-0 accuracy the pruning removed at this rate."""
        return float(self.baseline[0] - self.profiles[rho][0])

    def gain(self, rho: float | None = None) -> float:
        """Fine-tuning gain (final minus step-0) of a curve; None = baseline."""
        curve = self.baseline if rho is None else self.profiles[rho]
        return float(curve[-1] - curve[0])


def _mean_stderr(rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = rows.mean(axis=0)
    if rows.shape[0] > 1:
        err = rows.std(axis=0, ddof=1) / np.sqrt(rows.shape[0])
    else:
        err = np.zeros_like(mean)
    return mean, err


def memorization_probe(omega: ParamSet, bank: ClassBank, mode: str, rhos: list[float],
                       strategy: str, n_tasks: int = DEFAULT_PROBE_TASKS, *,
                       method: str = "fomaml", n_way: int = 5, k_shot: int = 1,
                       q_queries: int = 15, steps: int = 5, alpha: float = 0.1,
                       seed=0, split: str = "train", mmca_at_init: bool = False) -> HatProfile:
    """Per-step accuracy profile of pruned and unpruned inner loops.

    Samples n_tasks episodes from the split, runs the unpruned inner loop on
    each (the rho = 0 baseline), then reruns each episode once per rate in
    rhos with the strategy's pruning applied at the initial parameters. cp
    scores use the baseline pass's meta-gradient (or the query gradient at
    omega when mmca_at_init), so the probe mirrors how augmentation builds
    its sub-networks.
    """
    if strategy not in ("wp", "pp", "cp"):
        raise ValueError(f"memorization_probe: strategy {strategy!r} is not prunable")
    if any(not 0.0 <= r < 1.0 for r in rhos):
        raise ValueError("memorization_probe: every rho must lie in [0, 1)")

    def run(params, ep, mask):
        if method == "protonet":
            return inner_protonet(params, ep, mask)
        return inner_fomaml(params, ep, mask, steps, alpha)

    base_rows = []
    pruned_rows = {r: [] for r in rhos}
    for i in range(n_tasks):
        ep = sample_episode(bank, n_way, k_shot, q_queries, mode, (seed, i), split)
        full = run(omega, ep, None)
        base_rows.append(full.step_accuracies)
        scores = None
        if strategy == "cp":
            if method == "fomaml" and mmca_at_init:
                g = inner_fomaml(omega, ep, steps=0).meta_grad
            else:
                g = full.meta_grad
            scores = mmca(omega, g, episode_id=i)
        for j, rho in enumerate(rhos):
            if rho == 0.0:
                pruned_rows[rho].append(full.step_accuracies)
                continue
            if strategy == "wp":
                res = run(slim(omega, rho), ep, None)
            elif strategy == "pp":
                res = run(omega, ep, build_mask_pp(omega, rho, (seed, i, j)))
            else:
                res = run(omega, ep, build_mask_cp(scores, rho))
            pruned_rows[rho].append(res.step_accuracies)

    base_mean, base_err = _mean_stderr(np.asarray(base_rows))
    profiles, errs = {}, {}
    for r in rhos:
        profiles[r], errs[r] = _mean_stderr(np.asarray(pruned_rows[r]))
    return HatProfile(strategy, list(rhos), base_mean, base_err, profiles, errs, n_tasks)


@dataclass
class ReactivationRow:
    variant: str
    step0: float
    final: float
    gain: float
    step0_gap: float          # step-0 accuracy minus chance
    curve: np.ndarray
    stderr: np.ndarray


@dataclass
class ReactivationReport:
    rows: list[ReactivationRow] = field(default_factory=list)

    def row(self, variant: str) -> ReactivationRow:
        for r in self.rows:
            if r.variant == variant:
                return r
        raise KeyError(variant)


def reactivation_probe(omega_variants: dict[str, ParamSet], bank: ClassBank, steps: int,
                       n_tasks: int = DEFAULT_PROBE_TASKS, *, mode: str = "nme",
                       n_way: int = 5, k_shot: int = 1, q_queries: int = 15,
                       alpha: float = 0.1, seed=0, split: str = "train") -> ReactivationReport:
    """Fine-tuning curves of several trained variants on identical episodes.

    Each variant (say baseline, an augmentation-trained model, a fresh
    random init) fine-tunes on the same episode sequence; the report gives
    step-0 accuracy, its gap over chance, and the fine-tuning gain per
    variant, which is what separates adaptation from rote recall.
    """
    episodes = [sample_episode(bank, n_way, k_shot, q_queries, mode, (seed, i), split)
                for i in range(n_tasks)]
    chance = 1.0 / n_way
    report = ReactivationReport()
    for name, params in omega_variants.items():
        rows = np.asarray([inner_fomaml(params, ep, steps=steps, alpha=alpha).step_accuracies
                           for ep in episodes])
        mean, err = _mean_stderr(rows)
        report.rows.append(ReactivationRow(
            variant=name, step0=float(mean[0]), final=float(mean[-1]),
            gain=float(mean[-1] - mean[0]), step0_gap=float(mean[0] - chance),
            curve=mean, stderr=err))
    return report


def profile_to_csv(profile: HatProfile, path: str) -> None:
    """Rows: variant,rho,step,mean_acc,stderr,n_tasks. The unpruned curve is
    written as variant "baseline" at rho 0."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["variant", "rho", "step", "mean_acc", "stderr", "n_tasks"])
        for s, (m, e) in enumerate(zip(profile.baseline, profile.baseline_stderr)):
            w.writerow(["baseline", "0", s, f"{m:.9g}", f"{e:.9g}", profile.n_tasks])
        for rho in profile.rhos:
            for s, (m, e) in enumerate(zip(profile.profiles[rho], profile.profile_stderrs[rho])):
                w.writerow([profile.strategy, f"{rho:.9g}", s, f"{m:.9g}", f"{e:.9g}",
                            profile.n_tasks])


def reactivation_to_csv(report: ReactivationReport, path: str, n_tasks: int) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["variant", "rho", "step", "mean_acc", "stderr", "n_tasks"])
        for row in report.rows:
            for s, (m, e) in enumerate(zip(row.curve, row.stderr)):
                w.writerow([row.variant, "0", s, f"{m:.9g}", f"{e:.9g}", n_tasks])
