"""Two-loop meta-learning with augmented meta-gradients.

The outer loop owns the meta-parameters omega. For each task the inner loop
produces a first-order meta-gradient two ways:

    fomaml    fine-tune a copy of omega on the support set for a few plain
              gradient steps, then take the query-loss gradient at the
              fine-tuned parameters as the meta-gradient.
    protonet  no fine-tuning: omega is an embedding network, class prototypes
              are support-embedding means, logits are negative squared
              Euclidean distances, and the meta-gradient is the query-loss
              gradient at omega itself.

meta_step_mgaug augments each task's meta-gradient with U extra inner passes
through randomly pruned sub-networks (width, random-parameter, or
carrying-amount pruning at a rate drawn fresh from [rho_min, rho_max) per
sub-network). The "sum" variant adds all gradients; "maxup" keeps only the
copy with the worst query loss per task. Task and sub-network order is fixed,
so a given seed reproduces the update bit for bit.

A degenerate rate interval (rho_min == rho_max) offers no valid draw and
disables augmentation entirely, which makes a zero-pruning configuration
bit-identical to the baseline update.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tape
from .model import (Gradients, Mask, ParamSet, accumulate, apply_mask, build_network,
                    collect_grads, combine, register_network, run_network, scatter_slim,
                    slim, zeros_like)
from .pruning import PruningPlan, build_mask_cp, build_mask_pp, build_plan_wp, mmca, sample_rho
from .tasks import Episode

METHODS = ("fomaml", "protonet")
STRATEGIES = ("none", "wp", "pp", "cp")
VARIANTS = ("sum", "maxup")


@dataclass
class InnerResult:
    """Outcome of one inner-loop pass on one episode.

    step_accuracies[i] is the query accuracy after i inner updates; index 0 is
    before any update. meta_grad is congruent to the parameters the pass ran
    on, with masked coordinates exactly zero. step_grads is populated only on
    request (debugging and freeze checks).
    """
    fine_tuned: ParamSet
    mask: Mask | None
    query_loss: float
    query_accuracy: float
    meta_grad: Gradients
    step_accuracies: list[float]
    step_grads: list[Gradients] | None = None


@dataclass
class SubnetRecord:
    """One augmentation pass: the plan, its inner result, and the gradient
    already embedded back into full-omega shape."""
    rho: float
    plan: PruningPlan
    result: InnerResult
    grad: Gradients


@dataclass
class TaskRecord:
    full: InnerResult
    subnets: list[SubnetRecord] = field(default_factory=list)
    chosen: int | None = None     # maxup: 0 = full pass, i >= 1 = subnets[i-1]


@dataclass
class MetaUpdateReport:
    tasks: list[TaskRecord]
    aggregated_grad: Gradients    # mean over tasks of the composed gradients
    beta: float
    variant: str


@dataclass
class MetaStepConfig:
    method: str = "fomaml"
    strategy: str = "none"
    variant: str = "sum"
    u_subnets: int = 0
    rho_min: float = 0.0
    rho_max: float = 0.0
    inner_steps: int = 5
    alpha: float = 0.1
    beta: float = 0.001
    aug_normalize: bool = False   # divide each task's sum by (U+1)
    mmca_at_init: bool = False    # score with the query gradient at omega, not at theta_t

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.u_subnets < 0 or self.inner_steps < 0:
            raise ValueError("u_subnets and inner_steps must be >= 0")
        if not (0.0 <= self.rho_min <= self.rho_max <= 1.0):
            raise ValueError(f"need 0 <= rho_min <= rho_max <= 1, "
                             f"got [{self.rho_min}, {self.rho_max})")


def _accuracy(outputs: np.ndarray, y: np.ndarray, loss: str) -> float:
    if loss == "ce":
        return float((outputs.argmax(axis=1) == y).mean())
    # regression: fraction of rows with every coordinate within 0.5 of target
    return float((np.abs(outputs - y) < 0.5).all(axis=1).mean())


def _loss_node(tape: Tape, out, y, loss: str):
    if loss == "ce":
        return tape.cross_entropy(out, y)
    return tape.squared_error(out, y)


def inner_fomaml(params: ParamSet, episode: Episode, mask: Mask | None = None,
                 steps: int = 5, alpha: float = 0.1, loss: str = "ce",
                 record_step_grads: bool = False) -> InnerResult:
    """Fine-tune on the support set, then read the meta-gradient off the query set.

    Starts from mask * params when a mask is given; the mask also gates every
    forward pass, so masked coordinates keep value 0 and gradient 0 through
    all steps. The meta-gradient is the query-loss gradient at the fine-tuned
    parameters (first-order: no backprop through the update path).
    """
    if loss not in ("ce", "mse"):
        raise ValueError(f"inner_fomaml: unknown loss {loss!r}")
    theta = apply_mask(params, mask) if mask is not None else params
    step_accs = [_accuracy(_values(theta, mask, episode.query_x), episode.query_y, loss)]
    step_grads = [] if record_step_grads else None
    for i in range(steps):
        tape = Tape()
        out = build_network(tape, theta, episode.support_x, mask)
        g = collect_grads(tape, _loss_node(tape, out, episode.support_y, loss), theta)
        if record_step_grads:
            step_grads.append(g)
        theta = combine(theta, g, -alpha)
        if i != steps - 1:
            step_accs.append(_accuracy(_values(theta, mask, episode.query_x),
                                       episode.query_y, loss))
    # final query pass yields loss, accuracy, and the meta-gradient in one tape
    tape = Tape()
    out = build_network(tape, theta, episode.query_x, mask)
    qloss = _loss_node(tape, out, episode.query_y, loss)
    qgrad = collect_grads(tape, qloss, theta)
    qacc = _accuracy(out.data, episode.query_y, loss)
    if steps > 0:
        step_accs.append(qacc)
    return InnerResult(theta, mask, float(qloss.data), qacc, qgrad, step_accs, step_grads)


def _values(theta: ParamSet, mask: Mask | None, x) -> np.ndarray:
    return build_network(Tape(), theta, x, mask).data


def inner_protonet(params: ParamSet, episode: Episode, mask: Mask | None = None) -> InnerResult:
    """Prototype pass: no fine-tuning, meta-gradient at omega itself.

    Support and query batches share one set of parameter leaves so the query
    loss differentiates through both embedding paths.
    """
    tape = Tape()
    eff = register_network(tape, params, mask)
    s_emb = run_network(tape, eff, episode.support_x)
    q_emb = run_network(tape, eff, episode.query_x)
    logits = tape.proto_logits(s_emb, q_emb, episode.support_y, episode.n_way)
    qloss = tape.cross_entropy(logits, episode.query_y)
    qgrad = collect_grads(tape, qloss, params)
    qacc = _accuracy(logits.data, episode.query_y, "ce")
    return InnerResult(params, mask, float(qloss.data), qacc, qgrad, [qacc])


def _inner(params: ParamSet, episode: Episode, mask: Mask | None, cfg: MetaStepConfig) -> InnerResult:
    if cfg.method == "protonet":
        return inner_protonet(params, episode, mask)
    return inner_fomaml(params, episode, mask, cfg.inner_steps, cfg.alpha)


def _query_grad_at(params: ParamSet, episode: Episode, cfg: MetaStepConfig) -> Gradients:
    """Query-loss gradient at the given parameters, no fine-tuning."""
    if cfg.method == "protonet":
        return inner_protonet(params, episode).meta_grad
    tape = Tape()
    out = build_network(tape, params, episode.query_x)
    return collect_grads(tape, tape.cross_entropy(out, episode.query_y), params)


def meta_step_mgaug(omega: ParamSet, episodes: list[Episode], cfg: MetaStepConfig,
                    prune_seed=0, optimizer=None) -> tuple[ParamSet, MetaUpdateReport]:
    """One outer update from a batch of tasks, with optional augmentation.

    Per task: a full-network inner pass, then u_subnets pruned passes, each at
    its own rate rho_u drawn from [rho_min, rho_max) with a seed derived from
    (prune_seed, task index, subnet index), so the update is reproducible and
    independent of everything else. "sum" adds the meta-gradients of all
    copies; "maxup" keeps only the worst-query-loss copy per task. The
    default update is plain gradient descent omega - beta * mean; passing an
    optimizer delegates to optimizer.step(omega, mean_grad).
    """
    if not episodes:
        raise ValueError("meta_step_mgaug: at least one episode required")
    # an empty rate interval has no valid draw: augmentation is inert
    u_eff = 0 if cfg.rho_min == cfg.rho_max else cfg.u_subnets
    total: ParamSet | None = None
    records: list[TaskRecord] = []
    for t, ep in enumerate(episodes):
        full = _inner(omega, ep, None, cfg)
        subs: list[SubnetRecord] = []
        scores = None
        if u_eff > 0 and cfg.strategy == "cp":
            if cfg.method == "fomaml" and cfg.mmca_at_init:
                g_src = _query_grad_at(omega, ep, cfg)
            else:
                g_src = full.meta_grad
            scores = mmca(omega, g_src, episode_id=t)
        for u in range(u_eff):
            rho_u = sample_rho(cfg.rho_min, cfg.rho_max, (prune_seed, t, u, 0))
            if cfg.strategy == "wp":
                plan = build_plan_wp(omega.arch, rho_u)
                res = _inner(slim(omega, rho_u), ep, None, cfg)
                grad = scatter_slim(omega, res.meta_grad, rho_u)
            elif cfg.strategy == "pp":
                plan = PruningPlan("pp", rho_u,
                                   mask=build_mask_pp(omega, rho_u, (prune_seed, t, u, 1)))
                res = _inner(omega, ep, plan.mask, cfg)
                grad = res.meta_grad
            elif cfg.strategy == "cp":
                plan = PruningPlan("cp", rho_u, mask=build_mask_cp(scores, rho_u))
                res = _inner(omega, ep, plan.mask, cfg)
                grad = res.meta_grad
            else:
                plan = PruningPlan("none", rho_u)
                res = _inner(omega, ep, None, cfg)
                grad = res.meta_grad
            subs.append(SubnetRecord(rho_u, plan, res, grad))

        chosen = None
        if cfg.variant == "maxup":
            losses = [full.query_loss] + [s.result.query_loss for s in subs]
            chosen = int(np.argmax(losses))    # ties keep the earliest copy
            g_task = full.meta_grad if chosen == 0 else subs[chosen - 1].grad
        else:
            g_task = full.meta_grad
            for s in subs:
                g_task = combine(g_task, s.grad, 1.0)
            if cfg.aug_normalize and subs:
                g_task = combine(zeros_like(omega), g_task, 1.0 / (len(subs) + 1))
        total = accumulate(total, g_task)
        records.append(TaskRecord(full, subs, chosen))

    aggregated = combine(zeros_like(omega), total, 1.0 / len(episodes))
    if optimizer is None:
        new_omega = combine(omega, aggregated, -cfg.beta)
    else:
        new_omega = optimizer.step(omega, aggregated)
    return new_omega, MetaUpdateReport(records, aggregated, cfg.beta, cfg.variant)


@dataclass
class EvalResult:
    mean_accuracy: float
    stderr: float
    mean_loss: float
    n_episodes: int


def evaluate(omega: ParamSet, episodes: list[Episode], method: str = "fomaml",
             steps: int = 5, alpha: float = 0.1) -> EvalResult:
    """Mean query accuracy with its standard error over episodes.

    Runs the inner loop per episode and never touches omega. stderr is the
    sample standard deviation (ddof 1) over episode accuracies divided by
    sqrt(n); a single episode reports stderr 0.
    """
    if method not in METHODS:
        raise ValueError(f"evaluate: method must be one of {METHODS}")
    if not episodes:
        raise ValueError("evaluate: at least one episode required")
    accs, losses = [], []
    for ep in episodes:
        if method == "protonet":
            r = inner_protonet(omega, ep)
        else:
            r = inner_fomaml(omega, ep, steps=steps, alpha=alpha)
        accs.append(r.query_accuracy)
        losses.append(r.query_loss)
    accs = np.asarray(accs)
    stderr = float(accs.std(ddof=1) / np.sqrt(len(accs))) if len(accs) > 1 else 0.0
    return EvalResult(float(accs.mean()), stderr, float(np.mean(losses)), len(accs))
