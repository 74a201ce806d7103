"""Training harness: configs, the epoch loop, metrics, and checkpointing.

A run is fully determined by its RunConfig: same config and seed produce a
byte-identical metrics.csv. Every random choice draws from its own stream
(bank, init, episodes, pruning, eval) derived from the master seed, so for
example changing the pruning seed cannot shift which episodes are sampled.

Config files are flat ``key = value`` text, one key per line, # comments
allowed. CLI --set overrides file keys, and the dedicated --seed/--out flags
override both. The resolved config is echoed to the output directory.

Outputs per run directory:

    metrics.csv     epoch,train_loss,train_acc,val_loss,val_acc,bound
                    (one row per epoch, each appended and fsynced as a unit,
                    floats at 9 significant digits; bound empty unless
                    kl_hyper is configured)
    timings.csv     wall-clock sidecar; kept out of metrics.csv because
                    timing is not deterministic
    config.txt      resolved config echo
    checkpoint.mgck rewritten after every epoch
    probe.csv       hat-profile probe, when probe_at_end is set
"""

from __future__ import annotations

import dataclasses
import os
import time
from dataclasses import dataclass

import numpy as np

from .meta import (METHODS, STRATEGIES, VARIANTS, EvalResult, MetaStepConfig,
                   evaluate, meta_step_mgaug)
from .model import ParamSet, combine, init_params, load_checkpoint, save_checkpoint, zeros_like
from .pacbayes import BoundInputs, bound
from .probes import memorization_probe, profile_to_csv
from .tasks import MODES, make_bank, sample_episode

_STREAMS = {"bank": 0, "init": 1, "episode": 2, "prune": 3, "eval": 4}


@dataclass
class RunConfig:
    # method and augmentation
    method: str = "fomaml"
    strategy: str = "none"
    variant: str = "sum"
    u_subnets: int = 0
    rho_min: float = 0.0
    rho_max: float = 0.0
    aug_normalize: bool = False
    mmca_at_init: bool = False
    # episode geometry
    n_way: int = 5
    k_shot: int = 1
    q_queries: int = 15
    mode: str = "nme"
    # schedule
    tasks_per_batch: int = 4
    epochs: int = 10
    episodes_per_epoch: int = 100
    inner_steps: int = 5
    alpha: float = 0.1
    beta: float = 0.001
    optimizer: str = "adam"
    val_episodes: int = 100
    # model
    hidden: tuple = (32, 32)
    embed_dim: int = 32
    # bank
    bank_classes: int = 20
    input_dim: int = 16
    spread: float = 0.25
    bank_split: tuple = (0.5, 0.25, 0.25)
    # seeds (None = derive from the master seed)
    seed: int = 0
    bank_seed: int | None = None
    init_seed: int | None = None
    episode_seed: int | None = None
    prune_seed: int | None = None
    eval_seed: int | None = None
    # bound diagnostics (off unless kl_hyper is given)
    kl_hyper: float | None = None
    bound_delta: float = 0.1
    # probing
    probe_at_end: bool = False
    probe_rhos: tuple = (0.2,)
    probe_tasks: int = 100
    # output
    out_dir: str = "run_out"

    @property
    def arch(self) -> list[int]:
        out = self.n_way if self.method == "fomaml" else self.embed_dim
        return [self.input_dim, *[int(h) for h in self.hidden], out]

    def validate(self) -> None:
        problems = []
        if self.method not in METHODS:
            problems.append(f"method must be one of {METHODS}")
        if self.strategy not in STRATEGIES:
            problems.append(f"strategy must be one of {STRATEGIES}")
        if self.variant not in VARIANTS:
            problems.append(f"variant must be one of {VARIANTS}")
        if self.mode not in MODES:
            problems.append(f"mode must be one of {MODES}")
        if self.optimizer not in ("sgd", "adam"):
            problems.append("optimizer must be sgd or adam")
        if not (0.0 <= self.rho_min <= self.rho_max <= 1.0):
            problems.append(f"need 0 <= rho_min <= rho_max <= 1, got [{self.rho_min}, {self.rho_max})")
        if self.u_subnets < 0:
            problems.append("u_subnets must be >= 0")
        if min(self.n_way, self.k_shot, self.q_queries) < 1 or self.n_way < 2:
            problems.append("episode geometry needs n_way >= 2, k_shot >= 1, q_queries >= 1")
        if min(self.epochs, self.episodes_per_epoch, self.tasks_per_batch) < 1:
            problems.append("epochs, episodes_per_epoch, tasks_per_batch must be >= 1")
        if self.episodes_per_epoch % self.tasks_per_batch:
            problems.append("episodes_per_epoch must be a multiple of tasks_per_batch")
        if self.inner_steps < 0:
            problems.append("inner_steps must be >= 0")
        if self.alpha <= 0 or self.beta <= 0:
            problems.append("alpha and beta must be positive")
        if not self.hidden or any(int(h) < 1 for h in self.hidden):
            problems.append("hidden must list positive widths")
        if self.bank_classes < self.n_way or self.input_dim < 1 or self.spread <= 0:
            problems.append("bank needs bank_classes >= n_way, input_dim >= 1, spread > 0")
        if self.val_episodes < 1 or self.probe_tasks < 1:
            problems.append("val_episodes and probe_tasks must be >= 1")
        if self.kl_hyper is not None and self.kl_hyper < 0:
            problems.append("kl_hyper must be >= 0 when set")
        if not 0.0 < self.bound_delta <= 1.0:
            problems.append("bound_delta must be in (0, 1]")
        if problems:
            raise ValueError("invalid config: " + "; ".join(problems))

    def stream(self, name: str) -> tuple:
        """Root seed tuple of one RNG stream; explicit per-stream seeds win."""
        explicit = getattr(self, f"{name}_seed")
        if explicit is not None:
            return (int(explicit),)
        return (int(self.seed), _STREAMS[name])

    def meta_config(self) -> MetaStepConfig:
        return MetaStepConfig(
            method=self.method, strategy=self.strategy, variant=self.variant,
            u_subnets=self.u_subnets, rho_min=self.rho_min, rho_max=self.rho_max,
            inner_steps=self.inner_steps, alpha=self.alpha, beta=self.beta,
            aug_normalize=self.aug_normalize, mmca_at_init=self.mmca_at_init)


# ---- flat key = value config text ----

_TUPLE_FIELDS = {"hidden": int, "bank_split": float, "probe_rhos": float}
_OPTIONAL_FIELDS = {"bank_seed": int, "init_seed": int, "episode_seed": int,
                    "prune_seed": int, "eval_seed": int, "kl_hyper": float}


def _parse_value(name: str, raw: str):
    raw = raw.strip()
    if name in _TUPLE_FIELDS:
        conv = _TUPLE_FIELDS[name]
        return tuple(conv(v) for v in raw.split(",") if v.strip() != "")
    if name in _OPTIONAL_FIELDS:
        return None if raw == "" or raw.lower() == "none" else _OPTIONAL_FIELDS[name](raw)
    default = getattr(RunConfig(), name)
    if isinstance(default, bool):
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ValueError(f"config key {name}: expected a boolean, got {raw!r}")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return raw


def _format_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return str(value)


def parse_config_text(text: str) -> dict:
    """key = value lines to a typed mapping; unknown keys raise ValueError."""
    known = {f.name for f in dataclasses.fields(RunConfig)}
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in known:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
        out[key] = _parse_value(key, raw)
    return out


def config_to_text(cfg: RunConfig) -> str:
    lines = [f"{f.name} = {_format_value(getattr(cfg, f.name))}"
             for f in dataclasses.fields(cfg)]
    return "\n".join(lines) + "\n"


def make_config(path: str | None = None, overrides: list[str] = (),
                seed: int | None = None, out_dir: str | None = None) -> RunConfig:
    """Defaults, then file keys, then --set overrides, then dedicated flags."""
    values = {}
    if path is not None:
        with open(path, "r", encoding="utf-8") as f:
            values.update(parse_config_text(f.read()))
    for item in overrides:
        if "=" not in item:
            raise ValueError(f"--set needs key=value, got {item!r}")
        key, raw = item.split("=", 1)
        values.update(parse_config_text(f"{key} = {raw}"))
    if seed is not None:
        values["seed"] = int(seed)
    if out_dir is not None:
        values["out_dir"] = out_dir
    cfg = RunConfig(**values)
    cfg.validate()
    return cfg


# ---- optimizers ----

class Sgd:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, params: ParamSet, grad: ParamSet) -> ParamSet:
        return combine(params, grad, -self.lr)


class Adam:
    """Standard Adam with bias correction, kept layerwise."""

    def __init__(self, lr: float, b1: float = 0.9, b2: float = 0.999, eps: float = 1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.t = 0
        self.m = None
        self.v = None

    def step(self, params: ParamSet, grad: ParamSet) -> ParamSet:
        if self.m is None:
            self.m = zeros_like(params)
            self.v = zeros_like(params)
        self.t += 1
        new_layers, m_layers, v_layers = [], [], []
        for (w, b), (gw, gb), (mw, mb), (vw, vb) in zip(
                params.layers, grad.layers, self.m.layers, self.v.layers):
            parts = []
            for val, g, m1, v1 in ((w, gw, mw, vw), (b, gb, mb, vb)):
                m_new = self.b1 * m1 + (1 - self.b1) * g
                v_new = self.b2 * v1 + (1 - self.b2) * g * g
                m_hat = m_new / (1 - self.b1 ** self.t)
                v_hat = v_new / (1 - self.b2 ** self.t)
                parts.append((val - self.lr * m_hat / (np.sqrt(v_hat) + self.eps),
                              m_new, v_new))
            new_layers.append((parts[0][0], parts[1][0]))
            m_layers.append((parts[0][1], parts[1][1]))
            v_layers.append((parts[0][2], parts[1][2]))
        self.m = ParamSet(m_layers)
        self.v = ParamSet(v_layers)
        return ParamSet(new_layers)


def _make_optimizer(cfg: RunConfig):
    return Adam(cfg.beta) if cfg.optimizer == "adam" else Sgd(cfg.beta)


# ---- metrics I/O ----

METRICS_HEADER = "epoch,train_loss,train_acc,val_loss,val_acc,bound"


def _fmt(x: float | None) -> str:
    return "" if x is None else f"{x:.9g}"


def _append_line(path: str, line: str) -> None:
    """One row per write call, fsynced, so a killed run cannot leave a
    partial row behind."""
    fd = os.open(path, os.O_WRONLY | os.O_APPEND | os.O_CREAT, 0o644)
    try:
        os.write(fd, (line + "\n").encode("utf-8"))
        os.fsync(fd)
    finally:
        os.close(fd)


@dataclass
class MetricsRow:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float
    bound_value: float | None = None

    def to_line(self) -> str:
        return ",".join([str(self.epoch), _fmt(self.train_loss), _fmt(self.train_acc),
                         _fmt(self.val_loss), _fmt(self.val_acc), _fmt(self.bound_value)])


@dataclass
class RunResult:
    omega: ParamSet
    history: list[MetricsRow]
    final_eval: EvalResult
    out_dir: str


# ---- the run itself ----

def _epoch_bound(cfg: RunConfig, reports, omega: ParamSet) -> float | None:
    """Diagnostic bound on live training state, when kl_hyper is configured.

    Uses the epoch's tasks as the environment sample: per-task empirical
    error = 1 - query accuracy of the full pass, m_i = samples per episode,
    ||omega||^2 as every task's norm proxy, and the epoch's mean sampled rho.
    """
    if cfg.kl_hyper is None:
        return None
    errors, rhos = [], []
    for rep in reports:
        for task in rep.tasks:
            errors.append(min(max(1.0 - task.full.query_accuracy, 0.0), 1.0))
            rhos.extend(s.rho for s in task.subnets)
    m_i = cfg.n_way * (cfg.k_shot + cfg.q_queries)
    norm = omega.norm_sq()
    inputs = BoundInputs(
        tasks=len(errors), sample_counts=[m_i] * len(errors), delta=cfg.bound_delta,
        kl_hyper=cfg.kl_hyper, theta_norms_sq=[norm] * len(errors),
        rho=float(np.mean(rhos)) if rhos else 0.0, empirical_errors=errors)
    return bound(inputs)


def run(cfg: RunConfig, resume_from: str | None = None) -> RunResult:
    """Train per the config; optionally continue from a checkpoint.

    Resuming validates that the checkpoint architecture matches the config
    (strategy switches are fine, shape changes are refused) and continues the
    epoch counter where the checkpoint left off, appending to any existing
    metrics.csv in the output directory.
    """
    cfg.validate()
    os.makedirs(cfg.out_dir, exist_ok=True)
    bank = make_bank(cfg.bank_classes, cfg.input_dim, cfg.spread, cfg.stream("bank"),
                     cfg.bank_split)
    if resume_from is not None:
        omega, start_epoch, _ = load_checkpoint(resume_from)
        if omega.arch != cfg.arch:
            raise ValueError(f"resume: checkpoint arch {omega.arch} does not match "
                             f"config arch {cfg.arch}")
    else:
        omega = init_params(cfg.arch, cfg.stream("init"))
        start_epoch = 0

    with open(os.path.join(cfg.out_dir, "config.txt"), "w", encoding="utf-8") as f:
        f.write(config_to_text(cfg))

    metrics_path = os.path.join(cfg.out_dir, "metrics.csv")
    timings_path = os.path.join(cfg.out_dir, "timings.csv")
    if start_epoch == 0 or not os.path.exists(metrics_path):
        for path in (metrics_path, timings_path):
            if os.path.exists(path):
                os.remove(path)
        _append_line(metrics_path, METRICS_HEADER)
        _append_line(timings_path, "epoch,train_seconds,eval_seconds")

    optimizer = _make_optimizer(cfg)
    mcfg = cfg.meta_config()
    steps_per_epoch = cfg.episodes_per_epoch // cfg.tasks_per_batch
    ep_root = cfg.stream("episode")
    prune_root = cfg.stream("prune")
    val_set = [sample_episode(bank, cfg.n_way, cfg.k_shot, cfg.q_queries, cfg.mode,
                              cfg.stream("eval") + (i,), split="val")
               for i in range(cfg.val_episodes)]

    history: list[MetricsRow] = []
    ev = None
    for epoch in range(start_epoch, cfg.epochs):
        t0 = time.perf_counter()
        losses, accs, reports = [], [], []
        for step in range(steps_per_epoch):
            episodes = [sample_episode(bank, cfg.n_way, cfg.k_shot, cfg.q_queries,
                                       cfg.mode, ep_root + (epoch, step, t))
                        for t in range(cfg.tasks_per_batch)]
            omega, report = meta_step_mgaug(omega, episodes, mcfg,
                                            prune_seed=prune_root + (epoch, step),
                                            optimizer=optimizer)
            reports.append(report)
            losses.extend(task.full.query_loss for task in report.tasks)
            accs.extend(task.full.query_accuracy for task in report.tasks)
        t1 = time.perf_counter()
        ev = evaluate(omega, val_set, cfg.method, cfg.inner_steps, cfg.alpha)
        t2 = time.perf_counter()
        row = MetricsRow(epoch, float(np.mean(losses)), float(np.mean(accs)),
                         ev.mean_loss, ev.mean_accuracy,
                         _epoch_bound(cfg, reports, omega))
        history.append(row)
        _append_line(metrics_path, row.to_line())
        _append_line(timings_path, f"{epoch},{t1 - t0:.3f},{t2 - t1:.3f}")
        save_checkpoint(os.path.join(cfg.out_dir, "checkpoint.mgck"), omega, epoch + 1)

    if ev is None:    # resume target already past cfg.epochs: evaluate anyway
        ev = evaluate(omega, val_set, cfg.method, cfg.inner_steps, cfg.alpha)
    if cfg.probe_at_end:
        strategy = cfg.strategy if cfg.strategy in ("wp", "pp", "cp") else "cp"
        profile = memorization_probe(
            omega, bank, cfg.mode, list(cfg.probe_rhos), strategy,
            n_tasks=cfg.probe_tasks, method=cfg.method, n_way=cfg.n_way,
            k_shot=cfg.k_shot, q_queries=cfg.q_queries, steps=cfg.inner_steps,
            alpha=cfg.alpha, seed=cfg.stream("eval") + (777,),
            mmca_at_init=cfg.mmca_at_init)
        profile_to_csv(profile, os.path.join(cfg.out_dir, "probe.csv"))
    return RunResult(omega, history, ev, cfg.out_dir)


def resume(checkpoint_path: str, cfg: RunConfig) -> RunResult:
    """Continue a run from its checkpoint under a possibly edited config."""
    return run(cfg, resume_from=checkpoint_path)
