"""Command line entry point.

Subcommands:

    train   train a run from a config file
    resume  continue a run from a checkpoint (config may switch strategy)
    probe   hat-profile memorization probe of a checkpoint
    bound   evaluate the generalization bound from a config of inputs
    eval    accuracy of a checkpoint on fresh episodes

Config handling for every subcommand: keys from --config, overridden by
repeated --set key=value, overridden by the dedicated flags (--seed, --out).
"""

from __future__ import annotations

import argparse
import os
import sys

from .harness import RunConfig, make_config, resume, run
from .meta import evaluate
from .model import load_checkpoint
from .pacbayes import BoundInputs, bound_terms
from .probes import memorization_probe, profile_to_csv
from .tasks import make_bank, sample_episode


def _add_config_flags(p: argparse.ArgumentParser, config_required: bool = False):
    p.add_argument("--config", required=config_required, help="flat key = value config file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override one config key (repeatable)")
    p.add_argument("--seed", type=int, default=None, help="override the master seed")
    p.add_argument("--out", default=None, help="override the output directory")


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mgaug",
                                 description="two-loop meta-learning with augmented meta-gradients")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train per config")
    _add_config_flags(p)

    p = sub.add_parser("resume", help="continue from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    _add_config_flags(p)

    p = sub.add_parser("probe", help="memorization probe of a checkpoint")
    p.add_argument("--checkpoint", required=True)
    _add_config_flags(p)
    p.add_argument("--split", default="train", choices=("train", "val", "test"))
    p.add_argument("--csv", default=None, help="probe CSV path (default <out_dir>/probe.csv)")

    p = sub.add_parser("bound", help="print the three bound terms and the total")
    p.add_argument("--config", required=True, help="flat key = value file of bound inputs")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")

    p = sub.add_parser("eval", help="evaluate a checkpoint on fresh episodes")
    p.add_argument("--checkpoint", required=True)
    _add_config_flags(p)
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    p.add_argument("--episodes", type=int, default=600)
    return ap


_BOUND_KEYS = {"tasks": int, "delta": float, "kl_hyper": float, "rho": float}
_BOUND_LIST_KEYS = {"sample_counts": int, "theta_norms_sq": float, "empirical_errors": float}


def _parse_bound_config(path: str, overrides: list[str]) -> BoundInputs:
    values: dict = {}
    lines = open(path, "r", encoding="utf-8").read().splitlines()
    lines += list(overrides)
    for line in lines:
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, raw = (s.strip() for s in line.split("=", 1))
        if key in _BOUND_KEYS:
            values[key] = _BOUND_KEYS[key](raw)
        elif key in _BOUND_LIST_KEYS:
            conv = _BOUND_LIST_KEYS[key]
            values[key] = [conv(v) for v in raw.split(",") if v.strip()]
        else:
            raise ValueError(f"bound config: unknown key {key!r}")
    missing = ({"tasks", "sample_counts", "delta", "kl_hyper", "rho",
                "theta_norms_sq", "empirical_errors"} - values.keys())
    if missing:
        raise ValueError(f"bound config: missing keys {sorted(missing)} "
                         "(kl_hyper has no default and must be supplied)")
    return BoundInputs(**values)


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "train":
            cfg = make_config(args.config, args.set, args.seed, args.out)
            result = run(cfg)
            print(f"trained {cfg.epochs} epochs -> {cfg.out_dir}")
            print(f"final val accuracy {result.final_eval.mean_accuracy:.4f} "
                  f"+- {result.final_eval.stderr:.4f}")
        elif args.command == "resume":
            cfg = make_config(args.config, args.set, args.seed, args.out)
            result = resume(args.checkpoint, cfg)
            print(f"resumed to epoch {cfg.epochs} -> {cfg.out_dir}")
            print(f"final val accuracy {result.final_eval.mean_accuracy:.4f} "
                  f"+- {result.final_eval.stderr:.4f}")
        elif args.command == "probe":
            cfg = make_config(args.config, args.set, args.seed, args.out)
            omega, _, _ = load_checkpoint(args.checkpoint)
            bank = make_bank(cfg.bank_classes, cfg.input_dim, cfg.spread,
                             cfg.stream("bank"), cfg.bank_split)
            strategy = cfg.strategy if cfg.strategy in ("wp", "pp", "cp") else "cp"
            profile = memorization_probe(
                omega, bank, cfg.mode, list(cfg.probe_rhos), strategy,
                n_tasks=cfg.probe_tasks, method=cfg.method, n_way=cfg.n_way,
                k_shot=cfg.k_shot, q_queries=cfg.q_queries, steps=cfg.inner_steps,
                alpha=cfg.alpha, seed=cfg.stream("eval") + (777,),
                split=args.split, mmca_at_init=cfg.mmca_at_init)
            csv_path = args.csv or os.path.join(cfg.out_dir, "probe.csv")
            os.makedirs(cfg.out_dir, exist_ok=True)
            profile_to_csv(profile, csv_path)
            print(f"probe over {cfg.probe_tasks} tasks -> {csv_path}")
            print(f"step-0 accuracy {profile.baseline[0]:.4f} unpruned, "
                  + ", ".join(f"{profile.profiles[r][0]:.4f} at rho={r:g}"
                              for r in profile.rhos))
        elif args.command == "bound":
            terms = bound_terms(_parse_bound_config(args.config, args.set))
            print(f"empirical term    {terms.empirical:.9g}")
            print(f"environment term  {terms.environment:.9g}")
            print(f"task term         {terms.task:.9g}")
            print(f"bound             {terms.total:.9g}")
        elif args.command == "eval":
            cfg = make_config(args.config, args.set, args.seed, args.out)
            omega, _, _ = load_checkpoint(args.checkpoint)
            bank = make_bank(cfg.bank_classes, cfg.input_dim, cfg.spread,
                             cfg.stream("bank"), cfg.bank_split)
            episodes = [sample_episode(bank, cfg.n_way, cfg.k_shot, cfg.q_queries,
                                       cfg.mode, cfg.stream("eval") + (500_000, i),
                                       split=args.split)
                        for i in range(args.episodes)]
            ev = evaluate(omega, episodes, cfg.method, cfg.inner_steps, cfg.alpha)
            print(f"{args.split} accuracy {ev.mean_accuracy:.4f} +- {ev.stderr:.4f} "
                  f"over {ev.n_episodes} episodes")
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
