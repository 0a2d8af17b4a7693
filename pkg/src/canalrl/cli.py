"""Command-line entry points: demo, train, eval, report.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import checkpoint
from .config import RunConfig, load_config
from .evaluate import evaluate
from .expert import OracleFailure, generate_demonstrations, read_demonstrations, write_demonstrations
from .env import OBS_DIM, ACTION_DIM
from .metrics import compare_reports, format_comparison, read_report, write_report
from .sac import TrainingDiverged, expert_buffer_from_demos, format_reward_log, make_agent, train

log = logging.getLogger("canalrl")


class CommandError(Exception):
    """Runtime failure reported to the user with exit code 1."""


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _non_negative_int(text):
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {v}")
    return v


def _key_value(text):
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    k, v = text.split("=", 1)
    return k.strip(), v.strip()


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key-value config file")
    common.add_argument("--seed", type=int, help="overrides the config seed")
    common.add_argument("--set", dest="overrides", action="append", type=_key_value, default=[],
                        metavar="KEY=VALUE", help="override one config key (repeatable)")
    common.add_argument("--verbose", "-v", action="store_true")

    p = argparse.ArgumentParser(prog="canalrl", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("demo", parents=[common], help="generate scripted demonstrations")
    d.add_argument("--episodes", type=_positive_int, help="number of demonstration episodes")
    d.add_argument("--out", required=True)

    t = sub.add_parser("train", parents=[common], help="pretrain on demonstrations, then train")
    t.add_argument("--demos", required=True)
    t.add_argument("--out", required=True, help="checkpoint path")
    t.add_argument("--episodes", type=_non_negative_int, help="overrides train.episodes")
    t.add_argument("--reward-log", help="defaults to <log_dir>/reward_log.tsv")

    e = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint or the scripted oracle")
    src = e.add_mutually_exclusive_group(required=True)
    src.add_argument("--checkpoint")
    src.add_argument("--oracle", action="store_true", help="evaluate the scripted expert instead")
    e.add_argument("--episodes", type=_positive_int)
    e.add_argument("--mode", choices=("deterministic", "stochastic"), default="deterministic")
    e.add_argument("--workers", type=_positive_int, default=1)
    e.add_argument("--label")
    e.add_argument("--out", required=True, help="report path; force traces go to <out>.forces.tsv")

    r = sub.add_parser("report", parents=[common], help="merge evaluation reports into one table")
    r.add_argument("--runs", nargs="+", required=True)
    r.add_argument("--out", required=True)
    return p


def _config(args) -> RunConfig:
    overrides = dict(args.overrides)
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    try:
        return load_config(args.config, overrides)
    except (KeyError, ValueError, OSError) as exc:
        raise CommandError(f"config: {exc}") from None


def cmd_demo(args, cfg: RunConfig) -> int:
    n = args.episodes or cfg.train.demo_episodes
    try:
        demos = generate_demonstrations(cfg.anatomy, cfg.expert, n, cfg.seed, cfg.reward)
    except OracleFailure as exc:
        raise CommandError(str(exc)) from None
    write_demonstrations(demos, args.out)
    print(f"oracle success rate {demos.success_rate:.3f}; {demos.n_transitions} transitions -> {args.out}")
    return 0


def cmd_train(args, cfg: RunConfig) -> int:
    demos = read_demonstrations(args.demos)
    if demos.anatomy_hash != cfg.anatomy.config_hash():
        raise CommandError(f"demonstrations were recorded on anatomy {demos.anatomy_hash}, "
                           f"config describes {cfg.anatomy.config_hash()}; refusing to train")
    episodes = cfg.train.episodes if args.episodes is None else args.episodes
    expert = expert_buffer_from_demos(demos, cfg.train.buffer_capacity)
    ss = np.random.SeedSequence(cfg.seed)
    init_seed, train_seed = ss.spawn(2)
    nets = make_agent(np.random.default_rng(init_seed), hidden=cfg.sac.hidden_sizes,
                      learning_rate=cfg.sac.learning_rate)
    reward_log = Path(args.reward_log or Path(cfg.paths.log_dir) / "reward_log.tsv")
    reward_log.parent.mkdir(parents=True, exist_ok=True)

    def progress(entry):
        if args.verbose and entry.index % 50 == 0:
            log.info("episode %d return %.1f success %d steps %d", entry.index, entry.cumulative_reward,
                     entry.success, entry.steps)

    try:
        result = train(cfg.anatomy, nets, expert, cfg.sac, episodes,
                       int(train_seed.generate_state(1)[0]), cfg.reward, cfg.train.buffer_capacity, progress)
    except TrainingDiverged as exc:
        partial = args.out + ".partial"
        if exc.nets is not None:
            checkpoint.save_checkpoint(exc.nets, partial, cfg.config_hash())
        raise CommandError(f"{exc}; partial checkpoint written to {partial}") from None
    checkpoint.save_checkpoint(result.nets, args.out, cfg.config_hash())
    reward_log.write_text(format_reward_log(result.episodes))
    rewards = [e.cumulative_reward for e in result.episodes]
    tail = float(np.mean(rewards[-100:])) if rewards else float("nan")
    print(f"{len(rewards)} episodes, {result.nets.update_count} updates; "
          f"final 100-episode mean reward {tail:.2f}")
    print(f"checkpoint -> {args.out}; reward log -> {reward_log}")
    return 0


def cmd_eval(args, cfg: RunConfig) -> int:
    nets = None
    if args.checkpoint:
        try:
            nets, _ = checkpoint.load_checkpoint(args.checkpoint, cfg.config_hash())
        except (OSError, ValueError) as exc:
            raise CommandError(f"cannot load checkpoint: {exc}") from None
        if nets.obs_dim != OBS_DIM or nets.action_dim != ACTION_DIM:
            raise CommandError(f"checkpoint expects obs/action dims {nets.obs_dim}/{nets.action_dim}, "
                               f"environment provides {OBS_DIM}/{ACTION_DIM}")
    n = args.episodes or cfg.train.eval_episodes
    result = evaluate(cfg.anatomy, n, cfg.seed, nets, args.mode, cfg.expert, cfg.reward,
                      workers=args.workers, label=args.label)
    write_report(result.report, args.out)
    result.write_force_traces(args.out + ".forces.tsv")
    summary = result.report.summary()
    print(f"{result.report.label}: success rate {result.report.success_rate:.3f} over {n} episodes")
    for m, s in summary.items():
        print(f"  {m:6s} median {s.median:.4f}  sd {s.sd:.4f}")
    return 0


def cmd_report(args, cfg: RunConfig) -> int:
    try:
        reports = [read_report(p) for p in args.runs]
    except (OSError, ValueError) as exc:
        raise CommandError(str(exc)) from None
    text = format_comparison(compare_reports(reports))
    Path(args.out).write_text(text)
    print(text, end="")
    return 0


COMMANDS = {"demo": cmd_demo, "train": cmd_train, "eval": cmd_eval, "report": cmd_report}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        return COMMANDS[args.command](args, cfg)
    except CommandError as exc:
        print(f"canalrl {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
