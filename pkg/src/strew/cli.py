"""Command-line entry point: score, eval, train-toy, gen-synth, clue-run, serve.

Exit codes: 0 success, 1 usage error, 2 runtime error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

from . import __version__

log = logging.getLogger("strew")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def _emit(text: str, out):
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="strew", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--log-level", default="WARNING")
    p.add_argument("--version", action="version", version=f"strew {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    s = sub.add_parser("score", help="score candidate responses for one task")
    s.add_argument("--request", required=True, help="ScoreRequest JSON file")
    s.add_argument("--out")

    s = sub.add_parser("eval", help="evaluate a prediction file against ground truth")
    s.add_argument("--pred", required=True)
    s.add_argument("--gt", required=True)
    s.add_argument("--task", required=True, help="task kind, e.g. grounding, tracking, mcqa, gqa, captioning, quality")
    s.add_argument("--out")

    s = sub.add_parser("train-toy", help="train the toy policy with GRPO or SFT")
    s.add_argument("--method", choices=["grpo", "sft"], default="grpo")
    s.add_argument("--steps", type=int)
    s.add_argument("--train-size", type=int)
    s.add_argument("--eval-every", type=int)
    s.add_argument("--out", help="final report JSON (default: stdout)")
    s.add_argument("--stats", help="per-step stats as JSON lines")

    s = sub.add_parser("gen-synth", help="write a synthetic task file")
    s.add_argument("--kind", help="single task kind")
    s.add_argument("--mix", help="kind=weight list, e.g. grounding=5338,tracking=9335,gqa=3358")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--out", required=True)

    s = sub.add_parser("clue-run", help="two-pass clue-driven inference over a task file")
    s.add_argument("--tasks", required=True)
    src = s.add_mutually_exclusive_group(required=True)
    src.add_argument("--script", help="scripted client JSON")
    src.add_argument("--endpoint", help="model HTTP endpoint")
    src.add_argument("--mock", action="store_true", help="built-in perception mock")
    s.add_argument("--delta-res", type=float)
    s.add_argument("--delta-fps", type=float)
    s.add_argument("--out", help="sessions as JSON lines")

    s = sub.add_parser("serve", help="run the reward-scoring HTTP service")
    s.add_argument("--host", default="127.0.0.1")
    s.add_argument("--port", type=int, default=8000)
    return p


def _cmd_score(args, cfg):
    from .config import make_judge
    from .service import handle_score

    with open(args.request, encoding="utf-8") as fh:
        body = json.load(fh)
    _emit(_dump(handle_score(body, make_judge(cfg), cfg.toy.grpo.epsilon_sigma)), args.out)


def _cmd_eval(args, cfg):
    from .config import make_judge
    from .metrics import evaluate_run
    from .types import TaskKind

    kind = TaskKind.parse(args.task)
    judge = make_judge(cfg) if kind is TaskKind.CAPTIONING else None
    _emit(_dump(evaluate_run(args.pred, args.gt, kind, judge).to_dict()), args.out)


def _cmd_train(args, cfg):
    from .toy import train_grpo, train_sft

    toy = cfg.toy
    if args.steps is not None:
        toy.steps = args.steps
    if args.train_size is not None:
        toy.train_size = args.train_size
    if args.eval_every is not None:
        toy.eval_every = args.eval_every
    stats_fh = open(args.stats, "w", encoding="utf-8") if args.stats else None

    def on_stats(rec):
        if stats_fh:
            stats_fh.write(json.dumps(rec, sort_keys=True) + "\n")

    try:
        train = train_grpo if args.method == "grpo" else train_sft
        report = train(toy, on_stats)
    finally:
        if stats_fh:
            stats_fh.close()
    _emit(_dump(report.to_dict()), args.out)


def _parse_mix(text: str) -> dict:
    mix = {}
    for part in text.split(","):
        name, _, weight = part.partition("=")
        if not weight:
            raise UsageError(f"--mix entries must look like kind=weight, got {part!r}")
        mix[name.strip()] = float(weight)
    return mix


def _cmd_gen(args, cfg):
    from .data import synth_mirror, synth_mix, write_task_file

    seed = cfg.toy.seed
    if bool(args.kind) == bool(args.mix):
        raise UsageError("gen-synth needs exactly one of --kind or --mix")
    if args.n < 1:
        raise UsageError("--n must be at least 1")
    tasks = synth_mirror(seed, args.kind, args.n) if args.kind else synth_mix(seed, _parse_mix(args.mix), args.n)
    write_task_file(tasks, args.out)


def _cmd_clue(args, cfg):
    from .clue import HttpModelClient, PerceptionMockClient, ScriptedClient, run_batch
    from .data import load_task_file

    tasks = load_task_file(args.tasks)
    clue = cfg.clue
    if args.delta_res is not None:
        clue.delta_res = args.delta_res
    if args.delta_fps is not None:
        clue.delta_fps = args.delta_fps
    if args.script:
        client = ScriptedClient.from_file(args.script)
    elif args.endpoint:
        client = HttpModelClient(args.endpoint)
    else:
        client = PerceptionMockClient(tasks)
    sessions = run_batch(client, tasks, clue)
    lines = "".join(json.dumps({"id": t.id, **s.to_dict()}, sort_keys=True) + "\n" for t, s in zip(tasks, sessions))
    if args.out:
        _emit(lines, args.out)
    scored = [(t, s) for t, s in zip(tasks, sessions) if t.gt.choice is not None]
    summary = {"n": len(sessions), "fallbacks": sum(s.fallback for s in sessions)}
    if scored:
        summary["final_accuracy"] = sum(s.final_choice() == t.gt.choice for t, s in scored) / len(scored)
    sys.stdout.write(_dump(summary))


def _cmd_serve(args, cfg):
    import uvicorn

    from .config import make_judge
    from .service import create_app

    uvicorn.run(create_app(make_judge(cfg), cfg.toy.grpo.epsilon_sigma), host=args.host, port=args.port)


_COMMANDS = {
    "score": _cmd_score,
    "eval": _cmd_eval,
    "train-toy": _cmd_train,
    "gen-synth": _cmd_gen,
    "clue-run": _cmd_clue,
    "serve": _cmd_serve,
}


def main(argv=None) -> int:
    from .config import load_config

    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        sys.stderr.write(f"{exc}\n")
        return 1
    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.toy.seed = args.seed
            cfg.toy.grpo.seed = args.seed
        _COMMANDS[args.command](args, cfg)
    except UsageError as exc:
        sys.stderr.write(f"[{args.command}] usage: {exc}\n")
        return 1
    except Exception as exc:
        sys.stderr.write(f"[{args.command}] {type(exc).__name__}: {exc}\n")
        log.debug("traceback", exc_info=True)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
