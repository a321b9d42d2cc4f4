"""Acceptance suite: one test per criterion, each reporting a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v -s``; the summary lines
also appear at the end of any pytest run that includes this file.
"""
import contextlib
import json
import math
import sys
import time

import numpy as np
import pytest
from fastapi.testclient import TestClient

from oracles import (
    box_iou_bruteforce,
    gradient_relative_error,
    interval_iou_bruteforce,
    random_box_pairs,
    random_grpo_instance,
    random_interval_pairs,
)
from strew.cli import main as cli_main
from strew.clue import ModelClient, PerceptionMockClient, run_task, single_pass_choice
from strew.data import instance_to_record, synth_mirror, write_task_file
from strew.grpo import group_advantages
from strew.judge import ScriptedJudge, normalize_event, oracle_judge
from strew.metrics import evaluate_run, recall_at_ious
from strew.parsing import AnswerGrammar, FormatSpec, format_for, format_interval, format_boxes, render_response
from strew.rewards import (
    combine,
    reward_accuracy,
    reward_format,
    reward_iou_box,
    reward_iou_interval,
    reward_recall,
    reward_tracking,
    score_group,
)
from strew.service import create_app
from strew.toy import IN_DOMAIN, ToyConfig, gen_tasks, train_grpo, train_sft, uniform_random_miou
from strew.types import BoundingBox, ChoiceLetter, GroundTruth, ParseFailure, TaskInstance, TaskKind, TemporalInterval, VideoRef

TI = TemporalInterval
SEEDS = range(5)


@contextlib.contextmanager
def criterion(log, number, title):
    start = time.perf_counter()
    detail = {}
    try:
        yield detail
    except BaseException as exc:
        line = f"criterion {number} FAIL {title} ({time.perf_counter() - start:.1f}s): {exc}".splitlines()[0]
        log.append(line)
        print(line)
        raise
    extra = " ".join(f"{k}={v}" for k, v in detail.items())
    line = f"criterion {number} PASS {title} ({time.perf_counter() - start:.1f}s) {extra}".rstrip()
    log.append(line)
    print(line)


def _reward_example_tables(judge):
    spec = FormatSpec(True, AnswerGrammar.INTERVAL)
    assert reward_format("<think>a</think><answer>1 to 2</answer>", spec) == 1
    assert reward_format("<think>a</think><answer>1 to 2", spec) == 0
    assert reward_format("", spec) == 0
    assert reward_iou_interval(TI(4, 8), TI(4, 8)) == 1.0
    assert abs(reward_iou_interval(TI(2, 6), TI(4, 8)) - 0.33333) <= 1e-5
    assert reward_iou_interval(TI(0, 1), TI(5, 6)) == 0.0
    assert reward_iou_box(BoundingBox(2, 2, 9, 9), BoundingBox(2, 2, 9, 9)) == 1.0
    assert abs(reward_iou_box(BoundingBox(0, 0, 10, 10), BoundingBox(5, 5, 15, 15)) - 0.142857) <= 1e-6
    assert reward_iou_box(BoundingBox(0, 0, 1, 1), BoundingBox(5, 5, 6, 6)) == 0.0
    gt = [BoundingBox(0, 0, 10, 10), BoundingBox(0, 0, 10, 10)]
    assert reward_tracking(list(gt), gt) == 1.0
    assert reward_tracking([gt[0], BoundingBox(50, 50, 60, 60)], gt) == 0.5
    assert reward_tracking(ParseFailure(), gt) == 0.0
    b = ChoiceLetter("B")
    assert (reward_accuracy(ChoiceLetter("B"), b), reward_accuracy(ChoiceLetter("A"), b), reward_accuracy(ParseFailure(), b)) == (1, 0, 0)
    cap = "events: a; b; c; d"
    assert reward_recall(cap, cap, judge) == 1.0
    assert reward_recall("events: a; b; c", cap, judge) == 0.75
    assert reward_recall("events: x", cap, judge) == 0.0
    assert combine(TaskKind.GQA, 1, iou=0.5, accuracy=1).total == 2.5
    assert combine(TaskKind.GROUNDING, 0, iou=0.0).total == 0.0
    assert combine(TaskKind.CAPTIONING, 1, recall=1.0).total == 2.0


def test_reward_math_oracles(acceptance_log):
    with criterion(acceptance_log, 1, "reward-math oracles") as d:
        t0 = time.perf_counter()
        rng = np.random.default_rng(2024)
        worst_iv = max(abs(reward_iou_interval(TI(*p), TI(*g)) - interval_iou_bruteforce(p, g)) for p, g in random_interval_pairs(rng, 1000))
        worst_box = max(abs(reward_iou_box(BoundingBox(*p), BoundingBox(*g)) - box_iou_bruteforce(p, g)) for p, g in random_box_pairs(rng, 1000))
        _reward_example_tables(oracle_judge())
        elapsed = time.perf_counter() - t0
        d.update(max_err_interval=f"{worst_iv:.1e}", max_err_box=f"{worst_box:.1e}")
        assert worst_iv <= 1e-6 and worst_box <= 1e-6
        assert elapsed < 10


def _reward_groups(rng, n):
    """Dyadic rewards so that shifts and the chosen scales are exact in floating point."""
    for i in range(n):
        size = int(rng.integers(2, 17))
        if i % 10 == 0:
            yield [float(rng.integers(0, 4)) / 4] * size
        else:
            yield [float(k) / 64 for k in rng.integers(0, 193, size)]


def test_advantage_suite(acceptance_log):
    with criterion(acceptance_log, 2, "group advantages") as d:
        t0 = time.perf_counter()
        rng = np.random.default_rng(7)
        normal = degenerate = 0
        for rewards in _reward_groups(rng, 10_000):
            adv = group_advantages(rewards)
            a = np.array(adv.advantages)
            if adv.group_std > 1e-8:
                normal += 1
                assert abs(a.mean()) <= 1e-9
                assert abs(a.std() - 1.0) <= 1e-6
            else:
                degenerate += 1
                assert all(v == 0.0 for v in adv.advantages)
            shift = float(rng.integers(-512, 512)) / 64
            assert group_advantages([r + shift for r in rewards]).advantages == adv.advantages
            scale = float(rng.choice([0.25, 0.5, 2.0, 3.0, 5.0, 8.0]))
            scaled = group_advantages([r * scale for r in rewards])
            if adv.group_std > 1e-8 and scaled.group_std > 1e-8:
                assert scaled.advantages == adv.advantages
        elapsed = time.perf_counter() - t0
        d.update(groups=normal + degenerate, degenerate=degenerate)
        assert elapsed < 5


def test_gradient_check(acceptance_log):
    with criterion(acceptance_log, 3, "grpo gradient vs finite differences") as d:
        t0 = time.perf_counter()
        rng = np.random.default_rng(99)
        errors = [gradient_relative_error(*random_grpo_instance(rng, d=int(rng.integers(2, 5)), n_actions=int(rng.integers(2, 7)), n_groups=int(rng.integers(1, 4)), G=int(rng.integers(2, 7)))) for _ in range(100)]
        elapsed = time.perf_counter() - t0
        d.update(max_rel_err=f"{max(errors):.1e}")
        assert max(errors) <= 1e-4
        assert elapsed < 30


def test_toy_grpo_learning(acceptance_log):
    with criterion(acceptance_log, 4, "toy grpo learning") as d:
        cfg = ToyConfig()
        finals, baselines = [], []
        for seed in SEEDS:
            eval_tasks = gen_tasks(seed + 10_000, cfg.eval_size, cfg.kind, IN_DOMAIN, cfg)
            baseline = uniform_random_miou(eval_tasks, cfg.n_start, cfg.n_len, seed=seed)
            t0 = time.perf_counter()
            report = train_grpo(ToyConfig(seed=seed))
            elapsed = time.perf_counter() - t0
            final = report.in_domain["miou"]
            finals.append(final)
            baselines.append(baseline)
            assert elapsed < 120, f"seed {seed} took {elapsed:.0f}s"
            assert final >= 0.6, f"seed {seed} final mIoU {final:.3f}"
            assert final >= 3 * baseline, f"seed {seed} final {final:.3f} < 3x baseline {baseline:.3f}"
        d.update(min_final=f"{min(finals):.3f}", max_baseline=f"{max(baselines):.3f}")


def test_grpo_vs_sft_shift(acceptance_log):
    with criterion(acceptance_log, 5, "grpo vs sft on shifted domain") as d:
        g_curves, s_curves = [], []
        for seed in SEEDS:
            # identical task pool, batch order and eval sets; only the update rule differs
            cfg = ToyConfig(seed=seed, steps=3 * ToyConfig().steps, train_size=256, eval_every=500)
            g_curves.append([c["shifted"] for c in train_grpo(cfg).curve])
            s_curves.append([c["shifted"] for c in train_sft(cfg).curve])
        g, s = np.mean(g_curves, axis=0), np.mean(s_curves, axis=0)
        d.update(grpo_final=f"{g[-1]:.3f}", grpo_peak=f"{g.max():.3f}", sft_final=f"{s[-1]:.3f}", sft_peak=f"{s.max():.3f}")
        assert g[-1] >= s[-1]
        assert s[-1] < s.max()
        assert g[-1] >= g.max() - 0.02


def _caption_groups(rng, n_groups, G=8):
    vocab = [f"person {i} does thing {j}" for i in range(6) for j in range(6)]
    for gi in range(n_groups):
        events = list(rng.choice(vocab, size=int(rng.integers(3, 7)), replace=False))
        gt = f"gt-{gi}"
        cands = []
        for ci in range(G):
            keep = [e for e in events if rng.random() < 0.5]
            cands.append((f"cand-{gi}-{ci}", keep))
        yield gt, events, cands


def _ranking(values):
    order = sorted(set(values))
    return [order.index(v) for v in values]


def test_judge_robustness(acceptance_log):
    with criterion(acceptance_log, 6, "judge robustness") as d:
        rng = np.random.default_rng(11)
        task_video = VideoRef("v", 10.0)
        matched = 0
        for gt, events, cands in _caption_groups(rng, 100):
            # judge B lists paraphrased events in a permuted order but agrees on every verdict
            perm = list(rng.permutation(len(events)))
            para = {e: f"it is observed that {e}" for e in events}
            verdicts_a, verdicts_b = {}, {}
            for text, kept in cands:
                for e in events:
                    verdicts_a[(normalize_event(e), text)] = e in kept
                    verdicts_b[(normalize_event(para[e]), text)] = e in kept
            judge_a = ScriptedJudge({gt: list(events)}, verdicts_a)
            judge_b = ScriptedJudge({gt: [para[events[i]] for i in perm]}, verdicts_b)
            task = TaskInstance("c", task_video, "describe", TaskKind.CAPTIONING, GroundTruth(caption=gt))
            raws = [render_response(text, "t") for text, _ in cands]
            adv_a = group_advantages([b.total for b in score_group(task, raws, judge_a)]).advantages
            adv_b = group_advantages([b.total for b in score_group(task, raws, judge_b)]).advantages
            assert _ranking(adv_a) == _ranking(adv_b)
            matched += 1
        d.update(groups=matched)


def test_metric_identity(acceptance_log, tmp_path):
    with criterion(acceptance_log, 7, "metric harness identity") as d:
        judge = oracle_judge()
        for kind in TaskKind:
            for seed in range(3):
                path = tmp_path / f"{kind.value}-{seed}.jsonl"
                write_task_file(synth_mirror(seed, kind, 50), path)
                r = evaluate_run(path, path, kind, judge)
                assert r.miou in (None, 1.0) and r.accuracy in (None, 1.0) and r.avg_overlap in (None, 1.0)
                assert all(v == 1.0 for v in r.recall_at.values())
                if kind is TaskKind.CAPTIONING:
                    assert r.caption_prf == {"precision": 1.0, "recall": 1.0, "f1": 1.0}
        rng = np.random.default_rng(3)
        for _ in range(1000):
            ious = list(rng.random(int(rng.integers(1, 40))))
            ths = np.sort(rng.random(5))
            vals = [recall_at_ious(ious, t) for t in ths]
            assert all(a >= b for a, b in zip(vals, vals[1:]))
        d.update(kinds=len(TaskKind))


class _Counting(ModelClient):
    def __init__(self, inner):
        self.inner, self.calls = inner, 0

    def answer(self, request):
        self.calls += 1
        return self.inner.answer(request)


def test_clue_perception(acceptance_log):
    with criterion(acceptance_log, 8, "clue perception two-pass") as d:
        tasks = synth_mirror(0, TaskKind.GQA, 200)
        mock = PerceptionMockClient(tasks)
        two_pass = single = 0
        for t in tasks:
            client = _Counting(mock)
            session = run_task(client, t)
            if not session.fallback:
                assert client.calls == 2
            two_pass += session.final_choice() == t.gt.choice
            single += single_pass_choice(mock, t) == t.gt.choice
        d.update(two_pass=two_pass / 200, single_pass=single / 200)
        assert two_pass / 200 >= 0.9
        assert single / 200 <= 0.55


def _cli_runs(tmp, tag):
    tasks = tmp / f"tasks-{tag}.jsonl"
    mcq = tmp / f"mcq-{tag}.jsonl"
    outs = {
        "tasks": tasks,
        "gqa": mcq,
        "grpo": tmp / f"grpo-{tag}.json",
        "grpo_stats": tmp / f"grpo-{tag}.jsonl",
        "sft": tmp / f"sft-{tag}.json",
        "eval": tmp / f"eval-{tag}.json",
        "clue": tmp / f"clue-{tag}.jsonl",
        "score": tmp / f"score-{tag}.json",
    }
    req = tmp / "req.json"
    if not req.exists():
        rec = instance_to_record(synth_mirror(1, "grounding", 1)[0])
        s, e = rec["gt"]["interval"]
        req.write_text(json.dumps({"task": rec, "candidates": [render_response(f"{s} to {e}", "x"), render_response("1 to 2", "x")], "normalize": True}))
    runs = [
        ["--seed", "3", "gen-synth", "--kind", "grounding", "--n", "20", "--out", str(tasks)],
        ["--seed", "3", "gen-synth", "--mix", "gqa=1,mcqa=1", "--n", "20", "--out", str(mcq)],
        ["--seed", "3", "train-toy", "--steps", "60", "--eval-every", "20", "--out", str(outs["grpo"]), "--stats", str(outs["grpo_stats"])],
        ["--seed", "3", "train-toy", "--method", "sft", "--steps", "60", "--train-size", "16", "--out", str(outs["sft"])],
        ["eval", "--pred", str(tasks), "--gt", str(tasks), "--task", "grounding", "--out", str(outs["eval"])],
        ["clue-run", "--tasks", str(mcq), "--mock", "--out", str(outs["clue"])],
        ["score", "--request", str(req), "--out", str(outs["score"])],
    ]
    for argv in runs:
        assert cli_main(argv) == 0, argv
    return outs


def test_cli_determinism(acceptance_log, tmp_path, capsys):
    with criterion(acceptance_log, 9, "cli determinism") as d:
        a = _cli_runs(tmp_path, "a")
        b = _cli_runs(tmp_path, "b")
        capsys.readouterr()
        for key in a:
            assert a[key].read_bytes() == b[key].read_bytes(), key
        d.update(files=len(a))


def _random_candidates(rng, inst):
    kind, gt = inst.kind, inst.gt
    think = None if rng.random() < 0.2 else "reasoning"
    pool = []
    if kind is TaskKind.GROUNDING or kind is TaskKind.GQA:
        iv = gt.interval
        pool += [format_interval(iv), f"{iv.start + rng.random():.2f} to {iv.end + 3 * rng.random():.2f}", "no idea"]
    if kind is TaskKind.TRACKING:
        pool += [format_boxes(gt.boxes), format_boxes([BoundingBox(b.x1 + 2, b.y1, b.x2 + 2, b.y2) for b in gt.boxes]), "[1,2,3]"]
    if kind in (TaskKind.MCQA, TaskKind.QUALITY, TaskKind.GQA):
        letter = gt.choice.letter
        pool += [letter, "A", f"The answer is ({letter})."]
        if kind is TaskKind.GQA:
            pool = [f"{c}, {p}" for c, p in zip(pool[3:], pool[:3])] + pool
    if kind is TaskKind.CAPTIONING:
        events = gt.caption[len("events: "):].split("; ")
        pool += [gt.caption, "events: " + "; ".join(events[:1]), "something else entirely"]
    out = []
    for _ in range(int(rng.integers(1, 7))):
        body = pool[int(rng.integers(len(pool)))]
        r = rng.random()
        out.append(render_response(body, think) if r < 0.8 else (body if r < 0.9 else f"<answer>{body}"))
    return out


def test_service_equivalence(acceptance_log):
    with criterion(acceptance_log, 10, "service equivalence") as d:
        judge = oracle_judge()
        client = TestClient(create_app(judge))
        rng = np.random.default_rng(5)
        kinds = list(TaskKind)
        for i in range(100):
            kind = kinds[i % len(kinds)]
            inst = synth_mirror(1000 + i, kind, 1)[0]
            cands = _random_candidates(rng, inst)
            normalize = len(cands) >= 2 and bool(rng.random() < 0.7)
            think = bool(rng.random() < 0.8)
            body = {"task": instance_to_record(inst), "candidates": cands, "normalize": normalize, "requires_think": think}
            resp = client.post("/score", json=body)
            assert resp.status_code == 200, resp.text
            got = resp.json()
            direct = score_group(inst, cands, judge, format_for(kind, think))
            assert got["breakdowns"] == [b.to_dict() for b in direct]
            expected_adv = group_advantages([b.total for b in direct]).advantages if normalize else None
            assert got["advantages"] == expected_adv
        d.update(requests=100)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v", "-s"]))
