"""JSONL task files and synthetic mirrors of the training corpora.

Every record shares one envelope::

    {"id": str, "kind": str, "question": str,
     "video": {"uri": str, "duration": float, "base_fps": float, "base_resolution": [w, h]},
     "gt": {...}, "options": [str, ...]}        # options only for choice kinds

with ``gt`` depending on kind:

    grounding   {"interval": [s, e]}
    tracking    {"boxes": [[x1, y1, x2, y2], ...]}      # one per queried frame
    mcqa        {"choice": "B"}
    gqa         {"choice": "B", "interval": [s, e]}
    captioning  {"caption": "events: ...; ..."}
    quality     {"label": "A"}
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import SchemaError
from .types import (
    LETTERS,
    BoundingBox,
    ChoiceLetter,
    GroundTruth,
    TaskInstance,
    TaskKind,
    TemporalInterval,
    VideoRef,
)

# sample counts of the grounding / tracking / grounding-QA training corpora
REFERENCE_MIX = {TaskKind.GROUNDING: 5338, TaskKind.TRACKING: 9335, TaskKind.GQA: 3358}


def _interval(v) -> TemporalInterval:
    if not isinstance(v, (list, tuple)) or len(v) != 2:
        raise ValueError("interval must be [start, end]")
    return TemporalInterval(float(v[0]), float(v[1]))


def _box(v) -> BoundingBox:
    if not isinstance(v, (list, tuple)) or len(v) != 4:
        raise ValueError("box must be [x1, y1, x2, y2]")
    return BoundingBox(*(float(x) for x in v))


def gt_from_json(kind: TaskKind, gt: dict) -> GroundTruth:
    if not isinstance(gt, dict):
        raise ValueError("gt must be an object")
    allowed = {
        TaskKind.GROUNDING: {"interval"},
        TaskKind.TRACKING: {"boxes"},
        TaskKind.MCQA: {"choice"},
        TaskKind.GQA: {"choice", "interval"},
        TaskKind.CAPTIONING: {"caption"},
        TaskKind.QUALITY: {"label"},
    }[kind]
    if set(gt) != allowed:
        raise ValueError(f"gt for {kind.value} must have keys {sorted(allowed)}, got {sorted(gt)}")
    if kind is TaskKind.GROUNDING:
        return GroundTruth(interval=_interval(gt["interval"]))
    if kind is TaskKind.TRACKING:
        if not isinstance(gt["boxes"], list) or not gt["boxes"]:
            raise ValueError("boxes must be a non-empty list")
        return GroundTruth(boxes=tuple(_box(b) for b in gt["boxes"]))
    if kind is TaskKind.MCQA:
        return GroundTruth(choice=ChoiceLetter(gt["choice"]))
    if kind is TaskKind.GQA:
        return GroundTruth(choice=ChoiceLetter(gt["choice"]), interval=_interval(gt["interval"]))
    if kind is TaskKind.QUALITY:
        return GroundTruth(choice=ChoiceLetter(gt["label"]))
    if not isinstance(gt["caption"], str) or not gt["caption"].strip():
        raise ValueError("caption must be a non-empty string")
    return GroundTruth(caption=gt["caption"])


def gt_to_json(kind: TaskKind, gt: GroundTruth) -> dict:
    if kind is TaskKind.GROUNDING:
        return {"interval": gt.interval.to_list()}
    if kind is TaskKind.TRACKING:
        return {"boxes": [b.to_list() for b in gt.boxes]}
    if kind is TaskKind.MCQA:
        return {"choice": gt.choice.letter}
    if kind is TaskKind.GQA:
        return {"choice": gt.choice.letter, "interval": gt.interval.to_list()}
    if kind is TaskKind.QUALITY:
        return {"label": gt.choice.letter}
    return {"caption": gt.caption}


_ENVELOPE = {"id", "kind", "question", "video", "gt"}


def instance_from_record(rec: dict, kind: Optional[TaskKind] = None) -> TaskInstance:
    """Validate one decoded record; raises ValueError/TypeError with a reason."""
    if not isinstance(rec, dict):
        raise ValueError("record must be a JSON object")
    missing = _ENVELOPE - set(rec)
    if missing:
        raise ValueError(f"missing fields {sorted(missing)}")
    extra = set(rec) - _ENVELOPE - {"options"}
    if extra:
        raise ValueError(f"unknown fields {sorted(extra)}")
    rec_kind = TaskKind.parse(rec["kind"])
    if kind is not None and rec_kind is not TaskKind.parse(kind):
        raise ValueError(f"record kind {rec_kind.value} does not match expected {TaskKind.parse(kind).value}")
    if not isinstance(rec["id"], str) or not rec["id"]:
        raise ValueError("id must be a non-empty string")
    if not isinstance(rec["question"], str):
        raise ValueError("question must be a string")
    v = rec["video"]
    if not isinstance(v, dict) or not {"uri", "duration"} <= set(v):
        raise ValueError("video needs uri and duration")
    res = v.get("base_resolution", [320, 240])
    if not isinstance(res, (list, tuple)) or len(res) != 2:
        raise ValueError("base_resolution must be [width, height]")
    video = VideoRef(
        str(v["uri"]),
        float(v["duration"]),
        float(v.get("base_fps", 1.0)),
        (int(res[0]), int(res[1])),
    )
    options = rec.get("options")
    if options is not None:
        if not isinstance(options, list) or not all(isinstance(o, str) for o in options):
            raise ValueError("options must be a list of strings")
        options = tuple(options)
    return TaskInstance(rec["id"], video, rec["question"], rec_kind, gt_from_json(rec_kind, rec["gt"]), options)


def instance_to_record(inst: TaskInstance) -> dict:
    rec = {
        "id": inst.id,
        "kind": inst.kind.value,
        "question": inst.question,
        "video": {
            "uri": inst.video.uri,
            "duration": inst.video.duration,
            "base_fps": inst.video.base_fps,
            "base_resolution": list(inst.video.base_resolution),
        },
        "gt": gt_to_json(inst.kind, inst.gt),
    }
    if inst.options is not None:
        rec["options"] = list(inst.options)
    return rec


def dumps(inst: TaskInstance) -> str:
    return json.dumps(instance_to_record(inst), sort_keys=True, ensure_ascii=False)


def _records(path):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(lineno, f"invalid JSON: {exc.msg}") from exc


def load_task_file(path, kind=None) -> list:
    out = []
    for lineno, rec in _records(path):
        try:
            out.append(instance_from_record(rec, kind))
        except (ValueError, TypeError, KeyError) as exc:
            raise SchemaError(lineno, str(exc)) from exc
    return out


def load_prediction_file(path, kind=None) -> list:
    """Rows are ``{"id", "response"}`` or full task records (``instance`` key in the result)."""
    out = []
    for lineno, rec in _records(path):
        if not isinstance(rec, dict) or not isinstance(rec.get("id"), str):
            raise SchemaError(lineno, "prediction needs a string id")
        if "response" in rec:
            if not isinstance(rec["response"], str):
                raise SchemaError(lineno, "response must be a string")
            out.append({"id": rec["id"], "response": rec["response"]})
            continue
        try:
            out.append({"id": rec["id"], "instance": instance_from_record(rec, kind)})
        except (ValueError, TypeError, KeyError) as exc:
            raise SchemaError(lineno, str(exc)) from exc
    return out


def write_task_file(instances, path) -> None:
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for inst in instances:
            fh.write(dumps(inst) + "\n")


def mix_counts(weights, n: int) -> list:
    """Split ``n`` proportionally to ``weights`` with largest-remainder rounding."""
    weights = [float(w) for w in weights]
    if n < 0 or not weights or any(w < 0 for w in weights) or sum(weights) <= 0:
        raise ValueError("need non-negative weights with a positive sum and n >= 0")
    total = sum(weights)
    quotas = [n * w / total for w in weights]
    counts = [int(q) for q in quotas]
    order = sorted(range(len(weights)), key=lambda i: (-(quotas[i] - counts[i]), i))
    for i in order[: n - sum(counts)]:
        counts[i] += 1
    return counts


_ACTORS = ["a man", "a woman", "a child", "a dog", "a cat", "the chef", "a player", "the driver"]
_ACTIONS = ["opens the door", "picks up a cup", "sits on the sofa", "runs across the room",
            "turns on the light", "waves at the camera", "closes the laptop", "pours water",
            "throws a ball", "reads a book", "puts down the bag", "laughs loudly"]
_QUALITY = ["bad", "poor", "fair", "good", "excellent"]


def _round(x) -> float:
    return round(float(x), 3)


def _synth_one(rng, kind: TaskKind, i: int) -> TaskInstance:
    duration = _round(rng.uniform(20, 90))
    video = VideoRef(f"synthetic://{kind.value}/{i:05d}.mp4", duration, 1.0, (320, 240))
    actor = _ACTORS[rng.integers(len(_ACTORS))]
    action = _ACTIONS[rng.integers(len(_ACTIONS))]
    tid = f"{kind.value}-{i:05d}"

    def interval():
        length = rng.uniform(0.08, 0.35) * duration
        start = rng.uniform(0, duration - length)
        return TemporalInterval(_round(start), min(duration, _round(start + length)))

    if kind is TaskKind.GROUNDING:
        return TaskInstance(tid, video, f"When does {actor} {action.split(' ', 1)[0]}?", kind, GroundTruth(interval=interval()))
    if kind is TaskKind.TRACKING:
        n_frames = int(rng.integers(2, 5))
        w, h = rng.uniform(30, 90), rng.uniform(30, 90)
        x, y = rng.uniform(0, 320 - 2 * w), rng.uniform(0, 240 - 2 * h)
        boxes = []
        for _ in range(n_frames):
            boxes.append(BoundingBox(_round(x), _round(y), _round(x + w), _round(y + h)))
            x = min(320 - w, max(0.0, x + rng.normal(0, 8)))
            y = min(240 - h, max(0.0, y + rng.normal(0, 8)))
        return TaskInstance(tid, video, f"Track {actor} across {n_frames} frames.", kind, GroundTruth(boxes=tuple(boxes)))
    if kind in (TaskKind.MCQA, TaskKind.GQA):
        n_opt = int(rng.integers(4, 6))
        picks = rng.choice(len(_ACTIONS), size=n_opt, replace=False)
        options = tuple(_ACTIONS[j] for j in picks)
        choice = ChoiceLetter(LETTERS[int(rng.integers(n_opt))])
        q = f"What does {actor} do after entering the scene?"
        gt = GroundTruth(choice=choice, interval=interval() if kind is TaskKind.GQA else None)
        return TaskInstance(tid, video, q, kind, gt, options)
    if kind is TaskKind.QUALITY:
        choice = ChoiceLetter(LETTERS[int(rng.integers(len(_QUALITY)))])
        return TaskInstance(tid, video, "Rate the visual quality of the video.", kind, GroundTruth(choice=choice), tuple(_QUALITY))
    n_ev = int(rng.integers(2, 6))
    events = [f"{_ACTORS[rng.integers(len(_ACTORS))]} {_ACTIONS[a]}" for a in rng.choice(len(_ACTIONS), n_ev, replace=False)]
    caption = "events: " + "; ".join(events)
    return TaskInstance(tid, video, "Describe the video in detail.", kind, GroundTruth(caption=caption))


def synth_mirror(seed: int, kind, n: int) -> list:
    if n < 1:
        raise ValueError("n must be at least 1")
    kind = TaskKind.parse(kind)
    rng = np.random.default_rng([seed, list(TaskKind).index(kind)])
    return [_synth_one(rng, kind, i) for i in range(n)]


def synth_mix(seed: int, mix: dict, n: int) -> list:
    """Synthetic multi-task corpus whose per-kind counts follow ``mix`` proportions."""
    kinds = [TaskKind.parse(k) for k in mix]
    counts = mix_counts(list(mix.values()), n)
    out = []
    for kind, count in zip(kinds, counts):
        if count:
            out.extend(synth_mirror(seed, kind, count))
    return out
