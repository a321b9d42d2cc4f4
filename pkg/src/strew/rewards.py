"""Rule-based rewards (format, IoU, accuracy, event recall) and per-task combiners."""
from __future__ import annotations

from typing import Optional

from .errors import MissingComponent
from .judge import Judge, event_recall
from .parsing import FormatSpec, extract_blocks, format_for, parse_choice, parse_interval, parse_response
from .types import (
    BoundingBox,
    Caption,
    ChoiceLetter,
    ParseFailure,
    RewardBreakdown,
    TaskInstance,
    TaskKind,
    TemporalInterval,
)


def reward_format(raw: str, spec: FormatSpec) -> int:
    return int(extract_blocks(raw, spec).format_ok)


def _degenerate(same: bool) -> float:
    return 1.0 if same else 0.0


def reward_iou_interval(pred, gt: TemporalInterval) -> float:
    if not isinstance(pred, TemporalInterval):
        return 0.0
    if pred.length == 0 and gt.length == 0:
        return _degenerate(pred == gt)
    inter = max(0.0, min(pred.end, gt.end) - max(pred.start, gt.start))
    union = pred.length + gt.length - inter
    if union <= 0:
        return 0.0
    return inter / union


def reward_iou_box(pred: BoundingBox, gt: BoundingBox) -> float:
    if not isinstance(pred, BoundingBox):
        return 0.0
    if pred.area == 0 and gt.area == 0:
        return _degenerate(pred == gt)
    iw = max(0.0, min(pred.x2, gt.x2) - max(pred.x1, gt.x1))
    ih = max(0.0, min(pred.y2, gt.y2) - max(pred.y1, gt.y1))
    inter = iw * ih
    union = pred.area + gt.area - inter
    if union <= 0:
        return 0.0
    return inter / union


def reward_tracking(pred, gt) -> float:
    """Unweighted per-frame mean box IoU; a parse failure or wrong length scores 0."""
    if not gt:
        raise ValueError("tracking ground truth must be non-empty")
    if isinstance(pred, ParseFailure) or pred is None or len(pred) != len(gt):
        return 0.0
    return sum(reward_iou_box(p, g) for p, g in zip(pred, gt)) / len(gt)


def reward_accuracy(pred, gt: ChoiceLetter) -> int:
    return int(isinstance(pred, ChoiceLetter) and pred == gt)


def reward_recall(pred_caption: str, gt_caption: str, judge: Judge) -> float:
    return event_recall(pred_caption, gt_caption, judge).recall


_REQUIRED = {
    TaskKind.GROUNDING: ("iou",),
    TaskKind.TRACKING: ("iou",),
    TaskKind.MCQA: ("accuracy",),
    TaskKind.QUALITY: ("accuracy",),
    TaskKind.GQA: ("iou", "accuracy"),
    TaskKind.CAPTIONING: ("recall",),
}


def combine(
    task: TaskKind,
    format: int,
    iou: Optional[float] = None,
    accuracy: Optional[int] = None,
    recall: Optional[float] = None,
) -> RewardBreakdown:
    """Sum format plus the components the task's combination uses; others are dropped."""
    task = TaskKind.parse(task)
    given = {"iou": iou, "accuracy": accuracy, "recall": recall}
    if format is None:
        raise MissingComponent("format reward is required")
    used = {}
    for name in _REQUIRED[task]:
        if given[name] is None:
            raise MissingComponent(f"{task.value} needs the {name} component")
        used[name] = given[name]
    total = float(format) + sum(float(v) for v in used.values())
    return RewardBreakdown(format=int(format), total=total, **used)


def score_candidate(
    task: TaskInstance,
    raw: str,
    judge: Optional[Judge] = None,
    spec: Optional[FormatSpec] = None,
) -> RewardBreakdown:
    spec = spec or format_for(task.kind)
    parsed = parse_response(raw, spec, n_options=task.n_options, n_frames=task.n_frames)
    fmt = int(parsed.format_ok)
    kind, gt = task.kind, task.gt
    if kind is TaskKind.GROUNDING:
        return combine(kind, fmt, iou=reward_iou_interval(parsed.payload, gt.interval))
    if kind is TaskKind.TRACKING:
        return combine(kind, fmt, iou=reward_tracking(parsed.payload, list(gt.boxes)))
    if kind in (TaskKind.MCQA, TaskKind.QUALITY):
        return combine(kind, fmt, accuracy=reward_accuracy(parsed.payload, gt.choice))
    if kind is TaskKind.GQA:
        # choice and clue are credited independently so a missing clue keeps the choice reward
        answer = parsed.answer_raw
        choice = parse_choice(answer, task.n_options) if answer is not None else ParseFailure()
        clue = parse_interval(answer) if answer is not None else ParseFailure()
        return combine(
            kind,
            fmt,
            iou=reward_iou_interval(clue, gt.interval),
            accuracy=reward_accuracy(choice, gt.choice),
        )
    if judge is None:
        raise MissingComponent("captioning rewards need a judge")
    if isinstance(parsed.payload, Caption):
        recall = reward_recall(parsed.payload.text, gt.caption, judge)
    else:
        recall = 0.0
    return combine(kind, fmt, recall=recall)


def score_group(
    task: TaskInstance,
    candidates: list,
    judge: Optional[Judge] = None,
    spec: Optional[FormatSpec] = None,
) -> list:
    if not candidates:
        raise ValueError("score_group needs at least one candidate")
    if task.kind is TaskKind.CAPTIONING and judge is None:
        raise MissingComponent("captioning rewards need a judge")
    return [score_candidate(task, raw, judge, spec) for raw in candidates]
