"""Evaluation metrics: mIoU, R@threshold, average overlap, accuracy, caption P/R/F1."""
from __future__ import annotations

from typing import Optional

from .errors import EmptyInput, IdMismatch
from .judge import Judge, event_recall
from .parsing import format_for, parse_choice, parse_interval, parse_response
from .rewards import reward_accuracy, reward_iou_interval, reward_tracking
from .types import Caption, MetricReport, ParseFailure, TaskKind

THRESHOLDS = (0.3, 0.5, 0.7)


def _require(pairs):
    if not pairs:
        raise EmptyInput("metric needs at least one pair")


def miou(pairs) -> float:
    _require(pairs)
    return sum(reward_iou_interval(p, g) for p, g in pairs) / len(pairs)


def recall_at_ious(ious, threshold: float) -> float:
    if not ious:
        raise EmptyInput("metric needs at least one value")
    return sum(1 for v in ious if v >= threshold) / len(ious)


def recall_at(pairs, threshold: float) -> float:
    """Fraction of pairs with IoU >= threshold (inclusive)."""
    _require(pairs)
    return recall_at_ious([reward_iou_interval(p, g) for p, g in pairs], threshold)


def f1_score(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def caption_prf(pred: str, gt: str, judge: Judge) -> dict:
    recall = event_recall(pred, gt, judge).recall
    precision = event_recall(gt, pred, judge).recall
    return {"precision": precision, "recall": recall, "f1": f1_score(precision, recall)}


def _predicted_payload(instance, record):
    """Prediction payload parsed from a raw ``response`` string."""
    spec = format_for(instance.kind)
    parsed = parse_response(record["response"], spec, instance.n_options, instance.n_frames)
    answer = parsed.answer_raw if parsed.answer_raw is not None else record["response"]
    kind = instance.kind
    if kind is TaskKind.GROUNDING:
        return {"interval": parse_interval(answer)}
    if kind is TaskKind.TRACKING:
        payload = parsed.payload
        return {"boxes": payload}
    if kind in (TaskKind.MCQA, TaskKind.QUALITY):
        return {"choice": parse_choice(answer, instance.n_options)}
    if kind is TaskKind.GQA:
        return {"choice": parse_choice(answer, instance.n_options), "interval": parse_interval(answer)}
    payload = parsed.payload
    return {"caption": payload.text if isinstance(payload, Caption) else answer.strip()}


def evaluate_pairs(kind: TaskKind, pairs, judge: Optional[Judge] = None) -> MetricReport:
    """Aggregate metrics for a list of (predicted payload dict, ground-truth instance)."""
    if not pairs:
        raise EmptyInput("no predictions to evaluate")
    kind = TaskKind.parse(kind)
    n = len(pairs)
    report = MetricReport(n=n)
    if kind in (TaskKind.GROUNDING, TaskKind.GQA):
        ivs = [(p.get("interval", ParseFailure()), inst.gt.interval) for p, inst in pairs]
        ious = [reward_iou_interval(p, g) for p, g in ivs]
        report.miou = sum(ious) / n
        report.recall_at = {t: recall_at_ious(ious, t) for t in THRESHOLDS}
    if kind is TaskKind.TRACKING:
        seq = []
        for p, inst in pairs:
            boxes = p.get("boxes")
            boxes = list(boxes) if boxes is not None and not isinstance(boxes, ParseFailure) else ParseFailure()
            seq.append(reward_tracking(boxes, list(inst.gt.boxes)))
        report.avg_overlap = sum(seq) / n
        report.recall_at = {t: recall_at_ious(seq, t) for t in THRESHOLDS}
    if kind in (TaskKind.MCQA, TaskKind.QUALITY, TaskKind.GQA):
        report.accuracy = sum(reward_accuracy(p.get("choice"), inst.gt.choice) for p, inst in pairs) / n
    if kind is TaskKind.CAPTIONING:
        if judge is None:
            raise ValueError("caption metrics need a judge")
        prfs = [caption_prf(p.get("caption") or "", inst.gt.caption, judge) for p, inst in pairs]
        precision = sum(x["precision"] for x in prfs) / n
        recall = sum(x["recall"] for x in prfs) / n
        report.caption_prf = {"precision": precision, "recall": recall, "f1": f1_score(precision, recall)}
    return report


def _gt_payload(instance) -> dict:
    gt = instance.gt
    return {
        "interval": gt.interval,
        "boxes": list(gt.boxes) if gt.boxes is not None else None,
        "choice": gt.choice,
        "caption": gt.caption,
    }


def evaluate_responses(instances, responses, judge: Optional[Judge] = None) -> MetricReport:
    """Metrics for raw model responses aligned index-by-index with ``instances``."""
    if len(instances) != len(responses):
        raise IdMismatch("instances and responses differ in length")
    if not instances:
        raise EmptyInput("no predictions to evaluate")
    pairs = [(_predicted_payload(inst, {"response": r}), inst) for inst, r in zip(instances, responses)]
    return evaluate_pairs(instances[0].kind, pairs, judge)


def evaluate_run(pred_file, gt_file, kind, judge: Optional[Judge] = None) -> MetricReport:
    """Join predictions to ground truth by id and score them.

    Prediction rows are either full task records (their ``gt`` block is the
    prediction) or ``{"id": ..., "response": "<raw model text>"}``.
    """
    from . import data

    kind = TaskKind.parse(kind)
    gts = data.load_task_file(gt_file, kind)
    preds = data.load_prediction_file(pred_file, kind)
    if not gts:
        raise EmptyInput("ground-truth file is empty")
    by_id = {inst.id: inst for inst in gts}
    if len(by_id) != len(gts):
        raise IdMismatch("duplicate ids in ground-truth file")
    pred_by_id = {}
    for rec in preds:
        if rec["id"] in pred_by_id:
            raise IdMismatch(f"duplicate prediction id {rec['id']!r}")
        pred_by_id[rec["id"]] = rec
    missing = sorted(set(by_id) - set(pred_by_id))
    extra = sorted(set(pred_by_id) - set(by_id))
    if missing or extra:
        raise IdMismatch(f"ids differ: missing={missing[:5]} extra={extra[:5]}")
    pairs = []
    for gid in sorted(by_id):
        inst, rec = by_id[gid], pred_by_id[gid]
        payload = _gt_payload(rec["instance"]) if "instance" in rec else _predicted_payload(inst, rec)
        pairs.append((payload, inst))
    return evaluate_pairs(kind, pairs, judge)
