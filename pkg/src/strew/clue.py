"""Two-pass clue-driven inference.

Pass one answers from the low-rate whole video and must cite a time span.
The cited spans are padded, merged, and re-sent at a higher frame rate and
resolution (within a frame-pixel budget) for a second, final answer.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import httpx

from .errors import BudgetInfeasible, ClientError
from .parsing import (
    AnswerGrammar,
    FormatSpec,
    ParsedResponse,
    find_intervals,
    format_interval,
    parse_response,
)
from .types import LETTERS, ChoiceWithClue, TaskInstance, TemporalInterval, VideoRef

log = logging.getLogger(__name__)

CLUE_FORMAT = FormatSpec(requires_think=False, answer_grammar=AnswerGrammar.CHOICE_WITH_CLUE)


@dataclass
class ClueConfig:
    padding: float = 2.0
    delta_res: float = 1.0
    delta_fps: float = 2.0
    # frame-pixel budget: sum(segment seconds * fps * width * height)
    budget: float = 5e8
    max_parallel: int = 4


@dataclass(frozen=True)
class PerceptionRequest:
    video: VideoRef
    time_ranges: tuple
    fps: float
    resolution: tuple
    question: str
    format: FormatSpec = CLUE_FORMAT

    def __post_init__(self):
        if not self.fps > 0 or min(self.resolution) <= 0:
            raise ValueError("fps and resolution must be positive")
        for r in self.time_ranges:
            if r.end > self.video.duration:
                raise ValueError("time range exceeds video duration")

    @property
    def cost(self) -> float:
        w, h = self.resolution
        return sum(r.length for r in self.time_ranges) * self.fps * w * h

    def prompt(self) -> str:
        if self.format.answer_grammar is AnswerGrammar.CHOICE_WITH_CLUE:
            hint = "Answer with the option letter followed by the supporting time span, e.g. <answer>B, 12.0 to 17.5</answer>."
        else:
            hint = "Put the final answer inside <answer></answer>."
        if self.format.requires_think:
            hint = "Reason inside <think></think> first. " + hint
        return f"{self.question}\n{hint}"

    def to_wire(self) -> dict:
        return {
            "video_uri": self.video.uri,
            "time_range": [r.to_list() for r in self.time_ranges],
            "fps": self.fps,
            "resolution": list(self.resolution),
            "prompt": self.prompt(),
        }


class ModelClient:
    def answer(self, request: PerceptionRequest) -> str:
        raise NotImplementedError


class HttpModelClient(ModelClient):
    """POSTs the request wire format and expects ``{"text": ...}`` back."""

    def __init__(self, endpoint: str, timeout: float = 120.0, transport: Optional[httpx.BaseTransport] = None):
        self.endpoint = endpoint
        self._client = httpx.Client(timeout=timeout, transport=transport)

    def answer(self, request: PerceptionRequest) -> str:
        resp = self._client.post(self.endpoint, json=request.to_wire())
        resp.raise_for_status()
        body = resp.json()
        if not isinstance(body, dict) or not isinstance(body.get("text"), str):
            raise ValueError("model reply must be {\"text\": str}")
        return body["text"]


def _is_base_view(req: PerceptionRequest) -> bool:
    v = req.video
    full = len(req.time_ranges) == 1 and req.time_ranges[0] == TemporalInterval(0.0, v.duration)
    return full and req.fps == v.base_fps and tuple(req.resolution) == tuple(v.base_resolution)


class ScriptedClient(ModelClient):
    """Deterministic replay: ``{video_uri: {"first": text, "second": text}}``.

    "first" answers the base (whole video, base rate) view, "second" any other view.
    """

    def __init__(self, script: dict):
        self.script = script

    @classmethod
    def from_file(cls, path) -> "ScriptedClient":
        with open(path, encoding="utf-8") as fh:
            return cls(json.load(fh))

    def answer(self, request: PerceptionRequest) -> str:
        entry = self.script.get(request.video.uri)
        if entry is None:
            raise KeyError(f"no script entry for {request.video.uri}")
        return entry["first"] if _is_base_view(request) else entry["second"]


def _unit(*parts) -> float:
    digest = hashlib.sha256("|".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:8], "big") / 2**64


def _event(task: TaskInstance) -> TemporalInterval:
    # choice tasks without a grounded span treat the whole video as the event
    return task.gt.interval or TemporalInterval(0.0, task.video.duration)


class PerceptionMockClient(ModelClient):
    """Answers correctly only when it sees the ground-truth event at >= ``min_fps``.

    Otherwise it guesses a letter pseudo-randomly. Either way it cites a clue
    near the true event (off by at most ``jitter`` seconds per end), except for
    a ``miss_rate`` share of items where the cited span lies elsewhere.
    """

    def __init__(self, tasks, min_fps: float = 2.0, jitter: float = 1.5, miss_rate: float = 0.05):
        self.tasks = {t.video.uri: t for t in tasks}
        self.min_fps = min_fps
        self.jitter = jitter
        self.miss_rate = miss_rate

    def _clue(self, task: TaskInstance) -> TemporalInterval:
        gt, dur = _event(task), task.video.duration
        if _unit(task.id, "miss") < self.miss_rate:
            length = gt.length
            start = (gt.end + dur / 3) % max(dur - length, 1e-9)
            return TemporalInterval(round(start, 2), round(min(dur, start + length), 2))
        a = gt.start + (2 * _unit(task.id, "s") - 1) * self.jitter
        b = gt.end + (2 * _unit(task.id, "e") - 1) * self.jitter
        a, b = min(max(a, 0.0), dur), min(max(b, 0.0), dur)
        return TemporalInterval(round(min(a, b), 2), round(max(a, b), 2))

    def answer(self, request: PerceptionRequest) -> str:
        task = self.tasks[request.video.uri]
        sees = request.fps >= self.min_fps and any(r.covers(_event(task)) for r in request.time_ranges)
        if sees:
            letter = task.gt.choice.letter
        else:
            letter = LETTERS[int(_unit(task.id, "guess", request.fps) * task.n_options)]
        return f"<answer>{letter}, {format_interval(self._clue(task), 2)}</answer>"


@dataclass
class ClueSession:
    question: str
    first_request: PerceptionRequest
    first_answer: ParsedResponse
    clues: list
    segments: list = field(default_factory=list)
    second_request: Optional[PerceptionRequest] = None
    final_answer: Optional[ParsedResponse] = None
    fallback: bool = False
    raw_first: str = ""
    raw_final: str = ""

    @property
    def n_calls(self) -> int:
        return 1 if self.fallback else 2

    def final_choice(self):
        payload = self.final_answer.payload if self.final_answer else None
        return payload.choice if isinstance(payload, ChoiceWithClue) else None

    def to_dict(self) -> dict:
        return {
            "question": self.question,
            "video_uri": self.first_request.video.uri,
            "first_request": self.first_request.to_wire(),
            "first_answer": self.raw_first,
            "clues": [c.to_list() for c in self.clues],
            "segments": [s.to_list() for s in self.segments],
            "second_request": self.second_request.to_wire() if self.second_request else None,
            "final_answer": self.raw_final,
            "fallback": self.fallback,
        }


def extract_temporal_clues(first: ParsedResponse) -> list:
    if isinstance(first.payload, ChoiceWithClue):
        return [first.payload.clue]
    return find_intervals(first.answer_raw or "")


def select_segments(video: VideoRef, clues, padding: float) -> list:
    """Pad each clue by ``padding`` seconds, clamp to the video, merge overlaps."""
    if not clues:
        raise ValueError("select_segments needs at least one clue")
    spans = sorted(
        (max(0.0, min(c.start - padding, video.duration)), min(video.duration, c.end + padding)) for c in clues
    )
    merged = [list(spans[0])]
    for s, e in spans[1:]:
        if s <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], e)
        else:
            merged.append([s, e])
    return [TemporalInterval(s, e) for s, e in merged]


def upsample_request(video: VideoRef, segments, delta_res: float, delta_fps: float, question: str, budget: float, fmt: FormatSpec = CLUE_FORMAT) -> PerceptionRequest:
    """Raise fps first, then resolution, as far as the frame-pixel budget allows."""
    if delta_res < 1 or delta_fps < 1:
        raise ValueError("boost factors must be >= 1")
    w, h = video.base_resolution
    seconds = sum(s.length for s in segments)
    base_cost = seconds * video.base_fps * w * h
    if base_cost > budget:
        raise BudgetInfeasible(f"base sampling costs {base_cost:.3g} > budget {budget:.3g}")
    room = budget / base_cost if base_cost > 0 else math.inf
    f = min(delta_fps, room)
    r = max(1.0, min(delta_res, math.sqrt(room / f)))
    res = (max(w, math.floor(w * r)), max(h, math.floor(h * r)))
    fps = video.base_fps * f
    while seconds * fps * res[0] * res[1] > budget:
        fps = math.nextafter(fps, 0.0)
    return PerceptionRequest(video, tuple(segments), fps, res, question, fmt)


def _call(client: ModelClient, request: PerceptionRequest, phase: str) -> str:
    try:
        return client.answer(request)
    except Exception as exc:
        raise ClientError(phase, str(exc)) from exc


def run_clue_perception(client: ModelClient, video: VideoRef, question: str, delta_res: float, delta_fps: float, config: Optional[ClueConfig] = None, n_options: int = 5, fmt: FormatSpec = CLUE_FORMAT) -> ClueSession:
    config = config or ClueConfig()
    first_req = PerceptionRequest(video, (TemporalInterval(0.0, video.duration),), video.base_fps, tuple(video.base_resolution), question, fmt)
    raw1 = _call(client, first_req, "initial")
    a1 = parse_response(raw1, fmt, n_options=n_options)
    clues = [c for c in extract_temporal_clues(a1) if c.start <= video.duration]
    session = ClueSession(question, first_req, a1, clues, raw_first=raw1)
    if not clues:
        session.final_answer, session.raw_final, session.fallback = a1, raw1, True
        log.info("no temporal clue in first answer; keeping it as final")
        return session
    session.segments = select_segments(video, clues, config.padding)
    session.second_request = upsample_request(video, session.segments, delta_res, delta_fps, question, config.budget, fmt)
    raw2 = _call(client, session.second_request, "refine")
    session.raw_final = raw2
    session.final_answer = parse_response(raw2, fmt, n_options=n_options)
    return session


def run_task(client: ModelClient, task: TaskInstance, config: Optional[ClueConfig] = None) -> ClueSession:
    config = config or ClueConfig()
    return run_clue_perception(client, task.video, task.question, config.delta_res, config.delta_fps, config, n_options=task.n_options or 5)


def run_batch(client: ModelClient, tasks, config: Optional[ClueConfig] = None) -> list:
    """Run independent sessions concurrently; results keep input order."""
    config = config or ClueConfig()
    with ThreadPoolExecutor(max_workers=max(1, config.max_parallel)) as pool:
        return list(pool.map(lambda t: run_task(client, t, config), tasks))


def single_pass_choice(client: ModelClient, task: TaskInstance):
    req = PerceptionRequest(task.video, (TemporalInterval(0.0, task.video.duration),), task.video.base_fps, tuple(task.video.base_resolution), task.question)
    parsed = parse_response(_call(client, req, "initial"), CLUE_FORMAT, n_options=task.n_options or 5)
    return parsed.payload.choice if isinstance(parsed.payload, ChoiceWithClue) else None
