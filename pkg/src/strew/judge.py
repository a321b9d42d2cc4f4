"""Caption judges: event decomposition and entailment for the event-recall reward.

Two interchangeable implementations share the ``Judge`` surface: a
deterministic local oracle over ``events: e1; e2; ...`` captions and an HTTP
client for a chat-completion endpoint serving an LLM judge.
"""
from __future__ import annotations

import logging
import re
import threading
import time
from dataclasses import dataclass, field
from typing import Optional

import httpx

from .errors import JudgeUnavailable, MalformedJudgeReply

log = logging.getLogger(__name__)

PROMPT_VERSION = "v1"

DECOMPOSE_PROMPT = """\
You split a video description into its atomic events.
List every distinct event described, one per line, as a numbered list:
1. <event>
2. <event>
Write nothing else. If the description contains no events, reply with NONE.

Description:
{caption}"""

ENTAIL_PROMPT = """\
For each numbered event below, decide whether it is entailed by the video
description. Reply with exactly one line per event, in the same order, in the
form "<number>. yes" or "<number>. no". Write nothing else.

Description:
{caption}

Events:
{events}"""


def normalize_event(text: str) -> str:
    text = re.sub(r"\s+", " ", text).strip().lower()
    return text.rstrip(".!,").strip()


def dedup(events) -> list:
    out, seen = [], set()
    for e in events:
        n = normalize_event(e)
        if n and n not in seen:
            seen.add(n)
            out.append(n)
    return out


class Judge:
    """Event decomposition plus entailment. Subclasses override the first two."""

    def decompose(self, caption: str) -> list:
        raise NotImplementedError

    def entails(self, event: str, caption: str) -> bool:
        raise NotImplementedError

    def entails_many(self, events: list, caption: str) -> list:
        return [self.entails(e, caption) for e in events]


class OracleJudge(Judge):
    def decompose(self, caption: str) -> list:
        text = (caption or "").strip()
        if text.lower().startswith("events:"):
            text = text[len("events:"):]
        return dedup(text.split(";"))

    def entails(self, event: str, caption: str) -> bool:
        return normalize_event(event) in self.decompose(caption)


def oracle_judge() -> OracleJudge:
    return OracleJudge()


class ScriptedJudge(Judge):
    """Replays fixed decompositions and verdicts; unknown entries are not entailed."""

    def __init__(self, decompositions: dict, verdicts: Optional[dict] = None):
        self.decompositions = decompositions
        self.verdicts = verdicts or {}

    def decompose(self, caption: str) -> list:
        return dedup(self.decompositions.get(caption, []))

    def entails(self, event: str, caption: str) -> bool:
        return bool(self.verdicts.get((normalize_event(event), caption), False))


@dataclass
class JudgeVerdict:
    gt_events: list
    entailed_flags: list
    recall: float


def event_recall(pred: str, gt: str, judge: Judge) -> JudgeVerdict:
    """Fraction of ground-truth events entailed by the raw predicted caption."""
    events = judge.decompose(gt)
    if not events:
        log.warning("ground-truth caption decomposed to no events; recall set to 0")
        return JudgeVerdict([], [], 0.0)
    flags = [bool(f) for f in judge.entails_many(events, pred or "")]
    if len(flags) != len(events):
        raise JudgeUnavailable("judge returned a verdict list of the wrong length")
    return JudgeVerdict(events, flags, sum(flags) / len(events))


@dataclass
class JudgeConfig:
    endpoint: str = "http://127.0.0.1:8001/v1/chat/completions"
    model: str = "qwen2.5-72b-instruct"
    timeout: float = 60.0
    max_concurrency: int = 4
    retries: int = 2
    backoff: float = 0.5
    api_key: Optional[str] = None
    decompose_prompt: str = field(default=DECOMPOSE_PROMPT, repr=False)
    entail_prompt: str = field(default=ENTAIL_PROMPT, repr=False)


_LINE_RE = re.compile(r"^\s*(\d+)[.):]\s*(.+?)\s*$")


def parse_numbered_list(reply: str) -> list:
    if reply.strip().upper() == "NONE":
        return []
    items = []
    for line in reply.strip().splitlines():
        if not line.strip():
            continue
        m = _LINE_RE.match(line)
        if not m:
            raise MalformedJudgeReply(f"not a numbered line: {line!r}")
        items.append(m.group(2))
    if not items:
        raise MalformedJudgeReply("empty decomposition")
    return items


def parse_yes_no(reply: str, n: int) -> list:
    flags = {}
    for line in reply.strip().splitlines():
        if not line.strip():
            continue
        m = _LINE_RE.match(line)
        if not m:
            raise MalformedJudgeReply(f"not a numbered verdict: {line!r}")
        word = m.group(2).strip().lower().rstrip(".")
        if word not in ("yes", "no"):
            raise MalformedJudgeReply(f"verdict must be yes/no, got {word!r}")
        flags[int(m.group(1))] = word == "yes"
    if sorted(flags) != list(range(1, n + 1)):
        raise MalformedJudgeReply(f"expected verdicts 1..{n}, got {sorted(flags)}")
    return [flags[i] for i in range(1, n + 1)]


class RemoteJudge(Judge):
    def __init__(self, config: JudgeConfig, transport: Optional[httpx.BaseTransport] = None):
        self.config = config
        headers = {"Authorization": f"Bearer {config.api_key}"} if config.api_key else {}
        self._client = httpx.Client(timeout=config.timeout, transport=transport, headers=headers)
        self._slots = threading.BoundedSemaphore(max(1, config.max_concurrency))

    def close(self):
        self._client.close()

    def _chat(self, content: str) -> str:
        body = {
            "model": self.config.model,
            "messages": [{"role": "user", "content": content}],
            "temperature": 0,
        }
        with self._slots:
            resp = self._client.post(self.config.endpoint, json=body)
        resp.raise_for_status()
        try:
            return resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise MalformedJudgeReply(f"bad completion body: {exc}") from exc

    def _ask(self, content: str, parse):
        last = None
        for attempt in range(self.config.retries + 1):
            if attempt:
                time.sleep(self.config.backoff * 2 ** (attempt - 1))
            try:
                return parse(self._chat(content))
            except (httpx.HTTPError, MalformedJudgeReply) as exc:
                last = exc
                log.info("judge attempt %d failed: %s", attempt + 1, exc)
        raise JudgeUnavailable(f"judge failed after {self.config.retries + 1} attempts: {last}")

    def decompose(self, caption: str) -> list:
        if not (caption or "").strip():
            return []
        prompt = self.config.decompose_prompt.format(caption=caption)
        return dedup(self._ask(prompt, parse_numbered_list))

    def entails_many(self, events: list, caption: str) -> list:
        if not events:
            return []
        listing = "\n".join(f"{i}. {e}" for i, e in enumerate(events, 1))
        prompt = self.config.entail_prompt.format(caption=caption, events=listing)
        return self._ask(prompt, lambda reply: parse_yes_no(reply, len(events)))

    def entails(self, event: str, caption: str) -> bool:
        return self.entails_many([event], caption)[0]


def remote_judge(config: JudgeConfig, transport: Optional[httpx.BaseTransport] = None) -> RemoteJudge:
    return RemoteJudge(config, transport)
