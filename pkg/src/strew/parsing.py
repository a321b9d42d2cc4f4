"""Response parsing: tag-template validation and per-task answer grammars.

Answer grammars (EBNF, whitespace between tokens is free)::

    interval        = number "to" number ;
    box             = "[" number "," number "," number "," number "]" ;
    box_sequence    = box { [","] box } ;
    choice          = letter ;                      (* A..E, within option count *)
    choice_w_clue   = letter [","] interval ;
    number          = digit { digit } [ "." digit { digit } ] ;

Strict grammars decide nothing on their own; every payload parser also has a
lenient fallback (first numbers / first standalone letter) so that reward
computation can salvage drifted outputs. Only ``extract_blocks`` decides the
format reward.
"""
from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from typing import Optional

from .types import (
    LETTERS,
    BoundingBox,
    Caption,
    ChoiceLetter,
    ChoiceWithClue,
    ParseFailure,
    TaskKind,
    TemporalInterval,
)


class AnswerGrammar(str, enum.Enum):
    INTERVAL = "interval"
    BOX_SEQUENCE = "box_sequence"
    CHOICE = "choice"
    CHOICE_WITH_CLUE = "choice_with_clue"
    FREE_TEXT = "free_text"


@dataclass(frozen=True)
class FormatSpec:
    requires_think: bool
    answer_grammar: AnswerGrammar


_KIND_GRAMMAR = {
    TaskKind.GROUNDING: AnswerGrammar.INTERVAL,
    TaskKind.TRACKING: AnswerGrammar.BOX_SEQUENCE,
    TaskKind.MCQA: AnswerGrammar.CHOICE,
    TaskKind.QUALITY: AnswerGrammar.CHOICE,
    TaskKind.GQA: AnswerGrammar.CHOICE_WITH_CLUE,
    TaskKind.CAPTIONING: AnswerGrammar.FREE_TEXT,
}


def format_for(kind: TaskKind, requires_think: bool = True) -> FormatSpec:
    return FormatSpec(requires_think, _KIND_GRAMMAR[TaskKind.parse(kind)])


@dataclass(frozen=True)
class Blocks:
    format_ok: bool
    think: Optional[str] = None
    answer_raw: Optional[str] = None


@dataclass(frozen=True)
class ParsedResponse:
    think: Optional[str]
    answer_raw: Optional[str]
    payload: object
    format_ok: bool = False


_TAGS = ("<think>", "</think>", "<answer>", "</answer>")
_THINK_RE = re.compile(r"<think>(.*?)</think>", re.DOTALL)
_ANSWER_RE = re.compile(r"<answer>(.*?)</answer>", re.DOTALL)
_WITH_THINK_RE = re.compile(r"\s*<think>(.*?)</think>\s*<answer>(.*?)</answer>\s*", re.DOTALL)
_ANSWER_ONLY_RE = re.compile(r"\s*<answer>(.*?)</answer>\s*", re.DOTALL)


def _single_block(raw: str, open_tag: str, close_tag: str, pattern: re.Pattern) -> Optional[str]:
    if raw.count(open_tag) != 1 or raw.count(close_tag) != 1:
        return None
    m = pattern.search(raw)
    return m.group(1) if m else None


def extract_blocks(raw: str, spec: FormatSpec) -> Blocks:
    """Check the tag template and pull out the think/answer bodies.

    The answer body is returned whenever exactly one complete answer block
    exists, even when the overall template is violated.
    """
    raw = raw or ""
    think = _single_block(raw, "<think>", "</think>", _THINK_RE)
    answer = _single_block(raw, "<answer>", "</answer>", _ANSWER_RE)
    counts = {t: raw.count(t) for t in _TAGS}
    if spec.requires_think:
        ok = all(c == 1 for c in counts.values()) and _WITH_THINK_RE.fullmatch(raw) is not None
    else:
        ok = (
            counts["<think>"] == 0
            and counts["</think>"] == 0
            and counts["<answer>"] == 1
            and counts["</answer>"] == 1
            and _ANSWER_ONLY_RE.fullmatch(raw) is not None
        )
    return Blocks(ok, think, answer)


_NUM = r"\d+(?:\.\d+)?"
_NUM_RE = re.compile(_NUM)
_STRICT_INTERVAL_RE = re.compile(rf"\s*({_NUM})\s+to\s+({_NUM})\s*")
_RANGE_RE = re.compile(rf"({_NUM})\s*(?:s|sec|secs|seconds)?\s*(?:to|-|–|—|~)\s*({_NUM})", re.IGNORECASE)
_BOX_RE = re.compile(r"\[([^\[\]]*)\]")


def _interval(a: float, b: float) -> TemporalInterval:
    return TemporalInterval(min(a, b), max(a, b))


def format_interval(iv: TemporalInterval, digits: int = 3) -> str:
    return f"{iv.start:.{digits}f} to {iv.end:.{digits}f}"


def parse_interval(answer_raw: str):
    """Parse ``<s> to <e>``; falls back to the first two numbers in the text."""
    text = answer_raw or ""
    m = _STRICT_INTERVAL_RE.fullmatch(text)
    if m:
        return _interval(float(m.group(1)), float(m.group(2)))
    nums = _NUM_RE.findall(text)
    if len(nums) < 2:
        return ParseFailure("fewer than two numbers")
    return _interval(float(nums[0]), float(nums[1]))


def find_intervals(text: str) -> list:
    """All interval mentions in reading order (``a to b``, ``a-b``, ...).

    When no explicit range is written, consecutive numbers are paired.
    """
    text = text or ""
    found = [_interval(float(a), float(b)) for a, b in _RANGE_RE.findall(text)]
    if found:
        return found
    nums = [float(n) for n in _NUM_RE.findall(text)]
    return [_interval(nums[i], nums[i + 1]) for i in range(0, len(nums) - 1, 2)]


def parse_box_sequence(answer_raw: str, n_frames: int):
    groups = _BOX_RE.findall(answer_raw or "")
    if len(groups) != n_frames:
        return ParseFailure(f"expected {n_frames} boxes, found {len(groups)}")
    boxes = []
    for g in groups:
        parts = [p.strip() for p in g.split(",")]
        if len(parts) != 4 or not all(re.fullmatch(_NUM, p) for p in parts):
            return ParseFailure(f"malformed box [{g}]")
        boxes.append(BoundingBox.from_corners(*(float(p) for p in parts)))
    return boxes


def format_boxes(boxes) -> str:
    return " ".join("[" + ",".join(f"{v:g}" for v in b.to_list()) + "]" for b in boxes)


_LETTER_RE = re.compile(r"(?<![A-Za-z])([A-E])(?![A-Za-z])")


def parse_choice(answer_raw: str, n_options: int):
    if not 2 <= n_options <= len(LETTERS):
        raise ValueError("n_options must be in 2..5")
    allowed = LETTERS[:n_options]
    text = (answer_raw or "").strip()
    if len(text) == 1:
        return ChoiceLetter(text) if text in allowed else ParseFailure(f"{text!r} out of range")
    for m in _LETTER_RE.finditer(text):
        if m.group(1) in allowed:
            return ChoiceLetter(m.group(1))
    return ParseFailure("no option letter")


def parse_choice_with_clue(answer_raw: str, n_options: int):
    choice = parse_choice(answer_raw, n_options)
    clue = parse_interval(answer_raw)
    if isinstance(choice, ParseFailure):
        return choice
    if isinstance(clue, ParseFailure):
        return ParseFailure("clue interval missing")
    return ChoiceWithClue(choice, clue)


def parse_payload(answer_raw: Optional[str], grammar: AnswerGrammar, n_options: int = 0, n_frames: int = 0):
    if answer_raw is None:
        return ParseFailure("no answer block")
    if grammar is AnswerGrammar.INTERVAL:
        return parse_interval(answer_raw)
    if grammar is AnswerGrammar.BOX_SEQUENCE:
        return parse_box_sequence(answer_raw, n_frames)
    if grammar is AnswerGrammar.CHOICE:
        return parse_choice(answer_raw, n_options)
    if grammar is AnswerGrammar.CHOICE_WITH_CLUE:
        return parse_choice_with_clue(answer_raw, n_options)
    text = answer_raw.strip()
    return Caption(text) if text else ParseFailure("empty caption")


def parse_response(raw: str, spec: FormatSpec, n_options: int = 0, n_frames: int = 0) -> ParsedResponse:
    blocks = extract_blocks(raw, spec)
    payload = parse_payload(blocks.answer_raw, spec.answer_grammar, n_options, n_frames)
    return ParsedResponse(blocks.think, blocks.answer_raw, payload, blocks.format_ok)


def render_response(answer: str, think: Optional[str] = None) -> str:
    """Inverse of ``extract_blocks`` for well-formed output."""
    head = f"<think>{think}</think>" if think is not None else ""
    return f"{head}<answer>{answer}</answer>"
