"""Shared value types: intervals, boxes, choice letters, task kinds, ground truth."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional, Union

LETTERS = "ABCDE"


class TaskKind(str, enum.Enum):
    GROUNDING = "grounding"
    TRACKING = "tracking"
    MCQA = "mcqa"
    GQA = "gqa"
    CAPTIONING = "captioning"
    QUALITY = "quality"

    @classmethod
    def parse(cls, value: Union[str, "TaskKind"]) -> "TaskKind":
        if isinstance(value, TaskKind):
            return value
        key = str(value).strip().lower()
        if key in _KIND_ALIASES:
            return _KIND_ALIASES[key]
        raise ValueError(f"unknown task kind {value!r}")

    @property
    def is_choice(self) -> bool:
        return self in (TaskKind.MCQA, TaskKind.GQA, TaskKind.QUALITY)


_KIND_ALIASES = {k.value: k for k in TaskKind}
_KIND_ALIASES.update(
    {
        "temporal_grounding": TaskKind.GROUNDING,
        "object_tracking": TaskKind.TRACKING,
        "multi_choice_qa": TaskKind.MCQA,
        "qa": TaskKind.MCQA,
        "grounding_qa": TaskKind.GQA,
        "caption": TaskKind.CAPTIONING,
        "quality_assessment": TaskKind.QUALITY,
    }
)


@dataclass(frozen=True)
class TemporalInterval:
    start: float
    end: float

    def __post_init__(self):
        if not (math.isfinite(self.start) and math.isfinite(self.end)):
            raise ValueError("interval bounds must be finite")
        if self.start < 0 or self.end < 0:
            raise ValueError("interval bounds must be non-negative")
        if self.start > self.end:
            raise ValueError(f"interval start {self.start} > end {self.end}")

    @property
    def length(self) -> float:
        return self.end - self.start

    def covers(self, other: "TemporalInterval") -> bool:
        return self.start <= other.start and other.end <= self.end

    def to_list(self) -> list:
        return [self.start, self.end]


@dataclass(frozen=True)
class BoundingBox:
    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        vals = (self.x1, self.y1, self.x2, self.y2)
        if not all(math.isfinite(v) and v >= 0 for v in vals):
            raise ValueError("box coordinates must be finite and non-negative")
        if self.x1 > self.x2 or self.y1 > self.y2:
            raise ValueError("box corners out of order")

    @classmethod
    def from_corners(cls, a: float, b: float, c: float, d: float) -> "BoundingBox":
        """Build a box from any two opposite corners."""
        return cls(min(a, c), min(b, d), max(a, c), max(b, d))

    @property
    def area(self) -> float:
        return (self.x2 - self.x1) * (self.y2 - self.y1)

    def to_list(self) -> list:
        return [self.x1, self.y1, self.x2, self.y2]


@dataclass(frozen=True)
class ChoiceLetter:
    letter: str

    def __post_init__(self):
        if len(self.letter) != 1 or self.letter not in LETTERS:
            raise ValueError(f"choice must be one of {LETTERS}, got {self.letter!r}")

    @property
    def index(self) -> int:
        return LETTERS.index(self.letter)


@dataclass(frozen=True)
class ChoiceWithClue:
    choice: ChoiceLetter
    clue: TemporalInterval


@dataclass(frozen=True)
class Caption:
    text: str


@dataclass(frozen=True)
class ParseFailure:
    reason: str = ""

    def __bool__(self):
        return False


Payload = Union[TemporalInterval, list, ChoiceLetter, ChoiceWithClue, Caption, ParseFailure]


@dataclass(frozen=True)
class GroundTruth:
    """Supervision for one task; exactly the fields its kind needs are set."""

    interval: Optional[TemporalInterval] = None
    boxes: Optional[tuple] = None
    choice: Optional[ChoiceLetter] = None
    caption: Optional[str] = None

    def check(self, kind: TaskKind) -> None:
        need = {
            TaskKind.GROUNDING: {"interval"},
            TaskKind.TRACKING: {"boxes"},
            TaskKind.MCQA: {"choice"},
            TaskKind.QUALITY: {"choice"},
            TaskKind.GQA: {"choice", "interval"},
            TaskKind.CAPTIONING: {"caption"},
        }[kind]
        have = {n for n in ("interval", "boxes", "choice", "caption") if getattr(self, n) is not None}
        if have != need:
            raise ValueError(f"{kind.value} ground truth needs {sorted(need)}, has {sorted(have)}")
        if kind is TaskKind.TRACKING and not self.boxes:
            raise ValueError("tracking ground truth needs at least one box")


@dataclass(frozen=True)
class VideoRef:
    uri: str
    duration: float
    base_fps: float = 1.0
    base_resolution: tuple = (320, 240)

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError("video duration must be positive")
        if not self.base_fps > 0:
            raise ValueError("video fps must be positive")
        w, h = self.base_resolution
        if w <= 0 or h <= 0:
            raise ValueError("video resolution must be positive")


@dataclass(frozen=True)
class TaskInstance:
    id: str
    video: VideoRef
    question: str
    kind: TaskKind
    gt: GroundTruth
    options: Optional[tuple] = None

    def __post_init__(self):
        self.gt.check(self.kind)
        if self.kind.is_choice != (self.options is not None):
            raise ValueError("options are required for choice tasks and forbidden otherwise")
        if self.options is not None:
            if not 2 <= len(self.options) <= len(LETTERS):
                raise ValueError("choice tasks need 2..5 options")
            if self.gt.choice.index >= len(self.options):
                raise ValueError("ground-truth choice outside the option list")
        if self.gt.interval is not None and self.gt.interval.end > self.video.duration:
            raise ValueError("ground-truth interval exceeds video duration")

    @property
    def n_options(self) -> int:
        return len(self.options) if self.options else 0

    @property
    def n_frames(self) -> int:
        return len(self.gt.boxes) if self.gt.boxes else 0


@dataclass
class RewardBreakdown:
    format: int
    iou: Optional[float] = None
    accuracy: Optional[int] = None
    recall: Optional[float] = None
    total: float = 0.0

    def to_dict(self) -> dict:
        return {
            "format": self.format,
            "iou": self.iou,
            "accuracy": self.accuracy,
            "recall": self.recall,
            "total": self.total,
        }


@dataclass
class MetricReport:
    n: int
    miou: Optional[float] = None
    recall_at: dict = field(default_factory=dict)
    avg_overlap: Optional[float] = None
    accuracy: Optional[float] = None
    caption_prf: Optional[dict] = None

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "miou": self.miou,
            "recall_at": {f"{k:g}": v for k, v in sorted(self.recall_at.items())},
            "avg_overlap": self.avg_overlap,
            "accuracy": self.accuracy,
            "caption_prf": self.caption_prf,
        }
