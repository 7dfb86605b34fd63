"""Per-segment quality labels, annotator consensus and labeled windows.

Three annotators label every 0.75 s segment with one of six categories
(the five quality classes plus "unsure"). Consensus merges the three
opinions: the well-populated classes (good/poor/silent) demand unanimity,
the scarce ones (interference/talking) accept a two-of-three vote, and
everything else is discarded.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from enum import IntEnum
from typing import Optional, Sequence

from .errors import DataError


class QualityClass(IntEnum):
    """The five model-facing signal-quality classes."""

    GOOD = 0
    POOR = 1
    INTERFERENCE = 2
    TALKING = 3
    SILENT = 4

    @property
    def token(self) -> str:
        return self.name.lower()

    @classmethod
    def from_token(cls, token: str) -> "QualityClass":
        try:
            return cls[token.strip().upper()]
        except KeyError:
            raise DataError(f"unknown quality class token {token!r}") from None


N_CLASSES = len(QualityClass)

# Annotation-stage extension; never reaches the model.
UNSURE = "unsure"

ANNOTATION_TOKENS = tuple(c.token for c in QualityClass) + (UNSURE,)

# Classes where a two-of-three vote is accepted (scarce labels).
_MAJORITY_OK = (QualityClass.INTERFERENCE, QualityClass.TALKING)


@dataclass(frozen=True)
class AnnotationSet:
    """Aligned per-segment label triples for one recording."""

    recording_id: str
    annotator_a: tuple[str, ...]
    annotator_b: tuple[str, ...]
    annotator_c: tuple[str, ...]

    def __post_init__(self):
        if not (len(self.annotator_a) == len(self.annotator_b) == len(self.annotator_c)):
            raise DataError(f"annotations {self.recording_id!r}: unequal label sequence lengths")
        for seq in (self.annotator_a, self.annotator_b, self.annotator_c):
            for tok in seq:
                if tok not in ANNOTATION_TOKENS:
                    raise DataError(f"annotations {self.recording_id!r}: bad token {tok!r}")

    def __len__(self) -> int:
        return len(self.annotator_a)


@dataclass(frozen=True)
class LabeledSegment:
    recording_id: str
    index: int
    consensus_class: Optional[QualityClass]


def consensus_label(a: str, b: str, c: str) -> Optional[QualityClass]:
    """Merge three annotator labels into a consensus class, or None.

    Unanimity is required for good/poor/silent; a two-of-three vote
    suffices for interference/talking (the third opinion, unsure included,
    is overruled). Everything else, in particular any unsure majority,
    is discarded.
    """
    votes = (a, b, c)
    for tok in votes:
        if tok not in ANNOTATION_TOKENS:
            raise DataError(f"bad annotation token {tok!r}")
    if a == b == c and a != UNSURE:
        return QualityClass.from_token(a)
    for cls in _MAJORITY_OK:
        if votes.count(cls.token) >= 2:
            return cls
    return None


def consensus_segments(ann: AnnotationSet) -> list[LabeledSegment]:
    return [
        LabeledSegment(ann.recording_id, i, consensus_label(a, b, c))
        for i, (a, b, c) in enumerate(zip(ann.annotator_a, ann.annotator_b, ann.annotator_c))
    ]


def build_labeled_windows(segments: Sequence[LabeledSegment]) -> list[tuple[int, QualityClass]]:
    """List (start_index, class) for every five-segment run of one class.

    A run of L >= 5 consecutive segments sharing a consensus class yields
    L-4 overlapping windows; any gap (None) or class change breaks the run.
    Input must be ordered by segment index within one recording.
    """
    out = []
    for k in range(len(segments) - 4):
        cls = segments[k].consensus_class
        if cls is None:
            continue
        if all(
            segments[k + j].consensus_class == cls
            and segments[k + j].index == segments[k].index + j
            for j in range(1, 5)
        ):
            out.append((segments[k].index, cls))
    return out


def class_histogram(labels: Sequence[QualityClass]) -> dict[QualityClass, int]:
    counts = {c: 0 for c in QualityClass}
    for lab in labels:
        counts[QualityClass(lab)] += 1
    return counts


# ---------------------------------------------------------------------------
# CSV formats
# ---------------------------------------------------------------------------
# Annotation CSV, one file per recording:
#     segment_index,annotA,annotB,annotC
# Labeled-window manifest CSV:
#     recording_id,start_segment,class

def annotations_to_csv(ann: AnnotationSet) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["segment_index", "annotA", "annotB", "annotC"])
    for i, (a, b, c) in enumerate(zip(ann.annotator_a, ann.annotator_b, ann.annotator_c)):
        w.writerow([i, a, b, c])
    return buf.getvalue()


def annotations_from_csv(text: str, recording_id: str) -> AnnotationSet:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != ["segment_index", "annotA", "annotB", "annotC"]:
        raise DataError(f"annotations {recording_id!r}: bad CSV header")
    a, b, c = [], [], []
    for ln, row in enumerate(rows[1:], start=2):
        if len(row) != 4:
            raise DataError(f"annotations {recording_id!r}: line {ln} has {len(row)} fields")
        if int(row[0]) != ln - 2:
            raise DataError(f"annotations {recording_id!r}: line {ln} out of order")
        a.append(row[1]); b.append(row[2]); c.append(row[3])
    return AnnotationSet(recording_id, tuple(a), tuple(b), tuple(c))


def windows_to_csv(rows: Sequence[tuple[str, int, QualityClass]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["recording_id", "start_segment", "class"])
    for rec_id, start, cls in rows:
        w.writerow([rec_id, start, cls.token])
    return buf.getvalue()


def windows_from_csv(text: str) -> list[tuple[str, int, QualityClass]]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != ["recording_id", "start_segment", "class"]:
        raise DataError("window manifest: bad CSV header")
    return [(r[0], int(r[1]), QualityClass.from_token(r[2])) for r in rows[1:]]
