"""Mean opinion score aggregation over individual listener ratings."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, TextIO

from . import CurateError


class EmptyScores(CurateError):
    pass


class OutOfRange(CurateError):
    def __init__(self, rater: str, sample: str, value):
        super().__init__(f"score {value!r} from rater {rater!r} for sample {sample!r} not in 1..5")
        self.rater, self.sample, self.value = rater, sample, value


class ScoreParseError(CurateError):
    pass


@dataclass(frozen=True)
class RaterScore:
    rater_id: str
    sample_id: str
    score: int


@dataclass(frozen=True)
class MosSummary:
    overall_mos: float
    n_scores: int
    per_sample: dict[str, tuple[float, int]]
    ci95_halfwidth: float

    def to_dict(self) -> dict:
        return {
            "overall_mos": self.overall_mos,
            "n_scores": self.n_scores,
            "ci95_halfwidth": self.ci95_halfwidth,
            "per_sample": {k: {"mos": m, "n": n} for k, (m, n) in sorted(self.per_sample.items())},
        }


def compute_mos(scores: Iterable[RaterScore]) -> MosSummary:
    """Plain mean of every individual score, with no per-rater weighting."""
    scores = list(scores)
    if not scores:
        raise EmptyScores("no scores to aggregate")
    for s in scores:
        if isinstance(s.score, bool) or s.score not in (1, 2, 3, 4, 5):
            raise OutOfRange(s.rater_id, s.sample_id, s.score)
    n = len(scores)
    total = sum(s.score for s in scores)
    mean = total / n
    groups: dict[str, list[int]] = {}
    for s in scores:
        groups.setdefault(s.sample_id, []).append(s.score)
    per_sample = {k: (sum(v) / len(v), len(v)) for k, v in groups.items()}
    if n > 1:
        var = sum((s.score - mean) ** 2 for s in scores) / (n - 1)
        ci = 1.96 * math.sqrt(var) / math.sqrt(n)
    else:
        ci = 0.0
    return MosSummary(mean, n, per_sample, ci)


def parse_scores(stream: TextIO | str) -> list[RaterScore]:
    """Read ``rater_id<TAB>sample_id<TAB>score`` rows after a header line.

    A repeated (rater, sample) pair is an error rather than being averaged.
    """
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    reader = csv.reader(stream, delimiter="\t", quoting=csv.QUOTE_NONE)
    header = next(reader, None)
    if header is None:
        return []
    cols = [h.strip() for h in header]
    try:
        ri, si, vi = cols.index("rater_id"), cols.index("sample_id"), cols.index("score")
    except ValueError:
        raise ScoreParseError("header must name rater_id, sample_id and score") from None
    out, seen = [], set()
    for row in reader:
        if not row or all(not c.strip() for c in row):
            continue
        line = reader.line_num
        if len(row) <= max(ri, si, vi):
            raise ScoreParseError(f"line {line}: too few fields")
        rater, sample, raw = row[ri].strip(), row[si].strip(), row[vi].strip()
        try:
            value = int(raw)
        except ValueError:
            raise ScoreParseError(f"line {line}: score {raw!r} is not an integer") from None
        if not 1 <= value <= 5:
            raise OutOfRange(rater, sample, value)
        if (rater, sample) in seen:
            raise ScoreParseError(f"line {line}: duplicate score from {rater!r} for {sample!r}")
        seen.add((rater, sample))
        out.append(RaterScore(rater, sample, value))
    return out


def load_scores(path: Path | str) -> list[RaterScore]:
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_scores(fh)
