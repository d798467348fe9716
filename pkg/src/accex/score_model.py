"""Score matrices: the universal input for accuracy extrapolation.

A score matrix holds, for every data point, the classifier's score against
each class in the sample together with the point's correct class. Scores
are always stored with higher meaning "more likely"; distance-like inputs
are negated when loaded.
"""

from __future__ import annotations

import csv
import enum
import logging
import math
from collections import Counter
from dataclasses import dataclass
from os import PathLike

import numpy as np

log = logging.getLogger(__name__)


class ScoreFileError(ValueError):
    """Malformed score file (bad header, bad row, unparsable number)."""


class UnequalClassSizeError(ValueError):
    """Classes do not all hold the same number of points (unequal r)."""


class ScoreValidationError(ValueError):
    """Score matrix violates a structural or numeric invariant."""


class ScoreOrientation(enum.Enum):
    HIGHER_IS_BETTER = "higher"
    LOWER_IS_BETTER = "lower"


@dataclass(frozen=True, eq=False)
class ScoreMatrix:
    """Per-point scores against every sampled class.

    Attributes
    ----------
    class_ids : tuple of str
        The K distinct class identifiers, in column order.
    point_ids : tuple of str
        The N point identifiers, in row order.
    correct : ndarray of int, shape (N,)
        Column index of each point's correct class.
    scores : ndarray of float, shape (N, K)
        Canonical (higher is better) scores.
    """

    class_ids: tuple[str, ...]
    point_ids: tuple[str, ...]
    correct: np.ndarray
    scores: np.ndarray

    def __post_init__(self):
        class_ids = tuple(str(c) for c in self.class_ids)
        point_ids = tuple(str(p) for p in self.point_ids)
        correct = np.array(self.correct, dtype=np.intp)
        scores = np.array(self.scores, dtype=np.float64)
        n_classes = len(class_ids)

        if len(set(class_ids)) != n_classes:
            raise ScoreValidationError("class identifiers must be distinct")
        if n_classes < 1:
            raise ScoreValidationError("at least one class is required")
        if scores.ndim != 2 or scores.shape != (len(point_ids), n_classes):
            raise ScoreValidationError(
                f"scores must have shape ({len(point_ids)}, {n_classes}), got {scores.shape}"
            )
        if correct.shape != (len(point_ids),):
            raise ScoreValidationError("one correct class per point is required")
        if correct.size and (correct.min() < 0 or correct.max() >= n_classes):
            raise ScoreValidationError("correct class index out of range")
        if not np.all(np.isfinite(scores)):
            raise ScoreValidationError("scores must be finite (no NaN or inf)")

        counts = np.bincount(correct, minlength=n_classes)
        if counts.size and not np.all(counts == counts[0]):
            raise UnequalClassSizeError(
                f"unequal r: points per class range from {counts.min()} to {counts.max()}"
            )
        if counts.size and counts[0] == 0:
            raise ScoreValidationError("every class needs at least one point")

        correct.flags.writeable = False
        scores.flags.writeable = False
        object.__setattr__(self, "class_ids", class_ids)
        object.__setattr__(self, "point_ids", point_ids)
        object.__setattr__(self, "correct", correct)
        object.__setattr__(self, "scores", scores)

    @property
    def n_classes(self) -> int:
        return len(self.class_ids)

    @property
    def n_points(self) -> int:
        return len(self.point_ids)

    @property
    def r(self) -> int:
        return self.n_points // self.n_classes

    @property
    def correct_scores(self) -> np.ndarray:
        return self.scores[np.arange(self.n_points), self.correct]

    def incorrect_mask(self) -> np.ndarray:
        mask = np.ones(self.scores.shape, dtype=bool)
        mask[np.arange(self.n_points), self.correct] = False
        return mask

    @property
    def tie_count(self) -> int:
        """Number of (point, incorrect class) pairs scoring exactly the correct score."""
        ties = (self.scores == self.correct_scores[:, None]) & self.incorrect_mask()
        return int(ties.sum())

    def __eq__(self, other):
        if not isinstance(other, ScoreMatrix):
            return NotImplemented
        return (
            self.class_ids == other.class_ids
            and self.point_ids == other.point_ids
            and np.array_equal(self.correct, other.correct)
            and np.array_equal(self.scores, other.scores)
        )

    __hash__ = None


def _parse_float(text: str, lineno: int, column: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ScoreFileError(
            f"line {lineno}: cannot parse score {text!r} for class {column!r}"
        ) from None
    if math.isnan(value) or math.isinf(value):
        raise ScoreValidationError(f"line {lineno}: non-finite score {text!r} for class {column!r}")
    return value


def load_scores(
    path: str | PathLike,
    orientation: ScoreOrientation = ScoreOrientation.HIGHER_IS_BETTER,
) -> ScoreMatrix:
    """Read a score CSV into a canonical (higher is better) ScoreMatrix.

    The header is ``point_id,correct_class,<class_1>,...,<class_K>``. Files
    with ``orientation=LOWER_IS_BETTER`` (e.g. distances) are negated on load.
    """
    orientation = ScoreOrientation(orientation)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ScoreFileError("line 1: empty file, expected a header") from None
        if len(header) < 3 or header[0] != "point_id" or header[1] != "correct_class":
            raise ScoreFileError(
                "line 1: header must be point_id,correct_class,<class ids...>"
            )
        class_ids = header[2:]
        dupes = [c for c, n in Counter(class_ids).items() if n > 1]
        if dupes:
            raise ScoreFileError(f"line 1: duplicate class ids {dupes}")
        column = {c: j for j, c in enumerate(class_ids)}

        point_ids, correct, rows = [], [], []
        for row in reader:
            lineno = reader.line_num
            if not row:
                continue
            if len(row) != len(header):
                raise ScoreFileError(
                    f"line {lineno}: expected {len(header)} fields, got {len(row)}"
                )
            if row[1] not in column:
                raise ScoreFileError(f"line {lineno}: unknown correct class {row[1]!r}")
            point_ids.append(row[0])
            correct.append(column[row[1]])
            rows.append([_parse_float(v, lineno, c) for v, c in zip(row[2:], class_ids)])

    if not rows:
        raise ScoreFileError("file holds no data rows")
    scores = np.array(rows, dtype=np.float64)
    if orientation is ScoreOrientation.LOWER_IS_BETTER:
        scores = -scores
    m = ScoreMatrix(class_ids, point_ids, correct, scores)
    if m.tie_count:
        log.warning("%s: %d correct/incorrect score ties (counted as errors)", path, m.tie_count)
    return m


def write_scores(m: ScoreMatrix, path: str | PathLike) -> None:
    """Write ``m`` in the score CSV format; ``repr`` floats make it round-trip exactly."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["point_id", "correct_class", *m.class_ids])
        for pid, c, row in zip(m.point_ids, m.correct, m.scores):
            writer.writerow([pid, m.class_ids[c], *map(repr, row.tolist())])


def subsample_classes(m: ScoreMatrix, k1: int, seed) -> ScoreMatrix:
    """Restrict ``m`` to a uniformly random subset of ``k1`` classes.

    Retained classes keep their original column order and points keep their
    original row order. ``seed`` is anything ``numpy.random.default_rng``
    accepts (int, SeedSequence, Generator).
    """
    if not 2 <= k1 <= m.n_classes:
        raise ValueError(f"k1 must satisfy 2 <= k1 <= {m.n_classes}, got {k1}")
    rng = np.random.default_rng(seed)
    chosen = np.sort(rng.choice(m.n_classes, size=k1, replace=False))
    remap = np.full(m.n_classes, -1, dtype=np.intp)
    remap[chosen] = np.arange(k1)
    keep = np.flatnonzero(remap[m.correct] >= 0)
    return ScoreMatrix(
        class_ids=[m.class_ids[j] for j in chosen],
        point_ids=[m.point_ids[i] for i in keep],
        correct=remap[m.correct[keep]],
        scores=m.scores[np.ix_(keep, chosen)],
    )
