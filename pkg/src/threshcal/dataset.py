"""Loading, cleaning and splitting labeled score data.

A record is one ``(score, label)`` observation. Labels are PASS (the
answer is grounded, encoded ``y = 1``) or FAIL (hallucinated, ``y = 0``).
Raw files may contain missing or out-of-range scores; :func:`clean`
removes them and reports how many rows were dropped.

Answers shorter than three tokens are expected to be filtered upstream,
before scores are produced; this module never sees answer text.
"""

from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    DatasetNotFound,
    DegenerateSplit,
    EmptyAfterCleaning,
    LabelUnmapped,
    MissingField,
    OutOfRange,
    TooFewPerClass,
)


class Label(enum.Enum):
    FAIL = 0
    PASS = 1


class FileFormat(str, enum.Enum):
    CSV = "csv"
    JSONL = "jsonl"

    @classmethod
    def from_path(cls, path) -> "FileFormat":
        suffix = Path(path).suffix.lower()
        if suffix in (".jsonl", ".ndjson"):
            return cls.JSONL
        return cls.CSV


@dataclass(frozen=True)
class LabeledScoreRecord:
    id: str
    score: float  # NaN marks a missing score before cleaning
    label: Label | None  # None only for rows kept with on_bad_label="drop"
    source: str | None = None
    extras: Mapping[str, str] = field(default_factory=dict)

    def __eq__(self, other):
        if not isinstance(other, LabeledScoreRecord):
            return NotImplemented
        same_score = self.score == other.score or (
            math.isnan(self.score) and math.isnan(other.score)
        )
        return (
            same_score
            and self.id == other.id
            and self.label == other.label
            and self.source == other.source
            and dict(self.extras) == dict(other.extras)
        )

    def __hash__(self):
        return hash((self.id, self.label))


@dataclass(frozen=True, eq=False)
class ScoreDataset:
    records: tuple[LabeledScoreRecord, ...]
    metric_name: str = "score"

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))

    def __len__(self):
        return len(self.records)

    def __eq__(self, other):
        if not isinstance(other, ScoreDataset):
            return NotImplemented
        return self.metric_name == other.metric_name and self.records == other.records

    @cached_property
    def scores(self) -> np.ndarray:
        arr = np.array([r.score for r in self.records], dtype=float)
        arr.setflags(write=False)
        return arr

    @cached_property
    def y(self) -> np.ndarray:
        """Integer labels, 1 for PASS and 0 for FAIL (-1 for unmapped)."""
        arr = np.array(
            [-1 if r.label is None else r.label.value for r in self.records],
            dtype=np.int64,
        )
        arr.setflags(write=False)
        return arr

    def class_counts(self) -> dict[Label, int]:
        return {lab: int(np.sum(self.y == lab.value)) for lab in Label}

    def subset(self, indices: Iterable[int]) -> "ScoreDataset":
        recs = self.records
        return ScoreDataset(tuple(recs[int(i)] for i in indices), self.metric_name)

    @classmethod
    def from_arrays(cls, scores, y, metric_name="score", source=None) -> "ScoreDataset":
        """Build a dataset from parallel arrays; ``y`` is 1 for PASS, 0 for FAIL."""
        scores = np.asarray(scores, dtype=float)
        y = np.asarray(y)
        if scores.shape != y.shape:
            raise ValueError("scores and labels must have the same length")
        records = tuple(
            LabeledScoreRecord(str(i), float(s), Label.PASS if int(t) == 1 else Label.FAIL, source)
            for i, (s, t) in enumerate(zip(scores, y))
        )
        return cls(records, metric_name)


@dataclass(frozen=True)
class CleaningReport:
    rows_in: int
    rows_dropped_missing_score: int
    rows_dropped_bad_label: int
    rows_out: int

    def to_dict(self) -> dict[str, int]:
        return {
            "rows_in": self.rows_in,
            "rows_dropped_missing_score": self.rows_dropped_missing_score,
            "rows_dropped_bad_label": self.rows_dropped_bad_label,
            "rows_out": self.rows_out,
        }


@dataclass(frozen=True, eq=False)
class FoldAssignment:
    k: int
    fold_of: np.ndarray
    seed: int

    def __eq__(self, other):
        if not isinstance(other, FoldAssignment):
            return NotImplemented
        return (
            self.k == other.k
            and self.seed == other.seed
            and np.array_equal(self.fold_of, other.fold_of)
        )

    def test_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of == fold)

    def train_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of != fold)

    def splits(self):
        for fold in range(self.k):
            yield self.train_indices(fold), self.test_indices(fold)


# ---------------------------------------------------------------------------
# Loading
# ---------------------------------------------------------------------------

def parse_score(raw) -> float:
    """Parse a raw score cell; anything unparseable becomes NaN."""
    if raw is None or isinstance(raw, bool):
        return math.nan
    if isinstance(raw, (int, float)):
        return float(raw)
    text = str(raw).strip()
    if not text:
        return math.nan
    try:
        return float(text)
    except ValueError:
        return math.nan


def _map_label(value, pass_token, fail_token, row, on_bad_label):
    text = "" if value is None else str(value).strip()
    if text == pass_token:
        return Label.PASS
    if text == fail_token:
        return Label.FAIL
    if on_bad_label == "drop":
        return None
    raise LabelUnmapped(row, value)


def _iter_rows(path: Path, fmt: FileFormat):
    if fmt is FileFormat.CSV:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None:
                raise MissingField("<header>")
            yield list(reader.fieldnames)
            yield from reader
    else:
        with open(path, encoding="utf-8") as fh:
            yield None
            for line in fh:
                line = line.strip()
                if line:
                    yield json.loads(line)


def load_dataset(
    path,
    format: FileFormat | str | None = None,
    score_field: str = "score",
    label_field: str = "label",
    pass_token: str = "PASS",
    fail_token: str = "FAIL",
    id_field: str = "id",
    source_field: str | None = "source",
    metric_name: str | None = None,
    on_bad_label: str = "error",
) -> ScoreDataset:
    """Read a CSV or JSONL file into an uncleaned :class:`ScoreDataset`.

    Unparseable scores are kept as NaN so :func:`clean` can count them.
    Columns other than id/score/label/source are carried in ``extras``.
    With ``on_bad_label="drop"`` unmapped labels are kept as ``None`` and
    removed by :func:`clean` instead of raising :class:`LabelUnmapped`.
    """
    path = Path(path)
    if not path.is_file():
        raise DatasetNotFound(f"no such file: {path}")
    fmt = FileFormat(format) if format is not None else FileFormat.from_path(path)
    if on_bad_label not in ("error", "drop"):
        raise OutOfRange(f"on_bad_label must be 'error' or 'drop', got {on_bad_label!r}")

    rows = _iter_rows(path, fmt)
    header = next(rows)
    if header is not None:
        for name in (score_field, label_field):
            if name not in header:
                raise MissingField(name)

    reserved = {score_field, label_field, id_field}
    if source_field:
        reserved.add(source_field)
    records = []
    for i, row in enumerate(rows):
        for name in (score_field, label_field):
            if name not in row:
                raise MissingField(name)
        label = _map_label(row[label_field], pass_token, fail_token, i, on_bad_label)
        rid = row.get(id_field)
        source = row.get(source_field) if source_field else None
        extras = {
            str(k): ("" if v is None else str(v))
            for k, v in row.items()
            if k not in reserved
        }
        records.append(
            LabeledScoreRecord(
                id=str(i) if rid in (None, "") else str(rid),
                score=parse_score(row[score_field]),
                label=label,
                source=None if source in (None, "") else str(source),
                extras=extras,
            )
        )
    return ScoreDataset(tuple(records), metric_name or score_field)


def save_dataset(
    dataset: ScoreDataset,
    path,
    format: FileFormat | str | None = None,
    pass_token: str = "PASS",
    fail_token: str = "FAIL",
) -> None:
    """Write ``dataset`` in a layout :func:`load_dataset` reads back verbatim."""
    path = Path(path)
    fmt = FileFormat(format) if format is not None else FileFormat.from_path(path)
    token = {Label.PASS: pass_token, Label.FAIL: fail_token, None: ""}
    extra_keys: list[str] = []
    for r in dataset.records:
        for k in r.extras:
            if k not in extra_keys:
                extra_keys.append(k)

    def as_row(r):
        row = {"id": r.id, "score": repr(r.score), "label": token[r.label]}
        row["source"] = r.source or ""
        for k in extra_keys:
            row[k] = r.extras.get(k, "")
        return row

    if fmt is FileFormat.CSV:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=["id", "score", "label", "source", *extra_keys])
            writer.writeheader()
            for r in dataset.records:
                writer.writerow(as_row(r))
    else:
        with open(path, "w", encoding="utf-8") as fh:
            for r in dataset.records:
                row = as_row(r)
                row["score"] = r.score if math.isfinite(r.score) else None
                fh.write(json.dumps(row, ensure_ascii=False) + "\n")


# ---------------------------------------------------------------------------
# Cleaning
# ---------------------------------------------------------------------------

def clean(dataset: ScoreDataset) -> tuple[ScoreDataset, CleaningReport]:
    """Drop records with missing/non-finite/out-of-range scores or no label."""
    kept = []
    bad_score = bad_label = 0
    for r in dataset.records:
        if not (math.isfinite(r.score) and 0.0 <= r.score <= 1.0):
            bad_score += 1
        elif r.label is None:
            bad_label += 1
        else:
            kept.append(r)
    report = CleaningReport(len(dataset), bad_score, bad_label, len(kept))
    if not kept:
        raise EmptyAfterCleaning(
            f"no records survive cleaning ({bad_score} bad scores, {bad_label} bad labels)"
        )
    return ScoreDataset(tuple(kept), dataset.metric_name), report


# ---------------------------------------------------------------------------
# Splitting
# ---------------------------------------------------------------------------

def _rng(seed) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed)))


def stratified_kfold(dataset: ScoreDataset, k: int = 5, seed: int = 0) -> FoldAssignment:
    """Assign each record to one of ``k`` folds, stratified by label.

    Each class is shuffled with a seeded generator and dealt round-robin;
    the dealing position carries over from one class to the next so the
    overall fold sizes also differ by at most one.
    """
    if k < 2:
        raise OutOfRange(f"k must be >= 2, got {k}")
    y = dataset.y
    for lab in (Label.FAIL, Label.PASS):
        count = int(np.sum(y == lab.value))
        if count < k:
            raise TooFewPerClass(lab.name, count, k)

    rng = _rng(seed)
    fold_of = np.empty(len(dataset), dtype=np.int64)
    offset = 0
    for lab in (Label.FAIL, Label.PASS):
        idx = np.flatnonzero(y == lab.value)
        rng.shuffle(idx)
        fold_of[idx] = (offset + np.arange(idx.size)) % k
        offset = (offset + idx.size) % k
    fold_of.setflags(write=False)
    return FoldAssignment(k=k, fold_of=fold_of, seed=int(seed))


def split_holdout(
    dataset: ScoreDataset,
    calib_fraction: float = 0.5,
    seed: int = 0,
    stratified: bool = True,
) -> tuple[ScoreDataset, ScoreDataset]:
    """Split into a fitting part and a calibration part (``calib_fraction``).

    Record order is preserved inside each part.
    """
    if not 0.0 < calib_fraction < 1.0:
        raise OutOfRange(f"calib_fraction must be in (0, 1), got {calib_fraction}")
    rng = _rng(seed)
    if stratified:
        groups = [np.flatnonzero(dataset.y == v) for v in np.unique(dataset.y)]
    else:
        groups = [np.arange(len(dataset))]
    calib = []
    for idx in groups:
        idx = idx.copy()
        rng.shuffle(idx)
        calib.append(idx[: int(round(calib_fraction * idx.size))])
    calib_idx = np.sort(np.concatenate(calib)) if calib else np.empty(0, dtype=int)
    mask = np.zeros(len(dataset), dtype=bool)
    mask[calib_idx] = True
    fit_idx = np.flatnonzero(~mask)
    if fit_idx.size == 0 or calib_idx.size == 0:
        raise DegenerateSplit(
            f"fraction {calib_fraction} leaves {fit_idx.size} fit / {calib_idx.size} calibration records"
        )
    return dataset.subset(fit_idx), dataset.subset(calib_idx)


def label_balance(dataset: ScoreDataset) -> dict[str, int]:
    counts = dataset.class_counts()
    return {lab.name: counts[lab] for lab in Label}


def as_arrays(values: Sequence[float], labels) -> tuple[np.ndarray, np.ndarray]:
    """Coerce a value list and a label list (Label, 0/1 or bool) to arrays."""
    v = np.asarray(values, dtype=float)
    y = np.array(
        [lab.value if isinstance(lab, Label) else int(lab) for lab in labels],
        dtype=np.int64,
    )
    if v.shape != y.shape:
        raise ValueError("values and labels must have the same length")
    return v, y
