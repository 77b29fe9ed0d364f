"""Build the regression dataset from external classifier predictions.

Keeps only samples whose original-input prediction matches the gold label,
then pairs scrambled-input predictions with PMI records: one row per
(sample, seed) in per_seed mode, or one row per sample in averaged mode
(majority consistency, ties toward 0; average PMI).

Predictions are external inputs; nothing here runs a classifier. For pair
tasks whose parts were scored as separate sentences ("<sample_id>#0",
"<sample_id>#1", ...), the sample's PMI and length are the means across
parts.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import DataError
from .infometrics import AVG_SEED, PmiRecord

GRANULARITIES = ("per_seed", "averaged")

CSV_HEADER = ("task", "sample_id", "y", "avg_pmi_bits", "length")


class JoinError(DataError):
    """A prediction sample has no matching PMI records."""


@dataclass(frozen=True)
class PredictionRecord:
    task: str
    sample_id: str
    gold: str
    pred_original: str
    preds_scrambled: dict[int, str]


@dataclass(frozen=True)
class ConsistencyRecord:
    task: str
    sample_id: str
    y: int
    avg_pmi_bits: float
    length: float


class _PmiIndex:
    def __init__(self, records: Iterable[PmiRecord]):
        self.by_key: dict[tuple[str, int | str], PmiRecord] = {}
        self.parts: dict[str, list[str]] = {}
        for r in records:
            self.by_key[(r.sentence_id, r.seed)] = r
            if "#" in r.sentence_id:
                base = r.sentence_id.split("#", 1)[0]
                bucket = self.parts.setdefault(base, [])
                if r.sentence_id not in bucket:
                    bucket.append(r.sentence_id)

    def lookup(self, sample_id: str, seed: int | str) -> tuple[float, float] | None:
        """(pmi_bits, length) for the sample, averaging pair-task parts."""
        rec = self.by_key.get((sample_id, seed))
        if rec is not None:
            return rec.pmi_bits, float(rec.length)
        part_ids = self.parts.get(sample_id)
        if not part_ids:
            return None
        found = [self.by_key.get((pid, seed)) for pid in part_ids]
        if any(r is None for r in found):
            return None
        return (
            sum(r.pmi_bits for r in found) / len(found),
            sum(r.length for r in found) / len(found),
        )


def build_dataset(
    predictions: Sequence[PredictionRecord],
    pmi_records: Sequence[PmiRecord],
    granularity: str = "averaged",
) -> list[ConsistencyRecord]:
    if granularity not in GRANULARITIES:
        raise DataError(f"granularity must be one of {GRANULARITIES}")
    index = _PmiIndex(pmi_records)
    out: list[ConsistencyRecord] = []
    missing: list[str] = []
    for pred in predictions:
        if pred.pred_original != pred.gold:
            continue
        if not pred.preds_scrambled:
            raise DataError(f"sample {pred.sample_id!r} has no scrambled predictions")
        if granularity == "per_seed":
            for seed in sorted(pred.preds_scrambled):
                joined = index.lookup(pred.sample_id, seed)
                if joined is None:
                    missing.append(f"{pred.sample_id}/seed={seed}")
                    continue
                y = int(pred.preds_scrambled[seed] == pred.pred_original)
                out.append(
                    ConsistencyRecord(pred.task, pred.sample_id, y, joined[0], joined[1])
                )
        else:
            joined = index.lookup(pred.sample_id, AVG_SEED)
            if joined is None:
                missing.append(f"{pred.sample_id}/seed=avg")
                continue
            agree = sum(
                int(lbl == pred.pred_original)
                for lbl in pred.preds_scrambled.values()
            )
            y = int(agree * 2 > len(pred.preds_scrambled))  # ties count as 0
            out.append(
                ConsistencyRecord(pred.task, pred.sample_id, y, joined[0], joined[1])
            )
    if missing:
        raise JoinError(
            f"{len(missing)} prediction samples had no PMI records: "
            + ", ".join(missing[:20])
            + ("..." if len(missing) > 20 else "")
        )
    return out


# ---------------------------------------------------------------------------
# file I/O


def read_predictions(path: str) -> list[PredictionRecord]:
    records = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                records.append(
                    PredictionRecord(
                        obj["task"],
                        obj["sample_id"],
                        obj["gold"],
                        obj["pred_original"],
                        {int(k): v for k, v in obj["preds_scrambled"].items()},
                    )
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
                raise DataError(f"{path}:{lineno}: bad prediction record: {e}") from e
    if not records:
        raise DataError(f"{path}: no prediction records")
    return records


def write_predictions(records: Iterable[PredictionRecord], path: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as f:
        for r in records:
            f.write(
                json.dumps(
                    {
                        "task": r.task,
                        "sample_id": r.sample_id,
                        "gold": r.gold,
                        "pred_original": r.pred_original,
                        "preds_scrambled": {
                            str(k): v for k, v in sorted(r.preds_scrambled.items())
                        },
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )
    os.replace(tmp, path)


def write_consistency(records: Iterable[ConsistencyRecord], path: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for r in records:
            writer.writerow([r.task, r.sample_id, r.y, repr(r.avg_pmi_bits), repr(r.length)])
    os.replace(tmp, path)


def read_consistency(path: str) -> list[ConsistencyRecord]:
    records = []
    with open(path, encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or tuple(header) != CSV_HEADER:
            raise DataError(f"{path}: expected header {','.join(CSV_HEADER)}")
        for row in reader:
            if not row:
                continue
            if len(row) != 5:
                raise DataError(f"{path}: bad row {row!r}")
            try:
                records.append(
                    ConsistencyRecord(
                        row[0], row[1], int(row[2]), float(row[3]), float(row[4])
                    )
                )
            except ValueError as e:
                raise DataError(f"{path}: bad row {row!r}: {e}") from e
    if not records:
        raise DataError(f"{path}: no consistency records")
    return records
