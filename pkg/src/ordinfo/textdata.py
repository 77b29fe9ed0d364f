"""Corpus ingestion, tokenization, seeded scrambling, and dataset file I/O.

Sentence files are line-delimited JSON (canonical) or 4-column TSV
(id, task, split, text). Scramble files are line-delimited JSON. All
writers are deterministic: same inputs, byte-identical outputs.
"""

from __future__ import annotations

import json
import os
import string
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import DataError
from .rng import SplitMix64, derive_seed

SPLITS = ("train", "val", "probe")

_PUNCT = set(string.punctuation)


class EmptyTextError(DataError):
    pass


class DuplicateSeedError(DataError):
    pass


class UnknownTaskError(DataError):
    pass


@dataclass(frozen=True)
class SentenceRecord:
    id: str
    task: str
    tokens: tuple[str, ...]
    split: str = "train"

    def __post_init__(self):
        if not self.tokens:
            raise DataError(f"sentence {self.id!r} has no tokens")
        if self.split not in SPLITS:
            raise DataError(f"sentence {self.id!r} has unknown split {self.split!r}")


@dataclass(frozen=True)
class ScramblePair:
    sentence_id: str
    seed: int
    scrambled: tuple[str, ...]


@dataclass(frozen=True)
class CorpusStats:
    task: str
    n_sentences: int
    avg_length: float


def tokenize(text: str, lowercase: bool = False) -> list[str]:
    """Whitespace split with leading/trailing punctuation detached per chunk.

    Internal punctuation (hyphens, apostrophes) stays attached, so "don't"
    is one token while "rock." becomes ["rock", "."].
    """
    if not text.strip():
        raise EmptyTextError("text is empty after trimming")
    if lowercase:
        text = text.lower()
    tokens: list[str] = []
    for chunk in text.split():
        head: list[str] = []
        tail: list[str] = []
        while len(chunk) > 1 and chunk[0] in _PUNCT:
            head.append(chunk[0])
            chunk = chunk[1:]
        while len(chunk) > 1 and chunk[-1] in _PUNCT:
            tail.append(chunk[-1])
            chunk = chunk[:-1]
        tokens.extend(head)
        tokens.append(chunk)
        tokens.extend(reversed(tail))
    return tokens


def scramble(tokens: Sequence[str], seed: int) -> list[str]:
    """Uniform random permutation via splitmix64-driven Fisher-Yates.

    The identity permutation is not excluded; every ordering of the
    multiset has probability 1/n! per draw.
    """
    if not tokens:
        raise DataError("cannot scramble an empty token sequence")
    out = list(tokens)
    SplitMix64(seed).shuffle(out)
    return out


def make_scramble_set(
    corpus: Iterable[SentenceRecord], seeds: Sequence[int]
) -> list[ScramblePair]:
    """One ScramblePair per (sentence, seed).

    The recorded seed is the nominal grouping seed; the permutation is drawn
    from a stream derived from (seed, sentence_id) so that one nominal seed
    does not impose a single permutation pattern on every sentence of a
    given length. Regeneration with the same inputs is byte-identical.
    """
    if not seeds:
        raise DataError("seed list is empty")
    if len(set(seeds)) != len(seeds):
        raise DuplicateSeedError(f"duplicate seeds in {list(seeds)}")
    pairs = []
    for rec in corpus:
        for seed in seeds:
            perm = scramble(rec.tokens, derive_seed(seed, rec.id))
            pairs.append(ScramblePair(rec.id, seed, tuple(perm)))
    return pairs


def default_seeds(k: int = 6) -> list[int]:
    return list(range(k))


def corpus_stats(
    corpus: Iterable[SentenceRecord], task: str | None = None
) -> list[CorpusStats]:
    """Sentence count and mean token length per task (or one filtered task)."""
    counts: dict[str, int] = {}
    lengths: dict[str, int] = {}
    for rec in corpus:
        counts[rec.task] = counts.get(rec.task, 0) + 1
        lengths[rec.task] = lengths.get(rec.task, 0) + len(rec.tokens)
    if task is not None:
        if task not in counts:
            raise UnknownTaskError(f"no sentences for task {task!r}")
        return [CorpusStats(task, counts[task], lengths[task] / counts[task])]
    return [
        CorpusStats(t, counts[t], lengths[t] / counts[t]) for t in sorted(counts)
    ]


# ---------------------------------------------------------------------------
# file I/O


def parse_sentence_line(line: str, lowercase: bool = False) -> SentenceRecord:
    line = line.rstrip("\n")
    if line.lstrip().startswith("{"):
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            raise DataError(f"bad JSON sentence line: {e}") from e
        missing = {"id", "task", "split", "text"} - obj.keys()
        if missing:
            raise DataError(f"sentence record missing fields {sorted(missing)}")
        text = obj["text"]
        task, split, sid = obj["task"], obj["split"], obj["id"]
    else:
        parts = line.split("\t")
        if len(parts) != 4:
            raise DataError(f"expected 4 tab-separated fields, got {len(parts)}")
        sid, task, split, text = parts
    return SentenceRecord(sid, task, tuple(tokenize(text, lowercase)), split)


def read_sentences(path: str, lowercase: bool = False) -> list[SentenceRecord]:
    records = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                rec = parse_sentence_line(line, lowercase)
            except DataError as e:
                raise DataError(f"{path}:{lineno}: {e}") from e
            if rec.id in seen:
                raise DataError(f"{path}:{lineno}: duplicate sentence id {rec.id!r}")
            seen.add(rec.id)
            records.append(rec)
    if not records:
        raise DataError(f"{path}: no sentence records")
    return records


def write_sentences(records: Iterable[SentenceRecord], path: str) -> None:
    _atomic_write_lines(
        path,
        (
            json.dumps(
                {
                    "id": r.id,
                    "task": r.task,
                    "split": r.split,
                    "text": " ".join(r.tokens),
                },
                ensure_ascii=False,
            )
            for r in records
        ),
    )


def read_scrambles(path: str) -> list[ScramblePair]:
    pairs = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                pairs.append(
                    ScramblePair(
                        obj["sentence_id"], int(obj["seed"]), tuple(obj["scrambled"])
                    )
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
                raise DataError(f"{path}:{lineno}: bad scramble record: {e}") from e
    if not pairs:
        raise DataError(f"{path}: no scramble records")
    return pairs


def write_scrambles(pairs: Iterable[ScramblePair], path: str) -> None:
    _atomic_write_lines(
        path,
        (
            json.dumps(
                {
                    "sentence_id": p.sentence_id,
                    "seed": p.seed,
                    "scrambled": list(p.scrambled),
                },
                ensure_ascii=False,
            )
            for p in pairs
        ),
    )


def _atomic_write_lines(path: str, lines: Iterable[str]) -> None:
    """Write via temp file + rename so failures never leave partial output."""
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as f:
        for line in lines:
            f.write(line)
            f.write("\n")
    os.replace(tmp, path)
