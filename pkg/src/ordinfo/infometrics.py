"""PMI per sentence pair, the corpus-level MI lower bound, edit-distance
probe/control accuracies, and the length-PMI correlation.

PMI here is log2 q(s|t) - log2 p(s) in bits; its sample mean over (s, t)
pairs is a Monte-Carlo estimate of a lower bound on the mutual information
between sentences and their scrambles (it undershoots by the KL gap
between the true posterior over orderings and q, which is not estimated).
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import DataError
from .textdata import ScramblePair, SentenceRecord

AVG_SEED = "avg"

TokenScorer = Callable[[Sequence[str]], float]
PairScorer = Callable[[Sequence[str], Sequence[str]], float]


class DegenerateDataError(DataError):
    pass


@dataclass(frozen=True)
class PmiRecord:
    sentence_id: str
    seed: int | str  # scramble seed, or "avg" for the per-sentence mean
    pmi_bits: float
    length: int


@dataclass(frozen=True)
class MiEstimate:
    n_pairs: int
    bound_bits: float
    std_err: float


@dataclass(frozen=True)
class ProbeScores:
    sentence_id: str
    seed: int
    pa: float
    ca: float


@dataclass(frozen=True)
class CorrelationReport:
    r: float
    ci_low: float
    ci_high: float
    n: int


def pmi(q_bits: float, p_bits: float) -> float:
    """Pointwise MI in bits: log2 q(s|t) - log2 p(s)."""
    if not (math.isfinite(q_bits) and math.isfinite(p_bits)):
        raise DataError("pmi requires finite log probabilities")
    return q_bits - p_bits


def pair_pmi_records(
    sentences: Iterable[SentenceRecord],
    pairs: Iterable[ScramblePair],
    logp_sentence: TokenScorer,
    q_logp: PairScorer,
) -> list[PmiRecord]:
    """One PmiRecord per scramble pair, in input order."""
    by_id = {s.id: s for s in sentences}
    records = []
    for pair in pairs:
        sent = by_id.get(pair.sentence_id)
        if sent is None:
            raise DataError(f"scramble references unknown sentence {pair.sentence_id!r}")
        value = pmi(q_logp(sent.tokens, pair.scrambled), logp_sentence(sent.tokens))
        records.append(PmiRecord(sent.id, pair.seed, value, len(sent.tokens)))
    return records


def avg_pmi(
    sentence: SentenceRecord,
    scrambles: Sequence[ScramblePair],
    logp_sentence: TokenScorer,
    q_logp: PairScorer,
) -> PmiRecord:
    """Arithmetic mean of per-pair PMI over the sampled scrambles."""
    if not scrambles:
        raise DataError(f"no scrambles for sentence {sentence.id!r}")
    per_pair = pair_pmi_records([sentence] * 1, scrambles, logp_sentence, q_logp)
    mean = sum(r.pmi_bits for r in per_pair) / len(per_pair)
    return PmiRecord(sentence.id, AVG_SEED, mean, len(sentence.tokens))


def average_records(records: Sequence[PmiRecord]) -> list[PmiRecord]:
    """Collapse per-pair records into one seed="avg" record per sentence."""
    sums: dict[str, list] = {}
    for r in records:
        if r.seed == AVG_SEED:
            continue
        entry = sums.setdefault(r.sentence_id, [0.0, 0, r.length])
        entry[0] += r.pmi_bits
        entry[1] += 1
    return [
        PmiRecord(sid, AVG_SEED, total / n, length)
        for sid, (total, n, length) in sums.items()
    ]


def mi_bound(pair_pmis: Iterable[float]) -> MiEstimate:
    """Sample mean of PMI with its Monte-Carlo standard error."""
    values = np.asarray(list(pair_pmis), dtype=float)
    if values.size == 0:
        raise DataError("mi_bound needs at least one PMI value")
    mean = float(values.mean())
    se = float(values.std(ddof=1) / math.sqrt(values.size)) if values.size > 1 else 0.0
    return MiEstimate(int(values.size), mean, se)


def levenshtein(a: Sequence, b: Sequence) -> int:
    """Edit distance (insert/delete/substitute, unit costs) between sequences."""
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a):
        cur = [i + 1]
        for j, y in enumerate(b):
            cur.append(min(prev[j + 1] + 1, cur[j] + 1, prev[j] + (x != y)))
        prev = cur
    return prev[-1]


def _edit_similarity(
    a: Sequence[str], b: Sequence[str], granularity: str, normalization: str
) -> float:
    if not a and not b:
        raise DataError("cannot score two empty sequences")
    if granularity == "char":
        a, b = " ".join(a), " ".join(b)
    elif granularity != "token":
        raise DataError(f"unknown granularity {granularity!r}")
    dist = levenshtein(a, b)
    if normalization == "max":
        norm = dist / max(len(a), len(b))
    elif normalization == "metric":
        norm = 2.0 * dist / (len(a) + len(b) + dist) if dist else 0.0
    else:
        raise DataError(f"unknown normalization {normalization!r}")
    return min(1.0, max(0.0, 1.0 - norm))


def probe_accuracy(
    original: Sequence[str],
    reconstructed: Sequence[str],
    granularity: str = "token",
    normalization: str = "max",
) -> float:
    """1 - normalized edit distance between original and reconstruction."""
    return _edit_similarity(original, reconstructed, granularity, normalization)


def control_accuracy(
    original: Sequence[str],
    scrambled: Sequence[str],
    granularity: str = "token",
    normalization: str = "max",
) -> float:
    """Same similarity, but against the scramble itself (how much scrambling
    left intact; the do-nothing baseline for the reorderer)."""
    return _edit_similarity(original, scrambled, granularity, normalization)


def length_pmi_correlation(records: Sequence[PmiRecord]) -> CorrelationReport:
    """Pearson correlation of sentence length vs PMI with a Fisher-z 95% CI."""
    if len(records) < 3:
        raise DataError("correlation needs at least 3 records")
    x = np.asarray([r.length for r in records], dtype=float)
    y = np.asarray([r.pmi_bits for r in records], dtype=float)
    if x.std() == 0.0 or y.std() == 0.0:
        raise DegenerateDataError("length or PMI has zero variance")
    r = float(np.corrcoef(x, y)[0, 1])
    n = len(records)
    if abs(r) >= 1.0 - 1e-12 or n <= 3:
        return CorrelationReport(r, r, r, n)
    z = math.atanh(r)
    se = 1.0 / math.sqrt(n - 3)
    return CorrelationReport(
        r, math.tanh(z - 1.959963984540054 * se), math.tanh(z + 1.959963984540054 * se), n
    )


# ---------------------------------------------------------------------------
# file I/O


def write_pmi_records(records: Iterable[PmiRecord], path: str) -> None:
    _write_jsonl(
        path,
        (
            {
                "sentence_id": r.sentence_id,
                "seed": r.seed,
                "pmi_bits": r.pmi_bits,
                "length": r.length,
            }
            for r in records
        ),
    )


def read_pmi_records(path: str) -> list[PmiRecord]:
    records = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                seed = obj["seed"]
                records.append(
                    PmiRecord(
                        obj["sentence_id"],
                        seed if seed == AVG_SEED else int(seed),
                        float(obj["pmi_bits"]),
                        int(obj["length"]),
                    )
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
                raise DataError(f"{path}:{lineno}: bad PMI record: {e}") from e
    if not records:
        raise DataError(f"{path}: no PMI records")
    return records


def write_probe_scores(scores: Iterable[ProbeScores], path: str) -> None:
    _write_jsonl(
        path,
        (
            {"sentence_id": s.sentence_id, "seed": s.seed, "pa": s.pa, "ca": s.ca}
            for s in scores
        ),
    )


def read_probe_scores(path: str) -> list[ProbeScores]:
    scores = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                scores.append(
                    ProbeScores(
                        obj["sentence_id"], int(obj["seed"]),
                        float(obj["pa"]), float(obj["ca"]),
                    )
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
                raise DataError(f"{path}:{lineno}: bad probe record: {e}") from e
    if not scores:
        raise DataError(f"{path}: no probe records")
    return scores


def write_score_histogram(scores: Sequence[ProbeScores], path: str, bins: int = 20) -> None:
    """CSV histogram of PA and CA over [0, 1], plot-ready."""
    edges = np.linspace(0.0, 1.0, bins + 1)
    pa_counts, _ = np.histogram([s.pa for s in scores], bins=edges)
    ca_counts, _ = np.histogram([s.ca for s in scores], bins=edges)
    lines = ["metric,bin_low,bin_high,count"]
    for name, counts in (("pa", pa_counts), ("ca", ca_counts)):
        for i, c in enumerate(counts):
            lines.append(f"{name},{edges[i]!r},{edges[i + 1]!r},{int(c)}")
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(lines) + "\n")
    os.replace(tmp, path)


def _write_jsonl(path: str, objs: Iterable[dict]) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as f:
        for obj in objs:
            f.write(json.dumps(obj, ensure_ascii=False))
            f.write("\n")
    os.replace(tmp, path)
