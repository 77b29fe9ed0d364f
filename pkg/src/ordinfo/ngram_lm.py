"""Interpolated modified Kneser-Ney n-gram language model.

Supplies the marginal sentence score log2 p(s) in bits. Conventions:

* BOS is a context-only symbol and is never predicted; EOS is predicted,
  so every conditional distribution is over vocabulary + EOS and sums to 1.
* Tokens below the training frequency threshold are mapped to UNK; UNK is
  always in the vocabulary, so out-of-vocabulary queries are well defined.
* Highest-order n-grams keep raw counts. Lower orders use continuation
  counts (distinct left extensions), except n-grams whose context starts
  with BOS, which cannot be left-extended and keep raw counts.
* Discounts per order come from count-of-counts (Y = n1/(n1+2*n2);
  D1 = 1-2*Y*n2/n1; D2 = 2-3*Y*n3/n2; D3 = 3-4*Y*n4/n3), falling back to
  (0.5, 1.0, 1.5) when any of n1..n4 is zero. Discounts are clamped inside
  (0, k) so every conditional keeps strictly positive mass down to the
  uniform base distribution.

All probabilities are log base 2 so downstream PMI is in bits.
"""

from __future__ import annotations

import json
import math
import os
from typing import Iterable, Sequence

from .errors import DataError

BOS = "<s>"
EOS = "</s>"
UNK = "<unk>"

_RESERVED = {BOS, EOS, UNK}

_FALLBACK_DISCOUNTS = (0.5, 1.0, 1.5)
_DISCOUNT_MARGIN = 0.05

FORMAT_NAME = "ordinfo-ngram"
FORMAT_VERSION = 1


class NgramModel:
    """Immutable after training; scoring is safe to call concurrently
    (the internal score cache only ever gains idempotent entries)."""

    def __init__(self, order, vocab, counts, discounts, unk_threshold):
        self.order = order
        self.vocab = frozenset(vocab)          # word types incl. UNK, excl. BOS/EOS
        self.counts = counts                   # counts[k][ctx tuple] -> {word: count}
        self.discounts = discounts             # discounts[k] = (D1, D2, D3plus)
        self.unk_threshold = unk_threshold
        self._support = len(self.vocab) + 1    # + EOS
        self._totals = {
            k: {ctx: sum(ws.values()) for ctx, ws in tables.items()}
            for k, tables in counts.items()
        }
        self._buckets = {
            k: {ctx: _type_buckets(ws) for ctx, ws in tables.items()}
            for k, tables in counts.items()
        }
        self._cache: dict[tuple[tuple[str, ...], str], float] = {}

    # -- scoring ------------------------------------------------------------

    def map_token(self, token: str) -> str:
        return token if token in self.vocab else UNK

    def prob_next(self, context: Sequence[str], word: str) -> float:
        """P(word | last order-1 tokens of context), linear scale."""
        w = EOS if word == EOS else self.map_token(word)
        ctx = tuple(self.map_token(t) if t != BOS else BOS for t in context)
        padded = (BOS,) * (self.order - 1) + ctx
        eff = padded[len(padded) - (self.order - 1):] if self.order > 1 else ()
        key = (eff, w)
        hit = self._cache.get(key)
        if hit is None:
            hit = self._prob(self.order, eff, w)
            self._cache[key] = hit
        return hit

    def logp_next(self, context: Sequence[str], word: str) -> float:
        """log2 P(word | context) in bits."""
        return math.log2(self.prob_next(context, word))

    def logp_sentence(self, tokens: Sequence[str]) -> float:
        """Chain-rule log2 probability including the EOS term, in bits."""
        if not tokens:
            raise DataError("cannot score an empty sentence")
        total = 0.0
        for i, tok in enumerate(tokens):
            total += self.logp_next(tokens[:i], tok)
        total += self.logp_next(tokens, EOS)
        return total

    def _prob(self, k: int, ctx: tuple[str, ...], w: str) -> float:
        if k == 0:
            return 1.0 / self._support
        table = self.counts[k].get(ctx)
        if not table:
            return self._prob(k - 1, ctx[1:], w)
        tot = self._totals[k][ctx]
        d1, d2, d3 = self.discounts[k]
        n1, n2, n3p = self._buckets[k][ctx]
        gamma = (d1 * n1 + d2 * n2 + d3 * n3p) / tot
        c = table.get(w, 0)
        if c == 0:
            disc = 0.0
        elif c == 1:
            disc = c - d1
        elif c == 2:
            disc = c - d2
        else:
            disc = c - d3
        return disc / tot + gamma * self._prob(k - 1, ctx[1:], w)

    # -- serialization --------------------------------------------------------

    def save(self, path: str) -> None:
        tmp = path + ".tmp"
        with open(tmp, "w", encoding="utf-8", newline="\n") as f:
            header = {
                "format": FORMAT_NAME,
                "version": FORMAT_VERSION,
                "order": self.order,
                "unk_threshold": self.unk_threshold,
                "vocab": sorted(self.vocab),
                "discounts": {
                    str(k): list(d) for k, d in sorted(self.discounts.items())
                },
            }
            f.write(json.dumps(header, ensure_ascii=False) + "\n")
            for k in sorted(self.counts):
                for ctx in sorted(self.counts[k]):
                    words = self.counts[k][ctx]
                    f.write(
                        json.dumps(
                            {"k": k, "ctx": list(ctx), "w": sorted(words.items())},
                            ensure_ascii=False,
                        )
                        + "\n"
                    )
        os.replace(tmp, path)

    @classmethod
    def load(cls, path: str) -> "NgramModel":
        with open(path, encoding="utf-8") as f:
            try:
                header = json.loads(f.readline())
            except json.JSONDecodeError as e:
                raise DataError(f"{path}: bad model header: {e}") from e
            if header.get("format") != FORMAT_NAME:
                raise DataError(f"{path}: not an n-gram model dump")
            if header.get("version") != FORMAT_VERSION:
                raise DataError(
                    f"{path}: unsupported model version {header.get('version')}"
                )
            order = header["order"]
            counts: dict[int, dict] = {k: {} for k in range(1, order + 1)}
            for lineno, line in enumerate(f, 2):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                    counts[obj["k"]][tuple(obj["ctx"])] = {
                        w: int(c) for w, c in obj["w"]
                    }
                except (json.JSONDecodeError, KeyError, TypeError) as e:
                    raise DataError(f"{path}:{lineno}: bad count record: {e}") from e
        discounts = {
            int(k): tuple(v) for k, v in header["discounts"].items()
        }
        return cls(order, header["vocab"], counts, discounts, header["unk_threshold"])


def _type_buckets(words: dict) -> tuple[int, int, int]:
    n1 = n2 = n3p = 0
    for c in words.values():
        if c == 1:
            n1 += 1
        elif c == 2:
            n2 += 1
        elif c >= 3:
            n3p += 1
    return n1, n2, n3p


def _estimate_discounts(table: dict) -> tuple[float, float, float]:
    nn = [0, 0, 0, 0]  # counts-of-counts n1..n4
    for words in table.values():
        for c in words.values():
            if 1 <= c <= 4:
                nn[c - 1] += 1
    n1, n2, n3, n4 = nn
    if min(nn) == 0:
        d1, d2, d3 = _FALLBACK_DISCOUNTS
    else:
        y = n1 / (n1 + 2.0 * n2)
        d1 = 1.0 - 2.0 * y * n2 / n1
        d2 = 2.0 - 3.0 * y * n3 / n2
        d3 = 3.0 - 4.0 * y * n4 / n3
    return (
        min(max(d1, _DISCOUNT_MARGIN), 1.0 - _DISCOUNT_MARGIN),
        min(max(d2, _DISCOUNT_MARGIN), 2.0 - _DISCOUNT_MARGIN),
        min(max(d3, _DISCOUNT_MARGIN), 3.0 - _DISCOUNT_MARGIN),
    )


def train(
    corpus: Iterable[Sequence[str]], order: int = 3, unk_threshold: int = 2
) -> NgramModel:
    """Train a modified Kneser-Ney model of the given order (1..5)."""
    if not 1 <= order <= 5:
        raise DataError(f"order must be in 1..5, got {order}")
    sentences = [list(s) for s in corpus]
    if not sentences:
        raise DataError("training corpus is empty")

    freq: dict[str, int] = {}
    for sent in sentences:
        if not sent:
            raise DataError("training corpus contains an empty sentence")
        for tok in sent:
            if tok in _RESERVED:
                raise DataError(f"corpus contains reserved symbol {tok!r}")
            freq[tok] = freq.get(tok, 0) + 1
    vocab = {t for t, c in freq.items() if c >= unk_threshold}
    vocab.add(UNK)

    def mapped(sent):
        return [t if t in vocab else UNK for t in sent]

    counts: dict[int, dict[tuple[str, ...], dict[str, int]]] = {
        k: {} for k in range(1, order + 1)
    }

    def bump(k, ctx, w):
        table = counts[k].setdefault(ctx, {})
        table[w] = table.get(w, 0) + 1

    # highest order: raw counts with BOS padding and EOS target
    for sent in sentences:
        seq = [BOS] * (order - 1) + mapped(sent) + [EOS]
        for i in range(order - 1, len(seq)):
            bump(order, tuple(seq[i - order + 1 : i]), seq[i])

    # lower orders: continuation counts, except BOS-initial contexts (raw)
    for k in range(order - 1, 0, -1):
        for ctx_hi, words in counts[k + 1].items():
            tail = ctx_hi[1:]
            if tail and tail[0] == BOS:
                continue
            for w in words:
                bump(k, tail, w)
        if k >= 2:
            for sent in sentences:
                seq = [BOS] * (k - 1) + mapped(sent) + [EOS]
                for p in range(k - 1):  # windows whose context still holds BOS
                    if p + k <= len(seq):
                        bump(k, tuple(seq[p : p + k - 1]), seq[p + k - 1])

    discounts = {k: _estimate_discounts(counts[k]) for k in counts}
    return NgramModel(order, vocab, counts, discounts, unk_threshold)
