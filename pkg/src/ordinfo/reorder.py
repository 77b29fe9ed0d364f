"""Insertion-based reordering distribution over permutations of a token bag.

q(s|t) factorizes over positions: at step i the probability of emitting
word type w is

    count_remaining(w) * 2^(score(w | s_<i) / tau)

normalized over the remaining types, where score is the step LM's
incremental log2 probability. Multiplicity weighting makes q a proper
distribution over *distinct* orderings, and the value depends on t only
through its multiset, which is the sufficient statistic of a uniformly
scrambled sequence.

The free parameter tau is fitted by maximizing mean log2 q(s|t) on
held-out (s, t) pairs, i.e. the tractable side of the KL minimization
that tightens the mutual-information lower bound.

Models are immutable once built; q_logp and decode are safe to call
concurrently.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

from .errors import DataError
from .ngram_lm import NgramModel

DEFAULT_BEAM_WIDTH = 16
DEFAULT_TAU_BOUNDS = (0.05, 32.0)

_PHI = (math.sqrt(5.0) - 1.0) / 2.0  # golden ratio step


class MultisetMismatchError(DataError):
    pass


@dataclass(frozen=True)
class ReorderModel:
    step_lm: NgramModel
    temperature: float = 1.0

    def __post_init__(self):
        if not (self.temperature > 0.0 and math.isfinite(self.temperature)):
            raise DataError(f"temperature must be finite positive, got {self.temperature}")


@dataclass(frozen=True)
class Derivation:
    tokens: tuple[str, ...]
    step_logps: tuple[float, ...]
    total: float


def _log2sumexp(values):
    m = max(values)
    return m + math.log2(sum(2.0 ** (v - m) for v in values))


def _step_weights(model: ReorderModel, prefix: Sequence[str], remaining: Counter):
    """log2 un-normalized selection weight per remaining type, plus normalizer."""
    types = sorted(remaining)
    logw = [
        math.log2(remaining[w]) + model.step_lm.logp_next(prefix, w) / model.temperature
        for w in types
    ]
    return types, logw, _log2sumexp(logw)


def q_logp(model: ReorderModel, s: Sequence[str], t: Sequence[str]) -> float:
    """log2 q(s | t) in bits; requires multiset(s) == multiset(t)."""
    remaining = Counter(t)
    if Counter(s) != remaining:
        raise MultisetMismatchError(
            f"token multisets differ: {sorted(s)} vs {sorted(t)}"
        )
    total = 0.0
    prefix: list[str] = []
    for tok in s:
        types, logw, norm = _step_weights(model, prefix, remaining)
        total += logw[types.index(tok)] - norm
        remaining[tok] -= 1
        if remaining[tok] == 0:
            del remaining[tok]
        prefix.append(tok)
    return total


def decode(
    model: ReorderModel, t: Sequence[str], beam_width: int = DEFAULT_BEAM_WIDTH
) -> Derivation:
    """Beam search for the highest-q ordering of t's tokens.

    Ties in total score break lexicographically on the token sequence;
    beam_width=1 is greedy sequential argmax.
    """
    if beam_width < 1:
        raise DataError(f"beam_width must be >= 1, got {beam_width}")
    if not t:
        raise DataError("cannot decode an empty token bag")
    beam = [(0.0, [], Counter(t), [])]  # (logq, prefix, remaining, step logps)
    for _ in range(len(t)):
        candidates = []
        for logq, prefix, remaining, steps in beam:
            types, logw, norm = _step_weights(model, prefix, remaining)
            for w, lw in zip(types, logw):
                step = lw - norm
                nxt = remaining.copy()
                nxt[w] -= 1
                if nxt[w] == 0:
                    del nxt[w]
                candidates.append((logq + step, prefix + [w], nxt, steps + [step]))
        candidates.sort(key=lambda c: (-c[0], c[1]))
        beam = candidates[:beam_width]
    best = beam[0]
    return Derivation(tuple(best[1]), tuple(best[3]), best[0])


def _pair_steps(step_lm: NgramModel, s: Sequence[str], t: Sequence[str]):
    """Per-step (chosen index, counts, raw scores) with tau factored out."""
    remaining = Counter(t)
    if Counter(s) != remaining:
        raise MultisetMismatchError(
            f"token multisets differ: {sorted(s)} vs {sorted(t)}"
        )
    steps = []
    prefix: list[str] = []
    for tok in s:
        types = sorted(remaining)
        counts = [remaining[w] for w in types]
        scores = [step_lm.logp_next(prefix, w) for w in types]
        steps.append((types.index(tok), counts, scores))
        remaining[tok] -= 1
        if remaining[tok] == 0:
            del remaining[tok]
        prefix.append(tok)
    return steps


def mean_q_logp(step_lm: NgramModel, pairs, tau: float) -> float:
    """Mean log2 q(s|t) at the given temperature; step scores are reusable."""
    cached = [_pair_steps(step_lm, s, t) for s, t in pairs]
    return _mean_logq_from_steps(cached, tau)


def _mean_logq_from_steps(cached, tau):
    total = 0.0
    for steps in cached:
        for chosen, counts, scores in steps:
            logw = [
                math.log2(c) + sc / tau for c, sc in zip(counts, scores)
            ]
            total += logw[chosen] - _log2sumexp(logw)
    return total / len(cached)


def fit_temperature(
    step_lm: NgramModel,
    pairs,
    bounds: tuple[float, float] = DEFAULT_TAU_BOUNDS,
    tol: float = 1e-6,
) -> float:
    """Golden-section search on log tau maximizing mean log2 q(s|t).

    Ties break toward the smaller temperature. The returned value never
    scores below either bound.
    """
    pairs = list(pairs)
    if not pairs:
        raise DataError("no held-out pairs to fit temperature on")
    lo, hi = bounds
    if not (0.0 < lo < hi and math.isfinite(hi)):
        raise DataError(f"invalid temperature bounds {bounds}")
    cached = [_pair_steps(step_lm, s, t) for s, t in pairs]

    def objective(u: float) -> float:
        return _mean_logq_from_steps(cached, math.exp(u))

    a, b = math.log(lo), math.log(hi)
    x1 = b - _PHI * (b - a)
    x2 = a + _PHI * (b - a)
    f1, f2 = objective(x1), objective(x2)
    while b - a > tol:
        if f1 >= f2:  # keep the left interval on ties -> smaller tau
            b, x2, f2 = x2, x1, f1
            x1 = b - _PHI * (b - a)
            f1 = objective(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _PHI * (b - a)
            f2 = objective(x2)
    # candidates ordered smallest first so ties resolve toward smaller tau
    candidates = sorted({lo, math.exp((a + b) / 2.0), hi})
    best = max(candidates, key=lambda tau: (_mean_logq_from_steps(cached, tau), -tau))
    return best
