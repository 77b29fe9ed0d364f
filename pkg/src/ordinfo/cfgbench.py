"""Context-free grammar sentence generation and the reordering diagnostic.

Two shipped grammars contrast sentences whose argument roles are
recoverable from number agreement and animacy cues (tag A) against
sentences with two interchangeable proper-noun arguments where only word
order marks the roles (tag B). A reorderer with an in-domain step LM
should reconstruct the former nearly perfectly and hit chance on the
subject/object choice of the latter.

Grammar file format::

    # comment
    tag: A
    start: S
    S -> SUBJ VP | SUBJ VP ADV
    lexicon:
    NAME[proper,animate,sg] -> Sam | John

Rules map one nonterminal to alternatives separated by "|"; lexicon
entries may carry bracketed feature annotations (recorded, not
interpreted). Terminals are symbols that never appear on a left-hand
side.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources
from typing import Sequence

from . import reorder as reorder_mod
from .errors import DataError
from .ngram_lm import train as train_lm
from .reorder import ReorderModel, decode, fit_temperature
from .rng import SplitMix64, derive_seed
from .textdata import SentenceRecord, scramble

_RULE_RE = re.compile(r"^(?P<lhs>\S+?)(?:\[(?P<feats>[^\]]*)\])?\s*->\s*(?P<rhs>.+)$")

DEFAULT_MAX_DEPTH = 64


class GrammarError(DataError):
    pass


@dataclass(frozen=True)
class Grammar:
    start: str
    productions: dict[str, tuple[tuple[str, ...], ...]]
    features: dict[str, tuple[str, ...]] = field(default_factory=dict)
    tag: str = ""

    @property
    def nonterminals(self) -> set[str]:
        return set(self.productions)

    def terminals(self) -> set[str]:
        out = set()
        for alts in self.productions.values():
            for alt in alts:
                out.update(sym for sym in alt if sym not in self.productions)
        return out


@dataclass(frozen=True)
class GeneratedSet:
    type_tag: str
    sentences: tuple[SentenceRecord, ...]


@dataclass(frozen=True)
class AccuracyReport:
    type_tag: str
    mean_exact_match: float
    per_seed_accuracies: tuple[float, ...]
    variance: float
    n_sentences: int


def parse_grammar(text: str, tag: str = "") -> Grammar:
    start = None
    productions: dict[str, list[tuple[str, ...]]] = {}
    features: dict[str, tuple[str, ...]] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line or line == "lexicon:":
            continue
        if line.startswith("tag:"):
            tag = line.split(":", 1)[1].strip()
            continue
        if line.startswith("start:"):
            start = line.split(":", 1)[1].strip()
            continue
        m = _RULE_RE.match(line)
        if not m:
            raise GrammarError(f"line {lineno}: cannot parse rule {line!r}")
        lhs = m.group("lhs")
        if m.group("feats"):
            features[lhs] = tuple(f.strip() for f in m.group("feats").split(","))
        alts = productions.setdefault(lhs, [])
        for alt in m.group("rhs").split("|"):
            symbols = tuple(alt.split())
            if not symbols:
                raise GrammarError(f"line {lineno}: empty alternative in {line!r}")
            alts.append(symbols)
    if start is None:
        raise GrammarError("grammar has no start: line")
    if start not in productions:
        raise GrammarError(f"start symbol {start!r} has no productions")
    grammar = Grammar(
        start,
        {nt: tuple(alts) for nt, alts in productions.items()},
        features,
        tag,
    )
    _validate(grammar)
    return grammar


def load_grammar(path: str) -> Grammar:
    with open(path, encoding="utf-8") as f:
        return parse_grammar(f.read())


def builtin_grammar(tag: str) -> Grammar:
    """Load one of the shipped diagnostic grammars ("A" or "B")."""
    name = {"A": "type_a.cfg", "B": "type_b.cfg"}.get(tag.upper())
    if name is None:
        raise GrammarError(f"no builtin grammar tagged {tag!r}")
    text = resources.files("ordinfo.grammars").joinpath(name).read_text("utf-8")
    return parse_grammar(text)


def _validate(grammar: Grammar) -> None:
    # productive: some alternative expands to terminals-only transitively
    productive: set[str] = set()
    changed = True
    while changed:
        changed = False
        for nt, alts in grammar.productions.items():
            if nt in productive:
                continue
            for alt in alts:
                if all(s not in grammar.productions or s in productive for s in alt):
                    productive.add(nt)
                    changed = True
                    break
    dead = grammar.nonterminals - productive
    if dead:
        raise GrammarError(f"unproductive nonterminals: {sorted(dead)}")
    # reachable from start
    seen = {grammar.start}
    frontier = [grammar.start]
    while frontier:
        nt = frontier.pop()
        for alt in grammar.productions[nt]:
            for sym in alt:
                if sym in grammar.productions and sym not in seen:
                    seen.add(sym)
                    frontier.append(sym)
    unreachable = grammar.nonterminals - seen
    if unreachable:
        raise GrammarError(f"unreachable nonterminals: {sorted(unreachable)}")


def _expand(grammar: Grammar, symbol: str, gen: SplitMix64, depth: int) -> list[str]:
    if symbol not in grammar.productions:
        return [symbol]
    if depth <= 0:
        raise GrammarError("derivation exceeded maximum depth")
    alts = grammar.productions[symbol]
    alt = alts[gen.randbelow(len(alts))]
    out: list[str] = []
    for sym in alt:
        out.extend(_expand(grammar, sym, gen, depth - 1))
    return out


def generate(
    grammar: Grammar,
    n: int,
    seed: int,
    dedup: bool = False,
    max_depth: int = DEFAULT_MAX_DEPTH,
    id_prefix: str | None = None,
) -> GeneratedSet:
    """Sample n derivations, alternatives uniform, seeded and reproducible."""
    if n < 1:
        raise DataError(f"n must be >= 1, got {n}")
    gen = SplitMix64(seed)
    tag = grammar.tag or "cfg"
    prefix = id_prefix if id_prefix is not None else f"cfg{tag}"
    task = f"cfg-{tag}"
    sentences: list[SentenceRecord] = []
    seen: set[tuple[str, ...]] = set()
    attempts = 0
    limit = n * 1000
    while len(sentences) < n:
        attempts += 1
        if attempts > limit:
            raise GrammarError(
                f"could not draw {n} distinct sentences (language too small?)"
            )
        toks = tuple(_expand(grammar, grammar.start, gen, max_depth))
        if dedup:
            if toks in seen:
                continue
            seen.add(toks)
        sentences.append(
            SentenceRecord(f"{prefix}-{len(sentences):05d}", task, toks, "probe")
        )
    return GeneratedSet(tag, tuple(sentences))


def evaluate_reordering(
    genset: GeneratedSet,
    model: ReorderModel,
    seeds: Sequence[int],
    beam_width: int = reorder_mod.DEFAULT_BEAM_WIDTH,
) -> AccuracyReport:
    """Scramble+decode every sentence per seed; exact sequence match scores 1."""
    if not seeds:
        raise DataError("no scramble seeds")
    per_seed = []
    for seed in seeds:
        correct = 0
        for rec in genset.sentences:
            t = scramble(rec.tokens, derive_seed(seed, rec.id))
            if decode(model, t, beam_width).tokens == rec.tokens:
                correct += 1
        per_seed.append(correct / len(genset.sentences))
    mean = sum(per_seed) / len(per_seed)
    var = (
        sum((a - mean) ** 2 for a in per_seed) / (len(per_seed) - 1)
        if len(per_seed) > 1
        else 0.0
    )
    return AccuracyReport(
        genset.type_tag, mean, tuple(per_seed), var, len(genset.sentences)
    )


def run_diagnostic(
    grammars: Sequence[Grammar],
    n_eval: int = 1000,
    n_train: int = 6000,
    seeds: Sequence[int] = (0, 1, 2, 3, 4, 5),
    order: int = 3,
    beam_width: int = reorder_mod.DEFAULT_BEAM_WIDTH,
    base_seed: int = 20240501,
    max_fit_pairs: int = 1500,
) -> list[AccuracyReport]:
    """Full diagnostic: in-domain step LM, held-out temperature, evaluation.

    The step LM trains on fresh samples from the same grammars with every
    evaluated sentence filtered out, mirroring an evaluation set unseen
    during training. Temperature is fitted on scramble pairs from the
    held-out tenth of the training text.
    """
    eval_sets = [
        generate(g, n_eval, base_seed + i, id_prefix=f"eval{g.tag or i}")
        for i, g in enumerate(grammars)
    ]
    eval_tokens = {rec.tokens for gs in eval_sets for rec in gs.sentences}

    train_records: list[SentenceRecord] = []
    for i, g in enumerate(grammars):
        raw = generate(g, n_train, base_seed + 1000 + i, id_prefix=f"train{g.tag or i}")
        train_records.extend(r for r in raw.sentences if r.tokens not in eval_tokens)
    if not train_records:
        raise DataError("no training sentences left after excluding the eval set")

    n_holdout = max(1, len(train_records) // 10)
    lm_split = train_records[:-n_holdout]
    holdout = train_records[-n_holdout:]
    step_lm = train_lm([r.tokens for r in lm_split], order=order)

    fit_pairs = []
    for rec in holdout:
        for seed in seeds:
            fit_pairs.append(
                (rec.tokens, tuple(scramble(rec.tokens, derive_seed(seed, rec.id))))
            )
            if len(fit_pairs) >= max_fit_pairs:
                break
        if len(fit_pairs) >= max_fit_pairs:
            break
    tau = fit_temperature(step_lm, fit_pairs)
    model = ReorderModel(step_lm, tau)

    return [
        evaluate_reordering(gs, model, seeds, beam_width) for gs in eval_sets
    ]
