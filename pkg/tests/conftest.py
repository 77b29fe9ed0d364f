import itertools
import math
import os
from collections import Counter

import pytest

from ordinfo import ngram_lm, reorder
from ordinfo.rng import SplitMix64
from ordinfo.textdata import read_sentences

REPO_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
FIXTURE_CORPUS = os.path.join(REPO_ROOT, "data", "fixtures", "english_desk.jsonl")

_ACCEPTANCE_RESULTS: dict[str, str] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" in report.nodeid and report.when == "call":
        name = report.nodeid.split("::")[-1]
        _ACCEPTANCE_RESULTS[name] = "PASS" if report.outcome == "passed" else "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_RESULTS:
        return
    terminalreporter.write_line("")
    terminalreporter.write_line("acceptance criteria:")
    for name, outcome in _ACCEPTANCE_RESULTS.items():
        terminalreporter.write_line(f"  {outcome}  {name}")

# Enumerable toy language over a two-word vocabulary. Both the length-2
# multisets make the scramble informative ({a,a} and {b,b} pin the sentence;
# {a,b} leaves a 0.9/0.1 choice), so the exact MI is sizable and computable
# by enumeration.
TOY_DIST = {
    ("a", "a"): 0.10,
    ("a", "b"): 0.63,
    ("b", "a"): 0.07,
    ("b", "b"): 0.20,
}


def toy_exact_mi(dist=None) -> float:
    """Exact I(S;T) by full enumeration of the joint p(s, t)."""
    dist = dist or TOY_DIST
    joint: dict = {}
    for s, ps in dist.items():
        n_fact = math.factorial(len(s))
        for t, c in Counter(itertools.permutations(s)).items():
            joint[(s, t)] = joint.get((s, t), 0.0) + ps * c / n_fact
    p_t: dict = {}
    for (s, t), p in joint.items():
        p_t[t] = p_t.get(t, 0.0) + p
    return sum(
        p * math.log2(p / (dist[s] * p_t[t])) for (s, t), p in joint.items()
    )


def toy_draw_pair(gen: SplitMix64, dist=None):
    """One (s, t) sample: s from the sentence distribution, t a uniform
    permutation of s."""
    dist = dist or TOY_DIST
    u = gen.uniform()
    acc = 0.0
    for s, ps in sorted(dist.items()):
        acc += ps
        if u < acc:
            break
    t = list(s)
    gen.shuffle(t)
    return s, tuple(t)


def toy_corpus(n: int = 20000, dist=None):
    """Training corpus with exact sentence-type proportions."""
    dist = dist or TOY_DIST
    corpus = []
    for s, ps in sorted(dist.items()):
        corpus.extend([list(s)] * int(round(ps * n)))
    return corpus


@pytest.fixture(scope="session")
def toy_models():
    """(ngram LM, fitted reorder model) trained on the toy language."""
    lm = ngram_lm.train(toy_corpus(), order=3)
    gen = SplitMix64(99)
    fit_pairs = [toy_draw_pair(gen) for _ in range(2000)]
    tau = reorder.fit_temperature(lm, fit_pairs)
    return lm, reorder.ReorderModel(lm, tau)


@pytest.fixture(scope="session")
def fixture_records():
    return read_sentences(FIXTURE_CORPUS)


@pytest.fixture(scope="session")
def fixture_models(fixture_records):
    """LM trained on the fixture train split; temperature fitted on val."""
    from ordinfo.rng import derive_seed
    from ordinfo.textdata import scramble

    train = [r for r in fixture_records if r.split == "train"]
    val = [r for r in fixture_records if r.split == "val"]
    lm = ngram_lm.train([r.tokens for r in train], order=3)
    pairs = [
        (r.tokens, tuple(scramble(r.tokens, derive_seed(s, r.id))))
        for r in val
        for s in range(6)
    ]
    tau = reorder.fit_temperature(lm, pairs)
    return lm, reorder.ReorderModel(lm, tau)


def enumerate_orderings(bag):
    return sorted(set(itertools.permutations(bag)))


def total_q_mass(model, bag):
    return sum(2.0 ** reorder.q_logp(model, p, bag) for p in enumerate_orderings(bag))
