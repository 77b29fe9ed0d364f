"""Acceptance suite: one test per criterion, each at its stated tolerance.

A per-criterion PASS/FAIL line is printed in the terminal summary (see
conftest.py). Every test here runs against the internal models only,
except the external-adapter criterion at the bottom, which drives the
sibling pyscorer package exclusively through its wire protocol.
"""

import importlib.util
import math
import os
import sys
import time

import numpy as np

from conftest import FIXTURE_CORPUS, toy_draw_pair, toy_exact_mi, total_q_mass
from ordinfo import cfgbench, cli, infometrics, reorder, scorer_bridge
from ordinfo.consistency import PredictionRecord, write_predictions
from ordinfo.infometrics import AVG_SEED, mi_bound, pmi, read_pmi_records
from ordinfo.regression import (
    MixedModelSpec,
    fit,
    rope,
    simulate_consistency,
    standardize,
    summarize,
)
from ordinfo.rng import SplitMix64
from ordinfo.textdata import read_sentences, write_sentences

REPO_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def test_mi_bound_validity(toy_models):
    """Estimated bound <= exact MI + 3 MC-SE on the enumerable toy language,
    20 resamples of 5000 pairs each, under one minute."""
    start = time.time()
    lm, model = toy_models
    exact = toy_exact_mi()
    for rep in range(20):
        gen = SplitMix64(1000 + rep)
        pmis = []
        for _ in range(5000):
            s, t = toy_draw_pair(gen)
            pmis.append(pmi(reorder.q_logp(model, s, t), lm.logp_sentence(s)))
        est = mi_bound(pmis)
        assert est.n_pairs == 5000
        assert est.bound_bits <= exact + 3.0 * est.std_err, (
            rep, est.bound_bits, exact, est.std_err,
        )
    assert time.time() - start < 60.0


def test_q_normalization(fixture_models):
    """Sum of 2^q over distinct orderings equals 1 +/- 1e-9 for 200 random
    multisets of up to 6 tokens, under one minute."""
    start = time.time()
    _, model = fixture_models
    words = sorted(model.step_lm.vocab)[:40]
    gen = SplitMix64(424242)
    for _ in range(200):
        size = 1 + gen.randbelow(6)
        # small alphabet slice so duplicates are common
        pool = [words[gen.randbelow(8)] for _ in range(size)]
        assert abs(total_q_mass(model, tuple(pool)) - 1.0) <= 1e-9, pool
    assert time.time() - start < 60.0


def test_cfg_diagnostic_separation():
    """Shipped grammars, 1000 sentences per type, 6 seeds, in-domain step LM:
    type A exact-match mean >= 0.85, type B in [0.40, 0.60], under 10 min."""
    start = time.time()
    reports = cfgbench.run_diagnostic(
        [cfgbench.builtin_grammar("A"), cfgbench.builtin_grammar("B")],
        n_eval=1000,
        n_train=6000,
        seeds=(0, 1, 2, 3, 4, 5),
    )
    by_tag = {r.type_tag: r for r in reports}
    assert by_tag["A"].n_sentences == 1000
    assert by_tag["B"].n_sentences == 1000
    assert len(by_tag["A"].per_seed_accuracies) == 6
    assert by_tag["A"].mean_exact_match >= 0.85, by_tag["A"]
    assert 0.40 <= by_tag["B"].mean_exact_match <= 0.60, by_tag["B"]
    assert time.time() - start < 600.0


def test_reorderer_beats_control(fixture_records, fixture_models):
    """Mean probe accuracy >= mean control accuracy + 0.05 on the 500-sentence
    held-out fixture after temperature fitting, under 10 min."""
    from ordinfo.rng import derive_seed
    from ordinfo.textdata import scramble

    start = time.time()
    _, model = fixture_models
    probe = [r for r in fixture_records if r.split == "probe"]
    assert len(probe) == 500
    pas, cas = [], []
    for rec in probe:
        t = scramble(rec.tokens, derive_seed(0, rec.id))
        deriv = reorder.decode(model, t, 16)
        pas.append(infometrics.probe_accuracy(rec.tokens, deriv.tokens))
        cas.append(infometrics.control_accuracy(rec.tokens, t))
    assert np.mean(pas) >= np.mean(cas) + 0.05, (np.mean(pas), np.mean(cas))
    assert time.time() - start < 600.0


def test_regression_recovery():
    """95% CIs cover the generating coefficients (beta_pmi=1.87,
    beta_len=-0.3; 5 tasks, 2000 rows) in >= 18 of 20 replicates with
    R-hat < 1.05, all under 15 minutes."""
    start = time.time()
    tasks = ["t1", "t2", "t3", "t4", "t5"]
    covered_pmi = covered_len = 0
    for rep in range(20):
        recs = simulate_consistency(
            2000, tasks, beta_pmi=1.87, beta_len=-0.3, seed=9000 + rep
        )
        draws = fit(
            standardize(recs), chains=4, iterations=1000, warmup=600, seed=100 + rep
        )
        assert draws.converged, (rep, draws.diagnostics_failures()[:4])
        bp = summarize(draws, "beta_pmi")
        bl = summarize(draws, "beta_len")
        covered_pmi += int(bp.ci_low <= 1.87 <= bp.ci_high)
        covered_len += int(bl.ci_low <= -0.3 <= bl.ci_high)
    assert covered_pmi >= 18, covered_pmi
    assert covered_len >= 18, covered_len
    assert time.time() - start < 900.0


def test_rope_logic():
    """Draws entirely inside [-0.18, 0.18] are not practically effective;
    draws entirely outside are."""
    from test_regression import manual_draws

    inside = manual_draws({"beta_pmi": np.linspace(-0.17, 0.17, 400)})
    outside = manual_draws({"beta_pmi": np.linspace(0.5, 2.0, 400)})
    rep_in = rope(inside, "beta_pmi")
    rep_out = rope(outside, "beta_pmi")
    assert not rep_in.effective and rep_in.fraction_outside == 0.0
    assert rep_out.effective and rep_out.fraction_outside == 1.0
    assert (rep_in.rope_low, rep_in.rope_high) == (-0.18, 0.18)


def _run_pipeline(workdir, corpus_path, preds_path=None, with_probe=True):
    """scramble -> train-lm -> fit-reorder -> pmi -> mi (-> probe ->
    build-consistency -> regress -> report), all through the CLI."""
    d = str(workdir)
    paths = {
        "sent": os.path.join(d, "sentences.jsonl"),
        "scr": os.path.join(d, "scrambles.jsonl"),
        "lm": os.path.join(d, "lm.jsonl"),
        "rm": os.path.join(d, "reorder.json"),
        "pmi": os.path.join(d, "pmi.jsonl"),
        "mi": os.path.join(d, "mi.json"),
        "probe": os.path.join(d, "probe.jsonl"),
        "recon": os.path.join(d, "recon.jsonl"),
        "hist": os.path.join(d, "hist.csv"),
        "cons": os.path.join(d, "consistency.csv"),
        "reg": os.path.join(d, "reg"),
        "report": os.path.join(d, "report"),
    }
    probe_sent = os.path.join(d, "probe_sentences.jsonl")
    records = read_sentences(corpus_path)
    write_sentences(records, paths["sent"])
    write_sentences([r for r in records if r.split == "probe"], probe_sent)
    assert cli.main(["scramble", "--in", probe_sent, "--out", paths["scr"],
                     "--k-scrambles", "6"]) == 0
    assert cli.main(["train-lm", "--in", paths["sent"], "--out", paths["lm"],
                     "--order", "3"]) == 0
    assert cli.main(["fit-reorder", "--in", paths["sent"], "--lm", paths["lm"],
                     "--out", paths["rm"], "--split", "val",
                     "--k-scrambles", "4"]) == 0
    assert cli.main(["pmi", "--in", probe_sent, "--scrambles", paths["scr"],
                     "--lm", paths["lm"], "--reorder", paths["rm"],
                     "--out", paths["pmi"]]) == 0
    assert cli.main(["mi", "--in", paths["pmi"], "--out", paths["mi"]]) == 0
    if with_probe:
        assert cli.main(["probe", "--in", probe_sent, "--scrambles", paths["scr"],
                         "--reorder", paths["rm"], "--out", paths["probe"],
                         "--recon", paths["recon"], "--hist", paths["hist"]]) == 0
    if preds_path is not None:
        assert cli.main(["build-consistency", "--predictions", preds_path,
                         "--pmi", paths["pmi"], "--out", paths["cons"],
                         "--granularity", "per_seed"]) == 0
        assert cli.main(["regress", "--in", paths["cons"], "--out-dir",
                         paths["reg"], "--chains", "4", "--iterations", "600",
                         "--warmup", "500", "--seed", "7"]) == 0
    assert cli.main(["report", "--in", probe_sent, "--pmi", paths["pmi"],
                     *(["--probe", paths["probe"]] if with_probe else []),
                     "--out-dir", paths["report"]]) == 0
    return paths


def _synthetic_predictions(pmi_path, out_path, slope=1.3, intercept=0.4, seed=5):
    """Classifier whose scrambled-input agreement is logistic in the
    computed average PMI, with task-specific baselines."""
    records = read_pmi_records(pmi_path)
    avg = {r.sentence_id: r.pmi_bits for r in records if r.seed == AVG_SEED}
    values = np.asarray(list(avg.values()))
    mu, sd = values.mean(), values.std(ddof=1)
    gen = SplitMix64(seed)
    task_of = lambda sid: sid.split("-")[0]
    offsets = {}
    preds = []
    for sid in sorted(avg):
        task = task_of(sid)
        if task not in offsets:
            offsets[task] = -0.6 + 1.2 * len(offsets) / 4.0  # spread in [-0.6, 0.6]
        z = (avg[sid] - mu) / sd
        p_agree = 1.0 / (1.0 + math.exp(-(intercept + offsets[task] + slope * z)))
        scrambled = {
            s: ("yes" if gen.uniform() < p_agree else "no") for s in range(6)
        }
        preds.append(PredictionRecord(task, sid, "yes", "yes", scrambled))
    write_predictions(preds, out_path)


def test_semisynthetic_redundancy_effect(tmp_path):
    """Full pipeline (scramble -> pmi -> build-consistency -> regress) on a
    synthetic classifier that agrees logistically in true PMI: group-level
    PMI coefficient positive with >= 0.95 posterior mass, under 20 min."""
    start = time.time()
    stage = tmp_path / "stage"
    stage.mkdir()
    # first pass to obtain PMI values, then attach the synthetic classifier
    paths = _run_pipeline(stage, FIXTURE_CORPUS, with_probe=False)
    preds_path = str(tmp_path / "preds.jsonl")
    _synthetic_predictions(paths["pmi"], preds_path)
    assert cli.main(["build-consistency", "--predictions", preds_path,
                     "--pmi", paths["pmi"], "--out", paths["cons"],
                     "--granularity", "per_seed"]) == 0
    from ordinfo.consistency import read_consistency

    rows = read_consistency(paths["cons"])
    assert len(rows) == 500 * 6
    design = standardize(rows)
    draws = fit(design, MixedModelSpec(), chains=4, iterations=900, warmup=600,
                seed=13)
    assert draws.converged, draws.diagnostics_failures()[:4]
    beta = draws.flat("beta_pmi")
    mass_positive = float(np.mean(beta > 0.0))
    assert mass_positive >= 0.95, mass_positive
    assert time.time() - start < 1200.0


def test_pipeline_determinism(tmp_path):
    """Two full pipeline runs with identical config produce byte-identical
    output files."""
    run_a = tmp_path / "a"
    run_b = tmp_path / "b"
    run_a.mkdir()
    run_b.mkdir()
    # small corpus keeps two full runs cheap without changing any semantics
    records = [r for r in read_sentences(FIXTURE_CORPUS)
               if r.split != "probe" or int(r.id.split("-")[1]) % 10 == 0]
    small = tmp_path / "corpus.jsonl"
    write_sentences(records, str(small))

    paths_a = _run_pipeline(run_a, str(small))
    preds = str(tmp_path / "preds.jsonl")
    _synthetic_predictions(paths_a["pmi"], preds)
    paths_a = _run_pipeline(run_a, str(small), preds_path=preds)
    paths_b = _run_pipeline(run_b, str(small), preds_path=preds)

    compared = 0
    for root, _, files in os.walk(run_a):
        for name in files:
            file_a = os.path.join(root, name)
            rel = os.path.relpath(file_a, run_a)
            file_b = os.path.join(run_b, rel)
            assert os.path.exists(file_b), rel
            with open(file_a, "rb") as fa, open(file_b, "rb") as fb:
                assert fa.read() == fb.read(), f"{rel} differs between runs"
            compared += 1
    assert compared >= 12


def _pyscorer_argv():
    if importlib.util.find_spec("pyscorer") is not None:
        return (sys.executable, "-m", "pyscorer", "--backend", "conformance"), None
    src = os.path.join(REPO_ROOT, "pyscorer", "src")
    assert os.path.isdir(src), "pyscorer package not found next to the repo"
    env = dict(os.environ)
    env["PYTHONPATH"] = src + os.pathsep + env.get("PYTHONPATH", "")
    return (sys.executable, "-m", "pyscorer", "--backend", "conformance"), env


def test_external_adapter_conformance_and_transparency(tmp_path):
    """The sibling adapter passes the conformance suite, and swapping it in
    for an internal provider returning the same numbers yields byte-identical
    PMI files."""
    argv, env = _pyscorer_argv()
    if env is not None:
        # run via its own source tree; the client only sees the wire protocol
        os.environ["PYTHONPATH"] = env["PYTHONPATH"]
    report = scorer_bridge.run_conformance(
        scorer_bridge.ScorerConfig(argv=argv), n_requests=1000, seed=0
    )
    assert report.passed, report.failures()

    records = [r for r in read_sentences(FIXTURE_CORPUS) if r.split == "probe"][:40]
    from ordinfo.textdata import make_scramble_set

    pairs = make_scramble_set(records, [0, 1, 2])

    def emit(providers, path):
        per = infometrics.pair_pmi_records(
            records, pairs, providers.logp_sentence, providers.q_logp
        )
        infometrics.write_pmi_records(
            per + infometrics.average_records(per), path
        )

    internal = scorer_bridge.Providers(
        logp_sentence=lambda toks: -float(len(toks)),
        q_logp=lambda s, t: -float(len(s)) / 2.0,
    )
    path_internal = str(tmp_path / "internal.jsonl")
    emit(internal, path_internal)

    handle = scorer_bridge.open_scorer(scorer_bridge.ScorerConfig(argv=argv))
    try:
        external = scorer_bridge.fallback_resolve(handle)
        assert external.sources["logp_sentence"] == "external"
        assert external.sources["q_logp"] == "external"
        path_external = str(tmp_path / "external.jsonl")
        emit(external, path_external)
    finally:
        handle.close()

    with open(path_internal, "rb") as fa, open(path_external, "rb") as fb:
        assert fa.read() == fb.read()
