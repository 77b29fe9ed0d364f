"""Pipeline CLI: every stage is a subcommand, every output a data file.

Subcommands: ingest, scramble, train-lm, fit-reorder, pmi, mi, probe,
cfg-gen, cfg-eval, build-consistency, regress, report.

Defaults may come from an INI config file (sections [scramble], [lm],
[reorder], [regression], [scorer]); command-line flags win. The config
path comes from --config or the ORDINFO_CONFIG environment variable.

Exit codes: 0 success, 1 usage, 2 data error, 3 convergence/diagnostics
failure, 4 scorer-protocol failure. Failures print one machine-readable
JSON error record to stderr.
"""

from __future__ import annotations

import argparse
import configparser
import json
import os
import sys

import numpy as np

from . import cfgbench, consistency, infometrics, ngram_lm, regression, reorder
from . import scorer_bridge, textdata
from .errors import ConvergenceError, DataError, OrdinfoError, ScorerError

CONFIG_ENV = "ORDINFO_CONFIG"

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_CONVERGENCE = 3
EXIT_SCORER = 4

REORDER_FORMAT = "ordinfo-reorder"


class UsageError(OrdinfoError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _load_config(path: str | None) -> configparser.ConfigParser:
    cfg = configparser.ConfigParser()
    path = path or os.environ.get(CONFIG_ENV)
    if path:
        if not os.path.exists(path):
            raise DataError(f"config file not found: {path}")
        cfg.read(path)
    return cfg


def _resolve(args, cfg, attr, section, key, default, cast):
    value = getattr(args, attr, None)
    if value is not None:
        return value
    if cfg.has_option(section, key):
        raw = cfg.get(section, key)
        try:
            return cast(raw)
        except ValueError as e:
            raise DataError(f"config [{section}] {key}={raw!r}: {e}") from e
    return default


def _parse_seeds(args, cfg) -> list[int]:
    if getattr(args, "seeds", None):
        try:
            return [int(s) for s in args.seeds.split(",") if s.strip() != ""]
        except ValueError as e:
            raise UsageError(f"--seeds must be comma-separated integers: {e}") from e
    k = _resolve(args, cfg, "k_scrambles", "scramble", "k_scrambles", 6, int)
    base = _resolve(args, cfg, "seed", "scramble", "seed", 0, int)
    return [base + i for i in range(k)]


def _load_grammar(spec: str) -> cfgbench.Grammar:
    if spec.startswith("builtin:"):
        return cfgbench.builtin_grammar(spec.split(":", 1)[1])
    return cfgbench.load_grammar(spec)


def _write_json(obj, path: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as f:
        json.dump(obj, f, ensure_ascii=False, sort_keys=True, indent=2)
        f.write("\n")
    os.replace(tmp, path)


def _load_reorder_model(path: str) -> reorder.ReorderModel:
    with open(path, encoding="utf-8") as f:
        obj = json.load(f)
    if obj.get("format") != REORDER_FORMAT:
        raise DataError(f"{path}: not a reorder model file")
    lm_path = obj["step_lm"]
    if not os.path.isabs(lm_path):
        lm_path = os.path.join(os.path.dirname(os.path.abspath(path)), lm_path)
    step_lm = ngram_lm.NgramModel.load(lm_path)
    return reorder.ReorderModel(step_lm, float(obj["temperature"]))


def _providers(args, cfg, lm=None, rmodel=None) -> scorer_bridge.Providers:
    cmd = _resolve(args, cfg, "scorer_cmd", "scorer", "cmd", None, str)
    tcp = _resolve(args, cfg, "scorer_tcp", "scorer", "tcp", None, str)
    use_raw = _resolve(
        args, cfg, "scorer_use", "scorer", "use",
        ",".join(scorer_bridge.CAPABILITIES), str,
    )
    use = tuple(u.strip() for u in use_raw.split(",") if u.strip())
    handle = None
    if cmd:
        handle = scorer_bridge.open_scorer(
            scorer_bridge.ScorerConfig(transport="subprocess", argv=tuple(cmd.split()))
        )
    elif tcp:
        host, _, port = tcp.partition(":")
        handle = scorer_bridge.open_scorer(
            scorer_bridge.ScorerConfig(transport="tcp", host=host, port=int(port))
        )
    return scorer_bridge.fallback_resolve(handle, lm=lm, reorder_model=rmodel, use_for=use)


# ---------------------------------------------------------------------------
# subcommands


def _cmd_ingest(args, cfg):
    if args.raw:
        records = []
        with open(args.input, encoding="utf-8") as f:
            for i, line in enumerate(f):
                if not line.strip():
                    continue
                records.append(
                    textdata.SentenceRecord(
                        f"{args.id_prefix}{i:06d}",
                        args.task,
                        tuple(textdata.tokenize(line, args.lowercase)),
                        args.split,
                    )
                )
        if not records:
            raise DataError(f"{args.input}: no text lines")
    else:
        records = textdata.read_sentences(args.input, args.lowercase)
    max_len = _resolve(args, cfg, "max_len", "ingest", "max_len", None, int)
    if max_len is not None:
        records = [r for r in records if len(r.tokens) <= max_len]
        if not records:
            raise DataError(f"no sentences with <= {max_len} tokens")
    textdata.write_sentences(records, args.output)
    print(f"ingested {len(records)} sentences -> {args.output}")


def _cmd_scramble(args, cfg):
    records = textdata.read_sentences(args.input)
    seeds = _parse_seeds(args, cfg)
    pairs = textdata.make_scramble_set(records, seeds)
    textdata.write_scrambles(pairs, args.output)
    print(f"wrote {len(pairs)} scramble pairs ({len(seeds)} seeds) -> {args.output}")


def _cmd_train_lm(args, cfg):
    records = textdata.read_sentences(args.input)
    if args.split != "all":
        records = [r for r in records if r.split == args.split]
        if not records:
            raise DataError(f"no sentences with split {args.split!r}")
    order = _resolve(args, cfg, "order", "lm", "order", 3, int)
    unk = _resolve(args, cfg, "unk_threshold", "lm", "unk_threshold", 2, int)
    model = ngram_lm.train([r.tokens for r in records], order=order, unk_threshold=unk)
    model.save(args.output)
    print(
        f"trained order-{order} model on {len(records)} sentences "
        f"({len(model.vocab)} types) -> {args.output}"
    )


def _cmd_fit_reorder(args, cfg):
    records = textdata.read_sentences(args.input)
    if args.split != "all":
        records = [r for r in records if r.split == args.split]
        if not records:
            raise DataError(f"no sentences with split {args.split!r}")
    step_lm = ngram_lm.NgramModel.load(args.lm)
    seeds = _parse_seeds(args, cfg)
    pairs = [
        (r.tokens, p.scrambled)
        for r in records
        for p in textdata.make_scramble_set([r], seeds)
    ]
    lo = _resolve(args, cfg, "tau_min", "reorder", "tau_min", reorder.DEFAULT_TAU_BOUNDS[0], float)
    hi = _resolve(args, cfg, "tau_max", "reorder", "tau_max", reorder.DEFAULT_TAU_BOUNDS[1], float)
    tau = reorder.fit_temperature(step_lm, pairs, bounds=(lo, hi))
    # store the LM path relative to the model file so a run directory is
    # relocatable and repeated runs are byte-identical
    out_dir = os.path.dirname(os.path.abspath(args.output))
    lm_ref = os.path.relpath(os.path.abspath(args.lm), out_dir)
    if lm_ref.startswith(".."):
        lm_ref = os.path.abspath(args.lm)
    _write_json(
        {
            "format": REORDER_FORMAT,
            "version": 1,
            "temperature": tau,
            "step_lm": lm_ref,
            "fitted_on_pairs": len(pairs),
            "bounds": [lo, hi],
        },
        args.output,
    )
    print(f"fitted temperature {tau:.6g} on {len(pairs)} pairs -> {args.output}")


def _cmd_pmi(args, cfg):
    records = textdata.read_sentences(args.input)
    pairs = textdata.read_scrambles(args.scrambles)
    lm = ngram_lm.NgramModel.load(args.lm) if args.lm else None
    rmodel = _load_reorder_model(args.reorder) if args.reorder else None
    providers = _providers(args, cfg, lm=lm, rmodel=rmodel)
    if providers.logp_sentence is None or providers.q_logp is None:
        raise DataError("pmi needs both a sentence scorer (--lm) and a reorderer "
                        "(--reorder), or an external scorer covering them")
    per_pair = infometrics.pair_pmi_records(
        records, pairs, providers.logp_sentence, providers.q_logp
    )
    avg = infometrics.average_records(per_pair)
    infometrics.write_pmi_records(per_pair + avg, args.output)
    print(
        f"wrote {len(per_pair)} per-pair + {len(avg)} avg PMI records "
        f"(p(s): {providers.sources.get('logp_sentence')}, "
        f"q: {providers.sources.get('q_logp')}) -> {args.output}"
    )


def _cmd_mi(args, cfg):
    records = infometrics.read_pmi_records(args.input)
    values = [r.pmi_bits for r in records if r.seed != infometrics.AVG_SEED]
    if not values:
        raise DataError("no per-pair PMI records (only averages?)")
    est = infometrics.mi_bound(values)
    _write_json(
        {"n_pairs": est.n_pairs, "bound_bits": est.bound_bits, "std_err": est.std_err},
        args.output,
    )
    print(
        f"MI lower bound {est.bound_bits:.4f} bits "
        f"(MC se {est.std_err:.4f}, n={est.n_pairs}) -> {args.output}"
    )


def _cmd_probe(args, cfg):
    records = textdata.read_sentences(args.input)
    pairs = textdata.read_scrambles(args.scrambles)
    rmodel = _load_reorder_model(args.reorder)
    beam = _resolve(args, cfg, "beam", "reorder", "beam", reorder.DEFAULT_BEAM_WIDTH, int)
    by_id = {r.id: r for r in records}
    scores = []
    recon_lines = []
    for pair in pairs:
        sent = by_id.get(pair.sentence_id)
        if sent is None:
            raise DataError(f"scramble references unknown sentence {pair.sentence_id!r}")
        deriv = reorder.decode(rmodel, pair.scrambled, beam)
        scores.append(
            infometrics.ProbeScores(
                sent.id,
                pair.seed,
                infometrics.probe_accuracy(sent.tokens, deriv.tokens),
                infometrics.control_accuracy(sent.tokens, pair.scrambled),
            )
        )
        recon_lines.append(
            {
                "sentence_id": sent.id,
                "seed": pair.seed,
                "reconstructed": list(deriv.tokens),
                "logq_bits": deriv.total,
            }
        )
    infometrics.write_probe_scores(scores, args.output)
    if args.recon:
        infometrics._write_jsonl(args.recon, recon_lines)
    if args.hist:
        infometrics.write_score_histogram(scores, args.hist)
    mean_pa = sum(s.pa for s in scores) / len(scores)
    mean_ca = sum(s.ca for s in scores) / len(scores)
    print(
        f"probe over {len(scores)} pairs: mean PA {mean_pa:.4f}, "
        f"mean CA {mean_ca:.4f} -> {args.output}"
    )


def _cmd_cfg_gen(args, cfg):
    grammar = _load_grammar(args.grammar)
    genset = cfgbench.generate(
        grammar, args.n, args.seed if args.seed is not None else 0, dedup=args.dedup
    )
    textdata.write_sentences(genset.sentences, args.output)
    print(f"generated {len(genset.sentences)} '{genset.type_tag}' sentences -> {args.output}")


def _cmd_cfg_eval(args, cfg):
    grammars = [_load_grammar(args.grammar_a), _load_grammar(args.grammar_b)]
    seeds = _parse_seeds(args, cfg)
    beam = _resolve(args, cfg, "beam", "reorder", "beam", reorder.DEFAULT_BEAM_WIDTH, int)
    order = _resolve(args, cfg, "order", "lm", "order", 3, int)
    reports = cfgbench.run_diagnostic(
        grammars,
        n_eval=args.n_eval,
        n_train=args.n_train,
        seeds=seeds,
        order=order,
        beam_width=beam,
        base_seed=args.seed if args.seed is not None else 20240501,
    )
    payload = {
        rep.type_tag: {
            "mean_exact_match": rep.mean_exact_match,
            "per_seed_accuracies": list(rep.per_seed_accuracies),
            "variance": rep.variance,
            "n_sentences": rep.n_sentences,
        }
        for rep in reports
    }
    _write_json(payload, args.output)
    for rep in reports:
        print(
            f"type {rep.type_tag}: exact-match {rep.mean_exact_match:.4f} "
            f"(per-seed var {rep.variance:.6f}, n={rep.n_sentences})"
        )
    print(f"-> {args.output}")


def _cmd_build_consistency(args, cfg):
    preds = consistency.read_predictions(args.predictions)
    pmis = infometrics.read_pmi_records(args.pmi)
    rows = consistency.build_dataset(preds, pmis, args.granularity)
    consistency.write_consistency(rows, args.output)
    kept = len({r.sample_id for r in rows})
    print(
        f"built {len(rows)} consistency rows from {kept} correctly-predicted "
        f"samples ({args.granularity}) -> {args.output}"
    )


def _cmd_regress(args, cfg):
    rows = consistency.read_consistency(args.input)
    design = regression.standardize(rows)
    chains = _resolve(args, cfg, "chains", "regression", "chains", 4, int)
    iters = _resolve(args, cfg, "iterations", "regression", "iterations", 1000, int)
    warmup = _resolve(args, cfg, "warmup", "regression", "warmup", 1000, int)
    seed = args.seed if args.seed is not None else 0
    spec = regression.MixedModelSpec(include_length=not args.no_length)
    draws = regression.fit(design, spec, chains=chains, iterations=iters,
                           warmup=warmup, seed=seed)
    os.makedirs(args.out_dir, exist_ok=True)
    regression.write_fit_summary(draws, os.path.join(args.out_dir, "fit_summary.csv"))
    regression.write_rope_report(draws, os.path.join(args.out_dir, "rope.csv"))
    regression.write_curves(
        regression.simulate_curves(draws, design),
        os.path.join(args.out_dir, "curves.csv"),
    )
    if not draws.converged:
        raise ConvergenceError(
            "diagnostics failed: " + "; ".join(draws.diagnostics_failures()[:8])
        )
    if args.compare:
        rows_wo = rows
        design_wo = regression.standardize(rows_wo)
        spec_wo = regression.MixedModelSpec(include_length=False)
        draws_wo = regression.fit(design_wo, spec_wo, chains=chains, iterations=iters,
                                  warmup=warmup, seed=seed)
        comp = regression.compare(draws, draws_wo, design, design_wo, seed=seed)
        _write_json(
            {
                "log_bf_with_over_without": comp.log_bf_with_over_without,
                "bic_with": comp.bic_with,
                "bic_without": comp.bic_without,
                "heldout_lpd_with": comp.heldout_lpd_with,
                "heldout_lpd_without": comp.heldout_lpd_without,
                "favored": comp.favored,
            },
            os.path.join(args.out_dir, "comparison.json"),
        )
    beta = regression.summarize(draws, "beta_pmi")
    print(
        f"fit converged: beta_pmi mean {beta.mean:.3f} se {beta.se:.3f} "
        f"CI [{beta.ci_low:.3f}, {beta.ci_high:.3f}] -> {args.out_dir}/"
    )


def _cmd_report(args, cfg):
    os.makedirs(args.out_dir, exist_ok=True)
    outputs = []
    if args.pmi:
        if not args.input:
            raise UsageError("--pmi reporting needs --in sentences for task labels")
        records = textdata.read_sentences(args.input)
        task_of = {r.id: r.task for r in records}
        pmis = infometrics.read_pmi_records(args.pmi)
        avg = [r for r in pmis if r.seed == infometrics.AVG_SEED]
        if not avg:
            avg = pmis
        per_task: dict[str, list[float]] = {}
        for r in avg:
            task = task_of.get(r.sentence_id)
            if task is None:
                raise DataError(f"PMI record for unknown sentence {r.sentence_id!r}")
            per_task.setdefault(task, []).append(r.pmi_bits)
        lines = ["task,n,min,q1,median,q3,max,mean"]
        for task in sorted(per_task):
            v = np.asarray(per_task[task])
            q1, med, q3 = np.percentile(v, [25, 50, 75])
            lines.append(
                f"{task},{v.size},{v.min()!r},{q1!r},{med!r},{q3!r},"
                f"{v.max()!r},{v.mean()!r}"
            )
        path = os.path.join(args.out_dir, "pmi_boxplot.csv")
        regression._write_text(path, "\n".join(lines) + "\n")
        outputs.append(path)
        if len(avg) >= 3:
            try:
                corr = infometrics.length_pmi_correlation(avg)
                path = os.path.join(args.out_dir, "length_pmi_corr.csv")
                regression._write_text(
                    path,
                    "r,ci_low,ci_high,n\n"
                    f"{corr.r!r},{corr.ci_low!r},{corr.ci_high!r},{corr.n}\n",
                )
                outputs.append(path)
            except infometrics.DegenerateDataError:
                pass
    if args.probe:
        scores = infometrics.read_probe_scores(args.probe)
        path = os.path.join(args.out_dir, "pa_ca_hist.csv")
        infometrics.write_score_histogram(scores, path)
        outputs.append(path)
    if not outputs:
        raise UsageError("report needs --pmi and/or --probe inputs")
    print("wrote " + ", ".join(outputs))


# ---------------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="ordinfo", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--config", help="INI config path (or set ORDINFO_CONFIG)")
    sub = parser.add_subparsers(dest="command", required=True)

    def common_seed(p):
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--seeds", help="comma-separated scramble seeds")
        p.add_argument("--k-scrambles", dest="k_scrambles", type=int, default=None)

    p = sub.add_parser("ingest", help="normalize a corpus into canonical JSONL")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output", required=True)
    p.add_argument("--raw", action="store_true", help="input is one sentence per line")
    p.add_argument("--task", default="generic")
    p.add_argument("--split", default="train", choices=textdata.SPLITS)
    p.add_argument("--id-prefix", default="s")
    p.add_argument("--lowercase", action="store_true")
    p.add_argument("--max-len", dest="max_len", type=int, default=None,
                   help="drop sentences longer than this many tokens")
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("scramble", help="seeded word-level scrambles")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output", required=True)
    common_seed(p)
    p.set_defaults(func=_cmd_scramble)

    p = sub.add_parser("train-lm", help="train the smoothed n-gram model")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output", required=True)
    p.add_argument("--split", default="train", choices=textdata.SPLITS + ("all",))
    p.add_argument("--order", type=int, default=None)
    p.add_argument("--unk-threshold", dest="unk_threshold", type=int, default=None)
    p.set_defaults(func=_cmd_train_lm)

    p = sub.add_parser("fit-reorder", help="fit the reorderer temperature")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--lm", required=True)
    p.add_argument("--out", dest="output", required=True)
    p.add_argument("--split", default="val", choices=textdata.SPLITS + ("all",))
    p.add_argument("--tau-min", dest="tau_min", type=float, default=None)
    p.add_argument("--tau-max", dest="tau_max", type=float, default=None)
    common_seed(p)
    p.set_defaults(func=_cmd_fit_reorder)

    p = sub.add_parser("pmi", help="per-pair and per-sentence-average PMI")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--scrambles", required=True)
    p.add_argument("--lm")
    p.add_argument("--reorder")
    p.add_argument("--out", dest="output", required=True)
    p.add_argument("--scorer-cmd", dest="scorer_cmd")
    p.add_argument("--scorer-tcp", dest="scorer_tcp")
    p.add_argument("--scorer-use", dest="scorer_use")
    p.set_defaults(func=_cmd_pmi)

    p = sub.add_parser("mi", help="MI lower bound from per-pair PMI records")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output", required=True)
    p.set_defaults(func=_cmd_mi)

    p = sub.add_parser("probe", help="decode scrambles; probe/control accuracies")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--scrambles", required=True)
    p.add_argument("--reorder", required=True)
    p.add_argument("--out", dest="output", required=True)
    p.add_argument("--recon", help="write reconstructions JSONL here")
    p.add_argument("--hist", help="write PA/CA histogram CSV here")
    p.add_argument("--beam", type=int, default=None)
    p.set_defaults(func=_cmd_probe)

    p = sub.add_parser("cfg-gen", help="sample sentences from a grammar")
    p.add_argument("--grammar", required=True, help="path or builtin:A / builtin:B")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--dedup", action="store_true")
    p.add_argument("--out", dest="output", required=True)
    p.set_defaults(func=_cmd_cfg_gen)

    p = sub.add_parser("cfg-eval", help="reordering accuracy diagnostic")
    p.add_argument("--grammar-a", dest="grammar_a", default="builtin:A")
    p.add_argument("--grammar-b", dest="grammar_b", default="builtin:B")
    p.add_argument("--n-eval", dest="n_eval", type=int, default=1000)
    p.add_argument("--n-train", dest="n_train", type=int, default=6000)
    p.add_argument("--beam", type=int, default=None)
    p.add_argument("--order", type=int, default=None)
    p.add_argument("--out", dest="output", required=True)
    common_seed(p)
    p.set_defaults(func=_cmd_cfg_eval)

    p = sub.add_parser("build-consistency", help="join predictions with PMI")
    p.add_argument("--predictions", required=True)
    p.add_argument("--pmi", required=True)
    p.add_argument("--out", dest="output", required=True)
    p.add_argument(
        "--granularity", default="averaged", choices=consistency.GRANULARITIES
    )
    p.set_defaults(func=_cmd_build_consistency)

    p = sub.add_parser("regress", help="mixed-effects logistic regression")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out-dir", dest="out_dir", required=True)
    p.add_argument("--chains", type=int, default=None)
    p.add_argument("--iterations", type=int, default=None)
    p.add_argument("--warmup", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--no-length", dest="no_length", action="store_true")
    p.add_argument("--compare", action="store_true",
                   help="also fit without length and compare")
    p.set_defaults(func=_cmd_regress)

    p = sub.add_parser("report", help="plot-ready aggregate CSVs")
    p.add_argument("--in", dest="input")
    p.add_argument("--pmi")
    p.add_argument("--probe")
    p.add_argument("--out-dir", dest="out_dir", required=True)
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = _load_config(args.config)
        args.func(args, cfg)
        return EXIT_OK
    except UsageError as e:
        _emit_error(e)
        return EXIT_USAGE
    except ConvergenceError as e:
        _emit_error(e)
        return EXIT_CONVERGENCE
    except ScorerError as e:
        _emit_error(e)
        return EXIT_SCORER
    except (DataError, OSError) as e:
        _emit_error(e)
        return EXIT_DATA


def _emit_error(exc) -> None:
    record = {"error": type(exc).__name__, "message": str(exc)}
    print(json.dumps(record, ensure_ascii=False), file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
