"""Command line interface.

Exit codes: 0 success, 1 usage error, 2 data or input error, 3 internal
error. Every subcommand is a thin wrapper over library functions; flags
override values read from JSON config files.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import anonymize as anon
from . import benchmark as bench
from . import corpus as corpus_mod
from . import dedup as dedup_mod
from . import hpo as hpo_mod
from . import metrics as metrics_mod
from . import pipeline as pipeline_mod
from . import subword as subword_mod


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _write_json(path: str | None, obj) -> None:
    text = json.dumps(obj, ensure_ascii=False, indent=2, sort_keys=True) + "\n"
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _load_docs(path: str, source: str | None = None) -> list[corpus_mod.Document]:
    result = corpus_mod.load_documents(path, source)
    if result.errors:
        first = result.errors[0]
        raise ValueError(
            f"{path}: {len(result.errors)} malformed lines "
            f"(first at line {first.line_no}: {first.message})"
        )
    return result.documents


def cmd_ingest(args) -> int:
    result = corpus_mod.load_documents(args.input, args.source)
    corpus_mod.write_documents(args.out, result.documents)
    report = {
        "n_documents": len(result.documents),
        "n_errors": len(result.errors),
        "errors": [{"line": e.line_no, "message": e.message} for e in result.errors],
    }
    if args.report:
        _write_json(args.report, report)
    print(f"ingested {len(result.documents)} documents, {len(result.errors)} bad lines")
    return 0


def cmd_stats(args) -> int:
    docs = _load_docs(args.input, args.source)
    stats = corpus_mod.compute_corpus_stats(docs)
    mb = corpus_mod.MB_BINARY if args.binary_mb else corpus_mod.MB_DECIMAL
    tsv = corpus_mod.stats_to_tsv(stats, mb)
    if args.out:
        Path(args.out).write_text(tsv, encoding="utf-8")
    else:
        sys.stdout.write(tsv)
    if args.json:
        _write_json(args.json, corpus_mod.stats_to_obj(stats, mb))
    return 0


def cmd_clean(args) -> int:
    docs = _load_docs(args.input, args.source)
    kept, rejects = corpus_mod.clean_corpus(docs)
    corpus_mod.write_documents(args.out, kept)
    if args.reject_log:
        _write_json(
            args.reject_log,
            {"rejects": [{"id": r.doc_id, "source": r.source, "reason": r.reason} for r in rejects]},
        )
    print(f"kept {len(kept)} of {len(docs)} documents")
    return 0


def cmd_dedup(args) -> int:
    docs = _load_docs(args.input, args.source)
    mode = {
        "representative": dedup_mod.MODE_REPRESENTATIVE,
        "literal": dedup_mod.MODE_LITERAL,
    }[args.mode]
    comparison = {
        "strict": dedup_mod.COMPARISON_STRICT,
        "inclusive": dedup_mod.COMPARISON_INCLUSIVE,
    }[args.comparison]
    cfg = dedup_mod.DedupConfig(
        threshold=args.threshold,
        comparison=comparison,
        mode=mode,
        max_doc_words=args.max_words if args.max_words > 0 else None,
    )
    vectors = []
    unvectorizable = []
    for doc in docs:
        try:
            vectors.append(dedup_mod.vectorize(doc))
        except dedup_mod.EmptyVectorError:
            unvectorizable.append(doc.id)
    engine = dedup_mod.dedup_exact if args.engine == "exact" else dedup_mod.dedup_indexed
    report = engine(vectors, cfg)
    if args.out:
        keep = set(report.kept_ids) | set(unvectorizable)
        corpus_mod.write_documents(args.out, [d for d in docs if d.id in keep])
    if args.report:
        _write_json(args.report, report.to_obj())
    print(
        f"kept {report.n_kept} of {report.n_input} documents "
        f"({report.n_removed} removed, {len(report.clusters)} clusters)"
    )
    return 0


def cmd_anonymize(args) -> int:
    docs = _load_docs(args.input, args.source)
    gazetteer = None
    if args.gazetteer:
        gazetteer = anon.Gazetteer.from_file(args.gazetteer, args.case_insensitive)
    out_docs, report = anon.anonymize_corpus(
        docs,
        gazetteer,
        name_wildcard=args.name_wildcard,
        date_wildcard=args.date_wildcard,
        delete=args.delete,
    )
    corpus_mod.write_documents(args.out, out_docs)
    if args.report:
        _write_json(args.report, report.to_obj())
    status = "clean" if report.passed else f"{len(report.residuals)} documents with residuals"
    print(
        f"redacted {report.total_name_spans} name spans and "
        f"{report.total_date_spans} date spans; verification: {status}"
    )
    return 0 if report.passed else 2


def cmd_vocab_build(args) -> int:
    docs = _load_docs(args.input, args.source)
    texts = [d.text for d in docs]
    filtered, removed = subword_mod.filter_rare_chars(texts, args.min_char_freq)
    config = subword_mod.VocabConfig(
        min_char_freq=args.min_char_freq,
        min_word_freq=args.min_word_freq,
        vocab_size=args.vocab_size,
    )
    vocab = subword_mod.build_vocab(filtered, config)
    vocab.save(args.out)
    print(
        f"vocabulary of {len(vocab)} tokens written to {args.out} "
        f"({len(removed)} rare characters dropped)"
    )
    return 0


def _load_vocab(path: str) -> subword_mod.Vocabulary:
    return subword_mod.Vocabulary.load(path)


def cmd_tokenize(args) -> int:
    docs = _load_docs(args.input, args.source)
    vocab = _load_vocab(args.vocab)
    with open(args.out, "w", encoding="utf-8") as fh:
        for doc in docs:
            words, ids = subword_mod.tokenize_text(doc.text, vocab)
            pieces = [vocab.tokens[i] for id_list in ids for i in id_list]
            flat = [i for id_list in ids for i in id_list]
            fh.write(
                json.dumps(
                    {"id": doc.id, "pieces": pieces, "ids": flat}, ensure_ascii=False
                )
            )
            fh.write("\n")
    print(f"tokenized {len(docs)} documents")
    return 0


def cmd_fertility(args) -> int:
    docs = _load_docs(args.input, args.source)
    vocab = _load_vocab(args.vocab)
    report = subword_mod.measure_fertility(
        ((d.id, d.text) for d in docs), vocab, per_document=args.per_document
    )
    if args.out:
        _write_json(args.out, report.to_obj())
    print(f"fertility {report.fertility:.4f} ({report.n_subwords}/{report.n_words})")
    return 0


def cmd_bench_build(args) -> int:
    docs = _load_docs(args.docs)
    codes = bench.load_code_records(args.codes)
    examples, n_dropped = bench.assign_codes(
        docs,
        codes,
        policy=args.policy,
        chapter_filter=args.chapter,
        icd_as_category=not args.full_icd_codes,
    )
    spec = bench.SplitSpec(
        n_train=args.sizes[0],
        n_valid=args.sizes[1],
        n_test=args.sizes[2],
        seed=args.seed,
        min_test_support=args.min_test_support,
    )
    bundle = bench.build_task(examples, spec, group_by_patient=not args.no_patient_grouping)
    bench.export_task(bundle, args.out_dir)
    print(
        f"task with {len(bundle.labels)} labels written to {args.out_dir} "
        f"({n_dropped} unlabeled documents dropped, "
        f"{bundle.n_dropped_empty} lost to label selection, "
        f"{bundle.n_iterations} split iterations)"
    )
    return 0


def cmd_bench_split(args) -> int:
    examples = bench.load_examples_jsonl(args.input)
    spec = bench.SplitSpec(
        n_train=args.sizes[0], n_valid=args.sizes[1], n_test=args.sizes[2], seed=args.seed
    )
    split = bench.stratified_split(
        examples, spec, group_by_patient=not args.no_patient_grouping
    )
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    bench.write_examples_jsonl(out / "train.jsonl", split.train)
    bench.write_examples_jsonl(out / "valid.jsonl", split.valid)
    bench.write_examples_jsonl(out / "test.jsonl", split.test)
    print(
        f"split {len(split.train)}/{len(split.valid)}/{len(split.test)} "
        f"written to {args.out_dir} ({len(split.rest)} left over)"
    )
    return 0


def _read_labels(path: str | None) -> list[str] | None:
    if path is None:
        return None
    with open(path, encoding="utf-8") as fh:
        return [line.strip() for line in fh if line.strip()]


def _read_jsonl(path: str) -> list[dict]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rows.append(json.loads(line))
    return rows


def cmd_eval_clf(args) -> int:
    gold = bench.load_examples_jsonl(args.gold)
    preds = metrics_mod.load_classification_predictions(
        ((ex.doc_id, ex.labels) for ex in gold),
        _read_jsonl(args.pred),
        labels=_read_labels(args.labels),
    )
    report = metrics_mod.multilabel_report(preds, threshold=args.threshold)
    metrics_mod.write_report(report, args.report, args.tsv)
    m = report.macro
    auroc_part = f"{m.auroc:.2f}" if m.auroc is not None else "n/a"
    print(
        f"macro AUROC {auroc_part}  F1 {m.f1:.2f}  "
        f"P {m.precision:.2f}  R {m.recall:.2f} over {len(report.classes)} classes"
    )
    return 0


def cmd_eval_ner(args) -> int:
    gold = bench.load_conll(args.gold)
    rows = _read_jsonl(args.pred)
    if len(rows) != len(gold):
        raise ValueError(
            f"prediction count {len(rows)} does not match gold document count {len(gold)}"
        )
    pred_tags = []
    token_scores = []
    have_scores = all("scores" in r for r in rows) and rows
    for row in rows:
        tags = row.get("tags")
        if not isinstance(tags, list):
            raise ValueError("NER prediction row without 'tags' list")
        pred_tags.append([str(t) for t in tags])
        if have_scores:
            token_scores.append(row["scores"])
    report = metrics_mod.ner_token_report(
        [ex.tags for ex in gold],
        pred_tags,
        labels=_read_labels(args.labels),
        token_scores=token_scores if have_scores else None,
    )
    metrics_mod.write_report(report, args.report, args.tsv)
    assert report.micro is not None
    print(
        f"token F1 macro {report.macro.f1:.2f}, global {report.micro.f1:.2f} "
        f"over {len(report.classes)} classes"
    )
    return 0


def cmd_hpo_run(args) -> int:
    with open(args.space, encoding="utf-8") as fh:
        space = hpo_mod.SearchSpace.from_obj(json.load(fh))
    study = hpo_mod.run_study(
        space,
        hpo_mod.command_objective(args.cmd),
        n_trials=args.trials,
        seed=args.seed,
        n_startup_trials=args.startup_trials,
        study_path=args.study,
        n_jobs=args.jobs,
    )
    states = [t.state for t in study.trials]
    summary = {s: states.count(s) for s in sorted(set(states))}
    try:
        best = study.best_trial()
        print(
            f"best trial {best.trial_id}: value {best.final_value} "
            f"with {best.params.to_obj()} ({summary})"
        )
    except ValueError:
        print(f"no completed trials ({summary})")
        return 2
    return 0


def cmd_pretrain_config(args) -> int:
    config = pipeline_mod.emit_pretrain_config(args.phase)
    _write_json(args.out, config.to_obj())
    if config.warning:
        print(f"warning: {config.warning}", file=sys.stderr)
    return 0


def cmd_pipeline(args) -> int:
    config_path = Path(args.config)
    with open(config_path, encoding="utf-8") as fh:
        config = json.load(fh)
    manifest = pipeline_mod.run_pipeline(config, args.out_dir, config_path.parent)
    for stage in manifest.stages:
        print(f"{stage.name}: {stage.n_in} in, {stage.n_out} out")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="medcorpus", description=__doc__)
    parser.add_argument(
        "--jobs",
        type=int,
        default=1,
        help="global cap on parallel workers (used by hpo run)",
    )
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("ingest", help="load and normalize a JSONL corpus")
    p.add_argument("input")
    p.add_argument("--source", help="source kind for lines without one")
    p.add_argument("--out", required=True)
    p.add_argument("--report", help="write a load report JSON")
    p.set_defaults(handler=cmd_ingest)

    p = sub.add_parser("stats", help="corpus statistics table")
    p.add_argument("input")
    p.add_argument("--source")
    p.add_argument("--out", help="TSV output path (default stdout)")
    p.add_argument("--json", help="also write JSON stats")
    p.add_argument("--binary-mb", action="store_true", help="use 2^20 bytes per MB")
    p.set_defaults(handler=cmd_stats)

    p = sub.add_parser("clean", help="apply per-source cleaning policies")
    p.add_argument("input")
    p.add_argument("--source")
    p.add_argument("--out", required=True)
    p.add_argument("--reject-log")
    p.set_defaults(handler=cmd_clean)

    p = sub.add_parser("dedup", help="remove near-duplicate documents")
    p.add_argument("input")
    p.add_argument("--source")
    p.add_argument("--threshold", type=float, default=0.75)
    p.add_argument("--mode", choices=["representative", "literal"], default="representative")
    p.add_argument(
        "--comparison", choices=["strict", "inclusive"], default="strict",
        help="strict: remove only above the threshold; inclusive: at or above",
    )
    p.add_argument(
        "--max-words", type=int, default=128,
        help="only documents this short participate; 0 disables the gate",
    )
    p.add_argument("--engine", choices=["indexed", "exact"], default="indexed")
    p.add_argument("--out")
    p.add_argument("--report")
    p.set_defaults(handler=cmd_dedup)

    p = sub.add_parser("anonymize", help="redact names and dates")
    p.add_argument("input")
    p.add_argument("--source")
    p.add_argument("--gazetteer", help="name list, one entry per line")
    p.add_argument("--case-insensitive", action="store_true")
    p.add_argument("--name-wildcard", default=anon.NAME_WILDCARD)
    p.add_argument("--date-wildcard", default=anon.DATE_WILDCARD)
    p.add_argument("--delete", action="store_true", help="delete matches instead of wildcards")
    p.add_argument("--out", required=True)
    p.add_argument("--report")
    p.set_defaults(handler=cmd_anonymize)

    p = sub.add_parser("vocab", help="subword vocabulary operations")
    vocab_sub = p.add_subparsers(dest="vocab_command")
    pb = vocab_sub.add_parser("build", help="train a vocabulary")
    pb.add_argument("input")
    pb.add_argument("--source")
    pb.add_argument("--out", required=True)
    pb.add_argument("--vocab-size", type=int, default=30000)
    pb.add_argument("--min-word-freq", type=int, default=20)
    pb.add_argument("--min-char-freq", type=int, default=3)
    pb.set_defaults(handler=cmd_vocab_build)

    p = sub.add_parser("tokenize", help="tokenize documents with a vocabulary")
    p.add_argument("input")
    p.add_argument("--source")
    p.add_argument("--vocab", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_tokenize)

    p = sub.add_parser("fertility", help="average subwords per word")
    p.add_argument("input")
    p.add_argument("--source")
    p.add_argument("--vocab", required=True)
    p.add_argument("--per-document", action="store_true")
    p.add_argument("--out", help="write the report JSON here")
    p.set_defaults(handler=cmd_fertility)

    p = sub.add_parser("bench", help="benchmark dataset construction")
    bench_sub = p.add_subparsers(dest="bench_command")
    pb = bench_sub.add_parser("build", help="assign codes, select labels, split, export")
    pb.add_argument("docs")
    pb.add_argument("codes")
    pb.add_argument(
        "--policy",
        choices=[bench.POLICY_DATE_MATCHED, bench.POLICY_PATIENT_ALL],
        default=bench.POLICY_DATE_MATCHED,
    )
    pb.add_argument("--chapter", help="keep only codes with this prefix, e.g. 5-")
    pb.add_argument("--full-icd-codes", action="store_true",
                    help="keep full ICD codes instead of 3-character categories")
    pb.add_argument("--sizes", type=int, nargs=3, default=[1000, 500, 500],
                    metavar=("TRAIN", "VALID", "TEST"))
    pb.add_argument("--seed", type=int, default=0)
    pb.add_argument("--min-test-support", type=int, default=10)
    pb.add_argument("--no-patient-grouping", action="store_true")
    pb.add_argument("--out-dir", required=True)
    pb.set_defaults(handler=cmd_bench_build)
    ps = bench_sub.add_parser("split", help="stratified split of labeled examples")
    ps.add_argument("input")
    ps.add_argument("--sizes", type=int, nargs=3, default=[1000, 500, 500],
                    metavar=("TRAIN", "VALID", "TEST"))
    ps.add_argument("--seed", type=int, default=0)
    ps.add_argument("--no-patient-grouping", action="store_true")
    ps.add_argument("--out-dir", required=True)
    ps.set_defaults(handler=cmd_bench_split)

    p = sub.add_parser("eval", help="evaluate predictions")
    eval_sub = p.add_subparsers(dest="eval_command")
    pc = eval_sub.add_parser("clf", help="multi-label classification metrics")
    pc.add_argument("--gold", required=True, help="gold examples JSONL")
    pc.add_argument("--pred", required=True, help="predictions JSONL with id and scores")
    pc.add_argument("--labels", help="label list file; default: observed labels")
    pc.add_argument("--threshold", type=float, default=0.5)
    pc.add_argument("--report", help="JSON report path")
    pc.add_argument("--tsv", help="TSV report path")
    pc.set_defaults(handler=cmd_eval_clf)
    pn = eval_sub.add_parser("ner", help="token-level NER metrics")
    pn.add_argument("--gold", required=True, help="gold CoNLL file")
    pn.add_argument("--pred", required=True, help="predictions JSONL with tags per document")
    pn.add_argument("--labels")
    pn.add_argument("--report")
    pn.add_argument("--tsv")
    pn.set_defaults(handler=cmd_eval_ner)

    p = sub.add_parser("hpo", help="hyperparameter optimization")
    hpo_sub = p.add_subparsers(dest="hpo_command")
    ph = hpo_sub.add_parser("run", help="run a study over an external objective command")
    ph.add_argument("--space", required=True, help="search space JSON")
    ph.add_argument("--cmd", required=True, help="objective command")
    ph.add_argument("--trials", type=int, default=hpo_mod.DEFAULT_N_TRIALS)
    ph.add_argument("--seed", type=int, default=0)
    ph.add_argument("--startup-trials", type=int, default=hpo_mod.DEFAULT_N_STARTUP_TRIALS)
    ph.add_argument("--study", help="study JSON path, saved after every trial")
    ph.set_defaults(handler=cmd_hpo_run)

    p = sub.add_parser("pretrain-config", help="emit the fixed pretraining schedule")
    p.add_argument("--phase", type=int, choices=[1, 2], required=True)
    p.add_argument("--out", help="output path (default stdout)")
    p.set_defaults(handler=cmd_pretrain_config)

    p = sub.add_parser("pipeline", help="run ingest, clean, dedup, anonymize, stats")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(handler=cmd_pipeline)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    if not hasattr(args, "handler"):
        parser.print_usage(sys.stderr)
        return 1
    if args.command == "hpo" and getattr(args, "hpo_command", None) == "run":
        args.jobs = max(1, args.jobs)
    try:
        return args.handler(args) or 0
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
