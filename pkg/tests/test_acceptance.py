"""Acceptance suite: one test per release criterion.

Run with ``pytest tests/test_acceptance.py -v`` to get one pass/fail line
per criterion. The scale tests (dedup at 50,000 documents, the 200-corpus
engine comparison) dominate the runtime; everything else is desk-sized.
"""

import datetime
import json
import random
import time
from collections import Counter

import pytest

from medcorpus.anonymize import (
    Gazetteer,
    GazetteerRecognizer,
    anonymize_corpus,
    detect_dates,
    detect_names,
    redact,
    verify,
)
from medcorpus.benchmark import (
    CodeRecord,
    SplitSpec,
    assign_codes,
    build_task,
    export_task,
)
from medcorpus.dedup import (
    DedupConfig,
    cosine_similarity,
    dedup_exact,
    dedup_indexed,
    vectorize,
)
from medcorpus.hpo import SearchSpace, Study, run_study
from medcorpus.metrics import ScoredPredictions, auroc, multilabel_report, prf, render_report_tsv
from medcorpus.pipeline import emit_pretrain_config, run_pipeline
from medcorpus.subword import (
    VocabConfig,
    Vocabulary,
    build_vocab,
    filter_rare_chars,
    measure_fertility,
    tokenize_word,
)
from medcorpus.synth import (
    benchmark_corpus,
    bow_corpus,
    morpheme_domain_texts,
    pii_corpus,
    radiology_corpus,
)


def _report_key(report):
    return (
        report.kept_ids,
        report.n_input,
        report.n_kept,
        report.n_removed,
        [(c.representative, tuple(c.members)) for c in report.clusters],
    )


def test_indexed_engine_matches_exact_engine_on_200_random_corpora():
    rng = random.Random(402)
    start = time.monotonic()
    for i in range(200):
        if i < 170:
            n = rng.randint(20, 250)
        elif i < 192:
            n = rng.randint(251, 600)
        else:
            n = rng.randint(601, 1000)
        dup_rate = rng.uniform(0.0, 0.20)
        if i % 10 == 9:
            planted = radiology_corpus(min(n, 300), dup_rate, seed=1000 + i)
        else:
            planted = bow_corpus(
                n,
                vocab_size=rng.randint(30, 500),
                dup_rate=dup_rate,
                seed=1000 + i,
                doc_len=rng.choice([25, 40]),
            )
        cfg = DedupConfig(
            threshold=rng.choice([0.6, 0.75, 0.9]),
            comparison=rng.choice(["strict-greater", "greater-or-equal"]),
            mode=rng.choice(["representative-keep", "literal-drop"]),
            max_doc_words=rng.choice([None, None, None, 30]),
        )
        vectors = [vectorize(d) for d in planted.documents]
        assert _report_key(dedup_indexed(vectors, cfg)) == _report_key(
            dedup_exact(vectors, cfg)
        ), f"engines disagree on corpus {i}"
    assert time.monotonic() - start < 60.0


def test_no_kept_pair_exceeds_threshold_after_dedup():
    rng = random.Random(77)
    cfg = DedupConfig(threshold=0.75, comparison="strict-greater", mode="representative-keep")
    corpora = []
    for i in range(26):
        corpora.append(
            bow_corpus(rng.randint(30, 400), rng.randint(40, 300), rng.uniform(0, 0.2), seed=50 + i)
        )
    corpora.append(radiology_corpus(500, 0.15, seed=81))
    corpora.append(radiology_corpus(500, 0.0, seed=82))
    corpora.append(bow_corpus(1000, 200, 0.19, seed=83))
    corpora.append(bow_corpus(1000, 500, 0.05, seed=84))
    for planted in corpora:
        vectors = {v.doc_id: v for v in (vectorize(d) for d in planted.documents)}
        report = dedup_indexed(list(vectors.values()), cfg)
        kept = [vectors[doc_id] for doc_id in report.kept_ids]
        for a in range(len(kept)):
            for b in range(a + 1, len(kept)):
                sim = cosine_similarity(kept[a], kept[b])
                assert sim <= cfg.threshold, (
                    f"kept pair {kept[a].doc_id}/{kept[b].doc_id} at {sim}"
                )


def test_planted_duplicate_rate_recovered_at_fifty_thousand_documents():
    start = time.monotonic()
    planted = radiology_corpus(50_000, dup_rate=0.19, seed=11)
    vectors = [vectorize(d) for d in planted.documents]
    report = dedup_indexed(vectors, DedupConfig())
    elapsed = time.monotonic() - start
    removal_rate = report.n_removed / report.n_input
    assert abs(removal_rate - 0.19) <= 0.02, f"removal rate {removal_rate:.4f}"
    assert elapsed < 300.0, f"took {elapsed:.1f}s"


def test_auroc_matches_pair_counting_oracle_on_1000_instances():
    def brute(scores, truths):
        pos = [s for s, t in zip(scores, truths) if t]
        neg = [s for s, t in zip(scores, truths) if not t]
        total = 0.0
        for p in pos:
            for q in neg:
                total += 1.0 if p > q else 0.5 if p == q else 0.0
        return total / (len(pos) * len(neg))

    rng = random.Random(9)
    worst = 0.0
    for _ in range(1000):
        n = rng.randint(2, 100)
        if rng.random() < 0.5:
            scores = [rng.randint(0, 9) / 10 for _ in range(n)]  # heavy ties
        else:
            scores = [rng.random() for _ in range(n)]
        truths = [rng.random() < 0.5 for _ in range(n)]
        if len(set(truths)) < 2:
            truths[0] = not truths[1]
        worst = max(worst, abs(auroc(scores, truths) - brute(scores, truths)))
    assert worst <= 1e-12, f"max deviation {worst}"


def test_precision_recall_zero_rows_and_hand_counts():
    # hand count: TP=2, FP=1, FN=1 -> all three metrics 2/3
    p, r, f = prf([True, True, True, False], [True, True, False, True])
    assert abs(p - 2 / 3) <= 1e-12
    assert abs(r - 2 / 3) <= 1e-12
    assert abs(f - 2 / 3) <= 1e-12
    assert prf([True, False], [True, False]) == (1.0, 1.0, 1.0)

    preds = ScoredPredictions(
        classes=["Common", "NoFindings"],
        scores={"Common": [0.9, 0.2], "NoFindings": [0.1, 0.2]},
        truths={"Common": [True, False], "NoFindings": [False, False]},
    )
    report = multilabel_report(preds)
    empty = report.per_class["NoFindings"]
    assert (empty.auroc, empty.f1, empty.precision, empty.recall) == (0.0, 0.0, 0.0, 0.0)
    assert empty.support == 0
    for metric in ("auroc", "precision", "recall", "f1"):
        assert report.excluded[metric] == ["NoFindings"]
    assert report.macro.auroc == 100.0  # only the defined class enters the mean
    assert "NoFindings\t0.00\t0.00\t0.00\t0.00" in render_report_tsv(report)
    assert abs(report.per_class["Common"].precision - 100.0) <= 1e-12


def test_character_and_word_frequency_floors():
    rng = random.Random(31)
    for trial in range(10):
        filler = " ".join(
            "".join(rng.choice("abcdefgh") for _ in range(5)) for _ in range(40)
        )
        rare, boundary = "✚", "✿"  # counts 2 and 3 planted below
        texts = [f"{filler} {rare}x {rare}y", f"{boundary}a {boundary}b {boundary}c"]
        filtered, removed = filter_rare_chars(texts, min_char_freq=3)
        assert rare in removed
        assert boundary not in removed
        assert all(rare not in t for t in filtered)
        assert any(boundary in t for t in filtered)

        below, at = f"unter{trial}wort", f"schwelle{trial}wort"
        corpus = [" ".join([below] * 19 + [at] * 20 + ["grund"] * 40)]
        vocab = build_vocab(corpus, VocabConfig(min_word_freq=20, vocab_size=120))
        assert at in vocab.tokens
        assert below not in vocab.tokens
        word_freqs = Counter(corpus[0].split())
        specials = set(vocab.config.special_tokens)
        for token in vocab.tokens:
            if token in specials or len(token) == 1 or token.startswith("##"):
                continue
            assert word_freqs[token] >= 20, token


def test_fertility_fixtures_roundtrip_and_domain_ordering():
    # every word a whole token: fertility exactly 1.0
    corpus = [" ".join(["herz"] * 25 + ["lunge"] * 25)]
    vocab = build_vocab(corpus, VocabConfig(min_word_freq=20, vocab_size=60))
    report = measure_fertility([("d", corpus[0])], vocab)
    assert report.fertility == 1.0

    # hand vocabulary that forces exactly two pieces per word
    forced = Vocabulary(
        ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", "a", "c", "e", "##b", "##d", "##f"],
        VocabConfig(),
    )
    report = measure_fertility([("d", "ab cd ef ab")], forced)
    assert report.fertility == 2.0

    # 10,000 random words reconstruct exactly from their pieces
    rng = random.Random(5)
    alphabet = "abcdefghij"
    train = [" ".join("".join(rng.choice(alphabet) for _ in range(4)) for _ in range(300))]
    train[0] += " " + " ".join(alphabet)  # every letter reaches the vocabulary
    vocab = build_vocab(train, VocabConfig(min_word_freq=20, vocab_size=200))
    for _ in range(10_000):
        word = "".join(rng.choice(alphabet) for _ in range(rng.randint(1, 12)))
        ids = tokenize_word(word, vocab)
        assert vocab.unk_id not in ids, word
        pieces = [vocab.tokens[i] for i in ids]
        rebuilt = pieces[0] + "".join(p[2:] for p in pieces[1:])
        assert rebuilt == word

    # vocabulary trained in-domain beats one trained out-of-domain
    config = VocabConfig(min_word_freq=5, vocab_size=600)
    clinical_vocab = build_vocab(morpheme_domain_texts(seed=1, domain="clinical"), config)
    news_vocab = build_vocab(morpheme_domain_texts(seed=2, domain="news"), config)
    held_out = [
        (str(i), t) for i, t in enumerate(morpheme_domain_texts(seed=3, domain="clinical"))
    ]
    in_domain = measure_fertility(held_out, clinical_vocab).fertility
    out_of_domain = measure_fertility(held_out, news_vocab).fertility
    assert in_domain < out_of_domain, (in_domain, out_of_domain)


def test_benchmark_split_sizes_support_chapter_and_determinism(tmp_path):
    planted = benchmark_corpus(n_patients=1000, docs_per_patient=2, seed=17, n_codes=12)
    assert len(planted.documents) == 2000
    records = [
        CodeRecord(r["patient_ref"], r["code"], r["system"], datetime.date.fromisoformat(r["date"]))
        for r in planted.code_rows
    ]
    examples, _ = assign_codes(
        planted.documents, records, policy="date-matched", chapter_filter="5-"
    )
    spec = SplitSpec(n_train=1000, n_valid=500, n_test=500, seed=17, min_test_support=10)
    bundle = build_task(examples, spec)

    assert len(bundle.split.train) == 1000
    assert len(bundle.split.valid) == 500
    assert len(bundle.split.test) == 500
    assert all(label.startswith("5-") for label in bundle.labels)
    test_counts = Counter()
    for ex in bundle.split.test:
        test_counts.update(ex.labels)
    for label in bundle.labels:
        assert test_counts[label] >= 10, label
    parts = (bundle.split.train, bundle.split.valid, bundle.split.test)
    patient_sets = [set(e.patient_ref for e in part) for part in parts]
    assert not (patient_sets[0] & patient_sets[1])
    assert not (patient_sets[0] & patient_sets[2])
    assert not (patient_sets[1] & patient_sets[2])

    export_task(bundle, tmp_path / "one")
    export_task(build_task(examples, spec), tmp_path / "two")
    for name in ("train.jsonl", "valid.jsonl", "test.jsonl", "labels.txt", "distribution.tsv"):
        assert (tmp_path / "one" / name).read_bytes() == (tmp_path / "two" / name).read_bytes()


def test_median_pruning_schedule_startup_guard_and_serialization(tmp_path):
    # five startup trials fix the step medians at 0.50 / 0.60 / 0.70;
    # trial 5 survives step 1 on equality and dies at step 2, trial 6
    # dies at step 1, trial 7 stays above every median and completes
    curves = [
        [0.50, 0.60, 0.70],
        [0.40, 0.55, 0.65],
        [0.60, 0.70, 0.80],
        [0.30, 0.45, 0.55],
        [0.55, 0.65, 0.75],
        [0.50, 0.55, 0.99],
        [0.45, 0.99, 0.99],
        [0.52, 0.61, 0.71],
    ]
    calls = iter(range(len(curves)))

    def replay(params, report):
        curve = curves[next(calls)]
        for step, value in enumerate(curve, start=1):
            report(step, value)
        return curve[-1]

    study = run_study(SearchSpace(), replay, n_trials=8, seed=0, n_startup_trials=5)
    states = [t.state for t in study.trials]
    assert states == ["complete"] * 5 + ["pruned", "pruned", "complete"]
    assert study.trials[5].intermediate == [(1, 0.50), (2, 0.55)]
    assert study.trials[6].intermediate == [(1, 0.45)]
    assert study.best_trial().trial_id == 2

    def noisy(params, report):
        level = params.warmup_steps / 1000.0
        for step in range(1, 4):
            report(step, level + step / 10.0)
        return level + 0.35

    paths = [tmp_path / "a.json", tmp_path / "b.json"]
    for path in paths:
        run_study(SearchSpace(), noisy, n_trials=100, seed=29, n_startup_trials=5,
                  study_path=path)
    assert paths[0].read_bytes() == paths[1].read_bytes()
    reloaded = Study.load(paths[0])
    assert len(reloaded.trials) == 100
    assert {t.state for t in reloaded.trials} == {"complete", "pruned"}


def test_anonymization_closure_on_generated_corpus():
    planted = pii_corpus(1000, seed=23)
    gazetteer = Gazetteer(frozenset(planted.names))
    out_docs, report = anonymize_corpus(planted.documents, gazetteer)
    assert report.passed
    assert report.residuals == {}
    assert report.total_date_spans == sum(planted.n_dates.values())

    recognizer = GazetteerRecognizer(gazetteer)
    for original, redacted in zip(planted.documents, out_docs):
        assert verify(redacted.text, gazetteer) == []
        spans = detect_dates(original.text) + detect_names(original.text, recognizer)
        new_text, applied = redact(original.text, spans)
        assert new_text == redacted.text
        # bytes outside the applied spans survive untouched
        data = original.text.encode("utf-8")
        red = redacted.text.encode("utf-8")
        pos_in = pos_out = 0
        for span in applied:
            chunk = data[pos_in : span.start]
            assert red[pos_out : pos_out + len(chunk)] == chunk
            pos_out += len(chunk) + len(span.replacement.encode("utf-8"))
            pos_in = span.end
        assert red[pos_out:] == data[pos_in:]


def test_pretraining_schedule_constants():
    phase1 = emit_pretrain_config(1)
    assert phase1.learning_rate == 6e-3
    assert phase1.batch_size == 65536
    assert phase1.warmup_steps == 2000
    assert phase1.total_steps == 7038
    assert phase1.seq_len == 128
    assert phase1.optimizer == "LAMB"
    assert phase1.lr_schedule == "polynomial-decay"

    phase2 = emit_pretrain_config(2)
    assert phase2.learning_rate is None
    assert phase2.warning is not None
    assert phase2.batch_size == 32768
    assert phase2.warmup_steps == 200
    assert phase2.total_steps == 1563
    assert phase2.seq_len == 512


def test_pipeline_double_run_byte_identical(tmp_path):
    filler = " ".join(f"absatz{i} befund kontrolle" for i in range(15))
    rows = [
        {"id": "a1", "source": "discharge", "text": f"Patient Anna Schmidt kam am 3.4.2021. {filler}"},
        {"id": "a2", "source": "discharge", "text": f"Patient Anna Schmidt kam am 3.4.2021. {filler}"},
        {"id": "b1", "source": "discharge", "text": "Ganz anderer Brief ohne Duplikat, Termin im Oktober 1987."},
        {"id": "r1", "source": "radiology-report", "text": "zu kurz"},
        {"id": "r2", "source": "radiology-report", "text": "Thorax in zwei Ebenen, kein Erguss. " * 8},
    ]
    corpus = tmp_path / "corpus.jsonl"
    with open(corpus, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")
    (tmp_path / "names.txt").write_text("Anna Schmidt\n", encoding="utf-8")
    config = {
        "inputs": [{"path": "corpus.jsonl"}],
        "dedup": {"threshold": 0.75},
        "anonymize": {"gazetteer": "names.txt"},
    }
    run_pipeline(config, tmp_path / "one", tmp_path)
    run_pipeline(config, tmp_path / "two", tmp_path)
    names = [p.name for p in sorted((tmp_path / "one").iterdir())]
    assert "manifest.json" in names
    for name in names:
        assert (tmp_path / "one" / name).read_bytes() == (
            tmp_path / "two" / name
        ).read_bytes(), name
