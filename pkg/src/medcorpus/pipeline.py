"""End-to-end corpus pipeline and pretraining configuration emission.

The pipeline wires ingest, clean, dedup, anonymize, and stats together,
writing every intermediate artifact plus a manifest that records stage
configs (as hashes), input and output counts, and relative file paths.
Running the same config on the same inputs twice yields byte-identical
outputs and manifests.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from . import anonymize as anon
from . import corpus as corpus_mod
from . import dedup as dedup_mod

PHASE2_LR_WARNING = (
    "learning_rate is null: no reliable peak value is available for phase 2; "
    "set it explicitly before use"
)


@dataclass(frozen=True)
class PretrainConfig:
    phase: int
    seq_len: int
    learning_rate: float | None
    batch_size: int
    warmup_steps: int
    total_steps: int
    optimizer: str
    lr_schedule: str
    warning: str | None = None

    def to_obj(self) -> dict:
        obj = {
            "phase": self.phase,
            "seq_len": self.seq_len,
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "warmup_steps": self.warmup_steps,
            "total_steps": self.total_steps,
            "optimizer": self.optimizer,
            "lr_schedule": self.lr_schedule,
        }
        if self.warning is not None:
            obj["warning"] = self.warning
        return obj


def emit_pretrain_config(phase: int) -> PretrainConfig:
    """Fixed two-phase schedule constants.

    Phase 2 has no trustworthy peak learning rate on record, so the field
    is an explicit null plus a warning rather than a guess.
    """
    if phase == 1:
        return PretrainConfig(
            phase=1,
            seq_len=128,
            learning_rate=6e-3,
            batch_size=65536,
            warmup_steps=2000,
            total_steps=7038,
            optimizer="LAMB",
            lr_schedule="polynomial-decay",
        )
    if phase == 2:
        return PretrainConfig(
            phase=2,
            seq_len=512,
            learning_rate=None,
            batch_size=32768,
            warmup_steps=200,
            total_steps=1563,
            optimizer="LAMB",
            lr_schedule="polynomial-decay",
            warning=PHASE2_LR_WARNING,
        )
    raise ValueError(f"unknown pretraining phase {phase}")


# --- pipeline --------------------------------------------------------------


@dataclass
class StageRecord:
    name: str
    config_hash: str
    inputs: list[str]
    outputs: list[str]
    n_in: int
    n_out: int
    details: dict = field(default_factory=dict)

    def to_obj(self) -> dict:
        return {
            "name": self.name,
            "config_hash": self.config_hash,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "n_in": self.n_in,
            "n_out": self.n_out,
            "details": self.details,
        }


@dataclass
class PipelineManifest:
    stages: list[StageRecord] = field(default_factory=list)

    def to_obj(self) -> dict:
        return {"stages": [s.to_obj() for s in self.stages]}

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_obj(), fh, ensure_ascii=False, indent=2, sort_keys=True)
            fh.write("\n")


def _config_hash(obj) -> str:
    return hashlib.sha256(
        json.dumps(obj, sort_keys=True, ensure_ascii=False).encode("utf-8")
    ).hexdigest()


def _policy_from_obj(obj: dict) -> corpus_mod.CleanPolicy:
    stopwords = obj.get("stopword_list")
    use_filter = bool(obj.get("stopword_sentence_filter", False))
    if use_filter and stopwords is None:
        stopword_set = corpus_mod.default_german_stopwords()
    else:
        stopword_set = frozenset(stopwords or ())
    return corpus_mod.CleanPolicy(
        min_chars=int(obj.get("min_chars", 0)),
        min_pages=int(obj.get("min_pages", 0)),
        chars_per_page=int(obj.get("chars_per_page", corpus_mod.DEFAULT_CHARS_PER_PAGE)),
        stopword_sentence_filter=use_filter,
        stopword_list=stopword_set,
    )


def run_pipeline(config: dict, out_dir: str | Path, config_dir: str | Path = ".") -> PipelineManifest:
    """Run ingest, clean, dedup, anonymize, stats on the configured inputs.

    Relative input paths are resolved against ``config_dir``; the manifest
    stores them as written in the config so that reruns into different
    output directories stay comparable.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    base = Path(config_dir)
    manifest = PipelineManifest()

    inputs = config.get("inputs")
    if not inputs:
        raise ValueError("pipeline config has no 'inputs'")

    # ingest
    docs: list[corpus_mod.Document] = []
    load_errors: list[dict] = []
    for entry in inputs:
        path = entry["path"]
        result = corpus_mod.load_documents(base / path, entry.get("source"))
        docs.extend(result.documents)
        load_errors.extend(
            {"path": path, "line": e.line_no, "message": e.message} for e in result.errors
        )
    corpus_mod.write_documents(out / "ingested.jsonl", docs)
    with open(out / "load_report.json", "w", encoding="utf-8") as fh:
        json.dump({"errors": load_errors}, fh, ensure_ascii=False, indent=2, sort_keys=True)
        fh.write("\n")
    manifest.stages.append(
        StageRecord(
            "ingest",
            _config_hash(inputs),
            [e["path"] for e in inputs],
            ["ingested.jsonl", "load_report.json"],
            n_in=len(docs) + len(load_errors),
            n_out=len(docs),
            details={"n_errors": len(load_errors)},
        )
    )

    # clean
    clean_cfg = config.get("clean", {})
    policies = corpus_mod.policy_presets()
    for source, obj in clean_cfg.get("policies", {}).items():
        policies[source] = _policy_from_obj(obj)
    cleaned, rejects = corpus_mod.clean_corpus(docs, policies)
    corpus_mod.write_documents(out / "cleaned.jsonl", cleaned)
    with open(out / "reject_log.json", "w", encoding="utf-8") as fh:
        json.dump(
            {
                "rejects": [
                    {"id": r.doc_id, "source": r.source, "reason": r.reason} for r in rejects
                ]
            },
            fh,
            ensure_ascii=False,
            indent=2,
            sort_keys=True,
        )
        fh.write("\n")
    manifest.stages.append(
        StageRecord(
            "clean",
            _config_hash(clean_cfg),
            ["ingested.jsonl"],
            ["cleaned.jsonl", "reject_log.json"],
            n_in=len(docs),
            n_out=len(cleaned),
            details={"n_rejected": len(rejects)},
        )
    )

    # dedup, within each source
    dd_cfg_obj = config.get("dedup", {})
    dd_cfg = dedup_mod.DedupConfig(
        threshold=float(dd_cfg_obj.get("threshold", 0.75)),
        comparison=dd_cfg_obj.get("comparison", dedup_mod.COMPARISON_STRICT),
        mode=dd_cfg_obj.get("mode", dedup_mod.MODE_REPRESENTATIVE),
        max_doc_words=dd_cfg_obj.get("max_doc_words"),
    )
    kept_ids: set[str] = set()
    reports: dict[str, dedup_mod.DedupReport] = {}
    sources = sorted({d.source for d in cleaned})
    for source in sources:
        group = [d for d in cleaned if d.source == source]
        vectors = []
        unvectorizable = []
        for d in group:
            try:
                vectors.append(dedup_mod.vectorize(d))
            except dedup_mod.EmptyVectorError:
                unvectorizable.append(d.id)
        report = dedup_mod.dedup_indexed(vectors, dd_cfg)
        reports[source] = report
        kept_ids.update(report.kept_ids)
        kept_ids.update(unvectorizable)
    deduped = [d for d in cleaned if d.id in kept_ids]
    corpus_mod.write_documents(out / "deduped.jsonl", deduped)
    with open(out / "dedup_report.json", "w", encoding="utf-8") as fh:
        json.dump(
            {src: reports[src].to_obj() for src in sources},
            fh,
            ensure_ascii=False,
            indent=2,
            sort_keys=True,
        )
        fh.write("\n")
    manifest.stages.append(
        StageRecord(
            "dedup",
            _config_hash(dd_cfg_obj),
            ["cleaned.jsonl"],
            ["deduped.jsonl", "dedup_report.json"],
            n_in=len(cleaned),
            n_out=len(deduped),
            details={src: reports[src].n_removed for src in sources},
        )
    )

    # anonymize
    an_cfg = config.get("anonymize", {})
    gazetteer = None
    if an_cfg.get("gazetteer"):
        gazetteer = anon.Gazetteer.from_file(
            base / an_cfg["gazetteer"], bool(an_cfg.get("case_insensitive", False))
        )
    anonymized, anon_report = anon.anonymize_corpus(
        deduped,
        gazetteer,
        name_wildcard=an_cfg.get("name_wildcard", anon.NAME_WILDCARD),
        date_wildcard=an_cfg.get("date_wildcard", anon.DATE_WILDCARD),
        delete=bool(an_cfg.get("delete", False)),
    )
    corpus_mod.write_documents(out / "anonymized.jsonl", anonymized)
    with open(out / "anonymization_report.json", "w", encoding="utf-8") as fh:
        json.dump(anon_report.to_obj(), fh, ensure_ascii=False, indent=2, sort_keys=True)
        fh.write("\n")
    manifest.stages.append(
        StageRecord(
            "anonymize",
            _config_hash(an_cfg),
            ["deduped.jsonl"],
            ["anonymized.jsonl", "anonymization_report.json"],
            n_in=len(deduped),
            n_out=len(anonymized),
            details={
                "name_spans": anon_report.total_name_spans,
                "date_spans": anon_report.total_date_spans,
                "residual_documents": len(anon_report.residuals),
            },
        )
    )

    # stats
    stats_cfg = config.get("stats", {})
    mb_base = corpus_mod.MB_BINARY if stats_cfg.get("binary_mb") else corpus_mod.MB_DECIMAL
    stats = corpus_mod.compute_corpus_stats(anonymized)
    with open(out / "stats.tsv", "w", encoding="utf-8") as fh:
        fh.write(corpus_mod.stats_to_tsv(stats, mb_base))
    with open(out / "stats.json", "w", encoding="utf-8") as fh:
        json.dump(corpus_mod.stats_to_obj(stats, mb_base), fh, ensure_ascii=False, indent=2, sort_keys=True)
        fh.write("\n")
    manifest.stages.append(
        StageRecord(
            "stats",
            _config_hash(stats_cfg),
            ["anonymized.jsonl"],
            ["stats.tsv", "stats.json"],
            n_in=len(anonymized),
            n_out=len(anonymized),
            details={"total_words": stats.total.n_words},
        )
    )

    manifest.save(out / "manifest.json")
    return manifest
