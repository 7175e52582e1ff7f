"""Clinical corpus engineering toolkit.

Cleaning, near-duplicate removal, anonymization, subword vocabulary
construction, benchmark dataset building, evaluation metrics, and a
median-pruning hyperparameter search, for German clinical text at desk
scale.
"""

from .corpus import (
    CleanPolicy,
    Document,
    clean_corpus,
    compute_corpus_stats,
    load_documents,
    split_sentences,
)
from .dedup import BowVector, DedupConfig, cosine_similarity, dedup_exact, dedup_indexed, vectorize
from .anonymize import Gazetteer, anonymize_corpus
from .subword import VocabConfig, Vocabulary, build_vocab, measure_fertility, tokenize_text
from .metrics import auroc, multilabel_report, ner_token_report
from .benchmark import SplitSpec, build_task, stratified_split
from .hpo import SearchSpace, Study, run_study, should_prune
from .pipeline import emit_pretrain_config, run_pipeline

__version__ = "0.1.0"

__all__ = [
    "BowVector",
    "CleanPolicy",
    "DedupConfig",
    "Document",
    "Gazetteer",
    "SearchSpace",
    "SplitSpec",
    "Study",
    "VocabConfig",
    "Vocabulary",
    "anonymize_corpus",
    "auroc",
    "build_task",
    "build_vocab",
    "clean_corpus",
    "compute_corpus_stats",
    "cosine_similarity",
    "dedup_exact",
    "dedup_indexed",
    "emit_pretrain_config",
    "load_documents",
    "measure_fertility",
    "multilabel_report",
    "ner_token_report",
    "run_pipeline",
    "run_study",
    "should_prune",
    "split_sentences",
    "stratified_split",
    "tokenize_text",
    "vectorize",
    "__version__",
]
