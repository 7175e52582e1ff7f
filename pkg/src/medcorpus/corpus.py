"""Document ingestion, per-source cleaning, and corpus statistics.

Documents arrive as JSONL, one object per line, and flow through the rest of
the toolkit as :class:`Document` values. Cleaning is policy-driven so that
each source kind (radiology reports, theses, ...) can apply its own length
thresholds and the stopword sentence filter.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from datetime import date as _date
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

KNOWN_SOURCES = frozenset(
    {
        "radiology-report",
        "thesis",
        "ehr",
        "textbook",
        "wiki",
        "webcrawl",
        "abstract",
        "other",
    }
)

SENTENCE_TERMINATORS = ".!?;"

REJECT_TOO_SHORT = "too-short"
REJECT_TOO_FEW_PAGES = "too-few-pages"
REJECT_EMPTY_AFTER_FILTER = "empty-after-filter"

DEFAULT_CHARS_PER_PAGE = 1800


@dataclass
class Document:
    """One text unit with its provenance.

    ``source`` is an open set of kinds; :data:`KNOWN_SOURCES` lists the ones
    the pipeline has presets for, but unknown kinds pass through untouched.
    """

    id: str
    source: str
    text: str
    doc_date: _date | None = None
    patient_ref: str | None = None
    metadata: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("document id must be non-empty")


@dataclass
class LoadError:
    line_no: int
    message: str


@dataclass
class LoadResult:
    documents: list[Document]
    errors: list[LoadError]


def _document_from_obj(obj: object, source: str | None, line_no: int) -> Document:
    if not isinstance(obj, dict):
        raise ValueError("line is not a JSON object")
    text = obj.get("text")
    if not isinstance(text, str):
        raise ValueError("missing or non-string 'text' field")
    src = obj.get("source", source)
    if not isinstance(src, str) or not src:
        raise ValueError("missing 'source' field and no default source given")
    doc_id = obj.get("id")
    if doc_id is None:
        doc_id = f"{src}:{line_no}"
    elif not isinstance(doc_id, str) or not doc_id:
        raise ValueError("'id' must be a non-empty string")
    doc_date = None
    raw_date = obj.get("date")
    if raw_date is not None:
        if not isinstance(raw_date, str):
            raise ValueError("'date' must be an ISO-8601 string")
        try:
            doc_date = _date.fromisoformat(raw_date)
        except ValueError as exc:
            raise ValueError(f"bad 'date' value {raw_date!r}: {exc}") from None
    patient_ref = obj.get("patient_ref")
    if patient_ref is not None and not isinstance(patient_ref, str):
        raise ValueError("'patient_ref' must be a string")
    meta = obj.get("meta") or {}
    if not isinstance(meta, dict):
        raise ValueError("'meta' must be an object")
    metadata = {str(k): str(v) for k, v in meta.items()}
    return Document(doc_id, src, text, doc_date, patient_ref, metadata)


def load_documents(path: str | Path, source: str | None = None) -> LoadResult:
    """Read a JSONL corpus file.

    Malformed lines are reported in the result, never dropped silently.
    ``source`` supplies the source kind for lines that do not carry one.
    Ids are taken from the file or synthesized as ``<source>:<line-number>``;
    a repeated id is an error for the later line.
    """
    documents: list[Document] = []
    errors: list[LoadError] = []
    seen_ids: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                doc = _document_from_obj(obj, source, line_no)
            except ValueError as exc:
                errors.append(LoadError(line_no, str(exc)))
                continue
            if doc.id in seen_ids:
                errors.append(LoadError(line_no, f"duplicate document id {doc.id!r}"))
                continue
            seen_ids.add(doc.id)
            documents.append(doc)
    return LoadResult(documents, errors)


def document_to_obj(doc: Document) -> dict:
    obj: dict = {"id": doc.id, "source": doc.source, "text": doc.text}
    if doc.doc_date is not None:
        obj["date"] = doc.doc_date.isoformat()
    if doc.patient_ref is not None:
        obj["patient_ref"] = doc.patient_ref
    if doc.metadata:
        obj["meta"] = doc.metadata
    return obj


def write_documents(path: str | Path, docs: Iterable[Document]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for doc in docs:
            fh.write(json.dumps(document_to_obj(doc), ensure_ascii=False))
            fh.write("\n")


# --- sentence and word segmentation ---------------------------------------


def split_sentences(text: str) -> list[str]:
    """Split on ``. ! ? ;`` followed by whitespace and an uppercase letter,
    or by end of text. No abbreviation handling, by design: the rule is
    cheap, deterministic, and stable under re-splitting of its own output.
    """
    sentences: list[str] = []
    start = 0
    i = 0
    n = len(text)
    while i < n:
        if text[i] in SENTENCE_TERMINATORS:
            j = i + 1
            while j < n and text[j].isspace():
                j += 1
            if j == n or (j > i + 1 and text[j].isupper()):
                seg = text[start : i + 1].strip()
                if seg:
                    sentences.append(seg)
                start = j
                i = j
                continue
        i += 1
    tail = text[start:].strip()
    if tail:
        sentences.append(tail)
    return sentences


def count_words(text: str) -> int:
    """A word is a maximal run of non-whitespace characters."""
    return len(text.split())


# --- cleaning --------------------------------------------------------------


def default_german_stopwords() -> frozenset[str]:
    data = resources.files("medcorpus").joinpath("data/stopwords_de.txt").read_text("utf-8")
    return frozenset(w for w in data.split() if w)


@dataclass(frozen=True)
class CleanPolicy:
    """Thresholds and filters applied per document before anything else.

    A page is a fixed character budget, not a layout page. The stopword
    sentence filter deletes every sentence that contains no stopword at all
    and re-joins the remainder; length thresholds are then checked on the
    filtered text so that cleaning is idempotent.
    """

    min_chars: int = 0
    min_pages: int = 0
    chars_per_page: int = DEFAULT_CHARS_PER_PAGE
    stopword_sentence_filter: bool = False
    stopword_list: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        if self.min_chars < 0 or self.min_pages < 0:
            raise ValueError("thresholds must be >= 0")
        if self.chars_per_page <= 0:
            raise ValueError("chars_per_page must be positive")
        if self.stopword_sentence_filter and not self.stopword_list:
            raise ValueError("stopword filter enabled but stopword_list is empty")

    @classmethod
    def radiology(cls) -> "CleanPolicy":
        return cls(min_chars=100)

    @classmethod
    def thesis(cls, stopwords: frozenset[str] | None = None) -> "CleanPolicy":
        return cls(
            min_pages=15,
            stopword_sentence_filter=True,
            stopword_list=stopwords or default_german_stopwords(),
        )


def policy_presets() -> dict[str, CleanPolicy]:
    return {"radiology-report": CleanPolicy.radiology(), "thesis": CleanPolicy.thesis()}


@dataclass
class CleanOutcome:
    kept: bool
    document: Document | None
    reason: str | None


def _sentence_has_stopword(sentence: str, stopwords: frozenset[str]) -> bool:
    for token in sentence.split():
        start, end = 0, len(token)
        while start < end and not token[start].isalnum():
            start += 1
        while end > start and not token[end - 1].isalnum():
            end -= 1
        word = token[start:end]
        if word.lower() in stopwords:
            return True
    return False


def clean_document(doc: Document, policy: CleanPolicy) -> CleanOutcome:
    """Apply one policy to one document.

    Rejection reasons, in check order: empty-after-filter, too-short,
    too-few-pages. The text is only rewritten when the sentence filter
    actually removed something.
    """
    text = doc.text
    if policy.stopword_sentence_filter:
        sentences = split_sentences(text)
        kept_sentences = [s for s in sentences if _sentence_has_stopword(s, policy.stopword_list)]
        if not kept_sentences:
            return CleanOutcome(False, None, REJECT_EMPTY_AFTER_FILTER)
        if len(kept_sentences) != len(sentences):
            text = " ".join(kept_sentences)
    if len(text) < policy.min_chars:
        return CleanOutcome(False, None, REJECT_TOO_SHORT)
    if len(text) < policy.min_pages * policy.chars_per_page:
        return CleanOutcome(False, None, REJECT_TOO_FEW_PAGES)
    if text is doc.text:
        return CleanOutcome(True, doc, None)
    return CleanOutcome(True, replace(doc, text=text), None)


@dataclass
class RejectRecord:
    doc_id: str
    source: str
    reason: str


def clean_corpus(
    docs: Sequence[Document],
    policies: Mapping[str, CleanPolicy] | CleanPolicy | None = None,
) -> tuple[list[Document], list[RejectRecord]]:
    """Clean a corpus, choosing the policy by source kind.

    ``policies`` may be a single policy for everything, a source->policy map
    (unknown sources get a permissive default), or None for the presets.
    Rejected documents land in the reject log with their reason.
    """
    if policies is None:
        policies = policy_presets()
    permissive = CleanPolicy()
    kept: list[Document] = []
    rejects: list[RejectRecord] = []
    for doc in docs:
        if isinstance(policies, CleanPolicy):
            policy = policies
        else:
            policy = policies.get(doc.source, permissive)
        outcome = clean_document(doc, policy)
        if outcome.kept:
            assert outcome.document is not None
            kept.append(outcome.document)
        else:
            assert outcome.reason is not None
            rejects.append(RejectRecord(doc.id, doc.source, outcome.reason))
    return kept, rejects


# --- statistics ------------------------------------------------------------


@dataclass
class SourceStats:
    n_documents: int = 0
    n_sentences: int = 0
    n_words: int = 0
    size_bytes: int = 0

    def add_document(self, doc: Document) -> None:
        self.n_documents += 1
        self.n_sentences += len(split_sentences(doc.text))
        self.n_words += count_words(doc.text)
        self.size_bytes += len(doc.text.encode("utf-8"))

    def merged(self, other: "SourceStats") -> "SourceStats":
        return SourceStats(
            self.n_documents + other.n_documents,
            self.n_sentences + other.n_sentences,
            self.n_words + other.n_words,
            self.size_bytes + other.size_bytes,
        )


@dataclass
class CorpusStats:
    per_source: dict[str, SourceStats]

    @property
    def total(self) -> SourceStats:
        total = SourceStats()
        for stats in self.per_source.values():
            total = total.merged(stats)
        return total


def compute_corpus_stats(docs: Iterable[Document]) -> CorpusStats:
    per_source: dict[str, SourceStats] = {}
    for doc in docs:
        per_source.setdefault(doc.source, SourceStats()).add_document(doc)
    return CorpusStats(per_source)


def merged_stats(a: CorpusStats, b: CorpusStats) -> CorpusStats:
    per_source = dict(a.per_source)
    for source, s in b.per_source.items():
        per_source[source] = per_source.get(source, SourceStats()).merged(s)
    return CorpusStats(per_source)


MB_DECIMAL = 1_000_000
MB_BINARY = 1 << 20


def _size_mb(size_bytes: int, mb_base: int) -> int:
    return round(size_bytes / mb_base)


def stats_to_tsv(stats: CorpusStats, mb_base: int = MB_DECIMAL) -> str:
    """Render the per-source table plus a Summary row.

    Size (MB) is bytes divided by ``mb_base`` (decimal megabytes by default,
    pass MB_BINARY for mebibytes), rounded to an integer.
    """
    lines = ["Source\tNo. Documents\tNo. Sentences\tNo. Words\tSize (MB)"]
    for source in sorted(stats.per_source):
        s = stats.per_source[source]
        lines.append(
            f"{source}\t{s.n_documents}\t{s.n_sentences}\t{s.n_words}\t{_size_mb(s.size_bytes, mb_base)}"
        )
    t = stats.total
    lines.append(
        f"Summary\t{t.n_documents}\t{t.n_sentences}\t{t.n_words}\t{_size_mb(t.size_bytes, mb_base)}"
    )
    return "\n".join(lines) + "\n"


def stats_to_obj(stats: CorpusStats, mb_base: int = MB_DECIMAL) -> dict:
    def one(s: SourceStats) -> dict:
        return {
            "n_documents": s.n_documents,
            "n_sentences": s.n_sentences,
            "n_words": s.n_words,
            "size_bytes": s.size_bytes,
            "size_mb": _size_mb(s.size_bytes, mb_base),
        }

    return {
        "per_source": {src: one(stats.per_source[src]) for src in sorted(stats.per_source)},
        "total": one(stats.total),
    }
