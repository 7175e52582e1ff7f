"""Rule-based de-identification: gazetteer names and German date formats.

Spans carry byte offsets into the UTF-8 encoding of the original text and
must fall on character boundaries. Redaction splices replacement strings
over the spans and leaves every byte outside them untouched, which makes
the length accounting and the closure check (re-detect on the output)
mechanically verifiable.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace as _dc_replace
from typing import Iterable, Protocol, Sequence

from .corpus import Document

KIND_NAME = "name"
KIND_DATE = "date"

NAME_WILDCARD = "<NAME>"
DATE_WILDCARD = "<DATE>"


class InvalidSpanError(ValueError):
    pass


@dataclass(frozen=True)
class RedactionSpan:
    """Byte range [start, end) in the UTF-8 text, with its surface form."""

    start: int
    end: int
    kind: str
    surface: str
    replacement: str

    def __post_init__(self) -> None:
        if not (0 <= self.start < self.end):
            raise InvalidSpanError(f"bad span bounds [{self.start}, {self.end})")
        if self.kind not in (KIND_NAME, KIND_DATE):
            raise InvalidSpanError(f"unknown span kind {self.kind!r}")


@dataclass(frozen=True)
class Gazetteer:
    """Known person names, one entry per matchable surface form."""

    entries: frozenset[str]
    case_insensitive: bool = False

    @classmethod
    def from_file(cls, path, case_insensitive: bool = False) -> "Gazetteer":
        with open(path, encoding="utf-8") as fh:
            entries = frozenset(line.strip() for line in fh if line.strip())
        return cls(entries, case_insensitive)


class NameRecognizer(Protocol):
    def detect(self, text: str) -> list[RedactionSpan]: ...


def _byte_offsets(text: str) -> list[int]:
    offs = [0]
    total = 0
    for ch in text:
        total += len(ch.encode("utf-8"))
        offs.append(total)
    return offs


def _drop_contained(spans: list[RedactionSpan]) -> list[RedactionSpan]:
    """Keep only maximal spans: drop any span nested inside another."""
    spans = sorted(spans, key=lambda s: (s.start, -s.end))
    out: list[RedactionSpan] = []
    max_end = -1
    for span in spans:
        if span.end <= max_end:
            continue
        out.append(span)
        max_end = span.end
    return out


class GazetteerRecognizer:
    """Longest-match gazetteer scan on word boundaries.

    Entries are alternated longest-first so that "Anna Schmidt" wins over
    "Anna" at the same position; nested matches are discarded afterwards.
    """

    def __init__(self, gazetteer: Gazetteer, wildcard: str = NAME_WILDCARD) -> None:
        if not gazetteer.entries:
            raise ValueError("gazetteer has no entries")
        self.gazetteer = gazetteer
        self.wildcard = wildcard
        ordered = sorted(gazetteer.entries, key=lambda e: (-len(e), e))
        pattern = r"\b(?:%s)\b" % "|".join(re.escape(e) for e in ordered)
        flags = re.IGNORECASE if gazetteer.case_insensitive else 0
        self._pattern = re.compile(pattern, flags)

    def detect(self, text: str) -> list[RedactionSpan]:
        offs = _byte_offsets(text)
        spans = [
            RedactionSpan(
                offs[m.start()], offs[m.end()], KIND_NAME, m.group(0), self.wildcard
            )
            for m in self._pattern.finditer(text)
        ]
        return _drop_contained(spans)


def detect_names(text: str, recognizer: NameRecognizer) -> list[RedactionSpan]:
    return sorted(recognizer.detect(text), key=lambda s: (s.start, s.end))


_MONTHS = (
    "Januar|Februar|März|April|Mai|Juni|Juli|August|September|Oktober|November|Dezember"
)

# Numeric day.month.year; two-digit years only in the full DD.MM.YY form.
_D_M_YYYY = re.compile(r"(?<![\d.])([0-3]?\d)\.([01]?\d)\.(\d{4})(?!\d)")
_DD_MM_YY = re.compile(r"(?<![\d.])(\d{2})\.(\d{2})\.(\d{2})(?!\d)")
_ISO = re.compile(r"(?<!\d)(\d{4})-(\d{2})-(\d{2})(?!\d)")
_D_MONTH_YYYY = re.compile(
    r"(?<![\d.])([0-3]?\d)\.\s*(%s)\s+(\d{4})(?!\d)" % _MONTHS, re.IGNORECASE
)
_MONTH_YYYY = re.compile(r"\b(%s)\s+(\d{4})(?!\d)" % _MONTHS, re.IGNORECASE)


def _valid_day(s: str) -> bool:
    return 1 <= int(s) <= 31


def _valid_month(s: str) -> bool:
    return 1 <= int(s) <= 12


def detect_dates(text: str, wildcard: str = DATE_WILDCARD) -> list[RedactionSpan]:
    """Find German-format dates.

    Covered: D.M.YYYY and DD.MM.YYYY, DD.MM.YY, "D. Monat YYYY",
    "Monat YYYY", and ISO YYYY-MM-DD. Day and month values are range
    checked, so "12.34" or a 34th month never match.
    """
    offs = _byte_offsets(text)
    raw: list[RedactionSpan] = []

    def add(m: re.Match) -> None:
        raw.append(
            RedactionSpan(offs[m.start()], offs[m.end()], KIND_DATE, m.group(0), wildcard)
        )

    for m in _D_M_YYYY.finditer(text):
        if _valid_day(m.group(1)) and _valid_month(m.group(2)):
            add(m)
    for m in _DD_MM_YY.finditer(text):
        if _valid_day(m.group(1)) and _valid_month(m.group(2)):
            add(m)
    for m in _ISO.finditer(text):
        if _valid_month(m.group(2)) and _valid_day(m.group(3)):
            add(m)
    for m in _D_MONTH_YYYY.finditer(text):
        if _valid_day(m.group(1)):
            add(m)
    for m in _MONTH_YYYY.finditer(text):
        add(m)
    return sorted(_drop_contained(raw), key=lambda s: (s.start, s.end))


def _merge_spans(spans: Sequence[RedactionSpan]) -> list[RedactionSpan]:
    """Union overlapping spans; the earlier-starting span decides kind and
    replacement. Adjacent but non-overlapping spans stay separate."""
    if not spans:
        return []
    ordered = sorted(spans, key=lambda s: (s.start, -s.end))
    merged = [ordered[0]]
    for span in ordered[1:]:
        last = merged[-1]
        if span.start < last.end:
            if span.end > last.end:
                merged[-1] = _dc_replace(last, end=span.end, surface="")
        else:
            merged.append(span)
    return merged


def redact(text: str, spans: Sequence[RedactionSpan]) -> tuple[str, list[RedactionSpan]]:
    """Replace each merged span with its replacement string.

    Returns the redacted text and the merged spans that were applied, with
    surfaces re-read from the original text. Spans must lie inside the text
    and on character boundaries.
    """
    data = text.encode("utf-8")

    def boundary(pos: int) -> bool:
        return pos == len(data) or (data[pos] & 0xC0) != 0x80

    merged = _merge_spans(spans)
    applied: list[RedactionSpan] = []
    parts: list[bytes] = []
    cursor = 0
    for span in merged:
        if span.end > len(data):
            raise InvalidSpanError(f"span [{span.start}, {span.end}) outside text")
        if not boundary(span.start) or not boundary(span.end):
            raise InvalidSpanError(
                f"span [{span.start}, {span.end}) does not fall on character boundaries"
            )
        if span.start < cursor:
            raise InvalidSpanError("overlapping spans survived merging")
        surface = data[span.start : span.end].decode("utf-8")
        applied.append(_dc_replace(span, surface=surface))
        parts.append(data[cursor : span.start])
        parts.append(span.replacement.encode("utf-8"))
        cursor = span.end
    parts.append(data[cursor:])
    return b"".join(parts).decode("utf-8"), applied


def _residual_scan(text: str, recognizer: NameRecognizer | None) -> list[RedactionSpan]:
    residuals = list(detect_dates(text))
    if recognizer is not None:
        residuals.extend(detect_names(text, recognizer))
    return sorted(residuals, key=lambda s: (s.start, s.end))


def verify(redacted: str, gazetteer: Gazetteer | None) -> list[RedactionSpan]:
    """Re-run detection on redacted text; any hit is a residual."""
    recognizer = None
    if gazetteer is not None and gazetteer.entries:
        recognizer = GazetteerRecognizer(gazetteer)
    return _residual_scan(redacted, recognizer)


@dataclass
class DocumentRedaction:
    doc_id: str
    n_name_spans: int
    n_date_spans: int


@dataclass
class AnonymizationReport:
    per_document: list[DocumentRedaction] = field(default_factory=list)
    residuals: dict[str, list[RedactionSpan]] = field(default_factory=dict)

    @property
    def total_name_spans(self) -> int:
        return sum(d.n_name_spans for d in self.per_document)

    @property
    def total_date_spans(self) -> int:
        return sum(d.n_date_spans for d in self.per_document)

    @property
    def passed(self) -> bool:
        return not self.residuals

    def to_obj(self) -> dict:
        return {
            "total_name_spans": self.total_name_spans,
            "total_date_spans": self.total_date_spans,
            "passed": self.passed,
            "per_document": [
                {"id": d.doc_id, "n_name_spans": d.n_name_spans, "n_date_spans": d.n_date_spans}
                for d in self.per_document
            ],
            "residuals": {
                doc_id: [
                    {"start": s.start, "end": s.end, "kind": s.kind, "surface": s.surface}
                    for s in spans
                ]
                for doc_id, spans in self.residuals.items()
            },
        }


def anonymize_corpus(
    docs: Iterable[Document],
    gazetteer: Gazetteer | None,
    name_wildcard: str = NAME_WILDCARD,
    date_wildcard: str = DATE_WILDCARD,
    delete: bool = False,
    check: bool = True,
) -> tuple[list[Document], AnonymizationReport]:
    """Redact names and dates across a corpus.

    ``delete=True`` removes matched surfaces instead of writing wildcards.
    With ``check`` enabled every output document is re-scanned and hits are
    recorded as residuals.
    """
    recognizer = None
    if gazetteer is not None and gazetteer.entries:
        recognizer = GazetteerRecognizer(gazetteer, "" if delete else name_wildcard)
    out_docs: list[Document] = []
    report = AnonymizationReport()
    date_repl = "" if delete else date_wildcard
    for doc in docs:
        spans: list[RedactionSpan] = list(detect_dates(doc.text, date_repl))
        n_dates = len(spans)
        n_names = 0
        if recognizer is not None:
            name_spans = detect_names(doc.text, recognizer)
            n_names = len(name_spans)
            spans.extend(name_spans)
        new_text, _ = redact(doc.text, spans)
        out_docs.append(_dc_replace(doc, text=new_text))
        report.per_document.append(DocumentRedaction(doc.id, n_names, n_dates))
        if check:
            residual = _residual_scan(new_text, recognizer)
            if residual:
                report.residuals[doc.id] = residual
    return out_docs, report
