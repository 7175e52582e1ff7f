"""Evaluation metrics for multi-label classification and token-level NER.

Conventions: every zero-denominator metric is reported as 0.0 and the
class is excluded from the corresponding macro mean; AUROC over a
single-class truth vector is undefined in the same way. Reports carry
percent-scaled values and are rendered with two decimals.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np


class UndefinedMetricError(ValueError):
    """The metric has no value on this input (for example single-class AUROC)."""


def auroc(scores: Sequence[float], truths: Sequence[bool]) -> float:
    """Probability that a random positive outranks a random negative,
    counting exact score ties as one half. Rank-based; identical to
    brute-force pair counting up to exact float arithmetic."""
    s = np.asarray(scores, dtype=float)
    t = np.asarray(truths, dtype=bool)
    if s.shape != t.shape or s.ndim != 1:
        raise ValueError("scores and truths must be parallel 1-d sequences")
    n_pos = int(t.sum())
    n_neg = int(t.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUROC undefined: truth has a single class")
    order = np.argsort(s, kind="mergesort")
    ranks = np.empty(t.size, dtype=float)
    sorted_scores = s[order]
    i = 0
    while i < t.size:
        j = i
        while j + 1 < t.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j + 2) / 2.0
        i = j + 1
    rank_sum = float(ranks[t].sum())
    u = rank_sum - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def prf(predictions: Sequence[bool], truths: Sequence[bool]) -> tuple[float, float, float]:
    """Precision, recall, F1 from parallel boolean vectors.

    Zero denominators yield 0.0, matching the report convention.
    """
    tp = fp = fn = 0
    if len(predictions) != len(truths):
        raise ValueError("predictions and truths must be parallel")
    for p, t in zip(predictions, truths):
        if p and t:
            tp += 1
        elif p:
            fp += 1
        elif t:
            fn += 1
    return _prf_from_counts(tp, fp, fn)


def _prf_from_counts(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


@dataclass
class ClassMetrics:
    """Percent-scaled metric row. ``auroc`` is None where no score-based
    metric exists (hard-tag NER input)."""

    auroc: float | None
    f1: float
    precision: float
    recall: float
    support: int


@dataclass
class MetricReport:
    classes: list[str]
    per_class: dict[str, ClassMetrics]
    macro: ClassMetrics
    micro: ClassMetrics | None = None
    excluded: dict[str, list[str]] = field(default_factory=dict)

    def to_obj(self) -> dict:
        def row(m: ClassMetrics) -> dict:
            return {
                "auroc": m.auroc,
                "f1": m.f1,
                "precision": m.precision,
                "recall": m.recall,
                "support": m.support,
            }

        obj = {
            "classes": list(self.classes),
            "per_class": {c: row(self.per_class[c]) for c in self.classes},
            "macro": row(self.macro),
            "excluded": {k: list(v) for k, v in sorted(self.excluded.items())},
        }
        if self.micro is not None:
            obj["micro"] = row(self.micro)
        return obj


@dataclass
class ScoredPredictions:
    """Per-class parallel score/truth vectors over the same instances."""

    classes: list[str]
    scores: dict[str, list[float]]
    truths: dict[str, list[bool]]

    def __post_init__(self) -> None:
        for cls in self.classes:
            if len(self.scores[cls]) != len(self.truths[cls]):
                raise ValueError(f"scores and truths differ in length for {cls!r}")


def _macro(values: Mapping[str, float | None]) -> tuple[float, list[str]]:
    """Mean over classes where the metric is defined; returns the excluded."""
    defined = [v for v in values.values() if v is not None]
    excluded = sorted(c for c, v in values.items() if v is None)
    if not defined:
        return 0.0, excluded
    return sum(defined) / len(defined), excluded


def multilabel_report(
    predictions: ScoredPredictions, threshold: float = 0.5
) -> MetricReport:
    """Per-class AUROC plus thresholded precision/recall/F1.

    A score at or above the threshold counts as a predicted positive.
    """
    per_class: dict[str, ClassMetrics] = {}
    auroc_vals: dict[str, float | None] = {}
    p_vals: dict[str, float | None] = {}
    r_vals: dict[str, float | None] = {}
    f_vals: dict[str, float | None] = {}
    for cls in predictions.classes:
        scores = predictions.scores[cls]
        truths = predictions.truths[cls]
        try:
            area: float | None = auroc(scores, truths) * 100.0
        except UndefinedMetricError:
            area = None
        tp = fp = fn = 0
        for s, t in zip(scores, truths):
            p = s >= threshold
            if p and t:
                tp += 1
            elif p:
                fp += 1
            elif t:
                fn += 1
        precision = tp / (tp + fp) * 100.0 if tp + fp else None
        recall = tp / (tp + fn) * 100.0 if tp + fn else None
        if precision is not None and recall is not None and precision + recall > 0:
            f1: float | None = 2 * precision * recall / (precision + recall)
        elif precision is None and recall is None:
            f1 = None
        else:
            f1 = 0.0
        auroc_vals[cls] = area
        p_vals[cls], r_vals[cls], f_vals[cls] = precision, recall, f1
        per_class[cls] = ClassMetrics(
            auroc=0.0 if area is None else area,
            f1=0.0 if f1 is None else f1,
            precision=0.0 if precision is None else precision,
            recall=0.0 if recall is None else recall,
            support=sum(truths),
        )
    macro_auroc, ex_auroc = _macro(auroc_vals)
    macro_p, ex_p = _macro(p_vals)
    macro_r, ex_r = _macro(r_vals)
    macro_f, ex_f = _macro(f_vals)
    excluded = {}
    for key, ex in (("auroc", ex_auroc), ("precision", ex_p), ("recall", ex_r), ("f1", ex_f)):
        if ex:
            excluded[key] = ex
    macro = ClassMetrics(
        auroc=macro_auroc,
        f1=macro_f,
        precision=macro_p,
        recall=macro_r,
        support=sum(m.support for m in per_class.values()),
    )
    return MetricReport(list(predictions.classes), per_class, macro, None, excluded)


def tag_class(tag: str) -> str | None:
    """Strip the BIO prefix: B-X and I-X map to X, O maps to None. A bare
    tag without a prefix is taken as its own class."""
    if tag == "O":
        return None
    if tag.startswith("B-") or tag.startswith("I-"):
        return tag[2:]
    return tag


def ner_token_report(
    gold_tags: Sequence[Sequence[str]],
    pred_tags: Sequence[Sequence[str]],
    labels: Sequence[str] | None = None,
    token_scores: Sequence[Sequence[Mapping[str, float]]] | None = None,
) -> MetricReport:
    """Token-level metrics after collapsing BIO prefixes; O tokens are not a
    class. ``micro`` aggregates counts over all classes ("global" row).
    With ``token_scores`` a per-class AUROC over tokens is added."""
    if len(gold_tags) != len(pred_tags):
        raise ValueError("gold and predictions have different document counts")
    flat_gold: list[str | None] = []
    flat_pred: list[str | None] = []
    for doc_idx, (g, p) in enumerate(zip(gold_tags, pred_tags)):
        if len(g) != len(p):
            raise ValueError(f"tag length mismatch in document {doc_idx}")
        flat_gold.extend(tag_class(t) for t in g)
        flat_pred.extend(tag_class(t) for t in p)
    flat_scores: list[Mapping[str, float]] | None = None
    if token_scores is not None:
        flat_scores = [sc for doc in token_scores for sc in doc]
        if len(flat_scores) != len(flat_gold):
            raise ValueError("token_scores do not align with the tag sequences")
    observed = sorted(
        {c for c in flat_gold if c is not None} | {c for c in flat_pred if c is not None}
    )
    classes = list(labels) if labels is not None else observed
    per_class: dict[str, ClassMetrics] = {}
    vals: dict[str, dict[str, float | None]] = {
        "auroc": {}, "precision": {}, "recall": {}, "f1": {}
    }
    total_tp = total_fp = total_fn = 0
    for cls in classes:
        tp = fp = fn = 0
        for g, p in zip(flat_gold, flat_pred):
            if g == cls and p == cls:
                tp += 1
            elif p == cls:
                fp += 1
            elif g == cls:
                fn += 1
        total_tp, total_fp, total_fn = total_tp + tp, total_fp + fp, total_fn + fn
        precision = tp / (tp + fp) * 100.0 if tp + fp else None
        recall = tp / (tp + fn) * 100.0 if tp + fn else None
        if precision is not None and recall is not None and precision + recall > 0:
            f1: float | None = 2 * precision * recall / (precision + recall)
        elif precision is None and recall is None:
            f1 = None
        else:
            f1 = 0.0
        area: float | None = None
        if flat_scores is not None:
            truths = [g == cls for g in flat_gold]
            scores = [sc.get(cls, 0.0) for sc in flat_scores]
            try:
                area = auroc(scores, truths) * 100.0
            except UndefinedMetricError:
                area = None
        vals["auroc"][cls] = area
        vals["precision"][cls] = precision
        vals["recall"][cls] = recall
        vals["f1"][cls] = f1
        support = sum(1 for g in flat_gold if g == cls)
        per_class[cls] = ClassMetrics(
            auroc=(0.0 if area is None else area) if flat_scores is not None else None,
            f1=0.0 if f1 is None else f1,
            precision=0.0 if precision is None else precision,
            recall=0.0 if recall is None else recall,
            support=support,
        )
    excluded = {}
    macro_vals: dict[str, float] = {}
    for key in ("auroc", "precision", "recall", "f1"):
        value, ex = _macro(vals[key])
        macro_vals[key] = value
        if ex:
            excluded[key] = ex
    if flat_scores is None:
        excluded.pop("auroc", None)
    micro_p, micro_r, micro_f = _prf_from_counts(total_tp, total_fp, total_fn)
    micro = ClassMetrics(
        auroc=None,
        f1=micro_f * 100.0,
        precision=micro_p * 100.0,
        recall=micro_r * 100.0,
        support=sum(1 for g in flat_gold if g is not None),
    )
    macro = ClassMetrics(
        auroc=macro_vals["auroc"] if flat_scores is not None else None,
        f1=macro_vals["f1"],
        precision=macro_vals["precision"],
        recall=macro_vals["recall"],
        support=micro.support,
    )
    return MetricReport(classes, per_class, macro, micro, excluded)


def _fmt(value: float | None) -> str:
    return "" if value is None else f"{value:.2f}"


def render_report_tsv(report: MetricReport) -> str:
    """Tab-separated table: Class, AUROC, F1, Precision, Recall. Percent
    values with two decimals; a Macro row and, when present, a Global row."""
    lines = ["Class\tAUROC\tF1\tPrecision\tRecall"]
    for cls in report.classes:
        m = report.per_class[cls]
        lines.append(
            f"{cls}\t{_fmt(m.auroc)}\t{_fmt(m.f1)}\t{_fmt(m.precision)}\t{_fmt(m.recall)}"
        )
    m = report.macro
    lines.append(f"Macro\t{_fmt(m.auroc)}\t{_fmt(m.f1)}\t{_fmt(m.precision)}\t{_fmt(m.recall)}")
    if report.micro is not None:
        m = report.micro
        lines.append(
            f"Global\t{_fmt(m.auroc)}\t{_fmt(m.f1)}\t{_fmt(m.precision)}\t{_fmt(m.recall)}"
        )
    return "\n".join(lines) + "\n"


def write_report(report: MetricReport, json_path=None, tsv_path=None) -> None:
    if json_path is not None:
        with open(json_path, "w", encoding="utf-8") as fh:
            json.dump(report.to_obj(), fh, ensure_ascii=False, indent=2, sort_keys=True)
            fh.write("\n")
    if tsv_path is not None:
        with open(tsv_path, "w", encoding="utf-8") as fh:
            fh.write(render_report_tsv(report))


def load_classification_predictions(
    gold_examples: Iterable[tuple[str, set[str]]],
    prediction_rows: Iterable[Mapping],
    labels: Sequence[str] | None = None,
) -> ScoredPredictions:
    """Join gold label sets with prediction score rows by document id.

    ``prediction_rows`` are objects with an ``id`` and a ``scores`` map.
    Instances without a prediction row score 0.0 for every class.
    """
    gold = {doc_id: label_set for doc_id, label_set in gold_examples}
    scores_by_id: dict[str, Mapping[str, float]] = {}
    for row in prediction_rows:
        doc_id = row.get("id")
        if not isinstance(doc_id, str):
            raise ValueError("prediction row without string 'id'")
        sc = row.get("scores")
        if not isinstance(sc, Mapping):
            raise ValueError(f"prediction row {doc_id!r} without 'scores' object")
        scores_by_id[doc_id] = sc
    unknown = set(scores_by_id) - set(gold)
    if unknown:
        raise ValueError(f"predictions for unknown ids: {sorted(unknown)[:5]}")
    if labels is None:
        observed: set[str] = set()
        for label_set in gold.values():
            observed |= label_set
        for sc in scores_by_id.values():
            observed |= set(sc)
        labels = sorted(observed)
    ordered_ids = list(gold)
    return ScoredPredictions(
        classes=list(labels),
        scores={
            cls: [float(scores_by_id.get(i, {}).get(cls, 0.0)) for i in ordered_ids]
            for cls in labels
        },
        truths={cls: [cls in gold[i] for i in ordered_ids] for cls in labels},
    )
