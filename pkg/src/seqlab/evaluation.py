"""Entity-level scoring: exact-match precision, recall, F1 per class.

A predicted entity counts as a true positive only when its class, sentence,
start, and end all match a gold entity.  Per-class scores are reported next
to a micro average ("avg/total") computed from the pooled counts, matching
the usual classification-report layout.
"""

from __future__ import annotations

from dataclasses import dataclass

from .corpus import EntitySpan, TaggedCorpus, iob_to_spans


@dataclass(frozen=True)
class ClassScore:
    """Counts and derived scores for one entity class (or the micro pool)."""

    tp: int
    fp: int
    fn: int
    support: int

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2.0 * p * r / (p + r) if p + r else 0.0


@dataclass(frozen=True)
class EvalReport:
    """Per-class scores in label order plus the pooled micro row."""

    per_class: dict[str, ClassScore]
    micro: ClassScore


def _check_aligned(gold: TaggedCorpus, pred: TaggedCorpus) -> None:
    if len(gold.sentences) != len(pred.sentences):
        raise ValueError(
            f"gold has {len(gold.sentences)} sentences, pred has "
            f"{len(pred.sentences)}"
        )
    for i, (g, p) in enumerate(zip(gold.sentences, pred.sentences)):
        if g.tokens != p.tokens:
            raise ValueError(f"sentence {i}: gold and pred tokens differ")


def _spans(corpus: TaggedCorpus) -> set[EntitySpan]:
    out: set[EntitySpan] = set()
    for i, sent in enumerate(corpus.sentences):
        out.update(iob_to_spans(sent.tags, i))
    return out


def entity_prf(gold: TaggedCorpus, pred: TaggedCorpus) -> EvalReport:
    """Exact-span-match scores per class plus their micro average.

    Classes are reported in gold label order, followed by any classes that
    appear only in predictions.  Empty denominators score 0.
    """
    _check_aligned(gold, pred)
    gold_spans = _spans(gold)
    pred_spans = _spans(pred)
    classes = list(gold.label_set) + [
        c for c in pred.label_set if c not in gold.label_set
    ]
    per_class: dict[str, ClassScore] = {}
    total_tp = total_fp = total_fn = total_support = 0
    for cls in classes:
        g = {s for s in gold_spans if s.label == cls}
        p = {s for s in pred_spans if s.label == cls}
        tp = len(g & p)
        fp = len(p - g)
        fn = len(g - p)
        per_class[cls] = ClassScore(tp, fp, fn, len(g))
        total_tp += tp
        total_fp += fp
        total_fn += fn
        total_support += len(g)
    micro = ClassScore(total_tp, total_fp, total_fn, total_support)
    return EvalReport(per_class, micro)


def token_accuracy(gold: TaggedCorpus, pred: TaggedCorpus) -> float:
    """Fraction of tokens whose tags agree exactly."""
    _check_aligned(gold, pred)
    total = gold.token_count()
    if total == 0:
        raise ValueError("cannot compute accuracy on an empty corpus")
    agree = sum(
        int(gt == pt)
        for g, p in zip(gold.sentences, pred.sentences)
        for gt, pt in zip(g.tags, p.tags)
    )
    return agree / total


def _row_dict(score: ClassScore) -> dict:
    return {
        "precision": score.precision,
        "recall": score.recall,
        "f1": score.f1,
        "support": score.support,
        "display": {
            "precision": f"{score.precision:.4f}",
            "recall": f"{score.recall:.4f}",
            "f1": f"{score.f1:.4f}",
        },
    }


def report_json(report: EvalReport) -> dict:
    """JSON-ready dict: full-precision scores plus 4-decimal display strings."""
    out = {cls: _row_dict(score) for cls, score in report.per_class.items()}
    out["avg/total"] = _row_dict(report.micro)
    return out


def format_report(report: EvalReport) -> str:
    """Aligned classification-report text table."""
    rows = list(report.per_class.items()) + [("avg/total", report.micro)]
    name_width = max(len(name) for name, _ in rows)
    header = (
        f"{'':>{name_width}}  {'precision':>9}  {'recall':>9}  "
        f"{'f1-score':>9}  {'support':>9}"
    )
    lines = [header]
    for name, score in rows:
        lines.append(
            f"{name:>{name_width}}  {score.precision:>9.4f}  {score.recall:>9.4f}  "
            f"{score.f1:>9.4f}  {score.support:>9d}"
        )
    return "\n".join(lines)
