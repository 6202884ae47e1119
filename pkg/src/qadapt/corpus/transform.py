"""Turn gold answer strings into span annotations.

``transform_rc`` keeps only answer-bearing paragraphs (reading-comprehension
style); ``transform_openqa`` keeps every paragraph and labels it 1 when it
contains a gold answer, else 0.
"""

from __future__ import annotations

from dataclasses import replace

from .dataset import Paragraph, QADataset, QAExample, Span
from .text import find_answer_spans


def annotate_paragraph(p: Paragraph, answers: list[str]) -> Paragraph:
    spans = sorted({s for a in answers if a.strip() for s in find_answer_spans(p.text, a)})
    return replace(p, relevant=1 if spans else 0, spans=[Span(i, j) for i, j in spans])


def annotate(ex: QAExample) -> QAExample:
    return replace(ex, paragraphs=[annotate_paragraph(p, ex.answers) for p in ex.paragraphs])


def transform_openqa(ds: QADataset) -> QADataset:
    examples = [annotate(ex) for ex in ds.examples]
    return QADataset(ds.split, examples, _stamp(ds.provenance, "openqa"))


def transform_rc(ds: QADataset) -> QADataset:
    examples = []
    for ex in ds.examples:
        kept = [p for p in annotate(ex).paragraphs if p.spans]
        if kept:
            examples.append(replace(ex, paragraphs=kept))
    return QADataset(ds.split, examples, _stamp(ds.provenance, "rc"))


def _stamp(provenance: str, mode: str) -> str:
    return f"{provenance}|transform:{mode}" if provenance else f"transform:{mode}"


def transform_counts(before: QADataset, after: QADataset) -> dict[str, int]:
    paragraphs = [p for ex in after.examples for p in ex.paragraphs]
    return {
        "questions_in": len(before),
        "questions_kept": len(after),
        "questions_dropped": len(before) - len(after),
        "paragraphs_in": sum(len(ex.paragraphs) for ex in before.examples),
        "paragraphs_kept": len(paragraphs),
        "paragraphs_positive": sum(1 for p in paragraphs if p.relevant == 1),
        "paragraphs_negative": sum(1 for p in paragraphs if p.relevant == 0),
    }
