"""Tokenization, datasets, format adapters, answer-span transformation and
synthetic corpora."""

from .dataset import FormatError, Paragraph, QADataset, QAExample, Span, dumps_native, save_native
from .formats import FORMATS, load_dataset
from .synth import SynthProfile, bioasq_like, quasar_like, split_dataset, squad_like, synth_generate
from .text import TokenizedText, Vocab, build_vocab, find_answer_spans, normalize_answer, tokenize
from .transform import transform_counts, transform_openqa, transform_rc

__all__ = [
    "FORMATS", "FormatError", "Paragraph", "QADataset", "QAExample", "Span", "SynthProfile",
    "TokenizedText", "Vocab", "bioasq_like", "build_vocab", "dumps_native", "find_answer_spans",
    "load_dataset", "normalize_answer", "quasar_like", "save_native", "split_dataset", "squad_like",
    "synth_generate", "tokenize", "transform_counts", "transform_openqa", "transform_rc",
]
