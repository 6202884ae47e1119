"""Tokenization, answer normalization, span matching and vocabularies."""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field

_TOKEN_RE = re.compile(r"\w+|[^\w\s]")
_EDGE_RE = re.compile(r"^\W+|\W+$")

PAD, UNK = "<pad>", "<unk>"


@dataclass(frozen=True)
class TokenizedText:
    raw: str
    tokens: tuple[str, ...]
    offsets: tuple[tuple[int, int], ...]

    def __len__(self) -> int:
        return len(self.tokens)

    def surface(self, start: int, end: int) -> str:
        """Raw text covered by tokens ``start..end`` inclusive."""
        return self.raw[self.offsets[start][0]:self.offsets[end][1]]


def tokenize(text: str) -> TokenizedText:
    """Lowercased word runs and single punctuation characters, with
    character offsets into ``text``.

    >>> tokenize("T-type calcium channels").tokens
    ('t', '-', 'type', 'calcium', 'channels')
    """
    tokens, offsets = [], []
    for m in _TOKEN_RE.finditer(text):
        tokens.append(m.group().lower())
        offsets.append(m.span())
    return TokenizedText(text, tuple(tokens), tuple(offsets))


def normalize_answer(s: str) -> str:
    """Lowercase, collapse whitespace runs, strip edge whitespace and
    punctuation."""
    s = " ".join(s.lower().split())
    return _EDGE_RE.sub("", s)


def find_answer_spans(paragraph: TokenizedText, answer: str) -> list[tuple[int, int]]:
    """Token-aligned occurrences of ``answer`` in ``paragraph``.

    A span (i, j) matches when its tokens equal the answer's tokens and the
    normalized raw surface equals the normalized answer, so whitespace
    differences are tolerated but word-internal matches are not.
    """
    if not answer or not answer.strip():
        raise ValueError("find_answer_spans: empty answer")
    target = normalize_answer(answer)
    if not target:
        return []
    atoks = tokenize(target).tokens
    n, k = len(paragraph.tokens), len(atoks)
    spans = []
    toks = paragraph.tokens
    for i in range(n - k + 1):
        if toks[i] != atoks[0] or toks[i:i + k] != atoks:
            continue
        if normalize_answer(paragraph.surface(i, i + k - 1)) == target:
            spans.append((i, i + k - 1))
    return spans


@dataclass
class Vocab:
    """Token ids: 0 is padding, 1 is unknown, the rest dense from 2."""

    itos: list[str] = field(default_factory=lambda: [PAD, UNK])

    def __post_init__(self):
        if self.itos[:2] != [PAD, UNK]:
            raise ValueError("vocab must start with <pad>, <unk>")
        self.stoi = {t: i for i, t in enumerate(self.itos)}
        if len(self.stoi) != len(self.itos):
            raise ValueError("vocab has duplicate tokens")

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, token: str) -> bool:
        return token in self.stoi

    def id(self, token: str) -> int:
        return self.stoi.get(token, 1)

    def encode(self, tokens) -> list[int]:
        return [self.stoi.get(t, 1) for t in tokens]

    def extend(self, tokens) -> list[str]:
        """Append unseen tokens in the given order; returns those added."""
        added = []
        for t in tokens:
            if t not in self.stoi:
                self.stoi[t] = len(self.itos)
                self.itos.append(t)
                added.append(t)
        return added


def count_tokens(datasets) -> Counter:
    counts: Counter = Counter()
    for ds in datasets:
        for ex in ds.examples:
            counts.update(ex.question.tokens)
            for p in ex.paragraphs:
                counts.update(p.text.tokens)
    return counts


def ranked_tokens(counts: Counter, min_count: int) -> list[str]:
    """Tokens with count >= min_count, by frequency desc then lexicographic."""
    kept = [t for t, c in counts.items() if c >= min_count and t not in (PAD, UNK)]
    return sorted(kept, key=lambda t: (-counts[t], t))


def build_vocab(datasets, min_count: int = 1) -> Vocab:
    if min_count < 1:
        raise ValueError(f"min_count must be >= 1, got {min_count}")
    return Vocab([PAD, UNK] + ranked_tokens(count_tokens(datasets), min_count))
