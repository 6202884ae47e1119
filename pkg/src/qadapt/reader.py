"""Span reader: aligned question attention, stacked Bi-LSTM encoders and
bilinear start/end scorers, plus span decoding and span probabilities."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .corpus.dataset import Paragraph
from .corpus.text import TokenizedText, Vocab, normalize_answer
from .numerics import ops
from .numerics.lstm import BiLSTMLayer, LSTMParams, bilstm_encode, init_bilstm
from .numerics.ops import softmax_array
from .numerics.rng import Rng
from .numerics.tensor import DimensionError, Tensor, parameter

INIT_SCALE = 0.08
EMBED_STD = 1.0
MAX_WINDOW = 15


# ---------------------------------------------------------------- building blocks


def embedding_table(rng: Rng, name: str, vocab_size: int, dim: int) -> Tensor:
    table = embedding_rows(rng.split(name), vocab_size, dim)
    table[0] = 0.0
    return parameter(table, name)


def embedding_rows(rng: Rng, n: int, dim: int) -> np.ndarray:
    """Fresh embedding rows, N(0, EMBED_STD^2)."""
    return rng.normal((n, dim), EMBED_STD)


def pad_ids(seqs: list[list[int]]) -> tuple[np.ndarray, np.ndarray]:
    """Right-pad id lists with 0; returns (ids (B, T), lengths (B,))."""
    lengths = np.array([len(s) for s in seqs], dtype=np.int64)
    if (lengths == 0).any():
        raise ValueError("empty token sequence")
    out = np.zeros((len(seqs), int(lengths.max())), dtype=np.int64)
    for b, s in enumerate(seqs):
        out[b, :len(s)] = s
    return out, lengths


def length_mask(lengths: np.ndarray, T: int) -> np.ndarray:
    return np.arange(T)[None, :] < np.asarray(lengths)[:, None]


def aligned_attention(q_emb: Tensor, p_emb: Tensor, W: Tensor, b: Tensor, q_mask=None) -> Tensor:
    """Soft summary of question embeddings for every paragraph token.

    a[i, j] = softmax_j(relu(p_i W + b) . relu(q_j W + b)); row i of the
    output is sum_j a[i, j] q_j. Works on (m, D)/(n, D) pairs or on batches
    (B, M, D)/(B, N, D) with a (B, M) question mask.
    """
    single = q_emb.ndim == 2
    if single:
        q_emb = ops.reshape(q_emb, (1,) + q_emb.shape)
        p_emb = ops.reshape(p_emb, (1,) + p_emb.shape)
    if q_emb.shape[-1] != p_emb.shape[-1] or q_emb.shape[-1] != W.shape[0]:
        raise DimensionError(f"aligned_attention: widths {q_emb.shape}, {p_emb.shape}, W {W.shape}")
    if q_emb.shape[1] == 0 or p_emb.shape[1] == 0:
        raise ValueError("aligned_attention: empty sequence")
    aq = ops.relu(q_emb @ W + b)
    ap = ops.relu(p_emb @ W + b)
    scores = ap @ ops.transpose(aq)  # (B, N, M)
    mask = None if q_mask is None else np.asarray(q_mask, bool)[:, None, :]
    att = ops.softmax(scores, axis=-1, mask=mask)
    out = att @ q_emb
    if single:
        out = ops.reshape(out, out.shape[1:])
    return out


def attention_pool(states: Tensor, w: Tensor, mask=None) -> Tensor:
    """Convex combination of rows with weights softmax(states . w).

    (m, d) -> (d,), or (B, M, d) -> (B, d) with a (B, M) mask.
    """
    single = states.ndim == 2
    if single:
        states = ops.reshape(states, (1,) + states.shape)
    if states.shape[-1] != w.shape[0]:
        raise DimensionError(f"attention_pool: states {states.shape} vs weights {w.shape}")
    B, M, d = states.shape
    logits = ops.reshape(states @ ops.reshape(w, (d, 1)), (B, M))
    alpha = ops.softmax(logits, axis=-1, mask=mask)
    out = ops.reshape(ops.reshape(alpha, (B, 1, M)) @ states, (B, d))
    if single:
        out = ops.reshape(out, (d,))
    return out


def question_pool(q_states: Tensor, w: Tensor, mask=None) -> Tensor:
    return attention_pool(q_states, w, mask)


def bilinear_scores(states: Tensor, W: Tensor, q: Tensor) -> Tensor:
    """score[b, i] = states[b, i] . W . q[b]; (B, N, d) x (d, d) x (B, d) -> (B, N)."""
    B, N, d = states.shape
    wq = q @ ops.transpose(W)  # (B, d)
    return ops.reshape(states @ ops.reshape(wq, (B, d, 1)), (B, N))


# ---------------------------------------------------------------- parameters


@dataclass
class ReaderParams:
    emb: Tensor
    align_W: Tensor
    align_b: Tensor
    q_rnn: list[BiLSTMLayer]
    p_rnn: list[BiLSTMLayer]
    pool_w: Tensor
    W_s: Tensor
    W_e: Tensor

    @classmethod
    def init(cls, rng: Rng, vocab_size: int, dim: int = 64, hidden: int = 32, layers: int = 3,
             prefix: str = "reader") -> "ReaderParams":
        u = lambda name, shape: parameter(  # noqa: E731
            rng.split(f"{prefix}.{name}").uniform(-INIT_SCALE, INIT_SCALE, shape), f"{prefix}.{name}")
        return cls(
            emb=embedding_table(rng, f"{prefix}.emb", vocab_size, dim),
            align_W=u("align.W", (dim, dim)),
            align_b=parameter(np.zeros(dim), f"{prefix}.align.b"),
            q_rnn=init_bilstm(rng, f"{prefix}.q_rnn", dim, hidden, layers),
            p_rnn=init_bilstm(rng, f"{prefix}.p_rnn", 2 * dim, hidden, layers),
            pool_w=u("pool.w", (2 * hidden,)),
            W_s=u("W_s", (2 * hidden, 2 * hidden)),
            W_e=u("W_e", (2 * hidden, 2 * hidden)),
        )

    @property
    def dim(self) -> int:
        return self.emb.shape[1]

    @property
    def hidden(self) -> int:
        return self.pool_w.shape[0] // 2

    @property
    def layers(self) -> int:
        return len(self.p_rnn)

    def named(self, prefix: str = "reader") -> dict[str, Tensor]:
        out = {f"{prefix}.emb": self.emb, f"{prefix}.align.W": self.align_W, f"{prefix}.align.b": self.align_b}
        for k, layer in enumerate(self.q_rnn):
            out.update(layer.tensors(f"{prefix}.q_rnn.{k}"))
        for k, layer in enumerate(self.p_rnn):
            out.update(layer.tensors(f"{prefix}.p_rnn.{k}"))
        out.update({f"{prefix}.pool.w": self.pool_w, f"{prefix}.W_s": self.W_s, f"{prefix}.W_e": self.W_e})
        return out

    @classmethod
    def from_named(cls, tensors: dict[str, Tensor], prefix: str = "reader") -> "ReaderParams":
        return cls(
            emb=tensors[f"{prefix}.emb"],
            align_W=tensors[f"{prefix}.align.W"],
            align_b=tensors[f"{prefix}.align.b"],
            q_rnn=_layers_from(tensors, f"{prefix}.q_rnn"),
            p_rnn=_layers_from(tensors, f"{prefix}.p_rnn"),
            pool_w=tensors[f"{prefix}.pool.w"],
            W_s=tensors[f"{prefix}.W_s"],
            W_e=tensors[f"{prefix}.W_e"],
        )


def _layers_from(tensors: dict[str, Tensor], prefix: str) -> list[BiLSTMLayer]:
    layers = []
    k = 0
    while f"{prefix}.{k}.fwd.W_x" in tensors:
        lp = lambda d: LSTMParams(*(tensors[f"{prefix}.{k}.{d}.{n}"] for n in ("W_x", "W_h", "b")))  # noqa: E731
        layers.append(BiLSTMLayer(lp("fwd"), lp("bwd")))
        k += 1
    if not layers:
        raise KeyError(f"no LSTM layers under {prefix}")
    return layers


# ---------------------------------------------------------------- forward


@dataclass
class ReaderBatch:
    q_ids: np.ndarray
    q_len: np.ndarray
    p_ids: np.ndarray
    p_len: np.ndarray

    @classmethod
    def build(cls, questions: list[list[int]], paragraphs: list[list[int]]) -> "ReaderBatch":
        q_ids, q_len = pad_ids(questions)
        p_ids, p_len = pad_ids(paragraphs)
        return cls(q_ids, q_len, p_ids, p_len)

    @property
    def p_mask(self) -> np.ndarray:
        return length_mask(self.p_len, self.p_ids.shape[1])

    @property
    def q_mask(self) -> np.ndarray:
        return length_mask(self.q_len, self.q_ids.shape[1])


def reader_logits(params: ReaderParams, batch: ReaderBatch,
                  drop: Callable[[Tensor], Tensor] | None = None) -> tuple[Tensor, Tensor]:
    """Start and end logits (B, N). Padded positions hold unspecified values.

    ``drop`` is a training-time dropout applied to embeddings and to every
    encoder layer's input.
    """
    if batch.q_ids.max(initial=0) >= params.emb.shape[0] or batch.p_ids.max(initial=0) >= params.emb.shape[0]:
        raise ValueError("token id outside the embedding table")
    q_emb = ops.take(params.emb, batch.q_ids)
    p_emb = ops.take(params.emb, batch.p_ids)
    if drop is not None:
        q_emb, p_emb = drop(q_emb), drop(p_emb)
    q_mask = batch.q_mask
    f_align = aligned_attention(q_emb, p_emb, params.align_W, params.align_b, q_mask)
    p_states = bilstm_encode(ops.concat([p_emb, f_align], axis=-1), params.p_rnn, batch.p_len, drop)
    q_states = bilstm_encode(q_emb, params.q_rnn, batch.q_len, drop)
    q_vec = question_pool(q_states, params.pool_w, q_mask)
    return bilinear_scores(p_states, params.W_s, q_vec), bilinear_scores(p_states, params.W_e, q_vec)


@dataclass
class SpanScores:
    paragraph_id: str
    start: np.ndarray
    end: np.ndarray
    text: TokenizedText | None = None

    def __post_init__(self):
        if len(self.start) != len(self.end):
            raise ValueError("start/end logits differ in length")
        if self.text is not None and len(self.text) != len(self.start):
            raise ValueError("logits do not match the paragraph length")

    def __len__(self) -> int:
        return len(self.start)

    def surface(self, i: int, j: int) -> str:
        if self.text is None:
            return " ".join(str(t) for t in range(i, j + 1))
        return self.text.surface(i, j)


def reader_forward(paragraph: Paragraph, question: TokenizedText, params: ReaderParams,
                   vocab: Vocab) -> SpanScores:
    return Reader(params, vocab).span_scores(question, [paragraph])[0]


class Reader:
    """Inference wrapper binding parameters to a vocabulary."""

    def __init__(self, params: ReaderParams, vocab: Vocab):
        if len(vocab) != params.emb.shape[0]:
            raise ValueError(f"vocab size {len(vocab)} != embedding rows {params.emb.shape[0]}")
        self.params, self.vocab = params, vocab

    def span_scores(self, question: TokenizedText, paragraphs: list[Paragraph]) -> list[SpanScores]:
        if not len(question):
            raise ValueError("empty question")
        if any(not len(p.text) for p in paragraphs):
            raise ValueError("empty paragraph")
        if not paragraphs:
            return []
        q = self.vocab.encode(question.tokens)
        batch = ReaderBatch.build([q] * len(paragraphs), [self.vocab.encode(p.text.tokens) for p in paragraphs])
        start, end = reader_logits(self.params, batch)
        return [SpanScores(p.id, start.data[b, :n].copy(), end.data[b, :n].copy(), p.text)
                for b, (p, n) in enumerate(zip(paragraphs, batch.p_len))]


# ---------------------------------------------------------------- decoding


@dataclass
class SpanCandidate:
    paragraph_id: str
    start: int
    end: int
    text: str
    score: float
    probability: float | None = None

    @property
    def key(self) -> str:
        return normalize_answer(self.text)


def valid_pairs(n: int, max_window: int = MAX_WINDOW) -> tuple[np.ndarray, np.ndarray]:
    """All (i, j) with i <= j <= i + max_window, in (i, j) lexicographic order."""
    i, j = np.triu_indices(n)
    keep = j - i <= max_window
    return i[keep], j[keep]


def decode_span(scores: SpanScores, max_window: int = MAX_WINDOW) -> SpanCandidate:
    """Best (i, j) by start_i + end_j; ties go to the smallest i, then j."""
    n = len(scores)
    if n == 0:
        raise ValueError("decode_span: empty paragraph")
    i, j = valid_pairs(n, max_window)
    total = scores.start[i] + scores.end[j]
    k = int(np.argmax(total))
    a, b = int(i[k]), int(j[k])
    return SpanCandidate(scores.paragraph_id, a, b, scores.surface(a, b), float(total[k]))


def topk_spans(scores: SpanScores, k: int, max_window: int = MAX_WINDOW) -> list[SpanCandidate]:
    """Best ``k`` spans with distinct normalized strings."""
    if k < 1:
        raise ValueError("k must be >= 1")
    i, j = valid_pairs(len(scores), max_window)
    total = scores.start[i] + scores.end[j]
    order = np.lexsort((j, i, -total))
    out, seen = [], set()
    for idx in order:
        a, b = int(i[idx]), int(j[idx])
        text = scores.surface(a, b)
        key = normalize_answer(text)
        if key in seen:
            continue
        seen.add(key)
        out.append(SpanCandidate(scores.paragraph_id, a, b, text, float(total[idx])))
        if len(out) == k:
            break
    return out


def span_probabilities(scores: SpanScores, max_window: int = MAX_WINDOW) -> dict[str, SpanCandidate]:
    """Probability of each distinct answer string in one paragraph.

    Start and end distributions are softmaxes over the paragraph; a string's
    probability sums P_start(i) P_end(j) over all its valid occurrences. The
    representative candidate is the best single occurrence.
    """
    n = len(scores)
    if n == 0:
        raise ValueError("span_probabilities: empty paragraph")
    ps, pe = softmax_array(scores.start), softmax_array(scores.end)
    i, j = valid_pairs(n, max_window)
    prob = ps[i] * pe[j]
    total = scores.start[i] + scores.end[j]
    texts = [scores.surface(int(a), int(b)) for a, b in zip(i, j)]
    keys = [normalize_answer(t) for t in texts]
    out: dict[str, SpanCandidate] = {}
    sums: dict[str, float] = {}
    for idx in np.lexsort((j, i, -total)):
        key = keys[idx]
        if key not in out:
            out[key] = SpanCandidate(scores.paragraph_id, int(i[idx]), int(j[idx]), texts[idx], float(total[idx]))
            sums[key] = 0.0
    # accumulate in (i, j) order so the sum is independent of score ties
    for idx, key in enumerate(keys):
        sums[key] += float(prob[idx])
    for key, cand in out.items():
        cand.probability = sums[key]
    return out


# ---------------------------------------------------------------- loss


def gold_masks(spans_per_row: list[list[tuple[int, int]]], N: int) -> tuple[np.ndarray, np.ndarray]:
    start = np.zeros((len(spans_per_row), N), dtype=bool)
    end = np.zeros_like(start)
    for b, spans in enumerate(spans_per_row):
        if not spans:
            raise ValueError(f"row {b} has no gold span")
        for s, e in spans:
            start[b, s] = True
            end[b, e] = True
    return start, end


def reader_loss_rows(start: Tensor, end: Tensor, valid_mask, gold_start, gold_end) -> Tensor:
    """Per-row marginal negative log-likelihood, shape (B,)."""
    return (ops.logsumexp(start, -1, valid_mask) - ops.logsumexp(start, -1, gold_start)
            + ops.logsumexp(end, -1, valid_mask) - ops.logsumexp(end, -1, gold_end))


def reader_loss(start: Tensor, end: Tensor, gold_spans: list[tuple[int, int]]) -> Tensor:
    """-log sum_{gold starts} P_start - log sum_{gold ends} P_end for one
    paragraph's (n,) logits."""
    if not gold_spans:
        raise ValueError("reader_loss: paragraph has no gold span")
    n = start.shape[-1]
    gs, ge = gold_masks([gold_spans], n)
    rows = reader_loss_rows(ops.reshape(start, (1, n)), ops.reshape(end, (1, n)), None, gs, ge)
    return ops.reshape(rows, ())
