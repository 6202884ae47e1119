"""Paragraph selector: self-attended question vector, max-pooled bilinear
paragraph scores and a softmax over the question's paragraph set."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .corpus.dataset import Paragraph
from .corpus.text import TokenizedText, Vocab
from .numerics import ops
from .numerics.lstm import BiLSTMLayer, bilstm_encode, init_bilstm
from .numerics.rng import Rng
from .numerics.tensor import DimensionError, Tensor, parameter
from .reader import INIT_SCALE, _layers_from, attention_pool, embedding_table, length_mask, pad_ids


def self_attend(q_states: Tensor, w_b: Tensor, mask=None) -> Tensor:
    """Question vector sum_j alpha_j q_j with alpha = softmax_j(w_b . q_j)."""
    return attention_pool(q_states, w_b, mask)


@dataclass
class SelectorParams:
    emb: Tensor
    q_rnn: list[BiLSTMLayer]
    p_rnn: list[BiLSTMLayer]
    w_b: Tensor
    W: Tensor

    @classmethod
    def init(cls, rng: Rng, vocab_size: int, dim: int = 64, hidden: int = 32,
             prefix: str = "selector") -> "SelectorParams":
        u = lambda name, shape: parameter(  # noqa: E731
            rng.split(f"{prefix}.{name}").uniform(-INIT_SCALE, INIT_SCALE, shape), f"{prefix}.{name}")
        return cls(
            emb=embedding_table(rng, f"{prefix}.emb", vocab_size, dim),
            q_rnn=init_bilstm(rng, f"{prefix}.q_rnn", dim, hidden, 1),
            p_rnn=init_bilstm(rng, f"{prefix}.p_rnn", dim, hidden, 1),
            w_b=u("w_b", (2 * hidden,)),
            W=u("W", (2 * hidden, 2 * hidden)),
        )

    def named(self, prefix: str = "selector") -> dict[str, Tensor]:
        out = {f"{prefix}.emb": self.emb}
        for k, layer in enumerate(self.q_rnn):
            out.update(layer.tensors(f"{prefix}.q_rnn.{k}"))
        for k, layer in enumerate(self.p_rnn):
            out.update(layer.tensors(f"{prefix}.p_rnn.{k}"))
        out.update({f"{prefix}.w_b": self.w_b, f"{prefix}.W": self.W})
        return out

    @classmethod
    def from_named(cls, tensors: dict[str, Tensor], prefix: str = "selector") -> "SelectorParams":
        return cls(tensors[f"{prefix}.emb"], _layers_from(tensors, f"{prefix}.q_rnn"),
                   _layers_from(tensors, f"{prefix}.p_rnn"), tensors[f"{prefix}.w_b"], tensors[f"{prefix}.W"])


def paragraph_scores(params: SelectorParams, q_ids: list[int], p_ids: list[list[int]],
                     drop: Callable[[Tensor], Tensor] | None = None) -> Tensor:
    """Unnormalized paragraph scores max_j (p_i^j . W . q), shape (k,)."""
    if not p_ids:
        raise ValueError("selector: empty paragraph set")
    if not q_ids:
        raise ValueError("selector: empty question")
    if params.W.shape[0] != params.w_b.shape[0]:
        raise DimensionError(f"selector: W {params.W.shape} vs w_b {params.w_b.shape}")
    ids, lengths = pad_ids(p_ids)
    q_emb = ops.take(params.emb, np.asarray(q_ids))
    p_emb = ops.take(params.emb, ids)
    if drop is not None:
        q_emb, p_emb = drop(q_emb), drop(p_emb)
    q_states = bilstm_encode(q_emb, params.q_rnn, drop=drop)
    q_vec = self_attend(q_states, params.w_b)  # (2H,)
    p_states = bilstm_encode(p_emb, params.p_rnn, lengths, drop)  # (k, N, 2H)
    k, N, d = p_states.shape
    wq = ops.reshape(params.W @ ops.reshape(q_vec, (d, 1)), (d, 1))
    token_scores = ops.reshape(p_states @ wq, (k, N))
    return ops.max(token_scores, axis=-1, mask=length_mask(lengths, N))


def selector_probs(params: SelectorParams, q_ids: list[int], p_ids: list[list[int]]) -> Tensor:
    return ops.softmax(paragraph_scores(params, q_ids, p_ids), axis=-1)


@dataclass
class ParagraphDistribution:
    question_id: str
    paragraph_ids: list[str]
    probabilities: np.ndarray

    def __post_init__(self):
        if len(self.paragraph_ids) != len(self.probabilities):
            raise ValueError("paragraph ids and probabilities differ in length")

    def as_dict(self) -> dict[str, float]:
        return {pid: float(p) for pid, p in zip(self.paragraph_ids, self.probabilities)}


def _target(labels, shape) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.float64)
    if labels.shape != tuple(shape):
        raise DimensionError(f"selector_loss: labels {labels.shape} vs paragraphs {tuple(shape)}")
    if labels.sum() <= 0:
        raise ValueError("selector_loss: no positive paragraph")
    return labels / labels.sum()


def selector_loss(probs: Tensor, labels) -> Tensor:
    """Cross-entropy to the uniform distribution over positive paragraphs,
    minus that target's entropy (i.e. KL(target || probs)).

    The entropy offset is constant, so gradients equal plain cross-entropy;
    with it the loss is 0 at the target and ln 2 for two positives out of
    four under a uniform prediction.
    """
    target = _target(labels, probs.shape)
    pos = target > 0
    t = target[pos]
    return ops.sum(ops.log(probs[pos]) * -t) + float(np.sum(t * np.log(t)))


def selector_loss_from_scores(scores: Tensor, labels) -> Tensor:
    """:func:`selector_loss` computed stably from unnormalized scores."""
    target = _target(labels, scores.shape)
    t = target[target > 0]
    return ops.logsumexp(scores) - ops.sum(scores * target) + float(np.sum(t * np.log(t)))


class Selector:
    def __init__(self, params: SelectorParams, vocab: Vocab):
        if len(vocab) != params.emb.shape[0]:
            raise ValueError(f"vocab size {len(vocab)} != embedding rows {params.emb.shape[0]}")
        self.params, self.vocab = params, vocab

    def distribution(self, question: TokenizedText, paragraphs: list[Paragraph],
                     question_id: str = "") -> ParagraphDistribution:
        if not paragraphs:
            raise ValueError("selector: empty paragraph set")
        probs = selector_probs(self.params, self.vocab.encode(question.tokens),
                               [self.vocab.encode(p.text.tokens) for p in paragraphs])
        return ParagraphDistribution(question_id, [p.id for p in paragraphs], probs.data.copy())


def selector_forward(question: TokenizedText, paragraphs: list[Paragraph], params: SelectorParams,
                     vocab: Vocab, question_id: str = "") -> ParagraphDistribution:
    return Selector(params, vocab).distribution(question, paragraphs, question_id)
