"""Training: reader pretraining, fine-tuning from saved weights, joint
selector+reader training, and the JSON checkpoint format.

Fine-tuning keeps every pretrained tensor and only appends embedding rows
for tokens the checkpoint has never seen.
"""

from __future__ import annotations

import base64
import json
import logging
from dataclasses import asdict, dataclass, field, fields
from typing import Callable

import numpy as np

from .corpus.dataset import FormatError, QADataset, atomic_write
from .corpus.text import Vocab, build_vocab, count_tokens, ranked_tokens
from .numerics import ops
from .numerics.optim import OptimizerState, TrainingError, adam_step
from .numerics.rng import Rng
from .numerics.tensor import Tape, Tensor, backward, parameter
from .reader import (Reader, ReaderBatch, ReaderParams, embedding_rows, gold_masks, reader_logits,
                     reader_loss_rows)
from .selector import Selector, SelectorParams, paragraph_scores, selector_loss_from_scores

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
KINDS = ("reader", "pspr")


class ArgumentError(ValueError):
    """Inputs are inconsistent with the requested operation."""


@dataclass
class TrainConfig:
    kind: str = "reader"
    epochs: int = 20
    batch_size: int = 32
    lr: float = 1e-3
    seed: int = 0
    hidden: int = 32
    dim: int = 64
    layers: int = 3
    eval_every: int = 1
    min_count: int = 1
    clip_norm: float = 10.0
    pspr_mode: str = "joint"
    # keep word embeddings at their initial/loaded values
    fix_embeddings: bool = False
    dropout: float = 0.0

    def validate(self) -> "TrainConfig":
        if self.kind not in KINDS:
            raise ArgumentError(f"config.kind must be one of {KINDS}, got {self.kind!r}")
        if self.pspr_mode not in ("joint", "sequential"):
            raise ArgumentError(f"config.pspr_mode must be joint or sequential, got {self.pspr_mode!r}")
        # epochs may be 0: a no-step fine-tune is a valid request
        if int(self.epochs) != self.epochs or self.epochs < 0:
            raise ArgumentError(f"config.epochs must be a non-negative integer, got {self.epochs}")
        for name in ("batch_size", "hidden", "dim", "layers", "eval_every", "min_count"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ArgumentError(f"config.{name} must be a positive integer, got {v}")
        for name in ("lr", "clip_norm"):
            if not getattr(self, name) > 0:
                raise ArgumentError(f"config.{name} must be positive, got {getattr(self, name)}")
        if not 0.0 <= self.dropout < 1.0:
            raise ArgumentError(f"config.dropout must lie in [0, 1), got {self.dropout}")
        if not isinstance(self.fix_embeddings, bool):
            raise ArgumentError(f"config.fix_embeddings must be a boolean, got {self.fix_embeddings!r}")
        if int(self.seed) != self.seed:
            raise ArgumentError(f"config.seed must be an integer, got {self.seed}")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(doc) - known)
        if unknown:
            raise ArgumentError(f"unknown config fields: {', '.join(unknown)}")
        return cls(**doc).validate()


@dataclass
class TrainLog:
    epoch_losses: list[float] = field(default_factory=list)
    step_losses: list[float] = field(default_factory=list)
    skipped_questions: int = 0
    evaluations: list[tuple[int, dict]] = field(default_factory=list)


@dataclass
class Checkpoint:
    kind: str
    config: TrainConfig
    vocab: list[str]
    tensors: dict[str, np.ndarray]
    provenance: dict
    version: int = CHECKPOINT_VERSION
    log: TrainLog | None = field(default=None, compare=False, repr=False)

    def vocabulary(self) -> Vocab:
        return Vocab(list(self.vocab))

    def parameters(self) -> dict[str, Tensor]:
        return {name: parameter(arr, name) for name, arr in self.tensors.items()}

    def reader(self) -> Reader:
        return Reader(ReaderParams.from_named(self.parameters()), self.vocabulary())

    def selector(self) -> Selector:
        if self.kind != "pspr":
            raise ArgumentError(f"checkpoint kind {self.kind} has no selector")
        return Selector(SelectorParams.from_named(self.parameters()), self.vocabulary())


# ---------------------------------------------------------------- serialization


def _encode_tensor(name: str, arr: np.ndarray) -> dict:
    data = np.ascontiguousarray(arr, dtype="<f8").tobytes()
    return {"name": name, "shape": list(arr.shape), "data_b64": base64.b64encode(data).decode("ascii")}


def dumps_checkpoint(c: Checkpoint) -> str:
    doc = {
        "version": c.version,
        "kind": c.kind,
        "config": c.config.to_dict(),
        "provenance": c.provenance,
        "vocab": list(c.vocab),
        "tensors": [_encode_tensor(n, a) for n, a in c.tensors.items()],
    }
    return json.dumps(doc, ensure_ascii=False, indent=1) + "\n"


def save_checkpoint(c: Checkpoint, path) -> None:
    atomic_write(path, dumps_checkpoint(c))


def loads_checkpoint(text: str, path="<memory>") -> Checkpoint:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise FormatError(path, len(text[:e.pos].encode("utf-8")), f"invalid JSON: {e.msg}") from None

    def need(key, kind, where=doc, ctx=""):
        if not isinstance(where, dict) or key not in where:
            raise FormatError(path, None, f"missing field {ctx}{key}")
        v = where[key]
        if not isinstance(v, kind) or isinstance(v, bool) and kind is not bool:
            raise FormatError(path, None, f"field {ctx}{key} has type {type(v).__name__}")
        return v

    version = need("version", int)
    if version > CHECKPOINT_VERSION:
        raise FormatError(path, None, f"checkpoint version {version} is newer than supported {CHECKPOINT_VERSION}")
    if version < 1:
        raise FormatError(path, None, f"invalid checkpoint version {version}")
    kind = need("kind", str)
    if kind not in KINDS:
        raise FormatError(path, None, f"field kind: unknown model kind {kind!r}")
    try:
        config = TrainConfig.from_dict(need("config", dict))
    except (ArgumentError, TypeError) as e:
        raise FormatError(path, None, f"field config: {e}") from None
    provenance = need("provenance", dict)
    vocab = need("vocab", list)
    if not all(isinstance(t, str) for t in vocab):
        raise FormatError(path, None, "field vocab: tokens must be strings")
    tensors: dict[str, np.ndarray] = {}
    for k, entry in enumerate(need("tensors", list)):
        ctx = f"tensors[{k}]."
        name = need("name", str, entry, ctx)
        shape = need("shape", list, entry, ctx)
        if not all(isinstance(s, int) and s >= 0 for s in shape):
            raise FormatError(path, None, f"field {ctx}shape: {shape}")
        try:
            raw = base64.b64decode(need("data_b64", str, entry, ctx), validate=True)
        except ValueError:
            raise FormatError(path, None, f"field {ctx}data_b64: invalid base64") from None
        if len(raw) != 8 * int(np.prod(shape)):
            raise FormatError(path, None, f"field {ctx}data_b64: {len(raw)} bytes for shape {shape}")
        if name in tensors:
            raise FormatError(path, None, f"field {ctx}name: duplicate tensor {name!r}")
        tensors[name] = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape)
    c = Checkpoint(kind, config, vocab, tensors, provenance, version)
    try:
        Vocab(list(vocab))
        _check_tensors(c)
    except (ValueError, KeyError) as e:
        raise FormatError(path, None, f"inconsistent checkpoint: {e}") from None
    return c


def load_checkpoint(path) -> Checkpoint:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except UnicodeDecodeError as e:
        raise FormatError(path, e.start, "not UTF-8") from None
    except OSError as e:
        raise FormatError(path, None, f"cannot read: {e.strerror or e}") from None
    return loads_checkpoint(text, path)


def _check_tensors(c: Checkpoint) -> None:
    params = c.parameters()
    rp = ReaderParams.from_named(params)
    if rp.emb.shape[0] != len(c.vocab):
        raise ValueError(f"reader.emb has {rp.emb.shape[0]} rows for {len(c.vocab)} tokens")
    if c.kind == "pspr":
        sp = SelectorParams.from_named(params)
        if sp.emb.shape[0] != len(c.vocab):
            raise ValueError(f"selector.emb has {sp.emb.shape[0]} rows for {len(c.vocab)} tokens")


# ---------------------------------------------------------------- training data


@dataclass
class _ReaderItem:
    q: list[int]
    p: list[int]
    spans: list[tuple[int, int]]


def _reader_items(ds: QADataset, vocab: Vocab) -> list[_ReaderItem]:
    items = []
    for ex in ds.examples:
        q = vocab.encode(ex.question.tokens)
        for p in ex.paragraphs:
            if p.spans:
                items.append(_ReaderItem(q, vocab.encode(p.text.tokens), [(s.start, s.end) for s in p.spans]))
    return items


def _check_dataset(ds: QADataset, kind: str) -> None:
    if not ds.examples:
        raise ArgumentError("training dataset is empty")
    if not any(p.spans for ex in ds.examples for p in ex.paragraphs):
        raise ArgumentError(f"{kind} training needs answer spans; dataset {ds.dataset_id} has none")
    if kind == "pspr":
        unlabeled = [ex.id for ex in ds.examples if any(p.relevant is None for p in ex.paragraphs)]
        if unlabeled:
            raise ArgumentError(f"pspr training needs relevance labels; missing in {unlabeled[0]} "
                                f"(and {len(unlabeled) - 1} more); transform with mode openqa first")


def _dropper(rate: float, rng: Rng | None):
    if rng is None or rate <= 0.0:
        return None
    gen = np.random.default_rng(rng.next_u64())
    return lambda x: ops.dropout(x, rate, gen)


def reader_batch_loss(params: ReaderParams, items: list[_ReaderItem], drop=None) -> Tensor:
    """Mean marginal span NLL over a batch of (question, paragraph) items."""
    batch = ReaderBatch.build([it.q for it in items], [it.p for it in items])
    start, end = reader_logits(params, batch, drop)
    gs, ge = gold_masks([it.spans for it in items], batch.p_ids.shape[1])
    return ops.mean(reader_loss_rows(start, end, batch.p_mask, gs, ge))


def pspr_question_loss(rp: ReaderParams, sp: SelectorParams, q: list[int], paragraphs: list[list[int]],
                       labels: list[int], spans: list[list[tuple[int, int]]], detach_weight: bool = True,
                       with_selector: bool = True, with_reader: bool = True, drop=None) -> Tensor:
    """selector_loss + sum over positive paragraphs of Pr(p | q, P) * reader_loss(p).

    With ``detach_weight`` the selector probability is a constant weight, so
    the reader term sends no gradient into the selector.
    """
    scores = paragraph_scores(sp, q, paragraphs, drop)
    total = selector_loss_from_scores(scores, labels) if with_selector else None
    if with_reader:
        pos = [i for i, lab in enumerate(labels) if lab]
        probs = ops.softmax(scores, axis=-1)
        batch = ReaderBatch.build([q] * len(pos), [paragraphs[i] for i in pos])
        start, end = reader_logits(rp, batch, drop)
        gs, ge = gold_masks([spans[i] for i in pos], batch.p_ids.shape[1])
        rows = reader_loss_rows(start, end, batch.p_mask, gs, ge)
        if detach_weight:
            weight = Tensor(probs.data[pos])
        else:
            weight = probs[np.asarray(pos)]
        term = ops.sum(rows * weight)
        total = term if total is None else total + term
    return total


# ---------------------------------------------------------------- loops


def _trainable(named: dict[str, Tensor], cfg: TrainConfig) -> dict[str, Tensor]:
    if cfg.fix_embeddings:
        return {n: t for n, t in named.items() if not n.endswith(".emb")}
    return named


def _step(named: dict[str, Tensor], loss_fn: Callable[[], Tensor], opt: OptimizerState) -> float:
    with Tape() as tape:
        loss = loss_fn()
    value = loss.item()
    if not np.isfinite(value):
        raise TrainingError(f"non-finite loss {value} at step {opt.step + 1}")
    grads = backward(tape, loss, list(named.values()))
    adam_step(named, {n: grads[t] for n, t in named.items()}, opt)
    return value


def _emit(logger: Callable[[str], None] | None, msg: str) -> None:
    log.info(msg)
    if logger is not None:
        logger(msg)


def _train_reader(params: ReaderParams, items: list[_ReaderItem], cfg: TrainConfig, rng: Rng,
                  opt: OptimizerState, tlog: TrainLog, logger, evaluate) -> None:
    named = _trainable(params.named(), cfg)
    for epoch in range(1, cfg.epochs + 1):
        order = list(range(len(items)))
        erng = rng.split(f"epoch{epoch}")
        erng.shuffle(order)
        losses = []
        for k in range(0, len(order), cfg.batch_size):
            chunk = [items[i] for i in order[k:k + cfg.batch_size]]
            drop = _dropper(cfg.dropout, erng)
            losses.append(_step(named, lambda: reader_batch_loss(params, chunk, drop), opt))
        tlog.step_losses.extend(losses)
        tlog.epoch_losses.append(float(np.mean(losses)))
        _emit(logger, f"epoch {epoch} loss {tlog.epoch_losses[-1]:.6f}")
        _maybe_evaluate(epoch, cfg, evaluate, tlog, logger)


@dataclass
class _PsprItem:
    q: list[int]
    paragraphs: list[list[int]]
    labels: list[int]
    spans: list[list[tuple[int, int]]]


def _pspr_items(ds: QADataset, vocab: Vocab) -> tuple[list[_PsprItem], int]:
    items, skipped = [], 0
    for ex in ds.examples:
        labels = [1 if p.spans else 0 for p in ex.paragraphs]
        if not any(labels):
            skipped += 1
            continue
        items.append(_PsprItem(vocab.encode(ex.question.tokens), [vocab.encode(p.text.tokens) for p in ex.paragraphs],
                               labels, [[(s.start, s.end) for s in p.spans] for p in ex.paragraphs]))
    return items, skipped


def _train_pspr(rp: ReaderParams, sp: SelectorParams, items: list[_PsprItem], cfg: TrainConfig, rng: Rng,
                opt: OptimizerState, tlog: TrainLog, logger, evaluate) -> None:
    if cfg.pspr_mode == "joint":
        phases = [("joint", True, True, {**rp.named(), **sp.named()})]
    else:
        # selector first, then reader weighted by the trained selector
        phases = [("selector", True, False, sp.named()), ("reader", False, True, rp.named())]
    phases = [(name, s, r, _trainable(named, cfg)) for name, s, r, named in phases]
    for phase, with_sel, with_read, named in phases:
        for epoch in range(1, cfg.epochs + 1):
            order = list(range(len(items)))
            erng = rng.split(f"{phase}/epoch{epoch}")
            erng.shuffle(order)
            losses = []
            for i in order:
                it = items[i]
                drop = _dropper(cfg.dropout, erng)
                losses.append(_step(named, lambda: pspr_question_loss(
                    rp, sp, it.q, it.paragraphs, it.labels, it.spans,
                    with_selector=with_sel, with_reader=with_read, drop=drop), opt))
            tlog.step_losses.extend(losses)
            tlog.epoch_losses.append(float(np.mean(losses)))
            tag = "" if phase == "joint" else f" {phase}"
            _emit(logger, f"epoch {epoch}{tag} loss {tlog.epoch_losses[-1]:.6f}")
            _maybe_evaluate(epoch, cfg, evaluate, tlog, logger)


def _maybe_evaluate(epoch, cfg, evaluate, tlog, logger):
    if evaluate is not None and epoch % cfg.eval_every == 0:
        result = evaluate()
        tlog.evaluations.append((epoch, result))
        _emit(logger, f"epoch {epoch} eval " + " ".join(f"{k} {v:.4f}" for k, v in result.items()))


# ---------------------------------------------------------------- public entry points


def _init_tensors(cfg: TrainConfig, vocab_size: int, rng: Rng) -> dict[str, Tensor]:
    named = ReaderParams.init(rng, vocab_size, cfg.dim, cfg.hidden, cfg.layers).named()
    if cfg.kind == "pspr":
        named.update(SelectorParams.init(rng, vocab_size, cfg.dim, cfg.hidden).named())
    return named


def _run(kind: str, tensors: dict[str, Tensor], vocab: Vocab, ds: QADataset, cfg: TrainConfig,
         rng: Rng, logger, evaluate) -> tuple[TrainLog, int]:
    tlog = TrainLog()
    opt = OptimizerState(lr=cfg.lr, clip_norm=cfg.clip_norm)
    rp = ReaderParams.from_named(tensors)
    if kind == "reader":
        _train_reader(rp, _reader_items(ds, vocab), cfg, rng, opt, tlog, logger, evaluate)
    else:
        items, tlog.skipped_questions = _pspr_items(ds, vocab)
        if tlog.skipped_questions:
            _emit(logger, f"skipped {tlog.skipped_questions} question(s) without a positive paragraph")
        _train_pspr(rp, SelectorParams.from_named(tensors), items, cfg, rng, opt, tlog, logger, evaluate)
    return tlog, opt.step


def pretrain(ds: QADataset, cfg: TrainConfig, logger: Callable[[str], None] | None = None,
             evaluate: Callable[[Checkpoint], dict] | None = None) -> Checkpoint:
    """Train a fresh model of ``cfg.kind`` on ``ds``."""
    cfg.validate()
    _check_dataset(ds, cfg.kind)
    vocab = build_vocab([ds], cfg.min_count)
    rng = Rng(cfg.seed)
    tensors = _init_tensors(cfg, len(vocab), rng.split("init"))
    ckpt = Checkpoint(cfg.kind, cfg, list(vocab.itos), {}, {})
    bound = _bind_evaluate(evaluate, ckpt, tensors)
    tlog, steps = _run(cfg.kind, tensors, vocab, ds, cfg, rng.split("train"), logger, bound)
    ckpt.tensors = _snapshot(tensors)
    ckpt.provenance = {
        "pretrain_dataset": ds.dataset_id,
        "finetune_dataset": None,
        "steps": steps,
        "seed": cfg.seed,
        "history": [{"stage": "pretrain", "dataset": ds.dataset_id, "steps": steps, "seed": cfg.seed}],
    }
    ckpt.log = tlog
    return ckpt


def finetune(ckpt: Checkpoint, ds: QADataset, cfg: TrainConfig, logger: Callable[[str], None] | None = None,
             evaluate: Callable[[Checkpoint], dict] | None = None) -> Checkpoint:
    """Continue training ``ckpt`` on ``ds``; pretrained tensors are reused as-is."""
    cfg.validate()
    if ckpt.version > CHECKPOINT_VERSION:
        raise FormatError("<checkpoint>", None, f"checkpoint version {ckpt.version} is newer than supported")
    if ckpt.kind != cfg.kind:
        raise ArgumentError(f"model kind mismatch: checkpoint is {ckpt.kind}, config asks for {cfg.kind}")
    _check_dataset(ds, cfg.kind)
    vocab = ckpt.vocabulary()
    added = vocab.extend(ranked_tokens(count_tokens([ds]), cfg.min_count))
    rng = Rng(cfg.seed).split("finetune")
    arrays = dict(ckpt.tensors)
    if added:
        for name in [n for n in arrays if n.endswith(".emb")]:
            rows = embedding_rows(rng.split(f"new-rows/{name}"), len(added), arrays[name].shape[1])
            arrays[name] = np.concatenate([arrays[name], rows])
    tensors = {n: parameter(a, n) for n, a in arrays.items()}
    out = Checkpoint(ckpt.kind, cfg, list(vocab.itos), {}, {})
    bound = _bind_evaluate(evaluate, out, tensors)
    tlog, steps = _run(ckpt.kind, tensors, vocab, ds, cfg, rng.split("train"), logger, bound)
    out.tensors = _snapshot(tensors)
    prov = json.loads(json.dumps(ckpt.provenance))
    prov.setdefault("history", [])
    prov["history"].append({"stage": "finetune", "dataset": ds.dataset_id, "steps": steps, "seed": cfg.seed,
                            "vocab_added": len(added)})
    prov["finetune_dataset"] = ds.dataset_id
    prov["steps"] = int(prov.get("steps", 0)) + steps
    prov["seed"] = cfg.seed
    out.provenance = prov
    out.log = tlog
    return out


def train_pspr(ds: QADataset, cfg: TrainConfig, logger: Callable[[str], None] | None = None,
               evaluate: Callable[[Checkpoint], dict] | None = None) -> Checkpoint:
    """Train selector and reader together on an open-QA labelled dataset."""
    if cfg.kind != "pspr":
        raise ArgumentError(f"train_pspr needs config kind pspr, got {cfg.kind}")
    return pretrain(ds, cfg, logger, evaluate)


def _snapshot(tensors: dict[str, Tensor]) -> dict[str, np.ndarray]:
    return {n: np.array(t.data) for n, t in tensors.items()}


def _bind_evaluate(evaluate, ckpt: Checkpoint, tensors: dict[str, Tensor]):
    if evaluate is None:
        return None

    def run():
        ckpt.tensors = _snapshot(tensors)
        return evaluate(ckpt)
    return run


