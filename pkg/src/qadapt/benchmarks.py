"""Synthetic benchmarks: the pretrain/fine-tune transfer comparison and
the open-QA comparison of a plain reader against joint selector+reader
training.

Both return plain dicts of metric values so callers can print or assert
on them.
"""

from __future__ import annotations

from dataclasses import dataclass

from .adapt import TrainConfig, finetune, pretrain, train_pspr
from .corpus.dataset import QADataset
from .corpus.synth import bioasq_like, quasar_like, split_dataset, squad_like, synth_generate
from .corpus.transform import transform_openqa, transform_rc
from .metrics import MetricsReport, compute_metrics
from .ranking import predict_dataset


@dataclass
class BenchConfig:
    layers: int = 1
    dim: int = 64
    hidden: int = 32
    pretrain_epochs: int = 20
    finetune_epochs: int = 40
    source_questions: int = 2000
    target_train: int = 100
    target_test: int = 50
    openqa_train: int = 200
    openqa_test: int = 50

    def train_config(self, seed: int, epochs: int, kind: str = "reader") -> TrainConfig:
        return TrainConfig(kind=kind, layers=self.layers, dim=self.dim, hidden=self.hidden, seed=seed,
                           epochs=epochs)


def _scores(report: MetricsReport) -> dict[str, float]:
    return {"s_acc": report.strict_acc, "l_acc": report.lenient_acc, "mrr": report.mrr}


def _evaluate(ckpt, ds: QADataset, strategy: str) -> dict[str, float]:
    selector = ckpt.selector() if strategy != "reader_only" else None
    return _scores(compute_metrics(predict_dataset(ds, strategy, ckpt.reader(), selector), ds.gold()))


def transfer_benchmark(seed: int, cfg: BenchConfig | None = None, logger=None) -> dict[str, dict[str, float]]:
    """No-Pre, No-Fine and Pre+Fine scores on a held-out bioasq-like test set.

    No-Pre trains on the target training split only. No-Fine is the source
    model after a zero-epoch fine-tune, which only merges the target
    vocabulary. Pre+Fine continues training the source model on the target.
    """
    cfg = cfg or BenchConfig()
    source = transform_rc(synth_generate(seed, squad_like(cfg.source_questions)))
    target = transform_openqa(synth_generate(seed, bioasq_like(cfg.target_train + cfg.target_test)))
    train, test = split_dataset(target, cfg.target_train)
    train_rc = transform_rc(train)

    src = pretrain(source, cfg.train_config(seed, cfg.pretrain_epochs), logger)
    no_pre = pretrain(train_rc, cfg.train_config(seed, cfg.finetune_epochs), logger)
    no_fine = finetune(src, train_rc, cfg.train_config(seed, 0), logger)
    pre_fine = finetune(src, train_rc, cfg.train_config(seed, cfg.finetune_epochs), logger)
    return {name: _evaluate(ck, test, "reader_only")
            for name, ck in (("no_pre", no_pre), ("no_fine", no_fine), ("pre_fine", pre_fine))}


def openqa_benchmark(seed: int, cfg: BenchConfig | None = None, logger=None) -> dict[str, dict[str, float]]:
    """Plain reader (reader_only) against joint selector+reader (combined)
    on a quasar-like set with 10 paragraphs per question."""
    cfg = cfg or BenchConfig()
    data = transform_openqa(synth_generate(seed, quasar_like(cfg.openqa_train + cfg.openqa_test)))
    train, test = split_dataset(data, cfg.openqa_train)
    reader = pretrain(transform_rc(train), cfg.train_config(seed, cfg.pretrain_epochs), logger)
    joint = train_pspr(train, cfg.train_config(seed, cfg.pretrain_epochs, kind="pspr"), logger)
    return {"drqa": _evaluate(reader, test, "reader_only"), "pspr": _evaluate(joint, test, "combined")}
