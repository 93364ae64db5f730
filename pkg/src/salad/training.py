"""Contrastive fine-tuning: cross-entropy plus triplet loss on triplets.

Each epoch rebuilds the masked positives from that epoch's random stream, so
the model sees different non-causal tokens blanked every pass.  Every anchor
that has a label-flipped counterfactual contributes a triplet (anchor,
masked positive, counterfactual); anchors without one — e.g. examples whose
label has no flip target — still contribute to the cross-entropy term.  The
optimizer steps on the convex mixture of the two losses.
"""

from __future__ import annotations

import json
import logging
import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import torch

from salad.corpus import Dataset, LabeledExample, tokenize
from salad.discovery import TagSetPartition
from salad.encoders import TinyTextEncoder
from salad.errors import ConfigError, TrainingError
from salad.losses import LossConfig, combined_loss, cross_entropy, triplet_loss
from salad.negatives import CounterfactualExample
from salad.positives import DEFAULT_UNK, PositiveExample, generate_epoch_positives
from salad.postag import TaggedExample, Tagger, tag

logger = logging.getLogger(__name__)


@dataclass
class TrainingConfig:
    batch_size: int = 16
    learning_rate: float = 1e-5
    max_seq_len: int = 256
    epochs: int = 5
    seeds: tuple[int, ...] = (0, 1, 2)

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.max_seq_len < 1:
            raise ConfigError(f"max_seq_len must be >= 1, got {self.max_seq_len}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        self.seeds = tuple(self.seeds)
        if not self.seeds:
            raise ConfigError("seeds must be non-empty")


@dataclass
class AugmentedTriplet:
    """Anchor, its masked positive, and its label-flipped counterfactual."""

    anchor: LabeledExample
    positive: PositiveExample
    negative: CounterfactualExample

    def __post_init__(self) -> None:
        if self.positive.source_id != self.anchor.id or self.negative.source_id != self.anchor.id:
            raise ConfigError(
                f"triplet parts disagree on the source example: anchor {self.anchor.id!r}, "
                f"positive {self.positive.source_id!r}, negative {self.negative.source_id!r}"
            )
        if self.negative.label == self.anchor.label:
            raise ConfigError(
                f"negative for {self.anchor.id!r} carries the anchor's own label"
            )


@dataclass
class EpochMetrics:
    epoch: int
    ce: float
    cl: float
    total: float
    val_acc: Optional[float] = None


@dataclass
class TrainResult:
    encoder: TinyTextEncoder
    metrics: list[EpochMetrics]
    seed: int
    triplet_count: int


def _side_tokens(text: str, text_b: Optional[str]) -> list[str]:
    tokens = tokenize(text)
    if text_b is not None:
        tokens.extend(tokenize(text_b))
    return tokens


def checkpoint_name(run_name: str, seed: int, epoch: int) -> str:
    return f"{run_name}-seed{seed}-ep{epoch}"


def train(
    train_ds: Dataset,
    negatives: Sequence[CounterfactualExample],
    partition: TagSetPartition,
    k: int,
    loss_cfg: LossConfig,
    train_cfg: TrainingConfig,
    encoder: TinyTextEncoder,
    tagger: Tagger,
    seed: int = 0,
    val: Optional[Dataset] = None,
    unk_token: str = DEFAULT_UNK,
    negatives_in_ce: bool = False,
    checkpoint_dir: Optional[Path] = None,
    run_name: str = "run",
) -> TrainResult:
    """Fit the encoder on one seed; deterministic given identical inputs.

    Anchor order is reshuffled every epoch from a seed-keyed stream, the
    positives are regenerated from the epoch stream, and a non-finite batch
    loss aborts with the batch's diagnostics rather than training on.
    """
    if len(train_ds) == 0:
        raise ConfigError("cannot train on an empty dataset")
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    torch.manual_seed(seed)

    neg_by_source: dict[str, CounterfactualExample] = {}
    for neg in negatives:
        neg_by_source.setdefault(neg.source_id, neg)

    # The triplet branch is skipped entirely at lambda 0: training reduces
    # to plain fine-tuning and counterfactuals are never encoded or tagged.
    use_triplets = loss_cfg.lambda_weight > 0.0 and bool(neg_by_source)
    tagged: list[TaggedExample] = [tag(ex, tagger) for ex in train_ds] if use_triplets else []
    optimizer = torch.optim.Adam(encoder.parameters(), lr=train_cfg.learning_rate)
    metrics: list[EpochMetrics] = []
    triplet_count = 0

    from salad.evaluation import evaluate  # local import: evaluation also uses encoders

    if checkpoint_dir is not None:
        checkpoint_dir = Path(checkpoint_dir)
        checkpoint_dir.mkdir(parents=True, exist_ok=True)
        (checkpoint_dir / f"{run_name}-meta.json").write_text(
            json.dumps(encoder.meta(), sort_keys=True), encoding="utf-8"
        )

    for epoch in range(train_cfg.epochs):
        positives = (
            generate_epoch_positives(tagged, partition, k, epoch, seed, unk_token)
            if use_triplets
            else []
        )
        pos_by_source = {p.source_id: p for p in positives}

        order = list(range(len(train_ds)))
        random.Random(f"{seed}:order:{epoch}").shuffle(order)

        ce_sum = cl_sum = 0.0
        ce_count = cl_count = 0
        encoder.train()
        for start in range(0, len(order), train_cfg.batch_size):
            batch = [train_ds.examples[i] for i in order[start : start + train_cfg.batch_size]]
            triplets: list[AugmentedTriplet] = []
            if use_triplets:
                for ex in batch:
                    neg = neg_by_source.get(ex.id)
                    if neg is not None:
                        triplets.append(AugmentedTriplet(ex, pos_by_source[ex.id], neg))

            ce_tokens = [ex.tokens() for ex in batch]
            ce_labels = [ex.label for ex in batch]
            if negatives_in_ce:
                for ex in batch:
                    neg = neg_by_source.get(ex.id)
                    if neg is not None:
                        ce_tokens.append(_side_tokens(neg.text, neg.text_b))
                        ce_labels.append(neg.label)
            _, logits = encoder.encode_tokens(ce_tokens)
            ce = cross_entropy(logits, ce_labels)

            if triplets:
                anchor_pooled, _ = encoder.encode_examples([t.anchor for t in triplets])
                pos_pooled, _ = encoder.encode_tokens(
                    [_side_tokens(t.positive.text, t.positive.text_b) for t in triplets]
                )
                neg_pooled, _ = encoder.encode_tokens(
                    [_side_tokens(t.negative.text, t.negative.text_b) for t in triplets]
                )
                cl = triplet_loss(anchor_pooled, pos_pooled, neg_pooled, loss_cfg)
            else:
                cl = torch.zeros((), dtype=logits.dtype) if use_triplets else 0.0

            total = combined_loss(ce, cl, loss_cfg.lambda_weight)
            ce_value = float(ce.detach())
            cl_value = float(cl.detach()) if isinstance(cl, torch.Tensor) else float(cl)
            total_value = (
                float(total.detach()) if isinstance(total, torch.Tensor) else float(total)
            )
            if not math.isfinite(total_value):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}, batch {start // train_cfg.batch_size}: "
                    f"ce={ce_value}, cl={cl_value}, total={total_value}"
                )
            if isinstance(total, torch.Tensor) and total.requires_grad:
                optimizer.zero_grad()
                total.backward()
                optimizer.step()

            ce_sum += ce_value * len(ce_labels)
            ce_count += len(ce_labels)
            if triplets:
                cl_sum += cl_value * len(triplets)
                cl_count += len(triplets)
            triplet_count += len(triplets)

        epoch_ce = ce_sum / ce_count if ce_count else 0.0
        epoch_cl = cl_sum / cl_count if cl_count else 0.0
        epoch_total = float(combined_loss(epoch_ce, epoch_cl, loss_cfg.lambda_weight))
        val_acc = evaluate(encoder, val) if val is not None else None
        metrics.append(EpochMetrics(epoch, epoch_ce, epoch_cl, epoch_total, val_acc))
        logger.info(
            "epoch %d: ce=%.4f cl=%.4f total=%.4f val_acc=%s",
            epoch,
            epoch_ce,
            epoch_cl,
            epoch_total,
            f"{val_acc:.2f}" if val_acc is not None else "n/a",
        )
        if checkpoint_dir is not None:
            torch.save(
                encoder.state_dict(),
                checkpoint_dir / f"{checkpoint_name(run_name, seed, epoch)}.pt",
            )

    return TrainResult(encoder=encoder, metrics=metrics, seed=seed, triplet_count=triplet_count)


def train_all_seeds(
    train_ds: Dataset,
    negatives: Sequence[CounterfactualExample],
    partition: TagSetPartition,
    k: int,
    loss_cfg: LossConfig,
    train_cfg: TrainingConfig,
    encoder_factory: Callable[[int], TinyTextEncoder],
    tagger: Tagger,
    val: Optional[Dataset] = None,
    unk_token: str = DEFAULT_UNK,
    negatives_in_ce: bool = False,
    checkpoint_dir: Optional[Path] = None,
    run_name: str = "run",
) -> list[TrainResult]:
    """One independent training run per configured seed, in seed order."""
    return [
        train(
            train_ds,
            negatives,
            partition,
            k,
            loss_cfg,
            train_cfg,
            encoder_factory(seed),
            tagger,
            seed=seed,
            val=val,
            unk_token=unk_token,
            negatives_in_ce=negatives_in_ce,
            checkpoint_dir=checkpoint_dir,
            run_name=run_name,
        )
        for seed in train_cfg.seeds
    ]


def save_metrics(metrics: Sequence[EpochMetrics], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for m in metrics:
            fh.write(
                json.dumps(
                    {
                        "epoch": m.epoch,
                        "ce": m.ce,
                        "cl": m.cl,
                        "total": m.total,
                        "val_acc": m.val_acc,
                    }
                )
                + "\n"
            )


def load_metrics(path: str | Path) -> list[EpochMetrics]:
    metrics = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        metrics.append(
            EpochMetrics(
                epoch=int(rec["epoch"]),
                ce=float(rec["ce"]),
                cl=float(rec["cl"]),
                total=float(rec["total"]),
                val_acc=None if rec.get("val_acc") is None else float(rec["val_acc"]),
            )
        )
    return metrics
