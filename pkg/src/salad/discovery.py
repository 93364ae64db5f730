"""Tag-importance scoring by ablation and the causal/non-causal partition.

For each universal tag, every training sentence is re-scored with that
tag's tokens deleted; the tag's importance is the drop in accuracy versus
the unablated sentences, measured with per-example 0/1 correctness against
gold labels over the same examples.  Tags whose drop reaches the threshold
are causal, the rest form the non-causal set used for masking.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

from salad.corpus import Dataset, LabeledExample
from salad.errors import ConfigError, OracleError
from salad.postag import ALL_TAGS, Tagger, TaggedExample, UniversalTag, ablate_tag, tag


class ClassifierOracle(Protocol):
    def predict(self, example: LabeledExample) -> int:
        """Predicted label index; must be deterministic for a fixed model state."""
        ...


@dataclass
class TagImportanceReport:
    """Per-tag accuracy reduction over m scored examples."""

    per_tag: dict[UniversalTag, float]
    dataset_name: str
    m: int

    def __post_init__(self) -> None:
        missing = [t.value for t in ALL_TAGS if t not in self.per_tag]
        if missing:
            raise ConfigError(f"report missing tags: {missing}")
        if self.m <= 0:
            raise ConfigError("report needs m > 0 scored examples")


@dataclass
class TagSetPartition:
    """Disjoint causal/non-causal cover of the 12 universal tags."""

    causal: frozenset[UniversalTag]
    noncausal: frozenset[UniversalTag]
    threshold: float

    def __post_init__(self) -> None:
        if self.causal & self.noncausal:
            raise ConfigError("causal and noncausal sets overlap")
        if self.causal | self.noncausal != frozenset(ALL_TAGS):
            raise ConfigError("partition must cover all 12 universal tags")


def _predict(oracle: ClassifierOracle, example: LabeledExample) -> int:
    try:
        return oracle.predict(example)
    except Exception as exc:
        raise OracleError(f"oracle failed on example {example.id!r}: {exc}") from exc


def score_tags(train: Dataset, oracle: ClassifierOracle, tagger: Tagger) -> TagImportanceReport:
    """Accuracy reduction per tag: acc(originals) - acc(tag-ablated copies).

    Both accuracies use per-example correctness indicators against gold
    labels over the same m examples, so every score is a fraction in
    [-1, 1].  The mean is order-independent, and a tag absent from the
    corpus scores exactly 0 (its ablations equal the originals).
    """
    if len(train) == 0:
        raise ConfigError("cannot score tags on an empty dataset")
    m = len(train)
    tagged: list[TaggedExample] = [tag(ex, tagger) for ex in train]
    correct_orig = [int(_predict(oracle, ex) == ex.label) for ex in train]
    acc_orig = sum(correct_orig) / m

    per_tag: dict[UniversalTag, float] = {}
    for t in ALL_TAGS:
        correct_ablated = 0
        for tex, orig_ok in zip(tagged, correct_orig):
            if t not in tex.tags:
                correct_ablated += orig_ok  # ablation is a no-op for this sentence
                continue
            ablated = ablate_tag(tex, t)
            correct_ablated += int(_predict(oracle, ablated) == ablated.label)
        per_tag[t] = acc_orig - correct_ablated / m
    return TagImportanceReport(per_tag=per_tag, dataset_name=train.name, m=m)


def partition_tags(report: TagImportanceReport, threshold: float) -> TagSetPartition:
    """Tags with reduction >= threshold are causal, the rest non-causal.

    Monotone in the threshold: raising it never moves a tag into the causal
    set.
    """
    if threshold < 0:
        raise ConfigError(f"threshold must be >= 0, got {threshold}")
    causal = frozenset(t for t, r in report.per_tag.items() if r >= threshold)
    noncausal = frozenset(ALL_TAGS) - causal
    return TagSetPartition(causal=causal, noncausal=noncausal, threshold=threshold)


def report_to_dict(report: TagImportanceReport, partition: TagSetPartition) -> dict:
    """JSON-ready merge of scores and partition (the persisted artifact shape)."""
    return {
        "dataset": report.dataset_name,
        "m": report.m,
        "scores": {t.value: report.per_tag[t] for t in ALL_TAGS},
        "threshold": partition.threshold,
        "causal": sorted(t.value for t in partition.causal),
        "noncausal": sorted(t.value for t in partition.noncausal),
    }


def save_report(report: TagImportanceReport, partition: TagSetPartition, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report_to_dict(report, partition), indent=2) + "\n", encoding="utf-8")


def load_partition(path: str | Path) -> TagSetPartition:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return TagSetPartition(
        causal=frozenset(UniversalTag(t) for t in data["causal"]),
        noncausal=frozenset(UniversalTag(t) for t in data["noncausal"]),
        threshold=float(data["threshold"]),
    )


def format_score_table(report: TagImportanceReport, partition: TagSetPartition) -> str:
    """Aligned per-tag table (tag, reduction, causal marker), highest first."""
    lines = [f"{'tag':<6} {'reduction':>10}  causal", "-" * 26]
    for t in sorted(ALL_TAGS, key=lambda t: report.per_tag[t], reverse=True):
        marker = "yes" if t in partition.causal else "no"
        lines.append(f"{t.value:<6} {report.per_tag[t]:>10.4f}  {marker}")
    return "\n".join(lines)
