"""Structure-aware positives: k non-causal tokens swapped for an UNK marker.

Replacement keeps the sentence length and every causal token intact, so the
positive preserves the structural skeleton where shortcuts live while the
surface words that carry no label signal are blanked.  Each epoch draws a
fresh replacement set from a per-(seed, epoch, example) stream, so repeats
are reproducible but epochs differ.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

from salad.corpus import Dataset, detokenize
from salad.discovery import TagSetPartition
from salad.errors import ConfigError
from salad.postag import TaggedExample, Tagger, tag

DEFAULT_UNK = "[UNK]"


@dataclass
class PositiveGenConfig:
    scaling_factor: float = 0.18
    k_override: Optional[int] = None
    unk_token: str = DEFAULT_UNK
    seed: int = 0

    def __post_init__(self) -> None:
        if self.scaling_factor < 0:
            raise ConfigError(f"scaling_factor must be >= 0, got {self.scaling_factor}")
        if self.k_override is not None and self.k_override < 1:
            raise ConfigError(f"k_override must be >= 1, got {self.k_override}")


@dataclass
class PositiveExample:
    """A masked copy of one source example for a given epoch."""

    source_id: str
    text: str
    replaced_positions: list[int]
    epoch: int
    text_b: Optional[str] = None


def noncausal_token_count(tagged: TaggedExample, partition: TagSetPartition) -> int:
    return sum(1 for t in tagged.tags if t in partition.noncausal)


def compute_k(
    train: Dataset, partition: TagSetPartition, cfg: PositiveGenConfig, tagger: Tagger
) -> int:
    """k = round(mean non-causal tokens per sentence * scaling factor), min 1.

    Rounding is half away from zero; an explicit k_override wins.
    """
    if cfg.k_override is not None:
        return cfg.k_override
    if len(train) == 0:
        raise ConfigError("cannot compute k on an empty dataset")
    mean = sum(noncausal_token_count(tag(ex, tagger), partition) for ex in train) / len(train)
    return k_from_mean(mean, cfg.scaling_factor)


def k_from_mean(mean_noncausal: float, scaling_factor: float) -> int:
    scaled = mean_noncausal * scaling_factor
    return max(1, math.floor(scaled + 0.5))


def _example_rng(seed: int, epoch: int, example_id: str) -> random.Random:
    # String seeding hashes via sha512 internally, so streams are stable
    # across processes and independent of PYTHONHASHSEED.
    return random.Random(f"{seed}:{epoch}:{example_id}")


def generate_positive(
    tagged: TaggedExample,
    partition: TagSetPartition,
    k: int,
    unk_token: str = DEFAULT_UNK,
    rng: Optional[random.Random] = None,
    epoch: int = 0,
) -> PositiveExample:
    """Replace min(k, #non-causal) distinct non-causal tokens with unk_token.

    Positions are drawn uniformly without replacement; all other tokens and
    the token order stay untouched.  A sentence with no non-causal tokens
    comes back unmodified with an empty replaced_positions list.
    """
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    rng = rng or random.Random(0)
    eligible = [i for i, t in enumerate(tagged.tags) if t in partition.noncausal]
    n_replace = min(k, len(eligible))
    positions = sorted(rng.sample(eligible, n_replace)) if n_replace else []
    chosen = set(positions)
    tokens = [unk_token if i in chosen else tok for i, tok in enumerate(tagged.tokens)]
    split = tagged.split_point
    if split is None:
        text, text_b = detokenize(tokens), None
    else:
        text, text_b = detokenize(tokens[:split]), detokenize(tokens[split:])
    return PositiveExample(
        source_id=tagged.example.id,
        text=text,
        text_b=text_b,
        replaced_positions=positions,
        epoch=epoch,
    )


def generate_epoch_positives(
    tagged_train: Sequence[TaggedExample],
    partition: TagSetPartition,
    k: int,
    epoch: int,
    seed: int,
    unk_token: str = DEFAULT_UNK,
) -> list[PositiveExample]:
    """One positive per example with an rng stream keyed (seed, epoch, id).

    Keyed streams make the output independent of scheduling order and
    reproducible run to run, while distinct epochs draw distinct masks.
    """
    return [
        generate_positive(
            tex,
            partition,
            k,
            unk_token=unk_token,
            rng=_example_rng(seed, epoch, tex.example.id),
            epoch=epoch,
        )
        for tex in tagged_train
    ]


def save_positives(positives: Sequence[PositiveExample], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for pos in positives:
            record: dict[str, object] = {
                "source_id": pos.source_id,
                "epoch": pos.epoch,
                "text": pos.text,
            }
            if pos.text_b is not None:
                record["text_b"] = pos.text_b
            record["replaced_positions"] = pos.replaced_positions
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def load_positives(path: str | Path) -> list[PositiveExample]:
    positives = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        positives.append(
            PositiveExample(
                source_id=rec["source_id"],
                text=rec["text"],
                text_b=rec.get("text_b"),
                replaced_positions=list(rec["replaced_positions"]),
                epoch=int(rec["epoch"]),
            )
        )
    return positives
