"""Synthetic two-class corpus with a planted spurious token.

Builds a sentiment-style corpus in which the label is fully determined by
one adjective, while a meaningless marker token rides along with the
positive class in most training sentences.  The out-of-distribution test
set reverses the ride-along: the marker never appears on positives and
usually appears on negatives, so any classifier leaning on it is punished.
Used to demonstrate, at desk scale, that contrastive training on masked
positives and label-flipped negatives reduces that reliance.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from salad.corpus import Dataset, LabeledExample, Split, TaskKind, task_for
from salad.discovery import TagSetPartition
from salad.errors import ConfigError
from salad.postag import ALL_TAGS, DictionaryTagger, UniversalTag

# Many rare adjectives against one frequent marker: the label-carrying
# signal is spread across 24 word pairs while the marker rides along with
# roughly half the corpus, which makes the shortcut the statistically
# easiest feature for plain fine-tuning to latch onto.
POSITIVE_WORDS = (
    "glad", "happy", "joyful", "bright", "lovely", "cheerful",
    "pleasant", "warm", "merry", "sweet", "calm", "cozy",
    "sunny", "gentle", "vivid", "fresh", "fine", "serene",
    "radiant", "blissful", "golden", "smooth", "festive", "hopeful",
)
NEGATIVE_WORDS = (
    "sad", "angry", "gloomy", "dark", "dreary", "bitter",
    "awful", "cold", "bleak", "sour", "tense", "grim",
    "stormy", "harsh", "dull", "stale", "foul", "dismal",
    "murky", "mournful", "leaden", "rough", "somber", "hopeless",
)
TRAIN_NOUNS = ("day", "time", "walk", "meal", "song", "road", "house", "river")
ODD_NOUNS = ("garden", "window", "letter", "winter", "morning", "corner")
SPURIOUS_TOKEN = "zorp"

_TEMPLATES = (
    "the {noun} was {adj}",
    "that {noun} seemed {adj}",
    "i felt {adj} about the {noun}",
    "my {noun} felt {adj}",
)

_FUNCTION_TAGS = {
    "the": UniversalTag.DET,
    "that": UniversalTag.DET,
    "i": UniversalTag.PRON,
    "my": UniversalTag.PRON,
    "was": UniversalTag.VERB,
    "seemed": UniversalTag.VERB,
    "felt": UniversalTag.VERB,
    "about": UniversalTag.ADP,
}


def make_antonyms() -> dict[str, str]:
    """One-to-one flip table pairing each positive word with a negative."""
    return dict(zip(POSITIVE_WORDS, NEGATIVE_WORDS))


def make_tagger() -> DictionaryTagger:
    """Exact lexicon for the synthetic vocabulary; the marker tags as X."""
    lexicon: dict[str, UniversalTag] = dict(_FUNCTION_TAGS)
    for word in POSITIVE_WORDS + NEGATIVE_WORDS:
        lexicon[word] = UniversalTag.ADJ
    for noun in TRAIN_NOUNS + ODD_NOUNS:
        lexicon[noun] = UniversalTag.NOUN
    lexicon[SPURIOUS_TOKEN] = UniversalTag.X
    lexicon["today"] = UniversalTag.NOUN
    return DictionaryTagger(lexicon)


def make_partition() -> TagSetPartition:
    """Adjectives carry the label; every other tag counts as non-causal."""
    causal = frozenset({UniversalTag.ADJ})
    return TagSetPartition(
        causal=causal,
        noncausal=frozenset(ALL_TAGS) - causal,
        threshold=0.01,
    )


@dataclass(frozen=True)
class SyntheticCorpus:
    train: Dataset
    odd_test: Dataset


def _sentence(rng: random.Random, positive: bool, nouns: tuple[str, ...]) -> str:
    adj = rng.choice(POSITIVE_WORDS if positive else NEGATIVE_WORDS)
    noun = rng.choice(nouns)
    return rng.choice(_TEMPLATES).format(noun=noun, adj=adj)


def make_corpus(
    n_train: int = 500,
    n_odd: int = 200,
    seed: int = 0,
    spurious_rate: float = 0.95,
) -> SyntheticCorpus:
    """Balanced train and out-of-distribution test sets.

    In train the marker token follows positives with probability
    spurious_rate and never follows a negative, so nothing in the training
    distribution ever contradicts the shortcut.  In the test set it never
    follows a positive and follows negatives with spurious_rate, and the
    nouns come from a disjoint list.
    """
    if n_train < 2 or n_odd < 2:
        raise ConfigError("need at least 2 train and 2 test sentences")
    if not 0.0 <= spurious_rate <= 1.0:
        raise ConfigError(f"spurious_rate must be in [0, 1], got {spurious_rate}")
    task = task_for(TaskKind.SENTIMENT)
    positive_label = task.label_index("positive")
    negative_label = task.label_index("negative")
    rng = random.Random(f"synthetic:{seed}")

    def build(name: str, split: Split, n: int, nouns: tuple[str, ...], odd: bool) -> Dataset:
        labels = [positive_label] * (n // 2) + [negative_label] * (n - n // 2)
        rng.shuffle(labels)
        examples = []
        for i, label in enumerate(labels):
            positive = label == positive_label
            text = _sentence(rng, positive, nouns)
            if odd:
                attach = (not positive) and rng.random() < spurious_rate
            else:
                attach = positive and rng.random() < spurious_rate
            if attach:
                text = f"{text} {SPURIOUS_TOKEN}"
            examples.append(
                LabeledExample(id=f"{name}{i:04d}", text_a=text, label=label)
            )
        return Dataset(name=name, task=task, split=split, examples=examples)

    train = build("syn-train-", Split.TRAIN, n_train, TRAIN_NOUNS, odd=False)
    odd_test = build("syn-odd-", Split.ODD, n_odd, ODD_NOUNS, odd=True)
    return SyntheticCorpus(train=train, odd_test=odd_test)


@dataclass(frozen=True)
class SeedOutcome:
    """One seed's comparison between plain fine-tuning and the full method."""

    seed: int
    ce_only_odd_acc: float
    contrastive_odd_acc: float
    triplet_order_fraction: float

    @property
    def gap(self) -> float:
        return self.contrastive_odd_acc - self.ce_only_odd_acc


@dataclass(frozen=True)
class ShortcutBenchmark:
    """Aggregated outcome of the shortcut-mitigation demonstration."""

    outcomes: tuple[SeedOutcome, ...]

    @property
    def mean_gap(self) -> float:
        return sum(o.gap for o in self.outcomes) / len(self.outcomes)

    @property
    def min_order_fraction(self) -> float:
        return min(o.triplet_order_fraction for o in self.outcomes)


def run_shortcut_benchmark(
    seeds: tuple[int, ...] = (0, 1, 2),
    epochs: int = 8,
    learning_rate: float = 0.05,
    k: int = 3,
    margin: float = 4.0,
    lambda_weight: float = 0.5,
    batch_size: int = 16,
    embed_dim: int = 32,
) -> ShortcutBenchmark:
    """Train a marker-shortcut corpus with and without the contrastive term.

    For each seed this fits two encoders that differ only in the loss
    mixture weight (0 vs. lambda_weight), scores both on the distribution-
    shifted test set, and measures the fraction of training anchors whose
    final-epoch masked positive sits closer than the label-flipped negative.
    The aggressive masking depth and margin keep the triplet term exerting
    pressure on the marker direction for the whole run instead of dying as
    soon as the average margin is met.
    """
    import torch

    from salad.encoders import TinyTextEncoder, Vocab
    from salad.evaluation import evaluate
    from salad.losses import LossConfig, pair_distance
    from salad.negatives import (
        GenerationConfig,
        InstructionId,
        StubCompletionClient,
        generate_negatives,
    )
    from salad.positives import generate_epoch_positives
    from salad.postag import tag as tag_example
    from salad.training import TrainingConfig, train

    corpus = make_corpus()
    tagger = make_tagger()
    partition = make_partition()
    client = StubCompletionClient(make_antonyms())
    report = generate_negatives(
        corpus.train, partition, InstructionId.I4, GenerationConfig(), client, tagger=tagger
    )
    negatives = report.negatives
    vocab = Vocab.from_texts(
        [ex.text_a for ex in corpus.train.examples]
        + [neg.text for neg in negatives]
        + ["[UNK]"]
    )
    tagged = [tag_example(ex, tagger) for ex in corpus.train.examples]
    neg_by_source = {neg.source_id: neg for neg in negatives}

    def fit(lam: float, seed: int) -> TinyTextEncoder:
        encoder = TinyTextEncoder(
            vocab,
            num_classes=2,
            embed_dim=embed_dim,
            hidden_dim=embed_dim,
            max_seq_len=64,
            seed=seed,
        )
        loss_cfg = LossConfig(lambda_weight=lam, margin=margin)
        train_cfg = TrainingConfig(
            batch_size=batch_size,
            learning_rate=learning_rate,
            max_seq_len=64,
            epochs=epochs,
            seeds=(seed,),
        )
        result = train(
            corpus.train,
            negatives if lam > 0 else [],
            partition,
            k,
            loss_cfg,
            train_cfg,
            encoder,
            tagger,
            seed=seed,
        )
        return result.encoder

    def order_fraction(encoder: TinyTextEncoder, seed: int) -> float:
        positives = generate_epoch_positives(
            tagged, partition, k, epochs - 1, seed, "[UNK]"
        )
        pos_by_source = {p.source_id: p for p in positives}
        anchors = [ex.text_a for ex in corpus.train.examples]
        pos_texts = [pos_by_source[ex.id].text for ex in corpus.train.examples]
        neg_texts = [neg_by_source[ex.id].text for ex in corpus.train.examples]
        distance = LossConfig().distance
        with torch.no_grad():
            a, _ = encoder.encode(anchors)
            p, _ = encoder.encode(pos_texts)
            n, _ = encoder.encode(neg_texts)
            closer = pair_distance(a, p, distance) < pair_distance(a, n, distance)
        return float(closer.float().mean())

    outcomes = []
    for seed in seeds:
        ce_only = evaluate(fit(0.0, seed), corpus.odd_test)
        contrastive_encoder = fit(lambda_weight, seed)
        contrastive = evaluate(contrastive_encoder, corpus.odd_test)
        outcomes.append(
            SeedOutcome(
                seed=seed,
                ce_only_odd_acc=ce_only,
                contrastive_odd_acc=contrastive,
                triplet_order_fraction=order_fraction(contrastive_encoder, seed),
            )
        )
    return ShortcutBenchmark(outcomes=tuple(outcomes))
