"""Shared fixtures: small deterministic corpora, taggers, and file helpers."""

from __future__ import annotations

import shutil
from pathlib import Path

import pytest
import torch

from salad.corpus import Dataset, LabeledExample, Split, TaskKind, task_for
from salad.discovery import TagSetPartition
from salad.postag import ALL_TAGS, DictionaryTagger, UniversalTag


@pytest.fixture(scope="session", autouse=True)
def _single_threaded_torch() -> None:
    torch.set_num_threads(1)


@pytest.fixture(scope="session")
def fixture_dir(tmp_path_factory: pytest.TempPathFactory) -> Path:
    """The packaged data files, materialized once into a real directory."""
    from importlib.resources import as_file, files

    target = tmp_path_factory.mktemp("packaged-fixtures")
    with as_file(files("salad") / "fixtures") as source:
        for item in Path(source).iterdir():
            if item.is_file():
                shutil.copy(item, target / item.name)
    return target


@pytest.fixture
def sentiment_task():
    return task_for(TaskKind.SENTIMENT)


@pytest.fixture
def nli_task():
    return task_for(TaskKind.NLI)


def make_sentiment_dataset(texts_labels, name="unit", split=Split.TRAIN) -> Dataset:
    """Build a sentiment dataset from (text, label) pairs with stable ids."""
    task = task_for(TaskKind.SENTIMENT)
    examples = [
        LabeledExample(id=f"u{i:03d}", text_a=text, label=label)
        for i, (text, label) in enumerate(texts_labels)
    ]
    return Dataset(task=task, split=split, examples=examples, name=name)


def make_nli_dataset(rows, name="unit-nli", split=Split.TRAIN) -> Dataset:
    """Build an NLI dataset from (premise, hypothesis, label) triples."""
    task = task_for(TaskKind.NLI)
    examples = [
        LabeledExample(id=f"n{i:03d}", text_a=premise, text_b=hypothesis, label=label)
        for i, (premise, hypothesis, label) in enumerate(rows)
    ]
    return Dataset(task=task, split=split, examples=examples, name=name)


UNIT_LEXICON = {
    "the": UniversalTag.DET,
    "a": UniversalTag.DET,
    "this": UniversalTag.DET,
    "i": UniversalTag.PRON,
    "it": UniversalTag.PRON,
    "was": UniversalTag.VERB,
    "is": UniversalTag.VERB,
    "liked": UniversalTag.VERB,
    "hated": UniversalTag.VERB,
    "movie": UniversalTag.NOUN,
    "film": UniversalTag.NOUN,
    "plot": UniversalTag.NOUN,
    "dog": UniversalTag.NOUN,
    "park": UniversalTag.NOUN,
    "good": UniversalTag.ADJ,
    "bad": UniversalTag.ADJ,
    "great": UniversalTag.ADJ,
    "awful": UniversalTag.ADJ,
    "very": UniversalTag.ADV,
    "not": UniversalTag.ADV,
    "in": UniversalTag.ADP,
    "and": UniversalTag.CONJ,
    "to": UniversalTag.PRT,
    "two": UniversalTag.NUM,
}


@pytest.fixture
def unit_tagger() -> DictionaryTagger:
    return DictionaryTagger(UNIT_LEXICON)


@pytest.fixture
def adj_partition() -> TagSetPartition:
    """Adjectives (and verbs) causal, everything else non-causal."""
    causal = frozenset({UniversalTag.ADJ, UniversalTag.VERB})
    return TagSetPartition(
        causal=causal, noncausal=frozenset(ALL_TAGS) - causal, threshold=0.1
    )
