"""Canonical dataset model, task definitions, and JSONL I/O.

Every pipeline stage (tag discovery, masking, counterfactual generation,
training, evaluation, quality metrics) works on the types defined here, and
all of them share the same word tokenizer so corpus statistics stay
internally consistent.
"""

from __future__ import annotations

import hashlib
import json
import random
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterator, Optional, Sequence

from salad.errors import ConfigError, DatasetFormatError


class TaskKind(Enum):
    SENTIMENT = "sentiment"
    SEXISM = "sexism"
    NLI = "nli"


# Label order is part of the contract: label indices are stable across runs.
LABEL_SETS: dict[TaskKind, tuple[str, ...]] = {
    TaskKind.SENTIMENT: ("negative", "positive"),
    TaskKind.SEXISM: ("non-sexist", "sexist"),
    TaskKind.NLI: ("entailment", "neutral", "contradiction"),
}


@dataclass(frozen=True)
class Task:
    """A classification task together with its ordered label set."""

    kind: TaskKind
    label_set: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        expected = LABEL_SETS[self.kind]
        if not self.label_set:
            object.__setattr__(self, "label_set", expected)
        elif tuple(s.lower() for s in self.label_set) != expected:
            raise ConfigError(
                f"label set for {self.kind.value} must be {list(expected)}, "
                f"got {list(self.label_set)}"
            )
        lowered = [s.lower() for s in self.label_set]
        if len(set(lowered)) != len(lowered):
            raise ConfigError(f"label names must be case-insensitively unique: {self.label_set}")

    @property
    def is_pair_task(self) -> bool:
        return self.kind is TaskKind.NLI

    def label_index(self, name: str) -> int:
        """Case-insensitive lookup of a label name. Raises KeyError if unknown."""
        lowered = name.strip().lower()
        for i, label in enumerate(self.label_set):
            if label.lower() == lowered:
                return i
        raise KeyError(name)

    def label_name(self, index: int) -> str:
        return self.label_set[index]


def task_for(kind: str | TaskKind) -> Task:
    """Build the canonical Task for a kind given by enum or name ("sentiment", ...)."""
    if isinstance(kind, str):
        kind = TaskKind(kind.lower())
    return Task(kind)


class Split(Enum):
    TRAIN = "train"
    VALIDATION = "validation"
    O_TEST = "o_test"
    CF_TEST = "cf_test"
    ODD = "odd"
    CROSS_DOMAIN = "cross_domain"


# Word tokenizer used everywhere: lowercase, punctuation split off, common
# clitics ('s, 't, ...) kept as single tokens.  Bracketed placeholders such
# as "[UNK]" or "<unk>" stay single tokens so masked sentences keep the same
# token count as their source.
_TOKEN_RE = re.compile(
    r"\[[a-z0-9_]+\]"  # [unk], [empty], ...
    r"|<[a-z0-9_]+>"
    r"|'(?:s|t|re|ve|m|ll|d)\b"
    r"|\w+"
    r"|[^\w\s]"
)


def tokenize(text: str) -> list[str]:
    """Deterministic lowercased word tokens with punctuation split off."""
    return _TOKEN_RE.findall(text.lower())


def detokenize(tokens: Sequence[str]) -> str:
    """Inverse-ish of tokenize: plain single-space join (whitespace is not restored)."""
    return " ".join(tokens)


@dataclass
class LabeledExample:
    """One classification example; text_b is the hypothesis for pair tasks."""

    id: str
    text_a: str
    label: int
    text_b: Optional[str] = None
    id_assigned: bool = False
    _tokens: Optional[list[str]] = field(default=None, repr=False, compare=False)

    def tokens(self) -> list[str]:
        """Cached tokens of text_a followed by text_b (concatenation order)."""
        if self._tokens is None:
            toks = tokenize(self.text_a)
            if self.text_b is not None:
                toks += tokenize(self.text_b)
            self._tokens = toks
        return self._tokens

    def text_a_token_count(self) -> int:
        return len(tokenize(self.text_a))


def _content_id(line_no: int, text_a: str, text_b: Optional[str]) -> str:
    digest = hashlib.sha1(f"{text_a}\x1f{text_b or ''}".encode("utf-8")).hexdigest()
    return f"ex{line_no:04d}-{digest[:8]}"


@dataclass
class Dataset:
    """An ordered, task-homogeneous collection of examples."""

    task: Task
    split: Split
    examples: list[LabeledExample]
    name: str = ""

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for ex in self.examples:
            if ex.id in seen:
                raise DatasetFormatError(f"duplicate example id {ex.id!r} in dataset {self.name!r}")
            seen.add(ex.id)
            self._check_example(ex)

    def _check_example(self, ex: LabeledExample) -> None:
        if not ex.text_a.strip():
            raise DatasetFormatError(f"example {ex.id!r}: text is empty")
        if self.task.is_pair_task and ex.text_b is None:
            raise DatasetFormatError(f"example {ex.id!r}: pair task requires text_b")
        if not self.task.is_pair_task and ex.text_b is not None:
            raise DatasetFormatError(f"example {ex.id!r}: text_b only allowed for NLI")
        if not 0 <= ex.label < len(self.task.label_set):
            raise DatasetFormatError(f"example {ex.id!r}: label index {ex.label} out of range")

    def __len__(self) -> int:
        return len(self.examples)

    def __iter__(self) -> Iterator[LabeledExample]:
        return iter(self.examples)

    def by_id(self) -> dict[str, LabeledExample]:
        return {ex.id: ex for ex in self.examples}


def load_dataset(path: str | Path, task: Task, split: Split, name: str = "") -> Dataset:
    """Load the documented JSONL format: {"id"?, "text", "text_b"?, "label"}.

    Missing ids get stable generated ones (line number + content hash) so
    downstream caches keyed by id survive re-runs.  Errors name the
    offending 1-based line.
    """
    path = Path(path)
    examples: list[LabeledExample] = []
    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetFormatError(f"{path.name}: malformed JSON at line {line_no}: {exc}") from exc
            if not isinstance(record, dict) or "text" not in record or "label" not in record:
                raise DatasetFormatError(
                    f"{path.name}: line {line_no} must be an object with 'text' and 'label'"
                )
            text = record["text"]
            text_b = record.get("text_b")
            if task.is_pair_task and text_b is None:
                raise DatasetFormatError(f"{path.name}: missing text_b at line {line_no}")
            try:
                label = task.label_index(str(record["label"]))
            except KeyError:
                raise DatasetFormatError(
                    f"{path.name}: unknown label {record['label']!r} at line {line_no}"
                ) from None
            raw_id = record.get("id")
            examples.append(
                LabeledExample(
                    id=str(raw_id) if raw_id is not None else _content_id(line_no, text, text_b),
                    text_a=str(text),
                    text_b=str(text_b) if text_b is not None else None,
                    label=label,
                    id_assigned=raw_id is None,
                )
            )
    return Dataset(task=task, split=split, examples=examples, name=name or path.stem)


def save_dataset(ds: Dataset, path: str | Path) -> None:
    """Write the dataset back in the JSONL input format.

    Generated ids are omitted so load -> save round-trips an id-less input
    file to the same records (up to JSON field ordering).
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for ex in ds.examples:
            record: dict[str, object] = {}
            if not ex.id_assigned:
                record["id"] = ex.id
            record["text"] = ex.text_a
            if ex.text_b is not None:
                record["text_b"] = ex.text_b
            record["label"] = ds.task.label_name(ex.label)
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def split_train_val(ds: Dataset, val_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Deterministic disjoint train/validation partition.

    The validation size is val_fraction rounded to the nearest integer
    (halves away from zero), clamped to [1, n - 1] so both parts are
    non-empty.  Each part preserves the input example order.
    """
    if not 0.0 < val_fraction < 1.0:
        raise ConfigError(f"val_fraction must be in (0, 1), got {val_fraction}")
    if ds.split is not Split.TRAIN:
        raise ConfigError(f"can only split a TRAIN dataset, got {ds.split.value}")
    n = len(ds.examples)
    if n < 2:
        raise ConfigError("need at least 2 examples to split")
    n_val = int(n * val_fraction + 0.5)
    n_val = min(max(n_val, 1), n - 1)
    indices = list(range(n))
    random.Random(seed).shuffle(indices)
    val_idx = set(indices[:n_val])
    train_examples = [ex for i, ex in enumerate(ds.examples) if i not in val_idx]
    val_examples = [ex for i, ex in enumerate(ds.examples) if i in val_idx]
    train = Dataset(ds.task, Split.TRAIN, train_examples, name=f"{ds.name}-train")
    val = Dataset(ds.task, Split.VALIDATION, val_examples, name=f"{ds.name}-val")
    return train, val
