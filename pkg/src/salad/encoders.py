"""A small deterministic text encoder that trains in seconds on a CPU.

The heavy lifting in real runs belongs to a pretrained transformer; this
module provides the interface such a model must satisfy — encode a batch of
texts into (pooled representations, class logits) — together with a tiny
bag-of-words implementation good enough to demonstrate and test the whole
pipeline offline: embedding-bag mean pooling, a tanh projection, and a
linear classification head.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Protocol, Sequence

import torch
from torch import Tensor, nn

from salad.corpus import LabeledExample, tokenize
from salad.errors import ConfigError

UNK_TOKEN_ID = 0


class Encoder(Protocol):
    """Batch text encoder: texts in, (pooled representations, logits) out."""

    def encode(self, texts: Sequence[str]) -> tuple[Tensor, Tensor]: ...


@dataclass(frozen=True)
class Vocab:
    """Deterministic token-to-index map with a reserved unknown slot."""

    token_to_id: Mapping[str, int]
    unk_id: int = UNK_TOKEN_ID

    def __len__(self) -> int:
        return len(self.token_to_id)

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_id

    @classmethod
    def build(cls, token_streams: Iterable[Sequence[str]]) -> "Vocab":
        """Index 0 is the unknown token; the rest follow in sorted order."""
        seen: set[str] = set()
        for tokens in token_streams:
            seen.update(tokens)
        seen.discard("[unk]")
        mapping = {"[unk]": UNK_TOKEN_ID}
        for i, token in enumerate(sorted(seen), start=1):
            mapping[token] = i
        return cls(token_to_id=mapping)

    @classmethod
    def from_texts(cls, texts: Iterable[str]) -> "Vocab":
        return cls.build(tokenize(text) for text in texts)

    def encode(self, tokens: Sequence[str]) -> list[int]:
        return [self.token_to_id.get(token, self.unk_id) for token in tokens]

    def to_sorted_tokens(self) -> list[str]:
        return [token for token, _ in sorted(self.token_to_id.items(), key=lambda kv: kv[1])]

    @classmethod
    def from_sorted_tokens(cls, tokens: Sequence[str]) -> "Vocab":
        if not tokens or tokens[0] != "[unk]":
            raise ConfigError("serialized vocabulary must start with the unknown token")
        return cls(token_to_id={token: i for i, token in enumerate(tokens)})


class TinyTextEncoder(nn.Module):
    """Mean-pooled bag of embeddings -> tanh projection -> linear head.

    The tanh projection output is the pooled representation used for
    distance computations; the head maps it to class logits.  Construction
    is seeded through a forked RNG so building the same encoder twice gives
    identical initial weights without disturbing global torch state.
    """

    def __init__(
        self,
        vocab: Vocab,
        num_classes: int,
        embed_dim: int = 32,
        hidden_dim: int = 32,
        max_seq_len: int = 256,
        seed: int = 0,
    ) -> None:
        super().__init__()
        if num_classes < 2:
            raise ConfigError(f"num_classes must be >= 2, got {num_classes}")
        if min(embed_dim, hidden_dim, max_seq_len) < 1:
            raise ConfigError("embed_dim, hidden_dim and max_seq_len must be positive")
        self.vocab = vocab
        self.num_classes = num_classes
        self.embed_dim = embed_dim
        self.hidden_dim = hidden_dim
        self.max_seq_len = max_seq_len
        self.init_seed = seed
        with torch.random.fork_rng():
            torch.manual_seed(seed)
            self.embedding = nn.EmbeddingBag(len(vocab), embed_dim, mode="mean")
            self.proj = nn.Linear(embed_dim, hidden_dim)
            self.head = nn.Linear(hidden_dim, num_classes)

    def _to_bag(self, token_lists: Sequence[Sequence[str]]) -> tuple[Tensor, Tensor]:
        flat: list[int] = []
        offsets: list[int] = []
        for tokens in token_lists:
            offsets.append(len(flat))
            ids = self.vocab.encode(tokens[: self.max_seq_len])
            flat.extend(ids if ids else [self.vocab.unk_id])
        device = self.embedding.weight.device
        return (
            torch.tensor(flat, dtype=torch.long, device=device),
            torch.tensor(offsets, dtype=torch.long, device=device),
        )

    def encode_tokens(self, token_lists: Sequence[Sequence[str]]) -> tuple[Tensor, Tensor]:
        if not token_lists:
            raise ConfigError("cannot encode an empty batch")
        flat, offsets = self._to_bag(token_lists)
        pooled = torch.tanh(self.proj(self.embedding(flat, offsets)))
        logits = self.head(pooled)
        return pooled, logits

    def encode(self, texts: Sequence[str]) -> tuple[Tensor, Tensor]:
        return self.encode_tokens([tokenize(text) for text in texts])

    def encode_examples(self, examples: Sequence[LabeledExample]) -> tuple[Tensor, Tensor]:
        return self.encode_tokens([ex.tokens() for ex in examples])

    def predict_example(self, example: LabeledExample) -> int:
        with torch.no_grad():
            _, logits = self.encode_examples([example])
        return int(logits.argmax(dim=-1).item())

    def meta(self) -> dict[str, object]:
        """Everything needed to rebuild this architecture, JSON-friendly."""
        return {
            "vocab": self.vocab.to_sorted_tokens(),
            "num_classes": self.num_classes,
            "embed_dim": self.embed_dim,
            "hidden_dim": self.hidden_dim,
            "max_seq_len": self.max_seq_len,
        }

    @classmethod
    def from_meta(cls, meta: Mapping[str, object], seed: int = 0) -> "TinyTextEncoder":
        vocab = Vocab.from_sorted_tokens(list(meta["vocab"]))  # type: ignore[arg-type]
        return cls(
            vocab,
            num_classes=int(meta["num_classes"]),  # type: ignore[arg-type]
            embed_dim=int(meta["embed_dim"]),  # type: ignore[arg-type]
            hidden_dim=int(meta["hidden_dim"]),  # type: ignore[arg-type]
            max_seq_len=int(meta["max_seq_len"]),  # type: ignore[arg-type]
            seed=seed,
        )


@dataclass
class EncoderOracle:
    """Adapts a trained encoder to the predict-one-example oracle interface."""

    encoder: TinyTextEncoder

    def predict(self, example: LabeledExample) -> int:
        return self.encoder.predict_example(example)


@dataclass
class ScriptedOracle:
    """Table-driven oracle for tests and demos: text -> label, else default.

    Lookup is by the token tuple of the example, so surface differences in
    whitespace or casing do not matter.
    """

    table: Mapping[tuple[str, ...], int] = field(default_factory=dict)
    default: int = 0

    @classmethod
    def from_texts(cls, entries: Mapping[str, int], default: int = 0) -> "ScriptedOracle":
        return cls({tuple(tokenize(text)): label for text, label in entries.items()}, default)

    def predict(self, example: LabeledExample) -> int:
        return self.table.get(tuple(example.tokens()), self.default)
