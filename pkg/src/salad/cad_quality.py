"""Quality metrics for counterfactual datasets.

Three views of how a generated corpus relates to the originals it was
edited from: how many token types are new (diversity), how much of each
original's vocabulary its counterfactual keeps (overlap), and how close the
pairs sit in an embedding space (similarity).  Low diversity plus high
overlap plus high similarity is the signature of minimal, targeted edits.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Protocol, Sequence, runtime_checkable

import numpy as np

from salad.corpus import Dataset, tokenize
from salad.errors import ConfigError
from salad.negatives import CounterfactualExample


@runtime_checkable
class SentenceEmbedder(Protocol):
    """Maps texts to fixed-width vectors; mode labels the similarity style.

    Implementations with contextual token matching may provide an optional
    pair_similarity(original, counterfactual) method, which takes precedence
    over plain cosine of the pooled vectors.
    """

    mode: str

    def embed(self, texts: Sequence[str]) -> np.ndarray: ...


class HashingSentenceEmbedder:
    """Offline pooled embedder: tokens hashed into a fixed-size count vector.

    Deterministic across processes (the hash is a digest, not Python's
    randomized hash), so identical texts always embed identically.
    """

    mode = "pooled"

    def __init__(self, dim: int = 512) -> None:
        if dim < 1:
            raise ConfigError(f"dim must be >= 1, got {dim}")
        self.dim = dim

    def _index(self, token: str) -> int:
        digest = hashlib.blake2s(token.encode("utf-8"), digest_size=8).digest()
        return int.from_bytes(digest, "big") % self.dim

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dim), dtype=np.float64)
        for row, text in enumerate(texts):
            for token in tokenize(text):
                out[row, self._index(token)] += 1.0
        return out


def _example_text(text: str, text_b: Optional[str]) -> str:
    return text if text_b is None else f"{text} {text_b}"


def _types(text: str) -> set[str]:
    return set(tokenize(text))


def diversity(train: Dataset, cad: Sequence[CounterfactualExample]) -> int:
    """Count of token types in the counterfactuals absent from all of train."""
    if len(train) == 0:
        raise ConfigError("diversity needs a non-empty training dataset")
    if not cad:
        raise ConfigError("diversity needs a non-empty counterfactual list")
    train_types: set[str] = set()
    for ex in train.examples:
        train_types.update(_types(_example_text(ex.text_a, ex.text_b)))
    cad_types: set[str] = set()
    for cf in cad:
        cad_types.update(_types(_example_text(cf.text, cf.text_b)))
    return len(cad_types - train_types)


@dataclass
class OverlapResult:
    pct: float
    per_pair: list[float]
    skipped: list[int] = field(default_factory=list)


def overlap_detailed(pairs: Sequence[tuple[str, str]]) -> OverlapResult:
    """Mean per-pair share of original token types kept by the counterfactual.

    Pairs whose original has zero tokens cannot be scored; their indices are
    reported in `skipped` rather than silently dropped.
    """
    if not pairs:
        raise ConfigError("overlap needs at least one pair")
    per_pair: list[float] = []
    skipped: list[int] = []
    for i, (original, counterfactual) in enumerate(pairs):
        original_types = _types(original)
        if not original_types:
            skipped.append(i)
            continue
        kept = original_types & _types(counterfactual)
        per_pair.append(100.0 * len(kept) / len(original_types))
    if not per_pair:
        raise ConfigError("every pair had a zero-token original")
    return OverlapResult(pct=sum(per_pair) / len(per_pair), per_pair=per_pair, skipped=skipped)


def overlap(pairs: Sequence[tuple[str, str]]) -> float:
    return overlap_detailed(pairs).pct


def _cosine(u: np.ndarray, v: np.ndarray) -> float:
    nu, nv = float(np.linalg.norm(u)), float(np.linalg.norm(v))
    if nu == 0.0 and nv == 0.0:
        return 1.0
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(np.dot(u, v) / (nu * nv))


@dataclass
class EmbedSimilarityResult:
    mean: float
    per_pair: list[float]
    errors: list[str] = field(default_factory=list)


def embed_similarity_detailed(
    pairs: Sequence[tuple[str, str]], embedder: SentenceEmbedder
) -> EmbedSimilarityResult:
    """Mean pairwise similarity; per-pair embedder failures are collected.

    When the embedder provides pair_similarity, that hook scores each pair;
    otherwise the score is the cosine of the two pooled vectors.
    """
    if not pairs:
        raise ConfigError("similarity needs at least one pair")
    per_pair: list[float] = []
    errors: list[str] = []
    hook = getattr(embedder, "pair_similarity", None)
    for i, (original, counterfactual) in enumerate(pairs):
        try:
            if callable(hook):
                score = float(hook(original, counterfactual))
            else:
                vectors = embedder.embed([original, counterfactual])
                score = _cosine(np.asarray(vectors[0]), np.asarray(vectors[1]))
        except Exception as exc:  # noqa: BLE001 - aggregated per pair
            errors.append(f"pair {i}: {exc}")
            continue
        per_pair.append(score)
    if not per_pair:
        raise ConfigError(f"embedder failed on every pair; first error: {errors[0]}")
    return EmbedSimilarityResult(
        mean=sum(per_pair) / len(per_pair), per_pair=per_pair, errors=errors
    )


def embed_similarity(pairs: Sequence[tuple[str, str]], embedder: SentenceEmbedder) -> float:
    return embed_similarity_detailed(pairs, embedder).mean


def make_pairs(
    train: Dataset, cad: Sequence[CounterfactualExample]
) -> list[tuple[str, str]]:
    """(original text, counterfactual text) joined on the source example id."""
    by_id = {ex.id: ex for ex in train.examples}
    pairs = []
    for cf in cad:
        source = by_id.get(cf.source_id)
        if source is None:
            raise ConfigError(f"counterfactual references unknown example {cf.source_id!r}")
        pairs.append(
            (
                _example_text(source.text_a, source.text_b),
                _example_text(cf.text, cf.text_b),
            )
        )
    return pairs


@dataclass
class CadQualityReport:
    diversity: int
    overlap_pct: float
    embed_sim: float
    pair_count: int
    mode: str
    overlap_skipped: list[int] = field(default_factory=list)
    embed_errors: list[str] = field(default_factory=list)
    per_pair: Optional[list[dict[str, float]]] = None

    def to_dict(self) -> dict[str, object]:
        record: dict[str, object] = {
            "diversity": self.diversity,
            "overlap_pct": self.overlap_pct,
            "embed_sim": self.embed_sim,
            "pair_count": self.pair_count,
            "mode": self.mode,
        }
        if self.overlap_skipped:
            record["overlap_skipped"] = self.overlap_skipped
        if self.embed_errors:
            record["embed_errors"] = self.embed_errors
        if self.per_pair is not None:
            record["per_pair"] = self.per_pair
        return record

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(
            json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )


def cad_quality_report(
    train: Dataset,
    cad: Sequence[CounterfactualExample],
    embedder: Optional[SentenceEmbedder] = None,
    keep_per_pair: bool = False,
) -> CadQualityReport:
    """All three metrics over one train/counterfactual corpus pairing."""
    embedder = embedder or HashingSentenceEmbedder()
    pairs = make_pairs(train, cad)
    overlap_result = overlap_detailed(pairs)
    similarity_result = embed_similarity_detailed(pairs, embedder)
    per_pair = None
    if keep_per_pair and len(overlap_result.per_pair) == len(similarity_result.per_pair):
        per_pair = [
            {"overlap_pct": o, "embed_sim": s}
            for o, s in zip(overlap_result.per_pair, similarity_result.per_pair)
        ]
    return CadQualityReport(
        diversity=diversity(train, cad),
        overlap_pct=overlap_result.pct,
        embed_sim=similarity_result.mean,
        pair_count=len(pairs),
        mode=embedder.mode,
        overlap_skipped=overlap_result.skipped,
        embed_errors=similarity_result.errors,
        per_pair=per_pair,
    )
