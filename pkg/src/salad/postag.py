"""Universal POS tagging and per-tag token ablation.

Taggers are injectable: the deterministic DictionaryTagger keeps fixtures
reproducible across environments, while NltkTagger adapts a pretrained
statistical tagger when the optional nltk dependency is installed.  Any
backend tagset is mapped onto the 12-tag universal set, totally (unknown
backend tags fall through to X).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Mapping, Protocol, Sequence

from salad.corpus import LabeledExample, detokenize
from salad.errors import DatasetFormatError, TaggerError


class UniversalTag(Enum):
    VERB = "VERB"
    NOUN = "NOUN"
    PRON = "PRON"
    ADJ = "ADJ"
    ADV = "ADV"
    ADP = "ADP"
    CONJ = "CONJ"
    DET = "DET"
    NUM = "NUM"
    PRT = "PRT"
    X = "X"
    PUNCT = "PUNCT"  # the universal tagset spells this "."


ALL_TAGS: tuple[UniversalTag, ...] = tuple(UniversalTag)

# Sentinel fed to classifiers when ablation removes every token; encoders
# reject empty inputs but the ablated prediction is still needed.
EMPTY_SENTINEL = "[EMPTY]"


def is_empty_sentinel(text: str) -> bool:
    return text == EMPTY_SENTINEL


# Penn Treebank -> universal tag map.  Total by construction: anything not
# listed maps to X.
_PTB_MAP: dict[str, UniversalTag] = {
    "CC": UniversalTag.CONJ,
    "CD": UniversalTag.NUM,
    "DT": UniversalTag.DET,
    "EX": UniversalTag.DET,
    "FW": UniversalTag.X,
    "IN": UniversalTag.ADP,
    "JJ": UniversalTag.ADJ,
    "JJR": UniversalTag.ADJ,
    "JJS": UniversalTag.ADJ,
    "LS": UniversalTag.X,
    "MD": UniversalTag.VERB,
    "NN": UniversalTag.NOUN,
    "NNP": UniversalTag.NOUN,
    "NNPS": UniversalTag.NOUN,
    "NNS": UniversalTag.NOUN,
    "PDT": UniversalTag.DET,
    "POS": UniversalTag.PRT,
    "PRP": UniversalTag.PRON,
    "PRP$": UniversalTag.PRON,
    "RB": UniversalTag.ADV,
    "RBR": UniversalTag.ADV,
    "RBS": UniversalTag.ADV,
    "RP": UniversalTag.PRT,
    "SYM": UniversalTag.X,
    "TO": UniversalTag.PRT,
    "UH": UniversalTag.X,
    "VB": UniversalTag.VERB,
    "VBD": UniversalTag.VERB,
    "VBG": UniversalTag.VERB,
    "VBN": UniversalTag.VERB,
    "VBP": UniversalTag.VERB,
    "VBZ": UniversalTag.VERB,
    "WDT": UniversalTag.DET,
    "WP": UniversalTag.PRON,
    "WP$": UniversalTag.PRON,
    "WRB": UniversalTag.ADV,
}
_PTB_PUNCT = {"#", "$", "''", "``", "(", ")", ",", ".", ":", "!", "?", "-LRB-", "-RRB-", "HYPH", "NFP"}


def map_ptb_tag(ptb: str) -> UniversalTag:
    """Map a Penn Treebank tag onto the universal set (unknown -> X)."""
    if ptb in _PTB_PUNCT:
        return UniversalTag.PUNCT
    return _PTB_MAP.get(ptb, UniversalTag.X)


class Tagger(Protocol):
    def tag_tokens(self, tokens: Sequence[str]) -> list[UniversalTag]:
        """One universal tag per token, same order."""
        ...


_ADJ_SUFFIXES = ("ous", "ful", "ive", "ish", "able", "ible", "less", "ic", "al")
_PUNCT_CHARS = set("!\"#$%&'()*+,-./:;<=>?@[\\]^_`{|}~")


class DictionaryTagger:
    """Deterministic lexicon tagger for reproducible fixtures.

    Looks tokens up in a token -> universal-tag lexicon; unknown tokens get
    deterministic fallbacks (punctuation, numbers, a few derivational
    suffixes, then NOUN).  Safe for concurrent read-only use.
    """

    def __init__(self, lexicon: Mapping[str, UniversalTag] | None = None):
        self.lexicon = {k.lower(): v for k, v in (lexicon or {}).items()}

    @classmethod
    def from_tsv(cls, path: str | Path) -> "DictionaryTagger":
        """Load the fixture format: one "token<TAB>TAG" pair per line."""
        lexicon: dict[str, UniversalTag] = {}
        for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise DatasetFormatError(f"{path}: line {line_no} is not 'token<TAB>TAG'")
            token, tag_name = parts
            try:
                lexicon[token.lower()] = UniversalTag(tag_name.strip().upper())
            except ValueError:
                raise DatasetFormatError(
                    f"{path}: unknown tag {tag_name!r} at line {line_no}"
                ) from None
        return cls(lexicon)

    def tag_tokens(self, tokens: Sequence[str]) -> list[UniversalTag]:
        return [self._tag_one(tok) for tok in tokens]

    def _tag_one(self, token: str) -> UniversalTag:
        tok = token.lower()
        if tok in self.lexicon:
            return self.lexicon[tok]
        if tok and all(ch in _PUNCT_CHARS for ch in tok):
            return UniversalTag.PUNCT
        if tok.replace(".", "").replace(",", "").isdigit():
            return UniversalTag.NUM
        if tok.startswith("[") or tok.startswith("<"):
            return UniversalTag.X
        if tok.endswith("ly") and len(tok) > 3:
            return UniversalTag.ADV
        if (tok.endswith("ing") or tok.endswith("ed")) and len(tok) > 4:
            return UniversalTag.VERB
        if any(tok.endswith(suf) for suf in _ADJ_SUFFIXES) and len(tok) > 4:
            return UniversalTag.ADJ
        return UniversalTag.NOUN


class NltkTagger:
    """Adapter for NLTK's pretrained perceptron tagger.

    Requires the optional nltk extra plus its 'averaged_perceptron_tagger'
    data.  The underlying model is read-only at inference time, so a single
    instance can serve concurrent callers.
    """

    def __init__(self) -> None:
        try:
            from nltk.tag.perceptron import PerceptronTagger
        except ImportError as exc:
            raise TaggerError(
                "NltkTagger needs the optional dependency: pip install 'salad[nltk]'"
            ) from exc
        try:
            self._tagger = PerceptronTagger()
        except LookupError as exc:
            raise TaggerError(
                "nltk tagger data missing; run nltk.download('averaged_perceptron_tagger')"
            ) from exc

    def tag_tokens(self, tokens: Sequence[str]) -> list[UniversalTag]:
        if not tokens:
            return []
        return [map_ptb_tag(ptb) for _, ptb in self._tagger.tag(list(tokens))]


def default_dictionary_tagger() -> DictionaryTagger:
    """DictionaryTagger backed by the lexicon shipped with the package."""
    from importlib.resources import as_file, files

    with as_file(files("salad") / "fixtures" / "dictionary_tags.tsv") as path:
        return DictionaryTagger.from_tsv(path)


@dataclass
class TaggedExample:
    """An example and one universal tag per token (text_a then text_b order)."""

    example: LabeledExample
    tags: list[UniversalTag]

    def __post_init__(self) -> None:
        n_tokens = len(self.example.tokens())
        if len(self.tags) != n_tokens:
            raise TaggerError(
                f"example {self.example.id!r}: {len(self.tags)} tags for {n_tokens} tokens"
            )

    @property
    def tokens(self) -> list[str]:
        return self.example.tokens()

    @property
    def split_point(self) -> int | None:
        """Index where text_b tokens start, None for single-text tasks."""
        if self.example.text_b is None:
            return None
        return self.example.text_a_token_count()


def tag(example: LabeledExample, tagger: Tagger) -> TaggedExample:
    """Tag every token of an example with exactly one universal tag."""
    try:
        tags = tagger.tag_tokens(example.tokens())
    except TaggerError:
        raise
    except Exception as exc:
        raise TaggerError(f"tagger failed on example {example.id!r}: {exc}") from exc
    return TaggedExample(example=example, tags=tags)


def ablate_tag(tagged: TaggedExample, target: UniversalTag) -> LabeledExample:
    """Delete every token carrying `target`; survivors are space-joined.

    A side that loses all its tokens becomes the EMPTY_SENTINEL so the
    ablated example still has classifiable text.  Label and id are kept.
    """
    split = tagged.split_point
    kept_a: list[str] = []
    kept_b: list[str] = []
    for i, (tok, tok_tag) in enumerate(zip(tagged.tokens, tagged.tags)):
        if tok_tag is target:
            continue
        if split is not None and i >= split:
            kept_b.append(tok)
        else:
            kept_a.append(tok)
    ex = tagged.example
    text_a = detokenize(kept_a) if kept_a else EMPTY_SENTINEL
    text_b: str | None
    if ex.text_b is None:
        text_b = None
    else:
        text_b = detokenize(kept_b) if kept_b else EMPTY_SENTINEL
    return LabeledExample(
        id=ex.id, text_a=text_a, text_b=text_b, label=ex.label, id_assigned=ex.id_assigned
    )
