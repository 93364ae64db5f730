"""Counterfactual negatives: label-flipped rewrites produced by an LLM.

Four instruction styles of increasing guidance are supported; the strongest
one hands the model the sentence's causal words and asks it to edit only
those.  Responses are cached on disk keyed by example and sampling settings,
requests retry with exponential backoff, and a bounded thread pool keeps
batch generation order-stable.  A deterministic offline stub client that
flips words through an antonym table stands in for the API in tests.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Callable, Mapping, Optional, Protocol, Sequence

import requests

from salad.corpus import Dataset, LabeledExample, Task, TaskKind
from salad.discovery import TagSetPartition
from salad.errors import ConfigError, DatasetFormatError, GenerationError
from salad.postag import TaggedExample, Tagger, tag

API_KEY_VAR = "SALAD_API_KEY"
API_BASE_VAR = "SALAD_API_BASE"
DEFAULT_API_BASE = "https://api.openai.com/v1"

_TASK_PHRASES = {
    TaskKind.SENTIMENT: "sentiment analysis",
    TaskKind.SEXISM: "sexism classification",
    TaskKind.NLI: "natural language inference",
}


class InstructionId(Enum):
    """Prompt styles, from bare flip request to causal-word-guided edit."""

    I1 = "I1"
    I2 = "I2"
    I3 = "I3"
    I4 = "I4"


class Provenance(Enum):
    LLM = "llm"
    STUB = "stub"
    HUMAN = "human"


def flip_map(task: Task, source_label: int) -> Optional[int]:
    """Target label for a counterfactual, or None when no flip is defined.

    Two-class tasks flip to the other class.  Three-way inference flips
    entailment and contradiction into each other; neutral pairs have no
    natural opposite and are skipped.
    """
    task.label_name(source_label)  # bounds check
    if task.kind is TaskKind.NLI:
        name = task.label_name(source_label)
        if name == "neutral":
            return None
        return task.label_index("contradiction" if name == "entailment" else "entailment")
    return 1 - source_label


@dataclass(frozen=True)
class PromptTemplate:
    instruction_id: InstructionId
    task: Task
    source_label: int
    target_label: int

    def __post_init__(self) -> None:
        expected = flip_map(self.task, self.source_label)
        if expected is None:
            raise ConfigError(
                f"label {self.task.label_name(self.source_label)!r} has no flip target"
            )
        if self.target_label != expected:
            raise ConfigError(
                f"target label must be {self.task.label_name(expected)!r} for source "
                f"{self.task.label_name(self.source_label)!r}, got "
                f"{self.task.label_name(self.target_label)!r}"
            )

    @property
    def wants_causal_words(self) -> bool:
        return self.instruction_id is InstructionId.I4


def render_prompt(
    template: PromptTemplate,
    example: LabeledExample,
    causal_words: Sequence[str] = (),
) -> str:
    """Fill an instruction template for one example.

    Pair inputs embed both sides but instruct the model to edit only the
    hypothesis; the reply contract is always "output the rewritten text and
    nothing else" so responses need no chat-frame stripping.
    """
    task, iid = template.task, template.instruction_id
    source = task.label_name(template.source_label)
    target = task.label_name(template.target_label)
    phrase = _TASK_PHRASES[task.kind]
    if iid is InstructionId.I4 and not causal_words:
        raise ConfigError("causal-word instruction requires a non-empty causal word list")

    if task.kind is TaskKind.NLI:
        unit = "hypothesis"
        body = f"Premise: {example.text_a}\nHypothesis: {example.text_b}"
        preamble = (
            f"The following premise and hypothesis are a {source} pair in {phrase}."
        )
        if iid is InstructionId.I1:
            instruction = f"Please rewrite the hypothesis to make the pair {target}."
            preamble = f"Here is a premise and hypothesis pair in {phrase}."
        elif iid is InstructionId.I2:
            instruction = f"Please rewrite the hypothesis to make the pair {target}."
        elif iid is InstructionId.I3:
            instruction = (
                f"Just change a few words in the hypothesis to make the pair {target} "
                "while preserving the original text as much as possible."
            )
        else:
            instruction = (
                f"Just change a few words among causal words in the hypothesis to make "
                f"the pair {target} while preserving the original text as much as "
                f"possible. Causal Words: {', '.join(causal_words)}"
            )
        tail = f"Answer with the rewritten {unit} only."
    else:
        body = f"Sentence: {example.text_a}"
        preamble = f"The following sentence is a {source} sentence in {phrase}."
        if iid is InstructionId.I1:
            preamble = f"Here is a sentence from a {phrase} dataset."
            instruction = f"Please make it a {target} sentence."
        elif iid is InstructionId.I2:
            instruction = f"Please make it a {target} sentence."
        elif iid is InstructionId.I3:
            instruction = (
                f"Just change a few words to make it a {target} sentence while "
                "preserving the original text as much as possible."
            )
        else:
            instruction = (
                f"Just change a few words among causal words in the sentence to make "
                f"it a {target} sentence while preserving the original text as much "
                f"as possible. Causal Words: {', '.join(causal_words)}"
            )
        tail = "Answer with the rewritten sentence only."
    return f"{preamble} {instruction}\n{body}\n{tail}"


def extract_causal_words(tagged: TaggedExample, partition: TagSetPartition) -> list[str]:
    """Tokens carrying a causal tag, original order, first occurrence kept."""
    seen: set[str] = set()
    words = []
    for token, t in zip(tagged.tokens, tagged.tags):
        if t in partition.causal and token not in seen:
            seen.add(token)
            words.append(token)
    return words


@dataclass
class GenerationConfig:
    model_name: str = "gpt-4o-mini"
    temperature: float = 0.1
    top_p: float = 1.0
    max_retries: int = 3
    backoff_base_s: float = 1.0
    timeout_s: float = 60.0
    concurrency_limit: int = 4
    failure_ceiling: float = 0.0
    cache_dir: Optional[Path] = None

    def __post_init__(self) -> None:
        if not self.model_name:
            raise ConfigError("model_name must be non-empty")
        if not 0.0 <= self.temperature <= 2.0:
            raise ConfigError(f"temperature must be in [0, 2], got {self.temperature}")
        if not 0.0 < self.top_p <= 1.0:
            raise ConfigError(f"top_p must be in (0, 1], got {self.top_p}")
        if self.max_retries < 0:
            raise ConfigError(f"max_retries must be >= 0, got {self.max_retries}")
        if self.concurrency_limit < 1:
            raise ConfigError(f"concurrency_limit must be >= 1, got {self.concurrency_limit}")
        if not 0.0 <= self.failure_ceiling <= 1.0:
            raise ConfigError(f"failure_ceiling must be in [0, 1], got {self.failure_ceiling}")
        if self.cache_dir is not None:
            self.cache_dir = Path(self.cache_dir)


class CompletionClient(Protocol):
    """Anything that turns a prompt into a completion string."""

    provenance: Provenance

    def complete(self, prompt: str, cfg: GenerationConfig) -> str: ...


class HttpCompletionClient:
    """Chat-completions client; credentials come from the environment.

    Reads the API key from SALAD_API_KEY and the base URL from
    SALAD_API_BASE (both overridable in the constructor) and POSTs
    OpenAI-style JSON to {base}/chat/completions.
    """

    provenance = Provenance.LLM

    def __init__(
        self,
        api_base: Optional[str] = None,
        api_key: Optional[str] = None,
        session: Optional[requests.Session] = None,
    ) -> None:
        self.api_base = (api_base or os.environ.get(API_BASE_VAR, DEFAULT_API_BASE)).rstrip("/")
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_VAR, "")
        if not self.api_key:
            raise ConfigError(f"no API key: set {API_KEY_VAR} or pass api_key")
        self._session = session or requests.Session()

    def complete(self, prompt: str, cfg: GenerationConfig) -> str:
        payload = {
            "model": cfg.model_name,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": cfg.temperature,
            "top_p": cfg.top_p,
        }
        response = self._session.post(
            f"{self.api_base}/chat/completions",
            json=payload,
            headers={"Authorization": f"Bearer {self.api_key}"},
            timeout=cfg.timeout_s,
        )
        response.raise_for_status()
        body = response.json()
        try:
            return body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise GenerationError(f"malformed completion response: {body!r}") from exc


_WORD_CORE_RE = re.compile(r"^(\W*)([\w'-]*)(\W*)$", re.UNICODE)


class StubCompletionClient:
    """Deterministic offline stand-in that flips words via an antonym table.

    The stub reads the sentence (or hypothesis) back out of the rendered
    prompt, swaps each word that has a table entry, and echoes the result.
    When the prompt carries a causal-word list, only listed words may flip —
    mirroring how the guided instruction constrains a real model.
    """

    provenance = Provenance.STUB

    def __init__(self, antonyms: Mapping[str, str]) -> None:
        table = {k.lower(): v.lower() for k, v in antonyms.items()}
        for word, opposite in list(table.items()):
            table.setdefault(opposite, word)
        self.antonyms = table

    @classmethod
    def from_tsv(cls, path: str | Path) -> "StubCompletionClient":
        table: dict[str, str] = {}
        for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[0] or not parts[1]:
                raise DatasetFormatError(f"expected 'word<TAB>opposite' at line {line_no}")
            table[parts[0]] = parts[1]
        return cls(table)

    @staticmethod
    def _field(prompt: str, label: str) -> Optional[str]:
        for line in prompt.splitlines():
            if line.startswith(label):
                return line[len(label):].strip()
        return None

    def _flip_word(self, chunk: str, allowed: Optional[set[str]]) -> str:
        match = _WORD_CORE_RE.match(chunk)
        if not match:
            return chunk
        head, core, tail = match.groups()
        key = core.lower()
        if not core or key not in self.antonyms:
            return chunk
        if allowed is not None and key not in allowed:
            return chunk
        flipped = self.antonyms[key]
        if core[0].isupper():
            flipped = flipped[0].upper() + flipped[1:]
        return f"{head}{flipped}{tail}"

    def complete(self, prompt: str, cfg: GenerationConfig) -> str:
        text = self._field(prompt, "Hypothesis:")
        if text is None:
            text = self._field(prompt, "Sentence:")
        if text is None:
            raise GenerationError("stub client found no sentence in the prompt")
        causal_line = self._field(prompt, "Causal Words:")
        allowed = None
        if causal_line is None:
            for line in prompt.splitlines():
                if "Causal Words:" in line:
                    causal_line = line.split("Causal Words:", 1)[1].strip()
                    break
        if causal_line is not None:
            allowed = {w.strip().lower() for w in causal_line.split(",") if w.strip()}
        return " ".join(self._flip_word(chunk, allowed) for chunk in text.split(" "))


class ResponseCache:
    """One JSON file per request, named by a content hash of the request key.

    Writes go to a temp file in the same directory and are renamed into
    place, so a crashed run never leaves a truncated cache entry behind.
    """

    def __init__(self, cache_dir: str | Path) -> None:
        self.cache_dir = Path(cache_dir)
        self.cache_dir.mkdir(parents=True, exist_ok=True)

    @staticmethod
    def key(example_id: str, instruction_id: InstructionId, cfg: GenerationConfig) -> str:
        payload = json.dumps(
            {
                "example_id": example_id,
                "instruction_id": instruction_id.value,
                "model_name": cfg.model_name,
                "temperature": cfg.temperature,
                "top_p": cfg.top_p,
            },
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    def _path(self, key: str) -> Path:
        return self.cache_dir / f"{key}.json"

    def get(self, key: str) -> Optional[str]:
        path = self._path(key)
        if not path.exists():
            return None
        try:
            record = json.loads(path.read_text(encoding="utf-8"))
            return record["response"]
        except (json.JSONDecodeError, KeyError):
            return None

    def put(self, key: str, prompt: str, response: str) -> None:
        record = {
            "key": key,
            "prompt": prompt,
            "response": response,
            "created_at": datetime.now(timezone.utc).isoformat(),
        }
        fd, tmp_name = tempfile.mkstemp(dir=self.cache_dir, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                json.dump(record, fh, ensure_ascii=False)
            os.replace(tmp_name, self._path(key))
        except BaseException:
            if os.path.exists(tmp_name):
                os.unlink(tmp_name)
            raise


@dataclass
class CounterfactualExample:
    source_id: str
    text: str
    label: int
    instruction_id: InstructionId
    provenance: Provenance
    text_b: Optional[str] = None
    response_sha256: str = ""


@dataclass
class SkipRecord:
    source_id: str
    reason: str


@dataclass
class GenerationReport:
    negatives: list[CounterfactualExample]
    skips: list[SkipRecord] = field(default_factory=list)
    cache_hits: int = 0
    cache_misses: int = 0


def _clean_response(raw: str) -> str:
    text = raw.strip()
    for prefix in ("Sentence:", "Hypothesis:", "Rewritten sentence:", "Output:", "Answer:"):
        if text.startswith(prefix):
            text = text[len(prefix):].strip()
    if len(text) >= 2 and text[0] == text[-1] and text[0] in {'"', "'"}:
        inner = text[1:-1]
        if '"' not in inner and "'" not in inner:
            text = inner.strip()
    return text


def generate_negative(
    example: LabeledExample,
    template: PromptTemplate,
    cfg: GenerationConfig,
    client: CompletionClient,
    causal_words: Sequence[str] = (),
    cache: Optional[ResponseCache] = None,
    sleep: Callable[[float], None] = time.sleep,
) -> CounterfactualExample:
    """One label-flipped rewrite for one example, with cache and retries.

    Cache hits skip the client entirely.  Transient client failures retry
    up to max_retries times with exponential backoff; an empty completion
    after cleanup is an error, never a silent empty negative.
    """
    prompt = render_prompt(template, example, causal_words)
    key = ResponseCache.key(example.id, template.instruction_id, cfg)
    raw: Optional[str] = None
    if cache is not None:
        raw = cache.get(key)
    if raw is None:
        last_error: Optional[Exception] = None
        for attempt in range(cfg.max_retries + 1):
            try:
                raw = client.complete(prompt, cfg)
                break
            except Exception as exc:  # noqa: BLE001 - client errors are opaque
                last_error = exc
                if attempt < cfg.max_retries:
                    sleep(cfg.backoff_base_s * (2**attempt))
        if raw is None:
            raise GenerationError(
                f"generation failed for {example.id} after {cfg.max_retries + 1} attempts: "
                f"{last_error}"
            ) from last_error
        if cache is not None:
            cache.put(key, prompt, raw)
    text = _clean_response(raw)
    if not text:
        raise GenerationError(f"empty completion for {example.id}")
    digest = hashlib.sha256(raw.encode("utf-8")).hexdigest()
    if template.task.is_pair_task:
        return CounterfactualExample(
            source_id=example.id,
            text=example.text_a,
            text_b=text,
            label=template.target_label,
            instruction_id=template.instruction_id,
            provenance=client.provenance,
            response_sha256=digest,
        )
    return CounterfactualExample(
        source_id=example.id,
        text=text,
        label=template.target_label,
        instruction_id=template.instruction_id,
        provenance=client.provenance,
        response_sha256=digest,
    )


def generate_negatives(
    train: Dataset,
    partition: TagSetPartition,
    instruction: InstructionId,
    cfg: GenerationConfig,
    client: CompletionClient,
    tagger: Optional[Tagger] = None,
    sleep: Callable[[float], None] = time.sleep,
) -> GenerationReport:
    """Counterfactuals for a whole dataset, order-preserving and bounded.

    Examples whose label has no flip target are recorded as skips, not
    errors.  Per-example failures become skips too, unless the failure rate
    exceeds cfg.failure_ceiling, which aborts the batch.  Work runs on a
    thread pool of at most cfg.concurrency_limit workers; results come back
    in input order regardless of completion order.
    """
    if instruction is InstructionId.I4 and tagger is None:
        raise ConfigError("causal-word instruction requires a tagger")
    cache = ResponseCache(cfg.cache_dir) if cfg.cache_dir is not None else None
    task = train.task

    eligible: list[tuple[LabeledExample, PromptTemplate, list[str]]] = []
    skips: list[SkipRecord] = []
    for ex in train.examples:
        target = flip_map(task, ex.label)
        if target is None:
            skips.append(
                SkipRecord(ex.id, f"no flip target for label {task.label_name(ex.label)!r}")
            )
            continue
        template = PromptTemplate(instruction, task, ex.label, target)
        words: list[str] = []
        if template.wants_causal_words:
            assert tagger is not None
            words = extract_causal_words(tag(ex, tagger), partition)
            if not words:
                skips.append(SkipRecord(ex.id, "no causal words found"))
                continue
        eligible.append((ex, template, words))

    results: list[Optional[CounterfactualExample]] = [None] * len(eligible)
    failures: list[tuple[LabeledExample, Exception]] = []
    hit_flags: list[bool] = [False] * len(eligible)

    def _work(index: int) -> CounterfactualExample:
        ex, template, words = eligible[index]
        if cache is not None:
            key = ResponseCache.key(ex.id, template.instruction_id, cfg)
            hit_flags[index] = cache.get(key) is not None
        return generate_negative(
            ex, template, cfg, client, causal_words=words, cache=cache, sleep=sleep
        )

    with ThreadPoolExecutor(max_workers=cfg.concurrency_limit) as pool:
        futures = {pool.submit(_work, i): i for i in range(len(eligible))}
        for future, index in futures.items():
            try:
                results[index] = future.result()
            except Exception as exc:  # noqa: BLE001 - collected for the ceiling check
                failures.append((eligible[index][0], exc))
    hits = sum(hit_flags)
    misses = len(eligible) - hits

    if eligible and len(failures) / len(eligible) > cfg.failure_ceiling:
        raise GenerationError(
            f"{len(failures)}/{len(eligible)} generations failed, exceeding the "
            f"allowed failure rate {cfg.failure_ceiling}: {failures[0][1]}"
        )
    for ex, exc in failures:
        skips.append(SkipRecord(ex.id, f"generation failed: {exc}"))
    negatives = [cf for cf in results if cf is not None]
    return GenerationReport(negatives=negatives, skips=skips, cache_hits=hits, cache_misses=misses)


def save_negatives(
    negatives: Sequence[CounterfactualExample], task: Task, path: str | Path
) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for neg in negatives:
            record: dict[str, object] = {"source_id": neg.source_id, "text": neg.text}
            if neg.text_b is not None:
                record["text_b"] = neg.text_b
            record.update(
                {
                    "label": task.label_name(neg.label),
                    "instruction_id": neg.instruction_id.value,
                    "provenance": neg.provenance.value,
                }
            )
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def load_negatives(path: str | Path, task: Task) -> list[CounterfactualExample]:
    negatives = []
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DatasetFormatError(f"malformed JSON at line {line_no}") from exc
        try:
            negatives.append(
                CounterfactualExample(
                    source_id=rec["source_id"],
                    text=rec["text"],
                    text_b=rec.get("text_b"),
                    label=task.label_index(rec["label"]),
                    instruction_id=InstructionId(rec["instruction_id"]),
                    provenance=Provenance(rec["provenance"]),
                )
            )
        except (KeyError, ValueError) as exc:
            raise DatasetFormatError(f"bad counterfactual record at line {line_no}: {exc}") from exc
    return negatives


def save_skips(skips: Sequence[SkipRecord], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for skip in skips:
            fh.write(json.dumps({"source_id": skip.source_id, "reason": skip.reason}) + "\n")
