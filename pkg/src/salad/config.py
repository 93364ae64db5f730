"""Run configuration: one YAML file drives every pipeline stage.

The file is the source of truth; command-line flags override individual
keys.  Every stage writes a manifest carrying a hash of the merged config
(location-independent: the output directory is excluded), which downstream
stages compare against their own hash to detect stale upstream artifacts.

Relative paths inside the file resolve against the file's own directory, so
a config can ship next to its data.  The output directory resolves against
the working directory instead, since it names a destination, not an input.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional, Sequence

import yaml

from salad.corpus import Task, TaskKind, task_for
from salad.errors import ConfigError
from salad.losses import LossConfig
from salad.negatives import GenerationConfig, InstructionId
from salad.positives import PositiveGenConfig
from salad.training import TrainingConfig

_KNOWN_TOP_KEYS = {
    "task",
    "run_name",
    "paths",
    "tagger",
    "dictionary",
    "val_fraction",
    "discovery",
    "positives",
    "negatives",
    "loss",
    "training",
    "encoder",
    "output_dir",
}

MANIFEST_NAME = "manifest.json"


def parse_instruction(value: object) -> InstructionId:
    if isinstance(value, InstructionId):
        return value
    if isinstance(value, int):
        value = f"I{value}"
    if isinstance(value, str):
        text = value.strip().upper()
        if not text.startswith("I"):
            text = f"I{text}"
        try:
            return InstructionId(text)
        except ValueError:
            pass
    raise ConfigError(f"unknown instruction id {value!r}; expected 1-4 or I1-I4")


@dataclass
class DiscoveryConfig:
    threshold: float = 0.01
    oracle_epochs: int = 40
    oracle_lr: float = 0.1
    oracle_seed: int = 0
    oracle_checkpoint: Optional[Path] = None
    oracle_meta: Optional[Path] = None

    def __post_init__(self) -> None:
        if self.threshold < 0:
            raise ConfigError(f"threshold must be >= 0, got {self.threshold}")
        if self.oracle_epochs < 1:
            raise ConfigError(f"oracle_epochs must be >= 1, got {self.oracle_epochs}")
        if self.oracle_lr <= 0:
            raise ConfigError(f"oracle_lr must be > 0, got {self.oracle_lr}")


@dataclass
class EncoderConfig:
    embed_dim: int = 32
    hidden_dim: int = 32

    def __post_init__(self) -> None:
        if min(self.embed_dim, self.hidden_dim) < 1:
            raise ConfigError("embed_dim and hidden_dim must be positive")


@dataclass
class RunConfig:
    task: Task
    run_name: str
    train_path: Path
    val_path: Optional[Path]
    test_paths: dict[str, Path]
    tagger_kind: str
    dictionary_path: Optional[Path]
    val_fraction: float
    discovery: DiscoveryConfig
    positives: PositiveGenConfig
    instruction: InstructionId
    client_kind: str
    antonyms_path: Optional[Path]
    generation: GenerationConfig
    loss: LossConfig
    training: TrainingConfig
    negatives_in_ce: bool
    encoder: EncoderConfig
    output_dir: Path
    config_hash: str
    merged: dict[str, Any] = field(repr=False, default_factory=dict)

    def stage_dir(self, stage: str) -> Path:
        return self.output_dir / stage


def _deep_merge(base: dict[str, Any], overrides: Mapping[str, Any]) -> dict[str, Any]:
    """Apply dotted-key overrides ("loss.lambda") onto a nested dict copy."""
    merged = json.loads(json.dumps(base))
    for dotted, value in overrides.items():
        node = merged
        parts = dotted.split(".")
        for part in parts[:-1]:
            child = node.get(part)
            if not isinstance(child, dict):
                child = {}
                node[part] = child
            node = child
        node[parts[-1]] = value
    return merged


def _pick(section: Mapping[str, Any], mapping: Mapping[str, str]) -> dict[str, Any]:
    """Select present keys, renaming config keys to dataclass field names."""
    return {attr: section[key] for key, attr in mapping.items() if section.get(key) is not None}


def config_hash_of(merged: Mapping[str, Any]) -> str:
    """Hash of the semantic config: everything except where outputs land."""
    hashable = {k: v for k, v in merged.items() if k != "output_dir"}
    canonical = json.dumps(hashable, sort_keys=True, ensure_ascii=False, default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def load_run_config(
    path: str | Path,
    overrides: Optional[Mapping[str, Any]] = None,
    output_dir: Optional[str | Path] = None,
) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"config file {path} is not valid YAML: {exc}") from exc
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"config file {path} must hold a mapping at the top level")
    unknown = set(raw) - _KNOWN_TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    merged = _deep_merge(raw, overrides or {})
    base_dir = path.parent

    def resolve(value: Optional[str]) -> Optional[Path]:
        if value is None:
            return None
        p = Path(value)
        return p if p.is_absolute() else (base_dir / p)

    task_name = merged.get("task", "sentiment")
    try:
        task = task_for(TaskKind(task_name))
    except ValueError as exc:
        raise ConfigError(
            f"unknown task {task_name!r}; expected one of {[k.value for k in TaskKind]}"
        ) from exc

    paths = merged.get("paths") or {}
    if "train" not in paths:
        raise ConfigError("config must set paths.train")
    test_paths = {
        str(name): resolve(str(p)) for name, p in (paths.get("tests") or {}).items()
    }

    discovery = DiscoveryConfig(
        **_pick(
            merged.get("discovery") or {},
            {
                "threshold": "threshold",
                "oracle_epochs": "oracle_epochs",
                "oracle_lr": "oracle_lr",
                "oracle_seed": "oracle_seed",
            },
        )
    )
    disc_section = merged.get("discovery") or {}
    discovery.oracle_checkpoint = resolve(disc_section.get("oracle_checkpoint"))
    discovery.oracle_meta = resolve(disc_section.get("oracle_meta"))

    pos_section = merged.get("positives") or {}
    positives = PositiveGenConfig(
        **_pick(
            pos_section,
            {
                "scaling_factor": "scaling_factor",
                "k_override": "k_override",
                "unk_token": "unk_token",
                "seed": "seed",
            },
        )
    )

    neg_section = merged.get("negatives") or {}
    generation = GenerationConfig(
        **_pick(
            neg_section,
            {
                "model_name": "model_name",
                "temperature": "temperature",
                "top_p": "top_p",
                "max_retries": "max_retries",
                "backoff_base_s": "backoff_base_s",
                "timeout_s": "timeout_s",
                "concurrency_limit": "concurrency_limit",
                "failure_ceiling": "failure_ceiling",
            },
        )
    )
    if neg_section.get("cache_dir") is not None:
        generation.cache_dir = resolve(str(neg_section["cache_dir"]))
    instruction = parse_instruction(neg_section.get("instruction_id", "I4"))
    client_kind = str(neg_section.get("client", "stub"))
    if client_kind not in {"stub", "http"}:
        raise ConfigError(f"negatives.client must be 'stub' or 'http', got {client_kind!r}")

    loss_section = merged.get("loss") or {}
    loss = LossConfig(
        **_pick(
            loss_section,
            {
                "lambda": "lambda_weight",
                "margin": "margin",
                "distance": "distance",
                "triplet_mode": "triplet_mode",
            },
        )
    )

    train_section = merged.get("training") or {}
    training = TrainingConfig(
        **_pick(
            train_section,
            {
                "batch_size": "batch_size",
                "learning_rate": "learning_rate",
                "max_seq_len": "max_seq_len",
                "epochs": "epochs",
                "seeds": "seeds",
            },
        )
    )

    encoder = EncoderConfig(
        **_pick(merged.get("encoder") or {}, {"embed_dim": "embed_dim", "hidden_dim": "hidden_dim"})
    )

    tagger_kind = str(merged.get("tagger", "dictionary"))
    if tagger_kind not in {"dictionary", "nltk"}:
        raise ConfigError(f"tagger must be 'dictionary' or 'nltk', got {tagger_kind!r}")

    out_value = output_dir if output_dir is not None else merged.get("output_dir", "runs/run")
    resolved_output = Path(out_value)

    cfg = RunConfig(
        task=task,
        run_name=str(merged.get("run_name", "run")),
        train_path=resolve(str(paths["train"])),  # type: ignore[arg-type]
        val_path=resolve(paths.get("val")),
        test_paths=test_paths,
        tagger_kind=tagger_kind,
        dictionary_path=resolve(merged.get("dictionary")),
        val_fraction=float(merged.get("val_fraction", 0.2)),
        discovery=discovery,
        positives=positives,
        instruction=instruction,
        client_kind=client_kind,
        antonyms_path=resolve(neg_section.get("antonyms")),
        generation=generation,
        loss=loss,
        training=training,
        negatives_in_ce=bool(train_section.get("negatives_in_ce", False)),
        encoder=encoder,
        output_dir=resolved_output,
        config_hash=config_hash_of(merged),
        merged=merged,
    )
    if not 0.0 < cfg.val_fraction < 1.0:
        raise ConfigError(f"val_fraction must be in (0, 1), got {cfg.val_fraction}")
    return cfg


def write_manifest(
    stage_dir: Path,
    command: str,
    cfg: RunConfig,
    inputs: Mapping[str, str],
    outputs: Sequence[str],
    settings: Optional[Mapping[str, Any]] = None,
) -> Path:
    """Record what a stage consumed and produced, keyed by the config hash.

    Input paths are recorded as written in the config and outputs relative
    to the stage directory, so manifests from runs in different locations
    compare equal when the experiments match.
    """
    stage_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": command,
        "config_hash": cfg.config_hash,
        "run_name": cfg.run_name,
        "inputs": dict(inputs),
        "outputs": list(outputs),
        "settings": dict(settings or {}),
    }
    manifest_path = stage_dir / MANIFEST_NAME
    manifest_path.write_text(
        json.dumps(manifest, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )
    return manifest_path


def load_manifest(stage_dir: Path) -> Optional[dict[str, Any]]:
    manifest_path = stage_dir / MANIFEST_NAME
    if not manifest_path.exists():
        return None
    return json.loads(manifest_path.read_text(encoding="utf-8"))


def check_upstream(cfg: RunConfig, stage: str, command: str, strict: bool) -> list[str]:
    """Compare an upstream stage's recorded config hash against ours.

    Returns warning strings; under strict mode a mismatch raises instead.
    A missing upstream manifest is always an error — the stage has not run.
    """
    manifest = load_manifest(cfg.stage_dir(stage))
    if manifest is None:
        raise ConfigError(
            f"{command} needs the {stage!r} stage to run first "
            f"(no manifest under {cfg.stage_dir(stage)})"
        )
    if manifest.get("config_hash") == cfg.config_hash:
        return []
    message = (
        f"upstream stage {stage!r} was produced with a different configuration "
        f"(hash {manifest.get('config_hash', '?')[:12]}… vs {cfg.config_hash[:12]}…); "
        f"re-run it or drop the overriding flags"
    )
    if strict:
        raise ConfigError(message)
    return [message]
