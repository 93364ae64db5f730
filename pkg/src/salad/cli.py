"""Command-line pipeline: discover-tags, gen-pos, gen-neg, train, eval,
cad-quality.

Each command reads one YAML config (flags override individual keys), writes
its artifacts under a stage directory inside the run's output directory,
and records a manifest with the config hash so later stages can detect
stale upstream artifacts.  Commands never mutate their inputs and are
independently re-runnable.
"""

from __future__ import annotations

import functools
import json
from pathlib import Path
from typing import Any, Callable, Optional

import click
import torch

from salad.cad_quality import HashingSentenceEmbedder, cad_quality_report
from salad.config import (
    RunConfig,
    check_upstream,
    load_run_config,
    parse_instruction,
    write_manifest,
)
from salad.corpus import Dataset, Split, load_dataset, split_train_val, tokenize
from salad.discovery import (
    TagSetPartition,
    format_score_table,
    load_partition,
    partition_tags,
    save_report,
    score_tags,
)
from salad.encoders import EncoderOracle, TinyTextEncoder, Vocab
from salad.errors import ConfigError, SaladError
from salad.evaluation import evaluate_splits
from salad.losses import LossConfig
from salad.negatives import (
    CompletionClient,
    CounterfactualExample,
    HttpCompletionClient,
    StubCompletionClient,
    generate_negatives,
    load_negatives,
    save_negatives,
    save_skips,
)
from salad.positives import compute_k, generate_epoch_positives, save_positives
from salad.postag import (
    EMPTY_SENTINEL,
    DictionaryTagger,
    NltkTagger,
    Tagger,
    default_dictionary_tagger,
    tag,
)
from salad.training import (
    TrainingConfig,
    checkpoint_name,
    save_metrics,
    train_all_seeds,
)

_CONFIG_HELP = "YAML run configuration; see fixtures/example_config.yaml."


def _build_tagger(cfg: RunConfig) -> Tagger:
    if cfg.tagger_kind == "nltk":
        return NltkTagger()
    if cfg.dictionary_path is not None:
        return DictionaryTagger.from_tsv(cfg.dictionary_path)
    return default_dictionary_tagger()


def _build_client(cfg: RunConfig) -> CompletionClient:
    if cfg.client_kind == "http":
        return HttpCompletionClient()
    if cfg.antonyms_path is None:
        raise ConfigError("the stub client needs negatives.antonyms (a word<TAB>opposite TSV)")
    return StubCompletionClient.from_tsv(cfg.antonyms_path)


def _load_train(cfg: RunConfig) -> Dataset:
    return load_dataset(cfg.train_path, cfg.task, Split.TRAIN, name="train")


def _train_val(cfg: RunConfig) -> tuple[Dataset, Optional[Dataset]]:
    train_ds = _load_train(cfg)
    if cfg.val_path is not None:
        return train_ds, load_dataset(cfg.val_path, cfg.task, Split.VALIDATION, name="val")
    if len(train_ds) < 2:
        return train_ds, None
    return split_train_val(train_ds, cfg.val_fraction, seed=0)


def _build_vocab(train_ds: Dataset, negatives: list[CounterfactualExample], cfg: RunConfig):
    streams = [ex.tokens() for ex in train_ds.examples]
    for neg in negatives:
        stream = tokenize(neg.text)
        if neg.text_b is not None:
            stream.extend(tokenize(neg.text_b))
        streams.append(stream)
    streams.append(tokenize(cfg.positives.unk_token))
    streams.append(tokenize(EMPTY_SENTINEL))
    return Vocab.build(streams)


def _encoder_factory(cfg: RunConfig, vocab: Vocab) -> Callable[[int], TinyTextEncoder]:
    def factory(seed: int) -> TinyTextEncoder:
        return TinyTextEncoder(
            vocab,
            num_classes=len(cfg.task.label_set),
            embed_dim=cfg.encoder.embed_dim,
            hidden_dim=cfg.encoder.hidden_dim,
            max_seq_len=cfg.training.max_seq_len,
            seed=seed,
        )

    return factory


def _warn_upstream(cfg: RunConfig, stage: str, command: str, strict: bool) -> None:
    for warning in check_upstream(cfg, stage, command, strict):
        click.echo(f"warning: {warning}", err=True)


def _cli_errors(fn: Callable[..., Any]) -> Callable[..., Any]:
    """Convert package errors into exit code 1 with a one-line report."""

    @functools.wraps(fn)
    def wrapper(*args: Any, **kwargs: Any) -> Any:
        try:
            return fn(*args, **kwargs)
        except SaladError as exc:
            raise click.ClickException(str(exc)) from exc

    return wrapper


def _common_options(fn: Callable[..., Any]) -> Callable[..., Any]:
    fn = click.option(
        "--config",
        "config_path",
        required=True,
        type=click.Path(exists=True, dir_okay=False, path_type=Path),
        help=_CONFIG_HELP,
    )(fn)
    fn = click.option(
        "--output-dir",
        type=click.Path(file_okay=False, path_type=Path),
        default=None,
        help="Run directory for artifacts (overrides the config value).",
    )(fn)
    fn = click.option(
        "--strict",
        is_flag=True,
        help="Fail instead of warn when upstream artifacts were built from a different config.",
    )(fn)
    return fn


@click.group()
def main() -> None:
    """Shortcut-robust text classification via counterfactual contrast.

    Pipeline: discover-tags -> gen-pos -> gen-neg -> train -> eval, plus
    cad-quality for inspecting the generated counterfactual corpus.
    """
    # Single-threaded torch keeps repeated runs bit-identical.
    torch.set_num_threads(1)


@main.command("discover-tags")
@_common_options
@click.option("--threshold", type=float, default=None, help="Importance cutoff override.")
@click.option(
    "--train-oracle",
    is_flag=True,
    help="Fit a fresh oracle on the training split even if a checkpoint is configured.",
)
@_cli_errors
def cmd_discover_tags(
    config_path: Path,
    output_dir: Optional[Path],
    strict: bool,
    threshold: Optional[float],
    train_oracle: bool,
) -> None:
    """Score tag importance by ablation and split tags causal/non-causal."""
    overrides: dict[str, Any] = {}
    if threshold is not None:
        overrides["discovery.threshold"] = threshold
    cfg = load_run_config(config_path, overrides, output_dir)
    tagger = _build_tagger(cfg)
    train_ds = _load_train(cfg)

    disc = cfg.discovery
    if disc.oracle_checkpoint is not None and not train_oracle:
        if disc.oracle_meta is None or not Path(disc.oracle_meta).exists():
            raise ConfigError(
                "discovery.oracle_checkpoint is set but its meta JSON is missing; "
                "set discovery.oracle_meta or pass --train-oracle to fit one"
            )
        if not Path(disc.oracle_checkpoint).exists():
            raise ConfigError(
                f"oracle checkpoint not found: {disc.oracle_checkpoint}; "
                "pass --train-oracle to fit one from the training split"
            )
        meta = json.loads(Path(disc.oracle_meta).read_text(encoding="utf-8"))
        encoder = TinyTextEncoder.from_meta(meta, seed=disc.oracle_seed)
        encoder.load_state_dict(torch.load(disc.oracle_checkpoint, weights_only=True))
    else:
        encoder = _fit_oracle(cfg, train_ds, tagger)

    report = score_tags(train_ds, EncoderOracle(encoder), tagger)
    partition = partition_tags(report, disc.threshold)
    stage = cfg.stage_dir("tags")
    save_report(report, partition, stage / "report.json")
    click.echo(format_score_table(report, partition))
    write_manifest(
        stage,
        "discover-tags",
        cfg,
        inputs={"train": str(cfg.merged["paths"]["train"])},
        outputs=["report.json"],
        settings={
            "threshold": disc.threshold,
            "causal": sorted(t.value for t in partition.causal),
            "noncausal": sorted(t.value for t in partition.noncausal),
        },
    )
    click.echo(f"wrote {stage / 'report.json'}")


def _fit_oracle(cfg: RunConfig, train_ds: Dataset, tagger: Tagger) -> TinyTextEncoder:
    """Plain cross-entropy fit of the small encoder, used as the ablation oracle."""
    from salad.postag import ALL_TAGS
    from salad.training import train as train_fn

    vocab = _build_vocab(train_ds, [], cfg)
    encoder = _encoder_factory(cfg, vocab)(cfg.discovery.oracle_seed)
    placeholder = TagSetPartition(
        causal=frozenset(), noncausal=frozenset(ALL_TAGS), threshold=cfg.discovery.threshold
    )
    train_fn(
        train_ds,
        negatives=[],
        partition=placeholder,
        k=1,
        loss_cfg=LossConfig(lambda_weight=0.0),
        train_cfg=TrainingConfig(
            batch_size=cfg.training.batch_size,
            learning_rate=cfg.discovery.oracle_lr,
            max_seq_len=cfg.training.max_seq_len,
            epochs=cfg.discovery.oracle_epochs,
            seeds=(cfg.discovery.oracle_seed,),
        ),
        encoder=encoder,
        tagger=tagger,
        seed=cfg.discovery.oracle_seed,
    )
    return encoder


@main.command("gen-pos")
@_common_options
@click.option("--k", "k_override", type=int, default=None, help="Fixed replacement count.")
@click.option("--epochs", type=int, default=None, help="How many epoch streams to write.")
@_cli_errors
def cmd_gen_pos(
    config_path: Path,
    output_dir: Optional[Path],
    strict: bool,
    k_override: Optional[int],
    epochs: Optional[int],
) -> None:
    """Write the masked-positive streams for every training epoch."""
    overrides: dict[str, Any] = {}
    if k_override is not None:
        overrides["positives.k_override"] = k_override
    if epochs is not None:
        overrides["training.epochs"] = epochs
    cfg = load_run_config(config_path, overrides, output_dir)
    _warn_upstream(cfg, "tags", "gen-pos", strict)
    partition = load_partition(cfg.stage_dir("tags") / "report.json")
    tagger = _build_tagger(cfg)
    train_ds = _load_train(cfg)
    k = compute_k(train_ds, partition, cfg.positives, tagger)
    tagged = [tag(ex, tagger) for ex in train_ds.examples]
    positives = []
    for epoch in range(cfg.training.epochs):
        positives.extend(
            generate_epoch_positives(
                tagged, partition, k, epoch, cfg.positives.seed, cfg.positives.unk_token
            )
        )
    stage = cfg.stage_dir("positives")
    save_positives(positives, stage / "positives.jsonl")
    write_manifest(
        stage,
        "gen-pos",
        cfg,
        inputs={
            "train": str(cfg.merged["paths"]["train"]),
            "tags": "tags/report.json",
        },
        outputs=["positives.jsonl"],
        settings={"k": k, "epochs": cfg.training.epochs, "count": len(positives)},
    )
    click.echo(f"k={k}; wrote {len(positives)} positives to {stage / 'positives.jsonl'}")


@main.command("gen-neg")
@_common_options
@click.option("--instruction", type=str, default=None, help="Instruction style, 1-4 or I1-I4.")
@click.option(
    "--client",
    "client_kind",
    type=click.Choice(["stub", "http"]),
    default=None,
    help="Completion backend.",
)
@_cli_errors
def cmd_gen_neg(
    config_path: Path,
    output_dir: Optional[Path],
    strict: bool,
    instruction: Optional[str],
    client_kind: Optional[str],
) -> None:
    """Generate label-flipped counterfactual negatives for the train split."""
    overrides: dict[str, Any] = {}
    if instruction is not None:
        overrides["negatives.instruction_id"] = parse_instruction(instruction).value
    if client_kind is not None:
        overrides["negatives.client"] = client_kind
    cfg = load_run_config(config_path, overrides, output_dir)
    _warn_upstream(cfg, "tags", "gen-neg", strict)
    partition = load_partition(cfg.stage_dir("tags") / "report.json")
    tagger = _build_tagger(cfg)
    train_ds = _load_train(cfg)
    client = _build_client(cfg)
    generation = cfg.generation
    if generation.cache_dir is None:
        generation.cache_dir = cfg.stage_dir("cache")
    report = generate_negatives(
        train_ds, partition, cfg.instruction, generation, client, tagger=tagger
    )
    stage = cfg.stage_dir("negatives")
    save_negatives(report.negatives, cfg.task, stage / "negatives.jsonl")
    save_skips(report.skips, stage / "skips.jsonl")
    write_manifest(
        stage,
        "gen-neg",
        cfg,
        inputs={
            "train": str(cfg.merged["paths"]["train"]),
            "tags": "tags/report.json",
        },
        outputs=["negatives.jsonl", "skips.jsonl"],
        settings={
            "instruction_id": cfg.instruction.value,
            "client": cfg.client_kind,
            "model_name": generation.model_name,
            "generated": len(report.negatives),
            "skipped": len(report.skips),
        },
    )
    click.echo(
        f"wrote {len(report.negatives)} negatives "
        f"({len(report.skips)} skipped, {report.cache_hits} cache hits) "
        f"to {stage / 'negatives.jsonl'}"
    )


@main.command("train")
@_common_options
@click.option("--lambda", "lambda_weight", type=float, default=None, help="Loss mixture weight.")
@click.option("--epochs", type=int, default=None)
@click.option("--seeds", type=str, default=None, help="Comma-separated seed list.")
@click.option("--k", "k_override", type=int, default=None, help="Fixed replacement count.")
@_cli_errors
def cmd_train(
    config_path: Path,
    output_dir: Optional[Path],
    strict: bool,
    lambda_weight: Optional[float],
    epochs: Optional[int],
    seeds: Optional[str],
    k_override: Optional[int],
) -> None:
    """Contrastive fine-tuning over anchors, masked positives, and negatives."""
    overrides: dict[str, Any] = {}
    if lambda_weight is not None:
        overrides["loss.lambda"] = lambda_weight
    if epochs is not None:
        overrides["training.epochs"] = epochs
    if seeds is not None:
        overrides["training.seeds"] = [int(s) for s in seeds.split(",") if s.strip()]
    if k_override is not None:
        overrides["positives.k_override"] = k_override
    cfg = load_run_config(config_path, overrides, output_dir)
    for stage in ("tags", "positives", "negatives"):
        _warn_upstream(cfg, stage, "train", strict)
    partition = load_partition(cfg.stage_dir("tags") / "report.json")
    tagger = _build_tagger(cfg)
    train_ds, val_ds = _train_val(cfg)
    negatives = load_negatives(cfg.stage_dir("negatives") / "negatives.jsonl", cfg.task)
    k = compute_k(train_ds, partition, cfg.positives, tagger)
    vocab = _build_vocab(train_ds, negatives, cfg)
    stage = cfg.stage_dir("train")
    results = train_all_seeds(
        train_ds,
        negatives,
        partition,
        k,
        cfg.loss,
        cfg.training,
        _encoder_factory(cfg, vocab),
        tagger,
        val=val_ds,
        unk_token=cfg.positives.unk_token,
        negatives_in_ce=cfg.negatives_in_ce,
        checkpoint_dir=stage / "checkpoints",
        run_name=cfg.run_name,
    )
    outputs = []
    for result in results:
        metrics_name = f"metrics-seed{result.seed}.jsonl"
        save_metrics(result.metrics, stage / metrics_name)
        outputs.append(metrics_name)
    final_val = {
        str(r.seed): (r.metrics[-1].val_acc if r.metrics else None) for r in results
    }
    write_manifest(
        stage,
        "train",
        cfg,
        inputs={
            "train": str(cfg.merged["paths"]["train"]),
            "tags": "tags/report.json",
            "positives": "positives/positives.jsonl",
            "negatives": "negatives/negatives.jsonl",
        },
        outputs=sorted(outputs),
        settings={
            "k": k,
            "lambda": cfg.loss.lambda_weight,
            "epochs": cfg.training.epochs,
            "seeds": list(cfg.training.seeds),
            "final_val_acc": final_val,
        },
    )
    for result in results:
        last = result.metrics[-1]
        val_text = f"{last.val_acc:.2f}" if last.val_acc is not None else "n/a"
        click.echo(
            f"seed {result.seed}: ce={last.ce:.4f} cl={last.cl:.4f} "
            f"total={last.total:.4f} val_acc={val_text}"
        )
    click.echo(f"wrote checkpoints and metrics under {stage}")


@main.command("eval")
@_common_options
@click.option(
    "--format",
    "output_format",
    type=click.Choice(["table", "json"]),
    default="table",
    show_default=True,
)
@_cli_errors
def cmd_eval(
    config_path: Path, output_dir: Optional[Path], strict: bool, output_format: str
) -> None:
    """Score the trained checkpoints on every configured test split."""
    cfg = load_run_config(config_path, None, output_dir)
    _warn_upstream(cfg, "train", "eval", strict)
    if not cfg.test_paths:
        raise ConfigError("config must set paths.tests for evaluation")
    splits = {
        name: load_dataset(path, cfg.task, Split.O_TEST, name=name)
        for name, path in cfg.test_paths.items()
    }
    stage = cfg.stage_dir("train")
    meta_path = stage / "checkpoints" / f"{cfg.run_name}-meta.json"
    if not meta_path.exists():
        raise ConfigError(f"no trained model meta at {meta_path}; run the train stage first")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    last_epoch = cfg.training.epochs - 1
    encoders_by_seed = {}
    for seed in cfg.training.seeds:
        ckpt = stage / "checkpoints" / f"{checkpoint_name(cfg.run_name, seed, last_epoch)}.pt"
        if not ckpt.exists():
            raise ConfigError(f"missing checkpoint {ckpt}; run the train stage first")
        encoder = TinyTextEncoder.from_meta(meta, seed=seed)
        encoder.load_state_dict(torch.load(ckpt, weights_only=True))
        encoders_by_seed[seed] = encoder
    report = evaluate_splits(encoders_by_seed, splits, run_name=cfg.run_name)
    eval_stage = cfg.stage_dir("eval")
    report.save(eval_stage / "report.json")
    write_manifest(
        eval_stage,
        "eval",
        cfg,
        inputs={
            "checkpoints": "train/checkpoints",
            **{f"test:{name}": str(p) for name, p in (cfg.merged["paths"].get("tests") or {}).items()},
        },
        outputs=["report.json"],
        settings={"splits": sorted(splits), "seeds": list(cfg.training.seeds)},
    )
    if output_format == "json":
        click.echo(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    else:
        click.echo(report.format_table())
    click.echo(f"wrote {eval_stage / 'report.json'}")


@main.command("cad-quality")
@_common_options
@_cli_errors
def cmd_cad_quality(config_path: Path, output_dir: Optional[Path], strict: bool) -> None:
    """Diversity, overlap, and embedding similarity of the counterfactuals."""
    cfg = load_run_config(config_path, None, output_dir)
    _warn_upstream(cfg, "negatives", "cad-quality", strict)
    train_ds = _load_train(cfg)
    negatives = load_negatives(cfg.stage_dir("negatives") / "negatives.jsonl", cfg.task)
    if not negatives:
        raise ConfigError("no negatives to score; run gen-neg first")
    report = cad_quality_report(train_ds, negatives, HashingSentenceEmbedder())
    stage = cfg.stage_dir("cad")
    report.save(stage / "report.json")
    write_manifest(
        stage,
        "cad-quality",
        cfg,
        inputs={
            "train": str(cfg.merged["paths"]["train"]),
            "negatives": "negatives/negatives.jsonl",
        },
        outputs=["report.json"],
        settings={"pair_count": report.pair_count, "mode": report.mode},
    )
    click.echo(
        f"diversity={report.diversity} overlap={report.overlap_pct:.2f}% "
        f"similarity={report.embed_sim:.4f} over {report.pair_count} pairs"
    )
    click.echo(f"wrote {stage / 'report.json'}")


if __name__ == "__main__":
    main()
