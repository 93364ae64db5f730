"""Accuracy evaluation across in-domain, counterfactual, and other-domain
test splits, with an unweighted Overall column and cross-domain transfer.

Reported numbers are percentages.  Multi-seed runs keep the raw per-seed
accuracies for audit; the headline figure is the seed mean per split, and
Overall is the unweighted mean of those split means.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence

import torch

from salad.corpus import Dataset
from salad.encoders import TinyTextEncoder
from salad.errors import ConfigError

_EVAL_BATCH = 64


def evaluate(encoder: TinyTextEncoder, ds: Dataset, batch_size: int = _EVAL_BATCH) -> float:
    """Percent of examples whose argmax logit matches the gold label."""
    if len(ds) == 0:
        raise ConfigError(f"cannot evaluate on empty dataset {ds.name!r}")
    encoder.eval()
    correct = 0
    with torch.no_grad():
        for start in range(0, len(ds), batch_size):
            batch = ds.examples[start : start + batch_size]
            _, logits = encoder.encode_examples(batch)
            predictions = logits.argmax(dim=-1).tolist()
            correct += sum(int(p == ex.label) for p, ex in zip(predictions, batch))
    return 100.0 * correct / len(ds)


def aggregate_overall(rows: Mapping[str, Mapping[str, float]]) -> dict[str, float]:
    """Unweighted mean across splits, requiring a common split set.

    A run missing a split another run has is an error naming the run and
    the split, because a mean over differing split sets is not comparable.
    """
    if not rows:
        return {}
    split_sets = {run: frozenset(splits) for run, splits in rows.items()}
    reference_run = next(iter(rows))
    reference = split_sets[reference_run]
    for run, splits in split_sets.items():
        missing = reference - splits
        extra = splits - reference
        if missing:
            raise ConfigError(f"run {run!r} is missing split {sorted(missing)[0]!r}")
        if extra:
            raise ConfigError(f"run {reference_run!r} is missing split {sorted(extra)[0]!r}")
    return {
        run: sum(splits.values()) / len(splits) if splits else float("nan")
        for run, splits in rows.items()
    }


@dataclass
class EvalReport:
    """Accuracy rows per run and split, plus the per-seed raw values."""

    rows: dict[str, dict[str, float]]
    overall: dict[str, float]
    seeds: list[int]
    per_seed: dict[str, dict[str, list[float]]] = field(default_factory=dict)
    cell_errors: dict[str, dict[str, str]] = field(default_factory=dict)

    def to_dict(self) -> dict[str, object]:
        return {
            "rows": self.rows,
            "overall": self.overall,
            "seeds": self.seeds,
            "per_seed": self.per_seed,
            "cell_errors": self.cell_errors,
        }

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(
            json.dumps(self.to_dict(), indent=2, sort_keys=True, ensure_ascii=False) + "\n",
            encoding="utf-8",
        )

    def format_table(self) -> str:
        """Aligned text table: one row per run, one column per split."""
        splits = sorted({s for row in self.rows.values() for s in row})
        header = ["run", *splits, "overall"]
        lines = [header]
        for run in sorted(self.rows):
            row = [run]
            for split in splits:
                value = self.rows[run].get(split)
                row.append(f"{value:.2f}" if value is not None else "-")
            row.append(f"{self.overall[run]:.2f}" if run in self.overall else "-")
            lines.append(row)
        widths = [max(len(line[i]) for line in lines) for i in range(len(header))]
        rendered = []
        for line in lines:
            rendered.append("  ".join(cell.ljust(w) for cell, w in zip(line, widths)).rstrip())
        rendered.insert(1, "  ".join("-" * w for w in widths))
        return "\n".join(rendered)


def build_report(
    per_seed: Mapping[str, Mapping[str, Sequence[float]]],
    seeds: Sequence[int],
    cell_errors: Optional[Mapping[str, Mapping[str, str]]] = None,
) -> EvalReport:
    """Seed means per split first, then the unweighted split mean."""
    rows = {
        run: {split: sum(values) / len(values) for split, values in splits.items() if values}
        for run, splits in per_seed.items()
    }
    overall = aggregate_overall(rows)
    return EvalReport(
        rows=rows,
        overall=overall,
        seeds=list(seeds),
        per_seed={run: {s: list(v) for s, v in splits.items()} for run, splits in per_seed.items()},
        cell_errors={run: dict(cells) for run, cells in (cell_errors or {}).items()},
    )


def evaluate_splits(
    encoders_by_seed: Mapping[int, TinyTextEncoder],
    splits: Mapping[str, Dataset],
    run_name: str = "model",
) -> EvalReport:
    """One run row: each seed's encoder scored on every split."""
    if not encoders_by_seed:
        raise ConfigError("no trained encoders to evaluate")
    if not splits:
        raise ConfigError("no evaluation splits configured")
    seeds = sorted(encoders_by_seed)
    per_seed: dict[str, dict[str, list[float]]] = {run_name: {name: [] for name in splits}}
    for seed in seeds:
        for name, ds in splits.items():
            per_seed[run_name][name].append(evaluate(encoders_by_seed[seed], ds))
    return build_report(per_seed, seeds)


@dataclass(frozen=True)
class Domain:
    """One named domain with its own train and test datasets."""

    name: str
    train: Dataset
    test: Dataset


def cross_domain(
    domains: Sequence[Domain],
    trainer: Callable[[Dataset, int], TinyTextEncoder],
    seeds: Sequence[int] = (0,),
    run_name: str = "model",
) -> EvalReport:
    """Train per source domain, test on every other domain's test set.

    Cells are keyed "S→I" style.  A failure while training a source or
    scoring a cell is recorded under that cell and the remaining cells
    still run.
    """
    if len(domains) < 2:
        raise ConfigError(f"cross-domain evaluation needs >= 2 domains, got {len(domains)}")
    names = [d.name for d in domains]
    if len(set(names)) != len(names):
        raise ConfigError(f"domain names must be unique, got {names}")
    per_seed: dict[str, dict[str, list[float]]] = {run_name: {}}
    errors: dict[str, dict[str, str]] = {run_name: {}}
    for source in domains:
        targets = [d for d in domains if d.name != source.name]
        for seed in seeds:
            try:
                encoder = trainer(source.train, seed)
            except Exception as exc:  # noqa: BLE001 - recorded per cell
                for target in targets:
                    errors[run_name][f"{source.name}→{target.name}"] = str(exc)
                continue
            for target in targets:
                cell = f"{source.name}→{target.name}"
                try:
                    accuracy = evaluate(encoder, target.test)
                except Exception as exc:  # noqa: BLE001 - recorded per cell
                    errors[run_name][cell] = str(exc)
                    continue
                per_seed[run_name].setdefault(cell, []).append(accuracy)
    report = build_report(per_seed, list(seeds), errors)
    return report
