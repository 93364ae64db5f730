"""YAML run configuration, stage manifests, and upstream-staleness checks."""

from __future__ import annotations

import json

import pytest

from salad.config import (
    MANIFEST_NAME,
    check_upstream,
    config_hash_of,
    load_manifest,
    load_run_config,
    parse_instruction,
    write_manifest,
)
from salad.corpus import TaskKind
from salad.errors import ConfigError
from salad.losses import DistanceKind, TripletMode
from salad.negatives import InstructionId

MINIMAL = "paths:\n  train: train.jsonl\n"


def write_config(tmp_path, body=MINIMAL, name="config.yaml"):
    path = tmp_path / name
    path.write_text(body, encoding="utf-8")
    return path


class TestParseInstruction:
    @pytest.mark.parametrize(
        "value, expected",
        [
            (InstructionId.I1, InstructionId.I1),
            (3, InstructionId.I3),
            ("I2", InstructionId.I2),
            ("i2", InstructionId.I2),
            ("2", InstructionId.I2),
            (" i4 ", InstructionId.I4),
        ],
    )
    def test_accepted_spellings(self, value, expected):
        assert parse_instruction(value) is expected

    @pytest.mark.parametrize("value", ["I9", "five", 0, None, 2.5])
    def test_rejected_values(self, value):
        with pytest.raises(ConfigError, match="instruction"):
            parse_instruction(value)


class TestLoadRunConfig:
    def test_packaged_example_config_loads_fully(self, fixture_dir):
        cfg = load_run_config(fixture_dir / "example_config.yaml")
        assert cfg.task.kind is TaskKind.SENTIMENT
        assert cfg.run_name == "fixture"
        assert cfg.train_path == fixture_dir / "sentiment_train.jsonl"
        assert set(cfg.test_paths) == {"o_test", "cf_test"}
        assert cfg.test_paths["o_test"] == fixture_dir / "sentiment_o_test.jsonl"
        assert cfg.tagger_kind == "dictionary"
        assert cfg.discovery.threshold == 0.1
        assert cfg.positives.scaling_factor == 0.18
        assert cfg.instruction is InstructionId.I4
        assert cfg.client_kind == "stub"
        assert cfg.antonyms_path == fixture_dir / "antonyms.tsv"
        assert cfg.loss.lambda_weight == 0.5
        assert cfg.loss.distance is DistanceKind.EUCLIDEAN
        assert cfg.loss.triplet_mode is TripletMode.BATCH_MEAN_HINGE
        assert cfg.training.epochs == 4
        assert cfg.training.seeds == (0, 1)
        assert cfg.encoder.embed_dim == 32
        assert len(cfg.config_hash) == 64

    def test_relative_paths_resolve_against_the_config_directory(self, tmp_path):
        nested = tmp_path / "sub"
        nested.mkdir()
        path = write_config(nested, "paths:\n  train: data/train.jsonl\n")
        cfg = load_run_config(path)
        assert cfg.train_path == nested / "data" / "train.jsonl"

    def test_absolute_paths_kept(self, tmp_path):
        path = write_config(tmp_path, f"paths:\n  train: {tmp_path}/abs.jsonl\n")
        assert load_run_config(path).train_path == tmp_path / "abs.jsonl"

    def test_output_dir_resolves_against_the_working_directory(self, tmp_path):
        path = write_config(tmp_path, MINIMAL + "output_dir: runs/here\n")
        cfg = load_run_config(path)
        assert not cfg.output_dir.is_absolute()
        assert str(cfg.output_dir) == "runs/here"

    def test_output_dir_argument_wins(self, tmp_path):
        path = write_config(tmp_path, MINIMAL + "output_dir: runs/here\n")
        cfg = load_run_config(path, output_dir=tmp_path / "elsewhere")
        assert cfg.output_dir == tmp_path / "elsewhere"

    def test_dotted_overrides_reach_nested_sections(self, tmp_path):
        path = write_config(tmp_path)
        cfg = load_run_config(
            path,
            overrides={
                "loss.lambda": 0.25,
                "training.epochs": 2,
                "negatives.instruction_id": "I1",
            },
        )
        assert cfg.loss.lambda_weight == 0.25
        assert cfg.training.epochs == 2
        assert cfg.instruction is InstructionId.I1

    def test_defaults_when_sections_are_absent(self, tmp_path):
        cfg = load_run_config(write_config(tmp_path))
        assert cfg.task.kind is TaskKind.SENTIMENT
        assert cfg.run_name == "run"
        assert cfg.val_path is None
        assert cfg.test_paths == {}
        assert cfg.instruction is InstructionId.I4
        assert cfg.val_fraction == 0.2
        assert cfg.loss.lambda_weight == 0.5
        assert str(cfg.output_dir) == "runs/run"

    @pytest.mark.parametrize(
        "body, message",
        [
            ("task: sentiment\n", "paths.train"),
            (MINIMAL + "bogus_key: 1\n", "unknown config keys"),
            (MINIMAL + "task: poetry\n", "unknown task"),
            (MINIMAL + "tagger: regex\n", "tagger"),
            (MINIMAL + "negatives:\n  client: carrier-pigeon\n", "client"),
            (MINIMAL + "val_fraction: 1.5\n", "val_fraction"),
            ("- just\n- a list\n", "mapping"),
            (MINIMAL + "loss: {lambda: 7}\n", "lambda_weight"),
        ],
    )
    def test_invalid_configs(self, tmp_path, body, message):
        with pytest.raises(ConfigError, match=message):
            load_run_config(write_config(tmp_path, body))

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_run_config(tmp_path / "absent.yaml")

    def test_unparseable_yaml(self, tmp_path):
        with pytest.raises(ConfigError, match="not valid YAML"):
            load_run_config(write_config(tmp_path, "paths: [unclosed\n"))

    def test_stage_dir(self, tmp_path):
        cfg = load_run_config(write_config(tmp_path), output_dir=tmp_path / "out")
        assert cfg.stage_dir("tags") == tmp_path / "out" / "tags"


class TestConfigHash:
    def test_ignores_where_outputs_land(self, tmp_path):
        base = load_run_config(write_config(tmp_path, MINIMAL + "output_dir: runs/a\n"))
        moved = load_run_config(
            write_config(tmp_path, MINIMAL + "output_dir: runs/b\n", name="moved.yaml")
        )
        redirected = load_run_config(
            write_config(tmp_path, MINIMAL + "output_dir: runs/a\n", name="redir.yaml"),
            output_dir=tmp_path / "elsewhere",
        )
        assert base.config_hash == moved.config_hash == redirected.config_hash

    def test_changes_with_any_semantic_key(self, tmp_path):
        base = load_run_config(write_config(tmp_path))
        other = load_run_config(write_config(tmp_path), overrides={"loss.lambda": 0.9})
        assert base.config_hash != other.config_hash

    def test_key_order_does_not_matter(self):
        a = config_hash_of({"x": 1, "y": {"z": 2}})
        b = config_hash_of({"y": {"z": 2}, "x": 1})
        assert a == b


class TestManifests:
    def make_cfg(self, tmp_path, out="out"):
        return load_run_config(write_config(tmp_path), output_dir=tmp_path / out)

    def test_write_and_load_round_trip(self, tmp_path):
        cfg = self.make_cfg(tmp_path)
        stage = cfg.stage_dir("tags")
        path = write_manifest(
            stage, "discover-tags", cfg,
            inputs={"train": "train.jsonl"},
            outputs=["report.json"],
            settings={"threshold": 0.1},
        )
        assert path == stage / MANIFEST_NAME
        manifest = load_manifest(stage)
        assert set(manifest) == {
            "command", "config_hash", "run_name", "inputs", "outputs", "settings",
        }
        assert manifest["command"] == "discover-tags"
        assert manifest["config_hash"] == cfg.config_hash
        assert manifest["inputs"] == {"train": "train.jsonl"}
        assert manifest["outputs"] == ["report.json"]
        assert manifest["settings"] == {"threshold": 0.1}

    def test_load_manifest_missing_stage(self, tmp_path):
        cfg = self.make_cfg(tmp_path)
        assert load_manifest(cfg.stage_dir("nowhere")) is None

    def test_check_upstream_missing_stage_is_an_error(self, tmp_path):
        cfg = self.make_cfg(tmp_path)
        with pytest.raises(ConfigError, match="'tags' stage to run first"):
            check_upstream(cfg, "tags", "gen-pos", strict=False)

    def test_check_upstream_matching_hash_is_clean(self, tmp_path):
        cfg = self.make_cfg(tmp_path)
        write_manifest(cfg.stage_dir("tags"), "discover-tags", cfg, {}, [])
        assert check_upstream(cfg, "tags", "gen-pos", strict=False) == []

    def test_check_upstream_mismatch_warns_or_raises(self, tmp_path):
        cfg = self.make_cfg(tmp_path)
        write_manifest(cfg.stage_dir("tags"), "discover-tags", cfg, {}, [])
        changed = load_run_config(
            write_config(tmp_path), overrides={"loss.lambda": 0.9},
            output_dir=cfg.output_dir,
        )
        warnings = check_upstream(changed, "tags", "gen-pos", strict=False)
        assert len(warnings) == 1
        assert "different configuration" in warnings[0]
        with pytest.raises(ConfigError, match="different configuration"):
            check_upstream(changed, "tags", "gen-pos", strict=True)

    def test_manifest_is_deterministic_json(self, tmp_path):
        cfg = self.make_cfg(tmp_path)
        stage = cfg.stage_dir("tags")
        write_manifest(stage, "discover-tags", cfg, {"b": "2", "a": "1"}, ["x"], {"k": 1})
        first = (stage / MANIFEST_NAME).read_bytes()
        write_manifest(stage, "discover-tags", cfg, {"a": "1", "b": "2"}, ["x"], {"k": 1})
        assert (stage / MANIFEST_NAME).read_bytes() == first
        json.loads(first)  # valid JSON
