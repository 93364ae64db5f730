"""Headline guarantees of the package, each checked end to end.

Every test here prints exactly one ``[criterion N] PASS/FAIL`` line on the
real stdout (bypassing capture) so the suite doubles as a sign-off
checklist.  The checks deliberately avoid the library's own bookkeeping
wherever a value can be recomputed independently: ablation scores are
recounted with a four-line brute force, loss values come from hand
arithmetic, gradients from central differences, and the CLI chain is run
twice and compared byte for byte.
"""

from __future__ import annotations

import math
import random
import shutil
import socket
import time
from contextlib import contextmanager
from hashlib import sha256
from pathlib import Path

import numpy as np
import pytest
import torch
from click.testing import CliRunner

from salad.cad_quality import (
    HashingSentenceEmbedder,
    diversity,
    embed_similarity,
    overlap,
)
from salad.cli import main as cli_main
from salad.corpus import (
    Dataset,
    LabeledExample,
    Split,
    Task,
    TaskKind,
    tokenize,
)
from salad.discovery import partition_tags, score_tags, TagSetPartition
from salad.encoders import TinyTextEncoder, Vocab
from salad.evaluation import aggregate_overall
from salad.losses import (
    DistanceKind,
    LossConfig,
    TripletMode,
    combined_loss,
    cross_entropy,
    pair_distance,
    triplet_loss,
)
from salad.negatives import CounterfactualExample, InstructionId, Provenance
from salad.positives import generate_epoch_positives, k_from_mean
from salad.postag import ALL_TAGS, DictionaryTagger, TaggedExample, UniversalTag
from salad.synthetic import run_shortcut_benchmark


@pytest.fixture
def criterion(capsys):
    """One PASS/FAIL line per check, written through pytest's capture."""

    @contextmanager
    def _criterion(num: int, description: str):
        info: dict[str, str] = {}
        try:
            yield info
        except BaseException:
            with capsys.disabled():
                print(f"\n[criterion {num}] FAIL — {description}", flush=True)
            raise
        detail = f" ({info['detail']})" if "detail" in info else ""
        with capsys.disabled():
            print(f"\n[criterion {num}] PASS — {description}{detail}", flush=True)

    return _criterion


# --------------------------------------------------------------------------
# Criterion 1: tag-ablation scores equal an independent recount.
# --------------------------------------------------------------------------

_LEXICON = {
    "the": UniversalTag.DET,
    "a": UniversalTag.DET,
    "this": UniversalTag.DET,
    "movie": UniversalTag.NOUN,
    "film": UniversalTag.NOUN,
    "plot": UniversalTag.NOUN,
    "acting": UniversalTag.NOUN,
    "ending": UniversalTag.NOUN,
    "dog": UniversalTag.NOUN,
    "park": UniversalTag.NOUN,
    "end": UniversalTag.NOUN,
    "was": UniversalTag.VERB,
    "is": UniversalTag.VERB,
    "liked": UniversalTag.VERB,
    "hated": UniversalTag.VERB,
    "felt": UniversalTag.VERB,
    "like": UniversalTag.VERB,
    "good": UniversalTag.ADJ,
    "bad": UniversalTag.ADJ,
    "great": UniversalTag.ADJ,
    "awful": UniversalTag.ADJ,
    "dull": UniversalTag.ADJ,
    "very": UniversalTag.ADV,
    "not": UniversalTag.ADV,
    "i": UniversalTag.PRON,
    "it": UniversalTag.PRON,
    "we": UniversalTag.PRON,
    "in": UniversalTag.ADP,
    "and": UniversalTag.CONJ,
    "but": UniversalTag.CONJ,
    "to": UniversalTag.PRT,
}

# "!" falls back to PUNCT and "[pad]" to X through the tagger's own rules;
# no NUM token appears anywhere, so that tag must score exactly zero.
_REVIEW_FIXTURE: list[tuple[str, int]] = [
    ("the movie was great !", 1),
    ("the film was awful", 0),
    ("i liked the plot", 1),
    ("i hated the ending", 0),
    ("it was very good", 1),
    ("it was not good", 0),
    ("a great film and a great plot", 1),
    ("the acting felt dull", 0),
    ("we liked it in the end", 1),
    ("the dog liked the park", 1),
    ("this film is good but the plot is bad", 0),
    ("to like this movie is to like bad acting", 0),
    ("the film was good and the plot was good", 1),
    ("i felt it was great", 1),
    ("the park was very bad [pad]", 0),
    ("we hated the dull plot !", 0),
    ("a good movie in a good park", 1),
    ("it is a film", 0),
    ("the plot and the acting", 1),
    ("not awful and not dull", 0),
]


class _TableOracle:
    """Looks the exact text up in a table; anything unseen gets label 0."""

    def __init__(self, table: dict[str, int]):
        self._table = dict(table)

    def predict(self, example: LabeledExample) -> int:
        return self._table.get(example.text_a, 0)


def _brute_force_scores(dataset, oracle, tagger):
    """Recount every tag's importance without touching the library scorer."""
    m = len(dataset.examples)
    acc = sum(oracle.predict(ex) == ex.label for ex in dataset.examples) / m
    scores = {}
    for target in ALL_TAGS:
        correct = 0
        for ex in dataset.examples:
            tokens = tokenize(ex.text_a)
            tags = tagger.tag_tokens(tokens)
            kept = [tok for tok, t in zip(tokens, tags) if t is not target]
            text = " ".join(kept) if kept else "[EMPTY]"
            variant = LabeledExample(id=ex.id, text_a=text, label=ex.label)
            correct += int(oracle.predict(variant) == ex.label)
        scores[target] = acc - correct / m
    return scores


def test_criterion_01_tag_scores_match_independent_recount(criterion):
    with criterion(
        1, "per-tag ablation scores equal an independent recount on 20 examples"
    ) as info:
        started = time.perf_counter()
        examples = [
            LabeledExample(id=f"rv{i:02d}", text_a=text, label=label)
            for i, (text, label) in enumerate(_REVIEW_FIXTURE)
        ]
        dataset = Dataset(
            task=Task(TaskKind.SENTIMENT), split=Split.TRAIN, examples=examples, name="reviews"
        )
        tagger = DictionaryTagger(_LEXICON)
        oracle = _TableOracle({text: label for text, label in _REVIEW_FIXTURE})

        report = score_tags(dataset, oracle, tagger)
        recount = _brute_force_scores(dataset, oracle, tagger)

        assert set(report.per_tag) == set(ALL_TAGS)
        for tag_kind in ALL_TAGS:
            assert report.per_tag[tag_kind] == recount[tag_kind], tag_kind
        # The oracle is perfect on originals, so dropping a tag can only
        # hurt label-1 examples that contain it; several tags must register.
        assert sum(1 for v in report.per_tag.values() if v > 0) >= 4
        assert report.per_tag[UniversalTag.NUM] == 0.0  # absent from the corpus

        # An inclusive threshold keeps a tag scoring exactly at it causal;
        # one representable float above, the same tag flips sides.
        adj_score = report.per_tag[UniversalTag.ADJ]
        assert adj_score > 0
        at_boundary = partition_tags(report, adj_score)
        above_boundary = partition_tags(report, math.nextafter(adj_score, math.inf))
        assert UniversalTag.ADJ in at_boundary.causal
        assert UniversalTag.ADJ in above_boundary.noncausal
        assert at_boundary.causal | at_boundary.noncausal == set(ALL_TAGS)
        assert not at_boundary.causal & at_boundary.noncausal

        elapsed = time.perf_counter() - started
        assert elapsed < 5.0, f"scoring the 20-example corpus took {elapsed:.2f}s"
        info["detail"] = f"12 tags, exact equality, {elapsed:.2f}s"


# --------------------------------------------------------------------------
# Criterion 2: masking-depth rule.
# --------------------------------------------------------------------------


def test_criterion_02_masking_depth_rule(criterion):
    with criterion(
        2, "masking depth is round-half-up of mean non-causal count x scaling, floor 1"
    ) as info:
        cases = [
            (45.0, 0.18, 8),  # 8.1 rounds down to 8
            (25.0, 0.18, 5),  # 4.5 rounds half away from zero to 5
            (27.5, 0.18, 5),  # 4.95 rounds up to 5
            (10.0, 0.25, 3),  # 2.5 rounds half away from zero to 3
            (2.0, 0.18, 1),  # 0.36 clamps to the floor of 1
            (0.0, 0.18, 1),  # empty sentences still mask one slot
            (100.0, 0.0, 1),  # zero scaling clamps to the floor of 1
            (9.0, 0.5, 5),  # 4.5 again, a second half-way case
        ]
        for mean, factor, expected in cases:
            assert k_from_mean(mean, factor) == expected, (mean, factor)
        info["detail"] = f"{len(cases)} hand-computed cases"


# --------------------------------------------------------------------------
# Criterion 3: mask placement invariants and uniformity.
# --------------------------------------------------------------------------

_WORDS = [
    "alpha", "beta", "gamma", "delta", "epsilon", "zeta", "eta", "theta",
    "iota", "kappa", "lam", "mu", "nu", "xi", "omicron", "pi", "rho",
    "sigma", "tau", "upsilon", "phi", "chi", "psi", "omega", "north",
    "south", "east", "west", "river", "stone",
]


def _random_partition_cases() -> int:
    partition = TagSetPartition(
        causal={UniversalTag.ADJ, UniversalTag.VERB, UniversalTag.PRON},
        noncausal=set(ALL_TAGS) - {UniversalTag.ADJ, UniversalTag.VERB, UniversalTag.PRON},
        threshold=0.05,
    )
    cases = 0
    nonempty_masks = 0
    for i in range(1200):
        shape_rng = random.Random(9000 + i)
        n = shape_rng.randint(1, 30)
        tokens = [shape_rng.choice(_WORDS) for _ in range(n)]
        tags = [shape_rng.choice(ALL_TAGS) for _ in range(n)]
        k = shape_rng.randint(1, 6)
        epoch = shape_rng.randint(0, 5)
        seed = shape_rng.randint(0, 3)
        example = LabeledExample(id=f"case-{i}", text_a=" ".join(tokens), label=0)
        tagged = TaggedExample(example=example, tags=tags)

        first = generate_epoch_positives([tagged], partition, k, epoch, seed)[0]
        again = generate_epoch_positives([tagged], partition, k, epoch, seed)[0]
        assert first.text == again.text
        assert first.replaced_positions == again.replaced_positions

        eligible = {p for p, t in enumerate(tags) if t in partition.noncausal}
        positions = first.replaced_positions
        assert positions == sorted(set(positions))
        assert set(positions) <= eligible
        assert len(positions) == min(k, len(eligible))

        new_tokens = tokenize(first.text)
        assert len(new_tokens) == n
        for p in range(n):
            if p in set(positions):
                assert new_tokens[p] == "[unk]"
            else:
                assert new_tokens[p] == tokens[p]
        if positions:
            nonempty_masks += 1
        cases += 1
    assert nonempty_masks > 900  # random tags leave most sentences maskable
    return cases


def _uniformity_deviation() -> float:
    partition = TagSetPartition(
        causal={UniversalTag.ADJ},
        noncausal=set(ALL_TAGS) - {UniversalTag.ADJ},
        threshold=0.05,
    )
    n, k, draws = 10, 3, 1500
    example = LabeledExample(
        id="freq", text_a=" ".join(f"word{p}" for p in range(n)), label=0
    )
    tagged = TaggedExample(example=example, tags=[UniversalTag.NOUN] * n)
    counts = [0] * n
    for epoch in range(draws):
        out = generate_epoch_positives([tagged], partition, k, epoch, 7)[0]
        assert len(out.replaced_positions) == k
        for p in out.replaced_positions:
            counts[p] += 1
    assert sum(counts) == k * draws
    expected = k / n
    band = 3 * math.sqrt(expected * (1 - expected) / draws)
    worst = max(abs(c / draws - expected) for c in counts)
    assert worst <= band, f"per-position frequency off by {worst:.4f} (band {band:.4f})"
    return worst


def test_criterion_03_masking_respects_partition_and_uniformity(criterion):
    with criterion(
        3, "random masks stay inside non-causal positions and spread uniformly"
    ) as info:
        cases = _random_partition_cases()
        worst = _uniformity_deviation()
        info["detail"] = f"{cases} randomized cases; worst frequency deviation {worst:.4f}"


# --------------------------------------------------------------------------
# Criterion 4: loss values against hand arithmetic.
# --------------------------------------------------------------------------


def test_criterion_04_loss_values_match_hand_arithmetic(criterion):
    with criterion(
        4, "loss values match hand arithmetic (1e-6 cross-entropy, 1e-9 triplet)"
    ) as info:
        # Cross-entropy: uniform two-way logits, a confident mistake, a mean.
        assert cross_entropy(torch.tensor([[0.0, 0.0]]), [0]).item() == pytest.approx(
            math.log(2.0), abs=1e-6
        )
        assert cross_entropy(torch.tensor([[2.0, 0.0]]), [1]).item() == pytest.approx(
            math.log(1.0 + math.exp(2.0)), abs=1e-6
        )
        assert cross_entropy(
            torch.tensor([[0.0, 0.0], [2.0, 0.0]]), [0, 1]
        ).item() == pytest.approx(
            (math.log(2.0) + math.log(1.0 + math.exp(2.0))) / 2.0, abs=1e-6
        )

        # Triplets: distances 1 vs 3 satisfy a margin of 1; 2 vs 1 violate it
        # by exactly 2.  A mixed batch separates the two hinge styles:
        # hinge-of-mean gives 0.5 while mean-of-hinges gives 1.0.
        anchor = torch.tensor([[0.0, 0.0], [0.0, 0.0]])
        pos = torch.tensor([[0.0, 1.0], [0.0, 2.0]])
        neg = torch.tensor([[3.0, 0.0], [0.0, 1.0]])
        for mode, sat, viol, mixed in [
            (TripletMode.BATCH_MEAN_HINGE, 0.0, 2.0, 0.5),
            (TripletMode.PER_EXAMPLE_HINGE, 0.0, 2.0, 1.0),
        ]:
            cfg = LossConfig(margin=1.0, triplet_mode=mode)
            assert triplet_loss(anchor[:1], pos[:1], neg[:1], cfg).item() == pytest.approx(
                sat, abs=1e-9
            )
            assert triplet_loss(anchor[1:], pos[1:], neg[1:], cfg).item() == pytest.approx(
                viol, abs=1e-9
            )
            assert triplet_loss(anchor, pos, neg, cfg).item() == pytest.approx(
                mixed, abs=1e-9
            )

        # Cosine distance: aligned pair vs opposite pair spans [0, 2].
        cos_cfg = LossConfig(margin=1.0, distance=DistanceKind.COSINE_DISTANCE)
        aligned = torch.tensor([[1.0, 0.0]])
        opposite = torch.tensor([[-1.0, 0.0]])
        assert triplet_loss(aligned, aligned, opposite, cos_cfg).item() == pytest.approx(
            0.0, abs=1e-9
        )
        assert triplet_loss(aligned, opposite, aligned, cos_cfg).item() == pytest.approx(
            3.0, abs=1e-9
        )

        # The mixture returns its inputs untouched at the endpoints and the
        # exact convex combination inside them.
        ce_term = torch.tensor(1.7, dtype=torch.float64)
        cl_term = torch.tensor(0.3, dtype=torch.float64)
        assert combined_loss(ce_term, cl_term, 0.0) is ce_term
        assert combined_loss(ce_term, cl_term, 1.0) is cl_term
        assert combined_loss(ce_term, cl_term, 0.25).item() == pytest.approx(
            0.75 * 1.7 + 0.25 * 0.3, abs=1e-9
        )
        info["detail"] = "cross-entropy, both hinge styles, both distances, mixture"


# --------------------------------------------------------------------------
# Criterion 5: analytic gradients against central differences.
# --------------------------------------------------------------------------


def test_criterion_05_gradients_match_finite_differences(criterion):
    with criterion(
        5, "analytic gradients match central differences within 1e-4 relative error"
    ) as info:
        started = time.perf_counter()
        vocab = Vocab.from_texts(
            ["good bad movie film plot very dull great was the [UNK]"]
        )
        encoder = TinyTextEncoder(
            vocab, num_classes=2, embed_dim=4, hidden_dim=8, max_seq_len=16, seed=3
        ).double()
        anchors = [
            ["the", "movie", "was", "good"],
            ["the", "film", "was", "bad"],
            ["plot", "very", "dull"],
        ]
        positives = [
            ["the", "[unk]", "was", "good"],
            ["the", "[unk]", "was", "bad"],
            ["plot", "[unk]", "dull"],
        ]
        negatives = [
            ["the", "movie", "was", "bad"],
            ["the", "film", "was", "great"],
            ["plot", "very", "great"],
        ]
        labels = [1, 0, 0]
        h = 1e-6

        def loss_value(cfg: LossConfig) -> torch.Tensor:
            pooled_a, logits_a = encoder.encode_tokens(anchors)
            pooled_p, _ = encoder.encode_tokens(positives)
            pooled_n, _ = encoder.encode_tokens(negatives)
            ce = cross_entropy(logits_a, labels)
            cl = triplet_loss(pooled_a, pooled_p, pooled_n, cfg)
            return combined_loss(ce, cl, 0.5)

        worst = 0.0
        combos = [
            (distance, mode)
            for distance in (DistanceKind.EUCLIDEAN, DistanceKind.COSINE_DISTANCE)
            for mode in (TripletMode.BATCH_MEAN_HINGE, TripletMode.PER_EXAMPLE_HINGE)
        ]
        for distance, mode in combos:
            cfg = LossConfig(margin=5.0, distance=distance, triplet_mode=mode)

            # The hinge must be strictly active so the loss is smooth at the
            # evaluation point and central differences are trustworthy.
            with torch.no_grad():
                pooled_a, _ = encoder.encode_tokens(anchors)
                pooled_p, _ = encoder.encode_tokens(positives)
                pooled_n, _ = encoder.encode_tokens(negatives)
                gap = pair_distance(pooled_a, pooled_p, distance) - pair_distance(
                    pooled_a, pooled_n, distance
                )
            assert (gap + cfg.margin).min().item() > 0.5

            encoder.zero_grad(set_to_none=True)
            loss_value(cfg).backward()
            analytic = [p.grad.detach().clone() for p in encoder.parameters()]

            for param, grad in zip(encoder.parameters(), analytic):
                flat = param.data.view(-1)
                grad_flat = grad.view(-1)
                for idx in range(flat.numel()):
                    original = flat[idx].item()
                    with torch.no_grad():
                        flat[idx] = original + h
                        upper = loss_value(cfg).item()
                        flat[idx] = original - h
                        lower = loss_value(cfg).item()
                        flat[idx] = original
                    numeric = (upper - lower) / (2.0 * h)
                    a = grad_flat[idx].item()
                    rel = abs(a - numeric) / max(abs(a) + abs(numeric), 1e-3)
                    worst = max(worst, rel)
                    assert rel <= 1e-4, (
                        f"{distance.value}/{mode.value}: analytic {a:.3e} vs "
                        f"numeric {numeric:.3e} (rel {rel:.2e})"
                    )

        elapsed = time.perf_counter() - started
        assert elapsed < 30.0, f"gradient check took {elapsed:.1f}s"
        info["detail"] = (
            f"4 distance/hinge combos, worst relative error {worst:.2e}, {elapsed:.1f}s"
        )


# --------------------------------------------------------------------------
# Criterion 6: contrastive training beats plain fine-tuning off-distribution.
# --------------------------------------------------------------------------


def test_criterion_06_contrastive_training_beats_shortcut(criterion):
    with criterion(
        6, "contrastive training beats plain fine-tuning on the shifted test set"
    ) as info:
        started = time.perf_counter()
        bench = run_shortcut_benchmark()
        elapsed = time.perf_counter() - started
        assert elapsed < 600.0, f"benchmark took {elapsed:.0f}s"
        assert len(bench.outcomes) == 3
        for outcome in bench.outcomes:
            assert 0.0 <= outcome.ce_only_odd_acc <= 100.0
            assert 0.0 <= outcome.contrastive_odd_acc <= 100.0
        assert bench.mean_gap >= 5.0, f"mean accuracy gap only {bench.mean_gap:.2f} points"
        assert bench.min_order_fraction >= 0.90, (
            f"triplet ordering only {bench.min_order_fraction:.3f}"
        )
        info["detail"] = (
            f"mean gap {bench.mean_gap:.1f} points, "
            f"min ordering {bench.min_order_fraction:.3f}, {elapsed:.0f}s"
        )


# --------------------------------------------------------------------------
# Criterion 7: the overall column is the arithmetic mean over splits.
# --------------------------------------------------------------------------


def test_criterion_07_overall_column_is_split_mean(criterion):
    with criterion(7, "overall score is the arithmetic mean over splits") as info:
        six_split_row = {
            "sentiment/o": 93.78,
            "sentiment/cf": 95.90,
            "sexism/o": 94.99,
            "sexism/cf": 92.68,
            "nli/o": 95.58,
            "nli/cf": 85.35,
        }
        three_split_row = {"amazon": 93.07, "yelp": 88.47, "imdb": 83.38}
        overall_six = aggregate_overall({"full-method": six_split_row})
        overall_three = aggregate_overall({"full-method": three_split_row})
        assert overall_six["full-method"] == pytest.approx(93.05, abs=5e-3)
        assert overall_three["full-method"] == pytest.approx(88.31, abs=5e-3)
        info["detail"] = "93.05 over six splits, 88.31 over three"


# --------------------------------------------------------------------------
# Criterion 8: counterfactual quality metrics against hand counts.
# --------------------------------------------------------------------------


class _TableEmbedder:
    """Deterministic text -> vector lookup for hand-checkable cosines."""

    mode = "pooled"

    def __init__(self, table: dict[str, list[float]]):
        self._table = {k: np.asarray(v, dtype=np.float64) for k, v in table.items()}

    def embed(self, texts) -> np.ndarray:
        return np.stack([self._table[t] for t in texts])


def test_criterion_08_cad_quality_hand_checked_values(criterion):
    with criterion(
        8, "counterfactual quality metrics reproduce hand-counted values"
    ) as info:
        # Overlap: kept-type fractions 3/4, 1/1, and 0 average to 175/3 %.
        pairs = [
            ("the movie was good", "the movie was bad"),
            ("good good good", "bad good"),
            ("a b c d", "x y"),
        ]
        assert overlap(pairs) == pytest.approx(175.0 / 3.0, abs=1e-9)

        # Diversity: the rewrites introduce exactly the types bad, x, and y.
        train = Dataset(
            task=Task(TaskKind.SENTIMENT),
            split=Split.TRAIN,
            examples=[
                LabeledExample(id="d0", text_a="the movie was good", label=1),
                LabeledExample(id="d1", text_a="good good good", label=1),
                LabeledExample(id="d2", text_a="a b c d", label=0),
            ],
            name="tiny",
        )
        rewrites = [
            CounterfactualExample(
                source_id=source_id,
                text=text,
                label=0,
                instruction_id=InstructionId.I1,
                provenance=Provenance.STUB,
            )
            for source_id, text in [
                ("d0", "the movie was bad"),
                ("d1", "bad good"),
                ("d2", "x y"),
            ]
        ]
        assert diversity(train, rewrites) == 3

        # Embedding similarity: cosines 1, 0, and 0.6 average to 8/15.
        scripted = _TableEmbedder(
            {
                "r1": [1.0, 0.0],
                "c1": [1.0, 0.0],
                "r2": [1.0, 0.0],
                "c2": [0.0, 1.0],
                "r3": [3.0, 4.0],
                "c3": [3.0, 0.0],
            }
        )
        cosine_pairs = [("r1", "c1"), ("r2", "c2"), ("r3", "c3")]
        assert embed_similarity(cosine_pairs, scripted) == pytest.approx(
            8.0 / 15.0, abs=1e-9
        )

        # An identical pair scores 1.0 under any embedder.
        identical = [("the same text twice", "the same text twice")]
        for embedder in (
            HashingSentenceEmbedder(),
            HashingSentenceEmbedder(dim=7),
            _TableEmbedder({"the same text twice": [0.2, 0.4, 0.1]}),
        ):
            assert embed_similarity(identical, embedder) == pytest.approx(1.0, abs=1e-6)
        info["detail"] = "diversity 3, overlap 175/3, cosine 8/15, identical pair 1.0"


# --------------------------------------------------------------------------
# Criterion 9: the offline CLI chain is byte-identical across reruns.
# --------------------------------------------------------------------------

_FIXTURE_FILES = (
    "example_config.yaml",
    "antonyms.tsv",
    "sentiment_train.jsonl",
    "sentiment_o_test.jsonl",
    "sentiment_cf_test.jsonl",
)
_PIPELINE = ("discover-tags", "gen-pos", "gen-neg", "train", "eval", "cad-quality")


def _digest_tree(root: Path) -> dict[str, str]:
    """Relative path -> content digest for every file, response cache aside.

    Cache records carry creation timestamps by design, so they are the one
    part of a run that legitimately differs between repetitions.
    """
    digests: dict[str, str] = {}
    for path in sorted(root.rglob("*")):
        if not path.is_file():
            continue
        rel = path.relative_to(root)
        if "cache" in rel.parts:
            continue
        digests[rel.as_posix()] = sha256(path.read_bytes()).hexdigest()
    return digests


def test_criterion_09_cli_pipeline_offline_and_reproducible(
    criterion, tmp_path, monkeypatch, fixture_dir
):
    with criterion(9, "offline CLI pipeline is byte-identical across reruns") as info:

        def _blocked(*args, **kwargs):
            raise AssertionError("network access attempted during the offline pipeline")

        monkeypatch.setattr(socket.socket, "connect", _blocked)
        monkeypatch.setattr(socket, "create_connection", _blocked)
        monkeypatch.setattr(socket, "getaddrinfo", _blocked)

        work = tmp_path / "work"
        work.mkdir()
        for name in _FIXTURE_FILES:
            shutil.copy(fixture_dir / name, work / name)
        config = work / "example_config.yaml"

        snapshots = []
        for run_dir in ("run-a", "run-b"):
            out = work / run_dir
            for command in _PIPELINE:
                result = CliRunner().invoke(
                    cli_main,
                    [command, "--config", str(config), "--output-dir", str(out)],
                    catch_exceptions=False,
                )
                assert result.exit_code == 0, f"{run_dir}/{command}: {result.output}"
            snapshots.append(_digest_tree(out))

        first, second = snapshots
        assert set(first) == set(second)
        different = sorted(p for p in first if first[p] != second[p])
        assert different == [], f"files differ between reruns: {different}"

        expected = {
            "tags/report.json",
            "positives/positives.jsonl",
            "negatives/negatives.jsonl",
            "negatives/skips.jsonl",
            "train/metrics-seed0.jsonl",
            "train/metrics-seed1.jsonl",
            "eval/report.json",
            "cad/report.json",
        }
        assert expected <= set(first)
        assert any(path.endswith(".pt") for path in first)
        assert all(f"{stage}/manifest.json" in first for stage in (
            "tags", "positives", "negatives", "train", "eval", "cad"
        ))
        # The response cache was written (and deliberately left out above).
        assert list((work / "run-a" / "cache").glob("*.json"))
        info["detail"] = f"{len(first)} artifacts compared, all byte-identical"
