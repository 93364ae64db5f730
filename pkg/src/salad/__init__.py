"""Shortcut-robust text classification via counterfactual contrast.

The pipeline: score part-of-speech tags by ablation to split them into
causal and non-causal sets, build masked positives by blanking non-causal
tokens, generate label-flipped counterfactual negatives with an LLM (or an
offline stub), fine-tune an encoder on cross-entropy plus a triplet loss
over the (anchor, positive, negative) triplets, and evaluate on in-domain,
counterfactual, and out-of-distribution splits.
"""

from salad.cad_quality import (
    CadQualityReport,
    HashingSentenceEmbedder,
    SentenceEmbedder,
    cad_quality_report,
    diversity,
    embed_similarity,
    make_pairs,
    overlap,
)
from salad.config import RunConfig, load_run_config
from salad.corpus import (
    Dataset,
    LabeledExample,
    Split,
    Task,
    TaskKind,
    detokenize,
    load_dataset,
    save_dataset,
    split_train_val,
    task_for,
    tokenize,
)
from salad.discovery import (
    ClassifierOracle,
    TagImportanceReport,
    TagSetPartition,
    partition_tags,
    score_tags,
)
from salad.encoders import EncoderOracle, ScriptedOracle, TinyTextEncoder, Vocab
from salad.errors import (
    ConfigError,
    DatasetFormatError,
    GenerationError,
    OracleError,
    SaladError,
    TaggerError,
    TrainingError,
)
from salad.evaluation import (
    Domain,
    EvalReport,
    aggregate_overall,
    cross_domain,
    evaluate,
    evaluate_splits,
)
from salad.losses import (
    DistanceKind,
    LossConfig,
    TripletMode,
    combined_loss,
    cross_entropy,
    pair_distance,
    triplet_loss,
)
from salad.negatives import (
    CompletionClient,
    CounterfactualExample,
    GenerationConfig,
    HttpCompletionClient,
    InstructionId,
    PromptTemplate,
    Provenance,
    ResponseCache,
    StubCompletionClient,
    extract_causal_words,
    flip_map,
    generate_negative,
    generate_negatives,
    render_prompt,
)
from salad.positives import (
    PositiveExample,
    PositiveGenConfig,
    compute_k,
    generate_epoch_positives,
    generate_positive,
)
from salad.postag import (
    ALL_TAGS,
    EMPTY_SENTINEL,
    DictionaryTagger,
    NltkTagger,
    TaggedExample,
    Tagger,
    UniversalTag,
    ablate_tag,
    default_dictionary_tagger,
    map_ptb_tag,
    tag,
)
from salad.synthetic import (
    SeedOutcome,
    ShortcutBenchmark,
    SyntheticCorpus,
    make_corpus,
    run_shortcut_benchmark,
)
from salad.training import (
    AugmentedTriplet,
    EpochMetrics,
    TrainingConfig,
    TrainResult,
    train,
    train_all_seeds,
)

__version__ = "0.1.0"

__all__ = [
    "ALL_TAGS",
    "AugmentedTriplet",
    "CadQualityReport",
    "ClassifierOracle",
    "CompletionClient",
    "ConfigError",
    "CounterfactualExample",
    "Dataset",
    "DatasetFormatError",
    "DictionaryTagger",
    "DistanceKind",
    "Domain",
    "EMPTY_SENTINEL",
    "EncoderOracle",
    "EpochMetrics",
    "EvalReport",
    "GenerationConfig",
    "GenerationError",
    "HashingSentenceEmbedder",
    "HttpCompletionClient",
    "InstructionId",
    "LabeledExample",
    "LossConfig",
    "NltkTagger",
    "OracleError",
    "PositiveExample",
    "PositiveGenConfig",
    "PromptTemplate",
    "Provenance",
    "ResponseCache",
    "RunConfig",
    "SaladError",
    "ScriptedOracle",
    "SeedOutcome",
    "SentenceEmbedder",
    "ShortcutBenchmark",
    "Split",
    "StubCompletionClient",
    "SyntheticCorpus",
    "TagImportanceReport",
    "TagSetPartition",
    "TaggedExample",
    "Tagger",
    "TaggerError",
    "Task",
    "TaskKind",
    "TinyTextEncoder",
    "TrainResult",
    "TrainingConfig",
    "TrainingError",
    "TripletMode",
    "UniversalTag",
    "Vocab",
    "ablate_tag",
    "aggregate_overall",
    "cad_quality_report",
    "combined_loss",
    "compute_k",
    "cross_domain",
    "cross_entropy",
    "default_dictionary_tagger",
    "detokenize",
    "diversity",
    "embed_similarity",
    "evaluate",
    "evaluate_splits",
    "extract_causal_words",
    "flip_map",
    "generate_epoch_positives",
    "generate_negative",
    "generate_negatives",
    "generate_positive",
    "load_dataset",
    "load_run_config",
    "make_corpus",
    "make_pairs",
    "map_ptb_tag",
    "overlap",
    "pair_distance",
    "partition_tags",
    "run_shortcut_benchmark",
    "save_dataset",
    "score_tags",
    "split_train_val",
    "tag",
    "task_for",
    "tokenize",
    "train",
    "train_all_seeds",
    "triplet_loss",
]
