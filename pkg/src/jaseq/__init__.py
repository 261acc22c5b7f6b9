"""Corpus engineering and desk-scale verification for Japanese-aware
sequence-to-sequence pre-training.

Pipeline: parse bunsetsu-annotated corpora -> length filter -> joint BPE
-> masking/reordering training pairs -> tagged multi-task shards ->
tiny trainable encoder-decoder -> BLEU / significance evaluation.
"""

from .corpus import (
    AnnotatedSentence,
    ParallelPair,
    ValidationReport,
    filter_by_length,
    parse_annotated_line,
    read_annotated_corpus,
    read_parallel_corpus,
    read_plain_corpus,
    serialize_sentence,
    validate_corpus,
)
from .errors import (
    AnnotationRequired,
    ConfigError,
    JaseqError,
    ParseError,
    TrainingDiverged,
    VocabMismatch,
)
from .metrics import EvalCorpus, bleu, bootstrap_significance
from .mixing import MixSchedule, TaggedPair, build_shards, read_shard, sample_stats, tag_pair
from .model import (
    TinyModel,
    TinySeq2Seq,
    TrainConfig,
    build_vocab,
    finetune,
    gradient_check,
    train,
    unigram_accuracy,
)
from .objectives import (
    BunsetsuMassPairGenerator,
    MassPairGenerator,
    ReorderConfig,
    ReorderPairGenerator,
    SpanMask,
    TrainingPair,
    make_brss_pair,
    make_masked_pair,
    reorder_bunsetsu,
    sample_bunsetsu_mask,
    sample_mass_mask,
)
from .subword import BpeTokenizer, SubwordModel, apply_bpe, detokenize, learn_bpe

__version__ = "0.1.0"

__all__ = [
    "AnnotatedSentence",
    "AnnotationRequired",
    "BpeTokenizer",
    "BunsetsuMassPairGenerator",
    "ConfigError",
    "EvalCorpus",
    "JaseqError",
    "MassPairGenerator",
    "MixSchedule",
    "ParallelPair",
    "ParseError",
    "ReorderConfig",
    "ReorderPairGenerator",
    "SpanMask",
    "SubwordModel",
    "TaggedPair",
    "TinyModel",
    "TinySeq2Seq",
    "TrainConfig",
    "TrainingDiverged",
    "TrainingPair",
    "ValidationReport",
    "VocabMismatch",
    "apply_bpe",
    "bleu",
    "bootstrap_significance",
    "build_shards",
    "build_vocab",
    "detokenize",
    "filter_by_length",
    "finetune",
    "gradient_check",
    "learn_bpe",
    "make_brss_pair",
    "make_masked_pair",
    "parse_annotated_line",
    "read_annotated_corpus",
    "read_parallel_corpus",
    "read_plain_corpus",
    "read_shard",
    "reorder_bunsetsu",
    "sample_bunsetsu_mask",
    "sample_mass_mask",
    "sample_stats",
    "serialize_sentence",
    "tag_pair",
    "train",
    "unigram_accuracy",
    "validate_corpus",
]
