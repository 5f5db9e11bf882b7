"""Paragraph-aware topic modeling with collapsed Gibbs sampling.

The package trains a two-family topic model in which each paragraph is
either general or specific, alongside a plain LDA baseline, generates
synthetic corpora from the same generative story, and evaluates
paragraph detection and topic recovery.
"""

from .corpus import (
    Corpus,
    CorpusFormatError,
    Document,
    TokenizerConfig,
    Vocabulary,
    ingest_jsonl,
    ingest_plaintext,
    paragraphs_as_text,
    write_jsonl,
)
from .evaluation import (
    EvalReport,
    RocResult,
    TopicMatch,
    align_columns,
    coherence_npmi,
    export_features,
    histogram_intersection,
    match_topics,
    roc_curve,
    top_term_ids,
    topic_recovery_count,
)
from .gibbs import (
    FlatCorpus,
    Hyperparams,
    ModelFormatError,
    ModelState,
    Schedule,
    TopicModel,
    VocabularyMismatchError,
    conditional_source_z,
    conditional_x,
    conditional_z,
    infer_heldout,
    init_random,
    load_model,
    log_joint,
    paragraph_type_log_weights,
    resample_paragraph,
    save_model,
    sweep,
    train_lda,
    train_parlda,
)
from .stochastic import Rng
from .synth import (
    GenerativeConfig,
    GroundTruth,
    generate,
    load_truth,
    save_truth,
    split,
)

__version__ = "0.1.0"

__all__ = [
    "Corpus", "CorpusFormatError", "Document", "TokenizerConfig", "Vocabulary",
    "ingest_jsonl", "ingest_plaintext", "paragraphs_as_text", "write_jsonl",
    "EvalReport", "RocResult", "TopicMatch", "align_columns", "coherence_npmi",
    "export_features", "histogram_intersection", "match_topics", "roc_curve",
    "top_term_ids", "topic_recovery_count",
    "FlatCorpus", "Hyperparams", "ModelFormatError", "ModelState", "Schedule",
    "TopicModel", "VocabularyMismatchError", "conditional_source_z",
    "conditional_x", "conditional_z", "infer_heldout", "init_random",
    "load_model", "log_joint", "paragraph_type_log_weights",
    "resample_paragraph", "save_model", "sweep", "train_lda", "train_parlda",
    "Rng",
    "GenerativeConfig", "GroundTruth", "generate", "load_truth", "save_truth",
    "split",
    "__version__",
]
