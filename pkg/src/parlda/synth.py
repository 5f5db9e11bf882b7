"""Synthetic corpus generation from the paragraph-aware topic model.

``generate`` draws a corpus exactly as the model defines it: two topic
families with their own symmetric Dirichlet priors over the vocabulary,
per-document topic proportions for each family, a per-document
two-outcome type distribution for paragraphs, and a per-document word
mixing probability (fixed, or uniform on a range). Every word in a
general paragraph comes from the general family; words in specific
paragraphs pick their family by the mixing probability first.

The generator records the full ground truth (all latent draws) so that
recovery experiments can compare learned topics and paragraph
probabilities against the real thing.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import Corpus, Document, Vocabulary
from .stochastic import Rng


@dataclass
class GenerativeConfig:
    """Knobs for one synthetic corpus.

    Paragraph and word counts are shifted Poisson draws,
    ``1 + Poisson(mean - 1)``, so no paragraph or document is empty.
    ``word_prob_mode`` selects how the per-document mixing probability is
    set: ``"fixed"`` uses ``specific_word_prob`` for every document,
    ``"uniform"`` draws each document's value from
    ``[specific_word_low, specific_word_high)``.
    """

    vocab_size: int
    n_general_topics: int
    n_specific_topics: int
    n_documents: int
    mean_paragraphs_per_doc: float
    mean_words_per_paragraph: float
    alpha_general: float = 1.0
    alpha_specific: float = 0.1
    beta_general: float = 0.1
    beta_specific: float = 0.1
    gamma: float = 1.0
    word_prob_mode: str = "fixed"
    specific_word_prob: float = 0.5
    specific_word_low: float = 0.2
    specific_word_high: float = 0.8
    seed: int = 0

    def validate(self) -> None:
        if self.vocab_size < 2:
            raise ValueError("vocab_size must be >= 2")
        if self.n_general_topics < 1 or self.n_specific_topics < 1:
            raise ValueError("both topic families need at least one topic")
        if self.n_documents < 1:
            raise ValueError("n_documents must be >= 1")
        if self.mean_paragraphs_per_doc < 1 or self.mean_words_per_paragraph < 1:
            raise ValueError("mean paragraph and word counts must be >= 1")
        for name in ("alpha_general", "alpha_specific", "beta_general",
                     "beta_specific", "gamma"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if self.word_prob_mode == "fixed":
            if not 0.0 <= self.specific_word_prob <= 1.0:
                raise ValueError("specific_word_prob must be in [0, 1]")
        elif self.word_prob_mode == "uniform":
            if not 0.0 <= self.specific_word_low < self.specific_word_high <= 1.0:
                raise ValueError("need 0 <= specific_word_low < specific_word_high <= 1")
        else:
            raise ValueError(f"unknown word_prob_mode {self.word_prob_mode!r}")

    def to_dict(self) -> dict:
        return {
            "vocab_size": self.vocab_size,
            "n_general_topics": self.n_general_topics,
            "n_specific_topics": self.n_specific_topics,
            "n_documents": self.n_documents,
            "mean_paragraphs_per_doc": self.mean_paragraphs_per_doc,
            "mean_words_per_paragraph": self.mean_words_per_paragraph,
            "alpha_general": self.alpha_general,
            "alpha_specific": self.alpha_specific,
            "beta_general": self.beta_general,
            "beta_specific": self.beta_specific,
            "gamma": self.gamma,
            "word_prob_mode": self.word_prob_mode,
            "specific_word_prob": self.specific_word_prob,
            "specific_word_low": self.specific_word_low,
            "specific_word_high": self.specific_word_high,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GenerativeConfig":
        return cls(**d)


@dataclass
class GroundTruth:
    """Every latent quantity behind a synthetic corpus.

    ``paragraph_types``, ``word_sources``, and ``topics`` are nested
    per-document lists mirroring the corpus structure. The vocabulary is
    stored alongside the matrices because a corpus written to disk and
    read back may index terms in a different order.
    """

    vocabulary: list[str]
    doc_ids: list[str]
    phi_general: np.ndarray
    phi_specific: np.ndarray
    theta_general: np.ndarray
    theta_specific: np.ndarray
    psi: np.ndarray
    word_prob_per_doc: np.ndarray
    paragraph_types: list[list[int]]
    word_sources: list[list[list[int]]]
    topics: list[list[list[int]]]


def _inverse_cdf_draws(cdf: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Map uniforms through a cumulative distribution row."""
    idx = np.searchsorted(cdf, u, side="right")
    return np.minimum(idx, cdf.shape[0] - 1)


def generate(config: GenerativeConfig) -> tuple[Corpus, GroundTruth]:
    """Draw one corpus plus its ground truth.

    Terms are named ``t0`` .. ``t{V-1}`` and the corpus vocabulary lists
    them in that order. The draw sequence is fixed (topics first, then
    per document: proportions, type distribution, mixing probability,
    paragraph count, and per paragraph: type, length, then batched
    sources, topics, and words), so a seed fully determines the output.
    """
    config.validate()
    rng = Rng(config.seed)
    v = config.vocab_size
    k0 = config.n_general_topics
    k1 = config.n_specific_topics

    phi_general = np.stack([rng.dirichlet_symmetric(v, config.beta_general)
                            for _ in range(k0)])
    phi_specific = np.stack([rng.dirichlet_symmetric(v, config.beta_specific)
                             for _ in range(k1)])
    phi_general_cdf = np.cumsum(phi_general, axis=1)
    phi_specific_cdf = np.cumsum(phi_specific, axis=1)

    terms = [f"t{i}" for i in range(v)]
    documents: list[Document] = []
    gold_labels: list[list[int]] = []
    doc_ids: list[str] = []
    theta_general = np.zeros((config.n_documents, k0))
    theta_specific = np.zeros((config.n_documents, k1))
    psi = np.zeros((config.n_documents, 2))
    word_prob = np.zeros(config.n_documents)
    paragraph_types: list[list[int]] = []
    word_sources: list[list[list[int]]] = []
    topics: list[list[list[int]]] = []

    for d in range(config.n_documents):
        theta_general[d] = rng.dirichlet_symmetric(k0, config.alpha_general)
        theta_specific[d] = rng.dirichlet_symmetric(k1, config.alpha_specific)
        psi[d] = rng.dirichlet_symmetric(2, config.gamma)
        if config.word_prob_mode == "fixed":
            word_prob[d] = config.specific_word_prob
        else:
            word_prob[d] = rng.uniform_range(config.specific_word_low,
                                             config.specific_word_high)
        theta_general_cdf = np.cumsum(theta_general[d])
        theta_specific_cdf = np.cumsum(theta_specific[d])

        n_pars = 1 + rng.poisson(config.mean_paragraphs_per_doc - 1.0)
        pars: list[list[int]] = []
        types: list[int] = []
        sources: list[list[int]] = []
        doc_topics: list[list[int]] = []
        for _ in range(n_pars):
            x = rng.bernoulli(float(psi[d, 1]))
            n_words = 1 + rng.poisson(config.mean_words_per_paragraph - 1.0)
            if x == 1:
                src = (rng.uniform_many(n_words) < word_prob[d]).astype(np.int8)
            else:
                src = np.zeros(n_words, dtype=np.int8)
            z = np.empty(n_words, dtype=np.int64)
            u_topic = rng.uniform_many(n_words)
            gen_mask = src == 0
            z[gen_mask] = _inverse_cdf_draws(theta_general_cdf, u_topic[gen_mask])
            z[~gen_mask] = _inverse_cdf_draws(theta_specific_cdf, u_topic[~gen_mask])
            w = np.empty(n_words, dtype=np.int64)
            u_word = rng.uniform_many(n_words)
            for j in range(n_words):
                cdf = phi_specific_cdf[z[j]] if src[j] == 1 else phi_general_cdf[z[j]]
                w[j] = _inverse_cdf_draws(cdf, u_word[j:j + 1])[0]
            pars.append([int(t) for t in w])
            types.append(int(x))
            sources.append([int(s) for s in src])
            doc_topics.append([int(t) for t in z])

        doc_id = f"doc-{d:04d}"
        doc_ids.append(doc_id)
        documents.append(Document(id=doc_id, paragraphs=pars))
        gold_labels.append(types)
        paragraph_types.append(types)
        word_sources.append(sources)
        topics.append(doc_topics)

    corpus = Corpus(
        vocabulary=Vocabulary(terms=terms),
        documents=documents,
        gold_paragraph_labels=gold_labels,
    )
    truth = GroundTruth(
        vocabulary=terms,
        doc_ids=doc_ids,
        phi_general=phi_general,
        phi_specific=phi_specific,
        theta_general=theta_general,
        theta_specific=theta_specific,
        psi=psi,
        word_prob_per_doc=word_prob,
        paragraph_types=paragraph_types,
        word_sources=word_sources,
        topics=topics,
    )
    return corpus, truth


def split(corpus: Corpus, test_fraction: float, seed: int) -> tuple[Corpus, Corpus]:
    """Split a corpus into train and test halves at the document level.

    The test set gets ``round(n_documents * test_fraction)`` documents,
    chosen uniformly; both halves keep documents in their original order
    and share the vocabulary. Raises if either side would be empty.
    """
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must be strictly between 0 and 1")
    d = corpus.n_documents()
    n_test = round(d * test_fraction)
    if n_test == 0 or n_test == d:
        raise ValueError(
            f"test_fraction {test_fraction} leaves an empty side for {d} documents"
        )
    rng = Rng(seed)
    perm = rng.permutation(d)
    test_idx = set(int(i) for i in perm[:n_test])

    def take(indices):
        docs = [corpus.documents[i] for i in indices]
        labels = None
        if corpus.gold_paragraph_labels is not None:
            labels = [corpus.gold_paragraph_labels[i] for i in indices]
        return Corpus(vocabulary=corpus.vocabulary, documents=docs,
                      gold_paragraph_labels=labels)

    train = take([i for i in range(d) if i not in test_idx])
    test = take(sorted(test_idx))
    return train, test


def save_truth(truth: GroundTruth, path: str | Path) -> None:
    """Write ground truth as JSON."""
    payload = {
        "vocabulary": truth.vocabulary,
        "doc_ids": truth.doc_ids,
        "phi_general": truth.phi_general.tolist(),
        "phi_specific": truth.phi_specific.tolist(),
        "theta_general": truth.theta_general.tolist(),
        "theta_specific": truth.theta_specific.tolist(),
        "psi": truth.psi.tolist(),
        "word_prob_per_doc": truth.word_prob_per_doc.tolist(),
        "paragraph_types": truth.paragraph_types,
        "word_sources": truth.word_sources,
        "topics": truth.topics,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)


def load_truth(path: str | Path) -> GroundTruth:
    """Read ground truth written by save_truth."""
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    return GroundTruth(
        vocabulary=payload["vocabulary"],
        doc_ids=payload["doc_ids"],
        phi_general=np.asarray(payload["phi_general"], dtype=np.float64),
        phi_specific=np.asarray(payload["phi_specific"], dtype=np.float64),
        theta_general=np.asarray(payload["theta_general"], dtype=np.float64),
        theta_specific=np.asarray(payload["theta_specific"], dtype=np.float64),
        psi=np.asarray(payload["psi"], dtype=np.float64),
        word_prob_per_doc=np.asarray(payload["word_prob_per_doc"], dtype=np.float64),
        paragraph_types=payload["paragraph_types"],
        word_sources=payload["word_sources"],
        topics=payload["topics"],
    )
