"""Collapsed Gibbs sampling for paragraph-aware topic models, plus plain LDA.

The model separates two topic families. Every document mixes general
topics; paragraphs flagged as specific additionally mix a second family
of specific topics, with each word in such a paragraph choosing its
family by a fixed mixing probability. Training integrates the topic and
type proportions out and samples three kinds of assignments:

* per-token topic ``z`` (within the token's current family),
* per-token word source (which family), for tokens in specific paragraphs,
* per-paragraph type ``x`` (general or specific).

A sweep resamples every paragraph type (resampling all token assignments
of paragraphs that flip) and then every token. Paragraph types are drawn
from a blocked conditional that scores the paragraph's words against the
two type-level term-count profiles (a rising-factorial likelihood
evaluated with log-gamma) times a prior factor selected by
``Hyperparams.x_prior``: per-document counts, corpus-wide counts, or no
prior at all.

Held-out inference is fold-in: the topic-term and type-term statistics
of a trained model are frozen and only document-side state is sampled.

``log_joint`` scores a full assignment configuration and is the
reference point for the samplers: every conditional equals a ratio of
joints, which the test suite checks by exhaustive enumeration on tiny
corpora.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import gammaln

from . import _kernels
from .corpus import Corpus
from .stochastic import Rng

logger = logging.getLogger(__name__)

MODEL_FILE_VERSION = 1

_X_PRIOR_CODES = {"document": 0, "corpus": 1, "off": 2}

# Defaults for the multi-start initialization used by train_parlda. The
# paragraph-type conditional scores word counts only, so the two type
# labels are exchangeable a priori and a single chain picks its
# orientation by chance; a handful of short pilot runs scored by
# log_joint (which is orientation-sensitive through the topic families)
# reliably anchors the labels before the real schedule starts.
DEFAULT_CANDIDATE_CHAINS = 6
PILOT_SWEEPS = 30
PILOT_POOL_FACTOR = 3


class ModelFormatError(ValueError):
    """Raised when a model file is missing fields, corrupt, or wrong version."""


class VocabularyMismatchError(ValueError):
    """Raised when a held-out corpus shares too little vocabulary with a model."""


@dataclass
class Hyperparams:
    """Priors and structural constants of the model.

    ``gamma`` is the symmetric prior on per-document paragraph-type
    proportions; ``gamma_words`` smooths the type-level word likelihood
    in the paragraph conditional and defaults to ``gamma`` when unset.
    ``specific_word_prob`` is the probability that a word inside a
    specific paragraph is drawn from the specific family; it is fixed,
    never inferred.
    """

    n_general_topics: int
    n_specific_topics: int = 0
    alpha_general: float = 1.0
    alpha_specific: float = 0.1
    beta_general: float = 0.1
    beta_specific: float = 0.1
    gamma: float = 1.0
    gamma_words: float | None = None
    specific_word_prob: float = 0.5
    x_prior: str = "document"

    @property
    def resolved_gamma_words(self) -> float:
        return self.gamma if self.gamma_words is None else self.gamma_words

    def validate(self, mode: str = "parlda") -> None:
        if mode not in ("parlda", "lda"):
            raise ValueError(f"unknown mode {mode!r}")
        if self.n_general_topics < 1:
            raise ValueError("n_general_topics must be >= 1")
        if not self.alpha_general > 0 or not self.beta_general > 0:
            raise ValueError("general-family priors must be > 0")
        if mode == "lda":
            return
        if self.n_specific_topics < 1:
            raise ValueError("n_specific_topics must be >= 1 for the paragraph model")
        if not self.alpha_specific > 0 or not self.beta_specific > 0:
            raise ValueError("specific-family priors must be > 0")
        if not self.gamma > 0 or not self.resolved_gamma_words > 0:
            raise ValueError("paragraph-type priors must be > 0")
        if not 0.0 <= self.specific_word_prob <= 1.0:
            raise ValueError("specific_word_prob must be in [0, 1]")
        if self.x_prior not in _X_PRIOR_CODES:
            raise ValueError(f"x_prior must be one of {sorted(_X_PRIOR_CODES)}")

    def to_dict(self) -> dict:
        return {
            "n_general_topics": self.n_general_topics,
            "n_specific_topics": self.n_specific_topics,
            "alpha_general": self.alpha_general,
            "alpha_specific": self.alpha_specific,
            "beta_general": self.beta_general,
            "beta_specific": self.beta_specific,
            "gamma": self.gamma,
            "gamma_words": self.gamma_words,
            "specific_word_prob": self.specific_word_prob,
            "x_prior": self.x_prior,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Hyperparams":
        return cls(**d)


@dataclass
class Schedule:
    """Sweep counts and seed for one sampling run."""

    iterations: int
    burn_in: int
    sample_lag: int
    seed: int

    def validate(self) -> None:
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not 0 <= self.burn_in < self.iterations:
            raise ValueError("burn_in must satisfy 0 <= burn_in < iterations")
        if self.sample_lag < 1:
            raise ValueError("sample_lag must be >= 1")
        if self.burn_in + self.sample_lag > self.iterations:
            raise ValueError("schedule collects no samples; extend iterations")

    def sample_iterations(self) -> list[int]:
        return [
            it
            for it in range(1, self.iterations + 1)
            if it > self.burn_in and (it - self.burn_in) % self.sample_lag == 0
        ]


class FlatCorpus:
    """Array view of a corpus: tokens, paragraph ranges, document ids."""

    def __init__(self, token_term, token_par, par_doc, par_start, par_end,
                 doc_par_start, doc_par_end, vocab_size, doc_ids, terms):
        self.token_term = token_term
        self.token_par = token_par
        self.par_doc = par_doc
        self.par_start = par_start
        self.par_end = par_end
        self.doc_par_start = doc_par_start
        self.doc_par_end = doc_par_end
        self.vocab_size = vocab_size
        self.doc_ids = doc_ids
        self.terms = terms

    @property
    def n_tokens(self) -> int:
        return int(self.token_term.shape[0])

    @property
    def n_paragraphs(self) -> int:
        return int(self.par_doc.shape[0])

    @property
    def n_docs(self) -> int:
        return len(self.doc_ids)

    def max_paragraph_len(self) -> int:
        if self.n_paragraphs == 0:
            return 1
        return int(np.max(self.par_end - self.par_start))

    @classmethod
    def from_corpus(cls, corpus: Corpus) -> "FlatCorpus":
        corpus.validate()
        token_term: list[int] = []
        token_par: list[int] = []
        par_doc: list[int] = []
        par_start: list[int] = []
        par_end: list[int] = []
        doc_par_start: list[int] = []
        doc_par_end: list[int] = []
        for d, doc in enumerate(corpus.documents):
            doc_par_start.append(len(par_doc))
            for par in doc.paragraphs:
                p = len(par_doc)
                par_doc.append(d)
                par_start.append(len(token_term))
                for t in par:
                    token_term.append(t)
                    token_par.append(p)
                par_end.append(len(token_term))
            doc_par_end.append(len(par_doc))
        return cls(
            np.asarray(token_term, dtype=np.int32),
            np.asarray(token_par, dtype=np.int32),
            np.asarray(par_doc, dtype=np.int32),
            np.asarray(par_start, dtype=np.int64),
            np.asarray(par_end, dtype=np.int64),
            np.asarray(doc_par_start, dtype=np.int64),
            np.asarray(doc_par_end, dtype=np.int64),
            len(corpus.vocabulary),
            [doc.id for doc in corpus.documents],
            list(corpus.vocabulary.terms),
        )


@dataclass
class ModelState:
    """Assignments plus every count matrix the sampler maintains.

    Counts are float64 throughout: live counts hold exact small integers,
    while frozen (fold-in) type-term counts may be fractional averages.
    ``frozen`` marks fold-in states whose topic-term and type-term
    statistics must not move.
    """

    mode: str
    frozen: bool
    hyper: Hyperparams
    flat: FlatCorpus
    x: np.ndarray
    src: np.ndarray
    z: np.ndarray
    n_doc_general: np.ndarray
    n_doc_specific: np.ndarray
    n_general_term: np.ndarray
    n_general_total: np.ndarray
    n_specific_term: np.ndarray
    n_specific_total: np.ndarray
    n_doc_partype: np.ndarray
    n_partype_term: np.ndarray
    n_partype_total: np.ndarray
    n_partype_global: np.ndarray
    phi_general_frozen: np.ndarray
    phi_specific_frozen: np.ndarray
    rng_state: np.ndarray
    scratch_count: np.ndarray = field(repr=False, default=None)
    scratch_terms: np.ndarray = field(repr=False, default=None)
    weight_buf: np.ndarray = field(repr=False, default=None)
    # For fold-in states built from a corpus with unknown-term paragraphs:
    # boolean mask over the ORIGINAL corpus paragraphs marking which ones
    # this state kept. None means every paragraph is present.
    par_kept: np.ndarray | None = field(repr=False, default=None)

    def __post_init__(self):
        if self.scratch_count is None:
            self.scratch_count = np.zeros(self.flat.vocab_size, dtype=np.float64)
        if self.scratch_terms is None:
            self.scratch_terms = np.zeros(max(1, self.flat.max_paragraph_len()), dtype=np.int64)
        if self.weight_buf is None:
            k = self.hyper.n_general_topics + self.hyper.n_specific_topics
            self.weight_buf = np.zeros(max(1, k), dtype=np.float64)

    # -- count bookkeeping -------------------------------------------------

    def recount(self) -> dict[str, np.ndarray]:
        """Recompute every count matrix from the raw assignments."""
        h = self.hyper
        flat = self.flat
        d_count = flat.n_docs
        v = flat.vocab_size
        k0 = h.n_general_topics
        k1 = h.n_specific_topics if self.mode == "parlda" else 0
        fresh = {
            "n_doc_general": np.zeros((d_count, k0)),
            "n_doc_specific": np.zeros((d_count, k1)),
            "n_general_term": np.zeros((k0, v)),
            "n_general_total": np.zeros(k0),
            "n_specific_term": np.zeros((k1, v)),
            "n_specific_total": np.zeros(k1),
            "n_doc_partype": np.zeros((d_count, 2)),
            "n_partype_term": np.zeros((2, v)),
            "n_partype_total": np.zeros(2),
            "n_partype_global": np.zeros(2),
        }
        for p in range(flat.n_paragraphs):
            d = flat.par_doc[p]
            s = self.x[p]
            fresh["n_doc_partype"][d, s] += 1
            fresh["n_partype_global"][s] += 1
        for i in range(flat.n_tokens):
            t = flat.token_term[i]
            p = flat.token_par[i]
            d = flat.par_doc[p]
            fresh["n_partype_term"][self.x[p], t] += 1
            fresh["n_partype_total"][self.x[p]] += 1
            if self.src[i] == 1:
                fresh["n_doc_specific"][d, self.z[i]] += 1
                fresh["n_specific_term"][self.z[i], t] += 1
                fresh["n_specific_total"][self.z[i]] += 1
            else:
                fresh["n_doc_general"][d, self.z[i]] += 1
                fresh["n_general_term"][self.z[i], t] += 1
                fresh["n_general_total"][self.z[i]] += 1
        return fresh

    def validate_counts(self) -> None:
        """Compare the incremental counts to a from-scratch recount.

        Frozen states keep their type-term and topic-term statistics fixed
        at training values, so for those only document-side matrices are
        checked. Raises RuntimeError on the first mismatch.
        """
        fresh = self.recount()
        doc_side = ["n_doc_general", "n_doc_specific", "n_doc_partype", "n_partype_global"]
        live_side = [
            "n_general_term", "n_general_total",
            "n_specific_term", "n_specific_total",
            "n_partype_term", "n_partype_total",
        ]
        names = doc_side + ([] if self.frozen else live_side)
        for name in names:
            if not np.array_equal(getattr(self, name), fresh[name]):
                raise RuntimeError(f"count matrix {name} diverged from assignments")

    def remove_token(self, i: int) -> None:
        """Drop token i's current assignment from the topic-side counts."""
        t = self.flat.token_term[i]
        d = self.flat.par_doc[self.flat.token_par[i]]
        k = self.z[i]
        if self.src[i] == 1:
            self.n_doc_specific[d, k] -= 1.0
            if not self.frozen:
                self.n_specific_term[k, t] -= 1.0
                self.n_specific_total[k] -= 1.0
        else:
            self.n_doc_general[d, k] -= 1.0
            if not self.frozen:
                self.n_general_term[k, t] -= 1.0
                self.n_general_total[k] -= 1.0

    def add_token(self, i: int, source: int, topic: int) -> None:
        """Insert token i with the given (source, topic) assignment."""
        t = self.flat.token_term[i]
        d = self.flat.par_doc[self.flat.token_par[i]]
        self.src[i] = source
        self.z[i] = topic
        if source == 1:
            self.n_doc_specific[d, topic] += 1.0
            if not self.frozen:
                self.n_specific_term[topic, t] += 1.0
                self.n_specific_total[topic] += 1.0
        else:
            self.n_doc_general[d, topic] += 1.0
            if not self.frozen:
                self.n_general_term[topic, t] += 1.0
                self.n_general_total[topic] += 1.0

    def remove_paragraph_type(self, p: int) -> None:
        """Exclude paragraph p from all paragraph-type counts."""
        d = self.flat.par_doc[p]
        s = self.x[p]
        self.n_doc_partype[d, s] -= 1.0
        self.n_partype_global[s] -= 1.0
        if not self.frozen:
            for i in range(self.flat.par_start[p], self.flat.par_end[p]):
                self.n_partype_term[s, self.flat.token_term[i]] -= 1.0
            self.n_partype_total[s] -= float(self.flat.par_end[p] - self.flat.par_start[p])

    def add_paragraph_type(self, p: int, new_type: int) -> None:
        """Insert paragraph p with the given type."""
        d = self.flat.par_doc[p]
        self.x[p] = new_type
        self.n_doc_partype[d, new_type] += 1.0
        self.n_partype_global[new_type] += 1.0
        if not self.frozen:
            for i in range(self.flat.par_start[p], self.flat.par_end[p]):
                self.n_partype_term[new_type, self.flat.token_term[i]] += 1.0
            self.n_partype_total[new_type] += float(self.flat.par_end[p] - self.flat.par_start[p])

    def paragraph_topic_counts(self) -> np.ndarray:
        """Per-paragraph assignment counts, general topics then specific."""
        k0 = self.hyper.n_general_topics
        k1 = self.n_doc_specific.shape[1]
        out = np.zeros((self.flat.n_paragraphs, k0 + k1), dtype=np.int64)
        for i in range(self.flat.n_tokens):
            p = self.flat.token_par[i]
            if self.src[i] == 1:
                out[p, k0 + self.z[i]] += 1
            else:
                out[p, self.z[i]] += 1
        return out


def _empty_counts(mode: str, hyper: Hyperparams, flat: FlatCorpus) -> dict[str, np.ndarray]:
    k0 = hyper.n_general_topics
    k1 = hyper.n_specific_topics if mode == "parlda" else 0
    d = flat.n_docs
    v = flat.vocab_size
    return {
        "n_doc_general": np.zeros((d, k0)),
        "n_doc_specific": np.zeros((d, k1)),
        "n_general_term": np.zeros((k0, v)),
        "n_general_total": np.zeros(k0),
        "n_specific_term": np.zeros((k1, v)),
        "n_specific_total": np.zeros(k1),
        "n_doc_partype": np.zeros((d, 2)),
        "n_partype_term": np.zeros((2, v)),
        "n_partype_total": np.zeros(2),
        "n_partype_global": np.zeros(2),
    }


def init_random(corpus: Corpus | FlatCorpus, hyper: Hyperparams, rng: Rng,
                mode: str = "parlda") -> ModelState:
    """Random initialization: paragraph types fair-coin, sources by the
    mixing probability, topics uniform within the assigned family.

    All count matrices are rebuilt to match the drawn assignments.
    """
    hyper.validate(mode)
    flat = corpus if isinstance(corpus, FlatCorpus) else FlatCorpus.from_corpus(corpus)
    k0 = hyper.n_general_topics
    k1 = hyper.n_specific_topics if mode == "parlda" else 0
    m = hyper.specific_word_prob

    x = np.zeros(flat.n_paragraphs, dtype=np.int8)
    src = np.zeros(flat.n_tokens, dtype=np.int8)
    z = np.zeros(flat.n_tokens, dtype=np.int32)
    for p in range(flat.n_paragraphs):
        if mode == "parlda":
            x[p] = rng.bernoulli(0.5)
        for i in range(flat.par_start[p], flat.par_end[p]):
            if x[p] == 1:
                src[i] = rng.bernoulli(m)
            z[i] = rng.integers(k1 if src[i] == 1 else k0)

    state = ModelState(
        mode=mode,
        frozen=False,
        hyper=hyper,
        flat=flat,
        x=x,
        src=src,
        z=z,
        **_empty_counts(mode, hyper, flat),
        phi_general_frozen=np.zeros((0, 0)),
        phi_specific_frozen=np.zeros((0, 0)),
        rng_state=np.array([rng.integers(2**63 - 1)], dtype=np.uint64),
    )
    for name, arr in state.recount().items():
        getattr(state, name)[...] = arr
    return state


# -- conditionals ----------------------------------------------------------


def conditional_z(state: ModelState, i: int) -> np.ndarray:
    """Unnormalized topic weights for token i within its current family.

    The caller must have excluded token i's assignment from the counts
    (see ModelState.remove_token).
    """
    h = state.hyper
    flat = state.flat
    t = flat.token_term[i]
    d = flat.par_doc[flat.token_par[i]]
    frozen = int(state.frozen)
    if state.src[i] == 1:
        out = np.empty(state.n_doc_specific.shape[1], dtype=np.float64)
        _kernels.specific_token_weights(
            d, t, state.n_doc_specific, state.n_specific_term, state.n_specific_total,
            h.alpha_specific, h.beta_specific, flat.vocab_size,
            frozen, state.phi_specific_frozen, out,
        )
    else:
        out = np.empty(h.n_general_topics, dtype=np.float64)
        _kernels.general_token_weights(
            d, t, state.n_doc_general, state.n_general_term, state.n_general_total,
            h.alpha_general, h.beta_general, flat.vocab_size,
            frozen, state.phi_general_frozen, out,
        )
    return out


def conditional_source_z(state: ModelState, i: int) -> np.ndarray:
    """Blocked (source, topic) weights for token i in a specific paragraph.

    The first K1 entries are the specific-family outcomes, the last K0 the
    general family. Requires the token excluded from counts beforehand.
    """
    if state.mode != "parlda":
        raise ValueError("source resampling exists only in the paragraph model")
    h = state.hyper
    flat = state.flat
    p = flat.token_par[i]
    if state.x[p] != 1:
        raise ValueError("token is not inside a specific paragraph")
    out = np.empty(h.n_specific_topics + h.n_general_topics, dtype=np.float64)
    _kernels.joint_source_topic_weights(
        flat.par_doc[p], flat.token_term[i],
        state.n_doc_general, state.n_doc_specific,
        state.n_general_term, state.n_general_total,
        state.n_specific_term, state.n_specific_total,
        h.alpha_general, h.alpha_specific, h.beta_general, h.beta_specific,
        h.specific_word_prob, flat.vocab_size,
        int(state.frozen), state.phi_general_frozen, state.phi_specific_frozen, out,
    )
    return out


def paragraph_type_log_weights(state: ModelState, p: int) -> tuple[float, float]:
    """Log weights (general, specific) for paragraph p's type.

    Requires paragraph p excluded from the type counts beforehand
    (ModelState.remove_paragraph_type). Empty paragraphs are rejected.
    """
    flat = state.flat
    if flat.par_end[p] <= flat.par_start[p]:
        raise ValueError(f"paragraph {p} is empty")
    h = state.hyper
    return _kernels.paragraph_log_weights(
        p, flat.token_term, flat.par_start, flat.par_end, flat.par_doc,
        state.n_partype_term, state.n_partype_total, state.n_doc_partype,
        state.n_partype_global,
        h.gamma, h.resolved_gamma_words, flat.vocab_size, _X_PRIOR_CODES[h.x_prior],
        state.scratch_count, state.scratch_terms,
    )


def conditional_x(state: ModelState, p: int) -> float:
    """Probability that paragraph p is specific, given everything else."""
    lw0, lw1 = paragraph_type_log_weights(state, p)
    return float(_kernels.specific_probability(lw0, lw1))


# -- sweeps ----------------------------------------------------------------


def resample_paragraph(state: ModelState, p: int) -> bool:
    """Draw a fresh type for paragraph p; resample its tokens on a flip."""
    if state.mode != "parlda":
        raise ValueError("paragraph resampling exists only in the paragraph model")
    h = state.hyper
    flat = state.flat
    flipped = _kernels.resample_paragraph_kernel(
        p,
        flat.token_term, flat.token_par, flat.par_start, flat.par_end, flat.par_doc,
        state.x, state.src, state.z,
        state.n_doc_general, state.n_doc_specific,
        state.n_general_term, state.n_general_total,
        state.n_specific_term, state.n_specific_total,
        state.n_doc_partype, state.n_partype_term, state.n_partype_total,
        state.n_partype_global,
        h.alpha_general, h.alpha_specific, h.beta_general, h.beta_specific,
        h.gamma, h.resolved_gamma_words, h.specific_word_prob,
        flat.vocab_size, _X_PRIOR_CODES[h.x_prior],
        int(state.frozen), state.phi_general_frozen, state.phi_specific_frozen,
        state.scratch_count, state.scratch_terms, state.weight_buf, state.rng_state,
    )
    return bool(flipped)


def sweep(state: ModelState) -> int:
    """One full pass: all paragraph types, then all tokens. Returns flips."""
    h = state.hyper
    flat = state.flat
    flips = 0
    if state.mode == "parlda":
        flips = int(_kernels.sweep_paragraphs_kernel(
            flat.token_term, flat.token_par, flat.par_start, flat.par_end, flat.par_doc,
            state.x, state.src, state.z,
            state.n_doc_general, state.n_doc_specific,
            state.n_general_term, state.n_general_total,
            state.n_specific_term, state.n_specific_total,
            state.n_doc_partype, state.n_partype_term, state.n_partype_total,
            state.n_partype_global,
            h.alpha_general, h.alpha_specific, h.beta_general, h.beta_specific,
            h.gamma, h.resolved_gamma_words, h.specific_word_prob,
            flat.vocab_size, _X_PRIOR_CODES[h.x_prior],
            int(state.frozen), state.phi_general_frozen, state.phi_specific_frozen,
            state.scratch_count, state.scratch_terms, state.weight_buf, state.rng_state,
        ))
    _kernels.sweep_tokens_kernel(
        flat.token_term, flat.token_par, flat.par_doc,
        state.x, state.src, state.z,
        state.n_doc_general, state.n_doc_specific,
        state.n_general_term, state.n_general_total,
        state.n_specific_term, state.n_specific_total,
        h.alpha_general, h.alpha_specific, h.beta_general, h.beta_specific,
        h.specific_word_prob, flat.vocab_size,
        int(state.frozen), state.phi_general_frozen, state.phi_specific_frozen,
        state.weight_buf, state.rng_state,
    )
    return flips


# -- joint density ---------------------------------------------------------


def _dirichlet_multinomial_block(counts: np.ndarray, totals: np.ndarray,
                                 prior: float, dim: int) -> float:
    """Sum over rows of the collapsed symmetric-Dirichlet count likelihood."""
    if counts.size == 0:
        return 0.0
    rows = counts.shape[0]
    return float(
        np.sum(gammaln(counts + prior))
        - counts.size * gammaln(prior)
        + rows * gammaln(dim * prior)
        - np.sum(gammaln(totals + dim * prior))
    )


def log_joint(state: ModelState) -> float:
    """Log probability of the full assignment configuration and words.

    Collapses the topic, type, and proportion parameters analytically.
    For the paragraph model the factors are: per-topic word counts under
    each family's prior, per-document topic counts split by word source,
    the per-document paragraph-type counts under gamma, and the fixed
    mixing probability applied to each word-source draw inside specific
    paragraphs. The ``x_prior`` ablation switch changes the sampling
    conditional only; the joint always scores the per-document (or, in
    corpus mode, pooled) type counts.

    On frozen fold-in states the topic-term count factors are replaced by
    the log-likelihood of the tokens under the frozen topic rows, and the
    type-vocabulary factor is dropped; the value then serves as a
    convergence trace for held-out sampling rather than a joint density
    of the training model.
    """
    h = state.hyper
    flat = state.flat
    v = flat.vocab_size
    lj = 0.0

    if state.frozen:
        tokens = flat.token_term
        gen_mask = state.src == 0
        if np.any(gen_mask):
            lj += float(np.sum(np.log(
                state.phi_general_frozen[state.z[gen_mask], tokens[gen_mask]]
            )))
        if np.any(~gen_mask):
            lj += float(np.sum(np.log(
                state.phi_specific_frozen[state.z[~gen_mask], tokens[~gen_mask]]
            )))
    else:
        lj += _dirichlet_multinomial_block(
            state.n_general_term, state.n_general_total, h.beta_general, v)
        if state.mode == "parlda":
            lj += _dirichlet_multinomial_block(
                state.n_specific_term, state.n_specific_total, h.beta_specific, v)

    lj += _dirichlet_multinomial_block(
        state.n_doc_general, state.n_doc_general.sum(axis=1),
        h.alpha_general, h.n_general_topics)
    if state.mode == "parlda":
        lj += _dirichlet_multinomial_block(
            state.n_doc_specific, state.n_doc_specific.sum(axis=1),
            h.alpha_specific, h.n_specific_topics)

        if h.x_prior == "corpus":
            lj += _dirichlet_multinomial_block(
                state.n_partype_global[None, :],
                np.array([state.n_partype_global.sum()]),
                h.gamma, 2)
        else:
            lj += _dirichlet_multinomial_block(
                state.n_doc_partype, state.n_doc_partype.sum(axis=1), h.gamma, 2)

        in_specific = state.x[flat.token_par] == 1
        c_specific_src = float(np.sum(state.src == 1))
        c_general_src = float(np.sum(in_specific)) - c_specific_src
        m = h.specific_word_prob
        if c_specific_src > 0:
            lj += c_specific_src * math.log(m)
        if c_general_src > 0:
            lj += c_general_src * math.log(1.0 - m)
    return lj


# -- training --------------------------------------------------------------


@dataclass
class TopicModel:
    """Point estimates averaged over post-burn-in samples.

    ``p_specific`` aligns with corpus paragraphs in document-major order.
    ``type_term_counts`` carries the (sample-averaged) per-type term
    counts needed to fold held-out paragraphs into the type conditional;
    both are None for plain LDA.
    """

    type: str
    hyper: Hyperparams
    vocabulary: list[str]
    phi_general: np.ndarray
    phi_specific: np.ndarray
    theta_general: np.ndarray
    theta_specific: np.ndarray
    p_specific: np.ndarray | None
    type_term_counts: np.ndarray | None
    log_joint_trace: list[float]

    def top_terms(self, family: str, topic: int, n: int = 10) -> list[str]:
        """Top-n terms of one topic; boundary ties resolve to lower term id."""
        row = self.phi_general[topic] if family == "general" else self.phi_specific[topic]
        order = np.lexsort((np.arange(row.shape[0]), -row))
        return [self.vocabulary[j] for j in order[:n]]


class _SampleAccumulator:
    def __init__(self, state: ModelState):
        k0 = state.hyper.n_general_topics
        k1 = state.n_doc_specific.shape[1]
        d = state.flat.n_docs
        v = state.flat.vocab_size
        self.n = 0
        self.phi_general = np.zeros((k0, v))
        self.phi_specific = np.zeros((k1, v))
        self.theta_general = np.zeros((d, k0))
        self.theta_specific = np.zeros((d, k1))
        self.p_specific = np.zeros(state.flat.n_paragraphs)
        self.type_term = np.zeros((2, v))

    def collect(self, state: ModelState) -> None:
        h = state.hyper
        v = state.flat.vocab_size
        self.n += 1
        if state.frozen:
            self.phi_general += state.phi_general_frozen
            self.phi_specific += state.phi_specific_frozen
            self.type_term += state.n_partype_term
        else:
            self.phi_general += (state.n_general_term + h.beta_general) / (
                state.n_general_total + v * h.beta_general)[:, None]
            if self.phi_specific.shape[0]:
                self.phi_specific += (state.n_specific_term + h.beta_specific) / (
                    state.n_specific_total + v * h.beta_specific)[:, None]
            self.type_term += state.n_partype_term
        k0 = h.n_general_topics
        self.theta_general += (state.n_doc_general + h.alpha_general) / (
            state.n_doc_general.sum(axis=1) + k0 * h.alpha_general)[:, None]
        k1 = self.theta_specific.shape[1]
        if k1:
            self.theta_specific += (state.n_doc_specific + h.alpha_specific) / (
                state.n_doc_specific.sum(axis=1) + k1 * h.alpha_specific)[:, None]
        self.p_specific += (state.x == 1)

    def finish(self, state: ModelState) -> TopicModel:
        n = max(self.n, 1)
        is_par = state.mode == "parlda"
        return TopicModel(
            type=state.mode,
            hyper=state.hyper,
            vocabulary=list(state.flat.terms),
            phi_general=self.phi_general / n,
            phi_specific=self.phi_specific / n,
            theta_general=self.theta_general / n,
            theta_specific=self.theta_specific / n,
            p_specific=(self.p_specific / n) if is_par else None,
            type_term_counts=(self.type_term / n) if is_par else None,
            log_joint_trace=[],
        )


def _run_schedule(state: ModelState, schedule: Schedule,
                  debug_recount: bool, trace: list[float]) -> TopicModel:
    acc = _SampleAccumulator(state)
    for it in range(1, schedule.iterations + 1):
        sweep(state)
        trace.append(log_joint(state))
        if debug_recount:
            state.validate_counts()
        if it > schedule.burn_in and (it - schedule.burn_in) % schedule.sample_lag == 0:
            acc.collect(state)
        if it % 100 == 0:
            logger.info("sweep %d/%d log_joint=%.2f", it, schedule.iterations, trace[-1])
    model = acc.finish(state)
    model.log_joint_trace = trace
    return model


def _train_selected(corpus: Corpus | FlatCorpus, hyper: Hyperparams,
                    schedule: Schedule, mode: str, debug_recount: bool,
                    candidate_chains: int) -> TopicModel:
    schedule.validate()
    if candidate_chains < 1:
        raise ValueError("candidate_chains must be >= 1")
    rng = Rng(schedule.seed)
    flat = corpus if isinstance(corpus, FlatCorpus) else FlatCorpus.from_corpus(corpus)

    if candidate_chains == 1:
        state = init_random(flat, hyper, rng, mode=mode)
        return _run_schedule(state, schedule, debug_recount, [])

    # Stage one: a pool of short pilot runs. Roughly half of all random
    # starts fall into the basin where the two paragraph-type labels are
    # mirrored; that basin trails the healthy one by tens of thousands of
    # log-joint units within a few dozen sweeps, so a short pilot is
    # enough to rank it out and not worth a full budget.
    pool = []
    for c in range(PILOT_POOL_FACTOR * candidate_chains):
        cand = init_random(flat, hyper, rng, mode=mode)
        trace = []
        for _ in range(PILOT_SWEEPS):
            sweep(cand)
            trace.append(log_joint(cand))
        pool.append((trace[-1], c, cand, trace))
    pool.sort(key=lambda item: (-item[0], item[1]))

    # Stage two: the surviving starts each run the full schedule and the
    # chain ending at the highest log joint supplies the model. Subtler
    # defects, e.g. one specific slot shadowing general vocabulary while
    # two true themes share a slot, open a log-joint gap only near
    # convergence, which is why this selection cannot happen at pilot
    # time.
    best_score = -math.inf
    best_model = None
    for rank, (_, c, state, trace) in enumerate(pool[:candidate_chains]):
        model = _run_schedule(state, schedule, debug_recount, trace)
        score = model.log_joint_trace[-1]
        logger.info("chain %d/%d (pilot %d) final log_joint=%.2f",
                    rank + 1, candidate_chains, c, score)
        if score > best_score:
            best_score = score
            best_model = model
    return best_model


def train_parlda(corpus: Corpus, hyper: Hyperparams, schedule: Schedule, *,
                 debug_recount: bool = False,
                 candidate_chains: int = DEFAULT_CANDIDATE_CHAINS) -> TopicModel:
    """Train the paragraph model with collapsed Gibbs sampling.

    When ``candidate_chains`` > 1, training draws three times that many
    random starts, advances each through a short pilot, keeps the
    ``candidate_chains`` best pilots, runs those through the full
    schedule, and returns the chain that ends at the highest log joint
    (its own averaged samples, its own trace, pilot sweeps included).
    The two-stage design exists because the chains have two failure
    modes on different timescales: mirrored paragraph-type labels are
    obvious within a few sweeps, while a specific slot shadowing general
    vocabulary (two true themes sharing one slot) only opens a visible
    log-joint gap near convergence. Set ``candidate_chains=1`` for a
    single unfiltered chain at minimum cost. Everything is driven by
    ``schedule.seed``, so identical calls produce identical models.
    """
    hyper.validate("parlda")
    return _train_selected(corpus, hyper, schedule, "parlda", debug_recount,
                           candidate_chains)


def train_lda(corpus: Corpus, hyper: Hyperparams, schedule: Schedule, *,
              debug_recount: bool = False,
              candidate_chains: int = DEFAULT_CANDIDATE_CHAINS) -> TopicModel:
    """Train plain LDA (paragraph boundaries carry no information).

    Uses the general-family hyperparameters; the specific family is absent
    from the result (zero-width matrices, no paragraph probabilities).
    Multi-chain selection works exactly as in train_parlda so comparisons
    between the two models keep the same training budget and estimator.
    """
    hyper.validate("lda")
    return _train_selected(corpus, hyper, schedule, "lda", debug_recount,
                           candidate_chains)


# -- held-out inference ----------------------------------------------------


def _remap_tokens(model: TopicModel, corpus: Corpus, unknown_term_limit: float):
    """Map corpus tokens onto the model vocabulary, dropping unknown terms.

    Returns flat arrays over kept tokens, a keep-mask over paragraphs, and
    the paragraph count of the input corpus.
    """
    corpus.validate()
    model_index = {t: i for i, t in enumerate(model.vocabulary)}
    same_vocab = corpus.vocabulary.terms == model.vocabulary

    token_term: list[int] = []
    token_par: list[int] = []
    par_doc: list[int] = []
    par_start: list[int] = []
    par_end: list[int] = []
    doc_par_start: list[int] = []
    doc_par_end: list[int] = []
    par_kept: list[bool] = []
    unknown = 0
    total = 0
    for d, doc in enumerate(corpus.documents):
        doc_par_start.append(len(par_doc))
        for par in doc.paragraphs:
            ids = []
            for t in par:
                total += 1
                if same_vocab:
                    ids.append(t)
                else:
                    mapped = model_index.get(corpus.vocabulary.term_of(t))
                    if mapped is None:
                        unknown += 1
                    else:
                        ids.append(mapped)
            if not ids:
                par_kept.append(False)
                continue
            par_kept.append(True)
            p = len(par_doc)
            par_doc.append(d)
            par_start.append(len(token_term))
            for t in ids:
                token_term.append(t)
                token_par.append(p)
            par_end.append(len(token_term))
        doc_par_end.append(len(par_doc))

    if total == 0:
        raise VocabularyMismatchError("held-out corpus has no tokens")
    if unknown / total > unknown_term_limit:
        raise VocabularyMismatchError(
            f"{unknown} of {total} held-out tokens are outside the model vocabulary"
        )
    if unknown:
        logger.warning("dropping %d of %d held-out tokens unknown to the model",
                       unknown, total)
    flat = FlatCorpus(
        np.asarray(token_term, dtype=np.int32),
        np.asarray(token_par, dtype=np.int32),
        np.asarray(par_doc, dtype=np.int32),
        np.asarray(par_start, dtype=np.int64),
        np.asarray(par_end, dtype=np.int64),
        np.asarray(doc_par_start, dtype=np.int64),
        np.asarray(doc_par_end, dtype=np.int64),
        len(model.vocabulary),
        [doc.id for doc in corpus.documents],
        list(model.vocabulary),
    )
    return flat, np.asarray(par_kept, dtype=bool)


def infer_heldout(model: TopicModel, corpus: Corpus, hyper: Hyperparams,
                  schedule: Schedule, *, unknown_term_limit: float = 0.1,
                  debug_recount: bool = False, return_state: bool = False):
    """Fold a held-out corpus into a trained model.

    Topic-term and type-term statistics stay frozen at their trained
    values; paragraph types, word sources, topics, and the document-side
    counts are resampled on the held-out corpus with the usual sweeps.
    The result carries held-out document proportions and paragraph
    probabilities (aligned with the input corpus; paragraphs whose tokens
    are all unknown receive the uninformed value 0.5).

    Tokens outside the model vocabulary are dropped with a warning while
    their fraction stays within ``unknown_term_limit``; beyond it the
    vocabularies are considered incompatible and an error is raised.
    """
    hyper.validate(model.type)
    schedule.validate()
    k0, v = model.phi_general.shape
    if hyper.n_general_topics != k0:
        raise ValueError("hyper.n_general_topics does not match the model")
    if model.type == "parlda" and hyper.n_specific_topics != model.phi_specific.shape[0]:
        raise ValueError("hyper.n_specific_topics does not match the model")

    flat, par_kept = _remap_tokens(model, corpus, unknown_term_limit)
    rng = Rng(schedule.seed)
    k1 = hyper.n_specific_topics if model.type == "parlda" else 0
    m = hyper.specific_word_prob

    x = np.zeros(flat.n_paragraphs, dtype=np.int8)
    src = np.zeros(flat.n_tokens, dtype=np.int8)
    z = np.zeros(flat.n_tokens, dtype=np.int32)
    for p in range(flat.n_paragraphs):
        if model.type == "parlda":
            x[p] = rng.bernoulli(0.5)
        for i in range(flat.par_start[p], flat.par_end[p]):
            if x[p] == 1:
                src[i] = rng.bernoulli(m)
            z[i] = rng.integers(k1 if src[i] == 1 else k0)

    counts = _empty_counts(model.type, hyper, flat)
    state = ModelState(
        mode=model.type,
        frozen=True,
        hyper=hyper,
        flat=flat,
        x=x,
        src=src,
        z=z,
        **counts,
        phi_general_frozen=np.ascontiguousarray(model.phi_general, dtype=np.float64),
        phi_specific_frozen=np.ascontiguousarray(model.phi_specific, dtype=np.float64),
        rng_state=np.array([rng.integers(2**63 - 1)], dtype=np.uint64),
    )
    state.par_kept = par_kept
    fresh = state.recount()
    for name in ("n_doc_general", "n_doc_specific", "n_doc_partype", "n_partype_global"):
        getattr(state, name)[...] = fresh[name]
    if model.type == "parlda":
        state.n_partype_term[...] = np.asarray(model.type_term_counts, dtype=np.float64)
        state.n_partype_total[...] = state.n_partype_term.sum(axis=1)

    result = _run_schedule(state, schedule, debug_recount, [])
    result.phi_general = model.phi_general.copy()
    result.phi_specific = model.phi_specific.copy()
    if model.type == "parlda":
        result.type_term_counts = np.asarray(model.type_term_counts).copy()
        full = np.full(len(par_kept), 0.5)
        full[par_kept] = result.p_specific
        dropped = int((~par_kept).sum())
        if dropped:
            logger.warning(
                "%d held-out paragraphs had no known tokens; scoring them 0.5", dropped)
        result.p_specific = full
    result.vocabulary = list(model.vocabulary)
    if return_state:
        return result, state
    return result


# -- persistence -----------------------------------------------------------


def save_model(model: TopicModel, path: str | Path) -> None:
    """Write a model as a single JSON object."""
    payload = {
        "version": MODEL_FILE_VERSION,
        "type": model.type,
        "hyper": model.hyper.to_dict(),
        "vocabulary": model.vocabulary,
        "phi0": model.phi_general.tolist(),
        "phi1": model.phi_specific.tolist(),
        "theta0": model.theta_general.tolist(),
        "theta1": model.theta_specific.tolist(),
        "p_specific": None if model.p_specific is None else model.p_specific.tolist(),
        "type_term_counts": (
            None if model.type_term_counts is None else model.type_term_counts.tolist()
        ),
        "log_joint_trace": list(model.log_joint_trace),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)


def _matrix(rows, n_cols: int) -> np.ndarray:
    arr = np.asarray(rows, dtype=np.float64)
    if arr.size == 0:
        arr = arr.reshape((len(rows), n_cols) if rows else (0, n_cols))
    return arr


def load_model(path: str | Path) -> TopicModel:
    """Read a model written by save_model; strict about version and shape."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
    except json.JSONDecodeError as e:
        raise ModelFormatError(f"model file is not valid JSON: {e}") from e
    if not isinstance(payload, dict):
        raise ModelFormatError("model file must contain a JSON object")
    version = payload.get("version")
    if version != MODEL_FILE_VERSION:
        raise ModelFormatError(
            f"unsupported model version {version!r}; this build reads {MODEL_FILE_VERSION}"
        )
    try:
        model_type = payload["type"]
        hyper = Hyperparams.from_dict(payload["hyper"])
        vocabulary = payload["vocabulary"]
        v = len(vocabulary)
        phi0 = _matrix(payload["phi0"], v)
        phi1 = _matrix(payload["phi1"], v)
        theta0 = _matrix(payload["theta0"], hyper.n_general_topics)
        theta1 = _matrix(payload["theta1"], phi1.shape[0])
        p_specific = payload["p_specific"]
        type_term = payload["type_term_counts"]
        trace = payload["log_joint_trace"]
    except (KeyError, TypeError) as e:
        raise ModelFormatError(f"model file is missing fields: {e}") from e
    if model_type not in ("parlda", "lda"):
        raise ModelFormatError(f"unknown model type {model_type!r}")
    return TopicModel(
        type=model_type,
        hyper=hyper,
        vocabulary=list(vocabulary),
        phi_general=phi0,
        phi_specific=phi1,
        theta_general=theta0,
        theta_specific=theta1,
        p_specific=None if p_specific is None else np.asarray(p_specific, dtype=np.float64),
        type_term_counts=None if type_term is None else np.asarray(type_term, dtype=np.float64),
        log_joint_trace=list(trace),
    )
