"""Metrics for paragraph classification, topic recovery, and coherence.

Everything here is a pure function over plain arrays or Corpus objects:
ROC/AUC with grouped score ties, one-to-one topic matching by histogram
intersection, recovered-topic counting through that matching, NPMI topic
coherence over sliding windows, and a per-paragraph feature export for
external classifiers.
"""

from __future__ import annotations

import csv
import itertools
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import Corpus

logger = logging.getLogger(__name__)


@dataclass
class RocResult:
    """Threshold-sweep ROC points (fpr, tpr) from (0,0) to (1,1), plus AUC."""

    points: list[tuple[float, float]]
    auc: float


@dataclass
class TopicMatch:
    """One-to-one topic pairing: (true id, learned id, similarity) triples.

    ``unmatched_true`` lists true topics left unpaired when the learned
    model has fewer topics.
    """

    pairs: list[tuple[int, int, float]]
    unmatched_true: list[int]


@dataclass
class EvalReport:
    """Bundle of metric results plus the configuration that produced them."""

    config: dict
    roc: RocResult | None = None
    mean_similarity: float | None = None
    recovered_topics: int | None = None
    coherence_per_topic: list[float] | None = None
    mean_coherence_all: float | None = None
    mean_coherence_specific: float | None = None
    matched_pairs: list[tuple[int, int, float]] | None = None

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "roc": None if self.roc is None else {
                "points": [[float(a), float(b)] for a, b in self.roc.points],
                "auc": self.roc.auc,
            },
            "mean_similarity": self.mean_similarity,
            "recovered_topics": self.recovered_topics,
            "coherence_per_topic": self.coherence_per_topic,
            "mean_coherence_all": self.mean_coherence_all,
            "mean_coherence_specific": self.mean_coherence_specific,
            "matched_pairs": (
                None if self.matched_pairs is None
                else [[int(t), int(l), float(s)] for t, l, s in self.matched_pairs]
            ),
        }


def histogram_intersection(p, q) -> float:
    """Sum of elementwise minima of two probability vectors.

    Equals 1 exactly when the vectors coincide and 0 on disjoint support;
    identically 1 - L1/2 for proper distributions.
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape or p.ndim != 1:
        raise ValueError(f"shape mismatch: {p.shape} vs {q.shape}")
    for name, vec in (("p", p), ("q", q)):
        if abs(float(vec.sum()) - 1.0) > 1e-6:
            raise ValueError(f"{name} does not sum to 1 (got {vec.sum()!r})")
    return float(np.minimum(p, q).sum())


def top_term_ids(matrix: np.ndarray, top_n: int) -> np.ndarray:
    """Per row, the ids of the top_n largest entries, descending.

    Ties on the boundary resolve to the lower term id, so the result is
    unique and deterministic.
    """
    matrix = np.asarray(matrix, dtype=np.float64)
    if top_n > matrix.shape[1]:
        raise ValueError(f"top_n {top_n} exceeds vocabulary size {matrix.shape[1]}")
    ids = np.arange(matrix.shape[1])
    out = np.empty((matrix.shape[0], top_n), dtype=np.int64)
    for k in range(matrix.shape[0]):
        order = np.lexsort((ids, -matrix[k]))
        out[k] = order[:top_n]
    return out


def _similarity_matrix(truth: np.ndarray, learned: np.ndarray) -> np.ndarray:
    sims = np.zeros((truth.shape[0], learned.shape[0]))
    for i in range(truth.shape[0]):
        for j in range(learned.shape[0]):
            sims[i, j] = histogram_intersection(truth[i], learned[j])
    return sims


def match_topics(learned: np.ndarray, truth: np.ndarray,
                 method: str = "greedy") -> TopicMatch:
    """Pair learned topics with true topics by histogram intersection.

    ``greedy`` repeatedly takes the highest remaining similarity, breaking
    exact ties toward the lower true id and then the lower learned id.
    ``exhaustive`` scores every injective assignment (only permitted up to
    8 topics on the larger side) and keeps the best total.
    """
    learned = np.asarray(learned, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if learned.ndim != 2 or truth.ndim != 2 or learned.shape[1] != truth.shape[1]:
        raise ValueError("matrices must share the vocabulary dimension")
    n_true, n_learned = truth.shape[0], learned.shape[0]
    sims = _similarity_matrix(truth, learned)

    if method == "greedy":
        available_true = np.ones(n_true, dtype=bool)
        available_learned = np.ones(n_learned, dtype=bool)
        pairs = []
        for _ in range(min(n_true, n_learned)):
            best = (-1.0, n_true, n_learned)
            for i in range(n_true):
                if not available_true[i]:
                    continue
                for j in range(n_learned):
                    if not available_learned[j]:
                        continue
                    s = sims[i, j]
                    if s > best[0] or (s == best[0] and (i, j) < (best[1], best[2])):
                        best = (s, i, j)
            _, i, j = best
            pairs.append((i, j, float(sims[i, j])))
            available_true[i] = False
            available_learned[j] = False
        pairs.sort(key=lambda t: t[0])
    elif method == "exhaustive":
        if max(n_true, n_learned) > 8:
            raise ValueError("exhaustive matching is limited to 8 topics")
        best_total = -1.0
        best_pairs: list[tuple[int, int, float]] = []
        if n_true <= n_learned:
            for perm in itertools.permutations(range(n_learned), n_true):
                total = sum(sims[i, perm[i]] for i in range(n_true))
                if total > best_total:
                    best_total = total
                    best_pairs = [(i, perm[i], float(sims[i, perm[i]]))
                                  for i in range(n_true)]
        else:
            for perm in itertools.permutations(range(n_true), n_learned):
                total = sum(sims[perm[j], j] for j in range(n_learned))
                if total > best_total:
                    best_total = total
                    best_pairs = sorted(
                        (perm[j], j, float(sims[perm[j], j]))
                        for j in range(n_learned)
                    )
        pairs = best_pairs
    else:
        raise ValueError(f"unknown matching method {method!r}")

    matched_true = {i for i, _, _ in pairs}
    unmatched = [i for i in range(n_true) if i not in matched_true]
    return TopicMatch(pairs=pairs, unmatched_true=unmatched)


def topic_recovery_count(learned: np.ndarray, truth: np.ndarray,
                         top_n: int = 10, overlap_min: int = 5,
                         method: str = "greedy") -> int:
    """Count true topics whose matched learned topic shares enough top terms.

    A true topic is recovered when its match under ``match_topics`` has at
    least ``overlap_min`` terms in common between the two topics' top_n
    lists. True topics left unmatched are never recovered.
    """
    learned = np.asarray(learned, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    match = match_topics(learned, truth, method=method)
    top_true = top_term_ids(truth, top_n)
    top_learned = top_term_ids(learned, top_n)
    count = 0
    for i, j, _ in match.pairs:
        overlap = len(set(top_true[i]) & set(top_learned[j]))
        if overlap >= overlap_min:
            count += 1
    return count


def roc_curve(scores, labels) -> RocResult:
    """ROC by threshold sweep over distinct scores; tied scores move together.

    AUC is the trapezoidal integral of the resulting polyline. Both
    classes must be present.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1 or scores.size == 0:
        raise ValueError("scores and labels must be equal-length non-empty vectors")
    if not np.isin(labels, (0, 1)).all():
        raise ValueError("labels must be 0 or 1")
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("both classes must be present to draw a ROC curve")

    order = np.argsort(-scores, kind="stable")
    points = [(0.0, 0.0)]
    tp = fp = 0
    i = 0
    while i < scores.size:
        j = i
        while j < scores.size and scores[order[j]] == scores[order[i]]:
            if labels[order[j]] == 1:
                tp += 1
            else:
                fp += 1
            j += 1
        points.append((fp / n_neg, tp / n_pos))
        i = j
    fprs = np.array([a for a, _ in points])
    tprs = np.array([b for _, b in points])
    auc = float(np.trapezoid(tprs, fprs))
    return RocResult(points=points, auc=auc)


def coherence_npmi(top_terms: list[list[str]], reference: Corpus,
                   window: int = 20, epsilon: float = 1e-12) -> np.ndarray:
    """Per-topic mean NPMI of top-term pairs over sliding windows.

    Windows of the given width slide one token at a time across each
    reference paragraph (a shorter paragraph is a single window), and
    probabilities are window-occurrence frequencies. A pair's NPMI is
    log((P(i,j)+eps)/(P(i)P(j))) / -log(P(i,j)+eps), clamped to [-1, 1];
    terms always co-occurring score exactly 1. Pairs involving a term
    absent from the reference are skipped; a topic with no scorable pair
    gets 0 with a warning.
    """
    if not top_terms:
        raise ValueError("top_terms must contain at least one topic")
    if window < 1:
        raise ValueError("window must be >= 1")
    if reference.n_tokens() == 0:
        raise ValueError("reference corpus has no tokens")

    vocab_index = reference.vocabulary.index
    cols: dict[int, int] = {}
    for terms in top_terms:
        for term in terms:
            tid = vocab_index.get(term)
            if tid is not None and tid not in cols:
                cols[tid] = len(cols)
    n_rel = len(cols)
    singles = np.zeros(n_rel)
    joint = np.zeros((n_rel, n_rel))
    n_windows = 0
    for doc in reference.documents:
        for par in doc.paragraphs:
            length = len(par)
            starts = range(max(1, length - window + 1))
            for s in starts:
                n_windows += 1
                present = sorted({cols[t] for t in par[s:s + window] if t in cols})
                for a_idx, a in enumerate(present):
                    singles[a] += 1
                    for b in present[a_idx + 1:]:
                        joint[a, b] += 1

    out = np.zeros(len(top_terms))
    for k, terms in enumerate(top_terms):
        values = []
        for t_i, t_j in itertools.combinations(terms, 2):
            c_i = vocab_index.get(t_i)
            c_j = vocab_index.get(t_j)
            if c_i is None or c_j is None:
                continue
            a, b = sorted((cols[c_i], cols[c_j]))
            p_i = singles[a] / n_windows
            p_j = singles[b] / n_windows
            if p_i == 0.0 or p_j == 0.0:
                continue
            p_ij = joint[a, b] / n_windows
            if p_ij >= 1.0:
                values.append(1.0)
                continue
            numerator = math.log(p_ij + epsilon) - math.log(p_i * p_j)
            denominator = -math.log(p_ij + epsilon)
            values.append(min(1.0, max(-1.0, numerator / denominator)))
        if values:
            out[k] = float(np.mean(values))
        else:
            logger.warning("topic %d: every term pair missing from reference; "
                           "coherence set to 0", k)
            out[k] = 0.0
    return out


def align_columns(matrix: np.ndarray, from_terms: list[str],
                  to_terms: list[str]) -> np.ndarray:
    """Reindex matrix columns from one term ordering onto another.

    Columns for terms absent from ``from_terms`` are zero. Used when a
    corpus read back from disk numbers its vocabulary differently than
    the ground truth that generated it.
    """
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.shape[1] != len(from_terms):
        raise ValueError("matrix width does not match from_terms")
    src = {t: i for i, t in enumerate(from_terms)}
    out = np.zeros((matrix.shape[0], len(to_terms)))
    for j, term in enumerate(to_terms):
        i = src.get(term)
        if i is not None:
            out[:, j] = matrix[:, i]
    return out


def export_features(state, corpus: Corpus, path: str | Path,
                    p_specific=None) -> None:
    """Write one CSV row per corpus paragraph with its assignment features.

    Columns: document id, paragraph index within the document, gold label
    (blank when the corpus has none), p_specific (blank for plain LDA),
    then per-topic assignment counts, general family first. Counts sum to
    the number of paragraph tokens the model knows; paragraphs dropped at
    inference time (no known tokens) get all-zero counts.
    """
    counts = state.paragraph_topic_counts()
    kept = getattr(state, "par_kept", None)
    if kept is None:
        kept = np.ones(corpus.n_paragraphs(), dtype=bool)
    if kept.shape[0] != corpus.n_paragraphs():
        raise ValueError("state does not correspond to this corpus")
    if int(kept.sum()) != counts.shape[0]:
        raise ValueError("paragraph bookkeeping mismatch between state and corpus")

    k0 = state.hyper.n_general_topics
    k1 = counts.shape[1] - k0
    header = ["doc_id", "paragraph_index", "gold_label", "p_specific"]
    header += [f"general_{k}" for k in range(k0)]
    header += [f"specific_{k}" for k in range(k1)]

    labels = corpus.gold_paragraph_labels
    if p_specific is not None:
        p_specific = np.asarray(p_specific, dtype=np.float64)
        if p_specific.shape[0] != corpus.n_paragraphs():
            raise ValueError("p_specific length does not match the corpus")

    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        flat_index = 0
        kept_index = 0
        for d, doc in enumerate(corpus.documents):
            for pi in range(len(doc.paragraphs)):
                row = [doc.id, pi]
                row.append("" if labels is None else labels[d][pi])
                row.append("" if p_specific is None else repr(float(p_specific[flat_index])))
                if kept[flat_index]:
                    row.extend(int(c) for c in counts[kept_index])
                    kept_index += 1
                else:
                    row.extend([0] * (k0 + k1))
                writer.writerow(row)
                flat_index += 1
