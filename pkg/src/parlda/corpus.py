"""Corpus types and ingestion.

A corpus is a list of documents, each a list of non-empty paragraphs,
each a list of token ids into a shared vocabulary. Two ingestion routes
exist: plaintext files (blank-line paragraph breaks, alphanumeric
tokenization, optional document-frequency pruning) and a JSONL format
with pre-tokenized paragraphs. ``write_jsonl`` is the inverse of
``ingest_jsonl`` for corpora whose vocabulary is in first-occurrence
order, so round-trips are exact.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

logger = logging.getLogger(__name__)

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


class CorpusFormatError(ValueError):
    """Raised when an input file violates the corpus format."""


@dataclass
class Vocabulary:
    """Dense term-to-id mapping; ids run 0..V-1 with no gaps."""

    terms: list[str]
    index: dict[str, int] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not self.index:
            self.index = {t: i for i, t in enumerate(self.terms)}
        if len(self.index) != len(self.terms):
            raise ValueError("vocabulary contains duplicate terms")

    def __len__(self) -> int:
        return len(self.terms)

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.terms == other.terms

    def id_of(self, term: str) -> int:
        return self.index[term]

    def term_of(self, token_id: int) -> str:
        return self.terms[token_id]


@dataclass(eq=True)
class Document:
    """One document: an id and its paragraphs as token-id lists."""

    id: str
    paragraphs: list[list[int]]


@dataclass(eq=True)
class Corpus:
    """Documents over a shared vocabulary, plus optional gold paragraph labels.

    ``gold_paragraph_labels`` (present only for synthetic corpora) holds one
    0/1 label per paragraph, nested to mirror ``documents``.
    """

    vocabulary: Vocabulary
    documents: list[Document]
    gold_paragraph_labels: list[list[int]] | None = None

    def n_documents(self) -> int:
        return len(self.documents)

    def n_paragraphs(self) -> int:
        return sum(len(d.paragraphs) for d in self.documents)

    def n_tokens(self) -> int:
        return sum(len(p) for d in self.documents for p in d.paragraphs)

    def labels_flat(self) -> list[int] | None:
        if self.gold_paragraph_labels is None:
            return None
        return [x for doc in self.gold_paragraph_labels for x in doc]

    def validate(self) -> None:
        """Check structural invariants, raising ValueError on the first breach."""
        if not self.documents:
            raise ValueError("corpus has no documents")
        v = len(self.vocabulary)
        seen_ids = set()
        for doc in self.documents:
            if doc.id in seen_ids:
                raise ValueError(f"duplicate document id {doc.id!r}")
            seen_ids.add(doc.id)
            if not doc.paragraphs:
                raise ValueError(f"document {doc.id!r} has no paragraphs")
            for par in doc.paragraphs:
                if not par:
                    raise ValueError(f"document {doc.id!r} has an empty paragraph")
                for tok in par:
                    if not 0 <= tok < v:
                        raise ValueError(
                            f"document {doc.id!r} has token id {tok} outside [0, {v})"
                        )
        if self.gold_paragraph_labels is not None:
            if len(self.gold_paragraph_labels) != len(self.documents):
                raise ValueError("gold labels do not align with documents")
            for doc, labels in zip(self.documents, self.gold_paragraph_labels):
                if len(labels) != len(doc.paragraphs):
                    raise ValueError(
                        f"document {doc.id!r}: {len(labels)} labels for "
                        f"{len(doc.paragraphs)} paragraphs"
                    )
                for x in labels:
                    if x not in (0, 1):
                        raise ValueError(f"gold label must be 0 or 1, got {x!r}")


@dataclass
class TokenizerConfig:
    """Plaintext tokenization and pruning settings.

    min_df keeps a term only if it appears in at least that many documents;
    max_df_ratio drops terms present in more than that fraction of documents.
    """

    lowercase: bool = True
    min_token_len: int = 1
    stopwords: frozenset[str] = frozenset()
    min_df: int = 1
    max_df_ratio: float = 1.0

    def validate(self) -> None:
        if self.min_token_len < 1:
            raise ValueError("min_token_len must be >= 1")
        if self.min_df < 1:
            raise ValueError("min_df must be >= 1")
        if not 0.0 < self.max_df_ratio <= 1.0:
            raise ValueError("max_df_ratio must be in (0, 1]")


def _tokenize(text: str, config: TokenizerConfig) -> list[str]:
    if config.lowercase:
        text = text.lower()
    out = []
    for tok in _TOKEN_RE.findall(text):
        if len(tok) < config.min_token_len:
            continue
        if tok in config.stopwords:
            continue
        out.append(tok)
    return out


def _split_paragraph_blocks(text: str) -> list[str]:
    """Split raw text into paragraph blocks on blank lines."""
    blocks = re.split(r"\n\s*\n", text)
    return [b for b in blocks if b.strip()]


def _expand_paths(paths: Sequence[str | Path]) -> list[Path]:
    files: list[Path] = []
    for p in paths:
        p = Path(p)
        if p.is_dir():
            files.extend(sorted(p.glob("*.txt")))
        else:
            files.append(p)
    return files


def _unique_doc_id(stem: str, taken: set[str]) -> str:
    if stem not in taken:
        return stem
    k = 2
    while f"{stem}-{k}" in taken:
        k += 1
    return f"{stem}-{k}"


def ingest_plaintext(paths: Sequence[str | Path], config: TokenizerConfig) -> Corpus:
    """Build a Corpus from plaintext files (one document per file).

    Paragraphs are blank-line separated. After tokenization, terms failing
    the document-frequency bounds are removed; paragraphs and documents
    left empty are dropped silently and counted in a logged summary.
    """
    config.validate()
    files = _expand_paths(paths)
    if not files:
        raise ValueError("no input files")

    raw_docs: list[tuple[str, list[list[str]]]] = []
    taken: set[str] = set()
    for f in files:
        text = Path(f).read_text(encoding="utf-8")
        paragraphs = [_tokenize(b, config) for b in _split_paragraph_blocks(text)]
        paragraphs = [p for p in paragraphs if p]
        if not paragraphs:
            continue
        doc_id = _unique_doc_id(Path(f).stem, taken)
        taken.add(doc_id)
        raw_docs.append((doc_id, paragraphs))

    if not raw_docs:
        raise ValueError("corpus is empty after tokenization")

    # Document frequency over documents that reached this stage.
    n_docs = len(raw_docs)
    df: dict[str, int] = {}
    for _, paragraphs in raw_docs:
        for term in {t for p in paragraphs for t in p}:
            df[term] = df.get(term, 0) + 1
    keep = {
        term
        for term, count in df.items()
        if count >= config.min_df and count / n_docs <= config.max_df_ratio
    }
    if not keep:
        raise ValueError("corpus is empty after document-frequency pruning")

    terms: list[str] = []
    index: dict[str, int] = {}
    documents: list[Document] = []
    dropped_paragraphs = 0
    dropped_documents = 0
    for doc_id, paragraphs in raw_docs:
        id_paragraphs: list[list[int]] = []
        for par in paragraphs:
            ids = []
            for term in par:
                if term not in keep:
                    continue
                if term not in index:
                    index[term] = len(terms)
                    terms.append(term)
                ids.append(index[term])
            if ids:
                id_paragraphs.append(ids)
            else:
                dropped_paragraphs += 1
        if id_paragraphs:
            documents.append(Document(doc_id, id_paragraphs))
        else:
            dropped_documents += 1

    if dropped_paragraphs or dropped_documents:
        logger.info(
            "pruning dropped %d empty paragraphs and %d empty documents",
            dropped_paragraphs,
            dropped_documents,
        )
    corpus = Corpus(Vocabulary(terms, index), documents)
    corpus.validate()
    return corpus


def ingest_jsonl(path: str | Path) -> Corpus:
    """Read a corpus from JSONL (one document per line, pre-tokenized).

    Each record is ``{"id": str, "paragraphs": [[token, ...], ...]}`` with
    an optional ``"labels"`` list of 0/1 per paragraph. Vocabulary ids are
    assigned in first-occurrence order. Format violations raise
    CorpusFormatError with the offending line number.
    """
    terms: list[str] = []
    index: dict[str, int] = {}
    documents: list[Document] = []
    label_rows: list[list[int]] = []
    any_labels = False
    seen_ids: set[str] = set()

    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise CorpusFormatError(f"line {lineno}: invalid JSON ({e})") from e
            if not isinstance(record, dict):
                raise CorpusFormatError(f"line {lineno}: record must be an object")
            doc_id = record.get("id")
            if not isinstance(doc_id, str) or not doc_id:
                raise CorpusFormatError(f"line {lineno}: missing or invalid 'id'")
            if doc_id in seen_ids:
                raise CorpusFormatError(f"line {lineno}: duplicate document id {doc_id!r}")
            seen_ids.add(doc_id)
            paragraphs = record.get("paragraphs")
            if not isinstance(paragraphs, list) or not paragraphs:
                raise CorpusFormatError(f"line {lineno}: 'paragraphs' must be a non-empty list")
            id_paragraphs: list[list[int]] = []
            for p_idx, par in enumerate(paragraphs):
                if not isinstance(par, list) or not par:
                    raise CorpusFormatError(
                        f"line {lineno}: paragraph {p_idx} must be a non-empty list"
                    )
                ids = []
                for tok in par:
                    if not isinstance(tok, str) or not tok:
                        raise CorpusFormatError(
                            f"line {lineno}: paragraph {p_idx} has a non-string token"
                        )
                    if tok not in index:
                        index[tok] = len(terms)
                        terms.append(tok)
                    ids.append(index[tok])
                id_paragraphs.append(ids)
            labels = record.get("labels")
            if labels is not None:
                if (
                    not isinstance(labels, list)
                    or len(labels) != len(paragraphs)
                    or any(x not in (0, 1) for x in labels)
                ):
                    raise CorpusFormatError(
                        f"line {lineno}: 'labels' must be 0/1 with one entry per paragraph"
                    )
                any_labels = True
                label_rows.append([int(x) for x in labels])
            else:
                label_rows.append([])
            documents.append(Document(doc_id, id_paragraphs))

    if not documents:
        raise CorpusFormatError("corpus file contains no documents")
    if any_labels and any(
        len(row) != len(doc.paragraphs) for row, doc in zip(label_rows, documents)
    ):
        raise CorpusFormatError("some documents have labels and others do not")

    corpus = Corpus(
        Vocabulary(terms, index),
        documents,
        gold_paragraph_labels=label_rows if any_labels else None,
    )
    corpus.validate()
    return corpus


def write_jsonl(corpus: Corpus, path: str | Path) -> None:
    """Write a corpus as JSONL with token strings (inverse of ingest_jsonl)."""
    corpus.validate()
    vocab = corpus.vocabulary
    with open(path, "w", encoding="utf-8") as fh:
        for d_idx, doc in enumerate(corpus.documents):
            record: dict = {
                "id": doc.id,
                "paragraphs": [[vocab.term_of(t) for t in par] for par in doc.paragraphs],
            }
            if corpus.gold_paragraph_labels is not None:
                record["labels"] = corpus.gold_paragraph_labels[d_idx]
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def paragraphs_as_text(corpus: Corpus, doc: Document) -> list[str]:
    """Render a document's paragraphs as space-joined term strings."""
    vocab = corpus.vocabulary
    return [" ".join(vocab.term_of(t) for t in par) for par in doc.paragraphs]
