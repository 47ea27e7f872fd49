"""Corpus ingestion: tokenization, document filtering, vocabulary building."""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from pathlib import Path

_TOKEN_RE = re.compile(r"[a-z]+|[0-9]+")

NUM_TOKEN = "<num>"


class CorpusError(Exception):
    """Fatal problem while loading a corpus or building a vocabulary."""


def tokenize(text: str) -> list[str]:
    """Lowercase, keep alphabetic runs, bucket digit runs into ``<num>``.

    Total function: any input (including empty) yields a token list.
    """
    tokens = []
    for m in _TOKEN_RE.finditer(text.lower()):
        tok = m.group(0)
        tokens.append(NUM_TOKEN if tok[0].isdigit() else tok)
    return tokens


@dataclass(frozen=True)
class Document:
    doc_id: int
    tokens: tuple[str, ...]
    source_offset: tuple[int, int]  # (byte_start, byte_len) in the origin file
    metadata: str | None = None


@dataclass(frozen=True)
class Corpus:
    docs: tuple[Document, ...]
    path: str

    def __len__(self) -> int:
        return len(self.docs)

    def __iter__(self):
        return iter(self.docs)

    def __getitem__(self, doc_id: int) -> Document:
        return self.docs[doc_id]

    @property
    def n_tokens(self) -> int:
        return sum(len(d.tokens) for d in self.docs)

    def without(self, doc_ids: set[int]) -> "Corpus":
        """New corpus with the given documents removed and ids re-densified."""
        kept = [d for d in self.docs if d.doc_id not in doc_ids]
        docs = tuple(
            Document(i, d.tokens, d.source_offset, d.metadata) for i, d in enumerate(kept)
        )
        return Corpus(docs, self.path)


def _split_records(raw: bytes, sep: str) -> list[tuple[int, int]]:
    """Byte spans of records in ``raw`` under the chosen separator."""
    if sep == "blank":
        delim = re.compile(rb"\n\s*\n")
    elif sep == "line":
        delim = re.compile(rb"\n")
    else:
        raise ValueError(f"unknown record separator {sep!r}")
    spans = []
    start = 0
    for m in delim.finditer(raw):
        spans.append((start, m.start() - start))
        start = m.end()
    if start < len(raw):
        spans.append((start, len(raw) - start))
    return spans


def load_corpus(
    path: str | Path,
    min_len: int = 1,
    max_len: int = 10**9,
    record_sep: str = "blank",
) -> Corpus:
    """Read a corpus file, tokenize, drop documents outside [min_len, max_len].

    Surviving documents are re-indexed densely; the assignment is
    deterministic for a given file and settings.
    """
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise CorpusError(f"cannot read corpus file {path}: {e}") from e

    docs: list[Document] = []
    for start, length in _split_records(raw, record_sep):
        text = raw[start : start + length].decode("utf-8", errors="replace")
        tokens = tokenize(text)
        if min_len <= len(tokens) <= max_len:
            docs.append(Document(len(docs), tuple(tokens), (start, length)))
    if not docs:
        raise CorpusError(
            f"no documents in {path} survive length filter [{min_len}, {max_len}]"
        )
    return Corpus(tuple(docs), str(path))


@dataclass(frozen=True)
class Vocabulary:
    """Frequency-descending word list with dense ids."""

    words: tuple[str, ...]
    counts: tuple[int, ...]
    index: dict[str, int] = field(repr=False, hash=False, compare=False, default=None)

    def __post_init__(self):
        object.__setattr__(self, "index", {w: i for i, w in enumerate(self.words)})

    def __len__(self) -> int:
        return len(self.words)

    def __contains__(self, word: str) -> bool:
        return word in self.index

    def id_of(self, word: str) -> int:
        try:
            return self.index[word]
        except KeyError:
            raise KeyError(f"word {word!r} not in vocabulary") from None

    def checksum(self) -> str:
        h = hashlib.sha256()
        for w, c in zip(self.words, self.counts):
            h.update(f"{w} {c}\n".encode())
        return h.hexdigest()[:16]


def build_vocabulary(corpus: Corpus, min_count: int = 1) -> Vocabulary:
    """Count tokens and keep those with frequency >= min_count.

    Order: descending frequency, ties broken lexicographically.
    """
    counts: dict[str, int] = {}
    for doc in corpus:
        for tok in doc.tokens:
            counts[tok] = counts.get(tok, 0) + 1
    kept = [(w, c) for w, c in counts.items() if c >= min_count]
    if not kept:
        raise CorpusError(f"empty vocabulary at min_count={min_count}")
    kept.sort(key=lambda wc: (-wc[1], wc[0]))
    words, cnts = zip(*kept)
    return Vocabulary(words, cnts)


def save_vocabulary(vocab: Vocabulary, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for w, c in zip(vocab.words, vocab.counts):
            f.write(f"{w} {c}\n")


def load_vocabulary(path: str | Path) -> Vocabulary:
    words, counts = [], []
    with open(path, encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            w, c = line.rsplit(None, 1)
            words.append(w)
            counts.append(int(c))
    if not words:
        raise CorpusError(f"empty vocabulary file {path}")
    return Vocabulary(tuple(words), tuple(counts))


def save_doc_index(corpus: Corpus, path: str | Path) -> None:
    """One ``doc_id<TAB>byte_start<TAB>byte_len<TAB>token_count`` line per doc."""
    with open(path, "w", encoding="utf-8") as f:
        for d in corpus:
            start, length = d.source_offset
            f.write(f"{d.doc_id}\t{start}\t{length}\t{len(d.tokens)}\n")
