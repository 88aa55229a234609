"""Multi-label bag-of-words corpora: parsing, vocabulary pruning, statistics,
and train/test label alignment.

A corpus file holds one document per line::

    doc_id<TAB>label1,label2,...<TAB>word:count word:count ...

The label field may be empty (unlabeled test documents). With the ``tokens``
format tag the third field is a whitespace-separated token list instead of
``word:count`` pairs.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence, TextIO

import numpy as np

from .errors import CorpusFormatError, DataError

log = logging.getLogger(__name__)

FORMATS = ("counts", "tokens")


class Dictionary:
    """Bidirectional id <-> string map with ids in insertion order."""

    def __init__(self, strings: Iterable[str] = ()):
        self._strings: list[str] = []
        self._ids: dict[str, int] = {}
        for s in strings:
            self.add(s)

    def add(self, s: str) -> int:
        i = self._ids.get(s)
        if i is None:
            i = len(self._strings)
            self._strings.append(s)
            self._ids[s] = i
        return i

    def id(self, s: str) -> int | None:
        return self._ids.get(s)

    def string(self, i: int) -> str:
        return self._strings[i]

    def __len__(self) -> int:
        return len(self._strings)

    def __iter__(self) -> Iterator[str]:
        return iter(self._strings)

    def __contains__(self, s) -> bool:
        return s in self._ids

    def __eq__(self, other) -> bool:
        return isinstance(other, Dictionary) and self._strings == other._strings

    def __repr__(self) -> str:
        return f"Dictionary(size={len(self)})"

    @property
    def strings(self) -> list[str]:
        return list(self._strings)


# Vocabulary and label dictionaries share the same machinery.
Vocabulary = Dictionary
LabelDictionary = Dictionary


@dataclass(frozen=True)
class Document:
    id: str
    word_counts: dict[int, int]
    labels: tuple[int, ...] = ()

    @property
    def n_words(self) -> int:
        return sum(self.word_counts.values())

    def tokens(self) -> np.ndarray:
        """Word ids expanded to one entry per token, in position order."""
        if not self.word_counts:
            return np.zeros(0, dtype=np.int64)
        ids = np.fromiter(self.word_counts.keys(), dtype=np.int64)
        counts = np.fromiter(self.word_counts.values(), dtype=np.int64)
        return np.repeat(ids, counts)


@dataclass(frozen=True)
class Corpus:
    docs: tuple[Document, ...]
    vocab: Dictionary = field(default_factory=Dictionary)
    label_dict: Dictionary = field(default_factory=Dictionary)

    @property
    def D(self) -> int:
        return len(self.docs)

    @property
    def W(self) -> int:
        return len(self.vocab)

    @property
    def C(self) -> int:
        return len(self.label_dict)

    @property
    def n_tokens(self) -> int:
        return sum(d.n_words for d in self.docs)

    def __len__(self) -> int:
        return len(self.docs)

    def __iter__(self) -> Iterator[Document]:
        return iter(self.docs)

    def __getitem__(self, i: int) -> Document:
        return self.docs[i]

    def token_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Flattened word ids and document offsets (CSR layout)."""
        parts = [d.tokens() for d in self.docs]
        ptr = np.zeros(len(parts) + 1, dtype=np.int64)
        ptr[1:] = np.cumsum([len(p) for p in parts])
        words = np.concatenate(parts) if parts else np.zeros(0, dtype=np.int64)
        return words.astype(np.int64), ptr

    def label_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Flattened label ids and document offsets (CSR layout)."""
        ptr = np.zeros(self.D + 1, dtype=np.int64)
        ptr[1:] = np.cumsum([len(d.labels) for d in self.docs])
        labels = np.fromiter(
            (c for d in self.docs for c in d.labels), dtype=np.int64, count=int(ptr[-1])
        )
        return labels, ptr

    def label_matrix(self, n_labels: int | None = None) -> np.ndarray:
        """Binary D x C ground-truth matrix."""
        C = self.C if n_labels is None else n_labels
        Y = np.zeros((self.D, C), dtype=bool)
        for d, doc in enumerate(self.docs):
            for c in doc.labels:
                if c < C:
                    Y[d, c] = True
        return Y

    def label_frequencies(self) -> np.ndarray:
        freq = np.zeros(self.C, dtype=np.int64)
        for doc in self.docs:
            for c in doc.labels:
                freq[c] += 1
        return freq


def parse_corpus(stream: Iterable[str], fmt: str = "counts") -> Corpus:
    """Read a corpus from an iterable of lines.

    Dictionaries are built in first-appearance order. Duplicate labels within
    a line are collapsed; repeated words within a line have their counts summed.
    Blank lines are ignored.
    """
    if fmt not in FORMATS:
        raise CorpusFormatError(f"unknown corpus format {fmt!r} (expected one of {FORMATS})")
    vocab, labels = Dictionary(), Dictionary()
    docs = []
    for line_no, raw in enumerate(stream, start=1):
        line = raw.rstrip("\r\n")
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) == 2:
            fields.append("")
        if len(fields) != 3:
            raise CorpusFormatError(
                f"expected 3 tab-separated fields, found {len(fields)}", line_no
            )
        doc_id, label_field, word_field = fields
        if not doc_id:
            raise CorpusFormatError("empty document id", line_no)
        doc_labels: list[int] = []
        for name in label_field.split(","):
            name = name.strip()
            if not name:
                continue
            c = labels.add(name)
            if c not in doc_labels:
                doc_labels.append(c)
        counts: dict[int, int] = {}
        for item in word_field.split():
            if fmt == "tokens":
                word, n = item, 1
            else:
                word, sep, n_str = item.rpartition(":")
                if not sep or not word:
                    raise CorpusFormatError(f"malformed word:count item {item!r}", line_no)
                try:
                    n = int(n_str)
                except ValueError:
                    raise CorpusFormatError(f"non-integer count in {item!r}", line_no) from None
                if n <= 0:
                    raise CorpusFormatError(f"non-positive count in {item!r}", line_no)
            w = vocab.add(word)
            counts[w] = counts.get(w, 0) + n
        docs.append(Document(doc_id, counts, tuple(doc_labels)))
    return Corpus(tuple(docs), vocab, labels)


def read_corpus(path, fmt: str = "counts") -> Corpus:
    with open(path, encoding="utf-8") as fh:
        return parse_corpus(fh, fmt)


def serialize_corpus(corpus: Corpus, stream: TextIO) -> None:
    for doc in corpus.docs:
        labels = ",".join(corpus.label_dict.string(c) for c in doc.labels)
        words = " ".join(f"{corpus.vocab.string(w)}:{n}" for w, n in doc.word_counts.items())
        stream.write(f"{doc.id}\t{labels}\t{words}\n")


def write_corpus(corpus: Corpus, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        serialize_corpus(corpus, fh)


def write_dictionary(dictionary: Dictionary, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for i, s in enumerate(dictionary):
            fh.write(f"{i}\t{s}\n")


def read_dictionary(path) -> Dictionary:
    d = Dictionary()
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line:
                continue
            idx, sep, s = line.partition("\t")
            if not sep or not idx.isdigit() or int(idx) != len(d):
                raise CorpusFormatError("dictionary ids must be dense and ordered", line_no)
            d.add(s)
    return d


def prune_vocabulary(
    corpus: Corpus, min_count: int = 20, stopwords: Iterable[str] = ()
) -> Corpus:
    """Drop stopwords and words with fewer than `min_count` corpus occurrences.

    Surviving word ids are re-indexed densely in their original order.
    Documents left without words are dropped.
    """
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    stop = set(stopwords)
    totals = np.zeros(corpus.W, dtype=np.int64)
    for doc in corpus.docs:
        for w, n in doc.word_counts.items():
            totals[w] += n
    vocab = Dictionary()
    remap = {}
    for w, s in enumerate(corpus.vocab):
        if totals[w] >= min_count and s not in stop:
            remap[w] = vocab.add(s)
    docs = []
    dropped = 0
    for doc in corpus.docs:
        counts = {remap[w]: n for w, n in doc.word_counts.items() if w in remap}
        if not counts:
            dropped += 1
            continue
        docs.append(Document(doc.id, counts, doc.labels))
    if dropped:
        log.warning("dropped %d document(s) left empty by vocabulary pruning", dropped)
    return Corpus(tuple(docs), vocab, corpus.label_dict)


@dataclass(frozen=True)
class DatasetStats:
    D: int
    C: int
    cardinality: float
    density: float
    label_freq_mean: float
    label_freq_median: float
    label_freq_mode: int | None
    distinct_labelsets: int
    labelset_freq_mean: float
    unique_labelset_proportion: float
    label_freq_histogram: dict[int, int]

    def rows(self) -> list[tuple[str, str]]:
        mode = "NA" if self.label_freq_mode is None else str(self.label_freq_mode)
        out = [
            ("documents", str(self.D)),
            ("labels", str(self.C)),
            ("cardinality", repr(self.cardinality)),
            ("density", repr(self.density)),
            ("label_freq_mean", repr(self.label_freq_mean)),
            ("label_freq_median", repr(self.label_freq_median)),
            ("label_freq_mode", mode),
            ("distinct_labelsets", str(self.distinct_labelsets)),
            ("labelset_freq_mean", repr(self.labelset_freq_mean)),
            ("unique_labelset_proportion", repr(self.unique_labelset_proportion)),
        ]
        out += [(f"label_freq_hist.{k}", str(v)) for k, v in sorted(self.label_freq_histogram.items())]
        return out


def _mode(values: Sequence[int]) -> int | None:
    # Only defined when some frequency value repeats; ties go to the smaller value.
    counts = Counter(values)
    if not counts:
        return None
    top = max(counts.values())
    if top < 2:
        return None
    return min(v for v, n in counts.items() if n == top)


def corpus_stats(corpus: Corpus) -> DatasetStats:
    """Label statistics of a multi-label corpus (cardinality, density, label-set counts)."""
    if corpus.D == 0:
        raise DataError("corpus_stats requires at least one document")
    D, C = corpus.D, corpus.C
    sizes = np.array([len(d.labels) for d in corpus.docs], dtype=float)
    cardinality = float(sizes.mean())
    density = cardinality / C if C else 0.0
    freq = corpus.label_frequencies()
    labelsets = Counter(frozenset(d.labels) for d in corpus.docs)
    singletons = sum(1 for n in labelsets.values() if n == 1)
    return DatasetStats(
        D=D,
        C=C,
        cardinality=cardinality,
        density=density,
        label_freq_mean=float(freq.mean()) if C else 0.0,
        label_freq_median=float(np.median(freq)) if C else 0.0,
        label_freq_mode=_mode(freq.tolist()),
        distinct_labelsets=len(labelsets),
        labelset_freq_mean=D / len(labelsets),
        unique_labelset_proportion=singletons / D,
        label_freq_histogram=dict(sorted(Counter(freq.tolist()).items())),
    )


POLICIES = ("restrict-to-intersection", "keep-all")


def align_test_labels(
    train: Corpus, test: Corpus, policy: str = "restrict-to-intersection"
) -> tuple[Corpus, np.ndarray]:
    """Re-express `test` in the training dictionaries and pick the evaluated labels.

    Words unknown to the training vocabulary are discarded. Labels unknown to
    the training label dictionary are appended after the training labels (ids
    >= train.C) so that test documents keep their full label sets; they are
    never part of the evaluated set. Documents may end up with no words; the
    inference step reports and skips those.

    Returns the aligned test corpus and the sorted array of evaluated label ids.
    """
    if policy not in POLICIES:
        raise ValueError(f"unknown label policy {policy!r}")
    labels = Dictionary(train.label_dict)
    docs = []
    discarded = 0
    for doc in test.docs:
        counts = {}
        for w, n in doc.word_counts.items():
            tw = train.vocab.id(test.vocab.string(w))
            if tw is None:
                discarded += n
            else:
                counts[tw] = counts.get(tw, 0) + n
        doc_labels = tuple(labels.add(test.label_dict.string(c)) for c in doc.labels)
        docs.append(Document(doc.id, counts, doc_labels))
    if discarded:
        log.info("discarded %d test token(s) outside the training vocabulary", discarded)
    aligned = Corpus(tuple(docs), train.vocab, labels)

    train_freq = train.label_frequencies()
    in_train = train_freq > 0
    if policy == "keep-all":
        evaluated = np.arange(train.C)
    else:
        in_test = np.zeros(train.C, dtype=bool)
        for doc in docs:
            for c in doc.labels:
                if c < train.C:
                    in_test[c] = True
        evaluated = np.flatnonzero(in_train & in_test)
    return aligned, evaluated.astype(np.int64)
