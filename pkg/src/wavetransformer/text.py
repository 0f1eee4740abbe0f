"""Caption text pipeline: tokenization, vocabulary, encoding, data splits.

Tokenization rule (fixed, documented): lowercase, drop every Unicode
punctuation character (categories P*), split on whitespace.  Published
metric comparisons against other toolkits are indicative only, since
tokenizers differ.
"""
from __future__ import annotations

import csv
import unicodedata
from collections import Counter
from dataclasses import dataclass, field

from .errors import DataError
from .tensor import RngState

SOS = "<sos>"
EOS = "<eos>"
PAD = "<pad>"
RESERVED = (SOS, EOS, PAD)


def _strip_punct(text: str) -> str:
    return "".join(ch for ch in text if not unicodedata.category(ch).startswith("P"))


def tokenize(raw: str) -> list[str]:
    """Lowercase, punctuation-stripped, whitespace-split word list."""
    words = _strip_punct(raw.lower()).split()
    if not words:
        raise DataError(f"caption empty after cleaning: {raw!r}")
    return words


class Vocabulary:
    """Bijective word <-> index map with <sos>/<eos>/<pad> at indices 0..2."""

    def __init__(self, words: list[str]):
        if list(words[:3]) != list(RESERVED):
            raise DataError(f"vocabulary must start with {RESERVED}")
        if len(set(words)) != len(words):
            raise DataError("duplicate words in vocabulary")
        self._words = list(words)
        self._index = {w: i for i, w in enumerate(self._words)}

    @property
    def size(self) -> int:
        return len(self._words)

    @property
    def sos(self) -> int:
        return self._index[SOS]

    @property
    def eos(self) -> int:
        return self._index[EOS]

    @property
    def pad(self) -> int:
        return self._index[PAD]

    def word(self, idx: int) -> str:
        return self._words[idx]

    def index(self, word: str) -> int:
        try:
            return self._index[word]
        except KeyError:
            raise DataError(f"out-of-vocabulary word: {word!r}") from None

    def __contains__(self, word: str) -> bool:
        return word in self._index

    def words(self) -> list[str]:
        return list(self._words)


def build_vocab(captions: list[list[str]], min_count: int = 1) -> Vocabulary:
    """Vocabulary over tokenized captions.

    Words are ordered by (descending frequency, lexicographic) after the
    three reserved tokens, so identical corpora always index identically.
    """
    counts = Counter()
    for words in captions:
        counts.update(words)
    kept = [w for w, c in counts.items() if c >= min_count]
    kept.sort(key=lambda w: (-counts[w], w))
    return Vocabulary(list(RESERVED) + kept)


@dataclass
class TokenSequence:
    """<sos> ... <eos> [<pad>*] caption encoding."""

    indices: list[int]

    def __len__(self) -> int:
        return len(self.indices)


def encode(caption: str | list[str], vocab: Vocabulary, pad_to: int | None = None) -> TokenSequence:
    words = tokenize(caption) if isinstance(caption, str) else list(caption)
    indices = [vocab.sos] + [vocab.index(w) for w in words] + [vocab.eos]
    if pad_to is not None:
        if pad_to < len(indices):
            raise DataError(f"pad_to={pad_to} shorter than sequence of {len(indices)}")
        indices = indices + [vocab.pad] * (pad_to - len(indices))
    return TokenSequence(indices)


def decode(seq: TokenSequence | list[int], vocab: Vocabulary) -> list[str]:
    """Words between <sos> and <eos>, ignoring padding."""
    indices = seq.indices if isinstance(seq, TokenSequence) else list(seq)
    words = []
    for idx in indices:
        if idx == vocab.sos or idx == vocab.pad:
            continue
        if idx == vocab.eos:
            break
        words.append(vocab.word(idx))
    return words


# ---------------------------------------------------------------------------
# corpora and splits
# ---------------------------------------------------------------------------

@dataclass
class CaptionEntry:
    file_name: str
    captions: list[str]
    tokens: list[list[str]] = field(default=None)

    def __post_init__(self):
        if not self.captions:
            raise DataError(f"{self.file_name}: entry has no captions")
        if self.tokens is None:
            try:
                self.tokens = [tokenize(c) for c in self.captions]
            except DataError as exc:
                raise DataError(f"{self.file_name}: {exc}") from None


@dataclass
class CaptionCorpus:
    entries: list[CaptionEntry]

    def __post_init__(self):
        names = [e.file_name for e in self.entries]
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise DataError(f"duplicate file names in corpus: {dupes[:3]}")

    def __len__(self) -> int:
        return len(self.entries)

    def all_token_lists(self) -> list[list[str]]:
        return [words for e in self.entries for words in e.tokens]


CSV_HEADER = ["file_name", "caption_1", "caption_2", "caption_3", "caption_4", "caption_5"]


def load_caption_csv(path) -> CaptionCorpus:
    """Read `file_name,caption_1,...,caption_5` (UTF-8, RFC-4180 quoting).

    Empty caption cells are dropped; an entry must keep at least one.
    """
    entries = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != CSV_HEADER:
            raise DataError(f"{path}: expected header {CSV_HEADER}, got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(CSV_HEADER):
                raise DataError(f"{path}:{lineno}: expected {len(CSV_HEADER)} columns, got {len(row)}")
            captions = [c for c in row[1:] if c.strip()]
            if not captions:
                raise DataError(f"{path}:{lineno}: entry {row[0]!r} has no captions")
            entries.append(CaptionEntry(row[0], captions))
    return CaptionCorpus(entries)


def write_caption_csv(path, corpus: CaptionCorpus) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for e in corpus.entries:
            caps = list(e.captions[:5])
            caps += [""] * (5 - len(caps))
            writer.writerow([e.file_name] + caps)


def document_frequencies(corpus: CaptionCorpus) -> dict[str, int]:
    """word -> number of distinct audio entries whose captions contain it."""
    df = Counter()
    for e in corpus.entries:
        seen = set()
        for words in e.tokens:
            seen.update(words)
        df.update(seen)
    return dict(df)


def eligible_for_validation(corpus: CaptionCorpus, rarity_threshold: int = 10) -> list[int]:
    """Indices of entries containing no word that appears in fewer than
    `rarity_threshold` distinct audio entries."""
    df = document_frequencies(corpus)
    out = []
    for i, e in enumerate(corpus.entries):
        rare = any(df[w] < rarity_threshold for words in e.tokens for w in words)
        if not rare:
            out.append(i)
    return out


def make_validation_split(
    corpus: CaptionCorpus,
    n: int = 100,
    rarity_threshold: int = 10,
    rng: RngState | None = None,
) -> tuple[CaptionCorpus, CaptionCorpus]:
    """Reserve n eligible entries, chosen uniformly at random, as validation.

    Eligibility excludes any entry with a word occurring in fewer than
    `rarity_threshold` distinct entries, so validation never sees rare words.
    """
    if rng is None:
        rng = RngState(0)
    eligible = eligible_for_validation(corpus, rarity_threshold)
    if len(eligible) < n:
        raise DataError(
            f"only {len(eligible)} entries eligible for validation, need {n}"
        )
    perm = rng.permutation(len(eligible))
    chosen = sorted(eligible[perm[i]] for i in range(n))
    chosen_set = set(chosen)
    val = CaptionCorpus([corpus.entries[i] for i in chosen])
    train = CaptionCorpus([e for i, e in enumerate(corpus.entries) if i not in chosen_set])
    return train, val


def write_split_manifest(path, corpus: CaptionCorpus) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for e in corpus.entries:
            fh.write(e.file_name + "\n")
