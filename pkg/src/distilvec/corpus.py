"""Corpus ingestion: vocabulary building, window iteration, negative sampling.

Input corpora are UTF-8 text files with one pretokenized sentence per line,
tokens separated by single spaces. The toolkit never tokenizes raw text.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np


class EmptyCorpusError(ValueError):
    """Raised when a corpus yields no usable vocabulary."""


@dataclass(frozen=True, eq=False)
class TokenizedSentence:
    """A sentence encoded as vocabulary ids."""

    token_ids: np.ndarray

    def __len__(self) -> int:
        return len(self.token_ids)


@dataclass(frozen=True, eq=False)
class TrainingExample:
    """One center position paired with its in-window context positions.

    Both fields are positions within the sentence, not word ids. Context is
    clipped at sentence boundaries and never padded.
    """

    center_index: int
    context_indices: np.ndarray


class Vocabulary:
    """Word/id maps with per-word counts and the negative-sampling distribution.

    Ids are assigned by descending count, ties broken by first occurrence in
    the corpus, so a rebuilt vocabulary is deterministic for a fixed corpus.
    Immutable after construction; safe to share across threads.
    """

    def __init__(
        self,
        words: Sequence[str],
        counts: Sequence[int],
        noise_exponent: float = 0.75,
    ) -> None:
        if len(words) == 0:
            raise EmptyCorpusError("vocabulary has no words")
        if len(words) != len(counts):
            raise ValueError("words and counts must have the same length")
        self.words: list[str] = list(words)
        self.ids: dict[str, int] = {w: i for i, w in enumerate(self.words)}
        if len(self.ids) != len(self.words):
            raise ValueError("duplicate words in vocabulary")
        self.counts = np.asarray(counts, dtype=np.int64)
        if np.any(self.counts <= 0):
            raise ValueError("all word counts must be positive")
        self.noise_exponent = float(noise_exponent)
        probs = self.counts.astype(np.float64) ** self.noise_exponent
        probs /= probs.sum()
        self.noise_probs = probs
        # Cumulative table for inverse-CDF sampling; last entry is 1 up to
        # float64 rounding.
        self.noise_cdf = np.cumsum(probs)

    def __len__(self) -> int:
        return len(self.words)

    def __contains__(self, word: str) -> bool:
        return word in self.ids

    @property
    def total_tokens(self) -> int:
        return int(self.counts.sum())

    def encode(self, tokens: Sequence[str]) -> tuple[np.ndarray, np.ndarray]:
        """Map tokens to ids, dropping out-of-vocabulary tokens.

        Returns (ids, kept_positions) so callers holding per-token side data
        (e.g. teacher vectors) can drop the same positions.
        """
        kept = [k for k, w in enumerate(tokens) if w in self.ids]
        ids = np.array([self.ids[tokens[k]] for k in kept], dtype=np.int64)
        return ids, np.array(kept, dtype=np.int64)

    def sample_negative(
        self,
        rng: np.random.Generator,
        k: int,
        exclude: frozenset[int] | set[int] = frozenset(),
    ) -> np.ndarray:
        """Draw k ids i.i.d. from the noise distribution, rejecting `exclude`.

        Draws may repeat; only excluded ids are rejected. The rejection loop
        terminates because the vocabulary has more entries than `exclude`.
        """
        if k < 1:
            raise ValueError("k must be >= 1")
        if len(exclude) >= len(self.words):
            raise ValueError("exclude set covers the entire vocabulary")
        out = np.empty(k, dtype=np.int64)
        filled = 0
        batch = max(2 * k, 64)
        while filled < k:
            draws = np.searchsorted(self.noise_cdf, rng.random(batch), side="right")
            draws = np.minimum(draws, len(self.words) - 1)
            if exclude:
                mask = np.isin(draws, list(exclude), invert=True)
                draws = draws[mask]
            take = min(k - filled, len(draws))
            out[filled : filled + take] = draws[:take]
            filled += take
        return out

    def save(self, path: str | Path) -> None:
        """Write one `word<TAB>count` line per entry, ordered by id."""
        with open(path, "w", encoding="utf-8") as f:
            for word, count in zip(self.words, self.counts):
                f.write(f"{word}\t{int(count)}\n")

    @classmethod
    def load(cls, path: str | Path, noise_exponent: float = 0.75) -> "Vocabulary":
        words: list[str] = []
        counts: list[int] = []
        with open(path, encoding="utf-8") as f:
            for lineno, line in enumerate(f, 1):
                line = line.rstrip("\n")
                if not line:
                    continue
                try:
                    word, count = line.split("\t")
                    counts.append(int(count))
                except ValueError as exc:
                    raise ValueError(
                        f"{path}:{lineno}: expected 'word<TAB>count', got {line!r}"
                    ) from exc
                words.append(word)
        return cls(words, counts, noise_exponent=noise_exponent)


def build_vocabulary(
    sentences: Iterable[Sequence[str]],
    min_count: int = 1,
    max_vocab: int | None = None,
    noise_exponent: float = 0.75,
) -> Vocabulary:
    """Count words across sentences and build the vocabulary.

    Keeps exactly the words with count >= min_count, truncated to the
    max_vocab most frequent; ties are broken by first occurrence.
    """
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counts: dict[str, int] = {}
    first_seen: dict[str, int] = {}
    serial = 0
    for sentence in sentences:
        for word in sentence:
            if word not in counts:
                counts[word] = 0
                first_seen[word] = serial
                serial += 1
            counts[word] += 1
    if not counts:
        raise EmptyCorpusError("corpus contains no tokens")
    kept = [w for w, c in counts.items() if c >= min_count]
    if not kept:
        raise EmptyCorpusError(f"no word reaches min_count={min_count}")
    kept.sort(key=lambda w: (-counts[w], first_seen[w]))
    if max_vocab is not None:
        kept = kept[:max_vocab]
    return Vocabulary(kept, [counts[w] for w in kept], noise_exponent=noise_exponent)


def iter_examples(
    sentence: TokenizedSentence | np.ndarray, w_s: int
) -> Iterator[TrainingExample]:
    """Yield one training example per token position with in-window context.

    Context positions are clipped at sentence boundaries; positions with no
    context (length-1 sentences) yield nothing.
    """
    if w_s < 1:
        raise ValueError("window size must be >= 1")
    ids = sentence.token_ids if isinstance(sentence, TokenizedSentence) else sentence
    n = len(ids)
    for i in range(n):
        lo = max(0, i - w_s)
        hi = min(n - 1, i + w_s)
        context = [j for j in range(lo, hi + 1) if j != i]
        if not context:
            continue
        yield TrainingExample(i, np.array(context, dtype=np.int64))


def read_corpus(path: str | Path) -> list[list[str]]:
    """Read a pretokenized corpus, one sentence per line."""
    sentences = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            tokens = line.split()
            if tokens:
                sentences.append(tokens)
    return sentences


def write_corpus(path: str | Path, sentences: Iterable[Sequence[str]]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for sentence in sentences:
            f.write(" ".join(sentence) + "\n")


def filter_by_length(
    sentences: Iterable[Sequence[str]], min_len: int = 10, max_len: int = 40
) -> list[list[str]]:
    """Keep sentences whose token count lies in [min_len, max_len]."""
    return [list(s) for s in sentences if min_len <= len(s) <= max_len]
