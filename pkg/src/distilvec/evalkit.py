"""Intrinsic evaluation: word similarity, analogies, category purity, and
nearest-neighbor queries over a trained embedding table.

Every evaluator reports coverage (how many dataset items had all their
words in vocabulary) alongside its score; uncovered items are skipped,
never guessed. All metrics are pure functions of the table and are
deterministic under a fixed seed.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import stats
from sklearn.cluster import KMeans

from .trainer import EmbeddingMatrix

_NORM_FLOOR = 1e-12


class CoverageError(ValueError):
    """Raised when a dataset has too few usable items under the vocabulary."""


def load_similarity(path: str | Path, lowercase: bool = True) -> list[tuple[str, str, float]]:
    """Read a similarity dataset: word_a, word_b, score per line (tab or
    space separated). Rejects duplicate ordered pairs and non-finite scores.
    Lines starting with '#' are skipped."""
    pairs: list[tuple[str, str, float]] = []
    seen: set[tuple[str, str]] = set()
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected 'word_a word_b score'")
            try:
                score = float(parts[2])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: bad score {parts[2]!r}") from exc
            if not np.isfinite(score):
                raise ValueError(f"{path}:{lineno}: non-finite score")
            a, b = parts[0], parts[1]
            if lowercase:
                a, b = a.lower(), b.lower()
            if (a, b) in seen:
                raise ValueError(f"{path}:{lineno}: duplicate pair {a!r}, {b!r}")
            seen.add((a, b))
            pairs.append((a, b, score))
    if not pairs:
        raise ValueError(f"{path}: no pairs found")
    return pairs


def load_analogies(path: str | Path, lowercase: bool = True) -> list[tuple[str, str, str, str]]:
    """Read analogy questions, four distinct words per line. Section headers
    starting with ':' are ignored."""
    quads: list[tuple[str, str, str, str]] = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line or line.startswith(":") or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 4:
                raise ValueError(f"{path}:{lineno}: expected four words")
            if lowercase:
                parts = [p.lower() for p in parts]
            if len(set(parts)) != 4:
                raise ValueError(f"{path}:{lineno}: words must be distinct")
            quads.append((parts[0], parts[1], parts[2], parts[3]))
    if not quads:
        raise ValueError(f"{path}: no questions found")
    return quads


def load_categories(path: str | Path, lowercase: bool = True) -> list[tuple[str, str]]:
    """Read a categorization dataset: word<TAB>category per line. Each word
    may appear once; at least two categories are required."""
    items: list[tuple[str, str]] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[0] or not parts[1]:
                raise ValueError(f"{path}:{lineno}: expected 'word<TAB>category'")
            word = parts[0].lower() if lowercase else parts[0]
            if word in seen:
                raise ValueError(f"{path}:{lineno}: duplicate word {word!r}")
            seen.add(word)
            items.append((word, parts[1]))
    if len({cat for _, cat in items}) < 2:
        raise ValueError(f"{path}: need at least two categories")
    return items


def _unit_rows(table: np.ndarray) -> np.ndarray:
    norms = np.maximum(np.linalg.norm(table, axis=1, keepdims=True), _NORM_FLOOR)
    return table / norms


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    na = max(float(np.linalg.norm(a)), _NORM_FLOOR)
    nb = max(float(np.linalg.norm(b)), _NORM_FLOOR)
    return float(a @ b) / (na * nb)


@dataclass
class SimilarityResult:
    rho: float
    n_total: int
    n_used: int

    @property
    def coverage(self) -> float:
        return self.n_used / self.n_total


def spearman(emb: EmbeddingMatrix, pairs: Sequence[tuple[str, str, float]]) -> SimilarityResult:
    """Spearman rank correlation between model cosine and gold scores, with
    average-rank tie handling.

    Pairs with an out-of-vocabulary word are skipped and counted against
    coverage. Raises CoverageError when fewer than two pairs remain.
    """
    model: list[float] = []
    gold: list[float] = []
    for a, b, score in pairs:
        if a not in emb or b not in emb:
            continue
        model.append(cosine(emb.row(a), emb.row(b)))
        gold.append(score)
    if len(model) < 2:
        raise CoverageError(
            f"similarity needs at least 2 in-vocabulary pairs, got {len(model)}"
        )
    rho = stats.spearmanr(model, gold).statistic
    return SimilarityResult(rho=float(rho), n_total=len(pairs), n_used=len(model))


@dataclass
class AnalogyResult:
    accuracy: float
    n_total: int
    n_used: int
    n_correct: int

    @property
    def coverage(self) -> float:
        return self.n_used / self.n_total


def _analogy(
    emb: EmbeddingMatrix,
    quads: Sequence[tuple[str, str, str, str]],
    method: str,
    epsilon: float,
) -> AnalogyResult:
    unit = _unit_rows(emb.table)
    n_used = 0
    n_correct = 0
    for a, b, c, d in quads:
        if any(w not in emb for w in (a, b, c, d)):
            continue
        n_used += 1
        ia, ib, ic = emb.ids[a], emb.ids[b], emb.ids[c]
        if method == "3cosadd":
            target = unit[ib] - unit[ia] + unit[ic]
            norm = max(float(np.linalg.norm(target)), _NORM_FLOOR)
            scores = unit @ (target / norm)
        else:
            shifted = (1.0 + unit @ unit[[ia, ib, ic]].T) / 2.0
            scores = shifted[:, 1] * shifted[:, 2] / (shifted[:, 0] + epsilon)
        scores[[ia, ib, ic]] = -np.inf
        if emb.words[int(np.argmax(scores))] == d:
            n_correct += 1
    if n_used == 0:
        raise CoverageError("no analogy question fully covered by the vocabulary")
    return AnalogyResult(
        accuracy=n_correct / n_used,
        n_total=len(quads),
        n_used=n_used,
        n_correct=n_correct,
    )


def analogy_3cosadd(
    emb: EmbeddingMatrix, quads: Sequence[tuple[str, str, str, str]]
) -> AnalogyResult:
    """Answer a:b :: c:? as the vocabulary word maximizing cosine to
    (b - a + c) over unit rows, excluding the three question words; correct
    iff the winner is d. Ties resolve to the lowest row id. Questions with
    any out-of-vocabulary word are skipped and counted against coverage.
    """
    return _analogy(emb, quads, "3cosadd", 0.0)


def analogy_3cosmul(
    emb: EmbeddingMatrix,
    quads: Sequence[tuple[str, str, str, str]],
    epsilon: float = 1e-3,
) -> AnalogyResult:
    """Multiplicative analogy variant: candidates ranked by
    cos'(x,b) * cos'(x,c) / (cos'(x,a) + epsilon) with cosines shifted to
    (1 + cos)/2 so every factor stays positive. Same exclusion, tie, and
    coverage rules as analogy_3cosadd.
    """
    return _analogy(emb, quads, "3cosmul", epsilon)


@dataclass
class PurityResult:
    purity: float
    n_total: int
    n_used: int
    n_clusters: int
    labels: np.ndarray
    words: list[str]

    @property
    def coverage(self) -> float:
        return self.n_used / self.n_total


def categorize_purity(
    emb: EmbeddingMatrix,
    items: Sequence[tuple[str, str]],
    seed: int = 0,
    restarts: int = 10,
    k: int | None = None,
) -> PurityResult:
    """Cluster the dataset words with k-means and score purity against gold
    categories.

    Vectors are L2-normalized before clustering; k-means++ seeding, best of
    `restarts` runs by inertia. k defaults to the number of distinct gold
    categories among the covered words. Purity is the sum over clusters of
    the largest gold-category overlap, divided by the number of clustered
    points. The cluster assignment is returned so callers can recheck the
    count.
    """
    covered = [(w, cat) for w, cat in items if w in emb]
    words = [w for w, _ in covered]
    cats = [cat for _, cat in covered]
    if k is None:
        k = max(len(set(cats)), 1)  # 0 covered words falls to CoverageError below
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(words) < max(k, 2):
        raise CoverageError(
            f"categorization needs at least {max(k, 2)} in-vocabulary words, got {len(words)}"
        )
    vectors = _unit_rows(np.stack([emb.row(w) for w in words]))
    km = KMeans(n_clusters=k, n_init=restarts, random_state=seed, init="k-means++")
    labels = km.fit_predict(vectors)
    correct = 0
    for cluster in range(k):
        members = [cats[i] for i in range(len(cats)) if labels[i] == cluster]
        if members:
            correct += max(members.count(c) for c in set(members))
    return PurityResult(
        purity=correct / len(words),
        n_total=len(items),
        n_used=len(words),
        n_clusters=k,
        labels=labels,
        words=words,
    )


def nearest_neighbors(emb: EmbeddingMatrix, word: str, n: int = 10) -> list[tuple[str, float]]:
    """Top-n vocabulary words by cosine to `word`, excluding the word itself.

    Ties order by lower row id. Raises KeyError for out-of-vocabulary
    queries.
    """
    if word not in emb:
        raise KeyError(word)
    if n < 1:
        raise ValueError("n must be >= 1")
    unit = _unit_rows(emb.table)
    query = emb.ids[word]
    sims = unit @ unit[query]
    sims[query] = -np.inf
    order = np.lexsort((np.arange(len(sims)), -sims))
    top = order[: min(n, len(sims) - 1)]
    return [(emb.words[int(i)], float(sims[int(i)])) for i in top]
