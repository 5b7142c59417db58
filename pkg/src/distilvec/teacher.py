"""Per-token teacher vectors: synthetic generation, projection, CTXV file I/O.

Teacher vectors are frozen inputs; only the projection to the static
embedding dimension trains. The binary CTXV format defined here is the
contract with any external vector exporter.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Iterator, Sequence

import numpy as np

from .corpus import TokenizedSentence, Vocabulary

CTXV_MAGIC = b"CTXV"
CTXV_VERSION = 1
_HEADER = struct.Struct("<4sIIQ")  # magic, version, d, sentence_count
_RECORD_HEADER = struct.Struct("<QI")  # sentence_id, n_tokens


class TeacherFileError(ValueError):
    """Base error for malformed teacher vector files."""


class TeacherFormatError(TeacherFileError):
    """Bad magic bytes or unsupported version."""


class TeacherTruncationError(TeacherFileError):
    """File ends mid-record; carries the offending sentence id when known."""

    def __init__(self, message: str, sentence_id: int | None = None) -> None:
        super().__init__(message)
        self.sentence_id = sentence_id


class TeacherPayloadError(TeacherFileError):
    """Record payload contains NaN or infinite values."""

    def __init__(self, message: str, sentence_id: int | None = None) -> None:
        super().__init__(message)
        self.sentence_id = sentence_id


class AlignmentError(ValueError):
    """Teacher record length disagrees with the corpus sentence length."""

    def __init__(self, message: str, sentence_id: int) -> None:
        super().__init__(message)
        self.sentence_id = sentence_id


@dataclass(frozen=True, eq=False)
class TeacherVectors:
    """Contextual vectors for one sentence, one row per token."""

    sentence_id: int
    vectors: np.ndarray  # (n_tokens, d)


class ProjectionLayer:
    """Trainable linear map from teacher dimension d to embedding dimension."""

    def __init__(self, weight: np.ndarray) -> None:
        self.weight = np.asarray(weight, dtype=np.float64)
        if self.weight.ndim != 2:
            raise ValueError("projection weight must be a 2-d matrix")

    @property
    def d_emb(self) -> int:
        return self.weight.shape[0]

    @property
    def d(self) -> int:
        return self.weight.shape[1]

    @classmethod
    def init(cls, d_emb: int, d: int, rng: np.random.Generator) -> "ProjectionLayer":
        bound = 1.0 / np.sqrt(d)
        return cls(rng.uniform(-bound, bound, size=(d_emb, d)))

    def project(self, o: np.ndarray) -> np.ndarray:
        """Map a teacher vector into embedding space. Pure function of inputs."""
        o = np.asarray(o, dtype=np.float64)
        if o.shape != (self.d,):
            raise ValueError(f"expected vector of dimension {self.d}, got {o.shape}")
        return self.weight @ o


def project(layer: ProjectionLayer, o: np.ndarray) -> np.ndarray:
    return layer.project(o)


def _stable_word_seed(word: str, seed: int) -> int:
    digest = hashlib.blake2b(word.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") ^ (seed & 0xFFFFFFFFFFFFFFFF)


def word_base_vector(word: str, seed: int, d: int) -> np.ndarray:
    """Seeded pseudo-random unit vector, fixed per word type.

    Keyed by the word string through a stable hash, so the result is
    reproducible across processes and independent of any vocabulary ids.
    """
    rng = np.random.default_rng(np.random.SeedSequence(_stable_word_seed(word, seed)))
    v = rng.standard_normal(d)
    return v / np.linalg.norm(v)


class SyntheticTeacher:
    """Deterministic stand-in contextualizer for desk-scale experiments.

    Each word type has a fixed unit base vector; a token's output blends its
    own base vector with the mean base vector of its neighbors at offsets
    +-1 and +-2 (in-bounds). `key_fn` can map distinct words onto a shared
    base vector, which is how fixtures plant word clusters.
    """

    def __init__(
        self,
        seed: int,
        d: int,
        mix: float = 0.0,
        key_fn: Callable[[str], str] | None = None,
    ) -> None:
        if d < 1:
            raise ValueError("teacher dimension must be >= 1")
        if not 0.0 <= mix <= 1.0:
            raise ValueError("mix must lie in [0, 1]")
        self.seed = int(seed)
        self.d = int(d)
        self.mix = float(mix)
        self.key_fn = key_fn
        self._cache: dict[str, np.ndarray] = {}

    def base_vector(self, word: str) -> np.ndarray:
        key = self.key_fn(word) if self.key_fn is not None else word
        vec = self._cache.get(key)
        if vec is None:
            vec = word_base_vector(key, self.seed, self.d)
            self._cache[key] = vec
        return vec

    def vectors_for_words(self, words: Sequence[str]) -> np.ndarray:
        bases = np.stack([self.base_vector(w) for w in words]) if words else np.zeros((0, self.d))
        n = len(words)
        out = np.empty((n, self.d), dtype=np.float64)
        for i in range(n):
            neighbors = [j for j in (i - 2, i - 1, i + 1, i + 2) if 0 <= j < n]
            # A token with no in-bounds neighbors blends with itself.
            context = bases[neighbors].mean(axis=0) if neighbors else bases[i]
            out[i] = (1.0 - self.mix) * bases[i] + self.mix * context
        return out


def synthetic_teacher(
    sentence: TokenizedSentence | np.ndarray,
    vocab: Vocabulary,
    seed: int,
    d: int,
    mix: float = 0.0,
    sentence_id: int = 0,
    key_fn: Callable[[str], str] | None = None,
) -> TeacherVectors:
    """Generate teacher vectors for an encoded sentence."""
    ids = sentence.token_ids if isinstance(sentence, TokenizedSentence) else sentence
    words = [vocab.words[int(i)] for i in ids]
    gen = SyntheticTeacher(seed, d, mix, key_fn=key_fn)
    return TeacherVectors(sentence_id, gen.vectors_for_words(words))


def write_teacher_file(
    path: str | Path, records: Iterable[tuple[int, np.ndarray]], d: int
) -> int:
    """Write sentence records to the CTXV binary format; returns record count.

    Layout (little-endian): magic "CTXV", u32 version, u32 d, u64 count;
    then per sentence u64 sentence_id, u32 n_tokens, n_tokens*d float32
    values row-major. The count is patched after streaming the records.
    """
    count = 0
    with open(path, "wb") as f:
        f.write(_HEADER.pack(CTXV_MAGIC, CTXV_VERSION, d, 0))
        for sentence_id, vectors in records:
            arr = np.ascontiguousarray(vectors, dtype="<f4")
            if arr.ndim != 2 or arr.shape[1] != d:
                raise ValueError(
                    f"sentence {sentence_id}: expected shape (n, {d}), got {arr.shape}"
                )
            f.write(_RECORD_HEADER.pack(sentence_id, arr.shape[0]))
            f.write(arr.tobytes())
            count += 1
        f.seek(_HEADER.size - 8)
        f.write(struct.pack("<Q", count))
    return count


def read_teacher_file(
    path: str | Path, expected_lengths: Sequence[int] | None = None
) -> Iterator[TeacherVectors]:
    """Yield records in file order, validating structure as it streams.

    When `expected_lengths` is given (indexed by sentence_id), each record's
    token count is checked against the companion corpus.
    """
    with open(path, "rb") as f:
        header = f.read(_HEADER.size)
        if len(header) < _HEADER.size:
            raise TeacherFormatError(f"{path}: file too short for header")
        magic, version, d, count = _HEADER.unpack(header)
        if magic != CTXV_MAGIC:
            raise TeacherFormatError(f"{path}: bad magic {magic!r}")
        if version != CTXV_VERSION:
            raise TeacherFormatError(f"{path}: unsupported version {version}")
        if d < 1:
            raise TeacherFormatError(f"{path}: invalid dimension {d}")
        for index in range(count):
            rec = f.read(_RECORD_HEADER.size)
            if len(rec) < _RECORD_HEADER.size:
                raise TeacherTruncationError(
                    f"{path}: truncated record header at record {index}"
                )
            sentence_id, n_tokens = _RECORD_HEADER.unpack(rec)
            payload = f.read(n_tokens * d * 4)
            if len(payload) < n_tokens * d * 4:
                raise TeacherTruncationError(
                    f"{path}: truncated payload for sentence {sentence_id}",
                    sentence_id=sentence_id,
                )
            vectors = np.frombuffer(payload, dtype="<f4").reshape(n_tokens, d)
            if not np.all(np.isfinite(vectors)):
                raise TeacherPayloadError(
                    f"{path}: non-finite values in sentence {sentence_id}",
                    sentence_id=sentence_id,
                )
            if expected_lengths is not None:
                if sentence_id >= len(expected_lengths):
                    raise AlignmentError(
                        f"sentence id {sentence_id} beyond corpus size",
                        sentence_id=sentence_id,
                    )
                expected = expected_lengths[sentence_id]
                if n_tokens != expected:
                    raise AlignmentError(
                        f"sentence {sentence_id}: teacher has {n_tokens} tokens, "
                        f"corpus has {expected}",
                        sentence_id=sentence_id,
                    )
            yield TeacherVectors(sentence_id, vectors)
        if f.read(1):
            raise TeacherFormatError(f"{path}: trailing bytes after {count} records")


class SyntheticTeacherSource:
    """Teacher source that generates vectors on the fly from word strings."""

    def __init__(
        self,
        seed: int,
        d: int,
        mix: float = 0.0,
        key_fn: Callable[[str], str] | None = None,
    ) -> None:
        self._gen = SyntheticTeacher(seed, d, mix, key_fn=key_fn)
        self.dim = d

    def vectors_for(self, sentence_id: int, words: Sequence[str]) -> np.ndarray:
        return self._gen.vectors_for_words(words)


class FileTeacherSource:
    """Teacher source backed by a CTXV file loaded into memory.

    Sentences the exporter skipped are simply absent; `vectors_for` returns
    None for them so the trainer can drop the matching corpus lines.
    """

    def __init__(self, path: str | Path) -> None:
        self._records: dict[int, np.ndarray] = {}
        self.dim = 0
        for record in read_teacher_file(path):
            self._records[record.sentence_id] = record.vectors
            self.dim = record.vectors.shape[1]
        if not self._records:
            raise TeacherFileError(f"{path}: no records")

    def vectors_for(self, sentence_id: int, words: Sequence[str]) -> np.ndarray | None:
        vectors = self._records.get(sentence_id)
        if vectors is None:
            return None
        if vectors.shape[0] != len(words):
            raise AlignmentError(
                f"sentence {sentence_id}: teacher has {vectors.shape[0]} tokens, "
                f"corpus line has {len(words)}",
                sentence_id=sentence_id,
            )
        return vectors
