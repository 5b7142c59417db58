"""Word-to-subword alignment for pretokenized sentences.

A corpus line is already split into words; the tokenizer splits each word
further into subword pieces and surrounds the sequence with special tokens.
The alignment map records, for every word, which token positions belong to
it, so the caller can pool those positions back into one vector per word.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence


class AlignmentError(ValueError):
    """A sentence could not be aligned word-for-word with its subword tokens."""

    def __init__(self, message: str, sentence_id: Optional[int] = None):
        super().__init__(message)
        self.sentence_id = sentence_id


@dataclass(frozen=True)
class AlignmentMap:
    """Token spans for one sentence, indexed by word position.

    spans[w] lists the token indices of word w, in order. Spans are
    non-empty, contiguous, and mutually disjoint; special tokens appear
    in no span.
    """

    spans: tuple[tuple[int, ...], ...]

    @property
    def n_words(self) -> int:
        return len(self.spans)

    def token_count(self) -> int:
        return sum(len(s) for s in self.spans)


def align_words(
    word_ids: Sequence[Optional[int]],
    n_words: int,
    sentence_id: Optional[int] = None,
) -> AlignmentMap:
    """Build an AlignmentMap from a fast tokenizer's per-token word ids.

    word_ids has one entry per token: the index of the word the token came
    from, or None for special tokens. Every word in the sentence must
    contribute at least one token, and each word's tokens must sit in one
    contiguous block.
    """
    if n_words <= 0:
        raise AlignmentError("sentence has no words", sentence_id)
    spans: list[list[int]] = [[] for _ in range(n_words)]
    for tok_idx, wid in enumerate(word_ids):
        if wid is None:
            continue
        if not 0 <= wid < n_words:
            raise AlignmentError(
                f"token {tok_idx} maps to word {wid}, outside 0..{n_words - 1}",
                sentence_id,
            )
        spans[wid].append(tok_idx)
    for w, span in enumerate(spans):
        if not span:
            raise AlignmentError(f"word {w} produced no subword tokens", sentence_id)
        # contiguous iff the span covers exactly first..last
        if span != list(range(span[0], span[-1] + 1)):
            raise AlignmentError(f"word {w} maps to non-contiguous tokens {span}", sentence_id)
    # spans are disjoint by construction (each token has one word id), but a
    # tokenizer bug could interleave words; insist on left-to-right order too
    for w in range(1, n_words):
        if spans[w][0] <= spans[w - 1][-1]:
            raise AlignmentError(
                f"word {w} starts at token {spans[w][0]}, inside or before word {w - 1}",
                sentence_id,
            )
    return AlignmentMap(tuple(tuple(s) for s in spans))
