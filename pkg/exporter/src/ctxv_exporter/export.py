"""Run a pretrained transformer over a corpus and write CTXV teacher vectors.

The corpus is pretokenized text, one sentence per line, words separated by
whitespace; blank lines are ignored and sentence ids number the remaining
lines from zero. Each kept sentence becomes one CTXV record whose row count
equals the line's word count: the model's hidden states are mean-pooled over
each word's subword pieces. Sentences that tokenize past the model's length
limit are skipped and their ids logged, never truncated, so a record always
covers its whole sentence.

CTXV layout (little-endian): a 20-byte header of magic ``CTXV``, u32 version,
u32 dimension, u64 record count; then per record a u64 sentence id, u32 row
count, and that many float32 rows.
"""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Iterable, Optional, Sequence

import numpy as np
import torch

from ctxv_exporter.alignment import AlignmentError, align_words

logger = logging.getLogger(__name__)

EXPORTER_VERSION = "0.1.0"

CTXV_MAGIC = b"CTXV"
CTXV_VERSION = 1
_HEADER = struct.Struct("<4sIIQ")  # magic, version, d, sentence_count
_RECORD_HEADER = struct.Struct("<QI")  # sentence_id, n_tokens

LAYER_SELECTORS = ("last", "sum4")

# model_max_length defaults to a sentinel around 1e30 when the checkpoint
# does not pin one; treat anything that large as "unset"
_UNSET_LIMIT = 10**9


@dataclass(frozen=True)
class ExportSummary:
    """What one export run produced."""

    d: int
    n_sentences: int
    n_written: int
    skipped_ids: tuple[int, ...]
    layers: str
    model: str


def read_pretokenized(path: str | Path) -> list[list[str]]:
    """Load a pretokenized corpus: one sentence per non-blank line."""
    sentences: list[list[str]] = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            words = line.split()
            if words:
                sentences.append(words)
    return sentences


def _load_model(model_name: str, device: str):
    # imported lazily so the CLI can print --help without touching torch hubs
    from transformers import AutoModel, AutoTokenizer

    tokenizer = AutoTokenizer.from_pretrained(model_name)
    if not tokenizer.is_fast:
        raise ValueError(
            f"tokenizer for {model_name!r} is not a fast tokenizer; "
            "word alignment needs per-token word ids"
        )
    model = AutoModel.from_pretrained(model_name)
    model.to(device)
    model.eval()
    return tokenizer, model


def _sequence_limit(tokenizer, model) -> Optional[int]:
    """Longest token sequence the model accepts, or None when unbounded."""
    limit = getattr(tokenizer, "model_max_length", None)
    if limit is not None and limit < _UNSET_LIMIT:
        return int(limit)
    positions = getattr(model.config, "max_position_embeddings", None)
    if positions is not None:
        return int(positions)
    return None


def _pooled_states(outputs, layers: str) -> torch.Tensor:
    if layers == "last":
        return outputs.last_hidden_state
    # sum4: element-wise sum of the last four hidden layers; shallower
    # models contribute every layer they have (plus the embedding layer)
    return torch.stack(outputs.hidden_states[-4:], dim=0).sum(dim=0)


def _write_header(f: BinaryIO, d: int, count: int) -> None:
    f.write(_HEADER.pack(CTXV_MAGIC, CTXV_VERSION, d, count))


def _write_record(f: BinaryIO, sentence_id: int, rows: np.ndarray) -> None:
    f.write(_RECORD_HEADER.pack(sentence_id, rows.shape[0]))
    f.write(np.ascontiguousarray(rows, dtype="<f4").tobytes())


def _batches(items: Sequence, size: int) -> Iterable[Sequence]:
    for start in range(0, len(items), size):
        yield items[start : start + size]


def export(
    corpus: str | Path,
    model_name: str,
    out: str | Path,
    layers: str = "last",
    skip_log: Optional[str | Path] = None,
    batch_size: int = 8,
    device: str = "cpu",
) -> ExportSummary:
    """Export teacher vectors for every sentence in ``corpus`` to ``out``.

    Writes records in corpus order with a single writer, regardless of
    batch size; batching only groups the forward passes. A sidecar
    ``<out>.meta.json`` records the checkpoint and layer selector so a
    teacher file can always be traced back to the model that produced it.
    """
    if layers not in LAYER_SELECTORS:
        raise ValueError(f"unknown layer selector {layers!r}, expected one of {LAYER_SELECTORS}")
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")

    sentences = read_pretokenized(corpus)
    if not sentences:
        raise ValueError(f"corpus {corpus} contains no sentences")

    tokenizer, model = _load_model(model_name, device)
    d = int(model.config.hidden_size)
    limit = _sequence_limit(tokenizer, model)

    # first pass: length check per sentence, no padding, no truncation
    kept: list[tuple[int, list[str]]] = []
    skipped: list[int] = []
    for sid, words in enumerate(sentences):
        encoded = tokenizer(words, is_split_into_words=True, add_special_tokens=True)
        n_tokens = len(encoded["input_ids"])
        if limit is not None and n_tokens > limit:
            logger.warning(
                "sentence %d: %d subword tokens exceed model limit %d, skipping",
                sid,
                n_tokens,
                limit,
            )
            skipped.append(sid)
        else:
            kept.append((sid, words))

    if skip_log is not None:
        with open(skip_log, "w", encoding="utf-8") as f:
            for sid in skipped:
                f.write(f"{sid}\tover model length limit\n")

    out = Path(out)
    n_written = 0
    with open(out, "wb") as f:
        _write_header(f, d, 0)
        with torch.inference_mode():
            for batch in _batches(kept, batch_size):
                texts = [words for _, words in batch]
                encoded = tokenizer(
                    texts,
                    is_split_into_words=True,
                    add_special_tokens=True,
                    padding=True,
                    return_tensors="pt",
                )
                encoded = encoded.to(device)
                outputs = model(**encoded, output_hidden_states=(layers == "sum4"))
                states = _pooled_states(outputs, layers)
                for b, (sid, words) in enumerate(batch):
                    amap = align_words(encoded.word_ids(batch_index=b), len(words), sid)
                    rows = np.empty((len(words), d), dtype=np.float32)
                    for w, span in enumerate(amap.spans):
                        piece = states[b, span[0] : span[-1] + 1, :]
                        rows[w] = piece.mean(dim=0).to(torch.float32).cpu().numpy()
                    _write_record(f, sid, rows)
                    n_written += 1
        # patch the record count now that every batch has flushed
        f.seek(_HEADER.size - 8)
        f.write(struct.pack("<Q", n_written))

    summary = ExportSummary(
        d=d,
        n_sentences=len(sentences),
        n_written=n_written,
        skipped_ids=tuple(skipped),
        layers=layers,
        model=str(model_name),
    )
    _write_sidecar(out, summary)
    return summary


def _write_sidecar(out: Path, summary: ExportSummary) -> None:
    meta = {
        "format": {"magic": CTXV_MAGIC.decode("ascii"), "version": CTXV_VERSION},
        "model": summary.model,
        "layers": summary.layers,
        "d": summary.d,
        "records": summary.n_written,
        "skipped_ids": list(summary.skipped_ids),
        "exporter_version": EXPORTER_VERSION,
    }
    sidecar = out.with_name(out.name + ".meta.json")
    with open(sidecar, "w", encoding="utf-8") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
        f.write("\n")
