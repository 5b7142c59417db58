"""Shared fixtures: a tiny randomly initialized BERT checkpoint saved to disk.

The model is small enough to build in milliseconds but exercises every part
of the export path: a wordpiece vocab with continuation pieces so common
words split into multiple subwords, a short position limit so over-length
sentences exist, and four hidden layers so the sum-of-last-four selector
has distinct layers to sum.
"""

import struct

import pytest

VOCAB = [
    "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]",
    "river", "lake", "star", "moon", "sun", "the", "a", "ship",
    "boat", "farm", "barn", "stone", "wind", "mill",
    "##let", "##s", "##shine", "##mill", "##stone",
]

# 10 pretokenized sentences over VOCAB; several words split into two
# wordpiece tokens (moonshine, windmill, millstone, riverlet, suns, stars)
CORPUS_SENTENCES = [
    ["the", "river"],
    ["moonshine"],
    ["the", "suns", "star"],
    ["windmill", "barn"],
    ["a", "millstone"],
    ["the", "lake", "boat", "ship"],
    ["farm", "barn", "stone"],
    ["riverlet", "suns"],
    ["the", "moon", "star", "sun"],
    ["stars", "moonshine", "windmill"],
]

MAX_LEN = 16  # tokens including [CLS]/[SEP]; 15 one-piece words overflows it
HIDDEN = 16


@pytest.fixture(scope="session")
def corpus_sentences():
    return [list(s) for s in CORPUS_SENTENCES]


@pytest.fixture(scope="session")
def hidden_size():
    return HIDDEN


@pytest.fixture(scope="session")
def max_len():
    return MAX_LEN


@pytest.fixture(scope="session")
def tiny_model_dir(tmp_path_factory):
    torch = pytest.importorskip("torch")
    transformers = pytest.importorskip("transformers")
    from transformers import BertConfig, BertModel, BertTokenizerFast

    d = tmp_path_factory.mktemp("tinybert")
    tok = BertTokenizerFast(
        vocab={w: i for i, w in enumerate(VOCAB)},
        model_max_length=MAX_LEN,
    )
    tok.save_pretrained(d)
    cfg = BertConfig(
        vocab_size=len(VOCAB),
        hidden_size=HIDDEN,
        num_hidden_layers=4,
        num_attention_heads=2,
        intermediate_size=32,
        max_position_embeddings=MAX_LEN,
    )
    torch.manual_seed(0)
    BertModel(cfg).save_pretrained(d)
    return str(d)


@pytest.fixture(scope="session")
def fixture_corpus(tmp_path_factory):
    path = tmp_path_factory.mktemp("corpus") / "corpus.txt"
    path.write_text("".join(" ".join(s) + "\n" for s in CORPUS_SENTENCES), encoding="utf-8")
    return path


@pytest.fixture(scope="session")
def parse_ctxv():
    """Byte-level CTXV parser independent of both packages under test."""

    def _parse(path):
        import numpy as np

        header = struct.Struct("<4sIIQ")
        record = struct.Struct("<QI")
        with open(path, "rb") as f:
            magic, version, d, count = header.unpack(f.read(header.size))
            assert magic == b"CTXV"
            assert version == 1
            records = []
            for _ in range(count):
                sid, n = record.unpack(f.read(record.size))
                buf = f.read(n * d * 4)
                records.append((sid, np.frombuffer(buf, dtype="<f4").reshape(n, d).copy()))
            assert f.read() == b"", "trailing bytes after last record"
        return d, records

    return _parse
