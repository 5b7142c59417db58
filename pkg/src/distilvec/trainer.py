"""Training of the static embedding table against the joint objective.

The per-example objective has three parts: an alignment loss between the
summed static context embeddings and the projected teacher vector of the
center word, an alignment loss between a context attention vector and the
same projected center, and a contrastive term over negative samples drawn
from the vocabulary noise distribution. The table of context-word
embeddings is the final artifact.
"""

from __future__ import annotations

import json
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .corpus import TrainingExample, Vocabulary, iter_examples
from .teacher import AlignmentError, ProjectionLayer

_NORM_FLOOR = 1e-12


def sigmoid(x):
    """Numerically stable logistic function."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out if out.ndim else float(out)


def log_sigmoid(x):
    """log(sigmoid(x)) without overflow for large |x|."""
    x = np.asarray(x, dtype=np.float64)
    out = np.where(x >= 0, -np.log1p(np.exp(-np.abs(x))), x - np.log1p(np.exp(-np.abs(x))))
    return out if out.ndim else float(out)


def _alignment_loss(
    a: np.ndarray, b: np.ndarray, normalize: bool
) -> tuple[float, np.ndarray, np.ndarray]:
    """-log sigmoid(a . b), optionally over L2-normalized vectors.

    Returns (loss, grad_a, grad_b). Normalizing both sides bounds the
    sigmoid argument as window sizes vary; gradients account for the
    normalization.
    """
    if normalize:
        na = max(float(np.linalg.norm(a)), _NORM_FLOOR)
        nb = max(float(np.linalg.norm(b)), _NORM_FLOOR)
        ah = a / na
        bh = b / nb
        x = float(ah @ bh)
        g = sigmoid(x) - 1.0
        grad_a = g * (bh - x * ah) / na
        grad_b = g * (ah - x * bh) / nb
    else:
        x = float(a @ b)
        g = sigmoid(x) - 1.0
        grad_a = g * b
        grad_b = g * a
    return -log_sigmoid(x), grad_a, grad_b


def loss_semantic(
    context_rows: np.ndarray, center_vec: np.ndarray, normalize: bool = True
) -> tuple[float, np.ndarray, np.ndarray]:
    """Alignment loss between summed context embeddings and the center vector.

    `context_rows` holds one static embedding row per context token (rows may
    repeat when a word occurs twice in the window). Returns
    (loss, grad_context, grad_center) where grad_context is the gradient of
    every contributing row: the rows enter only through their sum, so each
    occurrence receives the same gradient.
    """
    if context_rows.ndim != 2 or context_rows.shape[0] < 1:
        raise ValueError("context_rows must be a non-empty (m, d_emb) matrix")
    summed = context_rows.sum(axis=0)
    loss, grad_context, grad_center = _alignment_loss(summed, center_vec, normalize)
    return loss, grad_context, grad_center


def loss_contextualized(
    context_vec: np.ndarray, center_vec: np.ndarray, normalize: bool = True
) -> tuple[float, np.ndarray, np.ndarray]:
    """Alignment loss between the attention context vector and the center.

    Returns (loss, grad_context_vec, grad_center); the caller chains
    grad_context_vec into whatever produced the context vector.
    """
    if context_vec.shape != center_vec.shape:
        raise ValueError("context and center vectors must share a dimension")
    return _alignment_loss(context_vec, center_vec, normalize)


def loss_negative(
    negative_rows: np.ndarray, center_vec: np.ndarray
) -> tuple[float, np.ndarray, np.ndarray]:
    """Contrastive term: sum of log sigmoid(row . center) over negatives.

    The value is added to the minimized joint loss with positive sign, so
    gradient descent drives the negative inner products down. Returns
    (loss, grad_rows, grad_center) with grad_rows shaped like negative_rows.
    """
    if negative_rows.ndim != 2 or negative_rows.shape[0] < 1:
        raise ValueError("negative_rows must be a non-empty (k, d_emb) matrix")
    x = negative_rows @ center_vec
    coef = sigmoid(-x)  # d/dx of log sigmoid(x)
    loss = float(np.sum(log_sigmoid(x)))
    grad_rows = coef[:, None] * center_vec[None, :]
    grad_center = coef @ negative_rows
    return loss, grad_rows, grad_center


def _phi(tag: str, x: np.ndarray) -> np.ndarray:
    if tag == "none":
        return x
    if tag == "tanh":
        return np.tanh(x)
    raise ValueError(f"unknown nonlinearity tag {tag!r}")


class AttentionLayer:
    """Weight-shared linear attention over the teacher vectors of a window.

    The context vector is a residual center term plus a shared-weight map of
    the averaged context vectors:

        v = lambda1 * W1^T o_center + lambda2 * W2^T phi(mean_k o_k)

    Averaging before the (shared) W2 map equals averaging the per-position
    maps exactly when phi is linear; for tanh the two differ and this class
    implements the averaged-first form.
    """

    def __init__(
        self,
        w1: np.ndarray,
        w2: np.ndarray,
        lambda1: float = 0.5,
        lambda2: float = 0.5,
        phi: str = "none",
        window: int = 5,
    ) -> None:
        self.w1 = np.asarray(w1, dtype=np.float64)
        self.w2 = np.asarray(w2, dtype=np.float64)
        if self.w1.shape != self.w2.shape:
            raise ValueError("W1 and W2 must have identical shapes")
        self.lambda1 = float(lambda1)
        self.lambda2 = float(lambda2)
        _phi(phi, np.zeros(1))  # validate tag
        self.phi = phi
        self.window = int(window)

    @property
    def d(self) -> int:
        return self.w1.shape[0]

    @property
    def d_emb(self) -> int:
        return self.w1.shape[1]

    @classmethod
    def init(
        cls,
        d: int,
        d_emb: int,
        rng: np.random.Generator,
        lambda1: float = 0.5,
        lambda2: float = 0.5,
        phi: str = "none",
        window: int = 5,
    ) -> "AttentionLayer":
        bound = 1.0 / np.sqrt(d)
        return cls(
            rng.uniform(-bound, bound, size=(d, d_emb)),
            rng.uniform(-bound, bound, size=(d, d_emb)),
            lambda1=lambda1,
            lambda2=lambda2,
            phi=phi,
            window=window,
        )

    def context_vector(self, o_center: np.ndarray, o_context: np.ndarray) -> np.ndarray:
        if len(o_context) == 0:
            raise ValueError("context must be non-empty")
        if o_center.shape != (self.d,) or o_context.shape[1] != self.d:
            raise ValueError(f"expected teacher vectors of dimension {self.d}")
        mean = o_context.mean(axis=0)
        return self.lambda1 * (self.w1.T @ o_center) + self.lambda2 * (
            self.w2.T @ _phi(self.phi, mean)
        )

    def gradients(
        self, o_center: np.ndarray, o_context: np.ndarray, grad_v: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray]:
        """Chain grad_v (dL/dv) back to W1 and W2. Teacher vectors are frozen."""
        mean = o_context.mean(axis=0)
        grad_w1 = self.lambda1 * np.outer(o_center, grad_v)
        grad_w2 = self.lambda2 * np.outer(_phi(self.phi, mean), grad_v)
        return grad_w1, grad_w2


def attention_context(
    layer: AttentionLayer, o_center: np.ndarray, o_context: np.ndarray
) -> np.ndarray:
    return layer.context_vector(o_center, np.asarray(o_context, dtype=np.float64))


class EmbeddingMatrix:
    """Static embedding table plus the word list that indexes its rows."""

    def __init__(self, words: Sequence[str], table: np.ndarray) -> None:
        self.words = list(words)
        self.table = np.asarray(table, dtype=np.float64)
        if self.table.ndim != 2 or self.table.shape[0] != len(self.words):
            raise ValueError("table row count must equal word count")
        self.ids = {w: i for i, w in enumerate(self.words)}

    def __len__(self) -> int:
        return len(self.words)

    def __contains__(self, word: str) -> bool:
        return word in self.ids

    @property
    def dim(self) -> int:
        return self.table.shape[1]

    def row(self, word: str) -> np.ndarray:
        return self.table[self.ids[word]]

    @classmethod
    def init_random(
        cls, words: Sequence[str], d_emb: int, rng: np.random.Generator
    ) -> "EmbeddingMatrix":
        bound = 0.5 / d_emb
        return cls(words, rng.uniform(-bound, bound, size=(len(words), d_emb)))


@dataclass
class TrainerConfig:
    """Hyperparameters for one training run. All defaults are recorded in the
    output metadata so runs are reproducible from the sidecar alone."""

    d_emb: int = 300
    w_s: int = 5
    k: int = 5
    epochs: int = 5
    learning_rate: float = 0.025
    min_lr_factor: float = 1e-4
    eta1: float = 1.0
    eta2: float = 1.0
    eta3: float = 1.0
    seed: int = 1
    attention_mode: str = "tied"  # "tied" or "attention"
    lambda1: float = 0.5
    lambda2: float = 0.5
    phi: str = "none"
    ws_prime: int | None = None  # defaults to w_s
    normalize: bool = True
    subsample_t: float = 0.0
    threads: int = 1

    def __post_init__(self) -> None:
        if self.w_s < 1 or self.k < 1:
            raise ValueError("w_s and k must be >= 1")
        if min(self.eta1, self.eta2, self.eta3) < 0:
            raise ValueError("loss weights must be non-negative")
        if self.attention_mode not in ("tied", "attention"):
            raise ValueError(f"unknown attention_mode {self.attention_mode!r}")
        if self.ws_prime is None:
            self.ws_prime = self.w_s

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class EpochStats:
    epoch: int
    examples: int
    mean_loss: float
    mean_l1: float
    mean_l2: float
    mean_l3: float
    heldout_loss: float | None = None


@dataclass
class TrainResult:
    embedding: EmbeddingMatrix
    projection: ProjectionLayer
    attention: AttentionLayer
    history: list[EpochStats] = field(default_factory=list)


def _prepare_sentences(
    sentences: Sequence[Sequence[str]], vocab: Vocabulary, teacher
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Encode sentences and align teacher rows to the kept positions.

    Sentences the teacher skipped, or with fewer than two in-vocabulary
    tokens, are dropped. Raises AlignmentError on length mismatches.
    """
    prepared = []
    for sentence_id, words in enumerate(sentences):
        vectors = teacher.vectors_for(sentence_id, words)
        if vectors is None:
            continue
        ids, kept = vocab.encode(words)
        if len(ids) < 2:
            continue
        prepared.append((ids, np.asarray(vectors, dtype=np.float64)[kept]))
    return prepared


def _example_step(
    table: np.ndarray,
    proj: ProjectionLayer,
    attn: AttentionLayer,
    config: TrainerConfig,
    vocab: Vocabulary,
    rng: np.random.Generator,
    ids: np.ndarray,
    teacher_rows: np.ndarray,
    example: TrainingExample,
    lr: float | None,
) -> tuple[float, float, float]:
    """Forward (and, when lr is given, SGD-update) one training example."""
    i = example.center_index
    ctx_pos = example.context_indices
    ctx_ids = ids[ctx_pos]
    o_center = teacher_rows[i]
    center_vec = proj.weight @ o_center

    l1, grad_ctx, grad_center1 = loss_semantic(
        table[ctx_ids], center_vec, normalize=config.normalize
    )

    tied = config.attention_mode == "tied"
    if tied:
        context_vec = center_vec
    else:
        context_vec = attn.context_vector(o_center, teacher_rows[ctx_pos])
    l2, grad_v, grad_center2 = loss_contextualized(
        context_vec, center_vec, normalize=config.normalize
    )

    neg_ids = vocab.sample_negative(rng, config.k, {int(ids[i])})
    l3, grad_negs, grad_center3 = loss_negative(table[neg_ids], center_vec)

    if lr is not None:
        grad_center = (
            config.eta1 * grad_center1
            + config.eta2 * grad_center2
            + config.eta3 * grad_center3
        )
        if tied:
            # The context vector is the projected center itself, so its
            # gradient also flows into the projection.
            grad_center = grad_center + config.eta2 * grad_v
        np.add.at(table, ctx_ids, -lr * config.eta1 * grad_ctx)
        np.add.at(table, neg_ids, -lr * config.eta3 * grad_negs)
        proj.weight -= lr * np.outer(grad_center, o_center)
        if not tied:
            grad_w1, grad_w2 = attn.gradients(o_center, teacher_rows[ctx_pos], grad_v)
            attn.w1 -= lr * config.eta2 * grad_w1
            attn.w2 -= lr * config.eta2 * grad_w2
    return l1, l2, l3


def _subsample(
    ids: np.ndarray,
    rows: np.ndarray,
    vocab: Vocabulary,
    t: float,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    freqs = vocab.counts[ids] / vocab.total_tokens
    keep = np.minimum(1.0, np.sqrt(t / freqs))
    mask = rng.random(len(ids)) < keep
    return ids[mask], rows[mask]


def train(
    sentences: Sequence[Sequence[str]],
    vocab: Vocabulary,
    teacher,
    config: TrainerConfig,
    heldout: Sequence[Sequence[str]] | None = None,
) -> TrainResult:
    """Run streamed SGD over the corpus and return the trained parameters.

    Single-threaded runs are bit-reproducible under a fixed seed. With
    config.threads > 1, workers process sentence shards concurrently:
    embedding-row updates are applied without locks (sparse collisions are
    tolerated) while the dense projection/attention matrices are updated
    under a short per-sentence lock, so results may vary run to run.
    """
    rng = np.random.default_rng(config.seed)
    emb = EmbeddingMatrix.init_random(vocab.words, config.d_emb, rng)
    proj = ProjectionLayer.init(config.d_emb, teacher.dim, rng)
    attn = AttentionLayer.init(
        teacher.dim,
        config.d_emb,
        rng,
        lambda1=config.lambda1,
        lambda2=config.lambda2,
        phi=config.phi,
        window=config.ws_prime or config.w_s,
    )

    prepared = _prepare_sentences(sentences, vocab, teacher)
    total_examples = sum(len(ids) for ids, _ in prepared) * max(config.epochs, 1)
    if total_examples == 0:
        raise ValueError("no trainable sentences after encoding")

    history: list[EpochStats] = []
    step = 0

    def lr_at(t: int) -> float:
        frac = 1.0 - t / total_examples
        return config.learning_rate * max(frac, config.min_lr_factor)

    def run_sentence(ids, rows, worker_rng, counter) -> tuple[float, float, float, int]:
        if config.subsample_t > 0.0:
            ids, rows = _subsample(ids, rows, vocab, config.subsample_t, worker_rng)
            if len(ids) < 2:
                return 0.0, 0.0, 0.0, 0
        s1 = s2 = s3 = 0.0
        n = 0
        for example in iter_examples(ids, config.w_s):
            lr = lr_at(counter())
            l1, l2, l3 = _example_step(
                emb.table, proj, attn, config, vocab, worker_rng, ids, rows, example, lr
            )
            s1, s2, s3, n = s1 + l1, s2 + l2, s3 + l3, n + 1
        return s1, s2, s3, n

    for epoch in range(config.epochs):
        s1 = s2 = s3 = 0.0
        n_examples = 0
        if config.threads <= 1:
            def counter():
                nonlocal step
                step += 1
                return step - 1

            for ids, rows in prepared:
                d1, d2, d3, dn = run_sentence(ids, rows, rng, counter)
                s1, s2, s3 = s1 + d1, s2 + d2, s3 + d3
                n_examples += dn
        else:
            lock = threading.Lock()
            totals = [0.0, 0.0, 0.0, 0]

            def worker(shard_index: int, shard) -> None:
                worker_rng = np.random.default_rng(
                    [config.seed, epoch, shard_index]
                )

                def counter():
                    nonlocal step
                    step += 1  # benign race: schedule tolerance only
                    return step - 1

                a1 = a2 = a3 = 0.0
                an = 0
                for ids, rows in shard:
                    d1, d2, d3, dn = run_sentence(ids, rows, worker_rng, counter)
                    a1, a2, a3, an = a1 + d1, a2 + d2, a3 + d3, an + dn
                with lock:
                    totals[0] += a1
                    totals[1] += a2
                    totals[2] += a3
                    totals[3] += an

            shards = [prepared[i :: config.threads] for i in range(config.threads)]
            with ThreadPoolExecutor(max_workers=config.threads) as pool:
                list(pool.map(worker, range(config.threads), shards))
            s1, s2, s3, n_examples = totals[0], totals[1], totals[2], int(totals[3])

        heldout_loss = None
        if heldout is not None:
            heldout_loss = evaluate_mean_loss(
                heldout, vocab, teacher, emb, proj, attn, config
            )[0]
        denom = max(n_examples, 1)
        history.append(
            EpochStats(
                epoch=epoch,
                examples=n_examples,
                mean_loss=(config.eta1 * s1 + config.eta2 * s2 + config.eta3 * s3) / denom,
                mean_l1=s1 / denom,
                mean_l2=s2 / denom,
                mean_l3=s3 / denom,
                heldout_loss=heldout_loss,
            )
        )
    if not np.all(np.isfinite(emb.table)):
        raise FloatingPointError("embedding table diverged to non-finite values")
    return TrainResult(emb, proj, attn, history)


def evaluate_mean_loss(
    sentences: Sequence[Sequence[str]],
    vocab: Vocabulary,
    teacher,
    emb: EmbeddingMatrix,
    proj: ProjectionLayer,
    attn: AttentionLayer,
    config: TrainerConfig,
    seed: int = 0,
) -> tuple[float, float, float, float]:
    """Mean (joint, l1, l2, l3) loss without updating any parameter.

    Negatives are drawn from a generator seeded independently of training so
    repeated evaluations of the same shard are comparable.
    """
    rng = np.random.default_rng(seed)
    prepared = _prepare_sentences(sentences, vocab, teacher)
    s1 = s2 = s3 = 0.0
    n = 0
    for ids, rows in prepared:
        for example in iter_examples(ids, config.w_s):
            l1, l2, l3 = _example_step(
                emb.table, proj, attn, config, vocab, rng, ids, rows, example, lr=None
            )
            s1, s2, s3, n = s1 + l1, s2 + l2, s3 + l3, n + 1
    denom = max(n, 1)
    joint = (config.eta1 * s1 + config.eta2 * s2 + config.eta3 * s3) / denom
    return joint, s1 / denom, s2 / denom, s3 / denom


def write_embeddings(path: str | Path, emb: EmbeddingMatrix) -> None:
    """Write word2vec text format: `<vocab_size> <dim>` then one word per line."""
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"{len(emb)} {emb.dim}\n")
        for word, row in zip(emb.words, emb.table):
            f.write(word + " " + " ".join(f"{v:.9g}" for v in row) + "\n")


def read_embeddings(path: str | Path) -> EmbeddingMatrix:
    """Read word2vec text format into an EmbeddingMatrix."""
    with open(path, encoding="utf-8") as f:
        header = f.readline().split()
        if len(header) != 2:
            raise ValueError(f"{path}: expected '<vocab_size> <dim>' header")
        n, dim = int(header[0]), int(header[1])
        words: list[str] = []
        table = np.empty((n, dim), dtype=np.float64)
        for index in range(n):
            line = f.readline()
            if not line:
                raise ValueError(f"{path}: expected {n} rows, file ended at {index}")
            parts = line.rstrip("\n").split(" ")
            if len(parts) != dim + 1:
                raise ValueError(f"{path}: row {index} has {len(parts) - 1} values")
            words.append(parts[0])
            table[index] = [float(v) for v in parts[1:]]
    return EmbeddingMatrix(words, table)


def write_metadata(path: str | Path, payload: dict) -> None:
    """Write the sidecar metadata recording config values and seed."""
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


CHECKPOINT_VERSION = 1


def save_checkpoint(path: str | Path, result: TrainResult, config: TrainerConfig) -> None:
    """Versioned binary dump of all parameter matrices plus the config.

    Written through a file handle so the given path is used verbatim.
    """
    with open(path, "wb") as f:
        np.savez(
            f,
            version=np.int64(CHECKPOINT_VERSION),
            words=np.array(result.embedding.words, dtype=object),
            table=result.embedding.table,
            projection=result.projection.weight,
            w1=result.attention.w1,
            w2=result.attention.w2,
            config_json=np.array(json.dumps(config.to_dict())),
        )


def load_checkpoint(path: str | Path) -> tuple[TrainResult, TrainerConfig]:
    with np.load(path, allow_pickle=True) as data:
        version = int(data["version"])
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        config = TrainerConfig(**json.loads(str(data["config_json"])))
        emb = EmbeddingMatrix([str(w) for w in data["words"]], data["table"])
        proj = ProjectionLayer(data["projection"])
        attn = AttentionLayer(
            data["w1"],
            data["w2"],
            lambda1=config.lambda1,
            lambda2=config.lambda2,
            phi=config.phi,
            window=config.ws_prime or config.w_s,
        )
    return TrainResult(emb, proj, attn), config
