"""Command-line pipeline: prep, gen-teacher, train, retrofit, eval, nn.

Every stage reads and writes files, so each one can be re-run in isolation.
Options come from flags or from an optional flat key=value file given with
--config; a flag always wins over the file. Each invocation appends one
JSON manifest line to the run log recording the command, the resolved
configuration, input digests, seed, toolkit version, and duration.

Exit codes: 0 success, 1 usage error (bad flags or config values), 2 data
error (missing or malformed files, coverage shortfalls, misalignment).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from types import SimpleNamespace
from typing import Callable, Sequence

from . import __version__
from .corpus import (
    EmptyCorpusError,
    Vocabulary,
    build_vocabulary,
    filter_by_length,
    read_corpus,
    write_corpus,
)
from .evalkit import (
    analogy_3cosadd,
    analogy_3cosmul,
    categorize_purity,
    load_analogies,
    load_categories,
    load_similarity,
    nearest_neighbors,
    spearman,
)
from .retrofit import RetrofitConfig, build_graph, read_lexicon, retrofit
from .teacher import FileTeacherSource, SyntheticTeacher, SyntheticTeacherSource, write_teacher_file
from .trainer import (
    TrainerConfig,
    read_embeddings,
    save_checkpoint,
    train,
    write_embeddings,
    write_metadata,
)

DEFAULT_RUN_LOG = "distilvec-runs.jsonl"


class _UsageError(Exception):
    """Bad flag or config-file values; maps to exit code 1."""


def _to_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise _UsageError(f"expected a boolean, got {text!r}")


@dataclass
class _Option:
    convert: Callable[[str], object]
    default: object
    choices: tuple | None = None


class _Command:
    """One subcommand: its parser, its options with their real defaults, and
    which options name input files. Real defaults live here (argparse gets
    None sentinels) so config-file values fill in only where no flag was
    given."""

    def __init__(self, name: str, sub: argparse.ArgumentParser) -> None:
        self.name = name
        self.sub = sub
        self.options: dict[str, _Option] = {}
        self.flag_strings: list[str] = []
        self.input_dests: list[str] = []
        self.seed_dest: str | None = None

    def flag(
        self,
        name: str,
        *,
        default=None,
        type: Callable[[str], object] = str,
        help: str,
        choices: Sequence | None = None,
        required: bool = False,
        is_input: bool = False,
    ) -> None:
        dest = name.lstrip("-").replace("-", "_")
        convert = _to_bool if type is bool else type
        kwargs: dict = {"dest": dest, "default": None, "help": help, "type": convert}
        if choices:
            kwargs["choices"] = list(choices)
        if required:
            kwargs["required"] = True
        self.sub.add_argument(name, **kwargs)
        self.options[dest] = _Option(convert, default, tuple(choices) if choices else None)
        self.flag_strings.append(name)
        if is_input:
            self.input_dests.append(dest)

    def toggle(self, name: str, *, dest: str, const: bool, default: bool, help: str) -> None:
        self.sub.add_argument(
            name, dest=dest, action="store_const", const=const, default=None, help=help
        )
        self.options[dest] = _Option(_to_bool, default)
        self.flag_strings.append(name)


def _add_common(cmd: _Command) -> None:
    cmd.flag(
        "--config",
        help="flat key=value file supplying defaults; explicit flags win",
        is_input=True,
    )
    cmd.flag("--run-log", default=DEFAULT_RUN_LOG, help="JSON-lines manifest log to append to")
    cmd.flag("--threads", default=1, type=int, help="worker threads (1 = deterministic)")


def _read_config(path: str) -> dict[str, str]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise _UsageError(f"cannot read config file: {exc}") from exc
    values: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise _UsageError(f"{path}:{lineno}: expected key=value")
        key, _, value = line.partition("=")
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def _resolve(cmd: _Command, args: argparse.Namespace, config_values: dict[str, str]) -> SimpleNamespace:
    for key in config_values:
        if key == "config" or key not in cmd.options:
            raise _UsageError(f"unknown config key {key!r} for command {cmd.name!r}")
    resolved = {}
    for dest, opt in cmd.options.items():
        value = getattr(args, dest, None)
        if value is None and dest in config_values:
            try:
                value = opt.convert(config_values[dest])
            except _UsageError:
                raise
            except (TypeError, ValueError) as exc:
                raise _UsageError(f"bad config value for {dest}: {exc}") from exc
            if opt.choices and value not in opt.choices:
                raise _UsageError(f"config value for {dest} must be one of {opt.choices}")
        if value is None:
            value = opt.default
        resolved[dest] = value
    return SimpleNamespace(**resolved)


def _key_fn(delim: str | None):
    if not delim:
        return None
    return lambda word: word.split(delim, 1)[0]


# --- subcommand bodies ------------------------------------------------------


def _run_prep(opts: SimpleNamespace) -> None:
    sentences = read_corpus(opts.input)
    if opts.lowercase:
        sentences = [[t.lower() for t in s] for s in sentences]
    if opts.length_filter:
        kept = filter_by_length(sentences, opts.min_len, opts.max_len)
    else:
        kept = sentences
    vocab = build_vocabulary(kept, min_count=opts.min_count, max_vocab=opts.max_vocab or None)
    write_corpus(opts.output, kept)
    vocab.save(opts.vocab)
    print(f"kept {len(kept)} of {len(sentences)} sentences; vocabulary size {len(vocab)}")


def _run_gen_teacher(opts: SimpleNamespace) -> None:
    sentences = read_corpus(opts.corpus)
    if not sentences:
        raise EmptyCorpusError(f"{opts.corpus}: no sentences")
    teacher = SyntheticTeacher(
        seed=opts.seed, d=opts.dim, mix=opts.mix, key_fn=_key_fn(opts.base_key_delim)
    )
    records = ((i, teacher.vectors_for_words(s)) for i, s in enumerate(sentences))
    n = write_teacher_file(opts.out, records, d=opts.dim)
    print(f"wrote {n} teacher records of dimension {opts.dim}")


def _run_train(opts: SimpleNamespace) -> None:
    sentences = read_corpus(opts.corpus)
    vocab = Vocabulary.load(opts.vocab)
    if opts.teacher:
        teacher = FileTeacherSource(opts.teacher)
        teacher_meta = {"kind": "file", "dim": teacher.dim}
    else:
        teacher = SyntheticTeacherSource(
            seed=opts.teacher_seed,
            d=opts.teacher_dim,
            mix=opts.teacher_mix,
            key_fn=_key_fn(opts.base_key_delim),
        )
        teacher_meta = {
            "kind": "synthetic",
            "dim": opts.teacher_dim,
            "seed": opts.teacher_seed,
            "mix": opts.teacher_mix,
            "base_key_delim": opts.base_key_delim,
        }
    try:
        config = TrainerConfig(
            d_emb=opts.dim,
            w_s=opts.window,
            k=opts.negatives,
            epochs=opts.epochs,
            learning_rate=opts.lr,
            eta1=opts.eta1,
            eta2=opts.eta2,
            eta3=opts.eta3,
            seed=opts.seed,
            attention_mode=opts.attention_mode,
            lambda1=opts.lambda1,
            lambda2=opts.lambda2,
            phi=opts.phi,
            ws_prime=opts.ws_prime or None,
            normalize=opts.normalize,
            subsample_t=opts.subsample,
            threads=opts.threads,
        )
    except ValueError as exc:
        raise _UsageError(str(exc)) from exc
    heldout = read_corpus(opts.heldout) if opts.heldout else None
    result = train(sentences, vocab, teacher, config, heldout=heldout)
    for st in result.history:
        line = (
            f"epoch {st.epoch}: examples={st.examples} loss={st.mean_loss:.6f}"
            f" (l1={st.mean_l1:.6f} l2={st.mean_l2:.6f} l3={st.mean_l3:.6f})"
        )
        if st.heldout_loss is not None:
            line += f" heldout={st.heldout_loss:.6f}"
        print(line)
    write_embeddings(opts.out, result.embedding)
    write_metadata(
        opts.out + ".meta.json",
        {
            "config": config.to_dict(),
            "teacher": teacher_meta,
            "history": [asdict(st) for st in result.history],
            "version": __version__,
        },
    )
    if opts.checkpoint:
        save_checkpoint(opts.checkpoint, result, config)


def _run_retrofit(opts: SimpleNamespace) -> None:
    emb = read_embeddings(opts.embeddings)
    pairs = read_lexicon(opts.lexicon)
    graph = build_graph(pairs, emb.words)
    try:
        config = RetrofitConfig(
            alpha=opts.alpha,
            beta=opts.beta,
            nu=opts.nu,
            sigma_scale=opts.sigma,
            iterations=opts.iters,
            mode=opts.mode,
            dynamic_weights=opts.dynamic_weights,
            sweep=opts.sweep,
            tol=opts.tol,
        )
    except ValueError as exc:
        raise _UsageError(str(exc)) from exc
    result = retrofit(emb, graph, config)
    write_embeddings(opts.out, result.embedding)
    write_metadata(
        opts.out + ".meta.json",
        {
            "config": config.to_dict(),
            "edges": graph.n_edges,
            "skipped_pairs": graph.n_skipped,
            "sweeps_run": result.sweeps_run,
            "objective_trace": result.objective_trace,
            "version": __version__,
        },
    )
    print(
        f"retrofitted over {graph.n_edges} edges ({graph.n_skipped} lexicon pairs"
        f" skipped); {result.sweeps_run} sweeps, objective"
        f" {result.objective_trace[0]:.6f} -> {result.objective_trace[-1]:.6f}"
    )


def _run_eval(opts: SimpleNamespace) -> None:
    if not (opts.similarity or opts.analogies or opts.categories):
        raise _UsageError("eval needs at least one of --similarity/--analogies/--categories")
    emb = read_embeddings(opts.embeddings)
    rows = []
    if opts.similarity:
        pairs = load_similarity(opts.similarity, lowercase=opts.lowercase)
        r = spearman(emb, pairs)
        rows.append((Path(opts.similarity).name, "spearman", r.rho, r))
    if opts.analogies:
        quads = load_analogies(opts.analogies, lowercase=opts.lowercase)
        if opts.method == "3cosadd":
            r = analogy_3cosadd(emb, quads)
        else:
            r = analogy_3cosmul(emb, quads, epsilon=opts.epsilon)
        rows.append((Path(opts.analogies).name, f"analogy_{opts.method}", r.accuracy, r))
    if opts.categories:
        items = load_categories(opts.categories, lowercase=opts.lowercase)
        r = categorize_purity(emb, items, seed=opts.seed, restarts=opts.restarts, k=opts.k or None)
        rows.append((Path(opts.categories).name, "purity", r.purity, r))
    with open(opts.out, "w", encoding="utf-8") as f:
        for dataset, metric, score, r in rows:
            f.write(
                json.dumps(
                    {
                        "dataset": dataset,
                        "metric": metric,
                        "score": score,
                        "coverage": r.coverage,
                        "n_used": r.n_used,
                        "n_total": r.n_total,
                    },
                    sort_keys=True,
                )
                + "\n"
            )
    print(f"{'dataset':<24} {'metric':<18} {'score':>9} {'coverage':>9}")
    for dataset, metric, score, r in rows:
        print(f"{dataset:<24} {metric:<18} {score:>9.4f} {r.coverage:>9.3f}")


def _run_nn(opts: SimpleNamespace) -> None:
    emb = read_embeddings(opts.embeddings)
    for word, cos in nearest_neighbors(emb, opts.word, n=opts.n):
        print(f"{word}\t{cos:.6f}")


# --- parser construction ----------------------------------------------------


def _build() -> tuple[argparse.ArgumentParser, dict[str, _Command]]:
    parser = argparse.ArgumentParser(
        prog="distilvec",
        description="Static word embeddings distilled from contextual teacher vectors.",
    )
    parser.add_argument("--version", action="version", version=f"distilvec {__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True)
    commands: dict[str, _Command] = {}

    def new(name: str, help_text: str) -> _Command:
        sub = subparsers.add_parser(name, help=help_text, description=help_text)
        cmd = _Command(name, sub)
        commands[name] = cmd
        return cmd

    cmd = new("prep", "Filter a pretokenized corpus by sentence length and build its vocabulary.")
    cmd.flag("--input", required=True, is_input=True, help="pretokenized corpus, one sentence per line")
    cmd.flag("--output", required=True, help="filtered corpus to write")
    cmd.flag("--vocab", required=True, help="vocabulary file to write")
    cmd.flag("--min-count", default=1, type=int, help="drop words rarer than this")
    cmd.flag("--max-vocab", default=0, type=int, help="keep only the N most frequent words (0 keeps all)")
    cmd.flag("--min-len", default=10, type=int, help="minimum sentence length kept")
    cmd.flag("--max-len", default=40, type=int, help="maximum sentence length kept")
    cmd.toggle("--no-length-filter", dest="length_filter", const=False, default=True,
               help="keep sentences of any length")
    cmd.toggle("--lowercase", dest="lowercase", const=True, default=False,
               help="lowercase all tokens before counting")
    cmd.sub.set_defaults(_runner=_run_prep)
    _add_common(cmd)

    cmd = new("gen-teacher", "Generate synthetic teacher vectors for a prepared corpus.")
    cmd.flag("--corpus", required=True, is_input=True, help="prepared corpus file")
    cmd.flag("--out", required=True, help="teacher vector file to write")
    cmd.flag("--dim", default=768, type=int, help="teacher vector dimension")
    cmd.flag("--seed", default=1, type=int, help="seed for the per-word base vectors")
    cmd.flag("--mix", default=0.0, type=float, help="neighbor blend weight in [0,1]")
    cmd.flag("--base-key-delim", default="", help="share base vectors between words with equal prefixes up to this delimiter")
    cmd.seed_dest = "seed"
    cmd.sub.set_defaults(_runner=_run_gen_teacher)
    _add_common(cmd)

    cmd = new("train", "Train static embeddings against teacher vectors.")
    cmd.flag("--corpus", required=True, is_input=True, help="prepared corpus file")
    cmd.flag("--vocab", required=True, is_input=True, help="vocabulary file from prep")
    cmd.flag("--out", required=True, help="embedding file to write (word2vec text format)")
    cmd.flag("--teacher", is_input=True, help="teacher vector file; omit to use the synthetic teacher")
    cmd.flag("--teacher-dim", default=768, type=int, help="synthetic teacher dimension")
    cmd.flag("--teacher-seed", default=1, type=int, help="synthetic teacher seed")
    cmd.flag("--teacher-mix", default=0.0, type=float, help="synthetic teacher neighbor blend")
    cmd.flag("--base-key-delim", default="", help="synthetic teacher base-vector sharing delimiter")
    cmd.flag("--dim", default=300, type=int, help="embedding dimension")
    cmd.flag("--window", default=5, type=int, help="context window size")
    cmd.flag("--negatives", default=5, type=int, help="negative samples per example")
    cmd.flag("--epochs", default=5, type=int, help="training epochs")
    cmd.flag("--lr", default=0.025, type=float, help="initial learning rate (linear decay)")
    cmd.flag("--eta1", default=1.0, type=float, help="weight of the context-sum alignment loss")
    cmd.flag("--eta2", default=1.0, type=float, help="weight of the attention alignment loss")
    cmd.flag("--eta3", default=1.0, type=float, help="weight of the negative-sample loss")
    cmd.flag("--seed", default=1, type=int, help="training seed")
    cmd.flag("--attention-mode", default="tied", choices=("tied", "attention"),
             help="context vector source: projected center (tied) or the attention layer")
    cmd.flag("--lambda1", default=0.5, type=float, help="attention center-term weight")
    cmd.flag("--lambda2", default=0.5, type=float, help="attention context-term weight")
    cmd.flag("--phi", default="none", choices=("none", "tanh"), help="attention nonlinearity")
    cmd.flag("--ws-prime", default=0, type=int, help="attention context window (0 = same as --window)")
    cmd.toggle("--no-normalize", dest="normalize", const=False, default=True,
               help="use raw inner products in the alignment losses")
    cmd.flag("--subsample", default=0.0, type=float, help="frequent-word subsampling threshold (0 disables)")
    cmd.flag("--checkpoint", help="also write a binary checkpoint (.npz) here")
    cmd.flag("--heldout", is_input=True, help="corpus shard for per-epoch held-out loss")
    cmd.seed_dest = "seed"
    cmd.sub.set_defaults(_runner=_run_train)
    _add_common(cmd)

    cmd = new("retrofit", "Refine embeddings over a synonym lexicon graph.")
    cmd.flag("--embeddings", required=True, is_input=True, help="input embedding file")
    cmd.flag("--lexicon", required=True, is_input=True, help="synonym lexicon (head word then synonyms per line)")
    cmd.flag("--out", required=True, help="refined embedding file to write")
    cmd.flag("--alpha", default=0.5, type=float, help="anchor weight toward the original vectors")
    cmd.flag("--beta", default=0.5, type=float, help="neighbor pull weight")
    cmd.flag("--nu", default=1.0, type=float, help="kernel degrees of freedom")
    cmd.flag("--sigma", default=1.0, type=float, help="kernel scale")
    cmd.flag("--iters", default=10, type=int, help="maximum sweeps")
    cmd.flag("--mode", default="neighbor-average", choices=("neighbor-average", "exact-minimizer"),
             help="per-node update rule")
    cmd.toggle("--dynamic-weights", dest="dynamic_weights", const=True, default=False,
               help="recompute edge weights each sweep from the current table")
    cmd.flag("--sweep", default="gauss-seidel", choices=("gauss-seidel", "jacobi"),
             help="node update order within a sweep")
    cmd.flag("--tol", default=1e-6, type=float, help="stop when the largest per-node shift falls below this")
    cmd.sub.set_defaults(_runner=_run_retrofit)
    _add_common(cmd)

    cmd = new("eval", "Score an embedding file on similarity, analogy, and categorization datasets.")
    cmd.flag("--embeddings", required=True, is_input=True, help="embedding file to evaluate")
    cmd.flag("--out", required=True, help="machine-readable results file (one JSON record per metric)")
    cmd.flag("--similarity", is_input=True, help="word-pair similarity dataset (word_a word_b score)")
    cmd.flag("--analogies", is_input=True, help="analogy dataset (four words per line, ': section' headers)")
    cmd.flag("--categories", is_input=True, help="categorization dataset (word<TAB>category)")
    cmd.flag("--method", default="3cosadd", choices=("3cosadd", "3cosmul"), help="analogy scoring method")
    cmd.flag("--epsilon", default=1e-3, type=float, help="3cosmul denominator offset")
    cmd.flag("--restarts", default=10, type=int, help="k-means restarts for purity")
    cmd.flag("--seed", default=0, type=int, help="k-means seed")
    cmd.flag("--k", default=0, type=int, help="cluster count for purity (0 = gold category count)")
    cmd.toggle("--no-lowercase", dest="lowercase", const=False, default=True,
               help="keep dataset casing as-is")
    cmd.seed_dest = "seed"
    cmd.sub.set_defaults(_runner=_run_eval)
    _add_common(cmd)

    cmd = new("nn", "Print the nearest neighbors of a word.")
    cmd.flag("--embeddings", required=True, is_input=True, help="embedding file to query")
    cmd.flag("--word", required=True, help="query word")
    cmd.flag("--n", default=10, type=int, help="number of neighbors")
    cmd.sub.set_defaults(_runner=_run_nn)
    _add_common(cmd)

    return parser, commands


def build_parser() -> argparse.ArgumentParser:
    return _build()[0]


def _digest(path: str) -> str | None:
    try:
        return hashlib.sha256(Path(path).read_bytes()).hexdigest()
    except OSError:
        return None


def run(argv: Sequence[str] | None = None) -> int:
    """Execute one subcommand and append its manifest to the run log."""
    parser, commands = _build()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if (exc.code or 0) == 0 else 1
    cmd = commands[args.command]
    started = time.perf_counter()
    status, error, code = "ok", None, 0
    opts = None
    try:
        config_values = _read_config(args.config) if args.config else {}
        opts = _resolve(cmd, args, config_values)
        args._runner(opts)
    except _UsageError as exc:
        status, error, code = "usage-error", str(exc), 1
        print(f"distilvec {cmd.name}: {exc}", file=sys.stderr)
    except (OSError, ValueError, LookupError, EOFError) as exc:
        status, error, code = "data-error", str(exc), 2
        print(f"distilvec {cmd.name}: {exc}", file=sys.stderr)

    if opts is not None:
        run_log = opts.run_log
        config_record = {k: v for k, v in vars(opts).items() if k not in ("config", "run_log")}
        inputs = {
            path: _digest(path)
            for dest in cmd.input_dests
            if (path := getattr(opts, dest, None))
        }
        seed = getattr(opts, cmd.seed_dest) if cmd.seed_dest else None
    else:
        run_log = getattr(args, "run_log", None) or DEFAULT_RUN_LOG
        config_record, inputs, seed = None, {}, None
    manifest = {
        "command": cmd.name,
        "config": config_record,
        "inputs": inputs,
        "seed": seed,
        "version": __version__,
        "duration_s": time.perf_counter() - started,
        "status": status,
        "error": error,
    }
    try:
        with open(run_log, "a", encoding="utf-8") as f:
            f.write(json.dumps(manifest, sort_keys=True) + "\n")
    except OSError as exc:
        print(f"distilvec {cmd.name}: could not write run log: {exc}", file=sys.stderr)
    return code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
