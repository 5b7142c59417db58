"""distilvec: static word embeddings distilled from contextual teacher vectors.

Pipeline: prepare a pretokenized corpus, obtain per-token teacher vectors
(from a file or the built-in synthetic generator), train a static embedding
table against a multi-part objective, optionally retrofit the result over a
synonym graph, and evaluate with standard intrinsic benchmarks.
"""

__version__ = "0.1.0"
