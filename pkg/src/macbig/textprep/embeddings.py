"""GloVe-format text embeddings aligned to a vocabulary."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .records import DataError, Vocabulary

ZERO_PAD, LOADED, RANDOM = 0, 1, 2
PROVENANCE = {ZERO_PAD: "zero-pad", LOADED: "loaded", RANDOM: "randomly-initialized"}


@dataclass
class EmbeddingTable:
    matrix: np.ndarray  # [V, dim] float32
    provenance: np.ndarray  # [V] int8, one of ZERO_PAD / LOADED / RANDOM

    @property
    def n_loaded(self) -> int:
        return int(np.sum(self.provenance == LOADED))

    @property
    def n_random(self) -> int:
        return int(np.sum(self.provenance == RANDOM))

    def coverage(self) -> dict:
        n = len(self.provenance) - 1
        return {"loaded": self.n_loaded, "initialized": self.n_random,
                "coverage": self.n_loaded / n if n else 0.0}


def load_embeddings(path, vocab: Vocabulary, dim: int = 100, seed: int = 0) -> EmbeddingTable:
    """Fill vocabulary rows from a GloVe text file.

    Words missing from the file get U(-0.05, 0.05) rows from a seeded
    generator (drawn for every row up front, so the values do not depend on
    file contents); row 0 is always zero. The first occurrence of a word wins.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    matrix = rng.uniform(-0.05, 0.05, size=(len(vocab), dim)).astype(np.float32)
    prov = np.full(len(vocab), RANDOM, dtype=np.int8)
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip("\n").rstrip(" ").split(" ")
            if len(parts) == 1 and not parts[0]:
                continue
            if len(parts) != dim + 1:
                raise DataError(f"expected a word and {dim} values, got {len(parts) - 1} values", lineno)
            try:
                values = np.array([float(v) for v in parts[1:]], dtype=np.float32)
            except ValueError:
                raise DataError("unparseable float", lineno) from None
            if not np.all(np.isfinite(values)):
                raise DataError("non-finite value", lineno)
            idx = vocab.index.get(parts[0])
            if idx is not None and idx > 0 and prov[idx] != LOADED:
                matrix[idx] = values
                prov[idx] = LOADED
    matrix[0] = 0
    prov[0] = ZERO_PAD
    return EmbeddingTable(matrix, prov)
