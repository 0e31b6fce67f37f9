"""Randomly weighted MLP token processors and chain-token generation.

A chain token is produced from its parent tokens by (1) pushing each
parent's embedding through the processor MLP, (2) averaging the outputs,
(3) applying LeakyReLU to the average, and (4) taking the normal-token id
whose embedding row has the largest dot product with the result. Argmax is
restricted to normal tokens so chain tokens can never be delimiters, and
ties break toward the smallest id.

Weights are stored float32 (the on-disk dtype); all arithmetic runs in
float64 so the argmax is stable across platforms.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .rng import make_rng
from .vocab import N_SPECIAL, EmbeddingMatrix, Vocabulary

_MLP_MAGIC = b"CILMLP01"


@dataclass(frozen=True)
class Mlp:
    """Depth-l stack of square weight matrices with LeakyReLU activation.

    Layer composition: LeakyReLU after every layer except the last, whose
    output stays linear because the chain-token step applies the activation
    once more after averaging across parents. At the default depth 1 the MLP
    is a single linear map.
    """

    weights: tuple[np.ndarray, ...]
    slope: float

    @property
    def dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def depth(self) -> int:
        return len(self.weights)

    def apply_f64(self, x: np.ndarray) -> np.ndarray:
        """Apply to a batch of row vectors (..., dim), in float64."""
        out = x
        for i, w in enumerate(self.weights):
            out = out @ w.astype(np.float64).T
            if i < len(self.weights) - 1:
                out = leaky_relu(out, self.slope)
        return out


@dataclass(frozen=True)
class TokenProcessorCache:
    """Fixed pool of processors sharing dim, depth, and activation slope."""

    processors: tuple[Mlp, ...]
    seed: int

    @property
    def size(self) -> int:
        return len(self.processors)

    @property
    def dim(self) -> int:
        return self.processors[0].dim

    @property
    def depth(self) -> int:
        return self.processors[0].depth

    @property
    def slope(self) -> float:
        return self.processors[0].slope

    def save(self, path: str) -> None:
        """CILMLP01 container: 32-byte header + concatenated LE f32 weights."""
        header = _MLP_MAGIC + struct.pack(
            "<QIIIf", self.seed, self.size, self.dim, self.depth, self.slope
        )
        with open(path, "wb") as fh:
            fh.write(header)
            for mlp in self.processors:
                for w in mlp.weights:
                    fh.write(np.ascontiguousarray(w, dtype="<f4").tobytes())

    @classmethod
    def load(cls, path: str) -> "TokenProcessorCache":
        with open(path, "rb") as fh:
            header = fh.read(32)
            if len(header) < 32 or header[:8] != _MLP_MAGIC:
                raise ConfigError(f"{path}: not a CILMLP01 processor-cache file")
            seed, count, dim, depth, slope = struct.unpack("<QIIIf", header[8:32])
            per = dim * dim * 4
            procs = []
            for _ in range(count):
                weights = []
                for _ in range(depth):
                    raw = fh.read(per)
                    if len(raw) != per:
                        raise ConfigError(f"{path}: truncated weight payload")
                    weights.append(np.frombuffer(raw, dtype="<f4").reshape(dim, dim).copy())
                procs.append(Mlp(weights=tuple(weights), slope=float(slope)))
        return cls(processors=tuple(procs), seed=seed)


def leaky_relu(x: np.ndarray, slope: float) -> np.ndarray:
    return np.where(x >= 0.0, x, slope * x)


def new_cache(cache_size: int, dim: int, depth: int, slope: float, seed: int) -> TokenProcessorCache:
    """cache_size MLPs with i.i.d. N(0,1) weights from Philox(seed).

    Fill order: processor 0 layer 0 row-major, then layer 1, ..., then
    processor 1, so the cache regenerates bit-exactly from its seed.
    """
    if cache_size < 1:
        raise ConfigError(f"cache_size must be >= 1, got {cache_size}")
    if dim < 1 or depth < 1:
        raise ConfigError(f"dim and depth must be >= 1, got ({dim}, {depth})")
    if not 0.0 < slope <= 1.0:
        raise ConfigError(f"activation slope must be in (0, 1], got {slope}")
    rng = make_rng(seed)
    procs = []
    for _ in range(cache_size):
        weights = tuple(
            rng.standard_normal((dim, dim)).astype(np.float32) for _ in range(depth)
        )
        procs.append(Mlp(weights=weights, slope=slope))
    return TokenProcessorCache(processors=tuple(procs), seed=seed)


def sample_processors(cache: TokenProcessorCache, n_chain: int, rng: np.random.Generator) -> list[int]:
    """n_chain uniform cache indices, with replacement (one per chain node)."""
    if n_chain < 1:
        raise ConfigError(f"n_chain must be >= 1, got {n_chain}")
    return [int(rng.integers(cache.size)) for _ in range(n_chain)]


def chain_token(mlp: Mlp, emb: EmbeddingMatrix, vocab: Vocabulary, parent_ids: list[int]) -> int:
    """Single chain token from its parents' token ids. Pure and deterministic."""
    if not parent_ids:
        raise ConfigError("parent_ids must be non-empty")
    for p in parent_ids:
        if not 0 <= p < emb.rows:
            raise ConfigError(f"parent id {p} outside vocabulary [0, {emb.rows})")
    e64 = emb.as_f64()
    hidden = mlp.apply_f64(e64[np.asarray(parent_ids)])
    activated = leaky_relu(hidden.mean(axis=0), mlp.slope)
    scores = e64 @ activated
    scores[:N_SPECIAL] = -np.inf
    return int(np.argmax(scores))


def chain_tokens_batch(
    dag_parents: tuple[tuple[int, ...], ...],
    processors: list[Mlp],
    e64: np.ndarray,
    inputs: np.ndarray,
) -> np.ndarray:
    """Chain tokens for a whole batch of examples sharing one DAG.

    `inputs` is (K, N) int64; returns (K, C) int64. One matmul pass per chain
    node, same float64 arithmetic as chain_token. Generation and any
    metadata-driven recomputation both call this function, so stored chains
    always match recomputed ones bit for bit.
    """
    n_examples, n_inputs = inputs.shape
    n_chain = len(dag_parents)
    toks = np.empty((n_examples, n_inputs + n_chain), dtype=np.int64)
    toks[:, :n_inputs] = inputs
    for c in range(1, n_chain + 1):
        mlp = processors[c - 1]
        parent_idx = list(dag_parents[c - 1])
        hidden = mlp.apply_f64(e64[toks[:, parent_idx]])
        activated = leaky_relu(hidden.mean(axis=1), mlp.slope)
        scores = activated @ e64.T
        scores[:, :N_SPECIAL] = -np.inf
        toks[:, n_inputs + c - 1] = np.argmax(scores, axis=1)
    return toks[:, n_inputs:]
