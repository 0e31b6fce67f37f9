"""Abstract token vocabulary and the hidden data-embedding matrix.

The vocabulary is a contiguous id space [0, size). The first nine ids are
delimiter tokens in a fixed order; everything from id 9 up is a "normal"
token usable as an input or chain token. Embeddings are standard-normal
draws from a seeded Philox stream, stored as float32 (the on-disk dtype)
and promoted to float64 wherever arithmetic happens.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .rng import make_rng

#: Delimiter roles in id order: role SPECIAL_ROLES[i] gets id i.
SPECIAL_ROLES = (
    "pad",
    "bos",
    "eos",
    "inp_start",
    "inp_end",
    "think_start",
    "think_end",
    "ans_start",
    "ans_end",
)

N_SPECIAL = len(SPECIAL_ROLES)

_EMB_MAGIC = b"CILEMB01"


@dataclass(frozen=True)
class Vocabulary:
    """Token id space partitioned into nine delimiters plus normal tokens."""

    size: int

    def __post_init__(self) -> None:
        if self.size < N_SPECIAL + 1:
            raise ConfigError(f"vocabulary size must be >= {N_SPECIAL + 1}, got {self.size}")

    @property
    def pad(self) -> int:
        return 0

    @property
    def bos(self) -> int:
        return 1

    @property
    def eos(self) -> int:
        return 2

    @property
    def inp_start(self) -> int:
        return 3

    @property
    def inp_end(self) -> int:
        return 4

    @property
    def think_start(self) -> int:
        return 5

    @property
    def think_end(self) -> int:
        return 6

    @property
    def ans_start(self) -> int:
        return 7

    @property
    def ans_end(self) -> int:
        return 8

    @property
    def special_ids(self) -> dict[str, int]:
        return {role: i for i, role in enumerate(SPECIAL_ROLES)}

    @property
    def normal_ids(self) -> range:
        return range(N_SPECIAL, self.size)

    @property
    def n_normal(self) -> int:
        return self.size - N_SPECIAL

    def is_special(self, token_id: int) -> bool:
        return 0 <= token_id < N_SPECIAL

    def is_normal(self, token_id: int) -> bool:
        return N_SPECIAL <= token_id < self.size

    def token_name(self, token_id: int) -> str:
        """Role name for delimiters, "tok<i>" for normal ids."""
        if self.is_special(token_id):
            return SPECIAL_ROLES[token_id]
        return f"tok{token_id}"


def new_vocabulary(size: int) -> Vocabulary:
    """Vocabulary with delimiters on ids 0..8 and normal tokens on 9..size-1."""
    return Vocabulary(size=size)


@dataclass(frozen=True)
class EmbeddingMatrix:
    """size x dim matrix of N(0,1) draws, regenerable bit-exactly from its seed.

    `data` is float32 (the storage dtype); promote with `as_f64()` before
    arithmetic so fresh and round-tripped matrices behave identically.
    """

    seed: int
    data: np.ndarray

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def as_f64(self) -> np.ndarray:
        return self.data.astype(np.float64)

    def save(self, path: str) -> None:
        """Write the CILEMB01 container: 32-byte header + row-major LE f32."""
        header = _EMB_MAGIC + struct.pack("<QII", self.seed, self.rows, self.dim)
        header += b"\x00" * (32 - len(header))
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(np.ascontiguousarray(self.data, dtype="<f4").tobytes())

    @classmethod
    def load(cls, path: str) -> "EmbeddingMatrix":
        with open(path, "rb") as fh:
            header = fh.read(32)
            if len(header) < 32 or header[:8] != _EMB_MAGIC:
                raise ConfigError(f"{path}: not a CILEMB01 embedding file")
            seed, rows, dim = struct.unpack("<QII", header[8:24])
            raw = fh.read(rows * dim * 4)
        if len(raw) != rows * dim * 4:
            raise ConfigError(f"{path}: truncated embedding payload")
        data = np.frombuffer(raw, dtype="<f4").reshape(rows, dim).copy()
        return cls(seed=seed, data=data)


def sample_embedding_matrix(vocab: Vocabulary, dim: int, seed: int) -> EmbeddingMatrix:
    """Seeded standard-normal embedding matrix, filled row-major.

    Draws float64 normals from Philox(seed) in C order, then casts to the
    float32 storage dtype. Same seed, same bytes.
    """
    if dim < 1:
        raise ConfigError(f"embedding dim must be >= 1, got {dim}")
    rng = make_rng(seed)
    data = rng.standard_normal((vocab.size, dim)).astype(np.float32)
    return EmbeddingMatrix(seed=seed, data=data)
