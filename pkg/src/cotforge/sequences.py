"""Rendering, parsing, and seeded generation of abstract-token datasets.

An example is rendered either plain:

    inp_start x1..xN inp_end ans_start yC ans_end eos          (N+6 tokens)

or with its thinking segment:

    inp_start x1..xN inp_end think_start y1..y{C-1} think_end
    ans_start yC ans_end eos                                   (N+C+7 tokens)

A sequence is one bos token followed by K rendered examples that all share
one sampled DAG and one set of chain-token processors. The loss mask marks
the supervised positions: ans_start, yC, ans_end, eos on a plain example
(4 ones) and additionally think_start, y1..y{C-1}, think_end on a thinking
one (C+5 ones).

Every sequence is generated from its own Philox stream derived from
(master_seed, j), with a fixed draw order:

    1. N, M, C each as one uniform index into its (sorted) choice list
    2. the DAG (parent lists in chain-node order)
    3. the C processor indices
    4. all K*N input tokens as one batched draw (row k = example k)
    5. the K uniform rendering variates as one batched draw

Reordering any of these draws is a compatibility break.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .dag import Dag, sample_dag
from .errors import ConfigError, FormatError
from .processors import Mlp, TokenProcessorCache, chain_tokens_batch, new_cache, sample_processors
from .recipe import Recipe, r_cot
from .rng import STREAM_CACHE, STREAM_EMBED, derive_seed, make_rng, permutation, pick
from .vocab import EmbeddingMatrix, N_SPECIAL, Vocabulary, new_vocabulary, sample_embedding_matrix


@dataclass(frozen=True)
class Example:
    """One generated example before rendering."""

    inputs: tuple[int, ...]
    chain: tuple[int, ...]
    is_cot: bool
    uniform_draw: float


@dataclass(frozen=True)
class ParsedExample:
    """Example recovered from a rendered token stream.

    For plain renderings the intermediate tokens are not present in the
    stream, so `intermediates` is None and only the answer is known.
    """

    inputs: tuple[int, ...]
    intermediates: tuple[int, ...] | None
    answer: int
    is_cot: bool


@dataclass(frozen=True)
class SequenceMeta:
    n: int
    m: int
    c: int
    k: int
    r_cot: float
    dag: Dag
    proc_ids: tuple[int, ...]
    cot_flags: tuple[bool, ...]
    seed: int

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "m": self.m,
            "c": self.c,
            "k": self.k,
            "r_cot": self.r_cot,
            "dag": self.dag.to_json(),
            "proc_ids": list(self.proc_ids),
            "cot_flags": [int(f) for f in self.cot_flags],
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SequenceMeta":
        return cls(
            n=obj["n"],
            m=obj["m"],
            c=obj["c"],
            k=obj["k"],
            r_cot=obj["r_cot"],
            dag=Dag.from_json(obj["dag"]),
            proc_ids=tuple(obj["proc_ids"]),
            cot_flags=tuple(bool(f) for f in obj["cot_flags"]),
            seed=obj["seed"],
        )


@dataclass(frozen=True)
class Sequence:
    seq_id: int
    tokens: tuple[int, ...]
    loss_mask: tuple[int, ...]
    meta: SequenceMeta

    def to_record(self) -> dict:
        return {
            "seq_id": self.seq_id,
            "tokens": list(self.tokens),
            "loss_mask": list(self.loss_mask),
            "meta": self.meta.to_json(),
        }

    @classmethod
    def from_record(cls, obj: dict) -> "Sequence":
        return cls(
            seq_id=obj["seq_id"],
            tokens=tuple(obj["tokens"]),
            loss_mask=tuple(obj["loss_mask"]),
            meta=SequenceMeta.from_json(obj["meta"]),
        )


@dataclass(frozen=True)
class DatasetConfig:
    """Everything needed to regenerate an abstract dataset bit-exactly."""

    n_choices: tuple[int, ...]
    m_choices: tuple[int, ...]
    c_choices: tuple[int, ...]
    k: int
    t: int
    recipe: Recipe
    master_seed: int
    vocab_size: int = 1024
    dim: int = 10
    cache_size: int = 64
    depth: int = 1
    slope: float = 0.01
    shuffle: bool = False

    def __post_init__(self) -> None:
        for name, choices in (("n_choices", self.n_choices), ("m_choices", self.m_choices), ("c_choices", self.c_choices)):
            if not choices:
                raise ConfigError(f"{name} must be non-empty")
            if any(v < 1 for v in choices):
                raise ConfigError(f"{name} members must be >= 1, got {list(choices)}")
        if self.k < 1 or self.t < 1:
            raise ConfigError(f"k and t must be >= 1, got ({self.k}, {self.t})")
        if self.vocab_size < N_SPECIAL + 1:
            raise ConfigError(f"vocab_size must be >= {N_SPECIAL + 1}, got {self.vocab_size}")
        if self.dim < 1 or self.cache_size < 1 or self.depth < 1:
            raise ConfigError("dim, cache_size, depth must all be >= 1")
        if not 0.0 < self.slope <= 1.0:
            raise ConfigError(f"slope must be in (0, 1], got {self.slope}")

    def to_json(self) -> dict:
        return {
            "vocab_size": self.vocab_size,
            "dim": self.dim,
            "n_choices": list(self.n_choices),
            "m_choices": list(self.m_choices),
            "c_choices": list(self.c_choices),
            "k": self.k,
            "t": self.t,
            "recipe": self.recipe.to_json(),
            "cache_size": self.cache_size,
            "depth": self.depth,
            "slope": self.slope,
            "master_seed": self.master_seed,
            "shuffle": self.shuffle,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "DatasetConfig":
        missing = {"n_choices", "m_choices", "c_choices", "k", "t", "recipe", "master_seed"} - set(obj)
        if missing:
            raise ConfigError(f"config missing required keys: {sorted(missing)}")
        return cls(
            n_choices=tuple(sorted(obj["n_choices"])),
            m_choices=tuple(sorted(obj["m_choices"])),
            c_choices=tuple(sorted(obj["c_choices"])),
            k=obj["k"],
            t=obj["t"],
            recipe=Recipe.from_json(obj["recipe"]),
            master_seed=obj["master_seed"],
            vocab_size=obj.get("vocab_size", 1024),
            dim=obj.get("dim", 10),
            cache_size=obj.get("cache_size", 64),
            depth=obj.get("depth", 1),
            slope=obj.get("slope", 0.01),
            shuffle=bool(obj.get("shuffle", False)),
        )


def build_artifacts(config: DatasetConfig) -> tuple[Vocabulary, EmbeddingMatrix, TokenProcessorCache]:
    """Vocabulary, embedding matrix, and processor cache for a config.

    Embedding and cache seeds are derived from the master seed on reserved
    streams, so the whole dataset regenerates from the config alone.
    """
    vocab = new_vocabulary(config.vocab_size)
    emb = sample_embedding_matrix(vocab, config.dim, derive_seed(config.master_seed, STREAM_EMBED))
    cache = new_cache(
        config.cache_size,
        config.dim,
        config.depth,
        config.slope,
        derive_seed(config.master_seed, STREAM_CACHE),
    )
    return vocab, emb, cache


def render_standard_example(inputs: list[int], answer: int, vocab: Vocabulary) -> list[int]:
    """Plain rendering: inputs and answer only. N+6 tokens."""
    if not inputs:
        raise ConfigError("inputs must be non-empty")
    for tok in [*inputs, answer]:
        if not vocab.is_normal(tok):
            raise ConfigError(f"token {tok} is not a normal token")
    return [vocab.inp_start, *inputs, vocab.inp_end, vocab.ans_start, answer, vocab.ans_end, vocab.eos]


def render_cot_example(inputs: list[int], chain: list[int], vocab: Vocabulary) -> list[int]:
    """Thinking rendering with the full chain. N+C+7 tokens.

    With a length-1 chain the thinking segment is empty but its delimiters
    are still emitted.
    """
    if not inputs:
        raise ConfigError("inputs must be non-empty")
    if not chain:
        raise ConfigError("chain must be non-empty")
    for tok in [*inputs, *chain]:
        if not vocab.is_normal(tok):
            raise ConfigError(f"token {tok} is not a normal token")
    return [
        vocab.inp_start,
        *inputs,
        vocab.inp_end,
        vocab.think_start,
        *chain[:-1],
        vocab.think_end,
        vocab.ans_start,
        chain[-1],
        vocab.ans_end,
        vocab.eos,
    ]


def standard_example_mask(n: int) -> list[int]:
    """Supervised positions of a plain rendering: the final 4 tokens."""
    return [0] * (n + 2) + [1, 1, 1, 1]


def cot_example_mask(n: int, c: int) -> list[int]:
    """Supervised positions of a thinking rendering: the final C+5 tokens."""
    return [0] * (n + 2) + [1] * (c + 5)


def render_example_tokens(ex: ParsedExample | Example, vocab: Vocabulary, as_cot: bool) -> list[int]:
    """Re-render a parsed or generated example in either mode."""
    inputs = list(ex.inputs)
    if as_cot:
        if isinstance(ex, Example):
            chain = list(ex.chain)
        else:
            if ex.intermediates is None:
                raise FormatError("cannot re-render as thinking: intermediates unknown")
            chain = [*ex.intermediates, ex.answer]
        return render_cot_example(inputs, chain, vocab)
    answer = ex.chain[-1] if isinstance(ex, Example) else ex.answer
    return render_standard_example(inputs, answer, vocab)


def parse_examples(tokens: list[int], vocab: Vocabulary, start: int = 0) -> list[ParsedExample]:
    """Parse a run of rendered examples starting at `start`.

    Raises FormatError on any structural violation; an empty token run
    parses to an empty list.
    """
    out: list[ParsedExample] = []
    i = start
    n_tok = len(tokens)

    def expect(pos: int, tok: int, what: str) -> None:
        if pos >= n_tok or tokens[pos] != tok:
            found = tokens[pos] if pos < n_tok else "<end>"
            raise FormatError(f"position {pos}: expected {what}, found {found}")

    while i < n_tok:
        expect(i, vocab.inp_start, "inp_start")
        i += 1
        inputs = []
        while i < n_tok and tokens[i] != vocab.inp_end:
            if not vocab.is_normal(tokens[i]):
                raise FormatError(f"position {i}: special token {tokens[i]} inside input segment")
            inputs.append(tokens[i])
            i += 1
        expect(i, vocab.inp_end, "inp_end")
        if not inputs:
            raise FormatError(f"position {i}: empty input segment")
        i += 1
        intermediates: tuple[int, ...] | None = None
        is_cot = False
        if i < n_tok and tokens[i] == vocab.think_start:
            is_cot = True
            i += 1
            mids = []
            while i < n_tok and tokens[i] != vocab.think_end:
                if not vocab.is_normal(tokens[i]):
                    raise FormatError(f"position {i}: special token {tokens[i]} inside thinking segment")
                mids.append(tokens[i])
                i += 1
            expect(i, vocab.think_end, "think_end")
            i += 1
            intermediates = tuple(mids)
        expect(i, vocab.ans_start, "ans_start")
        i += 1
        if i >= n_tok or not vocab.is_normal(tokens[i]):
            raise FormatError(f"position {i}: expected a normal answer token")
        answer = tokens[i]
        i += 1
        expect(i, vocab.ans_end, "ans_end")
        i += 1
        expect(i, vocab.eos, "eos")
        i += 1
        out.append(ParsedExample(inputs=tuple(inputs), intermediates=intermediates, answer=answer, is_cot=is_cot))
    return out


def parse_sequence(tokens: list[int], vocab: Vocabulary) -> list[ParsedExample]:
    """Parse a full sequence (leading bos, then rendered examples)."""
    if not tokens or tokens[0] != vocab.bos:
        raise FormatError("sequence must start with bos")
    return parse_examples(tokens, vocab, start=1)


def generate_sequence(
    config: DatasetConfig,
    j: int,
    vocab: Vocabulary,
    emb: EmbeddingMatrix,
    cache: TokenProcessorCache,
) -> Sequence:
    """Generate sequence j of the dataset, independent of all other indices."""
    if not 0 <= j < config.t:
        raise ConfigError(f"sequence index {j} outside [0, {config.t})")
    seed = derive_seed(config.master_seed, j)
    rng = make_rng(seed)
    r = r_cot(config.recipe, j, config.t)

    n = pick(rng, sorted(config.n_choices))
    m = pick(rng, sorted(config.m_choices))
    c = pick(rng, sorted(config.c_choices))
    dag = sample_dag(n, m, c, rng)
    proc_ids = sample_processors(cache, c, rng)

    inputs = N_SPECIAL + rng.integers(0, vocab.n_normal, size=(config.k, n))
    draws = rng.random(config.k)

    procs = [cache.processors[i] for i in proc_ids]
    chains = chain_tokens_batch(dag.parents, procs, emb.as_f64(), inputs)
    examples = [
        Example(
            inputs=tuple(int(v) for v in inputs[k_i]),
            chain=tuple(int(v) for v in chains[k_i]),
            is_cot=bool(r >= draws[k_i]),
            uniform_draw=float(draws[k_i]),
        )
        for k_i in range(config.k)
    ]

    tokens: list[int] = [vocab.bos]
    mask: list[int] = [0]
    for ex in examples:
        if ex.is_cot:
            tokens.extend(render_cot_example(list(ex.inputs), list(ex.chain), vocab))
            mask.extend(cot_example_mask(n, c))
        else:
            tokens.extend(render_standard_example(list(ex.inputs), ex.chain[-1], vocab))
            mask.extend(standard_example_mask(n))

    meta = SequenceMeta(
        n=n,
        m=m,
        c=c,
        k=config.k,
        r_cot=r,
        dag=dag,
        proc_ids=tuple(proc_ids),
        cot_flags=tuple(ex.is_cot for ex in examples),
        seed=seed,
    )
    return Sequence(seq_id=j, tokens=tuple(tokens), loss_mask=tuple(mask), meta=meta)


def recompute_chains(seq: Sequence, emb: EmbeddingMatrix, cache: TokenProcessorCache, vocab: Vocabulary) -> np.ndarray:
    """Chains for every example of `seq`, recomputed from metadata.

    Parses the inputs back out of the token stream and replays the chain
    computation through the stored DAG and processor ids. Shares the exact
    arithmetic of generation, so equality with the stored chain tokens is an
    integrity check, not a tolerance comparison.
    """
    parsed = parse_sequence(list(seq.tokens), vocab)
    inputs = np.array([p.inputs for p in parsed], dtype=np.int64)
    procs = [cache.processors[i] for i in seq.meta.proc_ids]
    return chain_tokens_batch(seq.meta.dag.parents, procs, emb.as_f64(), inputs)


def output_order(config: DatasetConfig) -> list[int]:
    """Order in which sequence ids are emitted (identity unless shuffling)."""
    if not config.shuffle:
        return list(range(config.t))
    return permutation(make_rng(config.master_seed + 1), config.t)


def generate_dataset(config: DatasetConfig) -> Iterator[Sequence]:
    """Yield all T sequences, in shuffled order when the config asks for it."""
    vocab, emb, cache = build_artifacts(config)
    for j in output_order(config):
        yield generate_sequence(config, j, vocab, emb, cache)
