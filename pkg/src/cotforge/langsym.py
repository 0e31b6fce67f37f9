"""String-symbolic chat datasets: random lowercase words wired through the
same causal DAGs, with a hidden slice-concat-advance word transform.

Each prompt is a system message plus K user/assistant exchanges. A question
lists N random words; the assistant reply optionally walks through the
intermediate words as "Step i: <word>" lines inside a think wrapper, and
always ends with the final word in \\boxed{...}. The task description text
deliberately never explains how chain words are derived - models must infer
the rule from the examples alone - and template validation enforces that.

The word transform takes the trailing portion of each parent word (from the
midpoint, rounded down, to the end), concatenates those pieces in parent
order, then advances every character one place in the alphabet with z
wrapping to a.
"""

from __future__ import annotations

import re
import string
from dataclasses import dataclass, field, asdict
from typing import Iterator

import numpy as np

from .dag import Dag, sample_dag
from .errors import BackendError, ConfigError
from .harness import FORMAT_FAILURE
from .recipe import Recipe, r_cot
from .rng import choose_distinct, derive_seed, make_rng, permutation, pick

ALPHABET = string.ascii_lowercase
_WORD_RE = re.compile(r"[a-z]+")
_BOXED_RE = re.compile(r"\\boxed\{([^{}]*)\}")
_STEP_RE = re.compile(r"Step (\d+): ([a-z]+)")

#: Substrings that would leak the word transform if present in task text.
LEAK_MARKERS = ("slice", "half", "offset", "shift", "+1")

DEFAULT_SYSTEM_PROMPT = (
    "You will be shown a series of word puzzles. Each question lists several "
    "input words made of lowercase letters. A hidden rule turns them into a "
    "single final answer word. Work out the rule from the solved examples. "
    "You may reason with intermediate words, writing each as 'Step i: <word>', "
    "and you must give the final answer as \\boxed{word}."
)
DEFAULT_QUESTION_TEMPLATE = "The input words are: {words}. What is the final word?"


@dataclass(frozen=True)
class Templates:
    """Chat formatting knobs. Step lines and \\boxed{} are fixed contracts."""

    system_prompt: str = DEFAULT_SYSTEM_PROMPT
    question_template: str = DEFAULT_QUESTION_TEMPLATE
    think_open: str = "<think>\n"
    think_close: str = "</think>\n"
    answer_open: str = "final answer\n"

    def validate(self) -> None:
        for name in ("system_prompt", "question_template", "think_open", "think_close", "answer_open"):
            if not getattr(self, name):
                raise ConfigError(f"template field {name} must be non-empty")
        if "{words}" not in self.question_template:
            raise ConfigError("question_template must contain a {words} placeholder")
        task_text = (self.system_prompt + " " + self.question_template).lower()
        for marker in LEAK_MARKERS:
            if marker in task_text:
                raise ConfigError(f"task description leaks the transform (contains {marker!r})")

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "Templates":
        return cls(**{k: obj[k] for k in obj})


@dataclass(frozen=True)
class LangSymConfig:
    n_choices: tuple[int, ...]
    m_choices: tuple[int, ...]
    c_choices: tuple[int, ...]
    k: int
    t: int
    recipe: Recipe
    master_seed: int
    w: int = 8
    distinct_letters: bool = False
    shuffle: bool = False
    templates: Templates = field(default_factory=Templates)

    def __post_init__(self) -> None:
        for name, choices in (("n_choices", self.n_choices), ("m_choices", self.m_choices), ("c_choices", self.c_choices)):
            if not choices:
                raise ConfigError(f"{name} must be non-empty")
            if any(v < 1 for v in choices):
                raise ConfigError(f"{name} members must be >= 1, got {list(choices)}")
        if self.k < 1 or self.t < 1:
            raise ConfigError(f"k and t must be >= 1, got ({self.k}, {self.t})")
        if self.w < 2:
            raise ConfigError(f"word length must be >= 2, got {self.w}")
        if self.distinct_letters and self.w > len(ALPHABET):
            raise ConfigError(f"distinct letters impossible for word length {self.w} > 26")
        self.templates.validate()

    def to_json(self) -> dict:
        return {
            "n_choices": list(self.n_choices),
            "m_choices": list(self.m_choices),
            "c_choices": list(self.c_choices),
            "k": self.k,
            "t": self.t,
            "recipe": self.recipe.to_json(),
            "master_seed": self.master_seed,
            "w": self.w,
            "distinct_letters": self.distinct_letters,
            "shuffle": self.shuffle,
            "templates": self.templates.to_json(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "LangSymConfig":
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
            w=obj.get("w", 8),
            distinct_letters=bool(obj.get("distinct_letters", False)),
            shuffle=bool(obj.get("shuffle", False)),
            templates=Templates.from_json(obj["templates"]) if "templates" in obj else Templates(),
        )


@dataclass(frozen=True)
class ChatPrompt:
    prompt_id: int
    messages: tuple[dict, ...]
    meta: dict = field(compare=False)

    def to_record(self) -> dict:
        return {
            "prompt_id": self.prompt_id,
            "messages": [dict(m) for m in self.messages],
            "meta": self.meta,
        }

    @classmethod
    def from_record(cls, obj: dict) -> "ChatPrompt":
        return cls(prompt_id=obj["prompt_id"], messages=tuple(obj["messages"]), meta=obj["meta"])


def random_word(w: int, rng: np.random.Generator, distinct: bool = False) -> str:
    """w lowercase letters; i.i.d. by default, distinct in `distinct` mode."""
    if w < 1:
        raise ConfigError(f"word length must be >= 1, got {w}")
    if distinct:
        if w > len(ALPHABET):
            raise ConfigError(f"cannot draw {w} distinct letters")
        return "".join(ALPHABET[i] for i in choose_distinct(rng, len(ALPHABET), w))
    return "".join(ALPHABET[int(i)] for i in rng.integers(0, len(ALPHABET), size=w))


def string_transform(parent_words: list[str]) -> str:
    """Trailing portions of the parents, concatenated, every letter advanced.

    Each parent contributes word[len(word)//2:]; the concatenation is then
    mapped a->b, ..., y->z, z->a.
    """
    if not parent_words:
        raise ConfigError("parent_words must be non-empty")
    tail = "".join(w[len(w) // 2 :] for w in parent_words)
    return "".join(ALPHABET[(ord(ch) - ord("a") + 1) % 26] for ch in tail)


def render_assistant(chain: list[str], as_cot: bool, templates: Templates) -> str:
    """Assistant turn: optional stepwise thinking, then the boxed answer."""
    answer = f"{templates.answer_open}\\boxed{{{chain[-1]}}}"
    if not as_cot:
        return answer
    steps = "".join(f"Step {i}: {word}\n" for i, word in enumerate(chain[:-1], start=1))
    return f"{templates.think_open}{steps}{templates.think_close}{answer}"


def render_question(words: list[str], templates: Templates) -> str:
    return templates.question_template.format(words=", ".join(words))


def generate_langsym_prompt(config: LangSymConfig, j: int) -> ChatPrompt:
    """Prompt j of the dataset: fresh words, shared DAG, seeded chat turns.

    Draw order per prompt: N, M, C choices, the DAG, then per example the
    N words (letters batched per word) followed by the rendering variate.
    """
    if not 0 <= j < config.t:
        raise ConfigError(f"prompt index {j} outside [0, {config.t})")
    seed = derive_seed(config.master_seed, j)
    rng = make_rng(seed)
    r = r_cot(config.recipe, j, config.t)

    n = pick(rng, sorted(config.n_choices))
    m = pick(rng, sorted(config.m_choices))
    c = pick(rng, sorted(config.c_choices))
    dag = sample_dag(n, m, c, rng)

    messages: list[dict] = [{"role": "system", "content": config.templates.system_prompt}]
    all_inputs: list[list[str]] = []
    all_chains: list[list[str]] = []
    flags: list[bool] = []
    for _ in range(config.k):
        words = [random_word(config.w, rng, config.distinct_letters) for _ in range(n)]
        pool = list(words)
        chain: list[str] = []
        for node in range(c):
            parents = [pool[p] for p in dag.parents[node]]
            word = string_transform(parents)
            chain.append(word)
            pool.append(word)
        is_cot = r >= rng.random()
        messages.append({"role": "user", "content": render_question(words, config.templates)})
        messages.append({"role": "assistant", "content": render_assistant(chain, is_cot, config.templates)})
        all_inputs.append(words)
        all_chains.append(chain)
        flags.append(is_cot)

    meta = {
        "n": n,
        "m": m,
        "c": c,
        "k": config.k,
        "w": config.w,
        "r_cot": r,
        "dag": dag.to_json(),
        "inputs": all_inputs,
        "chains": all_chains,
        "cot_flags": [int(f) for f in flags],
        "seed": seed,
    }
    return ChatPrompt(prompt_id=j, messages=tuple(messages), meta=meta)


def generate_langsym_dataset(config: LangSymConfig) -> Iterator[ChatPrompt]:
    order = range(config.t) if not config.shuffle else permutation(make_rng(config.master_seed + 1), config.t)
    for j in order:
        yield generate_langsym_prompt(config, j)


def strip_chat_prompt(
    chat: ChatPrompt,
    k_prime: int,
    rng: np.random.Generator,
    templates: Templates | None = None,
) -> ChatPrompt:
    """Re-render k_prime thinking assistant turns as answer-only turns.

    Mirrors the token-level stripping: uniform without replacement among the
    first K-1 examples' thinking turns; the final exchange is never touched.
    Pass the dataset's templates when it was generated with non-default ones.
    """
    meta = dict(chat.meta)
    flags = [bool(f) for f in meta["cot_flags"]]
    k = meta["k"]
    cot_positions = [i for i in range(k - 1) if flags[i]]
    if not 0 <= k_prime <= len(cot_positions):
        raise ConfigError(f"k_prime {k_prime} outside [0, {len(cot_positions)}] thinking context examples")
    chosen = set()
    if k_prime:
        sel = choose_distinct(rng, len(cot_positions), k_prime)
        chosen = {cot_positions[i] for i in sel}

    if templates is None:
        templates = Templates()
    messages = [dict(m) for m in chat.messages]
    for i in chosen:
        flags[i] = False
        # message layout: system at 0, example i's user at 1+2i, assistant at 2+2i
        messages[2 + 2 * i] = {
            "role": "assistant",
            "content": render_assistant(list(meta["chains"][i]), False, templates),
        }
    meta["cot_flags"] = [int(f) for f in flags]
    return ChatPrompt(prompt_id=chat.prompt_id, messages=tuple(messages), meta=meta)


def extract_langsym_answer(text: str):
    """Contents of the first \\boxed{...} that is a lowercase word, else FORMAT_FAILURE."""
    for match in _BOXED_RE.finditer(text):
        word = match.group(1)
        if _WORD_RE.fullmatch(word):
            return word
    return FORMAT_FAILURE


def extract_steps(text: str) -> list[str]:
    """Words from 'Step i: <word>' lines with i running 1, 2, ... consecutively.

    Scanning stops at the first out-of-order index, so a stray later step
    cannot append to the list.
    """
    steps: list[str] = []
    for match in _STEP_RE.finditer(text):
        if int(match.group(1)) != len(steps) + 1:
            break
        steps.append(match.group(2))
    return steps


# --- text-side evaluation -------------------------------------------------

@dataclass(frozen=True)
class LangSymEvalPrompt:
    """Chat context ending in the unanswered query question."""

    messages: tuple[dict, ...]
    ground_truth_chain: tuple[str, ...]
    meta: dict = field(compare=False)


def make_langsym_eval_prompt(chat: ChatPrompt) -> LangSymEvalPrompt:
    """Withhold the final assistant turn; its chain is the ground truth."""
    k = chat.meta["k"]
    if k < 2:
        raise ConfigError(f"need at least 2 examples to build a prompt, got {k}")
    messages = chat.messages[:-1]  # drop the last assistant turn
    chain = tuple(chat.meta["chains"][k - 1])
    meta = dict(chat.meta)
    meta["seq_id"] = chat.prompt_id
    return LangSymEvalPrompt(messages=tuple(messages), ground_truth_chain=chain, meta=meta)


def force_generate_text(backend, prompt: LangSymEvalPrompt, strategy: str, budget: int, templates: Templates) -> str:
    """One whole-completion request under a text forcing strategy.

    The force marker is sent as a partial assistant turn for the backend to
    continue; the returned text is marker + completion, with the completion
    truncated to `budget` characters.
    """
    if strategy == "force_think":
        marker = templates.think_open
    elif strategy == "force_answer":
        marker = templates.answer_open
    else:
        raise ConfigError(f"unsupported text strategy {strategy!r}")
    if budget < 1:
        raise ConfigError(f"budget must be >= 1, got {budget}")
    messages = [dict(m) for m in prompt.messages]
    messages.append({"role": "assistant", "content": marker})
    completion = backend.complete(messages)
    return marker + completion[:budget]


class TextOracleBackend:
    """Continues each known prompt with its ground-truth assistant turn."""

    def __init__(self, prompts: list[LangSymEvalPrompt], templates: Templates | None = None):
        self._templates = templates or Templates()
        self._chains = {self._key(p.messages): list(p.ground_truth_chain) for p in prompts}

    @staticmethod
    def _key(messages) -> str:
        # the final user question is unique per prompt with overwhelming
        # probability; include the full context to make the key exact
        import json as _json

        return _json.dumps([dict(m) for m in messages], sort_keys=True)

    def complete(self, messages: list[dict]) -> str:
        partial = ""
        context = messages
        if messages and messages[-1]["role"] == "assistant":
            partial = messages[-1]["content"]
            context = messages[:-1]
        chain = self._chains.get(self._key(context))
        if chain is None:
            raise BackendError("unknown prompt context")
        for as_cot in (True, False):
            full = render_assistant(chain, as_cot, self._templates)
            if full.startswith(partial):
                return full[len(partial):]
        raise BackendError(f"forced prefix {partial!r} does not match any canonical turn")


class TextStdioBackend:
    """External completion process: {"messages": [...]} -> {"completion": "..."}."""

    def __init__(self, cmd: list[str]):
        self._cmd = cmd
        self._proc = None

    def complete(self, messages: list[dict]) -> str:
        import json as _json
        import subprocess

        if self._proc is None or self._proc.poll() is not None:
            self._proc = subprocess.Popen(
                self._cmd, stdin=subprocess.PIPE, stdout=subprocess.PIPE, text=True, bufsize=1
            )
        try:
            self._proc.stdin.write(_json.dumps({"messages": messages}) + "\n")
            self._proc.stdin.flush()
            line = self._proc.stdout.readline()
        except (BrokenPipeError, OSError) as exc:
            raise BackendError(f"text stdio backend pipe failure: {exc}") from exc
        if not line:
            raise BackendError("text stdio backend closed its output")
        try:
            return str(_json.loads(line)["completion"])
        except (KeyError, ValueError, TypeError) as exc:
            raise BackendError(f"text stdio backend sent malformed reply {line!r}") from exc

    def close(self) -> None:
        if self._proc is not None and self._proc.poll() is None:
            self._proc.stdin.close()
            self._proc.terminate()
            self._proc.wait(timeout=5)
        self._proc = None


def evaluate_langsym(
    backend,
    prompts: list[LangSymEvalPrompt],
    strategy: str,
    budget: int,
    templates: Templates | None = None,
) -> "EvalReport":
    """Text analogue of harness.evaluate: boxed-answer accuracy plus step flags."""
    from .harness import EvalReport, PromptRecord

    if not prompts:
        raise ConfigError("prompts must be non-empty")
    templates = templates or Templates()
    records = []
    failures = 0
    for idx, prompt in enumerate(prompts):
        dag = Dag.from_json(prompt.meta["dag"])
        in_dag = [dag.reaches_answer(dag.n_inputs + c - 1) for c in range(1, dag.n_chain)]
        truth = list(prompt.ground_truth_chain)
        try:
            text = force_generate_text(backend, prompt, strategy, budget, templates)
        except BackendError as exc:
            failures += 1
            records.append(
                PromptRecord(
                    prompt_id=prompt.meta.get("seq_id", idx),
                    predicted=None,
                    format_failure=True,
                    indicator=0,
                    generated=[],
                    step_correct=[False] * len(in_dag),
                    step_in_dag=in_dag,
                    error=str(exc),
                    meta=prompt.meta,
                )
            )
            continue
        predicted = extract_langsym_answer(text)
        failed = predicted is FORMAT_FAILURE
        indicator = int(not failed and predicted == truth[-1])
        steps = extract_steps(text)
        step_correct = [i < len(steps) and steps[i] == truth[i] for i in range(len(truth) - 1)]
        records.append(
            PromptRecord(
                prompt_id=prompt.meta.get("seq_id", idx),
                predicted=None if failed else predicted,
                format_failure=failed,
                indicator=indicator,
                generated=[text],
                step_correct=step_correct,
                step_in_dag=in_dag,
                meta=prompt.meta,
            )
        )
    if failures == len(prompts):
        raise BackendError(f"backend failed on all {failures} prompts")
    accuracy = sum(r.indicator for r in records) / len(records)
    return EvalReport(records=records, accuracy=accuracy)
