import re

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cotforge import (
    ConfigError,
    FORMAT_FAILURE,
    LangSymConfig,
    Recipe,
    Templates,
    extract_langsym_answer,
    extract_steps,
    generate_langsym_dataset,
    generate_langsym_prompt,
    random_word,
    string_transform,
)
from cotforge.langsym import (
    ChatPrompt,
    TextOracleBackend,
    evaluate_langsym,
    make_langsym_eval_prompt,
    render_assistant,
    strip_chat_prompt,
)
from cotforge.rng import make_rng

from helpers import chi_square_critical, chi_square_uniform


def small_config(**over):
    base = dict(
        n_choices=(4,),
        m_choices=(2,),
        c_choices=(3,),
        k=6,
        t=20,
        recipe=Recipe(alpha=0.0),
        master_seed=555,
    )
    base.update(over)
    return LangSymConfig(**base)


# --- words -----------------------------------------------------------------

def test_random_word_shape():
    rng = make_rng(1)
    for _ in range(200):
        assert re.fullmatch(r"[a-z]{8}", random_word(8, rng))


def test_random_word_zero_rejected():
    with pytest.raises(ConfigError):
        random_word(0, make_rng(0))


def test_character_marginal_uniform():
    rng = make_rng(12)
    counts = [0] * 26
    draws = 100_000
    word = random_word(draws, rng)  # one long word = stream of iid letters
    for ch in word:
        counts[ord(ch) - ord("a")] += 1
    stat = chi_square_uniform(counts, [draws / 26] * 26)
    assert stat < chi_square_critical(25, 0.01)


def test_distinct_letter_mode():
    rng = make_rng(2)
    for _ in range(100):
        w = random_word(10, rng, distinct=True)
        assert len(set(w)) == 10
    with pytest.raises(ConfigError):
        random_word(27, make_rng(0), distinct=True)


# --- transform ---------------------------------------------------------------

def test_transform_reference_example():
    # halves "arib" + "bsjc" -> "aribbsjc" -> advance -> "bsjcctkd"
    assert string_transform(["aghmarib", "aribbsjc"]) == "bsjcctkd"


def test_transform_uniform_halves():
    assert string_transform(["aaaaaaaa", "aaaaaaaa"]) == "bbbbbbbb"


def test_transform_wraparound():
    assert string_transform(["zzzz"]) == "aa"


def test_transform_empty_rejected():
    with pytest.raises(ConfigError):
        string_transform([])


@settings(max_examples=100, deadline=None)
@given(words=st.lists(st.text(alphabet="abcdefghijklmnopqrstuvwxyz", min_size=1, max_size=12), min_size=1, max_size=4))
def test_transform_length_formula(words):
    out = string_transform(words)
    assert len(out) == sum(len(w) - len(w) // 2 for w in words)
    assert re.fullmatch(r"[a-z]+", out)


def test_shift_is_alphabet_bijection():
    word = "thequickbrownfoxjumpsoverthelazydog".replace(" ", "")
    # advancing by one, 26 times, must return to the original tail-compose:
    current = word
    for _ in range(26):
        current = "".join(chr((ord(ch) - ord("a") + 1) % 26 + ord("a")) for ch in current)
    assert current == word


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 100_000))
def test_closure_fan_in_two_w8(seed):
    # with two length-8 parents each contributes 4 letters -> chains stay length 8
    rng = make_rng(seed)
    a, b = random_word(8, rng), random_word(8, rng)
    assert len(string_transform([a, b])) == 8


# --- prompts -----------------------------------------------------------------

def test_prompt_message_structure():
    cfg = small_config()
    chat = generate_langsym_prompt(cfg, 3)
    assert chat.messages[0]["role"] == "system"
    body = chat.messages[1:]
    assert len(body) == 2 * cfg.k
    assert all(m["role"] == "user" for m in body[0::2])
    assert all(m["role"] == "assistant" for m in body[1::2])


def test_prompt_all_plain_when_never_thinking():
    import math

    cfg = small_config(recipe=Recipe(alpha=math.inf))
    chat = generate_langsym_prompt(cfg, 5)
    for msg in chat.messages:
        if msg["role"] == "assistant":
            assert msg["content"].startswith(cfg.templates.answer_open)
            assert "Step" not in msg["content"]


def test_prompt_meta_self_consistency():
    cfg = small_config()
    chat = generate_langsym_prompt(cfg, 7)
    meta = chat.meta
    from cotforge import Dag

    dag = Dag.from_json(meta["dag"])
    for inputs, chain in zip(meta["inputs"], meta["chains"]):
        pool = list(inputs)
        for node in range(meta["c"]):
            word = string_transform([pool[p] for p in dag.parents[node]])
            assert word == chain[node]
            pool.append(word)


def test_rendered_words_match_meta():
    cfg = small_config()
    chat = generate_langsym_prompt(cfg, 2)
    for i in range(cfg.k):
        user = chat.messages[1 + 2 * i]["content"]
        assistant = chat.messages[2 + 2 * i]["content"]
        for word in chat.meta["inputs"][i]:
            assert word in user
        chain = chat.meta["chains"][i]
        assert extract_langsym_answer(assistant) == chain[-1]
        if chat.meta["cot_flags"][i]:
            assert extract_steps(assistant) == chain[:-1]


def test_dataset_determinism():
    cfg = small_config(t=8)
    a = [c.to_record() for c in generate_langsym_dataset(cfg)]
    b = [c.to_record() for c in generate_langsym_dataset(cfg)]
    assert a == b


def test_prompt_independent_of_dataset_iteration():
    cfg = small_config(t=8)
    full = list(generate_langsym_dataset(cfg))
    assert generate_langsym_prompt(cfg, 5).to_record() == full[5].to_record()


def test_word_length_config_floor():
    with pytest.raises(ConfigError):
        small_config(w=1)


# --- templates / anti-leak ----------------------------------------------------

def test_default_templates_pass_lint():
    Templates().validate()


@pytest.mark.parametrize("marker", ["slice", "half", "offset", "shift", "+1"])
def test_leaking_task_text_rejected(marker):
    with pytest.raises(ConfigError):
        Templates(system_prompt=f"Apply a {marker} to the words.").validate()


def test_question_template_needs_placeholder():
    with pytest.raises(ConfigError):
        Templates(question_template="What is the answer?").validate()


# --- extraction -----------------------------------------------------------------

def test_extract_reference_response():
    text = "Step 1: aghmarib\nStep 2: aribbsjc\nfinal answer\n\\boxed{bsjcctkd}"
    assert extract_langsym_answer(text) == "bsjcctkd"
    assert extract_steps(text) == ["aghmarib", "aribbsjc"]


def test_extract_no_boxed_is_failure():
    assert extract_langsym_answer("Step 1: abc\nno answer here") is FORMAT_FAILURE


def test_extract_alphabet_violation_is_failure():
    assert extract_langsym_answer("\\boxed{Hello!}") is FORMAT_FAILURE
    # but a later clean boxed word is still found
    assert extract_langsym_answer("\\boxed{Nope1} then \\boxed{yes}") == "yes"


def test_extract_steps_requires_consecutive_numbering():
    assert extract_steps("Step 1: aa\nStep 3: bb") == ["aa"]
    assert extract_steps("Step 2: aa\nStep 1: bb") == []
    assert extract_steps("Step 1: aa\nStep 2: bb\nStep 3: cc") == ["aa", "bb", "cc"]


def test_render_extract_round_trip_bulk():
    cfg = small_config(t=30)
    for chat in generate_langsym_dataset(cfg):
        for i in range(cfg.k):
            assistant = chat.messages[2 + 2 * i]["content"]
            chain = chat.meta["chains"][i]
            assert extract_langsym_answer(assistant) == chain[-1]
            if chat.meta["cot_flags"][i]:
                assert extract_steps(assistant) == chain[:-1]


# --- stripping and text eval ------------------------------------------------------

def test_strip_chat_prompt_counts():
    cfg = small_config()
    chat = generate_langsym_prompt(cfg, 1)
    stripped = strip_chat_prompt(chat, 3, make_rng(9), cfg.templates)
    assert sum(stripped.meta["cot_flags"][:-1]) == (cfg.k - 1) - 3
    assert stripped.meta["cot_flags"][-1] == 1
    n_think = sum("Step 1:" in m["content"] for m in stripped.messages if m["role"] == "assistant")
    assert n_think == cfg.k - 3


def test_strip_chat_zero_identity():
    cfg = small_config()
    chat = generate_langsym_prompt(cfg, 1)
    assert strip_chat_prompt(chat, 0, make_rng(0), cfg.templates).to_record() == chat.to_record()


def test_text_oracle_both_strategies():
    cfg = small_config(t=10)
    prompts = [make_langsym_eval_prompt(c) for c in generate_langsym_dataset(cfg)]
    backend = TextOracleBackend(prompts, cfg.templates)
    for strategy in ("force_think", "force_answer"):
        report = evaluate_langsym(backend, prompts, strategy, 1000, cfg.templates)
        assert report.accuracy == 1.0
        if strategy == "force_think":
            assert all(all(r.step_correct) for r in report.records)


def test_text_budget_truncation_causes_format_failure():
    cfg = small_config(t=4)
    prompts = [make_langsym_eval_prompt(c) for c in generate_langsym_dataset(cfg)]
    backend = TextOracleBackend(prompts, cfg.templates)
    report = evaluate_langsym(backend, prompts, "force_think", 5, cfg.templates)
    assert all(r.format_failure for r in report.records)
    assert report.accuracy == 0.0


def test_chat_record_round_trip():
    cfg = small_config()
    chat = generate_langsym_prompt(cfg, 0)
    assert ChatPrompt.from_record(chat.to_record()).to_record() == chat.to_record()


def test_render_assistant_modes():
    t = Templates()
    cot = render_assistant(["aa", "bb", "cc"], True, t)
    plain = render_assistant(["aa", "bb", "cc"], False, t)
    assert cot.startswith(t.think_open) and t.think_close in cot
    assert "Step 1: aa" in cot and "Step 2: bb" in cot and "Step 3" not in cot
    assert cot.endswith("\\boxed{cc}")
    assert plain == f"{t.answer_open}\\boxed{{cc}}"
