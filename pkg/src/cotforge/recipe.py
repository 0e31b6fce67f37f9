"""Power-law CoT probability schedules and dataset token-budget analytics.

A recipe assigns dataset item j (of T) the probability
r(j) = clamp(a * (j/T)**alpha + b, 0, 1) of rendering each of its examples
with the thinking segment. Conventions: 0**0 = 1, and u**inf = 0 for
u in [0, 1), so alpha=0 means "always think" and alpha=inf (pass
math.inf) means "never think" when a=1, b=0.

The budget analytics compute the expected number of thinking-rendered
examples both by direct summation (authoritative) and by the closed-form
Euler-Maclaurin approximation, and turn those into expected token totals
using the fixed per-example sizes: N+6 tokens for a plain example,
N+C+7 for a thinking one, plus one bos per item.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

_SUM_CHUNK = 1 << 22


@dataclass(frozen=True)
class Recipe:
    """Schedule parameters. alpha >= 0, or math.inf for the all-plain extreme."""

    alpha: float
    a: float = 1.0
    b: float = 0.0

    def __post_init__(self) -> None:
        if math.isnan(self.alpha) or self.alpha < 0:
            raise ConfigError(f"alpha must be >= 0 or inf, got {self.alpha}")

    def to_json(self) -> dict:
        return {"alpha": "inf" if math.isinf(self.alpha) else self.alpha, "a": self.a, "b": self.b}

    @classmethod
    def from_json(cls, obj: dict) -> "Recipe":
        if "alpha" not in obj:
            raise ConfigError("recipe config missing required key: alpha")
        return cls(alpha=parse_alpha(obj["alpha"]), a=float(obj.get("a", 1.0)), b=float(obj.get("b", 0.0)))


def parse_alpha(value) -> float:
    """Accept a float, an int, or the string "inf"."""
    if isinstance(value, str):
        if value.strip().lower() in ("inf", "infinity"):
            return math.inf
        return float(value)
    return float(value)


def r_cot(recipe: Recipe, j: int, t: int) -> float:
    """Thinking probability for item j of a T-item dataset, clamped to [0, 1]."""
    if not 0 <= j < t:
        raise ConfigError(f"item index {j} outside [0, {t})")
    u = j / t
    if math.isinf(recipe.alpha):
        power = 0.0  # u < 1 always, so u**inf = 0
    elif recipe.alpha == 0.0:
        power = 1.0  # includes 0**0 = 1
    else:
        power = u**recipe.alpha
    return min(1.0, max(0.0, recipe.a * power + recipe.b))


def r_cot_vector(recipe: Recipe, t: int) -> np.ndarray:
    """r_cot for every j in [0, T) as a float64 vector (same values as r_cot)."""
    if t < 1:
        raise ConfigError(f"dataset size must be >= 1, got {t}")
    u = np.arange(t, dtype=np.float64) / t
    if math.isinf(recipe.alpha):
        power = np.zeros(t)
    elif recipe.alpha == 0.0:
        power = np.ones(t)
    else:
        power = u**recipe.alpha
    return np.clip(recipe.a * power + recipe.b, 0.0, 1.0)


def expected_cot_examples(recipe: Recipe, k: int, t: int) -> tuple[float, float | None]:
    """(exact, approx) expected count of thinking-rendered examples.

    exact = K * sum_j r(j) by direct summation; works for any (a, b).
    approx is the closed-form Euler-Maclaurin estimate
        (K / T**alpha) * (((T-1)**(alpha+1) - 1) / (alpha+1)
                          + ((T-1)**alpha + 1) / 2)
    which is derived for a=1, b=0; for other (a, b) it is returned as None.
    alpha=inf yields (0.0, 0.0).
    """
    if t < 2:
        raise ConfigError(f"dataset size must be >= 2, got {t}")
    if k < 1:
        raise ConfigError(f"examples per item must be >= 1, got {k}")

    exact = 0.0
    for start in range(0, t, _SUM_CHUNK):
        stop = min(start + _SUM_CHUNK, t)
        u = np.arange(start, stop, dtype=np.float64) / t
        if math.isinf(recipe.alpha):
            power = np.zeros(stop - start)
        elif recipe.alpha == 0.0:
            power = np.ones(stop - start)
        else:
            power = u**recipe.alpha
        exact += float(np.sum(np.clip(recipe.a * power + recipe.b, 0.0, 1.0)))
    exact *= k

    if recipe.a != 1.0 or recipe.b != 0.0:
        return exact, None
    if math.isinf(recipe.alpha):
        return exact, 0.0
    al = recipe.alpha
    approx = (k / t**al) * (((t - 1) ** (al + 1) - 1) / (al + 1) + ((t - 1) ** al + 1) / 2)
    return exact, approx


@dataclass(frozen=True)
class BudgetReport:
    """Expected example and token counts for a dataset configuration."""

    expected_cot_examples_exact: float
    expected_cot_examples_approx: float | None
    expected_standard_examples: float
    expected_tokens: float
    params: dict = field(compare=False)

    def to_json(self) -> dict:
        return {
            "expected_cot_examples_exact": self.expected_cot_examples_exact,
            "expected_cot_examples_approx": self.expected_cot_examples_approx,
            "expected_standard_examples": self.expected_standard_examples,
            "expected_tokens": self.expected_tokens,
            "params": self.params,
        }

    def table(self) -> str:
        rows = [
            ("expected CoT examples (exact)", f"{self.expected_cot_examples_exact:.4f}"),
            (
                "expected CoT examples (approx)",
                "n/a" if self.expected_cot_examples_approx is None else f"{self.expected_cot_examples_approx:.4f}",
            ),
            ("expected standard examples", f"{self.expected_standard_examples:.4f}"),
            ("expected tokens", f"{self.expected_tokens:.4f}"),
        ]
        width = max(len(name) for name, _ in rows)
        return "\n".join(f"{name:<{width}}  {value}" for name, value in rows)


def expected_tokens(recipe: Recipe, n: int, c: int, k: int, t: int) -> BudgetReport:
    """Expected-token budget: T bos tokens + per-example rendered sizes.

    Thinking examples cost N+C+7 tokens, plain ones N+6; the exact-sum
    expected thinking count is the value plugged into the total.
    """
    if n < 1 or c < 1 or k < 1:
        raise ConfigError(f"n, c, k must all be >= 1, got ({n}, {c}, {k})")
    exact, approx = expected_cot_examples(recipe, k, t)
    standard = k * t - exact
    total = t + exact * (n + c + 7) + standard * (n + 6)
    return BudgetReport(
        expected_cot_examples_exact=exact,
        expected_cot_examples_approx=approx,
        expected_standard_examples=standard,
        expected_tokens=total,
        params={"n": n, "c": c, "k": k, "t": t, "recipe": recipe.to_json()},
    )
