"""Cooperation-strength schedules and their infinite-product behavior."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence


@dataclass(frozen=True)
class LambdaSchedule:
    """Cooperation strength ``lambda_k`` for iterations ``k = 1, 2, ...``.

    Kinds:
      * ``constant``: ``lambda_k = value``
      * ``inverse_power``: ``lambda_k = 1 - 1/k**value`` (``value = 1`` is the
        harmonic schedule)
      * ``explicit``: ``lambda_k = values[k-1]``, the last entry repeating
    """

    kind: str
    value: float = 0.0
    values: tuple[float, ...] = ()

    @classmethod
    def constant(cls, lam: float) -> "LambdaSchedule":
        return cls("constant", float(lam))

    @classmethod
    def harmonic(cls) -> "LambdaSchedule":
        return cls("inverse_power", 1.0)

    @classmethod
    def inverse_power(cls, exponent: float) -> "LambdaSchedule":
        return cls("inverse_power", float(exponent))

    @classmethod
    def explicit(cls, values: Sequence[float]) -> "LambdaSchedule":
        if not values:
            raise ValueError("explicit schedule needs at least one value")
        return cls("explicit", values=tuple(float(v) for v in values))

    @classmethod
    def parse(cls, text: str) -> "LambdaSchedule":
        """``0.5``, ``harmonic``, ``power:2`` or ``0.1,0.2,0.5``."""
        text = text.strip()
        if text == "harmonic":
            return cls.harmonic()
        if text.startswith("power:"):
            return cls.inverse_power(float(text.split(":", 1)[1]))
        if "," in text:
            return cls.explicit([float(v) for v in text.split(",")])
        return cls.constant(float(text))

    def __call__(self, k: int) -> float:
        if k < 1:
            raise ValueError("iterations start at 1")
        if self.kind == "constant":
            return self.value
        if self.kind == "inverse_power":
            return 1.0 - 1.0 / k**self.value
        if self.kind == "explicit":
            return self.values[min(k, len(self.values)) - 1]
        raise ValueError(f"unknown schedule kind {self.kind!r}")

    @property
    def divergent(self) -> bool | None:
        return schedule_divergent(self)

    def describe(self) -> str:
        if self.kind == "constant":
            return f"constant({self.value!r})"
        if self.kind == "inverse_power":
            return "harmonic" if self.value == 1 else f"power({self.value!r})"
        return "explicit(" + ",".join(repr(v) for v in self.values) + ")"


def schedule_product(schedule: LambdaSchedule, k1: int, k2: int) -> float:
    """``prod_{k=k1}^{k2} lambda_k``; an empty range gives 1."""
    prod = 1.0
    for k in range(k1, k2 + 1):
        prod *= schedule(k)
    return prod


def schedule_divergent(schedule: LambdaSchedule) -> bool | None:
    """Whether ``sum_k (1 - lambda_k)`` diverges, for schedules inside [0, 1).

    ``None`` when the schedule leaves [0, 1) or its form does not decide it.
    """
    if schedule.kind == "constant":
        return True if 0.0 <= schedule.value < 1.0 else None
    if schedule.kind == "inverse_power":
        # sum over k of 1/k^p diverges iff p <= 1
        return schedule.value <= 1.0 if schedule.value >= 0.0 else None
    return None


def closed_form_product(schedule: LambdaSchedule, k1: int, k2: int) -> float | None:
    """Telescoped products for the inverse-power schedules with p = 1 and p = 2."""
    if schedule.kind != "inverse_power" or k1 < 2:
        return None
    if schedule.value == 1:
        # prod (k-1)/k
        return (k1 - 1) / k2
    if schedule.value == 2:
        # prod (k-1)(k+1)/k^2
        return (k1 - 1) * (k2 + 1) / (k1 * k2)
    return None


def product_limit_positive(schedule: LambdaSchedule) -> bool | None:
    """The product over k >= 2 keeps a positive limit
    exactly when ``sum (1 - lambda_k)`` converges."""
    div = schedule_divergent(schedule)
    return None if div is None else not div
