"""Tagged extended reals.

Infinite localization parameters and tuning-deviation limits are carried as
explicit tags instead of IEEE infinities, so domain code never depends on
float special-value arithmetic. Only comparison, negation and absolute value
are provided; sums such as ``inf - inf`` cannot be formed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import total_ordering
from typing import Iterable, Union

from .errors import ValidationError

__all__ = ["ExtReal", "INF", "NEG_INF", "ext", "ext_vector", "ext_to_json"]

ExtLike = Union["ExtReal", float, int, str]


@total_ordering
@dataclass(frozen=True)
class ExtReal:
    """Element of the extended real line.

    ``inf`` is ``+1`` for plus infinity, ``-1`` for minus infinity and ``0``
    for a finite value held in ``value``.
    """

    value: float = 0.0
    inf: int = 0

    def __post_init__(self):
        if self.inf not in (-1, 0, 1):
            raise ValidationError(f"bad infinity tag {self.inf!r}")
        object.__setattr__(self, "value", float(self.value))
        if self.inf == 0 and not math.isfinite(self.value):
            raise ValidationError("finite ExtReal needs a finite value; use ext() to tag infinities")
        if self.inf != 0 and self.value != 0.0:
            object.__setattr__(self, "value", 0.0)

    @classmethod
    def of(cls, x: ExtLike) -> "ExtReal":
        if isinstance(x, ExtReal):
            return x
        if isinstance(x, str):
            s = x.strip().lower()
            if s in ("inf", "+inf", "infinity", "+infinity"):
                return INF
            if s in ("-inf", "-infinity"):
                return NEG_INF
            try:
                x = float(s)
            except ValueError:
                raise ValidationError(f"cannot parse extended real {x!r}") from None
        x = float(x)
        if math.isnan(x):
            raise ValidationError("NaN is not an extended real")
        if math.isinf(x):
            return INF if x > 0 else NEG_INF
        return cls(x, 0)

    @property
    def is_finite(self) -> bool:
        return self.inf == 0

    @property
    def is_inf(self) -> bool:
        return self.inf != 0

    def is_zero(self) -> bool:
        return self.inf == 0 and self.value == 0.0

    def finite(self) -> float:
        """The finite value; raises for infinities."""
        if self.inf:
            raise ValidationError("infinite ExtReal has no finite value")
        return self.value

    def __abs__(self) -> "ExtReal":
        return INF if self.inf else ExtReal(abs(self.value))

    def __neg__(self) -> "ExtReal":
        return ExtReal(0.0, -self.inf) if self.inf else ExtReal(-self.value)

    def _key(self):
        return (self.inf, self.value)

    def __eq__(self, other):
        try:
            other = ExtReal.of(other)
        except (ValidationError, TypeError, ValueError):
            return NotImplemented
        return self._key() == other._key()

    def __lt__(self, other):
        other = ExtReal.of(other)
        return self._key() < other._key()

    def __hash__(self):
        return hash(self._key())

    def __float__(self) -> float:
        # Boundary conversion for plotting/IO only.
        return math.inf * self.inf if self.inf else self.value

    def __repr__(self):
        if self.inf:
            return "ExtReal(+inf)" if self.inf > 0 else "ExtReal(-inf)"
        return f"ExtReal({self.value!r})"

    def to_json(self):
        """JSON encoding: a number, or the strings ``"inf"`` / ``"-inf"``."""
        if self.inf:
            return "inf" if self.inf > 0 else "-inf"
        return self.value


INF = ExtReal(0.0, 1)
NEG_INF = ExtReal(0.0, -1)


def ext(x: ExtLike) -> ExtReal:
    return ExtReal.of(x)


def ext_vector(values: Iterable[ExtLike]) -> tuple:
    return tuple(ExtReal.of(v) for v in values)


def ext_to_json(values: Iterable[ExtReal]) -> list:
    return [ExtReal.of(v).to_json() for v in values]
