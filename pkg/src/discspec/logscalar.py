"""Signed log-magnitude scalars for products and sums of wildly scaled reals."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np


@dataclass(frozen=True)
class LogScalar:
    """A real number stored as ``sign * exp(log_mag)``.

    ``sign`` is -1, 0 or +1; ``log_mag`` is ignored when ``sign == 0``.
    """

    sign: int
    log_mag: float

    @classmethod
    def from_float(cls, value: float) -> "LogScalar":
        if value == 0.0:
            return ZERO
        if not math.isfinite(value):
            raise ValueError(f"cannot represent {value!r} as LogScalar")
        return cls(1 if value > 0 else -1, math.log(abs(value)))

    @classmethod
    def from_log(cls, log_mag: float, sign: int = 1) -> "LogScalar":
        if log_mag == -math.inf:
            return ZERO
        return cls(sign, float(log_mag))

    def __float__(self) -> float:
        if self.sign == 0:
            return 0.0
        return self.sign * math.exp(self.log_mag)

    def to_float(self) -> float:
        return float(self)

    def __mul__(self, other: "LogScalar") -> "LogScalar":
        other = _coerce(other)
        if self.sign == 0 or other.sign == 0:
            return ZERO
        return LogScalar(self.sign * other.sign, self.log_mag + other.log_mag)

    __rmul__ = __mul__

    def __truediv__(self, other: "LogScalar") -> "LogScalar":
        other = _coerce(other)
        if other.sign == 0:
            raise ZeroDivisionError("LogScalar division by zero")
        if self.sign == 0:
            return ZERO
        return LogScalar(self.sign * other.sign, self.log_mag - other.log_mag)

    def __neg__(self) -> "LogScalar":
        return LogScalar(-self.sign, self.log_mag)

    def __add__(self, other: "LogScalar") -> "LogScalar":
        other = _coerce(other)
        if self.sign == 0:
            return other
        if other.sign == 0:
            return self
        if self.sign == other.sign:
            return LogScalar(self.sign, float(np.logaddexp(self.log_mag, other.log_mag)))
        big, small = (self, other) if self.log_mag >= other.log_mag else (other, self)
        gap = small.log_mag - big.log_mag
        if gap == 0.0:
            return ZERO
        return LogScalar(big.sign, big.log_mag + math.log1p(-math.exp(gap)))

    __radd__ = __add__

    def __sub__(self, other: "LogScalar") -> "LogScalar":
        return self + (-_coerce(other))

    def __rsub__(self, other) -> "LogScalar":
        return _coerce(other) - self

    def rel_diff(self, other: "LogScalar") -> float:
        """|self - other| / max(|self|, |other|), evaluated without leaving log space."""
        other = _coerce(other)
        if self.sign == 0 and other.sign == 0:
            return 0.0
        if self.sign != other.sign:
            return 1.0 if (self.sign == 0 or other.sign == 0) else 2.0
        return -math.expm1(-abs(self.log_mag - other.log_mag))


ZERO = LogScalar(0, -math.inf)
ONE = LogScalar(1, 0.0)


def _coerce(value) -> LogScalar:
    if isinstance(value, LogScalar):
        return value
    return LogScalar.from_float(float(value))


def log_sum(log_terms: Iterable[float]) -> float:
    """Natural log of ``sum(exp(t))`` for nonnegative terms given by their logs.

    The shifted exponentials are added with ``math.fsum``, so the result does not
    depend on the order of the terms beyond the final rounding.
    """
    arr = np.asarray(list(log_terms) if not isinstance(log_terms, np.ndarray) else log_terms,
                     dtype=float)
    if arr.size == 0:
        return -math.inf
    top = float(np.max(arr))
    if top == -math.inf:
        return -math.inf
    if top == math.inf:
        return math.inf
    return top + math.log(math.fsum(np.exp(arr - top).tolist()))


def sum_same_sign(values: Iterable[LogScalar]) -> LogScalar:
    values = list(values)
    signs = {v.sign for v in values if v.sign != 0}
    if not signs:
        return ZERO
    if len(signs) > 1:
        raise ValueError("sum_same_sign called with mixed signs")
    return LogScalar.from_log(log_sum([v.log_mag for v in values if v.sign != 0]), signs.pop())


def cumulative_log_sum(log_terms: np.ndarray) -> np.ndarray:
    """Running ``log(sum_{k<=n} exp(t_k))``."""
    return np.logaddexp.accumulate(np.asarray(log_terms, dtype=float))


def reverse_cumulative_log_sum(log_terms: np.ndarray) -> np.ndarray:
    """Running ``log(sum_{k>=n} exp(t_k))`` over the finite array."""
    arr = np.asarray(log_terms, dtype=float)
    return np.logaddexp.accumulate(arr[::-1])[::-1]
