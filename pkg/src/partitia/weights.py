"""Weight sequences theta_j and certified sums over them."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import mpmath
import numpy as np
from scipy import special

from .errors import DivergenceError, DomainError, InvalidWeightsError

KINDS = ("constant", "algebraic", "stretched", "bose", "custom")


@dataclass(frozen=True)
class Asymptotics:
    """theta_j ~ level * j**power * exp(-rate * j**stretch) * activity**j."""

    level: float
    power: float
    rate: float = 0.0
    stretch: float = 0.0


@dataclass(frozen=True)
class WeightSequence:
    """Non-negative weights theta_1, theta_2, ... from a closed-form family.

    ``constant``: theta_j = value.  ``algebraic``: theta_j = value * j**exponent.
    ``stretched``: theta_j = value * j * exp(-j**exponent), or without the
    leading j when ``linear`` is False.  ``bose``: theta_j = 1.
    ``custom``: a finite table (theta_1, ..., theta_N).

    ``activity`` multiplies theta_j by activity**j, which leaves the canonical
    measure unchanged but shifts the grand-canonical activity.
    """

    kind: str
    value: float = 1.0
    exponent: float = 0.0
    linear: bool = True
    table: tuple[float, ...] = ()
    activity: float = 1.0
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidWeightsError(f"unknown weight family {self.kind!r}")
        if not (math.isfinite(self.value) and self.value >= 0):
            raise InvalidWeightsError(f"weight level must be finite and >= 0, got {self.value}")
        if not (math.isfinite(self.activity) and self.activity > 0):
            raise InvalidWeightsError("activity multiplier must be positive")
        if self.kind == "stretched" and not (0 < self.exponent <= 1):
            raise InvalidWeightsError("stretched exponent must lie in (0, 1]")
        if self.kind == "custom":
            arr = np.asarray(self.table, dtype=float)
            if arr.ndim != 1 or arr.size == 0:
                raise InvalidWeightsError("custom table must be a non-empty 1-d sequence")
            if not np.all(np.isfinite(arr)) or np.any(arr < 0):
                bad = int(np.flatnonzero(~np.isfinite(arr) | (arr < 0))[0]) + 1
                raise InvalidWeightsError(f"custom theta_{bad} is negative or non-finite")
            object.__setattr__(self, "table", tuple(float(v) for v in arr))

    # constructors
    @classmethod
    def constant(cls, value: float = 1.0) -> "WeightSequence":
        return cls("constant", value=float(value))

    @classmethod
    def algebraic(cls, exponent: float, value: float = 1.0) -> "WeightSequence":
        return cls("algebraic", value=float(value), exponent=float(exponent))

    @classmethod
    def stretched(cls, exponent: float, linear: bool = True, value: float = 1.0) -> "WeightSequence":
        return cls("stretched", value=float(value), exponent=float(exponent), linear=bool(linear))

    @classmethod
    def bose(cls) -> "WeightSequence":
        return cls("bose")

    @classmethod
    def custom(cls, values: Sequence[float]) -> "WeightSequence":
        return cls("custom", table=tuple(values))

    def with_activity(self, z: float) -> "WeightSequence":
        """Weights theta_j * z**j (composed with any existing multiplier)."""
        return WeightSequence(self.kind, self.value, self.exponent, self.linear, self.table,
                              self.activity * float(z))

    # evaluation
    @property
    def max_index(self) -> float:
        return len(self.table) if self.kind == "custom" else math.inf

    def log_values(self, j: np.ndarray) -> np.ndarray:
        """log theta_j for an array of indices j >= 1 (no caching)."""
        j = np.asarray(j, dtype=float)
        if j.size and j.max() > self.max_index:
            raise InvalidWeightsError(
                f"custom table has {len(self.table)} entries, theta_{int(j.max())} requested")
        with np.errstate(divide="ignore"):
            lv = math.log(self.value) if self.value > 0 else -np.inf
            if self.kind == "bose":
                out = np.zeros_like(j)
            elif self.kind == "constant":
                out = np.full_like(j, lv)
            elif self.kind == "algebraic":
                out = lv + self.exponent * np.log(j)
            elif self.kind == "stretched":
                out = lv - j ** self.exponent
                if self.linear:
                    out = out + np.log(j)
            else:
                out = np.log(np.asarray(self.table)[j.astype(np.int64) - 1])
            if self.activity != 1.0:
                out = out + j * math.log(self.activity)
        return np.asarray(out, dtype=float)

    def log_array(self, n: int) -> np.ndarray:
        """log theta_j for j = 0..n (entry 0 is -inf)."""
        key = ("log", n)
        if key not in self._cache:
            out = np.concatenate(([-np.inf], self.log_values(np.arange(1, n + 1))))
            out.setflags(write=False)
            self._cache[key] = out
        return self._cache[key]

    def array(self, n: int) -> np.ndarray:
        """theta_j for j = 0..n with theta_0 = 0."""
        key = ("lin", n)
        if key not in self._cache:
            out = np.exp(self.log_array(n))
            out.setflags(write=False)
            self._cache[key] = out
        return self._cache[key]

    def __call__(self, j: int) -> float:
        if j < 1:
            raise DomainError("weights are indexed from j = 1")
        return float(self.array(int(j))[j])

    def prefix_sums(self, n: int) -> dict[str, np.ndarray]:
        """Cumulative sums of theta_j, theta_j/j and j*theta_j over j = 1..n."""
        th = self.array(n)[1:]
        j = np.arange(1, n + 1, dtype=float)
        return {
            "theta": np.cumsum(th),
            "theta_over_j": np.cumsum(th / j),
            "j_theta": np.cumsum(j * th),
        }

    # asymptotics
    def asymptotics(self) -> Asymptotics | None:
        if self.kind == "custom":
            return None
        if self.kind == "bose":
            return Asymptotics(1.0, 0.0)
        if self.kind == "constant":
            return Asymptotics(self.value, 0.0)
        if self.kind == "algebraic":
            return Asymptotics(self.value, self.exponent)
        return Asymptotics(self.value, 1.0 if self.linear else 0.0, 1.0, self.exponent)

    def radius(self) -> float:
        """Radius of convergence of sum theta_j z**j."""
        if self.kind == "custom":
            return math.inf
        return 1.0 / self.activity

    def describe(self) -> dict:
        out = {"kind": self.kind}
        if self.kind in ("constant", "algebraic", "stretched"):
            out["value"] = self.value
        if self.kind in ("algebraic", "stretched"):
            out["exponent"] = self.exponent
        if self.kind == "stretched":
            out["linear"] = self.linear
        if self.kind == "custom":
            out["table"] = list(self.table)
        if self.activity != 1.0:
            out["activity"] = self.activity
        return out


@dataclass(frozen=True)
class SeriesValue:
    value: float
    tail_bound: float
    terms: int
    divergent: bool = False


def _hurwitz_tail(q: float, start: int) -> float:
    """sum_{j >= start} j**q for q < -1."""
    return float(special.zeta(-q, start))


def _stretched_tail(q: float, rate: float, g: float, start: float) -> float:
    """Upper bound for sum_{j > start} j**q exp(-rate j**g) via the integral."""
    if start <= 0:
        start = 1.0
    # substitute u = rate * x**g
    a = (q + 1) / g
    u0 = rate * start ** g
    val = mpmath.gammainc(a, u0) / (g * mpmath.power(rate, a))
    return float(val)


def weighted_sum(weights: WeightSequence, s: float = 0.0, z: float = 1.0,
                 integral_power: float | None = 0.0, integral_const: float = 1.0,
                 integral_fn: Callable[[np.ndarray], np.ndarray] | None = None,
                 rtol: float = 1e-17, max_terms: int = 2_000_000) -> SeriesValue:
    """Certified value of sum_j j**s * theta_j * z**j * I_j.

    The spatial factor is I_j = integral_const * j**(-integral_power) when
    ``integral_fn`` is None, otherwise ``integral_fn(j)``.
    """
    if z < 0:
        raise DomainError("activity must be non-negative")
    if z == 0:
        return SeriesValue(0.0, 0.0, 0)

    def factor(j: np.ndarray) -> np.ndarray:
        if integral_fn is not None:
            return np.asarray(integral_fn(j), dtype=float)
        return integral_const * j ** (-float(integral_power))

    if weights.kind == "custom":
        n = len(weights.table)
        j = np.arange(1, n + 1, dtype=float)
        with np.errstate(divide="ignore"):
            logt = weights.log_values(j) + j * math.log(z)
        terms = j ** s * np.exp(logt) * factor(j)
        return SeriesValue(float(terms.sum()), 0.0, n)

    asy = weights.asymptotics()
    zeff = z * weights.activity
    if zeff > 1.0 * (1 + 1e-15):
        return SeriesValue(math.inf, 0.0, 0, divergent=True)
    at_radius = abs(zeff - 1.0) <= 1e-15

    if at_radius and asy.rate == 0.0 and integral_fn is None:
        q = s + asy.power - integral_power
        if q >= -1:
            return SeriesValue(math.inf, 0.0, 0, divergent=True)
        return SeriesValue(asy.level * integral_const * float(special.zeta(-q, 1)), 0.0, -1)

    total = 0.0
    chunk = 4096
    start = 1
    while start <= max_terms:
        j = np.arange(start, start + chunk, dtype=float)
        logt = weights.log_values(j) + j * math.log(z)
        terms = j ** s * np.exp(logt) * factor(j)
        total += float(terms.sum())
        last = float(terms[-1])
        stop = start + chunk - 1
        if terms[-1] <= terms[-2] and last <= rtol * max(total, 1e-300):
            break
        start += chunk
        chunk = min(chunk * 2, 1 << 20)
    else:
        stop = max_terms

    if at_radius:
        if integral_fn is not None:
            q = s + asy.power
            tail = _stretched_tail(q, asy.rate, asy.stretch, stop) * asy.level * float(factor(np.array([1.0]))[0])
        else:
            q = s + asy.power - integral_power
            tail = asy.level * integral_const * _stretched_tail(q, asy.rate, asy.stretch, stop)
    else:
        ratio = zeff * (1 + 1.0 / stop) ** max(asy.power + s, 0.0)
        if ratio >= 1:
            return SeriesValue(math.inf, 0.0, stop, divergent=True)
        tail = last * ratio / (1 - ratio)
    return SeriesValue(total + 0.0, abs(tail), stop)


def levy_mass(weights: WeightSequence, z: float = 1.0) -> SeriesValue:
    """sum_j theta_j z**j / j (square-trap normalization)."""
    return weighted_sum(weights, s=-1.0, z=z)


def levy_exponent(weights: WeightSequence, w: float) -> float:
    """G(w) = sum_j theta_j w**j / j for 0 <= w <= radius, in closed form where known."""
    if w < 0:
        raise DomainError("argument must be non-negative")
    if w == 0:
        return 0.0
    weff = w * weights.activity
    if weights.kind in ("constant", "bose"):
        level = 1.0 if weights.kind == "bose" else weights.value
        if weff >= 1:
            return math.inf
        return -level * math.log1p(-weff)
    if weights.kind == "algebraic":
        order = 1.0 - weights.exponent
        if weff >= 1:
            return weights.value * float(special.zeta(order, 1)) if order > 1 else math.inf
        return weights.value * float(mpmath.polylog(order, weff))
    res = levy_mass(weights, z=w)
    return res.value
