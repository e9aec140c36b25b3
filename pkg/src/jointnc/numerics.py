"""Scalar substrate: exact rationals and error-tracked floats.

Two arithmetic modes coexist throughout the package:

* ``"rational"`` -- values are :class:`fractions.Fraction`, error free.
* ``"float"`` -- values are :class:`TrackedFloat`, a double carrying a
  running absolute-error bound.

Grid-valued results (see :mod:`jointnc.inversion`) store float-mode data as
plain ``float64`` arrays plus a parallel error array, which is the
vectorised form of the same bookkeeping.
"""
from __future__ import annotations

import math
import sys
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Iterable, Sequence, Union

RATIONAL = "rational"
FLOAT = "float"
MODES = (RATIONAL, FLOAT)

EPS = sys.float_info.epsilon  # 2**-52
UNIT_ROUNDOFF = EPS / 2


class InexactError(ValueError):
    """Raised when an exact (rational) result is requested for an irrational quantity."""


def check_mode(mode: str) -> str:
    if mode not in MODES:
        raise ValueError(f"unknown scalar mode {mode!r}; expected one of {MODES}")
    return mode


def gamma_n(n: int) -> float:
    """Classical bound n*u/(1 - n*u) for n accumulated roundings."""
    nu = n * UNIT_ROUNDOFF
    if nu >= 1:
        return math.inf
    return nu / (1 - nu)


@dataclass(frozen=True)
class TrackedFloat:
    """A double together with a bound on its absolute error."""

    value: float
    err: float = 0.0

    def __post_init__(self):
        if not self.err >= 0:
            raise ValueError("error bound must be non-negative")

    @staticmethod
    def of(x) -> "TrackedFloat":
        if isinstance(x, TrackedFloat):
            return x
        if isinstance(x, (int, Fraction)):
            v = float(x)
            # conversion of an int/Fraction rounds once
            exact = Fraction(v) == Fraction(x)
            return TrackedFloat(v, 0.0 if exact else UNIT_ROUNDOFF * abs(v))
        return TrackedFloat(float(x), 0.0)

    def _round(self, v: float, err: float) -> "TrackedFloat":
        return TrackedFloat(v, err + UNIT_ROUNDOFF * abs(v))

    def __add__(self, other):
        o = TrackedFloat.of(other)
        return self._round(self.value + o.value, self.err + o.err)

    __radd__ = __add__

    def __neg__(self):
        return TrackedFloat(-self.value, self.err)

    def __sub__(self, other):
        return self + (-TrackedFloat.of(other))

    def __rsub__(self, other):
        return TrackedFloat.of(other) + (-self)

    def __mul__(self, other):
        o = TrackedFloat.of(other)
        v = self.value * o.value
        err = abs(self.value) * o.err + abs(o.value) * self.err + self.err * o.err
        return self._round(v, err)

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = TrackedFloat.of(other)
        denom = abs(o.value) - o.err
        if denom <= 0:
            raise ZeroDivisionError("divisor interval contains zero")
        v = self.value / o.value
        err = (abs(self.value) * o.err + abs(o.value) * self.err) / (abs(o.value) * denom)
        return self._round(v, err)

    def __rtruediv__(self, other):
        return TrackedFloat.of(other) / self

    def __abs__(self):
        return TrackedFloat(abs(self.value), self.err)

    def __float__(self):
        return self.value

    def __lt__(self, other):
        return self.value < float(other)

    def __gt__(self, other):
        return self.value > float(other)

    def contains(self, x, slack: float = 0.0) -> bool:
        """True if ``x`` lies in [value - err - slack, value + err + slack]."""
        if isinstance(x, (int, Fraction)):
            return abs(Fraction(self.value) - x) <= Fraction(self.err) + Fraction(slack)
        return abs(self.value - float(x)) <= self.err + slack


Scalar = Union[Fraction, TrackedFloat]


def to_float(x) -> float:
    return float(x.value) if isinstance(x, TrackedFloat) else float(x)


def error_of(x) -> float:
    return x.err if isinstance(x, TrackedFloat) else 0.0


def as_scalar(x, mode: str) -> Scalar:
    """Coerce a number into the given mode; floats cannot become rationals."""
    check_mode(mode)
    if mode == RATIONAL:
        if isinstance(x, TrackedFloat) or isinstance(x, float):
            raise InexactError(f"cannot represent float {x!r} exactly")
        return Fraction(x)
    return TrackedFloat.of(x)


@lru_cache(maxsize=None)
def factorial(n: int) -> int:
    """Exact n! as a Python integer (memoized; lru_cache is thread safe)."""
    if n < 0:
        raise ValueError("factorial of a negative number")
    return math.factorial(n)


def binomial(k: int, n: int, mode: str = RATIONAL) -> Scalar:
    """C(k, n), zero when n > k."""
    if k < 0 or n < 0:
        raise ValueError("binomial arguments must be non-negative")
    c = math.comb(k, n)
    return Fraction(c) if check_mode(mode) == RATIONAL else TrackedFloat.of(c)


def poisson_numerator(mean, k: int) -> Fraction:
    """mean**k / k!, exact for rational ``mean`` (the Poisson weight without e**-mean)."""
    return Fraction(mean) ** k / factorial(k)


def poisson_weight(mean, k: int, mode: str = FLOAT) -> Scalar:
    """e**-mean * mean**k / k!.

    Exact only for ``mean == 0``; any other mean is irrational so rational mode
    raises :class:`InexactError`.
    """
    if mean < 0 or k < 0:
        raise ValueError("poisson_weight needs mean >= 0 and k >= 0")
    check_mode(mode)
    if mean == 0:
        w = 1 if k == 0 else 0
        return Fraction(w) if mode == RATIONAL else TrackedFloat(float(w))
    if mode == RATIONAL:
        raise InexactError("e**-mean is irrational for mean > 0")
    m = float(mean)
    if k < 150:
        v = math.exp(-m) * m**k / factorial(k)
        # exp, pow, int->float conversion, product, quotient
        return TrackedFloat(v, 8 * UNIT_ROUNDOFF * abs(v))
    logv = -m + k * math.log(m) - math.lgamma(k + 1)
    v = math.exp(logv)
    # lgamma's absolute error scales with the magnitude of the logarithm
    rel = (8 + 4 * (abs(logv) + m + k * abs(math.log(m)))) * UNIT_ROUNDOFF
    return TrackedFloat(v, rel * v)


def poisson_tail_bound(mean: float, k: int) -> float:
    """Upper bound on sum_{j > k} e**-mean mean**j / j!."""
    if mean == 0:
        return 0.0
    nxt = to_float(poisson_weight(mean, k + 1))
    ratio = mean / (k + 2)
    if ratio >= 1:
        return 1.0
    return nxt / (1 - ratio) * (1 + 16 * UNIT_ROUNDOFF)


# ---------------------------------------------------------------------------
# Series summation


@dataclass(frozen=True)
class SeriesResult:
    sum: Scalar
    terms_used: int
    truncation_bound: float
    converged: bool

    @property
    def value(self) -> float:
        return to_float(self.sum)

    @property
    def error(self) -> float:
        """Rounding bound plus truncation bound."""
        return error_of(self.sum) + self.truncation_bound


def alternating_sum(
    terms: Union[Sequence, Callable[[int], object]],
    tolerance: float = 1e-15,
    max_terms: int = 10_000,
    *,
    safety: float = 10.0,
    window: int = 2,
    min_terms: int = 1,
    tail_bound: Callable[[int], float] | None = None,
    rel_tolerance: float = 0.0,
) -> SeriesResult:
    """Sum a (possibly infinite) signed series with error tracking.

    ``terms`` is either a finite sequence (summed completely, truncation 0) or
    a callable ``k -> term``.  For a callable, summation stops after term ``k``
    once ``k + 1 >= min_terms``, the largest magnitude among the last
    ``window`` terms is below ``tolerance``, the tail estimate
    ``safety * that magnitude`` is below ``tolerance`` and, when given,
    ``tail_bound(k + 1)`` (a certified bound on the remainder from index
    ``k + 1``) is below ``tolerance``.  The reported truncation bound is the
    certified one when available, otherwise the heuristic estimate.

    Rational terms are summed exactly.  Float terms use Neumaier compensated
    summation; the error bound accounts for per-term errors and rounding.
    """
    if not callable(terms):  # finite sequence
        seq = list(terms)
        return _sum_finite(seq)

    exact = True
    total_q = Fraction(0)
    s = 0.0
    comp = 0.0
    abs_sum = 0.0
    term_err = 0.0
    recent: list[float] = []
    k = -1
    trunc = math.inf
    for k in range(max_terms):
        t = terms(k)
        if isinstance(t, (int, Fraction)) and exact:
            total_q += t
            mag = abs(float(t))
        else:
            if exact:
                exact = False
                s, comp = _neumaier_start(total_q)
                term_err += error_of(TrackedFloat.of(total_q))
                abs_sum += abs(float(total_q))
            tv = to_float(t)
            term_err += error_of(t) if isinstance(t, TrackedFloat) else error_of(TrackedFloat.of(t))
            s, comp = _neumaier_step(s, comp, tv)
            abs_sum += abs(tv)
            mag = abs(tv)
        recent.append(mag)
        if len(recent) > window:
            recent.pop(0)
        if k + 1 < min_terms:
            continue
        last = max(recent)
        thresh = tolerance
        if rel_tolerance:
            thresh += rel_tolerance * abs(float(total_q) if exact else s + comp)
        if last > thresh or safety * last > thresh:
            continue
        if tail_bound is not None:
            tb = tail_bound(k + 1)
            if tb > thresh:
                continue
            trunc = tb
        else:
            trunc = safety * last
        break
    else:
        trunc = tail_bound(k + 1) if tail_bound is not None else math.inf
        return SeriesResult(_finish(exact, total_q, s, comp, abs_sum, term_err, k + 1),
                            k + 1, trunc, False)
    return SeriesResult(_finish(exact, total_q, s, comp, abs_sum, term_err, k + 1),
                        k + 1, trunc, True)


def _sum_finite(seq: list) -> SeriesResult:
    if all(isinstance(t, (int, Fraction)) for t in seq):
        return SeriesResult(Fraction(sum(seq, Fraction(0))), len(seq), 0.0, True)
    s = comp = abs_sum = term_err = 0.0
    for t in seq:
        tf = TrackedFloat.of(t)
        s, comp = _neumaier_step(s, comp, tf.value)
        abs_sum += abs(tf.value)
        term_err += tf.err
    return SeriesResult(_finish(False, Fraction(0), s, comp, abs_sum, term_err, len(seq)),
                        len(seq), 0.0, True)


def _neumaier_start(q: Fraction):
    return float(q), 0.0


def _neumaier_step(s: float, comp: float, x: float):
    t = s + x
    if abs(s) >= abs(x):
        comp += (s - t) + x
    else:
        comp += (x - t) + s
    return t, comp


def _finish(exact, total_q, s, comp, abs_sum, term_err, n) -> Scalar:
    if exact:
        return total_q
    v = s + comp
    # compensated summation: |err| <= 2u|S| + O(n u^2) sum|x_i|
    err = term_err + 2 * UNIT_ROUNDOFF * abs(v) + 2 * gamma_n(n) ** 2 * abs_sum
    return TrackedFloat(v, err)


# ---------------------------------------------------------------------------
# Exact rational generating functions


class RationalGF:
    """A rational function num(z)/den(z) with Fraction coefficients.

    Used as the exact carrier of photon-number distributions whose
    generating function G(z) = sum_n p(n) z**n is rational (Fock, thermal,
    photon-added thermal, finite custom).  Coefficient lists are in
    ascending powers.
    """

    __slots__ = ("num", "den")

    def __init__(self, num: Iterable, den: Iterable = (1,)):
        self.num = _trim([Fraction(c) for c in num])
        self.den = _trim([Fraction(c) for c in den])
        if not any(self.den):
            raise ZeroDivisionError("zero denominator polynomial")

    def __repr__(self):
        return f"RationalGF(num={self.num}, den={self.den})"

    def __eq__(self, other):
        if not isinstance(other, RationalGF):
            return NotImplemented
        return _trim(_polymul(self.num, other.den)) == _trim(_polymul(other.num, self.den))

    def __hash__(self):
        return hash((tuple(self.num), tuple(self.den)))

    def __call__(self, z) -> Fraction:
        z = Fraction(z)
        return _polyval(self.num, z) / _polyval(self.den, z)

    def compose_affine(self, a, b) -> "RationalGF":
        """Return z -> G(a*z + b)."""
        return RationalGF(_compose_affine(self.num, Fraction(a), Fraction(b)),
                          _compose_affine(self.den, Fraction(a), Fraction(b)))

    def taylor(self, at, order: int) -> list[Fraction]:
        """Taylor coefficients c_0..c_order of G about z = ``at``.

        c_j = G^{(j)}(at) / j!, computed by shifting and power-series division.
        """
        num = _compose_affine(self.num, Fraction(1), Fraction(at))
        den = _compose_affine(self.den, Fraction(1), Fraction(at))
        if den[0] == 0:
            raise ZeroDivisionError(f"generating function has a pole at {at}")
        out: list[Fraction] = []
        d0 = den[0]
        for j in range(order + 1):
            acc = num[j] if j < len(num) else Fraction(0)
            for i in range(1, min(j, len(den) - 1) + 1):
                acc -= den[i] * out[j - i]
            out.append(acc / d0)
        return out


def _trim(c: list) -> list:
    c = list(c)
    while len(c) > 1 and c[-1] == 0:
        c.pop()
    return c or [Fraction(0)]


def _polyval(c, z):
    acc = Fraction(0)
    for coef in reversed(c):
        acc = acc * z + coef
    return acc


def _polymul(a, b):
    out = [Fraction(0)] * (len(a) + len(b) - 1)
    for i, x in enumerate(a):
        if x:
            for j, y in enumerate(b):
                out[i + j] += x * y
    return out


def _compose_affine(c, a: Fraction, b: Fraction):
    # sum_i c_i (a z + b)^i, expanded by the binomial theorem
    out = [Fraction(0)] * len(c)
    for i, ci in enumerate(c):
        if not ci:
            continue
        for j in range(i + 1):
            out[j] += ci * math.comb(i, j) * a**j * b ** (i - j)
    return _trim(out)
