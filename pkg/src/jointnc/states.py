"""Photon-number distributions of the example field states, and qubit Bloch states."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Optional, Union

from .numerics import (
    FLOAT,
    RATIONAL,
    UNIT_ROUNDOFF,
    InexactError,
    RationalGF,
    Scalar,
    TrackedFloat,
    check_mode,
    error_of,
    factorial,
    poisson_weight,
    to_float,
)

#: automatic cutoff stops at the first cutoff whose certified tail is below this
TAIL_TARGET = 1e-15
#: explicit cutoffs whose tail exceeds this ceiling are rejected
MAX_TAIL = 1e-6

Number = Union[int, float, Fraction]


class CutoffTooSmall(ValueError):
    pass


class StateParseError(ValueError):
    pass


def _param(x) -> Number:
    """Keep exactly representable decimal input exact."""
    if isinstance(x, (Fraction, int)):
        return Fraction(x)
    if isinstance(x, str):
        try:
            return Fraction(x.strip())
        except ValueError as exc:
            raise StateParseError(f"not a number: {x!r}") from exc
    return float(x)


def _nonneg(name, x):
    if x < 0:
        raise ValueError(f"{name} must be >= 0, got {x}")
    return x


def _fmt(x) -> str:
    if isinstance(x, Fraction):
        return str(x)
    return repr(float(x))


# ---------------------------------------------------------------------------
# State specifications


@dataclass(frozen=True)
class StateSpec:
    """Base class; subclasses carry the parameters of one state family."""

    default_mode = FLOAT

    @property
    def text(self) -> str:
        raise NotImplementedError

    def prob(self, n: int, mode: str) -> Scalar:
        raise NotImplementedError

    @property
    def support_end(self) -> Optional[int]:
        """Largest n with p(n) possibly nonzero, or None for infinite support."""
        return None

    def decay(self, n: int) -> float:
        """Upper bound on p(j + 2) / p(j) over all j >= n (inf if unknown)."""
        return math.inf

    @property
    def analytic_mean(self):
        return None

    def gf(self) -> Optional[RationalGF]:
        """Exact rational generating function, when one exists."""
        return None


@dataclass(frozen=True)
class Fock(StateSpec):
    n: int
    default_mode = RATIONAL

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 0:
            raise ValueError("Fock photon number must be a non-negative integer")

    @property
    def text(self):
        return f"fock:{self.n}"

    def prob(self, n, mode):
        v = 1 if n == self.n else 0
        return Fraction(v) if mode == RATIONAL else TrackedFloat(float(v))

    @property
    def support_end(self):
        return self.n

    def decay(self, n):
        return 0.0

    @property
    def analytic_mean(self):
        return Fraction(self.n)

    def gf(self):
        return RationalGF([0] * self.n + [1])


@dataclass(frozen=True)
class Coherent(StateSpec):
    nbar: Number

    def __post_init__(self):
        object.__setattr__(self, "nbar", _nonneg("nbar", _param(self.nbar)))

    @property
    def text(self):
        return f"coherent:nbar={_fmt(self.nbar)}"

    def prob(self, n, mode):
        return poisson_weight(self.nbar, n, mode)

    def decay(self, n):
        m = float(self.nbar)
        return m * m / ((n + 1) * (n + 2))

    @property
    def analytic_mean(self):
        return self.nbar


@dataclass(frozen=True)
class PhotonAddedThermal(StateSpec):
    """a†^k rho_thermal a^k, normalised; k = 0 is the thermal state itself."""

    k: int
    nbar: Number
    default_mode = RATIONAL

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 0:
            raise ValueError("k must be a non-negative integer")
        object.__setattr__(self, "nbar", _nonneg("nbar", _param(self.nbar)))

    @property
    def text(self):
        return f"pats:k={self.k},nbar={_fmt(self.nbar)}"

    @property
    def _exact(self):
        return isinstance(self.nbar, Fraction)

    def prob(self, n, mode):
        k = self.k
        if n < k:
            return Fraction(0) if mode == RATIONAL else TrackedFloat(0.0)
        if mode == RATIONAL:
            if not self._exact:
                raise InexactError("rational mode needs a rational nbar")
            nb = self.nbar
            q = nb / (nb + 1)
            return math.comb(n, k) * q ** (n - k) / (nb + 1) ** (k + 1)
        nb = float(self.nbar)
        if nb == 0:
            return TrackedFloat(1.0 if n == k else 0.0)
        logv = (
            math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)
            + (n - k) * math.log(nb / (nb + 1)) - (k + 1) * math.log1p(nb)
        )
        v = math.exp(logv)
        rel = (16 + 4 * (abs(logv) + n * abs(math.log(nb / (nb + 1))) + math.lgamma(n + 1))) * UNIT_ROUNDOFF
        return TrackedFloat(v, rel * v)

    def decay(self, n):
        k = self.k
        if n < k:
            return math.inf  # p(j) = 0 below k, no ratio bound
        q = float(self.nbar) / (float(self.nbar) + 1)
        return q * q * (n + 1) * (n + 2) / ((n + 1 - k) * (n + 2 - k)) * (1 + 8 * UNIT_ROUNDOFF)

    @property
    def analytic_mean(self):
        return (self.k + 1) * self.nbar + self.k

    def gf(self):
        # G(z) = z^k / (nbar + 1)^(k+1) / (1 - q z)^(k+1)
        if not self._exact:
            return None
        nb, k = self.nbar, self.k
        q = nb / (nb + 1)
        den = [Fraction(0)] * (k + 2)
        for j in range(k + 2):
            den[j] = math.comb(k + 1, j) * (-q) ** j
        return RationalGF([0] * k + [1 / (nb + 1) ** (k + 1)], den)


def Thermal(nbar) -> PhotonAddedThermal:
    """Thermal state: the k = 0 member of the photon-added thermal family."""
    return PhotonAddedThermal(0, nbar)


@dataclass(frozen=True)
class SqueezedVacuum(StateSpec):
    r: float

    def __post_init__(self):
        object.__setattr__(self, "r", float(_nonneg("r", float(self.r))))

    @classmethod
    def from_nbar(cls, nbar) -> "SqueezedVacuum":
        return cls(math.asinh(math.sqrt(float(nbar))))

    @property
    def text(self):
        return f"sqvac:r={self.r!r}"

    @property
    def t(self):
        return math.tanh(self.r)

    def prob(self, n, mode):
        if mode == RATIONAL:
            if self.r == 0:
                return Fraction(1 if n == 0 else 0)
            raise InexactError("squeezed vacuum statistics are irrational")
        if n % 2:
            return TrackedFloat(0.0)
        if self.r == 0:
            return TrackedFloat(1.0 if n == 0 else 0.0)
        j = n // 2
        logv = (
            math.lgamma(n + 1) - 2 * math.lgamma(j + 1) - n * math.log(2)
            + n * math.log(self.t) - math.log(math.cosh(self.r))
        )
        v = math.exp(logv)
        rel = (16 + n + 4 * (abs(logv) + math.lgamma(n + 1) + n * abs(math.log(self.t)))) * UNIT_ROUNDOFF
        return TrackedFloat(v, rel * v)

    def decay(self, n):
        return self.t**2 * (1 + 8 * UNIT_ROUNDOFF)

    @property
    def analytic_mean(self):
        return math.sinh(self.r) ** 2


@dataclass(frozen=True)
class Custom(StateSpec):
    """Explicit finite photon-number distribution."""

    probs: tuple
    label: str = ""

    def __post_init__(self):
        ps = tuple(_param(p) if not isinstance(p, float) else p for p in self.probs)
        if not ps:
            raise ValueError("custom distribution needs at least one entry")
        if any(p < 0 for p in ps):
            raise ValueError("probabilities must be non-negative")
        if sum(float(p) for p in ps) > 1 + 1e-12:
            raise ValueError("probabilities sum to more than 1")
        object.__setattr__(self, "probs", ps)

    @property
    def default_mode(self):
        return RATIONAL if all(isinstance(p, Fraction) for p in self.probs) else FLOAT

    @property
    def text(self):
        if self.label:
            return f"custom:@{self.label}"
        return "custom:" + ",".join(_fmt(p) for p in self.probs)

    def prob(self, n, mode):
        v = self.probs[n] if n < len(self.probs) else Fraction(0)
        if mode == RATIONAL:
            if isinstance(v, float):
                raise InexactError("custom distribution has float entries")
            return Fraction(v)
        return TrackedFloat.of(v)

    @property
    def support_end(self):
        return len(self.probs) - 1

    def decay(self, n):
        return 0.0

    @property
    def analytic_mean(self):
        return sum(n * p for n, p in enumerate(self.probs))

    def gf(self):
        if all(isinstance(p, Fraction) for p in self.probs):
            return RationalGF(self.probs)
        return None


# ---------------------------------------------------------------------------
# Text parsing


def parse_state(text: str, base_dir: Path | None = None) -> StateSpec:
    """Parse ``fock:7``, ``coherent:nbar=1``, ``thermal:nbar=1``,
    ``pats:k=1,nbar=1``, ``sqvac:r=0.3`` (or ``sqvac:nbar=0.1``), ``vacuum``,
    ``custom:1/2,1/2`` or ``custom:@file.csv``."""
    text = text.strip()
    kind, _, rest = text.partition(":")
    kind = kind.lower()
    if kind == "vacuum":
        return Fock(0)
    if kind == "custom":
        if rest.startswith("@"):
            path = Path(rest[1:])
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            return Custom(tuple(_read_probs(path)), label=rest[1:])
        return Custom(tuple(_param(p) for p in rest.split(",") if p.strip()))
    if kind == "fock":
        try:
            return Fock(int(rest.strip()))
        except ValueError as exc:
            raise StateParseError(f"bad Fock state {text!r}") from exc
    kw = {}
    for item in filter(None, (s.strip() for s in rest.split(","))):
        key, eq, val = item.partition("=")
        if not eq:
            raise StateParseError(f"expected key=value in {text!r}")
        kw[key.strip().lower()] = val.strip()
    try:
        if kind == "coherent":
            return Coherent(_param(kw.pop("nbar")))
        if kind == "thermal":
            return Thermal(_param(kw.pop("nbar")))
        if kind == "pats":
            return PhotonAddedThermal(int(kw.pop("k")), _param(kw.pop("nbar")))
        if kind == "sqvac":
            if "r" in kw:
                return SqueezedVacuum(float(kw.pop("r")))
            return SqueezedVacuum.from_nbar(float(kw.pop("nbar")))
    except KeyError as exc:
        raise StateParseError(f"missing parameter {exc} in {text!r}") from exc
    finally:
        if kw:
            raise StateParseError(f"unexpected parameters {sorted(kw)} in {text!r}")
    raise StateParseError(f"unknown state kind {kind!r}")


def _read_probs(path: Path) -> list:
    rows = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            row = [c.strip() for c in row if c.strip()]
            if not row or row[0].startswith("#"):
                continue
            rows.append(row)
    if rows and not _is_number(rows[0][-1]):
        rows = rows[1:]  # header
    if all(len(r) >= 2 for r in rows):
        out = {}
        for r in rows:
            out[int(r[0])] = _param(r[1])
        return [out.get(n, Fraction(0)) for n in range(max(out) + 1)]
    return [_param(r[0]) for r in rows]


def _is_number(s: str) -> bool:
    try:
        Fraction(s)
        return True
    except ValueError:
        return False


# ---------------------------------------------------------------------------
# Number distributions


@dataclass(frozen=True)
class NumberDistribution:
    """Truncated p(n), n = 0..cutoff, with a certified bound on the mass above."""

    spec: StateSpec
    mode: str
    probs: tuple
    tail_bound: float
    mean: object = None
    _gf: Optional[RationalGF] = field(default=None, repr=False, compare=False)

    @property
    def cutoff(self) -> int:
        return len(self.probs) - 1

    @property
    def support_end(self) -> Optional[int]:
        return self.spec.support_end

    @property
    def gf(self) -> Optional[RationalGF]:
        return self._gf

    def p(self, n: int) -> Scalar:
        """p(n) for any n; beyond the cutoff it is evaluated from the closed form."""
        if n < 0:
            raise ValueError("negative photon number")
        if n <= self.cutoff:
            return self.probs[n]
        return self.spec.prob(n, self.mode)

    def floats(self):
        return [to_float(x) for x in self.probs]

    def weighted_tail(self, start: int, order: int = 0) -> float:
        """Certified upper bound on sum_{j >= start} C(j, order) p(j)."""
        return weighted_tail(self.spec, self.mode, start, order, self.p)


def weighted_tail(spec: StateSpec, mode: str, start: int, order: int, prob=None,
                  max_explicit: int = 20000) -> float:
    prob = prob or (lambda n: spec.prob(n, mode))
    end = spec.support_end
    acc = 0.0
    j = max(start, 0)
    while True:
        if end is not None and j > end:
            return acc * (1 + 1e-12)
        if j >= order:
            c_ratio = (j + 1) * (j + 2) / ((j + 1 - order) * (j + 2 - order))
            rho = spec.decay(j) * c_ratio
            if rho <= 0.5 or (rho < 1 and j - start > 64):
                w0 = math.comb(j, order) * _upper(prob(j))
                w1 = math.comb(j + 1, order) * _upper(prob(j + 1))
                return (acc + (w0 + w1) / (1 - rho)) * (1 + 1e-12)
        if j - start > max_explicit:
            return math.inf
        acc += math.comb(j, order) * _upper(prob(j))
        j += 1


def _upper(x) -> float:
    return abs(to_float(x)) + error_of(x)


def number_distribution(spec: StateSpec, cutoff: int | None = None, mode: str | None = None,
                        *, tail_target: float = TAIL_TARGET, max_tail: float = MAX_TAIL,
                        max_cutoff: int = 5000) -> NumberDistribution:
    """Tabulate p(n) for a state up to ``cutoff`` with a certified tail bound.

    Without a cutoff, the smallest one whose tail bound is below ``tail_target``
    is chosen.  An explicit cutoff leaving more than ``max_tail`` of the mass
    uncovered raises :class:`CutoffTooSmall`.
    """
    mode = check_mode(mode or spec.default_mode)
    if cutoff is not None and cutoff < 0:
        raise ValueError("cutoff must be >= 0")
    gf = spec.gf() if mode == RATIONAL else None
    if cutoff is None:
        cutoff = _auto_cutoff(spec, mode, tail_target, max_cutoff)
    probs = tuple(spec.prob(n, mode) for n in range(cutoff + 1))
    tail = _tail(spec, mode, probs)
    if tail > max_tail:
        raise CutoffTooSmall(
            f"cutoff {cutoff} leaves tail mass up to {tail:.3g} (> {max_tail:g}) for {spec.text}")
    return NumberDistribution(spec, mode, probs, tail, spec.analytic_mean, gf)


def _tail(spec, mode, probs) -> float:
    cutoff = len(probs) - 1
    end = spec.support_end
    if end is not None and end <= cutoff:
        return 0.0
    if mode == RATIONAL and end is None:
        # the closed forms are normalised exactly, so the tail is 1 - sum
        return float(1 - sum(probs, Fraction(0))) * (1 + 4 * UNIT_ROUNDOFF)
    return weighted_tail(spec, mode, cutoff + 1, 0)


def _auto_cutoff(spec, mode, target, max_cutoff) -> int:
    end = spec.support_end
    if end is not None:
        return end
    # geometric search followed by bisection on the monotone tail bound
    hi = 1
    while weighted_tail(spec, FLOAT, hi + 1, 0) >= target:
        hi *= 2
        if hi > max_cutoff:
            raise CutoffTooSmall(f"no cutoff <= {max_cutoff} reaches tail {target:g}")
    lo = 0
    while lo < hi:
        mid = (lo + hi) // 2
        if weighted_tail(spec, FLOAT, mid + 1, 0) < target:
            hi = mid
        else:
            lo = mid + 1
    return lo


def mean_photon_number(d: NumberDistribution) -> Scalar:
    """Sum of n p(n) over the stored range.

    Rational mode with the whole support stored is exact; otherwise a
    TrackedFloat whose error includes the certified first-moment tail.
    """
    if d.mode == RATIONAL and (d.support_end is not None and d.support_end <= d.cutoff):
        return sum((n * p for n, p in enumerate(d.probs)), Fraction(0))
    acc = TrackedFloat(0.0)
    for n, p in enumerate(d.probs):
        acc = acc + TrackedFloat.of(p) * n
    tail = d.weighted_tail(d.cutoff + 1, 1)
    return TrackedFloat(acc.value, acc.err + tail)


# ---------------------------------------------------------------------------
# Qubit


@dataclass(frozen=True)
class BlochState:
    """Qubit state rho = (1 + s . sigma) / 2 with |s| <= 1."""

    sx: Number = 0
    sy: Number = 0
    sz: Number = 0

    def __post_init__(self):
        comps = [c if isinstance(c, float) else Fraction(c) for c in (self.sx, self.sy, self.sz)]
        for name, c in zip(("sx", "sy", "sz"), comps):
            object.__setattr__(self, name, c)
        sq = sum(c * c for c in comps)
        exact = all(isinstance(c, Fraction) for c in comps)
        if (sq > 1) if exact else (float(sq) > 1 + 1e-12):
            raise ValueError(f"Bloch vector has |s|^2 = {float(sq):.6g} > 1")

    @property
    def vector(self):
        return (self.sx, self.sy, self.sz)

    @property
    def norm(self) -> float:
        return math.sqrt(sum(float(c) ** 2 for c in self.vector))

    @property
    def is_exact(self) -> bool:
        return all(isinstance(c, Fraction) for c in self.vector)
