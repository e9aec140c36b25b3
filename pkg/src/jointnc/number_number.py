"""Photon counting behind a balanced beam splitter with vacuum in the other port.

Both detectors estimate the same photon number.  The observed joint is

    p~(n1, n2) = 2**-(n1+n2) C(n1+n2, n1) p(n1+n2)

and each marginal is the binomial thinning of p by one half, undone by
``mu(n, k) = (-2)**n C(k, n) (-1)**k``.  Applying that kernel on both axes
gives the retrieved joint

    p(n1, n2) = sum_k (n1+n2+k)! / (n1! n2! k!) (-1)**k p(n1+n2+k)
              = C(n1+n2, n1) * s(n1+n2),

where ``s(N) = sum_k C(N+k, N) (-1)**k p(N+k)`` is the N-th Taylor
coefficient of the generating function G(z) = sum p(n) z**n about z = -1.
Every antidiagonal therefore needs a single series, and states with a
rational G are resummed exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .inversion import InversionKernel, JointGrid, Marginal
from .numerics import (
    FLOAT,
    RATIONAL,
    UNIT_ROUNDOFF,
    InexactError,
    RationalGF,
    SeriesResult,
    TrackedFloat,
    alternating_sum,
    error_of,
    to_float,
)
from .states import (
    Coherent,
    NumberDistribution,
    PhotonAddedThermal,
    StateSpec,
    number_distribution,
)


class UnsupportedState(ValueError):
    pass


@dataclass
class NNObserved:
    joint: JointGrid
    source_cutoff: int
    truncation_bound: float


@dataclass
class NNRetrieved:
    joint: JointGrid
    series: list  # SeriesResult per antidiagonal N = 0..2*extent
    extent: int
    converged: bool
    truncated: bool = False
    diagnostics: dict = field(default_factory=dict)

    def cell(self, n1, n2):
        return self.joint.cell(n1, n2)


# ---------------------------------------------------------------------------
# Forward model


def nn_forward(p: NumberDistribution, cutoff: int | None = None) -> NNObserved:
    """Detector statistics on the square n1, n2 <= cutoff (default: p's cutoff)."""
    K = p.cutoff if cutoff is None else cutoff
    labels = list(range(K + 1))
    if p.mode == RATIONAL:
        pN = [p.p(N) for N in range(2 * K + 1)]
        vals = [[Fraction(math.comb(a + b, a), 2 ** (a + b)) * pN[a + b] for b in labels] for a in labels]
        err = None
    else:
        pN = [TrackedFloat.of(p.p(N)) for N in range(2 * K + 1)]
        cells = [[pN[a + b] * (math.comb(a + b, a) / 2.0 ** (a + b)) for b in labels] for a in labels]
        vals = [[c.value for c in row] for row in cells]
        err = [[c.err + UNIT_ROUNDOFF * abs(c.value) for c in row] for row in cells]
    trunc = p.weighted_tail(K + 1, 0)
    grid = JointGrid(vals, labels, labels, p.mode, False, err,
                     meta={"scheme": "nn", "state": p.spec.text, "axes": ["n1", "n2"]})
    return NNObserved(grid, p.cutoff, trunc)


def nn_observed_marginal(p: NumberDistribution, upto: int, rel_tolerance: float = 1e-16) -> Marginal:
    """p~(n) = sum_{k>=n} 2**-k C(k, n) p(k) for n = 0..upto.

    Exact through the generating function G((1 + z)/2) in rational mode;
    otherwise a certified series per entry.
    """
    labels = list(range(upto + 1))
    if p.mode == RATIONAL:
        if p.support_end is not None:
            end = p.support_end
            vals = [sum((Fraction(math.comb(k, n), 2**k) * p.p(k) for k in range(n, end + 1)), Fraction(0))
                    for n in labels]
            return Marginal(vals, labels, RATIONAL)
        if p.gf is None:
            raise InexactError(f"no exact generating function for {p.spec.text}")
        return Marginal(thinned_gf(p.gf).taylor(0, upto), labels, RATIONAL)
    vals, errs = [], []
    for n in labels:
        res = alternating_sum(
            lambda k, n=n: TrackedFloat.of(p.p(n + k)) * (math.comb(n + k, n) / 2.0 ** (n + k)),
            0.0, 100_000, safety=1.0, rel_tolerance=rel_tolerance,
            tail_bound=lambda k, n=n: p.weighted_tail(n + k, n) / 2.0 ** (n + k))
        vals.append(res.value)
        errs.append(res.error)
    return Marginal(vals, labels, FLOAT, errs)


def thinned_gf(gf: RationalGF) -> RationalGF:
    """Generating function of the thinned (observed) marginal: G((1 + z)/2)."""
    return gf.compose_affine(Fraction(1, 2), Fraction(1, 2))


def unthinned_gf(gf: RationalGF) -> RationalGF:
    """Closed-form action of the marginal kernel on a generating function: G(2z - 1)."""
    return gf.compose_affine(2, -1)


def nn_marginal_kernel(cutoff: int, mode: str = RATIONAL) -> InversionKernel:
    """Upper-triangular mu(n, k) = (-2)**n C(k, n) (-1)**k, n, k <= cutoff."""
    labels = list(range(cutoff + 1))
    ent = [[(-2) ** n * math.comb(k, n) * (-1) ** k for k in labels] for n in labels]
    if mode == RATIONAL:
        return InversionKernel(ent, labels, labels, RATIONAL, name="nn-binomial")
    f = np.array(ent, dtype=float)
    return InversionKernel(f, labels, labels, FLOAT, UNIT_ROUNDOFF * np.abs(f), name="nn-binomial")


def nn_invert_marginal(p: NumberDistribution, upto: int, extent: int | None = None) -> Marginal:
    """Apply the truncated kernel to the observed marginal p~(0..extent).

    The result estimates p(0..upto).  Float errors include the certified
    truncation bound sum_{j > extent} C(j, n) p(j).
    """
    from .inversion import invert_marginal

    L = max(upto, extent if extent is not None else p.cutoff)
    obs = nn_observed_marginal(p, L)
    out = invert_marginal(nn_marginal_kernel(L, p.mode), obs)
    labels = list(range(upto + 1))
    if p.mode == RATIONAL and p.support_end is not None and p.support_end <= L:
        return Marginal(list(out.values[: upto + 1]), labels, RATIONAL)
    trunc = np.array([p.weighted_tail(L + 1, n) for n in labels])
    vals = out.floats()[: upto + 1]
    errs = out.float_errors()[: upto + 1] + trunc
    return Marginal(vals, labels, FLOAT, errs)


# ---------------------------------------------------------------------------
# Retrieval


def antidiagonal_series(p: NumberDistribution, N: int, tolerance: float = 1e-15,
                        max_terms: int = 100_000, rel_tolerance: float = 0.0) -> SeriesResult:
    """s(N) = sum_k C(N + k, N) (-1)**k p(N + k)."""
    if p.mode == RATIONAL:
        end = p.support_end
        if end is not None:
            terms = [math.comb(N + k, N) * (-1) ** k * p.p(N + k) for k in range(max(end - N + 1, 0))]
            return alternating_sum(terms)
        if p.gf is None:
            raise InexactError(f"no exact generating function for {p.spec.text}")
        return SeriesResult(p.gf.taylor(-1, N)[N], 0, 0.0, True)

    def term(k):
        c = math.comb(N + k, N)
        pk = TrackedFloat.of(p.p(N + k))
        t = pk * c if c.bit_length() < 1000 else _big_scaled(c, pk)
        return -t if k % 2 else t

    end = p.support_end
    if end is not None:
        return alternating_sum([term(k) for k in range(max(end - N + 1, 0))])
    return alternating_sum(term, tolerance, max_terms, safety=100.0, rel_tolerance=rel_tolerance,
                           tail_bound=lambda k: p.weighted_tail(N + k, N))


def _big_scaled(c: int, p: TrackedFloat) -> TrackedFloat:
    if p.value == 0:
        return TrackedFloat(0.0, p.err * float("inf") if p.err else 0.0)
    lc = math.log(c)
    v = math.exp(lc + math.log(abs(p.value))) * math.copysign(1, p.value)
    rel = 8 * UNIT_ROUNDOFF * (1 + lc + abs(math.log(abs(p.value)))) + p.err / abs(p.value)
    return TrackedFloat(v, rel * abs(v))


def _all_series(p: NumberDistribution, upto: int, tol: float, rel: float = 0.0) -> list[SeriesResult]:
    if p.mode == RATIONAL and p.support_end is None:
        if p.gf is None:
            raise InexactError(f"no exact generating function for {p.spec.text}")
        coeffs = p.gf.taylor(-1, upto)
        return [SeriesResult(c, 0, 0.0, True) for c in coeffs]
    # per-cell tolerance on C(N, n1) s(N) translates to tol / C(N, N//2) on s(N)
    return [antidiagonal_series(p, N, tol / math.comb(N, N // 2), rel_tolerance=rel)
            for N in range(upto + 1)]


def nn_retrieve(p: NumberDistribution, cell_tolerance: float = 1e-12, extent: int | None = None,
                *, max_extent: int = 64, negligible: float = 1e-12) -> NNRetrieved:
    """Retrieved joint p(n1, n2) on the square n1, n2 <= extent.

    Without an explicit extent the square is the smallest one holding every
    cell with |value| > ``negligible`` (capped at ``max_extent``; hitting the
    cap with non-negligible cells left sets ``truncated``).
    """
    truncated = False
    if extent is None:
        extent, truncated = _auto_extent(p, cell_tolerance, max_extent, negligible)
    L = extent
    series = _all_series(p, 2 * L, cell_tolerance)
    labels = list(range(L + 1))
    if p.mode == RATIONAL:
        vals = [[math.comb(a + b, a) * series[a + b].sum for b in labels] for a in labels]
        err = None
    else:
        vals, err = [], []
        for a in labels:
            vrow, erow = [], []
            for b in labels:
                c = math.comb(a + b, a)
                s = series[a + b]
                v = c * s.value
                vrow.append(v)
                erow.append(c * s.error + 2 * UNIT_ROUNDOFF * abs(v))
            vals.append(vrow)
            err.append(erow)
    grid = JointGrid(vals, labels, labels, p.mode, True, err,
                     meta={"scheme": "nn", "state": p.spec.text, "axes": ["n1", "n2"]})
    # a series can stop on schedule and still lose every digit to cancellation
    max_err = float(np.max(grid.float_errors()))
    converged = all(s.converged for s in series) and max_err <= cell_tolerance
    diag = {
        "extent": L,
        "mode": p.mode,
        "cell_tolerance": cell_tolerance,
        "terms_used": [s.terms_used for s in series],
        "unconverged_antidiagonals": [N for N, s in enumerate(series) if not s.converged],
        "max_cell_error": max_err,
        "truncated": truncated,
    }
    return NNRetrieved(grid, series, L, converged, truncated, diag)


def _auto_extent(p: NumberDistribution, tol: float, max_extent: int, negligible: float):
    if p.support_end is not None:
        return min(p.support_end, max_extent), p.support_end > max_extent
    series = _all_series(p, 2 * max_extent, tol)
    far = 0
    for N, s in enumerate(series):
        v = abs(s.value)
        if v == 0:
            continue
        # cells C(N, n1)|s| on this antidiagonal exceeding the threshold
        for n1 in range(N + 1):
            if math.comb(N, n1) * v > negligible:
                far = max(far, max(n1, N - n1))
    if far > max_extent:
        return max_extent, True
    return far, False


def nn_retrieve_fock_oracle(n: int) -> JointGrid:
    """Closed form for |n>: p(n1, n2) = (-1)**(n-n1-n2) n! / (n1! n2! (n-n1-n2)!)."""
    labels = list(range(n + 1))
    vals = [[Fraction((-1) ** (n - a - b) * math.factorial(n),
                      math.factorial(a) * math.factorial(b) * math.factorial(n - a - b))
             if a + b <= n else Fraction(0) for b in labels] for a in labels]
    return JointGrid(vals, labels, labels, RATIONAL, True, meta={"scheme": "nn", "state": f"fock:{n}"})


def nn_pfunction_oracle(spec: StateSpec, n1: int, n2: int):
    """Retrieved cell from the radial P-function integral.

    Coherent (delta P at |alpha|^2 = nbar): nbar**N exp(-2 nbar) / (n1! n2!).
    Thermal (Gaussian P): N! nbar**N / (1 + 2 nbar)**(N+1) / (n1! n2!).
    Both are non-negative by construction.
    """
    N = n1 + n2
    denom = math.factorial(n1) * math.factorial(n2)
    if isinstance(spec, PhotonAddedThermal) and spec.k == 0:
        nb = spec.nbar
        if isinstance(nb, Fraction):
            return math.factorial(N) * nb**N / (1 + 2 * nb) ** (N + 1) / denom
        nb = float(nb)
        v = math.factorial(N) * nb**N / (1 + 2 * nb) ** (N + 1) / denom
        return TrackedFloat(v, (2 * N + 8) * UNIT_ROUNDOFF * abs(v))
    if isinstance(spec, Coherent):
        nb = spec.nbar
        if nb == 0:
            return Fraction(int(N == 0))
        nb = float(nb)
        v = nb**N * math.exp(-2 * nb) / denom
        return TrackedFloat(v, (N + 8) * UNIT_ROUNDOFF * abs(v))
    raise UnsupportedState(f"no classical P-function closed form for {spec.text}")


def parity_wigner_origin(p: NumberDistribution):
    """Mean parity sum_n (-1)**n p(n); this is p(0, 0) = (pi/2) W(0)."""
    s = antidiagonal_series(p, 0) if not (p.mode == RATIONAL and p.support_end is None) \
        else _all_series(p, 0, 0.0)[0]
    if isinstance(s.sum, Fraction):
        return s.sum
    return TrackedFloat(s.value, s.error)


def wigner_origin(p: NumberDistribution) -> float:
    return 2 / math.pi * to_float(parity_wigner_origin(p))


# ---------------------------------------------------------------------------
# Stability scan


@dataclass(frozen=True)
class ScanRow:
    label: str
    nbar: float
    mode: str
    joint_converged: bool
    growth_ratio: float
    mass_residual: float
    max_cell_error: float
    joint_reliable: bool
    marginal_residual: float
    marginal_error: float
    marginal_reliable: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def nn_stability_scan(specs: Iterable[StateSpec], mode: str = FLOAT, *, extent: int = 160,
                      mass_tolerance: float = 1e-6,
                      marginal_check: int = 12, marginal_tolerance: float = 1e-9,
                      labels: Sequence[str] | None = None) -> list[ScanRow]:
    """Diagnose joint and marginal inversion for each state.

    The retrieved joint sums to sum_N 2**N s(N), the Taylor series of G about
    -1 evaluated a distance 2 away.  It converges only when G is analytic in
    the disc of radius 2 about -1; otherwise the antidiagonal masses
    2**N |s(N)| grow geometrically and no finite grid represents the joint.
    For the squeezed vacuum (poles at +-1/tanh r) this requires
    tanh r < 1/3, i.e. nbar < 1/8.  The marginal inversion only needs
    radius 1 and survives much further.

    A row is joint-reliable when every antidiagonal series converged, the
    geometric growth ratio of 2**N |s(N)| over the second half of the scan is
    below one, and the truncated total mass matches sum p(n) within
    ``mass_tolerance``.  It is marginal-reliable when re-inverting the observed
    marginal (truncated at ``extent``) reproduces p(0..marginal_check) within
    ``marginal_tolerance``.
    """
    rows = []
    specs = list(specs)
    for i, spec in enumerate(specs):
        d = number_distribution(spec, mode=mode)
        # growth is judged on relative accuracy, so the scan sums each s(N)
        # to a relative tolerance rather than the absolute cell tolerance
        series = _all_series(d, extent, 0.0, 1e-13)
        a = [to_float(s.sum) * 2.0**N for N, s in enumerate(series)]
        b = [abs(x) for x in a]
        half = extent // 2
        growth = (b[extent] / b[half]) ** (1 / (extent - half)) if b[half] > 0 and b[extent] > 0 else 0.0
        total_p = 1.0 - d.tail_bound if d.support_end is None else float(sum(d.floats()))
        mass = math.fsum(a)
        mass_res = abs(mass - total_p)
        max_err = max(math.comb(N, N // 2) * s.error for N, s in enumerate(series))
        conv = all(s.converged for s in series)
        joint_ok = conv and growth < 1 and mass_res < mass_tolerance
        inv = nn_invert_marginal(d, marginal_check, extent)
        truth = np.array([to_float(d.p(n)) for n in range(marginal_check + 1)])
        m_res = float(np.max(np.abs(inv.floats() - truth)))
        m_err = float(np.max(inv.float_errors()))
        marg_ok = m_res < marginal_tolerance and m_err < marginal_tolerance
        nbar = float(spec.analytic_mean) if spec.analytic_mean is not None else float("nan")
        rows.append(ScanRow(labels[i] if labels else spec.text, nbar, mode, conv, growth, mass_res,
                            max_err, joint_ok, m_res, m_err, marg_ok))
    return rows
