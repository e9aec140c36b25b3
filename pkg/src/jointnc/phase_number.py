"""Total number and normalised number difference behind a coherent reference.

The system mode is mixed with a coherent state of mean photon number
``nbar`` on a balanced beam splitter.  Outcomes are relabelled as
N = n1 + n2 and m = (n1 - n2) / N; the m values allowed for a given N
depend on N, so the joint lives on a ragged grid.  The N marginal is the
system distribution convolved with Poisson(nbar) and is deconvolved by

    mu(n, N) = exp(nbar) (-nbar)**(n - N) / (n - N)!,   N <= n,

while m is kept as measured.  Because m = 0 never occurs for odd N, the
retrieved cell (n=1, m=0) only receives the N=0 contribution and equals
-nbar * p(0).

Exactness: for rational p and nbar every observed probability is
exp(-nbar) times a rational, so rational-mode objects store the rational
part together with ``exp_scale`` (value = exp(exp_scale) * stored).  The
retrieved joint then comes out exactly rational with ``exp_scale = 0``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator

import numpy as np

from .inversion import (
    SCHEMA_VERSION,
    InversionKernel,
    JointGrid,
    Marginal,
    value_from_json,
    value_to_json,
    value_to_str,
)
from .numerics import (
    FLOAT,
    RATIONAL,
    UNIT_ROUNDOFF,
    TrackedFloat,
    check_mode,
    factorial,
    gamma_n,
    poisson_numerator,
    to_float,
)
from .states import CutoffTooSmall, NumberDistribution

M_DEFS = ("normalized", "difference", "n1")
#: automatic forward cutoff: smallest total count with output mass deficit below this
DEFICIT_TARGET = 1e-12


@dataclass(frozen=True)
class ReferenceBeam:
    """Coherent reference |beta>; only |beta|^2 enters the statistics."""

    nbar: object

    def __post_init__(self):
        nb = self.nbar
        if not isinstance(nb, float):
            nb = Fraction(nb)
        if nb < 0:
            raise ValueError("reference nbar must be >= 0")
        object.__setattr__(self, "nbar", nb)

    @property
    def exact(self) -> bool:
        return isinstance(self.nbar, Fraction)


def m_value(n1: int, n2: int, mdef: str = "normalized"):
    N = n1 + n2
    if mdef == "normalized":
        return Fraction(0) if N == 0 else Fraction(n1 - n2, N)
    if mdef == "difference":
        return n1 - n2
    if mdef == "n1":
        return n1
    raise ValueError(f"unknown m definition {mdef!r}; expected one of {M_DEFS}")


def n1_of(N: int, m, mdef: str = "normalized") -> int:
    if mdef == "normalized":
        v = N * (1 + Fraction(m)) / 2
    elif mdef == "difference":
        v = Fraction(N + m, 2)
    elif mdef == "n1":
        v = Fraction(m)
    else:
        raise ValueError(f"unknown m definition {mdef!r}")
    if v.denominator != 1 or not 0 <= v <= N:
        raise ValueError(f"m={m} is not an allowed value for N={N}")
    return int(v)


def m_grid(N: int, mdef: str = "normalized") -> list:
    """Allowed m values for total count N, ascending."""
    return sorted({m_value(a, N - a, mdef) for a in range(N + 1)})


@dataclass
class RaggedJoint:
    """Distribution over (N, m) where row N holds exactly its allowed m values.

    ``rows[N]`` maps m -> value; ``errors[N]`` maps m -> absolute error bound.
    Retrieved grids (``signed=True``) list the union of m grids of the
    contributing rows, with explicit zeros.
    """

    rows: list
    mode: str = RATIONAL
    mdef: str = "normalized"
    signed: bool = False
    errors: list | None = None
    exp_scale: Fraction = Fraction(0)
    row_name: str = "N"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        check_mode(self.mode)
        self.exp_scale = Fraction(self.exp_scale)
        self.rows = [dict(sorted(r.items())) for r in self.rows]
        if self.errors is None:
            self.errors = [{m: 0.0 for m in r} for r in self.rows]
        if not self.signed:
            for N, r in enumerate(self.rows):
                if set(r) != set(m_grid(N, self.mdef)):
                    raise ValueError(f"row {N} does not carry the allowed m grid")

    @property
    def cutoff(self) -> int:
        return len(self.rows) - 1

    def _scale(self) -> float:
        return math.exp(self.exp_scale) if self.exp_scale else 1.0

    def cell(self, N: int, m):
        """Value at (N, m): a Fraction when exactly rational, else a float."""
        m = Fraction(m) if self.mdef == "normalized" else m
        v = self.rows[N][m]
        if self.mode == RATIONAL and not self.exp_scale:
            return v
        return float(v) * self._scale()

    def cell_error(self, N: int, m) -> float:
        m = Fraction(m) if self.mdef == "normalized" else m
        return self.errors[N][m] * self._scale()

    def cells(self) -> Iterator[tuple[tuple, object, float]]:
        exact = self.mode == RATIONAL and not self.exp_scale
        sc = self._scale()
        for N, r in enumerate(self.rows):
            for m, v in r.items():
                yield (N, m), (v if exact else float(v) * sc), self.errors[N][m] * sc

    def total(self):
        if self.mode == RATIONAL:
            exact = sum((v for r in self.rows for v in r.values()), Fraction(0))
            return exact if not self.exp_scale else float(exact) * self._scale()
        return math.fsum(float(v) for r in self.rows for v in r.values()) * self._scale()

    def m_union(self) -> list:
        return sorted({m for r in self.rows for m in r})

    # serialization ---------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "schema": f"jointnc.ragged/{SCHEMA_VERSION}",
            "mode": self.mode,
            "mdef": self.mdef,
            "row_name": self.row_name,
            "signed": self.signed,
            "exp_scale": str(self.exp_scale),
            "rows": [
                {
                    self.row_name: N,
                    "m": [str(m) for m in r],
                    "values": [value_to_json(v) for v in r.values()],
                    "errors": [float(self.errors[N][m]) for m in r],
                }
                for N, r in enumerate(self.rows)
            ],
            "meta": self.meta,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d: dict) -> "RaggedJoint":
        if not str(d.get("schema", "")).startswith("jointnc.ragged/"):
            raise ValueError("not a jointnc ragged document")
        mode, mdef = d["mode"], d["mdef"]
        conv = Fraction if mdef == "normalized" else int
        rows, errs = [], []
        for row in d["rows"]:
            ms = [conv(m) for m in row["m"]]
            rows.append({m: value_from_json(v, mode) for m, v in zip(ms, row["values"])})
            errs.append({m: float(e) for m, e in zip(ms, row["errors"])})
        return cls(rows, mode, mdef, d["signed"], errs, Fraction(d["exp_scale"]),
                   d.get("row_name", "N"), d.get("meta", {}))

    @classmethod
    def from_json(cls, text: str) -> "RaggedJoint":
        return cls.from_dict(json.loads(text))

    def to_csv(self) -> str:
        lines = [f"# mode={self.mode} exp_scale={self.exp_scale} mdef={self.mdef}",
                 f"{self.row_name},m,value,error"]
        for N, r in enumerate(self.rows):
            for m, v in r.items():
                lines.append(f"{N},{m},{value_to_str(v)},{self.errors[N][m]!r}")
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Forward model


def splitter_probability(n: int, l: int, n1: int) -> Fraction:
    """|<n1, n2| U |n, l>|^2 for a balanced beam splitter, n2 = n + l - n1.

    With a+ -> (a1+ + a2+)/sqrt2 and b+ -> (a1+ - a2+)/sqrt2 the amplitude is
    2**(-N/2) sqrt(n1! n2! / (n! l!)) sum_i C(n, i) C(l, n1 - i) (-1)**(l - n1 + i).
    """
    N = n + l
    n2 = N - n1
    if not 0 <= n1 <= N:
        return Fraction(0)
    s = sum(math.comb(n, i) * math.comb(l, n1 - i) * (-1) ** (l - n1 + i)
            for i in range(max(0, n1 - l), min(n, n1) + 1))
    return Fraction(factorial(n1) * factorial(n2) * s * s, 2**N * factorial(n) * factorial(l))


def pn_forward(p: NumberDistribution, ref: ReferenceBeam, cutoff: int | None = None,
               *, max_deficit: float = 1e-6) -> JointGrid:
    """Detector statistics p~'(n1, n2) for n1 + n2 <= cutoff.

    Exact for number-diagonal system states: each Fock component |n> meets
    exactly one photon number l = N - n of the reference, so there is no
    interference between components and the phase of beta drops out.
    Cells with n1 + n2 > cutoff are left at zero; ``meta['max_total']``
    records the cutoff.
    """
    exact = p.mode == RATIONAL and ref.exact
    mode = RATIONAL if exact else FLOAT
    if cutoff is None:
        cutoff = _auto_forward_cutoff(p, ref)
    K = cutoff
    pn = [p.p(n) for n in range(K + 1)]
    nb = ref.nbar
    labels = list(range(K + 1))
    if exact:
        vals = [[Fraction(0)] * (K + 1) for _ in labels]
        for n1 in labels:
            for n2 in range(K + 1 - n1):
                N = n1 + n2
                vals[n1][n2] = sum((pn[n] * poisson_numerator(nb, N - n) * splitter_probability(n, N - n, n1)
                                    for n in range(N + 1) if pn[n]), Fraction(0))
        grid = JointGrid(vals, labels, labels, RATIONAL, False, exp_scale=-nb)
    else:
        e = math.exp(-float(nb))
        vals = np.zeros((K + 1, K + 1))
        err = np.zeros((K + 1, K + 1))
        pf = [TrackedFloat.of(x) for x in pn]
        for n1 in labels:
            for n2 in range(K + 1 - n1):
                N = n1 + n2
                acc = TrackedFloat(0.0)
                for n in range(N + 1):
                    if pf[n].value == 0 and pf[n].err == 0:
                        continue
                    w = TrackedFloat.of(float(nb) ** (N - n) / factorial(N - n))
                    w = TrackedFloat(w.value, w.err + (N - n + 2) * UNIT_ROUNDOFF * w.value)
                    acc = acc + pf[n] * w * TrackedFloat.of(splitter_probability(n, N - n, n1))
                v = acc * TrackedFloat(e, 2 * UNIT_ROUNDOFF * e)
                vals[n1, n2] = v.value
                err[n1, n2] = v.err + (N + 4) * UNIT_ROUNDOFF * abs(v.value)
        grid = JointGrid(vals, labels, labels, FLOAT, False, err)
    grid.meta.update({"scheme": "pn", "state": p.spec.text, "ref_nbar": str(nb), "max_total": K,
                      "axes": ["n1", "n2"]})
    deficit = 1.0 - float(np.sum(grid.floats()))
    if deficit > max_deficit + p.tail_bound:
        raise CutoffTooSmall(f"forward cutoff {K} misses {deficit:.3g} of the output mass")
    return grid


def _auto_forward_cutoff(p: NumberDistribution, ref: ReferenceBeam, limit: int = 400) -> int:
    nb = float(ref.nbar)
    pn = []
    acc = 0.0
    for K in range(limit + 1):
        pn.append(to_float(p.p(K)))
        acc += sum(pn[n] * math.exp(-nb) * nb ** (K - n) / math.factorial(K - n) for n in range(K + 1))
        if 1.0 - acc < DEFICIT_TARGET:
            return K
    raise CutoffTooSmall(f"no forward cutoff <= {limit} reaches deficit {DEFICIT_TARGET:g}")


def to_ragged(j: JointGrid, mdef: str = "normalized", max_total: int | None = None) -> RaggedJoint:
    """Relabel a grid over (n1, n2) into rows N = n1 + n2 keyed by m.

    Only complete antidiagonals (N <= max_total) are kept; any nonzero cell
    beyond them raises, so the relabelling never loses mass.
    """
    if mdef not in M_DEFS:
        raise ValueError(f"unknown m definition {mdef!r}")
    nr, nc = j.shape
    if max_total is None:
        max_total = j.meta.get("max_total", min(nr, nc) - 1)
    if max_total > min(nr, nc) - 1:
        raise ValueError("max_total exceeds the complete antidiagonals of the grid")
    rows = [dict() for _ in range(max_total + 1)]
    errs = [dict() for _ in range(max_total + 1)]
    for a in range(nr):
        for b in range(nc):
            N = a + b
            v = j.values[a, b]
            if N > max_total:
                if v != 0:
                    raise ValueError(f"cell ({a}, {b}) lies beyond max_total={max_total}")
                continue
            m = m_value(j.row_labels[a], j.col_labels[b], mdef)
            rows[N][m] = v
            errs[N][m] = float(j.errors[a, b])
    meta = {k: v for k, v in j.meta.items() if k not in ("axes",)}
    meta["axes"] = ["N", "m"]
    return RaggedJoint(rows, j.mode, mdef, j.signed, errs, j.exp_scale, "N", meta)


def from_ragged(r: RaggedJoint) -> JointGrid:
    """Inverse of :func:`to_ragged` for unsigned (observed) grids."""
    K = r.cutoff
    labels = list(range(K + 1))
    if r.mode == RATIONAL:
        vals = [[Fraction(0)] * (K + 1) for _ in labels]
    else:
        vals = np.zeros((K + 1, K + 1))
    err = np.zeros((K + 1, K + 1))
    for N, row in enumerate(r.rows):
        for m, v in row.items():
            a = n1_of(N, m, r.mdef)
            vals[a][N - a] = v
            err[a, N - a] = r.errors[N][m]
    meta = dict(r.meta)
    meta["axes"] = ["n1", "n2"]
    meta["max_total"] = K
    return JointGrid(vals, labels, labels, r.mode, r.signed, err, r.exp_scale, meta)


def pn_total_marginal(r: RaggedJoint) -> Marginal:
    """p~(N) = sum over the m grid of row N."""
    labels = list(range(r.cutoff + 1))
    if r.mode == RATIONAL:
        vals = [sum(row.values(), Fraction(0)) for row in r.rows]
        return Marginal(vals, labels, RATIONAL, exp_scale=r.exp_scale)
    vals = [math.fsum(row.values()) for row in r.rows]
    errs = [sum(e.values()) + gamma_n(len(row)) * sum(abs(v) for v in row.values())
            for row, e in zip(r.rows, r.errors)]
    return Marginal(vals, labels, FLOAT, errs)


def pn_number_kernel(nbar, cutoff: int, mode: str = RATIONAL) -> InversionKernel:
    """Lower-triangular Poisson deconvolution mu(n, N) = e**nbar (-nbar)**(n-N)/(n-N)!."""
    labels = list(range(cutoff + 1))
    if mode == RATIONAL:
        if isinstance(nbar, float):
            raise ValueError("rational kernel needs a rational nbar")
        nb = Fraction(nbar)
        ent = [[poisson_numerator(-nb, n - N) if N <= n else Fraction(0) for N in labels] for n in labels]
        return InversionKernel(ent, labels, labels, RATIONAL, exp_scale=nb, name="pn-poisson")
    nb = float(nbar)
    e = math.exp(nb)
    ent = np.array([[e * (-nb) ** (n - N) / math.factorial(n - N) if N <= n else 0.0 for N in labels]
                    for n in labels])
    return InversionKernel(ent, labels, labels, FLOAT, 8 * UNIT_ROUNDOFF * np.abs(ent), name="pn-poisson")


def pn_retrieve(r: RaggedJoint, nbar) -> RaggedJoint:
    """p(n, m) = e**nbar sum_{N<=n} (-nbar)**(n-N)/(n-N)! p~(N, m).

    Rows contribute nothing at m values absent from their grid; row n of the
    output lists the union of the m grids of rows 0..n.
    """
    exact = r.mode == RATIONAL and not isinstance(nbar, float)
    K = r.cutoff
    union: set = set()
    out_rows, out_errs = [], []
    if exact:
        nb = Fraction(nbar)
        w = [poisson_numerator(-nb, d) for d in range(K + 1)]
        for n in range(K + 1):
            union |= set(r.rows[n])
            row = {}
            for m in sorted(union):
                row[m] = sum((w[n - N] * r.rows[N][m] for N in range(n + 1) if m in r.rows[N]), Fraction(0))
            out_rows.append(row)
            out_errs.append({m: 0.0 for m in row})
        return RaggedJoint(out_rows, RATIONAL, r.mdef, True, out_errs, r.exp_scale + nb, "n",
                           dict(r.meta, axes=["n", "m"]))
    nb = float(nbar)
    e = math.exp(nb)
    sc = math.exp(r.exp_scale) if r.exp_scale else 1.0
    w = [e * (-nb) ** d / math.factorial(d) for d in range(K + 1)]
    for n in range(K + 1):
        union |= set(r.rows[n])
        row, erow = {}, {}
        for m in sorted(union):
            contrib = [(w[n - N], float(r.rows[N][m]) * sc, r.errors[N][m] * sc)
                       for N in range(n + 1) if m in r.rows[N]]
            v = math.fsum(a * b for a, b, _ in contrib)
            absum = sum(abs(a * b) for a, b, _ in contrib)
            row[m] = v
            erow[m] = (sum(abs(a) * eb for a, _, eb in contrib)
                       + (8 + len(contrib)) * UNIT_ROUNDOFF * absum + 2 * UNIT_ROUNDOFF * abs(v))
        out_rows.append(row)
        out_errs.append(erow)
    return RaggedJoint(out_rows, FLOAT, r.mdef, True, out_errs, 0, "n", dict(r.meta, axes=["n", "m"]))


def pc_identity(p: NumberDistribution, nbar):
    """-nbar * p(0), the retrieved (n=1, m=0) cell."""
    p0 = p.p(0)
    if isinstance(p0, Fraction) and not isinstance(nbar, float):
        return -Fraction(nbar) * p0
    return TrackedFloat.of(p0) * (-float(nbar))


@dataclass(frozen=True)
class Verdict:
    nonclassical: bool
    note: str


def vacuum_verdict(p: NumberDistribution, nbar) -> Verdict:
    """Nonclassical by this scheme whenever the system has vacuum population."""
    if not nbar > 0:
        raise ValueError("the verdict needs a reference with nbar > 0")
    p0 = p.p(0)
    flag = to_float(p0) > 0 if not isinstance(p0, TrackedFloat) else p0.value > p0.err
    if flag:
        note = (f"p(0) = {to_float(p0):.6g} > 0, so the retrieved cell (n=1, m=0) = "
                f"-nbar p(0) = {-float(nbar) * to_float(p0):.6g} is negative.")
    else:
        note = ("p(0) = 0: this scheme is silent. States without vacuum population are "
                "the ones flagged by Lee's nonclassical-depth criterion (not implemented here).")
    return Verdict(flag, note)
