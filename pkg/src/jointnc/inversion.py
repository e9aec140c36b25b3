"""Marginal and joint inversion of jointly measured statistics.

A measured joint distribution ``observed[x', y']`` is mapped to the retrieved
joint ``mu_x @ observed @ mu_y.T``, where ``mu_x`` and ``mu_y`` are the
kernels that undo the measurement on each marginal.  The retrieved object
has the right marginals by construction; cells that come out negative
signal statistics no classical (ontic-state) model can produce.

Arrays hold :class:`~fractions.Fraction` objects in rational mode and
``float64`` in float mode, with a parallel array of absolute error bounds.
Rational arrays may carry an ``exp_scale``: the represented value is
``exp(exp_scale) * values``, which keeps Poisson-weighted statistics exact.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, Sequence

import numpy as np

from .numerics import FLOAT, RATIONAL, UNIT_ROUNDOFF, check_mode, gamma_n

SCHEMA_VERSION = 1


class DimensionMismatch(ValueError):
    pass


def _as_array(values, mode: str) -> np.ndarray:
    if mode == RATIONAL:
        arr = np.empty(np.shape(values), dtype=object)
        flat = arr.reshape(-1)
        for i, v in enumerate(np.asarray(values, dtype=object).reshape(-1)):
            if isinstance(v, float):
                raise TypeError(f"float entry {v!r} in a rational array")
            flat[i] = Fraction(v)
        return arr
    return np.array([[float(v) for v in row] for row in values]) if np.ndim(values) == 2 \
        else np.array([float(v) for v in values])


def _float_view(values: np.ndarray, mode: str, exp_scale) -> np.ndarray:
    out = values.astype(float) if mode == RATIONAL else values
    if exp_scale:
        out = out * math.exp(exp_scale)
    return out


# ---------------------------------------------------------------------------
# Data types


@dataclass
class Marginal:
    """One-dimensional (signed) distribution over labelled outcomes."""

    values: np.ndarray
    labels: list
    mode: str = RATIONAL
    errors: np.ndarray | None = None
    exp_scale: Fraction = Fraction(0)

    def __post_init__(self):
        check_mode(self.mode)
        self.values = _as_array(self.values, self.mode)
        if len(self.labels) != len(self.values):
            raise DimensionMismatch("labels and values differ in length")
        if self.errors is None:
            self.errors = np.zeros(len(self.values))
        self.errors = np.asarray(self.errors, dtype=float)

    def __len__(self):
        return len(self.values)

    def floats(self) -> np.ndarray:
        return _float_view(self.values, self.mode, self.exp_scale)

    def float_errors(self) -> np.ndarray:
        return self.errors * math.exp(self.exp_scale) if self.exp_scale else self.errors


@dataclass
class JointGrid:
    """Rectangular (signed) joint distribution; rows index x, columns index y."""

    values: np.ndarray
    row_labels: list
    col_labels: list
    mode: str = RATIONAL
    signed: bool = False
    errors: np.ndarray | None = None
    exp_scale: Fraction = Fraction(0)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        check_mode(self.mode)
        self.values = _as_array(self.values, self.mode)
        if self.values.ndim != 2:
            raise DimensionMismatch("joint grid must be two-dimensional")
        if self.values.shape != (len(self.row_labels), len(self.col_labels)):
            raise DimensionMismatch(
                f"grid shape {self.values.shape} does not match labels "
                f"({len(self.row_labels)}, {len(self.col_labels)})")
        if self.errors is None:
            self.errors = np.zeros(self.values.shape)
        self.errors = np.asarray(self.errors, dtype=float)
        self.exp_scale = Fraction(self.exp_scale)
        if not self.signed and np.any(self.floats() < -self.float_errors()):
            raise ValueError("unsigned grid has negative entries")

    @property
    def shape(self):
        return self.values.shape

    def floats(self) -> np.ndarray:
        return _float_view(self.values, self.mode, self.exp_scale)

    def float_errors(self) -> np.ndarray:
        return self.errors * math.exp(self.exp_scale) if self.exp_scale else self.errors

    def index(self, row, col) -> tuple[int, int]:
        return self.row_labels.index(row), self.col_labels.index(col)

    def cell(self, row, col):
        """Value at labels (row, col): a Fraction in rational mode (exp_scale 0), else a float."""
        i, j = self.index(row, col)
        if self.mode == RATIONAL and not self.exp_scale:
            return self.values[i, j]
        return float(self.floats()[i, j])

    def cells(self) -> Iterator[tuple[tuple, object, float]]:
        """Yield ((row, col), value, error) for every cell."""
        f = self.floats()
        e = self.float_errors()
        exact = self.mode == RATIONAL and not self.exp_scale
        for i, r in enumerate(self.row_labels):
            for j, c in enumerate(self.col_labels):
                v = self.values[i, j] if exact else float(f[i, j])
                yield (r, c), v, float(e[i, j])

    def total(self):
        if self.mode == RATIONAL:
            exact = sum(self.values.reshape(-1), Fraction(0))
            return exact if not self.exp_scale else float(exact) * math.exp(self.exp_scale)
        return math.fsum(self.floats().reshape(-1))

    def transpose(self) -> "JointGrid":
        return JointGrid(self.values.T.copy(), list(self.col_labels), list(self.row_labels),
                         self.mode, self.signed, self.errors.T.copy(), self.exp_scale, dict(self.meta))

    def to_float(self) -> "JointGrid":
        if self.mode == FLOAT:
            return self
        f = self.floats()
        return JointGrid(f, list(self.row_labels), list(self.col_labels), FLOAT, self.signed,
                         UNIT_ROUNDOFF * np.abs(f) * (2 if self.exp_scale else 1),
                         meta=dict(self.meta))

    # serialization ---------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "schema": f"jointnc.grid/{SCHEMA_VERSION}",
            "mode": self.mode,
            "signed": self.signed,
            "exp_scale": str(self.exp_scale),
            "shape": list(self.shape),
            "row_labels": [label_to_json(x) for x in self.row_labels],
            "col_labels": [label_to_json(x) for x in self.col_labels],
            "values": [value_to_json(v) for v in self.values.reshape(-1)],
            "errors": [float(e) for e in self.errors.reshape(-1)],
            "meta": self.meta,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d: dict) -> "JointGrid":
        if not str(d.get("schema", "")).startswith("jointnc.grid/"):
            raise ValueError("not a jointnc grid document")
        shape = tuple(d["shape"])
        mode = d["mode"]
        vals = [value_from_json(v, mode) for v in d["values"]]
        arr = np.empty(shape, dtype=object if mode == RATIONAL else float)
        arr.reshape(-1)[:] = vals
        return cls(arr, [label_from_json(x) for x in d["row_labels"]],
                   [label_from_json(x) for x in d["col_labels"]], mode, d["signed"],
                   np.array(d["errors"], dtype=float).reshape(shape), Fraction(d["exp_scale"]),
                   d.get("meta", {}))

    @classmethod
    def from_json(cls, text: str) -> "JointGrid":
        return cls.from_dict(json.loads(text))

    def to_csv(self) -> str:
        lines = [f"# mode={self.mode} exp_scale={self.exp_scale} signed={str(self.signed).lower()}"]
        head = ["row\\col"] + [label_to_str(c) for c in self.col_labels]
        lines.append(",".join(head))
        for i, r in enumerate(self.row_labels):
            lines.append(",".join([label_to_str(r)] + [value_to_str(v) for v in self.values[i]]))
        if np.any(self.errors):
            lines.append("")
            lines.append("# absolute error bounds")
            lines.append(",".join(head))
            for i, r in enumerate(self.row_labels):
                lines.append(",".join([label_to_str(r)] + [repr(float(e)) for e in self.errors[i]]))
        return "\n".join(lines) + "\n"


def value_to_json(v):
    if isinstance(v, Fraction):
        return str(v)
    return float(v)


def value_from_json(v, mode):
    return Fraction(v) if mode == RATIONAL else float(v)


def value_to_str(v) -> str:
    return str(v) if isinstance(v, Fraction) else repr(float(v))


def label_to_json(x):
    if isinstance(x, Fraction):
        return str(x) if x.denominator != 1 else int(x)
    return x


def label_from_json(x):
    if isinstance(x, str) and "/" in x:
        return Fraction(x)
    return x


def label_to_str(x) -> str:
    return str(x)


@dataclass
class InversionKernel:
    """Matrix mu[z, z'] mapping observed marginal statistics to exact ones."""

    entries: np.ndarray
    out_labels: list
    in_labels: list
    mode: str = RATIONAL
    errors: np.ndarray | None = None
    exp_scale: Fraction = Fraction(0)
    name: str = ""

    def __post_init__(self):
        check_mode(self.mode)
        self.entries = _as_array(self.entries, self.mode)
        if self.entries.shape != (len(self.out_labels), len(self.in_labels)):
            raise DimensionMismatch("kernel shape does not match its labels")
        if self.errors is None:
            self.errors = np.zeros(self.entries.shape)
        self.errors = np.asarray(self.errors, dtype=float)
        self.exp_scale = Fraction(self.exp_scale)

    @property
    def shape(self):
        return self.entries.shape

    def floats(self):
        return _float_view(self.entries, self.mode, self.exp_scale)

    def float_errors(self):
        return self.errors * math.exp(self.exp_scale) if self.exp_scale else self.errors

    def to_float(self) -> "InversionKernel":
        if self.mode == FLOAT:
            return self
        f = self.floats()
        return InversionKernel(f, list(self.out_labels), list(self.in_labels), FLOAT,
                               UNIT_ROUNDOFF * np.abs(f) * (2 if self.exp_scale else 1), name=self.name)


def identity_kernel(labels: Sequence, mode: str = RATIONAL) -> InversionKernel:
    n = len(labels)
    if mode == RATIONAL:
        m = np.empty((n, n), dtype=object)
        for i in range(n):
            for j in range(n):
                m[i, j] = Fraction(int(i == j))
    else:
        m = np.eye(n)
    return InversionKernel(m, list(labels), list(labels), mode, name="identity")


@dataclass
class ClassicalModel:
    """Ontic-state model: weights P(lambda) and conditionals cond[z, lambda]."""

    weights: Sequence
    cond_x: np.ndarray
    cond_y: np.ndarray
    x_labels: list
    y_labels: list

    def __post_init__(self):
        exact = all(not isinstance(v, float) for v in np.asarray(self.weights, dtype=object).reshape(-1))
        exact = exact and all(not isinstance(v, (float, np.floating))
                              for m in (self.cond_x, self.cond_y)
                              for v in np.asarray(m, dtype=object).reshape(-1))
        self.mode = RATIONAL if exact else FLOAT
        self.weights = _as_array(list(self.weights), self.mode)
        self.cond_x = _as_array(self.cond_x, self.mode)
        self.cond_y = _as_array(self.cond_y, self.mode)
        nl = len(self.weights)
        if self.cond_x.shape != (len(self.x_labels), nl) or self.cond_y.shape != (len(self.y_labels), nl):
            raise DimensionMismatch("conditionals must be (outcomes, ontic states)")
        tol = 0 if exact else 1e-12
        if any(w < 0 for w in self.weights) or abs(sum(self.weights) - 1) > tol:
            raise ValueError("ontic weights must be a probability vector")
        for m in (self.cond_x, self.cond_y):
            if np.any(m < 0) or any(abs(s - 1) > tol for s in m.sum(axis=0)):
                raise ValueError("conditionals must be column-stochastic")


@dataclass(frozen=True)
class NegativityReport:
    min_value: float
    argmin: tuple
    negative_mass: float
    is_nonclassical: bool
    certified_error: float = 0.0
    min_exact: Fraction | None = None

    def to_dict(self) -> dict:
        return {
            "min_value": self.min_value,
            "min_exact": None if self.min_exact is None else str(self.min_exact),
            "argmin": [label_to_json(x) for x in self.argmin],
            "negative_mass": self.negative_mass,
            "is_nonclassical": self.is_nonclassical,
            "certified_error": self.certified_error,
        }


# ---------------------------------------------------------------------------
# Operations


def marginals(j: JointGrid) -> tuple[Marginal, Marginal]:
    """Row sums (x marginal) and column sums (y marginal)."""
    if j.mode == RATIONAL:
        rows = [sum(r, Fraction(0)) for r in j.values]
        cols = [sum(c, Fraction(0)) for c in j.values.T]
        return (Marginal(rows, list(j.row_labels), RATIONAL, exp_scale=j.exp_scale),
                Marginal(cols, list(j.col_labels), RATIONAL, exp_scale=j.exp_scale))
    v, e = j.values, j.errors
    ncol, nrow = v.shape[1], v.shape[0]
    rerr = e.sum(axis=1) + gamma_n(ncol) * np.abs(v).sum(axis=1)
    cerr = e.sum(axis=0) + gamma_n(nrow) * np.abs(v).sum(axis=0)
    return (Marginal(v.sum(axis=1), list(j.row_labels), FLOAT, rerr),
            Marginal(v.sum(axis=0), list(j.col_labels), FLOAT, cerr))


def _common_mode(*objs) -> str:
    return RATIONAL if all(o.mode == RATIONAL for o in objs) else FLOAT


def invert_marginal(k: InversionKernel, m: Marginal) -> Marginal:
    """mu @ m in the common scalar mode, with propagated error bounds."""
    if k.shape[1] != len(m):
        raise DimensionMismatch(f"kernel takes {k.shape[1]} outcomes, marginal has {len(m)}")
    if _common_mode(k, m) == RATIONAL:
        out = [sum((a * b for a, b in zip(row, m.values)), Fraction(0)) for row in k.entries]
        return Marginal(out, list(k.out_labels), RATIONAL, exp_scale=k.exp_scale + m.exp_scale)
    k = k.to_float()
    mv, me = m.floats(), m.float_errors()
    if m.mode == RATIONAL:
        me = me + UNIT_ROUNDOFF * np.abs(mv) * (2 if m.exp_scale else 1)
    K, Ke = k.entries, k.errors
    out = K @ mv
    err = np.abs(K) @ me + Ke @ np.abs(mv) + Ke @ me + gamma_n(len(m) + 1) * (np.abs(K) @ np.abs(mv))
    return Marginal(out, list(k.out_labels), FLOAT, err)


def invert_joint(kx: InversionKernel, ky: InversionKernel, j: JointGrid) -> JointGrid:
    """mu_x @ observed @ mu_y.T; the result is a signed grid."""
    if kx.shape[1] != j.shape[0] or ky.shape[1] != j.shape[1]:
        raise DimensionMismatch(
            f"kernels {kx.shape}, {ky.shape} do not fit grid {j.shape}")
    if _common_mode(kx, ky, j) == RATIONAL:
        out = _object_matmul(_object_matmul(kx.entries, j.values), ky.entries.T)
        return JointGrid(out, list(kx.out_labels), list(ky.out_labels), RATIONAL, True,
                         exp_scale=kx.exp_scale + ky.exp_scale + j.exp_scale, meta=dict(j.meta))
    kx, ky = kx.to_float(), ky.to_float()
    jf = j.to_float()
    A, Ae, B, Be, P, Pe = kx.entries, kx.errors, ky.entries, ky.errors, jf.values, jf.errors
    out = A @ P @ B.T
    aA, aB, aP = np.abs(A), np.abs(B), np.abs(P)
    err = (aA @ Pe @ aB.T
           + Ae @ (aP + Pe) @ aB.T
           + (aA + Ae) @ (aP + Pe) @ Be.T
           + gamma_n(P.shape[0] + P.shape[1] + 2) * (aA @ aP @ aB.T))
    return JointGrid(out, list(kx.out_labels), list(ky.out_labels), FLOAT, True, err, meta=dict(j.meta))


def _object_matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    n, m = a.shape[0], b.shape[1]
    out = np.empty((n, m), dtype=object)
    for i in range(n):
        row = a[i]
        nz = [(k, x) for k, x in enumerate(row) if x]
        for jj in range(m):
            out[i, jj] = sum((x * b[k, jj] for k, x in nz), Fraction(0))
    return out


def classical_forward(model: ClassicalModel) -> JointGrid:
    """Observed joint sum_l P(l) X(x|l) Y(y|l) of an ontic-state model."""
    cx, cy, w = model.cond_x, model.cond_y, model.weights
    if model.mode == RATIONAL:
        scaled = np.empty(cx.shape, dtype=object)
        for i in range(cx.shape[0]):
            for l in range(cx.shape[1]):
                scaled[i, l] = cx[i, l] * w[l]
        out = _object_matmul(scaled, cy.T)
        return JointGrid(out, list(model.x_labels), list(model.y_labels), RATIONAL)
    out = (cx * w) @ cy.T
    err = gamma_n(len(w) + 2) * out
    return JointGrid(out, list(model.x_labels), list(model.y_labels), FLOAT, False, err)


def negativity(j) -> NegativityReport:
    """Scan a grid (or anything exposing ``cells()``) for negative cells.

    A cell only counts as negative when it is below minus its certified error;
    rational cells have zero error so any negative value counts.
    """
    best = None
    neg_mass = 0.0
    nonclassical = False
    for label, v, err in j.cells():
        fv = float(v)
        if best is None or fv < best[1]:
            best = (label, fv, err, v)
        if fv < -err:
            nonclassical = True
            neg_mass += fv
    if best is None:
        raise ValueError("empty grid")
    label, fv, err, v = best
    exact = v if isinstance(v, Fraction) else None
    return NegativityReport(fv, tuple(label), neg_mass, nonclassical, err, exact)
