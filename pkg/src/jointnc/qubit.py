"""Joint measurement of sigma_x and sigma_y on a qubit.

sigma_y is measured projectively on the system while sigma_x is read out
through an ancilla that becomes |a+> or |a-> depending on the sigma_x
eigenstate.  With <a+|a-> = sin(phi) the observed joint is

    p~(x, y) = (1 + x s_x cos(phi) + y s_y sin(phi)) / 4

and undoing the two contractions with mu(z, z') = (1 + z z' / eta) / 2
gives (1 + x s_x + y s_y) / 4, negative for |s_x| + |s_y| > 1.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .inversion import (
    InversionKernel,
    JointGrid,
    Marginal,
    invert_joint,
)
from .numerics import FLOAT, RATIONAL, UNIT_ROUNDOFF
from .states import BlochState

LABELS = [1, -1]
#: |s| above which some choice of in-plane axes yields a negative cell
THRESHOLD = 1 / math.sqrt(2)


class SingularKernel(ValueError):
    pass


class UnitarityViolation(RuntimeError):
    pass


@dataclass(frozen=True)
class QubitScheme:
    """Measurement geometry; ``sin(phi)`` is the ancilla overlap <a+|a->.

    ``cos``/``sin`` may be given exactly (e.g. 3/5, 4/5) to keep the whole
    pipeline rational; otherwise they are evaluated from ``phi``.
    """

    phi: float = math.pi / 4
    cos: object = None
    sin: object = None

    def __post_init__(self):
        if self.cos is None or self.sin is None:
            if not 0 <= self.phi <= math.pi / 2:
                raise ValueError("phi must lie in [0, pi/2]")
            c, s = math.cos(self.phi), math.sin(self.phi)
            # snap the endpoints so the singular axis is detected exactly
            c = 0.0 if abs(c) < 1e-15 else c
            s = 0.0 if abs(s) < 1e-15 else s
            object.__setattr__(self, "cos", c)
            object.__setattr__(self, "sin", s)
        else:
            c, s = self.cos, self.sin
            if c < 0 or s < 0:
                raise ValueError("cos(phi) and sin(phi) must be non-negative")
            if isinstance(c, float) or isinstance(s, float):
                ok = abs(c * c + s * s - 1) < 1e-12
            else:
                c, s = Fraction(c), Fraction(s)
                object.__setattr__(self, "cos", c)
                object.__setattr__(self, "sin", s)
                ok = c * c + s * s == 1
            if not ok:
                raise ValueError("cos^2 + sin^2 must equal 1")
            object.__setattr__(self, "phi", math.atan2(float(s), float(c)))

    @classmethod
    def exact(cls, cos, sin) -> "QubitScheme":
        return cls(cos=Fraction(cos), sin=Fraction(sin))

    @property
    def is_exact(self) -> bool:
        return isinstance(self.cos, Fraction) and isinstance(self.sin, Fraction)

    def eta(self, axis: str):
        axis = axis.upper()
        if axis == "X":
            return self.cos
        if axis == "Y":
            return self.sin
        raise ValueError(f"axis must be X or Y, got {axis!r}")


def _mode(s: BlochState, scheme: QubitScheme | None = None) -> str:
    exact = s.is_exact and (scheme is None or scheme.is_exact)
    return RATIONAL if exact else FLOAT


def exact_marginals(s: BlochState) -> tuple[Marginal, Marginal]:
    """p_X(x) = (1 + x s_x)/2 and p_Y(y) = (1 + y s_y)/2."""
    mode = _mode(s)
    px = [(1 + x * s.sx) / 2 for x in LABELS]
    py = [(1 + y * s.sy) / 2 for y in LABELS]
    if mode == RATIONAL:
        return Marginal(px, LABELS, RATIONAL), Marginal(py, LABELS, RATIONAL)
    ex = [2 * UNIT_ROUNDOFF * abs(float(v)) for v in px]
    ey = [2 * UNIT_ROUNDOFF * abs(float(v)) for v in py]
    return Marginal(px, LABELS, FLOAT, ex), Marginal(py, LABELS, FLOAT, ey)


def observed_joint(s: BlochState, scheme: QubitScheme) -> JointGrid:
    """Closed-form joint statistics of the simultaneous measurement."""
    mode = _mode(s, scheme)
    c, sn = scheme.cos, scheme.sin
    if mode == FLOAT:
        c, sn = float(c), float(sn)
        sx, sy = float(s.sx), float(s.sy)
    else:
        sx, sy = s.sx, s.sy
    vals = [[(1 + x * sx * c + y * sy * sn) / 4 for y in LABELS] for x in LABELS]
    if mode == RATIONAL:
        return JointGrid(vals, LABELS, LABELS, RATIONAL, meta={"scheme": "qubit"})
    # cos/sin evaluation, two products, two sums, one division
    err = [[8 * UNIT_ROUNDOFF * (1 + abs(sx * c) + abs(sy * sn)) / 4 for _ in LABELS] for _ in LABELS]
    return JointGrid(vals, LABELS, LABELS, FLOAT, False, err, meta={"scheme": "qubit"})


@dataclass(frozen=True)
class CoupledModel:
    """Explicit system (x) ancilla operators, ancilla in the |x~> basis."""

    a_plus: np.ndarray
    a_minus: np.ndarray
    v_plus: np.ndarray
    v_minus: np.ndarray
    unitary: np.ndarray
    x_proj: tuple  # system projectors onto sigma_x eigenvectors (+1, -1)
    y_proj: tuple  # system projectors onto sigma_y eigenvectors (+1, -1)
    xt_proj: tuple  # ancilla projectors |x~=+1>, |x~=-1>


_SX = np.array([[0, 1], [1, 0]], dtype=complex)
_SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
_SZ = np.array([[1, 0], [0, -1]], dtype=complex)


def _eigprojs(op):
    return tuple((np.eye(2) + sign * op) / 2 for sign in LABELS)


def coupled_model(scheme: QubitScheme, tol: float = 1e-12) -> CoupledModel:
    phi = scheme.phi
    ch, sh = math.cos(phi / 2), math.sin(phi / 2)
    a_plus = np.array([ch, sh], dtype=complex)
    a_minus = np.array([sh, ch], dtype=complex)
    # rotations taking the initial ancilla |a> = |x~=+1> to |a+-> respectively
    v_plus = np.array([[ch, -sh], [sh, ch]], dtype=complex)
    v_minus = np.array([[sh, -ch], [ch, sh]], dtype=complex)
    px = _eigprojs(_SX)
    U = np.kron(px[0], v_plus) + np.kron(px[1], v_minus)
    if not np.allclose(U.conj().T @ U, np.eye(4), atol=tol, rtol=0):
        raise UnitarityViolation("coupling operator is not unitary")
    xt = (np.diag([1, 0]).astype(complex), np.diag([0, 1]).astype(complex))
    return CoupledModel(a_plus, a_minus, v_plus, v_minus, U, px, _eigprojs(_SY), xt)


def simulate_coupled(s: BlochState, scheme: QubitScheme) -> JointGrid:
    """Joint statistics from explicit operator algebra on system (x) ancilla."""
    model = coupled_model(scheme)
    sx, sy, sz = (float(c) for c in s.vector)
    rho = (np.eye(2) + sx * _SX + sy * _SY + sz * _SZ) / 2
    a0 = np.array([1, 0], dtype=complex)
    rho_total = np.kron(rho, np.outer(a0, a0.conj()))
    out_state = model.unitary @ rho_total @ model.unitary.conj().T
    vals = np.empty((2, 2))
    for i, pxt in enumerate(model.xt_proj):
        for j, py in enumerate(model.y_proj):
            vals[i, j] = np.trace(out_state @ np.kron(py, pxt)).real
    err = np.full((2, 2), 64 * UNIT_ROUNDOFF)
    return JointGrid(vals, LABELS, LABELS, FLOAT, False, err, meta={"scheme": "qubit"})


def qubit_kernel(scheme: QubitScheme, axis: str) -> InversionKernel:
    """mu(z, z') = (1 + z z' / eta) / 2 with eta_X = cos(phi), eta_Y = sin(phi)."""
    eta = scheme.eta(axis)
    if eta == 0:
        raise SingularKernel(f"eta_{axis.upper()} = 0: the {axis.upper()} outcome carries no information")
    if isinstance(eta, Fraction):
        m = [[(1 + Fraction(z * zp) / eta) / 2 for zp in LABELS] for z in LABELS]
        return InversionKernel(m, LABELS, LABELS, RATIONAL, name=f"qubit-{axis.upper()}")
    m = [[(1 + z * zp / eta) / 2 for zp in LABELS] for z in LABELS]
    err = [[4 * UNIT_ROUNDOFF * (1 + 1 / abs(eta)) for _ in LABELS] for _ in LABELS]
    return InversionKernel(m, LABELS, LABELS, FLOAT, err, name=f"qubit-{axis.upper()}")


def retrieved_joint(s: BlochState, scheme: QubitScheme) -> JointGrid:
    """Invert both marginals of the observed joint; equals (1 + x s_x + y s_y)/4."""
    return invert_joint(qubit_kernel(scheme, "X"), qubit_kernel(scheme, "Y"),
                        observed_joint(s, scheme))


def retrieved_closed_form(s: BlochState) -> JointGrid:
    vals = [[(1 + x * s.sx + y * s.sy) / 4 for y in LABELS] for x in LABELS]
    mode = _mode(s)
    return JointGrid(vals, LABELS, LABELS, mode, True)


def min_cell(s: BlochState):
    """Smallest cell of the retrieved joint for the given axes: (1 - |s_x| - |s_y|)/4."""
    return (1 - abs(s.sx) - abs(s.sy)) / 4


def is_negative_for_axes(s: BlochState) -> bool:
    """Literal criterion for the fixed X, Y axes."""
    return abs(s.sx) + abs(s.sy) > 1


def min_cell_optimal_axes(s: BlochState) -> float:
    """Most negative cell reachable by choosing the X, Y axes.

    Rotating so that s lies in the x-y plane at 45 degrees to both axes gives
    |s_x| = |s_y| = |s| / sqrt(2), hence a minimum cell (1 - sqrt(2)|s|)/4.
    """
    return (1 - math.sqrt(2) * s.norm) / 4


def is_nonclassical_some_axes(s: BlochState) -> bool:
    """True iff |s| > 1/sqrt(2) (strict; the boundary sphere is classical)."""
    if s.is_exact:
        return 2 * sum(c * c for c in s.vector) > 1
    return s.norm > THRESHOLD


@dataclass(frozen=True)
class VolumeEstimate:
    value: float
    stderr: float
    samples: int
    method: str
    seed: int | None = None


def nonclassical_volume_fraction(method: str = "analytic", samples: int = 1_000_000,
                                 seed: int = 1, block_size: int = 250_000,
                                 workers: int = 1) -> VolumeEstimate:
    """Fraction of the Bloch ball with |s| > 1/sqrt(2).

    ``analytic`` returns 1 - 2**-1.5.  ``monte_carlo`` samples points
    uniformly in the ball in blocks, each block with its own generator spawned
    from ``seed``, so the estimate depends only on (seed, samples, block_size).
    """
    if method == "analytic":
        return VolumeEstimate(1 - 2 ** -1.5, 0.0, 0, "analytic")
    if method != "monte_carlo":
        raise ValueError(f"unknown method {method!r}")
    if samples < 1:
        raise ValueError("samples must be >= 1")
    sizes = [block_size] * (samples // block_size)
    if samples % block_size:
        sizes.append(samples % block_size)
    seqs = np.random.SeedSequence(seed).spawn(len(sizes))

    def run(args):
        n, ss = args
        rng = np.random.default_rng(ss)
        # direction from a normal vector, radius from u**(1/3)
        v = rng.standard_normal((n, 3))
        v /= np.linalg.norm(v, axis=1)[:, None]
        pts = v * rng.random(n)[:, None] ** (1 / 3)
        return int(np.count_nonzero(np.linalg.norm(pts, axis=1) > THRESHOLD))

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            hits = sum(pool.map(run, zip(sizes, seqs)))
    else:
        hits = sum(map(run, zip(sizes, seqs)))
    p = hits / samples
    return VolumeEstimate(p, math.sqrt(p * (1 - p) / samples), samples, "monte_carlo", seed)
