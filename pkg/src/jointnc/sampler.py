"""Finite-shot simulation of the detector statistics and inversion of the frequencies."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .inversion import JointGrid, invert_joint, negativity
from .numerics import FLOAT
from .phase_number import RaggedJoint, pn_retrieve

OVERFLOW = "overflow"


class InvalidDistribution(ValueError):
    pass


@dataclass
class SampleRun:
    """Multinomial counts over the outcomes of a forward model.

    ``outcomes[i]`` is a grid label pair ((n1, n2), (x, y) or (N, m)) and
    ``counts[i]`` its count.  Clicks falling outside the stored grid are
    counted in ``overflow`` and are never inverted.
    """

    outcomes: list
    counts: np.ndarray
    total: int
    seed: int
    scheme: str
    overflow: int = 0
    layout: dict = field(default_factory=dict)

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if int(self.counts.sum()) + self.overflow != self.total:
            raise ValueError("counts do not add up to total")

    def count_map(self) -> dict:
        return dict(zip(self.outcomes, self.counts.tolist()))

    def to_dict(self) -> dict:
        return {
            "scheme": self.scheme,
            "seed": self.seed,
            "total": self.total,
            "overflow": self.overflow,
            "counts": [[[str(a) for a in o], int(c)] for o, c in zip(self.outcomes, self.counts) if c],
        }


def _layout(forward) -> dict:
    if isinstance(forward, RaggedJoint):
        return {"kind": "ragged", "mdef": forward.mdef, "rows": [list(r) for r in forward.rows],
                "meta": dict(forward.meta)}
    if isinstance(forward, JointGrid):
        return {"kind": "grid", "rows": list(forward.row_labels), "cols": list(forward.col_labels),
                "meta": dict(forward.meta)}
    raise TypeError(f"cannot sample from {type(forward).__name__}")


def draw(forward, n_samples: int, seed: int, scheme: str = "", *, max_deficit: float = 1e-3) -> SampleRun:
    """Multinomial sample of ``n_samples`` clicks; deterministic for a fixed seed."""
    if n_samples < 0:
        raise ValueError("n_samples must be >= 0")
    layout = _layout(forward)
    outcomes, probs = [], []
    for label, v, err in forward.cells():
        fv = float(v)
        if fv < -err:
            raise InvalidDistribution(f"negative probability {fv:.3g} at {label}")
        outcomes.append(tuple(label))
        probs.append(max(fv, 0.0))
    probs = np.array(probs)
    deficit = 1.0 - math.fsum(probs)
    if deficit > max_deficit:
        raise InvalidDistribution(f"forward model misses {deficit:.3g} of its mass")
    if deficit < 0:
        probs = probs / math.fsum(probs)
        deficit = 0.0
    rng = np.random.default_rng(seed)
    drawn = rng.multinomial(n_samples, np.append(probs, deficit))
    scheme = scheme or str(layout["meta"].get("scheme", ""))
    return SampleRun(outcomes, drawn[:-1], n_samples, seed, scheme, int(drawn[-1]), layout)


def frequencies(run: SampleRun, counts: np.ndarray | None = None):
    """Empirical grid (relative frequencies over all clicks, overflow included in the norm)."""
    c = run.counts if counts is None else counts
    f = np.asarray(c, dtype=float) / max(run.total, 1)
    lay = run.layout
    if lay["kind"] == "grid":
        rows, cols = lay["rows"], lay["cols"]
        vals = f.reshape(len(rows), len(cols))
        return JointGrid(vals, rows, cols, FLOAT, False, np.zeros(vals.shape), meta=dict(lay["meta"]))
    it = iter(f)
    rows = [{m: next(it) for m in r} for r in lay["rows"]]
    return RaggedJoint(rows, FLOAT, lay["mdef"], signed=True, meta=dict(lay["meta"]))


def _flat(grid) -> tuple[list, np.ndarray]:
    labels, vals = [], []
    for label, v, _ in grid.cells():
        labels.append(tuple(label))
        vals.append(float(v))
    return labels, np.array(vals)


@dataclass
class EmpiricalResult:
    grid: object
    min_value: float
    argmin: tuple
    ci: tuple
    level: float
    boot_se: float
    n_boot: int
    cell_se: np.ndarray

    def to_dict(self) -> dict:
        return {"min_value": self.min_value, "argmin": [str(a) for a in self.argmin],
                "ci": list(self.ci), "level": self.level, "bootstrap_se": self.boot_se,
                "n_boot": self.n_boot}


def empirical_invert(run: SampleRun, inverter: Callable, n_boot: int = 1000, seed: int | None = None,
                     level: float = 0.99, workers: int = 1) -> EmpiricalResult:
    """Invert the empirical frequencies and bootstrap the minimum cell.

    Every scheme inverter is linear in the frequencies, so the map is
    tabulated once on unit count vectors and each resample is a matrix
    product.  Resample i draws from its own generator spawned from
    ``seed``; results do not depend on ``workers``.
    """
    point = inverter(frequencies(run))
    labels, est = _flat(point)
    n_out = len(run.outcomes)
    basis = np.empty((n_out, len(labels)))
    for i in range(n_out):
        unit = np.zeros(n_out)
        unit[i] = run.total
        basis[i] = _flat(inverter(frequencies(run, unit)))[1]
    rep = negativity(point)
    if n_boot <= 0 or run.total == 0:
        return EmpiricalResult(point, rep.min_value, rep.argmin, (rep.min_value, rep.min_value), level,
                               0.0, 0, np.zeros(len(labels)))
    p_hat = np.append(run.counts, run.overflow) / run.total
    children = np.random.SeedSequence(run.seed if seed is None else seed).spawn(n_boot)

    def resample(chunk):
        draws = np.array([np.random.default_rng(ss).multinomial(run.total, p_hat)[:-1] for ss in chunk])
        cells = (draws / run.total) @ basis
        return cells

    chunks = [children[i:i + 250] for i in range(0, n_boot, 250)]
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            parts = list(ex.map(resample, chunks))
    else:
        parts = [resample(c) for c in chunks]
    cells = np.vstack(parts)
    mins = cells.min(axis=1)
    a = (1 - level) / 2
    lo, hi = np.quantile(mins, [a, 1 - a])
    return EmpiricalResult(point, rep.min_value, rep.argmin, (float(lo), float(hi)), level,
                           float(mins.std(ddof=1)), n_boot, cells.std(axis=0, ddof=1))


# scheme inverters ----------------------------------------------------------


def qubit_inverter(scheme) -> Callable:
    from .qubit import qubit_kernel

    kx = qubit_kernel(scheme, "X").to_float()
    ky = qubit_kernel(scheme, "Y").to_float()
    return lambda j: invert_joint(kx, ky, j)


def nn_inverter(cutoff: int) -> Callable:
    from .number_number import nn_marginal_kernel

    k = nn_marginal_kernel(cutoff, FLOAT)
    return lambda j: invert_joint(k, k, j)


def pn_inverter(nbar) -> Callable:
    return lambda r: pn_retrieve(r, float(nbar))
