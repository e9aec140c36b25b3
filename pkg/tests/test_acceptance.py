"""End-to-end acceptance checks, one test per criterion.

The terminal summary lists each criterion with PASS or FAIL.  Run alone
with ``pytest tests/test_acceptance.py``; criterion 10 also bounds the
runtime of whatever session it is part of.
"""
import math
import time
from fractions import Fraction

import numpy as np
import pytest

import test_classical_positivity as classical
from jointnc.inversion import negativity
from jointnc.number_number import (
    nn_invert_marginal, nn_pfunction_oracle, nn_retrieve, nn_stability_scan, thinned_gf, unthinned_gf,
)
from jointnc.numerics import FLOAT, RATIONAL
from jointnc.phase_number import ReferenceBeam, pc_identity, pn_forward, pn_retrieve, to_ragged
from jointnc.qubit import (
    QubitScheme, nonclassical_volume_fraction, observed_joint, retrieved_closed_form,
    retrieved_joint, simulate_coupled,
)
from jointnc.sampler import draw, empirical_invert, qubit_inverter
from jointnc.states import (
    BlochState, Coherent, Custom, Fock, PhotonAddedThermal, SqueezedVacuum, Thermal, number_distribution,
)

F = Fraction


def criterion(n, title):
    return pytest.mark.criterion(n, title)


@criterion(1, "Fock(7): p(2,2) = -210 exactly, alternating signs, < 1 s")
def test_fock7():
    t = time.perf_counter()
    r = nn_retrieve(number_distribution(Fock(7)))
    elapsed = time.perf_counter() - t
    assert r.joint.mode == RATIONAL and r.converged
    assert r.cell(2, 2) == -210
    for (a, b), v, _ in r.joint.cells():
        if a + b <= 7:
            assert v != 0 and (v > 0) == ((a + b + 1) % 2 == 0), (a, b)
        else:
            assert v == 0
    assert negativity(r.joint).argmin == (2, 2)
    assert elapsed < 1.0


@criterion(2, "Fock(1): p(0,0) = -1, p(1,0) = p(0,1) = 1, all else 0")
def test_fock1():
    r = nn_retrieve(number_distribution(Fock(1)), extent=6)
    want = {(0, 0): -1, (1, 0): 1, (0, 1): 1}
    for (a, b), v, _ in r.joint.cells():
        assert v == want.get((a, b), 0)


@criterion(3, "PATS(k=1, nbar=1): single negative cell (0,0) = -1/9")
def test_pats():
    nbar = F(1)
    r = nn_retrieve(number_distribution(PhotonAddedThermal(1, nbar)))
    assert r.joint.mode == RATIONAL
    neg = [(lab, v) for lab, v, _ in r.joint.cells() if v < 0]
    assert neg == [((0, 0), F(-1, 9))]
    assert neg[0][1] == -1 / (2 * nbar + 1) ** 2


@criterion(4, "squeezed vacuum r=0.3: p(0,1) = p(1,0) = -sinh^2 r; scan threshold")
def test_squeezed_vacuum():
    r = nn_retrieve(number_distribution(SqueezedVacuum(0.3), mode=FLOAT))
    want = -math.sinh(0.3) ** 2
    assert abs(r.cell(0, 1) - want) < 1e-9 and abs(r.cell(1, 0) - want) < 1e-9
    rows = nn_stability_scan([SqueezedVacuum.from_nbar(x) for x in (0.1, 0.2, 0.3)])
    near, above, far = rows
    assert near.joint_reliable
    assert not above.joint_reliable and not far.joint_reliable
    assert near.marginal_reliable and above.marginal_reliable


@criterion(5, "qubit: closed form, operator oracle, threshold, volume 1 - 2^-3/2")
def test_qubit():
    rng = np.random.default_rng(5)
    for _ in range(100):
        v = rng.normal(size=3)
        v *= rng.uniform() ** (1 / 3) / np.linalg.norm(v)
        s, scheme = BlochState(*v), QubitScheme(rng.uniform(0.01, math.pi / 2 - 0.01))
        assert np.max(np.abs(retrieved_joint(s, scheme).floats() - retrieved_closed_form(s).floats())) < 1e-12
        assert np.max(np.abs(simulate_coupled(s, scheme).floats() - observed_joint(s, scheme).floats())) < 1e-12
    exact = QubitScheme.exact(F(3, 5), F(4, 5))
    for sx in np.arange(-1, F(11, 10), F(1, 10)):
        for sy in np.arange(-1, F(11, 10), F(1, 10)):
            if sx * sx + sy * sy <= 1:
                s = BlochState(sx, sy, 0)
                grid = retrieved_joint(s, exact)
                assert (min(grid.values.reshape(-1)) < 0) == (abs(sx) + abs(sy) > 1)
    a = nonclassical_volume_fraction("analytic")
    assert a.value == pytest.approx(1 - 2**-1.5, abs=1e-15)
    mc = nonclassical_volume_fraction("monte_carlo", 1_000_000, seed=1)
    assert abs(mc.value - a.value) <= 3 * mc.stderr


@criterion(6, "phase-number vacuum, nbar=1: p(1,0) = -1; pc identity on 20 states")
def test_phase_number():
    vac = number_distribution(Fock(0))
    exact = pn_retrieve(to_ragged(pn_forward(vac, ReferenceBeam(F(1)), 10)), F(1))
    assert exact.cell(1, 0) == -1
    fl = pn_retrieve(to_ragged(pn_forward(number_distribution(Fock(0), mode=FLOAT), ReferenceBeam(1.0), 14)), 1.0)
    assert abs(fl.cell(1, 0) + 1) < 1e-12
    rng = np.random.default_rng(6)
    for _ in range(20):
        w = rng.integers(0, 10, size=int(rng.integers(1, 7)))
        w[0] += 1
        d = number_distribution(Custom(tuple(F(int(x), int(w.sum())) for x in w)))
        nbar = F(int(rng.integers(1, 20)), int(rng.integers(1, 8)))
        r = pn_retrieve(to_ragged(pn_forward(d, ReferenceBeam(nbar), 5, max_deficit=1.0)), nbar)
        assert r.cell(1, 0) == pc_identity(d, nbar) == -nbar * d.p(0)


@criterion(7, "classical models invert to non-negative grids (1000 per scheme, exact)")
def test_classical_positivity():
    assert classical.MODELS >= 1000
    classical.test_qubit_classical_models_invert_to_distributions()
    classical.test_number_number_classical_models_invert_to_distributions()
    classical.test_phase_number_classical_models_invert_to_distributions()


@criterion(8, "marginal kernels recover Fock n<=12, thermal, PATS, Poisson")
def test_round_trip():
    for n in range(13):
        out = nn_invert_marginal(number_distribution(Fock(n)), upto=12, extent=12)
        assert list(out.values) == [int(k == n) for k in range(13)]
    for spec in (Thermal(F(1, 2)), Thermal(F(2)), PhotonAddedThermal(1, F(1)), PhotonAddedThermal(2, F(3, 2))):
        d = number_distribution(spec)
        assert unthinned_gf(thinned_gf(d.gf)) == d.gf
        out = nn_invert_marginal(d, upto=6, extent=d.cutoff + 40)
        truth = np.array([float(spec.prob(k, RATIONAL)) for k in range(7)])
        assert np.all(np.abs(out.floats() - truth) <= out.float_errors())
    d = number_distribution(Coherent(1.5), mode=FLOAT)
    out = nn_invert_marginal(d, upto=6, extent=d.cutoff + 40)
    truth = np.array([d.p(k).value for k in range(7)])
    assert np.all(np.abs(out.floats() - truth) <= out.float_errors())


@criterion(9, "coherent and thermal: retrieved cells >= 0 and equal the P-function oracle")
def test_classical_states():
    for nbar in (0.5, 1.0, 2.0):
        r = nn_retrieve(number_distribution(Coherent(nbar), mode=FLOAT))
        assert r.converged
        for (a, b), v, e in r.joint.cells():
            assert v >= -e
            assert abs(v - nn_pfunction_oracle(Coherent(nbar), a, b).value) <= 1e-10
    for nbar in (F(1, 2), F(1), F(3)):
        r = nn_retrieve(number_distribution(Thermal(nbar)), extent=14)
        for (a, b), v, _ in r.joint.cells():
            assert v >= 0 and v == nn_pfunction_oracle(Thermal(nbar), a, b)


@criterion(10, "sampler: 1e6 shots, 99% CI holds -(sqrt2-1)/4; suite < 2 min")
def test_sampler_and_runtime(session_elapsed):
    s = BlochState(1 / math.sqrt(2), 1 / math.sqrt(2), 0)
    scheme = QubitScheme(math.pi / 4)
    run = draw(observed_joint(s, scheme), 10**6, seed=2024)
    res = empirical_invert(run, qubit_inverter(scheme), n_boot=1000, seed=2025, level=0.99)
    truth = -(math.sqrt(2) - 1) / 4
    assert res.ci[0] <= truth <= res.ci[1]
    assert res.ci[1] < 0
    assert session_elapsed() < 120
