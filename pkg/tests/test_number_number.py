import math
import time
from fractions import Fraction

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from jointnc.inversion import invert_marginal, marginals, negativity
from jointnc.number_number import (
    UnsupportedState, antidiagonal_series, nn_forward, nn_invert_marginal, nn_marginal_kernel,
    nn_observed_marginal, nn_pfunction_oracle, nn_retrieve, nn_retrieve_fock_oracle,
    nn_stability_scan, parity_wigner_origin, wigner_origin,
)
from jointnc.numerics import FLOAT, RATIONAL, to_float
from jointnc.states import (
    Coherent, Custom, Fock, PhotonAddedThermal, SqueezedVacuum, Thermal, number_distribution,
)

F = Fraction


def dist(spec, **kw):
    return number_distribution(spec, **kw)


def multinomial_fock_cell(n, a, b):
    """Independent evaluation of the single surviving series term for |n>."""
    k = n - a - b
    if k < 0:
        return 0
    return (-1) ** k * math.comb(n, a) * math.comb(n - a, b)


def test_forward_examples():
    g = nn_forward(dist(Fock(0))).joint
    assert g.values.tolist() == [[1]]
    g = nn_forward(dist(Fock(1))).joint
    assert g.values.tolist() == [[0, F(1, 2)], [F(1, 2), 0]]
    g = nn_forward(dist(Fock(7))).joint
    for a in range(8):
        for b in range(8):
            assert g.cell(a, b) == (F(math.comb(7, a), 2**7) if a + b == 7 else 0)
    assert g.total() == 1


def test_forward_is_symmetric_and_truncation_reported():
    o = nn_forward(dist(Thermal(1), cutoff=30), cutoff=12)
    assert (o.joint.values == o.joint.values.T).all()
    assert o.truncation_bound > 0
    assert float(1 - o.joint.total()) <= o.truncation_bound * (1 + 1e-12)


def test_marginal_kernel_entries():
    k = nn_marginal_kernel(8)
    for kk in range(9):
        assert k.entries[0, kk] == (-1) ** kk
    for n in range(9):
        assert k.entries[n, n] == 2**n
        for kk in range(n):
            assert k.entries[n, kk] == 0


def test_marginal_kernel_round_trip_fock3():
    d = dist(Fock(3))
    m, _ = marginals(nn_forward(d).joint)
    out = invert_marginal(nn_marginal_kernel(3), m)
    assert list(out.values) == [0, 0, 0, 1]


def test_observed_marginal_matches_grid_marginal():
    d = dist(PhotonAddedThermal(2, F(1, 2)), cutoff=60, max_tail=1)
    m = nn_observed_marginal(d, 6)
    # brute force: truncated sum of the closed form against the exact GF route
    for n in range(7):
        brute = sum(F(math.comb(k, n), 2**k) * d.probs[k] for k in range(n, 61))
        assert 0 <= m.values[n] - brute < F(1, 10**12)


def test_fock_examples():
    r = nn_retrieve(dist(Fock(1)))
    assert r.joint.values.tolist() == [[-1, 1], [1, 0]]
    assert r.converged
    r = nn_retrieve(dist(Fock(7)))
    assert r.cell(2, 2) == -210
    assert nn_retrieve_fock_oracle(0).values.tolist() == [[1]]
    assert nn_retrieve_fock_oracle(7).cell(2, 2) == -210


@pytest.mark.parametrize("n", range(13))
def test_series_equals_fock_closed_form(n):
    r = nn_retrieve(dist(Fock(n)))
    oracle = nn_retrieve_fock_oracle(n)
    assert r.joint.values.tolist() == oracle.values.tolist()
    for a in range(n + 1):
        for b in range(n + 1):
            assert r.cell(a, b) == multinomial_fock_cell(n, a, b)


def test_fock_float_mode_agrees_with_rational():
    r = nn_retrieve(dist(Fock(9), mode=FLOAT))
    exact = nn_retrieve_fock_oracle(9)
    assert np.all(np.abs(r.joint.floats() - exact.floats()) <= r.joint.float_errors() + 1e-300)


def thermal_cell_by_quadrature(nbar, a, b):
    # radial integral of the Gaussian P function
    N = a + b
    f = lambda u: mpmath.e ** (-u / nbar) / nbar * u**N * mpmath.e ** (-2 * u)
    return mpmath.quad(f, [0, mpmath.inf]) / (mpmath.factorial(a) * mpmath.factorial(b))


@pytest.mark.parametrize("nbar", [F(1, 2), F(1), F(3)])
def test_thermal_is_classical_and_matches_pfunction(nbar):
    d = dist(Thermal(nbar))
    r = nn_retrieve(d, extent=12)
    assert r.joint.mode == RATIONAL
    for (a, b), v, _ in r.joint.cells():
        assert v >= 0
        assert v == nn_pfunction_oracle(Thermal(nbar), a, b)
    for a, b in [(0, 0), (1, 2), (3, 3)]:
        assert float(r.cell(a, b)) == pytest.approx(float(thermal_cell_by_quadrature(float(nbar), a, b)), rel=1e-12)
    assert nn_pfunction_oracle(Thermal(nbar), 0, 0) == 1 / (1 + 2 * nbar)


@pytest.mark.parametrize("nbar", [0.5, 1.0, 2.5])
def test_coherent_is_classical_and_matches_pfunction(nbar):
    r = nn_retrieve(dist(Coherent(nbar)))
    assert r.converged
    for (a, b), v, e in r.joint.cells():
        o = nn_pfunction_oracle(Coherent(nbar), a, b)
        assert abs(v - o.value) <= 1e-10
        assert v >= -e
    assert nn_pfunction_oracle(Coherent(0), 0, 0) == 1


def test_pfunction_unsupported():
    with pytest.raises(UnsupportedState):
        nn_pfunction_oracle(Fock(2), 0, 0)
    with pytest.raises(UnsupportedState):
        nn_pfunction_oracle(PhotonAddedThermal(1, 1), 0, 0)


@pytest.mark.parametrize("nbar", [F(1, 3), F(1), F(2), F(5, 2)])
def test_pats_single_negative_cell(nbar):
    r = nn_retrieve(dist(PhotonAddedThermal(1, nbar)), extent=14)
    neg = [(lab, v) for lab, v, _ in r.joint.cells() if v < 0]
    assert neg == [((0, 0), -1 / (2 * nbar + 1) ** 2)]


def test_pats_k1_nbar1_figure_values():
    r = nn_retrieve(dist(PhotonAddedThermal(1, 1)))
    rep = negativity(r.joint)
    assert rep.min_exact == F(-1, 9) and rep.argmin == (0, 0)
    assert sum(1 for _, v, _ in r.joint.cells() if v < 0) == 1
    assert not r.truncated


def test_squeezed_vacuum_r03():
    r = nn_retrieve(dist(SqueezedVacuum(0.3)))
    nbar = math.sinh(0.3) ** 2
    assert r.converged
    assert abs(r.cell(0, 1) + nbar) < 1e-9 and abs(r.cell(1, 0) + nbar) < 1e-9
    assert negativity(r.joint).argmin in ((0, 1), (1, 0))


@pytest.mark.parametrize("spec", [Fock(5), PhotonAddedThermal(2, F(1, 2)), Thermal(F(1, 4))])
def test_symmetry_and_marginal_consistency(spec):
    d = dist(spec)
    r = nn_retrieve(d, extent=30 if d.support_end is None else None)
    v = r.joint.values
    assert (v == v.T).all()
    rows = [sum(row, F(0)) for row in v]
    if d.support_end is not None:
        assert rows == list(d.probs)
        assert r.joint.total() == 1
    else:
        # the square misses cells with n2 > 30; they are tiny for these states
        assert all(abs(float(rows[n] - d.probs[n])) < 1e-12 for n in range(6))


@given(st.lists(st.integers(0, 20), min_size=1, max_size=8))
def test_custom_finite_support_mass_and_marginals_exact(weights):
    if sum(weights) == 0:
        return
    probs = tuple(F(w, sum(weights)) for w in weights)
    d = dist(Custom(probs))
    r = nn_retrieve(d)
    assert r.joint.total() == 1
    mx, my = marginals(r.joint)
    assert list(mx.values) == list(probs) == list(my.values)


def test_parity_examples():
    assert parity_wigner_origin(dist(Fock(1))) == -1
    assert parity_wigner_origin(dist(Fock(0))) == 1
    assert parity_wigner_origin(dist(Thermal(1))) == F(1, 3)
    w = wigner_origin(dist(Coherent(1.0)))
    assert w == pytest.approx(2 / math.pi * math.exp(-2), rel=1e-12)


def test_parity_equals_origin_cell():
    d = dist(PhotonAddedThermal(1, 1))
    assert parity_wigner_origin(d) == nn_retrieve(d).cell(0, 0)


def test_antidiagonal_series_float_bound():
    d = dist(Coherent(1.5))
    for N in range(6):
        s = antidiagonal_series(d, N)
        exact = mpmath.mpf(1.5) ** N * mpmath.e ** (-3) / mpmath.factorial(N)
        assert abs(s.value - float(exact)) <= s.error + 1e-300
        assert s.converged


def test_invert_marginal_within_bound():
    d = dist(Coherent(1.0))
    out = nn_invert_marginal(d, 8, extent=40)
    for n in range(9):
        assert abs(out.values[n] - math.exp(-1) / math.factorial(n)) <= out.errors[n] + 1e-300


def test_auto_extent_truncation_flag():
    r = nn_retrieve(dist(Thermal(3)), max_extent=6)
    assert r.truncated and r.extent == 6


def test_stability_scan_squeezed_vacuum():
    rows = nn_stability_scan([SqueezedVacuum.from_nbar(x) for x in (0.05, 0.1, 0.3)])
    low, mid, high = rows
    assert low.joint_reliable and mid.joint_reliable
    assert not high.joint_reliable and high.growth_ratio > 1
    assert all(r.marginal_reliable for r in rows)


def test_stability_scan_threshold_is_one_eighth():
    below, above = nn_stability_scan([SqueezedVacuum.from_nbar(x) for x in (0.11, 0.14)], extent=200)
    # growth ratio of the antidiagonal masses is 2t/(1-t) with t = tanh r
    for row, x in ((below, 0.11), (above, 0.14)):
        t = math.tanh(math.asinh(math.sqrt(x)))
        assert row.growth_ratio == pytest.approx(2 * t / (1 - t), rel=0.05)
    assert below.growth_ratio < 1 < above.growth_ratio


def test_stability_scan_trivial_cases():
    (fock,) = nn_stability_scan([Fock(7)], mode=RATIONAL, extent=20)
    assert fock.joint_reliable and fock.mass_residual == 0 and fock.marginal_residual == 0
    (coh,) = nn_stability_scan([Coherent(1.0)], extent=40)
    assert coh.joint_converged and coh.joint_reliable


def test_fock7_runtime():
    t = time.perf_counter()
    nn_retrieve(dist(Fock(7)))
    assert time.perf_counter() - t < 1.0


def test_cancellation_is_reported_as_unconverged():
    # every series stops, but binary64 cannot resolve the far antidiagonals
    d = number_distribution(Thermal(1), mode=FLOAT)
    r = nn_retrieve(d, extent=40)
    assert r.diagnostics["max_cell_error"] > 1e-12
    assert not r.converged
    assert nn_retrieve(number_distribution(Thermal(1), mode=FLOAT), extent=3).converged
