import math
from fractions import Fraction

import mpmath
import pytest
from hypothesis import given
from hypothesis import strategies as st

from jointnc.numerics import FLOAT, RATIONAL, TrackedFloat, to_float
from jointnc.states import (
    BlochState, Coherent, Custom, CutoffTooSmall, Fock, PhotonAddedThermal, SqueezedVacuum,
    StateParseError, Thermal, mean_photon_number, number_distribution, parse_state,
)


def test_fock_is_delta():
    d = number_distribution(Fock(7))
    assert d.mode == RATIONAL
    assert d.probs == tuple([Fraction(0)] * 7 + [Fraction(1)])
    assert d.tail_bound == 0


def pats_formula(k, nbar, n):
    q = nbar / (nbar + 1)
    return Fraction(1) / (nbar + 1) ** (k + 1) * math.comb(n, k) * q ** (n - k) if n >= k else 0


def test_pats_k1_nbar1_values():
    d = number_distribution(PhotonAddedThermal(1, 1), cutoff=30)
    assert d.probs[0] == 0
    for n in range(1, 31):
        assert d.probs[n] == Fraction(n, 4) * Fraction(1, 2) ** (n - 1)


@given(st.integers(0, 4), st.fractions(Fraction(1, 10), 3, max_denominator=20))
def test_pats_matches_closed_form(k, nbar):
    d = number_distribution(PhotonAddedThermal(k, nbar), cutoff=k + 25, max_tail=1.0)
    for n in range(k + 26):
        assert d.probs[n] == pats_formula(k, Fraction(nbar), n)
    assert all(d.probs[n] == 0 for n in range(k))


def test_thermal_is_pats_k0():
    a = number_distribution(Thermal(Fraction(3, 2)), cutoff=20, max_tail=1)
    b = number_distribution(PhotonAddedThermal(0, Fraction(3, 2)), cutoff=20, max_tail=1)
    assert a.probs == b.probs


def test_squeezed_vacuum_against_mpmath():
    r = 0.3
    d = number_distribution(SqueezedVacuum(r))
    t = mpmath.tanh(r)
    for n in range(d.cutoff + 1):
        p = d.probs[n]
        if n % 2:
            assert to_float(p) == 0
            continue
        m = n // 2
        ref = mpmath.factorial(n) / (2 ** m * mpmath.factorial(m)) ** 2 * t ** n / mpmath.cosh(r)
        assert abs(to_float(p) - float(ref)) <= p.err + 1e-300
    mean = mean_photon_number(d)
    assert abs(to_float(mean) - math.sinh(r) ** 2) <= 1e-14
    assert math.sinh(0.3) ** 2 == pytest.approx(0.0927326, abs=1e-7)


def test_normalisation_with_tail():
    for spec in (Coherent(1.0), SqueezedVacuum(0.5), Thermal(Fraction(2))):
        d = number_distribution(spec)
        total = math.fsum(to_float(p) for p in d.probs)
        assert total <= 1 + 1e-14
        assert total + d.tail_bound >= 1 - 1e-14
    d = number_distribution(Thermal(1), cutoff=40, max_tail=1)
    assert sum(d.probs, Fraction(0)) + Fraction(d.tail_bound) >= 1


def test_auto_cutoff_certifies_tail():
    d = number_distribution(Coherent(1.0), mode=FLOAT)
    assert d.tail_bound < 1e-15
    ref = 1 - math.fsum(float(mpmath.e ** -1 / mpmath.factorial(n)) for n in range(d.cutoff + 1))
    assert ref <= d.tail_bound + 1e-16


def test_cutoff_too_small():
    with pytest.raises(CutoffTooSmall):
        number_distribution(Coherent(5.0), cutoff=3)


def test_mean_photon_number_examples():
    assert mean_photon_number(number_distribution(Fock(7))) == 7
    m = mean_photon_number(number_distribution(Coherent(1.0), cutoff=40))
    assert abs(to_float(m) - 1) < 1e-12
    assert mean_photon_number(number_distribution(Fock(0))) == 0


@pytest.mark.parametrize("text,expected", [
    ("fock:7", Fock(7)),
    ("vacuum", Fock(0)),
    ("pats:k=1,nbar=1", PhotonAddedThermal(1, 1)),
    ("thermal:nbar=0.5", Thermal(Fraction(1, 2))),
    ("coherent:nbar=1", Coherent(1)),
])
def test_parse_state(text, expected):
    assert parse_state(text) == expected


def test_parse_squeezed_and_custom(tmp_path):
    s = parse_state("sqvac:r=0.3")
    assert isinstance(s, SqueezedVacuum) and s.r == 0.3
    s = parse_state("sqvac:nbar=0.1")
    assert math.sinh(s.r) ** 2 == pytest.approx(0.1, rel=1e-12)
    c = parse_state("custom:1/2,1/4,1/4")
    assert number_distribution(c).probs == (Fraction(1, 2), Fraction(1, 4), Fraction(1, 4))
    f = tmp_path / "p.csv"
    f.write_text("n,p\n0,0.25\n2,0.75\n")
    c = parse_state(f"custom:@{f}")
    assert number_distribution(c).probs == (Fraction(1, 4), 0, Fraction(3, 4))


@pytest.mark.parametrize("bad", ["fock:x", "pats:k=1", "coherent:nbar=-1", "nope:1", "pats:k=1,nbar=1,z=2"])
def test_parse_errors(bad):
    with pytest.raises((StateParseError, ValueError)):
        parse_state(bad)


def test_custom_rejects_invalid():
    with pytest.raises(ValueError):
        Custom((Fraction(1, 2), Fraction(-1, 2), Fraction(1)))


def test_bloch_state_bounds():
    BlochState(0.6, 0.8, 0)
    with pytest.raises(ValueError):
        BlochState(0.8, 0.8, 0)
    assert BlochState(Fraction(3, 5), Fraction(4, 5), 0).is_exact
