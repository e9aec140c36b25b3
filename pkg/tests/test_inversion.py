import json
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from jointnc.inversion import (
    ClassicalModel, DimensionMismatch, InversionKernel, JointGrid, Marginal, classical_forward,
    identity_kernel, invert_joint, invert_marginal, marginals, negativity,
)
from jointnc.number_number import nn_forward, nn_marginal_kernel, nn_retrieve
from jointnc.numerics import FLOAT, RATIONAL
from jointnc.qubit import QubitScheme, exact_marginals, observed_joint, qubit_kernel
from jointnc.states import BlochState, Fock, PhotonAddedThermal, number_distribution

F = Fraction
Q = F(1, 4)


def uniform():
    return JointGrid([[Q, Q], [Q, Q]], [1, -1], [1, -1])


def test_marginals_uniform():
    mx, my = marginals(uniform())
    assert list(mx.values) == [F(1, 2), F(1, 2)]
    assert list(my.values) == [F(1, 2), F(1, 2)]


def test_marginals_qubit_eigenstate_phi_zero():
    # phi = 0: X read sharply, Y not at all
    j = observed_joint(BlochState(1, 0, 0), QubitScheme.exact(1, 0))
    mx, my = marginals(j)
    assert list(mx.values) == [1, 0]
    assert list(my.values) == [F(1, 2), F(1, 2)]


def test_marginals_fock1_number_grid():
    d = number_distribution(Fock(1))
    mx, my = marginals(nn_forward(d, cutoff=3).joint)
    # sum_k 2^-k C(k, n) p(k) with p = delta_1
    expected = [sum(F(math.comb(k, n), 2**k) * (k == 1) for k in range(4)) for n in range(4)]
    assert list(mx.values) == expected
    assert list(my.values) == expected


def test_invert_marginal_identity():
    m = Marginal([F(1, 3), F(2, 3)], [0, 1], RATIONAL)
    assert list(invert_marginal(identity_kernel([0, 1]), m).values) == [F(1, 3), F(2, 3)]


def test_invert_marginal_qubit_round_trip_exact():
    s = BlochState(F(1, 3), F(-1, 2), F(1, 5))
    sch = QubitScheme.exact(F(5, 13), F(12, 13))
    mx, my = marginals(observed_joint(s, sch))
    ex, ey = exact_marginals(s)
    assert list(invert_marginal(qubit_kernel(sch, "X"), mx).values) == list(ex.values)
    assert list(invert_marginal(qubit_kernel(sch, "Y"), my).values) == list(ey.values)


def test_invert_marginal_binomial_on_thinned_poisson():
    # brute force: thinning Poisson(nbar) by 1/2 gives Poisson(nbar/2)
    nbar, L = 1.3, 60
    obs = [math.exp(-nbar / 2) * (nbar / 2) ** k / math.factorial(k) for k in range(L + 1)]
    out = invert_marginal(nn_marginal_kernel(L, FLOAT), Marginal(obs, list(range(L + 1)), FLOAT))
    for n in range(10):
        assert out.values[n] == pytest.approx(math.exp(-nbar) * nbar**n / math.factorial(n), abs=1e-10)


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        invert_marginal(identity_kernel([0, 1, 2]), Marginal([F(1)], [0], RATIONAL))
    with pytest.raises(DimensionMismatch):
        invert_joint(identity_kernel([0]), identity_kernel([0, 1]), uniform())


def test_invert_joint_identity():
    j = uniform()
    out = invert_joint(identity_kernel([1, -1]), identity_kernel([1, -1]), j)
    assert out.values.tolist() == j.values.tolist()


def test_invert_joint_qubit_gives_signed_grid():
    s = BlochState(F(3, 5), F(3, 5), 0)
    sch = QubitScheme.exact(F(3, 5), F(4, 5))
    out = invert_joint(qubit_kernel(sch, "X"), qubit_kernel(sch, "Y"), observed_joint(s, sch))
    assert out.values.tolist() == [[(1 + x * s.sx + y * s.sy) / 4 for y in (1, -1)] for x in (1, -1)]
    assert out.cell(-1, -1) == F(-1, 20)


def random_rational_stochastic(rng, rows, cols):
    ints = rng.integers(0, 9, size=(rows, cols))
    ints[0] += 1  # never an all-zero column
    return np.array([[F(int(ints[i, j]), int(ints[:, j].sum())) for j in range(cols)] for i in range(rows)],
                    dtype=object)


def test_classical_forward_delta():
    m = ClassicalModel([F(1)], [[F(1)], [F(0)]], [[F(0)], [F(1)]], [1, -1], [1, -1])
    assert classical_forward(m).values.tolist() == [[0, 1], [0, 0]]


def test_classical_forward_two_lambda_mixture():
    X = [[F(1), F(0)], [F(0), F(1)]]
    m = ClassicalModel([F(1, 3), F(2, 3)], X, X, [0, 1], [0, 1])
    assert classical_forward(m).values.tolist() == [[F(1, 3), 0], [0, F(2, 3)]]


def test_classical_forward_random_models_are_distributions():
    rng = np.random.default_rng(3)
    for _ in range(50):
        nl = int(rng.integers(1, 5))
        w = random_rational_stochastic(rng, nl, 1)[:, 0]
        m = ClassicalModel(w, random_rational_stochastic(rng, 3, nl), random_rational_stochastic(rng, 4, nl),
                           [0, 1, 2], [0, 1, 2, 3])
        j = classical_forward(m)
        assert j.total() == 1
        assert all(v >= 0 for _, v, _ in j.cells())


def test_classical_model_validation():
    with pytest.raises(ValueError):
        ClassicalModel([F(1, 2), F(1, 3)], [[F(1), F(1)]], [[F(1), F(1)]], [0], [0])
    with pytest.raises(ValueError):
        ClassicalModel([F(1)], [[F(1, 2)], [F(1, 3)]], [[F(1)]], [0, 1], [0])


def test_negativity_examples():
    rep = negativity(uniform())
    assert not rep.is_nonclassical and rep.negative_mass == 0
    rep = negativity(nn_retrieve(number_distribution(Fock(7))).joint)
    assert rep.min_exact == -210 and rep.argmin == (2, 2)
    rep = negativity(nn_retrieve(number_distribution(PhotonAddedThermal(1, 1))).joint)
    assert rep.min_exact == F(-1, 9) and rep.argmin == (0, 0)


def test_negativity_honours_error_bound():
    j = JointGrid([[-1e-17, 0.5], [0.5, 1e-17]], [0, 1], [0, 1], FLOAT, True, np.full((2, 2), 1e-16))
    rep = negativity(j)
    assert rep.min_value < 0 and not rep.is_nonclassical and rep.negative_mass == 0
    j = JointGrid([[-1e-3, 0.5], [0.5, 1e-3]], [0, 1], [0, 1], FLOAT, True, np.full((2, 2), 1e-16))
    assert negativity(j).is_nonclassical


fr = st.fractions(-3, 3, max_denominator=12)


def _normalised_columns(rows):
    # append a last row so that every column sums to 1
    return [list(r) for r in rows] + [[1 - sum(c, F(0)) for c in zip(*rows)]]


@given(st.lists(st.lists(fr, min_size=3, max_size=3), min_size=2, max_size=2),
       st.lists(st.lists(fr, min_size=2, max_size=2), min_size=3, max_size=3),
       st.lists(st.lists(fr, min_size=2, max_size=2), min_size=1, max_size=1))
def test_joint_inversion_commutes_and_is_marginal_consistent(kx, g, ky):
    KX = InversionKernel(_normalised_columns(kx), [0, 1, 2], [0, 1, 2], RATIONAL)
    KY = InversionKernel(_normalised_columns(ky), [0, 1], [0, 1], RATIONAL)
    j = JointGrid(g, [0, 1, 2], [0, 1], RATIONAL, True)
    out = invert_joint(KX, KY, j)
    # row kernel first, then column kernel, equals the other order
    rows_first = invert_joint(identity_kernel([0, 1, 2]), KY, invert_joint(KX, identity_kernel([0, 1]), j))
    cols_first = invert_joint(KX, identity_kernel([0, 1]), invert_joint(identity_kernel([0, 1, 2]), KY, j))
    assert rows_first.values.tolist() == cols_first.values.tolist() == out.values.tolist()
    mx, my = marginals(j)
    ox, oy = marginals(out)
    assert list(ox.values) == list(invert_marginal(KX, mx).values)
    assert list(oy.values) == list(invert_marginal(KY, my).values)


def test_joint_grid_json_round_trip():
    j = nn_retrieve(number_distribution(Fock(3))).joint
    back = JointGrid.from_json(j.to_json())
    assert back.values.tolist() == j.values.tolist()
    assert back.mode == RATIONAL and back.signed
    doc = json.loads(j.to_json())
    assert doc["schema"].startswith("jointnc.grid/")


def test_joint_grid_float_json_and_csv():
    j = JointGrid([[0.25, 0.75]], ["a"], [0, 1], FLOAT, False, [[1e-17, 2e-17]])
    back = JointGrid.from_json(j.to_json())
    assert back.values.tolist() == [[0.25, 0.75]]
    assert back.errors.tolist() == [[1e-17, 2e-17]]
    csv = j.to_csv()
    assert "0.25" in csv and "0,1" in csv.replace(" ", "")


def test_unsigned_grid_rejects_negative():
    with pytest.raises(ValueError):
        JointGrid([[F(-1), F(2)]], [0], [0, 1])
