import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from markov_w1.measures import EmpiricalMeasure
from markov_w1.rng import make_rng
from markov_w1.transport import (ConvergenceWarning, SizeCapError, clipped_linear, distance_to, projection,
                                 w1_1d, w1_assignment, w1_entropic, w1_exact, w1_lower_dual)

U = EmpiricalMeasure.uniform


def permutation_oracle(x, y):
    n = len(x)
    cost = np.linalg.norm(x[:, None, :] - y[None, :, :], axis=2)
    return min(cost[np.arange(n), list(p)].sum() for p in itertools.permutations(range(n))) / n


def random_measure(rng, n, dim, uniform=False):
    x = rng.normal(size=(n, dim))
    if uniform:
        return U(x)
    w = rng.random(n) + 0.05
    return EmpiricalMeasure(x, w / w.sum())


def test_w1_1d_examples():
    a = U(np.array([0.0, 1.0, 3.0]))
    assert w1_1d(a, a) == 0
    assert w1_1d(EmpiricalMeasure.dirac([0.0]), EmpiricalMeasure.dirac([1.0])) == 1
    assert w1_1d(U(np.array([0.0, 1.0])), U(np.array([0.5, 1.5]))) == 0.5
    with pytest.raises(ValueError):
        w1_1d(U(np.zeros((2, 2))), U(np.zeros((2, 2))))


def test_w1_exact_examples():
    x = make_rng(1).normal(size=(6, 2))
    assert w1_exact(U(x), U(x))[0] == 0
    value, plan = w1_exact(EmpiricalMeasure.dirac([0.0, 0.0]),
                           EmpiricalMeasure(np.array([[1.0, 0.0], [-1.0, 0.0]]), [0.5, 0.5]))
    assert value == pytest.approx(1.0, abs=1e-15)
    assert plan.mass.sum() == pytest.approx(1.0)


@pytest.mark.parametrize("dim", [1, 2, 3])
def test_w1_exact_matches_permutations(dim):
    rng = make_rng(20, dim)
    for _ in range(10):
        x, y = rng.normal(size=(8, dim)), rng.normal(size=(8, dim))
        assert abs(w1_exact(U(x), U(y))[0] - permutation_oracle(x, y)) <= 1e-9


def test_w1_exact_matches_assignment_large():
    rng = make_rng(3)
    x, y = rng.random((300, 2)), rng.random((300, 2))
    assert w1_exact(U(x), U(y))[0] == pytest.approx(w1_assignment(x, y), abs=1e-12)


@given(st.integers(1, 40), st.integers(1, 40), st.integers(1, 3), st.integers(0, 10_000))
def test_plan_feasible_and_certified(n1, n2, dim, seed):
    rng = make_rng(seed)
    a, b = random_measure(rng, n1, dim), random_measure(rng, n2, dim)
    value, plan = w1_exact(a, b)
    row_err, col_err = plan.marginal_errors()
    assert row_err <= 1e-9 and col_err <= 1e-9
    assert np.all(plan.mass >= 0)
    assert plan.recomputed_cost() == pytest.approx(value, abs=1e-12)
    cert = plan.certificate()
    assert cert["max_dual_violation"] <= 1e-9 and abs(cert["duality_gap"]) <= 1e-9


@given(st.integers(1, 60), st.integers(1, 60), st.integers(0, 10_000))
def test_1d_agreement(n1, n2, seed):
    rng = make_rng(seed)
    a, b = random_measure(rng, n1, 1), random_measure(rng, n2, 1)
    assert abs(w1_1d(a, b) - w1_exact(a, b)[0]) <= 1e-9


@given(st.integers(1, 15), st.integers(1, 3), st.integers(0, 10_000))
def test_metric_axioms(n, dim, seed):
    rng = make_rng(seed)
    a, b, c = (random_measure(rng, n, dim) for _ in range(3))
    ab, ba = w1_exact(a, b)[0], w1_exact(b, a)[0]
    assert abs(ab - ba) <= 1e-9
    assert w1_exact(a, c)[0] <= ab + w1_exact(b, c)[0] + 1e-9
    assert w1_exact(a, a)[0] == 0


@given(st.integers(2, 30), st.integers(1, 2), st.floats(-1, 1), st.integers(0, 10_000))
def test_one_atom_perturbation_is_lipschitz(n, dim, delta, seed):
    rng = make_rng(seed)
    x = rng.normal(size=(n, dim))
    ref = random_measure(rng, 25, dim)
    moved = x.copy()
    moved[0, 0] += delta
    change = abs(w1_exact(U(x), ref)[0] - w1_exact(U(moved), ref)[0])
    assert change <= abs(delta) / n + 1e-9


@given(st.integers(1, 20), st.integers(1, 20), st.integers(1, 3), st.integers(0, 10_000))
def test_duality_sandwich(n1, n2, dim, seed):
    rng = make_rng(seed)
    a, b = random_measure(rng, n1, dim), random_measure(rng, n2, dim)
    assert w1_lower_dual(a, b) <= w1_exact(a, b)[0] + 1e-12


def test_lower_dual_examples():
    d0, d1 = EmpiricalMeasure.dirac([0.0]), EmpiricalMeasure.dirac([1.0])
    assert w1_lower_dual(d0, d1, [projection(0, 1)]) == 1.0
    a = U(make_rng(2).normal(size=(10, 2)))
    assert w1_lower_dual(a, a) == 0.0


def test_family_members_are_lipschitz():
    rng = make_rng(4)
    x, y = rng.normal(size=(500, 3)), rng.normal(size=(500, 3))
    for f in (projection(1, 3), distance_to([1.0, 2.0, 0.0]), clipped_linear([1.0, -2.0, 0.5], -0.3, 0.7)):
        assert np.all(np.abs(f(x) - f(y)) <= np.linalg.norm(x - y, axis=1) + 1e-12)


def test_entropic_examples():
    d0, d1 = EmpiricalMeasure.dirac([0.0]), EmpiricalMeasure.dirac([1.0])
    assert w1_entropic(d0, d1, 0.1).value == pytest.approx(1.0, abs=1e-6)
    rng = make_rng(5)
    x = rng.normal(size=(50, 2))
    for eps in (0.01, 0.1, 1.0):
        assert 0 <= w1_entropic(U(x), U(x), eps).value <= eps * math.log(50) + 1e-6
    for seed in range(5):
        r = make_rng(6, seed)
        a, b = U(r.normal(size=(100, 1))), U(r.normal(size=(100, 1)) + 0.3)
        assert abs(w1_entropic(a, b, 1e-3).value - w1_1d(a, b)) <= 1e-2


def test_entropic_debias_reduces_blur():
    rng = make_rng(7)
    a, b = U(rng.random((300, 2))), U(rng.random((300, 2)))
    exact = w1_exact(a, b)[0]
    raw = w1_entropic(a, b, 0.05).value
    deb = w1_entropic(a, b, 0.05, debias=True).value
    assert abs(deb - exact) < abs(raw - exact)


def test_entropic_reports_nonconvergence():
    rng = make_rng(8)
    a, b = U(rng.random((50, 2))), U(rng.random((50, 2)))
    with pytest.warns(ConvergenceWarning):
        res = w1_entropic(a, b, 1e-3, max_iters=3)
    assert not res.converged and res.marginal_error > 1e-7


def test_size_cap_and_dimension_errors():
    a = U(np.arange(20.0)[:, None])
    with pytest.raises(SizeCapError):
        w1_exact(a, a, cap=10)
    with pytest.raises(ValueError):
        w1_exact(a, U(np.zeros((3, 2))))


def test_duplicates_merged_in_plan():
    a = U(np.array([[0.0], [0.0], [1.0]]))
    b = U(np.array([[2.0], [2.0]]))
    value, plan = w1_exact(a, b)
    assert len(plan.source) == 2 and len(plan.target) == 1
    assert value == pytest.approx(2 / 3 * 2 + 1 / 3)
    rows = [line.split(",") for line in plan.to_csv().strip().splitlines()]
    assert sum(float(r[2]) for r in rows) == pytest.approx(1.0)
