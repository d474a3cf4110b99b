import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from markov_w1 import fourier as fr
from markov_w1.kernels import GaussianAR, MomentParams, UniformContraction, exact_characteristic, moment_params, simulate
from markov_w1.measures import EmpiricalMeasure, empirical_from
from markov_w1.rng import make_rng


def j_oracle(n_eff, dim):
    # independent high-precision evaluation of the J schedule
    mpmath.mp.dps = 50
    n = mpmath.mpf(n_eff)
    log_n = mpmath.log(n)
    if dim >= 3:
        value = log_n ** (2 - mpmath.mpf(1) / dim) * n ** (mpmath.mpf(1) / dim)
    elif dim == 2:
        value = mpmath.sqrt(n) * log_n
    else:
        value = mpmath.sqrt(n * log_n)
    return int(mpmath.floor(value))


def test_coefficient_trivial_cases():
    rng = make_rng(0)
    mu = EmpiricalMeasure.uniform(rng.normal(size=(7, 2)))
    assert fr.empirical_coefficient(mu, [0, 0], 1.3) == 1
    x = np.array([0.3, -1.2])
    value = fr.empirical_coefficient(EmpiricalMeasure.dirac(x), [2, 5], 0.7)
    assert value == pytest.approx(np.exp(1j * np.pi * (2 * 0.3 - 5 * 1.2) / 1.4), abs=1e-14)


def test_coefficient_modulus_at_most_one():
    rng = make_rng(1)
    for _ in range(1000):
        n, d = rng.integers(1, 20), rng.integers(1, 4)
        w = rng.random(n) + 1e-3
        mu = EmpiricalMeasure(rng.normal(scale=5, size=(n, d)), w / w.sum())
        k = rng.integers(-30, 31, size=d)
        assert abs(fr.empirical_coefficient(mu, k, rng.uniform(0.1, 10))) <= 1 + 1e-12


@given(st.integers(1, 30), st.integers(1, 3), st.integers(0, 1000), st.floats(0.1, 10))
def test_coefficient_conjugate_symmetry(n, dim, seed, r):
    rng = make_rng(seed)
    mu = EmpiricalMeasure.uniform(rng.normal(size=(n, dim)))
    k = rng.integers(-9, 10, size=dim)
    assert fr.empirical_coefficient(mu, -k, r) == fr.empirical_coefficient(mu, k, r).conjugate()


def test_holder_bound_values():
    assert fr.holder_bound([1], 1.0, 1) == pytest.approx(math.pi)
    assert fr.holder_bound([2, 0, -1, 1], 1.0, 4) == pytest.approx(4 * math.pi)
    assert fr.holder_quotient_grid([1], 0.5, 1) <= fr.holder_bound([1], 0.5, 1)
    with pytest.raises(ValueError):
        fr.holder_bound([0, 0], 0.5, 2)


@given(st.integers(1, 50), st.integers(1, 6), st.floats(0.01, 1.0))
def test_holder_bound_monotone(k, dim, alpha):
    base = fr.holder_bound([k] + [0] * (dim - 1), alpha, dim)
    assert fr.holder_bound([k + 1] + [0] * (dim - 1), alpha, dim) > base
    assert fr.holder_bound([k] + [0] * dim, alpha, dim + 1) > base


@pytest.mark.parametrize("dim,n_eff,expected", [(3, 10**6, 7954), (1, 100, 21), (2, 100, 46)])
def test_j_schedule(dim, n_eff, expected):
    # (ln 1e6)^(5/3) * 1e2 = 7954.48, so the floor is 7954
    assert j_oracle(n_eff, dim) == expected
    p = fr.choose_parameters(n_eff / (1 - 0.25), 0.25, dim, 10)
    assert p.j_max == expected
    assert p.alpha == pytest.approx(1 / math.log2(expected))
    assert p.n_eff == pytest.approx(n_eff)


@given(st.floats(10, 1e9), st.integers(1, 4), st.floats(0.0, 0.95))
def test_j_schedule_matches_oracle(n_eff, dim, kappa):
    p = fr.choose_parameters(n_eff / (1 - kappa), max(kappa, 1e-9), dim, 4)
    assert p.j_max == j_oracle(p.n_eff, dim)


def test_radius_formula():
    p = fr.choose_parameters(2000, 0.5, 2, 5)
    j, n = p.j_max, 1000
    bracket = math.log(j) ** 2 / j + math.sqrt(math.log(j) / n)
    assert p.radius == pytest.approx(4 ** 0.2 * bracket ** (-0.2))


def test_schedule_limits():
    grid = [1e2, 1e3, 1e4, 1e6, 1e9, 1e12]
    for dim in (1, 2, 3):
        ps = [fr.choose_parameters(n, 0.5, dim, 10) for n in grid]
        assert all(b.j_max > a.j_max for a, b in zip(ps, ps[1:]))
        assert all(b.alpha < a.alpha for a, b in zip(ps, ps[1:]))
        assert all(b.radius > a.radius for a, b in zip(ps, ps[1:]))


def test_schedule_errors():
    with pytest.raises(ValueError):
        fr.choose_parameters(5, 0.5, 1, 10)
    with pytest.raises(ValueError):
        fr.choose_parameters(1000, 0.5, 1, 1.0)


def test_precondition_threshold():
    for dim in (1, 2, 3):
        thr = fr.precondition_threshold(0.5, dim, 10)
        assert math.isfinite(thr)
        for n in np.geomspace(thr, 1e12, 40):
            assert fr.precondition_holds(n, 0.5, dim, 10)


def test_bound_params_invariants():
    with pytest.raises(ValueError):
        fr.BoundParams(10, 0.5, 0.5, 1)
    with pytest.raises(ValueError):
        fr.BoundParams(10, 2.0, 1.5, 1)


def test_fourier_term_vanishes_on_matching_reference():
    mu = EmpiricalMeasure.uniform(make_rng(2).normal(size=(50, 1)))
    params = fr.BoundParams(12, 3.0, 0.5, 1)
    ref = fr.SampleReference(mu, 3.0)
    rep = fr.w1_upper_bound(mu, lambda k: fr.empirical_coefficient(mu, k, 3.0), params, MomentParams(2, 1.0))
    assert rep.fourier_term == pytest.approx(0.0, abs=1e-12)
    assert rep.empirical_tail_term == 0
    batch = fr.w1_upper_bound(mu, ref, params, MomentParams(2, 1.0))
    assert batch.fourier_term - batch.reference_error == pytest.approx(0.0, abs=1e-12)


def test_report_terms_and_serialisation():
    kernel = GaussianAR(a=0.5, sigma=1.0)
    mu = empirical_from(simulate(kernel, 2000, seed=3))
    p = fr.choose_parameters(2000, 0.5, 1, 10)
    rep = fr.w1_upper_bound(mu, fr.ExactReference(kernel, p.radius), p, moment_params(kernel, 10))
    terms = [rep.truncation_term, rep.mu_tail_term, rep.empirical_tail_term, rep.fourier_term]
    assert all(t >= 0 for t in terms)
    assert rep.total == pytest.approx(sum(terms))
    assert rep.truncation_term == pytest.approx(p.radius * math.log(p.j_max) / p.j_max)
    data = fr.json.loads(rep.to_json())
    assert data["params"]["j_max"] == p.j_max and data["constants_used"]["fourier"] == 1.0
    scalar = fr.w1_upper_bound(mu, lambda k: exact_characteristic(kernel, k, p.radius), p, moment_params(kernel, 10))
    assert scalar.total == pytest.approx(rep.total, rel=1e-12)


def test_reference_must_exist():
    with pytest.raises(ValueError):
        fr.ExactReference(UniformContraction(), 1.0)


def test_sample_reference_folds_error():
    kernel = UniformContraction(kappa=0.5)
    mu = empirical_from(simulate(kernel, 500, seed=1))
    p = fr.choose_parameters(500, 0.5, 1, 10)
    ref = fr.SampleReference.for_kernel(kernel, 500, p.radius, seed=1)
    assert len(ref.sample) == 100 * 500
    rep = fr.w1_upper_bound(mu, ref, p, moment_params(kernel, 10))
    assert rep.reference_error > 0 and rep.fourier_term > rep.reference_error


def test_calibrate_never_shrinks():
    class R:
        def __init__(self, total):
            self.total = total

    assert fr.calibrate([R(1.0), R(2.0)], [0.5, 1.0]) == 1.0
    assert fr.calibrate([R(1.0), R(2.0)], [1.5, 1.0]) == 1.5


def test_coefficient_csv():
    ks = fr.frequencies(2, 1)
    text = fr.coefficient_table_csv(ks, np.exp(1j * ks[:, 0]))
    first = text.splitlines()[0].split(",")
    assert first[0] == "-2" and float(first[1]) == math.cos(-2)


def test_frequencies():
    ks = fr.frequencies(3, 2)
    assert len(ks) == 48 and not np.any(np.all(ks == 0, axis=1))
    half = fr.frequencies(3, 2, half=True)
    assert len(half) == 24
    assert {tuple(k) for k in half} | {tuple(-k) for k in half} == {tuple(k) for k in ks}


def test_variance_iid_identity():
    kernel = GaussianAR(a=0.0, sigma=1.0)
    check = fr.coefficient_variance_check(kernel, [3], 1.0, 1000, 400, 2.0, seed=5)
    phi = exact_characteristic(kernel, [3], 2.0).real
    assert abs(check.lhs - (1 - phi**2) / 1000) <= 3 * check.lhs_se
    assert check.lhs >= 0 and check.ratio == check.lhs / check.rhs_shape


def test_variance_precondition():
    with pytest.raises(ValueError):
        fr.coefficient_variance_check(GaussianAR(a=0.9), [1], 0.1, 5, 100, 1.0)
    with pytest.raises(ValueError):
        fr.coefficient_variance_check(GaussianAR(a=0.5), [1], 1.0, 100, 10, 1.0)


def test_mixing_examples():
    rep = fr.mixing_bound_check(GaussianAR(a=0.5, init="point:3"), [1], 0.5, 21, 4000, 1.0, seed=2)
    assert rep.passed
    assert rep.decay_rate <= rep.kappa_alpha
    # equal times: covariance is the variance, bounded by the lag-0 constant
    assert np.allclose(np.diag(rep.covariance).imag, 0, atol=1e-12)
    assert np.all(np.diag(rep.covariance).real <= np.diag(rep.covariance_bound))
    iid = fr.mixing_bound_check(GaussianAR(a=0.0, init="stationary"), [1], 1.0, 3, 2000, 1.0, seed=3)
    assert iid.bias[0] <= 3 * iid.bias_se[0]


def test_truncation_examples():
    rep = fr.truncation_error_check([8, 16, 32, 64, 128, 256, 512, 1024], 0.5, 1)
    assert max(rep.errors("constant")) < 1e-12
    tri = rep.errors("triangle")
    assert all(b < a for a, b in zip(tri, tri[1:]))
    for j, e in zip(rep.j_values, tri):
        assert e <= rep.shape_constant * 0.5 * math.log(j) / j
    f1 = fr.truncation_error_check([16], 1.0, 2, {"d": fr.lattice_distance(1.0)})
    f2 = fr.truncation_error_check([16], 2.0, 2, {"d": fr.lattice_distance(2.0)}, grid_power=f1_power(16, 2))
    assert f2.errors("d")[0] == pytest.approx(2 * f1.errors("d")[0], rel=1e-9)
    with pytest.raises(ValueError):
        fr.truncation_error_check([8], 1.0, 3)


def f1_power(j, dim):
    return max(6, math.ceil(math.log2(8 * j if dim == 2 else 32 * j)))


def test_sine_is_single_mode():
    rep = fr.truncation_error_check([1, 4], 1.5, 1, {"sine": fr.periodic_sine(1.5)})
    assert max(rep.errors("sine")) < 1e-12
