"""Fourier upper bound for W1(mu_n, mu) and Monte Carlo checks of its ingredients.

Basis functions are ``e_k^R(x) = exp(i pi k.x / (2R))`` on the box
[-2R, 2R]^d. The bound for a fixed empirical measure reads

    W1(mu_n, mu) <~ R (log J)^d / J            (Fourier truncation)
                  + M^q R^(1-q)                 (tail of mu outside K)
                  + int_{K^c} |x| dmu_n + R mu_n(K^c)
                  + R (sum_{0<|k|_inf<=J} |mu(e_k^R) - mu_n(e_k^R)|^2 / |k|_inf^2)^(1/2)

with K = [-R, R]^d. The constants hidden in ``<~`` are explicit entries of
``constants_used`` (default 1); :func:`calibrate` returns a separate
multiplier fitted on a calibration grid.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .kernels import (GaussianAR, KernelSpec, MomentParams, contraction_params, exact_characteristic,
                      invariant_reference, moment_params, simulate)
from .measures import EmpiricalMeasure, tail_stats

_CHUNK = 1 << 21


def _as_freq(k) -> np.ndarray:
    return np.atleast_1d(np.asarray(k, dtype=np.int64))


def sup_norm(k) -> int:
    return int(np.abs(_as_freq(k)).max())


def coefficient_table(points: np.ndarray, weights: np.ndarray, ks: np.ndarray, r: float) -> np.ndarray:
    """sum_i w_i exp(i pi k.x_i / (2r)) for every row k of ``ks``."""
    points = np.asarray(points, dtype=float).reshape(len(points), -1)
    ks = np.asarray(ks, dtype=float).reshape(-1, points.shape[1])
    out = np.empty(len(ks), dtype=complex)
    step = max(1, _CHUNK // max(1, len(points)))
    scale = math.pi / (2.0 * r)
    for start in range(0, len(ks), step):
        phase = points @ (scale * ks[start:start + step]).T
        out[start:start + step] = weights @ np.exp(1j * phase)
    return out


def empirical_coefficient(measure: EmpiricalMeasure, k, r: float) -> complex:
    """mu_n(e_k^r) = sum_i w_i exp(i pi k.x_i / (2r))."""
    if r <= 0:
        raise ValueError("r must be positive")
    k = _as_freq(k)
    if k.shape != (measure.dim,):
        raise ValueError("frequency vector must match the measure dimension")
    if not k.any():
        return 1.0 + 0.0j
    return complex(coefficient_table(measure.points, measure.weights, k[None, :], r)[0])


def frequencies(j_max: int, dim: int, half: bool = False) -> np.ndarray:
    """All k in Z^dim with 0 < |k|_inf <= j_max.

    With ``half`` only one of each pair {k, -k} is kept (first nonzero
    coordinate positive).
    """
    axis = np.arange(-j_max, j_max + 1)
    grid = np.array(np.meshgrid(*([axis] * dim), indexing="ij")).reshape(dim, -1).T
    grid = grid[np.any(grid != 0, axis=1)]
    if half:
        first = grid[np.arange(len(grid)), np.argmax(grid != 0, axis=1)]
        grid = grid[first > 0]
    return grid


def holder_bound(k, alpha: float, dim: int) -> float:
    """2^(1-alpha) pi^alpha dim^(alpha/2) |k|_inf^alpha, an upper bound on Hol_alpha(e_k)."""
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    norm = sup_norm(k)
    if norm == 0:
        raise ValueError("k = 0 has Hoelder constant 0; it is excluded")
    return 2.0 ** (1 - alpha) * math.pi**alpha * dim ** (alpha / 2) * norm**alpha


def holder_quotient_grid(k, alpha: float, dim: int, grid_points: int = 2048, n_pairs: int = 200_000,
                         seed: int = 0) -> float:
    """Largest |e_k(x) - e_k(y)| / |x - y|^alpha over grid pairs in [-1, 1]^dim.

    In one dimension every pair of the ``grid_points`` grid is used. In
    higher dimension ``n_pairs`` pairs are sampled: a uniform grid point plus
    an integer offset whose length is spread log-uniformly over all scales.
    """
    k = _as_freq(k).astype(float)
    h = 2.0 / (grid_points - 1)
    if dim == 1:
        x = np.linspace(-1.0, 1.0, grid_points)
        best = 0.0
        for start in range(0, grid_points, 256):
            xs = x[start:start + 256, None]
            diff = np.abs(xs - x[None, :])
            num = np.abs(np.exp(1j * math.pi * k[0] * xs) - np.exp(1j * math.pi * k[0] * x[None, :]))
            with np.errstate(divide="ignore", invalid="ignore"):
                q = np.where(diff > 0, num / diff**alpha, 0.0)
            best = max(best, float(q.max()))
        return best
    rng = np.random.default_rng(seed)
    base = rng.integers(0, grid_points, size=(n_pairs, dim))
    radius = np.exp(rng.uniform(0.0, math.log(grid_points), size=n_pairs))
    direction = rng.standard_normal((n_pairs, dim))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    offset = np.rint(direction * radius[:, None]).astype(np.int64)
    other = np.clip(base + offset, 0, grid_points - 1)
    x = -1.0 + h * base
    y = -1.0 + h * other
    dist = np.linalg.norm(x - y, axis=1)
    keep = dist > 0
    num = np.abs(np.exp(1j * math.pi * (x[keep] @ k)) - np.exp(1j * math.pi * (y[keep] @ k)))
    return float((num / dist[keep] ** alpha).max())


# --------------------------------------------------------------------------
# parameter schedule


@dataclass(frozen=True)
class BoundParams:
    j_max: int
    radius: float
    alpha: float
    dim: int
    n_eff: float | None = None

    def __post_init__(self):
        if self.j_max < 1:
            raise ValueError("J must be a positive integer")
        if not self.radius > 0.5:
            raise ValueError("R must exceed 1/2")
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")

    @property
    def box(self) -> tuple[float, float]:
        return (-self.radius, self.radius)


def radius_bracket(j: float, n_eff: float, dim: int) -> float:
    """(log J)^d / J + J^(d/2 - 1) sqrt(log J / n'); R balances R * bracket against R^(1-q)."""
    log_j = math.log(j)
    return log_j**dim / j + j ** (dim / 2 - 1) * math.sqrt(log_j / n_eff)


def optimal_j(n_eff: float, dim: int) -> int:
    log_n = math.log(n_eff)
    if dim >= 3:
        return math.floor(log_n ** (2 - 1 / dim) * n_eff ** (1 / dim))
    if dim == 2:
        return math.floor(math.sqrt(n_eff) * log_n)
    return math.floor(math.sqrt(n_eff * log_n))


def choose_parameters(n: float, kappa: float, dim: int, q: float) -> BoundParams:
    """J, alpha = 1/log2 J and the radius minimising R * bracket + R^(1-q)."""
    if q <= 1:
        raise ValueError("q must exceed 1")
    n_eff = (1.0 - kappa) * n
    if n_eff < 3:
        raise ValueError(f"effective sample size n' = {n_eff:g} is below 3")
    j = optimal_j(n_eff, dim)
    if j < 2:
        raise ValueError(f"n' = {n_eff:g} too small: J = {j}")
    alpha = 1.0 / math.log2(j)
    radius = (q - 1) ** (1 / q) * radius_bracket(j, n_eff, dim) ** (-1 / q)
    if radius <= 0.5:
        raise ValueError(f"n' = {n_eff:g} too small: R = {radius:g} <= 1/2")
    return BoundParams(j, radius, alpha, dim, n_eff)


def precondition_holds(n: float, kappa: float, dim: int, q: float) -> bool:
    """n' >= 1/(1 - kappa^alpha) for the scheduled alpha."""
    try:
        p = choose_parameters(n, kappa, dim, q)
    except ValueError:
        return False
    return p.n_eff >= 1.0 / (1.0 - kappa**p.alpha)


def precondition_threshold(kappa: float, dim: int, q: float, n_max: float = 1e15, points: int = 4000) -> float:
    """Smallest n on a log grid up to ``n_max`` beyond which the precondition always holds.

    Returns ``inf`` when it still fails at ``n_max``.
    """
    grid = np.geomspace(3.0 / (1.0 - kappa), n_max, points)
    ok = np.array([precondition_holds(n, kappa, dim, q) for n in grid])
    if not ok[-1]:
        return math.inf
    failing = np.flatnonzero(~ok)
    return float(grid[0] if len(failing) == 0 else grid[failing[-1] + 1])


def theory_rate(n_eff, dim: int, q: float):
    """((log n')^(d-2+1/d) / n'^(1/d))^(1-1/q) and its d = 1, 2 analogues."""
    n_eff = np.asarray(n_eff, dtype=float)
    log_n = np.log(n_eff)
    if dim >= 3:
        base = log_n ** (dim - 2 + 1 / dim) / n_eff ** (1 / dim)
    elif dim == 2:
        base = log_n / np.sqrt(n_eff)
    else:
        base = np.sqrt(log_n / n_eff)
    return base ** (1 - 1 / q)


# --------------------------------------------------------------------------
# reference coefficients


class ExactReference:
    """mu(e_k^R) from the closed-form characteristic function."""

    def __init__(self, kernel: KernelSpec, r: float):
        if not isinstance(kernel, GaussianAR):
            exact_characteristic(kernel, np.ones(kernel.dim, dtype=int), r)
        self.kernel = kernel
        self.r = r

    def __call__(self, k) -> complex:
        return exact_characteristic(self.kernel, k, self.r)

    def table(self, ks: np.ndarray) -> np.ndarray:
        k2 = np.sum(np.asarray(ks, dtype=float) ** 2, axis=1)
        return np.exp(-math.pi**2 * k2 * self.kernel.stationary_variance / (8 * self.r**2)).astype(complex)

    def std_errors(self, ks: np.ndarray) -> np.ndarray:
        return np.zeros(len(ks))


class SampleReference:
    """mu(e_k^R) estimated from a long reference sample of the invariant law."""

    def __init__(self, sample: EmpiricalMeasure, r: float):
        self.sample = sample
        self.r = r

    @classmethod
    def for_kernel(cls, kernel: KernelSpec, n: int, r: float, seed: int, factor: int = 100) -> SampleReference:
        return cls(invariant_reference(kernel, factor * n, seed, stream=(7,)), r)

    def __call__(self, k) -> complex:
        return empirical_coefficient(self.sample, k, self.r)

    def table(self, ks: np.ndarray) -> np.ndarray:
        return coefficient_table(self.sample.points, self.sample.weights, ks, self.r)

    def std_errors(self, ks: np.ndarray) -> np.ndarray:
        values = self.table(ks)
        return np.sqrt(np.clip(1.0 - np.abs(values) ** 2, 0.0, None) / len(self.sample))


# --------------------------------------------------------------------------
# the bound


DEFAULT_CONSTANTS = {"truncation": 1.0, "mu_tail": 1.0, "empirical_tail": 1.0, "fourier": 1.0}


@dataclass
class BoundReport:
    truncation_term: float
    mu_tail_term: float
    empirical_tail_term: float
    fourier_term: float
    total: float
    params: BoundParams
    constants_used: dict = field(default_factory=dict)
    reference_error: float = 0.0
    calibration: float = 1.0

    @property
    def calibrated_total(self) -> float:
        return self.calibration * self.total

    def to_dict(self) -> dict:
        out = asdict(self)
        out["calibrated_total"] = self.calibrated_total
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _lookup(reference, ks: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if hasattr(reference, "table"):
        values = reference.table(ks)
        errors = reference.std_errors(ks) if hasattr(reference, "std_errors") else np.zeros(len(ks))
        return np.asarray(values, dtype=complex), np.asarray(errors, dtype=float)
    return np.array([complex(reference(k)) for k in ks]), np.zeros(len(ks))


def w1_upper_bound(measure: EmpiricalMeasure, reference_coeffs: Callable, params: BoundParams,
                   moments: MomentParams, constants: dict | None = None,
                   max_frequencies: int = 5_000_000) -> BoundReport:
    """Evaluate the four-term upper bound on W1(measure, mu).

    ``reference_coeffs`` maps a frequency k to mu(e_k^R) at R =
    ``params.radius``; objects with ``table``/``std_errors`` methods are
    evaluated in batch and their standard errors widen the Fourier term
    (3 standard errors, Minkowski).
    """
    if measure.dim != params.dim:
        raise ValueError("measure and parameters disagree on the dimension")
    c = dict(DEFAULT_CONSTANTS)
    c.update(constants or {})
    r, j, d = params.radius, params.j_max, params.dim
    if (2 * j + 1) ** d // 2 > max_frequencies:
        raise ValueError(f"{(2 * j + 1) ** d} frequencies exceed the limit {max_frequencies}")

    ks = frequencies(j, d, half=True)
    delta = coefficient_table(measure.points, measure.weights, ks, r)
    mu_k, mu_err = _lookup(reference_coeffs, ks)
    norms2 = np.max(np.abs(ks), axis=1).astype(float) ** 2
    # each k stands for the pair {k, -k}
    fourier_sum = 2.0 * np.sum(np.abs(mu_k - delta) ** 2 / norms2)
    error_sum = 2.0 * np.sum((3.0 * mu_err) ** 2 / norms2)
    reference_error = r * math.sqrt(error_sum)

    tails = tail_stats(measure, r)
    truncation = c["truncation"] * r * math.log(j) ** d / j
    mu_tail = c["mu_tail"] * moments.big_m**moments.q * r ** (1 - moments.q)
    emp_tail = c["empirical_tail"] * (tails.first_moment_outside + r * tails.mass_outside)
    fourier = c["fourier"] * (r * math.sqrt(fourier_sum) + reference_error)
    used = dict(c, moment_order=moments.q, moment_bound=moments.big_m)
    return BoundReport(truncation, mu_tail, emp_tail, fourier, truncation + mu_tail + emp_tail + fourier,
                       params, used, reference_error)


def calibrate(reports: Sequence[BoundReport], measured: Sequence[float]) -> float:
    """Smallest multiplier >= 1 making every report dominate its measured W1."""
    ratios = [w / rep.total for rep, w in zip(reports, measured)]
    return max(1.0, max(ratios))


def coefficient_table_csv(ks: np.ndarray, values: np.ndarray) -> str:
    lines = []
    for k, v in zip(ks, values):
        lines.append(",".join([*(str(int(x)) for x in np.atleast_1d(k)), repr(float(v.real)), repr(float(v.imag))]))
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# Monte Carlo checks


def _reference_for(kernel: KernelSpec, r: float, n: int, seed: int):
    if isinstance(kernel, GaussianAR):
        return ExactReference(kernel, r)
    return SampleReference.for_kernel(kernel, n, r, seed)


@dataclass(frozen=True)
class VarianceCheck:
    k: tuple[int, ...]
    n: int
    alpha: float
    lhs: float
    lhs_se: float
    rhs_shape: float

    @property
    def ratio(self) -> float:
        return self.lhs / self.rhs_shape


def coefficient_variance_sweep(kernel: KernelSpec, ks: Sequence, alpha: float, n: int, reps: int, r: float,
                               seed: int = 0) -> list[VarianceCheck]:
    """E|mu_n(e_k^r) - mu(e_k^r)|^2 by Monte Carlo for several k from shared trajectories."""
    kappa = contraction_params(kernel).kappa
    if n < 1.0 / (1.0 - kappa**alpha):
        raise ValueError(f"n = {n} violates n >= 1/(1 - kappa^alpha) = {1 / (1 - kappa**alpha):.4g}")
    if reps < 100:
        raise ValueError("need reps >= 100")
    ks = np.array([_as_freq(k) for k in ks])
    reference = _reference_for(kernel, r, n, seed)
    mu_k, _ = _lookup(reference, ks)
    sq = np.empty((reps, len(ks)))
    weights = np.full(n, 1.0 / n)
    for rep in range(reps):
        traj = simulate(kernel, n, seed, stream=(rep,))
        sq[rep] = np.abs(coefficient_table(traj.points, weights, ks, r) - mu_k) ** 2
    out = []
    for i, k in enumerate(ks):
        rhs = sup_norm(k) ** (2 * alpha) / (n * (1.0 - kappa**alpha))
        out.append(VarianceCheck(tuple(int(v) for v in k), n, alpha, float(sq[:, i].mean()),
                                 float(sq[:, i].std(ddof=1) / math.sqrt(reps)), rhs))
    return out


def coefficient_variance_check(kernel: KernelSpec, k, alpha: float, n: int, reps: int, r: float,
                               seed: int = 0) -> VarianceCheck:
    return coefficient_variance_sweep(kernel, [k], alpha, n, reps, r, seed)[0]


@dataclass
class MixingReport:
    k: tuple[int, ...]
    alpha: float
    times: np.ndarray
    bias: np.ndarray
    bias_se: np.ndarray
    bias_bound: np.ndarray
    covariance: np.ndarray
    covariance_se: np.ndarray
    covariance_bound: np.ndarray
    decay_rate: float
    kappa_alpha: float
    constants: dict

    @property
    def bias_ok(self) -> bool:
        return bool(np.all(self.bias <= self.bias_bound + 3 * self.bias_se))

    @property
    def covariance_ok(self) -> bool:
        return bool(np.all(np.abs(self.covariance) <= self.covariance_bound + 3 * self.covariance_se))

    @property
    def passed(self) -> bool:
        return self.bias_ok and self.covariance_ok


def mixing_bound_check(kernel: KernelSpec, k, alpha: float, n_max: int, reps: int, r: float,
                       seed: int = 0, q: float = 2.0) -> MixingReport:
    """Bias and covariance of e_k^r along the chain against the geometric bounds.

    bias(n)    <= 2 M^alpha D^alpha kappa^(alpha n) Hol
    |Cov(m,n)| <= 8 M^alpha D^alpha kappa^(alpha |m-n|) ||e_k||_inf Hol

    with Hol = Hol_alpha(e_k) / (2r)^alpha and M the moment bound of the
    chain (the constants reduce to 2 and 8 when M = 1).
    """
    if reps < 100:
        raise ValueError("need reps >= 100")
    k = _as_freq(k)
    cp = contraction_params(kernel)
    big_m = moment_params(kernel, q).big_m
    hol = holder_bound(k, alpha, kernel.dim) / (2 * r) ** alpha
    reference = _reference_for(kernel, r, n_max, seed)
    mu_k = _lookup(reference, k[None, :])[0][0]

    values = np.empty((reps, n_max), dtype=complex)
    scale = math.pi / (2 * r)
    for rep in range(reps):
        traj = simulate(kernel, n_max, seed, stream=(rep,))
        values[rep] = np.exp(1j * scale * (traj.points @ k))
    times = np.arange(1, n_max + 1)
    mean = values.mean(axis=0)
    bias = np.abs(mean - mu_k)
    bias_se = np.sqrt(values.real.var(axis=0, ddof=1) + values.imag.var(axis=0, ddof=1)) / math.sqrt(reps)
    c_bias = 2.0 * big_m**alpha
    c_cov = 8.0 * big_m**alpha
    bias_bound = c_bias * cp.big_d**alpha * cp.kappa ** (alpha * times) * hol

    centred = values - mean
    cov = centred.T @ centred.conj() / (reps - 1)
    prods = centred[:, :, None] * centred.conj()[:, None, :]
    cov_se = np.sqrt(prods.real.var(axis=0, ddof=1) + prods.imag.var(axis=0, ddof=1)) / math.sqrt(reps)
    lags = np.abs(times[:, None] - times[None, :])
    cov_bound = c_cov * cp.big_d**alpha * cp.kappa ** (alpha * lags) * 1.0 * hol

    significant = bias > 3 * bias_se
    decay = math.nan
    idx = np.flatnonzero(significant)
    if len(idx) >= 2:
        slope = np.polyfit(times[idx], np.log(bias[idx]), 1)[0]
        decay = float(math.exp(slope))
    return MixingReport(tuple(int(v) for v in k), alpha, times, bias, bias_se, bias_bound, cov, cov_se,
                        cov_bound, decay, cp.kappa**alpha,
                        {"bias": c_bias, "covariance": c_cov, "moment_bound": big_m, "holder": hol})


# --------------------------------------------------------------------------
# truncation error of Fourier partial sums


def lattice_distance(r: float) -> Callable[[np.ndarray], np.ndarray]:
    """y -> dist(y, 4r Z^d): 1-Lipschitz, periodic on [-2r, 2r]^d."""
    period = 4.0 * r

    def f(y):
        wrapped = y - period * np.round(y / period)
        return np.sqrt(np.sum(wrapped**2, axis=-1))

    f.__name__ = "lattice_distance"
    return f


def coordinate_triangle(r: float, axis: int = 0) -> Callable[[np.ndarray], np.ndarray]:
    """y -> |y_axis| extended periodically from [-2r, 2r]."""
    period = 4.0 * r

    def f(y):
        t = y[..., axis]
        return np.abs(t - period * np.round(t / period))

    f.__name__ = "triangle"
    return f


def constant_function(value: float = 1.0) -> Callable[[np.ndarray], np.ndarray]:
    def f(y):
        return np.full(y.shape[:-1], value)

    f.__name__ = "constant"
    return f


def periodic_sine(r: float) -> Callable[[np.ndarray], np.ndarray]:
    """y -> (2r/pi) sin(pi y_1 / (2r)); a single Fourier mode."""

    def f(y):
        return (2 * r / math.pi) * np.sin(math.pi * y[..., 0] / (2 * r))

    f.__name__ = "sine"
    return f


@dataclass
class TruncationReport:
    j_values: list
    sup_errors: dict
    shape_constant: float
    radius: float
    dim: int

    def errors(self, name: str) -> list:
        return self.sup_errors[name]


def partial_sum_error(f: Callable, j: int, r: float, dim: int, grid_power: int) -> float:
    """sup over the grid of |F_J g - g| for g(x) = f(2 r x) on [-1, 1)^dim."""
    n = 2**grid_power
    if n <= 2 * j:
        raise ValueError("grid too coarse for the requested J")
    axis = -1.0 + 2.0 * np.arange(n) / n
    mesh = np.stack(np.meshgrid(*([axis] * dim), indexing="ij"), axis=-1)
    g = f(2 * r * mesh)
    coeffs = np.fft.fftn(g)
    freq = np.abs(np.fft.fftfreq(n, d=1.0 / n))
    mask = np.ones([n] * dim, dtype=bool)
    for ax in range(dim):
        shape = [1] * dim
        shape[ax] = n
        mask &= (freq <= j).reshape(shape)
    approx = np.fft.ifftn(coeffs * mask).real
    return float(np.abs(approx - g).max())


def truncation_error_check(j_values: Sequence[int], r: float, dim: int, test_functions: dict | None = None,
                           grid_power: int | None = None) -> TruncationReport:
    """Sup-norm error of truncated Fourier series and the fitted constant c in
    error <= c R (log J)^d / J (maximum over functions and J >= 2)."""
    if dim not in (1, 2):
        raise ValueError("truncation check is limited to dim <= 2")
    if test_functions is None:
        test_functions = {"constant": constant_function(), "lattice_distance": lattice_distance(r),
                          "triangle": coordinate_triangle(r)}
    j_values = [int(j) for j in j_values]
    if grid_power is None:
        target = 32 * max(j_values) if dim == 1 else 8 * max(j_values)
        grid_power = max(6, math.ceil(math.log2(target)))
    errors = {name: [partial_sum_error(f, j, r, dim, grid_power) for j in j_values]
              for name, f in test_functions.items()}
    shape = 0.0
    for errs in errors.values():
        for j, e in zip(j_values, errs):
            if j >= 2:
                shape = max(shape, e / (r * math.log(j) ** dim / j))
    return TruncationReport(j_values, errors, shape, r, dim)
