"""Verification experiments: rate sweeps, concentration tails, contraction
estimates and decay of W1 between pushed-forward measures.

Every experiment is a pure function of its arguments (including the seed).
:func:`run_experiment` wraps one in an :class:`ExperimentRecord` that holds
the full config, the raw per-replication values and summary statistics; a
record replays bit-for-bit with :func:`replay`.
"""
from __future__ import annotations

import json
import math
import os
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .fourier import theory_rate
from .kernels import (GaussianAR, KernelSpec, UniformContraction, contraction_params, invariant_reference,
                      kernel_from_mapping, kernel_to_config, parse_key_values, simulate)
from .measures import EmpiricalMeasure
from .rng import make_rng
from .transport import DEFAULT_CAP, SizeCapError, w1_1d, w1_entropic, w1_exact

WORKERS_ENV = "MARKOV_W1_WORKERS"
W1_METHODS = ("exact_1d", "network_simplex", "entropic")

# stream prefixes, so that no two random objects share a generator
_TRAJ, _REF, _MATCHED, _BOOT = 1, 2, 3, 4


def worker_count() -> int:
    """Number of worker processes: os.cpu_count() capped by $MARKOV_W1_WORKERS."""
    n = os.cpu_count() or 1
    cap = os.environ.get(WORKERS_ENV)
    if cap:
        n = min(n, max(1, int(cap)))
    return n


def parallel_map(func: Callable, tasks: Sequence) -> list:
    """``[func(t) for t in tasks]``, in worker processes when allowed; order is preserved."""
    workers = min(worker_count(), len(tasks))
    if workers <= 1:
        return [func(t) for t in tasks]
    with ProcessPoolExecutor(workers) as pool:
        return list(pool.map(func, tasks))


def kernel_to_mapping(kernel: KernelSpec) -> dict[str, str]:
    return parse_key_values(kernel_to_config(kernel))


def _mean(values) -> float:
    values = list(values)
    return math.fsum(values) / len(values)


# --------------------------------------------------------------------------
# rate sweep


@dataclass
class RateFit:
    n_grid: list
    mean_w1: list
    slope: float
    intercept: float
    slope_ci: tuple
    theory_exponent: float
    w1: np.ndarray
    bootstrap_se: list
    n_eff: list
    method: str
    reference: str
    ref_size: int | None
    epsilon: float | None
    fallback: bool
    bound_curve: list
    curve_constant: float

    @property
    def dominated(self) -> bool:
        """mean_w1 below the theoretical rate curve anchored at the smallest n."""
        return all(m <= c * (1 + 1e-12) for m, c in zip(self.mean_w1, self.bound_curve))

    def raw_rows(self) -> list:
        return [[int(n), rep, float(v)] for n, row in zip(self.n_grid, self.w1) for rep, v in enumerate(row)]


def theory_exponent(dim: int, q: float) -> float:
    return (1 / dim if dim >= 3 else 0.5) * (1 - 1 / q)


def _w1(method: str, a: EmpiricalMeasure, b: EmpiricalMeasure, epsilon: float, tol: float,
        debias: bool, cap: int) -> tuple[float, bool]:
    if method == "exact_1d":
        return w1_1d(a, b), False
    if method == "network_simplex":
        try:
            return w1_exact(a, b, cap=cap)[0], False
        except SizeCapError:
            if a.dim == 1:
                return w1_1d(a, b), True
            return w1_entropic(a, b, epsilon, tol=tol, debias=debias).value, True
    return w1_entropic(a, b, epsilon, tol=tol, debias=debias).value, False


def _rate_rep(task) -> tuple[list, bool]:
    kernel, n_grid, rep, seed, method, fixed_ref, epsilon, tol, debias, cap = task
    traj = simulate(kernel, max(n_grid), seed, stream=(_TRAJ, rep))
    matched = None
    if fixed_ref is None:
        matched = invariant_reference(kernel, max(n_grid), seed, stream=(_MATCHED, rep))
    values, fell_back = [], False
    for n in n_grid:
        mu_n = EmpiricalMeasure.uniform(traj.points[:n])
        ref = fixed_ref if fixed_ref is not None else EmpiricalMeasure.uniform(matched.points[:n])
        value, flag = _w1(method, mu_n, ref, epsilon, tol, debias, cap)
        values.append(value)
        fell_back |= flag
    return values, fell_back


def _fit_line(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    slope, intercept = np.polyfit(x, y, 1)
    return float(slope), float(intercept)


def rate_sweep(kernel: KernelSpec, n_grid: Sequence[int], reps: int, w1_method: str = "exact_1d",
               ref_size: int | None = None, seed: int = 0, *, q: float = 10.0, reference: str = "fixed",
               epsilon: float = 1e-2, entropic_tol: float = 1e-4, debias: bool = True,
               bootstrap: int = 2000, cap: int = DEFAULT_CAP) -> RateFit:
    """Mean W1(mu_n, reference) over ``reps`` trajectories and its log-log slope in n'.

    Each replication is one trajectory of length max(n_grid); mu_n uses its
    first n states. ``reference="fixed"`` compares against one invariant
    sample of size ``ref_size`` (default 100 max(n_grid), capped at ``cap``
    unless the 1D quantile solver is used); ``reference="matched"`` uses an
    independent invariant sample of the same size n per replication, which
    makes the measured quantity decay at the empirical-measure rate instead
    of flattening at the reference's own error.
    """
    n_grid = [int(n) for n in n_grid]
    if any(b <= a for a, b in zip(n_grid, n_grid[1:])) or n_grid[0] < 1:
        raise ValueError("n_grid must be strictly increasing positive integers")
    if w1_method not in W1_METHODS:
        raise ValueError(f"unknown w1 method {w1_method!r}")
    if w1_method == "exact_1d" and kernel.dim != 1:
        raise ValueError("exact_1d needs a one-dimensional kernel")
    if reference not in ("fixed", "matched"):
        raise ValueError("reference must be 'fixed' or 'matched'")
    if reps < 1:
        raise ValueError("reps must be positive")

    fallback = False
    fixed_ref = None
    if reference == "fixed":
        if ref_size is None:
            ref_size = 100 * max(n_grid)
            if w1_method != "exact_1d" and ref_size > cap:
                ref_size = cap
        elif w1_method == "network_simplex" and ref_size > cap:
            fallback = True
        fixed_ref = invariant_reference(kernel, int(ref_size), seed, stream=(_REF,))
    else:
        ref_size = None

    tasks = [(kernel, n_grid, rep, seed, w1_method, fixed_ref, epsilon, entropic_tol, debias, cap)
             for rep in range(reps)]
    results = parallel_map(_rate_rep, tasks)
    w1 = np.array([r[0] for r in results]).T  # (len(n_grid), reps)
    fallback |= any(r[1] for r in results)

    kappa = contraction_params(kernel).kappa
    n_eff = [(1 - kappa) * n for n in n_grid]
    mean_w1 = [_mean(row) for row in w1]
    log_n = np.log(n_eff)
    slope, intercept = _fit_line(log_n, np.log(mean_w1))

    rng = make_rng(seed, _BOOT)
    slopes, means = [], []
    for _ in range(bootstrap if reps > 1 else 0):
        idx = rng.integers(0, reps, reps)
        m = w1[:, idx].mean(axis=1)
        means.append(m)
        slopes.append(_fit_line(log_n, np.log(m))[0])
    if slopes:
        ci = (float(np.quantile(slopes, 0.025)), float(np.quantile(slopes, 0.975)))
        boot_se = list(np.std(means, axis=0, ddof=1))
    else:
        ci, boot_se = (math.nan, math.nan), [math.nan] * len(n_grid)

    shape = theory_rate(n_eff, kernel.dim, q)
    constant = mean_w1[0] / shape[0]
    return RateFit(n_grid, mean_w1, slope, intercept, ci, theory_exponent(kernel.dim, q), w1,
                   [float(s) for s in boot_se], n_eff, w1_method, reference, ref_size,
                   epsilon if w1_method == "entropic" or fallback else None, fallback,
                   [float(constant * s) for s in shape], float(constant))


# --------------------------------------------------------------------------
# concentration


PLUG_IN_NOTE = "mean W1 estimated from the same replications (plug-in, not bias-corrected)"


@dataclass
class ConcentrationReport:
    n: int
    reps: int
    mean_w1: float
    t_grid: list
    empirical_exceedance: list
    theoretical_bound: list
    binomial_se: list
    w1: np.ndarray
    mode: str
    c: float | None
    metric_scale: float
    kappa: float
    note: str = PLUG_IN_NOTE

    def violations(self, min_bound: float = 0.02, n_se: float = 2.0) -> list:
        """Indices t with bound >= min_bound and exceedance > bound + n_se * SE."""
        return [i for i, (e, b, s) in enumerate(zip(self.empirical_exceedance, self.theoretical_bound,
                                                    self.binomial_se))
                if b >= min_bound and e > b + n_se * s]

    def raw_rows(self) -> list:
        return [[self.n, rep, float(v)] for rep, v in enumerate(self.w1)]


def tail_bound(t, n: int, kappa: float, mode: str = "bounded", c: float | None = None) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if mode == "bounded":
        return np.exp(-2 * (1 - kappa) ** 2 * n * t**2)
    return np.exp(-n * t**2 * (1 - kappa) ** 2 / (2 * c))


def _conc_rep(task) -> float:
    kernel, n, rep, seed, ref, scale, method, cap = task
    mu_n = EmpiricalMeasure.uniform(simulate(kernel, n, seed, stream=(_TRAJ, rep)).points)
    if kernel.dim == 1:
        value = w1_1d(mu_n, ref)
    elif method == "entropic":
        value = w1_entropic(mu_n, ref, 1e-2, tol=1e-4, debias=True).value
    else:
        value = w1_exact(mu_n, ref, cap=cap)[0]
    return scale * value


def concentration_sweep(kernel: KernelSpec, n: int, reps: int, t_grid: Sequence[float], seed: int = 0,
                        mode: str = "bounded", c: float | None = None, ref_size: int | None = None,
                        method: str = "network_simplex", cap: int = DEFAULT_CAP) -> ConcentrationReport:
    """Replication frequencies of W1(mu_n, mu) >= mean + t against the sub-Gaussian bound.

    ``mode="bounded"`` needs a UniformContraction started inside [0, 1]^d;
    distances are scaled by 1/sqrt(d) so the state space has diameter 1.
    ``mode="t1"`` needs a GaussianAR; ``c`` defaults to sigma^2.
    """
    if mode == "bounded":
        if not isinstance(kernel, UniformContraction):
            raise ValueError("bounded mode needs a kernel on a set of diameter <= 1 (uniform-contraction)")
        law = kernel.init
        if law.kind == "gaussian" or (law.kind in ("point", "uniform") and not all(0 <= p <= 1 for p in law.params)):
            raise ValueError("bounded mode needs an initial law supported in [0, 1]^d")
        scale = 1.0 / math.sqrt(kernel.dim)
        c = None
    elif mode == "t1":
        if not isinstance(kernel, GaussianAR):
            raise ValueError("t1 mode needs a Gaussian transition kernel (gaussian-ar)")
        c = kernel.sigma**2 if c is None else float(c)
        if c <= 0:
            raise ValueError("the T1 constant c must be positive")
        scale = 1.0
    else:
        raise ValueError(f"unknown mode {mode!r}")
    t_grid = [float(t) for t in t_grid]
    if any(t < 0 for t in t_grid):
        raise ValueError("t_grid entries must be nonnegative")
    if reps < 2:
        raise ValueError("need at least 2 replications")

    if ref_size is None:
        ref_size = 100 * n if kernel.dim == 1 or method == "entropic" else cap
    ref = invariant_reference(kernel, int(ref_size), seed, stream=(_REF,))
    tasks = [(kernel, n, rep, seed, ref, scale, method, cap) for rep in range(reps)]
    w1 = np.array(parallel_map(_conc_rep, tasks))
    mean = _mean(w1)
    kappa = contraction_params(kernel).kappa
    exceed = [float(np.mean(w1 >= mean + t)) for t in t_grid]
    bound = tail_bound(t_grid, n, kappa, mode, c)
    se = np.sqrt(bound * (1 - bound) / reps)
    return ConcentrationReport(n, reps, mean, t_grid, exceed, [float(b) for b in bound], [float(s) for s in se],
                               w1, mode, c, scale, kappa)


# --------------------------------------------------------------------------
# contraction estimate


@dataclass
class CurvatureEstimate:
    kappa_hat: float
    big_d_hat: float
    per_step_ratios: list
    pairs_used: list
    residuals: list
    w1: np.ndarray
    noise_floor: np.ndarray
    used: np.ndarray
    degenerate: bool
    coupling: str

    def raw_rows(self) -> list:
        rows = []
        for p, (w_row, f_row) in enumerate(zip(self.w1, self.noise_floor)):
            for s, (w, f) in enumerate(zip(w_row, f_row), 1):
                rows.append([p, s, float(w), float(f)])
        return rows


def _cloud_step(kernel: KernelSpec, x: np.ndarray, rng) -> np.ndarray:
    return kernel.coef * x + kernel.innovations(rng, x.shape)


def estimate_contraction(kernel: KernelSpec, pairs: Sequence, steps: int, m: int, seed: int = 0,
                         coupling: str = "independent", floor_factor: float = 10.0) -> CurvatureEstimate:
    """Fit W1(P^s(x, .), P^s(y, .)) ~ D |x - y| kappa^s from m-sample clouds.

    With ``coupling="independent"`` the two clouds use independent
    innovations, so each W1 estimate carries sampling error; its size is
    measured as W1 between two independent clouds from x, and steps where
    the signal is below ``floor_factor`` times that floor are left out of
    the fit. ``coupling="synchronous"`` drives both clouds with the same
    innovations.
    """
    if m < 1000:
        raise ValueError("need m >= 1000 draws per cloud")
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if coupling not in ("independent", "synchronous"):
        raise ValueError("coupling must be 'independent' or 'synchronous'")
    d = kernel.dim
    starts = []
    for x, y in pairs:
        x = np.broadcast_to(np.asarray(x, dtype=float), (d,))
        y = np.broadcast_to(np.asarray(y, dtype=float), (d,))
        if np.array_equal(x, y):
            raise ValueError("pairs must consist of distinct points")
        starts.append((x, y))
    if not starts:
        raise ValueError("need at least one pair")

    w1 = np.zeros((len(starts), steps))
    floor = np.zeros((len(starts), steps))
    for p, (x, y) in enumerate(starts):
        rng_x, rng_y, rng_f = (make_rng(seed, p, i) for i in range(3))
        cx = np.tile(x, (m, 1))
        cy = np.tile(y, (m, 1))
        cf = np.tile(x, (m, 1))
        for s in range(steps):
            if coupling == "synchronous":
                eta = kernel.innovations(rng_x, cx.shape)
                cx = kernel.coef * cx + eta
                cy = kernel.coef * cy + eta
            else:
                cx = _cloud_step(kernel, cx, rng_x)
                cy = _cloud_step(kernel, cy, rng_y)
            cf = _cloud_step(kernel, cf, rng_f)
            ex = EmpiricalMeasure.uniform(cx)
            w1[p, s] = w1_exact(ex, EmpiricalMeasure.uniform(cy))[0]
            floor[p, s] = w1_exact(ex, EmpiricalMeasure.uniform(cf))[0]

    dist0 = np.array([np.linalg.norm(x - y) for x, y in starts])
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = w1 / np.concatenate([dist0[:, None], w1[:, :-1]], axis=1)
    s_idx = np.broadcast_to(np.arange(1, steps + 1), w1.shape)
    used = (w1 > floor_factor * floor) & (w1 > 1e-12 * dist0[:, None])
    degenerate = len(np.unique(s_idx[used])) < 2
    residuals: list = []
    if degenerate:
        kappa_hat, big_d_hat = float(np.clip(np.nanmax(ratios[:, 0] if steps else 0.0), 0.0, 1.0)), 1.0
    else:
        y = np.log(w1[used]) - np.log(np.broadcast_to(dist0[:, None], w1.shape)[used])
        slope, intercept = _fit_line(s_idx[used].astype(float), y)
        kappa_hat, big_d_hat = math.exp(slope), math.exp(intercept)
        residuals = list(y - (intercept + slope * s_idx[used]))
    return CurvatureEstimate(kappa_hat, big_d_hat, [list(r) for r in ratios],
                             [(x.tolist(), y.tolist()) for x, y in starts], [float(r) for r in residuals],
                             w1, floor, used, degenerate, coupling)


# --------------------------------------------------------------------------
# decay of W1 between pushed-forward measures


@dataclass
class DecayReport:
    steps: np.ndarray
    w1: np.ndarray
    sampling_error: np.ndarray
    envelope: np.ndarray
    initial_w1: float
    big_d: float
    kappa: float

    @property
    def margins(self) -> np.ndarray:
        return self.envelope + 3 * self.sampling_error - self.w1

    @property
    def passed(self) -> bool:
        return bool(np.all(self.margins >= 0))

    def raw_rows(self) -> list:
        return [[int(s), float(w), float(e)] for s, w, e in zip(self.steps, self.w1, self.sampling_error)]


def _cloud(measure: EmpiricalMeasure, m: int) -> tuple[np.ndarray, np.ndarray]:
    points = np.repeat(measure.points, m, axis=0)
    weights = np.repeat(measure.weights / m, m)
    return points, weights / weights.sum()


def decay_check(kernel: KernelSpec, mu0: EmpiricalMeasure, nu0: EmpiricalMeasure, steps: int, m: int,
                seed: int = 0) -> DecayReport:
    """W1(mu0 P^s, nu0 P^s) for s = 1..steps against D kappa^s W1(mu0, nu0).

    Each atom carries ``m`` simulated paths. The sampling error at step s is
    the mean of W1 between two independent clouds of mu0 P^s and of nu0 P^s.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if mu0.dim != kernel.dim or nu0.dim != kernel.dim:
        raise ValueError("measures and kernel disagree on the dimension")
    cp = contraction_params(kernel)
    initial = w1_exact(mu0, nu0)[0]
    clouds = []
    for i, measure in enumerate((mu0, nu0, mu0, nu0)):
        pts, wts = _cloud(measure, m)
        clouds.append([pts, wts, make_rng(seed, i)])
    w1 = np.zeros(steps)
    err = np.zeros(steps)
    for s in range(steps):
        for c in clouds:
            c[0] = _cloud_step(kernel, c[0], c[2])
        mu, nu, mu2, nu2 = (EmpiricalMeasure(c[0], c[1]) for c in clouds)
        w1[s] = w1_exact(mu, nu)[0]
        err[s] = 0.5 * (w1_exact(mu, mu2)[0] + w1_exact(nu, nu2)[0])
    s_grid = np.arange(1, steps + 1)
    return DecayReport(s_grid, w1, err, cp.big_d * cp.kappa**s_grid * initial, initial, cp.big_d, cp.kappa)


# --------------------------------------------------------------------------
# records


def atomic_write(path: str | os.PathLike, text: str) -> None:
    """Write ``text`` to ``path`` via a temporary file and an atomic rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


@dataclass
class ExperimentRecord:
    kind: str
    config: dict
    seeds: list
    columns: list
    rows: list
    summary: dict
    wall_time: float = 0.0
    version: int = 1

    def to_json(self) -> str:
        return json.dumps({"kind": self.kind, "config": self.config, "seeds": self.seeds, "columns": self.columns,
                           "rows": self.rows, "summary": self.summary, "wall_time": self.wall_time,
                           "version": self.version}, indent=1)

    @classmethod
    def from_json(cls, text: str) -> ExperimentRecord:
        return cls(**json.loads(text))

    def to_csv(self) -> str:
        lines = [",".join(self.columns)]
        lines += [",".join(repr(v) for v in row) for row in self.rows]
        return "\n".join(lines) + "\n"

    def save(self, stem: str | os.PathLike) -> tuple[Path, Path]:
        """Write ``stem.json`` and ``stem.csv``."""
        stem = Path(stem)
        json_path, csv_path = stem.with_suffix(".json"), stem.with_suffix(".csv")
        atomic_write(csv_path, self.to_csv())
        atomic_write(json_path, self.to_json())
        return json_path, csv_path

    @classmethod
    def load(cls, path: str | os.PathLike) -> ExperimentRecord:
        return cls.from_json(Path(path).read_text())


def _measure_from_config(value) -> EmpiricalMeasure:
    return EmpiricalMeasure(np.asarray(value["points"], dtype=float), np.asarray(value["weights"], dtype=float))


def measure_to_config(measure: EmpiricalMeasure) -> dict:
    return {"points": measure.points.tolist(), "weights": measure.weights.tolist()}


def _json_ready(value):
    if isinstance(value, dict):
        return {k: _json_ready(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_ready(v) for v in value]
    if isinstance(value, np.generic):
        return value.item()
    return value


def _summary(kind: str, result) -> dict:
    if kind == "rate":
        return {"n_grid": result.n_grid, "mean_w1": result.mean_w1, "slope": result.slope,
                "intercept": result.intercept, "slope_ci": list(result.slope_ci),
                "theory_exponent": result.theory_exponent, "bootstrap_se": result.bootstrap_se,
                "bound_curve": result.bound_curve, "curve_constant": result.curve_constant,
                "dominated": result.dominated, "fallback": result.fallback, "epsilon": result.epsilon,
                "ref_size": result.ref_size}
    if kind == "concentration":
        return {"n": result.n, "reps": result.reps, "mean_w1": result.mean_w1, "t_grid": result.t_grid,
                "empirical_exceedance": result.empirical_exceedance,
                "theoretical_bound": result.theoretical_bound, "binomial_se": result.binomial_se,
                "mode": result.mode, "c": result.c, "metric_scale": result.metric_scale,
                "violations": result.violations(), "note": result.note}
    if kind == "curvature":
        return {"kappa_hat": result.kappa_hat, "big_d_hat": result.big_d_hat,
                "per_step_ratios": result.per_step_ratios, "pairs_used": result.pairs_used,
                "residuals": result.residuals, "degenerate": result.degenerate, "coupling": result.coupling}
    return {"initial_w1": result.initial_w1, "envelope": result.envelope.tolist(),
            "margins": result.margins.tolist(), "passed": result.passed, "big_d": result.big_d,
            "kappa": result.kappa}


COLUMNS = {"rate": ["n", "rep", "w1"], "concentration": ["n", "rep", "w1"],
           "curvature": ["pair", "step", "w1", "noise_floor"], "decay": ["step", "w1", "sampling_error"]}


def _call(kind: str, config: dict):
    args = dict(config)
    kernel = kernel_from_mapping(args.pop("kernel"))
    if kind == "rate":
        return rate_sweep(kernel, **args)
    if kind == "concentration":
        return concentration_sweep(kernel, **args)
    if kind == "curvature":
        return estimate_contraction(kernel, **args)
    if kind == "decay":
        args["mu0"] = _measure_from_config(args["mu0"])
        args["nu0"] = _measure_from_config(args["nu0"])
        return decay_check(kernel, **args)
    raise ValueError(f"unknown experiment kind {kind!r}")


def run_experiment(kind: str, config: dict) -> tuple[object, ExperimentRecord]:
    """Run experiment ``kind`` from a JSON-ready ``config`` (kernel given as a key/value mapping)."""
    config = _json_ready(config)
    if isinstance(config.get("kernel"), KernelSpec):
        config["kernel"] = kernel_to_mapping(config["kernel"])
    start = time.perf_counter()
    result = _call(kind, config)
    wall = time.perf_counter() - start
    record = ExperimentRecord(kind, config, [config.get("seed", 0)], COLUMNS[kind],
                              _json_ready(result.raw_rows()), _json_ready(_summary(kind, result)), wall)
    return result, record


def replay(record: ExperimentRecord) -> ExperimentRecord:
    return run_experiment(record.kind, record.config)[1]


def reproduces(record: ExperimentRecord) -> bool:
    """True when re-running the record's config gives identical raw values."""
    again = replay(record)
    return again.rows == record.rows and again.columns == record.columns
