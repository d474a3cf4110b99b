"""Catalog of contractive Markov kernels.

Both catalog kernels are affine autoregressions ``X' = c X + eta`` with
i.i.d. innovations ``eta``:

* ``GaussianAR``: ``X' = a X + sigma xi``, ``xi`` standard normal on R^dim.
* ``UniformContraction``: ``X' = kappa X + (1 - kappa) U``, ``U`` uniform on
  [0, 1]^dim.

Driving two copies with the same innovation gives the synchronous coupling
``|X' - Y'| = |c| |x - y|``, hence D = 1 and kappa = |c|.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from typing import Sequence

import numpy as np
from numba import njit
from scipy.special import gammaln

from .measures import EmpiricalMeasure
from .rng import check_seed, make_rng

KAPPA_FLOOR = 1e-6
BURN_IN_TOLERANCE = 1e-6


class UnsupportedKernelError(ValueError):
    pass


@dataclass(frozen=True)
class InitialLaw:
    """Law of X_0: ``point``, ``gaussian`` (mean, std), ``uniform`` (lo, hi) or ``stationary``."""

    kind: str = "point"
    params: tuple[float, ...] = (0.0,)

    def __post_init__(self):
        arity = {"point": None, "gaussian": 2, "uniform": 2, "stationary": 0}
        if self.kind not in arity:
            raise ValueError(f"unknown initial law {self.kind!r}")
        expected = arity[self.kind]
        if expected is not None and len(self.params) != expected:
            raise ValueError(f"initial law {self.kind!r} takes {expected} parameters")
        if self.kind == "point" and not self.params:
            raise ValueError("point initial law needs coordinates")

    @classmethod
    def parse(cls, text: str) -> InitialLaw:
        """Parse ``point:1,2`` / ``gaussian:0,1`` / ``uniform:0,1`` / ``stationary``."""
        kind, _, rest = text.strip().partition(":")
        params = tuple(float(v) for v in rest.split(",") if v.strip()) if rest else ()
        return cls(kind.strip(), params)

    def __str__(self) -> str:
        if not self.params:
            return self.kind
        return f"{self.kind}:" + ",".join(repr(float(p)) for p in self.params)


@dataclass(frozen=True)
class ContractionParams:
    big_d: float
    kappa: float

    def __post_init__(self):
        if self.big_d < 1:
            raise ValueError("D must be >= 1")
        if not 0 < self.kappa < 1:
            raise ValueError("kappa must lie in (0, 1)")

    def effective_n(self, n: float) -> float:
        return (1.0 - self.kappa) * n


@dataclass(frozen=True)
class MomentParams:
    q: float
    big_m: float

    def __post_init__(self):
        if self.q <= 1:
            raise ValueError("moment order q must exceed 1")
        if self.big_m <= 0:
            raise ValueError("moment bound M must be positive")


@dataclass(frozen=True)
class KernelSpec:
    dim: int = 1
    init: InitialLaw = field(default_factory=InitialLaw)

    variant = "abstract"

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValueError("dim must be a positive integer")
        if isinstance(self.init, str):
            object.__setattr__(self, "init", InitialLaw.parse(self.init))
        if self.init.kind == "point" and len(self.init.params) not in (1, self.dim):
            raise ValueError("point initial law must have 1 or dim coordinates")

    @property
    def coef(self) -> float:
        raise NotImplementedError

    def innovations(self, rng: np.random.Generator, size) -> np.ndarray:
        raise NotImplementedError

    def stationary_draws(self, rng: np.random.Generator, m: int) -> np.ndarray:
        raise UnsupportedKernelError(f"{self.variant} has no exact stationary sampler")

    def with_init(self, init: InitialLaw | str) -> KernelSpec:
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        values["init"] = InitialLaw.parse(init) if isinstance(init, str) else init
        return type(self)(**values)


@dataclass(frozen=True)
class GaussianAR(KernelSpec):
    a: float = 0.5
    sigma: float = 1.0

    variant = "gaussian-ar"

    def __post_init__(self):
        super().__post_init__()
        if not abs(self.a) < 1:
            raise ValueError("GaussianAR needs |a| < 1")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")

    @property
    def coef(self) -> float:
        return self.a

    @property
    def stationary_variance(self) -> float:
        """Per-coordinate variance sigma^2 / (1 - a^2) of the invariant Gaussian."""
        return self.sigma**2 / (1.0 - self.a**2)

    def innovations(self, rng, size):
        return self.sigma * rng.standard_normal(size)

    def stationary_draws(self, rng, m):
        return math.sqrt(self.stationary_variance) * rng.standard_normal((m, self.dim))


@dataclass(frozen=True)
class UniformContraction(KernelSpec):
    kappa: float = 0.5

    variant = "uniform-contraction"

    def __post_init__(self):
        super().__post_init__()
        if not 0 < self.kappa < 1:
            raise ValueError("UniformContraction needs kappa in (0, 1)")

    @property
    def coef(self) -> float:
        return self.kappa

    def innovations(self, rng, size):
        return (1.0 - self.kappa) * rng.random(size)


VARIANTS = {cls.variant: cls for cls in (GaussianAR, UniformContraction)}


@dataclass(frozen=True)
class Trajectory:
    kernel: KernelSpec
    seed: int
    points: np.ndarray
    x0: np.ndarray
    stream: tuple[int, ...] = ()

    def __len__(self) -> int:
        return len(self.points)


@njit(cache=True)
def _affine_orbit(coef, x0, innovations):
    n, d = innovations.shape
    out = np.empty((n, d))
    x = x0.copy()
    for t in range(n):
        for j in range(d):
            x[j] = coef * x[j] + innovations[t, j]
            out[t, j] = x[j]
    return out


def _as_state(kernel: KernelSpec, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1)
    if x.shape != (kernel.dim,):
        raise ValueError(f"state has shape {x.shape}, kernel dimension is {kernel.dim}")
    return x


def draw_initial(kernel: KernelSpec, rng: np.random.Generator, m: int | None = None) -> np.ndarray:
    """Draw X_0 ~ gamma_0 (one state, or ``m`` states stacked row-wise)."""
    count = 1 if m is None else m
    law = kernel.init
    d = kernel.dim
    if law.kind == "point":
        x = np.broadcast_to(np.asarray(law.params, dtype=float), (count, d)).copy()
    elif law.kind == "gaussian":
        mean, std = law.params
        x = mean + std * rng.standard_normal((count, d))
    elif law.kind == "uniform":
        lo, hi = law.params
        x = lo + (hi - lo) * rng.random((count, d))
    else:
        x = kernel.stationary_draws(rng, count)
    return x[0] if m is None else x


def step(kernel: KernelSpec, x, rng: np.random.Generator) -> np.ndarray:
    """One draw from P(x, .)."""
    x = _as_state(kernel, x)
    return kernel.coef * x + kernel.innovations(rng, (kernel.dim,))


def simulate(kernel: KernelSpec, n: int, seed: int, *, stream: Sequence[int] = (), x0=None) -> Trajectory:
    """Run the chain for ``n`` steps and return X_1, ..., X_n.

    X_0 is drawn from ``kernel.init`` unless ``x0`` is given. The result is
    bit-identical to drawing X_0 and then calling :func:`step` ``n`` times
    on the same generator.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    seed = check_seed(seed)
    rng = make_rng(seed, *stream)
    start = draw_initial(kernel, rng) if x0 is None else _as_state(kernel, x0)
    eta = kernel.innovations(rng, (n, kernel.dim))
    points = _affine_orbit(float(kernel.coef), np.ascontiguousarray(start, dtype=float), eta)
    return Trajectory(kernel, seed, points, start, tuple(int(s) for s in stream))


def push_forward(kernel: KernelSpec, x: np.ndarray, steps: int, rng: np.random.Generator) -> np.ndarray:
    """Advance a cloud of states (rows of ``x``) by ``steps`` independent transitions."""
    x = np.array(x, dtype=float)
    for _ in range(steps):
        x = kernel.coef * x + kernel.innovations(rng, x.shape)
    return x


def default_burn_in(kernel: KernelSpec) -> int:
    kappa = contraction_params(kernel).kappa
    return max(1, math.ceil(math.log(BURN_IN_TOLERANCE) / math.log(kappa)))


def invariant_reference(kernel: KernelSpec, m: int, seed: int, *, stream: Sequence[int] = (),
                        burn_in: int | None = None) -> EmpiricalMeasure:
    """Reference sample of size ``m`` from the invariant law.

    GaussianAR draws are exact. Other kernels run ``m`` independent chains
    from gamma_0 for ``burn_in`` steps; the result is flagged approximate.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    rng = make_rng(seed, *stream)
    if isinstance(kernel, GaussianAR):
        return EmpiricalMeasure.uniform(kernel.stationary_draws(rng, m))
    steps = default_burn_in(kernel) if burn_in is None else burn_in
    x = push_forward(kernel, draw_initial(kernel, rng, m), steps, rng)
    return EmpiricalMeasure.uniform(x, approximate=True)


def exact_characteristic(kernel: KernelSpec, k, r: float) -> complex:
    """mu(e_k^r) for e_k^r(x) = exp(i pi k.x / (2r)), in closed form."""
    if r <= 0:
        raise ValueError("r must be positive")
    k = np.atleast_1d(np.asarray(k))
    if not k.any():
        return 1.0 + 0.0j
    if not isinstance(kernel, GaussianAR):
        raise UnsupportedKernelError(f"no closed-form characteristic function for {kernel.variant}")
    if k.shape != (kernel.dim,):
        raise ValueError("frequency vector must match the kernel dimension")
    k2 = float(np.dot(k, k))
    return complex(math.exp(-math.pi**2 * k2 * kernel.stationary_variance / (8.0 * r * r)))


def contraction_params(kernel: KernelSpec, floor: float = KAPPA_FLOOR) -> ContractionParams:
    """Analytic (D, kappa) from the synchronous coupling; kappa is floored away from 0."""
    return ContractionParams(1.0, max(abs(kernel.coef), floor))


def _gaussian_norm_moment(dim: int, std: float, q: float) -> float:
    # (E|Z|^q)^(1/q) for Z ~ N(0, std^2 I_dim)
    if std == 0:
        return 0.0
    log_mq = 0.5 * q * math.log(2.0) + gammaln(0.5 * (dim + q)) - gammaln(0.5 * dim)
    return std * math.exp(log_mq / q)


def moment_params(kernel: KernelSpec, q: float) -> MomentParams:
    """A valid bound M >= sup_n (E|X_n|^q)^(1/q), via Minkowski on X_n = c^n X_0 + noise."""
    if isinstance(kernel, UniformContraction):
        law = kernel.init
        if law.kind == "stationary" or (law.kind == "uniform" and 0 <= law.params[0] <= law.params[1] <= 1):
            return MomentParams(q, math.sqrt(kernel.dim))
        if law.kind == "point" and all(0 <= p <= 1 for p in law.params):
            return MomentParams(q, math.sqrt(kernel.dim))
    if not isinstance(kernel, GaussianAR):
        raise UnsupportedKernelError(f"no analytic moment bound for {kernel.variant} with init {kernel.init}")
    std = math.sqrt(kernel.stationary_variance)
    stationary = _gaussian_norm_moment(kernel.dim, std, q)
    law = kernel.init
    if law.kind == "stationary":
        start = stationary
    elif law.kind == "point":
        start = float(np.linalg.norm(np.broadcast_to(law.params, (kernel.dim,))))
    elif law.kind == "gaussian":
        start = abs(law.params[0]) * math.sqrt(kernel.dim) + _gaussian_norm_moment(kernel.dim, abs(law.params[1]), q)
    else:
        start = max(abs(law.params[0]), abs(law.params[1])) * math.sqrt(kernel.dim)
    return MomentParams(q, max(start + stationary, 1e-12))


def analytic_drift(kernel: GaussianAR) -> tuple[float, float]:
    """(gamma, C) with (Pf)(x) = gamma f(x) + C exactly for f = |x|^2."""
    if not isinstance(kernel, GaussianAR):
        raise UnsupportedKernelError("analytic drift constants are only known for GaussianAR")
    return kernel.a**2, kernel.sigma**2 * kernel.dim


@dataclass(frozen=True)
class DriftReport:
    passed: bool
    worst_margin: float
    implied_sup: float
    probes: np.ndarray
    estimates: np.ndarray
    std_errors: np.ndarray
    margins: np.ndarray


def drift_check(kernel: KernelSpec, q: float, gamma: float, c: float, probes, m: int, seed: int) -> DriftReport:
    """Monte Carlo test of (Pf)(x) <= gamma f(x) + c for f(x) = |x|^q.

    All probes share the same ``m`` innovations (common random numbers). A
    probe passes when the estimate is within 3 standard errors of the bound.
    """
    if not 0 < gamma < 1:
        raise ValueError("gamma must lie in (0, 1)")
    probes = np.asarray(probes, dtype=float).reshape(-1, kernel.dim)
    if len(probes) == 0:
        raise ValueError("need at least one probe")
    if m < 2:
        raise ValueError("m must be >= 2")
    rng = make_rng(seed)
    eta = kernel.innovations(rng, (m, kernel.dim))
    estimates = np.empty(len(probes))
    errors = np.empty(len(probes))
    for i, x in enumerate(probes):
        values = np.linalg.norm(kernel.coef * x + eta, axis=1) ** q
        estimates[i] = values.mean()
        errors[i] = values.std(ddof=1) / math.sqrt(m)
    bound = gamma * np.linalg.norm(probes, axis=1) ** q + c
    margins = bound + 3.0 * errors - estimates
    return DriftReport(bool(np.all(margins >= 0)), float(margins.min()), c / (1.0 - gamma),
                       probes, estimates, errors, margins)


CONFIG_KEYS = ("variant", "a", "sigma", "kappa", "dim", "init")


def kernel_to_config(kernel: KernelSpec) -> str:
    lines = [f"variant = {kernel.variant}"]
    if isinstance(kernel, GaussianAR):
        lines += [f"a = {kernel.a!r}", f"sigma = {kernel.sigma!r}"]
    else:
        lines.append(f"kappa = {kernel.kappa!r}")
    lines += [f"dim = {kernel.dim}", f"init = {kernel.init}"]
    return "\n".join(lines) + "\n"


def kernel_from_mapping(values: dict) -> KernelSpec:
    unknown = set(values) - set(CONFIG_KEYS)
    if unknown:
        raise ValueError(f"unknown kernel key {sorted(unknown)[0]!r}")
    variant = values.get("variant", "gaussian-ar")
    if variant not in VARIANTS:
        raise ValueError(f"unknown kernel variant {variant!r}")
    kwargs = {"dim": int(values.get("dim", 1)), "init": InitialLaw.parse(str(values.get("init", "point:0")))}
    if variant == "gaussian-ar":
        if "kappa" in values:
            raise ValueError("key 'kappa' does not apply to gaussian-ar")
        kwargs.update(a=float(values.get("a", 0.5)), sigma=float(values.get("sigma", 1.0)))
    else:
        for key in ("a", "sigma"):
            if key in values:
                raise ValueError(f"key {key!r} does not apply to uniform-contraction")
        kwargs.update(kappa=float(values.get("kappa", 0.5)))
    return VARIANTS[variant](**kwargs)


def parse_key_values(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        values[key.strip()] = value.strip()
    return values


def kernel_from_config(text: str) -> KernelSpec:
    return kernel_from_mapping(parse_key_values(text))
