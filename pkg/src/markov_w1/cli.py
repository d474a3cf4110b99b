"""Command-line front end.

    markov-w1 SUBCOMMAND [--key value ...] [--config file]

Values resolve as flags > config file (``key = value`` lines) > defaults.
Exit codes: 0 success, 1 usage or runtime error, 2 a check failed.
Run ``markov-w1 SUBCOMMAND --help`` for the fields of a subcommand.
"""
from __future__ import annotations

import json
import math
import os
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import experiments as ex
from . import fourier as fr
from .kernels import (GaussianAR, analytic_drift, contraction_params, drift_check, invariant_reference,
                      kernel_from_mapping, moment_params, parse_key_values, simulate)
from .measures import EmpiricalMeasure, empirical_from
from .transport import w1_1d, w1_assignment, w1_entropic, w1_exact, w1_lower_dual

EXIT_OK, EXIT_ERROR, EXIT_CHECK = 0, 1, 2


class ConfigError(ValueError):
    pass


# --------------------------------------------------------------------------
# field tables: name -> (type, default, help); default None means required


def _int_list(text):
    return [int(v) for v in str(text).split(",") if v.strip()]


def _float_list(text):
    return [float(v) for v in str(text).split(",") if v.strip()]


def _bool(text):
    value = str(text).strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _auto_float(text):
    return "auto" if str(text).strip() == "auto" else float(text)


COMMON = {
    "seed": (int, 0, "seed for every random stream"),
    "out": (str, "", "output stem; writes STEM.json and STEM.csv (empty: print only)"),
    "format": (str, "text", "stdout format: text or json"),
}
KERNEL = {
    "kernel": (str, "gaussian-ar", "kernel variant: gaussian-ar or uniform-contraction"),
    "a": (float, 0.5, "gaussian-ar autoregression coefficient"),
    "sigma": (float, 1.0, "gaussian-ar noise level"),
    "kappa": (float, 0.5, "uniform-contraction rate"),
    "dim": (int, 1, "state-space dimension"),
    "init": (str, "point:0", "initial law: point:x[,..] | gaussian:m,s | uniform:lo,hi | stationary"),
}
PLOT = {"plot": (str, "", "write a static SVG plot to this path")}

FIELDS = {
    "simulate": {**COMMON, **KERNEL, "n": (int, 1000, "number of steps")},
    "w1": {**COMMON,
           "a": (str, None, "CSV file of the first measure (coordinates..., weight)"),
           "b": (str, None, "CSV file of the second measure"),
           "method": (str, "exact", "exact | 1d | entropic | assignment | lower"),
           "epsilon": (float, 1e-2, "entropic regularisation"),
           "cap": (int, 4096, "support-size cap of the exact solver")},
    "bound": {**COMMON, **KERNEL,
              "n": (int, 10_000, "trajectory length"),
              "q": (float, 10.0, "moment order"),
              "measure": (str, "", "CSV measure to certify (empty: simulate n steps)"),
              "calibration": (float, 1.0, "multiplier applied to the bound"),
              "verify": (_bool, False, "compare with W1 against a reference sample; exit 2 if violated"),
              "ref_size": (int, 1_000_000, "reference sample size for --verify")},
    "rate": {**COMMON, **KERNEL, **PLOT,
             "n": (_int_list, "128,256,512,1024", "comma-separated n grid"),
             "reps": (int, 20, "replications"),
             "method": (str, "auto", "exact_1d | network_simplex | entropic | auto"),
             "reference": (str, "fixed", "fixed or matched reference sample"),
             "ref_size": (int, 0, "fixed reference size (0: 100 max n, capped)"),
             "q": (float, 10.0, "moment order of the theoretical rate curve"),
             "epsilon": (float, 1e-2, "entropic regularisation"),
             "entropic_tol": (float, 1e-4, "Sinkhorn marginal tolerance"),
             "debias": (_bool, True, "debiased entropic cost"),
             "bootstrap": (int, 2000, "bootstrap resamples for the slope CI")},
    "concentration": {**COMMON, **KERNEL, **PLOT,
                      "n": (int, 500, "trajectory length"),
                      "reps": (int, 1000, "replications"),
                      "t": (_float_list, "0,0.01,0.02,0.03,0.04,0.05,0.06,0.08,0.1", "deviation grid"),
                      "mode": (str, "bounded", "bounded or t1"),
                      "c": (_auto_float, "auto", "T1 constant (auto: sigma^2)"),
                      "ref_size": (int, 0, "reference size (0: default policy)"),
                      "method": (str, "network_simplex", "solver for dim >= 2")},
    "curvature": {**COMMON, **KERNEL, **PLOT,
                  "pairs": (str, "", "x/y pairs, ';'-separated, coordinates ','-separated (empty: +-5 e)"),
                  "steps": (int, 5, "number of steps s"),
                  "m": (int, 1000, "cloud size"),
                  "coupling": (str, "independent", "independent or synchronous clouds")},
    "drift": {**COMMON, **KERNEL,
              "q": (float, 2.0, "Lyapunov exponent, f(x) = |x|^q"),
              "gamma": (_auto_float, "auto", "drift rate (auto: a^2)"),
              "c": (_auto_float, "auto", "drift constant (auto: sigma^2 dim)"),
              "probes": (_float_list, "0,1,10,100,1000", "probe norms along the first axis"),
              "m": (int, 100_000, "Monte Carlo draws")},
    "check-lemma": {**COMMON, **KERNEL,
                    "which": (str, None, "holek | variance | mixing | truncation | decay"),
                    "alpha": (float, 0.5, "Hoelder exponent"),
                    "kmax": (int, 8, "largest |k|_inf"),
                    "grid": (int, 2048, "grid points per axis (holek)"),
                    "pairs": (int, 200_000, "sampled pairs in dim >= 2 (holek)"),
                    "n": (_int_list, "100,1000,10000", "chain lengths (variance)"),
                    "reps": (int, 200, "replications (variance, mixing)"),
                    "r": (float, 20.0, "box half-width R of e_k^R"),
                    "n_max": (int, 21, "chain length (mixing)"),
                    "jmax": (_int_list, "8,16,32,64,128,256,512,1024", "truncation levels"),
                    "x": (float, 0.0, "first start point (decay)"),
                    "y": (float, 4.0, "second start point (decay)"),
                    "steps": (int, 10, "steps (decay)"),
                    "m": (int, 1000, "draws per atom (decay)")},
}
SUBCOMMANDS = tuple(FIELDS)


@dataclass
class RunConfig:
    subcommand: str
    values: dict
    explicit: set = field(default_factory=set)

    def __getattr__(self, name):
        try:
            return self.__dict__["values"][name]
        except KeyError:
            raise AttributeError(name) from None

    def resolved(self) -> dict:
        out = {"subcommand": self.subcommand}
        out.update({k: v for k, v in self.values.items()})
        return out


def _convert(sub: str, key: str, raw):
    kind = FIELDS[sub][key][0]
    try:
        return kind(raw)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"key '{key}': cannot parse {raw!r} ({err})") from None


def _normalise(key: str) -> str:
    return key.strip().replace("-", "_")


def usage(sub: str | None = None) -> str:
    if sub is None:
        return "usage: markov-w1 {" + ",".join(SUBCOMMANDS) + "} [--key value ...] [--config FILE]\n"
    lines = [f"usage: markov-w1 {sub} [--key value ...] [--config FILE]", ""]
    for key, (_, default, text) in FIELDS[sub].items():
        shown = "(required)" if default is None else f"[default: {default}]"
        lines.append(f"  --{key.replace('_', '-'):<14} {text} {shown}")
    return "\n".join(lines) + "\n"


def parse_config(argv, config_text: str | None = None) -> RunConfig:
    """Resolve flags > config file > defaults into a :class:`RunConfig`.

    ``config_text`` (or ``--config PATH`` among ``argv``) holds ``key = value``
    lines. Unknown keys, unparsable values and missing required fields raise
    :class:`ConfigError` naming the key.
    """
    argv = list(argv)
    if not argv or argv[0].startswith("-"):
        raise ConfigError("missing subcommand; choose one of " + ", ".join(SUBCOMMANDS))
    sub = argv.pop(0)
    if sub not in FIELDS:
        raise ConfigError(f"unknown subcommand '{sub}'")
    table = FIELDS[sub]
    flags = {}
    i = 0
    while i < len(argv):
        token = argv[i]
        if not token.startswith("--"):
            raise ConfigError(f"unexpected argument '{token}'")
        name, eq, value = token[2:].partition("=")
        key = _normalise(name)
        if not eq:
            if i + 1 >= len(argv):
                raise ConfigError(f"key '{key}': missing value")
            value = argv[i + 1]
            i += 1
        i += 1
        if key == "config":
            try:
                config_text = Path(value).read_text()
            except OSError as err:
                raise ConfigError(f"key 'config': cannot read {value!r} ({err.strerror})") from None
            continue
        if key not in table:
            raise ConfigError(f"unknown key '{key}' for subcommand {sub}")
        flags[key] = value

    from_file = {}
    if config_text:
        try:
            pairs = parse_key_values(config_text)
        except ValueError as err:
            raise ConfigError(f"config file: {err}") from None
        for k, v in pairs.items():
            key = _normalise(k)
            if key not in table:
                raise ConfigError(f"unknown key '{key}' in config file for subcommand {sub}")
            from_file[key] = v

    values = {}
    for key, (_, default, _) in table.items():
        if key in flags:
            raw = flags[key]
        elif key in from_file:
            raw = from_file[key]
        elif default is None:
            raise ConfigError(f"missing required key '{key}'")
        else:
            raw = default
        values[key] = _convert(sub, key, raw)
    return RunConfig(sub, values, set(flags) | set(from_file))


# --------------------------------------------------------------------------
# helpers


def _kernel(cfg: RunConfig):
    mapping = {"variant": cfg.kernel, "dim": str(cfg.dim), "init": cfg.init}
    if cfg.kernel == "gaussian-ar":
        keys, foreign = ("a", "sigma"), ("kappa",)
    else:
        keys, foreign = ("kappa",), ("a", "sigma")
    for key in foreign:
        if key in cfg.explicit:
            raise ConfigError(f"key '{key}' does not apply to kernel {cfg.kernel}")
    mapping.update({k: repr(cfg.values[k]) for k in keys})
    try:
        return kernel_from_mapping(mapping)
    except ValueError as err:
        raise ConfigError(f"kernel: {err}") from None


def _read_measure(path: str, key: str) -> EmpiricalMeasure:
    try:
        return EmpiricalMeasure.from_csv(Path(path).read_text())
    except OSError as err:
        raise ConfigError(f"key '{key}': cannot read {path!r} ({err.strerror})") from None


def _emit(cfg: RunConfig, result: dict, lines: list[str]):
    if cfg.format == "json":
        print(json.dumps(result, indent=1, default=_jsonable))
    else:
        for line in lines:
            print(line)


def _jsonable(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, set):
        return sorted(value)
    raise TypeError(type(value).__name__)


def _write_result(cfg: RunConfig, result: dict, csv_text: str | None = None):
    if not cfg.out:
        return
    stem = Path(cfg.out)
    payload = {"config": cfg.resolved(), **result}
    if csv_text is not None:
        ex.atomic_write(stem.with_suffix(".csv"), csv_text)
    ex.atomic_write(stem.with_suffix(".json"), json.dumps(payload, indent=1, default=_jsonable) + "\n")


def _write_record(cfg: RunConfig, record: ex.ExperimentRecord):
    if not cfg.out:
        return
    record.summary = dict(record.summary, run_config=cfg.resolved())
    record.save(cfg.out)


def _save_svg(fig, path: str):
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=target.parent, suffix=".svg")
    os.close(fd)
    try:
        fig.savefig(tmp, format="svg", metadata={"Date": None})
        os.replace(tmp, target)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def _figure():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "markov-w1"
    return plt


def plot_rate(fit: ex.RateFit, path: str):
    plt = _figure()
    fig, ax = plt.subplots(figsize=(5, 4))
    n = np.asarray(fit.n_eff)
    ax.loglog(n, fit.mean_w1, "o", label="mean W1")
    ax.loglog(n, fit.bound_curve, "-", label="calibrated bound shape")
    ax.loglog(n, math.exp(fit.intercept) * n**fit.slope, "--", label=f"fit slope {fit.slope:.3f}")
    ax.loglog(n, fit.mean_w1[0] * (n / n[0]) ** (-fit.theory_exponent), ":",
              label=f"slope -{fit.theory_exponent:.3f}")
    ax.set_xlabel("n' = (1 - kappa) n")
    ax.set_ylabel("W1")
    ax.legend(fontsize=8)
    fig.tight_layout()
    _save_svg(fig, path)
    plt.close(fig)


def plot_tail(rep: ex.ConcentrationReport, path: str):
    plt = _figure()
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.semilogy(rep.t_grid, np.maximum(rep.empirical_exceedance, 1.0 / rep.reps), "o", label="exceedance")
    ax.semilogy(rep.t_grid, rep.theoretical_bound, "-", label="sub-Gaussian bound")
    ax.set_xlabel("t")
    ax.set_ylabel("P(W1 >= mean + t)")
    ax.legend(fontsize=8)
    fig.tight_layout()
    _save_svg(fig, path)
    plt.close(fig)


def plot_curvature(est: ex.CurvatureEstimate, path: str):
    plt = _figure()
    fig, ax = plt.subplots(figsize=(5, 4))
    steps = np.arange(1, est.w1.shape[1] + 1)
    for p, row in enumerate(est.w1):
        ax.semilogy(steps, row, "o-", label=f"pair {p}")
        ax.semilogy(steps, est.noise_floor[p], "x:", label=f"floor {p}")
    ax.set_xlabel("step s")
    ax.set_ylabel("W1")
    ax.set_title(f"kappa_hat = {est.kappa_hat:.4f}, D_hat = {est.big_d_hat:.4f}")
    ax.legend(fontsize=7)
    fig.tight_layout()
    _save_svg(fig, path)
    plt.close(fig)


# --------------------------------------------------------------------------
# subcommands


def cmd_simulate(cfg):
    kernel = _kernel(cfg)
    traj = simulate(kernel, cfg.n, cfg.seed)
    text = empirical_from(traj).to_csv()
    result = {"n": cfg.n, "x0": traj.x0.tolist(), "last": traj.points[-1].tolist()}
    if cfg.out:
        _write_result(cfg, result, text)
    elif cfg.format == "json":
        _emit(cfg, {**result, "points": traj.points}, [])
    else:
        sys.stdout.write("".join(",".join(repr(float(v)) for v in row) + "\n" for row in traj.points))
    return EXIT_OK


def cmd_w1(cfg):
    a, b = _read_measure(cfg.a, "a"), _read_measure(cfg.b, "b")
    method = cfg.method
    extra = {}
    if method == "exact":
        value, plan = w1_exact(a, b, cap=cfg.cap)
        extra = {"pivots": plan.pivots, "certificate": plan.certificate()}
    elif method == "1d":
        value = w1_1d(a, b)
    elif method == "entropic":
        res = w1_entropic(a, b, cfg.epsilon)
        value = res.value
        extra = {"marginal_error": res.marginal_error, "iterations": res.iterations, "converged": res.converged}
    elif method == "assignment":
        if len(a) != len(b) or not (np.allclose(a.weights, a.weights[0]) and np.allclose(b.weights, b.weights[0])):
            raise ConfigError("key 'method': assignment needs two uniform measures of equal size")
        value = w1_assignment(a.points, b.points)
    elif method == "lower":
        value = w1_lower_dual(a, b)
    else:
        raise ConfigError(f"key 'method': unknown method {method!r}")
    result = {"w1": value, "method": method, **extra}
    _emit(cfg, result, [repr(float(value))])
    _write_result(cfg, result)
    return EXIT_OK


def cmd_bound(cfg):
    kernel = _kernel(cfg)
    if cfg.measure:
        measure = _read_measure(cfg.measure, "measure")
        n = len(measure)
    else:
        measure = empirical_from(simulate(kernel, cfg.n, cfg.seed))
        n = cfg.n
    kappa = contraction_params(kernel).kappa
    params = fr.choose_parameters(n, kappa, kernel.dim, cfg.q)
    if isinstance(kernel, GaussianAR):
        reference = fr.ExactReference(kernel, params.radius)
    else:
        reference = fr.SampleReference.for_kernel(kernel, n, params.radius, cfg.seed)
    report = fr.w1_upper_bound(measure, reference, params, moment_params(kernel, cfg.q))
    report.calibration = cfg.calibration
    result = {"report": report.to_dict(),
              "precondition": fr.precondition_holds(n, kappa, kernel.dim, cfg.q)}
    lines = [f"truncation     {report.truncation_term!r}", f"mu_tail        {report.mu_tail_term!r}",
             f"empirical_tail {report.empirical_tail_term!r}", f"fourier        {report.fourier_term!r}",
             f"total          {report.total!r}", f"calibrated     {report.calibrated_total!r}",
             f"J = {params.j_max}, R = {params.radius!r}, alpha = {params.alpha!r}"]
    code = EXIT_OK
    if cfg.verify:
        ref = invariant_reference(kernel, cfg.ref_size, cfg.seed, stream=(9,))
        measured = w1_1d(measure, ref) if kernel.dim == 1 else w1_exact(measure, ref)[0]
        ok = report.calibrated_total >= measured
        result.update(measured_w1=measured, valid=ok)
        lines.append(f"measured W1    {measured!r} -> {'valid' if ok else 'VIOLATED'}")
        code = EXIT_OK if ok else EXIT_CHECK
    _emit(cfg, result, lines)
    _write_result(cfg, result)
    return code


def cmd_rate(cfg):
    kernel = _kernel(cfg)
    method = cfg.method
    if method == "auto":
        method = "exact_1d" if kernel.dim == 1 else "entropic"
    config = {"kernel": ex.kernel_to_mapping(kernel), "n_grid": cfg.n, "reps": cfg.reps, "w1_method": method,
              "ref_size": cfg.ref_size or None, "seed": cfg.seed, "q": cfg.q, "reference": cfg.reference,
              "epsilon": cfg.epsilon, "entropic_tol": cfg.entropic_tol, "debias": cfg.debias,
              "bootstrap": cfg.bootstrap}
    fit, record = ex.run_experiment("rate", config)
    lines = [f"{n:>8d}  {m!r}" for n, m in zip(fit.n_grid, fit.mean_w1)]
    lines += [f"slope {fit.slope!r}  CI [{fit.slope_ci[0]!r}, {fit.slope_ci[1]!r}]",
              f"theory exponent -{fit.theory_exponent!r}", f"below bound curve: {fit.dominated}"]
    if fit.fallback:
        lines.append(f"note: exact solver cap exceeded, entropic fallback (epsilon {fit.epsilon})")
    _emit(cfg, record.summary, lines)
    _write_record(cfg, record)
    if cfg.plot:
        plot_rate(fit, cfg.plot)
    return EXIT_OK


def cmd_concentration(cfg):
    kernel = _kernel(cfg)
    config = {"kernel": ex.kernel_to_mapping(kernel), "n": cfg.n, "reps": cfg.reps, "t_grid": cfg.t,
              "seed": cfg.seed, "mode": cfg.mode, "c": None if cfg.c == "auto" else cfg.c,
              "ref_size": cfg.ref_size or None, "method": cfg.method}
    rep, record = ex.run_experiment("concentration", config)
    lines = [f"mean W1 {rep.mean_w1!r} ({rep.note})"]
    lines += [f"t={t:<8g} exceedance {e:<8.4f} bound {b:.4f}"
              for t, e, b in zip(rep.t_grid, rep.empirical_exceedance, rep.theoretical_bound)]
    bad = rep.violations()
    lines.append("tail bound respected" if not bad else f"VIOLATED at t = {[rep.t_grid[i] for i in bad]}")
    _emit(cfg, record.summary, lines)
    _write_record(cfg, record)
    if cfg.plot:
        plot_tail(rep, cfg.plot)
    return EXIT_CHECK if bad else EXIT_OK


def _parse_pairs(text: str, dim: int):
    if not text:
        e = np.ones(dim)
        return [((-5 * e).tolist(), (5 * e).tolist())]
    pairs = []
    for chunk in text.split(";"):
        left, sep, right = chunk.partition("/")
        if not sep:
            raise ConfigError(f"key 'pairs': expected x/y, got {chunk!r}")
        try:
            pairs.append((_float_list(left), _float_list(right)))
        except ValueError:
            raise ConfigError(f"key 'pairs': cannot parse {chunk!r}") from None
    return pairs


def cmd_curvature(cfg):
    kernel = _kernel(cfg)
    config = {"kernel": ex.kernel_to_mapping(kernel), "pairs": _parse_pairs(cfg.pairs, kernel.dim),
              "steps": cfg.steps, "m": cfg.m, "seed": cfg.seed, "coupling": cfg.coupling}
    est, record = ex.run_experiment("curvature", config)
    lines = [f"kappa_hat {est.kappa_hat!r}", f"D_hat     {est.big_d_hat!r}"]
    if est.degenerate:
        lines.append("degenerate fit: fewer than two usable steps")
    _emit(cfg, record.summary, lines)
    _write_record(cfg, record)
    if cfg.plot:
        plot_curvature(est, cfg.plot)
    return EXIT_OK


def cmd_drift(cfg):
    kernel = _kernel(cfg)
    gamma, c = cfg.gamma, cfg.c
    if "auto" in (gamma, c):
        if cfg.q != 2:
            raise ConfigError("key 'gamma': analytic constants need q = 2; pass --gamma and --c")
        g0, c0 = analytic_drift(kernel)
        gamma = g0 if gamma == "auto" else gamma
        c = c0 if c == "auto" else c
    probes = np.zeros((len(cfg.probes), kernel.dim))
    probes[:, 0] = cfg.probes
    report = drift_check(kernel, cfg.q, gamma, c, probes, cfg.m, cfg.seed)
    result = {"passed": report.passed, "worst_margin": report.worst_margin, "implied_sup": report.implied_sup,
              "gamma": gamma, "c": c, "probes": report.probes, "estimates": report.estimates,
              "std_errors": report.std_errors, "margins": report.margins}
    lines = [f"|x|={np.linalg.norm(p):<10g} Pf {float(e)!r}  margin {float(mg)!r}"
             for p, e, mg in zip(report.probes, report.estimates, report.margins)]
    lines += [f"implied sup E f(X_n) <= {report.implied_sup!r}", "passed" if report.passed else "FAILED"]
    _emit(cfg, result, lines)
    _write_result(cfg, result)
    return EXIT_OK if report.passed else EXIT_CHECK


def _check_holek(cfg):
    ks = fr.frequencies(cfg.kmax, cfg.dim, half=True)
    rows = []
    for k in ks:
        quotient = fr.holder_quotient_grid(k, cfg.alpha, cfg.dim, cfg.grid, cfg.pairs, cfg.seed)
        rows.append((k.tolist(), quotient, fr.holder_bound(k, cfg.alpha, cfg.dim)))
    ok = all(q <= b for _, q, b in rows)
    worst = max(q / b for _, q, b in rows)
    return ok, {"rows": rows, "worst_ratio": worst}, [f"worst quotient/bound {worst!r}"]


def _check_variance(cfg):
    kernel = _kernel(cfg)
    ks = [[k] + [0] * (kernel.dim - 1) for k in range(1, cfg.kmax + 1)]
    checks = [c for n in cfg.n for c in fr.coefficient_variance_sweep(kernel, ks, cfg.alpha, n, cfg.reps, cfg.r,
                                                                      cfg.seed)]
    ratios = [c.ratio for c in checks]
    spread = max(ratios) / min(ratios)
    rows = [(c.k, c.n, c.lhs, c.lhs_se, c.rhs_shape, c.ratio) for c in checks]
    return spread < 5, {"rows": rows, "spread": spread}, [f"ratio spread {spread!r} (limit 5)"]


def _check_mixing(cfg):
    kernel = _kernel(cfg)
    ok, rows = True, []
    for k in range(1, cfg.kmax + 1):
        rep = fr.mixing_bound_check(kernel, [k] + [0] * (kernel.dim - 1), cfg.alpha, cfg.n_max, cfg.reps, cfg.r,
                                    cfg.seed)
        ok &= rep.passed
        rows.append({"k": k, "bias_ok": rep.bias_ok, "covariance_ok": rep.covariance_ok,
                     "decay_rate": rep.decay_rate, "kappa_alpha": rep.kappa_alpha})
    return ok, {"rows": rows}, [f"k={r['k']}: bias {r['bias_ok']} covariance {r['covariance_ok']}" for r in rows]


def _check_truncation(cfg):
    rep = fr.truncation_error_check(cfg.jmax, cfg.r, cfg.dim)
    ok = True
    for name, errs in rep.sup_errors.items():
        for j, e in zip(rep.j_values, errs):
            if j >= 2:
                ok &= e <= rep.shape_constant * rep.radius * math.log(j) ** rep.dim / j * (1 + 1e-12)
    lines = [f"shape constant {rep.shape_constant!r}"]
    lines += [f"{name}: " + " ".join(f"{e:.3g}" for e in errs) for name, errs in rep.sup_errors.items()]
    return ok, {"j_values": rep.j_values, "sup_errors": rep.sup_errors, "shape_constant": rep.shape_constant}, lines


def _check_decay(cfg):
    kernel = _kernel(cfg)
    x = np.full(kernel.dim, cfg.x)
    y = np.full(kernel.dim, cfg.y)
    rep = ex.decay_check(kernel, EmpiricalMeasure.dirac(x), EmpiricalMeasure.dirac(y), cfg.steps, cfg.m, cfg.seed)
    lines = [f"s={s:<3d} W1 {float(w)!r}  envelope {float(e)!r}  error {float(d)!r}"
             for s, w, e, d in zip(rep.steps, rep.w1, rep.envelope, rep.sampling_error)]
    return rep.passed, {"steps": rep.steps, "w1": rep.w1, "envelope": rep.envelope,
                        "sampling_error": rep.sampling_error}, lines


CHECKS = {"holek": _check_holek, "variance": _check_variance, "mixing": _check_mixing,
          "truncation": _check_truncation, "decay": _check_decay}


def cmd_check_lemma(cfg):
    if cfg.which not in CHECKS:
        raise ConfigError(f"key 'which': unknown check {cfg.which!r}; choose from {', '.join(CHECKS)}")
    ok, result, lines = CHECKS[cfg.which](cfg)
    result = {"which": cfg.which, "passed": ok, **result}
    lines.append("passed" if ok else "FAILED")
    _emit(cfg, result, lines)
    _write_result(cfg, result)
    return EXIT_OK if ok else EXIT_CHECK


COMMANDS = {"simulate": cmd_simulate, "w1": cmd_w1, "bound": cmd_bound, "rate": cmd_rate,
            "concentration": cmd_concentration, "curvature": cmd_curvature, "drift": cmd_drift,
            "check-lemma": cmd_check_lemma}


def run(config: RunConfig) -> int:
    """Dispatch ``config``; 0 on success, 2 on a failed check, 1 on errors."""
    if config.format not in ("text", "json"):
        print("error: key 'format' must be text or json", file=sys.stderr)
        return EXIT_ERROR
    try:
        return COMMANDS[config.subcommand](config)
    except (ConfigError, ValueError, OSError, RuntimeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_ERROR


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    if not argv or argv[0] in ("-h", "--help"):
        sys.stdout.write(usage())
        return EXIT_OK if argv else EXIT_ERROR
    if any(a in ("-h", "--help") for a in argv[1:]) and argv[0] in FIELDS:
        sys.stdout.write(usage(argv[0]))
        return EXIT_OK
    try:
        config = parse_config(argv)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_ERROR
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
