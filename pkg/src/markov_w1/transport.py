"""1-Wasserstein distances between finitely supported measures.

Ground cost is the Euclidean distance throughout. Solvers:

* :func:`w1_1d` -- closed form on the line (monotone / quantile coupling).
* :func:`w1_exact` -- network simplex on the bipartite transport problem,
  with the optimal potentials checked as a dual certificate.
* :func:`w1_entropic` -- Sinkhorn scaling for large instances.
* :func:`w1_lower_dual` -- Kantorovich lower bound from an explicit family
  of 1-Lipschitz test functions.
"""
from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from numba import njit
from scipy.spatial.distance import cdist
from scipy.special import logsumexp

from .measures import EmpiricalMeasure

DEFAULT_CAP = 4096
DUAL_TOL = 1e-9


class SizeCapError(ValueError):
    pass


class OptimalityError(RuntimeError):
    pass


class ConvergenceWarning(RuntimeWarning):
    pass


def _check_dims(a: EmpiricalMeasure, b: EmpiricalMeasure):
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")


def cost_matrix(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return cdist(x, y, metric="euclidean")


# --------------------------------------------------------------------------
# one dimension


def w1_1d(a: EmpiricalMeasure, b: EmpiricalMeasure) -> float:
    """Exact W1 on the real line as the integral of |F_a - F_b|."""
    _check_dims(a, b)
    if a.dim != 1:
        raise ValueError("w1_1d needs one-dimensional measures")
    x = a.points[:, 0]
    y = b.points[:, 0]
    n, m = len(x), len(y)
    if n == m and np.all(a.weights == a.weights[0]) and np.all(b.weights == b.weights[0]):
        return float(np.abs(np.sort(x, kind="stable") - np.sort(y, kind="stable")).sum() / n)
    z = np.concatenate([x, y])
    order = np.argsort(z, kind="stable")
    wa = np.concatenate([a.weights, np.zeros(m)])[order]
    wb = np.concatenate([np.zeros(n), b.weights])[order]
    gap = np.cumsum(wa - wb)[:-1]
    return float(np.dot(np.abs(gap), np.diff(z[order])))


# --------------------------------------------------------------------------
# network simplex


@njit(cache=True)
def _arc_ends(e, n1, n2, n_arcs, root, art_up):
    if e < n_arcs:
        i = e // n2
        return i, n1 + (e - i * n2)
    u = e - n_arcs
    if art_up[u]:
        return u, root
    return root, u


@njit(cache=True)
def _rebuild_tree(tree_arcs, n1, n2, n_arcs, root, art_up, cost, art_cost,
                  parent, pred, pred_up, depth, pi):
    n_nodes = root + 1
    degree = np.zeros(n_nodes + 1, np.int64)
    for e in tree_arcs:
        s, t = _arc_ends(e, n1, n2, n_arcs, root, art_up)
        degree[s + 1] += 1
        degree[t + 1] += 1
    for u in range(n_nodes):
        degree[u + 1] += degree[u]
    fill = degree[:-1].copy()
    adj_node = np.empty(2 * len(tree_arcs), np.int64)
    adj_arc = np.empty(2 * len(tree_arcs), np.int64)
    for e in tree_arcs:
        s, t = _arc_ends(e, n1, n2, n_arcs, root, art_up)
        adj_node[fill[s]] = t
        adj_arc[fill[s]] = e
        fill[s] += 1
        adj_node[fill[t]] = s
        adj_arc[fill[t]] = e
        fill[t] += 1

    queue = np.empty(n_nodes, np.int64)
    seen = np.zeros(n_nodes, np.bool_)
    queue[0] = root
    seen[root] = True
    parent[root] = -1
    pred[root] = -1
    depth[root] = 0
    pi[root] = 0.0
    head, tail = 0, 1
    while head < tail:
        u = queue[head]
        head += 1
        for k in range(degree[u], degree[u + 1]):
            v = adj_node[k]
            if seen[v]:
                continue
            e = adj_arc[k]
            if e < n_arcs:
                c = cost[e]
            elif art_up[e - n_arcs]:
                c = 0.0
            else:
                c = art_cost
            s, _ = _arc_ends(e, n1, n2, n_arcs, root, art_up)
            parent[v] = u
            pred[v] = e
            depth[v] = depth[u] + 1
            if s == v:
                pred_up[v] = True
                pi[v] = pi[u] - c
            else:
                pred_up[v] = False
                pi[v] = pi[u] + c
            seen[v] = True
            queue[tail] = v
            tail += 1
    return tail == n_nodes


@njit(cache=True)
def _network_simplex(cost, supply, demand, tol, max_pivots):
    """Primal network simplex for the uncapacitated transport problem.

    Artificial root with big-M arcs for the initial strongly feasible tree,
    block-search pricing, leaving arc chosen by the strongly feasible rule
    (last blocking arc along the cycle orientation). Returns the flow on
    every arc (real arcs first), node potentials and the pivot count.
    """
    n1 = supply.shape[0]
    n2 = demand.shape[0]
    n_arcs = n1 * n2
    root = n1 + n2
    art_cost = (cost.max() + 1.0) * (root + 1)

    art_up = np.empty(root, np.bool_)
    flow = np.zeros(n_arcs + root)
    tree_arcs = np.empty(root, np.int64)
    in_tree = np.zeros(n_arcs, np.bool_)
    for u in range(root):
        art_up[u] = u < n1
        flow[n_arcs + u] = supply[u] if u < n1 else demand[u - n1]
        tree_arcs[u] = n_arcs + u

    parent = np.empty(root + 1, np.int64)
    pred = np.empty(root + 1, np.int64)
    pred_up = np.empty(root + 1, np.bool_)
    depth = np.empty(root + 1, np.int64)
    pi = np.empty(root + 1)
    _rebuild_tree(tree_arcs, n1, n2, n_arcs, root, art_up, cost, art_cost,
                  parent, pred, pred_up, depth, pi)

    block = max(int(math.sqrt(n_arcs)), 16)
    next_arc = 0
    pivots = 0
    reduced_tol = tol * art_cost
    while pivots < max_pivots:
        # block search for the entering arc
        best = -reduced_tol
        in_arc = -1
        count = block
        for _ in range(n_arcs):
            e = next_arc
            if not in_tree[e]:
                i = e // n2
                j = e - i * n2
                c = cost[e] + pi[i] - pi[n1 + j]
                if c < best:
                    best = c
                    in_arc = e
            next_arc += 1
            if next_arc == n_arcs:
                next_arc = 0
            count -= 1
            if count == 0:
                if in_arc >= 0:
                    break
                count = block
        if in_arc < 0:
            break

        first, second = _arc_ends(in_arc, n1, n2, n_arcs, root, art_up)
        u, v = first, second
        while u != v:
            if depth[u] > depth[v]:
                u = parent[u]
            elif depth[v] > depth[u]:
                v = parent[v]
            else:
                u = parent[u]
                v = parent[v]
        join = u

        delta = np.inf
        u_out = -1
        u = first
        while u != join:
            if pred_up[u] and flow[pred[u]] < delta:
                delta = flow[pred[u]]
                u_out = u
            u = parent[u]
        u = second
        while u != join:
            if (not pred_up[u]) and flow[pred[u]] <= delta:
                delta = flow[pred[u]]
                u_out = u
            u = parent[u]
        if u_out < 0:
            raise RuntimeError("unbounded cycle in transport problem")
        if delta < 0.0:
            delta = 0.0

        flow[in_arc] += delta
        u = first
        while u != join:
            if pred_up[u]:
                flow[pred[u]] -= delta
            else:
                flow[pred[u]] += delta
            u = parent[u]
        u = second
        while u != join:
            if pred_up[u]:
                flow[pred[u]] += delta
            else:
                flow[pred[u]] -= delta
            u = parent[u]
        out_arc = pred[u_out]
        flow[out_arc] = 0.0

        for k in range(root):
            tree_arcs[k] = pred[k] if k != u_out else in_arc
        in_tree[in_arc] = True
        if out_arc < n_arcs:
            in_tree[out_arc] = False
        _rebuild_tree(tree_arcs, n1, n2, n_arcs, root, art_up, cost, art_cost,
                      parent, pred, pred_up, depth, pi)
        pivots += 1
    return flow, pi, pivots


@dataclass(frozen=True, eq=False)
class TransportPlan:
    """Coupling between ``source`` and ``target`` (both with merged atoms).

    ``source_potential`` / ``target_potential`` are the dual variables
    (f, g) with f_i + g_j <= |x_i - y_j|; empty for plans without a dual.
    """

    source: EmpiricalMeasure
    target: EmpiricalMeasure
    source_idx: np.ndarray
    target_idx: np.ndarray
    mass: np.ndarray
    total_cost: float
    source_potential: np.ndarray | None = None
    target_potential: np.ndarray | None = None
    pivots: int = 0

    def marginal_errors(self) -> tuple[float, float]:
        rows = np.bincount(self.source_idx, weights=self.mass, minlength=len(self.source))
        cols = np.bincount(self.target_idx, weights=self.mass, minlength=len(self.target))
        return float(np.abs(rows - self.source.weights).max()), float(np.abs(cols - self.target.weights).max())

    def recomputed_cost(self) -> float:
        d = np.linalg.norm(self.source.points[self.source_idx] - self.target.points[self.target_idx], axis=1)
        return float(np.dot(self.mass, d))

    def certificate(self, cost: np.ndarray | None = None) -> dict:
        """Dual feasibility, complementary slackness and duality gap of the plan."""
        if self.source_potential is None:
            raise ValueError("plan carries no dual potentials")
        if cost is None:
            cost = cost_matrix(self.source.points, self.target.points)
        reduced = cost - self.source_potential[:, None] - self.target_potential[None, :]
        dual_value = float(np.dot(self.source.weights, self.source_potential)
                           + np.dot(self.target.weights, self.target_potential))
        support = reduced[self.source_idx, self.target_idx]
        return {
            "max_dual_violation": float(max(0.0, -reduced.min())),
            "max_slackness": float(np.abs(support[self.mass > 0]).max(initial=0.0)),
            "dual_value": dual_value,
            "duality_gap": float(self.total_cost - dual_value),
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        for i, j, w in zip(self.source_idx, self.target_idx, self.mass):
            writer.writerow([int(i), int(j), repr(float(w))])
        return buf.getvalue()


def w1_exact(a: EmpiricalMeasure, b: EmpiricalMeasure, cap: int = DEFAULT_CAP,
             max_pivots: int = 100_000_000) -> tuple[float, TransportPlan]:
    """Exact W1 and an optimal plan by network simplex.

    Coincident atoms are merged first; the plan refers to merged atoms. The
    optimal potentials are verified as a dual certificate (feasible within
    1e-9, complementary slackness on the support, zero duality gap).
    """
    _check_dims(a, b)
    a, b = a.merged(), b.merged()
    if len(a) > cap or len(b) > cap:
        raise SizeCapError(f"supports of size {len(a)} x {len(b)} exceed the cap {cap}")
    cost = cost_matrix(a.points, b.points)
    n1, n2 = cost.shape
    if n1 == n2 and np.array_equal(a.points, b.points) and np.array_equal(a.weights, b.weights):
        # identity coupling with zero potentials; avoids round-off mass off the diagonal
        idx = np.arange(n1)
        zero = np.zeros(n1)
        return 0.0, TransportPlan(a, b, idx, idx, a.weights.copy(), 0.0, zero, zero.copy(), 0)
    flat = np.ascontiguousarray(cost).reshape(-1)
    flow, pi, pivots = _network_simplex(flat, a.weights, b.weights, 1e-15, max_pivots)
    artificial = flow[n1 * n2:]
    assert artificial.max() <= 1e-9, "transport between probability measures cannot be infeasible"
    real = np.clip(flow[: n1 * n2], 0.0, None)
    support = np.flatnonzero(real > 0)
    src, tgt = np.divmod(support, n2)
    mass = real[support]
    total = float(np.dot(mass, flat[support]))
    plan = TransportPlan(a, b, src, tgt, mass, total, -pi[:n1], pi[n1:n1 + n2].copy(), int(pivots))
    cert = plan.certificate(cost)
    scale = max(1.0, float(cost.max()))
    if (cert["max_dual_violation"] > DUAL_TOL * scale or cert["max_slackness"] > DUAL_TOL * scale
            or abs(cert["duality_gap"]) > DUAL_TOL * scale):
        raise OptimalityError(f"network simplex failed its dual certificate: {cert}")
    return total, plan


def w1_assignment(x: np.ndarray, y: np.ndarray) -> float:
    """Exact W1 between two uniform clouds of equal size (optimal permutation)."""
    from scipy.optimize import linear_sum_assignment

    x = np.asarray(x, dtype=float).reshape(len(x), -1)
    y = np.asarray(y, dtype=float).reshape(len(y), -1)
    if len(x) != len(y):
        raise ValueError("assignment needs clouds of equal size")
    cost = cost_matrix(x, y)
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].mean())


# --------------------------------------------------------------------------
# entropic


@dataclass(frozen=True)
class EntropicResult:
    """Transport cost <P_eps, C> of the entropic plan; no sign guarantee vs W1."""

    value: float
    marginal_error: float
    iterations: int
    converged: bool
    epsilon: float
    debiased: bool = False

    def __float__(self) -> float:
        return self.value


def _sinkhorn(a, b, cost, epsilon, max_iters, tol, check_every=10):
    n, m = cost.shape
    if cost.max() / epsilon < 600:
        kernel = np.exp(-cost / epsilon)
        v = np.ones(m)
        kv = kernel @ v
        err = np.inf
        it = 0
        for it in range(1, max_iters + 1):
            u = a / kv
            v = b / (kernel.T @ u)
            kv = kernel @ v
            if it % check_every == 0 or it == max_iters:
                err = float(np.abs(u * kv - a).sum())
                if not np.isfinite(err) or err < tol:
                    break
        if np.isfinite(err):
            return float(np.einsum("i,ij,ij,j->", u, kernel, cost, v)), err, it
    # log domain
    log_a, log_b = np.log(a), np.log(b)
    f = np.zeros(n)
    g = np.zeros(m)
    scaled = -cost / epsilon
    err = np.inf
    it = 0
    for it in range(1, max_iters + 1):
        f = -epsilon * logsumexp(scaled + (g / epsilon + log_b)[None, :], axis=1)
        g = -epsilon * logsumexp(scaled + (f / epsilon + log_a)[:, None], axis=0)
        if it % check_every == 0 or it == max_iters:
            log_plan = scaled + (f / epsilon + log_a)[:, None] + (g / epsilon + log_b)[None, :]
            err = float(np.abs(np.exp(logsumexp(log_plan, axis=1)) - a).sum())
            if err < tol:
                break
    log_plan = scaled + (f / epsilon + log_a)[:, None] + (g / epsilon + log_b)[None, :]
    return float(np.sum(np.exp(log_plan) * cost)), err, it


def _sinkhorn_symmetric(a, cost, epsilon, max_iters, tol, check_every=5):
    # a = b and a symmetric cost: the plan is diag(u) K diag(u); averaging
    # successive scalings (geometric mean) converges in a few dozen steps
    if cost.max() / epsilon < 600:
        kernel = np.exp(-cost / epsilon)
        u = np.sqrt(a / kernel.sum(axis=1))
        err = np.inf
        it = 0
        for it in range(1, max_iters + 1):
            ku = kernel @ u
            if it % check_every == 0 or it == max_iters:
                err = float(np.abs(u * ku - a).sum())
                if not np.isfinite(err) or err < tol:
                    break
            u = np.sqrt(u * a / ku)
        if np.isfinite(err):
            return float(np.einsum("i,ij,ij,j->", u, kernel, cost, u)), err, it
    log_a = np.log(a)
    scaled = -cost / epsilon
    f = np.zeros(len(a))
    err = np.inf
    it = 0
    for it in range(1, max_iters + 1):
        log_plan = scaled + (f / epsilon + log_a)[:, None] + (f / epsilon + log_a)[None, :]
        if it % check_every == 0 or it == max_iters:
            err = float(np.abs(np.exp(logsumexp(log_plan, axis=1)) - a).sum())
            if err < tol:
                break
        f = 0.5 * (f - epsilon * logsumexp(scaled + (f / epsilon + log_a)[None, :], axis=1))
    log_plan = scaled + (f / epsilon + log_a)[:, None] + (f / epsilon + log_a)[None, :]
    return float(np.sum(np.exp(log_plan) * cost)), err, it


def w1_entropic(a: EmpiricalMeasure, b: EmpiricalMeasure, epsilon: float, max_iters: int = 10_000,
                tol: float = 1e-7, debias: bool = False) -> EntropicResult:
    """Entropic-regularised transport cost by Sinkhorn scaling.

    Iterates until the L1 row-marginal violation drops below ``tol`` or
    ``max_iters`` is reached; non-convergence is reported through
    ``converged=False`` and a :class:`ConvergenceWarning`. With ``debias``
    the self-transport costs are subtracted,
    ``C(a, b) - (C(a, a) + C(b, b)) / 2``, which removes most of the
    blurring bias when ``epsilon`` is comparable to the atom spacing.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    _check_dims(a, b)
    a, b = a.merged(), b.merged()
    value, err, iters = _sinkhorn(a.weights, b.weights, cost_matrix(a.points, b.points), epsilon, max_iters, tol)
    if debias:
        for m_ in (a, b):
            self_value, self_err, self_iters = _sinkhorn_symmetric(
                m_.weights, cost_matrix(m_.points, m_.points), epsilon, max_iters, tol)
            value -= 0.5 * self_value
            err = max(err, self_err)
            iters = max(iters, self_iters)
    converged = err < tol
    if not converged:
        warnings.warn(f"Sinkhorn stopped after {iters} iterations with marginal violation {err:.3g}",
                      ConvergenceWarning, stacklevel=2)
    return EntropicResult(value, err, iters, converged, epsilon, debias)


# --------------------------------------------------------------------------
# Kantorovich lower bound


@dataclass(frozen=True)
class LipschitzFunction:
    """A test function that is 1-Lipschitz by construction."""

    kind: str
    vector: tuple[float, ...]
    lo: float = -math.inf
    hi: float = math.inf

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        v = np.asarray(self.vector)
        if self.kind == "distance":
            return np.linalg.norm(x - v, axis=1)
        return np.clip(x @ v, self.lo, self.hi)


def projection(axis: int, dim: int) -> LipschitzFunction:
    e = np.zeros(dim)
    e[axis] = 1.0
    return LipschitzFunction("linear", tuple(e))


def distance_to(point) -> LipschitzFunction:
    return LipschitzFunction("distance", tuple(float(p) for p in np.atleast_1d(point)))


def clipped_linear(direction, lo: float = -math.inf, hi: float = math.inf) -> LipschitzFunction:
    direction = np.atleast_1d(np.asarray(direction, dtype=float))
    norm = np.linalg.norm(direction)
    if norm == 0:
        raise ValueError("direction must be nonzero")
    return LipschitzFunction("linear", tuple(direction / norm), lo, hi)


def default_family(a: EmpiricalMeasure, b: EmpiricalMeasure, max_centers: int = 64,
                   n_thresholds: int = 16) -> list[LipschitzFunction]:
    """Projections, distances to support points and clipped projections."""
    dim = a.dim
    family = [projection(k, dim) for k in range(dim)]
    support = np.concatenate([a.points, b.points])
    stride = max(1, len(support) // max_centers)
    family += [distance_to(p) for p in support[::stride]]
    for k in range(dim):
        levels = np.quantile(support[:, k], np.linspace(0, 1, n_thresholds))
        e = np.eye(dim)[k]
        family += [clipped_linear(e, -math.inf, t) for t in levels]
    return family


def w1_lower_dual(a: EmpiricalMeasure, b: EmpiricalMeasure,
                  family: Sequence[Callable[[np.ndarray], np.ndarray]] | None = None) -> float:
    """max_f |a(f) - b(f)| over 1-Lipschitz ``family``; a lower bound for W1."""
    _check_dims(a, b)
    if family is None:
        family = default_family(a, b)
    return float(max(abs(a.integrate(f) - b.integrate(f)) for f in family))
