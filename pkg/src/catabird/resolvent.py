"""Laplace-domain quantities by finite linear solves.

The only systems ever solved on the main path are tridiagonal resolvents of
the catastrophe-free twin; everything with catastrophes is reduced to those
through the transform identities.  Direct banded-plus-column solves on the
full and modified generators are kept as cross-check oracles.
"""

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.linalg import solve_banded

from .model import (MODIFIED_M, WITH_CATASTROPHES, ProcessSpec,
                    TruncatedGenerator, TruncationWindow, truncated_generator)

DEFAULT_TAIL_TOL = 1e-13
_WINDOW_CAP = 1 << 15


@dataclass
class ResolventSolution:
    """Laplace transform values pi_{j,.}(lambda) over a window."""

    lam: float
    source: int
    states: np.ndarray
    values: np.ndarray
    variant: str
    window: TruncationWindow

    def value(self, n: int) -> float:
        i = int(n - self.states[0])
        if not (0 <= i < self.states.shape[0]):
            raise ValueError(f"state {n} outside window")
        return float(self.values[i])

    def total(self) -> float:
        return float(self.values.sum())


def _hat_banded(spec: ProcessSpec, win: TruncationWindow, lam: float):
    """Banded form of (lam I - Qhat)^T for scipy.linalg.solve_banded."""
    m = win.upper + 1
    alpha, beta = spec.tabulate(m)
    alpha = alpha.copy()
    alpha[m - 1] = 0.0
    ab = np.zeros((3, m))
    ab[1] = lam + alpha + beta
    ab[0, 1:] = -beta[1:]        # entry (i-1, i): death i -> i-1 transposed
    ab[2, :-1] = -alpha[:-1]     # entry (i+1, i): birth i -> i+1 transposed
    return ab


def _hat_solve(spec: ProcessSpec, win: TruncationWindow, lam: float,
               rhs: np.ndarray) -> np.ndarray:
    return solve_banded((1, 1), _hat_banded(spec, win, lam), rhs)


def _auto_window(spec, lam, sources, tail_tol, start):
    """Double the window until every requested solution stops moving."""
    upper = start
    prev = None
    thr = tail_tol * max(1.0, 1.0 / lam)
    while upper <= _WINDOW_CAP:
        win = TruncationWindow(upper, tail_tol)
        sols = []
        for j in sources:
            rhs = np.zeros(upper + 1)
            rhs[j - spec.r] = 1.0
            sols.append(_hat_solve(spec, win, lam, rhs))
        if prev is not None:
            drift = max(float(np.max(np.abs(s[: p.shape[0]] - p)))
                        for s, p in zip(sols, prev))
            if drift <= thr:
                return win, sols
        prev = sols
        upper *= 2
    raise RuntimeError(f"resolvent window exceeded cap {_WINDOW_CAP}")


def resolvent_hat(spec: ProcessSpec, j: int, lam: float,
                  window: TruncationWindow = None) -> ResolventSolution:
    """pihat_{j,.}(lambda) by one tridiagonal solve, window-certified."""
    if lam <= 0:
        raise ValueError(f"transform argument must be > 0, got {lam}")
    if window is None:
        start = max(32, 2 * (j - spec.r) + 8)
        win, sols = _auto_window(spec, lam, (j,), DEFAULT_TAIL_TOL, start)
        values = sols[0]
    else:
        win = window
        rhs = np.zeros(win.upper + 1)
        rhs[j - spec.r] = 1.0
        values = _hat_solve(spec, win, lam, rhs)
    states = np.arange(spec.r, spec.r + win.upper + 1)
    return ResolventSolution(lam, j, states, values, "hat", win)


def resolvent_hat_derivative(spec: ProcessSpec, j: int, lam: float,
                             window: TruncationWindow) -> np.ndarray:
    """d/dlambda pihat_{j,.}(lambda) = -(lam I - Q)^-T pihat (resolvent identity)."""
    rhs = np.zeros(window.upper + 1)
    rhs[j - spec.r] = 1.0
    pi = _hat_solve(spec, window, lam, rhs)
    return _hat_solve(spec, window, lam, -pi)


def _direct_resolvent(gen: TruncatedGenerator, j_idx: int, lam: float) -> np.ndarray:
    """Solve pi (lam I - Q) = e_j on a banded-plus-column generator (oracle)."""
    m = gen.size
    main = lam - gen.diag
    a = sp.lil_matrix((m, m))
    for i in range(m):
        a[i, i] = main[i]
        if i + 1 < m and gen.up[i] != 0.0:
            a[i + 1, i] = -gen.up[i]       # transposed birth
        if i - 1 >= 0 and gen.down[i] != 0.0:
            a[i - 1, i] = -gen.down[i]     # transposed death
        if gen.jump[i] != 0.0:
            a[gen.jump_to, i] += -gen.jump[i]
    rhs = np.zeros(m)
    rhs[j_idx] = 1.0
    return spla.spsolve(a.tocsc(), rhs)


def resolvent_cat(spec: ProcessSpec, j: int, lam: float,
                  window: TruncationWindow = None,
                  route: str = "identity") -> ResolventSolution:
    """pi_{j,.}(lambda) of the catastrophe process.

    route="identity": pi(lam) = pihat(lam+xi) + (xi/lam) pihat_r(lam+xi);
    route="direct": sparse solve on the full generator (oracle).
    """
    if lam <= 0:
        raise ValueError(f"transform argument must be > 0, got {lam}")
    if route == "direct":
        win = window or resolvent_hat(spec, j, lam + spec.xi).window
        gen = truncated_generator(spec, win, WITH_CATASTROPHES)
        values = _direct_resolvent(gen, gen.index_of(j), lam)
        return ResolventSolution(lam, j, gen.states, values, "cat", win)
    if route != "identity":
        raise ValueError(f"unknown route {route!r}")
    shifted = lam + spec.xi
    if window is None:
        start = max(32, 2 * (j - spec.r) + 8)
        win, (pij, pir) = _auto_window(spec, shifted, (j, spec.r),
                                       DEFAULT_TAIL_TOL, start)
    else:
        win = window
        pij = resolvent_hat(spec, j, shifted, win).values
        pir = resolvent_hat(spec, spec.r, shifted, win).values
    values = pij + (spec.xi / lam) * pir
    states = np.arange(spec.r, spec.r + win.upper + 1)
    return ResolventSolution(lam, j, states, values, "cat", win)


def resolvent_modified(spec: ProcessSpec, j: int, lam: float,
                       window: TruncationWindow) -> ResolventSolution:
    """eta_{j,.}(lambda) by direct solve on the modified generator (oracle)."""
    if lam <= 0:
        raise ValueError(f"transform argument must be > 0, got {lam}")
    gen = truncated_generator(spec, window, MODIFIED_M)
    values = _direct_resolvent(gen, gen.index_of(j), lam)
    return ResolventSolution(lam, j, gen.states, values, "modified_m", window)


def _gamma_pair(spec, j, k, lam, window):
    """(pihat_{j,k}, pihat_{k,k}) on a shared window."""
    if window is None:
        start = max(32, 2 * (max(j, k) - spec.r) + 8)
        win, (pj, pk) = _auto_window(spec, lam, (j, k), DEFAULT_TAIL_TOL, start)
    else:
        win = window
        pj = resolvent_hat(spec, j, lam, win).values
        pk = resolvent_hat(spec, k, lam, win).values
    k_idx = k - spec.r
    return win, pj, pk, k_idx


def gamma_hat(spec: ProcessSpec, j: int, k: int, lam: float,
              window: TruncationWindow = None,
              with_derivative: bool = False):
    """gammahat_{j,k}(lambda) = pihat_{j,k} / pihat_{k,k}.

    For j == k the first visit is immediate and the transform is 1 (the
    convention the mean/variance formulas rely on for k = r).
    """
    if lam <= 0:
        raise ValueError(f"transform argument must be > 0, got {lam}")
    if j == k:
        return (1.0, 0.0) if with_derivative else 1.0
    win, pj, pk, k_idx = _gamma_pair(spec, j, k, lam, window)
    denom = pk[k_idx]
    if denom <= 0.0:
        raise RuntimeError(f"pihat_{{k,k}}({lam}) = {denom}: impossible for lam > 0")
    value = pj[k_idx] / denom
    if not with_derivative:
        return value
    dpj = _hat_solve(spec, win, lam, -pj)
    dpk = _hat_solve(spec, win, lam, -pk)
    dvalue = (dpj[k_idx] * denom - pj[k_idx] * dpk[k_idx]) / denom ** 2
    return value, dvalue


def gamma_cat(spec: ProcessSpec, j: int, k: int, lam: float,
              window: TruncationWindow = None) -> float:
    """First-visit transform of the catastrophe process.

    gamma(lam) = [lam ghat_{j,k} + xi ghat_{r,k}] / [lam + xi ghat_{r,k}]
    at argument lam + xi; at lam = 0 the analytic limit is exactly 1.
    """
    if lam < 0:
        raise ValueError(f"transform argument must be >= 0, got {lam}")
    if j == k:
        raise ValueError("need j != k")
    if lam == 0.0:
        return 1.0
    shifted = lam + spec.xi
    gj = gamma_hat(spec, j, k, shifted, window)
    gr = gamma_hat(spec, spec.r, k, shifted, window)
    return (lam * gj + spec.xi * gr) / (lam + spec.xi * gr)


def avoid_transform(spec: ProcessSpec, j: int, n: int, k: int, lam: float,
                    window: TruncationWindow = None) -> float:
    """Laplace transform of the k-avoiding transition probability.

    Valid in exactly two regimes: (i) k > r with j, n both in [r, k-1];
    (ii) j > k with n != k.
    """
    if lam <= 0:
        raise ValueError(f"transform argument must be > 0, got {lam}")
    r = spec.r
    case_i = k > r and r <= j <= k - 1 and r <= n <= k - 1
    case_ii = j > k >= r and n != k and n >= r
    if not (case_i or case_ii):
        raise ValueError(f"(j={j}, n={n}, k={k}) fits neither admissible case")
    shifted = lam + spec.xi
    if window is None:
        start = max(32, 2 * (max(j, k, n) - r) + 8)
        win, (pj, pk, pr) = _auto_window(spec, shifted, (j, k, r),
                                         DEFAULT_TAIL_TOL, start)
    else:
        win = window
        pj = resolvent_hat(spec, j, shifted, win).values
        pk = resolvent_hat(spec, k, shifted, win).values
        pr = resolvent_hat(spec, r, shifted, win).values
    k_idx, n_idx = k - r, n - r
    gjk = pj[k_idx] / pk[k_idx]
    grk = pr[k_idx] / pk[k_idx]
    base = pj[n_idx] - gjk * pk[n_idx]
    corr = spec.xi * (1.0 - gjk) / (lam + spec.xi * grk) \
        * (pr[n_idx] - grk * pk[n_idx])
    return base + corr


def eta_transform(spec: ProcessSpec, j: int, n: int, lam: float,
                  window: TruncationWindow = None,
                  route: str = "formula") -> float:
    """Laplace transform of the modified-process probabilities h_{j,n}(t).

    n = r-1 addresses the absorbing cemetery.  route="direct" solves the
    modified generator instead of the transform identities.
    """
    if lam <= 0:
        raise ValueError(f"transform argument must be > 0, got {lam}")
    if n < spec.r - 1 or j < spec.r:
        raise ValueError(f"need j >= r and n >= r-1, got j={j}, n={n}")
    if route == "direct":
        if window is None:
            window = resolvent_hat(spec, j, lam + spec.xi).window
        sol = resolvent_modified(spec, j, lam, window)
        return sol.value(n)
    if route != "formula":
        raise ValueError(f"unknown route {route!r}")
    shifted = lam + spec.xi
    if window is None:
        start = max(32, 2 * (max(j, n) - spec.r) + 8)
        win, (pj, pr) = _auto_window(spec, shifted, (j, spec.r),
                                     DEFAULT_TAIL_TOL, start)
    else:
        win = window
        pj = resolvent_hat(spec, j, shifted, win).values
        pr = resolvent_hat(spec, spec.r, shifted, win).values
    denom = 1.0 - spec.xi * pr[0]
    if denom <= 0.0:
        raise RuntimeError(
            f"1 - xi pihat_rr = {denom}: impossible since xi pihat_rr < xi/(lam+xi)")
    if n == spec.r - 1:
        return spec.xi / (lam + spec.xi) * (1.0 / lam - pj[0] / denom)
    n_idx = n - spec.r
    return pj[n_idx] + spec.xi * pr[n_idx] * pj[0] / denom


def delta_transform(spec: ProcessSpec, j: int, lam: float,
                    window: TruncationWindow = None,
                    route: str = "eta") -> float:
    """Laplace transform of the first effective-catastrophe density.

    route="eta" evaluates xi/(lam+xi) - lam/(lam+xi) xi pihat_{j,r} /
    (1 - xi pihat_{r,r}) (all at lam+xi); route="gamma" uses the
    re-expression through the first-visit transforms, valid for j > r.
    At lam = 0 the analytic value is exactly 1.
    """
    if lam < 0:
        raise ValueError(f"transform argument must be >= 0, got {lam}")
    if lam == 0.0:
        return 1.0
    xi = spec.xi
    shifted = lam + xi
    if route == "eta":
        if window is None:
            start = max(32, 2 * (j - spec.r) + 8)
            win, (pj, pr) = _auto_window(spec, shifted, (j, spec.r),
                                         DEFAULT_TAIL_TOL, start)
        else:
            win = window
            pj = resolvent_hat(spec, j, shifted, win).values
            pr = resolvent_hat(spec, spec.r, shifted, win).values
        denom = 1.0 - xi * pr[0]
        return xi / (lam + xi) - lam / (lam + xi) * xi * pj[0] / denom
    if route != "gamma":
        raise ValueError(f"unknown route {route!r}")
    if j <= spec.r:
        raise ValueError("route='gamma' (Laplace re-expression) needs j > r")
    ghat = gamma_hat(spec, j, spec.r, shifted, window)
    pr = resolvent_hat(spec, spec.r, shifted, window)
    denom = 1.0 - xi * pr.value(spec.r)
    gamma_jr = lam / (lam + xi) * ghat + xi / (lam + xi)
    return gamma_jr - lam / (lam + xi) * ghat / denom
