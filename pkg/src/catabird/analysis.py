"""Headline statistics: first-visit moments, catastrophe mean, stationary law,
derived minimum-representation process.

The first effective-catastrophe mean is implemented as

    E(C_{j,r}) = (1/xi) [1 - ghat_{j,r}(xi) + ghat_{j,r}(xi)/(1 - xi pihat_{r,r}(xi))]

(with ghat_{r,r} = 1), obtained by differentiating the transform of the
catastrophe density at 0.  This is the form consistent with the constant-rate
closed forms and with simulation; see the repository notes for the derivation.
"""

import math
from dataclasses import dataclass

import numpy as np

from .model import ProcessSpec, TruncationWindow
from .resolvent import gamma_hat, resolvent_hat
from .transient import DistributionVector, certify_window, transient_hat

_WINDOW_CAP = 1 << 15


@dataclass(frozen=True)
class FirstVisitStats:
    """Mean/variance of the first-visit time T_{j,k} plus the hat transform at xi."""

    j: int
    k: int
    mean: float
    variance: float
    transform_at_xi: float


@dataclass
class StationaryDistribution:
    """Stationary law q_n with the maximum balance-equation residual."""

    window: TruncationWindow
    states: np.ndarray
    q: np.ndarray
    residual: float

    def probability(self, n: int) -> float:
        i = int(n - self.states[0])
        if not (0 <= i < self.states.shape[0]):
            raise ValueError(f"state {n} outside window")
        return float(self.q[i])

    def tail_from(self) -> np.ndarray:
        """S_n = sum_{k >= n} q_k by backward accumulation."""
        return np.cumsum(self.q[::-1])[::-1]


def _require_xi(spec: ProcessSpec):
    if spec.xi <= 0.0:
        raise ValueError("this statistic needs a catastrophe rate xi > 0")


def first_visit_mean(spec: ProcessSpec, j: int, k: int,
                     window: TruncationWindow = None) -> float:
    """E(T_{j,k}) = [1 - ghat_{j,k}(xi)] / [xi ghat_{r,k}(xi)]."""
    _require_xi(spec)
    if j == k:
        raise ValueError("need j != k")
    gj = gamma_hat(spec, j, k, spec.xi, window)
    gr = gamma_hat(spec, spec.r, k, spec.xi, window)
    return (1.0 - gj) / (spec.xi * gr)


def first_visit_variance(spec: ProcessSpec, j: int, k: int,
                         window: TruncationWindow = None) -> float:
    """Var(T_{j,k}) from the transform and its first derivative at xi."""
    _require_xi(spec)
    if j == k:
        raise ValueError("need j != k")
    xi = spec.xi
    gj, dgj = gamma_hat(spec, j, k, xi, window, with_derivative=True)
    gr, dgr = gamma_hat(spec, spec.r, k, xi, window, with_derivative=True)
    return (1.0 - gj ** 2 + 2.0 * xi * (1.0 - gj) * dgr
            + 2.0 * xi * gr * dgj) / (xi ** 2 * gr ** 2)


def first_visit_stats(spec: ProcessSpec, j: int, k: int,
                      window: TruncationWindow = None) -> FirstVisitStats:
    _require_xi(spec)
    if j == k:
        raise ValueError("need j != k")
    xi = spec.xi
    gj, dgj = gamma_hat(spec, j, k, xi, window, with_derivative=True)
    gr, dgr = gamma_hat(spec, spec.r, k, xi, window, with_derivative=True)
    mean = (1.0 - gj) / (xi * gr)
    var = (1.0 - gj ** 2 + 2.0 * xi * (1.0 - gj) * dgr
           + 2.0 * xi * gr * dgj) / (xi ** 2 * gr ** 2)
    return FirstVisitStats(j, k, mean, var, gj)


def catastrophe_mean(spec: ProcessSpec, j: int,
                     window: TruncationWindow = None) -> float:
    """Expected time of the first effective catastrophe from state j."""
    _require_xi(spec)
    xi = spec.xi
    gj = gamma_hat(spec, j, spec.r, xi, window) if j > spec.r else 1.0
    prr = resolvent_hat(spec, spec.r, xi, window).value(spec.r)
    denom = 1.0 - xi * prr
    return (1.0 - gj + gj / denom) / xi


def stationary_distribution(spec: ProcessSpec,
                            window: TruncationWindow = None,
                            residual_bound: float = 1e-10) -> StationaryDistribution:
    """q_n = xi pihat_{r,n}(xi), window enlarged until the balance residual
    passes and the upper half of the window is essentially empty."""
    _require_xi(spec)
    win = window or TruncationWindow(64)
    while True:
        sol = resolvent_hat(spec, spec.r, spec.xi, win)
        q = spec.xi * sol.values
        residual = _balance_residual(spec, q)
        if residual <= residual_bound and q[win.upper // 2 + 1:].sum() <= win.tail_tol:
            return StationaryDistribution(win, sol.states, q, residual)
        if window is not None or win.upper >= _WINDOW_CAP:
            if residual > residual_bound:
                raise RuntimeError(
                    f"balance residual {residual:.3e} above bound on window {win.upper}")
            return StationaryDistribution(win, sol.states, q, residual)
        win = win.doubled()


def _balance_residual(spec: ProcessSpec, q: np.ndarray) -> float:
    """Max residual of the stationary balance system over interior rows."""
    r, xi = spec.r, spec.xi
    m = q.shape[0]
    alpha = np.array([spec.birth_rate(r + i) for i in range(m)])
    beta = np.array([spec.death_rate(r + i) if i > 0 else 0.0 for i in range(m)])
    res = abs(-(alpha[0] + xi) * q[0] + beta[1] * q[1] + xi)
    interior = (-(alpha[1:m - 1] + beta[1:m - 1] + xi) * q[1:m - 1]
                + alpha[0:m - 2] * q[0:m - 2] + beta[2:m] * q[2:m])
    if interior.size:
        res = max(res, float(np.abs(interior).max()))
    return res


@dataclass
class StarRates:
    """Rates of the derived process N*(t) plus the tails they came from."""

    spec: ProcessSpec
    states: np.ndarray
    alpha_star: np.ndarray
    beta_star: np.ndarray
    tail: np.ndarray  # S_n = sum_{k>=n} q_k


def star_rates(spec: ProcessSpec, window: TruncationWindow = None) -> StarRates:
    """Birth/death rates alpha_n S_n / S_{n+1}, beta_n S_{n+1} / S_n.

    Tails are accumulated backwards from the window top, topped up with a
    geometric estimate of the beyond-window mass so the last usable ratios
    do not degenerate.
    """
    stat = stationary_distribution(spec, window)
    q = stat.q
    m = q.shape[0]
    # geometric top-up for the mass above the window
    ratio = q[-1] / q[-2] if q[-2] > 0 else 0.0
    top_up = q[-1] * ratio / (1.0 - ratio) if 0.0 < ratio < 1.0 else 0.0
    tail = np.cumsum(q[::-1])[::-1] + top_up
    if np.any(tail[1:] <= 0.0):
        raise RuntimeError("stationary tail vanishes inside the window; "
                           "enlarge the window")
    r = spec.r
    alpha = np.array([spec.birth_rate(r + i) for i in range(m)])
    beta = np.array([spec.death_rate(r + i) if i > 0 else 0.0 for i in range(m)])
    alpha_star = np.empty(m - 1)
    beta_star = np.empty(m - 1)
    alpha_star = alpha[:-1] * tail[:-1] / tail[1:]
    beta_star = beta[:-1] * tail[1:] / tail[:-1]
    beta_star[0] = 0.0

    a_tab = alpha_star
    b_tab = beta_star

    def birth(n, _a=a_tab, _r=r):
        i = n - _r
        if i >= _a.shape[0]:
            raise ValueError(f"star birth rate tabulated only up to {_r + _a.shape[0] - 1}")
        return float(_a[i])

    def death(n, _b=b_tab, _r=r):
        i = n - _r
        if i >= _b.shape[0]:
            raise ValueError(f"star death rate tabulated only up to {_r + _b.shape[0] - 1}")
        return float(_b[i])

    star = ProcessSpec(r, birth, death, 0.0, name=spec.name + "_star")
    return StarRates(star, stat.states[:-1], alpha_star, beta_star, tail)


def minimum_representation_vector(spec: ProcessSpec, t: float,
                                  window: TruncationWindow = None,
                                  tol: float = 1e-10) -> DistributionVector:
    """p_{r,.}(t) as the law of min(N*(t), N), N stationary and independent."""
    _require_xi(spec)
    win = window or certify_window(spec, spec.r, t)
    stars = star_rates(spec, win)
    stat = stationary_distribution(spec, win)
    q = stat.q
    star_win = TruncationWindow(win.upper - 1, win.tail_tol)
    p_star = transient_hat(stars.spec, spec.r, t, star_win, tol).mass
    m = p_star.shape[0]
    q = q[:m]
    tail_q = np.cumsum(q[::-1])[::-1]           # sum_{k>=n} q_k
    tail_p = np.cumsum(p_star[::-1])[::-1]      # sum_{k>=n} p*_k
    tail_q_next = np.empty(m)
    tail_q_next[:-1] = tail_q[1:]
    tail_q_next[-1] = 0.0
    mass = q * tail_p + p_star * tail_q_next
    states = stat.states[:m]
    return DistributionVector(states, mass, t, 1.0 - float(mass.sum()),
                              "minimum_representation", star_win)


def minimum_representation(spec: ProcessSpec, n: int, t: float,
                           window: TruncationWindow = None,
                           tol: float = 1e-10) -> float:
    """Single entry p_{r,n}(t) of the minimum representation."""
    return minimum_representation_vector(spec, t, window, tol).probability(n)


def general_representation_vector(spec: ProcessSpec, j: int, t: float,
                                  window: TruncationWindow = None,
                                  tol: float = 1e-10) -> DistributionVector:
    """p_{j,.}(t) = exp(-xi t)[phat_j - phat_r](t) + minimum representation."""
    _require_xi(spec)
    win = window or certify_window(spec, max(j, spec.r), t)
    base = minimum_representation_vector(spec, t, win, tol)
    m = base.mass.shape[0]
    sub_win = base.window
    ph_j = transient_hat(spec, j, t, sub_win, tol).mass
    ph_r = transient_hat(spec, spec.r, t, sub_win, tol).mass
    mass = math.exp(-spec.xi * t) * (ph_j[:m] - ph_r[:m]) + base.mass
    return DistributionVector(base.states, mass, t, 1.0 - float(mass.sum()),
                              "general_representation", sub_win)


def general_representation(spec: ProcessSpec, j: int, n: int, t: float,
                           window: TruncationWindow = None,
                           tol: float = 1e-10) -> float:
    return general_representation_vector(spec, j, t, window, tol).probability(n)
