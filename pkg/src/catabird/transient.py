"""Time-domain probabilities: uniformization, decompositions, first visits.

Uniformization represents exp(Q t) as a Poisson mixture of powers of the
stochastic matrix P = I + Q/L (L the largest exit rate), so the truncation
error is a computable Poisson tail; combined with a certified window the
total error of a distribution is at most tol + tail_tol.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad, quad_vec, solve_ivp

from . import _kernels
from .model import (HAT, MODIFIED_M, WITH_CATASTROPHES, ProcessSpec,
                    TimeVaryingSpec, TruncatedGenerator, TruncationWindow,
                    taboo_absorbing, truncated_generator)

DEFAULT_TOL = 1e-10
DEFAULT_TAIL_TOL = 1e-12
_WINDOW_CAP = 1 << 15


class WindowOverflowError(RuntimeError):
    """Probability mass escapes every window up to the size cap."""


@dataclass
class DistributionVector:
    """Probability mass over a window at one time (or transform) point.

    ``defect`` is the mass not present in ``mass``: absorbed probability for
    taboo variants plus the (certified) truncation losses.
    """

    states: np.ndarray
    mass: np.ndarray
    at: float
    defect: float
    method: str
    window: TruncationWindow

    def probability(self, n: int) -> float:
        i = int(n - self.states[0])
        if not (0 <= i < self.states.shape[0]):
            raise ValueError(f"state {n} outside window")
        return float(self.mass[i])

    def total(self) -> float:
        return float(self.mass.sum())

    def mean(self) -> float:
        return float(self.states @ self.mass)


def _uniformize(gen: TruncatedGenerator, j_idx: int, t: float, tol: float) -> np.ndarray:
    if t < 0:
        raise ValueError(f"time must be >= 0, got {t}")
    lam = gen.uniformization_rate()
    if t == 0.0 or lam == 0.0:
        v = np.zeros(gen.size)
        v[j_idx] = 1.0
        return v
    weights = _kernels.poisson_weights(lam * t, tol)
    inv = 1.0 / lam
    return _kernels.uniformize(1.0 + gen.diag * inv, gen.up * inv,
                               gen.down * inv, gen.jump * inv,
                               gen.jump_to, j_idx, weights)


def certify_window(spec: ProcessSpec, j: int, horizon: float,
                   tail_tol: float = DEFAULT_TAIL_TOL,
                   start: int = None) -> TruncationWindow:
    """Double the window until the top half holds < tail_tol/10 of the mass.

    Certified on the catastrophe-free twin, whose upper tail dominates every
    variant's.
    """
    upper = start or max(16, 2 * (j - spec.r) + 8)
    hat = spec.without_catastrophes()
    while upper <= _WINDOW_CAP:
        win = TruncationWindow(upper, tail_tol)
        gen = truncated_generator(hat, win, HAT)
        mass = _uniformize(gen, gen.index_of(j), horizon, tail_tol / 10.0)
        if mass[upper // 2 + 1:].sum() < tail_tol / 10.0:
            return win
        upper *= 2
    raise WindowOverflowError(
        f"window cap {_WINDOW_CAP} exceeded certifying horizon {horizon}")


def transient_hat(spec: ProcessSpec, j: int, t: float,
                  window: TruncationWindow = None,
                  tol: float = DEFAULT_TOL) -> DistributionVector:
    """Distribution of the catastrophe-free process at time t, started at j."""
    win = window or certify_window(spec, j, t)
    gen = truncated_generator(spec, win, HAT)
    mass = _uniformize(gen, gen.index_of(j), t, tol)
    return DistributionVector(gen.states, mass, t, 1.0 - float(mass.sum()),
                              "uniformization", win)


def transient_cat(spec: ProcessSpec, j: int, t: float,
                  window: TruncationWindow = None,
                  tol: float = DEFAULT_TOL,
                  route: str = "direct") -> DistributionVector:
    """Distribution of the catastrophe process at time t.

    route="direct" uniformizes the full generator; route="decomposition"
    evaluates exp(-xi t) phat_j(t) + xi int_0^t exp(-xi u) phat_r(u) du with
    adaptive quadrature, which must agree with the direct route.
    """
    if route not in ("direct", "decomposition"):
        raise ValueError(f"unknown route {route!r}")
    win = window or certify_window(spec, j, t)
    if route == "direct":
        gen = truncated_generator(spec, win, WITH_CATASTROPHES)
        mass = _uniformize(gen, gen.index_of(j), t, tol)
        return DistributionVector(gen.states, mass, t, 1.0 - float(mass.sum()),
                                  "uniformization", win)
    hat_gen = truncated_generator(spec, win, HAT)
    j_idx = hat_gen.index_of(j)
    r_idx = 0
    xi = spec.xi
    mass = math.exp(-xi * t) * _uniformize(hat_gen, j_idx, t, tol / 10.0)
    if xi > 0.0 and t > 0.0:
        def integrand(u):
            return math.exp(-xi * u) * _uniformize(hat_gen, r_idx, u, tol / 10.0)

        part, _err = quad_vec(integrand, 0.0, t, epsabs=tol / 10.0)
        mass = mass + xi * part
    return DistributionVector(hat_gen.states, mass, t, 1.0 - float(mass.sum()),
                              "decomposition", win)


def conditional_mean_cat(spec: ProcessSpec, j: int, t: float,
                         tol: float = DEFAULT_TOL,
                         window: TruncationWindow = None) -> float:
    """E[N(t) | N(0)=j] via the moment decomposition over the xi=0 twin.

    The window is re-certified on the mean itself (doubling until stable),
    because means weight the upper tail more heavily than probabilities do.
    """
    win = window or certify_window(spec, j, t)
    xi = spec.xi
    prev = None
    for _ in range(8):
        gen = truncated_generator(spec, win, HAT)
        j_idx = gen.index_of(j)

        def mean_hat(u, idx, g=gen):
            mass = _uniformize(g, idx, u, tol / 10.0)
            lost = 1.0 - mass.sum()
            if lost > 100.0 * win.tail_tol + 1e-9:
                raise WindowOverflowError(
                    f"mass {lost:.3e} escaped the window at u={u}")
            return float(g.states @ mass)

        value = math.exp(-xi * t) * mean_hat(t, j_idx)
        if xi > 0.0 and t > 0.0:
            part, _e = quad(lambda u: math.exp(-xi * u) * mean_hat(u, 0),
                            0.0, t, epsabs=tol / 10.0, epsrel=tol)
            value += xi * part
        if prev is not None and abs(value - prev) <= max(tol, 1e-12) * max(1.0, abs(value)):
            return value
        prev = value
        win = win.doubled()
    raise WindowOverflowError(f"conditional mean did not stabilize by window {win.upper}")


def taboo_hat(spec: ProcessSpec, j: int, k: int, t: float,
              window: TruncationWindow = None,
              tol: float = DEFAULT_TOL) -> DistributionVector:
    """k-avoiding probabilities of the xi=0 twin; defect = P(T-hat_{j,k} <= t)."""
    if j == k:
        raise ValueError("taboo start j must differ from the taboo state k")
    win = window or certify_window(spec, j, t, start=max(16, 2 * (max(j, k) - spec.r) + 8))
    gen = truncated_generator(spec.without_catastrophes(), win, taboo_absorbing(k))
    mass = _uniformize(gen, gen.index_of(j), t, tol)
    k_idx = gen.index_of(k)
    mass = mass.copy()
    mass[k_idx] = 0.0
    return DistributionVector(gen.states, mass, t, 1.0 - float(mass.sum()),
                              "uniformization", win)


def taboo_cat(spec: ProcessSpec, j: int, k: int, t: float,
              window: TruncationWindow = None,
              tol: float = DEFAULT_TOL) -> DistributionVector:
    """k-avoiding probabilities of the catastrophe process (direct generator)."""
    if j == k:
        raise ValueError("taboo start j must differ from the taboo state k")
    win = window or certify_window(spec, j, t, start=max(16, 2 * (max(j, k) - spec.r) + 8))
    gen = truncated_generator(spec, win, taboo_absorbing(k))
    mass = _uniformize(gen, gen.index_of(j), t, tol)
    k_idx = gen.index_of(k)
    mass = mass.copy()
    mass[k_idx] = 0.0
    return DistributionVector(gen.states, mass, t, 1.0 - float(mass.sum()),
                              "uniformization", win)


def taboo_cat_r(spec: ProcessSpec, j: int, t: float,
                window: TruncationWindow = None,
                tol: float = DEFAULT_TOL,
                route: str = "decomposition") -> DistributionVector:
    """r-avoiding probabilities of the catastrophe process.

    Avoiding r while catastrophes are possible means no catastrophe fired,
    so A = exp(-xi t) Ahat entrywise; the direct route runs the absorbing
    generator of the full process instead.
    """
    if j <= spec.r:
        raise ValueError(f"need j > r, got j={j}, r={spec.r}")
    if route == "direct":
        return taboo_cat(spec, j, spec.r, t, window, tol)
    dv = taboo_hat(spec, j, spec.r, t, window, tol)
    mass = math.exp(-spec.xi * t) * dv.mass
    return DistributionVector(dv.states, mass, t, 1.0 - float(mass.sum()),
                              "decomposition", dv.window)


def first_visit_cdf_hat(spec: ProcessSpec, j: int, k: int, t: float,
                        window: TruncationWindow = None,
                        tol: float = DEFAULT_TOL) -> float:
    """P(T-hat_{j,k} <= t): one minus the mass on the far side of k."""
    if t == 0.0:
        return 0.0
    dv = taboo_hat(spec, j, k, t, window, tol)
    if j > k:
        keep = dv.states > k
    else:
        keep = dv.states < k
    return 1.0 - float(dv.mass[keep].sum())


def first_visit_cdf_cat(spec: ProcessSpec, j: int, k: int, t: float,
                        window: TruncationWindow = None,
                        tol: float = DEFAULT_TOL) -> float:
    """P(T_{j,k} <= t): one minus all k-avoiding mass (both sides of k)."""
    if t == 0.0:
        return 0.0
    dv = taboo_cat(spec, j, k, t, window, tol)
    return 1.0 - dv.total()


def hat_first_visit_density_r(spec: ProcessSpec, j: int, t: float,
                              window: TruncationWindow = None,
                              tol: float = DEFAULT_TOL) -> float:
    """ghat_{j,r}(t) as absorbed flux beta_{r+1} Ahat_{j,r+1}(t).

    Flux through the absorbing boundary is exact for the truncated chain;
    differentiating the CDF numerically would amplify noise.
    """
    dv = taboo_hat(spec, j, spec.r, t, window, tol)
    return spec.death_rate(spec.r + 1) * dv.probability(spec.r + 1)


def first_visit_density_r(spec: ProcessSpec, j: int, t: float,
                          window: TruncationWindow = None,
                          tol: float = DEFAULT_TOL) -> float:
    """Density of the first visit to r for the catastrophe process.

    g(t) = exp(-xi t) ghat(t) + xi exp(-xi t) [1 - CDFhat(t)].
    """
    if j <= spec.r:
        raise ValueError(f"need j > r, got j={j}, r={spec.r}")
    if t <= 0.0:
        raise ValueError(f"density defined for t > 0, got {t}")
    dv = taboo_hat(spec, j, spec.r, t, window, tol)
    ghat = spec.death_rate(spec.r + 1) * dv.probability(spec.r + 1)
    cdf_hat = dv.defect
    return math.exp(-spec.xi * t) * ghat + spec.xi * math.exp(-spec.xi * t) * (1.0 - cdf_hat)


def first_visit_density(spec: ProcessSpec, j: int, k: int, t: float,
                        window: TruncationWindow = None,
                        tol: float = DEFAULT_TOL) -> float:
    """Density of T_{j,k} as absorbed flux into k on the taboo generator."""
    if j == k:
        raise ValueError("need j != k")
    if t <= 0.0:
        raise ValueError(f"density defined for t > 0, got {t}")
    dv = taboo_cat(spec, j, k, t, window, tol)
    flux = 0.0
    if k > spec.r:
        flux += spec.birth_rate(k - 1) * dv.probability(k - 1)
    if k + 1 <= int(dv.states[-1]):
        flux += spec.death_rate(k + 1) * dv.probability(k + 1)
    if k == spec.r and spec.xi > 0.0:
        flux += spec.xi * float(dv.mass[dv.states > spec.r].sum())
    return flux


def modified_transient(spec: ProcessSpec, j: int, t: float,
                       window: TruncationWindow = None,
                       tol: float = DEFAULT_TOL) -> DistributionVector:
    """Distribution of the modified process M(t) on {r-1, r, ...}.

    The cemetery mass h_{j,r-1}(t) is the CDF of the first effective
    catastrophe time.
    """
    win = window or certify_window(spec, j, t)
    gen = truncated_generator(spec, win, MODIFIED_M)
    mass = _uniformize(gen, gen.index_of(j), t, tol)
    return DistributionVector(gen.states, mass, t, 1.0 - float(mass.sum()),
                              "uniformization", win)


# ---------------------------------------------------------------------------
# time-non-homogeneous routes (Kolmogorov forward ODEs)
# ---------------------------------------------------------------------------

def certify_window_tv(tvspec: TimeVaryingSpec, j: int, t: float,
                      tail_tol: float = DEFAULT_TAIL_TOL) -> TruncationWindow:
    """Window certification against an upper-rate envelope of the rates."""
    grid = np.linspace(tvspec.t0, max(t, tvspec.t0 + 1e-9), 33)
    r = tvspec.r

    def birth_env(n):
        return max(tvspec.birth_rate(n, s) for s in grid)

    def death_env(n):
        return min(tvspec.death_rate(n, s) for s in grid)

    env = ProcessSpec(r, birth_env, death_env, 0.0, name="tv_envelope")
    return certify_window(env, j, t - tvspec.t0, tail_tol)


def _forward_rhs(tvspec, m, absorb_floor):
    idx = np.arange(m)

    def rhs(tau, p):
        alpha, beta = tvspec.tabulate(m, tau)
        alpha[m - 1] = 0.0  # reflecting top
        if absorb_floor:
            alpha[0] = 0.0
            diag = -(alpha + beta)
            out = diag * p
            out[1:] += p[:-1] * alpha[:-1]
            out[:-1] += p[1:] * beta[1:]
            return out
        xi = tvspec.xi(tau)
        diag = -(alpha + beta + xi * (idx > 0))
        out = diag * p
        out[1:] += p[:-1] * alpha[:-1]
        out[:-1] += p[1:] * beta[1:]
        if xi != 0.0:
            out[0] += xi * p[1:].sum()
        return out

    return rhs


def _solve_forward(tvspec, j, t_from, t_to, win, tol, absorb_floor=False,
                   hat=False):
    """Integrate the forward system from e_j at t_from to t_to."""
    m = win.upper + 1
    spec = tvspec
    if hat:
        spec = TimeVaryingSpec(tvspec.r, tvspec.birth_rate, tvspec.death_rate,
                               lambda t: 0.0, t0=tvspec.t0)
    rhs = _forward_rhs(spec, m, absorb_floor)
    p0 = np.zeros(m)
    p0[j - tvspec.r] = 1.0
    if t_to == t_from:
        return p0
    sol = solve_ivp(rhs, (t_from, t_to), p0, method="RK45",
                    rtol=tol / 10.0, atol=tol / 10.0)
    if not sol.success:
        raise RuntimeError(f"forward ODE failed at t={sol.t[-1]}: {sol.message}")
    return sol.y[:, -1]


def _integrated_intensity(tvspec, a, b, tol):
    if b <= a:
        return 0.0
    val, _err = quad(tvspec.xi, a, b, epsabs=tol / 100.0, epsrel=1e-12, limit=200)
    return val


def nonhomogeneous_transient(tvspec: TimeVaryingSpec, j: int, t: float,
                             window: TruncationWindow = None,
                             tol: float = 1e-8,
                             route: str = "direct") -> DistributionVector:
    """p_{j,.}(t | t0) for the time-varying process.

    route="direct" integrates the full forward system; route="decomposition"
    composes catastrophe-free solutions restarted from r at intermediate
    times with exp(-int xi) factors.
    """
    if t < tvspec.t0:
        raise ValueError(f"need t >= t0={tvspec.t0}, got {t}")
    if route not in ("direct", "decomposition"):
        raise ValueError(f"unknown route {route!r}")
    win = window or certify_window_tv(tvspec, j, t)
    states = np.arange(tvspec.r, tvspec.r + win.upper + 1)
    if route == "direct":
        mass = _solve_forward(tvspec, j, tvspec.t0, t, win, tol)
        return DistributionVector(states, mass, t, 1.0 - float(mass.sum()),
                                  "ode", win)
    surv = math.exp(-_integrated_intensity(tvspec, tvspec.t0, t, tol))
    mass = surv * _solve_forward(tvspec, j, tvspec.t0, t, win, tol, hat=True)

    def integrand(tau):
        w = tvspec.xi(tau) * math.exp(-_integrated_intensity(tvspec, tau, t, tol))
        return w * _solve_forward(tvspec, tvspec.r, tau, t, win, tol, hat=True)

    if t > tvspec.t0:
        part, _err = quad_vec(integrand, tvspec.t0, t, epsabs=tol / 10.0)
        mass = mass + part
    return DistributionVector(states, mass, t, 1.0 - float(mass.sum()),
                              "decomposition", win)


def nonhomogeneous_taboo_r(tvspec: TimeVaryingSpec, j: int, t: float,
                           window: TruncationWindow = None,
                           tol: float = 1e-8) -> DistributionVector:
    """r-avoiding probabilities of the time-varying xi=0 twin (floor absorbing)."""
    if j <= tvspec.r:
        raise ValueError(f"need j > r, got j={j}")
    win = window or certify_window_tv(tvspec, j, t)
    states = np.arange(tvspec.r, tvspec.r + win.upper + 1)
    mass = _solve_forward(tvspec, j, tvspec.t0, t, win, tol, absorb_floor=True,
                          hat=True)
    mass = mass.copy()
    mass[0] = 0.0
    return DistributionVector(states, mass, t, 1.0 - float(mass.sum()),
                              "ode", win)


def nonhomogeneous_first_visit_density_r(tvspec: TimeVaryingSpec, j: int, t: float,
                                         window: TruncationWindow = None,
                                         tol: float = 1e-8) -> float:
    """First-visit density to r with time-varying rates and intensity."""
    if t <= tvspec.t0:
        raise ValueError(f"density defined for t > t0, got t={t}")
    dv = nonhomogeneous_taboo_r(tvspec, j, t, window, tol)
    ghat = tvspec.death_rate(tvspec.r + 1, t) * dv.probability(tvspec.r + 1)
    cdf_hat = dv.defect
    surv = math.exp(-_integrated_intensity(tvspec, tvspec.t0, t, tol))
    return surv * ghat + tvspec.xi(t) * surv * (1.0 - cdf_hat)
