"""Exact reference implementations of the appendix closed forms.

These serve both as user-facing fast paths for the documented example
processes and as oracles for the numerical engines.  All factorial /
Pochhammer / Beta products are assembled in log space: the stationary laws
multiply rapidly growing and rapidly vanishing factors.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .specfun import (AccuracyBudget, DEFAULT_BUDGET, bessel_i_scaled,
                      gauss_2f1, kummer_phi, log_beta, tricomi_psi,
                      upper_incomplete_gamma)


def a1_stationary(variant: str, *, r: int = 0, n_max: int = 40,
                  alpha: float = None, xi: float = None,
                  k: int = None) -> np.ndarray:
    """Stationary law of the birth process with catastrophes.

    variant="const_rate": alpha_n = alpha, geometric law.
    variant="linear_rate": alpha_n = xi (n + k), q_n = (r+k)/((n+k)(n+k+1)).
    """
    ns = np.arange(r, r + n_max + 1)
    if variant == "const_rate":
        if alpha is None or xi is None or alpha <= 0 or xi <= 0:
            raise ValueError("const_rate needs alpha > 0 and xi > 0")
        return xi / (xi + alpha) * (alpha / (xi + alpha)) ** (ns - r)
    if variant == "linear_rate":
        if k is None or k <= 0 or int(k) != k:
            raise ValueError("linear_rate needs a positive integer k")
        return (r + k) / ((ns + k) * (ns + k + 1.0))
    raise ValueError(f"unknown A1 variant {variant!r}")


def _bessel_tail(rho: float, x: float, k_start: int, budget: AccuracyBudget) -> float:
    """sum_{k >= k_start} rho^(-k/2) e^(-x) I_k(x) with a geometric remainder bound.

    Uses I_{k+1}(x)/I_k(x) <= x/(2(k+1)), so once rho^(-1/2) x / (2(k+1)) < 1
    the remainder is dominated by a geometric series.
    """
    rinv = rho ** -0.5
    total = 0.0
    k = k_start
    for _ in range(budget.max_terms):
        term = rinv ** k * bessel_i_scaled(k, x, budget)
        total += term
        ratio = rinv * x / (2.0 * (k + 1.0))
        if ratio < 1.0 and term * ratio / (1.0 - ratio) < budget.rel_tol * max(total, 1e-300):
            return total
        k += 1
    raise RuntimeError(f"Bessel tail did not converge from k={k_start} (x={x})")


def ie_transient_hat(alpha: float, beta: float, tau: float, j: int, n: int,
                     budget: AccuracyBudget = DEFAULT_BUDGET) -> float:
    """Constant-rate immigration-emigration transition law at effective time tau.

    Three-term modified-Bessel series; the time-varying process reduces to
    this with tau = int w.  Everything is scaled by e^-x so the prefactor
    exp(x - (alpha+beta) tau) <= 1 and nothing overflows.
    """
    if alpha <= 0 or beta <= 0 or tau < 0 or j < 0 or n < 0:
        raise ValueError("need alpha, beta > 0, tau >= 0 and j, n >= 0")
    if tau == 0.0:
        return 1.0 if n == j else 0.0
    rho = alpha / beta
    x = 2.0 * math.sqrt(alpha * beta) * tau
    pref = math.exp(x - (alpha + beta) * tau)
    val = rho ** ((n - j) / 2.0) * bessel_i_scaled(abs(n - j), x, budget)
    val += rho ** ((n - j - 1) / 2.0) * bessel_i_scaled(n + j + 1, x, budget)
    val += (1.0 - rho) * rho ** n * _bessel_tail(rho, x, n + j + 2, budget)
    return pref * val


def a2_effective_time(w, t0: float, t: float) -> float:
    """tau = int_{t0}^t w(u) du by adaptive quadrature."""
    if t < t0:
        raise ValueError(f"need t >= t0, got t={t}, t0={t0}")
    if t == t0:
        return 0.0
    tau, _err = quad(w, t0, t, epsabs=1e-13, epsrel=1e-12, limit=200)
    return tau


def a2_transient_hat(alpha: float, beta: float, w, t0: float, t: float,
                     j: int, n: int,
                     budget: AccuracyBudget = DEFAULT_BUDGET) -> float:
    """Transition law of the time-varying immigration-emigration twin."""
    return ie_transient_hat(alpha, beta, a2_effective_time(w, t0, t), j, n, budget)


def a2_first_visit_hat(alpha: float, beta: float, w, t0: float, t: float,
                       j: int, budget: AccuracyBudget = DEFAULT_BUDGET) -> float:
    """First-visit density to 0 of the time-varying twin, started at j > 0."""
    if j <= 0:
        raise ValueError(f"need j > 0, got {j}")
    tau = a2_effective_time(w, t0, t)
    if tau <= 0.0:
        return 0.0
    rho = alpha / beta
    x = 2.0 * math.sqrt(alpha * beta) * tau
    pref = math.exp(x - (alpha + beta) * tau)
    return j * w(t) / tau * pref * rho ** (-j / 2.0) * bessel_i_scaled(j, x, budget)


@dataclass(frozen=True)
class A3Params:
    """Constant-rate immigration-emigration process with catastrophes."""

    alpha: float
    beta: float
    xi: float

    def __post_init__(self):
        if min(self.alpha, self.beta, self.xi) <= 0:
            raise ValueError("A3 needs alpha, beta, xi > 0")
        if not (0.0 < self.q < 1.0):
            raise ValueError(f"derived q={self.q} outside (0,1)")

    @property
    def q(self) -> float:
        s = self.alpha + self.beta + self.xi
        return (s - math.sqrt(s * s - 4.0 * self.alpha * self.beta)) / (2.0 * self.beta)

    @property
    def rho(self) -> float:
        return self.alpha / self.beta


@dataclass
class A3Bundle:
    q: float
    q_n: np.ndarray
    gamma_hat_at_xi: float
    mean_first_visit: float
    var_first_visit: float
    mean_catastrophe: float
    p_star: np.ndarray
    p: np.ndarray


def a3_bundle(params: A3Params, j: int, t: float, n_max: int = 40,
              budget: AccuracyBudget = DEFAULT_BUDGET) -> A3Bundle:
    """Every constant-rate closed form at once.

    The first-visit moments evaluate the transform formulas with the exact
    derivative of gammahat_{j,0}(lambda) = ((lambda+alpha+beta -
    sqrt((lambda+alpha+beta)^2-4 alpha beta))/(2 alpha))^j at lambda = xi.
    """
    a, b, xi = params.alpha, params.beta, params.xi
    q, rho = params.q, params.rho
    ns = np.arange(n_max + 1)
    q_n = (1.0 - q) * q ** ns

    u = b * q / a                      # gammahat_{1,0}(xi)
    s = xi + a + b
    disc = math.sqrt(s * s - 4.0 * a * b)
    du = (1.0 - s / disc) / (2.0 * a)  # d/dlambda of the base
    gj = u ** j
    dgj = j * u ** (j - 1) * du if j >= 1 else 0.0
    mean_t = (1.0 - gj) / xi           # gammahat_{0,0} = 1
    var_t = (1.0 - gj ** 2 + 2.0 * xi * dgj) / xi ** 2
    mean_c = (1.0 + (1.0 - q) / q * gj) / xi

    a_star, b_star = a / q, b * q
    k_top = n_max
    p_star_full = [ie_transient_hat(a_star, b_star, t, 0, k, budget)
                   for k in range(n_max + 1)]
    while sum(p_star_full) < 1.0 - 1e-12 and k_top < n_max + 400:
        k_top += 1
        p_star_full.append(ie_transient_hat(a_star, b_star, t, 0, k_top, budget))
    p_star_full = np.array(p_star_full)
    tail_p = np.cumsum(p_star_full[::-1])[::-1]

    p_star = p_star_full[: n_max + 1]
    p_hat_j = np.array([ie_transient_hat(a, b, t, j, n, budget) for n in ns])
    p_hat_0 = np.array([ie_transient_hat(a, b, t, 0, n, budget) for n in ns])
    p = (math.exp(-xi * t) * (p_hat_j - p_hat_0)
         + (1.0 - q) * q ** ns * tail_p[: n_max + 1]
         + p_star * q ** (ns + 1))
    return A3Bundle(q, q_n, gj, mean_t, var_t, mean_c, p_star, p)


def a4_stationary(nu: float, beta: float, xi: float, n_max: int = 40,
                  budget: AccuracyBudget = DEFAULT_BUDGET) -> np.ndarray:
    """Stationary law of the immigration-death process with catastrophes.

    q_n = (rho^n/n!) e^-rho (xi/beta) B(n+1, xi/beta)
          Phi(xi/beta, xi/beta + n + 1; rho),  rho = nu/beta,
    with the beta=xi special case reducing to scaled Poisson tails.
    """
    if min(nu, beta, xi) <= 0:
        raise ValueError("A4 needs nu, beta, xi > 0")
    rho = nu / beta
    if abs(beta - xi) <= 1e-12 * max(beta, xi):
        # q_n = rho^-1 e^-rho sum_{i>n} rho^i / i!: Poisson tails summed
        # forwards (no 1-cdf cancellation), accumulated from the top down.
        top = n_max + 1 + int(rho + 12.0 * math.sqrt(rho + 1.0) + 40.0)
        i = np.arange(top + 1, dtype=np.float64)
        pmf = np.exp(i * math.log(rho) - rho - np.array([math.lgamma(v + 1) for v in i]))
        tails = np.cumsum(pmf[::-1])[::-1]
        return tails[1: n_max + 2] / rho
    b = xi / beta
    out = np.empty(n_max + 1)
    for n in range(n_max + 1):
        lg = (n * math.log(rho) - math.lgamma(n + 1) - rho + math.log(b)
              + log_beta(n + 1.0, b))
        out[n] = math.exp(lg) * kummer_phi(b, b + n + 1.0, rho, budget)
    return out


def a4_q0(nu: float, beta: float, xi: float,
          budget: AccuracyBudget = DEFAULT_BUDGET) -> float:
    """q_0 = e^-rho (xi/beta) sum_k rho^k / (k! (k + xi/beta))."""
    if min(nu, beta, xi) <= 0:
        raise ValueError("A4 needs nu, beta, xi > 0")
    rho, b = nu / beta, xi / beta
    total = 0.0
    term = 1.0  # rho^k / k!
    for k in range(budget.max_terms):
        contrib = term / (k + b)
        total += contrib
        if contrib < budget.rel_tol * total and k > rho:
            return math.exp(-rho) * b * total
        term *= rho / (k + 1.0)
    raise RuntimeError("A4 q0 series did not converge")


@dataclass
class A5Bundle:
    case: str                 # "alpha<beta" | "alpha=beta" | "alpha>beta"
    p_hat_0: np.ndarray       # transition law of the xi=0 twin from state 0
    mean_hat: float           # E[Nhat(t) | j]
    mean: float               # E[N(t) | j]
    limit_mean: float         # may be inf
    q_n: np.ndarray
    q0_gamma_identity: float  # incomplete-gamma form of q_0 (alpha=beta), else nan


def _a5_phat0(alpha, nu, beta, t, n_max):
    av = nu / alpha
    ns = np.arange(n_max + 1)
    if t == 0.0:
        out = np.zeros(n_max + 1)
        out[0] = 1.0
        return out
    log_rf = np.array([math.lgamma(av + n) - math.lgamma(av) for n in ns])
    if abs(alpha - beta) <= 1e-12 * max(alpha, beta):
        z = alpha * t / (1.0 + alpha * t)
        log_pref = -av * math.log1p(alpha * t)
    else:
        e = math.exp((alpha - beta) * t)
        denom = alpha * e - beta
        z = alpha * (e - 1.0) / denom  # positive for t > 0 in both orderings
        log_pref = av * (math.log(abs(alpha - beta)) - math.log(abs(denom)))
    logs = (log_pref + log_rf - np.array([math.lgamma(n + 1) for n in ns])
            + ns * math.log(z))
    return np.exp(logs)


def a5_bundle(alpha: float, nu: float, beta: float, xi: float, j: int,
              t: float, n_max: int = 40,
              budget: AccuracyBudget = DEFAULT_BUDGET) -> A5Bundle:
    """Closed forms for the linear immigration-birth-death process."""
    if min(alpha, nu, beta, xi) <= 0:
        raise ValueError("A5 needs alpha, nu, beta, xi > 0")
    av = nu / alpha
    ns = np.arange(n_max + 1)
    log_rf = np.array([math.lgamma(av + n) - math.lgamma(av) for n in ns])
    log_fact = np.array([math.lgamma(n + 1) for n in ns])

    p_hat_0 = _a5_phat0(alpha, nu, beta, t, n_max)

    x_hat = alpha - beta
    if x_hat == 0.0:
        mean_hat = j + nu * t
    else:
        mean_hat = j * math.exp(x_hat * t) + nu * math.expm1(x_hat * t) / x_hat

    x = alpha - beta - xi
    if abs(x) <= 1e-12 * max(alpha, beta + xi):
        mean = j + nu * t
    else:
        mean = j * math.exp(x * t) + nu * math.expm1(x * t) / x
    limit_mean = nu / (beta + xi - alpha) if alpha < beta + xi else math.inf

    q0_identity = math.nan
    if abs(alpha - beta) <= 1e-12 * max(alpha, beta):
        case = "alpha=beta"
        xa = xi / alpha
        log_q = av * math.log(xa) + log_rf
        psi = np.array([tricomi_psi(av + n, av, xa, budget) for n in ns])
        q_n = np.exp(log_q + np.log(psi))
        q0_identity = (xa ** av * math.exp(xa)
                       * upper_incomplete_gamma(1.0 - av, xa, budget))
    elif alpha < beta:
        case = "alpha<beta"
        b = xi / (beta - alpha)
        log_q = (math.log(xi / alpha) + (ns + 1) * math.log(alpha / beta)
                 - log_fact + log_rf + (av - 1.0) * math.log1p(-alpha / beta)
                 + np.array([log_beta(b, n + 1.0) for n in ns]))
        f = np.array([gauss_2f1(av + n, b, n + 1.0 + b, alpha / beta, budget)
                      for n in ns])
        q_n = np.exp(log_q + np.log(f))
    else:
        case = "alpha>beta"
        c = xi / (alpha - beta) + av
        log_q = (math.log(xi / alpha) - log_fact + log_rf
                 + (av - 1.0) * math.log1p(-beta / alpha)
                 + np.array([log_beta(c, n + 1.0) for n in ns]))
        f = np.array([gauss_2f1(av + n, c, c + n + 1.0, beta / alpha, budget)
                      for n in ns])
        q_n = np.exp(log_q + np.log(f))
    return A5Bundle(case, p_hat_0, mean_hat, mean, limit_mean, q_n, q0_identity)
