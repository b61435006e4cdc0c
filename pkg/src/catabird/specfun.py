"""Scalar special functions backing the closed-form stationary laws.

Everything is computed from the defining series or integral representation
with an explicit accuracy budget; ratios of gamma/beta factors go through
log space because the closed forms multiply huge and tiny factors.
"""

import math
from dataclasses import dataclass

from scipy.integrate import quad


class ConvergenceError(RuntimeError):
    """A series or continued fraction did not meet its budget."""


@dataclass(frozen=True)
class AccuracyBudget:
    """Relative tolerance and term cap for series/quadrature evaluation."""

    rel_tol: float = 1e-12
    max_terms: int = 600

    def __post_init__(self):
        if not (0.0 < self.rel_tol <= 1e-6):
            raise ValueError(f"rel_tol must be in (0, 1e-6], got {self.rel_tol}")
        if self.max_terms < 32:
            raise ValueError(f"max_terms must be >= 32, got {self.max_terms}")


DEFAULT_BUDGET = AccuracyBudget()


def _sum_series(first_term: float, ratio_fn, budget: AccuracyBudget,
                what: str) -> float:
    """Sum t0 + t0*r(0) + ... stopping after 3 consecutive negligible terms.

    ``ratio_fn(k)`` maps term k to term k+1.  The 3-in-a-row rule guards
    against plateaus in alternating or hump-shaped term sequences.
    """
    term = first_term
    total = term
    small = 0
    for k in range(budget.max_terms):
        term *= ratio_fn(k)
        total += term
        if not math.isfinite(total):
            raise OverflowError(f"{what}: partial sums exceed float range")
        if abs(term) < budget.rel_tol * abs(total):
            small += 1
            if small >= 3:
                return total
        else:
            small = 0
    raise ConvergenceError(f"{what}: no convergence within {budget.max_terms} terms")


def bessel_i_scaled(n: int, x: float, budget: AccuracyBudget = DEFAULT_BUDGET) -> float:
    """exp(-x) * I_n(x) for integer n >= 0 and x >= 0.

    The power series is summed with every term pre-multiplied by exp(-x),
    so each term (and the result) stays inside [0, 1].
    """
    if not math.isfinite(x):
        raise ValueError(f"x must be finite, got {x}")
    if x < 0 or n < 0:
        raise ValueError(f"need n >= 0 and x >= 0, got n={n}, x={x}")
    if x == 0.0:
        return 1.0 if n == 0 else 0.0
    log_t0 = n * math.log(x / 2.0) - x - math.lgamma(n + 1)
    if log_t0 < -745.0:
        return 0.0
    h = 0.25 * x * x

    return _sum_series(math.exp(log_t0),
                       lambda k: h / ((k + 1.0) * (n + k + 1.0)),
                       budget, "bessel_i_scaled")


def kummer_phi(a: float, c: float, x: float,
               budget: AccuracyBudget = DEFAULT_BUDGET) -> float:
    """Confluent hypergeometric function of the first kind, series definition."""
    if c <= 0 and c == math.floor(c):
        raise ValueError(f"c must not be a non-positive integer, got c={c}")
    if x == 0.0:
        return 1.0
    return _sum_series(1.0,
                       lambda k: (a + k) / (c + k) * x / (k + 1.0),
                       budget, "kummer_phi")


def gauss_2f1(a: float, b: float, c: float, x: float,
              budget: AccuracyBudget = DEFAULT_BUDGET) -> float:
    """Gauss hypergeometric series F(a,b;c;x) for 0 <= x < 1."""
    if c <= 0 and c == math.floor(c):
        raise ValueError(f"c must not be a non-positive integer, got c={c}")
    if not (0.0 <= x < 1.0):
        raise ValueError(f"series route requires 0 <= x < 1, got x={x}")
    if x == 0.0:
        return 1.0
    try:
        return _sum_series(1.0,
                           lambda k: (a + k) * (b + k) / (c + k) * x / (k + 1.0),
                           budget, "gauss_2f1")
    except ConvergenceError as err:
        raise ConvergenceError(f"gauss_2f1 terms not decreasing within budget "
                               f"(a={a}, b={b}, c={c}, x={x})") from err


def log_beta(a: float, b: float) -> float:
    """ln B(a,b) through log-gamma."""
    if a <= 0 or b <= 0:
        raise ValueError(f"beta function needs positive arguments, got ({a}, {b})")
    return math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)


def tricomi_psi(a: float, c: float, x: float,
                budget: AccuracyBudget = DEFAULT_BUDGET) -> float:
    """Confluent hypergeometric function of the second kind, a > 0, x > 0.

    Adaptive quadrature of Gamma(a)^-1 * int_0^inf exp(-x t) t^(a-1)
    (1+t)^(c-a-1) dt, split at t=1; the tail uses t = exp(u) so the
    integrand decays double-exponentially.  Quadrature is preferred over the
    Kummer connection formula, which cancels badly near integer c.
    """
    if a <= 0 or x <= 0:
        raise ValueError(f"need a > 0 and x > 0, got a={a}, x={x}")
    eps = budget.rel_tol / 10.0
    pw = c - a - 1.0

    def head(t):
        if t <= 0.0:
            return 0.0
        return math.exp(-x * t + (a - 1.0) * math.log(t) + pw * math.log1p(t))

    def tail(u):
        # t = e^u, dt = e^u du
        t = math.exp(u)
        lf = -x * t + a * u + pw * math.log1p(t)
        return math.exp(lf) if lf > -745.0 else 0.0

    u_max = max(1.0, math.log(800.0 / x)) if x < 800.0 else 1.0
    h, _ = quad(head, 0.0, 1.0, epsabs=0.0, epsrel=eps, limit=400)
    t, _ = quad(tail, 0.0, u_max, epsabs=h * eps, epsrel=eps, limit=400)
    return math.exp(-math.lgamma(a) + math.log(h + t))


def _gamma_cf(s: float, x: float, budget: AccuracyBudget) -> float:
    """Gamma(s,x) by modified Lentz continued fraction, good for x >= s+1."""
    tiny = 1e-300
    b = x + 1.0 - s
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, max(budget.max_terms, 200) + 1):
        an = -i * (i - s)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < budget.rel_tol:
            return math.exp(-x + s * math.log(x)) * h
    raise ConvergenceError(f"incomplete gamma continued fraction stalled "
                           f"(s={s}, x={x})")


def _gamma_series_complement(s: float, x: float, budget: AccuracyBudget) -> float:
    """Gamma(s,x) = Gamma(s) - lower series, for s > 0 and x < s+1."""
    term = 1.0 / s
    total = term
    for k in range(1, budget.max_terms + 1):
        term *= x / (s + k)
        total += term
        if abs(term) < budget.rel_tol * abs(total):
            lower = math.exp(-x + s * math.log(x)) * total
            return math.exp(math.lgamma(s)) - lower
    raise ConvergenceError(f"incomplete gamma series stalled (s={s}, x={x})")


def _exp_integral_e1(x: float, budget: AccuracyBudget) -> float:
    """E_1(x) = Gamma(0,x): series below 1, continued fraction above.

    Series: E1(x) = -gamma - ln x + sum_{k>=1} (-1)^(k+1) x^k / (k k!).
    """
    if x > 1.0:
        return _gamma_cf(0.0, x, budget)
    euler = 0.5772156649015328606
    total = -euler - math.log(x)
    term = 1.0
    for k in range(1, budget.max_terms + 1):
        term *= -x / k
        contrib = -term / k
        total += contrib
        if abs(contrib) < budget.rel_tol * abs(total):
            return total
    raise ConvergenceError(f"E1 series stalled (x={x})")


def upper_incomplete_gamma(s: float, x: float,
                           budget: AccuracyBudget = DEFAULT_BUDGET) -> float:
    """Gamma(s,x) for x > 0 and any real s.

    s > 0 follows the classic split (series complement below x = s+1,
    continued fraction above).  s <= 0 steps down from a positive shift via
    Gamma(s,x) = (Gamma(s+1,x) - x^s e^-x)/s, routing integer s through
    E_1 so no step divides by zero.
    """
    if x <= 0:
        raise ValueError(f"need x > 0, got x={x}")
    if s > 0:
        if x >= s + 1.0:
            return _gamma_cf(s, x, budget)
        return _gamma_series_complement(s, x, budget)
    if s == math.floor(s):
        g = _exp_integral_e1(x, budget)
        sigma = 0.0
    else:
        if x >= s + 1.0 and x >= 1.0:
            return _gamma_cf(s, x, budget)
        m = int(math.ceil(-s)) + 1
        sigma = s + m  # in (1, 2)
        g = _gamma_series_complement(sigma, x, budget) if x < sigma + 1.0 \
            else _gamma_cf(sigma, x, budget)
    emx = math.exp(-x)
    while sigma > s:
        sigma -= 1.0
        g = (g - math.pow(x, sigma) * emx) / sigma
    return g
