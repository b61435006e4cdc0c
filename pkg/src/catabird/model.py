"""Process specifications and truncated generator construction.

A process lives on {r, r+1, ...}: births at rate alpha_n, deaths at rate
beta_n, and (total) catastrophes at rate xi that reset the state to the
reflecting floor r.  The numerical engines work on the finite window
{r, ..., r+N} with a reflecting upper boundary (top birth rate zeroed),
which keeps every conservative variant a proper probability computation.
Internal indexing is i = n - r; the modified process appends its absorbing
cemetery state r-1 at index 0 of an extended window.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

Rate = Callable[[int], float]
TimeRate = Callable[[int, float], float]


@dataclass(frozen=True)
class ProcessSpec:
    """Birth-death process with total catastrophes to the floor state r.

    ``birth_rate(n)`` must be defined (and positive) for n >= r,
    ``death_rate(n)`` (nonnegative) for n >= r+1; ``xi >= 0``.
    """

    r: int
    birth_rate: Rate
    death_rate: Rate
    xi: float
    name: str = "custom"

    def __post_init__(self):
        if self.r < 0:
            raise ValueError(f"floor state must be >= 0, got r={self.r}")
        if not (self.xi >= 0.0 and np.isfinite(self.xi)):
            raise ValueError(f"catastrophe rate must be finite and >= 0, got {self.xi}")

    def without_catastrophes(self) -> "ProcessSpec":
        """The xi=0 twin of this process."""
        return ProcessSpec(self.r, self.birth_rate, self.death_rate, 0.0,
                           name=self.name + "_hat")

    def with_rates(self, birth: Rate, death: Rate, name: str) -> "ProcessSpec":
        return ProcessSpec(self.r, birth, death, self.xi, name=name)

    def tabulate(self, m: int):
        """Rate tables alpha[i], beta[i] for offsets i = 0..m-1 (beta[0]=0)."""
        alpha = np.empty(m)
        beta = np.zeros(m)
        for i in range(m):
            alpha[i] = self.birth_rate(self.r + i)
            if i > 0:
                beta[i] = self.death_rate(self.r + i)
        return alpha, beta


@dataclass(frozen=True)
class TimeVaryingSpec:
    """Time-non-homogeneous process: rates alpha_n(t), beta_n(t), intensity xi(t)."""

    r: int
    birth_rate: TimeRate
    death_rate: TimeRate
    xi: Callable[[float], float]
    t0: float = 0.0

    def __post_init__(self):
        if self.r < 0:
            raise ValueError(f"floor state must be >= 0, got r={self.r}")
        if self.t0 < 0:
            raise ValueError(f"start time must be >= 0, got t0={self.t0}")

    def frozen_at(self, t: float) -> ProcessSpec:
        """Constant-rate snapshot (used for window sizing heuristics)."""
        return ProcessSpec(self.r,
                           lambda n, _t=t: self.birth_rate(n, _t),
                           lambda n, _t=t: self.death_rate(n, _t),
                           self.xi(t), name="frozen_tv")

    def tabulate(self, m: int, t: float):
        alpha = np.empty(m)
        beta = np.zeros(m)
        for i in range(m):
            alpha[i] = self.birth_rate(self.r + i, t)
            if i > 0:
                beta[i] = self.death_rate(self.r + i, t)
        return alpha, beta


@dataclass(frozen=True)
class TruncationWindow:
    """Finite state window {r, ..., r+upper} with a tail-mass target."""

    upper: int
    tail_tol: float = 1e-12

    def __post_init__(self):
        if self.upper < 2:
            raise ValueError(f"window upper offset must be >= 2, got {self.upper}")
        if not (0.0 < self.tail_tol < 1.0):
            raise ValueError(f"tail_tol must be in (0,1), got {self.tail_tol}")

    @property
    def size(self) -> int:
        return self.upper + 1

    def doubled(self) -> "TruncationWindow":
        return TruncationWindow(self.upper * 2, self.tail_tol)


@dataclass(frozen=True)
class GeneratorVariant:
    """Which finite generator to build.

    kind: "cat" (with catastrophes), "hat" (xi removed), "taboo" (row of the
    taboo state zeroed, catastrophes kept as the spec has them), or
    "modified_m" (catastrophes redirected to an absorbing cemetery r-1).
    """

    kind: str
    taboo_state: Optional[int] = None

    def __post_init__(self):
        if self.kind not in ("cat", "hat", "taboo", "modified_m"):
            raise ValueError(f"unknown generator variant {self.kind!r}")
        if self.kind == "taboo" and self.taboo_state is None:
            raise ValueError("taboo variant needs a taboo state")


WITH_CATASTROPHES = GeneratorVariant("cat")
HAT = GeneratorVariant("hat")
MODIFIED_M = GeneratorVariant("modified_m")


def taboo_absorbing(k: int) -> GeneratorVariant:
    return GeneratorVariant("taboo", k)


@dataclass(frozen=True)
class TruncatedGenerator:
    """Tridiagonal-plus-one-column generator on a finite window.

    ``up[i]`` is the rate index i -> i+1, ``down[i]`` the rate i -> i-1 and
    ``jump[i]`` the extra rate i -> jump_to (the catastrophe column).  Row
    sums are zero for every variant (absorbing rows are zero rows), so the
    uniformized kernel is a proper stochastic matrix.
    """

    states: np.ndarray
    up: np.ndarray
    down: np.ndarray
    jump: np.ndarray
    jump_to: int
    diag: np.ndarray
    absorbing: tuple = ()

    @property
    def size(self) -> int:
        return self.states.shape[0]

    def index_of(self, n: int) -> int:
        i = int(n - self.states[0])
        if not (0 <= i < self.size):
            raise ValueError(f"state {n} outside window "
                             f"[{self.states[0]}, {self.states[-1]}]")
        return i

    def uniformization_rate(self) -> float:
        return float(np.max(-self.diag))

    def to_dense(self) -> np.ndarray:
        m = self.size
        q = np.zeros((m, m))
        for i in range(m):
            if i + 1 < m:
                q[i, i + 1] += self.up[i]
            if i - 1 >= 0:
                q[i, i - 1] += self.down[i]
            q[i, self.jump_to] += self.jump[i]
            q[i, i] += self.diag[i]
        return q


def truncated_generator(spec: ProcessSpec, window: TruncationWindow,
                        variant: GeneratorVariant = WITH_CATASTROPHES,
                        ) -> TruncatedGenerator:
    """Build the finite generator for ``variant`` on ``window``."""
    n_up = window.upper
    r = spec.r
    if variant.kind == "modified_m":
        m = n_up + 2
        states = np.arange(r - 1, r + n_up + 1)
        alpha, beta = spec.tabulate(n_up + 1)
        up = np.zeros(m)
        down = np.zeros(m)
        jump = np.zeros(m)
        up[1:m - 1] = alpha[:-1]
        up[m - 1] = 0.0  # reflecting top
        down[2:] = beta[1:]
        jump[2:] = spec.xi  # n > r jumps to the cemetery
        diag = -(up + down + jump)
        diag[0] = 0.0
        return TruncatedGenerator(states, up, down, jump, 0, diag,
                                  absorbing=(0,))

    m = n_up + 1
    states = np.arange(r, r + n_up + 1)
    alpha, beta = spec.tabulate(m)
    up = alpha.copy()
    up[m - 1] = 0.0  # reflecting top
    down = beta.copy()
    jump = np.zeros(m)
    xi = 0.0 if variant.kind == "hat" else spec.xi
    jump[1:] = xi
    absorbing = ()
    if variant.kind == "taboo":
        k = variant.taboo_state
        i = int(k - r)
        if not (0 <= i < m):
            raise ValueError(f"taboo state {k} outside window")
        up[i] = 0.0
        down[i] = 0.0
        jump[i] = 0.0
        absorbing = (i,)
    diag = -(up + down + jump)
    return TruncatedGenerator(states, up, down, jump, 0, diag,
                              absorbing=absorbing)


@dataclass
class ValidationReport:
    ok: bool
    errors: list = field(default_factory=list)      # (state index, message)
    warnings: list = field(default_factory=list)


def validate_spec(spec: ProcessSpec, window: TruncationWindow) -> ValidationReport:
    """Check rate invariants on the window; advisory explosiveness warning.

    The warning fires when the partial sums of 1/alpha_n stall (successive
    window-doubling increments shrink geometrically), which signals a
    convergent sum and hence a potentially explosive catastrophe-free twin.
    """
    report = ValidationReport(ok=True)
    for n in range(spec.r, spec.r + window.upper + 1):
        a = spec.birth_rate(n)
        if not (np.isfinite(a) and a > 0):
            report.errors.append((n, f"birth rate alpha_{n}={a} must be finite and > 0"))
        if n > spec.r:
            b = spec.death_rate(n)
            if not (np.isfinite(b) and b >= 0):
                report.errors.append((n, f"death rate beta_{n}={b} must be finite and >= 0"))
    if spec.xi < 0:
        report.errors.append((spec.r, f"xi={spec.xi} must be >= 0"))
    report.ok = not report.errors

    if report.ok:
        incs = []
        lo = spec.r
        hi = spec.r + max(window.upper, 64)
        for _ in range(4):
            incs.append(sum(1.0 / spec.birth_rate(n) for n in range(lo, hi + 1)))
            lo, hi = hi + 1, 2 * hi
        shrinking = all(incs[i + 1] < 0.75 * incs[i] for i in range(len(incs) - 1))
        if shrinking:
            report.warnings.append(
                "sum of 1/alpha_n appears convergent: the catastrophe-free "
                "process may be explosive (advisory heuristic only)")
    return report


def _require(params: dict, names, preset: str) -> list:
    vals = []
    for name in names:
        if name not in params:
            raise ValueError(f"preset {preset!r} needs parameter {name!r}")
        v = float(params[name])
        if v <= 0:
            raise ValueError(f"preset {preset!r}: parameter {name!r} must be > 0, got {v}")
        vals.append(v)
    return vals


ZOO_PRESETS = {
    "pure_birth_const": ("alpha", "xi"),
    "pure_birth_linear": ("xi", "k"),
    "ie_const": ("alpha", "beta", "xi"),
    "ie_timevarying": ("alpha", "beta", "xi"),
    "id": ("nu", "beta", "xi"),
    "ibd": ("alpha", "nu", "beta", "xi"),
}


def zoo_preset(name: str, **params) -> Union[ProcessSpec, TimeVaryingSpec]:
    """Construct one of the documented example processes.

    pure_birth_const: alpha_n = alpha, beta = 0.
    pure_birth_linear: alpha_n = xi (n + k), beta = 0 (k a positive integer).
    ie_const: alpha_n = alpha, beta_n = beta (immigration-emigration).
    ie_timevarying: alpha_n(t) = alpha w(t), beta_n(t) = beta w(t) with
        w(t) = 1 + w_amp sin(t) and xi(t) = xi + xi_amp sin(t)^2
        (w_amp, xi_amp, t0 optional, defaults 0.5, 0.0, 0.0).
    id: alpha_n = nu, beta_n = beta n (immigration-death).
    ibd: alpha_n = alpha n + nu, beta_n = beta n (immigration-birth-death).

    All presets accept an optional integer floor ``r`` (default 0).
    """
    if name not in ZOO_PRESETS:
        raise ValueError(f"unknown preset {name!r}; known: {sorted(ZOO_PRESETS)}")
    params = dict(params)
    optional = {"ie_timevarying": {"w_amp", "xi_amp", "t0"}}.get(name, set())
    unknown = set(params) - set(ZOO_PRESETS[name]) - optional - {"r"}
    if unknown:
        raise ValueError(f"preset {name!r} does not take {sorted(unknown)}")
    r = int(params.pop("r", 0))
    if name == "pure_birth_const":
        alpha, xi = _require(params, ("alpha", "xi"), name)
        return ProcessSpec(r, lambda n: alpha, lambda n: 0.0, xi, name=name)
    if name == "pure_birth_linear":
        xi, k = _require(params, ("xi", "k"), name)
        if k != int(k):
            raise ValueError(f"preset {name!r}: k must be a positive integer, got {k}")
        return ProcessSpec(r, lambda n: xi * (n + k), lambda n: 0.0, xi, name=name)
    if name == "ie_const":
        alpha, beta, xi = _require(params, ("alpha", "beta", "xi"), name)
        return ProcessSpec(r, lambda n: alpha, lambda n: beta, xi, name=name)
    if name == "ie_timevarying":
        w_amp = float(params.pop("w_amp", 0.5))
        xi_amp = float(params.pop("xi_amp", 0.0))
        t0 = float(params.pop("t0", 0.0))
        alpha, beta, xi = _require(params, ("alpha", "beta", "xi"), name)
        if not (-1.0 < w_amp < 1.0):
            raise ValueError(f"w_amp must be in (-1,1) to keep rates positive, got {w_amp}")

        def w(t):
            return 1.0 + w_amp * np.sin(t)

        return TimeVaryingSpec(
            r,
            lambda n, t: alpha * w(t),
            lambda n, t: beta * w(t),
            lambda t: xi + xi_amp * np.sin(t) ** 2,
            t0=t0)
    if name == "id":
        nu, beta, xi = _require(params, ("nu", "beta", "xi"), name)
        return ProcessSpec(r, lambda n: nu, lambda n: beta * (n - r), xi, name=name)
    # ibd
    alpha, nu, beta, xi = _require(params, ("alpha", "nu", "beta", "xi"), name)
    return ProcessSpec(r, lambda n: alpha * (n - r) + nu,
                       lambda n: beta * (n - r), xi, name=name)
