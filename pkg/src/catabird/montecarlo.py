"""Exact jump-chain simulation: the independent oracle for every
distributional claim made by the analytic engines.

Determinism contract: identical (spec, seed, operation, backend) gives
identical outputs bit for bit.  Each path consumes exactly two RNG draws per
jump from its own substream, so growing the internal rate table replays a
path identically up to where the old table ended.  The catastrophe clock is
off while the process sits at the floor r (a catastrophe there would not
change the state), so catastrophe-labelled events coincide with effective
catastrophes.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq
from scipy.stats import ks_2samp

from . import _backend, _kernels
from .model import ProcessSpec, TimeVaryingSpec

JUMP_CAP = 10 ** 7
_LABELS = ("birth", "death", "catastrophe")


def _tables(spec: ProcessSpec, m: int):
    alpha, beta = spec.tabulate(m)
    return alpha, beta


def _run_batch(kernel_name, spec, j, extra_args, n_paths, seed, jump_cap,
               m0=None):
    """Run a batch kernel, growing the rate table for paths that outgrow it."""
    _backend.configure_threads()
    kern = _kernels.get_kernel(kernel_name)
    m = m0 or max(64, 4 * (j - spec.r) + 16)
    times = np.zeros(n_paths)
    censored = np.zeros(n_paths, np.uint8)
    pending = np.arange(n_paths, dtype=np.int64)
    while pending.size:
        alpha, beta = _tables(spec, m)
        grew = np.zeros(pending.size, np.uint8)
        tt = np.zeros(pending.size)
        cc = np.zeros(pending.size, np.uint8)
        with np.errstate(over="ignore"):
            kern(alpha, beta, spec.xi, j - spec.r, *extra_args, pending,
                 seed, jump_cap, tt, cc, grew)
        done = grew == 0
        times[pending[done]] = tt[done]
        censored[pending[done]] = cc[done]
        pending = pending[~done]
        m *= 2
        if m > 1 << 22:
            raise RuntimeError("rate table exceeded cap; process drifts beyond "
                               "any reasonable window")
    return times, censored


@dataclass
class PathSample:
    """One simulated trajectory: event times, post-event states, labels."""

    seed: int
    horizon: float
    times: np.ndarray
    states: np.ndarray
    labels: np.ndarray  # 0 birth, 1 death, 2 catastrophe
    start: int
    capped: bool = False

    @property
    def jumps(self):
        return [(float(t), int(s), _LABELS[l])
                for t, s, l in zip(self.times, self.states, self.labels)]

    def dump(self, fileobj):
        """One event per line: time,state,label."""
        for t, s, l in zip(self.times, self.states, self.labels):
            fileobj.write(f"{t!r},{s},{_LABELS[l]}\n")


def simulate_path(spec: ProcessSpec, j: int, horizon: float, seed: int,
                  jump_cap: int = JUMP_CAP) -> PathSample:
    """Exact continuous-time jump chain up to ``horizon`` (substream 0 of seed)."""
    if horizon <= 0:
        raise ValueError(f"horizon must be > 0, got {horizon}")
    _backend.configure_threads()
    kern = _kernels.get_kernel("path_events")
    m = max(64, 4 * (j - spec.r) + 16)
    cap_buf = 4096
    with np.errstate(over="ignore"):
        s, g = _kernels._stream_init(seed, 0)
    i = j - spec.r
    t = 0.0
    jumps_done = 0
    chunks = []
    capped = False
    while True:
        alpha, beta = _tables(spec, m)
        times = np.empty(cap_buf)
        states = np.empty(cap_buf, np.int64)
        labels = np.empty(cap_buf, np.int64)
        with np.errstate(over="ignore"):
            n, status, t, i, s, g, jumps_done = kern(
                alpha, beta, spec.xi, i, t, s, g, horizon, jumps_done,
                jump_cap, times, states, labels)
        chunks.append((times[:n].copy(), states[:n].copy(), labels[:n].copy()))
        if status == _kernels.DONE:
            break
        if status == _kernels.BUF_FULL:
            cap_buf *= 2
        elif status == _kernels.TABLE_TOP:
            m *= 2
        else:  # CAP_HIT
            capped = True
            break
    times = np.concatenate([c[0] for c in chunks]) if chunks else np.empty(0)
    states = np.concatenate([c[1] for c in chunks]) + spec.r
    labels = np.concatenate([c[2] for c in chunks])
    return PathSample(seed, horizon, times, states.astype(np.int64),
                      labels.astype(np.int64), j, capped)


@dataclass
class EstimateWithSE:
    """Point estimate with standard error."""

    value: float
    se: float

    def within(self, target: float, n_se: float = 3.0) -> bool:
        return abs(self.value - target) <= n_se * self.se


@dataclass
class FirstVisitEstimate:
    """Sample statistics of hitting times, with an empirical CDF."""

    j: int
    k: int
    n_paths: int
    n_censored: int
    mean: EstimateWithSE
    variance: EstimateWithSE
    sorted_times: np.ndarray = field(repr=False)

    def cdf(self, t) -> np.ndarray:
        return np.searchsorted(self.sorted_times, np.asarray(t), side="right") \
            / self.sorted_times.shape[0]

    def cdf_se(self, t) -> np.ndarray:
        f = self.cdf(t)
        return np.sqrt(f * (1.0 - f) / self.sorted_times.shape[0])


def _moment_stats(samples: np.ndarray):
    n = samples.shape[0]
    mean = samples.mean()
    centered = samples - mean
    var = centered @ centered / (n - 1)
    m4 = (centered ** 4).mean()
    se_mean = math.sqrt(var / n)
    se_var = math.sqrt(max(m4 - var ** 2 * (n - 3) / (n - 1), 0.0) / n)
    return EstimateWithSE(float(mean), se_mean), EstimateWithSE(float(var), se_var)


def estimate_first_visit(spec: ProcessSpec, j: int, k: int, n_paths: int,
                         seed: int, jump_cap: int = JUMP_CAP) -> FirstVisitEstimate:
    """Hitting times of k from j; paths run until they hit (a.s. finite for xi>0)."""
    if n_paths < 100:
        raise ValueError(f"need n_paths >= 100, got {n_paths}")
    if j == k:
        raise ValueError("need j != k")
    times, censored = _run_batch("first_visit", spec, j, (k - spec.r,),
                                 n_paths, seed, jump_cap,
                                 m0=max(64, 4 * (max(j, k) - spec.r) + 16))
    ok = censored == 0
    hits = times[ok]
    if hits.size < 2:
        raise RuntimeError("all paths censored; jump cap too small")
    mean, var = _moment_stats(hits)
    return FirstVisitEstimate(j, k, n_paths, int((~ok).sum()), mean, var,
                              np.sort(hits))


def estimate_catastrophe_time(spec: ProcessSpec, j: int, n_paths: int,
                              seed: int, jump_cap: int = JUMP_CAP) -> FirstVisitEstimate:
    """Time of the first effective catastrophe (catastrophe-labelled jump)."""
    if spec.xi <= 0.0:
        raise ValueError("effective catastrophes need xi > 0")
    if n_paths < 100:
        raise ValueError(f"need n_paths >= 100, got {n_paths}")
    times, censored = _run_batch("catastrophe", spec, j, (), n_paths, seed,
                                 jump_cap)
    ok = censored == 0
    hits = times[ok]
    if hits.size < 2:
        raise RuntimeError("all paths censored; jump cap too small")
    mean, var = _moment_stats(hits)
    return FirstVisitEstimate(j, spec.r - 1, n_paths, int((~ok).sum()),
                              mean, var, np.sort(hits))


@dataclass
class StationaryEstimate:
    """Batch-means occupancy fractions after burn-in."""

    states: np.ndarray
    occupancy: np.ndarray
    se: np.ndarray

    def probability(self, n: int) -> EstimateWithSE:
        i = int(n - self.states[0])
        return EstimateWithSE(float(self.occupancy[i]), float(self.se[i]))


def estimate_stationary(spec: ProcessSpec, j: int, burn_in: float,
                        horizon: float, seed: int, n_batches: int = 50,
                        jump_cap: int = JUMP_CAP) -> StationaryEstimate:
    """Time-average occupancy over one long path, batch-means standard errors."""
    if horizon <= burn_in:
        raise ValueError("need horizon > burn_in")
    _backend.configure_threads()
    kern = _kernels.get_kernel("occupancy")
    m = max(64, 4 * (j - spec.r) + 16)
    while True:
        alpha, beta = _tables(spec, m)
        occ = np.zeros((n_batches, m))
        with np.errstate(over="ignore"):
            status = kern(alpha, beta, spec.xi, j - spec.r, seed, burn_in,
                          horizon, occ, jump_cap)
        if status == _kernels.DONE:
            break
        if status == _kernels.CAP_HIT:
            raise RuntimeError("jump cap hit before the horizon")
        m *= 2
        if m > 1 << 22:
            raise RuntimeError("rate table exceeded cap")
    batch_len = (horizon - burn_in) / n_batches
    frac = occ / batch_len
    est = frac.mean(axis=0)
    se = frac.std(axis=0, ddof=1) / math.sqrt(n_batches)
    states = np.arange(spec.r, spec.r + m)
    return StationaryEstimate(states, est, se)


@dataclass
class MinCharacterizationSample:
    """Paired samples for the min(T-hat, Z) distributional identity."""

    t_direct: np.ndarray      # first-visit times of the catastrophe process
    t_min: np.ndarray         # min(T-hat, Z) with Z exponential / hazard-xi
    n_censored_direct: int
    n_censored_hat: int
    ks_statistic: float
    ks_pvalue: float

    def ks_critical(self, level: float = 0.01) -> float:
        n, m = self.t_direct.shape[0], self.t_min.shape[0]
        c = math.sqrt(-math.log(level / 2.0) / 2.0)
        return c * math.sqrt((n + m) / (n * m))


def sample_min_characterization(spec: ProcessSpec, j: int, n_paths: int,
                                seed: int,
                                jump_cap: int = JUMP_CAP) -> MinCharacterizationSample:
    """Simulate T_{j,r} and, independently, min(T-hat_{j,r}, Z), Z ~ Exp(xi).

    Requires P(T-hat < inf) = 1 (the caller asserts recurrence); hat paths
    that exceed the jump cap are reported as censoring and dropped, which
    invalidates the comparison if frequent.
    """
    if spec.xi <= 0.0:
        raise ValueError("the characterization needs xi > 0")
    if j <= spec.r:
        raise ValueError(f"need j > r, got j={j}")
    direct = estimate_first_visit(spec, j, spec.r, n_paths, seed, jump_cap)
    hat = estimate_first_visit(spec.without_catastrophes(), j, spec.r,
                               n_paths, seed + 1, jump_cap)
    _backend.configure_threads()
    z = np.empty(hat.sorted_times.shape[0])
    with np.errstate(over="ignore"):
        _kernels.get_kernel("exp_batch")(seed + 2, 0, spec.xi, z)
    t_min = np.minimum(hat.sorted_times, z)
    ks, pv = ks_2samp(direct.sorted_times, t_min)
    return MinCharacterizationSample(direct.sorted_times, np.sort(t_min),
                                     direct.n_censored, hat.n_censored,
                                     float(ks), float(pv))


# ---------------------------------------------------------------------------
# time-varying simulation (inversion of the integrated rates; oracle-grade)
# ---------------------------------------------------------------------------

class _TVPathSampler:
    """Exact event-time sampling for time-varying rates by inversion."""

    def __init__(self, tvspec: TimeVaryingSpec, include_xi: bool):
        self.tv = tvspec
        self.include_xi = include_xi

    def total_rate(self, n, t):
        tv = self.tv
        rate = tv.birth_rate(n, t)
        if n > tv.r:
            rate += tv.death_rate(n, t)
            if self.include_xi:
                rate += tv.xi(t)
        return rate

    def next_jump(self, n, t, target):
        """Solve int_t^{t+h} rate(n,u) du = target for h."""
        def hazard(h):
            val, _ = quad(lambda u: self.total_rate(n, u), t, t + h,
                          epsabs=1e-12, epsrel=1e-10, limit=200)
            return val - target

        hi = max(1.0, target / max(self.total_rate(n, t), 1e-12))
        while hazard(hi) < 0.0:
            hi *= 2.0
            if hi > 1e8:
                raise RuntimeError("time-varying rate integral does not reach target")
        return brentq(hazard, 0.0, hi, xtol=1e-12, rtol=1e-12)


def _tv_first_visit_hat(tvspec: TimeVaryingSpec, j: int, n_paths: int,
                        seed: int, jump_cap: int = 100_000) -> np.ndarray:
    """First-visit times to r of the time-varying xi=0 twin, by inversion."""
    sampler = _TVPathSampler(tvspec, include_xi=False)
    out = np.empty(n_paths)
    with np.errstate(over="ignore"):
        for p in range(n_paths):
            s, g = _kernels._stream_init(seed, p)
            n, t = j, tvspec.t0
            for _ in range(jump_cap):
                s, u = _kernels._next_u01(s, g)
                h = sampler.next_jump(n, t, -math.log(u))
                t = t + h
                s, u = _kernels._next_u01(s, g)
                birth = tvspec.birth_rate(n, t)
                tot = birth + (tvspec.death_rate(n, t) if n > tvspec.r else 0.0)
                n = n + 1 if u * tot < birth else n - 1
                if n == tvspec.r:
                    break
            else:
                raise RuntimeError("time-varying path exceeded jump cap")
            out[p] = t
    return out


def _tv_hazard_inverse(tvspec: TimeVaryingSpec, u: float) -> float:
    """Z with P(Z > t) = exp(-int_{t0}^t xi): solve int xi = -ln(u)."""
    target = -math.log(u)

    def gap(t):
        val, _ = quad(tvspec.xi, tvspec.t0, t, epsabs=1e-12, epsrel=1e-10,
                      limit=200)
        return val - target

    hi = tvspec.t0 + 1.0
    while gap(hi) < 0.0:
        hi = tvspec.t0 + (hi - tvspec.t0) * 2.0
        if hi - tvspec.t0 > 1e8:
            raise RuntimeError("intensity integral does not diverge fast enough")
    return brentq(gap, tvspec.t0, hi, xtol=1e-12, rtol=1e-12)


def sample_min_characterization_tv(tvspec: TimeVaryingSpec, j: int,
                                   n_paths: int, seed: int,
                                   jump_cap: int = 100_000) -> np.ndarray:
    """Samples of min(T-hat_{j,r}, Z) with Z having hazard xi(t)."""
    t_hat = _tv_first_visit_hat(tvspec, j, n_paths, seed, jump_cap)
    z = np.empty(n_paths)
    with np.errstate(over="ignore"):
        for p in range(n_paths):
            s, g = _kernels._stream_init(seed + 1, p)
            s, u = _kernels._next_u01(s, g)
            z[p] = _tv_hazard_inverse(tvspec, u)
    return np.minimum(t_hat, z)


def ks_two_sample(a: np.ndarray, b: np.ndarray):
    """Two-sample KS statistic, p-value and the 1% critical value."""
    ks, pv = ks_2samp(a, b)
    n, m = a.shape[0], b.shape[0]
    crit = math.sqrt(-math.log(0.005) / 2.0) * math.sqrt((n + m) / (n * m))
    return float(ks), float(pv), crit
