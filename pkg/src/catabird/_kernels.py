"""Hot numeric kernels: uniformization inner loop and jump-chain simulation.

Every kernel exists in two flavours selected through ``_backend``:

* a numba ``@njit`` compilation of the plain-Python loop source, and
* a pure-numpy fallback (vectorized where it matters, same loop source for
  the scalar-dominated Monte Carlo kernels).

The Monte Carlo kernels share one source for both flavours so that a given
(seed, path index) reproduces the identical trajectory on either backend.

RNG: splitmix64 with one substream per path.  The stream for path ``i`` is
seeded by mixing (seed, i) and stepped with a per-stream odd gamma, which is
the standard SplittableRandom construction.
"""

import math

import numpy as np
from scipy.special import gammaln

from . import _backend

if _backend.HAVE_NUMBA:
    from numba import njit, prange
    from numba.extending import register_jitable
else:  # pragma: no cover - exercised only without numba
    prange = range

    def register_jitable(fn):
        return fn


_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_U1 = np.uint64(1)
_INV53 = 1.0 / 9007199254740992.0  # 2**-53

# event labels
BIRTH = 0
DEATH = 1
CATASTROPHE = 2

# resumable-simulation status codes
DONE = 0
BUF_FULL = 1
TABLE_TOP = 2
CAP_HIT = 3


@register_jitable
def _mix64(z):
    z = (z ^ (z >> _S30)) * _MIX1
    z = (z ^ (z >> _S27)) * _MIX2
    return z ^ (z >> _S31)


@register_jitable
def _stream_init(seed, index):
    # hash (seed, index) into a state and an odd per-stream increment
    s = _mix64(np.uint64(seed) ^ ((np.uint64(index) + _U1) * _GOLDEN))
    g = _mix64(s ^ _MIX2) | _U1
    return s, g


@register_jitable
def _next_u01(s, g):
    s = s + g
    z = _mix64(s)
    return s, (np.float64(z >> _S11) + 0.5) * _INV53


def _sim_first_visit(alpha, beta, xi, j_off, k_off, indices, seed, jump_cap,
                     times, censored, grew):
    """First-visit times to offset ``k_off`` for the paths in ``indices``.

    ``grew[p]`` is set when path p climbs past the rate table; the caller
    re-runs those paths with a larger table (same substream, so the replay
    is identical up to the point where the old table ended).
    """
    m = alpha.shape[0]
    for p in prange(indices.shape[0]):
        idx = indices[p]
        s, g = _stream_init(seed, idx)
        i = j_off
        t = 0.0
        jumps = 0
        while True:
            if i >= m - 1:
                grew[p] = 1
                break
            if jumps >= jump_cap:
                censored[p] = 1
                times[p] = t
                break
            extra = xi if i > 0 else 0.0
            tot = alpha[i] + beta[i] + extra
            s, u = _next_u01(s, g)
            t -= math.log(u) / tot
            s, u = _next_u01(s, g)
            w = u * tot
            if w < alpha[i]:
                i += 1
            elif w < alpha[i] + beta[i]:
                i -= 1
            else:
                i = 0
            jumps += 1
            if i == k_off:
                times[p] = t
                break


def _sim_catastrophe(alpha, beta, xi, j_off, indices, seed, jump_cap,
                     times, censored, grew):
    """Time of the first catastrophe-labelled jump (necessarily from i>0)."""
    m = alpha.shape[0]
    for p in prange(indices.shape[0]):
        idx = indices[p]
        s, g = _stream_init(seed, idx)
        i = j_off
        t = 0.0
        jumps = 0
        while True:
            if i >= m - 1:
                grew[p] = 1
                break
            if jumps >= jump_cap:
                censored[p] = 1
                times[p] = t
                break
            extra = xi if i > 0 else 0.0
            tot = alpha[i] + beta[i] + extra
            s, u = _next_u01(s, g)
            t -= math.log(u) / tot
            s, u = _next_u01(s, g)
            w = u * tot
            jumps += 1
            if w < alpha[i]:
                i += 1
            elif w < alpha[i] + beta[i]:
                i -= 1
            else:
                times[p] = t
                break


def _sim_path_events(alpha, beta, xi, start_i, start_t, s, g, horizon,
                     jumps_done, jump_cap, times, states, labels):
    """Resumable single-path simulation storing every event up to ``horizon``.

    Returns (n_filled, status, t, i, s, g, jumps_done); the caller grows the
    event buffers or the rate table and resumes where the kernel stopped.
    """
    m = alpha.shape[0]
    cap = times.shape[0]
    n = 0
    i = start_i
    t = start_t
    while True:
        if n >= cap:
            return n, BUF_FULL, t, i, s, g, jumps_done
        if i >= m - 1:
            return n, TABLE_TOP, t, i, s, g, jumps_done
        if jumps_done >= jump_cap:
            return n, CAP_HIT, t, i, s, g, jumps_done
        extra = xi if i > 0 else 0.0
        tot = alpha[i] + beta[i] + extra
        s, u = _next_u01(s, g)
        dt = -math.log(u) / tot
        if t + dt > horizon:
            return n, DONE, horizon, i, s, g, jumps_done
        t += dt
        s, u = _next_u01(s, g)
        w = u * tot
        if w < alpha[i]:
            i += 1
            lab = BIRTH
        elif w < alpha[i] + beta[i]:
            i -= 1
            lab = DEATH
        else:
            i = 0
            lab = CATASTROPHE
        times[n] = t
        states[n] = i
        labels[n] = lab
        n += 1
        jumps_done += 1


def _sim_occupancy(alpha, beta, xi, j_off, seed, burn_in, horizon,
                   occ, jump_cap):
    """Accumulate sojourn time per (batch, state) over one long path.

    ``occ`` has shape (n_batches, m).  Returns a status code; TABLE_TOP asks
    the caller to re-run with larger tables.
    """
    m = alpha.shape[0]
    n_batches = occ.shape[0]
    batch_len = (horizon - burn_in) / n_batches
    s, g = _stream_init(seed, 0)
    i = j_off
    t = 0.0
    jumps = 0
    while t < horizon:
        if i >= m - 1:
            return TABLE_TOP
        if jumps >= jump_cap:
            return CAP_HIT
        extra = xi if i > 0 else 0.0
        tot = alpha[i] + beta[i] + extra
        s, u = _next_u01(s, g)
        t_next = t - math.log(u) / tot
        lo = t if t > burn_in else burn_in
        hi = t_next if t_next < horizon else horizon
        if hi > lo:
            b0 = int((lo - burn_in) / batch_len)
            b1 = int((hi - burn_in) / batch_len)
            if b1 >= n_batches:
                b1 = n_batches - 1
            for b in range(b0, b1 + 1):
                seg_lo = burn_in + b * batch_len
                seg_hi = seg_lo + batch_len
                a = lo if lo > seg_lo else seg_lo
                c = hi if hi < seg_hi else seg_hi
                if c > a:
                    occ[b, i] += c - a
        t = t_next
        if t >= horizon:
            break
        s, u = _next_u01(s, g)
        w = u * tot
        if w < alpha[i]:
            i += 1
        elif w < alpha[i] + beta[i]:
            i -= 1
        else:
            i = 0
        jumps += 1
    return DONE


def _exp_batch(seed, offset, rate, out):
    """Independent Exp(rate) draws, one from each stream offset+0..offset+n-1."""
    for p in prange(out.shape[0]):
        s, g = _stream_init(seed, offset + p)
        s, u = _next_u01(s, g)
        out[p] = -math.log(u) / rate


def _uniformize_loop(pdiag, pup, pdown, pjump, jump_to, j, weights):
    """Poisson-weighted accumulation of v P^k, P the uniformized kernel.

    ``pdiag``/``pup``/``pdown``/``pjump`` are the rows of P (rates divided by
    the uniformization rate, diagonal shifted by 1).
    """
    m = pdiag.shape[0]
    kmax = weights.shape[0] - 1
    v = np.zeros(m)
    v[j] = 1.0
    out = np.zeros(m)
    if weights[0] != 0.0:
        out[j] = weights[0]
    nv = np.empty(m)
    for k in range(1, kmax + 1):
        jm = 0.0
        for i in range(m):
            jm += v[i] * pjump[i]
        for i in range(m):
            nv[i] = v[i] * pdiag[i]
        for i in range(m - 1):
            nv[i + 1] += v[i] * pup[i]
        for i in range(1, m):
            nv[i - 1] += v[i] * pdown[i]
        nv[jump_to] += jm
        tmp = v
        v = nv
        nv = tmp
        wk = weights[k]
        if wk != 0.0:
            for i in range(m):
                out[i] += wk * v[i]
    return out


def _uniformize_numpy(pdiag, pup, pdown, pjump, jump_to, j, weights):
    """Vectorized twin of ``_uniformize_loop``."""
    m = pdiag.shape[0]
    kmax = weights.shape[0] - 1
    v = np.zeros(m)
    v[j] = 1.0
    out = weights[0] * v
    for k in range(1, kmax + 1):
        nv = v * pdiag
        nv[1:] += v[:-1] * pup[:-1]
        nv[:-1] += v[1:] * pdown[1:]
        nv[jump_to] += v @ pjump
        v = nv
        if weights[k] != 0.0:
            out += weights[k] * v
    return out


def poisson_weights(a: float, tol: float, kcap: int = 4_000_000) -> np.ndarray:
    """Poisson(a) pmf values 0..K with right tail mass below ``tol``.

    Computed through logs so large ``a`` neither under- nor overflows.
    """
    if a < 0 or not math.isfinite(a):
        raise ValueError(f"invalid uniformization rate*t: {a}")
    if a == 0.0:
        return np.ones(1)
    guess = int(a + 12.0 * math.sqrt(a + 1.0) + 40.0)
    while True:
        ks = np.arange(guess + 1, dtype=np.float64)
        w = np.exp(ks * math.log(a) - a - gammaln(ks + 1.0))
        # right-tail mass by backward summation (no cancellation against 1)
        tail = np.cumsum(w[::-1])[::-1]
        small = np.nonzero(tail <= tol)[0]
        if small.size and small[0] > 0:
            return w[: small[0]]
        guess *= 2
        if guess > kcap:
            raise RuntimeError(
                f"Poisson truncation point exceeds cap {kcap} (rate*t={a})")


if _backend.HAVE_NUMBA:
    _nb = {
        "first_visit": njit(cache=True, parallel=True)(_sim_first_visit),
        "catastrophe": njit(cache=True, parallel=True)(_sim_catastrophe),
        "path_events": njit(cache=True)(_sim_path_events),
        "occupancy": njit(cache=True)(_sim_occupancy),
        "exp_batch": njit(cache=True, parallel=True)(_exp_batch),
        "uniformize": njit(cache=True)(_uniformize_loop),
    }
else:  # pragma: no cover
    _nb = {}

_py = {
    "first_visit": _sim_first_visit,
    "catastrophe": _sim_catastrophe,
    "path_events": _sim_path_events,
    "occupancy": _sim_occupancy,
    "exp_batch": _exp_batch,
    "uniformize": _uniformize_numpy,
}


def get_kernel(name: str):
    """Resolve a kernel for the active backend."""
    if _backend.current_backend() == "numba":
        return _nb[name]
    return _py[name]


def uniformize(pdiag, pup, pdown, pjump, jump_to, j, weights):
    return get_kernel("uniformize")(pdiag, pup, pdown, pjump, jump_to, j, weights)
