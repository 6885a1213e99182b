"""Hot inner-loop kernels, in numba and pure-numpy variants.

Every kernel has two implementations that execute the same floating-point
operations in the same per-path order, so the backends agree bitwise.  The
module-level names (``ctmc_paths``, ``scatter_add``) are bound to the active
backend chosen in :mod:`rsjd._backend`; the suffixed variants stay available
for the cross-backend tests and the benchmark script.

``ctmc_paths`` consumes pre-drawn variate matrices: ``E[p, j]`` is the
unit-exponential driving event ``j``'s holding time and ``V[p, j]`` the
uniform selecting its target state.  The log transform happens outside the
kernels (transcendentals are the one place numba and numpy's SIMD loops can
disagree by an ulp); inside, only IEEE-exact division/addition remain.
"""

from __future__ import annotations

import numpy as np

from ._backend import using_numba

__all__ = [
    "ctmc_paths",
    "scatter_add",
    "ctmc_paths_numpy",
    "ctmc_paths_numba",
    "scatter_add_numpy",
    "scatter_add_numba",
]


def _ctmc_paths_impl(q_exit, cum_embedded, init0, horizon, E, V):
    n = init0.shape[0]
    kmax = E.shape[1]
    dim = cum_embedded.shape[1]
    counts = np.zeros(n, np.int64)
    times = np.zeros((n, kmax))
    tos = np.zeros((n, kmax), np.int64)
    exhausted = np.zeros(n, np.bool_)
    for p in range(n):
        s = init0[p]
        t = 0.0
        j = 0
        while True:
            q = q_exit[s]
            if q <= 0.0:
                break
            if j >= kmax:
                exhausted[p] = True
                break
            t = t + E[p, j] / q
            if t > horizon:
                break
            v = V[p, j]
            nxt = 0
            while nxt < dim - 1 and v >= cum_embedded[s, nxt]:
                nxt += 1
            k = counts[p]
            times[p, k] = t
            tos[p, k] = nxt
            counts[p] = k + 1
            s = nxt
            j += 1
    return counts, times, tos, exhausted


def ctmc_paths_numpy(q_exit, cum_embedded, init0, horizon, E, V):
    """Vectorized-round equivalent of the per-path sampling loop."""
    n = init0.shape[0]
    kmax = E.shape[1]
    dim = cum_embedded.shape[1]
    counts = np.zeros(n, np.int64)
    times = np.zeros((n, kmax))
    tos = np.zeros((n, kmax), np.int64)
    exhausted = np.zeros(n, np.bool_)
    state = init0.astype(np.int64).copy()
    t = np.zeros(n)
    active = q_exit[state] > 0.0
    j = 0
    while active.any():
        if j >= kmax:
            exhausted[active] = True
            break
        with np.errstate(divide="ignore", invalid="ignore"):
            t_new = t + E[:, j] / q_exit[state]
        jumped = active & (t_new <= horizon)
        nxt = (V[:, j][:, None] >= cum_embedded[state]).sum(axis=1)
        np.minimum(nxt, dim - 1, out=nxt)
        idx = np.nonzero(jumped)[0]
        times[idx, counts[idx]] = t_new[idx]
        tos[idx, counts[idx]] = nxt[idx]
        counts[idx] += 1
        t[idx] = t_new[idx]
        state[idx] = nxt[idx]
        active = jumped & (q_exit[state] > 0.0)
        j += 1
    return counts, times, tos, exhausted


def scatter_add_numpy(out, idx, vals):
    np.add.at(out, idx, vals)


if using_numba():
    from numba import njit

    ctmc_paths_numba = njit(cache=True)(_ctmc_paths_impl)

    @njit(cache=True)
    def scatter_add_numba(out, idx, vals):  # noqa: D103 - mirror of numpy variant
        for i in range(idx.shape[0]):
            out[idx[i]] += vals[i]

    ctmc_paths = ctmc_paths_numba
    scatter_add = scatter_add_numba
else:  # pragma: no cover - exercised via RSJD_BACKEND=numpy test run
    ctmc_paths_numba = None
    scatter_add_numba = None
    ctmc_paths = ctmc_paths_numpy
    scatter_add = scatter_add_numpy
