"""Continuous-time Markov chain engine.

Exact event-driven simulation (exponential holding times, embedded-chain
transitions), transition probabilities via a two-state closed form or
uniformization, and the jump-counting bookkeeping: pair counts, counts of
jumps into each state, and their compensators integrated exactly over the
constancy intervals of the chain.

Regimes are labelled ``1..D`` everywhere in the public API.  The chain state
used by model coefficients at a grid time ``t`` is the left limit ``α(t−)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.typing import NDArray

from . import kernels, streams
from .errors import DomainError, ValidationError

_UNIFORMIZATION_TAIL = 1e-13
_MAX_UNIFORMIZATION_RATE = 200.0


@dataclass(frozen=True)
class GeneratorMatrix:
    """Rate matrix of the regime chain.

    ``rates[i-1, j-1]`` is the jump intensity from state ``i`` to state
    ``j``.  Off-diagonal entries must be nonnegative and every row must sum
    to zero within ``1e-12 * max|rate|``.
    """

    rates: NDArray[np.float64]

    def __post_init__(self):
        rates = np.asarray(self.rates, dtype=np.float64)
        object.__setattr__(self, "rates", rates)
        if rates.ndim != 2 or rates.shape[0] != rates.shape[1]:
            raise ValidationError("rate matrix must be square")
        if rates.shape[0] < 2:
            raise ValidationError("need at least two regimes")
        if not np.all(np.isfinite(rates)):
            raise ValidationError("rates must be finite")
        off = rates.copy()
        np.fill_diagonal(off, 0.0)
        if np.any(off < 0.0):
            raise ValidationError("off-diagonal rates must be >= 0")
        tol = 1e-12 * max(np.abs(rates).max(), 1e-300)
        if np.any(np.abs(rates.sum(axis=1)) > tol):
            raise ValidationError("rate matrix rows must sum to zero")

    @property
    def dim(self) -> int:
        return self.rates.shape[0]

    @property
    def exit_rates(self) -> NDArray[np.float64]:
        """Total jump intensity out of each state (``-diag``)."""
        return -np.diag(self.rates)

    def rate(self, i: int, j: int) -> float:
        return float(self.rates[i - 1, j - 1])

    def embedded_cumulative(self) -> NDArray[np.float64]:
        """Row-wise CDF of the embedded jump chain (absorbing rows -> 1)."""
        q = self.exit_rates
        probs = np.zeros_like(self.rates)
        live = q > 0.0
        probs[live] = self.rates[live] / q[live, None]
        np.fill_diagonal(probs, 0.0)
        cum = np.cumsum(probs, axis=1)
        cum[~live] = 1.0
        return cum


def two_state(lam12: float, lam21: float) -> GeneratorMatrix:
    """Convenience constructor for the two-regime chain."""
    return GeneratorMatrix(np.array([[-lam12, lam12], [lam21, -lam21]]))


@dataclass(frozen=True)
class RegimePath:
    """One realized chain trajectory on ``[0, horizon]``."""

    initial_state: int
    jump_times: NDArray[np.float64]
    jump_from: NDArray[np.int64]
    jump_to: NDArray[np.int64]
    horizon: float

    def __post_init__(self):
        t = np.asarray(self.jump_times, dtype=np.float64)
        object.__setattr__(self, "jump_times", t)
        object.__setattr__(self, "jump_from", np.asarray(self.jump_from, dtype=np.int64))
        object.__setattr__(self, "jump_to", np.asarray(self.jump_to, dtype=np.int64))
        if self.horizon <= 0:
            raise ValidationError("horizon must be positive")
        if t.size:
            if np.any(np.diff(t) <= 0):
                raise ValidationError("jump times must be strictly increasing")
            if t[0] <= 0 or t[-1] > self.horizon:
                raise ValidationError("jump times must lie in (0, horizon]")
            chain = np.concatenate([[self.initial_state], self.jump_to[:-1]])
            if np.any(self.jump_from != chain):
                raise ValidationError("events do not chain consecutively")
            if np.any(self.jump_from == self.jump_to):
                raise ValidationError("self-jumps are not allowed")

    @property
    def events(self) -> list[tuple[float, int, int]]:
        return list(zip(self.jump_times.tolist(), self.jump_from.tolist(), self.jump_to.tolist()))

    @property
    def n_jumps(self) -> int:
        return self.jump_times.size

    def state_at(self, t: float, left_limit: bool = False) -> int:
        """Chain state at time ``t`` (càdlàg, or the left limit ``α(t−)``)."""
        side = "left" if left_limit else "right"
        k = int(np.searchsorted(self.jump_times, t, side=side))
        return self.initial_state if k == 0 else int(self.jump_to[k - 1])

    def states_on_grid(self, grid: NDArray[np.float64], left_limit: bool = True) -> NDArray[np.int64]:
        side = "left" if left_limit else "right"
        k = np.searchsorted(self.jump_times, grid, side=side)
        states = np.concatenate([[self.initial_state], self.jump_to])
        return states[k]

    def segments(self) -> list[tuple[float, float, int]]:
        """Constancy intervals as ``(start, end, state)`` covering ``[0, horizon]``."""
        starts = np.concatenate([[0.0], self.jump_times])
        ends = np.concatenate([self.jump_times, [self.horizon]])
        states = np.concatenate([[self.initial_state], self.jump_to])
        return [(float(a), float(b), int(s)) for a, b, s in zip(starts, ends, states) if b > a]


class RegimePathSet(Sequence[RegimePath]):
    """A batch of regime paths stored as ragged arrays."""

    def __init__(self, initial_states, offsets, times, froms, tos, horizon):
        self.initial_states = np.asarray(initial_states, dtype=np.int64)
        self.offsets = np.asarray(offsets, dtype=np.int64)
        self.times = np.asarray(times, dtype=np.float64)
        self.froms = np.asarray(froms, dtype=np.int64)
        self.tos = np.asarray(tos, dtype=np.int64)
        self.horizon = float(horizon)

    def __len__(self) -> int:
        return self.initial_states.size

    def __getitem__(self, p: int) -> RegimePath:
        lo, hi = self.offsets[p], self.offsets[p + 1]
        return RegimePath(
            initial_state=int(self.initial_states[p]),
            jump_times=self.times[lo:hi],
            jump_from=self.froms[lo:hi],
            jump_to=self.tos[lo:hi],
            horizon=self.horizon,
        )

    def _counts_until(self, t: float, strict: bool) -> NDArray[np.int64]:
        if self.times.size == 0:
            return np.zeros(len(self), dtype=np.int64)
        mask = (self.times < t) if strict else (self.times <= t)
        cs = np.concatenate([[0], np.cumsum(mask, dtype=np.int64)])
        return cs[self.offsets[1:]] - cs[self.offsets[:-1]]

    def states_at(self, t: float, left_limit: bool = False) -> NDArray[np.int64]:
        """Vectorized ``state_at`` across all paths."""
        k = self._counts_until(t, strict=left_limit)
        out = self.initial_states.copy()
        has = k > 0
        out[has] = self.tos[self.offsets[:-1][has] + k[has] - 1]
        return out

    def into_counts(self, dim: int) -> NDArray[np.int64]:
        """Number of jumps into each state per path, shape ``(n, D)``."""
        out = np.zeros((len(self), dim), dtype=np.int64)
        for j in range(1, dim + 1):
            mask = (self.tos == j).astype(np.int64)
            cs = np.concatenate([[0], np.cumsum(mask)])
            out[:, j - 1] = cs[self.offsets[1:]] - cs[self.offsets[:-1]]
        return out

    def occupation_times(self, dim: int) -> NDArray[np.float64]:
        """Time spent in each state over ``[0, horizon]`` per path."""
        n = len(self)
        seg_states = np.insert(self.tos, self.offsets[:-1], self.initial_states)
        seg_starts = np.insert(self.times, self.offsets[:-1], 0.0)
        seg_ends = np.insert(self.times, self.offsets[1:], self.horizon)
        seg_len = seg_ends - seg_starts
        seg_offsets = self.offsets + np.arange(n + 1)
        out = np.zeros((n, dim))
        for i in range(1, dim + 1):
            w = seg_len * (seg_states == i)
            cs = np.concatenate([[0.0], np.cumsum(w)])
            out[:, i - 1] = cs[seg_offsets[1:]] - cs[seg_offsets[:-1]]
        return out

    def terminal_compensators(self, gen: GeneratorMatrix) -> NDArray[np.float64]:
        """``λ_j(horizon)`` per path, shape ``(n, D)``."""
        off = gen.rates.copy()
        np.fill_diagonal(off, 0.0)
        return self.occupation_times(gen.dim) @ off


def _split_uniform_blocks(r: NDArray[np.float64]):
    """Interleaved uniform pairs -> (exponential variates, selector uniforms).

    Event ``j`` of a path always reads pair ``(2j, 2j+1)`` of its block, so
    widening a block never changes earlier events.  The log transform runs
    here, on contiguous copies, so both kernel backends receive identical
    variates.
    """
    pairs = r.reshape(r.shape[0], -1, 2)
    hold = np.ascontiguousarray(pairs[:, :, 0])
    with np.errstate(divide="ignore"):
        e = -np.log(hold)
    return e, np.ascontiguousarray(pairs[:, :, 1])


def _sample_pathset(
    gen: GeneratorMatrix,
    init_arr: NDArray[np.int64],
    horizon: float,
    gens: list[np.random.Generator],
) -> RegimePathSet:
    q = gen.exit_rates
    cum = gen.embedded_cumulative()
    n_paths = init_arr.size
    lam = float(q.max() * horizon)
    k = int(math.ceil(lam + 6.0 * math.sqrt(max(lam, 1.0)) + 8.0))
    r = (
        np.vstack([g.random(2 * k) for g in gens])
        if n_paths
        else np.zeros((0, 2 * k))
    )
    e, v = _split_uniform_blocks(r)
    counts, times, tos, exhausted = kernels.ctmc_paths(q, cum, init_arr - 1, horizon, e, v)
    # Rare long paths get their uniform blocks doubled (continuing the same
    # stream); the event-to-draw mapping is prefix-stable so earlier events
    # are reproduced identically on the wider buffer.
    blocks = {int(p): r[p] for p in np.nonzero(exhausted)[0]}
    while exhausted.any():
        idx = np.nonzero(exhausted)[0]
        for p in idx:
            p = int(p)
            blocks[p] = np.concatenate([blocks[p], gens[p].random(blocks[p].size)])
        ext = np.vstack([blocks[int(p)] for p in idx])
        e_ext, v_ext = _split_uniform_blocks(ext)
        sub_counts, sub_times, sub_tos, sub_exh = kernels.ctmc_paths(
            q, cum, init_arr[idx] - 1, horizon, e_ext, v_ext
        )
        new_kmax = ext.shape[1] // 2
        if new_kmax > times.shape[1]:
            times = np.pad(times, ((0, 0), (0, new_kmax - times.shape[1])))
            tos = np.pad(tos, ((0, 0), (0, new_kmax - tos.shape[1])))
        counts[idx] = sub_counts
        times[idx, :new_kmax] = sub_times
        tos[idx, :new_kmax] = sub_tos
        exhausted[:] = False
        exhausted[idx] = sub_exh
    offsets = np.concatenate([[0], np.cumsum(counts)])
    keep = np.arange(times.shape[1])[None, :] < counts[:, None]
    flat_times = times[keep]
    flat_tos = tos[keep].astype(np.int64) + 1
    flat_from = np.empty_like(flat_tos)
    if flat_tos.size:
        flat_from[1:] = flat_tos[:-1]
        starts = offsets[:-1][counts > 0]
        flat_from[starts] = init_arr[counts > 0]
    return RegimePathSet(init_arr, offsets, flat_times, flat_from, flat_tos, horizon)


def sample_regime_path(
    gen: GeneratorMatrix, init: int, horizon: float, stream: np.random.Generator
) -> RegimePath:
    """Exact simulation of one chain path.

    Holding time in state ``i`` is exponential with rate ``-λ_ii``; the next
    state is drawn from the embedded chain ``λ_ij / (-λ_ii)``.  A state with
    zero exit rate is absorbing.  Each event consumes one (holding,
    next-state) pair of uniforms from ``stream``, matching the batch sampler
    draw for draw.
    """
    _check_init(gen, init)
    if horizon <= 0:
        raise ValidationError("horizon must be positive")
    pathset = _sample_pathset(gen, np.array([init], dtype=np.int64), horizon, [stream])
    return pathset[0]


def sample_regime_paths(
    gen: GeneratorMatrix,
    init: int | NDArray[np.int64],
    horizon: float,
    n_paths: int,
    master_seed: int,
) -> RegimePathSet:
    """Exact simulation of ``n_paths`` chain paths on per-path substreams."""
    if horizon <= 0:
        raise ValidationError("horizon must be positive")
    init_arr = np.broadcast_to(np.asarray(init, dtype=np.int64), (n_paths,)).copy()
    for s in np.unique(init_arr):
        _check_init(gen, int(s))
    gens = [streams.substream(master_seed, p, streams.REGIME) for p in range(n_paths)]
    return _sample_pathset(gen, init_arr, horizon, gens)


def transition_matrix(gen: GeneratorMatrix, elapsed: float) -> NDArray[np.float64]:
    """Transition probabilities ``P(elapsed) = exp(elapsed * Λ)``.

    Two-state chains use the closed form
    ``P11(s) = (λ21 + λ12 e^{-(λ12+λ21)s}) / (λ12+λ21)``; larger chains use
    uniformization truncated below ``1e-12``.
    """
    if elapsed < 0:
        raise DomainError("elapsed time must be nonnegative")
    d = gen.dim
    if elapsed == 0.0:
        return np.eye(d)
    if d == 2:
        lam12, lam21 = gen.rates[0, 1], gen.rates[1, 0]
        total = lam12 + lam21
        if total == 0.0:
            return np.eye(2)
        decay = math.exp(-total * elapsed)
        return np.array(
            [
                [(lam21 + lam12 * decay) / total, lam12 * (1.0 - decay) / total],
                [lam21 * (1.0 - decay) / total, (lam12 + lam21 * decay) / total],
            ]
        )
    return _uniformization(gen.rates, elapsed)


def _uniformization(rates: NDArray[np.float64], elapsed: float) -> NDArray[np.float64]:
    d = rates.shape[0]
    q = float(-rates.diagonal().min())
    if q == 0.0:
        return np.eye(d)
    # Split long horizons so the Poisson weights stay in floating range.
    if q * elapsed > _MAX_UNIFORMIZATION_RATE:
        half = _uniformization(rates, elapsed / 2.0)
        return half @ half
    m = np.eye(d) + rates / q
    mu = q * elapsed
    weight = math.exp(-mu)
    term = np.eye(d)
    out = weight * term
    accumulated = weight
    k = 0
    while 1.0 - accumulated > _UNIFORMIZATION_TAIL:
        k += 1
        weight *= mu / k
        term = term @ m
        out += weight * term
        accumulated += weight
    return out


@dataclass(frozen=True)
class ChainIncrements:
    """Jump counts and compensators of one path, evaluated on a grid.

    ``pair_counts[i-1, j-1, l]`` is the number of i→j jumps up to
    ``grid[l]``; ``into_counts[j-1, l]`` the number of jumps into ``j``; and
    ``compensators[j-1, l]`` the exact integral
    ``λ_j(t) = Σ_{i≠j} λ_ij ∫_0^t 1{α(s−)=i} ds``.
    """

    grid: NDArray[np.float64]
    pair_counts: NDArray[np.int64]
    into_counts: NDArray[np.int64]
    compensators: NDArray[np.float64]

    @property
    def compensated(self) -> NDArray[np.float64]:
        """The martingales ``Φ̃_j(t) = Φ_j(t) − λ_j(t)``."""
        return self.into_counts - self.compensators


def chain_increments(path: RegimePath, gen: GeneratorMatrix, grid: NDArray[np.float64]) -> ChainIncrements:
    """Evaluate ``J^{ij}``, ``Φ_j`` and ``λ_j`` at the grid points."""
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 1 or grid.size < 2 or np.any(np.diff(grid) <= 0):
        raise ValidationError("grid must be strictly increasing with >= 2 points")
    if grid[0] != 0.0 or grid[-1] > path.horizon * (1 + 1e-12):
        raise ValidationError("grid must cover [0, horizon]")
    d = gen.dim
    n_grid = grid.size
    pair = np.zeros((d, d, n_grid), dtype=np.int64)
    for i, j, t in zip(path.jump_from, path.jump_to, path.jump_times):
        pair[i - 1, j - 1] += grid >= t
    into = pair.sum(axis=0)
    occ = np.zeros((d, n_grid))
    for s0, s1, state in path.segments():
        occ[state - 1] += np.clip(grid, s0, s1) - s0
    off = gen.rates.copy()
    np.fill_diagonal(off, 0.0)
    comp = off.T @ occ
    return ChainIncrements(grid, pair, into, comp)


def _check_init(gen: GeneratorMatrix, init: int) -> None:
    if not 1 <= init <= gen.dim:
        raise ValidationError(f"initial state {init} outside 1..{gen.dim}")
