"""Monte Carlo scenario bundles.

A :class:`PathBundle` packages everything random about one scenario: the
time grid, Brownian increments, Poisson jump events with their marks and
the regime active when they fire, and the regime path itself.  Bundles are
immutable and control-independent, which is what makes common-random-number
comparisons across controls valid: re-evaluating a different control reuses
the identical noise.

:class:`BundleSet` stores a batch in stacked/ragged arrays together with
step-bucketed index tables the simulation engine consumes (events per grid
step, regime-jump events per step, and the exact constancy sub-intervals of
steps that contain a regime change).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.typing import NDArray

from . import streams
from .errors import ValidationError
from .jumps import LevyMeasureSpec, sample_events
from .regime import GeneratorMatrix, RegimePath, RegimePathSet, sample_regime_paths


@dataclass(frozen=True)
class PathBundle:
    """One immutable scenario (views into its :class:`BundleSet`).

    Carries the generating specs so a lone bundle can be simulated without
    its parent batch.
    """

    grid: NDArray[np.float64]
    brownian_increments: NDArray[np.float64]
    jump_times: NDArray[np.float64]
    jump_marks: NDArray[np.float64]
    jump_regimes: NDArray[np.int64]
    regime: RegimePath
    seed: int
    path_index: int
    generator: GeneratorMatrix
    levy: LevyMeasureSpec

    @property
    def jump_events(self) -> list[tuple[float, float, int]]:
        return list(
            zip(self.jump_times.tolist(), self.jump_marks.tolist(), self.jump_regimes.tolist())
        )


def make_grid(horizon: float, n_steps: int) -> NDArray[np.float64]:
    """Uniform grid ``0 = t_0 < ... < t_M = horizon``."""
    if horizon <= 0 or n_steps < 1:
        raise ValidationError("need horizon > 0 and n_steps >= 1")
    return np.linspace(0.0, horizon, n_steps + 1)


def _validate_grid(grid: NDArray[np.float64]) -> NDArray[np.float64]:
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 1 or grid.size < 2:
        raise ValidationError("grid needs at least two points")
    if grid[0] != 0.0 or np.any(np.diff(grid) <= 0):
        raise ValidationError("grid must start at 0 and strictly increase")
    return grid


class BundleSet(Sequence[PathBundle]):
    """A batch of scenario bundles plus step-bucketed engine tables."""

    def __init__(
        self,
        grid: NDArray[np.float64],
        dw: NDArray[np.float64],
        regimes: RegimePathSet,
        evt_offsets: NDArray[np.int64],
        evt_times: NDArray[np.float64],
        evt_marks: NDArray[np.float64],
        evt_regimes: NDArray[np.int64],
        generator: GeneratorMatrix,
        levy: LevyMeasureSpec,
        seed: int,
    ):
        self.grid = grid
        self.dw = dw
        self.regimes = regimes
        self.evt_offsets = evt_offsets  # per-path CSR over the event arrays
        self.evt_times = evt_times
        self.evt_marks = evt_marks
        self.evt_regimes = evt_regimes
        self.generator = generator
        self.levy = levy
        self.seed = seed
        self._build_step_tables()

    # -- container protocol -------------------------------------------------
    def __len__(self) -> int:
        return len(self.regimes)

    def __getitem__(self, p: int) -> PathBundle:
        lo, hi = self.evt_offsets[p], self.evt_offsets[p + 1]
        return PathBundle(
            grid=self.grid,
            brownian_increments=self.dw[p],
            jump_times=self.evt_times[lo:hi],
            jump_marks=self.evt_marks[lo:hi],
            jump_regimes=self.evt_regimes[lo:hi],
            regime=self.regimes[p],
            seed=self.seed,
            path_index=p,
            generator=self.generator,
            levy=self.levy,
        )

    @classmethod
    def for_path(cls, bundle: PathBundle) -> "BundleSet":
        """Wrap one scenario back into a single-path batch."""
        path = bundle.regime
        offsets = np.array([0, path.n_jumps], dtype=np.int64)
        regimes = RegimePathSet(
            np.array([path.initial_state], dtype=np.int64),
            offsets,
            path.jump_times,
            path.jump_from,
            path.jump_to,
            path.horizon,
        )
        evt_offsets = np.array([0, bundle.jump_times.size], dtype=np.int64)
        return cls(
            grid=bundle.grid,
            dw=bundle.brownian_increments[None, :],
            regimes=regimes,
            evt_offsets=evt_offsets,
            evt_times=bundle.jump_times,
            evt_marks=bundle.jump_marks,
            evt_regimes=bundle.jump_regimes,
            generator=bundle.generator,
            levy=bundle.levy,
            seed=bundle.seed,
        )

    @property
    def n_steps(self) -> int:
        return self.grid.size - 1

    @property
    def horizon(self) -> float:
        return float(self.grid[-1])

    # -- engine tables -------------------------------------------------------
    def _build_step_tables(self) -> None:
        grid, m = self.grid, self.n_steps
        n = len(self)

        # Regime state at grid nodes (left limits) and at the horizon.
        alpha = np.empty((n, m + 1), dtype=np.int64)
        reg = self.regimes
        for p in range(n):
            lo, hi = reg.offsets[p], reg.offsets[p + 1]
            k = np.searchsorted(reg.times[lo:hi], grid, side="left")
            states = np.concatenate([[reg.initial_states[p]], reg.tos[lo:hi]])
            alpha[p] = states[k]
        self.alpha_left = alpha
        self.alpha_terminal = reg.states_at(self.horizon)

        def bucket(times: NDArray[np.float64], paths: NDArray[np.int64]):
            step = np.clip(np.searchsorted(grid, times, side="left") - 1, 0, m - 1)
            order = np.lexsort((times, paths, step))
            offsets = np.searchsorted(step[order], np.arange(m + 1))
            return order, offsets, step

        evt_paths = np.repeat(np.arange(n), np.diff(self.evt_offsets))
        self.evt_order, self.evt_step_offsets, _ = bucket(self.evt_times, evt_paths)
        self.evt_paths = evt_paths

        rj_paths = np.repeat(np.arange(n), np.diff(reg.offsets))
        self.rj_order, self.rj_step_offsets, rj_step = bucket(reg.times, rj_paths)
        self.rj_paths = rj_paths

        # Exact constancy sub-intervals for steps containing a regime jump.
        seg_path, seg_step, seg_t0, seg_len, seg_state = [], [], [], [], []
        order = self.rj_order
        i = 0
        while i < order.size:
            j = i
            p = rj_paths[order[i]]
            k = rj_step[order[i]]
            while j < order.size and rj_paths[order[j]] == p and rj_step[order[j]] == k:
                j += 1
            cuts = reg.times[order[i:j]]
            bounds = np.concatenate([[grid[k]], cuts, [grid[k + 1]]])
            state_seq = np.concatenate([[reg.froms[order[i]]], reg.tos[order[i:j]]])
            for s0, s1, st in zip(bounds[:-1], bounds[1:], state_seq):
                if s1 > s0:
                    seg_path.append(p)
                    seg_step.append(k)
                    seg_t0.append(s0)
                    seg_len.append(s1 - s0)
                    seg_state.append(st)
            i = j
        self.seg_path = np.array(seg_path, dtype=np.int64)
        seg_step_arr = np.array(seg_step, dtype=np.int64)
        self.seg_t0 = np.array(seg_t0, dtype=np.float64)
        self.seg_len = np.array(seg_len, dtype=np.float64)
        self.seg_state = np.array(seg_state, dtype=np.int64)
        self.seg_step_offsets = np.searchsorted(seg_step_arr, np.arange(m + 1))

    def events_in_step(self, k: int):
        """Jump events of step ``k`` as (paths, times, marks, regimes)."""
        sel = self.evt_order[self.evt_step_offsets[k] : self.evt_step_offsets[k + 1]]
        return self.evt_paths[sel], self.evt_times[sel], self.evt_marks[sel], self.evt_regimes[sel]

    def regime_jumps_in_step(self, k: int):
        """Regime-change events of step ``k`` as (paths, times, froms, tos)."""
        sel = self.rj_order[self.rj_step_offsets[k] : self.rj_step_offsets[k + 1]]
        reg = self.regimes
        return self.rj_paths[sel], reg.times[sel], reg.froms[sel], reg.tos[sel]

    def split_segments_in_step(self, k: int):
        """Exact (path, start, length, state) coverage of split steps."""
        lo, hi = self.seg_step_offsets[k], self.seg_step_offsets[k + 1]
        return self.seg_path[lo:hi], self.seg_t0[lo:hi], self.seg_len[lo:hi], self.seg_state[lo:hi]


def generate_bundles(
    grid: NDArray[np.float64],
    gen: GeneratorMatrix,
    levy: LevyMeasureSpec,
    seed: int,
    n_paths: int,
    init: int = 1,
) -> BundleSet:
    """Generate ``n_paths`` scenarios from per-path counter-based substreams.

    The regime path is sampled first (exactly, event-driven); Poisson events
    are then drawn segment by segment with the regime-conditional intensity;
    Brownian increments are independent of both.  The three components read
    disjoint substreams of ``seed``, so identical arguments reproduce the
    bundle bit for bit.
    """
    grid = _validate_grid(grid)
    if levy.dim != gen.dim:
        raise ValidationError("jump measure and generator disagree on regime count")
    horizon = float(grid[-1])
    m = grid.size - 1
    regimes = sample_regime_paths(gen, init, horizon, n_paths, seed)
    dt = np.diff(grid)
    sqrt_dt = np.sqrt(dt)
    dw = np.empty((n_paths, m))
    for p in range(n_paths):
        dw[p] = streams.substream(seed, p, streams.BROWNIAN).standard_normal(m) * sqrt_dt
    counts = np.zeros(n_paths, dtype=np.int64)
    all_times, all_marks, all_regs = [], [], []
    if levy.active:
        for p in range(n_paths):
            rng = streams.substream(seed, p, streams.JUMPS)
            t, z, r = sample_events(levy, regimes[p].segments(), rng)
            counts[p] = t.size
            all_times.append(t)
            all_marks.append(z)
            all_regs.append(r)
    if all_times:
        evt_times = np.concatenate(all_times)
        evt_marks = np.concatenate(all_marks)
        evt_regs = np.concatenate(all_regs)
    else:
        evt_times = np.zeros(0)
        evt_marks = np.zeros(0)
        evt_regs = np.zeros(0, dtype=np.int64)
    evt_offsets = np.concatenate([[0], np.cumsum(counts)])
    return BundleSet(grid, dw, regimes, evt_offsets, evt_times, evt_marks, evt_regs, gen, levy, seed)


def generate_bundle(
    grid: NDArray[np.float64],
    gen: GeneratorMatrix,
    levy: LevyMeasureSpec,
    seed: int,
    init: int = 1,
) -> PathBundle:
    """Single-scenario convenience wrapper (path index 0 of ``seed``)."""
    return generate_bundles(grid, gen, levy, seed, 1, init=init)[0]
