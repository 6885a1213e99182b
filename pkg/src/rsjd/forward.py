"""Euler simulation of the controlled state and its control-derivative.

Scheme conventions (shared by both routines):

* drift and diffusion use left-endpoint coefficients with the regime left
  limit ``α(t_k−)``;
* compensated-Poisson jumps add ``γ`` at their exact event times (with the
  regime active at the event) and subtract the compensator drift
  ``∫γ ν_α`` accumulated over the exact regime constancy sub-intervals of
  each step, with the integrand pinned at the step's left node;
* the regime-jump term adds ``η^j`` at each chain jump into ``j`` and
  subtracts ``Σ_{j≠i} η^j λ_{ij}`` between jumps, again over exact
  sub-interval lengths;
* simulation aborts once ``|X|`` exceeds ``1e12`` or goes non-finite.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from numpy.typing import NDArray

from . import kernels
from .bundles import BundleSet, PathBundle
from .errors import SimulationDivergedError, ValidationError
from .model import ControlPolicy, ForwardModel

DIVERGENCE_GUARD = 1e12


@dataclass(frozen=True)
class Trajectory:
    """State values along one path's grid."""

    grid: NDArray[np.float64]
    values: NDArray[np.float64]

    def __post_init__(self):
        if self.grid.shape != self.values.shape:
            raise ValidationError("grid and values must align")

    @property
    def terminal(self) -> float:
        return float(self.values[-1])


class TrajectorySet(Sequence[Trajectory]):
    """Stacked state values for every path of a bundle set."""

    def __init__(self, grid: NDArray[np.float64], values: NDArray[np.float64], bundles: BundleSet):
        self.grid = grid
        self.values = values
        self.bundles = bundles

    def __len__(self) -> int:
        return self.values.shape[0]

    def __getitem__(self, p: int) -> Trajectory:
        return Trajectory(self.grid, self.values[p])

    @property
    def terminal(self) -> NDArray[np.float64]:
        return self.values[:, -1]


def _require_set(bundles) -> BundleSet:
    if isinstance(bundles, PathBundle):
        return BundleSet.for_path(bundles)
    if not isinstance(bundles, BundleSet):
        raise ValidationError(f"expected a BundleSet or PathBundle, got {type(bundles).__name__}")
    return bundles


def _guard(x: NDArray[np.float64], step: int) -> None:
    if not np.all(np.isfinite(x)) or np.abs(x).max(initial=0.0) > DIVERGENCE_GUARD:
        raise SimulationDivergedError("state diverged", step)


def _compensate_poisson(
    bundles: BundleSet,
    k: int,
    t: float,
    dt: float,
    regime: NDArray[np.int64],
    integrand: Callable[[float, NDArray[np.int64], int, float], NDArray[np.float64]],
) -> NDArray[np.float64]:
    """Per-path ``∫∫ integrand ν_α(dζ) ds`` over step ``k``.

    ``integrand(t, paths, r, z)`` returns the jump loading of the listed
    paths in regime ``r`` at mark ``z``.  Steps without a regime change use
    the full step length; split steps accumulate their exact sub-interval
    lengths.
    """
    levy = bundles.levy
    comp = np.zeros(regime.shape[0])
    for r in range(1, levy.dim + 1):
        if levy.rates[r - 1] == 0.0:
            continue
        paths = np.nonzero(regime == r)[0]
        if paths.size:
            comp[paths] = levy.integrate(r, lambda z: integrand(t, paths, r, z)) * dt
    sp, _, slen, sstate = bundles.split_segments_in_step(k)
    if sp.size:
        comp[np.unique(sp)] = 0.0
        for r in range(1, levy.dim + 1):
            if levy.rates[r - 1] == 0.0:
                continue
            seg = sstate == r
            if np.any(seg):
                idx = sp[seg]
                vals = np.asarray(
                    levy.integrate(r, lambda z: integrand(t, idx, r, z)), dtype=np.float64
                ) * slen[seg]
                kernels.scatter_add(comp, idx, vals)
    return comp


def _compensate_regime_jumps(
    bundles: BundleSet,
    k: int,
    t: float,
    dt: float,
    regime: NDArray[np.int64],
    off_rates: NDArray[np.float64],
    eta_eval: Callable[[float, NDArray[np.int64], NDArray[np.int64]], NDArray[np.float64]],
) -> NDArray[np.float64]:
    """Per-path ``Σ_{j≠i} η^j λ_{ij}`` over step ``k`` with exact lengths."""
    all_paths = np.arange(regime.shape[0])
    eta_mat = eta_eval(t, all_paths, regime)
    comp = (eta_mat * off_rates[regime - 1]).sum(axis=1) * dt
    sp, _, slen, sstate = bundles.split_segments_in_step(k)
    if sp.size:
        comp[np.unique(sp)] = 0.0
        eta_seg = eta_eval(t, sp, sstate)
        vals = (eta_seg * off_rates[sstate - 1]).sum(axis=1) * slen
        kernels.scatter_add(comp, sp, vals)
    return comp


def _off_diagonal_rates(bundles: BundleSet) -> NDArray[np.float64]:
    off = bundles.generator.rates.copy()
    np.fill_diagonal(off, 0.0)
    return off


def simulate_forward_set(
    model: ForwardModel, policy: ControlPolicy, bundles: BundleSet, x0: float
) -> TrajectorySet:
    """Euler simulation of the controlled state over a whole bundle set."""
    bundles = _require_set(bundles)
    grid = bundles.grid
    n, m = len(bundles), bundles.n_steps
    x = np.full(n, float(x0))
    out = np.empty((n, m + 1))
    out[:, 0] = x
    has_jumps = bundles.levy.active
    has_eta = model.eta is not None
    off_rates = _off_diagonal_rates(bundles) if has_eta else None
    for k in range(m):
        t = grid[k]
        dt = grid[k + 1] - grid[k]
        regime = bundles.alpha_left[:, k]
        u = policy.evaluate(t, x, regime)
        xn = (
            x
            + np.asarray(model.b(t, x, regime, u)) * dt
            + np.asarray(model.sigma(t, x, regime, u)) * bundles.dw[:, k]
        )
        if has_jumps:
            xn -= _compensate_poisson(
                bundles, k, t, dt, regime,
                lambda tt, paths, r, z: np.asarray(model.gamma(tt, x[paths], r, u[paths], z)),
            )
            ep, et, ez, er = bundles.events_in_step(k)
            if ep.size:
                gvals = np.asarray(model.gamma(et, x[ep], er, u[ep], ez), dtype=np.float64)
                kernels.scatter_add(xn, ep, np.broadcast_to(gvals, ep.shape).astype(np.float64))
        if has_eta:
            xn -= _compensate_regime_jumps(
                bundles, k, t, dt, regime, off_rates,
                lambda tt, paths, reg: np.asarray(model.eta(tt, x[paths], reg, u[paths]), dtype=np.float64),
            )
            rp, rt, rf, rto = bundles.regime_jumps_in_step(k)
            if rp.size:
                eta_mat = np.asarray(model.eta(rt, x[rp], rf, u[rp]), dtype=np.float64)
                vals = eta_mat[np.arange(rp.size), rto - 1]
                kernels.scatter_add(xn, rp, vals)
        x = xn
        _guard(x, k)
        out[:, k + 1] = x
    return TrajectorySet(grid, out, bundles)


def simulate_forward(model, policy, bundle, x0: float, path: int = 0) -> Trajectory:
    """Single-trajectory front of :func:`simulate_forward_set`.

    Accepts either one :class:`PathBundle` or a :class:`BundleSet` with a
    path index.
    """
    if isinstance(bundle, PathBundle):
        return simulate_forward_set(model, policy, bundle, x0)[0]
    return simulate_forward_set(model, policy, bundle, x0)[path]


def simulate_variational_set(
    model: ForwardModel,
    policy: ControlPolicy,
    direction: ControlPolicy,
    bundles: BundleSet,
    base: TrajectorySet,
) -> TrajectorySet:
    """Euler scheme for the control-derivative process.

    Solves the linear equation driven by the same noise as ``base``:
    ``dx₁ = (b_x x₁ + b_u β)dt + (σ_x x₁ + σ_u β)dB + ∫(γ_x x₁ + γ_u β)dÑ_α
    + (η_x x₁ + η_u β)·dΦ̃`` from ``x₁(0) = 0``.  Linearity makes the result
    additive in ``direction`` on a fixed bundle set.
    """
    bundles = _require_set(bundles)
    if base.values.shape != (len(bundles), bundles.n_steps + 1):
        raise ValidationError("base trajectory does not match the bundle set")
    grid = bundles.grid
    n, m = len(bundles), bundles.n_steps
    x1 = np.zeros(n)
    out = np.empty((n, m + 1))
    out[:, 0] = x1
    has_jumps = bundles.levy.active
    has_eta = model.eta is not None
    off_rates = _off_diagonal_rates(bundles) if has_eta else None

    for k in range(m):
        t = grid[k]
        dt = grid[k + 1] - grid[k]
        regime = bundles.alpha_left[:, k]
        xb = base.values[:, k]
        u = policy.evaluate(t, xb, regime)
        beta = direction.evaluate(t, xb, regime)
        drift = (
            np.asarray(model.b_x(t, xb, regime, u)) * x1
            + np.asarray(model.b_u(t, xb, regime, u)) * beta
        )
        diff = (
            np.asarray(model.sigma_x(t, xb, regime, u)) * x1
            + np.asarray(model.sigma_u(t, xb, regime, u)) * beta
        )
        x1n = x1 + drift * dt + diff * bundles.dw[:, k]
        if has_jumps:
            def lin_gamma(tt, paths, r, z):
                gx = np.asarray(model.gamma_x(tt, xb[paths], r, u[paths], z))
                gu = np.asarray(model.gamma_u(tt, xb[paths], r, u[paths], z))
                return gx * x1[paths] + gu * beta[paths]

            x1n -= _compensate_poisson(bundles, k, t, dt, regime, lin_gamma)
            ep, et, ez, er = bundles.events_in_step(k)
            if ep.size:
                gvals = np.asarray(
                    model.gamma_x(et, xb[ep], er, u[ep], ez), dtype=np.float64
                ) * x1[ep] + np.asarray(
                    model.gamma_u(et, xb[ep], er, u[ep], ez), dtype=np.float64
                ) * beta[ep]
                kernels.scatter_add(x1n, ep, np.broadcast_to(gvals, ep.shape).astype(np.float64))
        if has_eta:
            def lin_eta(tt, paths, reg):
                ex = np.asarray(model.eta_x(tt, xb[paths], reg, u[paths]), dtype=np.float64)
                eu = np.asarray(model.eta_u(tt, xb[paths], reg, u[paths]), dtype=np.float64)
                return ex * x1[paths, None] + eu * beta[paths, None]

            x1n -= _compensate_regime_jumps(bundles, k, t, dt, regime, off_rates, lin_eta)
            rp, rt, rf, rto = bundles.regime_jumps_in_step(k)
            if rp.size:
                sel = np.arange(rp.size)
                ex = np.asarray(model.eta_x(rt, xb[rp], rf, u[rp]), dtype=np.float64)
                eu = np.asarray(model.eta_u(rt, xb[rp], rf, u[rp]), dtype=np.float64)
                vals = ex[sel, rto - 1] * x1[rp] + eu[sel, rto - 1] * beta[rp]
                kernels.scatter_add(x1n, rp, vals)
        x1 = x1n
        _guard(x1, k)
        out[:, k + 1] = x1
    return TrajectorySet(grid, out, bundles)


def simulate_variational(model, policy, direction, bundle, base, path: int = 0) -> Trajectory:
    """Single-trajectory front of :func:`simulate_variational_set`.

    ``base`` may be the matching single :class:`Trajectory` when ``bundle``
    is a :class:`PathBundle`.
    """
    if isinstance(bundle, PathBundle):
        bundle_set = BundleSet.for_path(bundle)
        if isinstance(base, Trajectory):
            base = TrajectorySet(base.grid, base.values[None, :], bundle_set)
        return simulate_variational_set(model, policy, direction, bundle_set, base)[0]
    return simulate_variational_set(model, policy, direction, bundle, base)[path]
