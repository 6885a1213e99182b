"""Hamiltonian, adjoints, and the stationarity machinery.

The general adjoint backward equation is deliberately not solved here: the
module exposes (a) the analytic conditional adjoints available in the
linear-quadratic two-regime application and (b) user-supplied adjoint
states, and verifies control optimality through the stationarity of the
Hamiltonian's control gradient.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.typing import NDArray

from .bundles import BundleSet
from .errors import ConfigError, DomainError, SingularControlError, UnsupportedModelError
from .forward import TrajectorySet, simulate_forward_set
from .jumps import LevyMeasureSpec
from .mc import estimate_from_values
from .model import BsdeModel, ControlPolicy, ForwardModel, LqSpec, PerformanceModel
from .regime import GeneratorMatrix


@dataclass(frozen=True)
class AdjointState:
    """Adjoint variables attached to one evaluation point.

    ``r`` is represented by a plain function of the jump mark; integrals
    against the jump measure are taken with the measure's own quadrature.
    ``w`` is one value per target regime.
    """

    a: float = 0.0
    p: float = 0.0
    q: float = 0.0
    r: Callable[[float], float] | None = None
    w: NDArray[np.float64] | None = None


def hamiltonian(
    t: float,
    x: float,
    regime: int,
    u: float,
    adjoint: AdjointState,
    forward: ForwardModel,
    perf: PerformanceModel,
    *,
    y: float = 0.0,
    bsde: BsdeModel | None = None,
    gen: GeneratorMatrix | None = None,
    levy: LevyMeasureSpec | None = None,
) -> float:
    """The six-term Hamiltonian at one point.

    ``f + a·g + p·b + q·σ + ∫ r(ζ)γ(ζ)ν_i(dζ) + Σ_{j≠i} η^j w^j λ_ij``.
    The regime-jump sum runs over target states reachable from ``i``,
    matching the compensation of the counting martingales.
    """
    i_arr = np.asarray([regime])
    x_arr = np.asarray([float(x)])
    u_arr = np.asarray([float(u)])
    if perf.f_uses_y:
        total = _scalar(perf.f(t, x_arr, i_arr, u_arr, np.asarray([float(y)])))
    else:
        total = _scalar(perf.f(t, x_arr, i_arr, u_arr))
    if bsde is not None and not bsde.is_trivial:
        total += adjoint.a * float(bsde.g(t, x_arr, i_arr, np.asarray([float(y)]))[0])
    total += adjoint.p * _scalar(forward.b(t, x_arr, i_arr, u_arr))
    total += adjoint.q * _scalar(forward.sigma(t, x_arr, i_arr, u_arr))
    if adjoint.r is not None and levy is not None:
        total += _scalar(
            levy.integrate(
                regime,
                lambda z: adjoint.r(z) * np.asarray(forward.gamma(t, x_arr, i_arr, u_arr, z)),
            )
        )
    if adjoint.w is not None and forward.eta is not None:
        if gen is None:
            raise ConfigError("regime-jump Hamiltonian term needs the chain generator")
        eta_row = np.asarray(forward.eta(t, x_arr, i_arr, u_arr), dtype=np.float64).reshape(-1)
        rates = gen.rates[regime - 1].copy()
        rates[regime - 1] = 0.0
        total += float(np.dot(eta_row, np.asarray(adjoint.w) * rates))
    return total


def _scalar(value) -> float:
    return float(np.asarray(value).reshape(-1)[0])


def hamiltonian_control_gradient(
    t: float,
    x: float,
    regime: int,
    u: float,
    adjoint: AdjointState,
    forward: ForwardModel,
    perf: PerformanceModel,
    *,
    gen: GeneratorMatrix | None = None,
    levy: LevyMeasureSpec | None = None,
) -> float:
    """``∂H/∂u`` for drivers that do not depend on the control."""
    i_arr = np.asarray([regime])
    x_arr = np.asarray([float(x)])
    u_arr = np.asarray([float(u)])
    total = _scalar(perf.f_u(t, x_arr, i_arr, u_arr))
    total += adjoint.p * _scalar(forward.b_u(t, x_arr, i_arr, u_arr))
    total += adjoint.q * _scalar(forward.sigma_u(t, x_arr, i_arr, u_arr))
    if adjoint.r is not None and levy is not None:
        total += _scalar(
            levy.integrate(
                regime,
                lambda z: adjoint.r(z) * np.asarray(forward.gamma_u(t, x_arr, i_arr, u_arr, z)),
            )
        )
    if adjoint.w is not None and forward.eta_u is not None:
        if gen is None:
            raise ConfigError("regime-jump Hamiltonian term needs the chain generator")
        eta_row = np.asarray(forward.eta_u(t, x_arr, i_arr, u_arr), dtype=np.float64).reshape(-1)
        rates = gen.rates[regime - 1].copy()
        rates[regime - 1] = 0.0
        total += float(np.dot(eta_row, np.asarray(adjoint.w) * rates))
    return total


# ---------------------------------------------------------------------------
# Forward adjoint A(t)
# ---------------------------------------------------------------------------


def simulate_adjoint_A(
    forward: ForwardModel,
    perf: PerformanceModel,
    bsde: BsdeModel,
    policy: ControlPolicy,
    bundles: BundleSet,
    x0: float,
    y0_derivative: float,
    y_values: TrajectorySet | None = None,
) -> TrajectorySet:
    """Euler scheme for the forward adjoint started at ``A(0) = ψ'(Y(0))``.

    In the supported class the only surviving dynamics is
    ``dA = A·∂g/∂y dt``: rewards and drivers are free of the martingale
    integrands, so the diffusion/jump slots of the adjoint vanish.  When
    the driver is trivial too, ``A`` is the constant ``ψ'(Y(0))``.
    """
    n, m = len(bundles), bundles.n_steps
    if bsde.is_trivial and not perf.f_uses_y:
        values = np.full((n, m + 1), float(y0_derivative))
        return TrajectorySet(bundles.grid, values, bundles)
    if bsde.driver_dy is None:
        raise UnsupportedModelError("adjoint simulation needs driver y-derivatives")
    if bsde.requires_positive_y and y_values is None:
        raise UnsupportedModelError("log-type drivers need simulated Y values for the adjoint")
    base = simulate_forward_set(forward, policy, bundles, x0)
    grid = bundles.grid
    a = np.full(n, float(y0_derivative))
    out = np.empty((n, m + 1))
    out[:, 0] = a
    for k in range(m):
        t = grid[k]
        dt = grid[k + 1] - grid[k]
        regime = bundles.alpha_left[:, k]
        x = base.values[:, k]
        y = y_values.values[:, k] if y_values is not None else np.zeros(n)
        a = a + a * bsde.dg_dy(t, x, regime, y) * dt
        out[:, k + 1] = a
    return TrajectorySet(grid, out, bundles)


# ---------------------------------------------------------------------------
# Closed forms of the linear-quadratic application
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GammaCoefficients:
    """Inputs of the conditional-adjoint weight for the two-regime chain."""

    c3: tuple[float, float]
    c4: tuple[float, float]
    lam12: float
    lam21: float

    def __post_init__(self):
        if self.lam12 + self.lam21 <= 0:
            raise DomainError("gamma weight needs lam12 + lam21 > 0")

    @classmethod
    def from_spec(cls, spec: LqSpec) -> "GammaCoefficients":
        return cls(
            c3=spec.c3,
            c4=spec.c4,
            lam12=float(spec.chain.rates[0, 1]),
            lam21=float(spec.chain.rates[1, 0]),
        )


def gamma(t: float, horizon: float, regime: int, coeffs: GammaCoefficients) -> float:
    """Conditional-adjoint weight ``Γ(t, T, i)`` of the two-regime closed form.

    Regime 1 follows the displayed formula; regime 2 is the same expression
    with the regime indices swapped everywhere (including the coefficient
    differences).  Equivalently ``Γ(t,T,i) = E[C4(α(T)) | α(t)=i] +
    ∫_t^T E[C3(α(s)) | α(t)=i] ds``.
    """
    if not 0.0 <= t <= horizon:
        raise DomainError("need 0 <= t <= horizon")
    if regime == 1:
        own, other = 0, 1
        lam_out = coeffs.lam12
    elif regime == 2:
        own, other = 1, 0
        lam_out = coeffs.lam21
    else:
        raise DomainError("closed form defined for regimes 1 and 2")
    total = coeffs.lam12 + coeffs.lam21
    tau = horizon - t
    c3_diff = coeffs.c3[other] - coeffs.c3[own]
    c4_diff = coeffs.c4[other] - coeffs.c4[own]
    relax = 1.0 - math.exp(-total * tau)
    return (
        coeffs.c4[own]
        + coeffs.c3[own] * tau
        + c3_diff * (lam_out / total) * tau
        + lam_out * (c4_diff * total - c3_diff) / total**2 * relax
    )


def optimal_control_lq(t: float, regime: int, spec: LqSpec) -> float:
    """Closed-form stationary control of the linear-quadratic application.

    ``u*(t,i) = -C1(i) / (2C2(i) + 2Γ(t,T,i)(σ²(t) + ∫γ²(t,ζ)ν(dζ)))``.
    """
    coeffs = GammaCoefficients.from_spec(spec)
    denom = 2.0 * spec.c2[regime - 1] + 2.0 * gamma(t, spec.horizon, regime, coeffs) * spec.noise_load(t)
    if abs(denom) < 1e-10:
        raise SingularControlError(f"control denominator ~ 0 at t={t}, regime={regime}")
    return -spec.c1[regime - 1] / denom


def optimal_policy(spec: LqSpec) -> ControlPolicy:
    """The closed-form control as a regime-feedback policy."""

    def rule(t: float, regime: NDArray[np.int64]) -> NDArray[np.float64]:
        u1 = optimal_control_lq(t, 1, spec)
        u2 = optimal_control_lq(t, 2, spec)
        return np.where(regime == 1, u1, u2)

    return ControlPolicy.regime_feedback(rule, name="lq-optimal")


def lq_conditional_adjoints(
    u: float, t: float, horizon: float, regime: int, spec: LqSpec
) -> tuple[float, Callable[[float], float]]:
    """Analytic conditional adjoints of the linear-quadratic application.

    ``E[q|F_t] = 2uσ(t)Γ(t,T,i)`` and ``E[r(·,ζ)|F_t] = 2uγ(t,ζ)Γ(t,T,i)``.
    """
    coeffs = GammaCoefficients.from_spec(spec)
    g = gamma(t, horizon, regime, coeffs)
    q_cond = 2.0 * u * float(spec.sigma(t)) * g

    def r_cond(z: float) -> float:
        loading = spec.gamma(t, z) if spec.gamma is not None else 0.0
        return 2.0 * u * loading * g

    return q_cond, r_cond


def lq_kappa(trajectory, regime_path, spec: LqSpec, t: float) -> float:
    """Terminal-plus-running adjoint seed ``κ(t)`` along one path.

    ``κ(t) = 2C4(α(T))X(T) + 2∫_t^T C3(α(s))X(s) ds`` with the time integral
    taken as a left-Riemann sum over the trajectory grid clipped to
    ``[t, T]``.
    """
    grid = trajectory.grid
    horizon = float(grid[-1])
    if not 0.0 <= t <= horizon:
        raise DomainError("need 0 <= t <= horizon")
    c3 = np.asarray(spec.c3)
    c4 = np.asarray(spec.c4)
    states = regime_path.states_on_grid(grid, left_limit=True)
    lengths = np.clip(grid[1:], t, horizon) - np.clip(grid[:-1], t, horizon)
    running = float(
        np.sum(c3[states[:-1] - 1] * trajectory.values[:-1] * lengths)
    )
    terminal_state = regime_path.state_at(horizon)
    return 2.0 * c4[terminal_state - 1] * trajectory.values[-1] + 2.0 * running


# ---------------------------------------------------------------------------
# Stationarity verification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BucketVerdict:
    bucket: int
    t_lo: float
    t_hi: float
    regime: int
    mean: float
    std_error: float
    n_paths: int

    def within(self, se_multiplier: float, abs_tolerance: float) -> bool:
        return abs(self.mean) <= se_multiplier * self.std_error + abs_tolerance


@dataclass(frozen=True)
class StationarityReport:
    buckets: tuple[BucketVerdict, ...]

    def passed(self, se_multiplier: float = 3.0, abs_tolerance: float = 1e-12) -> bool:
        return all(b.within(se_multiplier, abs_tolerance) for b in self.buckets)

    def worst_ratio(self) -> float:
        """Largest ``|mean| / se`` over buckets (inf when se is zero but mean is not)."""
        worst = 0.0
        for b in self.buckets:
            if b.std_error > 0:
                worst = max(worst, abs(b.mean) / b.std_error)
            elif abs(b.mean) > 0:
                worst = math.inf
        return worst


class LqAnalyticAdjoints:
    """Control-gradient source using the closed-form conditional adjoints.

    Substituting ``E[q|F_t]`` and ``E[r|F_t]`` into the control gradient
    collapses it to ``C1(i) + u·(2C2(i) + 2Γ(t,T,i)·(σ² + ∫γ²ν))``.
    """

    def __init__(self, spec: LqSpec):
        self.spec = spec
        self._coeffs = GammaCoefficients.from_spec(spec)

    def control_gradient(self, t, x, regime, u):
        spec = self.spec
        g1 = gamma(t, spec.horizon, 1, self._coeffs)
        g2 = gamma(t, spec.horizon, 2, self._coeffs)
        g = np.where(regime == 1, g1, g2)
        c1 = np.asarray(spec.c1)[regime - 1]
        c2 = np.asarray(spec.c2)[regime - 1]
        return c1 + u * (2.0 * c2 + 2.0 * g * spec.noise_load(t))


class SuppliedAdjoints:
    """Control-gradient source from an explicit user adjoint rule.

    ``provider(t) -> AdjointState`` supplies deterministic adjoints; the
    gradient is assembled through :func:`hamiltonian_control_gradient`
    point by point, so this source is meant for desk-scale verification
    runs, not the large bundled sweeps.
    """

    def __init__(self, provider, forward: ForwardModel, perf: PerformanceModel,
                 gen: GeneratorMatrix | None = None, levy: LevyMeasureSpec | None = None):
        self.provider = provider
        self.forward = forward
        self.perf = perf
        self.gen = gen
        self.levy = levy

    def control_gradient(self, t, x, regime, u):
        adjoint = self.provider(t)
        out = np.empty(np.shape(x))
        for idx in range(out.size):
            out[idx] = hamiltonian_control_gradient(
                t, float(x[idx]), int(regime[idx]), float(u[idx]), adjoint,
                self.forward, self.perf, gen=self.gen, levy=self.levy,
            )
        return out


def stationarity_check(
    policy: ControlPolicy,
    source,
    forward: ForwardModel,
    bundles: BundleSet,
    x0: float,
    n_buckets: int = 16,
) -> StationarityReport:
    """Bucketed estimates of ``E[∂H/∂u]`` along simulated paths.

    The time axis splits into ``n_buckets`` uniform buckets crossed with the
    regime at each grid node; per-path bucket averages are the i.i.d. units
    behind each mean and standard error.  ``source`` must expose
    ``control_gradient(t, x, regime, u)``.
    """
    if not hasattr(source, "control_gradient"):
        raise ConfigError("adjoint source must expose control_gradient(t, x, regime, u)")
    traj = simulate_forward_set(forward, policy, bundles, x0)
    grid = bundles.grid
    horizon = bundles.horizon
    n, m = len(bundles), bundles.n_steps
    dim = bundles.generator.dim
    values = np.empty((n, m))
    for k in range(m):
        t = grid[k]
        x = traj.values[:, k]
        regime = bundles.alpha_left[:, k]
        u = policy.evaluate(t, x, regime)
        values[:, k] = source.control_gradient(t, x, regime, u)
    node_bucket = np.minimum(
        (grid[:-1] / horizon * n_buckets).astype(np.int64), n_buckets - 1
    )
    verdicts = []
    for b in range(n_buckets):
        cols = node_bucket == b
        if not np.any(cols):
            continue
        t_lo = b * horizon / n_buckets
        t_hi = (b + 1) * horizon / n_buckets
        for r in range(1, dim + 1):
            mask = bundles.alpha_left[:, :-1][:, cols] == r
            counts = mask.sum(axis=1)
            hit = counts > 0
            if not np.any(hit):
                verdicts.append(BucketVerdict(b, t_lo, t_hi, r, 0.0, 0.0, 0))
                continue
            sums = np.where(mask, values[:, cols], 0.0).sum(axis=1)
            per_path = sums[hit] / counts[hit]
            est = estimate_from_values(per_path)
            verdicts.append(
                BucketVerdict(b, t_lo, t_hi, r, est.mean, est.std_error, int(hit.sum()))
            )
    return StationarityReport(tuple(verdicts))
