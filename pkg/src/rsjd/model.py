"""Declarative system descriptions: coefficients, rewards, drivers, controls.

Coefficient callables must be numpy-broadcastable over their array
arguments; the simulation engine calls them with vectors across paths
(state ``x``, regime labels ``i`` in ``1..D``, control ``u``) and, for the
jump coefficient, with vectors of event times and marks.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.typing import NDArray

from .errors import DomainError, UnsupportedModelError, ValidationError
from .jumps import JumpSizeDistribution, LevyMeasureSpec
from .regime import GeneratorMatrix

_INFO_LEVELS = {"deterministic": 0, "regime-only": 1, "full": 2}


@dataclass
class Snapshot:
    """The information made visible to a control rule at one instant.

    Fields beyond the declared info level of the policy are ``None``, so a
    rule physically cannot depend on information it is not entitled to.
    """

    t: float
    regime: NDArray[np.int64] | None = None
    x: NDArray[np.float64] | None = None


class ControlPolicy:
    """A measurable control rule ``u(t, snapshot)`` with value set ``U``.

    ``value_set`` is either ``None`` (all reals) or a closed interval
    ``(lo, hi)``; interval policies clip their output and count how often
    clipping fired in :attr:`clamp_events`.
    """

    def __init__(
        self,
        rule: Callable[[float, Snapshot], float | NDArray[np.float64]],
        info_level: str = "full",
        value_set: tuple[float, float] | None = None,
        name: str = "policy",
    ):
        if info_level not in _INFO_LEVELS:
            raise ValidationError(f"unknown info level {info_level!r}")
        if value_set is not None and not value_set[0] <= value_set[1]:
            raise ValidationError("value set must be an interval (lo, hi)")
        self.rule = rule
        self.info_level = info_level
        self.value_set = value_set
        self.name = name
        self.clamp_events = 0

    def evaluate(
        self, t: float, x: NDArray[np.float64], regime: NDArray[np.int64]
    ) -> NDArray[np.float64]:
        return self._clamp(np.broadcast_to(self._raw(t, x, regime), regime.shape))

    __call__ = evaluate

    def _raw(self, t, x, regime):
        level = _INFO_LEVELS[self.info_level]
        snap = Snapshot(
            t=t,
            regime=regime if level >= 1 else None,
            x=x if level >= 2 else None,
        )
        return np.asarray(self.rule(t, snap), dtype=np.float64)

    def _clamp(self, u):
        if self.value_set is None:
            return np.array(u, copy=True)
        clipped = np.clip(u, self.value_set[0], self.value_set[1])
        self.clamp_events += int(np.count_nonzero(clipped != u))
        return clipped

    def reset_clamp_count(self) -> None:
        self.clamp_events = 0

    # -- constructors ---------------------------------------------------------
    @classmethod
    def constant(cls, value: float, value_set=None, name: str | None = None) -> "ControlPolicy":
        return cls(
            lambda t, snap: value,
            info_level="deterministic",
            value_set=value_set,
            name=name or f"constant({value})",
        )

    @classmethod
    def deterministic(cls, fn: Callable[[float], float], value_set=None, name="deterministic") -> "ControlPolicy":
        return cls(lambda t, snap: fn(t), info_level="deterministic", value_set=value_set, name=name)

    @classmethod
    def regime_feedback(cls, fn: Callable[[float, NDArray[np.int64]], NDArray[np.float64]],
                        value_set=None, name="regime-feedback") -> "ControlPolicy":
        return cls(lambda t, snap: fn(t, snap.regime), info_level="regime-only",
                   value_set=value_set, name=name)

    @classmethod
    def full_information(cls, fn: Callable[[float, NDArray, NDArray], NDArray],
                         value_set=None, name="full-information") -> "ControlPolicy":
        return cls(lambda t, snap: fn(t, snap.x, snap.regime), info_level="full",
                   value_set=value_set, name=name)


class PerturbedPolicy(ControlPolicy):
    """``u + ℓ·β`` evaluated through each rule's own information filter."""

    def __init__(self, base: ControlPolicy, direction: ControlPolicy, ell: float):
        super().__init__(
            rule=None,
            info_level=base.info_level,
            value_set=base.value_set,
            name=f"{base.name}+{ell}*{direction.name}",
        )
        self.base = base
        self.direction = direction
        self.ell = ell

    def _raw(self, t, x, regime):
        return self.base._raw(t, x, regime) + self.ell * self.direction._raw(t, x, regime)


def perturb(policy: ControlPolicy, direction: ControlPolicy, ell: float) -> ControlPolicy:
    """Pointwise perturbation ``t ↦ u(t) + ℓ·β(t)`` clamped to the value set.

    The direction may not use finer information than the policy it bumps.
    """
    if _INFO_LEVELS[direction.info_level] > _INFO_LEVELS[policy.info_level]:
        raise ValidationError("perturbation direction uses finer information than the policy")
    return PerturbedPolicy(policy, direction, ell)


def scale_policy(policy: ControlPolicy, factor: float) -> ControlPolicy:
    """``u ↦ factor · u`` realized as the perturbation ``u + (factor−1)·u``."""
    return PerturbedPolicy(policy, policy, factor - 1.0)


def bump_direction(t0: float, size: float = 1.0) -> ControlPolicy:
    """Deterministic bump ``β(t) = size · 1{t > t0}``."""
    return ControlPolicy.deterministic(
        lambda t: size if t > t0 else 0.0, name=f"bump(t>{t0})"
    )


# ---------------------------------------------------------------------------
# Coefficient bundles
# ---------------------------------------------------------------------------

Coefficient = Callable[..., float | NDArray[np.float64]]


def _zero(*args):
    return 0.0


@dataclass(frozen=True)
class ForwardModel:
    """Drift/diffusion/jump/regime-jump coefficients with their partials.

    Signatures: ``b(t, x, i, u)``, ``sigma(t, x, i, u)``,
    ``gamma(t, x, i, u, z)``, ``eta(t, x, i, u) -> (n, D)`` or ``None`` when
    the state does not react to regime jumps.  ``*_x`` and ``*_u`` are the
    matching partial derivatives.
    """

    b: Coefficient = _zero
    b_x: Coefficient = _zero
    b_u: Coefficient = _zero
    sigma: Coefficient = _zero
    sigma_x: Coefficient = _zero
    sigma_u: Coefficient = _zero
    gamma: Coefficient = _zero
    gamma_x: Coefficient = _zero
    gamma_u: Coefficient = _zero
    eta: Coefficient | None = None
    eta_x: Coefficient | None = None
    eta_u: Coefficient | None = None
    name: str = "forward-model"


@dataclass(frozen=True)
class PerformanceModel:
    """Running reward ``f``, bequest ``phi`` and utility evaluation ``psi``.

    ``psi_kind`` is one of ``"zero"``, ``"linear"``, ``"general"`` and gates
    the estimators that rely on ``psi`` being absent or affine.  When
    ``f_uses_y`` is set, ``f`` takes a trailing ``y`` argument and
    evaluating the functional requires a solved value process.
    """

    f: Coefficient = _zero
    f_x: Coefficient = _zero
    f_u: Coefficient = _zero
    phi: Coefficient = _zero
    phi_x: Coefficient = _zero
    psi: Callable[[float], float] = _zero
    psi_prime: Callable[[float], float] = _zero
    psi_kind: str = "zero"
    f_uses_y: bool = False
    name: str = "performance"

    def __post_init__(self):
        if self.psi_kind not in ("zero", "linear", "general"):
            raise ValidationError("psi_kind must be zero/linear/general")


@dataclass(frozen=True)
class BsdeModel:
    """Backward-equation driver and terminal condition.

    Drivers are one callable ``g_i(t, x, y)`` per regime (``None`` means
    zero); dependence on the martingale integrands is out of the supported
    class by construction.  ``driver_dy`` holds the matching ``∂g/∂y``.
    """

    drivers: tuple[Callable | None, ...] = (None, None)
    driver_dy: tuple[Callable | None, ...] | None = None
    h: Coefficient = _zero
    h_x: Coefficient = _zero
    requires_positive_y: bool = False
    name: str = "bsde"

    @property
    def is_trivial(self) -> bool:
        return all(d is None for d in self.drivers)

    def g(self, t, x, regime, y):
        """Regime-dispatched driver evaluation."""
        out = np.zeros(np.broadcast(x, regime, y).shape)
        for r, drv in enumerate(self.drivers, start=1):
            if drv is None:
                continue
            mask = regime == r
            if np.any(mask):
                xb = np.broadcast_to(x, mask.shape)
                yb = np.broadcast_to(y, mask.shape)
                out[mask] = drv(t, xb[mask], yb[mask])
        return out

    def dg_dy(self, t, x, regime, y):
        if self.driver_dy is None:
            raise UnsupportedModelError(f"{self.name} does not expose driver derivatives")
        out = np.zeros(np.broadcast(x, regime, y).shape)
        for r, drv in enumerate(self.driver_dy, start=1):
            if drv is None:
                continue
            mask = regime == r
            if np.any(mask):
                xb = np.broadcast_to(x, mask.shape)
                yb = np.broadcast_to(y, mask.shape)
                out[mask] = drv(t, xb[mask], yb[mask])
        return out


# ---------------------------------------------------------------------------
# Linear-quadratic application preset
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LqSpec:
    """Coefficients of the two-regime linear-quadratic application.

    ``c1..c4`` are per-regime reward weights, ``sigma`` the deterministic
    volatility ``σ(t)``, ``gamma`` the jump loading ``γ(t, ζ)`` integrated
    against the regime-independent measure ``jump_rate × jump_sizes``, and
    ``chain`` the two-state regime generator the closed forms depend on.
    """

    c1: tuple[float, float]
    c2: tuple[float, float]
    c3: tuple[float, float]
    c4: tuple[float, float]
    horizon: float
    chain: GeneratorMatrix
    sigma: Callable[[float], float] = lambda t: 1.0
    gamma: Callable[[float, float], float] | None = None
    jump_rate: float = 0.0
    jump_sizes: JumpSizeDistribution | None = None

    def __post_init__(self):
        for name in ("c1", "c2", "c3", "c4"):
            vals = tuple(float(v) for v in getattr(self, name))
            object.__setattr__(self, name, vals)
            if len(vals) != 2:
                raise ValidationError("closed-form routines require exactly two regimes")
        if self.chain.dim != 2:
            raise ValidationError("closed-form routines require a two-state chain")
        if self.horizon <= 0:
            raise ValidationError("horizon must be positive")
        if self.jump_rate < 0:
            raise ValidationError("jump_rate must be >= 0")
        if self.jump_rate > 0 and (self.jump_sizes is None or self.gamma is None):
            raise ValidationError("active jumps need jump_sizes and a gamma loading")

    def jump_measure(self) -> LevyMeasureSpec:
        return LevyMeasureSpec.uniform(self.jump_rate, self.jump_sizes, 2)

    def gamma_second_moment(self, t: float) -> float:
        """``∫ γ²(t, ζ) ν(dζ)``."""
        if self.jump_rate == 0.0 or self.gamma is None:
            return 0.0
        return float(self.jump_rate * self.jump_sizes.expect(lambda z: self.gamma(t, z) ** 2))

    def noise_load(self, t: float) -> float:
        """``σ²(t) + ∫ γ²(t, ζ) ν(dζ)``, the denominator noise weight."""
        return float(self.sigma(t)) ** 2 + self.gamma_second_moment(t)


def application1_preset(spec: LqSpec) -> tuple[ForwardModel, PerformanceModel, BsdeModel]:
    """Controlled martingale state with quadratic running/terminal rewards.

    State: ``dX = u(t)·{σ(t) dB + ∫ γ(t,ζ) dÑ}`` from ``X(0) = 0``; reward
    rate ``C1(i)u + C2(i)u² + C3(i)x²``; bequest ``C4(i)x²``; no backward
    component.
    """
    c1 = np.asarray(spec.c1)
    c2 = np.asarray(spec.c2)
    c3 = np.asarray(spec.c3)
    c4 = np.asarray(spec.c4)
    sig = spec.sigma
    gam = spec.gamma if spec.gamma is not None else (lambda t, z: 0.0)

    forward = ForwardModel(
        sigma=lambda t, x, i, u: u * sig(t),
        sigma_u=lambda t, x, i, u: sig(t) * np.ones_like(u),
        gamma=lambda t, x, i, u, z: u * gam(t, z),
        gamma_u=lambda t, x, i, u, z: gam(t, z) * np.ones_like(u),
        name="application1-state",
    )
    perf = PerformanceModel(
        f=lambda t, x, i, u: c1[i - 1] * u + c2[i - 1] * u**2 + c3[i - 1] * x**2,
        f_x=lambda t, x, i, u: 2.0 * c3[i - 1] * x,
        f_u=lambda t, x, i, u: c1[i - 1] + 2.0 * c2[i - 1] * u,
        phi=lambda x, i: c4[i - 1] * x**2,
        phi_x=lambda x, i: 2.0 * c4[i - 1] * x,
        psi_kind="zero",
        name="application1-reward",
    )
    bsde = BsdeModel(name="application1-trivial-bsde")
    return forward, perf, bsde


def _as_time_fn(value) -> tuple[Callable[[float], float], bool]:
    """Normalize a driver parameter to (callable, known-zero flag)."""
    if callable(value):
        return value, False
    const = float(value)
    return (lambda t: const), const == 0.0


def application2_preset(
    x0: float,
    mu: tuple[float, float],
    sigma: tuple[float, float],
    gamma: Callable[[float, float], float] | None,
    levy: LevyMeasureSpec,
    c1=0.0,
    c2=0.0,
    c=0.0,
    c0=0.0,
) -> tuple[ForwardModel, BsdeModel]:
    """Wealth dynamics with a recursive-utility backward equation.

    Wealth: ``dX = u·[μ(i) dt + σ(i) dB + ∫ γ(t,ζ) dÑ_α]`` from
    ``X(0) = x0 > 0``.  Terminal value ``h(x) = x``; regime-1 driver
    ``−c1(t)·y·ln y + c2(t)·y`` (positive ``y`` required once ``c1`` is
    active), regime-2 driver ``c(t)·y + c0(t)``.
    """
    if x0 <= 0:
        raise ValidationError("initial wealth must be positive")
    mu_arr = np.asarray(mu, dtype=np.float64)
    sig_arr = np.asarray(sigma, dtype=np.float64)
    gam = gamma if gamma is not None else (lambda t, z: 0.0)
    c1_fn, c1_zero = _as_time_fn(c1)
    c2_fn, _ = _as_time_fn(c2)
    c_fn, _ = _as_time_fn(c)
    c0_fn, _ = _as_time_fn(c0)

    forward = ForwardModel(
        b=lambda t, x, i, u: u * mu_arr[i - 1],
        b_u=lambda t, x, i, u: mu_arr[i - 1] * np.ones_like(u),
        sigma=lambda t, x, i, u: u * sig_arr[i - 1],
        sigma_u=lambda t, x, i, u: sig_arr[i - 1] * np.ones_like(u),
        gamma=lambda t, x, i, u, z: u * gam(t, z),
        gamma_u=lambda t, x, i, u, z: gam(t, z) * np.ones_like(u),
        name="application2-wealth",
    )

    def g1(t, x, y):
        if c1_zero:
            return c2_fn(t) * y
        y = np.asarray(y, dtype=np.float64)
        if np.any(y <= 0.0):
            raise DomainError("regime-1 recursive-utility driver needs y > 0")
        return -c1_fn(t) * y * np.log(y) + c2_fn(t) * y

    def g1_dy(t, x, y):
        if c1_zero:
            return c2_fn(t) * np.ones_like(y)
        y = np.asarray(y, dtype=np.float64)
        if np.any(y <= 0.0):
            raise DomainError("regime-1 recursive-utility driver needs y > 0")
        return -c1_fn(t) * (np.log(y) + 1.0) + c2_fn(t)

    def g2(t, x, y):
        return c_fn(t) * y + c0_fn(t)

    def g2_dy(t, x, y):
        return c_fn(t) * np.ones_like(y)

    bsde = BsdeModel(
        drivers=(g1, g2),
        driver_dy=(g1_dy, g2_dy),
        h=lambda x, i: x,
        h_x=lambda x, i: np.ones_like(x),
        requires_positive_y=not c1_zero,
        name="application2-recursive-utility",
    )
    return forward, bsde


# ---------------------------------------------------------------------------
# Derivative consistency probes
# ---------------------------------------------------------------------------


def central_difference(fn, args: tuple, index: int, step: float = 1e-5):
    """Central finite difference of ``fn`` in its ``index``-th argument."""
    hi = list(args)
    lo = list(args)
    hi[index] = args[index] + step
    lo[index] = args[index] - step
    return (np.asarray(fn(*hi)) - np.asarray(fn(*lo))) / (2.0 * step)


def max_relative_error(numeric, declared, floor: float = 1e-8) -> float:
    numeric = np.asarray(numeric, dtype=np.float64)
    declared = np.broadcast_to(np.asarray(declared, dtype=np.float64), numeric.shape)
    scale = np.maximum(np.abs(numeric), np.maximum(np.abs(declared), floor))
    return float(np.max(np.abs(numeric - declared) / scale))
