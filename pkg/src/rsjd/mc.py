"""Monte Carlo estimators for the performance functional and its derivatives.

The running-reward time integral uses left-Riemann sums on the simulation
grid, matching the Euler scheme's predictable-integrand convention.
Derivative estimates always difference the two control arms path by path on
shared bundles (common random numbers); reductions are plain ordered numpy
folds, so results do not depend on scheduling.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.typing import NDArray

from .bundles import BundleSet
from .errors import ConfigError, DomainError, NumericalError, UnsupportedModelError, ValidationError
from .forward import TrajectorySet, simulate_forward_set, simulate_variational_set
from .model import BsdeModel, ControlPolicy, ForwardModel, PerformanceModel, perturb, scale_policy


@dataclass(frozen=True)
class Estimate:
    """A Monte Carlo mean with its standard error."""

    mean: float
    std_error: float
    n_paths: int
    metadata: dict = field(default_factory=dict, compare=False)

    @property
    def ci95(self) -> tuple[float, float]:
        half = 1.96 * self.std_error
        return (self.mean - half, self.mean + half)

    def to_record(self, name: str, seed: int, config_hash: str) -> dict:
        lo, hi = self.ci95
        return {
            "name": name,
            "mean": self.mean,
            "se": self.std_error,
            "ci95": [lo, hi],
            "n": self.n_paths,
            "seed": seed,
            "config_hash": config_hash,
        }


def estimate_from_values(values: NDArray[np.float64], metadata: dict | None = None) -> Estimate:
    values = np.asarray(values, dtype=np.float64)
    n = values.size
    mean = float(np.mean(values)) if n else float("nan")
    se = float(np.std(values, ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return Estimate(mean, se, n, metadata or {})


def paired_difference(a: NDArray[np.float64], b: NDArray[np.float64], metadata=None) -> Estimate:
    """Estimate of ``E[a - b]`` from per-path paired samples."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValidationError("paired samples must align")
    return estimate_from_values(a - b, metadata)


# ---------------------------------------------------------------------------
# Performance functional
# ---------------------------------------------------------------------------


@dataclass
class PerformanceEvaluator:
    """Bundles the pieces needed to turn a policy into per-path J values."""

    perf: PerformanceModel
    model: ForwardModel
    x0: float
    bsde_solution: object | None = None  # BsdeSolution when psi or f need Y

    def needs_bsde(self) -> bool:
        return self.perf.psi_kind != "zero" or self.perf.f_uses_y

    def path_values(self, policy: ControlPolicy, bundles: BundleSet) -> NDArray[np.float64]:
        if self.needs_bsde() and self.bsde_solution is None:
            raise ConfigError("performance functional references Y but no BSDE solution was supplied")
        traj = simulate_forward_set(self.model, policy, bundles, self.x0)
        vals = running_reward_integral(self.perf, traj, policy, self.bsde_solution)
        vals += np.asarray(
            self.perf.phi(traj.terminal, bundles.alpha_terminal), dtype=np.float64
        )
        if self.perf.psi_kind != "zero":
            vals += float(self.perf.psi(self.bsde_solution.y0.mean))
        return vals

    def psi_se_component(self) -> float:
        """Delta-method standard error carried by the ψ(Y(0)) term."""
        if self.perf.psi_kind == "zero":
            return 0.0
        y0 = self.bsde_solution.y0
        return abs(float(self.perf.psi_prime(y0.mean))) * y0.std_error


def running_reward_integral(
    perf: PerformanceModel,
    traj: TrajectorySet,
    policy: ControlPolicy,
    bsde_solution=None,
) -> NDArray[np.float64]:
    """Left-Riemann integral of the running reward along each path."""
    bundles = traj.bundles
    grid = bundles.grid
    vals = np.zeros(len(bundles))
    for k in range(bundles.n_steps):
        t = grid[k]
        dt = grid[k + 1] - grid[k]
        x = traj.values[:, k]
        regime = bundles.alpha_left[:, k]
        u = policy.evaluate(t, x, regime)
        if perf.f_uses_y:
            y = bsde_solution.values[:, k]
            vals += np.asarray(perf.f(t, x, regime, u, y), dtype=np.float64) * dt
        else:
            vals += np.asarray(perf.f(t, x, regime, u), dtype=np.float64) * dt
    return vals


def estimate_performance(
    perf: PerformanceModel,
    bsde_solution,
    model: ForwardModel,
    policy: ControlPolicy,
    bundles: BundleSet,
    x0: float,
) -> Estimate:
    """Monte Carlo estimate of the performance functional J(u).

    The ψ(Y(0)) term is a cross-path constant; its own Monte Carlo error is
    folded into the standard error by the delta method.
    """
    ev = PerformanceEvaluator(perf, model, x0, bsde_solution)
    values = ev.path_values(policy, bundles)
    est = estimate_from_values(values)
    psi_se = ev.psi_se_component()
    if psi_se > 0.0:
        est = Estimate(
            est.mean,
            float(np.hypot(est.std_error, psi_se)),
            est.n_paths,
            {"psi_se": psi_se},
        )
    return est


# ---------------------------------------------------------------------------
# Directional derivatives
# ---------------------------------------------------------------------------


def directional_derivative_crn(
    evaluator: PerformanceEvaluator,
    policy: ControlPolicy,
    direction: ControlPolicy,
    ell: float,
    bundles: BundleSet,
) -> Estimate:
    """Central-difference derivative of J on common random numbers.

    Per path: ``(J_path(u+ℓβ) − J_path(u−ℓβ)) / 2ℓ``; the estimate is the
    mean and standard error of those paired differences.  Clamping on
    either arm is counted into the metadata.
    """
    if ell <= 0:
        raise DomainError("bump size ell must be positive")
    plus = perturb(policy, direction, ell)
    minus = perturb(policy, direction, -ell)
    plus.reset_clamp_count()
    minus.reset_clamp_count()
    v_plus = evaluator.path_values(plus, bundles)
    v_minus = evaluator.path_values(minus, bundles)
    meta = {
        "ell": ell,
        "clamped_plus": plus.clamp_events,
        "clamped_minus": minus.clamp_events,
    }
    if plus.clamp_events or minus.clamp_events:
        meta["warning"] = "value-set clamping active on a perturbed arm"
    return estimate_from_values((v_plus - v_minus) / (2.0 * ell), meta)


def directional_derivative_pathwise(
    perf: PerformanceModel,
    model: ForwardModel,
    policy: ControlPolicy,
    direction: ControlPolicy,
    bundles: BundleSet,
    x0: float,
    bsde_model: BsdeModel | None = None,
) -> Estimate:
    """Pathwise derivative ``∫(f_x·x₁ + f_u·β)dt + φ_x·x₁(T)`` per path.

    Supported when ψ is absent, or ψ is linear with a trivial driver so the
    backward derivative collapses onto ``ψ'·h_x·x₁(T)``.
    """
    if perf.f_uses_y:
        raise UnsupportedModelError("pathwise derivative needs a Y-free running reward")
    if perf.psi_kind == "general":
        raise UnsupportedModelError("pathwise derivative supports psi zero or linear only")
    if perf.psi_kind == "linear":
        if bsde_model is None:
            raise UnsupportedModelError("linear psi needs the backward terminal condition h")
        if not bsde_model.is_trivial:
            raise UnsupportedModelError("linear psi is supported only with a zero driver")
    base = simulate_forward_set(model, policy, bundles, x0)
    x1 = simulate_variational_set(model, policy, direction, bundles, base)
    grid = bundles.grid
    vals = np.zeros(len(bundles))
    for k in range(bundles.n_steps):
        t = grid[k]
        dt = grid[k + 1] - grid[k]
        x = base.values[:, k]
        regime = bundles.alpha_left[:, k]
        u = policy.evaluate(t, x, regime)
        beta = direction.evaluate(t, x, regime)
        vals += (
            np.asarray(perf.f_x(t, x, regime, u)) * x1.values[:, k]
            + np.asarray(perf.f_u(t, x, regime, u)) * beta
        ) * dt
    alpha_t = bundles.alpha_terminal
    vals += np.asarray(perf.phi_x(base.terminal, alpha_t), dtype=np.float64) * x1.terminal
    if perf.psi_kind == "linear":
        slope = float(perf.psi_prime(0.0))
        vals += slope * np.asarray(bsde_model.h_x(base.terminal, alpha_t)) * x1.terminal
    return estimate_from_values(vals)


def control_scaling_sweep(
    evaluator: PerformanceEvaluator,
    policy: ControlPolicy,
    deltas: Sequence[float],
    bundles: BundleSet,
) -> list[dict]:
    """Evaluate J at ``(1+δ)·u`` on shared bundles for each δ.

    Returns one record per δ with the J estimate and the paired difference
    ``J(u) − J((1+δ)u)`` against the δ=0 baseline.
    """
    base_values = evaluator.path_values(policy, bundles)
    records = []
    for delta in deltas:
        if delta == 0.0:
            values = base_values
        else:
            values = evaluator.path_values(scale_policy(policy, 1.0 + delta), bundles)
        records.append(
            {
                "delta": float(delta),
                "estimate": estimate_from_values(values),
                "gap_vs_base": paired_difference(base_values, values),
            }
        )
    return records


# ---------------------------------------------------------------------------
# Regression-based conditional expectations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RegressionBasis:
    """Named feature maps ``(t, x, regime) -> value`` for ridge regression."""

    features: tuple[tuple[str, Callable], ...]

    @classmethod
    def default(cls, dim: int = 2) -> "RegressionBasis":
        """``{1, X, X²}`` plus per-regime indicators and indicator×X."""
        feats = [
            ("const", lambda t, x, r: np.ones_like(x)),
            ("x", lambda t, x, r: x),
            ("x2", lambda t, x, r: x**2),
        ]
        for j in range(1, dim + 1):
            feats.append((f"in{j}", lambda t, x, r, j=j: (r == j).astype(np.float64)))
            feats.append((f"in{j}_x", lambda t, x, r, j=j: (r == j) * x))
        return cls(tuple(feats))

    @classmethod
    def quadratic(cls) -> "RegressionBasis":
        """``{1, X, X²}``; regime structure comes from stratification."""
        return cls(
            (
                ("const", lambda t, x, r: np.ones_like(x)),
                ("x", lambda t, x, r: x),
                ("x2", lambda t, x, r: x**2),
            )
        )

    @property
    def size(self) -> int:
        return len(self.features)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.features)

    def design(self, t, x, regime) -> NDArray[np.float64]:
        x = np.asarray(x, dtype=np.float64)
        regime = np.broadcast_to(np.asarray(regime), x.shape)
        cols = [np.broadcast_to(np.asarray(fn(t, x, regime), dtype=np.float64), x.shape)
                for _, fn in self.features]
        return np.column_stack(cols)


@dataclass(frozen=True)
class FittedConditional:
    """Ridge least-squares fit of a conditional expectation."""

    basis: RegressionBasis
    coefficients: NDArray[np.float64]
    ridge: float
    r_squared: float

    def predict(self, t, x, regime) -> NDArray[np.float64]:
        return self.basis.design(t, x, regime) @ self.coefficients


def ridge_fit(design: NDArray[np.float64], targets: NDArray[np.float64], ridge: float | None = None):
    """Solve the ridge normal equations; returns (coefficients, ridge, r2)."""
    n, p = design.shape
    gram = design.T @ design
    if ridge is None:
        ridge = 1e-8 * float(np.trace(gram)) / p
    gram_reg = gram + ridge * np.eye(p)
    if not np.all(np.isfinite(gram_reg)):
        raise NumericalError("non-finite regression design")
    cond = np.linalg.cond(gram_reg)
    if not np.isfinite(cond) or cond > 1e14:
        raise NumericalError("regression design is rank deficient after regularization")
    coef = np.linalg.solve(gram_reg, design.T @ targets)
    resid = targets - design @ coef
    ss_res = float(resid @ resid)
    centered = targets - np.mean(targets)
    ss_tot = float(centered @ centered)
    if ss_tot > 0.0:
        r2 = 1.0 - ss_res / ss_tot
    else:
        # constant target: call the fit perfect when residuals are negligible
        scale = max(float(targets @ targets), 1.0)
        r2 = 1.0 if ss_res <= 1e-14 * scale else 0.0
    return coef, ridge, r2


def conditional_expectation(
    points: tuple,
    targets: NDArray[np.float64],
    basis: RegressionBasis,
    ridge: float | None = None,
) -> FittedConditional:
    """Fit ``E[target | features]`` by ridge-regularized least squares.

    ``points`` is ``(t, x, regime)`` with array-valued ``x`` and ``regime``.
    Requires at least 10 samples per basis function.
    """
    t, x, regime = points
    targets = np.asarray(targets, dtype=np.float64)
    design = basis.design(t, x, regime)
    if design.shape[0] < 10 * basis.size:
        raise ValidationError("need >= 10 samples per basis function")
    coef, ridge_used, r2 = ridge_fit(design, targets, ridge)
    return FittedConditional(basis, coef, ridge_used, r2)
