"""Finite-activity, regime-modulated jump measures.

A :class:`LevyMeasureSpec` holds one finite measure per regime, factored as
``rate × size distribution``.  Only finite-activity (compound Poisson)
measures are supported: events can then be simulated exactly and integrals
against the measure reduce to ``rate * E[f(ζ)]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from numpy.typing import NDArray

from .errors import ValidationError

_HERMITE_ORDER = 61
_HERMITE_NODES = np.polynomial.hermite_e.hermegauss(_HERMITE_ORDER)


@dataclass(frozen=True)
class DiscreteJumpSizes:
    """Jump sizes on finitely many nonzero atoms."""

    atoms: NDArray[np.float64]
    probs: NDArray[np.float64]

    def __post_init__(self):
        atoms = np.asarray(self.atoms, dtype=np.float64)
        probs = np.asarray(self.probs, dtype=np.float64)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "probs", probs)
        if atoms.size == 0 or atoms.size != probs.size:
            raise ValidationError("atoms and probs must be equal-length and non-empty")
        if np.any(atoms == 0.0):
            raise ValidationError("jump sizes must be nonzero")
        if np.any(probs < 0.0) or abs(probs.sum() - 1.0) > 1e-12:
            raise ValidationError("probs must be a probability vector")

    def sample(self, rng: np.random.Generator, n: int) -> NDArray[np.float64]:
        cum = np.cumsum(self.probs)
        idx = np.searchsorted(cum, rng.random(n), side="right")
        return self.atoms[np.minimum(idx, self.atoms.size - 1)]

    def expect(self, fn: Callable[[NDArray[np.float64]], NDArray[np.float64]]) -> float | NDArray[np.float64]:
        """``E[fn(ζ)]``, exact.  ``fn`` may return an array per atom."""
        total = 0.0
        for a, p in zip(self.atoms, self.probs):
            total = total + p * np.asarray(fn(np.float64(a)))
        return total

    @property
    def second_moment(self) -> float:
        return float(np.sum(self.probs * self.atoms**2))


@dataclass(frozen=True)
class GaussianJumpSizes:
    """Normally distributed jump sizes (the atom at 0 has measure zero)."""

    mean: float
    std: float

    def __post_init__(self):
        if self.std <= 0 or not np.isfinite(self.std) or not np.isfinite(self.mean):
            raise ValidationError("need finite mean and positive std")

    def sample(self, rng: np.random.Generator, n: int) -> NDArray[np.float64]:
        return self.mean + self.std * rng.standard_normal(n)

    def expect(self, fn: Callable) -> float | NDArray[np.float64]:
        """``E[fn(ζ)]`` by Gauss-Hermite quadrature."""
        nodes, weights = _HERMITE_NODES
        total = 0.0
        scale = 1.0 / np.sqrt(2.0 * np.pi)
        for x, w in zip(nodes, weights):
            total = total + (w * scale) * np.asarray(fn(np.float64(self.mean + self.std * x)))
        return total

    @property
    def second_moment(self) -> float:
        return self.mean**2 + self.std**2


JumpSizeDistribution = DiscreteJumpSizes | GaussianJumpSizes


@dataclass(frozen=True)
class LevyMeasureSpec:
    """Per-regime compound-Poisson measures ``ν_i = rate_i × size law``."""

    rates: tuple[float, ...]
    sizes: tuple[JumpSizeDistribution | None, ...]

    def __post_init__(self):
        rates = tuple(float(r) for r in self.rates)
        object.__setattr__(self, "rates", rates)
        object.__setattr__(self, "sizes", tuple(self.sizes))
        if len(rates) != len(self.sizes):
            raise ValidationError("one size distribution per regime required")
        for r, dist in zip(rates, self.sizes):
            if not np.isfinite(r) or r < 0.0:
                raise ValidationError("jump intensities must be finite and >= 0")
            if r > 0.0 and dist is None:
                raise ValidationError("active regime needs a size distribution")
            if dist is not None and not np.isfinite(dist.second_moment):
                raise ValidationError("jump-size second moment must be finite")

    @classmethod
    def inactive(cls, dim: int) -> "LevyMeasureSpec":
        return cls(rates=(0.0,) * dim, sizes=(None,) * dim)

    @classmethod
    def uniform(cls, rate: float, dist: JumpSizeDistribution | None, dim: int) -> "LevyMeasureSpec":
        """The same measure in every regime."""
        return cls(rates=(rate,) * dim, sizes=(dist,) * dim)

    @property
    def dim(self) -> int:
        return len(self.rates)

    @property
    def active(self) -> bool:
        return any(r > 0.0 for r in self.rates)

    def rate(self, regime: int) -> float:
        return self.rates[regime - 1]

    def second_moment(self, regime: int) -> float:
        """``∫ ζ² ν_i(dζ)``."""
        dist = self.sizes[regime - 1]
        return 0.0 if dist is None else self.rates[regime - 1] * dist.second_moment

    def integrate(self, regime: int, fn: Callable) -> float | NDArray[np.float64]:
        """``∫ fn(ζ) ν_i(dζ) = rate_i · E[fn(ζ)]``."""
        rate = self.rates[regime - 1]
        dist = self.sizes[regime - 1]
        if rate == 0.0 or dist is None:
            return 0.0
        return rate * dist.expect(fn)

    def is_regime_independent(self) -> bool:
        first_rate, first_dist = self.rates[0], self.sizes[0]
        return all(r == first_rate for r in self.rates) and all(
            d == first_dist for d in self.sizes
        )


def sample_events(
    levy: LevyMeasureSpec,
    segments: Sequence[tuple[float, float, int]],
    rng: np.random.Generator,
) -> tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.int64]]:
    """Draw Poisson events over regime constancy intervals.

    On a segment in regime ``i`` the event count is Poisson with mean
    ``rate_i · length``; times are uniform on the segment and marks come
    from regime ``i``'s size law.  Returns time-sorted
    ``(times, marks, regimes-at-event)``.
    """
    times, marks, regs = [], [], []
    for s0, s1, state in segments:
        rate = levy.rates[state - 1]
        if rate <= 0.0 or s1 <= s0:
            continue
        count = int(rng.poisson(rate * (s1 - s0)))
        if count == 0:
            continue
        t = s0 + (s1 - s0) * np.sort(rng.random(count))
        z = levy.sizes[state - 1].sample(rng, count)
        times.append(t)
        marks.append(z)
        regs.append(np.full(count, state, dtype=np.int64))
    if not times:
        empty = np.zeros(0)
        return empty, empty.copy(), np.zeros(0, dtype=np.int64)
    return np.concatenate(times), np.concatenate(marks), np.concatenate(regs)
