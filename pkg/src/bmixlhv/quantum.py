"""Closed-form oscillation predictions; ground truth for every check.

Conventions: flavour indices k, l take the values of :class:`Flavour`
(B0=1, B0bar=2); the pair class i is 1 when both decays show the same
flavour and 2 when they differ.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import Flavour, ModelParams

__all__ = [
    "RateCurve",
    "asymmetry",
    "conditional_from_joint",
    "conditional_rate",
    "i_kl",
    "joint_density",
    "pair_class",
    "rate_curve",
]


def pair_class(k, l) -> int:
    """1 for equal flavours, 2 for opposite: |k - l| + 1."""
    return abs(int(k) - int(l)) + 1


def _maybe_scalar(a: np.ndarray):
    return float(a) if a.ndim == 0 else a


def conditional_rate(i: int, delta_t, params: ModelParams):
    """Rate density of the second decay a lag ``delta_t`` after the first.

    (1/4tau) * exp(-dt/tau) * (1 + (-1)^i cos(delta_m * dt)); class i=1
    (same flavour) vanishes at zero lag — the pair is perfectly
    anticorrelated at equal proper times.
    """
    dt = np.asarray(delta_t, dtype=float)
    sign = -1.0 if i % 2 else 1.0
    out = (
        np.exp(-dt / params.tau)
        / (4.0 * params.tau)
        * (1.0 + sign * np.cos(params.delta_m * dt))
    )
    return _maybe_scalar(out)


def joint_density(k, l, t1, t2, params: ModelParams):
    """Joint decay density in (t1, t2) for flavours (k, l).

    (1/4tau^2) * exp(-(t1+t2)/tau) * (1 - (-1)^(l-k) cos(delta_m |t1-t2|)).
    """
    t1 = np.asarray(t1, dtype=float)
    t2 = np.asarray(t2, dtype=float)
    sign = 1.0 if int(k) == int(l) else -1.0
    out = (
        np.exp(-(t1 + t2) / params.tau)
        / (4.0 * params.tau**2)
        * (1.0 - sign * np.cos(params.delta_m * np.abs(t1 - t2)))
    )
    return _maybe_scalar(out)


def i_kl(k, l, s):
    """Window-overlap integral in closed form: 1 - cos s (k = l), else 1 + cos s.

    2pi-periodic in s; the defining integral is re-evaluated by quadrature
    in the verification module.
    """
    s = np.asarray(s, dtype=float)
    sign = -1.0 if int(k) == int(l) else 1.0
    return _maybe_scalar(1.0 + sign * np.cos(s))


def conditional_from_joint(k, l, t1, t2, params: ModelParams):
    """tau * exp(2 min(t1,t2)/tau) * joint_density — identically equal to
    conditional_rate(pair_class(k,l), |t1-t2|)."""
    t1 = np.asarray(t1, dtype=float)
    t2 = np.asarray(t2, dtype=float)
    out = (
        params.tau
        * np.exp(2.0 * np.minimum(t1, t2) / params.tau)
        * joint_density(k, l, t1, t2, params)
    )
    return _maybe_scalar(out)


def asymmetry(delta_t, params: ModelParams):
    """(opposite - same) / (opposite + same) = cos(delta_m * delta_t)."""
    return _maybe_scalar(np.cos(params.delta_m * np.asarray(delta_t, dtype=float)))


@dataclass(frozen=True)
class RateCurve:
    """Tabulated same/opposite conditional rates on an ascending lag grid."""

    delta_t_grid: np.ndarray
    values_same: np.ndarray
    values_opposite: np.ndarray

    def __post_init__(self) -> None:
        grid = np.asarray(self.delta_t_grid, dtype=float)
        same = np.asarray(self.values_same, dtype=float)
        opp = np.asarray(self.values_opposite, dtype=float)
        if not (grid.shape == same.shape == opp.shape and grid.ndim == 1):
            raise ValueError("grid and value arrays must be 1-D with equal length")
        if grid.size and (np.any(np.diff(grid) <= 0.0) or grid[0] < 0.0):
            raise ValueError("delta_t grid must be nonnegative and strictly ascending")
        if np.any(same < 0.0) or np.any(opp < 0.0):
            raise ValueError("rate values must be nonnegative")
        object.__setattr__(self, "delta_t_grid", grid)
        object.__setattr__(self, "values_same", same)
        object.__setattr__(self, "values_opposite", opp)


def rate_curve(params: ModelParams, delta_t_grid) -> RateCurve:
    """Evaluate both conditional rates on the given lag grid."""
    grid = np.asarray(delta_t_grid, dtype=float)
    return RateCurve(
        delta_t_grid=grid,
        values_same=np.asarray(conditional_rate(1, grid, params), dtype=float),
        values_opposite=np.asarray(conditional_rate(2, grid, params), dtype=float),
    )
