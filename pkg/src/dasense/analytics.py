"""Closed-form detection-error rates for the compressive transmission request.

Conditioned on a gain g, a node declares when a Gaussian statistic clears
the scaled threshold, so the conditional error rates are Q functions with
argument sqrt(g / 2) * sqrt(gamma) * (1 +- gamma_u). Averaging over the
unit-mean exponential gain, restricted to the feasible region g >= omega,
and applying the two-term exponential approximation of Q gives closed forms
that need no numerical integration:

    P_FA = E_1(1 + gamma_u)
    P_MD = E_1(1 - gamma_u) + (1 - exp(-omega))

    E_1(t) = exp(-omega (1 + gamma t^2 / 4)) / (12 (1 + gamma t^2 / 4))
           + exp(-omega (1 + gamma t^2 / 3)) / ( 4 (1 + gamma t^2 / 3))

The (1 - exp(-omega)) term is the floor from power-infeasible nodes, which
miss their request no matter how the detector is tuned. ``prob_fa_exact``
and ``prob_md_exact`` evaluate the same gain averages by quadrature with the
exact Q, as oracles for the approximation error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.special import erfc

__all__ = [
    "ErrorProbs",
    "qfunc",
    "qfunc_chiani",
    "prob_fa_closed",
    "prob_md_closed",
    "prob_fa_exact",
    "prob_md_exact",
    "expected_active_bound",
    "expected_active_exact",
]

# Exponential tail mass beyond omega + _TAIL_SPAN is exp(-40) < 1e-17,
# below the 1e-10 quadrature tolerance by a wide margin.
_TAIL_SPAN = 40.0


def qfunc(x):
    """Exact Gaussian tail Q(x) = 0.5 * erfc(x / sqrt(2))."""
    return 0.5 * erfc(np.asarray(x, dtype=float) / math.sqrt(2.0))


def qfunc_chiani(x):
    """Two-term exponential upper approximation of Q(x), x >= 0.

    (1/12) exp(-x^2/2) + (1/4) exp(-2 x^2/3). At x = 0 it gives 1/3 rather
    than 1/2; the relative error peaks around x ~ 1.6 and decays for large x.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("qfunc_chiani is defined for x >= 0 only")
    value = np.exp(-0.5 * x * x) / 12.0 + np.exp(-2.0 * x * x / 3.0) / 4.0
    return float(value) if value.ndim == 0 else value


def _validate(gamma: float, gamma_u: float, omega: float) -> None:
    if gamma <= 0:
        raise ValueError(f"gamma must be > 0, got {gamma}")
    if not -1.0 < gamma_u < 1.0:
        raise ValueError(f"gamma_u must lie in (-1, 1), got {gamma_u}")
    if omega < 0:
        raise ValueError(f"omega must be >= 0, got {omega}")


def _chiani_gain_average(gamma: float, offset: float, omega: float) -> float:
    # integral over g >= omega of qfunc_chiani(sqrt(g/2) sqrt(gamma) offset) e^{-g} dg
    a = 1.0 + gamma * offset * offset / 4.0
    b = 1.0 + gamma * offset * offset / 3.0
    return math.exp(-omega * a) / (12.0 * a) + math.exp(-omega * b) / (4.0 * b)


def prob_fa_closed(gamma: float, gamma_u: float, omega: float) -> float:
    """Per-node false-alarm probability, closed form."""
    _validate(gamma, gamma_u, omega)
    return _chiani_gain_average(gamma, 1.0 + gamma_u, omega)


def prob_md_closed(gamma: float, gamma_u: float, omega: float) -> float:
    """Per-node missed-detection probability, closed form (includes floor)."""
    _validate(gamma, gamma_u, omega)
    return _chiani_gain_average(gamma, 1.0 - gamma_u, omega) + 1.0 - math.exp(-omega)


def _exact_gain_average(scale: float, omega: float) -> float:
    def integrand(g: float) -> float:
        return float(qfunc(math.sqrt(g / 2.0) * scale)) * math.exp(-g)

    value, _ = quad(
        integrand, omega, omega + _TAIL_SPAN, epsabs=1e-10, epsrel=1e-10, limit=200
    )
    return value


def prob_fa_exact(gamma: float, gamma_u: float, omega: float) -> float:
    """False-alarm probability with the exact Q, by quadrature."""
    _validate(gamma, gamma_u, omega)
    return _exact_gain_average(math.sqrt(gamma) * (1.0 + gamma_u), omega)


def prob_md_exact(
    gamma: float, gamma_u: float, omega: float, h1_sinr: float | None = None
) -> float:
    """Missed-detection probability with the exact Q, by quadrature.

    ``h1_sinr`` selects the SINR governing the requested-node statistic;
    it defaults to ``gamma`` (the closed form's convention, which reuses the
    idle-node noise power under both hypotheses). Pass
    P_ap / sigma_w1^2-based SINR to match the sampled statistic exactly.
    """
    _validate(gamma, gamma_u, omega)
    if h1_sinr is None:
        h1_sinr = gamma
    elif h1_sinr <= 0:
        raise ValueError(f"h1_sinr must be > 0, got {h1_sinr}")
    tail = _exact_gain_average(math.sqrt(h1_sinr) * (1.0 - gamma_u), omega)
    return tail + 1.0 - math.exp(-omega)


def expected_active_bound(requested: int, num_nodes: int, p_md: float, p_fa: float) -> float:
    """Upper bound on E[transmitting nodes]: N (1 - P_MD) + K P_FA.

    The bound counts every node as a potential false alarm; the exact count
    excludes the N requested nodes and any already acquired ones.
    """
    if requested < 0 or num_nodes < requested:
        raise ValueError("need 0 <= requested <= num_nodes")
    return requested * (1.0 - p_md) + num_nodes * p_fa


def expected_active_exact(
    requested: int, num_nodes: int, acquired: int, p_md: float, p_fa: float
) -> float:
    """E[transmitting nodes] with the idle pool counted exactly."""
    if acquired < 0 or requested < 0 or num_nodes < acquired + requested:
        raise ValueError("need acquired + requested <= num_nodes")
    idle = num_nodes - acquired - requested
    return requested * (1.0 - p_md) + idle * p_fa


@dataclass(frozen=True)
class ErrorProbs:
    """Operating point of the request detector at one (gamma, gamma_u, omega)."""

    p_md: float
    p_fa: float
    md_floor: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.p_fa <= 1.0 and 0.0 <= self.p_md <= 1.0):
            raise ValueError("probabilities must lie in [0, 1]")
        if self.p_md < self.md_floor - 1e-12:
            raise ValueError("p_md cannot undercut the power-feasibility floor")

    @classmethod
    def from_closed(cls, gamma: float, gamma_u: float, omega: float) -> "ErrorProbs":
        return cls(
            p_md=prob_md_closed(gamma, gamma_u, omega),
            p_fa=prob_fa_closed(gamma, gamma_u, omega),
            md_floor=1.0 - math.exp(-omega),
        )
