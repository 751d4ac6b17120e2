"""Sparse recovery from partial node readings.

The accumulated readings of acquired nodes form w = Psi s + 0 (noiseless
uplink), where row n of Psi is the measurement vector of the n-th acquired
node. ``lasso_solve`` minimises

    0.5 * ||w - Psi s||^2 + penalty * ||s||_1

by cyclic coordinate descent with soft thresholding, ``debias`` refits plain
least squares on the detected support to strip the shrinkage bias, and
``reconstruct`` maps a coefficient estimate back to all K node readings.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scene import Scene

__all__ = [
    "MeasurementSet",
    "LassoResult",
    "DebiasResult",
    "Estimate",
    "default_penalty",
    "lasso_solve",
    "kkt_gaps",
    "debias",
    "reconstruct",
    "squared_error",
]


@dataclass(frozen=True)
class MeasurementSet:
    """Readings acquired so far, in acquisition order.

    node_ids   distinct node indices, one per row.
    values     w, values[n] = v[node_ids[n]].
    rows       Psi, rows[n] = b_{node_ids[n]}.
    """

    node_ids: np.ndarray
    values: np.ndarray
    rows: np.ndarray

    def __post_init__(self) -> None:
        ids = np.asarray(self.node_ids)
        if ids.ndim != 1 or np.unique(ids).size != ids.size:
            raise ValueError("node_ids must be one-dimensional and distinct")
        if self.values.shape != (ids.size,) or self.rows.shape[0] != ids.size:
            raise ValueError("values and rows must have one entry per node id")
        for arr in (self.node_ids, self.values, self.rows):
            np.asarray(arr).setflags(write=False)

    def __len__(self) -> int:
        return int(self.node_ids.size)

    @classmethod
    def from_scene(cls, scene: Scene, node_ids) -> "MeasurementSet":
        ids = np.asarray(node_ids, dtype=np.int64)
        return cls(
            node_ids=ids,
            values=scene.readings[ids].copy(),
            rows=scene.basis[:, ids].T.copy(),
        )

    def extended(self, scene: Scene, node_ids) -> "MeasurementSet":
        """New set with extra rows appended; existing rows are reused as-is."""
        extra = np.asarray(node_ids, dtype=np.int64)
        if extra.size == 0:
            return self
        return MeasurementSet(
            node_ids=np.concatenate([self.node_ids, extra]),
            values=np.concatenate([self.values, scene.readings[extra]]),
            rows=np.vstack([self.rows, scene.basis[:, extra].T]),
        )


@dataclass(frozen=True)
class LassoResult:
    coeffs: np.ndarray
    objective: float
    sweeps: int
    converged: bool


@dataclass(frozen=True)
class DebiasResult:
    coeffs: np.ndarray
    support: np.ndarray
    rank_deficient: bool


@dataclass(frozen=True)
class Estimate:
    """One round's recovery output: coefficients plus reconstructed readings."""

    coeffs: np.ndarray
    readings: np.ndarray
    objective: float
    sweeps: int


def default_penalty(measurements: MeasurementSet, scale: float = 0.01) -> float:
    """scale * ||Psi^T w||_inf, the standard fraction-of-lambda-max choice."""
    if len(measurements) == 0:
        return 0.0
    return scale * float(np.abs(measurements.rows.T @ measurements.values).max())


def _sweep_once(gram, corr, diag, s, gram_s, penalty, order) -> float:
    """One coordinate pass in the given order; returns the largest move."""
    m = gram.shape[0]
    biggest = 0.0
    for idx in range(order.shape[0]):
        j = order[idx]
        dj = diag[j]
        if dj == 0.0:
            continue
        rho = corr[j] - gram_s[j] + dj * s[j]
        if rho > penalty:
            new = (rho - penalty) / dj
        elif rho < -penalty:
            new = (rho + penalty) / dj
        else:
            new = 0.0
        delta = new - s[j]
        if delta != 0.0:
            for i in range(m):
                gram_s[i] += gram[j, i] * delta
            s[j] = new
            if abs(delta) > biggest:
                biggest = abs(delta)
    return biggest


def _descend(gram, corr, diag, s, gram_s, penalty, tol, max_iter):
    """Full sweeps alternating with support-only sweeps until a full sweep
    moves nothing by tol; returns (sweeps, converged)."""
    m = gram.shape[0]
    order = np.arange(m)
    sweeps = 0
    converged = False
    while sweeps < max_iter:
        sweeps += 1
        if _sweep_once(gram, corr, diag, s, gram_s, penalty, order) < tol:
            converged = True
            break
        while sweeps < max_iter:
            active = np.flatnonzero(s)
            if active.size == 0:
                break
            sweeps += 1
            if _sweep_once(gram, corr, diag, s, gram_s, penalty, active) < tol:
                break
    return sweeps, converged


try:  # the scalar loops JIT cleanly; plain Python runs the same code unjitted
    import numba

    _sweep_once = numba.njit(cache=True)(_sweep_once)
    _descend = numba.njit(cache=True)(_descend)
except ImportError:  # pragma: no cover
    pass


def lasso_solve(
    measurements: MeasurementSet,
    penalty: float,
    tol: float = 1e-8,
    max_iter: int = 10_000,
    warm_start: np.ndarray | None = None,
    randomize: bool = False,
    rng: np.random.Generator | None = None,
) -> LassoResult:
    """Cyclic coordinate descent on the lasso objective.

    Each coordinate update soft-thresholds the partial residual correlation;
    the Gram matrix is cached so an update costs O(M). Convergence means a
    full sweep moved no coordinate by tol or more. Between full sweeps the
    solver iterates on the current support only, which changes the path but
    not the fixed point. ``randomize`` shuffles the coordinate order each
    sweep (requires ``rng``); the returned solution still satisfies the same
    KKT certificate, only the path differs.
    """
    if penalty < 0:
        raise ValueError(f"penalty must be >= 0, got {penalty}")
    if randomize and rng is None:
        raise ValueError("randomize=True requires an rng")
    psi = measurements.rows
    w = measurements.values
    m = psi.shape[1]
    gram = np.ascontiguousarray(psi.T @ psi)
    corr = psi.T @ w
    diag = np.ascontiguousarray(np.diag(gram))
    if warm_start is None:
        s = np.zeros(m)
        gram_s = np.zeros(m)
    else:
        s = np.array(warm_start, dtype=float)
        if s.shape != (m,):
            raise ValueError("warm_start length must match the basis dimension")
        gram_s = gram @ s

    if randomize:
        sweeps = 0
        converged = False
        while sweeps < max_iter:
            sweeps += 1
            order = rng.permutation(m)
            if _sweep_once(gram, corr, diag, s, gram_s, penalty, order) < tol:
                converged = True
                break
    else:
        sweeps, converged = _descend(gram, corr, diag, s, gram_s, penalty, tol, max_iter)

    residual = w - psi @ s
    objective = 0.5 * float(residual @ residual) + penalty * float(np.abs(s).sum())
    return LassoResult(coeffs=s, objective=objective, sweeps=int(sweeps), converged=bool(converged))


def kkt_gaps(measurements: MeasurementSet, coeffs: np.ndarray, penalty: float) -> tuple[float, float]:
    """Optimality certificate for a lasso solution.

    Returns (zero_excess, support_gap): how far |Psi_j^T r| exceeds the
    penalty on zero coordinates, and how far it sits from penalty *
    sign(s_j) on nonzero ones. Both are ~0 at the minimiser.
    """
    psi = measurements.rows
    grad = psi.T @ (measurements.values - psi @ coeffs)
    on = coeffs != 0.0
    zero_excess = 0.0
    if (~on).any():
        zero_excess = max(0.0, float(np.abs(grad[~on]).max()) - penalty)
    support_gap = 0.0
    if on.any():
        support_gap = float(np.abs(grad[on] - penalty * np.sign(coeffs[on])).max())
    return zero_excess, support_gap


def debias(
    coeffs: np.ndarray,
    measurements: MeasurementSet,
    support_threshold: float | None = None,
) -> DebiasResult:
    """Least-squares refit on the detected support.

    The support is every coordinate with |s_j| above the threshold
    (default: 1e-6 * max|s_j|). An empty support returns all zeros. When the
    refit system is rank deficient the minimum-norm solution is returned and
    flagged.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    peak = float(np.abs(coeffs).max()) if coeffs.size else 0.0
    if support_threshold is None:
        support_threshold = 1e-6 * peak
    support = np.flatnonzero(np.abs(coeffs) > support_threshold)
    refit = np.zeros_like(coeffs)
    if support.size == 0:
        return DebiasResult(coeffs=refit, support=support, rank_deficient=False)
    sub = measurements.rows[:, support]
    solution, _, rank, _ = np.linalg.lstsq(sub, measurements.values, rcond=None)
    refit[support] = solution
    return DebiasResult(coeffs=refit, support=support, rank_deficient=rank < support.size)


def reconstruct(basis: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
    """All K reading estimates from a coefficient estimate: B^T s_hat."""
    return basis.T @ np.asarray(coeffs, dtype=float)


def squared_error(target: np.ndarray, estimate: np.ndarray) -> float:
    """||target - estimate||^2 over all nodes."""
    target = np.asarray(target, dtype=float)
    estimate = np.asarray(estimate, dtype=float)
    if target.shape != estimate.shape:
        raise ValueError("target and estimate must have the same shape")
    diff = target - estimate
    return float(diff @ diff)
