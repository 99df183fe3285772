"""Iterated extended Kalman filter with a Gauss-Newton line search.

The update step minimises

    V(x) = sum_b (z_b - g_b(x))^T R_b^-1 (z_b - g_b(x)) + (x0 - x)^T P^-1 (x0 - x)

by repeated relinearisation. Each inner pass computes the usual IEKF iterate,
expresses it as a step ``delta`` from the current iterate and scales it by
the ``alpha`` in [0, 1] that minimises V on a uniform grid. ``alpha = 1``
everywhere reproduces the plain IEKF.
"""

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from .errors import ContractViolation, NumericalFailure, SingularMatrixError


@dataclass
class StateEstimate:
    """Gaussian belief: ``mean`` (n,) and ``covariance`` (n, n).

    The GNSS filter uses n = 8: ECEF position, ECEF velocity, clock bias (m)
    and clock drift (m/s).
    """

    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float).reshape(-1)
        self.covariance = np.asarray(self.covariance, dtype=float)
        n = self.mean.shape[0]
        if self.covariance.shape != (n, n):
            raise ContractViolation(f"covariance shape {self.covariance.shape} does not match mean of length {n}")

    @property
    def dim(self):
        return self.mean.shape[0]

    def check(self, psd_tol=1e-9):
        """Raise :class:`NumericalFailure` if an invariant is broken."""
        if not np.all(np.isfinite(self.mean)):
            raise NumericalFailure("state mean has non-finite entries", field="mean")
        c = self.covariance
        if not np.all(np.isfinite(c)):
            raise NumericalFailure("state covariance has non-finite entries", field="covariance")
        scale = max(np.abs(c).max(), 1e-300)
        if np.abs(c - c.T).max() > psd_tol * scale:
            raise NumericalFailure("state covariance is not symmetric", field="covariance")
        if np.linalg.eigvalsh(c).min() < -psd_tol * max(np.trace(c), 1e-300):
            raise NumericalFailure("state covariance is not positive semi-definite", field="covariance")
        return self


@dataclass
class MeasurementBlock:
    """One independent group of measurements ``z = g(x) + v, v ~ N(0, R)``."""

    values: np.ndarray
    covariance: np.ndarray
    predictor: Callable[[np.ndarray], np.ndarray]
    jacobian: Callable[[np.ndarray], np.ndarray]
    label: str = ""

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(-1)
        self.covariance = np.atleast_2d(np.asarray(self.covariance, dtype=float))
        m = self.values.shape[0]
        if self.covariance.shape != (m, m):
            raise ContractViolation(
                f"block {self.label!r}: covariance shape {self.covariance.shape} does not match {m} values")

    @property
    def dim(self):
        return self.values.shape[0]


@dataclass
class TransitionModel:
    transition_matrix: np.ndarray
    process_noise: np.ndarray
    dt: float

    @classmethod
    def constant_velocity(cls, dt, accel_psd, clock_drift_psd, clock_bias_psd=0.0):
        """Constant-velocity model with a two-state clock.

        ``accel_psd`` (m^2/s^3) drives each velocity axis as a random walk,
        ``clock_drift_psd`` (m^2/s^3) the clock drift and ``clock_bias_psd``
        (m^2/s) adds white phase noise to the clock bias.
        """
        F = np.eye(8)
        F[0:3, 3:6] = dt * np.eye(3)
        F[6, 7] = dt
        Q = np.zeros((8, 8))
        q11 = dt**3 / 3.0
        q12 = dt**2 / 2.0
        Q[0:3, 0:3] = accel_psd * q11 * np.eye(3)
        Q[0:3, 3:6] = accel_psd * q12 * np.eye(3)
        Q[3:6, 0:3] = accel_psd * q12 * np.eye(3)
        Q[3:6, 3:6] = accel_psd * dt * np.eye(3)
        Q[6, 6] = clock_bias_psd * dt + clock_drift_psd * q11
        Q[6, 7] = Q[7, 6] = clock_drift_psd * q12
        Q[7, 7] = clock_drift_psd * dt
        return cls(F, Q, float(dt))


@dataclass(frozen=True)
class IekfConfig:
    epsilon: float = 1e-4
    max_iterations: int = 20
    line_search_enabled: bool = True
    line_search_grid: int = 11

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ContractViolation("epsilon must be positive")
        if self.max_iterations < 1:
            raise ContractViolation("max_iterations must be at least 1")
        if self.line_search_grid < 2:
            raise ContractViolation("line_search_grid must be at least 2")


@dataclass
class UpdateDiagnostics:
    iterations: int = 0
    converged: bool = False
    cost: float = float("nan")
    alphas: List[float] = field(default_factory=list)
    costs: List[float] = field(default_factory=list)  # V at the start iterate and after each pass
    labels: List[str] = field(default_factory=list)


def predict(estimate: StateEstimate, model: TransitionModel) -> StateEstimate:
    F = model.transition_matrix
    mean = F @ estimate.mean
    cov = F @ estimate.covariance @ F.T + model.process_noise
    cov = 0.5 * (cov + cov.T)
    if not np.all(np.isfinite(mean)):
        raise NumericalFailure("predicted mean has non-finite entries", field="mean")
    if not np.all(np.isfinite(cov)):
        raise NumericalFailure("predicted covariance has non-finite entries", field="covariance")
    return StateEstimate(mean, cov)


def _spd_inverse(a, what):
    try:
        c = np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        raise SingularMatrixError(f"{what} is not positive definite", field=what) from None
    ci = np.linalg.inv(c)
    return ci.T @ ci


def stack_blocks(blocks: Sequence[MeasurementBlock]) -> MeasurementBlock:
    """Concatenate independent blocks into one with block-diagonal covariance."""
    blocks = list(blocks)
    if not blocks:
        raise ContractViolation("at least one measurement block is required")
    if len(blocks) == 1:
        return blocks[0]
    dims = [b.dim for b in blocks]
    m = sum(dims)
    cov = np.zeros((m, m))
    at = 0
    for b, d in zip(blocks, dims):
        cov[at:at + d, at:at + d] = b.covariance
        at += d

    def predictor(x):
        return np.concatenate([np.asarray(b.predictor(x), dtype=float).reshape(-1) for b in blocks])

    def jacobian(x):
        return np.vstack([np.atleast_2d(b.jacobian(x)) for b in blocks])

    return MeasurementBlock(
        values=np.concatenate([b.values for b in blocks]),
        covariance=cov,
        predictor=predictor,
        jacobian=jacobian,
        label="+".join(b.label for b in blocks),
    )


class _Criterion:
    """V(x) with the inverses factorised once per update."""

    def __init__(self, prior: StateEstimate, block: MeasurementBlock):
        self.x0 = prior.mean
        self.p_inv = _spd_inverse(prior.covariance, "prior covariance")
        self.r_inv = _spd_inverse(block.covariance, "measurement covariance")
        self.block = block

    def __call__(self, x):
        r = self.block.values - self.block.predictor(x)
        d = self.x0 - x
        return float(r @ self.r_inv @ r + d @ self.p_inv @ d)


def criterion_V(x, prior: StateEstimate, blocks: Sequence[MeasurementBlock]) -> float:
    return _Criterion(prior, stack_blocks(blocks))(np.asarray(x, dtype=float))


def kalman_gain(P, G, R):
    S = G @ P @ G.T + R
    S = 0.5 * (S + S.T)
    try:
        c = np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        raise SingularMatrixError("innovation covariance is not positive definite",
                                  field="innovation covariance") from None
    # K = P G^T S^-1 = (S^-1 G P)^T
    y = np.linalg.solve(c, G @ P)
    return np.linalg.solve(c.T, y).T


def step_direction(x_i, prior: StateEstimate, blocks, gain) -> np.ndarray:
    """Gauss-Newton step from ``x_i``; ``x_i + step`` is the plain IEKF iterate."""
    block = stack_blocks(blocks) if not isinstance(blocks, MeasurementBlock) else blocks
    x_i = np.asarray(x_i, dtype=float)
    gain = np.asarray(gain, dtype=float)
    n = prior.dim
    if x_i.shape != (n,) or gain.shape != (n, block.dim):
        raise ContractViolation(
            f"dimension mismatch: state {x_i.shape}, gain {gain.shape}, expected ({n},) and ({n}, {block.dim})")
    G = np.atleast_2d(block.jacobian(x_i))
    dx = prior.mean - x_i
    return dx + gain @ (block.values - block.predictor(x_i) - G @ dx)


def line_search(x_i, delta, V: Callable[[np.ndarray], float], grid: int) -> float:
    """Best ``alpha`` on the uniform grid {0, 1/(grid-1), ..., 1}.

    ``alpha = 0`` is on the grid, so ``V(x_i + alpha * delta) <= V(x_i)``.
    Ties go to the smallest alpha.
    """
    if grid < 2:
        raise ContractViolation("line search grid needs at least 2 points")
    x_i = np.asarray(x_i, dtype=float)
    delta = np.asarray(delta, dtype=float)
    return _grid_search(x_i, delta, V, grid, V(x_i))[0]


def iekf_update(prior: StateEstimate, blocks: Sequence[MeasurementBlock],
                config: Optional[IekfConfig] = None):
    """Filtering step. Returns ``(posterior, UpdateDiagnostics)``.

    Non-convergence within ``max_iterations`` is reported through
    ``diagnostics.converged``, not raised.
    """
    config = config or IekfConfig()
    block = stack_blocks(blocks)
    if block.dim < 1:
        raise ContractViolation("stacked measurement is empty")
    P = prior.covariance
    R = block.covariance
    V = _Criterion(prior, block)
    diag = UpdateDiagnostics(labels=[b.label for b in blocks])
    x = prior.mean.copy()
    v_x = V(x)
    diag.costs.append(v_x)
    K = G = None
    for _ in range(config.max_iterations):
        G = np.atleast_2d(block.jacobian(x))
        K = kalman_gain(P, G, R)
        delta = step_direction(x, prior, block, K)
        if config.line_search_enabled:
            alpha, v_new = _grid_search(x, delta, V, config.line_search_grid, v_x)
        else:
            alpha = 1.0
            v_new = V(x + delta)
        x_new = x + alpha * delta
        diag.iterations += 1
        diag.alphas.append(alpha)
        diag.costs.append(v_new)
        moved = float(np.linalg.norm(x_new - x))
        x, v_x = x_new, v_new
        if moved < config.epsilon:
            diag.converged = True
            break
    diag.cost = v_x
    cov = (np.eye(prior.dim) - K @ G) @ P
    cov = 0.5 * (cov + cov.T)
    if not np.all(np.isfinite(x)):
        raise NumericalFailure("posterior mean has non-finite entries", field="mean")
    if not np.all(np.isfinite(cov)):
        raise NumericalFailure("posterior covariance has non-finite entries", field="covariance")
    return StateEstimate(x, cov), diag


def _grid_search(x, delta, V, grid, v0):
    best_a, best_v = 0.0, v0
    for k in range(1, grid):
        a = k / (grid - 1)
        v = V(x + a * delta)
        if v < best_v:
            best_a, best_v = a, v
    return best_a, best_v
