"""Regularized solvers for the (often ill-conditioned) McLachlan systems."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SCHEMES = ("tikhonov-grid", "diagonal-perturbation")


def default_lambda_grid() -> tuple[float, ...]:
    return tuple(np.logspace(-8, 0, 13))


@dataclass(frozen=True)
class RegularizationPolicy:
    """How to solve ``A x = b``.

    ``tikhonov-grid`` picks the ridge weight from ``lambda_grid`` at the corner
    (maximum curvature) of the discrete L-curve; ``diagonal-perturbation``
    solves ``(A + epsilon I) x = b``.
    """

    scheme: str = "tikhonov-grid"
    lambda_grid: tuple[float, ...] = field(default_factory=default_lambda_grid)
    epsilon: float = 1e-6
    fallback_lambda: float = 1e-6

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown regularization scheme {self.scheme!r}; choose from {SCHEMES}")
        grid = tuple(float(g) for g in self.lambda_grid)
        if not grid:
            raise ValueError("lambda_grid must be nonempty")
        if any(g <= 0 for g in grid) or any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("lambda_grid must be positive and strictly ascending")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        object.__setattr__(self, "lambda_grid", grid)


def _check_system(a, rhs):
    a = np.asarray(a, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or rhs.shape != (a.shape[0],):
        raise ValueError(f"incompatible system shapes {a.shape} and {rhs.shape}")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(rhs))):
        raise ValueError("non-finite entries in linear system")
    return a, rhs


def tikhonov_path(a, rhs, lambdas):
    """Ridge solutions ``argmin |Ax-b|² + λ|x|²`` for every λ via one SVD.

    Returns ``(solutions, residual_norms, solution_norms)``.
    """
    a, rhs = _check_system(a, rhs)
    u, s, vt = np.linalg.svd(a)
    beta = u.T @ rhs
    lambdas = np.atleast_1d(np.asarray(lambdas, dtype=float))
    filt = s[None, :] / (s[None, :] ** 2 + lambdas[:, None])
    xs = (filt * beta[None, :]) @ vt
    res = np.linalg.norm(xs @ a.T - rhs[None, :], axis=1)
    return xs, res, np.linalg.norm(xs, axis=1)


def lcurve_corner(residual_norms, solution_norms, tiny: float = 1e-300):
    """Index of maximum signed Menger curvature on the log-log L-curve, or
    ``None`` when the curvature is flat."""
    x = np.log(np.maximum(residual_norms, tiny))
    y = np.log(np.maximum(solution_norms, tiny))
    if len(x) < 3:
        return None
    p1 = np.stack([x[:-2], y[:-2]], axis=1)
    p2 = np.stack([x[1:-1], y[1:-1]], axis=1)
    p3 = np.stack([x[2:], y[2:]], axis=1)
    d12, d23, d13 = p2 - p1, p3 - p2, p3 - p1
    cross = d12[:, 0] * d23[:, 1] - d12[:, 1] * d23[:, 0]
    denom = (
        np.linalg.norm(d12, axis=1) * np.linalg.norm(d23, axis=1) * np.linalg.norm(d13, axis=1)
    )
    with np.errstate(divide="ignore", invalid="ignore"):
        kappa = np.where(denom > 0, 2.0 * cross / denom, 0.0)
    if np.ptp(kappa) < 1e-12:
        return None
    return int(np.argmax(kappa)) + 1


def select_lambda(a, rhs, policy: RegularizationPolicy) -> float:
    """Ridge weight for ``a x = rhs`` under a ``tikhonov-grid`` policy."""
    a, rhs = _check_system(a, rhs)
    if not np.any(rhs):
        return policy.fallback_lambda
    grid = np.asarray(policy.lambda_grid)
    _, res, xn = tikhonov_path(a, rhs, grid)
    idx = lcurve_corner(res, xn)
    return policy.fallback_lambda if idx is None else float(grid[idx])


def solve_with(a, rhs, policy: RegularizationPolicy, lam: float | None = None) -> np.ndarray:
    """Solve with a fixed regularization weight (``lam`` for Tikhonov)."""
    a, rhs = _check_system(a, rhs)
    if policy.scheme == "diagonal-perturbation":
        return np.linalg.solve(a + policy.epsilon * np.eye(len(a)), rhs)
    lam = policy.fallback_lambda if lam is None else lam
    return tikhonov_path(a, rhs, [lam])[0][0]


def ridge_inverse(a, vec, lam: float) -> np.ndarray:
    """``(AᵀA + λI)⁻¹ vec``."""
    a = np.asarray(a, dtype=float)
    return np.linalg.solve(a.T @ a + lam * np.eye(len(a)), np.asarray(vec, dtype=float))


def solve_regularized(a, rhs, policy: RegularizationPolicy | None = None, return_lambda: bool = False):
    """Regularized solution of ``a x = rhs``.

    With ``return_lambda`` the selected ridge weight (``None`` for the
    diagonal scheme) is returned as well so that tangent systems can reuse it.
    """
    policy = RegularizationPolicy() if policy is None else policy
    a, rhs = _check_system(a, rhs)
    lam = select_lambda(a, rhs, policy) if policy.scheme == "tikhonov-grid" else None
    x = solve_with(a, rhs, policy, lam)
    return (x, lam) if return_lambda else x
