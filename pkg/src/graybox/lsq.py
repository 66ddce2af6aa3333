"""Least-squares solution of the similarity re-parameterization problem.

Minimizes the summed squared Frobenius residuals of the similarity equations
jointly over the parameter vector and the transform, with analytic gradients
for both blocks.  Unlike the null-space path nothing here requires the
transform to be invertible, so a vanishing transform is a genuine (spurious)
attractor; the solver only reports that degeneracy, it does not prevent it.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .model import AffineStructure, StateSpace, eval_structure, unvec, vec
from .nullspace import extract_theta, structure_projector
from .optim import OptimConfig, OptimResult, bfgs

__all__ = [
    "LsqSolution",
    "cost",
    "grad_theta",
    "grad_t",
    "default_init",
    "solve_lsq",
]

# Transform singular-value ratio below which the solution is flagged degenerate.
DEGENERATE_RTOL = 1e-8


def _check_point(
    theta: np.ndarray, t: np.ndarray, blackbox: StateSpace, structure: AffineStructure
) -> tuple[np.ndarray, np.ndarray]:
    if structure.dims != blackbox.dims:
        raise ValueError(
            f"dimension mismatch: black-box {blackbox.dims} vs structure {structure.dims}"
        )
    theta = np.asarray(theta, dtype=float).reshape(-1)
    if theta.size != structure.n_theta:
        raise ValueError(f"theta must have length {structure.n_theta}, got {theta.size}")
    n_x = blackbox.dims.n_x
    t = np.asarray(t, dtype=float)
    if t.shape != (n_x, n_x):
        raise ValueError(f"T must have shape ({n_x}, {n_x}), got {t.shape}")
    return theta, t


def _residual_matrices(theta, t, blackbox, structure):
    structured = eval_structure(structure, theta)
    r_a = blackbox.A @ t - t @ structured.A
    r_b = blackbox.B - t @ structured.B
    r_c = blackbox.C @ t - structured.C
    return structured, r_a, r_b, r_c


def cost(
    theta: np.ndarray, t: np.ndarray, blackbox: StateSpace, structure: AffineStructure
) -> float:
    """Sum of squared Frobenius norms of the three similarity residuals.

    Zero exactly when ``(theta, t)`` solves the similarity equations; the
    transform need not be invertible for evaluation.
    """
    theta, t = _check_point(theta, t, blackbox, structure)
    _, r_a, r_b, r_c = _residual_matrices(theta, t, blackbox, structure)
    return float(np.sum(r_a * r_a) + np.sum(r_b * r_b) + np.sum(r_c * r_c))


def grad_theta(
    theta: np.ndarray, t: np.ndarray, blackbox: StateSpace, structure: AffineStructure
) -> np.ndarray:
    """Gradient of :func:`cost` in the parameter vector.

    The residuals are pulled back through the transform onto the stacked
    (A, B, C) entries and then contracted with the transposed parameter map.
    """
    theta, t = _check_point(theta, t, blackbox, structure)
    _, r_a, r_b, r_c = _residual_matrices(theta, t, blackbox, structure)
    pullback = np.concatenate([vec(t.T @ r_a), vec(t.T @ r_b), vec(r_c)])
    return -2.0 * (structure.K.T @ pullback)


def grad_t(
    theta: np.ndarray, t: np.ndarray, blackbox: StateSpace, structure: AffineStructure
) -> np.ndarray:
    """Gradient of :func:`cost` in the transform, as an n_x by n_x matrix."""
    theta, t = _check_point(theta, t, blackbox, structure)
    structured, r_a, r_b, r_c = _residual_matrices(theta, t, blackbox, structure)
    return 2.0 * (
        blackbox.A.T @ r_a
        - r_a @ structured.A.T
        - r_b @ structured.B.T
        + blackbox.C.T @ r_c
    )


def default_init(
    blackbox: StateSpace, structure: AffineStructure
) -> tuple[np.ndarray, np.ndarray]:
    """Identity transform plus the black-box entries projected onto the structure.

    Exact when the black-box is already in structured coordinates; cheap and
    deterministic otherwise.
    """
    if structure.dims != blackbox.dims:
        raise ValueError(
            f"dimension mismatch: black-box {blackbox.dims} vs structure {structure.dims}"
        )
    theta0 = extract_theta(blackbox.stacked(), structure_projector(structure))
    return theta0, np.eye(blackbox.dims.n_x)


@dataclass
class LsqSolution:
    """Result of :func:`solve_lsq` with solver diagnostics."""

    theta: np.ndarray
    T: np.ndarray
    result: OptimResult
    diagnostics: dict


def solve_lsq(
    blackbox: StateSpace,
    structure: AffineStructure,
    init: tuple[np.ndarray, np.ndarray] | None = None,
    config: OptimConfig | None = None,
) -> LsqSolution:
    """Minimize :func:`cost` over the stacked variable [theta; vec(T)] with BFGS.

    Non-convergence is reported through ``result.status`` with the best point
    still returned.  The diagnostics flag ``degenerate_transform`` marks a
    final transform whose singular-value ratio falls below 1e-8, the spurious
    minimum where the transform collapses.
    """
    cfg = config if config is not None else OptimConfig()
    theta0, t0 = init if init is not None else default_init(blackbox, structure)
    theta0, t0 = _check_point(theta0, t0, blackbox, structure)
    n_theta = structure.n_theta
    n_x = blackbox.dims.n_x
    started = time.perf_counter()

    def split(z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return z[:n_theta], unvec(z[n_theta:], n_x, n_x)

    def fun(z: np.ndarray) -> float:
        theta, t = split(z)
        return cost(theta, t, blackbox, structure)

    def jac(z: np.ndarray) -> np.ndarray:
        theta, t = split(z)
        return np.concatenate([
            grad_theta(theta, t, blackbox, structure),
            vec(grad_t(theta, t, blackbox, structure)),
        ])

    result = bfgs(fun, jac, np.concatenate([theta0, vec(t0)]), cfg)
    theta_hat, t_hat = split(result.x_best)
    sv = np.linalg.svd(t_hat, compute_uv=False)
    degenerate = bool(sv[0] == 0.0 or sv[-1] < DEGENERATE_RTOL * sv[0])
    diagnostics = {
        "objective_final": result.f_best,
        "grad_norm": result.grad_norm,
        "degenerate_transform": degenerate,
        "cond_T": float(sv[0] / sv[-1]) if not degenerate else None,
        "wall_time_ms": (time.perf_counter() - started) * 1e3,
        "trace": [[k, f, g] for k, f, g in result.trace],
    }
    return LsqSolution(theta=theta_hat, T=t_hat.copy(), result=result, diagnostics=diagnostics)
