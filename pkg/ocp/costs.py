"""
Quadratic stage cost and the input-minimised stage cost used in diagnostics.
"""
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from core.errors import ConfigurationError, DimensionMismatchError
from models.base import Box


def factor_psd(matrix: np.ndarray) -> np.ndarray:
    """L with L^T L = matrix for a symmetric positive semidefinite matrix."""
    eigenvalues, vectors = np.linalg.eigh(0.5 * (matrix + matrix.T))
    return (vectors * np.sqrt(np.clip(eigenvalues, 0.0, None))).T


@dataclass(frozen=True)
class StageCost:
    """l(x, u, x_T, u_T) = ||x - x_T||_Q^2 + ||u - u_T||_R^2."""

    Q: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        r = np.atleast_2d(np.asarray(self.R, dtype=float))
        for name, mat in (("Q", q), ("R", r)):
            if mat.shape[0] != mat.shape[1]:
                raise DimensionMismatchError(f"stage cost {name} must be square, got {mat.shape}")
            if not np.allclose(mat, mat.T):
                raise ConfigurationError(f"{name} must be symmetric", f"stage_cost.{name.lower()}")
        if np.linalg.eigvalsh(q).min() < -1e-12:
            raise ConfigurationError("Q must be positive semidefinite", "stage_cost.q")
        if np.linalg.eigvalsh(r).min() <= 0.0:
            raise ConfigurationError("R must be positive definite", "stage_cost.r")
        object.__setattr__(self, "Q", q)
        object.__setattr__(self, "R", r)

    @classmethod
    def diagonal(cls, q, r) -> "StageCost":
        return cls(np.diag(np.asarray(q, dtype=float)), np.diag(np.asarray(r, dtype=float)))

    @property
    def n(self) -> int:
        return self.Q.shape[0]

    @property
    def q(self) -> int:
        return self.R.shape[0]

    @cached_property
    def sqrt_q(self) -> np.ndarray:
        return factor_psd(self.Q)

    @cached_property
    def sqrt_r(self) -> np.ndarray:
        return factor_psd(self.R)

    def __call__(self, x, u, x_ref, u_ref) -> float:
        dx = np.asarray(x, dtype=float) - np.asarray(x_ref, dtype=float)
        du = np.asarray(u, dtype=float) - np.asarray(u_ref, dtype=float)
        return float(dx @ self.Q @ dx + du @ self.R @ du)


def min_stage_cost(cost: StageCost, x, x_ref, u_ref, input_box: Box) -> float:
    """
    l'(x, r) = min over admissible u of l(x, u, x_T, u_T).

    A diagonal R makes the minimiser the clipped reference input; otherwise
    the input QP is solved with the ADMM inner solver.
    """
    u_ref = np.asarray(u_ref, dtype=float)
    r = cost.R
    if np.allclose(r, np.diag(np.diag(r))):
        u_best = input_box.clip(u_ref)
    else:
        from solver.admm import solve_qp_admm
        from solver.settings import AdmmSettings

        result = solve_qp_admm(
            2.0 * r, -2.0 * r @ u_ref, np.eye(u_ref.size), input_box.lower, input_box.upper,
            AdmmSettings(primal_tolerance=1e-10, dual_tolerance=1e-10),
        )
        u_best = input_box.clip(result.x)
    return cost(x, u_best, x_ref, u_ref)
