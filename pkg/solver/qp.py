"""
Graph-structured quadratic programs and a dense active-set oracle.

Agent i holds a local vector w_i made of its own variables followed by copies
of the shared variables of its neighbours. Its QP is

    minimize    1/2 w_i^T H_i w_i + g_i^T w_i
    subject to  l_i <= C_i w_i <= u_i

and copies of the same shared variable must agree across holders. Summing the
local objectives over all agents gives the global objective.
"""
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from core.errors import DimensionMismatchError
from core.graph import Graph

logger = logging.getLogger(__name__)

# (owner j, local positions in w_i, indices into the shared vector of j)
Link = Tuple[int, np.ndarray, np.ndarray]


@dataclass
class LocalQp:
    """
    QP held by one agent.

    ``global_index`` maps every local position to its index in the stacked
    global vector. ``penalty`` switches rows to an l1 penalty instead of a hard
    constraint. ``row_groups`` names the constraint group behind each row span.
    """

    agent: int
    H: np.ndarray
    g: np.ndarray
    C: np.ndarray
    l: np.ndarray
    u: np.ndarray
    global_index: np.ndarray
    own_size: int
    links: List[Link] = field(default_factory=list)
    penalty: Optional[np.ndarray] = None
    row_groups: List[Tuple[str, slice]] = field(default_factory=list)

    def __post_init__(self):
        nv = self.g.size
        if self.H.shape != (nv, nv):
            raise DimensionMismatchError(f"agent {self.agent}: Hessian of shape {self.H.shape} for {nv} variables")
        if self.C.ndim != 2 or self.C.shape[1] != nv:
            self.C = np.asarray(self.C, dtype=float).reshape(-1, nv)
        rows = self.C.shape[0]
        if self.l.size != rows or self.u.size != rows:
            raise DimensionMismatchError(f"agent {self.agent}: bounds do not match {rows} constraint rows")
        if self.global_index.size != nv:
            raise DimensionMismatchError(f"agent {self.agent}: global index map of size {self.global_index.size}")

    @property
    def size(self) -> int:
        return self.g.size

    @property
    def rows(self) -> int:
        return self.C.shape[0]

    def shared_mask(self) -> np.ndarray:
        mask = np.zeros(self.size)
        for _, positions, _ in self.links:
            mask[positions] = 1.0
        return mask


@dataclass
class GraphQp:
    """Local QPs over a communication graph with shared-variable sizes per owner."""

    graph: Graph
    locals: List[LocalQp]
    shared_sizes: List[int]
    global_size: int

    def __post_init__(self):
        if len(self.locals) != self.graph.m or len(self.shared_sizes) != self.graph.m:
            raise DimensionMismatchError("local QPs, shared sizes and graph disagree on the agent count")

    @property
    def m(self) -> int:
        return self.graph.m

    def holders(self, j: int) -> List[int]:
        """Agents holding a copy of the shared variables of j, ascending."""
        return [qp.agent for qp in self.locals if any(owner == j for owner, _, _ in qp.links)]

    def to_dense(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Centralised (H, g, C, l, u) over the stacked global vector."""
        n = self.global_size
        H = np.zeros((n, n))
        g = np.zeros(n)
        blocks, lower, upper = [], [], []
        for qp in self.locals:
            idx = qp.global_index
            H[np.ix_(idx, idx)] += qp.H
            g[idx] += qp.g
            rows = np.zeros((qp.rows, n))
            rows[:, idx] = qp.C
            blocks.append(rows)
            lower.append(qp.l)
            upper.append(qp.u)
        C = np.vstack(blocks) if blocks else np.zeros((0, n))
        return H, g, C, np.concatenate(lower), np.concatenate(upper)

    def local_values(self, x: np.ndarray) -> List[np.ndarray]:
        """Restrict a global vector to every agent's local vector."""
        return [np.asarray(x)[qp.global_index] for qp in self.locals]


@dataclass
class DenseQpResult:
    x: np.ndarray
    y: np.ndarray
    iterations: int
    converged: bool
    active: np.ndarray


def solve_dense_qp(
    H: np.ndarray,
    g: np.ndarray,
    C: np.ndarray,
    l: np.ndarray,
    u: np.ndarray,
    max_iterations: int = 200,
    tol: float = 1e-9,
) -> DenseQpResult:
    """
    Primal-dual active-set solve of a small convex QP.

    Each iteration solves the equality-constrained KKT system of the current
    working set by least squares, then either activates the most violated
    inactive row or releases the active inequality with the most wrong-signed
    multiplier. Equality rows (l == u) stay active throughout.

    Returns:
        Solution with multipliers y satisfying H x + g + C^T y = 0
    """
    n = g.size
    rows = C.shape[0]
    # side: 0 inactive, +1 active at upper, -1 active at lower, 2 equality
    side = np.zeros(rows, dtype=int)
    side[np.isclose(l, u) & np.isfinite(l)] = 2
    x = np.zeros(n)
    y = np.zeros(rows)
    converged = False
    iterations = 0
    for iterations in range(1, max_iterations + 1):
        active = np.flatnonzero(side != 0)
        targets = np.where(side[active] == -1, l[active], u[active])
        a = C[active]
        kkt = np.block([[H, a.T], [a, np.zeros((active.size, active.size))]])
        rhs = np.concatenate([-g, targets])
        sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
        x = sol[:n]
        y = np.zeros(rows)
        y[active] = sol[n:]

        cx = C @ x
        scale = 1.0 + np.abs(cx)
        over = np.where(side == 0, np.maximum(cx - u, l - cx) / scale, -np.inf)
        worst = int(np.argmax(over)) if rows else -1
        if rows and over[worst] > tol:
            side[worst] = 1 if cx[worst] > u[worst] else -1
            continue
        wrong = np.where(side == 1, -y, np.where(side == -1, y, -np.inf))
        release = int(np.argmax(wrong)) if rows else -1
        if rows and wrong[release] > tol:
            side[release] = 0
            continue
        converged = True
        break
    if not converged:
        logger.warning(f"dense active-set QP stopped after {iterations} iterations")
    return DenseQpResult(x=x, y=y, iterations=iterations, converged=converged, active=np.flatnonzero(side != 0))
