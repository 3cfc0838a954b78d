"""
Decision-vector layout of one agent.

z_i = [u (N*q) | y_T (T*p) | aux (a) | x_T (T*n) | u_T (T*q)]

The cooperation vector (y_T followed by aux) is contiguous so it can be
handed to the cooperation objective without copying.
"""
from dataclasses import dataclass

import numpy as np

from core.errors import DimensionMismatchError


@dataclass(frozen=True)
class BlockLayout:
    horizon: int
    period: int
    n: int
    q: int
    p: int
    a: int = 0

    @property
    def u(self) -> slice:
        return slice(0, self.horizon * self.q)

    @property
    def y(self) -> slice:
        start = self.u.stop
        return slice(start, start + self.period * self.p)

    @property
    def aux(self) -> slice:
        start = self.y.stop
        return slice(start, start + self.a)

    @property
    def coop(self) -> slice:
        return slice(self.y.start, self.aux.stop)

    @property
    def x_ref(self) -> slice:
        start = self.aux.stop
        return slice(start, start + self.period * self.n)

    @property
    def u_ref(self) -> slice:
        start = self.x_ref.stop
        return slice(start, start + self.period * self.q)

    @property
    def size(self) -> int:
        return self.u_ref.stop

    def u_index(self, k: int) -> slice:
        return slice(k * self.q, (k + 1) * self.q)

    def y_index(self, tau: int) -> slice:
        start = self.y.start + tau * self.p
        return slice(start, start + self.p)

    def x_ref_index(self, tau: int) -> slice:
        start = self.x_ref.start + tau * self.n
        return slice(start, start + self.n)

    def u_ref_index(self, tau: int) -> slice:
        start = self.u_ref.start + tau * self.q
        return slice(start, start + self.q)

    def inputs(self, z: np.ndarray) -> np.ndarray:
        return np.asarray(z[self.u]).reshape(self.horizon, self.q)

    def outputs(self, z: np.ndarray) -> np.ndarray:
        return np.asarray(z[self.y]).reshape(self.period, self.p)

    def aux_values(self, z: np.ndarray) -> np.ndarray:
        return np.asarray(z[self.aux])

    def ref_states(self, z: np.ndarray) -> np.ndarray:
        return np.asarray(z[self.x_ref]).reshape(self.period, self.n)

    def ref_inputs(self, z: np.ndarray) -> np.ndarray:
        return np.asarray(z[self.u_ref]).reshape(self.period, self.q)

    def assemble(self, u, y, aux, x_ref, u_ref) -> np.ndarray:
        parts = [np.asarray(part, dtype=float).ravel() for part in (u, y, aux, x_ref, u_ref)]
        z = np.concatenate(parts)
        if z.size != self.size:
            raise DimensionMismatchError(f"assembled vector of size {z.size}, layout expects {self.size}")
        return z
