"""Coupled-system abstraction and partitioned state layout.

A multiphysics problem is a collection of ``m`` subsystems

    M^i du^i/dt = r^i(u^i, c^i, t),   i = 0..m-1,

where the coupling vector ``c^i`` may depend on the states of any
subsystems.  The full state is stored subsystem-major in one flat vector so
that sweep kernels can address stages without copies.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DimensionMismatchError


@dataclass
class PartitionedState:
    """Concatenated per-subsystem state vectors.

    ``offsets`` has ``m + 1`` entries; subsystem ``i`` owns
    ``data[offsets[i]:offsets[i+1]]``.
    """

    data: np.ndarray
    offsets: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        self.offsets = np.asarray(self.offsets, dtype=int)
        if self.offsets[0] != 0 or self.offsets[-1] != self.data.size:
            raise ValueError("offsets must start at 0 and end at len(data)")
        if np.any(np.diff(self.offsets) <= 0):
            raise ValueError("offsets must be strictly increasing")

    @property
    def num_subsystems(self) -> int:
        return len(self.offsets) - 1

    def subsystem_view(self, i: int) -> np.ndarray:
        """Writable view of subsystem ``i``'s slice of ``data``."""
        return self.data[self.offsets[i]:self.offsets[i + 1]]

    def copy(self, time: float | None = None) -> "PartitionedState":
        return PartitionedState(
            self.data.copy(),
            self.offsets,
            self.time if time is None else time,
        )


def concat(states: Sequence[np.ndarray], time: float = 0.0,
           dims: Sequence[int] | None = None) -> PartitionedState:
    """Build a :class:`PartitionedState` from per-subsystem vectors.

    Zero-dimensional subsystems are rejected.  When ``dims`` is given, each
    vector is checked against the expected subsystem dimension and a
    :class:`DimensionMismatchError` names the offending subsystem.
    """
    if dims is not None and len(states) != len(dims):
        raise ValueError(f"expected {len(dims)} subsystems, got {len(states)}")
    arrays = []
    for i, s in enumerate(states):
        a = np.atleast_1d(np.asarray(s, dtype=float))
        if a.size == 0:
            raise DimensionMismatchError(i, expected=1, got=0)
        if dims is not None and a.size != dims[i]:
            raise DimensionMismatchError(i, expected=int(dims[i]), got=a.size)
        arrays.append(a)
    offsets = np.concatenate(([0], np.cumsum([a.size for a in arrays])))
    return PartitionedState(np.concatenate(arrays), offsets, time)


class CoupledSystem(ABC):
    """Behavioral contract a coupled problem implements.

    Implementations must be safe for concurrent read-only evaluation:
    ``residual`` and ``coupling`` take no mutable state.

    Attributes
    ----------
    is_linear :
        ``residual(i, u_i, c_i, t)`` is affine in ``u_i`` with a constant
        Jacobian ``dr^i/du^i`` (for any frozen coupling value).  Stage
        solves then reduce to a single cached dense factorization instead
        of Newton iterations.
    has_linear_coupling :
        ``coupling(i, u, t)`` is affine in the full state.  Together with
        ``is_linear`` this makes the whole map ``u -> r(u, c(u), t)``
        affine, which monolithic solves and update-matrix probes exploit.
    """

    is_linear: bool = False
    has_linear_coupling: bool = False

    @property
    @abstractmethod
    def num_subsystems(self) -> int:
        ...

    @property
    @abstractmethod
    def subsystem_dims(self) -> Sequence[int]:
        ...

    def apply_mass(self, i: int, v: np.ndarray) -> np.ndarray:
        """Action of the subsystem mass matrix ``M^i v``.

        Defaults to the identity.  ``M^i`` may be singular (DAE); it is
        only ever used inside solves of ``M^i - delta * dr^i/du^i``.
        """
        return np.array(v, dtype=float, copy=True)

    @abstractmethod
    def residual(self, i: int, u_i: np.ndarray, c_i: np.ndarray,
                 t: float) -> np.ndarray:
        """Spatial residual ``r^i(u^i, c^i, t)``."""

    @abstractmethod
    def coupling(self, i: int, state: PartitionedState, t: float) -> np.ndarray:
        """Coupling vector ``c^i`` evaluated from the full state."""

    def jacobian(self, i: int, u_i: np.ndarray, c_i: np.ndarray,
                 t: float) -> np.ndarray | None:
        """Dense ``dr^i/du^i`` or ``None`` for a finite-difference fallback."""
        return None

    def initial_offsets(self) -> np.ndarray:
        dims = np.asarray(self.subsystem_dims, dtype=int)
        return np.concatenate(([0], np.cumsum(dims)))

    def total_dim(self) -> int:
        return int(sum(self.subsystem_dims))

    def check_state(self, state: PartitionedState) -> None:
        """Raise if ``state`` does not match this system's layout."""
        dims = self.subsystem_dims
        if state.num_subsystems != self.num_subsystems:
            raise ValueError(
                f"state has {state.num_subsystems} subsystems, "
                f"system has {self.num_subsystems}"
            )
        for i in range(self.num_subsystems):
            got = state.offsets[i + 1] - state.offsets[i]
            if got != dims[i]:
                raise DimensionMismatchError(i, expected=int(dims[i]), got=int(got))


@dataclass
class JacobianCheck:
    """Outcome of validating one subsystem's analytic Jacobian."""

    subsystem: int
    deviation: float | None  # None when the Jacobian is absent
    skipped: bool = False


def validate_jacobian(sys: CoupledSystem, state: PartitionedState, t: float,
                      tol: float = 1e-5) -> list[JacobianCheck]:
    """Compare each provided Jacobian against central finite differences.

    The deviation reported per subsystem is
    ``max_ij |J_ij - FD_ij| / (1 + |FD_ij|)`` with FD steps
    ``1e-6 * (1 + |u_j|)``.  Subsystems without an analytic Jacobian are
    marked skipped.  ``tol`` is advisory metadata for callers; no exception
    is raised on large deviations.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    sys.check_state(state)
    report = []
    for i in range(sys.num_subsystems):
        u_i = state.subsystem_view(i).copy()
        c_i = sys.coupling(i, state, t)
        jac = sys.jacobian(i, u_i, c_i, t)
        if jac is None:
            report.append(JacobianCheck(i, None, skipped=True))
            continue
        fd = np.empty_like(np.asarray(jac, dtype=float))
        for j in range(u_i.size):
            h = 1e-6 * (1.0 + abs(u_i[j]))
            up = u_i.copy()
            up[j] += h
            dn = u_i.copy()
            dn[j] -= h
            fd[:, j] = (sys.residual(i, up, c_i, t)
                        - sys.residual(i, dn, c_i, t)) / (2.0 * h)
        dev = float(np.max(np.abs(jac - fd) / (1.0 + np.abs(fd))))
        report.append(JacobianCheck(i, dev))
    return report
