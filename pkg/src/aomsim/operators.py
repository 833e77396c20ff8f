"""Composite Hilbert space and Hamiltonian for the atom-cavity-membrane system.

Tensor ordering is membrane (x) cavity (x) atom throughout, so the ket
|n_m, n_c, s> has flat index ``(n_m * n_c_dim + n_c) * 2 + s`` with s=0 the
atomic ground state.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np
import scipy.sparse as sp

from . import _kernels

MAX_DIM = 4000


class ParameterError(ValueError):
    """Raised when a SystemParams invariant is violated."""


@dataclass(frozen=True)
class SystemParams:
    """Physical rates and numerical controls, all in units of gamma_a.

    Defaults are the standard parameter set with omega_m = 1 and the
    regular-phase couplings (g_ac, g_mc) = (0.5, 2).
    """

    omega_m: float = 1.0
    delta_c: float = -1.0
    delta_a: float = -2.0
    eta: float = 5.0
    g_mc: float = 2.0
    g_ac: float = 0.5
    gamma_m: float = 2.0
    gamma_c: float = 0.5
    gamma_a: float = 1.0
    v0: float = 20.0
    v1: float = 40.0
    omega_r: float = 1.0
    n_m: int = 10
    n_c: int = 20
    dt: float = 5e-3
    t_final: float = 200.0
    record_stride: int = 20
    x0: float = -1.0
    p0: float = 0.0
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for f in fields(self):
            v = getattr(self, f.name)
            if f.type == "int":
                if isinstance(v, bool) or not isinstance(v, (int, np.integer)):
                    raise ParameterError(f"{f.name} must be an integer, got {v!r}")
            else:
                if isinstance(v, bool) or not isinstance(v, (int, float, np.integer, np.floating)):
                    raise ParameterError(f"{f.name} must be a number, got {v!r}")
                if not math.isfinite(v):
                    raise ParameterError(f"{f.name} must be finite, got {v!r}")
        for name in ("omega_m", "omega_r", "dt"):
            if getattr(self, name) <= 0:
                raise ParameterError(f"{name} must be > 0, got {getattr(self, name)!r}")
        for name in ("gamma_m", "gamma_c", "gamma_a", "v0", "v1"):
            if getattr(self, name) < 0:
                raise ParameterError(f"{name} must be >= 0, got {getattr(self, name)!r}")
        for name in ("n_m", "n_c"):
            if getattr(self, name) < 2:
                raise ParameterError(f"{name} must be >= 2, got {getattr(self, name)!r}")
        if self.t_final <= self.dt:
            raise ParameterError(f"t_final must exceed dt, got t_final={self.t_final!r}, dt={self.dt!r}")
        if self.record_stride < 1:
            raise ParameterError(f"record_stride must be >= 1, got {self.record_stride!r}")
        if self.seed < 0:
            raise ParameterError(f"seed must be >= 0, got {self.seed!r}")

    @property
    def dim(self) -> int:
        return self.n_m * self.n_c * 2

    @property
    def n_steps(self) -> int:
        return int(round(self.t_final / self.dt))

    def with_(self, **changes) -> "SystemParams":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return asdict(self)


def _ladder(n: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, n, dtype=float)), 1).astype(complex)


def _dag(op: np.ndarray) -> np.ndarray:
    return op.conj().T


@dataclass(frozen=True, eq=False)
class OperatorSet:
    """Dense operators on the truncated composite space.

    ``rates`` holds (gamma_m, gamma_c, gamma_a) of the params the set was
    built from; the fast propagator bakes them into its sparse structure.
    """

    n_m: int
    n_c: int
    b: np.ndarray
    a: np.ndarray
    sigma_minus: np.ndarray
    num_m: np.ndarray
    num_c: np.ndarray
    num_a: np.ndarray
    h_fixed: np.ndarray
    h_ac: np.ndarray
    x_m_op: np.ndarray
    p_m_op: np.ndarray
    corr_op: np.ndarray
    rates: tuple[float, float, float]
    kernel: _kernels.LiouvillianStructure = field(repr=False)

    @property
    def dim(self) -> int:
        return self.b.shape[0]

    @property
    def jump_ops(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.b, self.a, self.sigma_minus

    def ket(self, n_m: int, n_c: int, n_a: int) -> np.ndarray:
        """Fock-product basis vector |n_m, n_c, n_a>."""
        if not (0 <= n_m < self.n_m and 0 <= n_c < self.n_c and n_a in (0, 1)):
            raise ValueError(f"ket label ({n_m}, {n_c}, {n_a}) outside truncation ({self.n_m}, {self.n_c}, 2)")
        psi = np.zeros(self.dim, dtype=complex)
        psi[(n_m * self.n_c + n_c) * 2 + n_a] = 1.0
        return psi

    def fock_dm(self, n_m: int = 0, n_c: int = 0, n_a: int = 0) -> np.ndarray:
        psi = self.ket(n_m, n_c, n_a)
        return np.outer(psi, psi.conj())

    def top_level_populations(self, rho: np.ndarray) -> tuple[float, float]:
        """Populations of the highest membrane and cavity Fock levels."""
        diag = np.real(np.diagonal(rho)).reshape(self.n_m, self.n_c, 2)
        return float(diag[-1].sum()), float(diag[:, -1].sum())


def build_operators(params: SystemParams, max_dim: int = MAX_DIM) -> OperatorSet:
    """Build all composite-space operators for ``params``."""
    params.validate()
    n_m, n_c = params.n_m, params.n_c
    dim = n_m * n_c * 2
    if dim > max_dim:
        raise ParameterError(f"composite dimension {dim} (n_m={n_m}, n_c={n_c}) exceeds cap {max_dim}")

    id_m, id_c, id_a = np.eye(n_m), np.eye(n_c), np.eye(2)
    b = np.kron(np.kron(_ladder(n_m), id_c), id_a)
    a = np.kron(np.kron(id_m, _ladder(n_c)), id_a)
    sm = np.kron(np.kron(id_m, id_c), _ladder(2))

    num_m = _dag(b) @ b
    num_c = _dag(a) @ a
    num_a = _dag(sm) @ sm

    h_fixed = (
        params.omega_m * num_m
        - params.delta_c * num_c
        - params.delta_a * num_a
        + params.eta * (a + _dag(a))
        - params.g_mc * (_dag(b) + b) @ num_c
    )
    h_ac = _dag(a) @ sm + a @ _dag(sm)
    x_m_op = (b + _dag(b)) / math.sqrt(2.0)
    p_m_op = (b - _dag(b)) / (1j * math.sqrt(2.0))
    corr_op = _dag(a) @ sm

    rates = (float(params.gamma_m), float(params.gamma_c), float(params.gamma_a))
    structure = _kernels.LiouvillianStructure.from_dense(h_fixed, h_ac, (b, a, sm), rates, corr_op)

    return OperatorSet(
        n_m=n_m,
        n_c=n_c,
        b=b,
        a=a,
        sigma_minus=sm,
        num_m=num_m,
        num_c=num_c,
        num_a=num_a,
        h_fixed=h_fixed,
        h_ac=h_ac,
        x_m_op=x_m_op,
        p_m_op=p_m_op,
        corr_op=corr_op,
        rates=rates,
        kernel=structure,
    )


def hamiltonian(ops: OperatorSet, g_ac: float, x: float) -> np.ndarray:
    """H(x) = h_fixed + g_ac sin(2x) h_ac."""
    return ops.h_fixed + (g_ac * math.sin(2.0 * x)) * ops.h_ac


def as_sparse(op: np.ndarray) -> sp.csr_matrix:
    m = sp.csr_matrix(op)
    m.eliminate_zeros()
    m.sort_indices()
    return m
