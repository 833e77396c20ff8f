"""Hybrid quantum-classical propagation.

The density matrix follows the Lindblad master equation with H(x), while the
atom's centre of mass (x, p) obeys Ehrenfest equations driven by
Re<a^dag sigma^->.  Both are advanced together as one ODE with classical RK4,
so every stage re-evaluates sin(2x) and the coupling observable.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ._kernels import _rk4_combine, _rk4_stage
from .io import read_csv, write_csv
from .operators import OperatorSet, SystemParams, build_operators

log = logging.getLogger(__name__)

TRUNCATION_THRESHOLD = 1e-6
CSV_COLUMNS = ("t", "n_m", "n_c", "n_a", "x_m", "p_m", "corr", "x", "p", "trunc_flag")
OBSERVABLE_NAMES = ("n_m", "n_c", "n_a", "x_m", "p_m", "corr", "x", "p")


class DivergenceError(RuntimeError):
    """The integration produced non-finite numbers."""


@dataclass
class HybridState:
    rho: np.ndarray
    x: float
    p: float
    t: float = 0.0

    def copy(self) -> "HybridState":
        return HybridState(self.rho.copy(), self.x, self.p, self.t)


@dataclass
class ObservableSeries:
    """Sampled expectation values plus the classical atom coordinates.

    ``sem`` is only filled by trajectory ensembles (standard error of the mean
    per observable); ``diagnostics`` only when ``evolve(..., diagnostics=True)``.
    """

    times: np.ndarray
    n_m: np.ndarray
    n_c: np.ndarray
    n_a: np.ndarray
    x_m: np.ndarray
    p_m: np.ndarray
    corr: np.ndarray
    x: np.ndarray
    p: np.ndarray
    truncation_flags: np.ndarray
    sem: dict | None = None
    diagnostics: dict | None = None
    config: dict | None = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.times)

    def column(self, name: str) -> np.ndarray:
        return getattr(self, name)

    def select(self, idx) -> "ObservableSeries":
        """Sub-series at integer indices or a slice."""
        pick = lambda arr: None if arr is None else np.asarray(arr)[idx]
        sem = None if self.sem is None else {k: pick(v) for k, v in self.sem.items()}
        diag = None if self.diagnostics is None else {k: pick(v) for k, v in self.diagnostics.items()}
        return ObservableSeries(
            times=pick(self.times), n_m=pick(self.n_m), n_c=pick(self.n_c), n_a=pick(self.n_a),
            x_m=pick(self.x_m), p_m=pick(self.p_m), corr=pick(self.corr), x=pick(self.x), p=pick(self.p),
            truncation_flags=pick(self.truncation_flags), sem=sem, diagnostics=diag, config=self.config,
        )

    def tail(self, fraction: float) -> "ObservableSeries":
        """Last ``fraction`` of the samples (by count)."""
        if not 0 < fraction <= 1:
            raise ValueError(f"fraction must be in (0, 1], got {fraction!r}")
        n = len(self)
        start = n - max(1, int(math.floor(n * fraction)))
        return self.select(slice(start, n))

    def to_csv(self, path, config: dict | None = None):
        cols = {"t": self.times}
        for name in OBSERVABLE_NAMES:
            cols[name] = getattr(self, name)
        cols["trunc_flag"] = np.asarray(self.truncation_flags, dtype=int)
        if self.sem is not None:
            for name in OBSERVABLE_NAMES:
                if name in self.sem:
                    cols["sem_" + name] = self.sem[name]
        return write_csv(path, cols, config if config is not None else self.config)

    @classmethod
    def from_csv(cls, path) -> "ObservableSeries":
        config, cols = read_csv(path, types={"trunc_flag": int})
        sem = {k[4:]: v for k, v in cols.items() if k.startswith("sem_")} or None
        return cls(
            times=cols["t"], **{n: cols[n] for n in OBSERVABLE_NAMES},
            truncation_flags=np.asarray(cols["trunc_flag"], dtype=bool), sem=sem, config=config,
        )


def lindblad_rhs(rho: np.ndarray, h: np.ndarray, ops: OperatorSet, params: SystemParams) -> np.ndarray:
    """Dense reference generator -i[h, rho] + sum_mu gamma_mu D[O_mu](rho)."""
    out = -1j * (h @ rho - rho @ h)
    rates = (params.gamma_m, params.gamma_c, params.gamma_a)
    for gamma, op in zip(rates, ops.jump_ops):
        if gamma == 0:
            continue
        od = op.conj().T
        odo = od @ op
        out += gamma * (op @ rho @ od - 0.5 * (odo @ rho + rho @ odo))
    return out


def classical_force(x: float, g_ac: float, v0: float, v1: float, corr: float) -> float:
    """dp/dt for the atom: coupling force plus the two lattice gradients."""
    return -4.0 * g_ac * math.cos(2.0 * x) * corr - (v1 * math.cos(x) + v0 * math.sin(2.0 * x))


def atom_energy(x: float, p: float, params: SystemParams) -> float:
    """Classical H_a = omega_r p^2 + V0 sin^2 x + V1 sin x (p^2/2m with omega_r = 1/2m)."""
    return params.omega_r * p * p + params.v0 * math.sin(x) ** 2 + params.v1 * math.sin(x)


def _trace_with(op: np.ndarray, rho: np.ndarray) -> complex:
    return complex(np.einsum("ij,ji->", op, rho))


def observables(rho: np.ndarray, ops: OperatorSet) -> dict:
    """Expectation values Tr(O rho) of the recorded quantum observables."""
    diag = np.real(np.diagonal(rho))
    return {
        "n_m": float(diag @ np.real(np.diagonal(ops.num_m))),
        "n_c": float(diag @ np.real(np.diagonal(ops.num_c))),
        "n_a": float(diag @ np.real(np.diagonal(ops.num_a))),
        "x_m": _trace_with(ops.x_m_op, rho).real,
        "p_m": _trace_with(ops.p_m_op, rho).real,
        "corr": _trace_with(ops.corr_op, rho).real,
    }


def physicality(rho: np.ndarray) -> dict:
    """Trace error, Hermiticity residue and smallest eigenvalue of rho."""
    herm = float(np.max(np.abs(rho - rho.conj().T)))
    return {
        "trace_err": abs(np.trace(rho).real - 1.0),
        "herm_err": herm,
        "min_eig": float(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0]),
    }


def default_initial_state(ops: OperatorSet, params: SystemParams, fock=(0, 0, 0)) -> HybridState:
    """Fock product |n_m, n_c, n_a> with the classical atom at (x0, p0)."""
    return HybridState(ops.fock_dm(*fock), float(params.x0), float(params.p0), 0.0)


class HybridIntegrator:
    """Fixed-step RK4 for a stack of density matrices.

    With ``own_atoms=False`` the stack shares one classical atom: only
    ``rhos[0]`` drives (x, p) and further matrices evolve linearly under the
    same H(x(t)).  With ``own_atoms=True`` each matrix is an independent
    hybrid system and ``x``, ``p`` are arrays with one entry per matrix.
    """

    def __init__(self, ops: OperatorSet, params: SystemParams, batch: int = 1, dt: float | None = None,
                 own_atoms: bool = False):
        if ops.rates != (params.gamma_m, params.gamma_c, params.gamma_a):
            ops = build_operators(params)
        self.ops = ops
        self.params = params
        self.own_atoms = own_atoms
        self.dt = float(params.dt if dt is None else dt)
        shape = (batch, ops.dim, ops.dim)
        self._k = [np.empty(shape, dtype=complex) for _ in range(4)]
        self._stage = np.empty(shape, dtype=complex)
        self._work = np.empty(shape[1:], dtype=complex)

    def _deriv(self, rhos, x, p, out):
        prm = self.params
        kern = self.ops.kernel
        if self.own_atoms:
            corr = np.empty(rhos.shape[0])
            for i in range(rhos.shape[0]):
                kern.apply(rhos[i], prm.g_ac * math.sin(2.0 * x[i]), out[i], self._work)
                corr[i] = kern.corr(rhos[i])
            force = [classical_force(xi, prm.g_ac, prm.v0, prm.v1, ci) for xi, ci in zip(x, corr)]
            return 2.0 * prm.omega_r * p, np.array(force)
        s = prm.g_ac * math.sin(2.0 * x)
        for i in range(rhos.shape[0]):
            kern.apply(rhos[i], s, out[i], self._work)
        corr = kern.corr(rhos[0])
        return 2.0 * prm.omega_r * p, classical_force(x, prm.g_ac, prm.v0, prm.v1, corr)

    def step(self, rhos: np.ndarray, x: float, p: float):
        """One RK4 step; returns (new rhos, x, p).  ``rhos`` is not modified."""
        dt = self.dt
        k1, k2, k3, k4 = self._k
        y = self._stage
        dx1, dp1 = self._deriv(rhos, x, p, k1)
        _rk4_stage(rhos, k1, 0.5 * dt, y)
        dx2, dp2 = self._deriv(y, x + 0.5 * dt * dx1, p + 0.5 * dt * dp1, k2)
        _rk4_stage(rhos, k2, 0.5 * dt, y)
        dx3, dp3 = self._deriv(y, x + 0.5 * dt * dx2, p + 0.5 * dt * dp2, k3)
        _rk4_stage(rhos, k3, dt, y)
        dx4, dp4 = self._deriv(y, x + dt * dx3, p + dt * dp3, k4)
        new = np.empty_like(y)
        _rk4_combine(rhos, k1, k2, k3, k4, dt, new)
        x_new = x + dt / 6.0 * (dx1 + 2.0 * dx2 + 2.0 * dx3 + dx4)
        p_new = p + dt / 6.0 * (dp1 + 2.0 * dp2 + 2.0 * dp3 + dp4)
        return new, x_new, p_new


def _check_finite(rhos, x, p, t):
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(p)) and np.all(np.isfinite(rhos))):
        raise DivergenceError(f"non-finite state at t={t:.6g}")


def step_hybrid(state: HybridState, ops: OperatorSet, params: SystemParams) -> HybridState:
    """Advance (rho, x, p) by one step of size params.dt."""
    integ = HybridIntegrator(ops, params)
    rhos, x, p = integ.step(state.rho[None, :, :], state.x, state.p)
    t = state.t + params.dt
    _check_finite(rhos, x, p, t)
    return HybridState(rhos[0], x, p, t)


class _Recorder:
    def __init__(self, ops: OperatorSet, diagnostics: bool):
        self.ops = ops
        self.diagnostics = diagnostics
        self.rows = {k: [] for k in ("t",) + OBSERVABLE_NAMES}
        self.flags = []
        self.diag = {"trace_err": [], "herm_err": [], "min_eig": []}
        self._warned = False

    def record(self, t, rho, x, p):
        obs = observables(rho, self.ops)
        self.rows["t"].append(t)
        for k, v in obs.items():
            self.rows[k].append(v)
        self.rows["x"].append(x)
        self.rows["p"].append(p)
        top_m, top_c = self.ops.top_level_populations(rho)
        flag = top_m > TRUNCATION_THRESHOLD or top_c > TRUNCATION_THRESHOLD
        if flag and not self._warned:
            log.warning("truncation: top-level population (membrane %.3g, cavity %.3g) exceeds %.0e at t=%.4g",
                        top_m, top_c, TRUNCATION_THRESHOLD, t)
            self._warned = True
        self.flags.append(flag)
        if self.diagnostics:
            for k, v in physicality(rho).items():
                self.diag[k].append(v)

    def series(self, config=None) -> ObservableSeries:
        r = {k: np.asarray(v, dtype=float) for k, v in self.rows.items()}
        return ObservableSeries(
            times=r["t"], **{k: r[k] for k in OBSERVABLE_NAMES},
            truncation_flags=np.asarray(self.flags, dtype=bool),
            diagnostics={k: np.asarray(v) for k, v in self.diag.items()} if self.diagnostics else None,
            config=config,
        )


def evolve(
    params: SystemParams,
    initial: HybridState | None = None,
    ops: OperatorSet | None = None,
    diagnostics: bool = False,
    return_state: bool = False,
):
    """Integrate to params.t_final, sampling every record_stride steps.

    With ``return_state`` the final HybridState is returned as well.
    """
    ops = ops if ops is not None else build_operators(params)
    state = initial if initial is not None else default_initial_state(ops, params)
    integ = HybridIntegrator(ops, params)
    rec = _Recorder(integ.ops, diagnostics)
    rhos = np.ascontiguousarray(state.rho, dtype=complex)[None, :, :].copy()
    x, p, t0 = float(state.x), float(state.p), float(state.t)
    n_steps = params.n_steps
    stride = params.record_stride
    rec.record(t0, rhos[0], x, p)
    for n in range(1, n_steps + 1):
        rhos, x, p = integ.step(rhos, x, p)
        if n % stride == 0 or n == n_steps:
            t = t0 + n * params.dt
            _check_finite(rhos, x, p, t)
            if n % stride == 0:
                rec.record(t, rhos[0], x, p)
    series = rec.series(config=params.to_dict())
    if return_state:
        return series, HybridState(rhos[0], x, p, t0 + n_steps * params.dt)
    return series
