"""Monte Carlo wavefunction unravelling with a shared classical atom.

Each trajectory is a pure state evolved under H_eff = H - (i/2) sum gamma O^dag O
with first-order quantum jumps.  All trajectories see the same sin(2x); the
ensemble mean of Re<a^dag sigma^-> drives the single classical (x, p).
"""

from __future__ import annotations

import math

import numpy as np
import scipy.sparse as sp

from . import _kernels
from .dynamics import OBSERVABLE_NAMES, TRUNCATION_THRESHOLD, ObservableSeries, classical_force
from .operators import OperatorSet, SystemParams, build_operators

MAX_JUMP_PROBABILITY = 0.1
_RNG_BLOCK = 1024


class StepTooLargeError(ValueError):
    """Total jump probability in one step exceeded MAX_JUMP_PROBABILITY."""


def effective_hamiltonian(h: np.ndarray, ops: OperatorSet, params: SystemParams) -> np.ndarray:
    """H - (i/2)(gamma_m b^dag b + gamma_c a^dag a + gamma_a sigma^+ sigma^-)."""
    decay = params.gamma_m * ops.num_m + params.gamma_c * ops.num_c + params.gamma_a * ops.num_a
    return h - 0.5j * decay


def jump_probabilities(psi: np.ndarray, ops: OperatorSet, params: SystemParams, dt: float) -> np.ndarray:
    """(dp_m, dp_c, dp_a) = dt * gamma_mu <psi|O_mu^dag O_mu|psi>."""
    pop = np.abs(psi) ** 2
    rates = (params.gamma_m, params.gamma_c, params.gamma_a)
    nums = (ops.num_m, ops.num_c, ops.num_a)
    return np.array([dt * g * float(pop @ np.real(np.diagonal(n))) for g, n in zip(rates, nums)])


def _no_jump(psi, h_eff, dt, scheme):
    if scheme == "euler":
        return psi - 1j * dt * (h_eff @ psi)
    if scheme == "rk4":
        f = lambda v: -1j * (h_eff @ v)
        k1 = f(psi)
        k2 = f(psi + 0.5 * dt * k1)
        k3 = f(psi + 0.5 * dt * k2)
        k4 = f(psi + dt * k3)
        return psi + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    raise ValueError(f"unknown scheme {scheme!r}")


def qt_step(psi: np.ndarray, h_eff: np.ndarray, ops: OperatorSet, params: SystemParams,
            rng: np.random.Generator, dt: float | None = None, scheme: str = "euler") -> np.ndarray:
    """One stochastic step of size ``dt`` (default params.dt / 5).

    With probability 1 - dp the normalised no-jump candidate is returned;
    otherwise channel mu (chosen in proportion to dp_mu) jumps.
    """
    dt = params.dt / 5.0 if dt is None else dt
    dps = jump_probabilities(psi, ops, params, dt)
    dp = float(dps.sum())
    if dp > MAX_JUMP_PROBABILITY:
        raise StepTooLargeError(f"jump probability {dp:.3g} exceeds {MAX_JUMP_PROBABILITY}; reduce the step")
    r = rng.random()
    if r >= dp:
        new = _no_jump(psi, h_eff, dt, scheme)
    else:
        mu = int(np.searchsorted(np.cumsum(dps), r, side="right"))
        new = ops.jump_ops[mu] @ psi
    return new / np.linalg.norm(new)


class _UniformStreams:
    """One independent generator per trajectory, read in blocks."""

    def __init__(self, seed: int, n: int):
        children = np.random.SeedSequence(seed).spawn(n)
        self.gens = [np.random.default_rng(c) for c in children]
        self._buf = np.empty((n, _RNG_BLOCK))
        self._pos = _RNG_BLOCK

    def next(self) -> np.ndarray:
        if self._pos == _RNG_BLOCK:
            for i, g in enumerate(self.gens):
                self._buf[i] = g.random(_RNG_BLOCK)
            self._pos = 0
        out = self._buf[:, self._pos]
        self._pos += 1
        return out


def _initial_states(ops: OperatorSet, n_traj: int, streams: _UniformStreams, fock, rho):
    """Rows are trajectories; a mixed rho is sampled from its eigen-decomposition."""
    if rho is None:
        psi = ops.ket(*fock)
        return np.repeat(psi[None, :], n_traj, axis=0)
    evals, evecs = np.linalg.eigh(0.5 * (rho + rho.conj().T))
    weights = np.clip(evals, 0.0, None)
    weights /= weights.sum()
    cdf = np.cumsum(weights)
    picks = np.minimum(np.searchsorted(cdf, [g.random() for g in streams.gens], side="right"), len(cdf) - 1)
    return np.ascontiguousarray(evecs[:, picks].T)


def parse_label(label, order: str = "m,c,a") -> tuple[int, int, int]:
    """Map a ket label such as "100" or (1, 0, 0) given in ``order`` to (n_m, n_c, n_a)."""
    keys = [k.strip() for k in order.split(",")]
    if sorted(keys) != ["a", "c", "m"]:
        raise ValueError(f"label order must be a permutation of m,c,a, got {order!r}")
    if isinstance(label, str):
        digits = [int(ch) for ch in label.strip("|>⟩ ")]
    else:
        digits = [int(v) for v in label]
    if len(digits) != 3:
        raise ValueError(f"ket label needs three entries, got {label!r}")
    d = dict(zip(keys, digits))
    return d["m"], d["c"], d["a"]


def _classical_rk4(x, p, dt, corr, params):
    def f(xx, pp):
        return 2.0 * params.omega_r * pp, classical_force(xx, params.g_ac, params.v0, params.v1, corr)
    a1, b1 = f(x, p)
    a2, b2 = f(x + 0.5 * dt * a1, p + 0.5 * dt * b1)
    a3, b3 = f(x + 0.5 * dt * a2, p + 0.5 * dt * b2)
    a4, b4 = f(x + dt * a3, p + dt * b3)
    return x + dt / 6.0 * (a1 + 2 * a2 + 2 * a3 + a4), p + dt / 6.0 * (b1 + 2 * b2 + 2 * b3 + b4)


class TrajectoryEnsemble:
    """State of ``n_traj`` trajectories (rows of ``states``) plus their shared classical atom."""

    def __init__(self, ops: OperatorSet, params: SystemParams, n_traj: int,
                 initial_fock=(0, 0, 0), initial_rho=None, qt_dt: float | None = None,
                 scheme: str = "rk4"):
        if n_traj < 2:
            raise ValueError(f"n_traj must be >= 2, got {n_traj}")
        if scheme not in ("euler", "rk4"):
            raise ValueError(f"unknown scheme {scheme!r}")
        if ops.rates != (params.gamma_m, params.gamma_c, params.gamma_a):
            ops = build_operators(params)
        self.ops = ops
        self.params = params
        self.n_traj = n_traj
        self.dt = params.dt / 5.0 if qt_dt is None else float(qt_dt)
        self.scheme = scheme
        self.streams = _UniformStreams(params.seed, n_traj)
        self.states = _initial_states(ops, n_traj, self.streams, initial_fock, initial_rho).astype(complex)
        self.x = float(params.x0)
        self.p = float(params.p0)
        self.t = 0.0
        self.n_steps = 0
        rates = (params.gamma_m, params.gamma_c, params.gamma_a)
        nums = (ops.num_m, ops.num_c, ops.num_a)
        self._diag_nums = np.array([np.real(np.diagonal(n)) for n in nums])
        self._decay = np.ascontiguousarray(np.array(rates)[:, None] * self._diag_nums)
        dim = ops.dim
        self._work = [np.empty(dim, dtype=complex) for _ in range(6)]
        self._sparse = {name: sp.csr_matrix(getattr(ops, name)) for name in ("x_m_op", "p_m_op", "corr_op")}

    def _expect(self, name) -> np.ndarray:
        psis = self.states
        return np.real(np.sum(psis.conj() * (self._sparse[name] @ psis.T).T, axis=1))

    def measure(self) -> dict:
        """Per-trajectory expectation values of the quantum observables."""
        pop = np.abs(self.states) ** 2
        n_m, n_c, n_a = self._diag_nums @ pop.T
        return {"n_m": n_m, "n_c": n_c, "n_a": n_a,
                "x_m": self._expect("x_m_op"), "p_m": self._expect("p_m_op"), "corr": self._expect("corr_op")}

    def step(self):
        k = self.ops.kernel
        prm = self.params
        corr = _kernels._ket_expect_mean(self.states, k.corr_rows, k.corr_cols, k.corr_vals)
        s = prm.g_ac * math.sin(2.0 * self.x)
        r = self.streams.next()
        bad = _kernels._qt_step(
            self.states, s, self.dt, k.heff_ptr, k.heff_idx, k.heff_val, k.hac_ptr, k.hac_idx, k.hac_val,
            k.jump_perm, k.jump_weight, self._decay, r, self.scheme == "rk4", MAX_JUMP_PROBABILITY, *self._work,
        )
        if bad >= 0:
            dp = float(self.dt * self._decay @ (np.abs(self.states[bad]) ** 2) @ np.ones(3))
            raise StepTooLargeError(
                f"jump probability {dp:.3g} exceeds {MAX_JUMP_PROBABILITY} at t={self.t:.4g}; reduce the step")
        self.x, self.p = _classical_rk4(self.x, self.p, self.dt, corr, prm)
        self.n_steps += 1
        self.t = self.n_steps * self.dt


def qt_ensemble(params: SystemParams, n_traj: int, initial_fock=(0, 0, 0), *,
                initial_rho=None, label_order: str = "m,c,a", ops: OperatorSet | None = None,
                qt_dt: float | None = None, scheme: str = "rk4") -> ObservableSeries:
    """Ensemble means with standard errors, sampled on evolve()'s time grid.

    ``initial_fock`` is a label in ``label_order`` ("100" or a 3-tuple).
    """
    ops = ops if ops is not None else build_operators(params)
    fock = parse_label(initial_fock, label_order)
    ens = TrajectoryEnsemble(ops, params, n_traj, fock, initial_rho, qt_dt, scheme)
    sample_dt = params.record_stride * params.dt
    per_sample = int(round(sample_dt / ens.dt))
    if per_sample < 1 or abs(per_sample * ens.dt - sample_dt) > 1e-9 * sample_dt:
        raise ValueError("trajectory step must divide the sampling interval record_stride * dt")
    n_samples = params.n_steps // params.record_stride
    rows = {k: [] for k in OBSERVABLE_NAMES}
    sems = {k: [] for k in OBSERVABLE_NAMES}
    times, flags = [], []

    def record(t):
        m = ens.measure()
        mean_pop = np.mean(np.abs(ens.states) ** 2, axis=0)
        top_m, top_c = ops.top_level_populations(np.diag(mean_pop))
        flags.append(top_m > TRUNCATION_THRESHOLD or top_c > TRUNCATION_THRESHOLD)
        for k, v in m.items():
            rows[k].append(float(np.mean(v)))
            sems[k].append(float(np.std(v, ddof=1) / math.sqrt(n_traj)))
        for k, v in (("x", ens.x), ("p", ens.p)):
            rows[k].append(v)
            sems[k].append(0.0)
        times.append(t)

    record(0.0)
    for i in range(1, n_samples + 1):
        for _ in range(per_sample):
            ens.step()
        record(i * sample_dt)
    cfg = dict(params.to_dict(), n_traj=n_traj, initial_fock=list(fock), qt_dt=ens.dt, scheme=scheme)
    return ObservableSeries(
        times=np.asarray(times), **{k: np.asarray(rows[k]) for k in OBSERVABLE_NAMES},
        truncation_flags=np.asarray(flags, dtype=bool),
        sem={k: np.asarray(v) for k, v in sems.items()}, config=cfg,
    )
