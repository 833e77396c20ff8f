"""Two-time correlation functions of the cavity field.

G1 uses four physical helper states whose signed combination reconstructs
a rho; G2 evolves the photon-subtracted state a rho a^dag / <n_c>.  Each
auxiliary state is a physical hybrid system: by default it carries its own
copy of the classical atom, started from (x(t), p(t)) and driven by its own
coupling observable.  ``shared_atom=True`` instead lets every auxiliary
matrix evolve linearly under the H(x(t)) of the physical atom trajectory.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import HybridIntegrator, HybridState, _check_finite, default_initial_state
from .io import write_csv
from .operators import OperatorSet, SystemParams, build_operators

MIN_INTENSITY = 1e-12

# (sign of a in the left factor, recombination weight) for the four helpers
_HELPERS = ((1.0, 1.0), (-1.0, -1.0), (1j, -1j), (-1j, 1j))


class VanishingIntensityError(ValueError):
    """<n_c> is too small for the normalisation of G1/G2 to be defined."""


@dataclass
class CorrelationSeries:
    tau: np.ndarray
    g1: np.ndarray | None
    g2: np.ndarray | None
    t_ref: float
    n_c_ref: float
    n_c_tau: np.ndarray = field(repr=False)
    config: dict | None = field(default=None, repr=False)

    def to_csv(self, path, config: dict | None = None):
        nan = np.full(len(self.tau), np.nan)
        g1 = self.g1 if self.g1 is not None else nan
        cols = {
            "tau": self.tau,
            "re_g1": np.real(g1),
            "im_g1": np.imag(g1) if self.g1 is not None else nan,
            "g2": self.g2 if self.g2 is not None else nan,
        }
        return write_csv(path, cols, config if config is not None else self.config)


def default_tau_grid(span: float = 50.0, points: int = 400) -> np.ndarray:
    return np.arange(points) * (span / points)


def _advance(integ: HybridIntegrator, state: HybridState, n_steps: int) -> HybridState:
    rhos = np.ascontiguousarray(state.rho)[None].copy()
    x, p = state.x, state.p
    for _ in range(n_steps):
        rhos, x, p = integ.step(rhos, x, p)
    t = state.t + n_steps * integ.dt
    _check_finite(rhos, x, p, t)
    return HybridState(rhos[0], x, p, t)


def helper_states(rho: np.ndarray, a: np.ndarray):
    """Unnormalised helpers (1 + c a) rho (1 + c a)^dag for c in (1, -1, i, -i)."""
    eye = np.eye(rho.shape[0])
    out = []
    for c, _ in _HELPERS:
        left = eye + c * a
        out.append(left @ rho @ left.conj().T)
    return out


def recombine(helpers) -> np.ndarray:
    """(h1 - h2 - i h3 + i h4) / 4, which equals a rho for the unnormalised helpers."""
    return 0.25 * sum(w * h for (_, w), h in zip(_HELPERS, helpers))


def correlation_functions(
    params: SystemParams,
    t_ref: float,
    tau_grid=None,
    initial: HybridState | None = None,
    ops: OperatorSet | None = None,
    which=("g1", "g2"),
    shared_atom: bool = False,
) -> CorrelationSeries:
    """G1(tau) and/or G2(tau) at reference time t_ref for lags in tau_grid.

    Lags are rounded to whole integration steps; the returned ``tau`` holds
    the lags actually used.
    """
    ops = ops if ops is not None else build_operators(params)
    tau_grid = default_tau_grid() if tau_grid is None else np.asarray(tau_grid, dtype=float)
    if np.any(np.diff(tau_grid) < 0) or np.any(tau_grid < 0):
        raise ValueError("tau grid must be non-negative and non-decreasing")
    dt = params.dt
    state = initial if initial is not None else default_initial_state(ops, params)
    base_integ = HybridIntegrator(ops, params)
    ops = base_integ.ops
    ref_steps = int(round((t_ref - state.t) / dt))
    if ref_steps < 0:
        raise ValueError(f"t_ref={t_ref} precedes the initial state time {state.t}")
    state = _advance(base_integ, state, ref_steps)

    rho = state.rho
    a, num_c = ops.a, ops.num_c
    n_ref = float(np.real(np.trace(num_c @ rho)))
    if n_ref <= MIN_INTENSITY:
        raise VanishingIntensityError(f"<n_c(t_ref)> = {n_ref:.3g} is below {MIN_INTENSITY}")

    batch = [rho]
    traces = []
    if "g1" in which:
        for h in helper_states(rho, a):
            tr = float(np.real(np.trace(h)))
            if tr <= 0:
                raise VanishingIntensityError("helper state with vanishing trace")
            traces.append(tr)
            batch.append(h / tr)
    if "g2" in which:
        batch.append(a @ rho @ a.conj().T / n_ref)
    rhos = np.ascontiguousarray(np.stack(batch))
    integ = HybridIntegrator(ops, params, batch=len(batch), own_atoms=not shared_atom)

    a_dag = a.conj().T
    step_idx = np.rint(tau_grid / dt).astype(int)
    n_tau = np.empty(len(step_idx))
    g1 = np.empty(len(step_idx), dtype=complex) if "g1" in which else None
    g2 = np.empty(len(step_idx)) if "g2" in which else None
    x, p = state.x, state.p
    if not shared_atom:
        x, p = np.full(len(batch), x), np.full(len(batch), p)
    current = 0
    for k, target in enumerate(step_idx):
        while current < target:
            rhos, x, p = integ.step(rhos, x, p)
            current += 1
        _check_finite(rhos, x, p, t_ref + current * dt)
        n_now = float(np.real(np.einsum("ij,ji->", num_c, rhos[0])))
        if n_now <= MIN_INTENSITY:
            raise VanishingIntensityError(f"<n_c(t+tau)> = {n_now:.3g} at tau={current * dt:.4g}")
        n_tau[k] = n_now
        if g1 is not None:
            a_op = recombine([tr * r for tr, r in zip(traces, rhos[1:5])])
            g1[k] = np.einsum("ij,ji->", a_dag, a_op) / np.sqrt(n_ref * n_now)
        if g2 is not None:
            g2[k] = float(np.real(np.einsum("ij,ji->", num_c, rhos[-1]))) / n_now

    cfg = dict(params.to_dict(), t_ref=t_ref, shared_atom=shared_atom)
    return CorrelationSeries(step_idx * dt, g1, g2, float(t_ref), n_ref, n_tau, cfg)


def g1(params: SystemParams, t_ref: float, tau_grid=None, **kw) -> np.ndarray:
    return correlation_functions(params, t_ref, tau_grid, which=("g1",), **kw).g1


def g2(params: SystemParams, t_ref: float, tau_grid=None, **kw) -> np.ndarray:
    return correlation_functions(params, t_ref, tau_grid, which=("g2",), **kw).g2
