"""Analytic oracle suite run by ``aomsim validate``.

Every check compares the numerics with a closed-form answer and reports the
measured error next to its tolerance.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .chaostest import DegenerateSeriesWarning, draw_nus, zero_one_test
from .correlations import correlation_functions
from .dynamics import HybridState, atom_energy, classical_force, evolve, observables
from .operators import SystemParams, build_operators, hamiltonian


@dataclass
class OracleResult:
    name: str
    error: float
    tolerance: float
    passed: bool
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: {self.detail} (tol {self.tolerance:g})"


def _result(name, error, tol, detail=""):
    return OracleResult(name, float(error), tol, bool(error <= tol), detail or f"error {error:.3g}")


def damped_mode_decay(tol: float = 1e-6) -> OracleResult:
    """One photon, no drive or coupling: <n_c(t)> = exp(-gamma_c t) for t <= 5."""
    p = SystemParams(n_m=3, n_c=4, g_ac=0.0, g_mc=0.0, eta=0.0, t_final=5.0, record_stride=20)
    ops = build_operators(p)
    s = evolve(p, initial=HybridState(ops.fock_dm(0, 1, 0), p.x0, p.p0, 0.0), ops=ops)
    exact = np.exp(-p.gamma_c * np.asarray(s.times))
    err = float(np.max(np.abs(np.asarray(s.n_c) - exact) / exact))
    return _result("damped-mode decay", err, tol, f"max relative error {err:.3g}")


def driven_cavity_steady_state(tol: float = 1e-4, eta: float = 0.5) -> OracleResult:
    """<n_c> -> eta^2 / (delta_c^2 + gamma_c^2/4) for the decoupled driven cavity."""
    p = SystemParams(n_m=2, n_c=8, g_ac=0.0, g_mc=0.0, eta=eta, t_final=80.0, record_stride=200)
    s = evolve(p)
    exact = eta**2 / (p.delta_c**2 + p.gamma_c**2 / 4)
    err = abs(float(s.n_c[-1]) - exact) / exact
    return _result("driven-cavity steady state", err, tol, f"<n_c>={float(s.n_c[-1]):.8f} vs {exact:.8f}")


def atom_energy_conservation(tol: float = 1e-6, t_final: float = 100.0) -> OracleResult:
    """With g_ac = 0 the atom is conservative: E_a stays fixed."""
    p = SystemParams(n_m=2, n_c=2, g_ac=0.0, g_mc=0.0, eta=0.0, t_final=t_final, record_stride=20)
    s = evolve(p)
    e = np.array([atom_energy(x, q, p) for x, q in zip(s.x, s.p)])
    err = float(np.max(np.abs(e - e[0])) / abs(e[0]))
    return _result("decoupled atom energy", err, tol, f"max relative drift {err:.3g}")


def force_finite_difference(tol: float = 1e-6, n_configs: int = 100, seed: int = 0) -> OracleResult:
    """classical_force equals -d/dx (<H> + H_a) by central differences."""
    rng = np.random.default_rng(seed)
    base = SystemParams(n_m=2, n_c=3)
    ops = build_operators(base)
    d = ops.dim
    worst = 0.0
    for _ in range(n_configs):
        g_ac = rng.uniform(0.0, 4.0)
        x = rng.uniform(-math.pi, math.pi)
        v0, v1 = rng.uniform(0.0, 40.0, size=2)
        z = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        rho = z @ z.conj().T
        rho /= np.trace(rho).real
        corr = observables(rho, ops)["corr"]

        def energy(xx):
            e_q = np.real(np.trace(hamiltonian(ops, g_ac, xx) @ rho))
            return e_q + v0 * math.sin(xx) ** 2 + v1 * math.sin(xx)

        h = 1e-5
        fd = -(energy(x + h) - energy(x - h)) / (2 * h)
        f = classical_force(x, g_ac, v0, v1, corr)
        worst = max(worst, abs(f - fd) / max(abs(fd), 1.0))
    return _result("force vs finite difference", worst, tol, f"worst relative error {worst:.3g} over {n_configs}")


def logistic_series(r: float, n: int = 10_000, x0: float = 0.3, burn: int = 1000) -> np.ndarray:
    x = x0
    out = np.empty(n)
    for i in range(burn + n):
        x = r * x * (1.0 - x)
        if i >= burn:
            out[i - burn] = x
    return out


def zero_one_logistic(r: float, expect: float, tol: float = 0.1, n_nu: int = 16) -> OracleResult:
    phi = logistic_series(r)
    nus = draw_nus(n_nu, seed=1)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateSeriesWarning)
        res = [zero_one_test(phi, float(nu)) for nu in nus]
    kc = float(np.median([q.k_correlation for q in res]))
    kr = float(np.median([q.k_regression for q in res]))
    err = max(abs(kc - expect), abs(kr - expect))
    return _result(f"0-1 test logistic r={r}", err, tol, f"K_c={kc:.4f} K_r={kr:.4f}, expected {expect}")


def coherent_state_correlations(tol: float = 1e-6) -> OracleResult:
    """Decoupled driven cavity started in its coherent steady state: g1 = g2 = 1."""
    from scipy.linalg import expm

    p = SystemParams(n_m=2, n_c=10, g_ac=0.0, g_mc=0.0, eta=0.5, v0=0.0, v1=0.0, t_final=10.0)
    ops = build_operators(p)
    alpha = -1j * p.eta / (-1j * p.delta_c + p.gamma_c / 2)
    disp = expm(alpha * ops.a.conj().T - np.conj(alpha) * ops.a)
    psi = disp @ ops.ket(0, 0, 0)
    rho = np.outer(psi, psi.conj())
    cs = correlation_functions(p, 0.0, np.linspace(0.0, 5.0, 11),
                               initial=HybridState(rho, p.x0, p.p0, 0.0), ops=ops)
    err = max(float(np.max(np.abs(cs.g2 - 1))), float(np.max(np.abs(np.abs(cs.g1) - 1))))
    return _result("coherent-state g1/g2", err, tol, f"max |g - 1| {err:.3g}")


def run_all() -> list[OracleResult]:
    return [
        damped_mode_decay(),
        driven_cavity_steady_state(),
        atom_energy_conservation(),
        force_finite_difference(),
        zero_one_logistic(3.97, 1.0),
        zero_one_logistic(3.55, 0.0),
        coherent_state_correlations(),
    ]
