"""Acceptance criteria, each checked at its stated tolerance.

Every test reports one ``criterion N: PASS|FAIL`` line (collected in the
"acceptance criteria" section of the pytest summary) before asserting.
"""

import time
import warnings

import numpy as np
import pytest

from aomsim.chaostest import (
    CHAOTIC, REGULAR, TIME_CRYSTAL, ChaosConfig, DegenerateSeriesWarning, analyse, k_correlation,
    k_regression,
)
from aomsim.correlations import correlation_functions
from aomsim.dynamics import HybridState, evolve
from aomsim.operators import SystemParams, build_operators
from aomsim.oracles import (
    atom_energy_conservation, coherent_state_correlations, damped_mode_decay, driven_cavity_steady_state,
    force_finite_difference, zero_one_logistic,
)
from aomsim.sweep import run_sweep
from aomsim.trajectories import qt_ensemble

pytestmark = pytest.mark.acceptance

POINTS = {REGULAR: (0.5, 2.0), TIME_CRYSTAL: (2.0, 2.5), CHAOTIC: (2.0, 2.0)}
PRODUCTION = dict(n_m=10, n_c=20)
TEST_TRUNCATION = dict(n_m=6, n_c=12)


@pytest.mark.slow
def test_criterion_1_physicality(acceptance_report):
    lines, ok = [], True
    for label, (g_ac, g_mc) in POINTS.items():
        params = SystemParams(g_ac=g_ac, g_mc=g_mc, t_final=200.0, dt=5e-3, **PRODUCTION)
        start = time.time()
        s = evolve(params, diagnostics=True)
        wall = time.time() - start
        d = s.diagnostics
        tr, herm, eig = float(np.max(d["trace_err"])), float(np.max(d["herm_err"])), float(np.min(d["min_eig"]))
        good = tr < 1e-6 and herm < 1e-9 and eig >= -1e-8 and wall < 600
        ok &= good
        lines.append(f"({g_ac:g},{g_mc:g}) trace {tr:.1e} herm {herm:.1e} min_eig {eig:.1e} {wall:.0f}s")
    acceptance_report(1, ok, "; ".join(lines))
    assert ok


def test_criterion_2_analytic_oracles(acceptance_report):
    results = [damped_mode_decay(1e-6), driven_cavity_steady_state(1e-4), atom_energy_conservation(1e-6, 100.0)]
    ok = all(r.passed for r in results)
    acceptance_report(2, ok, "; ".join(f"{r.name} {r.error:.2e}" for r in results))
    assert ok


def test_criterion_3_force_consistency(acceptance_report):
    r = force_finite_difference(1e-6, n_configs=100)
    acceptance_report(3, r.passed, r.detail)
    assert r.passed


def test_criterion_4_zero_one_oracles(acceptance_report):
    chaotic = zero_one_logistic(3.97, 1.0, tol=0.1)
    periodic = zero_one_logistic(3.55, 0.0, tol=0.1)
    n = np.arange(1, 201, dtype=float)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateSeriesWarning)
        lin_r, lin_c = k_regression(n), k_correlation(3.0 * n)
        const_r, const_c = k_regression(np.full(200, 7.0)), k_correlation(np.full(200, 7.0))
    synthetic = (abs(lin_r - 1) < 1e-12 and abs(lin_c - 1) < 1e-12 and abs(const_r) < 1e-12 and const_c == 0.0)
    ok = chaotic.passed and periodic.passed and synthetic
    acceptance_report(4, ok, f"r=3.97 [{chaotic.detail}]; r=3.55 [{periodic.detail}]; "
                             f"linear K=({lin_r:.3g},{lin_c:.3g}) constant K=({const_r:.3g},{const_c:.3g})")
    assert ok


OMEGA_M_SCAN = (0.5, 1.0, 2.0, 5.0)
PHASE_RUN = dict(t_final=200.0, **TEST_TRUNCATION)


def _classify_points(omega_m: float) -> dict:
    found = {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for expected, (g_ac, g_mc) in POINTS.items():
            series = evolve(SystemParams(g_ac=g_ac, g_mc=g_mc, omega_m=omega_m, **PHASE_RUN))
            found[expected] = analyse(series, ChaosConfig())
    return found


def _labels_line(omega_m: float, found: dict) -> str:
    cells = ", ".join(f"{POINTS[e]}->{m.phase} (R {m.r_value:.2g}, K {m.k_median:.2f})" for e, m in found.items())
    return f"omega_m={omega_m:g}: {cells}"


@pytest.mark.slow
def test_criterion_5_phase_reproduction(acceptance_report):
    parts, recovered = [], None
    for omega_m in (1.0,) + tuple(w for w in OMEGA_M_SCAN if w != 1.0):
        found = _classify_points(omega_m)
        parts.append(_labels_line(omega_m, found))
        if all(m.phase == expected for expected, m in found.items()):
            recovered = omega_m
            break

    axis = np.linspace(0.0, 4.0, 9)
    cells = [(0, j) for j in range(9)] + [(i, 0) for i in range(9)]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        diagram = run_sweep(SystemParams(**PHASE_RUN), axis, axis, cfg=ChaosConfig(), cells=cells)
    edge = {(axis[i], axis[j]): diagram.phase_map[i, j] for i, j in set(cells)}
    odd = {k: v for k, v in edge.items() if v != REGULAR}
    parts.append(f"{len(edge)} edge cells of 9x9 sweep, non-Regular: "
                 + (", ".join(f"({a:g},{b:g})->{v}" for (a, b), v in sorted(odd.items())) or "none"))
    parts.insert(0, f"labels recovered at omega_m={recovered:g}" if recovered is not None
                 else "labels not recovered anywhere in the omega_m scan (documented reproduction gap)")
    ok = recovered is not None and not odd
    acceptance_report(5, ok, "; ".join(parts))
    assert ok


@pytest.mark.slow
def test_criterion_6_trajectories_vs_master_equation(acceptance_report):
    # no comparison horizon is prescribed; t = 50 keeps the
    # 1000-trajectory ensemble within the runtime budget at test truncation
    params = SystemParams(g_ac=2.0, g_mc=2.5, t_final=50.0, **TEST_TRUNCATION)
    ops = build_operators(params)
    start = time.time()
    qt = qt_ensemble(params, 1000, "100", ops=ops)
    wall = time.time() - start
    me = evolve(params, initial=HybridState(ops.fock_dm(1, 0, 0), params.x0, params.p0), ops=ops)
    assert me.times.shape == qt.times.shape and np.allclose(me.times, qt.times, rtol=0, atol=1e-9)
    sem = qt.sem["n_c"]
    dev = np.abs(qt.n_c - me.n_c)
    # the shared initial sample is exact on both sides
    within = (dev <= 3 * sem) | (dev < 1e-12)
    frac = float(np.mean(within))
    ok = frac >= 0.95 and wall < 1800
    acceptance_report(6, ok, f"{frac:.1%} of {len(dev)} samples within 3 SEM; max dev {dev.max():.3g}; "
                             f"median SEM {np.median(sem[1:]):.3g}; QT {wall:.0f}s")
    assert ok


def _sign_changes(values) -> int:
    s = np.sign(values)
    s = s[s != 0]
    return int(np.count_nonzero(s[1:] != s[:-1]))


@pytest.mark.slow
def test_criterion_7_correlation_functions(acceptance_report):
    parts, ok = [], True
    coherent = coherent_state_correlations(1e-6)
    ok &= coherent.passed
    parts.append(f"coherent max|g-1| {coherent.error:.1e}")

    tau = np.arange(400) * 0.125
    reg = correlation_functions(SystemParams(g_ac=0.5, g_mc=2.0, **TEST_TRUNCATION), 100.0, tau)
    g1_err = abs(reg.g1[0] - 1)
    late = tau > 30
    reg_dev = float(np.max(np.abs(reg.g2[late] - 1)))
    tc = correlation_functions(SystemParams(g_ac=2.0, g_mc=2.5, **TEST_TRUNCATION), 100.0, tau)
    g1_err = max(g1_err, abs(tc.g1[0] - 1))
    window = (tau >= 25) & (tau <= 50)
    crossings = _sign_changes(tc.g2[window] - 1)
    ok &= g1_err < 1e-8 and reg_dev <= 0.02 and crossings >= 4
    parts += [f"|g1(0)-1| {g1_err:.1e}", f"regular max|g2-1| (tau>30) {reg_dev:.2e}",
              f"time-crystal g2-1 sign changes in [25,50]: {crossings}"]
    acceptance_report(7, ok, "; ".join(parts))
    assert ok


def test_criterion_8_determinism_and_parallel_equivalence(acceptance_report, tmp_path):
    params = SystemParams(g_ac=2.0, g_mc=2.0, t_final=5.0, n_m=4, n_c=6)
    for run in ("a", "b"):
        evolve(params).to_csv(tmp_path / f"obs_{run}.csv")
        qt_ensemble(params.with_(t_final=1.0), 16, "100").to_csv(tmp_path / f"qt_{run}.csv")
        correlation_functions(params, 1.0, [0.0, 0.5, 1.0]).to_csv(tmp_path / f"corr_{run}.csv")
        m = analyse(evolve(SystemParams(g_ac=2.0, g_mc=2.5, n_m=3, n_c=5, t_final=220.0, dt=0.01,
                                        record_stride=10)))
        m.to_csv(tmp_path / f"k_{run}.csv")
    identical = all((tmp_path / f"{k}_a.csv").read_bytes() == (tmp_path / f"{k}_b.csv").read_bytes()
                    for k in ("obs", "qt", "corr", "k"))
    base = SystemParams(n_m=2, n_c=4, t_final=220.0, dt=0.01, record_stride=10)
    axes = ([0.0, 1.0, 2.0], [0.0, 2.0, 2.5])
    cfg = ChaosConfig(n_nu=4)
    serial = run_sweep(base, *axes, workers=1, cfg=cfg)
    parallel = run_sweep(base, *axes, workers=3, cfg=cfg)
    same = serial.same_maps(parallel)
    ok = identical and same
    acceptance_report(8, ok, f"CSV reruns bit-identical: {identical}; 3x3 sweep serial == 3 workers: {same}")
    assert ok
