import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from aomsim.chaostest import (
    CHAOTIC, REGULAR, TIME_CRYSTAL, ChaosConfig, DegenerateSeriesWarning, analyse, classify_phase,
    corrected_msd, draw_nus, k_correlation, k_regression, mean_square_displacement, phi_series,
    regular_test, translation_components, zero_one_test,
)
from aomsim.dynamics import ObservableSeries
from aomsim.io import read_csv
from aomsim.oracles import logistic_series


def make_series(t, n_c, x=None, p=None):
    zeros = np.zeros_like(t)
    return ObservableSeries(
        times=t, n_m=zeros, n_c=n_c, n_a=zeros, x_m=zeros, p_m=zeros, corr=zeros,
        x=zeros if x is None else x, p=zeros if p is None else p,
        truncation_flags=np.zeros(len(t), dtype=bool),
    )


def test_zero_signal():
    x, p, th = translation_components(np.zeros(50), 1.0)
    assert np.array_equal(x, np.zeros(51)) and np.array_equal(p, np.zeros(51))
    # the angle still advances by nu per step
    assert th == pytest.approx(np.arange(51.0))


def test_hand_iteration():
    x, p, th = translation_components([1.0, 1.0], math.pi / 2)
    assert p == pytest.approx([0.0, 1.0, 1.0 - math.sin(1.0)])
    assert p[2] == pytest.approx(0.158529, abs=1e-6)
    assert x == pytest.approx([0.0, 0.0, math.cos(1.0)])
    assert x[2] == pytest.approx(0.540302, abs=1e-6)
    assert th == pytest.approx([0.0, math.pi / 2 + 1, math.pi + 2])


def test_classic_variant_angles():
    _, _, th = translation_components(np.ones(5), 0.7, variant="classic")
    assert th == pytest.approx(0.7 * np.arange(6))


def test_non_finite_signal_rejected():
    with pytest.raises(ValueError):
        translation_components([1.0, np.inf], 1.0)


def test_msd_examples():
    assert np.array_equal(mean_square_displacement(np.full(40, 2.0), np.full(40, -1.0), 5), np.zeros(5))
    j = np.arange(100, dtype=float)
    assert mean_square_displacement(np.zeros(100), j, 9) == pytest.approx(np.arange(1, 10) ** 2)
    with pytest.raises(ValueError):
        mean_square_displacement(j, j, 100)


def test_bounded_noise_msd_plateaus():
    rng = np.random.default_rng(0)
    xs, ps = rng.normal(size=20_000), rng.normal(size=20_000)
    m = mean_square_displacement(xs, ps, 2000)
    assert abs(k_regression(m)) < 0.05


@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 60))
def test_msd_non_negative(seed, n):
    rng = np.random.default_rng(seed)
    x, p, _ = translation_components(rng.normal(size=200), 1.1)
    assert np.all(mean_square_displacement(x, p, n) >= 0)


def test_corrected_msd_examples():
    m = np.linspace(1, 2, 10)
    assert np.array_equal(corrected_msd(m, np.array([1.0, -1.0]), 1.0), m)
    with pytest.raises(ValueError):
        corrected_msd(m, np.ones(3), 1e-8)


def test_constant_signal_correction_cancels_oscillation():
    c = 0.8
    phi = np.full(2000, c)
    x, p, _ = translation_components(phi, 1.3, variant="classic")
    m = mean_square_displacement(x, p, 200)
    d = corrected_msd(m, phi, 1.3)
    assert np.max(np.abs(d)) < 1e-9 * np.max(m)


def test_regression_examples():
    n = np.arange(1, 101, dtype=float)
    assert k_regression(n) == pytest.approx(1.0)
    assert k_regression(np.full(100, 7.0)) == pytest.approx(0.0, abs=1e-12)
    with pytest.warns(DegenerateSeriesWarning):
        k_regression(np.zeros(100))
    with pytest.raises(ValueError):
        k_regression(n, (0, 50))


def test_correlation_examples():
    n = np.arange(1, 101, dtype=float)
    assert k_correlation(3 * n) == pytest.approx(1.0)
    with pytest.warns(DegenerateSeriesWarning):
        assert k_correlation(np.full(100, 4.2)) == 0.0


@given(seed=st.integers(0, 2**32 - 1), scale=st.floats(1e-3, 1e3), shift=st.floats(-1e3, 1e3))
def test_correlation_bounded_and_affine_invariant(seed, scale, shift):
    d = np.random.default_rng(seed).normal(size=50)
    k = k_correlation(d)
    assert -1.0 <= k <= 1.0
    assert k_correlation(scale * d + shift) == pytest.approx(k, abs=1e-9)


@pytest.mark.parametrize("r,expect", [(3.97, 1.0), (3.55, 0.0)])
def test_logistic_map_oracle(r, expect):
    phi = logistic_series(r)
    res = [zero_one_test(phi, float(nu)) for nu in draw_nus(16, seed=1)]
    for key in ("k_correlation", "k_regression"):
        assert abs(np.median([getattr(q, key) for q in res]) - expect) <= 0.1


def test_zero_one_preconditions():
    with pytest.raises(ValueError):
        zero_one_test(np.ones(99), 1.0)
    with pytest.raises(ValueError):
        zero_one_test(np.ones(200), 3.2)


def test_draw_nus_range_and_determinism():
    nus = draw_nus(1000, 3)
    assert np.all((nus > math.pi / 5) & (nus < 4 * math.pi / 5))
    assert np.array_equal(nus, draw_nus(1000, 3))


def test_regular_test_examples():
    t = np.linspace(0, 40, 401)
    r, ok = regular_test(make_series(t, np.full_like(t, 3.0)))
    assert r == 0.0 and ok
    t = np.linspace(0, 4 * 2 * math.pi, 4001)
    r, ok = regular_test(make_series(t, 2 + 0.5 * np.sin(t)))
    assert r == pytest.approx(1.0, abs=1e-6) and not ok
    assert regular_test(make_series(t, 2 + 0.5 * np.sin(t)), epsilon=1.5)[1]


def test_phi_series_transient_and_stride():
    t = np.arange(0, 100.01, 0.1)
    s = make_series(t, np.ones_like(t), x=t, p=np.ones_like(t))
    phi = phi_series(s, ChaosConfig())
    assert 50.0 <= phi[0] - 1.0 <= 50.0 + 0.1 + 1e-9
    assert np.diff(phi) == pytest.approx(np.ones(len(phi) - 1))


def _synthetic(kind, t):
    if kind == "regular":
        return make_series(t, np.full_like(t, 2.0), x=np.full_like(t, -1.0), p=np.zeros_like(t))
    osc = np.sin(1.3 * t)
    if kind == "periodic":
        return make_series(t, 2 + osc, x=osc, p=np.cos(1.3 * t))
    return make_series(t, 2 + osc, x=logistic_series(3.97, len(t)), p=np.zeros_like(t))


@pytest.mark.parametrize("kind,label", [("regular", REGULAR), ("periodic", TIME_CRYSTAL), ("chaotic", CHAOTIC)])
def test_classifier_on_synthetic_series(kind, label):
    t = np.arange(0, 4000.0, 1.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateSeriesWarning)
        assert classify_phase(_synthetic(kind, t)) == label


def test_metrics_csv(tmp_path):
    t = np.arange(0, 4000.0, 1.0)
    m = analyse(_synthetic("chaotic", t))
    path = m.to_csv(tmp_path / "k.csv", {"seed": 0})
    _, cols = read_csv(path)
    assert list(cols) == ["nu", "k_regression", "k_correlation"]
    assert len(cols["nu"]) == 16
    _, summ = read_csv(m.write_summary(tmp_path / "s.csv"), types={"phase": str})
    assert list(summ) == ["r_value", "k_median", "phase"]
    assert summ["phase"][0] == CHAOTIC
