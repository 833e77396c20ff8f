"""0-1 test for chaos and the regular-phase amplitude test.

The translation components follow the variant in which the rotation angle
accumulates the signal itself, theta(n+1) = nu + theta(n) + phi(n); the
textbook variant with theta(n) = n nu is available as ``variant="classic"``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .io import write_csv

REGULAR = "Regular"
TIME_CRYSTAL = "TimeCrystal"
CHAOTIC = "Chaotic"
PHASES = (REGULAR, TIME_CRYSTAL, CHAOTIC)
PHASE_NUMERALS = {REGULAR: "I", TIME_CRYSTAL: "II", CHAOTIC: "III"}

NU_LOW, NU_HIGH = math.pi / 5, 4 * math.pi / 5


class DegenerateSeriesWarning(RuntimeWarning):
    """An estimator hit a degenerate input (zero variance, non-positive MSD)."""


def translation_components(phi, nu: float, variant: str = "cumulative"):
    """Return (x_ac, p_ac, theta_c), each of length len(phi) + 1, starting at 0."""
    phi = np.asarray(phi, dtype=float)
    if phi.ndim != 1:
        raise ValueError("phi must be one-dimensional")
    if not np.all(np.isfinite(phi)):
        raise ValueError("phi contains non-finite values")
    n = len(phi)
    if variant == "cumulative":
        # theta_c(n) before its update enters step n
        theta = np.empty(n + 1)
        theta[0] = 0.0
        theta[1:] = np.cumsum(nu + phi)
    elif variant == "classic":
        theta = nu * np.arange(n + 1, dtype=float)
    else:
        raise ValueError(f"unknown variant {variant!r}")
    p_ac = np.zeros(n + 1)
    x_ac = np.zeros(n + 1)
    p_ac[1:] = np.cumsum(phi * np.cos(theta[:-1]))
    x_ac[1:] = np.cumsum(phi * np.sin(theta[:-1]))
    return x_ac, p_ac, theta


def mean_square_displacement(x_ac, p_ac, n_max: int) -> np.ndarray:
    """m_c(n) for n = 1..n_max, averaged over the len - n available offsets."""
    x_ac = np.asarray(x_ac, dtype=float)
    p_ac = np.asarray(p_ac, dtype=float)
    length = len(x_ac)
    if len(p_ac) != length:
        raise ValueError("x_ac and p_ac differ in length")
    if n_max < 1 or n_max >= length:
        raise ValueError(f"n_max must be in [1, {length - 1}], got {n_max}")
    m = np.empty(n_max)
    for n in range(1, n_max + 1):
        dp = p_ac[n:] - p_ac[:-n]
        dx = x_ac[n:] - x_ac[:-n]
        m[n - 1] = np.mean(dp * dp + dx * dx)
    return m


def oscillation_term(e_phi: float, nu: float, n_max: int) -> np.ndarray:
    denom = 1.0 - math.cos(nu)
    if denom < 1e-12:
        raise ValueError(f"nu={nu!r} too close to 0: oscillation correction is singular")
    n = np.arange(1, n_max + 1)
    return e_phi * e_phi * (1.0 - np.cos(n * nu)) / denom


def corrected_msd(m_c, phi, nu: float) -> np.ndarray:
    """d_c(n) = m_c(n) - E_phi^2 (1 - cos n nu) / (1 - cos nu)."""
    m_c = np.asarray(m_c, dtype=float)
    e_phi = float(np.mean(phi))
    return m_c - oscillation_term(e_phi, nu, len(m_c))


def default_fit_range(n_cut: int) -> tuple[int, int]:
    return max(2, n_cut // 10), n_cut


def k_regression(m_c, fit_range: tuple[int, int] | None = None) -> float:
    """Least-squares slope of log m_c(n) against log n over n in fit_range (inclusive)."""
    m_c = np.asarray(m_c, dtype=float)
    lo, hi = fit_range if fit_range is not None else default_fit_range(len(m_c))
    if not (1 <= lo < hi <= len(m_c)):
        raise ValueError(f"fit_range ({lo}, {hi}) outside [1, {len(m_c)}]")
    n = np.arange(lo, hi + 1, dtype=float)
    vals = m_c[lo - 1:hi]
    if np.any(vals <= 0):
        warnings.warn("non-positive mean square displacement in fit range; floored at 1e-300",
                      DegenerateSeriesWarning, stacklevel=2)
        vals = np.maximum(vals, 1e-300)
    slope, _ = np.polyfit(np.log(n), np.log(vals), 1)
    return float(slope)


def k_correlation(d_c, n_cut: int | None = None) -> float:
    """Correlation coefficient between n = 1..n_cut and d_c(1..n_cut)."""
    d_c = np.asarray(d_c, dtype=float)
    n_cut = len(d_c) if n_cut is None else n_cut
    if not 2 <= n_cut <= len(d_c):
        raise ValueError(f"n_cut must be in [2, {len(d_c)}], got {n_cut}")
    xi = np.arange(1, n_cut + 1, dtype=float)
    delta = d_c[:n_cut]
    dxi = xi - xi.mean()
    dd = delta - delta.mean()
    var_d = float(np.mean(dd * dd))
    # relative floor so that round-off in a constant series still counts as constant
    if var_d <= (1e-14 * max(1.0, float(np.max(np.abs(delta))))) ** 2:
        warnings.warn("zero-variance d_c; correlation set to 0", DegenerateSeriesWarning, stacklevel=2)
        return 0.0
    cov = float(np.mean(dxi * dd))
    k = cov / math.sqrt(float(np.mean(dxi * dxi)) * var_d)
    return float(min(1.0, max(-1.0, k)))


@dataclass
class ZeroOneResult:
    """Per-angle output of the 0-1 test."""

    nu: float
    x_ac: np.ndarray = field(repr=False)
    p_ac: np.ndarray = field(repr=False)
    theta_c: np.ndarray = field(repr=False)
    m_c: np.ndarray = field(repr=False)
    d_c: np.ndarray = field(repr=False)
    k_regression: float
    k_correlation: float


def zero_one_test(phi, nu: float, n_cut: int | None = None, variant: str = "cumulative",
                  fit_range: tuple[int, int] | None = None) -> ZeroOneResult:
    """Run the full chain for one angle; n_cut defaults to len(phi) // 10."""
    phi = np.asarray(phi, dtype=float)
    if len(phi) < 100:
        raise ValueError(f"0-1 test needs at least 100 samples, got {len(phi)}")
    if not 0 < nu < math.pi:
        raise ValueError(f"nu must lie in (0, pi), got {nu!r}")
    n_cut = len(phi) // 10 if n_cut is None else n_cut
    x_ac, p_ac, theta = translation_components(phi, nu, variant)
    m_c = mean_square_displacement(x_ac, p_ac, n_cut)
    d_c = corrected_msd(m_c, phi, nu)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateSeriesWarning)
        kr = k_regression(m_c, fit_range)
        kc = k_correlation(d_c)
    return ZeroOneResult(nu, x_ac, p_ac, theta, m_c, d_c, kr, kc)


def draw_nus(n: int, seed: int) -> np.ndarray:
    """``n`` angles drawn uniformly from (pi/5, 4pi/5)."""
    rng = np.random.default_rng(seed)
    return rng.uniform(NU_LOW, NU_HIGH, size=n)


def regular_test(series, window_fraction: float = 0.25, epsilon: float | None = None,
                 observable: str = "n_c") -> tuple[float, bool]:
    """R = max - min of the chosen mean excitation over the final window.

    Default epsilon is 1e-3 * max(1, mean) of the windowed values.
    """
    values = np.asarray(series.tail(window_fraction).column(observable), dtype=float)
    r = float(values.max() - values.min())
    if epsilon is None:
        epsilon = 1e-3 * max(1.0, float(np.mean(values)))
    return r, bool(r < epsilon)


@dataclass(frozen=True)
class ChaosConfig:
    """Knobs of the phase classifier (all times in 1/gamma_a)."""

    transient_fraction: float = 0.5
    phi_stride: float = 1.0
    n_nu: int = 16
    nu: float | None = None
    variant: str = "cumulative"
    k_threshold: float = 0.5
    window_fraction: float = 0.25
    epsilon: float | None = None
    observable: str = "n_c"
    seed: int = 0


@dataclass
class ChaosMetrics:
    """Summary of the regular test and the 0-1 test over all angles."""

    r_value: float
    regular: bool
    per_nu: list
    k_median: float
    k_regression_median: float
    phase: str
    phi: np.ndarray = field(repr=False)

    @property
    def nus(self) -> np.ndarray:
        return np.array([r.nu for r in self.per_nu])

    def to_csv(self, path, config: dict | None = None):
        cols = {
            "nu": [r.nu for r in self.per_nu],
            "k_regression": [r.k_regression for r in self.per_nu],
            "k_correlation": [r.k_correlation for r in self.per_nu],
        }
        return write_csv(path, cols, config)

    def summary(self) -> dict:
        return {"r_value": self.r_value, "k_median": self.k_median,
                "k_regression_median": self.k_regression_median, "phase": self.phase}

    def write_summary(self, path, config: dict | None = None):
        s = self.summary()
        return write_csv(path, {k: [v] for k, v in s.items() if k != "k_regression_median"}, config)


def phi_series(series, cfg: ChaosConfig) -> np.ndarray:
    """phi(n) = x(n) + p(n) after the transient, resampled at cfg.phi_stride."""
    post = series.tail(1.0 - cfg.transient_fraction) if cfg.transient_fraction > 0 else series
    times = np.asarray(post.times)
    spacing = float(times[1] - times[0]) if len(times) > 1 else cfg.phi_stride
    step = max(1, int(round(cfg.phi_stride / spacing)))
    return (np.asarray(post.x) + np.asarray(post.p))[::step]


def analyse(series, cfg: ChaosConfig | None = None) -> ChaosMetrics:
    cfg = cfg or ChaosConfig()
    r_value, regular = regular_test(series, cfg.window_fraction, cfg.epsilon, cfg.observable)
    phi = phi_series(series, cfg)
    nus = np.array([cfg.nu]) if cfg.nu is not None else draw_nus(cfg.n_nu, cfg.seed)
    per_nu = [zero_one_test(phi, float(nu), variant=cfg.variant) for nu in nus]
    k_med = float(np.median([r.k_correlation for r in per_nu]))
    kr_med = float(np.median([r.k_regression for r in per_nu]))
    if regular:
        phase = REGULAR
    elif k_med > cfg.k_threshold:
        phase = CHAOTIC
    else:
        phase = TIME_CRYSTAL
    return ChaosMetrics(r_value, regular, per_nu, k_med, kr_med, phase, phi)


def classify_phase(series, cfg: ChaosConfig | None = None) -> str:
    """Regular if the amplitude test passes, else Chaotic if median K > threshold."""
    return analyse(series, cfg).phase
