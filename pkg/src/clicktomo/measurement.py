"""Measurement settings, exact no-click probabilities and click sampling.

A *setting* is one beam-splitter configuration: the signal state meets a
coherent probe ``beta`` on a splitter rotated by ``alpha``; two on/off
detectors with efficiencies ``nu_c`` (transmitted port) and ``nu_d``
(reflected port) watch the outputs.  Averaging the probe out leaves a
three-parameter description of the joint no-click probability:

    nu_bar = nu_c cos^2(alpha) + nu_d sin^2(alpha)
    gamma  = beta (nu_d - nu_c) cos(alpha) sin(alpha) / nu_bar
    y      = -|beta|^2 nu_c nu_d / nu_bar
    p      = e^y sum_n (1 - nu_bar)^n R_n(gamma)

The attenuation exponent carries no angular factor: with it, the probe-only
probability factorises exactly into the per-detector coherent no-click
factors exp(-nu_c |beta sin a|^2 - nu_d |beta cos a|^2), and it vanishes when
either detector is blind.  Both identities are pinned by tests.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fock import DensityMatrix, TruncationConfig, displaced_diagonal_padded

__all__ = [
    "DetectorPair",
    "Setting",
    "SettingSchedule",
    "ClickRecord",
    "SingleDetectorRecipe",
    "DualDetectorRecipe",
    "derive_setting",
    "single_detector_schedule",
    "dual_detector_schedule",
    "homogeneous_efficiencies",
    "no_click_probability",
    "schedule_probabilities",
    "sample_clicks",
    "simulate_schedule",
]

GAMMA_MATCH_TOL = 1e-12


@dataclass(frozen=True)
class DetectorPair:
    """Efficiencies of the two on/off detectors; either may be zero."""

    nu_c: float
    nu_d: float

    def __post_init__(self) -> None:
        for name, nu in (("nu_c", self.nu_c), ("nu_d", self.nu_d)):
            if not 0.0 <= nu <= 1.0:
                raise ValueError(f"{name} = {nu} outside [0, 1]")


@dataclass(frozen=True)
class Setting:
    """One measurement configuration with its derived parameters.

    Instances come out of :func:`derive_setting` only, so the derived fields
    (nu_bar, gamma, y) always reproduce bit-for-bit when recomputed from
    (alpha, beta, detectors).
    """

    alpha: float
    beta: complex
    detectors: DetectorPair
    nu_bar: float
    gamma: complex
    y: float


def derive_setting(alpha: float, beta: complex, detectors: DetectorPair) -> Setting:
    """Populate a Setting from the physical knobs (single derivation path)."""
    a = float(alpha)
    b = complex(beta)
    c, s = math.cos(a), math.sin(a)
    nu_bar = detectors.nu_c * c * c + detectors.nu_d * s * s
    if nu_bar <= 0.0:
        raise ValueError(
            "nu_bar vanishes: no detector sees the signal "
            f"(alpha={a}, nu_c={detectors.nu_c}, nu_d={detectors.nu_d})"
        )
    gamma = b * (detectors.nu_d - detectors.nu_c) * c * s / nu_bar
    y = -abs(b) ** 2 * detectors.nu_c * detectors.nu_d / nu_bar
    return Setting(alpha=a, beta=b, detectors=detectors, nu_bar=nu_bar, gamma=gamma, y=y)


@dataclass(frozen=True)
class SingleDetectorRecipe:
    """Blind second detector: gamma = -beta tan(alpha), no attenuation.

    The effective displacement does not depend on the efficiency, so one
    sweeps ``efficiencies`` at fixed geometry to collect a schedule.
    """

    alpha: float
    efficiencies: tuple[float, ...]

    def build(self, target_gamma: complex) -> "SettingSchedule":
        return single_detector_schedule(target_gamma, self.alpha, self.efficiencies)


@dataclass(frozen=True)
class DualDetectorRecipe:
    """Two live detectors: the probe amplitude is retuned per angle."""

    detectors: DetectorPair
    angles: tuple[float, ...]

    def build(self, target_gamma: complex) -> "SettingSchedule":
        return dual_detector_schedule(target_gamma, self.detectors, self.angles)


@dataclass(frozen=True)
class SettingSchedule:
    """Settings sharing one effective displacement ``target_gamma``."""

    target_gamma: complex
    settings: tuple[Setting, ...]
    recipe: SingleDetectorRecipe | DualDetectorRecipe | None = None

    def __post_init__(self) -> None:
        if not self.settings:
            raise ValueError("schedule must contain at least one setting")
        worst = max(abs(s.gamma - self.target_gamma) for s in self.settings)
        if worst > GAMMA_MATCH_TOL:
            raise ValueError(
                f"derived gamma strays {worst:.3e} from target {self.target_gamma}"
            )

    def __len__(self) -> int:
        return len(self.settings)


def homogeneous_efficiencies(count: int, lo: float = 0.1, hi: float = 0.9) -> tuple[float, ...]:
    """Evenly spaced detector efficiencies on [lo, hi]."""
    if count < 2:
        raise ValueError("need at least two efficiencies")
    return tuple(float(v) for v in np.linspace(lo, hi, count))


def single_detector_schedule(
    target_gamma: complex, alpha: float, efficiencies: "tuple[float, ...] | list[float]"
) -> SettingSchedule:
    """Schedule for the one-detector mode: fixed alpha and probe, swept nu_c."""
    a = float(alpha)
    if abs(math.sin(a)) < 1e-12 or abs(math.cos(a)) < 1e-12:
        raise ValueError(f"alpha = {a} is degenerate (multiple of pi/2)")
    effs = tuple(float(v) for v in efficiencies)
    if not effs:
        raise ValueError("efficiencies must be non-empty")
    for nu in effs:
        if not 0.0 < nu <= 1.0:
            raise ValueError(f"efficiency {nu} outside (0, 1]")
    beta = -complex(target_gamma) / math.tan(a)
    settings = tuple(derive_setting(a, beta, DetectorPair(nu, 0.0)) for nu in effs)
    return SettingSchedule(
        target_gamma=complex(target_gamma),
        settings=settings,
        recipe=SingleDetectorRecipe(alpha=a, efficiencies=effs),
    )


def dual_detector_schedule(
    target_gamma: complex, detectors: DetectorPair, angles: "tuple[float, ...] | list[float]"
) -> SettingSchedule:
    """Schedule for the two-detector mode: fixed efficiencies, swept angle.

    Per angle the probe amplitude
    beta_j = 2 gamma nu_bar_j / ((nu_d - nu_c) sin(2 alpha_j)) inverts the
    setting derivation, so every setting lands on the same gamma.
    """
    if detectors.nu_c == detectors.nu_d:
        raise ValueError("dual-detector mode needs nu_c != nu_d")
    angs = tuple(float(v) for v in angles)
    if not angs:
        raise ValueError("angles must be non-empty")
    settings = []
    g = complex(target_gamma)
    for a in angs:
        s2 = math.sin(2.0 * a)
        if abs(s2) < 1e-12:
            raise ValueError(f"angle {a} is degenerate (sin(2 alpha) = 0)")
        nu_bar = detectors.nu_c * math.cos(a) ** 2 + detectors.nu_d * math.sin(a) ** 2
        beta = 2.0 * g * nu_bar / ((detectors.nu_d - detectors.nu_c) * s2)
        settings.append(derive_setting(a, beta, detectors))
    return SettingSchedule(
        target_gamma=g,
        settings=tuple(settings),
        recipe=DualDetectorRecipe(detectors=detectors, angles=angs),
    )


def no_click_probability(rho: DensityMatrix, setting: Setting, cfg: TruncationConfig) -> float:
    """Exact joint no-click probability of one setting.

    The geometric series runs over the full working dimension, so the value
    is exact to padding accuracy rather than reconstruction accuracy.
    """
    diag = displaced_diagonal_padded(rho, setting.gamma, cfg)
    x = 1.0 - setting.nu_bar
    powers = x ** np.arange(cfg.n_pad, dtype=np.float64)
    p = math.exp(setting.y) * float(np.dot(powers, diag))
    return min(max(p, 0.0), 1.0)


def schedule_probabilities(
    rho: DensityMatrix, schedule: SettingSchedule, cfg: TruncationConfig
) -> np.ndarray:
    """Vector of no-click probabilities for a whole schedule.

    All settings share one gamma, so the displaced diagonal is computed once.
    """
    diag = displaced_diagonal_padded(rho, schedule.target_gamma, cfg)
    n = np.arange(cfg.n_pad, dtype=np.float64)
    x = np.array([1.0 - s.nu_bar for s in schedule.settings])
    ey = np.exp(np.array([s.y for s in schedule.settings]))
    p = ey * ((x[:, None] ** n[None, :]) @ diag)
    return np.clip(p, 0.0, 1.0)


@dataclass(frozen=True)
class ClickRecord:
    """Trial count and no-click count of one setting.

    ``n_noclick`` is an integer for sampled data; exact-probability records
    store the expected count ``p * n_runs`` instead, so the frequency stays
    the exact probability.
    """

    setting: Setting
    n_runs: int
    n_noclick: float

    def __post_init__(self) -> None:
        if self.n_runs < 1:
            raise ValueError("n_runs must be positive")
        if not 0.0 <= self.n_noclick <= self.n_runs:
            raise ValueError("n_noclick outside [0, n_runs]")

    @property
    def freq(self) -> float:
        return self.n_noclick / self.n_runs


def _rng_key(seed: "int | tuple[int, ...]", stream_id: int) -> tuple[int, ...]:
    base = (int(seed),) if np.isscalar(seed) else tuple(int(v) for v in seed)
    return base + (int(stream_id),)


def sample_clicks(
    setting: Setting,
    p: float,
    n_runs: int,
    seed: "int | tuple[int, ...]",
    stream_id: int,
) -> ClickRecord:
    """Draw a binomial no-click count from a deterministic keyed stream.

    Identical (seed, stream_id) always reproduce the same record; distinct
    stream ids are statistically independent, which lets grid scans hand out
    ``stream_id = point_index * M + j`` without any shared state.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"probability {p} outside [0, 1]")
    rng = np.random.default_rng(_rng_key(seed, stream_id))
    n_noclick = int(rng.binomial(int(n_runs), p))
    return ClickRecord(setting=setting, n_runs=int(n_runs), n_noclick=n_noclick)


def simulate_schedule(
    rho: DensityMatrix,
    schedule: SettingSchedule,
    cfg: TruncationConfig,
    n_runs: int,
    seed: "int | tuple[int, ...]" = 0,
    point_index: int = 0,
    exact: bool = False,
) -> list[ClickRecord]:
    """Measure one schedule: exact probabilities, then (optionally) sampling."""
    probs = schedule_probabilities(rho, schedule, cfg)
    m = len(schedule)
    records = []
    for j, (setting, p) in enumerate(zip(schedule.settings, probs)):
        if exact:
            records.append(ClickRecord(setting=setting, n_runs=int(n_runs), n_noclick=float(p) * n_runs))
        else:
            records.append(sample_clicks(setting, float(p), n_runs, seed, point_index * m + j))
    return records
