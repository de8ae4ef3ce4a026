"""Derived experiments: thresholds, distances, figure sweeps and the density test."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, optimize, stats

from . import analytic
from .analytic import CORRECT, WRONG
from .errors import ConfigError, DomainError, InsufficientDataError, NoCrossoverError
from .model import (
    AttackConfig,
    EveDetector,
    PERFECT_DETECTOR,
    ProtocolParams,
    ResendMixture,
    Strategy,
)
from .montecarlo import HistogramSpec, QuadratureHistogram, SessionResult, simulate_session

DEFAULT_MU_E_GRID = tuple(0.5 * k for k in range(1, 13))  # 0.5, 1.0, ..., 6.0
DEFAULT_X0_RANGE = (0.0, 3.0)
X0_SCAN_STEP = 0.01
X0_TOL = 1e-4
DISTANCE_TOL_KM = 0.1
DEFAULT_SIGNIFICANCE = 1e-3

SPDA_ATTACK = AttackConfig(Strategy.SPDA)


@dataclass(frozen=True)
class SweepTable:
    """Rows of (independent variable, curve values...).

    Column names carry their unit in brackets, e.g. ``x0[quadrature]`` or
    ``ber_absence_l30km[prob]``.
    """

    variable: str
    unit: str
    curves: tuple[str, ...]
    rows: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        object.__setattr__(self, "curves", tuple(self.curves))
        object.__setattr__(self, "rows", tuple(tuple(float(v) for v in r) for r in self.rows))
        width = 1 + len(self.curves)
        prev = -math.inf
        for row in self.rows:
            if len(row) != width:
                raise DomainError(f"row has {len(row)} values, expected {width}")
            if not row[0] > prev:
                raise DomainError("rows must be strictly increasing in the independent variable")
            prev = row[0]
            for name, value in zip(self.curves, row[1:]):
                if name.endswith("[prob]") and not 0.0 <= value <= 1.0:
                    raise DomainError(f"{name} = {value!r} is not a probability")

    @property
    def columns(self) -> tuple[str, ...]:
        return (f"{self.variable}[{self.unit}]",) + self.curves

    def column(self, name: str) -> np.ndarray:
        idx = self.columns.index(name)
        return np.array([r[idx] for r in self.rows])


@dataclass(frozen=True)
class GofReport:
    statistic: float
    dof: int
    p_value: float
    significance: float

    CONSISTENT = "consistent"
    SUSPECTED = "eavesdropper_suspected"

    def __post_init__(self):
        if self.dof < 1:
            raise DomainError("dof must be >= 1")
        if not 0.0 <= self.p_value <= 1.0:
            raise DomainError(f"p_value out of [0, 1]: {self.p_value!r}")

    @property
    def decision(self) -> str:
        return self.SUSPECTED if self.p_value < self.significance else self.CONSISTENT

    def to_dict(self) -> dict:
        return {
            "statistic": self.statistic,
            "dof": self.dof,
            "p_value": self.p_value,
            "significance": self.significance,
            "decision": self.decision,
        }

    @classmethod
    def from_dict(cls, d: dict) -> GofReport:
        return cls(float(d["statistic"]), int(d["dof"]), float(d["p_value"]), float(d["significance"]))


# --- crossover / distance ------------------------------------------------


def _resolve_mixture(params: ProtocolParams, attack: AttackConfig) -> ResendMixture:
    if attack.strategy is Strategy.NO_ATTACK:
        raise ConfigError("crossover analysis needs an attack strategy (spda or sma)")
    return analytic.attack_mixture(attack.strategy, params.mu_a, attack.detector)


def _check_grid(mu_e_grid: Sequence[float]) -> tuple[float, ...]:
    grid = tuple(float(m) for m in mu_e_grid)
    if not grid:
        raise ConfigError("mu_e grid is empty")
    return grid


def attack_margin(params: ProtocolParams, mix: ResendMixture, mu_e_grid, x0: float) -> float:
    """min over mu_e of the attacked BER minus the inherent BER at ``x0``.

    Negative means Eve hides below the inherent error floor.
    """
    at = replace(params, x0=x0)
    best = min(analytic.ber_presence(mix, mu_e, x0).ber for mu_e in mu_e_grid)
    return best - analytic.ber_absence(at).ber


def _scan(params, mix, grid, x0_range, step):
    lo, hi = x0_range
    if not 0 <= lo < hi:
        raise ConfigError(f"bad x0 range {x0_range!r}")
    n = int(round((hi - lo) / step))
    xs = lo + step * np.arange(n + 1)
    xs[-1] = hi
    margins = np.array([attack_margin(params, mix, grid, float(x)) for x in xs])
    return xs, margins


def crossover_threshold(
    params: ProtocolParams,
    attack: AttackConfig = SPDA_ATTACK,
    mu_e_grid: Sequence[float] = DEFAULT_MU_E_GRID,
    x0_range: tuple[float, float] = DEFAULT_X0_RANGE,
    step: float = X0_SCAN_STEP,
) -> float:
    """Smallest x0* such that Eve's optimised BER is below the inherent BER for all x0 >= x0*.

    ``params.x0`` is ignored. Returns the lower end of ``x0_range`` (0.0 by
    default) when the attack already wins there, and ``math.inf`` when it
    never wins inside the range. Pass a one-element ``mu_e_grid`` for a
    fixed-intensity Eve.
    """
    grid = _check_grid(mu_e_grid)
    mix = _resolve_mixture(params, attack)
    xs, margins = _scan(params, mix, grid, x0_range, step)
    # ties count as detectable
    losing = np.flatnonzero(margins >= 0)
    if losing.size == 0:
        return float(xs[0])
    j = losing[-1]
    if j == xs.size - 1:
        return math.inf
    a, b = float(xs[j]), float(xs[j + 1])
    while b - a > X0_TOL:
        mid = 0.5 * (a + b)
        if attack_margin(params, mix, grid, mid) < 0:
            b = mid
        else:
            a = mid
    return b


def min_inherent_ber(
    params: ProtocolParams,
    attack: AttackConfig = SPDA_ATTACK,
    mu_e_grid: Sequence[float] = DEFAULT_MU_E_GRID,
    x0_range: tuple[float, float] = DEFAULT_X0_RANGE,
) -> tuple[float, float]:
    """(x0*, inherent BER at x0*): the lowest BER Bob can run at while Eve stays visible."""
    x0_star = crossover_threshold(params, attack, mu_e_grid, x0_range)
    if x0_star == x0_range[0]:
        raise NoCrossoverError(
            f"attack is invisible at every threshold (mu_a={params.mu_a}, l={params.distance_km} km)"
        )
    if math.isinf(x0_star):
        raise NoCrossoverError(f"attack never beats the inherent BER for x0 in {x0_range}")
    return x0_star, analytic.ber_absence(replace(params, x0=x0_star)).ber


def is_detectable(
    params: ProtocolParams,
    attack: AttackConfig = SPDA_ATTACK,
    mu_e_grid: Sequence[float] = DEFAULT_MU_E_GRID,
    x0_max: float = DEFAULT_X0_RANGE[1],
    step: float = X0_SCAN_STEP,
) -> bool:
    """True when some scanned x0 in [0, x0_max] keeps the inherent BER strictly below Eve's."""
    grid = _check_grid(mu_e_grid)
    mix = _resolve_mixture(params, attack)
    _, margins = _scan(params, mix, grid, (0.0, x0_max), step)
    return bool(np.any(margins > 0))


def max_distance(
    params: ProtocolParams,
    attack: AttackConfig = SPDA_ATTACK,
    mu_e_grid: Sequence[float] = DEFAULT_MU_E_GRID,
    l_range: tuple[float, float] = (0.0, 100.0),
    x0_max: float = DEFAULT_X0_RANGE[1],
) -> float:
    """Largest fiber length (to 0.1 km) at which a BER-detectable threshold still exists."""
    lo, hi = l_range
    if not 0 <= lo < hi:
        raise ConfigError(f"bad distance range {l_range!r}")

    def ok(l):
        return is_detectable(replace(params, distance_km=l), attack, mu_e_grid, x0_max)

    if not ok(lo):
        return lo
    if ok(hi):
        return hi
    while hi - lo > DISTANCE_TOL_KM:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo


# --- figure data ---------------------------------------------------------


def _fmt(v: float) -> str:
    return f"{v:g}"


@dataclass(frozen=True)
class AbsenceCurve:
    distance_km: float

    def name(self) -> str:
        return f"ber_absence_l{_fmt(self.distance_km)}km[prob]"


@dataclass(frozen=True)
class PresenceCurve:
    mu_e: float
    strategy: Strategy = Strategy.SPDA
    detector: EveDetector = PERFECT_DETECTOR

    def name(self) -> str:
        return f"ber_{Strategy(self.strategy).value}_mue{_fmt(self.mu_e)}[prob]"


def _sorted_grid(grid) -> list[float]:
    values = [float(v) for v in grid]
    if not values:
        raise ConfigError("grid is empty")
    if any(b <= a for a, b in zip(values, values[1:])):
        raise ConfigError("grid must be strictly increasing")
    return values


def sweep_threshold(params: ProtocolParams, curves: Sequence, x0_grid) -> SweepTable:
    """BER versus Bob's threshold for each curve (one table per call)."""
    xs = _sorted_grid(x0_grid)
    if not curves:
        raise ConfigError("no curves requested")
    mixes = {}
    for c in curves:
        if isinstance(c, PresenceCurve) and c not in mixes:
            mixes[c] = analytic.attack_mixture(c.strategy, params.mu_a, c.detector)

    def cell(c, x0):
        if isinstance(c, AbsenceCurve):
            return analytic.ber_absence(replace(params, distance_km=c.distance_km, x0=x0)).ber
        return analytic.ber_presence(mixes[c], c.mu_e, x0).ber

    rows = [(x0, *(cell(c, x0) for c in curves)) for x0 in xs]
    return SweepTable("x0", "quadrature", tuple(c.name() for c in curves), tuple(rows))


DENSITY_COLUMNS = (
    "absence_correct[density]",
    "absence_wrong[density]",
    "presence_correct[density]",
    "presence_wrong[density]",
)


def density_curves(params: ProtocolParams, attack: AttackConfig, x_grid) -> SweepTable:
    """Bob's outcome densities with and without Eve, Alice sending |alpha>."""
    xs = _sorted_grid(x_grid)
    mix = _resolve_mixture(params, attack)
    rows = []
    for x in xs:
        rows.append(
            (
                x,
                analytic.outcome_density(params, CORRECT, x),
                analytic.outcome_density(params, WRONG, x),
                analytic.outcome_density(mix, CORRECT, x, attack.mu_e),
                analytic.outcome_density(mix, WRONG, x, attack.mu_e),
            )
        )
    return SweepTable("x", "quadrature", DENSITY_COLUMNS, tuple(rows))


COMPARE_COLUMNS = ("ber_spda[prob]", "ber_sma[prob]")


def compare_attacks(mu_a: float, mu_e: float, x0_grid) -> SweepTable:
    """Attacked BER for SPDA and SMA with perfect detectors."""
    xs = _sorted_grid(x0_grid)
    spda = analytic.spda_mixture(mu_a, PERFECT_DETECTOR)
    sma = analytic.sma_mixture(mu_a)
    rows = [
        (x0, analytic.ber_presence(spda, mu_e, x0).ber, analytic.ber_presence(sma, mu_e, x0).ber)
        for x0 in xs
    ]
    return SweepTable("x0", "quadrature", COMPARE_COLUMNS, tuple(rows))


def attack_crossing(mu_a: float, mu_e: float, bracket: tuple[float, float] = (0.0, 3.0)) -> float:
    """Threshold where the SPDA and SMA BER curves cross."""
    spda = analytic.spda_mixture(mu_a, PERFECT_DETECTOR)
    sma = analytic.sma_mixture(mu_a)

    def diff(x0):
        return analytic.ber_presence(spda, mu_e, x0).ber - analytic.ber_presence(sma, mu_e, x0).ber

    a, b = bracket
    if diff(a) * diff(b) > 0:
        raise NoCrossoverError(f"SPDA and SMA curves do not cross inside {bracket}")
    return optimize.brentq(diff, a, b, xtol=1e-12)


# --- goodness of fit ----------------------------------------------------

MIN_GOF_SAMPLES = 1000
MIN_EXPECTED_COUNT = 5.0


def bin_masses(density: Callable[[float], float], edges: np.ndarray) -> np.ndarray:
    return np.array(
        [integrate.quad(density, a, b, epsabs=1e-13, epsrel=1e-10)[0] for a, b in zip(edges[:-1], edges[1:])]
    )


def _merge_bins(observed: np.ndarray, expected: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    obs, exp = [], []
    acc_o = acc_e = 0.0
    for o, e in zip(observed, expected):
        acc_o += o
        acc_e += e
        if acc_e >= MIN_EXPECTED_COUNT:
            obs.append(acc_o)
            exp.append(acc_e)
            acc_o = acc_e = 0.0
    if acc_e > 0 or acc_o > 0:
        if exp:
            obs[-1] += acc_o
            exp[-1] += acc_e
        else:
            obs.append(acc_o)
            exp.append(acc_e)
    return np.array(obs), np.array(exp)


def gof_test(
    hist: QuadratureHistogram,
    expected: Callable[[float], float],
    significance: float = DEFAULT_SIGNIFICANCE,
) -> GofReport:
    """Pearson chi-square of a histogram against a model density.

    Expected bin masses are renormalised to the histogram's range, and
    adjacent bins are merged left to right until each expects >= 5 counts.
    """
    if not 0.0 < significance < 1.0:
        raise ConfigError(f"significance must lie in (0, 1), got {significance!r}")
    total = hist.total
    if total < MIN_GOF_SAMPLES:
        raise InsufficientDataError(f"need at least {MIN_GOF_SAMPLES} samples, histogram has {total}")
    masses = bin_masses(expected, hist.bin_edges)
    inside = masses.sum()
    if not inside > 0:
        raise InsufficientDataError("model density has no mass inside the histogram range")
    obs, exp = _merge_bins(hist.counts.astype(float), total * masses / inside)
    if obs.size < 2:
        raise InsufficientDataError("fewer than two bins left after merging")
    chi2 = float(np.sum((obs - exp) ** 2 / exp))
    dof = int(obs.size - 1)
    p = float(stats.chi2.sf(chi2, dof))
    return GofReport(chi2, dof, p, significance)


def detect(
    params: ProtocolParams,
    attack: AttackConfig,
    n_pulses: int,
    seed: int = 0,
    basis: str = CORRECT,
    significance: float = DEFAULT_SIGNIFICANCE,
    histogram_spec: HistogramSpec = HistogramSpec(),
    workers: int = 1,
) -> tuple[GofReport, SessionResult]:
    """Simulate a session and test Bob's ``basis`` histogram against the no-Eve density."""
    result = simulate_session(params, attack, n_pulses, seed, histogram_spec, workers)
    report = gof_test(
        result.histograms[basis],
        lambda x: analytic.absence_density(params, basis, x),
        significance,
    )
    return report, result
