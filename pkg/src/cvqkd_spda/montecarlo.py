"""Pulse-by-pulse simulation of Alice -> (Eve) -> Bob.

Everything is vectorised over chunks of pulses. Chunk ``i`` of a session
draws from ``default_rng(SeedSequence([seed, i]))`` and chunk boundaries
depend only on ``n_pulses``, so the result is the same for any number of
workers.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .analytic import CORRECT, WRONG
from .errors import DomainError
from .model import (
    AttackConfig,
    CoherentSignal,
    EveDetector,
    NO_ATTACK,
    ProtocolParams,
    QUADRATURE_SD,
    Strategy,
)

CHUNK_SIZE = 1 << 18

# cos/sin of k*pi/2, exact
_COS = np.array([1.0, 0.0, -1.0, 0.0])
_SIN = np.array([0.0, 1.0, 0.0, -1.0])
VACUUM_INDEX = -1


@dataclass(frozen=True)
class SessionStats:
    n_sent: int = 0
    n_sifted: int = 0
    n_conclusive: int = 0
    n_errors: int = 0

    def __post_init__(self):
        if not 0 <= self.n_errors <= self.n_conclusive <= self.n_sifted <= self.n_sent:
            raise DomainError(f"inconsistent tallies: {self}")

    @property
    def ber_estimate(self) -> float | None:
        """None when nothing was conclusive (the BER is undefined, not 0)."""
        if self.n_conclusive == 0:
            return None
        return self.n_errors / self.n_conclusive

    @property
    def ber_stderr(self) -> float | None:
        p = self.ber_estimate
        if p is None:
            return None
        return math.sqrt(p * (1.0 - p) / self.n_conclusive)

    @property
    def sifting_rate(self) -> float | None:
        return self.n_sifted / self.n_sent if self.n_sent else None

    @property
    def conclusive_rate(self) -> float | None:
        """Conclusive fraction of sifted pulses."""
        return self.n_conclusive / self.n_sifted if self.n_sifted else None

    def __add__(self, other: SessionStats) -> SessionStats:
        return SessionStats(
            self.n_sent + other.n_sent,
            self.n_sifted + other.n_sifted,
            self.n_conclusive + other.n_conclusive,
            self.n_errors + other.n_errors,
        )

    def to_dict(self) -> dict:
        return {
            "n_sent": self.n_sent,
            "n_sifted": self.n_sifted,
            "n_conclusive": self.n_conclusive,
            "n_errors": self.n_errors,
            "ber_estimate": self.ber_estimate,
            "ber_stderr": self.ber_stderr,
        }

    @classmethod
    def from_dict(cls, d: dict) -> SessionStats:
        return cls(int(d["n_sent"]), int(d["n_sifted"]), int(d["n_conclusive"]), int(d["n_errors"]))


@dataclass(frozen=True)
class HistogramSpec:
    half_width: float = 4.0
    n_bins: int = 80

    def __post_init__(self):
        if not self.half_width > 0:
            raise DomainError("histogram half_width must be > 0")
        if self.n_bins < 1:
            raise DomainError("histogram needs at least one bin")

    def edges(self) -> np.ndarray:
        return np.linspace(-self.half_width, self.half_width, self.n_bins + 1)


@dataclass(frozen=True, eq=False)
class QuadratureHistogram:
    """Counts of Bob's outcomes expressed in Alice's frame.

    Outcomes are rotated so that every pulse looks like Alice sent |alpha>:
    the correct-basis histogram is centred on +sqrt(eta*mu_a) without Eve.
    Samples outside the edges are not counted.
    """

    basis: str
    bin_edges: np.ndarray
    counts: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.basis not in (CORRECT, WRONG):
            raise DomainError(f"unknown basis {self.basis!r}")
        edges = np.asarray(self.bin_edges, dtype=float)
        if edges.ndim != 1 or edges.size < 2 or not np.all(np.diff(edges) > 0):
            raise DomainError("bin edges must be strictly increasing")
        counts = np.zeros(edges.size - 1, dtype=np.int64) if self.counts is None else np.asarray(self.counts)
        if counts.shape != (edges.size - 1,) or np.any(counts < 0):
            raise DomainError("counts must be non-negative, one per bin")
        object.__setattr__(self, "bin_edges", edges)
        object.__setattr__(self, "counts", counts.astype(np.int64))

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __add__(self, other: QuadratureHistogram) -> QuadratureHistogram:
        if self.basis != other.basis or not np.array_equal(self.bin_edges, other.bin_edges):
            raise DomainError("cannot add histograms with different basis or bins")
        return QuadratureHistogram(self.basis, self.bin_edges, self.counts + other.counts)

    def __eq__(self, other):
        if not isinstance(other, QuadratureHistogram):
            return NotImplemented
        return (
            self.basis == other.basis
            and np.array_equal(self.bin_edges, other.bin_edges)
            and np.array_equal(self.counts, other.counts)
        )

    @classmethod
    def from_samples(cls, basis: str, samples, spec: HistogramSpec) -> QuadratureHistogram:
        edges = spec.edges()
        counts, _ = np.histogram(np.asarray(samples, dtype=float), bins=edges)
        return cls(basis, edges, counts)


@dataclass(frozen=True)
class SessionResult:
    stats: SessionStats
    histograms: dict[str, QuadratureHistogram] | None = None


# --- batched primitives -------------------------------------------------


def homodyne_batch(intensity, state_index, bob_index, rng: np.random.Generator) -> np.ndarray:
    """Sample x_{bob*pi/2} on |sqrt(I) e^{i state*pi/2}>; ``state_index`` -1 is vacuum."""
    state_index = np.asarray(state_index)
    rel = (np.asarray(bob_index) - state_index) % 4
    mean = np.sqrt(intensity) * _COS[rel]
    mean = np.where(state_index == VACUUM_INDEX, 0.0, mean)
    return rng.normal(mean, QUADRATURE_SD)


def spda_resend_batch(alice_index, mu_a: float, detector: EveDetector, rng: np.random.Generator) -> np.ndarray:
    """Phase index Eve resends for each pulse, or VACUUM_INDEX.

    With perfect interference D1 sees mu_a(1 + cos d) photons and D2 sees
    mu_a(1 - cos d), d being Alice's phase minus Eve's reference phase.
    """
    alice_index = np.asarray(alice_index)
    n = alice_index.shape
    eve_basis = rng.integers(0, 2, size=n)
    c = _COS[(alice_index - eve_basis) % 4]
    p1 = detector.y0 - (1.0 - detector.y0) * np.expm1(-detector.epsilon * mu_a * (1.0 + c))
    p2 = detector.y0 - (1.0 - detector.y0) * np.expm1(-detector.epsilon * mu_a * (1.0 - c))
    d1 = rng.random(n) < p1
    d2 = rng.random(n) < p2
    out = np.full(n, VACUUM_INDEX, dtype=np.int64)
    out = np.where(d1 & ~d2, eve_basis, out)
    out = np.where(d2 & ~d1, eve_basis + 2, out)
    return out


def sma_resend_batch(alice_index, mu_a: float, rng: np.random.Generator) -> np.ndarray:
    """Phase index Eve resends after measuring both quadratures of split halves."""
    alice_index = np.asarray(alice_index)
    amp = math.sqrt(mu_a / 2.0)
    x1 = rng.normal(amp * _COS[alice_index], QUADRATURE_SD)
    x2 = rng.normal(amp * _SIN[alice_index], QUADRATURE_SD)
    return sma_decide(x1, x2)


def sma_decide(x1, x2) -> np.ndarray:
    x1 = np.asarray(x1)
    x2 = np.asarray(x2)
    a1, a2 = np.abs(x1), np.abs(x2)
    return np.select(
        [x1 >= a2, -x1 >= a2, x2 > a1, -x2 > a1],
        [0, 2, 1, 3],
        default=VACUUM_INDEX,
    ).astype(np.int64)


# --- single-trial API ----------------------------------------------------


def sample_homodyne(signal: CoherentSignal, effective_intensity: float, bob_phase: float, rng) -> float:
    """One homodyne outcome; ``effective_intensity`` already includes all losses."""
    if not effective_intensity >= 0:
        raise DomainError(f"effective_intensity must be >= 0, got {effective_intensity!r}")
    if signal.is_vacuum:
        mean = 0.0
    else:
        mean = math.sqrt(effective_intensity) * math.cos(bob_phase - signal.phase)
    return float(rng.normal(mean, QUADRATURE_SD))


def _resent(index: int, mu_e: float) -> CoherentSignal:
    if index == VACUUM_INDEX or mu_e == 0:
        return CoherentSignal(0.0, 0)
    return CoherentSignal(mu_e, int(index))


def eve_spda_trial(alice: CoherentSignal, detector: EveDetector, mu_e: float, rng) -> CoherentSignal:
    idx = spda_resend_batch(np.array([alice.phase_index]), alice.intensity, detector, rng)[0]
    return _resent(idx, mu_e)


def eve_sma_trial(alice: CoherentSignal, mu_e: float, rng) -> CoherentSignal:
    idx = sma_resend_batch(np.array([alice.phase_index]), alice.intensity, rng)[0]
    return _resent(idx, mu_e)


# --- session -------------------------------------------------------------


def _run_chunk(params, attack, n, seed, chunk, hist_spec):
    rng = np.random.default_rng(np.random.SeedSequence([seed, chunk]))
    alice = rng.integers(0, 4, size=n)
    bob = rng.integers(0, 2, size=n)

    if attack.strategy is Strategy.NO_ATTACK:
        state, intensity = alice, params.received_intensity
    elif attack.strategy is Strategy.SPDA:
        state, intensity = spda_resend_batch(alice, params.mu_a, attack.detector, rng), attack.mu_e
    else:
        state, intensity = sma_resend_batch(alice, params.mu_a, rng), attack.mu_e

    x = homodyne_batch(intensity, state, bob, rng)

    rel = (bob - alice) % 4
    sifted = rel % 2 == 0
    alice_bit = alice >= 2
    conclusive = sifted & (np.abs(x) > params.x0)
    bob_bit = x < 0
    errors = conclusive & (bob_bit != alice_bit)
    stats = SessionStats(n, int(sifted.sum()), int(conclusive.sum()), int(errors.sum()))

    hists = None
    if hist_spec is not None:
        # x_{phi+pi} = -x_phi: rotate into Alice's |alpha> frame
        aligned = np.where(rel <= 1, x, -x)
        hists = {
            CORRECT: QuadratureHistogram.from_samples(CORRECT, aligned[sifted], hist_spec),
            WRONG: QuadratureHistogram.from_samples(WRONG, aligned[~sifted], hist_spec),
        }
    return stats, hists


def simulate_session(
    params: ProtocolParams,
    attack: AttackConfig = NO_ATTACK,
    n_pulses: int = 0,
    seed: int = 0,
    histogram_spec: HistogramSpec | None = None,
    workers: int = 1,
) -> SessionResult:
    """Run ``n_pulses`` through the protocol and tally sifting, post-selection and errors.

    Attacks replace the channel: Eve sits at Alice's output and her resent
    pulse reaches Bob with intensity ``attack.mu_e`` and no further loss.
    """
    if n_pulses < 0:
        raise DomainError(f"n_pulses must be >= 0, got {n_pulses!r}")
    if seed < 0:
        raise DomainError(f"seed must be >= 0, got {seed!r}")
    sizes = [CHUNK_SIZE] * (n_pulses // CHUNK_SIZE)
    if n_pulses % CHUNK_SIZE:
        sizes.append(n_pulses % CHUNK_SIZE)

    jobs = [(params, attack, n, seed, i, histogram_spec) for i, n in enumerate(sizes)]
    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda job: _run_chunk(*job), jobs))
    else:
        parts = [_run_chunk(*job) for job in jobs]

    stats = SessionStats()
    hists = None
    if histogram_spec is not None:
        edges = histogram_spec.edges()
        hists = {b: QuadratureHistogram(b, edges) for b in (CORRECT, WRONG)}
    for s, h in parts:
        stats = stats + s
        if hists is not None:
            hists = {b: hists[b] + h[b] for b in hists}
    return SessionResult(stats, hists)
