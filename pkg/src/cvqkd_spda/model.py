"""Domain types and elementary physical maps.

Quadrature convention: x1 + i*x2 = a, so [x1, x2] = i/2 and a homodyne
outcome on a coherent state has standard deviation exactly 1/2.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

DEFAULT_LOSS_DB_PER_KM = 0.21
DEFAULT_ETA_BOB = 0.6636
QUADRATURE_SD = 0.5

_SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)


def channel_transmittance(distance_km: float, loss_db_per_km: float) -> float:
    """Fiber transmittance ``10**(-a*l/10)``."""
    if not distance_km >= 0:
        raise DomainError(f"distance_km must be >= 0, got {distance_km!r}")
    if not loss_db_per_km > 0:
        raise DomainError(f"loss_db_per_km must be > 0, got {loss_db_per_km!r}")
    return 10.0 ** (-loss_db_per_km * distance_km / 10.0)


def quadrature_pdf(x, amplitude: float, phase_diff: float):
    """Density of a homodyne outcome on the coherent state ``|amplitude e^{i phi_a}>``.

    ``phase_diff`` is the local-oscillator phase minus the signal phase. Works
    elementwise on numpy arrays for ``x``.
    """
    if amplitude < 0:
        raise DomainError(f"amplitude must be >= 0, got {amplitude!r}")
    mean = amplitude * math.cos(phase_diff)
    return gaussian_pdf(x, mean)


def gaussian_pdf(x, mean: float):
    """Shot-noise-limited outcome density centred on ``mean`` (sd 1/2)."""
    d = np.asarray(x, dtype=float) - mean
    out = _SQRT_2_OVER_PI * np.exp(-2.0 * d * d)
    return float(out) if out.ndim == 0 else out


class Strategy(str, enum.Enum):
    NO_ATTACK = "none"
    SPDA = "spda"
    SMA = "sma"


@dataclass(frozen=True)
class EveDetector:
    """Eve's single-photon detectors: dark count per gate and efficiency."""

    y0: float = 0.0
    epsilon: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.y0 < 1.0:
            raise DomainError(f"y0 must lie in [0, 1), got {self.y0!r}")
        if not 0.0 < self.epsilon <= 1.0:
            raise DomainError(f"epsilon must lie in (0, 1], got {self.epsilon!r}")


PERFECT_DETECTOR = EveDetector()


@dataclass(frozen=True)
class ProtocolParams:
    mu_a: float
    x0: float
    distance_km: float = 0.0
    loss_db_per_km: float = DEFAULT_LOSS_DB_PER_KM
    eta_bob: float = DEFAULT_ETA_BOB

    def __post_init__(self):
        if not self.mu_a >= 0:
            raise DomainError(f"mu_a must be >= 0, got {self.mu_a!r}")
        if not self.x0 >= 0:
            raise DomainError(f"x0 must be >= 0, got {self.x0!r}")
        if not 0.0 < self.eta_bob <= 1.0:
            raise DomainError(f"eta_bob must lie in (0, 1], got {self.eta_bob!r}")
        # validates distance and loss
        channel_transmittance(self.distance_km, self.loss_db_per_km)

    @property
    def eta_channel(self) -> float:
        return channel_transmittance(self.distance_km, self.loss_db_per_km)

    @property
    def eta(self) -> float:
        """Total transmittance Alice -> Bob's homodyne outcome."""
        return self.eta_channel * self.eta_bob

    @property
    def received_intensity(self) -> float:
        return self.eta * self.mu_a


@dataclass(frozen=True)
class AttackConfig:
    """Eavesdropping strategy.

    ``mu_e`` is the resent intensity as seen at Bob's homodyne input, i.e. it
    already includes Bob's optical loss and detector efficiency.
    """

    strategy: Strategy = Strategy.NO_ATTACK
    mu_e: float = 0.0
    detector: EveDetector = field(default_factory=EveDetector)

    def __post_init__(self):
        object.__setattr__(self, "strategy", Strategy(self.strategy))
        if not self.mu_e >= 0:
            raise DomainError(f"mu_e must be >= 0, got {self.mu_e!r}")


NO_ATTACK = AttackConfig()


@dataclass(frozen=True)
class CoherentSignal:
    """``|sqrt(intensity) * exp(i*k*pi/2)>``; vacuum is intensity 0."""

    intensity: float
    phase_index: int = 0

    def __post_init__(self):
        if not self.intensity >= 0:
            raise DomainError(f"intensity must be >= 0, got {self.intensity!r}")
        if self.phase_index not in (0, 1, 2, 3):
            raise DomainError(f"phase_index must be 0..3, got {self.phase_index!r}")

    @property
    def is_vacuum(self) -> bool:
        return self.intensity == 0

    @property
    def phase(self) -> float:
        return self.phase_index * math.pi / 2

    @property
    def amplitude(self) -> float:
        return math.sqrt(self.intensity)


VACUUM = CoherentSignal(0.0, 0)

MIXTURE_SUM_TOL = 1e-12


@dataclass(frozen=True)
class ResendMixture:
    """Probabilities that Eve resends |a_e>, |-a_e>, |i a_e>, |-i a_e>, |0>.

    All values are conditioned on Alice having sent |alpha>.
    """

    p_plus: float
    p_minus: float
    p_plus_i: float
    p_minus_i: float
    p_vac: float = 0.0

    def __post_init__(self):
        for name, value in self.as_dict().items():
            if not 0.0 <= value <= 1.0:
                raise DomainError(f"{name} must lie in [0, 1], got {value!r}")
        total = sum(self.as_tuple())
        if abs(total - 1.0) > MIXTURE_SUM_TOL:
            raise DomainError(f"mixture components sum to {total!r}, not 1")

    def as_tuple(self) -> tuple[float, float, float, float, float]:
        return (self.p_plus, self.p_minus, self.p_plus_i, self.p_minus_i, self.p_vac)

    def as_dict(self) -> dict[str, float]:
        return {
            "p_plus": self.p_plus,
            "p_minus": self.p_minus,
            "p_plus_i": self.p_plus_i,
            "p_minus_i": self.p_minus_i,
            "p_vac": self.p_vac,
        }

    @property
    def p_centered(self) -> float:
        """Weight of the components whose correct-basis mean is zero."""
        return self.p_plus_i + self.p_minus_i + self.p_vac
