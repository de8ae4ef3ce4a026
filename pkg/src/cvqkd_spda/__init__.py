"""Single-photon-detection and simultaneous-measurement attacks on
four-state phase-coding CV-QKD with homodyne post-selection."""

from .analytic import (
    BerResult,
    ber_absence,
    ber_presence,
    conclusive_prob_absence,
    conclusive_prob_presence,
    erfc,
    outcome_density,
    sma_mixture,
    spda_mixture,
)
from .model import (
    AttackConfig,
    CoherentSignal,
    EveDetector,
    ProtocolParams,
    ResendMixture,
    Strategy,
    channel_transmittance,
    quadrature_pdf,
)
from .montecarlo import SessionStats, QuadratureHistogram, simulate_session

__version__ = "0.1.0"
