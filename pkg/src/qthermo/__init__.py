"""qthermo: thermodynamics of small open quantum systems.

Thermodynamically consistent Markovian (GKLS) master equations,
heat/work/entropy bookkeeping for concrete quantum thermal machines,
full counting statistics via counting-field Liouvillians, and
fluctuation-theorem / TUR verification by Monte Carlo trajectory
sampling.
"""

__version__ = "0.1.0"

from . import fcs, lindblad, models, qcore, thermo, trajectories
from .lindblad import GKLSGenerator, JumpChannel, ThermoLedger
from .thermo import ReservoirSpec

__all__ = [
    "__version__",
    "qcore", "thermo", "lindblad", "models", "fcs", "trajectories",
    "GKLSGenerator", "JumpChannel", "ThermoLedger", "ReservoirSpec",
]
