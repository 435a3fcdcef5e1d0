"""Phase-space analysis of an optical Costas loop.

The loop state is the filter state ``x`` and the phase error ``theta``; the
detector output ``L sin(2 theta)`` drives a linear loop filter which in turn
steers a linear VCO.  The package finds equilibria, rotating cycles and
pull-in frequencies of this system on the cylinder ``theta mod pi``.
"""
__version__ = "0.1.0"

from .model import (PI, LeadLag, LoopState, ModelError, OpticalParams,  # noqa: E402
                    PDCharacteristic, PhaseModel, StateSpace, phase_rhs, realize)
from .integrate import IntegratorConfig, Trajectory, integrate  # noqa: E402
from .analysis import (Undetermined, classify_trajectory, find_cycles,  # noqa: E402
                       find_equilibria, hidden_check, return_map)
from .pullin import pull_in_estimate, sweep_diagram  # noqa: E402
from .kernels import BACKEND  # noqa: E402

__all__ = [
    "PI", "LeadLag", "LoopState", "ModelError", "OpticalParams", "PDCharacteristic",
    "PhaseModel", "StateSpace", "phase_rhs", "realize", "IntegratorConfig", "Trajectory",
    "integrate", "Undetermined", "classify_trajectory", "find_cycles", "find_equilibria",
    "hidden_check", "return_map", "pull_in_estimate", "sweep_diagram", "BACKEND",
]
