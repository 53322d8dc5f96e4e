"""Two-type reducible branching Brownian motion: phase diagram, particle
engine, first-moment oracles, decorations, ensemble statistics and the
coupled F-KPP solver."""
from .phase import (BoundaryError, FrontParams, ModelParams, Region, brute_force_speed,
                    centering, classify, front_params, speed_via_envelope)

__version__ = "0.1.0"
