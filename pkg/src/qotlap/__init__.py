"""
Quadratically regularised optimal transport on sampled manifolds, the graph
operator built from its sparse plans, and the scaling of its potentials.
"""

from .geometry import *  # noqa: F401,F403
from .qot_solver import *  # noqa: F401,F403
from .graph_operator import *  # noqa: F401,F403
from .scaling_theory import *  # noqa: F401,F403
from .scaling_theory import CapViolation, PartialSum  # noqa: F401
from .pme import *  # noqa: F401,F403
from . import experiments, fileio  # noqa: F401

__version__ = "0.1.0"
