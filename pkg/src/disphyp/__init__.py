"""Time-dependent hyperbolic systems: symbols, diagonalisation, propagators,
Fresnel-surface geometry, oscillatory integrals and dispersive decay benchmarks."""

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .symbols import ZoneParams, ExpressionSymbol, classify_zone, zone_boundary  # noqa: F401
from .system import HyperbolicSystem  # noqa: F401
from .example_systems import FAMILIES, get_family  # noqa: F401
