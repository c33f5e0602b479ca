"""Exception hierarchy shared by all modules."""


class DisphypError(Exception):
    """Base class for all package errors."""


class ParseError(DisphypError):
    """Malformed symbol expression or configuration."""


class SymbolOrderError(DisphypError):
    """Derivative requested beyond the orders a symbol supports."""


class HyperbolicityError(DisphypError):
    """Characteristic roots are not real."""


class StrictHyperbolicityError(DisphypError):
    """Characteristic roots collide (gap below tolerance)."""


class ConditioningError(DisphypError):
    """Eigenvector matrix too ill-conditioned to invert."""


class ZoneConstantError(DisphypError):
    """Zone constant enlargement exceeded its ceiling."""


class ZoneError(DisphypError):
    """A zone-restricted routine was called outside its zone."""


class StiffnessError(DisphypError):
    """Adaptive integrator step size underflowed."""


class PhaseSignError(DisphypError):
    """Phase function is not positive where a Fresnel surface is requested."""


class DegeneratePhaseError(DisphypError):
    """Phase is flat to infinite order on the integration support."""


class FitError(DisphypError):
    """Too few usable samples for a decay-rate fit."""


class GridError(DisphypError):
    """Periodic box too small for the requested horizon."""


class CacheError(DisphypError):
    """Propagator-table cache is corrupted or does not match."""


class ConfigError(DisphypError):
    """Invalid run configuration."""


class StageDependencyError(DisphypError):
    """A stage was requested without the stages it depends on."""
