"""Container tying a full symbol to its homogeneous principal part."""
from dataclasses import dataclass, field
import hashlib
import json

import numpy as np

from .expr import Expression
from .symbols import ExpressionSymbol, TimeFrequencySymbol, ZoneParams


@dataclass
class HyperbolicSystem:
    """First-order system D_t U = A(t, D) U with principal part ``A1``.

    ``gamma`` is an expression in ``t`` for the weak-dissipativity weight
    (defaults to zero).  ``params`` records the builder inputs so the system
    can be rebuilt and hashed deterministically.
    """

    name: str
    A: TimeFrequencySymbol
    A1: TimeFrequencySymbol
    zone: ZoneParams = field(default_factory=ZoneParams)
    gamma: str = "0"
    hermitian_principal: bool = False
    isotropic: bool = False
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if (self.A.m, self.A.n) != (self.A1.m, self.A1.n):
            raise ValueError("A and A1 must have equal sizes")
        self._gamma = Expression(self.gamma, self.A.n)

    @property
    def m(self):
        return self.A.m

    @property
    def n(self):
        return self.A.n

    @property
    def lower_order(self):
        return self.A - self.A1

    def gamma_values(self, t):
        t = np.asarray(t, dtype=float)
        v = self._gamma(t, np.zeros(t.shape + (self.n,)))
        return np.broadcast_to(np.real(v), t.shape).astype(float)

    def to_config(self):
        def sym_cfg(s):
            if isinstance(s, ExpressionSymbol):
                return s.to_config()
            return {"callable": type(s).__name__}
        return {
            "name": self.name, "A": sym_cfg(self.A), "A1": sym_cfg(self.A1),
            "zone": {"N": self.zone.N, "nu": self.zone.nu}, "gamma": self.gamma,
            "params": self.params,
        }

    def config_hash(self):
        blob = json.dumps(self.to_config(), sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()

    def with_zone(self, zp):
        return HyperbolicSystem(self.name, self.A, self.A1, zp, self.gamma,
                                self.hermitian_principal, self.isotropic, dict(self.params))
