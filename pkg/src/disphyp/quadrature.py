"""Composite Chebyshev-Lobatto panels with spectral cumulative integration."""
from functools import lru_cache

import numpy as np
from numpy.polynomial import chebyshev as C


@lru_cache(maxsize=None)
def lobatto(p):
    """Nodes on [-1, 1] (ascending) and the cumulative integration matrix.

    ``S @ f`` gives the integrals from -1 to each node of the degree p-1
    interpolant of ``f``; ``S[-1]`` holds Clenshaw-Curtis weights.
    """
    x = -np.cos(np.pi * np.arange(p) / (p - 1))
    V = C.chebvander(x, p - 1)
    W = np.empty((p, p))
    for n in range(p):
        coef = np.zeros(p)
        coef[n] = 1.0
        W[:, n] = C.chebval(x, C.chebint(coef, lbnd=-1.0))
    S = W @ np.linalg.inv(V)
    return x, S


def panel_edges(a, b, breakpoints=(), rel=0.25, max_len=np.inf, min_len=0.0):
    """Panel edges from ``a`` towards ``b`` (either direction).

    Panels grow geometrically with ``rel * (1 + |tau|)``, never exceed
    ``max_len`` (oscillation resolution) and stop at ``breakpoints``.
    """
    a, b = float(a), float(b)
    if a == b:
        return np.array([a, b])
    sgn = 1.0 if b > a else -1.0
    stops = sorted({float(x) for x in breakpoints if (x - a) * sgn > 0 and (b - x) * sgn > 0},
                   key=lambda x: (x - a) * sgn)
    stops.append(b)
    edges = [a]
    tau = a
    for stop in stops:
        start = len(edges)
        while (stop - tau) * sgn > 1e-14 * max(1.0, abs(stop)):
            h = min(rel * (1.0 + abs(tau)), max_len)
            h = max(h, min_len)
            remaining = (stop - tau) * sgn
            if h >= remaining:
                tau = stop
            elif h > 0.75 * remaining:
                tau = tau + sgn * 0.5 * remaining
            else:
                tau = tau + sgn * h
            edges.append(tau)
        if len(edges) == start:
            edges.append(stop)      # span below resolution: one tiny panel
        edges[-1] = stop
        tau = stop
    return np.array(edges)


class PanelGrid:
    """Nodes of composite Lobatto panels between consecutive ``edges``."""

    def __init__(self, edges, p=20):
        self.edges = np.asarray(edges, dtype=float)
        self.p = int(p)
        u, S = lobatto(self.p)
        self._S = S
        lo, hi = self.edges[:-1], self.edges[1:]
        self.half = 0.5 * (hi - lo)
        self.nodes = lo[:, None] + (u[None, :] + 1.0) * self.half[:, None]

    @property
    def n_panels(self):
        return len(self.edges) - 1

    @property
    def flat(self):
        return self.nodes.reshape(-1)

    def cumulative(self, f):
        """Integrals from the first edge to every node; ``f`` has shape (panels, p, ...)."""
        f = np.asarray(f)
        local = np.einsum("kj,pj...->pk...", self._S, f)
        local = local * self.half.reshape((-1, 1) + (1,) * (f.ndim - 2))
        totals = local[:, -1]
        offsets = np.concatenate([np.zeros_like(totals[:1]), np.cumsum(totals, axis=0)[:-1]])
        return local + offsets[:, None]

    def integral(self, f):
        return self.cumulative(f)[-1, -1]

    def tail_estimate(self, f):
        """Per-panel magnitude of the highest Chebyshev coefficients, times panel length."""
        f = np.asarray(f)
        u, _ = lobatto(self.p)
        V = C.chebvander(u, self.p - 1)
        coef = np.einsum("kj,pj...->pk...", np.linalg.inv(V), f)
        tail = np.abs(coef[:, -2:]).max(axis=1)
        tail = tail.reshape(tail.shape[0], -1).max(axis=1)
        return float(np.sum(tail * np.abs(self.half) * 2.0))
