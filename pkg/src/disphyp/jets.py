"""Truncated multivariate Taylor arithmetic (forward-mode AD).

A jet stores the Taylor coefficients of a function of a few real variables
around a base point, truncated at a fixed total degree.  The coefficient
array has the monomial axis first, in graded order, so a jet of lower degree
is a prefix of the same jet at higher degree.  All remaining axes are batch
or matrix axes and broadcast like ordinary numpy arrays.

Variables are identified by integers: 0 is time, ``i >= 1`` is the i-th
frequency coordinate.  Every elementary function here accepts either a plain
array or a :class:`Jet`.
"""
from functools import lru_cache
from math import factorial

import numpy as np

__all__ = [
    "JetSpace", "Jet", "get_space", "constant", "variable", "derivative",
    "project", "partial", "exp", "log", "sin", "cos", "sqrt", "power",
    "reciprocal", "smoothstep", "where", "matinv", "is_jet",
]


def _compositions(total, parts):
    if parts == 0:
        if total == 0:
            yield ()
        return
    if parts == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


class JetSpace:
    """Monomial bookkeeping for jets in ``active`` variables up to ``degree``."""

    def __init__(self, active, degree):
        self.active = tuple(active)
        self.degree = int(degree)
        if self.degree < 0:
            raise ValueError("jet degree must be non-negative")
        nv = len(self.active)
        self.monomials = [m for d in range(self.degree + 1)
                          for m in _compositions(d, nv)]
        self.index = {m: i for i, m in enumerate(self.monomials)}
        self.size = len(self.monomials)
        ii, jj, kk = [], [], []
        for i, a in enumerate(self.monomials):
            for j, b in enumerate(self.monomials):
                s = tuple(x + y for x, y in zip(a, b))
                if sum(s) <= self.degree:
                    ii.append(i)
                    jj.append(j)
                    kk.append(self.index[s])
        self._I = np.array(ii, dtype=int)
        self._J = np.array(jj, dtype=int)
        scatter = np.zeros((self.size, len(ii)))
        scatter[kk, np.arange(len(ii))] = 1.0
        self._S = scatter
        self.factorials = np.array(
            [np.prod([factorial(x) for x in m]) if m else 1 for m in self.monomials],
            dtype=float)
        self._dmaps = {}

    def __repr__(self):
        return f"JetSpace(active={self.active}, degree={self.degree})"

    def lower(self, degree):
        return get_space(self.active, degree)

    def unit(self, var):
        """Index of the linear monomial of ``var`` (or None)."""
        if var not in self.active or self.degree < 1:
            return None
        m = [0] * len(self.active)
        m[self.active.index(var)] = 1
        return self.index[tuple(m)]

    def deriv_map(self, var):
        if var not in self._dmaps:
            pos = self.active.index(var)
            target = self.lower(self.degree - 1)
            src, fac = [], []
            for m in target.monomials:
                mm = list(m)
                mm[pos] += 1
                src.append(self.index[tuple(mm)])
                fac.append(m[pos] + 1)
            self._dmaps[var] = (target, np.array(src), np.array(fac, dtype=float))
        return self._dmaps[var]

    def mul(self, a, b):
        prod = a[self._I] * b[self._J]
        return np.tensordot(self._S, prod, axes=1)

    def matmul(self, a, b):
        prod = np.matmul(a[self._I], b[self._J])
        return np.tensordot(self._S, prod, axes=1)


@lru_cache(maxsize=None)
def get_space(active, degree):
    return JetSpace(tuple(active), int(degree))


def is_jet(x):
    return isinstance(x, Jet)


class Jet:
    """Taylor jet with coefficient array ``c`` of shape ``(K, *shape)``."""

    __array_ufunc__ = None

    def __init__(self, space, c):
        self.space = space
        self.c = np.asarray(c)
        if self.c.shape[0] != space.size:
            raise ValueError("coefficient axis does not match jet space")

    @property
    def shape(self):
        return self.c.shape[1:]

    @property
    def ndim(self):
        return self.c.ndim - 1

    @property
    def value(self):
        return self.c[0]

    @property
    def degree(self):
        return self.space.degree

    def __repr__(self):
        return f"Jet({self.space!r}, shape={self.shape})"

    def __getitem__(self, idx):
        if not isinstance(idx, tuple):
            idx = (idx,)
        return Jet(self.space, self.c[(slice(None),) + idx])

    def truncate(self, degree):
        if degree >= self.degree:
            return self
        sp = self.space.lower(degree)
        return Jet(sp, self.c[:sp.size])

    def _align(self, other):
        if self.space.active != other.space.active:
            raise ValueError("jets live in different variable sets")
        d = min(self.degree, other.degree)
        a, b = self.truncate(d), other.truncate(d)
        nd = max(a.ndim, b.ndim)
        return a.space, a._padded(nd), b._padded(nd)

    def __add__(self, o):
        if isinstance(o, Jet):
            sp, a, b = self._align(o)
            return Jet(sp, a + b)
        o = np.asarray(o)
        shape = np.broadcast_shapes(self.shape, o.shape)
        c = np.array(_broadcast(self, shape), dtype=np.result_type(self.c, o))
        c[0] += o
        return Jet(self.space, c)

    __radd__ = __add__

    def __neg__(self):
        return Jet(self.space, -self.c)

    def __pos__(self):
        return self

    def __sub__(self, o):
        return self + (-o)

    def __rsub__(self, o):
        return (-self) + o

    def __mul__(self, o):
        if isinstance(o, Jet):
            sp, a, b = self._align(o)
            return Jet(sp, sp.mul(a, b))
        o = np.asarray(o)
        return Jet(self.space, self._padded(o.ndim) * o[None])

    __rmul__ = __mul__

    def _padded(self, ndim):
        pad = ndim - self.ndim
        if pad <= 0:
            return self.c
        return self.c.reshape((self.c.shape[0],) + (1,) * pad + self.shape)

    def __truediv__(self, o):
        if isinstance(o, Jet):
            return self * reciprocal(o)
        o = np.asarray(o)
        return Jet(self.space, self._padded(o.ndim) / o[None])

    def __rtruediv__(self, o):
        return reciprocal(self) * o

    def __pow__(self, p):
        if isinstance(p, Jet):
            return exp(p * log(self))
        return power(self, p)

    def __rpow__(self, base):
        base = np.asarray(base)
        if np.any(np.real(base) <= 0):
            base = base.astype(complex)
        return exp(self * np.log(base))

    def __matmul__(self, o):
        if isinstance(o, Jet):
            sp, a, b = self._align(o)
            return Jet(sp, sp.matmul(a, b))
        return Jet(self.space, np.matmul(self.c, np.asarray(o)))

    def __rmatmul__(self, o):
        return Jet(self.space, np.matmul(np.asarray(o), self.c))

    def conj(self):
        return Jet(self.space, np.conj(self.c))

    @property
    def real(self):
        return Jet(self.space, self.c.real)

    @property
    def imag(self):
        return Jet(self.space, self.c.imag)

    @property
    def mT(self):
        return Jet(self.space, np.swapaxes(self.c, -1, -2))

    def sum(self, axis):
        axis = axis + 1 if axis >= 0 else axis
        return Jet(self.space, self.c.sum(axis=axis))

    def diagonal(self):
        return Jet(self.space, np.diagonal(self.c, axis1=-2, axis2=-1))


def constant(space, value, shape=None):
    value = np.asarray(value)
    shape = value.shape if shape is None else tuple(shape)
    c = np.zeros((space.size,) + shape, dtype=np.result_type(value, float))
    c[0] = value
    return Jet(space, c)


def variable(space, var, value):
    """Jet of the coordinate function ``var`` based at ``value``."""
    jet = constant(space, np.asarray(value, dtype=float))
    u = space.unit(var)
    if u is not None:
        jet.c[u] = 1.0
    return jet


def derivative(x, var):
    """Exact partial derivative in ``var``; the degree drops by one."""
    sp = x.space
    if var not in sp.active:
        if sp.degree == 0:
            return Jet(sp, np.zeros_like(x.c))
        low = sp.lower(sp.degree - 1)
        return Jet(low, np.zeros_like(x.c[:low.size]))
    if sp.degree == 0:
        raise ValueError("cannot differentiate a degree-0 jet")
    target, src, fac = sp.deriv_map(var)
    fac = fac.reshape((-1,) + (1,) * (x.c.ndim - 1))
    return Jet(target, x.c[src] * fac)


def project(x, target):
    """Restrict a jet to a subset of its variables and a lower degree."""
    src = x.space
    pos = [src.active.index(v) for v in target.active]
    idx = []
    for m in target.monomials:
        mm = [0] * len(src.active)
        for p, e in zip(pos, m):
            mm[p] = e
        idx.append(src.index[tuple(mm)])
    return Jet(target, x.c[np.array(idx, dtype=int)])


def partial(x, exps):
    """Partial derivative of orders ``exps`` (one per active variable) at the base point."""
    i = x.space.index[tuple(exps)]
    return x.c[i] * x.space.factorials[i]


def _compose(x, coeffs):
    """Evaluate ``sum_k coeffs[k] * (x - x0)**k`` by Horner's rule."""
    sp = x.space
    h = np.array(x.c, dtype=np.result_type(x.c, *coeffs))
    h[0] = 0
    d = sp.degree
    rc = np.zeros_like(h)
    rc[0] = coeffs[d]
    for k in range(d - 1, -1, -1):
        rc = sp.mul(rc, h)
        rc[0] = rc[0] + coeffs[k]
    return Jet(sp, rc)


def exp(x):
    if not isinstance(x, Jet):
        return np.exp(x)
    e0 = np.exp(x.value)
    return _compose(x, [e0 / factorial(k) for k in range(x.degree + 1)])


def log(x):
    if not isinstance(x, Jet):
        return np.log(x)
    x0 = x.value
    co = [np.log(x0)]
    for k in range(1, x.degree + 1):
        co.append((-1) ** (k + 1) / (k * x0 ** k))
    return _compose(x, co)


def sin(x):
    if not isinstance(x, Jet):
        return np.sin(x)
    x0 = x.value
    return _compose(x, [np.sin(x0 + 0.5 * np.pi * k) / factorial(k)
                        for k in range(x.degree + 1)])


def cos(x):
    if not isinstance(x, Jet):
        return np.cos(x)
    x0 = x.value
    return _compose(x, [np.cos(x0 + 0.5 * np.pi * k) / factorial(k)
                        for k in range(x.degree + 1)])


def power(x, p):
    if not isinstance(x, Jet):
        return np.power(x, p)
    if isinstance(p, (int, np.integer)) or (np.isscalar(p) and float(p).is_integer()
                                            and np.isrealobj(p)):
        p = int(p)
        if p >= 0:
            out = constant(x.space, np.ones(x.shape))
            base = x
            while p:
                if p & 1:
                    out = out * base
                p >>= 1
                if p:
                    base = base * base
            return out
        return reciprocal(power(x, -p))
    x0 = x.value
    co = []
    binom = 1.0
    for k in range(x.degree + 1):
        co.append(binom * x0 ** (p - k))
        binom = binom * (p - k) / (k + 1)
    return _compose(x, co)


def sqrt(x):
    if not isinstance(x, Jet):
        return np.sqrt(x)
    return power(x, 0.5)


def reciprocal(x):
    if not isinstance(x, Jet):
        return 1.0 / x
    x0 = x.value
    return _compose(x, [(-1) ** k / x0 ** (k + 1) for k in range(x.degree + 1)])


def _broadcast(x, shape):
    pad = len(shape) - x.ndim
    c = x.c.reshape((x.c.shape[0],) + (1,) * pad + x.shape)
    return np.broadcast_to(c, (x.c.shape[0],) + tuple(shape))


def where(mask, a, b):
    """Elementwise select between jets (or arrays) on the base-point mask."""
    if not isinstance(a, Jet) and not isinstance(b, Jet):
        return np.where(mask, a, b)
    sp = a.space if isinstance(a, Jet) else b.space
    mask = np.asarray(mask)
    if not isinstance(a, Jet):
        a = constant(sp, np.asarray(a))
    if not isinstance(b, Jet):
        b = constant(sp, np.asarray(b))
    if a.degree != b.degree:
        d = min(a.degree, b.degree)
        a, b, sp = a.truncate(d), b.truncate(d), sp.lower(d)
    shape = np.broadcast_shapes(mask.shape, a.shape, b.shape)
    ac = _broadcast(a, shape)
    bc = _broadcast(b, shape)
    return Jet(sp, np.where(mask[None], ac, bc))


def _bump_side(x):
    return np.exp(-1.0 / x)


def smoothstep(x):
    """C-infinity monotone step: 0 for x <= 0, 1 for x >= 1."""
    if not isinstance(x, Jet):
        xr = np.real(np.asarray(x, dtype=complex if np.iscomplexobj(x) else float))
        inside = (xr > 0) & (xr < 1)
        xc = np.where(inside, x, 0.5)
        f0, f1 = _bump_side(xc), _bump_side(1.0 - xc)
        return np.where(inside, f0 / (f0 + f1), np.where(xr >= 1, 1.0, 0.0))
    xr = np.real(x.value)
    inside = (xr > 0) & (xr < 1)
    xc = where(inside, x, 0.5)
    f0 = exp(-1.0 / xc)
    f1 = exp(-1.0 / (1.0 - xc))
    inner = f0 / (f0 + f1)
    outer = np.where(xr >= 1, 1.0, 0.0)
    return where(inside, inner, outer)


def matinv(m):
    """Inverse of a jet-valued square matrix (trailing two axes)."""
    if not isinstance(m, Jet):
        return np.linalg.inv(m)
    m0inv = np.linalg.inv(m.value)
    sp = m.space
    delta = np.array(m.c)
    delta[0] = 0
    step = -np.matmul(m0inv[None], delta)
    term = np.zeros_like(step)
    term[0] = m0inv
    acc = term.copy()
    for _ in range(sp.degree):
        term = sp.matmul(step, term)
        acc = acc + term
    return Jet(sp, acc)
