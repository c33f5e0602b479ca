"""Scalar expressions in time and frequency.

Grammar (a whitelisted subset of Python expression syntax)::

    expr   := expr ('+' | '-' | '*' | '/' | '**') expr
            | ('+' | '-') expr
            | '(' expr ')'
            | NUMBER | IMAG_NUMBER
            | 't' | 'abs_xi' | 'e' | 'pi' | 'i'
            | 'xi[' INT ']'                      (1-based coordinate index)
            | FUNC '(' expr ')' | 'pow(' expr ',' expr ')'
    FUNC   := sin | cos | exp | log | sqrt | smoothstep | dt

``i`` is the imaginary unit, ``smoothstep`` is the C-infinity monotone step
(0 below 0, 1 above 1) and ``dt(f)`` is the exact partial time derivative of
``f``.  Expressions evaluate on numpy arrays or on :class:`~disphyp.jets.Jet`
objects, so every derivative is exact up to rounding.
"""
import ast

import numpy as np

from . import jets as J
from .errors import ParseError

_FUNCS = {
    "sin": J.sin, "cos": J.cos, "exp": J.exp, "log": J.log, "sqrt": J.sqrt,
    "smoothstep": J.smoothstep,
}
_CONSTS = {"e": np.e, "pi": np.pi, "i": 1j}


class EvalContext:
    """Point (or batch of points) at which expressions are evaluated.

    ``space`` is None for plain values, otherwise the jet space; variable 0
    is time and variable k is ``xi[k]``.
    """

    def __init__(self, t, xi, space=None):
        self.t = np.asarray(t, dtype=float)
        self.xi = np.asarray(xi, dtype=float)
        self.space = space
        self._cache = {}

    def time(self):
        if "t" not in self._cache:
            if self.space is None:
                self._cache["t"] = self.t
            else:
                self._cache["t"] = J.variable(self.space, 0, self.t)
        return self._cache["t"]

    def coord(self, k):
        key = ("xi", k)
        if key not in self._cache:
            if k < 1 or k > self.xi.shape[-1]:
                raise ParseError(f"xi[{k}] out of range for n={self.xi.shape[-1]}")
            v = self.xi[..., k - 1]
            self._cache[key] = v if self.space is None else J.variable(self.space, k, v)
        return self._cache[key]

    def abs_xi(self):
        if "abs" not in self._cache:
            n = self.xi.shape[-1]
            sq = 0.0
            for k in range(1, n + 1):
                c = self.coord(k)
                sq = sq + c * c
            self._cache["abs"] = J.sqrt(sq)
        return self._cache["abs"]

    def raised(self):
        """Context one degree higher with time active (for exact ``dt``)."""
        if self.space is None:
            sp = J.get_space((0,), 1)
        else:
            active = tuple(sorted(set(self.space.active) | {0}))
            sp = J.get_space(active, self.space.degree + 1)
        return EvalContext(self.t, self.xi, sp)


def _time_derivative(child, ctx):
    up = ctx.raised()
    val = child(up)
    if not isinstance(val, J.Jet):
        return 0.0
    d = J.derivative(val, 0)
    if ctx.space is None:
        return d.value
    return J.project(d, ctx.space)


def _compile(node, n):
    if isinstance(node, ast.Expression):
        return _compile(node.body, n)
    if isinstance(node, ast.Constant):
        if isinstance(node.value, bool) or not isinstance(node.value, (int, float, complex)):
            raise ParseError(f"unsupported literal {node.value!r}")
        v = node.value
        return lambda ctx: v
    if isinstance(node, ast.Name):
        name = node.id
        if name == "t":
            return lambda ctx: ctx.time()
        if name == "abs_xi":
            return lambda ctx: ctx.abs_xi()
        if name in _CONSTS:
            v = _CONSTS[name]
            return lambda ctx: v
        raise ParseError(f"unknown name {name!r}")
    if isinstance(node, ast.Subscript):
        if not (isinstance(node.value, ast.Name) and node.value.id == "xi"):
            raise ParseError("only xi[k] may be subscripted")
        sl = node.slice
        if not (isinstance(sl, ast.Constant) and isinstance(sl.value, int)
                and not isinstance(sl.value, bool)):
            raise ParseError("xi index must be an integer literal")
        k = sl.value
        if k < 1 or k > n:
            raise ParseError(f"xi[{k}] out of range for n={n}")
        return lambda ctx: ctx.coord(k)
    if isinstance(node, ast.UnaryOp):
        arg = _compile(node.operand, n)
        if isinstance(node.op, ast.USub):
            return lambda ctx: -arg(ctx)
        if isinstance(node.op, ast.UAdd):
            return arg
        raise ParseError("unsupported unary operator")
    if isinstance(node, ast.BinOp):
        a, b = _compile(node.left, n), _compile(node.right, n)
        op = node.op
        if isinstance(op, ast.Add):
            return lambda ctx: a(ctx) + b(ctx)
        if isinstance(op, ast.Sub):
            return lambda ctx: a(ctx) - b(ctx)
        if isinstance(op, ast.Mult):
            return lambda ctx: a(ctx) * b(ctx)
        if isinstance(op, ast.Div):
            return lambda ctx: _div(a(ctx), b(ctx))
        if isinstance(op, ast.Pow):
            return lambda ctx: _pow(a(ctx), b(ctx))
        raise ParseError("unsupported binary operator")
    if isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.keywords:
            raise ParseError("malformed function call")
        fname = node.func.id
        args = [_compile(x, n) for x in node.args]
        if fname == "pow":
            if len(args) != 2:
                raise ParseError("pow takes two arguments")
            return lambda ctx: _pow(args[0](ctx), args[1](ctx))
        if len(args) != 1:
            raise ParseError(f"{fname} takes one argument")
        if fname == "dt":
            child = args[0]
            return lambda ctx: _time_derivative(child, ctx)
        if fname not in _FUNCS:
            raise ParseError(f"unknown function {fname!r}")
        f = _FUNCS[fname]
        return lambda ctx: f(args[0](ctx))
    raise ParseError(f"unsupported syntax: {type(node).__name__}")


def _div(a, b):
    if isinstance(b, J.Jet):
        return a * J.reciprocal(b)
    return a / b


def _pow(a, b):
    if isinstance(b, J.Jet):
        return J.exp(b * J.log(a))
    if isinstance(a, J.Jet):
        return J.power(a, b)
    a = np.asarray(a, dtype=complex if np.iscomplexobj(a) else float)
    if np.isscalar(b) and np.isrealobj(b) and float(b).is_integer():
        return a ** int(b)
    if not np.iscomplexobj(a) and np.any(a < 0):
        a = a.astype(complex)
    return np.power(a, b)


class Expression:
    """Parsed scalar expression in ``t`` and ``xi[1..n]``."""

    def __init__(self, source, n):
        self.source = str(source).strip()
        self.n = int(n)
        try:
            tree = ast.parse(self.source, mode="eval")
        except SyntaxError as exc:
            raise ParseError(f"cannot parse {self.source!r}: {exc.msg}") from None
        self._fn = _compile(tree, self.n)

    def __repr__(self):
        return f"Expression({self.source!r}, n={self.n})"

    def evaluate(self, ctx):
        return self._fn(ctx)

    def __call__(self, t, xi, space=None):
        return self._fn(EvalContext(t, xi, space))
