"""Batched time integrators for linear matrix ODEs dY/dt = i A(t) Y.

``dop853`` advances many independent trajectories at once, each with its
own time, step size and direction (Dormand-Prince 8(5,3) with the
coefficient tables shipped in scipy).  ``magnus4`` is the fixed-step
fourth-order Magnus scheme used on large FFT grids.
"""
import numpy as np
from scipy.integrate._ivp import dop853_coefficients as dc

from .errors import StiffnessError

_NS = dc.N_STAGES
_A = dc.A[:_NS, :_NS]
_B = dc.B
_C = dc.C[:_NS]
_E3 = dc.E3
_E5 = dc.E5

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 10.0


def dop853(rhs, t0, t1, y0, rtol=1e-10, atol=1e-12, h0=None, max_steps=200000,
           h_max=np.inf):
    """Integrate ``dy/dt = rhs(t, y)`` for a batch of trajectories.

    ``t0``, ``t1`` have shape ``(P,)`` and ``y0`` shape ``(P, d)``; ``rhs``
    is called as ``rhs(t[idx], y[idx], idx)`` for the still-running subset
    and must return the matching derivatives.  The local error is measured in the max norm
    scaled by ``atol + rtol |y|``.  Returns ``(y, n_steps)``.
    """
    t0 = np.asarray(t0, dtype=float).copy()
    t1 = np.asarray(t1, dtype=float)
    y = np.array(y0, dtype=complex)
    P, d = y.shape
    direction = np.where(t1 >= t0, 1.0, -1.0)
    span = np.abs(t1 - t0)
    t = t0
    active = span > 0
    if h0 is None:
        h = np.minimum(np.maximum(span, 1e-12) * 1e-2, h_max)
    else:
        h = np.minimum(np.broadcast_to(np.asarray(h0, dtype=float), (P,)).copy(), h_max)
    steps = np.zeros(P, dtype=int)
    idx = np.nonzero(active)[0]
    f = np.zeros_like(y)
    if len(idx):
        f[idx] = rhs(t[idx], y[idx], idx)
    while len(idx):
        hh = np.minimum(h[idx], np.abs(t1[idx] - t[idx]))
        hs = hh * direction[idx]
        ti, yi = t[idx], y[idx]
        Ki = np.empty((_NS + 1, len(idx), d), dtype=complex)
        Ki[0] = f[idx]
        for s in range(1, _NS):
            dy = np.tensordot(_A[s, :s], Ki[:s], axes=1) * hs[:, None]
            Ki[s] = rhs(ti + _C[s] * hs, yi + dy, idx)
        y_new = yi + hs[:, None] * np.tensordot(_B, Ki[:_NS], axes=1)
        f_new = rhs(ti + hs, y_new, idx)
        Ki[_NS] = f_new
        scale = atol + rtol * np.maximum(np.abs(yi), np.abs(y_new))
        err5 = np.tensordot(_E5, Ki, axes=1) / scale
        err3 = np.tensordot(_E3, Ki, axes=1) / scale
        e5 = np.max(np.abs(err5), axis=1)
        e3 = np.max(np.abs(err3), axis=1)
        denom = np.sqrt(e5 ** 2 + 0.01 * e3 ** 2)
        err = np.where(denom > 0, hh * e5 ** 2 / np.where(denom > 0, denom, 1.0), 0.0)
        ok = err <= 1.0
        with np.errstate(divide="ignore"):
            fac = np.where(err == 0, MAX_FACTOR,
                           np.clip(SAFETY * err ** (-1.0 / 8.0), MIN_FACTOR, MAX_FACTOR))
        fac = np.where(ok, fac, np.minimum(fac, 1.0))
        acc = idx[ok]
        t[acc] = np.where(np.abs(t1[acc] - (ti[ok] + hs[ok])) <= 1e-14 * np.maximum(1, np.abs(t1[acc])),
                          t1[acc], ti[ok] + hs[ok])
        y[acc] = y_new[ok]
        f[acc] = f_new[ok]
        steps[acc] += 1
        h[idx] = np.minimum(hh * fac, h_max)
        done = (direction[idx] * (t1[idx] - t[idx])) <= 0
        idx = idx[~done]
        # only trajectories still short of their target can underflow
        tiny = h[idx] < 1e-14 * np.maximum(1.0, np.abs(t[idx]))
        if np.any(tiny):
            j = idx[np.argmax(tiny)]
            raise StiffnessError(
                f"step size underflow at t={t[j]:.6g} (target {t1[j]:.6g}, h={h[j]:.3e})")
        if np.any(steps[idx] > max_steps):
            raise StiffnessError(f"more than {max_steps} steps")
    return y, steps


def matrix_rhs(A_of):
    """rhs for dY/dt = i A(t) Y with Y flattened row-major to ``m*m`` entries.

    ``A_of(t, idx)`` returns ``(len(idx), m, m)`` generators for the
    trajectories ``idx``.
    """
    def rhs(t, y, idx):
        A = A_of(t, idx)
        m = A.shape[-1]
        Y = y.reshape(len(t), m, -1)
        return (1j * (A @ Y)).reshape(len(t), -1)
    return rhs


def expm2(Z):
    """exp(Z) for a batch of 2x2 matrices in closed form."""
    tr = 0.5 * (Z[..., 0, 0] + Z[..., 1, 1])
    W = Z - tr[..., None, None] * np.eye(2)
    det = W[..., 0, 0] * W[..., 1, 1] - W[..., 0, 1] * W[..., 1, 0]
    q = np.sqrt(-det + 0j)
    small = np.abs(q) < 1e-8
    qs = np.where(small, 1.0, q)
    sinhc = np.where(small, 1.0 + q * q / 6.0, np.sinh(qs) / qs)
    out = np.cosh(q)[..., None, None] * np.eye(2) + sinhc[..., None, None] * W
    return np.exp(tr)[..., None, None] * out


def expm_batch(Z):
    if Z.shape[-1] == 2:
        return expm2(Z)
    from scipy.linalg import expm
    flat = Z.reshape(-1, Z.shape[-2], Z.shape[-1])
    return np.stack([expm(z) for z in flat]).reshape(Z.shape)


_G = 0.5 / np.sqrt(3.0)


def _magnus4_2x2(A1, A2, h, Y):
    """Entrywise 2x2 version of the Magnus step (avoids tiny-matrix matmuls)."""
    a, b, c, d = (1j * A1[..., i, j] for i, j in ((0, 0), (0, 1), (1, 0), (1, 1)))
    e, f, g, k = (1j * A2[..., i, j] for i, j in ((0, 0), (0, 1), (1, 0), (1, 1)))
    s = np.sqrt(3.0) / 12.0 * h * h
    # commutator [B2, B1]
    c00 = f * c - b * g
    c01 = e * b + f * d - a * f - b * k
    c10 = g * a + k * c - c * e - d * g
    o00 = 0.5 * h * (a + e) + s * c00
    o11 = 0.5 * h * (d + k) - s * c00
    o01 = 0.5 * h * (b + f) + s * c01
    o10 = 0.5 * h * (c + g) + s * c10
    tr = 0.5 * (o00 + o11)
    w = 0.5 * (o00 - o11)
    q = np.sqrt(w * w + o01 * o10)
    small = np.abs(q) < 1e-8
    qs = np.where(small, 1.0, q)
    ep = np.exp(q)
    em = 1.0 / ep
    sh = np.where(small, 1.0 + q * q / 6.0, 0.5 * (ep - em) / qs)
    ch = 0.5 * (ep + em)
    et = np.exp(tr)
    u00, u11 = et * (ch + sh * w), et * (ch - sh * w)
    u01, u10 = et * sh * o01, et * sh * o10
    if Y.ndim == A1.ndim - 1:
        y0, y1 = Y[..., 0], Y[..., 1]
        return np.stack([u00 * y0 + u01 * y1, u10 * y0 + u11 * y1], axis=-1)
    out = np.empty(np.broadcast_shapes(Y.shape, A1.shape), dtype=complex)
    for j in range(Y.shape[-1]):
        y0, y1 = Y[..., 0, j], Y[..., 1, j]
        out[..., 0, j] = u00 * y0 + u01 * y1
        out[..., 1, j] = u10 * y0 + u11 * y1
    return out


def magnus4_step(A_of, t, h, Y):
    """One fourth-order Magnus step for dY/dt = i A(t) Y (two-point Gauss)."""
    A1 = A_of(t + (0.5 - _G) * h)
    A2 = A_of(t + (0.5 + _G) * h)
    if A1.shape[-1] == 2:
        return _magnus4_2x2(A1, A2, h, Y)
    B1, B2 = 1j * A1, 1j * A2
    Om = 0.5 * h * (B1 + B2) + (np.sqrt(3.0) / 12.0) * h * h * (B2 @ B1 - B1 @ B2)
    U = expm_batch(Om)
    return U @ Y if Y.ndim == U.ndim else np.einsum("...ij,...j->...i", U, Y)


def magnus4(A_of, t0, t1, Y0, h_fn, snapshots=()):
    """March from ``t0`` to ``t1`` with steps ``h_fn(t)``; stop exactly at snapshots.

    ``A_of(t)`` returns generators for the whole batch.  Returns the final
    state and a dict of snapshot states.
    """
    stops = sorted({float(s) for s in snapshots if t0 < s <= t1} | {float(t1)})
    Y = np.array(Y0, dtype=complex)
    t = float(t0)
    out = {}
    for stop in stops:
        while t < stop - 1e-12 * max(1.0, stop):
            h = min(h_fn(t), stop - t)
            Y = magnus4_step(A_of, t, h, Y)
            t = t + h
        t = stop
        out[stop] = Y.copy()
    return Y, out
