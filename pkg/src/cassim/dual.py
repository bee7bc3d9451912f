"""Forward-mode automatic differentiation with array-valued dual numbers.

A :class:`Dual` carries a numpy value of any shape together with a tangent
array of shape ``(k,) + value.shape``, where ``k`` is the number of active
design parameters.  The module-level math functions (``sin``, ``sqrt``,
``where``, ...) accept both plain numpy inputs and duals, so numerical code
written against them is differentiable for free.

Conventions:
  - ``minimum``/``maximum`` propagate the tangent of the selected branch;
    ties select the first argument.
  - ``absolute`` has derivative 0 at 0.
  - ``softplus`` uses the overflow-safe form ``max(x, 0) + log1p(exp(-|x|))``.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "Dual", "seed", "value_of", "tangent_of", "gradient", "gradient_check",
    "sin", "cos", "tan", "arcsin", "arctan2", "sqrt", "exp", "log", "log1p",
    "absolute", "sign", "minimum", "maximum", "softplus", "where", "dsum",
    "concat", "smooth_max",
]


def _align_tangent(tangent: np.ndarray, value_ndim: int, out_ndim: int) -> np.ndarray:
    """Insert singleton axes after the leading parameter axis so a tangent of
    shape (k,)+a broadcasts against a value result of higher rank."""
    pad = out_ndim - value_ndim
    if pad <= 0:
        return tangent
    return tangent.reshape(tangent.shape[:1] + (1,) * pad + tangent.shape[1:])


class Dual:
    """Value + k-wide tangent pair obeying the chain rule."""

    __slots__ = ("value", "tangent")

    # keep numpy from absorbing duals into object arrays; binary ops between
    # an ndarray and a Dual then dispatch to the reflected methods below
    __array_ufunc__ = None

    def __init__(self, value, tangent):
        self.value = np.asarray(value, dtype=float)
        self.tangent = np.asarray(tangent, dtype=float)
        if self.tangent.shape[1:] != self.value.shape:
            # tolerate constant tangents that still need broadcasting
            self.tangent = np.broadcast_to(
                _align_tangent(self.tangent, self.tangent.ndim - 1, self.value.ndim),
                self.tangent.shape[:1] + self.value.shape,
            ).copy()

    # -- helpers -----------------------------------------------------------
    @property
    def k(self) -> int:
        return self.tangent.shape[0]

    def _make(self, value, tangent) -> "Dual":
        value = np.asarray(value, dtype=float)
        tangent = np.broadcast_to(
            _align_tangent(np.asarray(tangent, dtype=float),
                           tangent.ndim - 1, value.ndim),
            (self.k,) + value.shape,
        )
        out = Dual.__new__(Dual)
        out.value = value
        out.tangent = np.ascontiguousarray(tangent)
        return out

    def __repr__(self):
        return f"Dual(value={self.value!r}, tangent={self.tangent!r})"

    # -- arithmetic --------------------------------------------------------
    def __add__(self, other):
        if isinstance(other, Dual):
            v = self.value + other.value
            t = (_align_tangent(self.tangent, self.value.ndim, v.ndim)
                 + _align_tangent(other.tangent, other.value.ndim, v.ndim))
            return self._make(v, t)
        v = self.value + np.asarray(other, dtype=float)
        return self._make(v, _align_tangent(self.tangent, self.value.ndim, v.ndim))

    __radd__ = __add__

    def __neg__(self):
        return self._make(-self.value, -self.tangent)

    def __sub__(self, other):
        return self.__add__(-other if isinstance(other, Dual) else -np.asarray(other, dtype=float))

    def __rsub__(self, other):
        return (-self).__add__(np.asarray(other, dtype=float))

    def __mul__(self, other):
        if isinstance(other, Dual):
            v = self.value * other.value
            t = (_align_tangent(self.tangent, self.value.ndim, v.ndim) * other.value
                 + _align_tangent(other.tangent, other.value.ndim, v.ndim) * self.value)
            return self._make(v, t)
        other = np.asarray(other, dtype=float)
        v = self.value * other
        return self._make(v, _align_tangent(self.tangent, self.value.ndim, v.ndim) * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual):
            v = self.value / other.value
            t = (_align_tangent(self.tangent, self.value.ndim, v.ndim) / other.value
                 - v * _align_tangent(other.tangent, other.value.ndim, v.ndim) / other.value)
            return self._make(v, t)
        other = np.asarray(other, dtype=float)
        v = self.value / other
        return self._make(v, _align_tangent(self.tangent, self.value.ndim, v.ndim) / other)

    def __rtruediv__(self, other):
        return self.__pow__(-1).__mul__(other)

    def __pow__(self, p):
        if not isinstance(p, (int, float)):
            raise TypeError("only scalar exponents are supported")
        v = self.value ** p
        return self._make(v, p * self.value ** (p - 1) * self.tangent)

    # -- comparisons (on values; used for masks and branching) -------------
    def __lt__(self, other): return self.value < value_of(other)
    def __le__(self, other): return self.value <= value_of(other)
    def __gt__(self, other): return self.value > value_of(other)
    def __ge__(self, other): return self.value >= value_of(other)

    # -- indexing ----------------------------------------------------------
    def __getitem__(self, idx):
        out = Dual.__new__(Dual)
        out.value = self.value[idx]
        out.tangent = self.tangent[(slice(None),) + (idx if isinstance(idx, tuple) else (idx,))]
        return out


def value_of(x):
    """Plain numpy value of a dual or passthrough for ordinary inputs."""
    return x.value if isinstance(x, Dual) else np.asarray(x)


def tangent_of(x, k: int | None = None):
    """Tangent of a dual; zeros for ordinary inputs (needs ``k``)."""
    if isinstance(x, Dual):
        return x.tangent
    if k is None:
        raise ValueError("tangent width k required for non-dual input")
    v = np.asarray(x, dtype=float)
    return np.zeros((k,) + v.shape)


def seed(values) -> list[Dual]:
    """Lift k scalars into duals with identity tangents (parameter i gets e_i)."""
    values = [float(v) for v in values]
    k = len(values)
    if k == 0:
        raise ValueError("seed() needs at least one value")
    eye = np.eye(k)
    return [Dual(values[i], eye[i]) for i in range(k)]


def _unary(x, v_fn, d_fn):
    if isinstance(x, Dual):
        v = v_fn(x.value)
        return x._make(v, d_fn(x.value) * x.tangent)
    return v_fn(np.asarray(x, dtype=float))


def sin(x): return _unary(x, np.sin, np.cos)
def cos(x): return _unary(x, np.cos, lambda v: -np.sin(v))
def tan(x): return _unary(x, np.tan, lambda v: 1.0 / np.cos(v) ** 2)
def arcsin(x): return _unary(x, np.arcsin, lambda v: 1.0 / np.sqrt(1.0 - v * v))
def sqrt(x): return _unary(x, np.sqrt, lambda v: 0.5 / np.sqrt(v))
def exp(x): return _unary(x, np.exp, np.exp)
def log(x): return _unary(x, np.log, lambda v: 1.0 / v)
def log1p(x): return _unary(x, np.log1p, lambda v: 1.0 / (1.0 + v))
def absolute(x): return _unary(x, np.abs, np.sign)  # d|x|/dx = 0 at x = 0


def sign(x):
    return np.sign(value_of(x))


def arctan2(y, x):
    yd, xd = isinstance(y, Dual), isinstance(x, Dual)
    if not (yd or xd):
        return np.arctan2(y, x)
    tmpl = y if yd else x
    k = tmpl.k
    yv, xv = value_of(y), value_of(x)
    v = np.arctan2(yv, xv)
    denom = xv * xv + yv * yv
    ty = tangent_of(y, k) if yd else 0.0
    tx = tangent_of(x, k) if xd else 0.0
    if yd:
        ty = _align_tangent(ty, yv.ndim, v.ndim)
    if xd:
        tx = _align_tangent(tx, xv.ndim, v.ndim)
    t = (xv * ty - yv * tx) / denom
    return tmpl._make(v, np.broadcast_to(t, (k,) + v.shape))


def _binary_select(a, b, pick_first):
    """Shared path for minimum/maximum: pick values and tangents elementwise.

    ``pick_first`` maps (a_value, b_value) to the boolean mask selecting a;
    ties must select a (the first argument).
    """
    ad, bd = isinstance(a, Dual), isinstance(b, Dual)
    av, bv = value_of(a), value_of(b)
    mask = pick_first(av, bv)
    v = np.where(mask, av, bv)
    if not (ad or bd):
        return v
    tmpl = a if ad else b
    k = tmpl.k
    ta = _align_tangent(tangent_of(a, k), av.ndim, v.ndim) if ad else np.zeros((k,) + v.shape)
    tb = _align_tangent(tangent_of(b, k), bv.ndim, v.ndim) if bd else np.zeros((k,) + v.shape)
    t = np.where(mask, ta, tb)
    return tmpl._make(v, t)


def minimum(a, b):
    return _binary_select(a, b, lambda av, bv: av <= bv)


def maximum(a, b):
    return _binary_select(a, b, lambda av, bv: av >= bv)


def softplus(x):
    """log(1 + exp(x)) in the overflow-safe form max(x, 0) + log1p(exp(-|x|))."""
    v = value_of(x)
    sp = np.maximum(v, 0.0) + np.log1p(np.exp(-np.abs(v)))
    if not isinstance(x, Dual):
        return sp
    e = np.exp(-np.abs(v))
    sig = np.where(v >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return x._make(sp, sig * x.tangent)


def where(cond, a, b):
    """Elementwise select driven by a plain boolean condition."""
    cond = np.asarray(cond, dtype=bool)
    ad, bd = isinstance(a, Dual), isinstance(b, Dual)
    av, bv = value_of(a), value_of(b)
    v = np.where(cond, av, bv)
    if not (ad or bd):
        return v
    tmpl = a if ad else b
    k = tmpl.k
    ta = _align_tangent(tangent_of(a, k), av.ndim, v.ndim) if ad else np.zeros((k,) + v.shape)
    tb = _align_tangent(tangent_of(b, k), bv.ndim, v.ndim) if bd else np.zeros((k,) + v.shape)
    return tmpl._make(v, np.where(cond, ta, tb))


def dsum(x, axis=None):
    """Sum of values; tangents sum over the matching (shifted) axes."""
    if not isinstance(x, Dual):
        return np.sum(x, axis=axis)
    v = np.sum(x.value, axis=axis)
    if axis is None:
        t = x.tangent.reshape(x.k, -1).sum(axis=1)
    else:
        ax = axis if isinstance(axis, tuple) else (axis,)
        ax = tuple(a + 1 if a >= 0 else a for a in ax)
        t = np.sum(x.tangent, axis=ax)
    return x._make(np.asarray(v, dtype=float), t)


def concat(parts):
    """Concatenate 1-D dual/plain arrays along the last axis."""
    parts = list(parts)
    k = next((p.k for p in parts if isinstance(p, Dual)), None)
    values = [np.atleast_1d(value_of(p)) for p in parts]
    v = np.concatenate(values)
    if k is None:
        return v
    tangents = []
    for p, pv in zip(parts, values):
        t = tangent_of(p, k)
        tangents.append(np.broadcast_to(_align_tangent(t, t.ndim - 1, pv.ndim),
                                        (k,) + pv.shape))
    tmpl = next(p for p in parts if isinstance(p, Dual))
    return tmpl._make(v, np.concatenate(tangents, axis=1))


def smooth_max(x, temperature: float):
    """Log-sum-exp soft maximum with the given temperature.

    Shifting by the (constant) hard max keeps the exponentials bounded; the
    expression is algebraically identical to T*log(sum(exp(x/T))).
    """
    shift = float(np.max(value_of(x)))
    return shift + temperature * log(dsum(exp((x - shift) * (1.0 / temperature))))


def gradient(f, point):
    """Forward-mode gradient of a scalar function at ``point`` (k scalars)."""
    out = f(*seed(point))
    if isinstance(out, Dual):
        if out.value.shape != ():
            raise ValueError("gradient() expects a scalar-valued function")
        return np.array(out.tangent, dtype=float).reshape(-1)
    return np.zeros(len(list(point)))


def gradient_check(f, point, step: float = 1e-6) -> float:
    """Max relative error between the dual gradient and central differences.

    Returns ``inf`` when any probe evaluation is non-finite, so threshold
    tests report the failure.
    """
    point = [float(p) for p in point]
    g_dual = gradient(f, point)
    errs = []
    for i in range(len(point)):
        lo = list(point)
        hi = list(point)
        lo[i] -= step
        hi[i] += step
        f_lo = float(value_of(f(*lo)))
        f_hi = float(value_of(f(*hi)))
        if not (math.isfinite(f_lo) and math.isfinite(f_hi) and math.isfinite(g_dual[i])):
            return math.inf
        g_fd = (f_hi - f_lo) / (2.0 * step)
        errs.append(abs(g_dual[i] - g_fd) / max(1.0, abs(g_fd)))
    return max(errs) if errs else 0.0
