"""Forward-mode derivative engine.

Two scalar types carry derivatives through ordinary Python arithmetic:

* :class:`Dual1` holds a value and a tuple of first partials.  Its value and
  partials may themselves be any scalar type (floats, numpy arrays, or other
  ``Dual1`` objects), which is how second derivatives and vectorised grid
  evaluations are obtained.  Every seeding call gets a fresh ``tag`` so that
  nested differentiations never confuse their perturbations.
* :class:`Dual2` holds value, gradient and a symmetric Hessian over plain floats.

The module-level functions (:func:`exp`, :func:`log`, ..., :func:`power`,
:func:`divide`) dispatch on the argument type, so code written against them is
generic over plain reals, arrays, ``Dual1`` and ``Dual2``.
"""

import itertools
import math
from numbers import Real

import numpy as np

from .errors import DomainError

__all__ = [
    "Dual1",
    "Dual2",
    "exp",
    "log",
    "sin",
    "cos",
    "sqrt",
    "power",
    "divide",
    "grad",
    "jacobian",
    "hess",
    "second_order",
    "fd_grad",
    "gradient_generic",
    "jacobian_generic",
]

_tags = itertools.count(1)


def _real(x):
    while isinstance(x, (Dual1, Dual2)):
        x = x.value
    return x


def _is_integral(y):
    y = np.asarray(y, dtype=float)
    return bool(np.all(y == np.round(y)))


class Dual1:
    """First-order dual number ``value + sum_i partials[i] * eps_i``."""

    __slots__ = ("value", "partials", "tag")
    __array_ufunc__ = None  # make numpy defer to our reflected operators

    def __init__(self, value, partials, tag=0):
        self.value = value
        self.partials = tuple(partials)
        self.tag = tag

    @classmethod
    def constant(cls, value, d, tag=0):
        return cls(value, (0.0,) * d, tag)

    @classmethod
    def variable(cls, value, i, d, tag=0):
        return cls(value, tuple(1.0 if j == i else 0.0 for j in range(d)), tag)

    def __repr__(self):
        return f"Dual1({self.value!r}, {self.partials!r}, tag={self.tag})"

    # Level handling: an operand with a lower tag (or no tag) is a constant
    # with respect to this perturbation; one with a higher tag wraps us.
    def _outer(self, other):
        return isinstance(other, Dual1) and other.tag > self.tag

    def _same(self, other):
        return isinstance(other, Dual1) and other.tag == self.tag

    def _chain(self, f0, f1):
        return Dual1(f0, (f1 * p for p in self.partials), self.tag)

    def __neg__(self):
        return Dual1(-self.value, (-p for p in self.partials), self.tag)

    def __pos__(self):
        return self

    def __add__(self, other):
        if self._outer(other):
            return other.__radd__(self)
        if self._same(other):
            return Dual1(self.value + other.value,
                         (a + b for a, b in zip(self.partials, other.partials)), self.tag)
        if isinstance(other, Dual2):
            return NotImplemented
        return Dual1(self.value + other, self.partials, self.tag)

    def __radd__(self, other):
        return self.__add__(other)

    def __sub__(self, other):
        if self._outer(other):
            return other.__rsub__(self)
        if self._same(other):
            return Dual1(self.value - other.value,
                         (a - b for a, b in zip(self.partials, other.partials)), self.tag)
        if isinstance(other, Dual2):
            return NotImplemented
        return Dual1(self.value - other, self.partials, self.tag)

    def __rsub__(self, other):
        return Dual1(other - self.value, (-p for p in self.partials), self.tag)

    def __mul__(self, other):
        if self._outer(other):
            return other.__rmul__(self)
        if self._same(other):
            return Dual1(
                self.value * other.value,
                (self.value * b + other.value * a
                 for a, b in zip(self.partials, other.partials)),
                self.tag,
            )
        if isinstance(other, Dual2):
            return NotImplemented
        return Dual1(self.value * other, (p * other for p in self.partials), self.tag)

    def __rmul__(self, other):
        return Dual1(other * self.value, (other * p for p in self.partials), self.tag)

    def __truediv__(self, other):
        if self._outer(other):
            return other.__rtruediv__(self)
        if self._same(other):
            if np.any(_real(other.value) == 0):
                raise DomainError("division by a dual number with zero value")
            q = self.value / other.value
            return Dual1(q, ((a - q * b) / other.value
                             for a, b in zip(self.partials, other.partials)), self.tag)
        if isinstance(other, Dual2):
            return NotImplemented
        if np.any(_real(other) == 0):
            raise DomainError("division by zero")
        return Dual1(self.value / other, (p / other for p in self.partials), self.tag)

    def __rtruediv__(self, other):
        if np.any(_real(self.value) == 0):
            raise DomainError("division by a dual number with zero value")
        q = other / self.value
        return Dual1(q, (-q * p / self.value for p in self.partials), self.tag)

    def __pow__(self, other):
        if self._outer(other):
            return other.__rpow__(self)
        if self._same(other):
            if np.any(_real(self.value) <= 0):
                raise DomainError("dual exponent requires a positive base")
            return exp(other * log(self))
        if isinstance(other, Dual2):
            return NotImplemented
        if _is_integral(other):
            if np.all(np.asarray(other) == 0):
                return Dual1(power(self.value, 0.0), (0.0 * p for p in self.partials), self.tag)
        elif np.any(_real(self.value) <= 0):
            raise DomainError("non-integer power of a non-positive base")
        return self._chain(power(self.value, other), other * power(self.value, other - 1))

    def __rpow__(self, other):
        if np.any(_real(other) <= 0):
            raise DomainError("dual exponent requires a positive base")
        return exp(self * log(other))

    def exp(self):
        e = exp(self.value)
        return self._chain(e, e)

    def log(self):
        return self._chain(log(self.value), divide(1.0, self.value))

    def sin(self):
        return self._chain(sin(self.value), cos(self.value))

    def cos(self):
        return self._chain(cos(self.value), -sin(self.value))

    def sqrt(self):
        if np.any(_real(self.value) <= 0):
            raise DomainError("sqrt derivative undefined at non-positive argument")
        s = sqrt(self.value)
        return self._chain(s, 0.5 / s)


class Dual2:
    """Second-order dual over plain floats: value, gradient and Hessian."""

    __slots__ = ("value", "gradient", "hessian")
    __array_ufunc__ = None

    def __init__(self, value, gradient, hessian):
        self.value = float(value)
        self.gradient = np.asarray(gradient, dtype=float)
        self.hessian = np.asarray(hessian, dtype=float)

    @classmethod
    def constant(cls, value, d):
        return cls(value, np.zeros(d), np.zeros((d, d)))

    @classmethod
    def variable(cls, value, i, d):
        g = np.zeros(d)
        g[i] = 1.0
        return cls(value, g, np.zeros((d, d)))

    def __repr__(self):
        return f"Dual2({self.value!r}, {self.gradient!r}, {self.hessian!r})"

    def _chain(self, f0, f1, f2):
        g = self.gradient
        return Dual2(f0, f1 * g, f1 * self.hessian + f2 * np.outer(g, g))

    @staticmethod
    def _check(other):
        if isinstance(other, Dual1):
            raise TypeError("cannot mix Dual1 and Dual2 operands")
        return isinstance(other, Dual2)

    def __neg__(self):
        return Dual2(-self.value, -self.gradient, -self.hessian)

    def __pos__(self):
        return self

    def __add__(self, other):
        if self._check(other):
            return Dual2(self.value + other.value, self.gradient + other.gradient,
                         self.hessian + other.hessian)
        return Dual2(self.value + other, self.gradient, self.hessian)

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if self._check(other):
            a, b = self.value, other.value
            ga, gb = self.gradient, other.gradient
            cross = np.outer(ga, gb) + np.outer(gb, ga)
            return Dual2(a * b, a * gb + b * ga, a * other.hessian + b * self.hessian + cross)
        return Dual2(self.value * other, self.gradient * other, self.hessian * other)

    __rmul__ = __mul__

    def reciprocal(self):
        v = self.value
        if v == 0:
            raise DomainError("division by a dual number with zero value")
        return self._chain(1.0 / v, -1.0 / v**2, 2.0 / v**3)

    def __truediv__(self, other):
        if self._check(other):
            return self * other.reciprocal()
        if other == 0:
            raise DomainError("division by zero")
        return self * (1.0 / other)

    def __rtruediv__(self, other):
        return other * self.reciprocal()

    def __pow__(self, other):
        if self._check(other):
            if self.value <= 0:
                raise DomainError("dual exponent requires a positive base")
            return exp(other * log(self))
        y = float(other)
        v = self.value
        if y == 0:
            return Dual2.constant(1.0, len(self.gradient))
        if y != round(y) and v <= 0:
            raise DomainError("non-integer power of a non-positive base")
        f1 = y * power(v, y - 1) if y != 1 else 1.0
        f2 = y * (y - 1) * power(v, y - 2) if y not in (0.0, 1.0) else 0.0
        return self._chain(power(v, y), f1, f2)

    def __rpow__(self, other):
        if other <= 0:
            raise DomainError("dual exponent requires a positive base")
        return exp(self * math.log(other))

    def exp(self):
        e = math.exp(self.value)
        return self._chain(e, e, e)

    def log(self):
        v = self.value
        if v <= 0:
            raise DomainError("log of a non-positive number")
        return self._chain(math.log(v), 1.0 / v, -1.0 / v**2)

    def sin(self):
        s, c = math.sin(self.value), math.cos(self.value)
        return self._chain(s, c, -s)

    def cos(self):
        s, c = math.sin(self.value), math.cos(self.value)
        return self._chain(c, -s, -c)

    def sqrt(self):
        v = self.value
        if v <= 0:
            raise DomainError("sqrt derivative undefined at non-positive argument")
        s = math.sqrt(v)
        return self._chain(s, 0.5 / s, -0.25 / (s * v))


_DUALS = (Dual1, Dual2)


def exp(x):
    if isinstance(x, _DUALS):
        return x.exp()
    return np.exp(x)


def log(x):
    if isinstance(x, _DUALS):
        return x.log()
    if np.any(np.asarray(x) <= 0):
        raise DomainError("log of a non-positive number")
    return np.log(x)


def sin(x):
    if isinstance(x, _DUALS):
        return x.sin()
    return np.sin(x)


def cos(x):
    if isinstance(x, _DUALS):
        return x.cos()
    return np.cos(x)


def sqrt(x):
    if isinstance(x, _DUALS):
        return x.sqrt()
    if np.any(np.asarray(x) < 0):
        raise DomainError("sqrt of a negative number")
    return np.sqrt(x)


def divide(a, b):
    if not isinstance(b, _DUALS) and np.any(np.asarray(b) == 0):
        raise DomainError("division by zero")
    return a / b


def power(a, b):
    if isinstance(a, _DUALS) or isinstance(b, _DUALS):
        return a**b
    base = np.asarray(a, dtype=float)
    expo = np.asarray(b, dtype=float)
    integral = expo == np.round(expo)
    if np.any(~integral & (base <= 0)):
        raise DomainError("non-integer power of a non-positive base")
    if np.any((base == 0) & (expo < 0)):
        raise DomainError("zero raised to a negative power")
    return np.power(a, b) if np.ndim(a) or np.ndim(b) else float(np.power(float(a), float(b)))


FUNCTIONS = {"sin": sin, "cos": cos, "exp": exp, "log": log, "sqrt": sqrt}


# ---------------------------------------------------------------------------
# differentiation drivers


def _scalarise(v):
    return float(v) if isinstance(v, (Real, np.generic)) or np.ndim(v) == 0 else v


def _split(r, tag, d):
    if isinstance(r, Dual1) and r.tag == tag:
        return r.value, list(r.partials)
    return r, [0.0] * d


def gradient_generic(f, xs):
    """Value and list of partials of ``f`` at ``xs``; works for any scalar type."""
    xs = list(xs)
    d = len(xs)
    tag = next(_tags)
    seeds = [Dual1.variable(x, i, d, tag) for i, x in enumerate(xs)]
    return _split(f(seeds), tag, d)


def jacobian_generic(f, xs):
    """Values and Jacobian rows of a sequence-valued ``f``; generic over scalars."""
    xs = list(xs)
    d = len(xs)
    tag = next(_tags)
    seeds = [Dual1.variable(x, i, d, tag) for i, x in enumerate(xs)]
    values, rows = [], []
    for r in f(seeds):
        v, p = _split(r, tag, d)
        values.append(v)
        rows.append(p)
    return values, rows


def _as_points(x):
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1)
    return x, [_scalarise(row) for row in x]


def _stack(entries, shape):
    return np.array([np.broadcast_to(np.asarray(e, dtype=float), shape) for e in entries])


def _check_finite(values, partials_first_axis):
    bad = ~np.isfinite(partials_first_axis)
    if np.any(bad):
        idx = int(np.argwhere(bad.reshape(bad.shape[0], -1).any(axis=1))[0, 0])
        raise DomainError("non-finite derivative", index=idx)
    if not np.all(np.isfinite(values)):
        raise DomainError("non-finite function value")


def grad(f, x):
    """Exact forward-mode gradient of the scalar map ``f`` at ``x``.

    ``f`` receives a list of scalars.  ``x`` may have trailing batch axes,
    shape ``(d, ...)``, in which case the result has the same shape.
    """
    x, xs = _as_points(x)
    value, partials = gradient_generic(f, xs)
    out = _stack(partials, x.shape[1:])
    _check_finite(value, out)
    return out


def jacobian(f, x):
    """Jacobian ``J[m, i] = d f_m / d x_i`` of a sequence-valued map."""
    x, xs = _as_points(x)
    values, rows = jacobian_generic(f, xs)
    out = np.array([_stack(row, x.shape[1:]) for row in rows])
    for row in out:
        _check_finite(values, row)
    return out


def _nested_hessian(f, xs):
    def inner(zs):
        return gradient_generic(f, zs)[1]

    values, rows = jacobian_generic(inner, xs)
    return values, rows


def hess(f, x):
    """Exact Hessian via nested ``Dual1``; symmetric bit-for-bit."""
    x, xs = _as_points(x)
    _, rows = _nested_hessian(f, xs)
    h = np.array([_stack(row, x.shape[1:]) for row in rows])
    _check_finite(0.0, h)
    return 0.5 * (h + np.swapaxes(h, 0, 1))


def second_order(f, x):
    """Value, gradient and Hessian of ``f`` at a single point, as a :class:`Dual2`."""
    x, xs = _as_points(x)
    if x.ndim != 1:
        raise ValueError("second_order takes a single point")
    first, rows = _nested_hessian(f, xs)
    h = np.array([_stack(row, ()) for row in rows])
    h = 0.5 * (h + h.T)
    value, g = gradient_generic(f, xs)
    g = _stack(g, ())
    _check_finite(value, np.concatenate([g[:, None], h], axis=1))
    return Dual2(float(_real(value)), g, h)


def fd_grad(f, x, h=1e-5):
    """Central finite-difference gradient; independent oracle for :func:`grad`."""
    if not h > 0:
        raise ValueError(f"finite-difference step must be positive, got {h}")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.empty(len(x))
    for i in range(len(x)):
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        out[i] = (float(f([float(v) for v in xp])) - float(f([float(v) for v in xm]))) / (2 * h)
    return out
