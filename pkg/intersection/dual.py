# intersection/dual.py

"""
Forward-mode derivative arithmetic on numpy arrays.

A ``Dual`` carries a value and its derivative with respect to one scalar
parameter (the transform argument ``s``, or ``z`` through ``s(z)``). The
kernel formulas are written once and evaluated either on plain complex
numbers or on duals, which gives exact derivatives without finite
differences.
"""

import numpy as np

# Below this modulus phi1 and its derivative use their Taylor series.
SERIES_RADIUS = 1e-2
_PHI_COEFFS = [1.0 / np.prod(np.arange(1, n + 2, dtype=float)) for n in range(9)]
_DPHI_COEFFS = [(n + 1) / np.prod(np.arange(1, n + 3, dtype=float)) for n in range(9)]


class Dual:
    __slots__ = ('value', 'slope')
    # Keep numpy from broadcasting over Dual objects; it must defer to the reflected operators.
    __array_ufunc__ = None

    def __init__(self, value, slope=0.0):
        self.value = value
        self.slope = slope

    def __repr__(self):
        return f"Dual({self.value!r}, {self.slope!r})"

    def __neg__(self):
        return Dual(-self.value, -self.slope)

    def __add__(self, other):
        if isinstance(other, Dual):
            return Dual(self.value + other.value, self.slope + other.slope)
        return Dual(self.value + other, self.slope)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Dual):
            return Dual(self.value - other.value, self.slope - other.slope)
        return Dual(self.value - other, self.slope)

    def __rsub__(self, other):
        return Dual(other - self.value, -self.slope)

    def __mul__(self, other):
        if isinstance(other, Dual):
            return Dual(self.value * other.value, self.slope * other.value + self.value * other.slope)
        return Dual(self.value * other, self.slope * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual):
            return Dual(self.value / other.value,
                        (self.slope * other.value - self.value * other.slope) / other.value ** 2)
        return Dual(self.value / other, self.slope / other)

    def __rtruediv__(self, other):
        return Dual(other / self.value, -other * self.slope / self.value ** 2)

    def __pow__(self, exponent):
        if exponent == 0:
            return Dual(np.ones_like(self.value), np.zeros_like(self.slope))
        return Dual(self.value ** exponent, exponent * self.value ** (exponent - 1) * self.slope)

    def __getitem__(self, key):
        return Dual(_index(self.value, key), _index(self.slope, key))


def _index(array, key):
    return array[key] if np.ndim(array) else array


def value_of(x):
    return x.value if isinstance(x, Dual) else x


def slope_of(x):
    return x.slope if isinstance(x, Dual) else np.zeros_like(x)


def exp(x):
    if isinstance(x, Dual):
        e = np.exp(x.value)
        return Dual(e, e * x.slope)
    return np.exp(x)


def stack(items, axis=0):
    """np.stack for a list mixing arrays and duals."""
    if any(isinstance(item, Dual) for item in items):
        return Dual(np.stack([np.asarray(value_of(item)) for item in items], axis=axis),
                    np.stack([np.broadcast_to(slope_of(item), np.shape(value_of(item))) for item in items], axis=axis))
    return np.stack(items, axis=axis)


def total(x, axis=None):
    if isinstance(x, Dual):
        return Dual(np.sum(x.value, axis=axis), np.sum(x.slope, axis=axis))
    return np.sum(x, axis=axis)


def _phi_values(x):
    x = np.asarray(x, dtype=complex)
    small = np.abs(x) < SERIES_RADIUS
    safe = np.where(small, 1.0, x)
    direct = (np.exp(safe) - 1.0) / safe
    series = np.polynomial.polynomial.polyval(x, _PHI_COEFFS)
    return np.where(small, series, direct)


def _dphi_values(x):
    x = np.asarray(x, dtype=complex)
    small = np.abs(x) < SERIES_RADIUS
    safe = np.where(small, 1.0, x)
    direct = (np.exp(safe) * (safe - 1.0) + 1.0) / safe ** 2
    series = np.polynomial.polynomial.polyval(x, _DPHI_COEFFS)
    return np.where(small, series, direct)


def phi1(x):
    """(e^x - 1) / x, continuous at 0 and stable near it."""
    if isinstance(x, Dual):
        return Dual(_phi_values(x.value), _dphi_values(x.value) * x.slope)
    return _phi_values(x)
