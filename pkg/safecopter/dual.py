"""Forward-mode differentiation with tagged dual numbers.

A ``Dual`` carries a primal value and a tangent, both numpy arrays (or nested
``Dual`` objects), so ordinary numpy-style code written with ``+ - * / @``,
indexing and ``.T`` is differentiated exactly. Every ``jvp`` call draws a fresh
tag; operations combine operands of the highest tag and treat lower-tag duals as
constants, which keeps nested derivatives (a derivative evaluated inside another
one) free of perturbation confusion.
"""

import dataclasses
import itertools
import operator

import numpy as np

_tags = itertools.count(1)


class Dual:
    __slots__ = ("real", "dual", "tag")

    # make numpy defer binary operators to the reflected methods below
    __array_ufunc__ = None

    def __init__(self, real, dual, tag):
        self.real = real
        self.dual = dual
        self.tag = tag

    def __add__(self, other):
        return _add(self, other)

    def __radd__(self, other):
        return _add(other, self)

    def __sub__(self, other):
        return _sub(self, other)

    def __rsub__(self, other):
        return _sub(other, self)

    def __mul__(self, other):
        return _product(operator.mul, self, other)

    def __rmul__(self, other):
        return _product(operator.mul, other, self)

    def __matmul__(self, other):
        return _product(operator.matmul, self, other)

    def __rmatmul__(self, other):
        return _product(operator.matmul, other, self)

    def __truediv__(self, other):
        return _divide(self, other)

    def __rtruediv__(self, other):
        return _divide(other, self)

    def __neg__(self):
        return Dual(-self.real, -self.dual, self.tag)

    def __pos__(self):
        return self

    def __getitem__(self, index):
        return Dual(self.real[index], self.dual[index], self.tag)

    @property
    def T(self):
        return Dual(self.real.T, self.dual.T, self.tag)

    @property
    def shape(self):
        return np.shape(self.real)

    def __repr__(self):
        return f"Dual({self.real!r}, {self.dual!r}, tag={self.tag})"


def primal(value):
    """Strip every dual layer and return the underlying number or array."""
    while isinstance(value, Dual):
        value = value.real
    return value


def _top_tag(a, b):
    tags = [x.tag for x in (a, b) if isinstance(x, Dual)]
    return max(tags)


def _split(value, tag):
    if isinstance(value, Dual) and value.tag == tag:
        return value.real, value.dual
    return value, None


def _broadcast(tangent, shape):
    if np.shape(tangent) == shape:
        return tangent
    return tangent + np.zeros(shape)


def _add(a, b):
    tag = _top_tag(a, b)
    ar, ad = _split(a, tag)
    br, bd = _split(b, tag)
    real = ar + br
    if bd is None:
        dual = ad
    elif ad is None:
        dual = bd
    else:
        dual = ad + bd
    return Dual(real, _broadcast(dual, np.shape(real)), tag)


def _sub(a, b):
    tag = _top_tag(a, b)
    ar, ad = _split(a, tag)
    br, bd = _split(b, tag)
    real = ar - br
    if bd is None:
        dual = ad
    elif ad is None:
        dual = -bd
    else:
        dual = ad - bd
    return Dual(real, _broadcast(dual, np.shape(real)), tag)


def _product(op, a, b):
    """Product rule for any bilinear ``op`` (elementwise or matrix product)."""
    tag = _top_tag(a, b)
    ar, ad = _split(a, tag)
    br, bd = _split(b, tag)
    real = op(ar, br)
    if bd is None:
        dual = op(ad, br)
    elif ad is None:
        dual = op(ar, bd)
    else:
        dual = op(ad, br) + op(ar, bd)
    return Dual(real, dual, tag)


def _divide(a, b):
    tag = _top_tag(a, b)
    ar, ad = _split(a, tag)
    br, bd = _split(b, tag)
    real = ar / br
    if bd is None:
        dual = ad / br
    elif ad is None:
        dual = -(real * bd) / br
    else:
        dual = (ad - real * bd) / br
    return Dual(real, _broadcast(dual, np.shape(real)), tag)


def _seed(value, tangent, tag):
    if tangent is None:
        return value
    if dataclasses.is_dataclass(value):
        return dataclasses.replace(
            value,
            **{
                field.name: _seed(
                    getattr(value, field.name), getattr(tangent, field.name), tag
                )
                for field in dataclasses.fields(value)
            },
        )
    return Dual(value, tangent, tag)


def _extract(result, tag):
    if isinstance(result, tuple):
        return tuple(_extract(item, tag) for item in result)
    if isinstance(result, Dual) and result.tag == tag:
        return result.real, result.dual
    # result does not depend on the seeded direction
    return result, result * 0.0


def value_and_jvp(fn, point, tangent):
    """Evaluate ``fn(point)`` and its directional derivative along ``tangent``.

    ``point`` is an array or a dataclass of arrays; ``tangent`` has the same
    structure, with ``None`` for any field whose tangent is identically zero.
    Tuples returned by ``fn`` yield a tuple of ``(value, derivative)`` pairs.
    """
    tag = next(_tags)
    return _extract(fn(_seed(point, tangent, tag)), tag)


def jvp(fn, point, tangent):
    """Directional derivative of ``fn`` at ``point`` along ``tangent``."""
    out = value_and_jvp(fn, point, tangent)
    if isinstance(out, tuple) and out and isinstance(out[0], tuple):
        return tuple(derivative for _, derivative in out)
    return out[1]
