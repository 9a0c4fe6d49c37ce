"""Exact-integer counter-vector helpers.

Counter vectors are plain tuples of Python ints so all arithmetic is exact
and unbounded.  Every value in this package that represents event counts
(block deltas, measurement deltas, loop vectors, cone targets) uses this
representation.
"""

from __future__ import annotations

from typing import Iterable

Vec = tuple[int, ...]


def vadd(a: Vec, b: Vec) -> Vec:
    return tuple(x + y for x, y in zip(a, b, strict=True))


def vsub(a: Vec, b: Vec) -> Vec:
    return tuple(x - y for x, y in zip(a, b, strict=True))


def vscale(k: int, a: Vec) -> Vec:
    return tuple(k * x for x in a)


def vsum(vectors: Iterable[Vec], dim: int) -> Vec:
    acc = [0] * dim
    for v in vectors:
        for i, x in enumerate(v):
            acc[i] += x
    return tuple(acc)


def zero(dim: int) -> Vec:
    return (0,) * dim


def is_nonneg(a: Vec) -> bool:
    return all(x >= 0 for x in a)


def is_zero(a: Vec) -> bool:
    return all(x == 0 for x in a)
