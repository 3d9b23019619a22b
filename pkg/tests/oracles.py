"""Independent reference implementations used by several test modules."""

import math
from fractions import Fraction

import numpy as np


def matmul_loops(A, B):
    """Triple-loop product, independent of numpy's matmul."""
    n, m, p = len(A), len(B), len(B[0])
    return [[sum(A[i][k] * B[k][j] for k in range(m)) for j in range(p)] for i in range(n)]


def rotation_oracle(phi, theta, psi):
    c, s = math.cos, math.sin
    Rz = [[c(psi), s(psi), 0], [-s(psi), c(psi), 0], [0, 0, 1]]
    Ry = [[c(theta), 0, -s(theta)], [0, 1, 0], [s(theta), 0, c(theta)]]
    Rx = [[1, 0, 0], [0, c(phi), s(phi)], [0, -s(phi), c(phi)]]
    return np.array(matmul_loops(Rx, matmul_loops(Ry, Rz)))


def gini_exact(labels) -> Fraction:
    n = len(labels)
    if n == 0:
        return Fraction(0)
    ones = sum(labels)
    return 1 - Fraction(ones, n) ** 2 - Fraction(n - ones, n) ** 2


def brute_force_split(X, y, min_leaf=1):
    """Exhaustive Gini-optimal split with exact arithmetic.

    Tie rule: lowest feature index first, then lowest threshold.
    Returns ``(feature, lo, hi, score)`` where the threshold lies between
    the adjacent distinct values ``lo`` and ``hi``; ``None`` if nothing splits.
    """
    n = len(y)
    best = None
    for j in range(len(X[0])):
        values = sorted({row[j] for row in X})
        for lo, hi in zip(values, values[1:]):
            mid = (Fraction(lo) + Fraction(hi)) / 2
            left = [y[i] for i in range(n) if X[i][j] <= mid]
            right = [y[i] for i in range(n) if X[i][j] > mid]
            if len(left) < min_leaf or len(right) < min_leaf:
                continue
            score = (len(left) * gini_exact(left) + len(right) * gini_exact(right)) / n
            if best is None or score < best[3]:
                best = (j, lo, hi, score)
    return best
