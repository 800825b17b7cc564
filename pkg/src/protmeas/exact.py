"""Exact rational linear algebra.

Only what the coupling design needs: Gauss-Jordan elimination over
:class:`fractions.Fraction` and one-sided finite-difference weights built
on top of it.
"""

from __future__ import annotations

from fractions import Fraction
from math import factorial
from typing import Sequence


def solve_rational(matrix: Sequence[Sequence[int | Fraction]],
                   rhs: Sequence[int | Fraction]) -> list[Fraction]:
    """Solve ``matrix @ x = rhs`` exactly.

    Raises
    ------
    ValueError
        If the matrix is not square or is singular.
    """
    n = len(matrix)
    if any(len(row) != n for row in matrix) or len(rhs) != n:
        raise ValueError("solve_rational needs a square system")
    aug = [[Fraction(v) for v in row] + [Fraction(r)]
           for row, r in zip(matrix, rhs)]

    for col in range(n):
        pivot = next((r for r in range(col, n) if aug[r][col] != 0), None)
        if pivot is None:
            raise ValueError("singular system")
        aug[col], aug[pivot] = aug[pivot], aug[col]
        inv = 1 / aug[col][col]
        aug[col] = [v * inv for v in aug[col]]
        for r in range(n):
            if r != col and aug[r][col] != 0:
                factor = aug[r][col]
                aug[r] = [a - factor * b for a, b in zip(aug[r], aug[col])]
    return [row[n] for row in aug]


def forward_difference_weights(derivative: int, accuracy: int) -> list[Fraction]:
    """Weights ``w`` with ``f^(derivative)(0) ~ sum_i w_i f(i h) / h**derivative``.

    Uses ``derivative + accuracy`` nodes at ``0, h, 2h, ...`` so the
    truncation error is ``O(h**accuracy)``.
    """
    if derivative < 0 or accuracy < 1:
        raise ValueError("need derivative >= 0 and accuracy >= 1")
    m = derivative + accuracy
    # moment conditions: sum_i w_i i^k = k! delta_{k, derivative}
    matrix = [[Fraction(i) ** k for i in range(m)] for k in range(m)]
    rhs = [factorial(derivative) if k == derivative else 0 for k in range(m)]
    return solve_rational(matrix, rhs)
