"""Piecewise-affine expanding Markov maps on a uniform partition.

All geometry is exact: slopes, offsets and evaluation points are
``fractions.Fraction``.  Cells are right-open, ``B_j = [(j-1)/M, j/M)``,
and are labelled 1..M in every set-valued API (arrays stay 0-based).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "NotMarkov",
    "UniformPartition",
    "PiecewiseAffineMap",
    "PFMatrix",
    "THM1_OFFSETS",
    "S_OFFSETS",
    "S_ROTATION_POWERS",
    "rotation_pf",
    "rotation",
    "compose",
    "build_paper_map",
    "paper_map",
    "evaluate",
    "markov_image",
    "transition_matrix",
    "pf_matrix",
    "preserves_lebesgue",
    "invariant_mass_ratio",
    "map_from_spec",
    "map_to_spec",
    "load_map_file",
]

# Rows i = 1, 2, 3 of the offset table for T_1, T_2, T_3.
THM1_OFFSETS: tuple[tuple[int, ...], ...] = (
    (6, 7, 6, 1, 3, 0, 4, 3, 0),
    (3, 6, 5, 0, 0, 8, 3, 6, 2),
    (0, 6, 7, 1, 0, 6, 3, 3, 4),
)
S_OFFSETS: tuple[int, ...] = (3, 4, 3, 7, 0, 6, 1, 0, 6)


class NotMarkov(ValueError):
    """An image endpoint falls strictly inside a partition cell."""


def _frac(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, float):
        raise TypeError("floats are not accepted; pass an int, str or Fraction")
    return Fraction(value)


@dataclass(frozen=True)
class UniformPartition:
    cells: int
    circle: bool = True

    def __post_init__(self):
        if self.cells < 1:
            raise ValueError("a partition needs at least one cell")

    @property
    def width(self) -> Fraction:
        return Fraction(1, self.cells)

    def cell_of(self, x: Fraction) -> int:
        """0-based index of the right-open cell containing ``x``."""
        x = _frac(x)
        if not 0 <= x < 1:
            raise ValueError(f"point {x} outside [0, 1)")
        return math.floor(x * self.cells)

    def endpoints(self, label: int) -> tuple[Fraction, Fraction]:
        self._check_label(label)
        return Fraction(label - 1, self.cells), Fraction(label, self.cells)

    def _check_label(self, label: int) -> None:
        if not 1 <= label <= self.cells:
            raise IndexError(f"cell label {label} outside 1..{self.cells}")


@dataclass(frozen=True)
class PiecewiseAffineMap:
    """``x -> slopes[j] * x + offsets[j]`` on cell ``j`` (mod 1 on the circle)."""

    partition: UniformPartition
    slopes: tuple[Fraction, ...]
    offsets: tuple[Fraction, ...]
    expanding: bool = True

    def __post_init__(self):
        slopes = tuple(_frac(a) for a in self.slopes)
        offsets = tuple(_frac(c) for c in self.offsets)
        M = self.partition.cells
        if len(slopes) != M or len(offsets) != M:
            raise ValueError(f"need {M} slopes and offsets, got {len(slopes)}/{len(offsets)}")
        if any(a == 0 for a in slopes):
            raise ValueError("slopes must be nonzero")
        if self.expanding and any(abs(a) <= 1 for a in slopes):
            raise ValueError("expanding map requires |slope| > 1 on every cell")
        if self.partition.circle:
            offsets = tuple(c - math.floor(c) for c in offsets)
        object.__setattr__(self, "slopes", slopes)
        object.__setattr__(self, "offsets", offsets)

    @property
    def cells(self) -> int:
        return self.partition.cells

    def __call__(self, x) -> Fraction:
        return evaluate(self, x)


def rotation(cells: int, shift) -> PiecewiseAffineMap:
    """Circle rotation ``x -> x + shift mod 1`` (an isometry, not expanding)."""
    part = UniformPartition(cells, circle=True)
    shift = _frac(shift)
    return PiecewiseAffineMap(part, (Fraction(1),) * cells, (shift,) * cells, expanding=False)


def _global_affine(f: PiecewiseAffineMap) -> tuple[Fraction, Fraction] | None:
    """Return (a, c) if ``f(x) = a x + c mod 1`` on the whole circle with integer ``a``."""
    if not f.partition.circle:
        return None
    a = f.slopes[0]
    if a.denominator != 1 or any(s != a for s in f.slopes):
        return None
    c = f.offsets[0]
    if any((ck - c).denominator != 1 for ck in f.offsets):
        return None
    return a, c


def compose(outer: PiecewiseAffineMap, inner: PiecewiseAffineMap) -> PiecewiseAffineMap:
    """Exact ``outer o inner`` resolved into a single per-cell offset table.

    Works when ``outer`` is globally affine mod 1 (rotations, ``3x mod 1``), or
    when ``inner`` sends every cell into a single cell of ``outer``.
    """
    if outer.partition != inner.partition:
        raise ValueError("maps live on different partitions")
    part = inner.partition
    glob = _global_affine(outer)
    slopes, offsets = [], []
    for j in range(part.cells):
        a, c = inner.slopes[j], inner.offsets[j]
        if glob is not None:
            A, C = glob
            slopes.append(A * a)
            offsets.append(A * c + C)
            continue
        lo, hi = part.endpoints(j + 1)
        y0, y1 = sorted((a * lo + c, a * hi + c))
        shift = math.floor(y0) if part.circle else 0
        y0, y1 = y0 - shift, y1 - shift
        k = math.floor(y0 * part.cells)
        if y1 > Fraction(k + 1, part.cells):
            raise ValueError(f"cell {j + 1} of the inner map straddles cells of the outer map")
        slopes.append(outer.slopes[k] * a)
        offsets.append(outer.slopes[k] * (c - shift) + outer.offsets[k])
    expanding = all(abs(s) > 1 for s in slopes)
    return PiecewiseAffineMap(part, tuple(slopes), tuple(offsets), expanding=expanding)


def _paper_affine(offset_row: Sequence[int]) -> PiecewiseAffineMap:
    # 3x - j/3 + g_j/9 on B_j, j = 1..9
    part = UniformPartition(9, circle=True)
    offsets = tuple(Fraction(-j, 3) + Fraction(g, 9) for j, g in enumerate(offset_row, start=1))
    return PiecewiseAffineMap(part, (Fraction(3),) * 9, offsets)


def _power(f: PiecewiseAffineMap, k: int) -> PiecewiseAffineMap:
    out = rotation(f.cells, 0)
    for _ in range(k):
        out = compose(f, out)
    return out


# (left power of rho, right power of rho) for S_1..S_6 = rho^l o S o rho^r
S_ROTATION_POWERS = ((1, 0), (2, 2), (0, 1), (2, 0), (0, 2), (1, 1))


def build_paper_map(family: str, index: int = 1) -> PiecewiseAffineMap:
    """Maps of the worked examples on the ninths partition of the circle.

    ``family`` is one of ``"T123"``, ``"S"``, ``"S1to6"``, ``"T4to6"``.
    """
    rho = rotation(9, Fraction(1, 3))
    if family == "T123":
        if not 1 <= index <= 3:
            raise IndexError("T123 index must be 1..3")
        return _paper_affine(THM1_OFFSETS[index - 1])
    if family == "S":
        if index != 1:
            raise IndexError("S is a single map; index must be 1")
        return _paper_affine(S_OFFSETS)
    if family == "S1to6":
        if not 1 <= index <= 6:
            raise IndexError("S1to6 index must be 1..6")
        left, right = S_ROTATION_POWERS[index - 1]
        S = _paper_affine(S_OFFSETS)
        return compose(_power(rho, left), compose(S, _power(rho, right)))
    if family == "T4to6":
        if not 4 <= index <= 6:
            raise IndexError("T4to6 index must be 4..6")
        return compose(rho, _paper_affine(THM1_OFFSETS[index - 4]))
    raise ValueError(f"unknown map family {family!r}")


def paper_map(name: str) -> PiecewiseAffineMap:
    """Named builder: ``"T1"``..``"T6"``, ``"S"``, ``"S1"``..``"S6"``, ``"rho"``."""
    if name == "rho":
        return rotation(9, Fraction(1, 3))
    if name == "S":
        return build_paper_map("S")
    if len(name) == 2 and name[1].isdigit():
        k = int(name[1])
        try:
            if name[0] == "T":
                return build_paper_map("T123" if k <= 3 else "T4to6", k)
            if name[0] == "S":
                return build_paper_map("S1to6", k)
        except IndexError:
            pass
    raise ValueError(f"unknown map name {name!r}")


def evaluate(f: PiecewiseAffineMap, x) -> Fraction:
    x = _frac(x)
    j = f.partition.cell_of(x)
    y = f.slopes[j] * x + f.offsets[j]
    if f.partition.circle:
        y -= math.floor(y)
    return y


def markov_image(f: PiecewiseAffineMap, cell: int) -> frozenset[int]:
    """Labels of the cells whose union is ``f(B_cell)``."""
    part = f.partition
    lo, hi = part.endpoints(cell)
    a, c = f.slopes[cell - 1], f.offsets[cell - 1]
    y0, y1 = sorted((a * lo + c, a * hi + c))
    if y1 - y0 > 1:
        raise NotMarkov(f"image of cell {cell} wraps the circle more than once")
    k0, k1 = y0 * part.cells, y1 * part.cells
    if k0.denominator != 1 or k1.denominator != 1:
        raise NotMarkov(f"image [{y0}, {y1}] of cell {cell} does not align with the partition")
    k0, k1 = int(k0), int(k1)
    if not part.circle and (k0 < 0 or k1 > part.cells):
        raise NotMarkov(f"image of cell {cell} leaves [0, 1]")
    return frozenset((k % part.cells) + 1 for k in range(k0, k1))


def transition_matrix(f: PiecewiseAffineMap) -> np.ndarray:
    """0/1 matrix with ``gamma[i, j] = 1`` iff ``f(B_j)`` contains ``B_i``."""
    M = f.cells
    gamma = np.zeros((M, M), dtype=np.int64)
    for j in range(1, M + 1):
        for i in markov_image(f, j):
            gamma[i - 1, j - 1] = 1
    return gamma


@dataclass(frozen=True)
class PFMatrix:
    """Exact transfer-operator matrix on the indicator basis of the cells."""

    entries: tuple[tuple[Fraction, ...], ...]

    @property
    def size(self) -> int:
        return len(self.entries)

    def as_object(self) -> np.ndarray:
        return np.array(self.entries, dtype=object)

    def as_float(self) -> np.ndarray:
        return np.array([[float(p) for p in row] for row in self.entries])

    def column_sums(self) -> list[Fraction]:
        return [sum((row[j] for row in self.entries), Fraction(0)) for j in range(self.size)]

    def row_sums(self) -> list[Fraction]:
        return [sum(row, Fraction(0)) for row in self.entries]

    def apply(self, v: Sequence) -> list[Fraction]:
        return [sum((p * _frac(x) for p, x in zip(row, v)), Fraction(0)) for row in self.entries]


def pf_matrix(f: PiecewiseAffineMap) -> PFMatrix:
    gamma = transition_matrix(f)
    M = f.cells
    rows = tuple(
        tuple(Fraction(int(gamma[i, j])) / abs(f.slopes[j]) for j in range(M)) for i in range(M)
    )
    return PFMatrix(rows)


def preserves_lebesgue(f: PiecewiseAffineMap) -> bool:
    return all(s == 1 for s in pf_matrix(f).row_sums())


def invariant_mass_ratio(f: PiecewiseAffineMap, source: Iterable[int], target: Iterable[int]) -> Fraction:
    """``m(U ∩ f^{-1} V) / m(U)`` for unions of cells ``U``, ``V`` (exact)."""
    source, target = sorted(set(source)), sorted(set(target))
    if not source:
        raise ValueError("source set is empty")
    P = pf_matrix(f).entries
    # cells share a width, so it cancels from the ratio
    mass = sum((P[i - 1][j - 1] for j in source for i in target), Fraction(0))
    return mass / len(source)


def map_to_spec(f: PiecewiseAffineMap) -> dict:
    return {
        "cells": f.cells,
        "circle": f.partition.circle,
        "slopes": [str(a) for a in f.slopes],
        "offsets": [str(c) for c in f.offsets],
    }


def map_from_spec(spec: dict) -> PiecewiseAffineMap:
    try:
        part = UniformPartition(int(spec["cells"]), bool(spec.get("circle", True)))
        slopes = tuple(Fraction(str(s)) for s in spec["slopes"])
        offsets = tuple(Fraction(str(c)) for c in spec["offsets"])
    except KeyError as exc:
        raise ValueError(f"map spec is missing field {exc.args[0]!r}") from None
    return PiecewiseAffineMap(part, slopes, offsets, expanding=bool(spec.get("expanding", True)))


def rotation_pf(power: int, cells: int = 9) -> PFMatrix:
    """PF matrix of the rotation by ``power`` thirds; a permutation matrix."""
    return pf_matrix(rotation(cells, Fraction(power % 3, 3)))


def load_map_file(path: str | Path) -> PiecewiseAffineMap:
    with open(path) as fh:
        return map_from_spec(json.load(fh))
