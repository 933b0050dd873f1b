"""Step functions on uniform partitions: norms, cell-mean projection, exact
transfer-operator decay checks and coherent-set overlap."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np

from .interval_maps import PiecewiseAffineMap, UniformPartition
from .symbolic_drivers import Driver

__all__ = [
    "NotARefinement",
    "NotInF",
    "RefinementTooCoarse",
    "NoPositivePart",
    "StepFunction",
    "CoherentFamily",
    "l1_norm",
    "variation",
    "bv_norm",
    "project_Q",
    "pf_step",
    "decay_check",
    "coherent_overlap",
    "j_family",
    "interval_cells",
]


class NotARefinement(ValueError):
    pass


class NotInF(ValueError):
    pass


class RefinementTooCoarse(ValueError):
    pass


class NoPositivePart(ValueError):
    pass


@dataclass(frozen=True)
class StepFunction:
    """Function constant on each cell of a uniform partition.

    Values may be floats or Fractions; exact inputs give exact norms.
    """

    partition: UniformPartition
    values: tuple

    def __post_init__(self):
        vals = tuple(self.values.tolist() if isinstance(self.values, np.ndarray) else self.values)
        if len(vals) != self.partition.cells:
            raise ValueError(f"{len(vals)} values for {self.partition.cells} cells")
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_values(cls, values: Sequence, circle: bool = True) -> "StepFunction":
        return cls(UniformPartition(len(values), circle), tuple(values))

    @property
    def cells(self) -> int:
        return self.partition.cells

    def __sub__(self, other: "StepFunction") -> "StepFunction":
        if other.partition != self.partition:
            raise ValueError("partitions differ")
        return StepFunction(self.partition, tuple(a - b for a, b in zip(self.values, other.values)))

    def scaled(self, c) -> "StepFunction":
        return StepFunction(self.partition, tuple(c * v for v in self.values))

    def refine(self, factor: int) -> "StepFunction":
        part = UniformPartition(self.cells * factor, self.partition.circle)
        return StepFunction(part, tuple(v for v in self.values for _ in range(factor)))

    def to_json_dict(self) -> dict:
        return {"cells": self.cells, "values": [float(v) for v in self.values]}

    def midpoints(self) -> list[tuple[float, float]]:
        w = 1.0 / self.cells
        return [((k + 0.5) * w, float(v)) for k, v in enumerate(self.values)]


def _width(f: StepFunction):
    return Fraction(1, f.cells) if any(isinstance(v, (Fraction, int)) for v in f.values) else 1.0 / f.cells


def l1_norm(f: StepFunction):
    return sum(abs(v) for v in f.values) * _width(f)


def variation(f: StepFunction):
    vals = f.values
    total = sum(abs(b - a) for a, b in zip(vals, vals[1:]))
    if f.partition.circle and len(vals) > 1:
        total += abs(vals[0] - vals[-1])
    return total


def bv_norm(f: StepFunction):
    return max(l1_norm(f), variation(f))


def project_Q(f: StepFunction, base: UniformPartition) -> StepFunction:
    """Cell means of ``f`` on the coarser partition ``base``."""
    if f.cells % base.cells:
        raise NotARefinement(f"{f.cells} cells do not refine {base.cells}")
    k = f.cells // base.cells
    means = tuple(sum(f.values[i * k:(i + 1) * k]) / k for i in range(base.cells))
    if any(isinstance(v, Fraction) for v in means):
        means = tuple(Fraction(v) for v in means)
    return StepFunction(base, means)


def _output_cells(f: PiecewiseAffineMap, cells: int) -> int:
    out = f.cells
    for a in f.slopes:
        if a.denominator != 1:
            raise ValueError("exact step-function transfer needs integer slopes")
        need = cells // math.gcd(cells, abs(a.numerator))
        out = out * need // math.gcd(out, need)
    return out


def _transfer_indices(f: PiecewiseAffineMap, cells: int) -> tuple[int, np.ndarray, np.ndarray]:
    """``(L, src, dst)``: input cell ``src[k]`` covers output cell ``dst[k]`` under ``f``.

    Each input cell on a ``cells``-grid is sent onto a run of whole cells of the
    ``L``-grid; all index arithmetic is in integers.
    """
    if cells % f.cells:
        raise RefinementTooCoarse(f"{cells} cells do not refine the {f.cells}-cell Markov partition")
    L = _output_cells(f, cells)
    per = cells // f.cells
    src, dst = [], []
    for j in range(f.cells):
        a = f.slopes[j].numerator
        b = f.offsets[j] * L
        if b.denominator != 1:
            raise RefinementTooCoarse(f"offset {f.offsets[j]} is off the {L}-cell grid")
        run = abs(a) * L // cells
        i = np.arange(j * per, (j + 1) * per, dtype=np.int64)
        left = (a * (i if a > 0 else i + 1) * L) // cells + int(b)
        for t in range(run):
            src.append(i)
            dst.append((left + t) % L)
    return L, np.concatenate(src), np.concatenate(dst)


def pf_step(f: PiecewiseAffineMap, g: StepFunction) -> StepFunction:
    """Exact transfer operator of ``f`` applied to a step function on a refinement of its partition.

    The image lives on the coarsest grid that refines the Markov partition and
    on which every input cell maps onto whole output cells.
    """
    L, src, dst = _transfer_indices(f, g.cells)
    per = g.cells // f.cells
    weights = [Fraction(1) / abs(f.slopes[j]) for j in range(f.cells)]
    out = np.array([Fraction(0)] * L, dtype=object)
    vals = [Fraction(v) for v in g.values]
    for s_, d_ in zip(src.tolist(), dst.tolist()):
        out[d_] += vals[s_] * weights[s_ // per]
    return StepFunction(UniformPartition(L, g.partition.circle), tuple(out))


def _uniform_slope(maps: Iterable[PiecewiseAffineMap]) -> int | None:
    slopes = {abs(a) for f in maps for a in f.slopes}
    if len(slopes) == 1:
        (a,) = slopes
        if a.denominator == 1:
            return a.numerator
    return None


def decay_check(f: StepFunction, maps: Mapping[int, PiecewiseAffineMap], driver: Driver, n: int,
                base: int = 0) -> tuple[Fraction, Fraction]:
    """``(var(P^(n) f), s * s**-n * var(f))`` exactly, for ``f`` with zero mean on every cell.

    ``s`` is the common absolute slope of the family.  ``f`` must live on a
    refinement of the Markov partition by at least ``s**n`` so that the
    ``n``-step image is still finer than the partition.
    """
    part = next(iter(maps.values())).partition
    s = _uniform_slope(maps.values())
    if s is None:
        raise ValueError("decay_check needs a family with one common integer slope")
    if f.cells % part.cells or (f.cells // part.cells) % s ** n:
        raise RefinementTooCoarse(f"{f.cells} cells do not refine {part.cells} by {s}**{n}")
    exact = [v if isinstance(v, (int, Fraction)) else Fraction(v) for v in f.values]
    # integer numerators over a common denominator; each step divides by s
    den = math.lcm(*{v.denominator for v in exact})
    num = np.array([v.numerator * (den // v.denominator) for v in exact], dtype=object)
    per = f.cells // part.cells
    if any(num.reshape(part.cells, per).sum(axis=1)):
        raise NotInF("f has a nonzero mean on some cell")
    var0 = _int_variation(num, f.partition.circle)
    cells = f.cells
    for k in range(base, base + n):
        L, src, dst = _transfer_indices(maps[driver.symbol_at(k)], cells)
        out = np.zeros(L, dtype=object)
        np.add.at(out, dst, num[src])
        num, cells = out, L
    measured = Fraction(_int_variation(num, f.partition.circle), den * s ** n)
    bound = Fraction(s) ** (1 - n) * Fraction(var0, den)
    return measured, bound


def _int_variation(num: np.ndarray, circle: bool) -> int:
    total = int(np.abs(np.diff(num)).sum()) if len(num) > 1 else 0
    if circle and len(num) > 1:
        total += abs(int(num[0]) - int(num[-1]))
    return total


def coherent_overlap(w: StepFunction, cells: Iterable[int]) -> float:
    """Share of the positive part's mass sitting on the given 1-based cells."""
    pos = [max(float(v), 0.0) for v in w.values]
    total = sum(pos)
    if total <= 0.0:
        raise NoPositivePart("step function has no positive part")
    return sum(pos[i - 1] for i in set(cells)) / total


def interval_cells(i: int, cells: int = 9) -> frozenset[int]:
    """1-based cells of ``J_i = [(i-1)/3, i/3]`` on a partition divisible by 3."""
    k = cells // 3
    return frozenset(range((i - 1) * k + 1, i * k + 1))


@dataclass(frozen=True)
class CoherentFamily:
    """Symbol -> union of cells (the interval carrying the structure at that symbol)."""

    rule: Mapping[int, frozenset[int]]

    def __call__(self, symbol: int) -> frozenset[int]:
        try:
            return self.rule[symbol]
        except KeyError:
            raise ValueError(f"symbol {symbol} outside the family's alphabet") from None

    def along(self, driver: Driver, start: int, stop: int) -> list[frozenset[int]]:
        return [self(driver.symbol_at(k)) for k in range(start, stop)]


_FAMILIES = {
    "thm1": CoherentFamily({s: interval_cells(s) for s in (1, 2, 3)}),
    "thm2_sec7": CoherentFamily({s: interval_cells(s if s <= 3 else s - 3) for s in range(1, 7)}),
}


def j_family(example: str, symbol: int | None = None):
    """The coherent family of a worked example, or its cell set at ``symbol``."""
    try:
        fam = _FAMILIES[example]
    except KeyError:
        raise ValueError(f"unknown example {example!r}") from None
    return fam if symbol is None else fam(symbol)
