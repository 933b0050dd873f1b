"""Finite-depth checks of the multiplicative ergodic theorem on small random cocycles.

Random generators are near-commuting perturbations of a fixed diagonal
matrix in a random orthonormal frame, which spreads the exponents by a
controlled gap; chosen generators are made singular by zeroing their
smallest singular value.  Symbols are i.i.d., drawn by hashing
``(seed, index)`` so the driver is defined on all of Z without history.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import mpmath
import numpy as np

from .cocycle_core import NEG_INF, MatrixCocycle, log_singular_values
from .oseledets_pushforward import (
    GroupMismatch,
    OseledetsApproximation,
    RankCollapse,
    equivariance_residual,
    pushforward_subspaces,
)
from .serialization import one_line
from .symbolic_drivers import Driver, PeriodicDriver

__all__ = [
    "HashedIIDDriver",
    "RandomCocycleSpec",
    "CheckTolerances",
    "SplittingReport",
    "generate",
    "projection_cocycle",
    "qr_exponent_oracle",
    "verify_splitting",
    "backward_singular_check",
    "BackwardTable",
]


class HashedIIDDriver(Driver):
    """Uniform i.i.d. symbols ``1..K``; symbol ``i`` is a hash of ``(seed, i)``."""

    def __init__(self, seed: int, K: int):
        if K < 1:
            raise ValueError("K must be >= 1")
        self.seed = int(seed)
        self.K = int(K)
        self.alphabet = tuple(range(1, K + 1))

    def symbol_at(self, i: int) -> int:
        h = hashlib.blake2b(f"{self.seed}:{i}".encode(), digest_size=8).digest()
        return 1 + int.from_bytes(h, "little") % self.K

    def __repr__(self) -> str:
        return f"HashedIIDDriver(seed={self.seed}, K={self.K})"


@dataclass(frozen=True)
class RandomCocycleSpec:
    d: int
    K: int = 2
    singular: int = 1
    low: float = -0.01   # bounds of the uniform perturbation entries
    high: float = 0.01
    decay: float = 0.5   # diagonal part is diag(exp(-decay * k))
    seed: int = 0

    def __post_init__(self):
        if self.d < 2:
            raise ValueError("d must be >= 2")
        if not 0 <= self.singular <= self.K:
            raise ValueError("singular count must lie in [0, K]")
        if self.low > self.high:
            raise ValueError("low > high")


def generate(spec: RandomCocycleSpec) -> MatrixCocycle:
    rng = np.random.default_rng(spec.seed)
    d = spec.d
    Q, R = np.linalg.qr(rng.normal(size=(d, d)))
    Q = Q * np.sign(np.diag(R))
    D = np.diag(np.exp(-spec.decay * np.arange(d)))
    gens = {}
    for k in range(1, spec.K + 1):
        G = Q @ (D + rng.uniform(spec.low, spec.high, (d, d))) @ Q.T
        if k <= spec.singular:
            U, s, Vt = np.linalg.svd(G)
            s[-1] = 0.0
            G = (U * s) @ Vt
        gens[k] = G
    driver = PeriodicDriver((1,)) if spec.K == 1 else HashedIIDDriver(spec.seed, spec.K)
    return MatrixCocycle(gens, driver)


def projection_cocycle(d: int = 3) -> MatrixCocycle:
    """Alternates a coordinate projection with its complement; every product of length 2 vanishes."""
    P = np.zeros((d, d))
    P[0, 0] = 1.0
    return MatrixCocycle({1: P, 2: np.eye(d) - P}, PeriodicDriver((1, 2)))


def qr_exponent_oracle(cocycle: MatrixCocycle, n_steps: int, base: int = 0, *,
                       underflow: float = 1e-13, persistence: float = 0.01) -> list[float]:
    """Exponents from accumulated ``log|R_jj|`` of repeated thin QR (float64).

    A diagonal entry below ``underflow`` times the largest entry of ``R`` is
    counted as collapsed; a column that collapses in more than a
    ``persistence`` fraction of steps is reported as ``-inf``.
    """
    d = cocycle.dim
    if n_steps < d:
        raise ValueError("n_steps must be >= d")
    Q = np.eye(d)
    acc = np.zeros(d)
    dead = np.zeros(d)
    for k in range(base, base + n_steps):
        Q, R = np.linalg.qr(cocycle.generator_at(k) @ Q)
        diag = np.abs(np.diag(R))
        z = diag <= underflow * max(np.abs(R).max(), 1e-300)
        dead += z
        acc += np.log(np.where(z, 1.0, diag))
    out = np.where(dead > persistence * n_steps, NEG_INF, acc / n_steps)
    return sorted(out.tolist(), reverse=True)


@dataclass(frozen=True)
class CheckTolerances:
    residual: float = 1e-6
    condition: float = 1e6
    growth: float = 1e-2
    oracle: float = 1e-2
    growth_window: tuple[int, int] = (20, 60)


@dataclass
class SplittingReport:
    entries: list[dict] = field(default_factory=list)
    approximations: list[OseledetsApproximation] = field(default_factory=list, repr=False)

    @property
    def passed(self) -> bool:
        return all(e["status"] == "PASS" for e in self.entries)

    def failures(self) -> list[dict]:
        return [e for e in self.entries if e["status"] != "PASS"]

    def worst(self, prop: str) -> float:
        vals = [e["value"] for e in self.entries if e["property"] == prop and e["value"] is not None]
        return max(vals) if vals else math.nan

    def add(self, base, prop, ok, value=None, tolerance=None, **extra):
        e = {"base": base, "property": prop, "status": "PASS" if ok else "FAIL",
             "value": value, "tolerance": tolerance}
        if value is not None and tolerance is not None and math.isfinite(value):
            e["margin"] = tolerance - value
        e.update(extra)
        self.entries.append(e)

    def to_jsonl(self) -> str:
        return "".join(one_line(e) + "\n" for e in self.entries)


def _growth_slopes(cocycle: MatrixCocycle, approx: OseledetsApproximation, window: tuple[int, int],
                   dps: int | None, seed: int) -> list[float]:
    """Least-squares slope of ``log|A^(n) v|`` over ``window`` for a random unit ``v`` in each finite group."""
    lo, hi = window
    rng = np.random.default_rng([seed, approx.base & 0xFFFFFFFF])
    slopes = []
    for g in approx.groups:
        if not g.finite:
            continue
        coef = rng.normal(size=g.multiplicity)
        ns, logs = [], []
        if dps is None:
            v = g.frame @ coef
            v = v / np.linalg.norm(v)
            for n in range(hi + 1):
                if n >= lo:
                    ns.append(n)
                    logs.append(math.log(np.linalg.norm(v)) if np.linalg.norm(v) > 0 else NEG_INF)
                v = cocycle.generator_at(approx.base + n) @ v
        else:
            with mpmath.workdps(dps):
                gens = {s: mpmath.matrix(G.tolist()) for s, G in cocycle.generators.items()}
                v = g.frame * mpmath.matrix(coef.tolist())
                v = v / mpmath.norm(v)
                for n in range(hi + 1):
                    if n >= lo:
                        ns.append(n)
                        nv = mpmath.norm(v)
                        logs.append(float(mpmath.log(nv)) if nv > 0 else NEG_INF)
                    v = gens[cocycle.driver.symbol_at(approx.base + n)] * v
        if not all(math.isfinite(x) for x in logs):
            slopes.append(NEG_INF)
            continue
        slopes.append(float(np.polyfit(ns, logs, 1)[0]))
    return slopes


def verify_splitting(cocycle: MatrixCocycle, depth: int, push: int, window: Iterable[int], *,
                     gap_tol: float = 1e-6, dps: int | None = None,
                     tolerances: CheckTolerances = CheckTolerances(),
                     oracle_steps: int | None = None, seed: int = 0) -> SplittingReport:
    """PASS/FAIL entries per (base, property) for the splitting at each base of ``window``.

    Properties: ``multiplicity`` (sum equals d and agrees across bases),
    ``direct_sum`` (condition number of stacked bases), ``equivariance``
    (worst finite-group residual against base + 1), ``growth`` (worst
    regression slope error) and, with ``oracle_steps``, ``oracle`` (QR
    exponents against the finite Gram-root exponents at the first base).
    """
    window = list(window)
    report = SplittingReport()
    d = cocycle.dim
    approx = {}
    for b in sorted(set(window) | {b + 1 for b in window}):
        try:
            approx[b] = pushforward_subspaces(cocycle, depth, push, b, gap_tol, dps=dps)
        except RankCollapse as exc:
            report.add(b, "rank", False, detail=str(exc))
    report.approximations = [approx[b] for b in window if b in approx]
    ref = approx.get(window[0]) if window else None
    for b in window:
        a, nxt = approx.get(b), approx.get(b + 1)
        if a is None or nxt is None:
            continue
        mult_ok = a.dim == d and ref is not None and a.multiplicities == ref.multiplicities
        report.add(b, "multiplicity", mult_ok, multiplicities=list(a.multiplicities),
                   exponents=list(a.exponents))
        cond = a.condition_number()
        report.add(b, "direct_sum", cond < tolerances.condition, cond, tolerances.condition)
        try:
            res = equivariance_residual(a, nxt, cocycle)
            worst = max(res, default=0.0)
            report.add(b, "equivariance", worst < tolerances.residual, worst, tolerances.residual,
                       per_group=res)
        except GroupMismatch as exc:
            report.add(b, "equivariance", False, detail=str(exc))
        slopes = _growth_slopes(cocycle, a, tolerances.growth_window, dps, seed)
        finite = [g.exponent for g in a.groups if g.finite]
        errs = [abs(s - lam) if math.isfinite(s) else math.inf for s, lam in zip(slopes, finite)]
        worst = max(errs, default=0.0)
        report.add(b, "growth", worst < tolerances.growth, worst, tolerances.growth, slopes=slopes)
    if oracle_steps and ref is not None:
        qr = qr_exponent_oracle(cocycle, oracle_steps, window[0])
        gram = [v for g in ref.groups for v in [g.exponent] * g.multiplicity]
        pairs = [(q, e) for q, e in zip(qr, gram) if math.isfinite(e)]
        errs = [abs(q - e) if math.isfinite(q) else math.inf for q, e in pairs]
        worst = max(errs, default=0.0)
        report.add(window[0], "oracle", worst < tolerances.oracle, worst, tolerances.oracle, qr=qr)
    return report


@dataclass(frozen=True)
class BackwardTable:
    depths: tuple[int, ...]
    rows: tuple[tuple[float, ...], ...]   # sorted log-singular-values / n of A^(n)(sigma^-n w)
    forward: tuple[float, ...]            # Gram-root values at the base, deepest depth
    steps: tuple[float, ...]              # sup distance between successive rows

    @property
    def final_gap(self) -> float:
        return _sup_distance(self.rows[-1], self.forward)


def _sup_distance(a: Sequence[float], b: Sequence[float]) -> float:
    worst = 0.0
    for x, y in zip(a, b):
        if math.isinf(x) or math.isinf(y):
            if x != y:
                return math.inf
            continue
        worst = max(worst, abs(x - y))
    return worst


def backward_singular_check(cocycle: MatrixCocycle, depths: Sequence[int], base: int = 0,
                            **kw) -> BackwardTable:
    """Log-singular-value rates of ``A^(n)(sigma^-n w)`` for each depth, plus the forward rates.

    Keyword arguments (``dps``, ``rank_tol``, ...) go to ``log_singular_values``.
    """
    depths = list(depths)
    if any(b <= a for a, b in zip(depths, depths[1:])):
        raise ValueError("depths must be increasing")
    rows = tuple(tuple(log_singular_values(cocycle, n, base - n, **kw)) for n in depths)
    forward = tuple(log_singular_values(cocycle, depths[-1], base, **kw))
    steps = tuple(_sup_distance(a, b) for a, b in zip(rows, rows[1:]))
    return BackwardTable(tuple(depths), rows, forward, steps)
