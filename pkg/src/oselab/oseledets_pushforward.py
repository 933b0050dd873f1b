"""Approximate Oseledets subspaces by pushing Gram-root eigenspaces forward.

At a base ``b`` the eigenspaces ``U_j`` of the Gram root of depth ``M``
are computed at ``b - N`` and pushed through the ``N``-step product that
ends at ``b``.  Groups with exponent ``-inf`` are not pushed; they are
taken as the kernel of the depth-``M`` product at ``b`` itself.

Every function accepts ``dps``: when given, products, SVDs and pushes run
in mpmath at that many decimal digits and only the final bases are rounded
to float64.  This is needed whenever the spread of exponents times the
depth exceeds what double precision can resolve.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import mpmath
import numpy as np

from .cocycle_core import (
    NEG_INF,
    MatrixCocycle,
    gram_decomposition,
    group_log_values,
    scaled_product,
)
from .interval_maps import UniformPartition
from .stepfn_analysis import StepFunction, l1_norm

__all__ = [
    "NotSymmetric",
    "RankCollapse",
    "DimensionMismatch",
    "GroupMismatch",
    "SubspaceBasis",
    "OseledetsGroup",
    "OseledetsApproximation",
    "fix_signs",
    "eigenspace_groups",
    "pushforward_subspaces",
    "subspace_distance",
    "delta_diagnostic",
    "delta_sweep",
    "equivariance_residual",
    "sweep_rows",
    "rows_to_csv",
]


class NotSymmetric(ValueError):
    pass


class RankCollapse(ArithmeticError):
    pass


class DimensionMismatch(ValueError):
    pass


class GroupMismatch(ValueError):
    pass


def fix_signs(Q: np.ndarray) -> np.ndarray:
    """Flip columns so that each column's largest-magnitude entry is positive."""
    Q = np.array(Q, dtype=float, copy=True)
    for j in range(Q.shape[1]):
        col = Q[:, j]
        # first index within round-off of the maximum keeps ties deterministic
        peak = np.abs(col).max()
        k = int(np.flatnonzero(np.abs(col) >= peak * (1 - 1e-9))[0])
        if col[k] < 0:
            Q[:, j] = -col
    return Q


@dataclass(frozen=True)
class SubspaceBasis:
    """Orthonormal columns spanning a subspace of R^d."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.ndim == 1:
            m = m[:, None]
        if m.shape[1] < 1 or m.shape[1] > m.shape[0]:
            raise ValueError(f"basis shape {m.shape} is not d x k with 1 <= k <= d")
        if not np.allclose(m.T @ m, np.eye(m.shape[1]), atol=1e-12, rtol=0):
            raise ValueError("basis columns are not orthonormal")
        object.__setattr__(self, "matrix", m)

    @classmethod
    def from_frame(cls, X) -> "SubspaceBasis":
        """Orthonormalize the columns of ``X`` (assumed independent) with the sign convention."""
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        Q, _ = np.linalg.qr(X)
        Q, _ = np.linalg.qr(Q)  # second pass squeezes orthogonality to round-off
        return cls(fix_signs(Q))

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    @property
    def ambient(self) -> int:
        return self.matrix.shape[0]

    def projector(self) -> np.ndarray:
        return self.matrix @ self.matrix.T


def subspace_distance(a, b) -> float:
    """Sine of the largest principal angle between two equal-dimensional subspaces.

    Equals the spectral norm of the difference of orthogonal projectors, a
    metric on subspaces of fixed dimension.  It vanishes exactly when the
    spans agree, and so does the Hausdorff distance between the unit-ball
    sections.  It is evaluated as ``|(I - A A^T) B|_2``, which keeps
    accuracy for tiny angles where ``sqrt(1 - cos^2)`` would not.
    """
    A = a.matrix if isinstance(a, SubspaceBasis) else SubspaceBasis.from_frame(a).matrix
    B = b.matrix if isinstance(b, SubspaceBasis) else SubspaceBasis.from_frame(b).matrix
    if A.shape[0] != B.shape[0]:
        raise DimensionMismatch(f"ambient dimensions {A.shape[0]} and {B.shape[0]}")
    if A.shape[1] != B.shape[1]:
        raise DimensionMismatch(f"subspace dimensions {A.shape[1]} and {B.shape[1]}")
    resid = B - A @ (A.T @ B)
    return float(min(1.0, np.linalg.norm(resid, 2)))


def eigenspace_groups(psi, gap_tol: float = 1e-6, *, sym_tol: float = 1e-10,
                      zero_tol: float = 1e-12) -> list[tuple[tuple[float, ...], SubspaceBasis]]:
    """Cluster eigenpairs of a symmetric PSD matrix by gaps in log-eigenvalue.

    Eigenvalues at or below ``zero_tol`` times the largest are exact zeros and
    form one group.  Groups come in descending order.
    """
    psi = np.asarray(psi, dtype=float)
    scale = max(np.abs(psi).max(), 1e-300)
    if psi.ndim != 2 or psi.shape[0] != psi.shape[1] or np.abs(psi - psi.T).max() > sym_tol * scale:
        raise NotSymmetric("matrix is not symmetric")
    vals, vecs = np.linalg.eigh(psi)
    order = np.argsort(vals)[::-1]
    vals, vecs = vals[order], vecs[:, order]
    top = vals[0]
    if vals[-1] < -1e-8 * max(top, 1e-300):
        raise NotSymmetric("matrix is not positive semi-definite")
    logs = [math.log(v) if v > zero_tol * top else NEG_INF for v in vals]
    out = []
    for g in group_log_values(logs, gap_tol):
        out.append((tuple(float(max(vals[i], 0.0)) if logs[i] > NEG_INF else 0.0 for i in g),
                    SubspaceBasis.from_frame(vecs[:, g])))
    return out


@dataclass(frozen=True)
class OseledetsGroup:
    exponent: float
    multiplicity: int
    basis: SubspaceBasis
    conditioning: float  # smallest singular value of the pushed frame over |A^(N)|; 1 if not pushed
    frame: object = field(default=None, compare=False, repr=False)  # raw pushed frame, working precision

    @property
    def finite(self) -> bool:
        return self.exponent > NEG_INF


@dataclass(frozen=True)
class OseledetsApproximation:
    groups: tuple[OseledetsGroup, ...]
    depth: int
    push: int
    base: int

    @property
    def exponents(self) -> tuple[float, ...]:
        return tuple(g.exponent for g in self.groups)

    @property
    def multiplicities(self) -> tuple[int, ...]:
        return tuple(g.multiplicity for g in self.groups)

    @property
    def dim(self) -> int:
        return sum(self.multiplicities)

    def stacked(self) -> np.ndarray:
        return np.hstack([g.basis.matrix for g in self.groups])

    def direct_sum_sigma_min(self) -> float:
        return float(np.linalg.svd(self.stacked(), compute_uv=False)[-1])

    def condition_number(self) -> float:
        s = np.linalg.svd(self.stacked(), compute_uv=False)
        return float(s[0] / s[-1]) if s[-1] > 0 else math.inf

    def flag(self, j: int) -> SubspaceBasis:
        """``V_j``: span of groups ``j..l`` (1-based)."""
        if not 1 <= j <= len(self.groups):
            raise IndexError(j)
        return SubspaceBasis.from_frame(np.hstack([g.basis.matrix for g in self.groups[j - 1:]]))

    def to_json_dict(self) -> dict:
        return {
            "base": self.base, "depth": self.depth, "push": self.push,
            "exponents": list(self.exponents), "multiplicities": list(self.multiplicities),
            "conditioning": [g.conditioning for g in self.groups],
            "bases": [g.basis.matrix.tolist() for g in self.groups],
        }


# --------------------------------------------------------------------------
# float64 and mpmath back ends


class _Float:
    def __init__(self, cocycle: MatrixCocycle, rank_tol: float):
        self.c = cocycle
        self.rank_tol = rank_tol

    def product(self, n, base):
        A, _ = scaled_product(self.c, n, base)
        return A

    def svd(self, A):
        U, s, Vt = np.linalg.svd(A)
        return s, Vt.T

    def gram(self, depth, base):
        g = gram_decomposition(self.c, depth, base, rank_tol=self.rank_tol)
        return list(g.log_values), g.vectors

    def gram_from(self, prefix, n_prefix, depth, base):
        return self.gram(depth, base)

    def push(self, A, V, cols):
        X = A @ V[:, cols]
        s = np.linalg.svd(X, compute_uv=False)
        top = np.linalg.svd(A, compute_uv=False)[0] if A.size else 0.0
        return X, X, (float(s[-1] / top) if top > 0 else 0.0)

    def to_float(self, X):
        return np.asarray(X, dtype=float)


class _MP:
    """The same operations in mpmath at ``dps`` digits."""

    def __init__(self, cocycle: MatrixCocycle, dps: int, rank_tol: float | None):
        self.c = cocycle
        self.dps = dps
        self.rank_tol = rank_tol if rank_tol is not None else 10.0 ** -(dps - 20)
        with mpmath.workdps(dps):
            self.gens = {s: mpmath.matrix(g.tolist()) for s, g in cocycle.generators.items()}

    def product(self, n, base, start=None):
        with mpmath.workdps(self.dps):
            A = start if start is not None else mpmath.eye(self.c.dim)
            for k in range(base, base + n):
                A = self.gens[self.c.driver.symbol_at(k)] * A
            return A

    def svd(self, A):
        with mpmath.workdps(self.dps):
            U, s, V = mpmath.svd_r(A)
            return [s[i] for i in range(len(s))], V.T

    def _gram_of(self, A, depth):
        with mpmath.workdps(self.dps):
            s, V = self.svd(A)
            top = s[0]
            logs = [float(mpmath.log(x) / depth) if top > 0 and x > self.rank_tol * top else NEG_INF
                    for x in s]
            return logs, V

    def gram(self, depth, base):
        return self._gram_of(self.product(depth, base), depth)

    def gram_from(self, prefix, n_prefix, depth, base):
        return self._gram_of(self.product(depth - n_prefix, base + n_prefix, start=prefix), depth)

    def push(self, A, V, cols):
        with mpmath.workdps(self.dps):
            Vc = mpmath.matrix([[V[i, j] for j in cols] for i in range(V.rows)])
            X = A * Vc
            sx = mpmath.svd_r(X, compute_uv=False)
            sa = mpmath.svd_r(A, compute_uv=False)
            cond = float(sx[len(sx) - 1] / sa[0]) if sa[0] > 0 else 0.0
            # rescale columns before rounding so tiny pushed vectors survive float64
            cols_f = []
            for j in range(X.cols):
                col = [X[i, j] for i in range(X.rows)]
                nrm = mpmath.norm(mpmath.matrix(col))
                cols_f.append([float(x / nrm) if nrm > 0 else 0.0 for x in col])
            Xf = np.array(cols_f).T
            return X, (self._orth_float(X) if X.cols > 1 else Xf), cond

    def _orth_float(self, X):
        with mpmath.workdps(self.dps):
            Q, _ = mpmath.qr(X, mode="skinny")
            return np.array(Q.tolist(), dtype=float)

    def to_float(self, X):
        with mpmath.workdps(self.dps):
            return np.array(X.tolist(), dtype=float)


def _backend(cocycle, dps, rank_tol):
    if dps is None:
        return _Float(cocycle, 1e-13 if rank_tol is None else rank_tol)
    return _MP(cocycle, dps, rank_tol)


def pushforward_subspaces(cocycle: MatrixCocycle, depth: int | None = None, push: int = 0, base: int = 0,
                          gap_tol: float = 1e-6, *, dps: int | None = None,
                          rank_tol: float | None = None) -> OseledetsApproximation:
    """Oseledets subspace approximations ``W_j^{(M,N)}`` at ``base``.

    ``depth`` defaults to ``2 * push``.  Exponent estimates come from the Gram
    root at ``base - push``.  Raises ``RankCollapse`` if a finite group's
    pushed frame is numerically singular relative to the push product.
    """
    if depth is None:
        depth = 2 * push
    if not depth >= push >= 0 or depth < 1:
        raise ValueError("need depth >= push >= 0 and depth >= 1")
    be = _backend(cocycle, dps, rank_tol)
    start = base - push
    An = be.product(push, start)
    logs, V = be.gram_from(An, push, depth, start) if dps is not None else be.gram(depth, start)
    groups = group_log_values(logs, gap_tol)
    out = []
    for g in groups:
        if logs[g[0]] == NEG_INF:
            continue
        raw, X, cond = be.push(An, V, g)
        if not cond > be.rank_tol:
            raise RankCollapse(f"pushed frame of group {len(out) + 1} at base {base} has conditioning {cond:.3g}")
        lam = float(np.mean([logs[i] for i in g]))
        out.append(OseledetsGroup(lam, len(g), SubspaceBasis.from_frame(X), cond, raw))
    dead = [i for g in groups if logs[g[0]] == NEG_INF for i in g]
    if dead:
        # kernel of the depth-M product at the base itself: smallest right singular vectors
        _, V0 = be.gram(depth, base)
        V0 = be.to_float(V0)
        m = len(dead)
        out.append(OseledetsGroup(NEG_INF, m, SubspaceBasis.from_frame(V0[:, -m:]), 1.0))
    return OseledetsApproximation(tuple(out), depth, push, base)


# --------------------------------------------------------------------------
# diagnostics


def equivariance_residual(approx: OseledetsApproximation, approx_next: OseledetsApproximation,
                          cocycle: MatrixCocycle) -> list[float]:
    """Distance between ``A(w) W_j(w)`` and ``W_j(sigma w)`` for every finite group."""
    if approx.multiplicities != approx_next.multiplicities:
        raise GroupMismatch(f"multiplicities {approx.multiplicities} vs {approx_next.multiplicities}")
    A = cocycle.generator_at(approx.base)
    out = []
    for g, h in zip(approx.groups, approx_next.groups):
        if not g.finite:
            continue
        X = A @ g.basis.matrix
        if np.linalg.svd(X, compute_uv=False)[-1] <= 1e-13 * max(np.linalg.norm(A, 2), 1e-300):
            out.append(1.0)
            continue
        out.append(subspace_distance(SubspaceBasis.from_frame(X), h.basis))
    return out


def _l1_unit(v: np.ndarray, geometry: UniformPartition) -> np.ndarray:
    nrm = l1_norm(StepFunction(geometry, tuple(float(x) for x in v)))
    if nrm == 0:
        raise RankCollapse("zero vector cannot be L1-normalised")
    return v / nrm


def delta_diagnostic(cocycle: MatrixCocycle, step_geometry: UniformPartition | None, push: int,
                     base: int = 0, *, depth: int | None = None, gap_tol: float = 1e-6,
                     dps: int | None = None, group: int = 2,
                     approx: tuple[OseledetsApproximation, OseledetsApproximation] | None = None) -> float:
    """L1 mismatch between ``W_2`` at ``base + 1`` and the one-step image of ``W_2`` at ``base``.

    Both vectors are normalised to unit L1 norm as step functions; the
    result is the smaller of the two sign alignments.
    """
    geometry = step_geometry or UniformPartition(cocycle.dim)
    a0, a1 = approx or (
        pushforward_subspaces(cocycle, depth, push, base, gap_tol, dps=dps),
        pushforward_subspaces(cocycle, depth, push, base + 1, gap_tol, dps=dps),
    )
    for a in (a0, a1):
        if len(a.groups) < group or a.groups[group - 1].multiplicity != 1:
            raise GroupMismatch(f"group {group} is not one-dimensional at base {a.base}")
    w0 = a0.groups[group - 1].basis.matrix[:, 0]
    w1 = a1.groups[group - 1].basis.matrix[:, 0]
    u = _l1_unit(cocycle.generator_at(a0.base) @ w0, geometry)
    v = _l1_unit(w1, geometry)
    return min(l1_norm(StepFunction(geometry, tuple(v - u))), l1_norm(StepFunction(geometry, tuple(v + u))))


def delta_sweep(cocycle: MatrixCocycle, pushes: Iterable[int], base: int = 0,
                step_geometry: UniformPartition | None = None, **kw) -> list[tuple[int, float]]:
    return [(n, delta_diagnostic(cocycle, step_geometry, n, base, **kw)) for n in pushes]


def sweep_rows(cocycle: MatrixCocycle, pushes: Iterable[int], base: int = 0, *, gap_tol: float = 1e-6,
               dps: int | None = None, step_geometry: UniformPartition | None = None) -> list[dict]:
    """One row per (N, group): exponent estimate, Delta (group 2 only) and equivariance residual."""
    rows = []
    for n in pushes:
        a0 = pushforward_subspaces(cocycle, None, n, base, gap_tol, dps=dps)
        a1 = pushforward_subspaces(cocycle, None, n, base + 1, gap_tol, dps=dps)
        try:
            resid = equivariance_residual(a0, a1, cocycle)
        except GroupMismatch:
            resid = []
        try:
            delta = delta_diagnostic(cocycle, step_geometry, n, base, approx=(a0, a1))
        except GroupMismatch:
            delta = math.nan
        for j, g in enumerate(a0.groups, start=1):
            rows.append({
                "N": n, "group": j, "exponent": g.exponent, "multiplicity": g.multiplicity,
                "delta": delta if j == 2 else math.nan,
                "residual": resid[j - 1] if g.finite and j <= len(resid) else math.nan,
            })
    return rows


def _fmt(x) -> str:
    if isinstance(x, float):
        if math.isnan(x):
            return ""
        if math.isinf(x):
            return "-inf" if x < 0 else "inf"
        return format(x, ".17g")
    return str(x)


def rows_to_csv(rows: Sequence[dict]) -> str:
    if not rows:
        return ""
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: _fmt(v) for k, v in r.items()})
    return buf.getvalue()
