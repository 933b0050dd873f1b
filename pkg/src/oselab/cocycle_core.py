"""Matrix cocycles over a driver: products, Gram roots, Lyapunov spectra."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import mpmath
import numpy as np

from .interval_maps import PFMatrix, PiecewiseAffineMap, pf_matrix
from .symbolic_drivers import Driver, PeriodicDriver

__all__ = [
    "NEG_INF",
    "ConstantSlopeRequired",
    "MatrixCocycle",
    "MapCocycle",
    "SpectrumReport",
    "LyapunovEstimate",
    "GramRoot",
    "charpoly",
    "exact_eigenvalues",
    "spectrum",
    "product",
    "scaled_product",
    "gram_decomposition",
    "gram_root",
    "group_log_values",
    "lyapunov_spectrum",
    "log_singular_values",
    "periodic_exponents",
    "essential_bound",
    "exceptional_exponents",
]

NEG_INF = float("-inf")

# Products deeper than this are accumulated with rescaling.
RESCALE_DEPTH = 200
RESCALE_EVERY = 32


class ConstantSlopeRequired(ValueError):
    pass


@dataclass
class MatrixCocycle:
    """Generator table (symbol -> square matrix) paired with a driver.

    ``exact`` optionally carries rational versions of the generators; when
    present, spectra of periodic products are computed exactly.
    """

    generators: Mapping[int, np.ndarray]
    driver: Driver
    exact: Mapping[int, np.ndarray] | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        gens = {int(k): np.asarray(v, dtype=float) for k, v in self.generators.items()}
        dims = {g.shape for g in gens.values()}
        if len(dims) != 1:
            raise ValueError(f"generators have differing shapes {dims}")
        (shape,) = dims
        if len(shape) != 2 or shape[0] != shape[1]:
            raise ValueError(f"generators must be square, got {shape}")
        missing = set(getattr(self.driver, "alphabet", ())) - set(gens)
        if missing:
            raise ValueError(f"no generator for symbols {sorted(missing)}")
        self.generators = gens

    @property
    def dim(self) -> int:
        return next(iter(self.generators.values())).shape[0]

    def generator_at(self, i: int) -> np.ndarray:
        return self.generators[self.driver.symbol_at(i)]

    def product(self, n: int, base: int = 0) -> np.ndarray:
        return product(self, n, base)

    def shifted(self, driver: Driver) -> "MatrixCocycle":
        return MatrixCocycle(self.generators, driver, self.exact)


@dataclass
class MapCocycle:
    """Symbol -> piecewise-affine map, with the induced matrix cocycle."""

    maps: Mapping[int, PiecewiseAffineMap]
    driver: Driver

    def pf_matrices(self) -> dict[int, PFMatrix]:
        return {s: pf_matrix(f) for s, f in self.maps.items()}

    def matrix_cocycle(self) -> MatrixCocycle:
        pfs = self.pf_matrices()
        return MatrixCocycle(
            {s: P.as_float() for s, P in pfs.items()},
            self.driver,
            exact={s: P.as_object() for s, P in pfs.items()},
        )


# --------------------------------------------------------------------------
# exact spectra


def charpoly(A) -> list[Fraction]:
    """Characteristic polynomial coefficients, highest degree first (Faddeev-LeVerrier)."""
    A = [[Fraction(x) for x in row] for row in np.asarray(A, dtype=object)]
    n = len(A)
    coeffs = [Fraction(1)]
    Mk = [[Fraction(0)] * n for _ in range(n)]
    c_prev = Fraction(1)
    for k in range(1, n + 1):
        # Mk <- A Mk + c_prev I
        AM = [[sum((A[i][t] * Mk[t][j] for t in range(n)), Fraction(0)) for j in range(n)] for i in range(n)]
        for i in range(n):
            AM[i][i] += c_prev
        Mk = AM
        AMk_trace = sum((sum((A[i][t] * Mk[t][i] for t in range(n)), Fraction(0)) for i in range(n)), Fraction(0))
        c_prev = -AMk_trace / k
        coeffs.append(c_prev)
    return coeffs


def _trim(p: list[Fraction]) -> list[Fraction]:
    i = 0
    while i < len(p) - 1 and p[i] == 0:
        i += 1
    return p[i:]


def _divmod_poly(a: list[Fraction], b: list[Fraction]) -> tuple[list[Fraction], list[Fraction]]:
    a, b = _trim(list(a)), _trim(b)
    if len(a) < len(b):
        return [Fraction(0)], a
    q = [Fraction(0)] * (len(a) - len(b) + 1)
    r = list(a)
    for i in range(len(q)):
        coef = r[i] / b[0]
        q[i] = coef
        for j, bj in enumerate(b):
            r[i + j] -= coef * bj
    return q, _trim(r[len(q):] or [Fraction(0)])


def _gcd_poly(a: list[Fraction], b: list[Fraction]) -> list[Fraction]:
    a, b = _trim(a), _trim(b)
    while not (len(b) == 1 and b[0] == 0):
        _, r = _divmod_poly(a, b)
        a, b = b, r
    return [c / a[0] for c in a]


def _derivative(p: list[Fraction]) -> list[Fraction]:
    n = len(p) - 1
    return [c * (n - i) for i, c in enumerate(p[:-1])] or [Fraction(0)]


def _squarefree_parts(p: list[Fraction]) -> list[tuple[list[Fraction], int]]:
    """Yun's algorithm: [(factor, multiplicity)] with pairwise coprime squarefree factors."""
    p = _trim(p)
    out = []
    if len(p) == 1:
        return out
    dp = _derivative(p)
    a = _gcd_poly(p, dp)
    b, _ = _divmod_poly(p, a)
    c, _ = _divmod_poly(dp, a)
    k = 1
    while len(_trim(b)) > 1:
        d = _poly_sub(c, _derivative(b))
        a = _gcd_poly(b, d)
        if len(a) > 1:
            out.append((a, k))
        b, _ = _divmod_poly(b, a)
        c, _ = _divmod_poly(d, a)
        k += 1
    return out


def _pad(p: list[Fraction], n: int) -> list[Fraction]:
    return [Fraction(0)] * (n - len(p)) + list(p)


def _poly_sub(a: list[Fraction], b: list[Fraction]) -> list[Fraction]:
    n = max(len(a), len(b))
    return _trim([x - y for x, y in zip(_pad(a, n), _pad(b, n))])


def exact_eigenvalues(A, dps: int = 40) -> list[complex]:
    """Eigenvalues (with multiplicity) of a rational matrix from its exact characteristic polynomial."""
    p = charpoly(A)
    n = len(p) - 1
    zeros = 0
    while zeros < n and p[-1 - zeros] == 0:
        zeros += 1
    core = p[: len(p) - zeros]
    values: list[complex] = [0j] * zeros
    for factor, mult in _squarefree_parts(core):
        if len(factor) == 2:
            roots = [-factor[1] / factor[0]]
            roots = [complex(r) for r in roots]
        else:
            with mpmath.workdps(dps):
                rts = mpmath.polyroots([mpmath.mpf(c.numerator) / c.denominator for c in factor],
                                       maxsteps=200, extraprec=4 * dps)
            roots = [complex(r) for r in rts]
        values.extend(r for r in roots for _ in range(mult))
    return values


def _sort_spectrum(values: Iterable[complex]) -> list[complex]:
    return sorted((complex(v) for v in values),
                  key=lambda z: (-round(abs(z), 12), -round(z.real, 12), -round(z.imag, 12)))


@dataclass(frozen=True)
class SpectrumReport:
    eigenvalues: tuple[complex, ...]
    multiplicities: tuple[int, ...]
    exponents: tuple[float, ...] = ()

    @property
    def moduli(self) -> tuple[float, ...]:
        return tuple(abs(z) for z in self.eigenvalues)

    def to_json_dict(self) -> dict:
        return {
            "eigenvalues": [{"re": z.real, "im": z.imag} for z in self.eigenvalues],
            "exponents": list(self.exponents),
            "multiplicities": list(self.multiplicities),
        }


def _group_moduli(values: Sequence[complex], tol: float) -> tuple[int, ...]:
    groups: list[int] = []
    prev = None
    for z in values:
        if prev is not None and abs(abs(z) - prev) <= tol:
            groups[-1] += 1
        else:
            groups.append(1)
        prev = abs(z)
    return tuple(groups)


def spectrum(matrix, *, zero_tol: float = 1e-7, group_tol: float = 1e-9, power: int = 1) -> SpectrumReport:
    """Eigenvalues sorted by descending modulus, grouped by modulus.

    A ``PFMatrix`` or object array of rationals is handled exactly; float
    matrices go through ``numpy.linalg.eigvals`` and moduli below
    ``zero_tol * max|eig|`` are snapped to zero.  ``exponents`` are
    ``log|eig| / power`` with ``-inf`` for zero eigenvalues.
    """
    if isinstance(matrix, PFMatrix):
        values = exact_eigenvalues(matrix.as_object())
    else:
        arr = np.asarray(matrix)
        if arr.dtype == object:
            values = exact_eigenvalues(arr)
        else:
            values = list(np.linalg.eigvals(arr))
            scale = max((abs(v) for v in values), default=0.0)
            values = [0j if abs(v) <= zero_tol * scale else complex(v) for v in values]
    values = _sort_spectrum(values)
    exps = tuple(math.log(abs(z)) / power if z != 0 else NEG_INF for z in values)
    return SpectrumReport(tuple(values), _group_moduli(values, group_tol), exps)


# --------------------------------------------------------------------------
# products and Gram roots


def product(cocycle: MatrixCocycle, n: int, base: int = 0) -> np.ndarray:
    """``A(sigma^{n-1} w) ... A(w)`` with ``w`` shifted to ``base``; identity for ``n = 0``."""
    if n < 0:
        raise ValueError("n must be >= 0")
    out = np.eye(cocycle.dim)
    for k in range(base, base + n):
        out = cocycle.generator_at(k) @ out
    return out


def scaled_product(cocycle: MatrixCocycle, n: int, base: int = 0,
                   every: int = RESCALE_EVERY) -> tuple[np.ndarray, float]:
    """``(B, s)`` with ``exp(s) * B`` equal to the ``n``-step product; ``|B|_max = 1``."""
    out = np.eye(cocycle.dim)
    log_scale = 0.0
    for step, k in enumerate(range(base, base + n), start=1):
        out = cocycle.generator_at(k) @ out
        if step % every == 0 or step == n:
            peak = np.abs(out).max()
            if peak == 0.0:
                return out, NEG_INF
            out /= peak
            log_scale += math.log(peak)
    return out, log_scale


@dataclass(frozen=True)
class GramRoot:
    """SVD-backed ``(A^T A)^{1/2M}``: eigenvalues descending, eigenvectors in columns."""

    depth: int
    base: int
    log_values: np.ndarray  # log(sigma_j) / depth, -inf for numerically zero
    vectors: np.ndarray     # right singular vectors as columns
    left: np.ndarray        # left singular vectors as columns
    log_scale: float

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.exp(self.log_values)

    @property
    def matrix(self) -> np.ndarray:
        V = self.vectors
        return (V * self.eigenvalues) @ V.T


def gram_decomposition(cocycle: MatrixCocycle, depth: int, base: int = 0, *,
                       floor: float = 1e-300, rank_tol: float = 1e-13) -> GramRoot:
    """Eigen-structure of the Gram root at ``base`` computed from the SVD of the product.

    Singular values below ``floor`` or below ``rank_tol`` times the largest are
    treated as exact zeros (exponent ``-inf``); the second cut removes
    round-off noise that would otherwise masquerade as finite exponents.
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    if depth > RESCALE_DEPTH:
        A, log_scale = scaled_product(cocycle, depth, base)
    else:
        A, log_scale = product(cocycle, depth, base), 0.0
    if log_scale == NEG_INF:
        d = cocycle.dim
        return GramRoot(depth, base, np.full(d, NEG_INF), np.eye(d), np.eye(d), NEG_INF)
    U, s, Vt = np.linalg.svd(A)
    top = s[0] if s.size else 0.0
    # the floor applies to the (possibly rescaled) computed values, not the true scale
    dead = (s < floor) | (s <= rank_tol * top) | (s == 0)
    with np.errstate(divide="ignore"):
        logs = np.where(dead, NEG_INF, (np.log(np.where(dead, 1.0, s)) + log_scale) / depth)
    return GramRoot(depth, base, logs, Vt.T.copy(), U, log_scale)


def gram_root(cocycle: MatrixCocycle, depth: int, base: int = 0, **kw) -> np.ndarray:
    """The symmetric matrix ``(A^{(M)T} A^{(M)})^{1/2M}`` at ``base``."""
    return gram_decomposition(cocycle, depth, base, **kw).matrix


def group_log_values(log_values: Sequence[float], gap_tol: float = 1e-6) -> list[list[int]]:
    """Partition indices of descending log-values into plateaus.

    A new group starts where consecutive values differ by more than
    ``gap_tol``; all ``-inf`` values share one group.
    """
    groups: list[list[int]] = []
    prev = None
    for i, v in enumerate(log_values):
        if prev is not None and (v == prev or (math.isfinite(v) and math.isfinite(prev) and prev - v <= gap_tol)):
            groups[-1].append(i)
        else:
            groups.append([i])
        prev = v
    return groups


@dataclass(frozen=True)
class LyapunovEstimate:
    exponents: tuple[float, ...]
    multiplicities: tuple[int, ...]
    depth: int
    base: int
    values: tuple[float, ...] = ()

    @property
    def ell(self) -> int:
        return len(self.exponents)

    def to_json_dict(self) -> dict:
        return {"exponents": list(self.exponents), "multiplicities": list(self.multiplicities),
                "depth": self.depth, "base": self.base}


def _estimate_from_logs(logs: Sequence[float], depth: int, base: int, gap_tol: float) -> LyapunovEstimate:
    groups = group_log_values(logs, gap_tol)
    exps = tuple(float(np.mean([logs[i] for i in g])) if math.isfinite(logs[g[0]]) else NEG_INF
                 for g in groups)
    return LyapunovEstimate(exps, tuple(len(g) for g in groups), depth, base, tuple(float(v) for v in logs))


def _mp_log_values(cocycle: MatrixCocycle, depth: int, base: int, dps: int,
                   rank_tol: float | None = None) -> list[float]:
    """``log(sigma_j) / depth`` of the product computed in mpmath at ``dps`` digits."""
    tol = rank_tol if rank_tol is not None else 10.0 ** -(dps - 20)
    with mpmath.workdps(dps):
        gens = {s: mpmath.matrix(G.tolist()) for s, G in cocycle.generators.items()}
        A = mpmath.eye(cocycle.dim)
        for k in range(base, base + depth):
            A = gens[cocycle.driver.symbol_at(k)] * A
        s = mpmath.svd_r(A, compute_uv=False)
        s = sorted((s[i] for i in range(len(s))), reverse=True)
        top = s[0]
        return [float(mpmath.log(x) / depth) if top > 0 and x > tol * top else NEG_INF for x in s]


def lyapunov_spectrum(cocycle: MatrixCocycle, depth: int, base: int = 0, gap_tol: float = 1e-6,
                      *, dps: int | None = None, **kw) -> LyapunovEstimate:
    """Exponents as logs of the Gram-root eigenvalues, grouped into plateaus.

    With ``dps`` the singular values come from an mpmath product, which keeps
    fast-decaying directions finite at depths where float64 loses them.
    """
    logs = log_singular_values(cocycle, depth, base, dps=dps, **kw)
    return _estimate_from_logs(logs, depth, base, gap_tol)


def log_singular_values(cocycle: MatrixCocycle, depth: int, base: int = 0, *,
                        dps: int | None = None, **kw) -> list[float]:
    """Descending ``log(sigma_j) / depth`` of the depth-step product, ``-inf`` for zeros."""
    if dps is None:
        return gram_decomposition(cocycle, depth, base, **kw).log_values.tolist()
    if depth < 1:
        raise ValueError("depth must be >= 1")
    return _mp_log_values(cocycle, depth, base, dps, kw.get("rank_tol"))


def periodic_exponents(cocycle: MatrixCocycle) -> SpectrumReport:
    """Exponents ``log|eta| / R`` from the eigenvalues of the period-``R`` product at base 0."""
    driver = cocycle.driver
    if not isinstance(driver, PeriodicDriver):
        raise TypeError("periodic_exponents needs a PeriodicDriver")
    R = driver.period
    if cocycle.exact is not None:
        prod = np.identity(cocycle.dim, dtype=object) * Fraction(1)
        for k in range(R):
            prod = cocycle.exact[driver.symbol_at(k)].dot(prod)
        return spectrum(prod, power=R)
    return spectrum(product(cocycle, R, 0), power=R)


def essential_bound(maps: MapCocycle, n_window: int, base: int = 0) -> float:
    """``-(1/n) sum log|slope|`` along the driver, for maps of constant absolute slope."""
    if n_window < 1:
        raise ValueError("n_window must be >= 1")
    logs = {}
    for s, f in maps.maps.items():
        slopes = {abs(a) for a in f.slopes}
        if len(slopes) != 1:
            raise ConstantSlopeRequired(f"map {s} has slopes {sorted(slopes)}")
        (a,) = slopes
        logs[s] = math.log(a.numerator) - math.log(a.denominator)
    total = sum(logs[maps.driver.symbol_at(k)] for k in range(base, base + n_window))
    return -total / n_window


def exceptional_exponents(estimate, theta: float, tol: float = 1e-9) -> list[float]:
    """Exponents strictly inside ``(theta, 0)``, by more than ``tol`` at both ends."""
    exps = estimate.exponents if hasattr(estimate, "exponents") else estimate
    return [float(x) for x in exps if theta + tol < x < -tol]
