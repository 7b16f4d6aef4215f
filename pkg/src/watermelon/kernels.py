"""Determinantal correlation kernels for non-intersecting bridges.

Two kernels live here: the continuum one built from normalized Hermite
polynomials, and the discrete one built from Hahn polynomials, together with
the k-point functions they generate and the N -> infinity convergence study.
Both are evaluated in their gauged forms, which keep every entry O(1).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DomainError, ParityError
from .rng import SeedRecord
from .special_polys import (
    _p_params,
    _p_tilde_params,
    hahn,
    hahn_exact,
    hermite_normalized,
)
from .walk_ensembles import BridgeSpec, _binom, log_binom


@dataclass(frozen=True)
class ContinuumEndpoint:
    """Terminal data (t_star, z_star) of the bridge ensemble."""

    t_star: float
    z_star: float = 0.0

    def __post_init__(self):
        if self.t_star <= 0:
            raise DomainError("t_star must be positive")


@dataclass(frozen=True)
class SpaceTimePoint:
    t: float
    z: float


@dataclass(frozen=True)
class CorrelationQuery:
    points: tuple[SpaceTimePoint, ...]

    def __post_init__(self):
        if len(self.points) < 1:
            raise DomainError("query needs at least one point")

    @property
    def k(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class AlphaFactor:
    """The argument rescaling sqrt(t_star / (2 t (t_star - t)))."""

    t: float
    value: float

    @classmethod
    def at(cls, t_star: float, t: float) -> "AlphaFactor":
        if not 0.0 < t < t_star:
            raise DomainError(f"t={t} outside (0, {t_star})")
        return cls(t=t, value=math.sqrt(t_star / (2.0 * t * (t_star - t))))


def alpha_factor(t_star: float, t: float) -> float:
    return AlphaFactor.at(t_star, t).value


_ROUND_EPS = 1e-9


def round_point2(t: float, z: float) -> tuple[int, int]:
    """Nearest-below lattice point with matching parity: (floor t, parity floor of z).

    A small epsilon guards against floating products like 0.7*50 landing a
    hair below an integer.
    """
    n = math.floor(t + _ROUND_EPS)
    x = math.floor(z + _ROUND_EPS)
    if (x + n) % 2 != 0:
        x -= 1
    return n, x


def nearest_parity(z: float, parity: int) -> int:
    """Integer nearest to z with the given parity (ties break downward)."""
    lo = math.floor(z + _ROUND_EPS)
    if (lo - parity) % 2 != 0:
        lo -= 1
    hi = lo + 2
    return hi if (hi - z) < (z - lo) else lo


@dataclass(frozen=True)
class LatticeRounding:
    """Diffusive embedding of a continuum endpoint at scale N."""

    N: int
    t_star: float
    z_star: float
    n_star: int
    x_star: int

    @classmethod
    def of(cls, N: int, end: ContinuumEndpoint) -> "LatticeRounding":
        # Endpoint uses the nearest parity-matching lattice point; query
        # points use the parity floor of their tessellation cell.
        n_star = math.floor(N * end.t_star + _ROUND_EPS)
        x_star = nearest_parity(math.sqrt(N) * end.z_star, n_star % 2)
        return cls(N=N, t_star=end.t_star, z_star=end.z_star, n_star=n_star, x_star=x_star)

    @property
    def cell_volume(self) -> float:
        return 2.0 / (self.N * math.sqrt(self.N))

    def bridge_spec(self, d: int) -> BridgeSpec:
        return BridgeSpec(d=d, n_star=self.n_star, x_star=self.x_star)

    def round_query_point(self, p: SpaceTimePoint) -> tuple[int, int]:
        return round_point2(self.N * p.t, math.sqrt(self.N) * p.z)


def _rho(t: float, z: float) -> float:
    return math.exp(-z * z / (2.0 * t)) / math.sqrt(2.0 * math.pi * t)


def continuum_kernel(
    end: ContinuumEndpoint,
    d: int,
    a: SpaceTimePoint,
    b: SpaceTimePoint,
    gauge: str = "shift",
) -> float:
    """Correlation kernel of d non-intersecting Brownian bridges.

    Nonzero terminal offset enters through a coordinate shift along the line
    from (0,0) to (t_star, z_star).  Two equivalent gauges are provided (all
    k x k determinants agree):

    * ``shift``: the shifted-and-exponentially-gauged form, with the heat
      term written in shifted coordinates;
    * ``heat``: the gauge whose heat term is the plain unshifted Gaussian.
      This is the form the rescaled lattice kernel converges to pointwise,
      so the convergence study compares in this gauge.
    """
    ts, zs = end.t_star, end.z_star
    t, z = a.t, a.z
    tp, zp = b.t, b.z
    for u in (t, tp):
        if not 0.0 < u < ts:
            raise DomainError(f"time {u} outside (0, {ts})")
    zc = z - zs * t / ts
    zpc = zp - zs * tp / ts
    at = alpha_factor(ts, t)
    atp = alpha_factor(ts, tp)
    front = math.sqrt(ts / (2.0 * tp * (ts - t)))
    ratio = (t * (ts - tp)) / ((ts - t) * tp)
    s = 0.0
    for j in range(d):
        s += ratio ** (j / 2.0) * hermite_normalized(j, zc * at) * hermite_normalized(
            j, zpc * atp
        )
    if gauge == "shift":
        val = -_rho(tp - t, zpc - zc) if t < tp else 0.0
        decay = math.exp(-zc * zc / (2.0 * (ts - t))) * math.exp(-zpc * zpc / (2.0 * tp))
        val += front * s * decay
        gfac = math.exp((zs / ts) * zpc) / math.exp((zs / ts) * zc)
        return val * gfac
    if gauge == "heat":
        val = -_rho(tp - t, zp - z) if t < tp else 0.0
        decay = math.exp(-((z - zs) ** 2) / (2.0 * (ts - t))) * math.exp(
            -zp * zp / (2.0 * tp)
        )
        const = math.exp(zs * zs / (2.0 * ts))
        return val + const * front * s * decay
    raise DomainError(f"unknown gauge {gauge!r}")


def continuum_psi_k(end: ContinuumEndpoint, d: int, query: CorrelationQuery) -> float:
    """k-point correlation density: determinant of the continuum kernel."""
    pts = query.points
    if len(set(pts)) != len(pts):
        return 0.0
    k = len(pts)
    mat = np.empty((k, k))
    for i in range(k):
        for j in range(k):
            mat[i, j] = continuum_kernel(end, d, pts[i], pts[j])
    return float(np.linalg.det(mat))


# --- discrete (Hahn) kernel --------------------------------------------------


def _f_weight(spec: BridgeSpec, j: int) -> Fraction:
    """Spectral weight of degree j in the discrete kernel.

    The j = 0 weight is the bare reciprocal central binomial; for j >= 1 the
    rising-factorial prefactor kicks in.
    """
    d, n_star, x_star = spec.d, spec.n_star, spec.x_star
    central = _binom(n_star + 2 * d - 2, Fraction(n_star + x_star, 2) + d - 1)
    if central == 0:
        raise DomainError(f"degenerate endpoint {spec}")
    if j == 0:
        return Fraction(1, central)
    poch = Fraction(1)
    for i in range(j - 1):
        poch *= n_star + 2 * d - j + i
    return (
        Fraction(n_star + 2 * d - 2 * j - 1)
        * poch
        / math.factorial(j)
        / central
    )


class DiscreteKernelTable:
    """Cached per-spec evaluation of the discrete bridge kernel.

    Exact mode carries Fractions end to end; float mode assembles each term
    in log space with a sign tracker and exponentiates once.
    """

    def __init__(self, spec: BridgeSpec, exact: bool = False):
        self.spec = spec
        self.exact = exact
        self.f = [_f_weight(spec, j) for j in range(spec.d)]
        # spectral weights are positive ratios of big integers; keep their logs
        self.log_f = [
            math.log(w.numerator) - math.log(w.denominator) for w in self.f
        ]
        self._fwd: dict[tuple[int, int], list] = {}
        self._bwd: dict[tuple[int, int], list] = {}

    def _check(self, n: int, x: int) -> None:
        if (n + x) % 2 != 0:
            raise ParityError(f"point ({n}, {x}) off the parity lattice")
        if not 0 < n < self.spec.n_star:
            raise DomainError(f"time {n} outside (0, {self.spec.n_star})")

    def _forward(self, n: int, x: int) -> list:
        # P_j(n, x) * binom(n + d - 1, (n + x)/2), all degrees.
        # Float entries are (sign, log magnitude) pairs.
        key = (n, x)
        if key not in self._fwd:
            spec = self.spec
            if self.exact:
                b = _binom(spec.d + n - 1, Fraction(n + x, 2))
                vals = [
                    hahn_exact(_p_params(j, n, x, spec.d, spec.n_star, spec.x_star))
                    * b
                    for j in range(spec.d)
                ]
            else:
                lb = (
                    log_binom(spec.d + n - 1, (n + x) // 2)
                    if 0 <= (n + x) // 2 <= spec.d + n - 1
                    else -math.inf
                )
                vals = []
                for j in range(spec.d):
                    q = hahn(_p_params(j, n, x, spec.d, spec.n_star, spec.x_star))
                    if q == 0.0 or lb == -math.inf:
                        vals.append((0.0, -math.inf))
                    else:
                        vals.append((math.copysign(1.0, q), math.log(abs(q)) + lb))
            self._fwd[key] = vals
        return self._fwd[key]

    def _backward(self, n: int, x: int) -> list:
        # P~_j(n, x) * binom(n_star - n + d - 1, (n_star - n + x - x_star)/2)
        key = (n, x)
        if key not in self._bwd:
            spec = self.spec
            top = spec.n_star - n + spec.d - 1
            karg = (spec.n_star - n + x - spec.x_star) // 2
            if self.exact:
                b = _binom(top, Fraction(spec.n_star - n + x - spec.x_star, 2))
                vals = [
                    hahn_exact(
                        _p_tilde_params(j, n, x, spec.d, spec.n_star, spec.x_star)
                    )
                    * b
                    for j in range(spec.d)
                ]
            else:
                lb = log_binom(top, karg) if 0 <= karg <= top else -math.inf
                vals = []
                for j in range(spec.d):
                    q = hahn(
                        _p_tilde_params(j, n, x, spec.d, spec.n_star, spec.x_star)
                    )
                    if q == 0.0 or lb == -math.inf:
                        vals.append((0.0, -math.inf))
                    else:
                        vals.append((math.copysign(1.0, q), math.log(abs(q)) + lb))
            self._bwd[key] = vals
        return self._bwd[key]

    def entry(self, a: tuple[int, int], b: tuple[int, int]):
        """Kernel value K((n,x); (n',x')) in the 2^{n-n'} gauge."""
        n, x = a
        npr, xpr = b
        self._check(n, x)
        self._check(npr, xpr)
        if self.exact:
            gauge = Fraction(2) ** (n - npr)
            heat = Fraction(0)
            if n < npr:
                heat = gauge * _binom(npr - n, Fraction(npr - n + xpr - x, 2))
            fwd = self._forward(npr, xpr)
            bwd = self._backward(n, x)
            series = sum(
                (self.f[j] * fwd[j] * bwd[j] for j in range(self.spec.d)),
                Fraction(0),
            )
            return gauge * series - heat
        # float: each term assembled in log space, one sign, one exponential
        total = 0.0
        if n < npr and (npr - n + xpr - x) % 2 == 0:
            lb = log_binom(npr - n, (npr - n + xpr - x) // 2)
            if lb > -math.inf:
                total -= math.exp((n - npr) * math.log(2.0) + lb)
        fwd = self._forward(npr, xpr)
        bwd = self._backward(n, x)
        base = (n - npr) * math.log(2.0)
        for j in range(self.spec.d):
            s_f, l_f = fwd[j]
            s_b, l_b = bwd[j]
            if s_f == 0.0 or s_b == 0.0:
                continue
            total += s_f * s_b * math.exp(base + self.log_f[j] + l_f + l_b)
        return total


def discrete_kernel(
    spec: BridgeSpec,
    a: tuple[int, int],
    b: tuple[int, int],
    mode: str = "float",
) -> float | Fraction:
    """Discrete bridge kernel K((n,x); (n',x')) at lattice points."""
    table = DiscreteKernelTable(spec, exact=(mode == "exact"))
    return table.entry(a, b)


def discrete_psi_prob(
    spec: BridgeSpec,
    sites: Sequence[tuple[int, int]],
    mode: str = "exact",
    table: DiscreteKernelTable | None = None,
):
    """Joint occupation probability of distinct lattice sites, via the kernel.

    This is the determinant det[K(s_i; s_j)]; multiplied by (sqrt(N)/2)^k it
    becomes the rescaled k-point function.  Duplicate sites give 0.
    """
    if len(set(sites)) != len(sites):
        return Fraction(0) if mode == "exact" else 0.0
    if table is None:
        table = DiscreteKernelTable(spec, exact=(mode == "exact"))
    k = len(sites)
    if mode == "exact":
        mat = [[table.entry(sites[i], sites[j]) for j in range(k)] for i in range(k)]
        return _fraction_det(mat)
    arr = np.empty((k, k))
    for i in range(k):
        for j in range(k):
            arr[i, j] = table.entry(sites[i], sites[j])
    return float(np.linalg.det(arr))


def _fraction_det(mat: list[list[Fraction]]) -> Fraction:
    n = len(mat)
    a = [[Fraction(v) for v in row] for row in mat]
    det = Fraction(1)
    for col in range(n):
        pivot = None
        for r in range(col, n):
            if a[r][col] != 0:
                pivot = r
                break
        if pivot is None:
            return Fraction(0)
        if pivot != col:
            a[col], a[pivot] = a[pivot], a[col]
            det = -det
        det *= a[col][col]
        inv = 1 / a[col][col]
        for r in range(col + 1, n):
            if a[r][col] != 0:
                factor = a[r][col] * inv
                a[r] = [vr - factor * vc for vr, vc in zip(a[r], a[col])]
    return det


def rescaled_psi_k(
    N: int,
    end: ContinuumEndpoint,
    d: int,
    query: CorrelationQuery,
    mode: str = "float",
) -> float:
    """Rescaled k-point correlation of the lattice bridge ensemble.

    (sqrt(N)/2)^k times the joint occupation probability of the rounded
    cells; piecewise constant on tessellation cells, zero when two query
    points round to the same cell.
    """
    rounding = LatticeRounding.of(N, end)
    spec = rounding.bridge_spec(d)
    sites = [rounding.round_query_point(p) for p in query.points]
    if len(set(sites)) != len(sites):
        return 0.0
    for n, x in sites:
        if not 0 < n < spec.n_star:
            raise DomainError(f"query time {n} outside the open bridge window")
    prob = discrete_psi_prob(spec, sites, mode)
    k = len(sites)
    return float(prob) * (math.sqrt(N) / 2.0) ** k


def discrete_kernel_rescaled(
    N: int, end: ContinuumEndpoint, d: int, a: SpaceTimePoint, b: SpaceTimePoint
) -> float:
    """(sqrt(N)/2) K_lattice at the rounded coordinates of two continuum points."""
    rounding = LatticeRounding.of(N, end)
    spec = rounding.bridge_spec(d)
    table = DiscreteKernelTable(spec)
    sa = rounding.round_query_point(a)
    sb = rounding.round_query_point(b)
    return math.sqrt(N) / 2.0 * table.entry(sa, sb)


@dataclass
class ConvergenceRow:
    N: int
    pair_id: int
    t: float
    z: float
    t_prime: float
    z_prime: float
    k_n: float
    k_limit: float
    abs_err: float


@dataclass
class ConvergenceReport:
    rows: list[ConvergenceRow]
    sup_error: dict[int, float]
    slope: float
    decreasing: bool

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["N", "pair_id", "t", "z", "t_prime", "z_prime", "K_N", "K", "abs_err"])
            for r in self.rows:
                w.writerow([r.N, r.pair_id, r.t, r.z, r.t_prime, r.z_prime, r.k_n, r.k_limit, r.abs_err])

    def to_json(self, path: str | Path) -> None:
        payload = {
            "sup_error": {str(k): v for k, v in self.sup_error.items()},
            "slope": self.slope,
            "decreasing": self.decreasing,
            "note": "the N^{-1/2} rate window is an empirical local-CLT expectation, not a proven rate",
        }
        Path(path).write_text(json.dumps(payload, indent=2))


def kernel_convergence_study(
    end: ContinuumEndpoint,
    d: int,
    grid: Sequence[tuple[SpaceTimePoint, SpaceTimePoint]],
    N_list: Sequence[int],
) -> ConvergenceReport:
    """Sup-errors |K^(N) - K| over a fixed grid of point pairs, per N.

    Flags a violation when the sup-error fails to decrease monotonically from
    the smallest to the largest N.
    """
    rows = []
    sup: dict[int, float] = {}
    limits = [continuum_kernel(end, d, a, b, gauge="heat") for a, b in grid]
    for N in N_list:
        worst = 0.0
        for pid, (a, b) in enumerate(grid):
            kn = discrete_kernel_rescaled(N, end, d, a, b)
            err = abs(kn - limits[pid])
            worst = max(worst, err)
            rows.append(
                ConvergenceRow(N, pid, a.t, a.z, b.t, b.z, kn, limits[pid], err)
            )
        sup[N] = worst
    ns = sorted(sup)
    errs = [sup[n] for n in ns]
    slope = float(np.polyfit(np.log(ns), np.log(errs), 1)[0]) if len(ns) > 1 else 0.0
    decreasing = all(errs[i + 1] < errs[i] for i in range(len(errs) - 1))
    return ConvergenceReport(rows=rows, sup_error=sup, slope=slope, decreasing=decreasing)


def convergence_grid(
    end: ContinuumEndpoint,
    delta: float,
    eta: float,
    m_bound: float,
    nt: int = 8,
    nz: int = 6,
) -> list[tuple[SpaceTimePoint, SpaceTimePoint]]:
    """Grid of point pairs in the well-separated region.

    Times in (delta, t_star - delta) at least eta apart, positions bounded by
    m_bound, including reversed-time pairs so the heat-free branch is covered.
    """
    ts = np.linspace(delta + 0.02, end.t_star - delta - 0.02, nt)
    zs = np.linspace(-m_bound + 0.1, m_bound - 0.1, nz)
    pairs = []
    for t in ts:
        for tp in ts:
            if abs(tp - t) <= eta:
                continue
            for z in zs:
                for zp in zs[::2]:
                    pairs.append(
                        (
                            SpaceTimePoint(float(t), float(z)),
                            SpaceTimePoint(float(tp), float(zp)),
                        )
                    )
    return pairs


@dataclass
class SeriesEstimate:
    value: float
    std_error: float
    terms: dict[int, tuple[float, float]]  # k -> (norm^2 estimate, SE)


def psi_l2_norm_mc(
    end: ContinuumEndpoint,
    d: int,
    k: int,
    mc_samples: int,
    rng: SeedRecord,
) -> tuple[float, float]:
    """Monte Carlo estimate of the squared L2 norm of the k-point function.

    Importance proposal: ordered times uniform on the simplex, positions
    built as a Gaussian increment chain matching the heat-kernel envelope,
    recentered along the line to (t_star, z_star).  The simplex accounts for
    the k! between ordered and unordered integrals.
    """
    ts, zs = end.t_star, end.z_star
    gen = rng.generator()
    vals = np.empty(mc_samples)
    log_simplex = k * math.log(ts) - math.lgamma(k + 1)
    for i in range(mc_samples):
        t = np.sort(gen.uniform(0.0, ts, size=k))
        dt = np.diff(np.concatenate(([0.0], t)))
        du = gen.normal(0.0, np.sqrt(dt))
        u = np.cumsum(du)
        z = u + zs * t / ts
        log_q = -log_simplex
        log_q += float(np.sum(-0.5 * np.log(2 * math.pi * dt) - du**2 / (2 * dt)))
        pts = tuple(SpaceTimePoint(float(tt), float(zz)) for tt, zz in zip(t, z))
        psi = continuum_psi_k(end, d, CorrelationQuery(pts))
        vals[i] = psi * psi * math.exp(-log_q)
    # ordered-simplex integral of psi^2 times k! = full-cube norm
    est = float(vals.mean()) * math.factorial(k)
    se = float(vals.std(ddof=1) / math.sqrt(mc_samples)) * math.factorial(k)
    return est, se


def psi_l2_series(
    end: ContinuumEndpoint,
    d: int,
    beta: float,
    k_max: int,
    mc_samples: int,
    rng: SeedRecord,
) -> SeriesEstimate:
    """Truncated sum 1 + sum_k (beta^k / k!) ||psi_k||^2, Monte Carlo."""
    if k_max > 3:
        raise DomainError("k_max above 3 is out of budget")
    total = 1.0
    var = 0.0
    terms = {}
    for k in range(1, k_max + 1):
        norm, se = psi_l2_norm_mc(end, d, k, mc_samples, rng.child(k))
        w = beta**k / math.factorial(k)
        total += w * norm
        var += (w * se) ** 2
        terms[k] = (norm, se)
    return SeriesEstimate(value=total, std_error=math.sqrt(var), terms=terms)
