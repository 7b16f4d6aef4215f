"""Geometric RSK path sums, forced points, lattice rotation, and scaling runs.

tau_{m,d}(n) sums products of vertex weights over d-tuples of vertex-disjoint
up-right lattice paths; ratios of consecutive tau's define the array entries.
Two evaluation routes are kept: exhaustive enumeration (the oracle) and the
determinant of single-path sums, which the enumeration tests validate for
this vertex-weight geometry.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import BudgetExceeded, DomainError
from .rng import SeedRecord


@dataclass(frozen=True)
class WeightMatrix:
    """Finite window of strictly positive weights, 1-indexed as entries[i-1][j-1]."""

    entries: tuple[tuple[float, ...], ...]
    generator: dict | None = None  # distribution spec + seed when random

    def __post_init__(self):
        for row in self.entries:
            if len(row) != len(self.entries[0]):
                raise DomainError("ragged weight matrix")
            for v in row:
                if not v > 0:
                    raise DomainError("weights must be positive")

    @property
    def n(self) -> int:
        return len(self.entries)

    @property
    def m(self) -> int:
        return len(self.entries[0])

    def at(self, i: int, j: int):
        return self.entries[i - 1][j - 1]

    @classmethod
    def constant(cls, n: int, m: int, value=1) -> "WeightMatrix":
        return cls(tuple(tuple(value for _ in range(m)) for _ in range(n)))

    @classmethod
    def from_array(cls, arr, generator: dict | None = None) -> "WeightMatrix":
        return cls(tuple(tuple(row) for row in arr), generator)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            for row in self.entries:
                w.writerow([float(v) for v in row])

    @classmethod
    def from_csv(cls, path: str | Path) -> "WeightMatrix":
        rows = []
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                rows.append(tuple(float(v) for v in row))
        return cls(tuple(rows))


def single_path_sum(w: WeightMatrix, start: tuple[int, int], end: tuple[int, int]):
    """Sum over monotone up-right paths of the product of vertex weights.

    Dynamic programming over the rectangle spanned by start and end;
    unreachable endpoints give 0.
    """
    (i0, j0), (i1, j1) = start, end
    if i1 < i0 or j1 < j0:
        return 0
    rows, cols = i1 - i0 + 1, j1 - j0 + 1
    prev = [0] * cols
    for di in range(rows):
        cur = [0] * cols
        for dj in range(cols):
            g = w.at(i0 + di, j0 + dj)
            if di == 0 and dj == 0:
                cur[dj] = g
                continue
            inc = prev[dj] if di > 0 else 0
            if dj > 0:
                inc = inc + cur[dj - 1]
            cur[dj] = g * inc
        prev = cur
    return prev[-1]


def _path_endpoints(d: int, n: int, m: int) -> tuple[list, list]:
    starts = [(1, r) for r in range(1, d + 1)]
    ends = [(n, m + r - d) for r in range(1, d + 1)]
    return starts, ends


def _enumerate_paths(start: tuple[int, int], end: tuple[int, int]):
    """All up-right paths start -> end as frozensets of visited vertices."""
    out = []
    path = [start]

    def rec(pos):
        if pos == end:
            out.append(frozenset(path))
            return
        i, j = pos
        if i < end[0]:
            path.append((i + 1, j))
            rec((i + 1, j))
            path.pop()
        if j < end[1]:
            path.append((i, j + 1))
            rec((i, j + 1))
            path.pop()

    if end[0] >= start[0] and end[1] >= start[1]:
        rec(start)
    return out


def tau_enumerate(w: WeightMatrix, d: int, n: int, m: int, budget: int = 14):
    """Exhaustive sum over vertex-disjoint path tuples (the oracle route)."""
    if n + m > budget or d > 3:
        raise BudgetExceeded(f"n+m = {n + m} (budget {budget}) or d = {d} > 3")
    if d > min(n, m):
        raise DomainError("need d <= min(n, m)")
    starts, ends = _path_endpoints(d, n, m)
    per_route = [_enumerate_paths(s, e) for s, e in zip(starts, ends)]

    total = 0
    used: list[frozenset] = []

    def weight_of(cells: frozenset):
        prod = 1
        for (i, j) in cells:
            prod = prod * w.at(i, j)
        return prod

    def rec(r: int, acc):
        nonlocal total
        if r == d:
            total = total + acc
            return
        for cells in per_route[r]:
            if any(cells & u for u in used):
                continue
            used.append(cells)
            rec(r + 1, acc * weight_of(cells))
            used.pop()

    rec(0, 1)
    return total


def tau_lgv(w: WeightMatrix, d: int, n: int, m: int):
    """tau via the determinant of single-path sums between endpoint lists.

    Vertex weights need no inclusion-exclusion correction in this geometry;
    the enumeration equivalence test asserts it rather than assuming it.
    """
    if d > min(n, m):
        raise DomainError("need d <= min(n, m)")
    starts, ends = _path_endpoints(d, n, m)
    mat = [[single_path_sum(w, s, e) for e in ends] for s in starts]
    if any(isinstance(v, Fraction) for row in mat for v in row):
        return _det_fraction(mat)
    return _det_scaled(np.array(mat, dtype=np.float64))


def _det_fraction(mat) -> Fraction:
    k = len(mat)
    a = [[Fraction(v) for v in row] for row in mat]
    det = Fraction(1)
    for col in range(k):
        piv = next((r for r in range(col, k) if a[r][col] != 0), None)
        if piv is None:
            return Fraction(0)
        if piv != col:
            a[col], a[piv] = a[piv], a[col]
            det = -det
        det *= a[col][col]
        inv = 1 / a[col][col]
        for r in range(col + 1, k):
            if a[r][col] != 0:
                f = a[r][col] * inv
                a[r] = [x - f * y for x, y in zip(a[r], a[col])]
    return det


def _det_scaled(mat: np.ndarray) -> float:
    """Determinant with per-row maximum extraction, positive entries assumed."""
    scale = np.abs(mat).max(axis=1)
    if np.any(scale == 0.0):
        return 0.0
    det = float(np.linalg.det(mat / scale[:, None]))
    return det * float(np.prod(scale))


def log_tau_lgv(log_w: np.ndarray, d: int) -> float:
    """log tau for an n x m matrix of log-weights, square-window case.

    Per-entry DP runs in log space with running row rescaling; the final
    determinant extracts row maxima before a sign-logdet evaluation.
    """
    n, m = log_w.shape
    if d > min(n, m):
        raise DomainError("need d <= min(n, m)")
    starts, ends = _path_endpoints(d, n, m)
    logmat = np.empty((d, d))
    for a, (i0, j0) in enumerate(starts):
        # one DP per start, sweeping rows; store log S(i, j)
        width = m - j0 + 1
        cur = np.full(width, -np.inf)
        for i in range(i0, n + 1):
            nxt = np.empty(width)
            for idx in range(width):
                j = j0 + idx
                if i == i0 and idx == 0:
                    nxt[idx] = log_w[i - 1, j - 1]
                    continue
                terms = []
                if i > i0:
                    terms.append(cur[idx])
                if idx > 0:
                    terms.append(nxt[idx - 1])
                mx = max(terms)
                if mx == -np.inf:
                    nxt[idx] = -np.inf
                else:
                    nxt[idx] = log_w[i - 1, j - 1] + mx + math.log(
                        sum(math.exp(t - mx) for t in terms)
                    )
            cur = nxt
        for b, (i1, j1) in enumerate(ends):
            logmat[a, b] = cur[j1 - j0] if 0 <= j1 - j0 < width else -np.inf
    row_max = logmat.max(axis=1)
    sign, logdet = np.linalg.slogdet(np.exp(logmat - row_max[:, None]))
    if sign <= 0:
        raise DomainError("nonpositive path-sum determinant")
    return float(row_max.sum() + logdet)


def grsk_array(w: WeightMatrix, d_max: int, n: int, m: int) -> list[dict]:
    """Array entries z_{m,j}(n) = tau_{m,j}(n) / tau_{m,j-1}(n), j <= d_max."""
    taus = [1]
    for j in range(1, d_max + 1):
        taus.append(tau_lgv(w, j, n, m))
    out = []
    for j in range(1, d_max + 1):
        if not taus[j - 1] > 0:
            raise DomainError("vanishing tau under positive weights")
        out.append({"m": m, "j": j, "n": n, "value": taus[j] / taus[j - 1]})
    return out


def forced_points(d: int, N: int) -> set[tuple[int, int]]:
    """Vertices common to every path tuple on the (N+d) x (N+d) window.

    Path r is pinned through a staircase triangle at each corner; the set has
    d(d+1) points.
    """
    pts: set[tuple[int, int]] = set()
    for ell in range(1, d + 1):
        for i in range(1, d - ell + 2):
            pts.add((i, ell))
        for i in range(d - ell + 1, d + 1):
            pts.add((N + i, N + ell))
    return pts


def rotate_lambda(d: int, point: tuple[int, int]) -> tuple[int, int]:
    """45-degree rotation from grid coordinates to walk (time, space)."""
    n, m = point
    return (n + m - d - 1, n - m + d - 1)


def rotate_lambda_inverse(d: int, tz: tuple[int, int]) -> tuple[int, int]:
    t, s = tz
    if (t + s) % 2 != 0:
        raise DomainError("point not in the image lattice")
    return ((t + s) // 2 + 1, (t - s) // 2 + d)


def inverse_gamma_sample(theta: float, rng: SeedRecord | np.random.Generator, size=None):
    """Reciprocal of a unit-scale Gamma(theta) draw."""
    if theta <= 0:
        raise DomainError("theta must be positive")
    gen = rng.generator() if isinstance(rng, SeedRecord) else rng
    return 1.0 / gen.gamma(theta, 1.0, size=size)


def inverse_gamma_moments(theta: float) -> tuple[float, float]:
    """Mean 1/(theta-1) for theta > 1; variance (theta-1)^{-2}(theta-2)^{-1} for theta > 2."""
    if theta <= 1:
        raise DomainError("mean requires theta > 1")
    mean = 1.0 / (theta - 1.0)
    if theta <= 2:
        raise DomainError("variance requires theta > 2")
    var = mean * mean / (theta - 2.0)
    return mean, var


@dataclass
class TauLevel:
    N: int
    theta: float
    variance_ratio: float
    mean: float
    std: float
    quantiles: dict
    draws: np.ndarray


@dataclass
class TauReport:
    beta: float
    d: int
    replicas: int
    seed: SeedRecord
    levels: list[TauLevel]
    ks_stats: list[float]

    def to_json_dict(self) -> dict:
        return {
            "beta": self.beta,
            "d": self.d,
            "replicas": self.replicas,
            "seed": self.seed.as_dict(),
            "levels": [
                {
                    "N": lv.N,
                    "theta": lv.theta,
                    "variance_ratio": lv.variance_ratio,
                    "variance_ratio_limit": self.beta,
                    "mean": lv.mean,
                    "std": lv.std,
                    "quantiles": lv.quantiles,
                }
                for lv in self.levels
            ],
            "ks_between_consecutive_levels": self.ks_stats,
        }


def rescaled_tau_run(
    beta: float,
    N_list: Sequence[int],
    replicas: int,
    rng: SeedRecord,
    d: int = 2,
) -> TauReport:
    """Distribution of the rescaled square-window path sum across scales.

    Weights are inverse-Gamma with parameter beta^{-1} sqrt(N); the
    normalization divides by the exact mean to the power d(2N+d), by
    2^{d(2N+d)} N^{-d^2/2}, and by the product of factorials.
    """
    levels = []
    for li, N in enumerate(N_list):
        theta = math.sqrt(N) / beta
        if theta <= 2:
            raise DomainError(f"theta = {theta} <= 2 at N = {N}; variance undefined")
        if N > 400:
            raise BudgetExceeded("N above 400 is out of the determinant budget")
        mean, var = inverse_gamma_moments(theta)
        gen = rng.child(li).generator()
        size = N + d
        draws = np.empty(replicas)
        log_norm = (
            -d * (2 * N + d) * math.log(mean)
            - d * (2 * N + d) * math.log(2.0)
            + 0.5 * d * d * math.log(N)
            - sum(math.lgamma(j + 1) for j in range(d))
        )
        for r in range(replicas):
            logw = -np.log(gen.gamma(theta, 1.0, size=(size, size)))
            draws[r] = math.exp(log_tau_lgv(logw, d) + log_norm)
        q = np.percentile(draws, [5, 25, 50, 75, 95])
        levels.append(
            TauLevel(
                N=N,
                theta=theta,
                variance_ratio=math.sqrt(N) * var / (mean * mean),
                mean=float(draws.mean()),
                std=float(draws.std(ddof=1)),
                quantiles={"q05": q[0], "q25": q[1], "q50": q[2], "q75": q[3], "q95": q[4]},
                draws=draws,
            )
        )
    ks = []
    for a, b in zip(levels, levels[1:]):
        ks.append(_ks_statistic(a.draws, b.draws))
    return TauReport(beta=beta, d=d, replicas=replicas, seed=rng, levels=levels, ks_stats=ks)


def _ks_statistic(a: np.ndarray, b: np.ndarray) -> float:
    allv = np.sort(np.concatenate([a, b]))
    ca = np.searchsorted(np.sort(a), allv, side="right") / len(a)
    cb = np.searchsorted(np.sort(b), allv, side="right") / len(b)
    return float(np.max(np.abs(ca - cb)))
