"""Correlation kernels against enumeration, closed forms, and quadrature."""

import math
from fractions import Fraction

import numpy as np
import pytest
from scipy import integrate

from watermelon.errors import DomainError, ParityError
from watermelon.kernels import (
    ContinuumEndpoint,
    CorrelationQuery,
    DiscreteKernelTable,
    LatticeRounding,
    SpaceTimePoint,
    alpha_factor,
    continuum_kernel,
    continuum_psi_k,
    convergence_grid,
    discrete_kernel,
    discrete_psi_prob,
    kernel_convergence_study,
    nearest_parity,
    psi_l2_norm_mc,
    psi_l2_series,
    rescaled_psi_k,
    round_point2,
)
from watermelon.rng import SeedRecord
from watermelon.walk_ensembles import BridgeSpec, enumerate_trajectories


def rho(t, z):
    return math.exp(-z * z / (2 * t)) / math.sqrt(2 * math.pi * t)


class TestRounding:
    def test_parity_floor(self):
        assert round_point2(6.7, 3.9) == (6, 2)
        assert round_point2(5.2, 3.9) == (5, 3)
        assert round_point2(4.0, -0.5) == (4, -2)

    def test_nearest_parity(self):
        assert nearest_parity(9.9, 0) == 10
        assert nearest_parity(8.9, 0) == 8
        assert nearest_parity(7.0, 0) == 6  # ties break downward
        assert nearest_parity(-3.2, 0) == -4

    def test_lattice_rounding(self):
        lr = LatticeRounding.of(100, ContinuumEndpoint(1.0, 0.7))
        assert (lr.n_star + lr.x_star) % 2 == 0
        assert lr.cell_volume == pytest.approx(2 / (100 * 10.0))

    def test_alpha_factor_domain(self):
        assert alpha_factor(1.0, 0.5) == pytest.approx(math.sqrt(2.0))
        with pytest.raises(DomainError):
            alpha_factor(1.0, 1.0)


class TestContinuumKernel:
    def test_single_walker_density(self):
        # the one-point function is the pinned single-path density
        end = ContinuumEndpoint(1.0, 0.0)
        val = continuum_psi_k(end, 1, CorrelationQuery((SpaceTimePoint(0.5, 0.0),)))
        assert val == pytest.approx(math.sqrt(2 / math.pi), rel=1e-12)

    @pytest.mark.parametrize("ts,zs", [(1.0, 0.0), (2.0, 0.7), (0.8, -1.1)])
    def test_density_grid(self, ts, zs):
        end = ContinuumEndpoint(ts, zs)
        for t in np.linspace(0.05 * ts, 0.95 * ts, 7):
            for z in np.linspace(zs - 1.5, zs + 1.5, 7):
                psi = continuum_psi_k(
                    end, 1, CorrelationQuery((SpaceTimePoint(float(t), float(z)),))
                )
                ref = rho(t, z) * rho(ts - t, zs - z) / rho(ts, zs)
                assert psi == pytest.approx(ref, rel=1e-10)

    def test_heat_term_only_forward(self):
        end = ContinuumEndpoint(1.0, 0.0)
        a, b = SpaceTimePoint(0.3, 0.1), SpaceTimePoint(0.6, -0.2)
        fwd = continuum_kernel(end, 2, a, b)
        rev = continuum_kernel(end, 2, b, a)
        # reversing time removes the heat term: the difference is the heat kernel
        sum_fwd = fwd + rho(0.3, -0.3)
        assert sum_fwd != pytest.approx(rev)  # different polynomial weights
        assert continuum_kernel(end, 2, a, a) == continuum_kernel(end, 2, a, a)

    def test_duplicate_rule(self):
        end = ContinuumEndpoint(1.0, 0.0)
        p = SpaceTimePoint(0.4, 0.2)
        assert continuum_psi_k(end, 3, CorrelationQuery((p, p))) == 0.0

    def test_gauge_conjugation_preserves_determinants(self):
        end = ContinuumEndpoint(1.0, 0.5)
        pts = (
            SpaceTimePoint(0.2, -0.4),
            SpaceTimePoint(0.5, 0.3),
            SpaceTimePoint(0.8, 0.9),
        )
        base = np.array([[continuum_kernel(end, 2, a, b) for b in pts] for a in pts])
        g = lambda p: math.exp(p.z)
        conj = np.array(
            [
                [continuum_kernel(end, 2, a, b) * g(b) / g(a) for b in pts]
                for a in pts
            ]
        )
        assert np.linalg.det(conj) == pytest.approx(np.linalg.det(base), rel=1e-10)

    def test_heat_gauge_same_determinants(self):
        end = ContinuumEndpoint(1.3, 0.9)
        gen = np.random.default_rng(0)
        for _ in range(40):
            k = int(gen.integers(1, 5))
            ts = np.sort(gen.uniform(0.05, 1.25, size=k))
            pts = [SpaceTimePoint(float(t), float(gen.uniform(-2, 2))) for t in ts]
            m1 = np.array([[continuum_kernel(end, 2, a, b, "shift") for b in pts] for a in pts])
            m2 = np.array([[continuum_kernel(end, 2, a, b, "heat") for b in pts] for a in pts])
            d1, d2 = np.linalg.det(m1), np.linalg.det(m2)
            assert d2 == pytest.approx(d1, rel=1e-9, abs=1e-13)

    def test_psi_nonnegative(self):
        end = ContinuumEndpoint(1.0, 0.0)
        gen = np.random.default_rng(1)
        for _ in range(60):
            k = int(gen.integers(1, 4))
            ts = np.sort(gen.uniform(0.1, 0.9, size=k))
            pts = tuple(
                SpaceTimePoint(float(t), float(gen.uniform(-1.5, 1.5))) for t in ts
            )
            assert continuum_psi_k(end, 2, CorrelationQuery(pts)) >= -1e-10

    def test_domain_error_at_edges(self):
        end = ContinuumEndpoint(1.0, 0.0)
        with pytest.raises(DomainError):
            continuum_kernel(end, 1, SpaceTimePoint(0.0, 0.0), SpaceTimePoint(0.5, 0.0))


def enumeration_occupancy(spec, budget=24):
    trajs = enumerate_trajectories(spec, budget=budget)
    count = len(trajs)
    sites = sorted(
        {(int(n), int(x)) for tr in trajs for n in range(1, spec.n_star) for x in tr[n]}
    )
    sidx = {s: i for i, s in enumerate(sites)}
    occ = np.zeros((count, len(sites)))
    for ti, tr in enumerate(trajs):
        for n in range(1, spec.n_star):
            for x in tr[n]:
                occ[ti, sidx[(n, int(x))]] = 1.0
    return sites, (occ.T @ occ).round().astype(np.int64), count


class TestDiscreteKernel:
    def test_parity_error(self):
        spec = BridgeSpec(2, 6, 0)
        with pytest.raises(ParityError):
            discrete_kernel(spec, (2, 1), (3, 1))

    def test_single_walker_occupation(self):
        # 1x1 determinant reproduces the binomial bridge law exactly
        spec = BridgeSpec(1, 8, 2)
        table = DiscreteKernelTable(spec, exact=True)

        def comb0(n, k):
            return math.comb(n, k) if 0 <= k <= n else 0

        for n in (1, 4, 7):
            for x in range(-n, n + 1, 2):
                if (n + x) % 2 != 0:
                    continue
                expected = Fraction(
                    comb0(n, (n + x) // 2) * comb0(8 - n, (8 - n + 2 - x) // 2),
                    math.comb(8, 5),
                )
                assert table.entry((n, x), (n, x)) == expected

    def test_heat_term_only_forward_in_time(self):
        spec = BridgeSpec(2, 8, 0)
        table = DiscreteKernelTable(spec, exact=True)
        fwd = table.entry((2, 0), (4, 0))
        rev = table.entry((4, 0), (2, 0))
        series_fwd = fwd + Fraction(2) ** (2 - 4) * math.comb(2, 1)
        assert series_fwd != fwd  # heat term present
        assert rev > 0  # pure polynomial part

    @pytest.mark.parametrize("spec", [BridgeSpec(2, 6, 0), BridgeSpec(3, 6, 2)])
    def test_enumeration_oracle(self, spec):
        sites, joint, count = enumeration_occupancy(spec)
        table = DiscreteKernelTable(spec, exact=True)
        for i, a in enumerate(sites):
            assert discrete_psi_prob(spec, [a], "exact", table) == Fraction(
                int(joint[i, i]), count
            )
            for j in range(i + 1, len(sites)):
                assert discrete_psi_prob(spec, [a, sites[j]], "exact", table) == Fraction(
                    int(joint[i, j]), count
                )

    def test_duplicate_sites_zero(self):
        spec = BridgeSpec(2, 6, 0)
        assert discrete_psi_prob(spec, [(2, 0), (2, 0)]) == 0.0

    def test_rank_deficiency_beyond_d(self):
        # more than d sites at one time level: exactly singular minor
        spec = BridgeSpec(2, 8, 0)
        sites = [(4, -2), (4, 0), (4, 2)]
        val = discrete_psi_prob(spec, sites, "exact")
        assert val == 0


class TestRescaledPsi:
    def test_same_cell_is_zero(self):
        end = ContinuumEndpoint(1.0, 0.0)
        q = CorrelationQuery(
            (SpaceTimePoint(0.52, 0.01), SpaceTimePoint(0.525, 0.05))
        )
        assert rescaled_psi_k(100, end, 2, q) == 0.0

    def test_single_walker_binomial_oracle(self):
        # (sqrt(N)/2) P(simple bridge at 0 at midstep)
        N = 100
        end = ContinuumEndpoint(1.0, 0.0)
        q = CorrelationQuery((SpaceTimePoint(0.505, 0.001),))
        prob = Fraction(
            math.comb(50, 25) * math.comb(50, 25), math.comb(100, 50)
        )
        expected = math.sqrt(N) / 2 * float(prob)
        assert rescaled_psi_k(N, end, 1, q) == pytest.approx(expected, rel=1e-11)

    def test_positivity(self):
        end = ContinuumEndpoint(1.0, 0.0)
        gen = np.random.default_rng(4)
        for _ in range(40):
            pts = tuple(
                SpaceTimePoint(float(t), float(gen.uniform(-1, 1)))
                for t in np.sort(gen.uniform(0.1, 0.9, size=2))
            )
            assert rescaled_psi_k(36, end, 2, CorrelationQuery(pts)) >= 0.0

    def test_particle_counting_identity(self):
        # summing determinants over all position pairs counts d^2, exactly
        spec = BridgeSpec(2, 6, 0)
        table = DiscreteKernelTable(spec, exact=True)
        total = Fraction(0)
        for x1 in range(-2, 5, 2):
            for x2 in range(-3, 6, 2):
                total += discrete_psi_prob(spec, [(2, x1), (3, x2)], "exact", table)
        assert total == 4

    def test_two_walker_continuum_limit(self):
        # the lattice one-point function at a fine scale sits within 2% of
        # the continuum one
        end = ContinuumEndpoint(1.0, 0.0)
        q = CorrelationQuery((SpaceTimePoint(0.50005, 0.00001),))
        disc = rescaled_psi_k(10_000, end, 2, q)
        cont = continuum_psi_k(end, 2, q)
        assert disc == pytest.approx(cont, rel=0.02)


class TestConvergence:
    def test_d1_rate_window(self):
        end = ContinuumEndpoint(1.0, 0.0)
        grid = convergence_grid(end, 0.15, 0.15, 1.5, nt=5, nz=4)
        rep = kernel_convergence_study(end, 1, grid, [64, 128, 256, 512, 1024])
        assert -0.75 <= rep.slope <= -0.25

    def test_sup_error_decreases_d2(self):
        end = ContinuumEndpoint(1.0, 0.7)
        grid = convergence_grid(end, 0.1, 0.1, 2.0)
        rep = kernel_convergence_study(end, 2, grid, [50, 100, 200, 400])
        ns = sorted(rep.sup_error)
        assert rep.sup_error[ns[-1]] < rep.sup_error[ns[0]]

    def test_report_serialization(self, tmp_path):
        end = ContinuumEndpoint(1.0, 0.0)
        grid = convergence_grid(end, 0.2, 0.2, 1.0, nt=4, nz=3)
        rep = kernel_convergence_study(end, 1, grid, [32, 64])
        rep.to_csv(tmp_path / "conv.csv")
        rep.to_json(tmp_path / "conv.json")
        lines = (tmp_path / "conv.csv").read_text().splitlines()
        assert lines[0].startswith("N,pair_id,t,z")
        assert len(lines) == 1 + 2 * len(grid)


class TestL2Series:
    def test_beta_zero(self):
        end = ContinuumEndpoint(1.0, 0.0)
        est = psi_l2_series(end, 1, 0.0, 1, 200, SeedRecord(1, 0))
        assert est.value == pytest.approx(1.0)

    def test_monotone_in_beta(self):
        end = ContinuumEndpoint(1.0, 0.0)
        est1 = psi_l2_series(end, 1, 0.5, 2, 400, SeedRecord(2, 0))
        est2 = psi_l2_series(end, 1, 1.0, 2, 400, SeedRecord(2, 0))
        assert est2.value > est1.value

    def test_quadrature_oracle_d1_k1(self):
        # squared single-point density integrated by deterministic quadrature
        end = ContinuumEndpoint(1.0, 0.0)

        def inner(t):
            val, _ = integrate.quad(
                lambda z: (rho(t, z) * rho(1 - t, -z) / rho(1, 0)) ** 2, -8, 8
            )
            return val

        ref, _ = integrate.quad(inner, 1e-9, 1 - 1e-9, limit=200)
        est, se = psi_l2_norm_mc(end, 1, 1, 20_000, SeedRecord(3, 0))
        assert abs(est - ref) <= 3 * se
