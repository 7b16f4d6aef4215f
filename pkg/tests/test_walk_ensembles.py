"""Walk laws and samplers against enumeration and closed-form oracles."""

import json
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from watermelon.errors import (
    BudgetExceeded,
    DomainError,
    EmptyBridge,
    ParityError,
    UnreachableState,
)
from watermelon.rng import SeedRecord
from watermelon.walk_ensembles import (
    BridgeSpec,
    WeylConfig,
    bridge_transition,
    conditional_drift,
    delta_config,
    drift_asymptote,
    drift_bound,
    enumerate_bridges,
    enumerate_trajectories,
    free_step_law,
    km_weight,
    macmahon_count,
    one_step_bridge_law,
    radon_nikodym,
    radon_nikodym_ratio,
    sample_bridge,
    sample_bridges_lockstep,
    sample_envelope,
    sample_from_csv,
    sample_to_csv,
    vandermonde,
)


class TestWeylConfig:
    def test_delta(self):
        assert delta_config(3, -2).positions == (-2, 0, 2)

    def test_rejects_disorder(self):
        with pytest.raises(DomainError):
            WeylConfig((2, 0))

    def test_rejects_odd_gaps(self):
        with pytest.raises(ParityError):
            WeylConfig((0, 1))


class TestKmWeight:
    def test_single_walk_return(self):
        assert km_weight(2, WeylConfig((0,)), WeylConfig((0,))) == Fraction(1, 2)

    def test_two_walk_return(self):
        # 3 of the 16 step choices keep the walkers apart and return them
        assert km_weight(2, delta_config(2, 0), delta_config(2, 0)) == Fraction(3, 16)

    def test_parity_unreachable(self):
        assert km_weight(3, delta_config(2, 0), delta_config(2, 0)) == 0

    def test_out_of_reach(self):
        assert km_weight(2, WeylConfig((0,)), WeylConfig((6,))) == 0

    @pytest.mark.parametrize("d,n", [(1, 6), (2, 4), (2, 6), (3, 4)])
    def test_enumeration_consistency(self, d, n):
        for x_star in range(-n, n + 1, 2):
            if (n + x_star) % 2 != 0:
                continue
            spec = BridgeSpec(d, n, x_star)
            count = len(enumerate_trajectories(spec))
            assert km_weight(n, spec.start, spec.end, "exact") == Fraction(
                count, 2 ** (d * n)
            )

    def test_float_matches_exact(self):
        for d, n, xs in ((2, 10, 0), (3, 8, 2), (2, 12, -4)):
            spec = BridgeSpec(d, n, xs)
            exact = float(km_weight(n, spec.start, spec.end, "exact"))
            approx = km_weight(n, spec.start, spec.end, "float")
            assert approx == pytest.approx(exact, rel=1e-11)


class TestBridgeTransition:
    def test_forced_endpoint(self):
        spec = BridgeSpec(2, 4, 0)
        assert bridge_transition(spec, 2, delta_config(2, 0), 4, spec.end) == km_weight(
            2, delta_config(2, 0), spec.end
        ) / km_weight(2, delta_config(2, 0), spec.end)

    def test_symmetric_single_walk(self):
        spec = BridgeSpec(1, 2, 0)
        p = bridge_transition(spec, 0, WeylConfig((0,)), 1, WeylConfig((1,)))
        assert p == Fraction(1, 2)

    def test_one_step_matches_enumeration(self):
        spec = BridgeSpec(2, 4, 0)
        trajs = enumerate_trajectories(spec)
        # empirical one-step frequencies from the full enumeration at n = 1
        from collections import Counter

        counts = Counter(tuple(t[1]) for t in trajs)
        law = dict(
            (y.positions, p) for y, p in one_step_bridge_law(spec, 0, spec.start, "exact")
        )
        for pos, c in counts.items():
            assert law[pos] == Fraction(c, len(trajs))

    def test_rows_sum_to_one(self):
        spec = BridgeSpec(3, 8, 2)
        for n, x in ((0, delta_config(3, 0)), (3, delta_config(3, 1)), (4, delta_config(3, -2))):
            total = sum(p for _, p in one_step_bridge_law(spec, n, x, "exact"))
            assert total == 1

    def test_chapman_kolmogorov(self):
        spec = BridgeSpec(2, 8, 0)
        x = delta_config(2, 0)
        targets = [
            WeylConfig((a, b))
            for a in range(-4, 5)
            for b in range(a + 2, 7)
            if (a + 4) % 2 == 0 and (b - a) % 2 == 0
        ]
        for x2 in targets:
            direct = bridge_transition(spec, 0, x, 4, x2, "exact")
            via = Fraction(0)
            via_float = 0.0
            for x1, p1 in one_step_bridge_law(spec, 0, x, "exact"):
                try:
                    via += p1 * bridge_transition(spec, 1, x1, 4, x2, "exact")
                    via_float += float(p1) * bridge_transition(spec, 1, x1, 4, x2, "float")
                except UnreachableState:
                    pass
            assert via == direct
            assert abs(via_float - float(direct)) <= 1e-12

    def test_unreachable_state(self):
        spec = BridgeSpec(1, 4, 0)
        with pytest.raises(UnreachableState):
            bridge_transition(spec, 1, WeylConfig((9,)), 2, WeylConfig((8,)))


class TestEnumeration:
    def test_three_trajectories(self):
        assert len(enumerate_bridges(BridgeSpec(2, 2, 0))) == 3

    def test_single_walk_count(self):
        assert len(enumerate_bridges(BridgeSpec(1, 4, 2))) == math.comb(4, 3)

    def test_forced_corner(self):
        assert len(enumerate_bridges(BridgeSpec(2, 2, 2))) == 1

    def test_budget(self):
        with pytest.raises(BudgetExceeded):
            enumerate_bridges(BridgeSpec(4, 40, 0))

    def test_all_samples_valid(self):
        for s in enumerate_bridges(BridgeSpec(2, 4, 0)):
            s.validate()


class TestMacmahon:
    def test_small_values(self):
        assert macmahon_count(1, 1) == 2
        assert macmahon_count(1, 2) == 3

    @pytest.mark.parametrize("d,N", [(1, 3), (2, 2), (2, 4), (3, 3)])
    def test_matches_enumeration(self, d, N):
        assert macmahon_count(N, d) == len(enumerate_trajectories(BridgeSpec(d, 2 * N, 0)))


class TestRadonNikodym:
    def test_single_walk_midpoint(self):
        spec = BridgeSpec(1, 2, 0)
        assert radon_nikodym(spec, 1, WeylConfig((1,))) == 1

    @pytest.mark.parametrize(
        "spec",
        [BridgeSpec(1, 8, 2), BridgeSpec(2, 8, 0), BridgeSpec(3, 10, 2), BridgeSpec(3, 10, -4)],
    )
    def test_product_formula_equals_law_ratio(self, spec):
        # compare on every configuration the bridge can reach
        trajs = enumerate_trajectories(spec, budget=30)
        for n in range(0, spec.n_star + 1, 2):
            configs = {tuple(t[n]) for t in trajs}
            for pos in configs:
                x = WeylConfig(pos)
                assert radon_nikodym(spec, n, x) == radon_nikodym_ratio(spec, n, x)

    def test_endpoint_value(self):
        spec = BridgeSpec(2, 6, 0)
        val = radon_nikodym(spec, spec.n_star, spec.end)
        assert val == radon_nikodym_ratio(spec, spec.n_star, spec.end)

    def test_zero_when_unreachable_by_bridge(self):
        spec = BridgeSpec(1, 4, 0)
        assert radon_nikodym(spec, 3, WeylConfig((5,))) == 0


class TestDrift:
    def test_single_walker_no_drift(self):
        for x in (-4, 0, 10):
            assert conditional_drift(WeylConfig((x,)), 1) == 0

    def test_adjacent_pair(self):
        assert conditional_drift(WeylConfig((0, 2)), 2) == Fraction(1, 2)
        assert conditional_drift(WeylConfig((0, 2)), 1) == Fraction(-1, 2)

    def test_wide_gap_asymptote(self):
        # drift times gap approaches 1 for the top walker of a pair
        for m in (4, 8, 14, 20):
            gap = 2**m
            cfg = WeylConfig((0, gap))
            drift = conditional_drift(cfg, 2)
            assert abs(float(drift * gap) - 1.0) < 4.0 / gap

    @given(st.lists(st.integers(1, 50), min_size=1, max_size=3), st.data())
    @settings(max_examples=200, deadline=None)
    def test_bound_holds(self, gaps, data):
        pos = [0]
        for g in gaps:
            pos.append(pos[-1] + 2 * g)
        cfg = WeylConfig(tuple(pos))
        k = data.draw(st.integers(1, cfg.d))
        assert abs(conditional_drift(cfg, k)) <= drift_bound(cfg, k)

    def test_asymptote_helper(self):
        cfg = WeylConfig((0, 2, 6))
        assert drift_asymptote(cfg, 3) == Fraction(1, 4) + Fraction(1, 6)


class TestHarmonicity:
    @given(st.lists(st.integers(1, 30), min_size=1, max_size=4))
    @settings(max_examples=100, deadline=None)
    def test_vandermonde_martingale(self, gaps):
        # mean of the signed Vandermonde over all 2^d raw moves equals h(x)
        pos = [0]
        for g in gaps:
            pos.append(pos[-1] + 2 * g)
        d = len(pos)
        total = 0
        for mask in range(1 << d):
            moved = [p + (1 if mask >> i & 1 else -1) for i, p in enumerate(pos)]
            total += vandermonde(moved)
        assert total == (1 << d) * vandermonde(pos)

    def test_free_law_normalizes(self):
        law = free_step_law(WeylConfig((0, 2, 6)))
        assert sum(p for _, p in law) == 1


class TestSamplers:
    def test_two_step_bridge_uniform(self):
        spec = BridgeSpec(1, 2, 0)
        mids = [sample_bridge(spec, SeedRecord(5, i)).trajectory[1][0] for i in range(400)]
        up = sum(1 for m in mids if m == 1)
        # two trajectories at probability 1/2: binomial 3.5-sigma window
        assert abs(up - 200) < 3.5 * math.sqrt(400 * 0.25)

    def test_empty_bridge(self):
        with pytest.raises(EmptyBridge):
            sample_bridge(BridgeSpec(1, 2, 4), SeedRecord(0, 0))

    def test_deterministic_replay(self):
        spec = BridgeSpec(2, 6, 0)
        a = sample_bridge(spec, SeedRecord(123, 7))
        b = sample_bridge(spec, SeedRecord(123, 7))
        assert np.array_equal(a.trajectory, b.trajectory)
        assert a.seed_record == SeedRecord(123, 7)

    def test_rows_are_weyl_configs(self):
        s = sample_bridge(BridgeSpec(3, 6, 0), SeedRecord(9, 0))
        for row in s.trajectory:
            WeylConfig(tuple(int(v) for v in row))

    @pytest.mark.parametrize("n_star", [2, 4])
    def test_lockstep_chi_square_against_enumeration(self, n_star):
        spec = BridgeSpec(2, n_star, 0)
        trajs = enumerate_trajectories(spec)
        keys = {t.tobytes(): i for i, t in enumerate(trajs)}
        samples = sample_bridges_lockstep(spec, 100_000, SeedRecord(31, n_star))
        counts = np.zeros(len(trajs))
        for s in samples:
            counts[keys[s.astype(np.int64).tobytes()]] += 1
        expected = len(samples) / len(trajs)
        chi2 = float(((counts - expected) ** 2 / expected).sum())
        crit = stats.chi2.ppf(1 - 0.001, df=len(trajs) - 1)
        assert chi2 < crit

    def test_scalar_sampler_matches_lockstep(self):
        spec = BridgeSpec(2, 4, 0)
        trajs = enumerate_trajectories(spec)
        keys = {t.tobytes(): i for i, t in enumerate(trajs)}
        scalar = np.zeros(len(trajs))
        for i in range(1500):
            s = sample_bridge(spec, SeedRecord(77, i))
            scalar[keys[s.trajectory.tobytes()]] += 1
        expected = 1500 / len(trajs)
        chi2 = float(((scalar - expected) ** 2 / expected).sum())
        assert chi2 < stats.chi2.ppf(1 - 0.001, df=len(trajs) - 1)


class TestSerialization:
    def test_round_trip(self, tmp_path):
        s = sample_bridge(BridgeSpec(2, 6, 2), SeedRecord(3, 1))
        csv_path = tmp_path / "traj.csv"
        sample_to_csv(s, csv_path)
        envelope = sample_envelope(s)
        restored = sample_from_csv(csv_path, json.loads(json.dumps(envelope)))
        assert np.array_equal(restored.trajectory, s.trajectory)
        assert restored.spec == s.spec
        assert restored.seed_record == s.seed_record
        restored.validate()
