import numpy as np
import pytest

from maccoop.capacity import interference_free_rate
from maccoop.equilibrium import (
    dsc_diagnostic,
    ne_sic,
    ne_sud,
    ne_timeshare,
    ne_utilities,
    utility_table,
)
from maccoop.errors import InvalidArgument
from maccoop.model import (
    Coalition,
    Partition,
    PerAntenna,
    Scenario,
    SicFixed,
    SicTimeShare,
    Sud,
    UserSpec,
    enumerate_partitions,
    induced_order,
)
from maccoop.capacity import single_antenna_utilities

from conftest import random_feasible_profile, random_scenario, symmetric


def per_antenna_mimo(order=(3, 2, 1)):
    """3 single-antenna users, 2 receive antennas, per-antenna caps."""
    channels = [[1.17119, -0.1941], [-2.1384, -0.8396], [1.3546, -1.0722]]
    users = tuple(
        UserSpec(i + 1, 1, np.array(h).reshape(2, 1), PerAntenna((1.0,)))
        for i, h in enumerate(channels)
    )
    return Scenario(users, 2, 1.0, SicFixed(order))


class TestNeSic:
    def test_two_symmetric_users(self):
        s = symmetric(2, 1.0, SicFixed((1, 2)))
        profile, utils = ne_sic(s, Partition.singletons(2))
        assert utils[1] == pytest.approx(np.log(1.5), abs=1e-12)
        assert utils[2] == pytest.approx(np.log(2.0), abs=1e-12)
        # both users transmit at full power
        for q in profile.matrices:
            assert q[0, 0] == pytest.approx(1.0, abs=1e-12)

    def test_grand_coalition_is_interference_free(self, rng):
        s = random_scenario(rng, k=3, receiver=SicFixed((1, 2, 3)))
        part = Partition.grand(3)
        _, utils = ne_sic(s, part)
        _, rate = interference_free_rate(s, Coalition.from_members([1, 2, 3]))
        assert utils[0b111] == pytest.approx(rate, abs=1e-9)

    def test_wrong_receiver(self):
        s = symmetric(2, 1.0, Sud())
        with pytest.raises(InvalidArgument):
            ne_sic(s, Partition.singletons(2))

    def test_matches_closed_form_all_partitions(self, rng):
        # MIMO machinery agrees with the single-antenna closed forms
        for _ in range(5):
            s = random_scenario(rng, m=1, receiver=None)
            for part in enumerate_partitions(s.k):
                _, utils = ne_sic(s, part)
                order = induced_order(part, s.receiver.base_order)
                expected = single_antenna_utilities(s, part, order)
                for mask, v in expected.items():
                    assert utils[mask] == pytest.approx(v, abs=1e-9)

    def test_utilities_telescope_for_single_rx(self, rng):
        # total equilibrium rate of any partition equals the log of one
        # plus total received power over noise (the ratios telescope)
        s = random_scenario(rng, k=4, m=1)
        for part in enumerate_partitions(4):
            _, utils = ne_sic(s, part)
            received = 0.0
            for block in part.blocks:
                gain2 = sum(float(np.sum(s.user(u).channel ** 2)) for u in block)
                received += gain2 * sum(s.user(u).power.total for u in block)
            assert sum(utils.values()) == pytest.approx(
                np.log(1.0 + received / s.noise), abs=1e-9
            )

    def test_multistart_unique_utilities(self, rng):
        s = per_antenna_mimo()
        part = Partition.from_blocks(3, [[1, 2], [3]])
        baseline = None
        for _ in range(5):
            init = random_feasible_profile(rng, s, part)
            _, utils = ne_sic(s, part, init=init, solver_tol=1e-8)
            if baseline is None:
                baseline = utils
            for mask in baseline:
                assert utils[mask] == pytest.approx(baseline[mask], abs=1e-6)


class TestNeSud:
    def test_two_symmetric_users(self):
        # full power is dominant; both decoded under the other's interference
        s = symmetric(2, 1.0, Sud())
        _, utils = ne_sud(s, Partition.singletons(2))
        assert utils[1] == pytest.approx(np.log(1.5), abs=1e-9)
        assert utils[2] == pytest.approx(np.log(1.5), abs=1e-9)

    def test_single_block_interference_free(self, rng):
        s = random_scenario(rng, k=3, receiver=Sud())
        _, utils = ne_sud(s, Partition.grand(3))
        _, rate = interference_free_rate(s, Coalition.from_members([1, 2, 3]))
        assert utils[0b111] == pytest.approx(rate, abs=1e-9)

    def test_aggregate_covariance_unique(self, rng):
        s = random_scenario(rng, k=3, m=2, receiver=Sud())
        part = Partition.singletons(3)
        aggregates = []
        for _ in range(3):
            init = random_feasible_profile(rng, s, part)
            profile, _ = ne_sud(s, part, init=init)
            agg = np.zeros((2, 2))
            for block, q in zip(part.blocks, profile.matrices):
                h = np.hstack([s.user(u).channel for u in block])
                agg += h @ q @ h.T
            aggregates.append(agg)
        for other in aggregates[1:]:
            np.testing.assert_allclose(aggregates[0], other, atol=1e-5)

    def test_fixed_point_is_best_response(self, rng):
        from maccoop.capacity import block_budget, waterfill
        from maccoop.model import coalition_channel

        s = random_scenario(rng, k=3, m=2, receiver=Sud())
        part = Partition.from_blocks(3, [[1, 2], [3]])
        profile, utils = ne_sud(s, part)
        # re-optimizing any single block one more time gains nothing
        for i, block in enumerate(part.blocks):
            h = coalition_channel(s, block)
            noise = s.noise * np.eye(s.rx_antennas)
            for j, other in enumerate(part.blocks):
                if j != i:
                    hj = coalition_channel(s, other)
                    noise = noise + hj @ profile.matrices[j] @ hj.T
            _, best = waterfill(h, noise, block_budget(s, block))
            assert best - utils[block.mask] < 1e-7

    def test_wrong_receiver(self):
        s = symmetric(2, 1.0, SicFixed((1, 2)))
        with pytest.raises(InvalidArgument):
            ne_sud(s, Partition.singletons(2))


class TestNeTimeshare:
    def test_three_user_hand_average(self):
        s = symmetric(3, 0.5, SicTimeShare())
        part = Partition.from_blocks(3, [[1], [2, 3]])
        utils = ne_timeshare(s, part)
        assert utils[0b001] == pytest.approx((np.log(11 / 9) + np.log(3)) / 2, abs=1e-12)
        assert utils[0b110] == pytest.approx((np.log(9) + np.log(11 / 3)) / 2, abs=1e-12)

    def test_degenerate_weight_equals_fixed_order(self):
        s3 = symmetric(3, 0.5, SicTimeShare((1.0, 0.0)))
        part = Partition.from_blocks(3, [[1], [2, 3]])
        utils = ne_timeshare(s3, part)
        # the first lexicographic order decodes block {1} first, which the
        # base order (1,2,3) induces as well
        fixed = symmetric(3, 0.5, SicFixed((1, 2, 3)))
        _, expected = ne_sic(fixed, part)
        for mask in utils:
            assert utils[mask] == pytest.approx(expected[mask], abs=1e-12)

    def test_symmetric_blocks_equal_utilities(self):
        s = symmetric(4, 1.0, SicTimeShare())
        part = Partition.from_blocks(4, [[1, 2], [3, 4]])
        utils = ne_timeshare(s, part)
        assert utils[0b0011] == pytest.approx(utils[0b1100], abs=1e-12)

    def test_weights_length_guard(self):
        s = symmetric(3, 1.0, SicTimeShare((0.5, 0.5)))
        with pytest.raises(InvalidArgument):
            ne_timeshare(s, Partition.singletons(3))  # 6 orders, 2 weights

    def test_factorial_guard(self):
        s = symmetric(8, 1.0, SicTimeShare())
        with pytest.raises(InvalidArgument):
            ne_timeshare(s, Partition.singletons(8))


class TestDsc:
    def test_identical_profiles_vanish(self):
        s = symmetric(2, 1.0, SicFixed((1, 2)))
        part = Partition.singletons(2)
        profile, _ = ne_sic(s, part)
        rep = dsc_diagnostic(s, part, profile, profile)
        assert rep.values == (0.0, 0.0)
        assert rep.total == 0.0

    @pytest.mark.parametrize("receiver", ["sic", "sud"])
    def test_total_nonnegative_for_feasible_pairs(self, rng, receiver):
        for _ in range(60):
            if receiver == "sic":
                s = random_scenario(rng, receiver=None)
            else:
                s = random_scenario(rng, receiver=Sud())
            parts = list(enumerate_partitions(s.k))
            part = parts[int(rng.integers(0, len(parts)))]
            a = random_feasible_profile(rng, s, part)
            b = random_feasible_profile(rng, s, part)
            rep = dsc_diagnostic(s, part, a, b)
            assert rep.total >= -1e-9

    def test_symmetric_in_argument_order(self, rng):
        s = random_scenario(rng, k=3, receiver=None)
        part = Partition.from_blocks(3, [[1, 2], [3]])
        a = random_feasible_profile(rng, s, part)
        b = random_feasible_profile(rng, s, part)
        fwd = dsc_diagnostic(s, part, a, b)
        back = dsc_diagnostic(s, part, b, a)
        assert fwd.total == pytest.approx(back.total, abs=1e-10)

    def test_equilibria_have_zero_components(self, rng):
        s = per_antenna_mimo()
        part = Partition.from_blocks(3, [[1, 2], [3]])
        prof1, _ = ne_sic(s, part, init=random_feasible_profile(rng, s, part),
                          solver_tol=1e-9)
        prof2, _ = ne_sic(s, part, init=random_feasible_profile(rng, s, part),
                          solver_tol=1e-9)
        rep = dsc_diagnostic(s, part, prof1, prof2)
        for c in rep.values:
            assert abs(c) <= 1e-6


class TestUtilityTable:
    def test_counts_for_three_users(self):
        s = symmetric(3, 1.0, SicFixed((1, 2, 3)))
        table = utility_table(s)
        assert len(table.entries) == 5
        assert len(table) == 10

    def test_fast_path_matches_generic(self, rng):
        # closed-form whole-table path vs per-partition solvers
        for receiver in (SicFixed((2, 1, 3)), Sud()):
            s = random_scenario(rng, k=3, m=1, receiver=receiver)
            table = utility_table(s)
            for part in enumerate_partitions(3):
                direct = ne_utilities(s, part)
                for mask, v in direct.items():
                    assert table.value(part, Coalition(mask)) == pytest.approx(v, abs=1e-9)

    def test_cohesive(self, rng):
        s = random_scenario(rng, k=3, m=2, receiver=Sud())
        table = utility_table(s)
        grand = table.value(Partition.grand(3), Coalition(0b111))
        for part in enumerate_partitions(3):
            assert sum(table.partition_values(part).values()) <= grand + 1e-8

    def test_fingerprint_changes_with_noise(self):
        s = symmetric(3, 1.0, SicFixed((1, 2, 3)))
        assert utility_table(s).fingerprint != utility_table(s.with_noise(2.0)).fingerprint

    def test_timeshare_guard(self):
        s = symmetric(8, 1.0, SicTimeShare())
        with pytest.raises(InvalidArgument):
            utility_table(s)
