import math
import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fixtures import (
    FIXTURE_AGENT_EXPECTATIONS,
    FIXTURE_INDEX_EXPECTATIONS,
    FixtureEmbedder,
    build_fixture_records,
    fixture_tribes,
)
from marketsim.metrics import (
    bid_efficiency,
    compute_agent_metrics,
    compute_market_indices,
    concentration,
    coefficient_of_variation,
    fill_rate,
    gini,
    iei,
    mms,
    npm,
    osi,
    rar,
    step_profit,
    stockout_rate,
    theil,
)


class TestPrimitives:
    def test_step_profit_zero(self):
        assert step_profit(0, Fraction(0), 0) == 0

    def test_step_profit_margin(self):
        assert step_profit(300, Fraction(180), 0) == 120

    def test_step_profit_exact_fraction(self):
        assert step_profit(126, Fraction(113, 9) * 9, 0) == 13

    def test_npm_zero_guard(self):
        assert npm([0.0, 0.0], [0, 0]) == 0.0

    def test_npm_ratio(self):
        # the eps guard in the denominator shifts the exact 0.4 by ~1.3e-12
        assert abs(npm([120.0], [300]) - 0.4) < 1e-11

    def test_npm_negative(self):
        assert npm([-10.0, 4.0], [100]) < 0

    def test_rar_constant_profit_is_huge(self):
        assert rar([5.0, 5.0, 5.0]) == pytest.approx(5.0 / 1e-9)

    def test_rar_symmetric_zero(self):
        assert rar([1.0, -1.0]) == 0.0

    def test_rar_hand_value(self):
        assert rar([2.0, 4.0, 6.0]) == pytest.approx(2.4495, abs=1e-3)

    def test_rar_empty(self):
        assert rar([]) == 0.0

    def test_iei_cases(self):
        assert iei(0, 0.0) == 0.0
        assert iei(100, 0.0) == pytest.approx(1.0, abs=1e-9)
        assert iei(50, 50.0) == pytest.approx(0.5, abs=1e-9)

    def test_rates(self):
        assert stockout_rate(3, 8) == pytest.approx(0.375, abs=1e-9)
        assert fill_rate(5, 8) == pytest.approx(0.625, abs=1e-9)

    def test_bid_efficiency_cases(self):
        assert bid_efficiency(0, 0, 0, 0) == 0.0
        assert bid_efficiency(10, 10, 500, 500) == pytest.approx(1.0, abs=1e-9)

    def test_osi_identical_series(self):
        assert osi([3, 5, 2], [3, 5, 2]) == pytest.approx(1.0, abs=1e-12)

    def test_osi_cv_gap(self):
        # orders CV 0.5 vs sales CV 0.0 -> 1/1.5
        assert osi([5, 15], [7, 7]) == pytest.approx(1 / 1.5, abs=1e-9)

    def test_osi_short_series_defaults_to_one(self):
        assert osi([4], [9]) == 1.0
        assert osi([], []) == 1.0

    def test_mms_mean_and_flag(self):
        score, count = mms([0.8, 0.6])
        assert score == pytest.approx(0.7, abs=1e-12)
        assert count == 2
        assert mms([]) == (0.0, 0)


class TestIndices:
    def test_gini_equal_wealth_zero(self):
        assert gini([7, 7, 7, 7]) == 0.0

    def test_gini_hand_value(self):
        assert gini([1, 2, 3, 4]) == 0.25

    def test_gini_degenerate(self):
        assert gini([]) == 0.0
        assert gini([0, 0]) == 0.0

    def test_theil_equal_zero(self):
        assert theil([5, 5, 5]) == 0.0

    def test_theil_drops_non_positive(self):
        assert theil([5.0, 5.0, 0.0, -2.0]) == 0.0

    def test_concentration_single_winner(self):
        hhi, cr4 = concentration([100, 0, 0, 0, 0])
        assert hhi == 1.0 and cr4 == 1.0

    def test_concentration_equal_shares(self):
        m = 8
        hhi, _ = concentration([10] * m)
        assert hhi == pytest.approx(1 / m, abs=1e-15)

    def test_concentration_zero_revenue_null(self):
        assert concentration([0, 0, 0]) == (None, None)

    @given(
        st.lists(st.integers(min_value=0, max_value=10_000), min_size=2, max_size=30),
        st.floats(min_value=0.001, max_value=1000.0, allow_nan=False),
    )
    @settings(max_examples=200, deadline=None)
    def test_inequality_scale_invariance(self, values, scale):
        scaled = [v * scale for v in values]
        assert abs(gini(values) - gini(scaled)) < 1e-9
        assert abs(theil(values) - theil(scaled)) < 1e-9
        if sum(values) > 0:
            assert abs(
                coefficient_of_variation(values) - coefficient_of_variation(scaled)
            ) < 1e-6

    @given(st.lists(st.integers(min_value=0, max_value=10_000), min_size=1, max_size=30))
    @settings(max_examples=200, deadline=None)
    def test_gini_bounded(self, values):
        assert 0.0 <= gini(values) <= 1.0


class TestFixtureTrajectory:
    def test_all_nine_metrics_match_hand_oracle(self):
        records = build_fixture_records()
        metrics = compute_agent_metrics(records, fixture_tribes(), FixtureEmbedder())
        for agent_id, expected in FIXTURE_AGENT_EXPECTATIONS.items():
            got = metrics[agent_id].to_json()
            for name, value in expected.items():
                if name == "mms_interactions":
                    assert got[name] == value, f"{agent_id}.{name}"
                else:
                    assert got[name] == pytest.approx(value, abs=1e-9), f"{agent_id}.{name}"

    def test_market_indices_match_hand_oracle(self):
        records = build_fixture_records()
        indices = compute_market_indices(records)
        assert len(indices) == 3
        for got, expected in zip(indices, FIXTURE_INDEX_EXPECTATIONS):
            for name, value in expected.items():
                assert getattr(got, name) == pytest.approx(value, abs=1e-9), name

    def test_purchaser_basis_shrinks_interactions(self):
        records = build_fixture_records()
        considered = compute_agent_metrics(
            records, fixture_tribes(), FixtureEmbedder(), mms_basis="considered"
        )
        purchasers = compute_agent_metrics(
            records, fixture_tribes(), FixtureEmbedder(), mms_basis="purchasers"
        )
        # u2 considered A but bought from C, so A loses exactly that interaction
        assert purchasers["A"].mms_interactions == considered["A"].mms_interactions - 1
        assert purchasers["A"].mms == pytest.approx((1.0 + 0.6 + 0.8) / 3, abs=1e-9)

    def test_accounting_identity_sold_plus_stockout_is_directed(self):
        records = build_fixture_records()
        sold = {a: 0 for a in "ABC"}
        unfilled = {a: 0 for a in "ABC"}
        for record in records:
            for event in record.purchases:
                sold[event.seller_id] += event.qty
            for attempt in record.stockouts:
                unfilled[attempt.seller_id] += attempt.units_unfilled
        metrics = compute_agent_metrics(records, fixture_tribes(), FixtureEmbedder())
        for agent_id in "ABC":
            directed = sold[agent_id] + unfilled[agent_id]
            assert metrics[agent_id].fill_rate == pytest.approx(
                sold[agent_id] / (directed + 1e-9), abs=1e-12
            )


def random_trajectories(n, seed):
    """Small random episodes used to exercise metric bounds."""
    from marketsim.config import EpisodeConfig
    from marketsim.domain import ItemSpec
    from marketsim.engine import run_episode
    from marketsim.policies import SCRIPTED_POLICY_NAMES

    rng = random.Random(seed)
    for i in range(n):
        config = EpisodeConfig(
            agents=rng.randint(2, 4),
            steps=rng.randint(1, 3),
            bidding_rounds=rng.randint(1, 2),
            buyers_per_step=rng.randint(5, 25),
            alpha=rng.choice([0.5, 1.0, 1.5]),
            supply_demand_ratio=rng.choice([0.5, 0.95, 1.2]),
            seed=seed * 1000 + i,
            catalog=[
                ItemSpec("x", base_price=rng.randint(1, 20), quantity=rng.randint(5, 40)),
                ItemSpec("y", base_price=rng.randint(1, 20), quantity=rng.randint(5, 40)),
            ],
            default_policy=rng.choice(SCRIPTED_POLICY_NAMES),
        )
        yield run_episode(config)


class TestBoundsOnRandomTrajectories:
    def test_bounded_metrics_stay_in_range(self):
        for log in random_trajectories(40, seed=5):
            for m in log.agent_metrics.values():
                assert 0.0 <= m.iei <= 1.0
                assert 0.0 < m.osi <= 1.0
                assert 0.0 <= m.stockout_rate <= 1.0
                assert m.fill_rate >= 0.0
            for idx in log.market_indices:
                assert 0.0 <= idx.gini <= 1.0
                assert 0.0 <= idx.active_ratio <= 1.0
                if idx.hhi is not None:
                    assert 0.0 < idx.hhi <= 1.0
                if idx.cr4 is not None:
                    assert 0.0 < idx.cr4 <= 1.0 + 1e-12
