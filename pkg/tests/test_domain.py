"""Domain math: flock accounting, FCR formulas, min-max scaling."""

import numpy as np
import pytest
from hypothesis import given, strategies as st

from flockplan.domain import (
    Bounds,
    DayOutcome,
    DayPlan,
    HouseGeometry,
    fcr_basic,
    fcr_normalized,
    living_birds,
    minmax_denorm,
    minmax_norm,
    normalize_by_area,
)
from flockplan.errors import (
    DegenerateBound,
    DivisionDomain,
    NegativeFlock,
    OutOfRange,
    ShapeError,
)


class TestLivingBirds:
    def test_two_day_tally(self):
        assert living_birds(34800, [100, 50], 2) == 34650

    def test_zero_period_returns_initial(self):
        assert living_birds(26500, [10, 20, 30], 0) == 26500

    def test_partial_period_ignores_later_days(self):
        assert living_birds(1000, [5, 5, 900], 2) == 990

    def test_overdraw_raises(self):
        with pytest.raises(NegativeFlock):
            living_birds(100, [60, 60], 2)

    def test_period_beyond_record_raises(self):
        with pytest.raises(ValueError):
            living_birds(100, [1, 2], 5)

    def test_negative_mortality_raises(self):
        with pytest.raises(ValueError):
            living_birds(100, [-1, 2], 2)

    @given(
        initial=st.integers(min_value=0, max_value=50_000),
        deaths=st.lists(st.integers(min_value=0, max_value=50), max_size=40),
    )
    def test_never_negative_and_monotone(self, initial, deaths):
        try:
            prev = living_birds(initial, deaths, 0)
        except NegativeFlock:
            return
        for p in range(1, len(deaths) + 1):
            try:
                cur = living_birds(initial, deaths, p)
            except NegativeFlock:
                return
            assert 0 <= cur <= prev
            prev = cur


class TestAreaNormalization:
    def test_standard_house(self):
        geo = HouseGeometry(length_m=60.0, width_m=40.0, capacity=34800)
        dmpa, nlbpa, dfcpb = normalize_by_area(24, 34800, 0.0, geo)
        assert dmpa == pytest.approx(0.01)
        assert nlbpa == pytest.approx(14.5)
        assert dfcpb == 0.0

    def test_feed_per_bird(self):
        geo = HouseGeometry(length_m=60.0, width_m=30.0, capacity=26500)
        _, nlbpa, dfcpb = normalize_by_area(0, 26500, 5300.0, geo)
        assert nlbpa == pytest.approx(26500 / 1800)
        assert dfcpb == pytest.approx(0.2)

    def test_zero_birds_raises(self):
        geo = HouseGeometry(length_m=60.0, width_m=40.0, capacity=34800)
        with pytest.raises(DivisionDomain):
            normalize_by_area(0, 0, 10.0, geo)


class TestFcr:
    def test_basic_house_totals(self):
        assert fcr_basic(148512.0, 34000, 2800.0) == pytest.approx(1.56, abs=1e-12)

    def test_normalized_equals_scaled_quotient(self):
        assert fcr_normalized(4.368, 14.5, 2800.0) == pytest.approx(1.56, abs=1e-12)

    def test_normalized_reference_pair(self):
        # 4.3708 kg/bird at 2800 g mean weight -> 1.5610
        assert fcr_normalized(4.3708, 14.735, 2800.0) == pytest.approx(
            1.5610, abs=1e-4
        )

    def test_zero_weight_raises(self):
        with pytest.raises(DivisionDomain):
            fcr_basic(100.0, 1000, 0.0)
        with pytest.raises(DivisionDomain):
            fcr_normalized(1.0, 14.5, 0.0)

    def test_zero_birds_raises(self):
        with pytest.raises(DivisionDomain):
            fcr_basic(100.0, 0, 2800.0)
        with pytest.raises(DivisionDomain):
            fcr_normalized(1.0, 0.0, 2800.0)

    @given(
        dfcpb=st.floats(min_value=1e-3, max_value=10.0),
        nlbpa=st.floats(min_value=1e-3, max_value=30.0),
        mdw=st.floats(min_value=10.0, max_value=4000.0),
    )
    def test_density_cancels(self, dfcpb, nlbpa, mdw):
        # the density factor must cancel exactly, whatever its value
        got = fcr_normalized(dfcpb, nlbpa, mdw)
        assert got == pytest.approx(1000.0 * dfcpb / mdw, rel=1e-12)

    @given(
        dfc=st.floats(min_value=1.0, max_value=3e5),
        nlb=st.integers(min_value=100, max_value=40_000),
        mdw=st.floats(min_value=30.0, max_value=4000.0),
        area=st.floats(min_value=100.0, max_value=5000.0),
    )
    def test_both_routes_agree(self, dfc, nlb, mdw, area):
        geo = HouseGeometry(length_m=area / 10.0, width_m=10.0, capacity=nlb)
        _, nlbpa, dfcpb = normalize_by_area(0, nlb, dfc, geo)
        assert fcr_basic(dfc, nlb, mdw) == pytest.approx(
            fcr_normalized(dfcpb, nlbpa, mdw), rel=1e-10
        )


class TestMinMaxScaling:
    def test_single_position(self):
        out = minmax_norm([24.0], [28.0], [23.0])
        assert out.shape == (1,)
        assert out[0] == pytest.approx(0.2, abs=1e-12)

    def test_three_positions(self):
        out = minmax_norm([24.0, 26.0, 27.0], [28.0, 27.0, 30.0], [23.0, 22.0, 25.0])
        np.testing.assert_allclose(out, [0.2, 0.8, 0.4], atol=1e-12)

    def test_denorm_worked_example(self):
        out = minmax_denorm([0.2, 0.8, 0.4], [28.0, 27.0, 30.0], [23.0, 22.0, 25.0])
        np.testing.assert_allclose(out, [24.0, 26.0, 27.0], atol=1e-12)

    def test_strict_rejects_low(self):
        with pytest.raises(OutOfRange):
            minmax_norm([22.9], [28.0], [23.0], mode="strict")

    def test_strict_rejects_high(self):
        with pytest.raises(OutOfRange):
            minmax_norm([28.1], [28.0], [23.0], mode="strict")

    def test_clamp_clips_and_stays_inside(self):
        out = minmax_norm([22.0, 40.0], [28.0, 28.0], [23.0, 23.0], mode="clamp")
        np.testing.assert_allclose(out, [0.0, 1.0], atol=1e-12)

    def test_degenerate_bound_raises(self):
        with pytest.raises(DegenerateBound):
            minmax_norm([5.0], [5.0], [5.0])
        with pytest.raises(DegenerateBound):
            minmax_denorm([0.5], [5.0], [5.0])

    def test_length_mismatch_raises(self):
        with pytest.raises(ShapeError):
            minmax_norm([1.0, 2.0], [3.0], [0.0])

    def test_unknown_mode_raises(self):
        with pytest.raises(ValueError):
            minmax_norm([40.0], [28.0], [23.0], mode="nearest")

    @given(
        st.lists(
            st.tuples(
                st.floats(min_value=-100.0, max_value=100.0),
                st.floats(min_value=0.1, max_value=50.0),
                st.floats(min_value=0.0, max_value=1.0),
            ),
            min_size=1,
            max_size=12,
        )
    )
    def test_roundtrip_identity(self, rows):
        mini = np.array([lo for lo, _, _ in rows])
        maxi = mini + np.array([w for _, w, _ in rows])
        v = mini + np.array([f for _, _, f in rows]) * (maxi - mini)
        back = minmax_denorm(minmax_norm(v, maxi, mini), maxi, mini)
        np.testing.assert_allclose(back, v, atol=1e-9)
        inside = minmax_norm(v, maxi, mini)
        assert np.all(inside >= -1e-12) and np.all(inside <= 1.0 + 1e-12)


class TestValueObjects:
    def test_plan_rejects_unordered_temperatures(self):
        with pytest.raises(ValueError):
            DayPlan(day=1, t_min=25.0, t_avg=24.0, t_max=26.0,
                    h_min=50.0, h_avg=55.0, h_max=60.0)

    def test_plan_rejects_humidity_outside_percent_range(self):
        with pytest.raises(ValueError):
            DayPlan(day=1, t_min=24.0, t_avg=25.0, t_max=26.0,
                    h_min=50.0, h_avg=90.0, h_max=101.0)

    def test_plan_rejects_day_zero(self):
        with pytest.raises(ValueError):
            DayPlan(day=0, t_min=24.0, t_avg=25.0, t_max=26.0,
                    h_min=50.0, h_avg=55.0, h_max=60.0)

    def test_plan_vector_layout(self):
        p = DayPlan(day=3, t_min=24.0, t_avg=25.0, t_max=26.0,
                    h_min=50.0, h_avg=55.0, h_max=60.0)
        np.testing.assert_allclose(
            p.as_vector(), [3.0, 24.0, 25.0, 26.0, 50.0, 55.0, 60.0]
        )

    def test_outcome_rejects_nonpositive_weight(self):
        with pytest.raises(ValueError):
            DayOutcome(mdw=0.0, dfcpb=0.1, nlbpa=14.5,
                       dm=0, nlb=34800, dfc=100.0, dmpa=0.0)

    def test_geometry_area(self):
        assert HouseGeometry(60.0, 40.0, 34800).area_m2 == 2400.0
        assert HouseGeometry(60.0, 30.0, 26500).area_m2 == 1800.0

    def test_bounds_validation(self):
        with pytest.raises(ValueError):
            Bounds(mini=np.array([1.0, 5.0]), maxi=np.array([2.0, 4.0]))
        b = Bounds(mini=np.array([1.0, 2.0]), maxi=np.array([3.0, 6.0]))
        np.testing.assert_allclose(b.span, [2.0, 4.0])
        assert len(b) == 2
