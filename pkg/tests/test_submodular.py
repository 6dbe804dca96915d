import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gamehedge.errors import ArgumentError, PreconditionError
from gamehedge.lattice import MarketSpec, apply_operator, bellman_step, price_european
from gamehedge.payoffs import check_submodular, make_payoff
from gamehedge.submodular import (
    ThreeColorCoefficients,
    TwoColorCoefficients,
    case_weights,
    iterable_vertex_weights,
    random_submodular_convex,
    three_color_step,
    two_color_crr,
    two_color_step,
    two_color_vertex_weights,
)
from generators import kappa_zero_market, market_from_q, random_market

SYM = MarketSpec([0.9, 0.9], [1.2, 1.2], 1.0, 1)
BOUNDARY = MarketSpec([0.9, 0.9], [1.2, 1.2], 1.05, 1)


def max_payoff(z):
    return z.max(axis=-1)


class TestTwoColor:
    def test_coefficients(self):
        co = TwoColorCoefficients.from_market(SYM)
        assert co.kappa == pytest.approx(1 / 3)
        assert co.branch == "kappa_nonneg"
        assert co.kappa == pytest.approx(1 - co.p.sum(), abs=1e-14)

    def test_symmetric_value(self):
        value, _, _ = two_color_step(max_payoff, [1.0, 1.0], SYM)
        assert value == pytest.approx(1.1, abs=1e-14)

    def test_boundary_branches_agree(self):
        co = TwoColorCoefficients.from_market(BOUNDARY)
        assert co.branch == "boundary"
        value, _, _ = two_color_step(max_payoff, [1.0, 1.0], BOUNDARY)
        assert value == pytest.approx(bellman_step(max_payoff, [1.0, 1.0], BOUNDARY).value, abs=1e-12)

    def test_traded_asset(self):
        rng = np.random.default_rng(0)
        for _ in range(5):
            m = random_market(rng, 2)
            value, g1, g2 = two_color_step(lambda z: z[..., 0], [1.3, 0.7], m)
            assert value == pytest.approx(m.rho * 1.3, rel=1e-13)
            assert g1 == pytest.approx(1.0, abs=1e-12)
            assert g2 == pytest.approx(0.0, abs=1e-12)

    @given(st.integers(0, 10_000))
    def test_matches_general_step(self, seed):
        rng = np.random.default_rng(seed)
        m = random_market(rng, 2)
        f = random_submodular_convex(2, rng)
        z = rng.uniform(0.5, 1.5, size=2)
        value, g1, g2 = two_color_step(f, z, m)
        ref = bellman_step(f, z, m)
        assert value == pytest.approx(ref.value, rel=1e-10, abs=1e-12)
        np.testing.assert_allclose([g1, g2], ref.gamma, rtol=1e-8, atol=1e-10)

    @given(st.integers(0, 10_000))
    def test_weights_are_a_law(self, seed):
        m = random_market(np.random.default_rng(seed), 2)
        w = two_color_vertex_weights(m)
        assert np.all(w >= -1e-15) and w.sum() == pytest.approx(1.0, abs=1e-12)
        np.testing.assert_allclose(w @ m.vertices(), m.rho, atol=1e-12)

    def test_wrong_dimension(self):
        with pytest.raises(ArgumentError):
            TwoColorCoefficients.from_market(MarketSpec([0.9], [1.2], 1.0, 1))

    @given(st.integers(0, 10_000))
    def test_preserves_submodularity(self, seed):
        rng = np.random.default_rng(seed)
        m = random_market(rng, 2)
        f = random_submodular_convex(2, rng)
        image = make_payoff("custom", fn=lambda z: apply_operator(f, z, m))
        assert check_submodular(image, ([0.6, 0.6], [1.6, 1.6]), grid=7, rtol=1e-10).passed


class TestTwoColorCRR:
    def test_zero_steps(self):
        m = kappa_zero_market(np.random.default_rng(1), 0)
        assert two_color_crr(max_payoff, [1.0, 1.2], m) == pytest.approx(1.2)

    def test_one_step(self):
        m = kappa_zero_market(np.random.default_rng(2), 1)
        value, _, _ = two_color_step(max_payoff, [1.0, 1.2], m)
        assert two_color_crr(max_payoff, [1.0, 1.2], m) == pytest.approx(value / m.rho, rel=1e-13)

    def test_four_steps_against_engine(self):
        m = kappa_zero_market(np.random.default_rng(3), 4)
        p = make_payoff("call_on_max", {"K": 1.0})
        assert two_color_crr(p, [1.0, 0.9], m) == pytest.approx(price_european(p, [1.0, 0.9], m).price,
                                                                abs=1e-12)

    def test_needs_zero_kappa(self):
        with pytest.raises(PreconditionError):
            two_color_crr(max_payoff, [1.0, 1.0], SYM)


class TestThreeColor:
    def test_constant_every_case(self):
        for q in ([0.2, 0.2, 0.2], [0.8, 0.8, 0.8], [0.4, 0.4, 0.4], [0.3, 0.5, 0.6], [0.2, 0.8, 0.7]):
            m = market_from_q(q)
            assert three_color_step(lambda z: np.full(z.shape[:-1], 1.7), [1.0, 1.0, 1.0], m) \
                == pytest.approx(1.7, abs=1e-13)

    def test_symmetric_linear_case(self):
        m = market_from_q([0.2, 0.2, 0.2], rho=1.0)
        co = ThreeColorCoefficients.from_market(m)
        assert co.case == ("linear_nonneg",)
        assert co.alpha_123 == pytest.approx(1 - co.q.sum(), abs=1e-14)
        p = make_payoff("call_on_max", {"K": 1.0})
        z = np.array([1.0, 1.05, 0.95])
        assert three_color_step(p, z, m) == pytest.approx(bellman_step(p, z, m).value, rel=1e-10)

    @given(st.integers(0, 10_000))
    def test_case_rows_are_laws(self, seed):
        rng = np.random.default_rng(seed)
        m = random_market(rng, 3)
        co = ThreeColorCoefficients.from_market(m)
        for tag in co.cases:
            for w in case_weights(tag, co):
                assert np.all(w >= -1e-12)
                assert w.sum() == pytest.approx(1.0, abs=1e-12)
                np.testing.assert_allclose(w @ m.vertices(), m.rho, atol=1e-12)

    @given(st.integers(0, 10_000))
    def test_matches_general_step(self, seed):
        rng = np.random.default_rng(seed)
        m = random_market(rng, 3)
        if not ThreeColorCoefficients.from_market(m).cases:
            return
        f = random_submodular_convex(3, rng)
        z = rng.uniform(0.6, 1.4, size=3)
        assert three_color_step(f, z, m) == pytest.approx(bellman_step(f, z, m).value, rel=1e-10, abs=1e-12)

    def test_uncovered_pattern_falls_back(self):
        m = market_from_q([0.6, 0.6, 0.6])
        co = ThreeColorCoefficients.from_market(m)
        assert co.cases == ()
        p = make_payoff("call_on_max", {"K": 1.0})
        with pytest.warns(UserWarning, match="general engine"):
            value = three_color_step(p, [1.0, 1.0, 1.0], m)
        assert value == pytest.approx(bellman_step(p, [1.0, 1.0, 1.0], m).value, rel=1e-12)

    def test_iterable_only_in_linear_cases(self):
        assert iterable_vertex_weights(market_from_q([0.2, 0.2, 0.2])) is not None
        assert iterable_vertex_weights(market_from_q([0.9, 0.9, 0.9])) is not None
        assert iterable_vertex_weights(market_from_q([0.4, 0.4, 0.4])) is None
        assert iterable_vertex_weights(MarketSpec([0.9], [1.2], 1.0, 1)) is None

    def test_fast_path_three_assets(self):
        m = market_from_q([0.2, 0.25, 0.3], n=3)
        p = make_payoff("call_on_max", {"K": 1.0})
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            fast = price_european(p, [1.0, 1.0, 1.0], m, fast_path="on").price
        assert fast == pytest.approx(price_european(p, [1.0, 1.0, 1.0], m).price, rel=1e-12)
