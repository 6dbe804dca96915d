"""End-to-end acceptance criteria; each test reports one PASS/FAIL line."""

import time
import warnings

import numpy as np
import pytest

from gamehedge.continuum import (
    ContinuumSpec,
    GreenFunctionQuery,
    convergence_harness,
    green_price,
)
from gamehedge.geometry import simplex_risk_neutral
from gamehedge.lattice import (
    MarketSpec,
    apply_operator,
    bellman_step,
    extract_strategy,
    price_american,
    price_european,
    price_interval,
    price_lower,
    price_with_costs,
    proportional_costs,
    replay_capital,
    transaction_cost_gate,
)
from gamehedge.minmax import VertexValuation, upper_minmax
from gamehedge.payoffs import make_payoff, power_payoff
from gamehedge.submodular import (
    ThreeColorCoefficients,
    random_submodular_convex,
    three_color_step,
    two_color_crr,
    two_color_step,
)
from generators import interior_family, interior_simplex, kappa_zero_market, market_from_q, random_market
from oracles import all_vertex_paths, call_on_max_independent, crr_price, dense_weights, grid_minmax


def test_criterion_01_geometry_suite(criterion):
    with criterion(1, "risk-neutral simplex weights on 500 random families"):
        rng = np.random.default_rng(1)
        t0 = time.perf_counter()
        worst_sum = worst_bary = worst_solve = 0.0
        for i in range(500):
            d = (1, 2, 3)[i % 3]
            fam, _ = interior_simplex(rng, d)
            m = simplex_risk_neutral(fam)
            assert np.all(m.weights > 0)
            worst_sum = max(worst_sum, abs(m.weights.sum() - 1.0))
            scale = np.max(np.linalg.norm(fam, axis=1))
            worst_bary = max(worst_bary, np.linalg.norm(m.weights @ fam) / scale)
            worst_solve = max(worst_solve, np.max(np.abs(m.weights - dense_weights(fam))))
        elapsed = time.perf_counter() - t0
        assert worst_sum <= 1e-12
        assert worst_bary <= 1e-10
        assert worst_solve <= 1e-10
        assert elapsed < 5.0


def test_criterion_02_minmax_oracle(criterion):
    with criterion(2, "upper minmax against nested grid search and KKT certificate, 200 instances"):
        rng = np.random.default_rng(2)
        t0 = time.perf_counter()
        for i in range(200):
            d = (1, 2, 3)[i % 3]
            k = int(rng.integers(d + 1, 9))
            fam = interior_family(rng, d, k)
            vals = rng.normal(size=k)
            res = upper_minmax(VertexValuation(fam, vals))
            grid_val, _ = grid_minmax(fam, vals)
            assert abs(res.value - grid_val) <= 1e-3, (i, res.value, grid_val)
            scale = 1.0 + np.max(np.abs(vals))
            resid = vals - fam @ res.gamma
            sup = list(res.active_measure.indices)
            assert np.ptp(resid[sup]) <= 1e-9 * scale
            assert np.all(resid <= res.value + 1e-9 * scale)
            assert abs(resid[sup].mean() - res.value) <= 1e-9 * scale
        assert time.perf_counter() - t0 < 60.0


def test_criterion_03_crr_agreement(criterion):
    with criterion(3, "one-asset prices equal the classical binomial formula"):
        rng = np.random.default_rng(3)
        worst = 0.0
        for n in range(1, 11):
            for _ in range(4):
                rho = rng.uniform(1.0, 1.08)
                down = rng.uniform(0.6, rho - 0.02)
                up = rng.uniform(rho + 0.02, 1.5)
                strike = rng.uniform(0.8, 1.2)
                market = MarketSpec([down], [up], rho, n)
                call = make_payoff("call_on_max", {"K": strike})
                put = make_payoff("custom", {"convex": True}, fn=lambda z, k=strike: np.maximum(k - z[..., 0], 0.0))
                for payoff, scalar in ((call, lambda s, k=strike: max(s - k, 0.0)),
                                       (put, lambda s, k=strike: max(k - s, 0.0))):
                    got = price_european(payoff, [1.0], market).price
                    want = crr_price(scalar, 1.0, up, down, rho, n)
                    worst = max(worst, abs(got - want))
        assert worst <= 1e-12, worst


def test_criterion_04_two_color(criterion):
    with criterion(4, "two-colour binomial sum and J=2 closed-form step"):
        rng = np.random.default_rng(4)
        worst = 0.0
        for n in range(0, 7):
            for _ in range(3):
                market = kappa_zero_market(rng, n)
                f = random_submodular_convex(2, rng)
                z0 = rng.uniform(0.8, 1.2, size=2)
                got = price_european(f, z0, market, store_strategy=False).price
                worst = max(worst, abs(got - two_color_crr(f, z0, market)))
        assert worst <= 1e-12, worst
        worst = 0.0
        done = 0
        while done < 100:
            market = random_market(rng, 2)
            if abs(1.0 - ((market.rho - market.down) / (market.up - market.down)).sum()) < 1e-6:
                continue
            f = random_submodular_convex(2, rng)
            z = rng.uniform(0.5, 1.5, size=2)
            closed = two_color_step(f, z, market)[0]
            general = bellman_step(f, z, market).value
            worst = max(worst, abs(closed - general) / (1.0 + abs(general)))
            done += 1
        assert worst <= 1e-10, worst


THREE_COLOR_DRAWS = {
    "linear_nonneg": lambda rng: rng.uniform(0.05, 0.3, 3),
    "linear_le_minus_one": lambda rng: rng.uniform(0.7, 0.95, 3),
    "mixed_all_pairs_nonneg": lambda rng: rng.uniform(0.36, 0.49, 3),
}


def _pair_draw(kind, pair):
    i, j = pair
    k = 3 - i - j

    def draw(rng):
        q = np.empty(3)
        if kind == "mixed_one_pair_nonpos":
            q[[i, j]] = rng.uniform(0.55, 0.7, 2)
            q[k] = rng.uniform(0.05, 0.28)
        else:
            q[[i, j]] = rng.uniform(0.3, 0.45, 2)
            q[k] = rng.uniform(0.75, 0.9)
        return q

    return draw


for _kind in ("mixed_one_pair_nonpos", "mixed_one_pair_nonneg"):
    for _pair in ((0, 1), (0, 2), (1, 2)):
        THREE_COLOR_DRAWS[f"{_kind}{_pair}"] = _pair_draw(_kind, _pair)


def test_criterion_05_three_color_cases(criterion):
    with criterion(5, "every J=3 closed-form case equals the general step on 50 samples"):
        rng = np.random.default_rng(5)
        for label, draw in THREE_COLOR_DRAWS.items():
            hits = 0
            while hits < 50:
                market = market_from_q(draw(rng), rho=rng.uniform(1.0, 1.05), widths=rng.uniform(0.2, 0.5, 3))
                tags = ThreeColorCoefficients.from_market(market).cases
                assert tags and label.startswith(tags[0][0]), (label, tags)
                if "(" in label:
                    assert str(tags[0][1]) in label
                f = random_submodular_convex(3, rng)
                z = rng.uniform(0.6, 1.4, size=3)
                with warnings.catch_warnings():
                    warnings.simplefilter("error")
                    closed = three_color_step(f, z, market)
                general = bellman_step(f, z, market).value
                assert abs(closed - general) <= 1e-10 * (1.0 + abs(general)), (label, closed, general)
                hits += 1


def test_criterion_06_dominance_replay(criterion):
    with criterion(6, "replayed hedges dominate the payoff on every vertex path"):
        rng = np.random.default_rng(6)
        markets = [MarketSpec([0.9, 0.85], [1.2, 1.3], 1.02, 1), MarketSpec([0.9, 0.9], [1.2, 1.2], 1.0, 1),
                   MarketSpec([0.95, 0.9], [1.1, 1.15], 1.04, 1), kappa_zero_market(rng, 1)]
        payoffs = [make_payoff("call_on_max", {"K": 1.0}), make_payoff("portfolio", {"weights": [1.0, -0.5], "K": 0.3}),
                   random_submodular_convex(2, rng), make_payoff("spread", {"K": 0.05})]
        for base in markets:
            for payoff in payoffs:
                for n in range(1, 5):
                    market = base.with_steps(n)
                    h = price_european(payoff, [1.0, 1.05], market)
                    surpluses = []
                    for path in all_vertex_paths(2, n):
                        rep = replay_capital(h, path, payoff)
                        surpluses.append(rep.surplus)
                    surpluses = np.array(surpluses)
                    scale = 1.0 + abs(h.price)
                    assert surpluses.min() >= -1e-9 * scale
                    assert abs(surpluses.min()) <= 1e-9 * scale
                    assert len(extract_strategy(h, all_vertex_paths(2, n)[0])) == n


def test_criterion_07_operator_laws(criterion):
    with criterion(7, "non-expansion, homogeneity and power eigenfunctions"):
        rng = np.random.default_rng(7)
        for _ in range(40):
            J = int(rng.integers(1, 4))
            market = random_market(rng, J)
            zs = rng.uniform(0.5, 1.5, size=(25, J))
            f1 = random_submodular_convex(J, rng)
            f2 = random_submodular_convex(J, rng)
            images = zs[:, None, :] * market.vertices()
            sup_diff = np.max(np.abs(f1(images) - f2(images)))
            b1, b2 = apply_operator(f1, zs, market), apply_operator(f2, zs, market)
            assert np.max(np.abs(b1 - b2)) <= sup_diff * (1 + 1e-9) + 1e-12
            shift, factor = rng.uniform(-2, 2), rng.uniform(0.1, 5)
            bs = apply_operator(lambda z: shift + f1(z), zs, market)
            assert np.allclose(bs, shift + b1, rtol=1e-12, atol=1e-12)
            bm = apply_operator(lambda z: factor * f1(z), zs, market)
            assert np.allclose(bm, factor * b1, rtol=1e-12, atol=1e-12)
        for _ in range(20):
            J = int(rng.integers(1, 4))
            n = int(rng.integers(1, 11))
            market = random_market(rng, J, n)
            exps = rng.integers(0, 4, size=J)
            fp = power_payoff(exps, coeff=rng.uniform(0.5, 2.0))
            lam = apply_operator(fp, np.ones(J), market) / fp(np.ones(J))
            z0 = rng.uniform(0.7, 1.3, size=J)
            got = price_european(fp, z0, market, store_strategy=False).price * market.rho ** n
            want = lam ** n * fp(z0)
            assert abs(got - want) <= 1e-9 * abs(want)


def test_criterion_08_order_relations(criterion):
    with criterion(8, "lower <= upper <= American on every node; intrinsic risk reported"):
        rng = np.random.default_rng(8)
        for _ in range(12):
            J = int(rng.integers(1, 4))
            n = int(rng.integers(1, 6))
            market = random_market(rng, J, n)
            f = random_submodular_convex(J, rng)
            z0 = rng.uniform(0.8, 1.2, size=J)
            up, lo, am = price_european(f, z0, market), price_lower(f, z0, market), price_american(f, z0, market)
            for m in range(n + 1):
                assert np.all(lo.values[m] <= up.values[m] + 1e-12 * (1 + np.abs(up.values[m])))
                assert np.all(am.values[m] >= up.values[m] - 1e-12 * (1 + np.abs(up.values[m])))
            interval = price_interval(f, z0, market)
            assert interval["intrinsic_risk"] == pytest.approx(up.price - lo.price, abs=1e-14)
            assert interval["intrinsic_risk"] >= -1e-12


def test_criterion_09_cost_gate(criterion):
    with criterion(9, "transaction-cost gate, zero-cost equality and monotonicity"):
        market = MarketSpec([0.9, 0.85], [1.2, 1.3], 1.02, 3)
        z0 = [1.0, 1.1]
        payoff = make_payoff("call_on_max", {"K": 1.0})
        gate = transaction_cost_gate(market, z0)
        from gamehedge.errors import PreconditionError

        for beta in (gate.beta_max, 2.0 * gate.beta_max):
            with pytest.raises(PreconditionError, match="maximal admissible beta"):
                price_with_costs(payoff, z0, market, proportional_costs(beta))
        free = price_european(payoff, z0, market).price
        zero = price_with_costs(payoff, z0, market, proportional_costs(0.0)).price
        assert abs(zero - free) <= 1e-12
        prices = [price_with_costs(payoff, z0, market, proportional_costs(f * gate.beta_max)).price
                  for f in (0.0, 0.25, 0.5, 0.75, 0.99)]
        assert all(b >= a - 1e-12 for a, b in zip(prices, prices[1:]))
        assert prices[-1] > prices[0]


def test_criterion_10_continuum(criterion):
    with criterion(10, "lattice prices approach the continuum price; kernel mass; f_l <= f_c <= f_u"):
        t0 = time.perf_counter()
        spec = ContinuumSpec([0.2, 0.3], 0.05, 1.0)
        payoff = make_payoff("call_on_max", {"K": 1.0})
        rep = convergence_harness(payoff, [1.0, 1.0], spec, [16, 32, 64, 128])
        errors = [r.error for r in rep.rows]
        assert rep.monotone, errors
        for which in ("upper", "lower"):
            mass = green_price(GreenFunctionQuery(which, 0.0, [1.0, 1.0], lambda w: np.ones(w.shape[:-1])), spec)
            assert abs(mass - np.exp(-spec.r * spec.T)) <= 1e-8
        axis = np.linspace(0.6, 1.6, 20)
        grid = np.stack(np.meshgrid(axis, axis, indexing="ij"), axis=-1)
        upper = green_price(GreenFunctionQuery("upper", 0.0, grid, payoff), spec)
        lower = green_price(GreenFunctionQuery("lower", 0.0, grid, payoff), spec)
        complete = np.array([[call_on_max_independent(grid[i, j], 1.0, spec.T, spec.sigma, spec.r)
                              for j in range(grid.shape[1])] for i in range(grid.shape[0])])
        tol = 1e-8 * (1.0 + np.abs(complete))
        assert np.all(lower <= complete + tol)
        assert np.all(complete <= upper + tol)
        assert time.perf_counter() - t0 < 120.0
