import math

import numpy as np
import pytest

from plqmc import dataio, estimators, gumbel_pl, metrics
from plqmc.dataio import Query
from plqmc.estimators import LoggedRanking, ips_utility, policy_gradient, utility_estimate
from plqmc.scorer import ScorerParams


def linear(w):
    w = np.asarray(w, dtype=float)
    return ScorerParams("linear", w.size, w)


def exact_utility(query, params):
    s = params.score(query.features)
    return sum(p * metrics.dcg(r, query.rel) for r, p in gumbel_pl.enumerate_pl(s))


def exact_gradient(query, params, h=1e-6):
    g = np.zeros(params.weights.size)
    for i in range(g.size):
        e = np.zeros_like(g)
        e[i] = h
        g[i] = (exact_utility(query, linear(params.weights + e)) - exact_utility(query, linear(params.weights - e))) / (2 * h)
    return g


@pytest.fixture
def small_query():
    feats = np.array([[1.0, 0.2], [0.3, -0.5], [-0.4, 0.8]])
    return Query("q", feats, np.array([2.0, 0.0, 1.0]))


def test_single_item_utility_is_exact():
    q = Query("a", np.array([[0.4]]), np.array([3.0]))
    for n in (1, 4, 16):
        assert utility_estimate([q], linear([1.0]), "QMC", n, 0).value == pytest.approx(3.0)


def test_constant_reward_gives_constant():
    qs = [Query(str(i), np.eye(4), np.full(4, 0.0)) for i in range(3)]
    assert utility_estimate(qs, linear(np.ones(4)), "MC", 8, 1).value == 0.0


def test_utility_unbiased_against_enumeration(small_query):
    p = linear([1.0, -0.5])
    truth = exact_utility(small_query, p)
    for kind in ("MC", "QMC"):
        vals = np.array([utility_estimate([small_query], p, kind, 32, s).value for s in range(500)])
        se = vals.std(ddof=1) / math.sqrt(500)
        assert abs(vals.mean() - truth) < 3 * se + 1e-12


def test_mc_and_qmc_agree_in_mean():
    pool = dataio.synthetic_stream(5, 3, 8, 2).queries
    p = linear([0.5, -0.2, 0.8])
    mc = np.array([utility_estimate(pool, p, "MC", 16, s).value for s in range(300)])
    qmc = np.array([utility_estimate(pool, p, "QMC", 16, s + 1000).value for s in range(300)])
    se = math.sqrt(mc.var(ddof=1) / 300 + qmc.var(ddof=1) / 300)
    assert abs(mc.mean() - qmc.mean()) < 3 * se


def test_mixed_query_sizes():
    a = Query("a", np.ones((3, 2)), np.array([1.0, 0, 0]))
    b = Query("b", np.ones((5, 2)), np.array([0, 1.0, 0, 0, 1.0]))
    est = policy_gradient([a, b, a], linear([0.1, 0.2]), "QMC", 4, 0)
    assert est.q_batch == 3 and est.g.shape == (2,)


def test_gradient_zero_reward():
    q = Query("z", np.random.default_rng(0).standard_normal((4, 3)), np.zeros(4))
    est = policy_gradient([q], linear([1.0, 2.0, 3.0]), "MC", 8, 0)
    np.testing.assert_array_equal(est.g, 0.0)
    assert est.norm_sq == 0.0


def test_gradient_single_item():
    q = Query("one", np.array([[1.0, 2.0]]), np.array([1.0]))
    np.testing.assert_allclose(policy_gradient([q], linear([0.3, 0.1]), "QMC", 4, 0).g, 0.0, atol=1e-15)


def test_gradient_norm_diagnostic(small_query):
    est = policy_gradient([small_query], linear([1.0, -0.5]), "QMC", 8, 3)
    assert est.norm_sq == pytest.approx(float(np.sum(est.g**2)), rel=1e-10)


@pytest.mark.parametrize("kind", ["MC", "QMC"])
def test_gradient_direction_matches_enumeration(small_query, kind):
    p = linear([1.0, -0.5])
    exact = exact_gradient(small_query, p)
    avg = np.mean([policy_gradient([small_query], p, kind, 4, s).g for s in range(2000)], axis=0)
    cos = avg @ exact / (np.linalg.norm(avg) * np.linalg.norm(exact))
    assert cos > 0.99


def test_clicks_reward_uses_position_bias():
    q = Query("c", np.array([[5.0], [0.0]]), np.array([1.0, 0.0]))
    est = utility_estimate([q], linear([10.0]), "MC", 4096, 0, reward="clicks")
    # item 0 is almost surely first and clicked with probability 1
    assert est.value == pytest.approx(1.0, abs=0.01)


# ---------------------------------------------------------------- IPS -----


def test_ips_same_policy_is_plain_mean():
    p = linear([0.7])
    feats = np.array([[1.0], [0.0], [-1.0]])
    s = p.score(feats)
    recs = [
        LoggedRanking(feats, np.array(r), reward=d, logging_prob=math.exp(gumbel_pl.log_prob(r, s)))
        for r, d in [([0, 1, 2], 1.5), ([2, 0, 1], 0.5), ([1, 0, 2], 2.0)]
    ]
    assert ips_utility(recs, p) == pytest.approx(np.mean([1.5, 0.5, 2.0]))


def test_ips_two_item_hand_example():
    target = linear([math.log(2)])  # scores (log 2, 0): pi([0,1]) = 2/3
    feats = np.array([[1.0], [0.0]])
    recs = [
        LoggedRanking(feats, np.array([0, 1]), reward=1.0, logging_prob=0.5),
        LoggedRanking(feats, np.array([1, 0]), reward=0.0, logging_prob=0.5),
    ]
    assert ips_utility(recs, target) == pytest.approx(2 / 3)


def test_ips_single_record_weight():
    target = linear([math.log(2)])
    rec = LoggedRanking(np.array([[1.0], [0.0]]), np.array([0, 1]), reward=3.0, logging_prob=0.25)
    assert ips_utility([rec], target) == pytest.approx((2 / 3) / 0.25 * 3.0)


def test_ips_positivity_error_names_record():
    target = linear([0.0])
    recs = [
        LoggedRanking(np.zeros((2, 1)), np.array([0, 1]), 1.0, logging_prob=0.5),
        LoggedRanking(np.zeros((2, 1)), np.array([0, 1]), 1.0, logging_prob=0.0),
    ]
    with pytest.raises(estimators.PositivityError) as err:
        ips_utility(recs, target)
    assert err.value.index == 1


def test_position_based_ips_unbiased():
    """Logging with one policy, evaluating another: matches the exact expected discounted clicks."""
    rng = np.random.default_rng(5)
    feats = np.array([[1.0], [0.2], [-0.6]])
    rel = np.array([1.0, 0.0, 1.0])
    logger, target = linear([0.5]), linear([-1.0])
    h = gumbel_pl.enumerate_pl(logger.score(feats))
    from plqmc.propensity import exact_propensities

    h_prop = exact_propensities(logger.score(feats)).p
    disc = metrics.discounts(3)
    truth = sum(
        p * np.sum(metrics.click_probabilities(np.array(r), rel) * disc)
        for r, p in gumbel_pl.enumerate_pl(target.score(feats))
    )
    ranks = [h[i][0] for i in rng.choice(len(h), size=4000, p=[p for _, p in h])]
    recs = [
        LoggedRanking(feats, np.array(r), propensities=h_prop, clicks=metrics.simulate_clicks(r, rel, rng.random(3)))
        for r in ranks
    ]
    est = ips_utility(recs, target, "position-based", n=1024, seed=1)
    assert est == pytest.approx(truth, abs=0.05)


def test_position_based_positivity():
    feats = np.zeros((2, 1))
    prop = np.array([[1.0, 0.0], [0.0, 1.0]])
    rec = LoggedRanking(feats, np.array([1, 0]), propensities=prop, clicks=np.array([1, 0]))
    with pytest.raises(estimators.PositivityError, match="position 1"):
        ips_utility([rec], linear([0.0]), "position-based", n=4)


def test_ips_unknown_mode():
    rec = LoggedRanking(np.zeros((1, 1)), np.array([0]), 1.0, logging_prob=1.0)
    with pytest.raises(ValueError):
        ips_utility([rec], linear([0.0]), "doubly-robust")


# ----------------------------------------------------- harness ------------


@pytest.fixture(scope="module")
def harness():
    pool = dataio.synthetic_stream(5, 5, 64, 0).queries
    w = np.random.default_rng(1).standard_normal(5) / math.sqrt(5)
    return pool, linear(w)


def test_harness_requires_reps(harness):
    pool, p = harness
    with pytest.raises(ValueError):
        estimators.variance_decomposition(pool, p, ["MC"], 4, [4], 10, 30, 0)
    with pytest.raises(ValueError):
        estimators.variance_decomposition(pool[:3], p, ["MC"], 4, [4], 30, 30, 0)


def test_harness_total_variance_consistency(harness):
    """Between + within from the harness matches a direct variance estimate over fresh batches."""
    pool, p = harness
    res = estimators.variance_decomposition(pool, p, ["MC", "QMC"], 4, [4], 60, 40, 0)
    assert tuple(res.rows[0]) == res.header
    rng = np.random.default_rng(123)
    for row in res.rows:
        direct = np.array(
            [
                utility_estimate([pool[i] for i in rng.choice(len(pool), 4, replace=False)], p, row["kind"], 4, 10**6 + k).value
                for k in range(800)
            ]
        )
        vals = res.samples[(estimators.SequenceKind.parse(row["kind"]), 4)]
        # sampling sd of each side: bootstrap outer batches / direct draws
        boot = np.random.default_rng(0)
        side_a, side_b = [], []
        for _ in range(300):
            b = vals[boot.integers(0, vals.shape[0], vals.shape[0])]
            w = b.var(axis=1, ddof=1).mean()
            side_a.append(b.mean(axis=1).var(ddof=1) - w / b.shape[1] + w)
            side_b.append(direct[boot.integers(0, direct.size, direct.size)].var(ddof=1))
        decomposed = row["var_between_queries"] + row["mean_within_variance"]
        se = np.sqrt(np.var(side_a) + np.var(side_b))
        assert abs(direct.var(ddof=1) - decomposed) <= 3 * se
        assert abs(row["total_variance"] - decomposed) <= 3 * se


def test_harness_qmc_dominates_mc(harness):
    pool, p = harness
    res = estimators.variance_decomposition(pool, p, ["MC", "QMC"], 4, [8, 32], 30, 50, 2)
    by = {(r["kind"], r["N"]): r["mean_within_variance"] for r in res.rows}
    for n in (8, 32):
        assert by[("SobolScrambled", n)] <= by[("MC", n)]


def test_harness_gradient_target(harness):
    pool, p = harness
    res = estimators.variance_decomposition(pool, p, ["MC", "QMC"], 4, [4, 32], 30, 30, 0, target="grad_norm_sq")
    by = {(r["kind"], r["N"]): r["mean_within_variance"] for r in res.rows}
    assert all(v >= 0 for v in by.values())
    assert by[("MC", 32)] < by[("MC", 4)]
    assert by[("SobolScrambled", 32)] <= by[("MC", 32)]


def test_harness_thread_independent(harness):
    pool, p = harness
    args = (pool, p, ["QMC"], 4, [4], 30, 30, 9)
    assert estimators.variance_decomposition(*args, threads=1).rows == estimators.variance_decomposition(*args, threads=3).rows
