"""Security math against brute-force enumeration oracles.

Every probability computed by the analysis module is cross-checked here
against direct enumeration over explicit sample spaces, never against the
module's own formulas.
"""

import itertools
import logging
import math
from fractions import Fraction

import pytest

from shardsim.analysis import (
    compare_grind_passive,
    core_corruption_bound,
    exact_core_tail,
    exact_single_shard_tail,
    exact_single_shard_tail_fraction,
    exceedance_threshold,
    hypergeom_pmf,
    monte_carlo_assignment,
    monte_carlo_core,
    mu_cred,
    shard_tail_bound,
    solve_params,
)


def pmf_by_enumeration(s, m, s_min, k):
    """P(exactly k malicious in the elected core) by enumerating every
    possible core of a shard whose first m members are malicious."""
    hits = 0
    total = 0
    for core in itertools.combinations(range(s), s_min):
        total += 1
        if sum(1 for i in core if i < m) == k:
            hits += 1
    return Fraction(hits, total)


def tail_by_enumeration(s, m, s_min, threshold):
    hits = 0
    total = 0
    for core in itertools.combinations(range(s), s_min):
        total += 1
        if sum(1 for i in core if i < m) >= threshold:
            hits += 1
    return Fraction(hits, total)


def test_pmf_matches_enumeration_exhaustively():
    # Small populations, every (m, s_min, k) cell; exact equality expected
    # because both sides are rational-valued.
    for s in range(1, 9):
        for m in range(s + 1):
            for s_min in range(1, s + 1):
                expected = {
                    k: pmf_by_enumeration(s, m, s_min, k) for k in range(s_min + 1)
                }
                for k in range(s_min + 1):
                    got = hypergeom_pmf(s, m, s_min, k)
                    assert abs(got - float(expected[k])) <= 1e-15, (s, m, s_min, k)


def test_pmf_sums_to_one():
    for s, m, s_min in ((10, 3, 4), (12, 12, 5), (9, 0, 9)):
        total = sum(hypergeom_pmf(s, m, s_min, k) for k in range(s_min + 1))
        assert abs(total - 1.0) < 1e-12


def test_pmf_domain():
    with pytest.raises(ValueError):
        hypergeom_pmf(5, 6, 3, 1)  # m > s
    with pytest.raises(ValueError):
        hypergeom_pmf(5, 3, 6, 1)  # s_min > s
    with pytest.raises(ValueError):
        hypergeom_pmf(5, -1, 3, 1)
    # Out of support is zero, not an error.
    assert hypergeom_pmf(5, 2, 3, 3) == 0.0
    assert hypergeom_pmf(5, 2, 3, -1) == 0.0
    assert hypergeom_pmf(5, 5, 3, 0) == 0.0


def test_pmf_log_gamma_path_agrees_with_rationals():
    # Above the exact-arithmetic cutoff the implementation switches to
    # log-gamma; spot-check it against direct rational evaluation.
    s, m, s_min, k = 6000, 1200, 50, 10
    exact = Fraction(
        math.comb(m, k) * math.comb(s - m, s_min - k), math.comb(s, s_min)
    )
    assert hypergeom_pmf(s, m, s_min, k) == pytest.approx(float(exact), rel=1e-10)


def test_exceedance_threshold_rounds_up():
    assert exceedance_threshold(Fraction(1, 3), 9) == 3
    assert exceedance_threshold(Fraction(1, 3), 10) == 4
    assert exceedance_threshold(Fraction(1, 2), 64) == 32
    assert exceedance_threshold(Fraction(2, 5), 64) == 26


def test_exact_core_tail_matches_enumeration():
    cases = [
        (10, 4, 5, Fraction(1, 3)),
        (12, 6, 4, Fraction(1, 2)),
        (8, 2, 6, Fraction(1, 4)),
        (9, 9, 3, Fraction(1, 3)),
        (9, 0, 3, Fraction(1, 3)),
    ]
    for s, m, s_min, mu in cases:
        threshold = exceedance_threshold(mu, s_min)
        assert exact_core_tail(s, m, s_min, mu) == tail_by_enumeration(
            s, m, s_min, threshold
        ), (s, m, s_min, mu)


def test_core_corruption_bound_value_and_domain():
    got = core_corruption_bound(Fraction(1, 3), Fraction(1, 5), 256)
    assert got == pytest.approx(0.00011141793776294947, rel=1e-12)
    # Re-derive with plain float arithmetic.
    assert got == pytest.approx(math.exp(-2 * (1 / 3 - 1 / 5) ** 2 * 256), rel=1e-12)
    with pytest.raises(ValueError):
        core_corruption_bound(Fraction(1, 3), Fraction(1, 3), 100)
    with pytest.raises(ValueError):
        core_corruption_bound(Fraction(1, 5), Fraction(1, 3), 100)


def test_exact_core_tail_below_bound():
    # The concentration bound must dominate the exact tail everywhere the
    # shard's malicious fraction sits below the core bound.
    for s, s_min in ((300, 60), (500, 120)):
        for m in (s // 10, s // 5, s // 4):
            bound = core_corruption_bound(Fraction(1, 3), Fraction(m, s), s_min)
            assert float(exact_core_tail(s, m, s_min, Fraction(1, 3))) <= bound


def test_shard_tail_bound_value_and_domain():
    got = shard_tail_bound(Fraction(1, 5), Fraction(1, 10), 256, 16)
    assert got == pytest.approx(0.095616366320095, rel=1e-12)
    assert got == pytest.approx(16 * math.exp(-2 * (1 / 5 - 1 / 10) ** 2 * 256), rel=1e-12)
    with pytest.raises(ValueError):
        shard_tail_bound(Fraction(1, 10), Fraction(1, 10), 64, 4)


def single_tail_by_enumeration(m, S, N, total_malicious):
    """P(first S slots hold >= m malicious) by enumerating placements."""
    hits = 0
    total = 0
    for placement in itertools.combinations(range(N), total_malicious):
        total += 1
        if sum(1 for i in placement if i < S) >= m:
            hits += 1
    return Fraction(hits, total)


def test_exact_single_shard_tail_matches_enumeration():
    N, S = 8, 4
    for mu in (Fraction(1, 4), Fraction(1, 2)):
        total_malicious = int(mu * N)
        for m in range(0, S + 1):
            expected = single_tail_by_enumeration(m, S, N, total_malicious)
            assert exact_single_shard_tail_fraction(m, S, N, mu) == expected, (m, mu)
            assert exact_single_shard_tail(m, S, N, mu) == pytest.approx(
                float(expected), abs=1e-15
            )


def test_exact_single_shard_tail_domain_and_rounding(caplog):
    with pytest.raises(ValueError):
        exact_single_shard_tail(5, 4, 8, Fraction(1, 2))  # m > S
    with pytest.raises(ValueError):
        exact_single_shard_tail(2, 9, 8, Fraction(1, 2))  # S > N
    with caplog.at_level(logging.INFO, logger="shardsim.analysis"):
        exact_single_shard_tail(2, 4, 8, Fraction(1, 3))  # 8/3 not integral
    assert any("not integral" in rec.message for rec in caplog.records)


def test_mu_cred_values():
    for mu in (Fraction(1, 10), Fraction(1, 4), Fraction(1, 3)):
        assert mu_cred(mu, 1) == mu
    assert mu_cred(Fraction(1, 4), 10) == Fraction(10, 13)
    assert abs(float(mu_cred(0.25, 10)) - 10 / 13) < 1e-12
    # Larger caps only help the adversary.
    series = [mu_cred(Fraction(1, 4), M) for M in (1, 2, 5, 20)]
    assert series == sorted(series)
    with pytest.raises(ValueError):
        mu_cred(Fraction(0), 1)
    with pytest.raises(ValueError):
        mu_cred(Fraction(1), 1)
    with pytest.raises(ValueError):
        mu_cred(Fraction(1, 4), 0)


def test_mu_cred_worst_case_by_direct_count():
    # Adversary splits mu*total stake into 1-stake coins, honest users hold
    # M-stake coins: the credential fraction follows by counting coins.
    mu, M, total = Fraction(1, 4), 10, 400
    adv_coins = mu * total
    honest_coins = (total - mu * total) / M
    assert mu_cred(mu, M) == adv_coins / (adv_coins + honest_coins)


class TestSolveParams:
    def test_golden_case(self):
        res = solve_params(Fraction(1, 10), 20.0, 4096, 1, Fraction(1, 3))
        assert res.feasible
        assert res.s_min == 766
        assert res.mu_shard == pytest.approx(0.219013, abs=1e-4)

    def test_replay_through_bounds(self):
        for kappa in (10.0, 20.0, 30.0):
            res = solve_params(Fraction(1, 10), kappa, 1024, 1, Fraction(1, 3))
            assert res.feasible, kappa
            target = math.exp(-kappa)
            cred_frac = float(mu_cred(Fraction(1, 10), 1))
            core = core_corruption_bound(Fraction(1, 3), res.mu_shard, res.s_min)
            union = shard_tail_bound(
                res.mu_shard, cred_frac, res.s_min, 1024 / res.s_min
            )
            assert core <= target * (1 + 1e-9), kappa
            assert union <= target * (1 + 1e-9), kappa

    def test_minimality(self):
        # One step below the solved core size the feasibility window closes:
        # replay the window arithmetic directly.
        res = solve_params(Fraction(1, 10), 20.0, 1024, 1, Fraction(1, 3))
        s = res.s_min - 1
        cred_frac = float(mu_cred(Fraction(1, 10), 1))
        lower = cred_frac + math.sqrt((20.0 + math.log(max(1024 / s, 1.0))) / (2 * s))
        upper = 1 / 3 - math.sqrt(20.0 / (2 * s))
        assert lower > upper

    def test_infeasible_when_credential_fraction_dominates(self):
        res = solve_params(Fraction(1, 4), 20.0, 1024, 10, Fraction(1, 3))
        assert not res.feasible
        assert res.s_min is None and res.mu_shard is None
        assert "mu_cred" in res.report["reason"]

    def test_infeasible_within_cap(self):
        res = solve_params(Fraction(1, 10), 20.0, 1024, 1, Fraction(1, 3), s_cap=10)
        assert not res.feasible
        assert "10" in res.report["reason"]

    def test_printed_form_is_flagged_not_verified(self):
        res = solve_params(
            Fraction(1, 10), 20.0, 1024, 1, Fraction(1, 3), use_printed_form=True
        )
        assert res.report["used_printed_form"]
        if res.feasible:
            assert res.report["printed_form_upper"] is not None

    def test_report_carries_residuals(self):
        res = solve_params(Fraction(1, 10), 20.0, 1024, 1, Fraction(1, 3))
        rep = res.report
        assert rep["core_residual"] <= rep["target"]
        assert rep["union_residual"] <= rep["target"]
        assert rep["window"][0] <= res.mu_shard <= rep["window"][1]


class TestMonteCarloCore:
    def test_within_five_sigma_of_exact(self):
        s, m, s_min = 20, 8, 5
        trials = 20_000
        exact = float(exact_core_tail(s, m, s_min, Fraction(1, 3)))
        est = monte_carlo_core(s, m, s_min, Fraction(1, 3), trials, "mc-core-unit")
        sigma = math.sqrt(exact * (1 - exact) / trials)
        assert abs(est - exact) <= 5 * sigma, (est, exact)

    def test_deterministic_and_worker_independent(self):
        args = (20, 8, 5, Fraction(1, 3), 5_000, "mc-core-unit")
        a = monte_carlo_core(*args, workers=1)
        b = monte_carlo_core(*args, workers=1)
        c = monte_carlo_core(*args, workers=3)
        assert a == b == c
        assert monte_carlo_core(20, 8, 5, Fraction(1, 3), 5_000, "other") != a

    def test_trials_domain(self):
        with pytest.raises(ValueError):
            monte_carlo_core(10, 2, 3, Fraction(1, 3), 0, "x")


def any_shard_tail_two_shards(N, S, total_malicious, threshold):
    """Exact P(either of two complementary shards reaches the threshold):
    with K=2 the second shard holds exactly the remaining malicious."""
    acc = Fraction(0)
    denom = math.comb(N, total_malicious)
    for c in range(0, min(S, total_malicious) + 1):
        if c >= threshold or (total_malicious - c) >= threshold:
            acc += Fraction(
                math.comb(S, c) * math.comb(N - S, total_malicious - c), denom
            )
    return acc


class TestMonteCarloAssignment:
    def test_matches_exact_two_shard_union(self):
        N, K, S = 8, 2, 4
        mu_c, mu_s = Fraction(1, 2), Fraction(3, 4)
        threshold = exceedance_threshold(mu_s, S)
        exact = float(any_shard_tail_two_shards(N, S, int(mu_c * N), threshold))
        trials = 50_000
        est = monte_carlo_assignment(N, K, S, mu_c, mu_s, trials, "mc-assign-unit")
        sigma = math.sqrt(exact * (1 - exact) / trials)
        assert abs(est - exact) <= 5 * sigma, (est, exact)

    def test_deterministic_and_worker_independent(self):
        args = (16, 4, 4, Fraction(1, 4), Fraction(1, 2), 10_000, "mc-assign-unit")
        a = monte_carlo_assignment(*args, workers=1)
        b = monte_carlo_assignment(*args, workers=4)
        assert a == b

    def test_domain(self):
        with pytest.raises(ValueError):
            monte_carlo_assignment(10, 3, 4, Fraction(1, 4), Fraction(1, 2), 10, "x")
        with pytest.raises(ValueError):
            monte_carlo_assignment(16, 4, 4, Fraction(1, 4), Fraction(1, 2), 0, "x")


class TestGrindComparison:
    def test_shape_and_determinism(self):
        a = compare_grind_passive(20, 2, 50, "grind-unit", epoch_length=5)
        b = compare_grind_passive(20, 2, 50, "grind-unit", epoch_length=5)
        assert a == b
        assert set(a.shard_labels) == {"00", "01", "10", "11"}
        assert sum(a.grind_counts) == 20 * 50
        assert sum(a.passive_counts) == 20 * 50
        assert 0.0 <= a.p_value <= 1.0
        assert a.epochs == 50

    def test_distinct_seeds_diverge(self):
        a = compare_grind_passive(20, 2, 50, "grind-unit")
        b = compare_grind_passive(20, 2, 50, "grind-unit-2")
        assert a.grind_counts != b.grind_counts
