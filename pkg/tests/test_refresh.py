import json
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from proactive_auth.core import RefreshVector, SecretVector
from proactive_auth.padstream import PadStream
from proactive_auth.refresh import (
    RefreshPolicy,
    apply_sparse_refresh,
    audit_deterministic_schedule,
    choose_refresh_set,
    coverage_probability,
    coverage_record,
    default_refresh_count,
    dense_schedule,
    exact_coverage_probability,
)


def test_default_count_uses_log2():
    assert [default_refresh_count(n) for n in (2, 4, 16, 64, 100)] == [2, 4, 8, 12, 14]


def test_policy_validation():
    assert RefreshPolicy.sparse(64).count(64) == 12
    assert RefreshPolicy().count(7) == 7
    with pytest.raises(ValueError):
        RefreshPolicy(k_private=0)
    with pytest.raises(ValueError):
        RefreshPolicy.sparse(4, 5)
    with pytest.raises(ValueError):
        RefreshPolicy.sparse(4, 2, k_private=5)
    assert RefreshPolicy.sparse(16, k_private=4).pcf(16) == 4.0


def test_choose_full_set_and_determinism():
    assert choose_refresh_set(PadStream(1), 5, 5) == (1, 2, 3, 4, 5)
    assert choose_refresh_set(PadStream(8), 30, 7) == choose_refresh_set(PadStream(8), 30, 7)
    with pytest.raises(ValueError):
        choose_refresh_set(PadStream(1), 3, 4)


@given(st.integers(1, 40), st.data())
def test_choose_returns_distinct_in_range(n, data):
    r = data.draw(st.integers(1, n))
    s = choose_refresh_set(PadStream(data.draw(st.integers(0, 2**64 - 1))), n, r)
    assert len(s) == len(set(s)) == r
    assert all(1 <= i <= n for i in s)


def test_inclusion_frequencies_uniform():
    rng = PadStream(31337)
    counts = np.zeros(8)
    draws = 100_000
    for _ in range(draws):
        for i in choose_refresh_set(rng, 8, 3):
            counts[i - 1] += 1
    p = 3 / 8
    sigma = math.sqrt(draws * p * (1 - p))
    assert np.all(np.abs(counts - draws * p) <= 4 * sigma)
    chi2 = (((counts - draws * p) ** 2) / (draws * p)).sum()
    assert chi2 < 24.3  # p = 0.001 point, 7 dof


@pytest.mark.parametrize(
    "pairs, expected",
    [([], (1, 2, 0)), ([(1, 4)], (5, 2, 0)), ([(3, 7)], (1, 2, 7))],
)
def test_apply_sparse_examples(pairs, expected):
    out = apply_sparse_refresh(SecretVector((1, 2, 3), 4), 3, RefreshVector.sparse(pairs, 3, 4))
    assert out.entries == expected


def test_apply_sparse_rejects_dense_and_bad_index():
    arv = SecretVector((1, 2, 3), 4)
    with pytest.raises(ValueError):
        apply_sparse_refresh(arv, 1, RefreshVector.dense((0, 0, 0), 4))
    with pytest.raises(IndexError):
        apply_sparse_refresh(arv, 4, RefreshVector.sparse([], 3, 4))


# -- coverage -------------------------------------------------------------


def test_exact_coverage_small_case_by_hand():
    # n=4, r=2, 3 sessions: each entry missed w.p. 1/8, a pair missed w.p. 1/216
    assert exact_coverage_probability(4, 2, 3) == 1 - 4 * Fraction(1, 8) + 6 * Fraction(1, 216)
    assert exact_coverage_probability(2, 1, 1) == 0
    assert exact_coverage_probability(5, 5, 1) == 1


def test_coverage_trivial_cases():
    assert coverage_probability(6, 6, 1, trials=100).estimate == 1.0
    assert coverage_probability(2, 1, 1, trials=1000).estimate == 0.0


@pytest.mark.parametrize("n, r, sessions", [(8, 3, 4), (4, 2, 3), (16, 8, 16)])
def test_monte_carlo_agrees_with_inclusion_exclusion(n, r, sessions):
    est = coverage_probability(n, r, sessions, trials=40_000, seed=n)
    exact = float(exact_coverage_probability(n, r, sessions))
    sigma = math.sqrt(exact * (1 - exact) / est.trials)
    assert abs(est.estimate - exact) <= 4 * sigma + 1e-12
    # per-entry miss probability is exactly (1 - r/n)^sessions
    q = (1 - r / n) ** sessions
    assert abs(est.per_entry_miss_rate - q) <= 4 * math.sqrt(q * (1 - q) / (est.trials * n)) + 1e-12


@pytest.mark.parametrize("n", [16, 32])
def test_coverage_bound_holds(n):
    r = default_refresh_count(n)
    est = coverage_probability(n, r, n, trials=20_000, seed=1)
    rec = coverage_record(est)
    assert rec["pass"]
    assert float(exact_coverage_probability(n, r, n)) >= 1 - 1 / n


def test_coverage_record_is_json():
    rec = coverage_record(coverage_probability(8, 6, 8, trials=500), k_private=2)
    assert set(rec) >= {"n", "r", "k_private", "trials", "estimate", "stderr", "bound", "pass"}
    json.dumps(rec)


# -- schedule audit --------------------------------------------------------


@pytest.mark.parametrize("k", [1, 3, 4])
def test_dense_schedule_passes(k):
    rep = audit_deterministic_schedule(dense_schedule(4), 4, k)
    assert rep.passed
    assert all(a.min_gap_refreshes == 4 for a in rep.entries)
    assert rep.window_totals_min == rep.window_totals_max == 16
    assert rep.total_bound == 4 * (4 - k + 1)
    assert rep.abstract_bound == 4 * (k + 1)


def test_single_entry_schedule_flagged():
    rep = audit_deterministic_schedule([[1]] * 4, 4, 1)
    assert not rep.passed
    assert rep.flagged == [2, 3, 4]


def test_empty_schedule_flags_everything():
    rep = audit_deterministic_schedule([[]] * 4, 4, 2)
    assert rep.flagged == [1, 2, 3, 4]
    assert not rep.totals_ok


def test_minimal_schedule_meets_bound_exactly():
    # refresh every entry except the one just used: gaps are n-1 = n-k+1 for k=2
    n = 5
    from proactive_auth.core import key_entry_index

    sched = [[j for j in range(1, n + 1) if j != key_entry_index(n, s + 1)] for s in range(n)]
    assert audit_deterministic_schedule(sched, n, 2).passed
    assert not audit_deterministic_schedule(sched, n, 1).passed


def test_audit_report_json():
    d = json.loads(audit_deterministic_schedule(dense_schedule(3), 3, 1).to_json())
    assert d["pass"] is True and d["n"] == 3
