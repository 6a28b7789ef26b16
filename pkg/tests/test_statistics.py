import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lcfit.contingency import PatternTable, independence_expected, ingest_rows
from lcfit.statistics import (
    ImpossibleExpectedZero,
    LikelihoodRatioOverall,
    PatternFrequency,
    PearsonOverall,
    PearsonPair,
    RiskAtLeast,
    SpecError,
    StatisticSpec,
    evaluate,
    evaluate_batch,
    lr_g2,
    parse_spec,
    parse_specs,
    pattern_freq,
    pearson_x2,
    risk_stat,
)

import oracles

# reference values for the MI table
TABLE3 = {
    "x2": 226.236, "g2": 149.468,
    "x2:1,2": 44.082, "x2:1,3": 39.339, "x2:1,4": 25.034,
    "x2:2,3": 41.534, "x2:2,4": 24.425, "x2:3,4": 25.824,
}


@st.composite
def tables(draw, max_J=5):
    J = draw(st.integers(2, max_J))
    counts = draw(st.lists(st.integers(0, 20), min_size=1 << J, max_size=1 << J))
    if sum(counts) == 0:
        counts[-1] = 1
    return PatternTable(J, np.array(counts))


class TestParsing:
    @pytest.mark.parametrize(
        "token,spec",
        [
            ("x2", PearsonOverall()),
            ("g2", LikelihoodRatioOverall()),
            ("x2:1,2", PearsonPair(1, 2)),
            ("risk:3", RiskAtLeast(3)),
            ("freq:1011", PatternFrequency((1, 0, 1, 1))),
        ],
    )
    def test_round_trip(self, token, spec):
        assert parse_spec(token) == spec
        assert spec.name == token

    @pytest.mark.parametrize("token", ["x3", "x2:1", "x2:1,1", "risk:-1", "freq:12", "risk:a", ""])
    def test_errors(self, token):
        with pytest.raises(SpecError):
            parse_spec(token)

    def test_list_reports_offending_tokens(self):
        with pytest.raises(SpecError, match="'bad'.*'x2:0,1'"):
            parse_specs("x2 bad x2:0,1")

    def test_check_against_J(self):
        with pytest.raises(SpecError):
            PearsonPair(1, 5).check(4)
        with pytest.raises(SpecError):
            RiskAtLeast(5).check(4)
        with pytest.raises(SpecError):
            PatternFrequency((1, 0)).check(4)


class TestPearson:
    def test_hand(self):
        assert pearson_x2([30, 20, 20, 30], [25, 25, 25, 25]) == pytest.approx(4.0)

    def test_perfect_fit(self):
        assert pearson_x2([3, 4, 5], [3, 4, 5]) == 0.0

    def test_zero_expected_skipped(self):
        assert pearson_x2([0, 5, 5], [0, 5, 5]) == 0.0

    def test_impossible_zero(self):
        with pytest.raises(ImpossibleExpectedZero, match="impossible expected zero"):
            pearson_x2([1, 5], [0, 6])

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            pearson_x2([1, 2], [1, 2, 3])

    def test_batched(self):
        out = pearson_x2([[30, 20, 20, 30], [25, 25, 25, 25]], [25, 25, 25, 25])
        np.testing.assert_allclose(out, [4.0, 0.0])


class TestG2:
    def test_hand(self):
        expected = 2 * (60 * math.log(1.2) + 40 * math.log(0.8))
        assert lr_g2([30, 20, 20, 30], [25, 25, 25, 25]) == pytest.approx(expected, rel=1e-12)
        assert lr_g2([30, 20, 20, 30], [25, 25, 25, 25]) == pytest.approx(4.0272, abs=1e-3)

    def test_perfect_fit(self):
        assert lr_g2([3, 4, 5], [3, 4, 5]) == 0.0

    def test_zero_log_zero(self):
        assert lr_g2([0, 10], [5, 5]) == pytest.approx(2 * 10 * math.log(2))

    def test_impossible_zero(self):
        with pytest.raises(ImpossibleExpectedZero):
            lr_g2([1, 5], [0, 6])


class TestRisk:
    def test_q0_is_N(self, mi):
        assert risk_stat(mi, 0) == mi.N

    def test_table3(self, mi):
        assert [risk_stat(mi, q) for q in (1, 2, 3, 4)] == [61, 46, 36, 24]

    def test_exhaustive_scan(self, rng):
        rows = rng.integers(0, 2, size=(120, 6))
        t = ingest_rows(rows)
        for q in range(7):
            brute = sum(int(t.counts[s]) for s in range(64) if bin(s).count("1") >= q)
            assert risk_stat(t, q) == brute == oracles.naive_risk(rows.tolist(), q)

    def test_out_of_range(self, mi):
        with pytest.raises(SpecError):
            risk_stat(mi, 5)

    @given(tables())
    def test_monotone(self, t):
        vals = [risk_stat(t, q) for q in range(t.J + 1)]
        assert all(a >= b for a, b in zip(vals, vals[1:]))
        assert all(0 <= v <= t.N for v in vals)


class TestPatternFreq:
    def test_lookup(self):
        t = PatternTable.from_counts(2, {"11": 2, "01": 1})
        assert pattern_freq(t, (1, 1)) == 2
        assert pattern_freq(t, (0, 0)) == 0

    def test_raw_rows(self, rng):
        rows = rng.integers(0, 2, size=(70, 4))
        t = ingest_rows(rows)
        for pat in oracles.all_patterns(4):
            assert pattern_freq(t, pat) == oracles.naive_freq(rows.tolist(), pat)

    @given(tables())
    def test_sum_over_patterns_is_N(self, t):
        assert sum(pattern_freq(t, p) for p in oracles.all_patterns(t.J)) == t.N

    def test_length_mismatch(self, mi):
        with pytest.raises(SpecError):
            pattern_freq(mi, (1, 0))


class TestEvaluate:
    @pytest.mark.parametrize("name", list(TABLE3))
    def test_table3_values(self, mi, name):
        assert evaluate(parse_spec(name), mi) == pytest.approx(TABLE3[name], abs=1e-3)

    def test_perfect_independence(self):
        # 4x exact independence table with margins .5/.25
        t = PatternTable(2, np.array([3, 1, 3, 1]) * 4)
        for s in (PearsonOverall(), LikelihoodRatioOverall(), PearsonPair(1, 2)):
            assert evaluate(s, t) == pytest.approx(0.0, abs=1e-12)

    def test_counts_are_ints(self, mi):
        assert isinstance(evaluate(RiskAtLeast(2), mi), int)
        assert isinstance(evaluate(PearsonOverall(), mi), float)

    def test_expectations_from_same_table(self, mi):
        e = independence_expected(mi, [1, 2, 3, 4])
        assert evaluate(PearsonOverall(), mi) == pytest.approx(pearson_x2(mi.counts, e), rel=1e-14)

    def test_batch_matches_rows(self, rng):
        counts = rng.integers(0, 8, size=(30, 16))
        for spec in (PearsonOverall(), LikelihoodRatioOverall(), PearsonPair(2, 4), RiskAtLeast(2),
                     PatternFrequency((0, 1, 1, 0))):
            batch = evaluate_batch(spec, counts, 4)
            single = [evaluate(spec, PatternTable(4, c)) for c in counts]
            np.testing.assert_array_equal(batch, single)

    @pytest.mark.parametrize("seed", range(5))
    def test_all_kinds_match_naive(self, seed):
        r = np.random.default_rng(seed)
        J = int(r.integers(2, 5))
        rows = r.integers(0, 2, size=(int(r.integers(5, 60)), J))
        t = ingest_rows(rows)
        specs = [
            StatisticSpec("pearson"),
            StatisticSpec("lr"),
            StatisticSpec("pair", j=1, k=J),
            StatisticSpec("risk", q=int(r.integers(0, J + 1))),
            StatisticSpec("freq", pattern=tuple(int(v) for v in rows[0])),
        ]
        for s in specs:
            ref = oracles.naive_statistic(s.kind, rows.tolist(), J, j=s.j, k=s.k, q=s.q, pattern=s.pattern)
            assert evaluate(s, t) == pytest.approx(ref, rel=1e-10, abs=1e-10)


class TestProperties:
    @given(tables(max_J=4), st.permutations(range(4)))
    def test_variable_relabeling(self, t, perm):
        perm = list(perm)[: t.J] if t.J == 4 else list(range(t.J))[::-1]
        rows = t.to_rows()
        t2 = ingest_rows(rows[:, perm])
        for s in (PearsonOverall(), LikelihoodRatioOverall()):
            assert evaluate(s, t2) == pytest.approx(evaluate(s, t), rel=1e-9, abs=1e-9)
        inv = {old + 1: new + 1 for new, old in enumerate(perm)}
        a, b = inv[1], inv[2]
        assert evaluate(PearsonPair(min(a, b), max(a, b)), t2) == pytest.approx(
            evaluate(PearsonPair(1, 2), t), rel=1e-9, abs=1e-9)

    @given(st.integers(0, 2**32 - 1))
    def test_x2_g2_agree_near_fit(self, seed):
        r = np.random.default_rng(seed)
        e = r.uniform(1000, 5000, size=8)
        n = e * (1 + r.uniform(-0.0099, 0.0099, size=8))
        n *= e.sum() / n.sum()
        x2, g2 = pearson_x2(n, e), lr_g2(n, e)
        assert abs(x2 - g2) < 0.05 * x2
