import numpy as np
import pytest

from lcfit.lcmodel import EmConfig
from lcfit.simharness import (
    RESULT_FIELDS,
    SimCondition,
    SimResult,
    condition_params,
    parse_study_config,
    results_csv,
    run_study,
)
from lcfit.statistics import parse_specs

FAST = EmConfig(n_starts=3)
SPECS = parse_specs("x2 g2 x2:1,2 risk:6")

STUDY = """
[study]
R = 3
K = 40
seed = 11
specs = x2 x2:1,2
[conditions]
C_true = 2 3
N = 60
hi = 0.8, 0.9
[em]
n_starts = 2
"""


class TestConditionParams:
    def test_three_class_layout(self):
        p = condition_params(SimCondition(3, 100, 0.8))
        np.testing.assert_allclose(p.rho, [1 / 3] * 3)
        np.testing.assert_allclose(p.pi[0], [0.8] * 6)
        np.testing.assert_allclose(p.pi[1], [0.2] * 6)
        np.testing.assert_allclose(p.pi[2], [0.8, 0.8, 0.8, 0.2, 0.2, 0.2])

    def test_two_class_layout(self):
        p = condition_params(SimCondition(2, 100, 0.9))
        np.testing.assert_allclose(p.pi, [[0.9] * 6, [0.1] * 6], atol=1e-15)
        np.testing.assert_allclose(p.rho, [0.5, 0.5])

    @pytest.mark.parametrize("bad", [dict(C_true=4), dict(hi=0.4), dict(N=0)])
    def test_invalid(self, bad):
        kw = dict(C_true=2, N=100, hi=0.8) | bad
        with pytest.raises(ValueError):
            SimCondition(**kw)

    def test_key_is_value_based(self):
        assert SimCondition(2, 100, 0.8).key == SimCondition(2, 100, 0.80000000001).key


class TestRunStudy:
    def test_single_repetition(self):
        res = run_study([SimCondition(3, 80, 0.9)], 1, SPECS, K=30, em=FAST, seed=1)
        assert len(res) == 4
        assert all(r.rate in (0.0, 1.0) and r.mc_se == 0.0 for r in res)

    def test_deterministic_and_order_free(self):
        a, b = SimCondition(2, 60, 0.8), SimCondition(3, 60, 0.9)
        r1 = run_study([a, b], 3, SPECS, K=40, em=FAST, seed=4)
        r2 = run_study([b, a], 3, SPECS, K=40, em=FAST, seed=4)
        key = lambda r: (r.condition.key, r.spec)
        assert sorted((key(r), r.rejections) for r in r1) == sorted((key(r), r.rejections) for r in r2)

    def test_workers_match_serial(self):
        conds = [SimCondition(3, 60, 0.9)]
        r1 = run_study(conds, 4, SPECS, K=30, em=FAST, seed=2)
        r2 = run_study(conds, 4, SPECS, K=30, em=FAST, seed=2, workers=2)
        assert results_csv(r1) == results_csv(r2)

    def test_R_must_be_positive(self):
        with pytest.raises(ValueError):
            run_study([SimCondition(2, 60, 0.8)], 0, SPECS)

    def test_spec_checked_against_J(self):
        with pytest.raises(ValueError):
            run_study([SimCondition(2, 60, 0.8, J=4)], 1, parse_specs("risk:6"))


class TestResultMath:
    def test_rate_and_se(self):
        r = SimResult(SimCondition(2, 100, 0.8), "x2", 20, 200, 500, 0)
        assert r.rate == 0.1
        assert r.mc_se == pytest.approx(np.sqrt(0.1 * 0.9 / 200))


class TestStudyConfig:
    def test_parse(self):
        cfg = parse_study_config(STUDY)
        assert (cfg.R, cfg.K, cfg.seed) == (3, 40, 11)
        assert len(cfg.conditions) == 4
        assert [s.name for s in cfg.specs] == ["x2", "x2:1,2"]
        assert cfg.em.n_starts == 2 and cfg.em.tol == 1e-10

    def test_missing_R(self):
        with pytest.raises(ValueError, match="R"):
            parse_study_config("[study]\nK = 3\n[conditions]\nC_true = 2\nN = 50\nhi = .8\n")

    def test_csv_roundtrip_bytes(self):
        cfg = parse_study_config(STUDY)
        run = lambda: results_csv(run_study(cfg.conditions, cfg.R, cfg.specs, cfg.K, cfg.em, cfg.seed))
        text = run()
        assert text == run()
        lines = text.splitlines()
        assert lines[0] == ",".join(RESULT_FIELDS)
        assert len(lines) == 1 + 4 * 2
        assert any('"x2:1,2"' in ln for ln in lines)
