import io
import json

import numpy as np
import pytest

from heavyuser import analytic
from heavyuser.errors import ParameterError, ReplicationError
from heavyuser.estimators import Method
from heavyuser.harness import (
    ExperimentConfig, bias_vs_duration, load_table1_config, reproduce_table1, run_experiment,
    run_replication, table1_configs, write_duration_csv, write_table1_csv,
)
from heavyuser.model import BehaviorModel, PointMasses, Polynomial, Uniform, example_model


def small_config(**kw):
    d = dict(model=example_model(1), k=6, n_treat=80, n_control=80, replications=6,
             master_seed=11, bootstrap_replicates=5)
    d.update(kw)
    return ExperimentConfig(**d)


class TestConfig:
    def test_validation(self):
        with pytest.raises(ParameterError):
            small_config(replications=1)
        with pytest.raises(ParameterError):
            small_config(methods=())
        with pytest.raises(ParameterError):
            small_config(block_len=7)
        with pytest.raises(ValueError):
            small_config(methods=("median",))

    def test_json_roundtrip(self):
        cfg = small_config(model=example_model(2), methods=(Method.NAIVE,), block_len=2)
        text = json.dumps(cfg.to_dict())
        assert ExperimentConfig.from_dict(json.loads(text)) == cfg

    def test_missing_field(self):
        d = small_config().to_dict()
        del d["k"]
        with pytest.raises(ParameterError, match="k"):
            ExperimentConfig.from_dict(d)

    def test_table1_file(self):
        doc = load_table1_config()
        assert set(doc["examples"]) == {"1", "2"}
        cfgs = table1_configs(100, 0)
        assert cfgs["1"].model == example_model(1)
        assert cfgs["2"].model == example_model(2)
        for c in cfgs.values():
            assert (c.k, c.n_treat, c.n_control, c.replications) == (14, 1000, 1000, 100)
            assert c.bootstrap_replicates == 100 and c.block_len == 1
        assert cfgs["1"].master_seed != cfgs["2"].master_seed


class TestRunExperiment:
    def test_determinism(self):
        a = run_experiment(small_config(replications=2))
        b = run_experiment(small_config(replications=2))
        assert a == b
        for m in Method:
            np.testing.assert_array_equal(a[m].estimates, b[m].estimates)

    def test_schedule_independence(self):
        cfg = small_config(replications=9)
        serial = run_experiment(cfg, workers=1)
        parallel = run_experiment(cfg, workers=3)
        for m in Method:
            np.testing.assert_array_equal(serial[m].estimates, parallel[m].estimates)
        assert serial.to_dict() == parallel.to_dict()

    def test_truth_is_analytic(self):
        cfg = small_config(model=BehaviorModel(Uniform(), Polynomial(0.5, 0.25)))
        s = run_experiment(cfg)
        assert s.truth == analytic.compute_estimand(cfg.model)
        for m in Method:
            assert s[m].mean_bias == pytest.approx(s[m].estimates.mean() - s.truth, abs=1e-15)
            assert s[m].replications == cfg.replications
            assert s[m].std_error >= 0

    def test_prefix_stability(self):
        # replication r does not depend on how many replications were requested
        a = run_experiment(small_config(replications=3))
        b = run_experiment(small_config(replications=5))
        np.testing.assert_array_equal(a[Method.NAIVE].estimates, b[Method.NAIVE].estimates[:3])

    def test_failure_names_replication(self):
        # nobody in control is ever active -> degenerate arm in every replication
        cfg = small_config(model=BehaviorModel(PointMasses.of((0.0, 1.0))))
        with pytest.raises(ReplicationError) as info:
            run_experiment(cfg)
        assert info.value.index == 0
        assert "replication 0" in str(info.value)

    def test_run_replication_order(self):
        cfg = small_config(methods=(Method.JACKKNIFE, Method.NAIVE))
        est = run_replication(cfg, 4)
        full = run_replication(small_config(), 4)
        assert est[0] == full[1] and est[1] == full[0]

    @pytest.mark.slow
    def test_standard_error_is_honest(self):
        cfg = small_config(k=10, n_treat=300, n_control=300, replications=60,
                           methods=(Method.NAIVE, Method.JACKKNIFE))
        a = run_experiment(cfg)
        b = run_experiment(cfg.with_(master_seed=999))
        for m in (Method.NAIVE, Method.JACKKNIFE):
            sd_rerun = b[m].estimates.std(ddof=1)
            reported_sd = a[m].std_error * np.sqrt(cfg.replications)
            assert 0.5 < reported_sd / sd_rerun < 2.0


class TestBiasVsDuration:
    @pytest.mark.slow
    def test_against_analytic(self):
        cfg = ExperimentConfig(example_model(1), 14, 1000, 1000, 100, master_seed=77,
                               methods=(Method.NAIVE, Method.JACKKNIFE))
        rows = bias_vs_duration(cfg, [7, 14, 28])
        for row, want in zip(rows, [1 / 21, 1 / 42, 1 / 84]):
            assert row.exact_bias == pytest.approx(want, abs=1e-10)
            assert row.first_order_bias == pytest.approx(want, abs=1e-10)
            assert abs(row.naive_bias - row.exact_bias) < 3 * row.naive_se
            assert abs(row.jackknife_bias) <= abs(row.naive_bias) + 3 * row.jackknife_se

    def test_csv_shape(self):
        rows = bias_vs_duration(small_config(replications=2), [3, 5])
        buf = io.StringIO()
        write_duration_csv(rows, buf)
        lines = buf.getvalue().splitlines()
        assert lines[0] == ("k,naive_bias,naive_se,jackknife_bias,jackknife_se,"
                            "exact_bias,first_order_bias")
        assert [l.split(",")[0] for l in lines[1:]] == ["3", "5"]

    def test_rejects_short(self):
        with pytest.raises(ParameterError):
            bias_vs_duration(small_config(), [1, 5])


def test_table1_smoke():
    rows, summaries = reproduce_table1(2, master_seed=5)
    assert [(r[0], r[1]) for r in rows] == [
        (m, e) for m in ("naive", "jackknife", "block_bootstrap") for e in ("1", "2")]
    assert all(np.isfinite(r[2]) and r[3] >= 0 for r in rows)
    assert summaries["1"].truth == pytest.approx(1 / 3, abs=1e-10)
    assert summaries["2"].truth == pytest.approx(1 / 3, abs=1e-10)
    buf = io.StringIO()
    write_table1_csv(rows, buf)
    assert buf.getvalue().splitlines()[0] == "method,example,mean_bias,std_error"
