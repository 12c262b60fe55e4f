"""Evaluation harness: metric routing, reports and the ablation table."""
import numpy as np
import pytest

from cmnet.data import ScenarioSpec, mix_scenario, scenario_set
from cmnet.evaluate import (AblationReport, EvalItem, EvalReport, ScenarioResult, ablation_run, evaluate,
                            oracle_provider)
from cmnet.model import ConfigError, ModelConfig, init_params, save_checkpoint
from cmnet.signal import write_wav
from cmnet.train import TrainConfig

TOY = ModelConfig.toy()
SET = scenario_set(2, 1.0, 1000)


def test_metric_routing():
    rep = evaluate(init_params(TOY), TOY, SET)
    for r in rep.results:
        if r.kind == "ST_FE":
            assert r.erle is not None and r.si_snr_out is None
        else:
            assert r.erle is None and r.si_snr_out is not None and r.si_snr_in is not None
    agg = rep.aggregate()
    assert set(agg) == {"DT", "ST_NE", "ST_FE"}
    assert set(agg["ST_FE"]) == {"erle"}
    assert set(agg["DT"]) == {"si_snr_in", "si_snr_out", "si_snr_improvement"}


def test_untrained_model_is_near_identity():
    rep = evaluate(init_params(TOY), TOY, SET)
    for kind in ("DT", "ST_NE"):
        assert abs(rep.aggregate()[kind]["si_snr_improvement"][0]) < 3.0


def test_oracle_upper_bound():
    agg = evaluate(None, None, SET, mask_provider=oracle_provider).aggregate()
    assert agg["DT"]["si_snr_out"][0] >= 30.0
    assert agg["ST_FE"]["erle"][0] == pytest.approx(100.0)


def test_st_fe_requires_silent_target():
    m = mix_scenario(ScenarioSpec("DT", 0.0, None, 1.0, seed=1))
    with pytest.raises(ConfigError, match="undefined"):
        EvalItem("ST_FE", m.y, m.x, m.s)
    with pytest.raises(ConfigError, match="non-silent"):
        EvalItem("DT", m.y, m.x, np.zeros_like(m.s))
    with pytest.raises(ConfigError):
        EvalItem("ST_NE", m.y, m.x, None)
    EvalItem("ST_FE", m.y, m.x, np.zeros_like(m.s))


def test_needs_params_or_mask():
    with pytest.raises(ConfigError):
        evaluate(None, None, SET)


def test_checkpoint_path_is_loaded(tmp_path):
    params = init_params(TOY)
    save_checkpoint(tmp_path / "ck", params, TOY)
    a = evaluate(tmp_path / "ck", None, SET[:2])
    b = evaluate(params, TOY, SET[:2])
    assert a.param_count == b.param_count
    assert a.results[0].si_snr_out == pytest.approx(b.results[0].si_snr_out, abs=1e-3)


def test_report_formats():
    rep = EvalReport([ScenarioResult("DT", "a", 0.0, 1.0, 4.0, None, 12),
                      ScenarioResult("DT", "b", 5.0, 3.0, 4.0, None, 0),
                      ScenarioResult("ST_FE", "c", None, erle=20.0)], 123, "abc", "demo")
    agg = rep.aggregate()
    assert agg["DT"]["si_snr_improvement"] == (2.0, 1.0)
    text = rep.to_text().splitlines()
    assert text[0] == "# demo: params=123 config=abc"
    assert text[1].split() == ["kind", "n", "metric", "mean", "std"]
    assert text[-1].split() == ["ST_FE", "1", "erle", "20.000", "0.000"]
    csv = rep.to_csv().splitlines()
    assert csv[0] == "kind,label,ser_db,si_snr_in,si_snr_out,si_snr_improvement,erle,delay"
    assert csv[1] == "DT,a,0.000000,1.000000,4.000000,3.000000,,12"
    assert csv[3] == "ST_FE,c,,,,,20.000000,0"


def test_wav_triplets(tmp_path):
    m = mix_scenario(ScenarioSpec("DT", 0.0, None, 1.0, seed=2))
    for name, sig in (("mic", m.y), ("far", m.x), ("near", m.s)):
        write_wav(tmp_path / f"{name}.wav", 0.4 * sig)
    item = EvalItem.from_wavs("DT", tmp_path / "mic.wav", tmp_path / "far.wav", tmp_path / "near.wav")
    assert item.label == "mic" and len(item.mic) == len(m.y)
    rep = evaluate(None, None, [item], mask_provider=oracle_provider)
    assert rep.results[0].si_snr_out > 25.0


def test_ablation_harness_small():
    scen = scenario_set(1, 0.5, 99)
    rep = ablation_run(TOY, TrainConfig(chunk_seconds=0.5, steps=2, seed=1), cases=(1, 5), eval_scenarios=scen,
                       reference=ModelConfig())
    assert [r.case for r in rep.rows] == [1, 5]
    assert rep.rows[0].toggles == (True, True, True) and rep.rows[1].toggles == (False, False, False)
    assert rep.rows[0].params_reference == 2_394_210
    lines = rep.to_text().splitlines()
    assert lines[0] == "# ablation seed=1 steps=2"
    assert lines[1].split()[:4] == ["case", "tpb", "tnb", "ib"]
    assert len(rep.to_csv().splitlines()) == 3
    with pytest.raises(ConfigError):
        ablation_run(TOY, TrainConfig(chunk_seconds=0.5, steps=1), cases=(6,), eval_scenarios=scen)


def test_ablation_report_dash_for_missing():
    from cmnet.evaluate import AblationRow

    rep = AblationReport([AblationRow(2, (True, False, False), 10, None, {}, 0.5)])
    cells = rep.to_csv().splitlines()[1].split(",")
    assert cells == ["2", "x", "-", "-", "-", "-", "-", "-", "10", "-", "0.5000"]
