import math

import numpy as np
import pytest
import yaml

from lowsnr.config import DEFAULTS, OUTPUT_ENV, ConfigError, RunConfig, list_presets


def test_defaults_are_valid_and_match_documented_values():
    cfg = RunConfig.from_dict({})
    assert cfg.target_nesz_db == -15.0
    assert cfg.chain_settings().looks == (8, 8)
    assert cfg.chain_settings().tcoh_threshold == 0.5
    assert cfg.binning().coherence_edges[0] == 0.3
    assert cfg.raw["analysis"]["los_target_m"] == 0.002
    assert cfg.raw["analysis"]["velocity_target_m_per_yr"] == 0.001
    assert cfg.network().n_pairs == 10
    assert cfg.days[1] == 91.0


def test_presets_load():
    names = list_presets()
    assert {"demo", "ladder-14", "greenland-pair"} <= set(names)
    ladder = RunConfig.preset("ladder-14")
    assert len(ladder.dates) == 14 and ladder.network().n_pairs == 91
    assert ladder.dates[0].year == 2009 and ladder.dates[0].month == 4
    assert ladder.dates[-1].year == 2021 and ladder.dates[-1].month == 11
    pair = RunConfig.preset("greenland-pair")
    assert pair.days == (0.0, 8.0)
    with pytest.raises(ConfigError, match="unknown preset"):
        RunConfig.preset("nope")


@pytest.mark.parametrize("doc, match", [
    ({"bogus": 1}, "unknown config key"),
    ({"scene": {"colour": 3}}, "unknown config key"),
    ({"scene": "flat"}, "mapping"),
    ({"dates": ["2020-01-01"]}, "two dates"),
    ({"dates": ["2020-02-01", "2020-01-01"]}, "increasing"),
    ({"dates": ["2020-13-01", "2020-01-01"]}, "bad date"),
    ({"noise": {"target_nesz_db": -60}}, "below the original"),
    ({"noise": {"mode": "loud"}}, "noise.mode"),
    ({"noise": {"nesz_table": [[30, -40], [50, -10]]}}, "below the original"),
    ({"processing": {"looks": [0, 8]}}, "looks"),
    ({"processing": {"looks": [128, 8]}}, "exceed"),
    ({"processing": {"unwrap_threshold": 2}}, "unwrap_threshold"),
    ({"processing": {"tcoh_threshold": -1}}, "tcoh_threshold"),
    ({"scene": {"velocity": {"kind": "spiral"}}}, "scene recipe"),
    ({"scene": {"coherence": {"rho0": 0.2, "rho_inf": 0.5, "tau_days": 3}}}, "scene recipe"),
    ({"network": {"kind": "explicit", "pairs": [[0, 1], [3, 4]]}}, "disconnected|invalid network"),
    ({"network": {"kind": "explicit", "pairs": [[0, 1], [1, 9]]}}, "invalid network"),
    ({"network": {"kind": "all-pairs", "max_step": 2}}, "do not apply"),
    ({"network": {"kind": "ring"}}, "unknown network kind"),
    ({"analysis": {"statistic": "max"}}, "analysis"),
    ({"analysis": {"los_target_m": 0}}, "positive"),
    ({"seed": -3}, "seed"),
])
def test_validation_errors(doc, match):
    with pytest.raises(ConfigError, match=match):
        RunConfig.from_dict(doc)


def test_load_file_and_errors(tmp_path):
    p = tmp_path / "my-run.yaml"
    p.write_text(yaml.safe_dump({"seed": 9, "scene": {"rows": 16, "cols": 16}}))
    cfg = RunConfig.load(p)
    assert cfg.name == "my-run" and cfg.seed == 9 and cfg.shape == (16, 16)
    with pytest.raises(ConfigError, match="not found"):
        RunConfig.load(tmp_path / "missing.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("seed: [1, 2\n")
    with pytest.raises(ConfigError, match="YAML"):
        RunConfig.load(bad)
    bad.write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError, match="mapping"):
        RunConfig.load(bad)


def test_branch_digest_ignores_noise_and_analysis():
    a = RunConfig.from_dict({})
    b = RunConfig.from_dict({"noise": {"target_nesz_db": -10}, "analysis": {"min_count": 50}})
    c = RunConfig.from_dict({"processing": {"unwrap_threshold": 0.4}})
    assert a.branch_digest() == b.branch_digest()
    assert a.branch_digest() != c.branch_digest()
    assert a.section_digest("noise") != b.section_digest("noise")


def test_output_resolution(tmp_path, monkeypatch):
    cfg = RunConfig.from_dict({"name": "x"})
    monkeypatch.delenv(OUTPUT_ENV, raising=False)
    assert str(cfg.resolve_output()) == "lowsnr-runs/x"
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path))
    assert cfg.resolve_output() == tmp_path / "x"
    assert str(cfg.resolve_output("elsewhere")) == "elsewhere"
    assert str(RunConfig.from_dict({"output_dir": "fixed"}).resolve_output()) == "fixed"


def test_yaml_roundtrip():
    cfg = RunConfig.preset("demo")
    again = RunConfig.from_dict(yaml.safe_load(cfg.to_yaml()))
    assert again.raw == cfg.raw


def test_typed_views():
    cfg = RunConfig.from_dict({"scene": {"rows": 8, "cols": 10, "incidence_deg": [30, 48]},
                               "noise": {"nesz_table": [[30, -52], [50, -48]]},
                               "network": {"kind": "sequential", "max_step": 2}})
    inc = cfg.incidence()
    assert inc.shape == (10,) and inc[0] == 30 and inc[-1] == 48
    assert cfg.nesz_model().table_for() == ((30.0, -52.0), (50.0, -48.0))
    assert cfg.network().pairs[:3] == ((0, 1), (0, 2), (1, 2))
    assert cfg.velocity_field().v_los.shape == (8, 10)
    assert np.all(np.isfinite(cfg.sigma0_field().sigma0_db))
    assert math.isclose(cfg.coherence_model().rho0, DEFAULTS["scene"]["coherence"]["rho0"])
    explicit = RunConfig.from_dict({"network": {"kind": "explicit", "pairs": [[0, 1], [1, 2], [2, 3], [3, 4]]}})
    assert explicit.network().n_pairs == 4
