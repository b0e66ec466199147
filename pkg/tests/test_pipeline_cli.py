import json
import subprocess
import sys
import time
from pathlib import Path

import pytest
import yaml

from lowsnr.cli import EXIT_CONFIG, EXIT_DATA, EXIT_OK, main
from lowsnr.pipeline import STAGES


def _tree(root: Path) -> dict:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def demo_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("demo") / "run"
    t0 = time.perf_counter()
    code = main(["run", "--preset", "demo", "--out", str(out)])
    return out, code, time.perf_counter() - t0


def test_demo_completes_quickly(demo_run):
    out, code, elapsed = demo_run
    assert code == EXIT_OK
    assert elapsed < 60
    for stage in STAGES:
        assert (out / stage / "manifest.json").is_file()
    summary = json.loads((out / "analyze" / "summary.json").read_text())
    assert summary
    assert (out / "report" / "report.md").read_text().strip()
    assert (out / "resolved_config.yaml").is_file()


def test_jobs_do_not_change_outputs(demo_run, tmp_path):
    out, _, _ = demo_run
    other = tmp_path / "run"
    assert main(["run", "--preset", "demo", "--out", str(other), "--jobs", "4"]) == EXIT_OK
    a, b = _tree(out), _tree(other)
    assert a.keys() == b.keys()
    assert [k for k in a if a[k] != b[k]] == []


def test_rerun_skips_everything(demo_run, capsys):
    out, _, _ = demo_run
    before = _tree(out)
    assert main(["run", "--preset", "demo", "--out", str(out)]) == EXIT_OK
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines == [f"{s}: skipped" for s in STAGES]
    assert _tree(out) == before


def test_dry_run_prints_plan(demo_run, tmp_path, capsys):
    out, _, _ = demo_run
    assert main(["run", "--preset", "demo", "--out", str(out), "--dry-run"]) == EXIT_OK
    text = capsys.readouterr().out
    assert "# stage plan" in text and "synth: skip" in text and "seed: 2024" in text
    fresh = tmp_path / "fresh"
    assert main(["run", "--preset", "demo", "--out", str(fresh), "--dry-run"]) == EXIT_OK
    text = capsys.readouterr().out
    assert all(f"{s}: run" in text for s in STAGES)
    assert not fresh.exists()


def test_missing_upstream_is_a_data_error(tmp_path, capsys):
    assert main(["unwrap", "--preset", "demo", "--out", str(tmp_path / "r")]) == EXIT_DATA
    err = capsys.readouterr().err
    assert "ifg" in err and "lowsnr ifg" in err


def test_corrupt_input_named(demo_run, tmp_path, capsys):
    import shutil

    out, _, _ = demo_run
    copy = tmp_path / "copy"
    shutil.copytree(out, copy)
    victim = sorted((copy / "ifg" / "degraded").glob("phase_*.bin"))[0]
    raw = bytearray(victim.read_bytes())
    raw[10] ^= 0x55
    victim.write_bytes(bytes(raw))
    assert main(["unwrap", "--preset", "demo", "--out", str(copy), "--force"]) == EXIT_DATA
    err = capsys.readouterr().err
    assert victim.name in err and "corrupt" in err


def test_stage_rebuild_is_identical(demo_run, tmp_path):
    import shutil

    out, _, _ = demo_run
    copy = tmp_path / "copy"
    shutil.copytree(out, copy)
    shutil.rmtree(copy / "unwrap")
    assert main(["unwrap", "--preset", "demo", "--out", str(copy)]) == EXIT_OK
    assert _tree(copy / "unwrap") == _tree(out / "unwrap")


def test_branch_mismatch_rejected(demo_run, tmp_path, capsys):
    import shutil

    out, _, _ = demo_run
    copy = tmp_path / "copy"
    shutil.copytree(out, copy)
    doc = yaml.safe_load((copy / "resolved_config.yaml").read_text())
    doc["processing"]["unwrap_threshold"] = 0.35
    cfg = tmp_path / "changed.yaml"
    cfg.write_text(yaml.safe_dump(doc))
    assert main(["unwrap", str(cfg), "--out", str(copy)]) == EXIT_DATA
    assert "non-noise" in capsys.readouterr().err


def test_noise_only_change_reruns_from_degrade(demo_run, tmp_path, capsys):
    import shutil

    out, _, _ = demo_run
    copy = tmp_path / "copy"
    shutil.copytree(out, copy)
    doc = yaml.safe_load((copy / "resolved_config.yaml").read_text())
    doc["noise"]["target_nesz_db"] = -12.0
    cfg = tmp_path / "noisier.yaml"
    cfg.write_text(yaml.safe_dump(doc))
    assert main(["run", str(cfg), "--out", str(copy), "--dry-run"]) == EXIT_OK
    text = capsys.readouterr().out
    assert "synth: skip" in text and "degrade: run" in text and "report: run" in text


def test_config_errors_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("noise: {target_nesz_db: -80}\n")
    assert main(["run", str(bad), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert "config error" in capsys.readouterr().err
    assert main(["synth", str(tmp_path / "none.yaml")]) == EXIT_CONFIG
    assert main(["run", "--preset", "demo", "--jobs", "0", "--out", str(tmp_path / "o")]) == EXIT_CONFIG


def test_presets_command(capsys):
    assert main(["presets"]) == EXIT_OK
    assert "demo" in capsys.readouterr().out.split()


def test_console_entry_point_help():
    res = subprocess.run([sys.executable, "-m", "lowsnr.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    assert all(s in res.stdout for s in STAGES)
