"""Staged driver: synth -> degrade -> ifg -> unwrap -> invert -> analyze -> report.

Every stage reads only files written by earlier stages, records the
checksums of what it read and wrote in ``<stage>/manifest.json`` and is
skipped when nothing it depends on has changed.
"""
from __future__ import annotations

import json
import logging
import math
import shutil
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import analysis as an
from .config import RunConfig
from .core import Interferogram, db_to_linear, linear_to_db, multilook
from .noise import degrade_stack
from .rasterfile import RasterFormatError, file_digest, read_raster, read_stack, write_raster, write_stack
from .scene import synthesize_slc_stack
from .timeseries import select_reference_pixel
from .unwrap import correct_closure
from .workflow import form_ifgs, invert, unwrap_ifgs

log = logging.getLogger(__name__)

STAGES = ("synth", "degrade", "ifg", "unwrap", "invert", "analyze", "report")
BRANCHES = ("original", "degraded")
MANIFEST = "manifest.json"

# config sections each stage reads directly; upstream changes arrive through input checksums
_SECTIONS = {
    "synth": ("seed", "scene", "dates"),
    "degrade": ("seed", "noise"),
    "ifg": ("network", "processing"),
    "unwrap": ("network", "processing"),
    "invert": ("network", "processing"),
    "analyze": ("noise", "analysis"),
    "report": ("analysis",),
}
_UPSTREAM = {
    "synth": (),
    "degrade": ("synth",),
    "ifg": ("synth", "degrade"),
    "unwrap": ("ifg",),
    "invert": ("ifg", "unwrap"),
    "analyze": ("synth", "ifg", "unwrap", "invert"),
    "report": ("analyze",),
}


class DataError(RuntimeError):
    """Missing, corrupt or inconsistent stage inputs."""


class BranchMismatchError(DataError):
    """Original and degraded products were made with different non-noise settings."""


@dataclass
class Context:
    cfg: RunConfig
    out: Path
    jobs: int = 1
    force: bool = False

    def stage_dir(self, stage) -> Path:
        return self.out / stage


# ------------------------------------------------------------- manifests

def _rel(ctx, path) -> str:
    return Path(path).relative_to(ctx.out).as_posix()


def read_manifest(ctx: Context, stage: str) -> dict | None:
    p = ctx.stage_dir(stage) / MANIFEST
    if not p.exists():
        return None
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{p}: unreadable manifest ({exc})") from exc


def _verify_outputs(ctx, stage, manifest) -> None:
    for rel, sha in manifest["outputs"].items():
        p = ctx.out / rel
        if not p.exists():
            raise DataError(f"stage {stage!r}: output {p} is missing; re-run `lowsnr {stage}`")
        if file_digest(p) != sha:
            raise DataError(f"stage {stage!r}: output {p} is corrupt (checksum mismatch); re-run `lowsnr {stage}`")


def upstream_inputs(ctx: Context, stage: str) -> dict:
    """Checksums of every upstream output, after checking each file on disk."""
    inputs = {}
    for up in _UPSTREAM[stage]:
        m = read_manifest(ctx, up)
        if m is None:
            raise DataError(f"stage {stage!r} needs the outputs of {up!r} under {ctx.stage_dir(up)}, "
                            f"which do not exist; run `lowsnr {up}` first")
        _verify_outputs(ctx, up, m)
        inputs.update(m["outputs"])
    return inputs


def stage_digest(ctx: Context, stage: str) -> str:
    return ctx.cfg.section_digest(*_SECTIONS[stage])


def is_current(ctx: Context, stage: str, inputs: dict) -> bool:
    m = read_manifest(ctx, stage)
    if m is None or m.get("config_digest") != stage_digest(ctx, stage) or m.get("inputs") != inputs:
        return False
    try:
        _verify_outputs(ctx, stage, m)
    except DataError:
        return False
    return True


def _write_manifest(ctx, stage, inputs, outputs, info=None) -> dict:
    m = {
        "stage": stage,
        "config_digest": stage_digest(ctx, stage),
        "branch_digest": ctx.cfg.branch_digest(),
        "inputs": inputs,
        "outputs": {_rel(ctx, p): file_digest(p) for p in sorted(outputs)},
        "info": info or {},
    }
    (ctx.stage_dir(stage) / MANIFEST).write_text(json.dumps(m, indent=2, sort_keys=True) + "\n")
    return m


def _fresh_dir(path: Path) -> Path:
    if path.exists():
        shutil.rmtree(path)
    path.mkdir(parents=True)
    return path


def _raster_list(paths):
    """Sidecars are outputs too: the raster checksum lives in them."""
    out = []
    for p in paths:
        out += [Path(p), Path(p).with_suffix(".json")]
    return out


def _load(path):
    try:
        return read_raster(path)
    except RasterFormatError as exc:
        raise DataError(str(exc)) from exc


# ----------------------------------------------------------------- stages

def _pair_name(a, b):
    return f"{a:02d}_{b:02d}"


def stage_synth(ctx: Context) -> dict:
    cfg = ctx.cfg
    d = _fresh_dir(ctx.stage_dir("synth"))
    sc = cfg.raw["scene"]
    vel, sig = cfg.velocity_field(), cfg.sigma0_field()
    orig_nesz = float(cfg.raw["noise"]["original_nesz_db"])
    stack = synthesize_slc_stack(vel, sig, cfg.days, cfg.coherence_model(), cfg.wavelength_m, cfg.seed,
                                 incidence_deg=cfg.incidence(), pixel_spacing_m=tuple(sc["pixel_spacing_m"]),
                                 nesz_db=orig_nesz if math.isfinite(orig_nesz) else None, jobs=ctx.jobs)
    paths = write_stack(d / "original", stack, extra={"branch": "original"})
    paths.append(write_raster(d / "truth" / "velocity.bin", vel.v_los, units="m/yr"))
    paths.append(write_raster(d / "truth" / "sigma0_db.bin", sig.sigma0_db, units="dB"))
    return {"outputs": _raster_list(paths), "info": {"dates": cfg.raw["dates"], "shape": list(cfg.shape)}}


def stage_degrade(ctx: Context) -> dict:
    cfg = ctx.cfg
    d = _fresh_dir(ctx.stage_dir("degrade"))
    stack = _read_stack(ctx.stage_dir("synth") / "original")
    noisy = degrade_stack(stack, cfg.target_nesz_db, cfg.nesz_model(), cfg.seed,
                          mode=cfg.raw["noise"]["mode"], jobs=ctx.jobs)
    paths = write_stack(d / "degraded", noisy, extra={"branch": "degraded", "target_nesz_db": cfg.target_nesz_db})
    return {"outputs": _raster_list(paths), "info": {"target_nesz_db": cfg.target_nesz_db}}


def _read_stack(directory):
    try:
        return read_stack(directory)
    except RasterFormatError as exc:
        raise DataError(str(exc)) from exc


def stage_ifg(ctx: Context) -> dict:
    cfg = ctx.cfg
    d = _fresh_dir(ctx.stage_dir("ifg"))
    net, settings = cfg.network(), cfg.chain_settings()
    stacks = {"original": _read_stack(ctx.stage_dir("synth") / "original"),
              "degraded": _read_stack(ctx.stage_dir("degrade") / "degraded")}
    paths, cohs = [], {}
    for branch, stack in stacks.items():
        ifgs = form_ifgs(stack, net, settings, ctx.jobs)
        cohs[branch] = np.stack([i.coherence for i in ifgs])
        for (a, b), ifg in zip(net.pairs, ifgs):
            meta = {"date_a": cfg.raw["dates"][a], "date_b": cfg.raw["dates"][b], "n_looks": ifg.n_looks,
                    "branch": branch}
            kw = dict(pixel_spacing_m=ifg.pixel_spacing_m, wavelength_m=ifg.wavelength_m, extra=meta)
            paths.append(write_raster(d / branch / f"phase_{_pair_name(a, b)}.bin", ifg.wrapped_phase,
                                      units="rad", **kw))
            paths.append(write_raster(d / branch / f"coh_{_pair_name(a, b)}.bin", ifg.coherence, units="1", **kw))
    # one reference for both branches: best mean coherence in the weaker branch
    ref = select_reference_pixel(np.minimum(cohs["original"], cohs["degraded"]))
    return {"outputs": _raster_list(paths),
            "info": {"ref_pixel": list(ref), "network": net.to_dict(), "n_looks": int(np.prod(settings.looks))}}


def _read_ifgs(ctx, branch):
    cfg = ctx.cfg
    net = cfg.network()
    d = ctx.stage_dir("ifg") / branch
    out = []
    for a, b in net.pairs:
        phi, meta = _load(d / f"phase_{_pair_name(a, b)}.bin")
        coh, _ = _load(d / f"coh_{_pair_name(a, b)}.bin")
        ex = meta["extra"]
        out.append(Interferogram(phi, coh, cfg.days[a], cfg.days[b], ex["n_looks"], meta["wavelength_m"],
                                 tuple(meta["pixel_spacing_m"]), {"branch": branch}))
    return out


def _check_branches(ctx, stage):
    """Both branch products must come from the same non-noise settings."""
    m = read_manifest(ctx, stage)
    if m is None:
        return
    if m.get("branch_digest") != ctx.cfg.branch_digest():
        raise BranchMismatchError(
            f"stage {stage!r} products in {ctx.stage_dir(stage)} were made with non-noise settings "
            f"{m.get('branch_digest')}, the current config has {ctx.cfg.branch_digest()}; "
            "original and degraded branches must share every non-noise parameter")


def stage_unwrap(ctx: Context) -> dict:
    cfg = ctx.cfg
    _check_branches(ctx, "ifg")
    d = _fresh_dir(ctx.stage_dir("unwrap"))
    net, settings = cfg.network(), cfg.chain_settings()
    ref = tuple(read_manifest(ctx, "ifg")["info"]["ref_pixel"])
    paths, info = [], {}
    for branch in BRANCHES:
        ifgs = _read_ifgs(ctx, branch)
        results = unwrap_ifgs(ifgs, settings, ctx.jobs)
        unw = np.stack([r.unwrapped_phase for r in results])
        if not np.all(np.isfinite(unw[:, ref[0], ref[1]])):
            raise DataError(f"reference pixel {ref} is masked in the {branch} unwrapped phase")
        unw = unw - unw[:, ref[0], ref[1]][:, None, None]
        n_corr, n_unres = 0, 0
        if settings.closure and net.triplets():
            cc = correct_closure(unw, net)
            unw, n_corr, n_unres = cc.corrected, cc.n_corrections, int(cc.unresolved.sum())
        for k, ((a, b), r) in enumerate(zip(net.pairs, results)):
            kw = dict(pixel_spacing_m=ifgs[k].pixel_spacing_m, wavelength_m=ifgs[k].wavelength_m,
                      extra={"branch": branch, "ref_pixel": list(ref)})
            paths.append(write_raster(d / branch / f"unw_{_pair_name(a, b)}.bin", unw[k], units="rad", **kw))
            paths.append(write_raster(d / branch / f"comp_{_pair_name(a, b)}.bin", r.components.astype(np.int32),
                                      units="label", **kw))
        info[branch] = {"closure_corrections": n_corr, "closure_unresolved": n_unres,
                        "components": [int(r.n_components) for r in results],
                        "unbridged": [len(r.unbridged) for r in results],
                        "residues": [int(r.residue_count) for r in results]}
    info["ref_pixel"] = list(ref)
    return {"outputs": _raster_list(paths), "info": info}


def _read_unwrapped(ctx, branch):
    net = ctx.cfg.network()
    d = ctx.stage_dir("unwrap") / branch
    return np.stack([_load(d / f"unw_{_pair_name(a, b)}.bin")[0] for a, b in net.pairs])


def stage_invert(ctx: Context) -> dict:
    cfg = ctx.cfg
    _check_branches(ctx, "unwrap")
    d = _fresh_dir(ctx.stage_dir("invert"))
    net, settings = cfg.network(), cfg.chain_settings()
    ref = tuple(read_manifest(ctx, "unwrap")["info"]["ref_pixel"])
    paths, info = [], {"ref_pixel": list(ref)}
    for branch in BRANCHES:
        unw = _read_unwrapped(ctx, branch)
        coh = np.stack([i.coherence for i in _read_ifgs(ctx, branch)]) if settings.weighted else None
        ts = invert(unw, net, ref, cfg.wavelength_m, settings, coherence=coh)
        for k, disp in enumerate(ts.displacement):
            paths.append(write_raster(d / branch / f"disp_{k:02d}.bin", disp, units="m",
                                      extra={"date": cfg.raw["dates"][k], "ref_pixel": list(ref)}))
        paths.append(write_raster(d / branch / "velocity.bin", ts.velocity, units="m/yr"))
        paths.append(write_raster(d / branch / "tcoh.bin", ts.temporal_coherence, units="1"))
        info[branch] = {"rank_deficient": bool(ts.rank_deficient),
                        "valid_fraction": float(np.mean(np.isfinite(ts.velocity)))}
    return {"outputs": _raster_list(paths), "info": info}


def snr_at_looks(ctx) -> np.ndarray:
    """SNR (dB) per multilooked pixel: look-averaged sigma0 power over the target NESZ."""
    cfg = ctx.cfg
    sig, _ = _load(ctx.stage_dir("synth") / "truth" / "sigma0_db.bin")
    lr, lc = cfg.chain_settings().looks
    s_ml = linear_to_db(multilook(db_to_linear(sig), lr, lc))
    return an.snr_map(s_ml, np.full(s_ml.shape, cfg.target_nesz_db))


def stage_analyze(ctx: Context) -> dict:
    cfg = ctx.cfg
    _check_branches(ctx, "invert")
    d = _fresh_dir(ctx.stage_dir("analyze"))
    acfg = cfg.binning()
    a = cfg.raw["analysis"]
    ref = tuple(read_manifest(ctx, "invert")["info"]["ref_pixel"])
    snr = snr_at_looks(ctx)
    uo, ud = _read_unwrapped(ctx, "original"), _read_unwrapped(ctx, "degraded")
    coh = np.stack([i.coherence for i in _read_ifgs(ctx, "original")])
    diffs = np.stack([an.los_difference(o, g, ref, cfg.wavelength_m) for o, g in zip(uo, ud)])
    los_table = an.binned_error(diffs, np.broadcast_to(snr, diffs.shape), coh, acfg)
    los_fits = an.fit_table(los_table)
    inv = ctx.stage_dir("invert")
    vo, _ = _load(inv / "original" / "velocity.bin")
    vd, _ = _load(inv / "degraded" / "velocity.bin")
    tcoh, _ = _load(inv / "degraded" / "tcoh.bin")
    vel = an.velocity_diff_analysis(vo, vd, snr, tcoh, acfg)
    outputs = [d / "los_table.csv", d / "los_fits.csv", d / "velocity_table.csv", d / "velocity_fits.csv",
               d / "summary.json"]
    an.write_table_csv(outputs[0], los_table)
    an.write_fits_csv(outputs[1], los_table, los_fits, float(a["los_target_m"]))
    an.write_table_csv(outputs[2], vel.table)
    an.write_fits_csv(outputs[3], vel.table, vel.fits, float(a["velocity_target_m_per_yr"]))
    dv = vo - vd
    fin = np.isfinite(dv)
    summary = {
        "ref_pixel": list(ref),
        "n_interferograms": int(diffs.shape[0]),
        "los_difference_std_m": _nanstd(diffs),
        "velocity_difference_median_abs_m_per_yr": float(np.median(np.abs(dv[fin]))) if fin.any() else None,
        "velocity_valid_fraction": float(fin.mean()),
        "los_thresholds_db": _thresholds(los_table, los_fits, float(a["los_target_m"])),
        "velocity_thresholds_db": _thresholds(vel.table, vel.fits, float(a["velocity_target_m_per_yr"])),
    }
    outputs[4].write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    if a.get("plots", True):
        from . import plots

        outputs += plots.render_analysis(d / "figures", los_table, los_fits, float(a["los_target_m"]),
                                         vel.table, vel.fits, float(a["velocity_target_m_per_yr"]),
                                         diffs, np.broadcast_to(snr, diffs.shape), coh, dv)
    return {"outputs": outputs, "info": {"figures": bool(a.get("plots", True))}}


def _nanstd(x):
    x = x[np.isfinite(x)]
    return float(np.std(x, ddof=1)) if x.size > 1 else None


def _thresholds(table, fits, target):
    out = {}
    for i, th in enumerate(an.thresholds_by_coherence(fits, target)):
        label = table.coherence_label(i)
        out[label] = None if th is None else {"snr_db": None if not math.isfinite(th.snr_db) else th.snr_db,
                                               "status": th.status}
    return out


def stage_report(ctx: Context) -> dict:
    cfg = ctx.cfg
    d = _fresh_dir(ctx.stage_dir("report"))
    summary = json.loads((ctx.stage_dir("analyze") / "summary.json").read_text())
    am = read_manifest(ctx, "analyze")
    figs = sorted(k for k in am["outputs"] if k.endswith(".png"))
    lines = [f"# Run report: {cfg.name}", "",
             f"- dates: {len(cfg.dates)} ({cfg.raw['dates'][0]} to {cfg.raw['dates'][-1]})",
             f"- interferograms: {summary['n_interferograms']}",
             f"- NESZ: {cfg.raw['noise']['original_nesz_db']} dB degraded to {cfg.target_nesz_db} dB",
             f"- looks: {cfg.raw['processing']['looks'][0]}x{cfg.raw['processing']['looks'][1]}",
             f"- reference pixel: {tuple(summary['ref_pixel'])}",
             f"- branch settings hash: {cfg.branch_digest()}", ""]
    std = summary["los_difference_std_m"]
    lines.append(f"LOS difference std over all interferograms: "
                 f"{'n/a' if std is None else f'{std * 1e3:.3f} mm'}")
    med = summary["velocity_difference_median_abs_m_per_yr"]
    lines.append(f"Median |velocity difference|: {'n/a' if med is None else f'{med * 100:.4f} cm/yr'} "
                 f"({summary['velocity_valid_fraction'] * 100:.1f}% of pixels valid)")
    an = cfg.raw["analysis"]
    for key, title, target in (("los_thresholds_db", "LOS", f"{an['los_target_m'] * 1e3:g} mm"),
                               ("velocity_thresholds_db", "Velocity", f"{an['velocity_target_m_per_yr'] * 100:g} cm/yr")):
        lines += ["", f"## {title} SNR thresholds (target {target})", "", "| coherence | SNR (dB) | status |",
                  "|---|---|---|"]
        for label, th in summary[key].items():
            if th is None:
                lines.append(f"| {label} | | no fit |")
            else:
                val = "" if th["snr_db"] is None else f"{th['snr_db']:.2f}"
                lines.append(f"| {label} | {val} | {th['status']} |")
    if figs:
        lines += ["", "## Figures", ""] + [f"- ../{f}" for f in figs]
    out = d / "report.md"
    out.write_text("\n".join(lines) + "\n")
    return {"outputs": [out], "info": {}}


_RUNNERS = {
    "synth": stage_synth,
    "degrade": stage_degrade,
    "ifg": stage_ifg,
    "unwrap": stage_unwrap,
    "invert": stage_invert,
    "analyze": stage_analyze,
    "report": stage_report,
}


def write_resolved_config(ctx: Context) -> Path:
    ctx.out.mkdir(parents=True, exist_ok=True)
    p = ctx.out / "resolved_config.yaml"
    text = ctx.cfg.to_yaml()
    if not p.exists() or p.read_text() != text:
        p.write_text(text)
    return p


def plan(ctx: Context, stages) -> list[tuple[str, str]]:
    """``(stage, action)`` for a dry run: ``run``, ``skip`` (up to date) or ``blocked``."""
    out = []
    pending = set()
    for stage in stages:
        if any(up in pending for up in _UPSTREAM[stage]):
            out.append((stage, "run"))
            pending.add(stage)
            continue
        try:
            inputs = upstream_inputs(ctx, stage)
        except DataError as exc:
            out.append((stage, f"blocked: {exc}"))
            pending.add(stage)
            continue
        if ctx.force or not is_current(ctx, stage, inputs):
            out.append((stage, "run"))
            pending.add(stage)
        else:
            out.append((stage, "skip"))
    return out


def run_stage(ctx: Context, stage: str) -> str:
    """Run one stage if needed; returns ``"ran"`` or ``"skipped"``."""
    if stage not in _RUNNERS:
        raise ValueError(f"unknown stage {stage!r}")
    inputs = upstream_inputs(ctx, stage)
    write_resolved_config(ctx)
    if not ctx.force and is_current(ctx, stage, inputs):
        log.info("%s: up to date", stage)
        return "skipped"
    log.info("%s: running", stage)
    res = _RUNNERS[stage](ctx)
    _write_manifest(ctx, stage, inputs, res["outputs"], res.get("info"))
    return "ran"


def run_all(ctx: Context, stages=STAGES) -> dict:
    return {s: run_stage(ctx, s) for s in stages}

