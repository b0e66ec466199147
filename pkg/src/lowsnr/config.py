"""Run configuration: one YAML document with a section per stage.

Everything is validated up front so that no stage starts on a bad recipe.
"""
from __future__ import annotations

import copy
import datetime as dt
import hashlib
import json
import math
import os
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import yaml

from .analysis import BinningConfig
from .network import IfgNetwork, NetworkError
from .noise import NOISE_MODES, NeszModel
from .scene import CoherenceModel, make_sigma0_field, make_velocity_field
from .workflow import ChainSettings

OUTPUT_ENV = "LOWSNR_OUT"

DEFAULTS = {
    "name": "run",
    "seed": 1,
    "output_dir": None,
    "scene": {
        "rows": 64,
        "cols": 64,
        "wavelength_m": 0.24,
        "incidence_deg": 40.0,
        "pixel_spacing_m": [7.0, 7.0],
        "velocity": {"kind": "linear-ramp", "v0": 0.0, "v1": 0.02},
        "sigma0": {"kind": "gradient", "start_db": -25.0, "stop_db": -5.0},
        "coherence": {"rho0": 0.95, "rho_inf": 0.3, "tau_days": 365.0},
    },
    "dates": ["2020-01-01", "2020-04-01", "2020-07-01", "2020-10-01", "2021-01-01"],
    "noise": {
        "original_nesz_db": -50.0,
        "target_nesz_db": -15.0,
        "mode": "total-power",
        "nesz_table": None,
    },
    "network": {"kind": "all-pairs"},
    "processing": {
        "looks": [8, 8],
        "coherence_window": 5,
        "unwrap_threshold": 0.3,
        "bridge": True,
        "bridge_max_distance": 5,
        "closure": True,
        "tcoh_threshold": 0.5,
        "weighted": False,
    },
    "analysis": {
        "coherence_edges": [0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0],
        "snr_width_db": 0.5,
        "min_count": 30,
        "statistic": "std",
        "los_target_m": 0.002,
        "velocity_target_m_per_yr": 0.001,
        "plots": True,
    },
}

# sections whose values the original and degraded branches must share
SHARED_SECTIONS = ("seed", "scene", "dates", "network", "processing")


# recipe mappings whose keys depend on their ``kind``; replaced, not merged
_WHOLE = ("velocity", "sigma0", "network")
_NETWORK_KEYS = {"all-pairs": {"kind"}, "sequential": {"kind", "max_step"}, "explicit": {"kind", "pairs"}}


class ConfigError(ValueError):
    pass


def _merge(base, override, path=""):
    out = copy.deepcopy(base)
    for key, val in (override or {}).items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(base[key], dict) and key not in _WHOLE:
            if not isinstance(val, dict):
                raise ConfigError(f"{where!r} must be a mapping")
            out[key] = _merge(base[key], val, where + ".")
        else:
            out[key] = copy.deepcopy(val)
    return out


def _parse_date(x) -> dt.date:
    if isinstance(x, dt.datetime):
        return x.date()
    if isinstance(x, dt.date):
        return x
    try:
        return dt.date.fromisoformat(str(x))
    except ValueError as exc:
        raise ConfigError(f"bad date {x!r}; use YYYY-MM-DD") from exc


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)


def digest(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class RunConfig:
    raw: dict  # fully resolved document
    dates: tuple  # dt.date per acquisition
    days: tuple  # float days since the first acquisition

    # --- construction -----------------------------------------------------
    @classmethod
    def from_dict(cls, doc: dict | None) -> "RunConfig":
        raw = _merge(DEFAULTS, doc or {})
        dates = tuple(_parse_date(d) for d in raw["dates"])
        raw["dates"] = [d.isoformat() for d in dates]
        cfg = cls(raw, dates, tuple(float((d - dates[0]).days) for d in dates))
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        try:
            doc = yaml.safe_load(p.read_text())
        except yaml.YAMLError as exc:
            raise ConfigError(f"{p}: not valid YAML ({exc})") from exc
        if doc is not None and not isinstance(doc, dict):
            raise ConfigError(f"{p}: top level must be a mapping")
        doc = dict(doc or {})
        doc.setdefault("name", p.stem)
        return cls.from_dict(doc)

    @classmethod
    def preset(cls, name: str) -> "RunConfig":
        try:
            text = resources.files("lowsnr").joinpath("presets", f"{name}.yaml").read_text()
        except FileNotFoundError as exc:
            raise ConfigError(f"unknown preset {name!r}; available: {', '.join(list_presets())}") from exc
        doc = yaml.safe_load(text)
        doc.setdefault("name", name)
        return cls.from_dict(doc)

    # --- validation -------------------------------------------------------
    def validate(self) -> None:
        r = self.raw
        sc = r["scene"]
        try:
            rows, cols = int(sc["rows"]), int(sc["cols"])
        except (TypeError, ValueError) as exc:
            raise ConfigError("scene.rows and scene.cols must be integers") from exc
        if rows < 2 or cols < 2:
            raise ConfigError("scene must be at least 2x2")
        if not sc["wavelength_m"] > 0:
            raise ConfigError("scene.wavelength_m must be positive")
        if not isinstance(r["seed"], int) or r["seed"] < 0:
            raise ConfigError("seed must be a non-negative integer")
        if len(self.dates) < 2:
            raise ConfigError("need at least two dates")
        if any(b <= a for a, b in zip(self.dates, self.dates[1:])):
            raise ConfigError("dates must be strictly increasing")
        try:
            self.velocity_field()
            self.sigma0_field()
            self.coherence_model()
            self.incidence()
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"invalid scene recipe: {exc}") from exc
        nz = r["noise"]
        if nz["mode"] not in NOISE_MODES:
            raise ConfigError(f"noise.mode must be one of {NOISE_MODES}")
        if not math.isfinite(float(nz["target_nesz_db"])):
            raise ConfigError("noise.target_nesz_db must be finite")
        try:
            self.nesz_model()
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"invalid noise.nesz_table: {exc}") from exc
        target = float(nz["target_nesz_db"])
        orig = [float(nz["original_nesz_db"])] + [float(n) for _, n in (nz["nesz_table"] or [])]
        if max(orig) > target:
            raise ConfigError(f"noise.target_nesz_db ({target} dB) is below the original NESZ ({max(orig)} dB)")
        try:
            net = self.network()
        except (NetworkError, KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid network: {exc}") from exc
        if not net.is_connected():
            raise ConfigError(f"invalid network: disconnected into date groups {net.components()}")
        pr = r["processing"]
        looks = pr["looks"]
        if len(looks) != 2 or any(int(x) < 1 for x in looks):
            raise ConfigError("processing.looks must be two positive integers")
        if int(looks[0]) > rows or int(looks[1]) > cols:
            raise ConfigError(f"looks {looks} exceed the {rows}x{cols} scene")
        if not 0.0 <= float(pr["unwrap_threshold"]) <= 1.0:
            raise ConfigError("processing.unwrap_threshold must lie in [0, 1]")
        t = pr["tcoh_threshold"]
        if t is not None and not 0.0 <= float(t) <= 1.0:
            raise ConfigError("processing.tcoh_threshold must lie in [0, 1] or be null")
        if int(pr["coherence_window"]) < 2:
            raise ConfigError("processing.coherence_window must be at least 2")
        try:
            self.binning()
        except ValueError as exc:
            raise ConfigError(f"invalid analysis section: {exc}") from exc
        an = r["analysis"]
        if not (an["los_target_m"] > 0 and an["velocity_target_m_per_yr"] > 0):
            raise ConfigError("analysis targets must be positive")

    # --- typed views ------------------------------------------------------
    @property
    def name(self) -> str:
        return str(self.raw["name"])

    @property
    def seed(self) -> int:
        return int(self.raw["seed"])

    @property
    def shape(self) -> tuple[int, int]:
        return int(self.raw["scene"]["rows"]), int(self.raw["scene"]["cols"])

    @property
    def wavelength_m(self) -> float:
        return float(self.raw["scene"]["wavelength_m"])

    def velocity_field(self):
        spec = dict(self.raw["scene"]["velocity"])
        return make_velocity_field(spec.pop("kind"), spec, *self.shape)

    def sigma0_field(self):
        spec = dict(self.raw["scene"]["sigma0"])
        return make_sigma0_field(spec.pop("kind"), spec, *self.shape)

    def coherence_model(self) -> CoherenceModel:
        c = self.raw["scene"]["coherence"]
        return CoherenceModel(float(c["rho0"]), float(c["rho_inf"]), float(c["tau_days"]))

    def incidence(self):
        """Per-column incidence: a scalar, or ``[near, far]`` linearly across range."""
        import numpy as np

        inc = self.raw["scene"]["incidence_deg"]
        if isinstance(inc, (list, tuple)):
            if len(inc) != 2:
                raise ValueError("incidence_deg must be a number or [near, far]")
            return np.linspace(float(inc[0]), float(inc[1]), self.shape[1])
        return float(inc)

    def nesz_model(self) -> NeszModel:
        """NESZ of the original acquisitions (constant or incidence table)."""
        nz = self.raw["noise"]
        if nz["nesz_table"]:
            return NeszModel.from_knots(nz["nesz_table"], constant_db=float(nz["original_nesz_db"]))
        return NeszModel.constant(float(nz["original_nesz_db"]))

    @property
    def target_nesz_db(self) -> float:
        return float(self.raw["noise"]["target_nesz_db"])

    def network(self) -> IfgNetwork:
        spec = self.raw["network"]
        kind = spec.get("kind", "all-pairs")
        extra = set(spec) - _NETWORK_KEYS.get(kind, set(spec))
        if extra:
            raise ValueError(f"keys {sorted(extra)} do not apply to a {kind!r} network")
        if kind == "all-pairs":
            return IfgNetwork.all_pairs(self.days)
        if kind == "sequential":
            return IfgNetwork.sequential(self.days, int(spec.get("max_step", 1)))
        if kind == "explicit":
            return IfgNetwork(tuple(tuple(p) for p in spec["pairs"]), self.days)
        raise ValueError(f"unknown network kind {kind!r}")

    def chain_settings(self) -> ChainSettings:
        p = self.raw["processing"]
        t = p["tcoh_threshold"]
        return ChainSettings(looks=(int(p["looks"][0]), int(p["looks"][1])),
                             coherence_window=int(p["coherence_window"]),
                             unwrap_threshold=float(p["unwrap_threshold"]), bridge=bool(p["bridge"]),
                             bridge_max_distance=int(p["bridge_max_distance"]), closure=bool(p["closure"]),
                             tcoh_threshold=None if t is None else float(t), weighted=bool(p["weighted"]))

    def binning(self) -> BinningConfig:
        a = self.raw["analysis"]
        return BinningConfig(tuple(float(x) for x in a["coherence_edges"]), float(a["snr_width_db"]),
                             int(a["min_count"]), str(a["statistic"]))

    # --- hashing and output -----------------------------------------------
    def section_digest(self, *keys) -> str:
        return digest({k: self.raw[k] for k in keys})

    def branch_digest(self) -> str:
        """Hash of everything the two branches must share (all but noise and analysis)."""
        return self.section_digest(*SHARED_SECTIONS)

    def resolve_output(self, override=None) -> Path:
        if override:
            return Path(override)
        if self.raw["output_dir"]:
            return Path(self.raw["output_dir"])
        root = os.environ.get(OUTPUT_ENV, "lowsnr-runs")
        return Path(root) / self.name

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.raw, sort_keys=True, default_flow_style=None)


def list_presets() -> list[str]:
    base = resources.files("lowsnr").joinpath("presets")
    return sorted(p.name[:-5] for p in base.iterdir() if p.name.endswith(".yaml"))
