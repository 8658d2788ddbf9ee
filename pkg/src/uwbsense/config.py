"""Run configuration: JSON documents merged over per-kind defaults.

Unknown keys are rejected with the offending key path; every physical
quantity is in SI units (Hz, s, m).
"""

from __future__ import annotations

import copy
import json
from pathlib import Path

import numpy as np

from . import scene as sc
from . import vitals as vt
from .microdoppler import Limb, WalkerModel


class ConfigError(ValueError):
    pass


DEFAULTS = {
    "scene": {
        "kind": "scene",
        "seed": 0,
        "aperture": {"nx": 64, "ny": 64, "dx": 2.5e-3, "dy": 2.5e-3, "x0": None, "y0": None},
        "pulse": {"fc": 27e9, "bandwidth": 6e9, "dt": 50e-12, "nt": 256, "envelope": "raised_cosine"},
        "noise_std": 0.0,
        "surfaces": [],
        "points": [],
    },
    "vitals": {
        "kind": "vitals",
        "seed": 0,
        "fs": 100.0,
        "duration": 120.0,
        "fc": 26.4e9,
        "A": [1.0, 0.0],
        "s_dc": [5.0, 0.0],
        "snr_db": 30.0,
        "model": {
            "d0": 0.6,
            "drift": {"knot_times": [], "values": []},
            "resp": {"period": 5.0, "amplitude": 4e-3, "inhale_fraction": 0.45},
            "heart": {
                "ibi_sequence": None,
                "ibi_mean": 1.0,
                "ibi_depth": 0.1,
                "ibi_mod_freq": 0.1,
                "amplitude": 0.15e-3,
                "systole": 0.06,
                "diastole": 0.25,
                "diastole_ratio": 0.5,
                "first_beat": 0.3,
            },
        },
    },
    "walker": {
        "kind": "walker",
        "seed": 0,
        "wavelength": 299_792_458.0 / 24e9,
        "t_pri": 1e-4,
        "n_pulses": 20000,
        "noise_std": 0.0,
        "torso_velocity": 1.0,
        "torso_start_range": 5.0,
        "torso_reflectivity": 1.0,
        "limbs": [],
    },
    "array": {
        "kind": "array",
        "seed": 0,
        "n_elements": 8,
        "spacing_wavelengths": 0.5,
        "wavelength": 299_792_458.0 / 10e9,
        "n_snapshots": 1000,
        "fs": 100.0,
        "noise_std": 1.0,
        "sources": [{"angle_deg": -20.0, "snr_db": 20.0}, {"angle_deg": 20.0, "snr_db": 20.0}],
    },
}

ITEM_SCHEMAS = {
    ("scene", "surfaces"): {
        "plane": {"type": None, "z0": None, "reflectivity": 1.0},
        "sphere": {"type": None, "center": None, "radius": None, "reflectivity": 1.0},
        "ellipsoid": {"type": None, "center": None, "semi_axes": None, "reflectivity": 1.0},
        "height_map": {"type": None, "xs": None, "ys": None, "z": None, "reflectivity": 1.0},
    },
    ("scene", "points"): {None: {"position": None, "reflectivity": 1.0}},
    ("walker", "limbs"): {None: {"mean_offset": None, "swing_amplitude": None, "swing_period": None,
                                 "phase": 0.0, "reflectivity": 0.3}},
    ("array", "sources"): {None: {"angle_deg": None, "snr_db": 20.0}},
}

def _merge(defaults, given, path):
    if not isinstance(given, dict):
        raise ConfigError(f"{path or 'config'}: expected an object")
    out = copy.deepcopy(defaults)
    for key, val in given.items():
        where = f"{path}.{key}" if path else key
        if key not in defaults:
            raise ConfigError(f"unknown key {where!r}")
        if isinstance(defaults[key], dict):
            out[key] = _merge(defaults[key], val, where)
        else:
            out[key] = val
    return out


def _merge_items(kind, key, items):
    schemas = ITEM_SCHEMAS[(kind, key)]
    out = []
    if not isinstance(items, list):
        raise ConfigError(f"{key}: expected a list")
    for i, item in enumerate(items):
        where = f"{key}[{i}]"
        if not isinstance(item, dict):
            raise ConfigError(f"{where}: expected an object")
        typ = item.get("type") if None not in schemas else None
        if typ not in schemas:
            raise ConfigError(f"{where}.type: expected one of {sorted(k for k in schemas if k)}")
        merged = _merge(schemas[typ], item, where)
        missing = [k for k, v in merged.items() if v is None and k != "type"]
        if missing:
            raise ConfigError(f"{where}.{missing[0]}: required")
        out.append(merged)
    return out


def load_config(source, seed: int | None = None) -> dict:
    """Parse a config (file path or dict) and fill in defaults."""
    if isinstance(source, dict):
        raw = source
    else:
        p = Path(source)
        try:
            raw = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    kind = raw.get("kind")
    if kind not in DEFAULTS:
        raise ConfigError(f"kind: expected one of {sorted(DEFAULTS)}, got {kind!r}")
    cfg = _merge(DEFAULTS[kind], raw, "")
    for (k, key) in ITEM_SCHEMAS:
        if k == kind:
            cfg[key] = _merge_items(kind, key, cfg[key])
    if seed is not None:
        cfg["seed"] = int(seed)
    return cfg


def _cplx(v) -> complex:
    if isinstance(v, (list, tuple)):
        if len(v) != 2:
            raise ConfigError("complex values are [real, imag]")
        return complex(float(v[0]), float(v[1]))
    return complex(v)


# ----------------------------------------------------------- builders

def build_scene(cfg):
    a = cfg["aperture"]
    if a["x0"] is None or a["y0"] is None:
        grid = sc.ApertureGrid.centered(a["nx"], a["ny"], a["dx"], a["dy"])
        if a["x0"] is not None or a["y0"] is not None:
            grid = sc.ApertureGrid(a["nx"], a["ny"], a["dx"], a["dy"],
                                   grid.x0 if a["x0"] is None else a["x0"],
                                   grid.y0 if a["y0"] is None else a["y0"])
    else:
        grid = sc.ApertureGrid(a["nx"], a["ny"], a["dx"], a["dy"], a["x0"], a["y0"])
    pulse = sc.PulseSpec(**cfg["pulse"])
    surfaces = []
    for s in cfg["surfaces"]:
        r = _cplx(s["reflectivity"])
        if s["type"] == "plane":
            surfaces.append(sc.Plane(float(s["z0"]), r))
        elif s["type"] == "sphere":
            surfaces.append(sc.Sphere(tuple(s["center"]), float(s["radius"]), r))
        elif s["type"] == "ellipsoid":
            surfaces.append(sc.Ellipsoid(tuple(s["center"]), tuple(s["semi_axes"]), r))
        else:
            surfaces.append(sc.HeightMap(np.asarray(s["xs"]), np.asarray(s["ys"]), np.asarray(s["z"]), r))
    points = [sc.PointScatterer(tuple(p["position"]), _cplx(p["reflectivity"])) for p in cfg["points"]]
    return sc.Scene(surfaces, points), grid, pulse


def modulated_ibis(duration: float, mean: float, depth: float, mod_freq: float,
                   first_beat: float) -> list[float]:
    """IBIs ``mean * (1 + depth*sin(2*pi*mod_freq*t))`` evaluated at each beat onset."""
    t, out = first_beat, []
    while t < duration + 3 * mean:
        ibi = mean * (1 + depth * np.sin(2 * np.pi * mod_freq * t))
        out.append(float(ibi))
        t += ibi
    return out


def build_displacement_model(cfg) -> vt.DisplacementModel:
    m = cfg["model"]
    h = dict(m["heart"])
    seq = h.pop("ibi_sequence")
    mean, depth, fmod = h.pop("ibi_mean"), h.pop("ibi_depth"), h.pop("ibi_mod_freq")
    if seq is None:
        seq = modulated_ibis(cfg["duration"], mean, depth, fmod, h["first_beat"])
    heart = vt.Heartbeat(ibi_sequence=tuple(seq), **h)
    return vt.DisplacementModel(
        d0=m["d0"],
        drift=vt.Drift(tuple(m["drift"]["knot_times"]), tuple(m["drift"]["values"])),
        resp=vt.Respiration(**m["resp"]),
        heart=heart,
    )


def build_walker(cfg) -> WalkerModel:
    limbs = [Limb(l["mean_offset"], l["swing_amplitude"], l["swing_period"], l["phase"],
                  _cplx(l["reflectivity"])) for l in cfg["limbs"]]
    return WalkerModel(cfg["torso_velocity"], cfg["torso_start_range"], limbs,
                       _cplx(cfg["torso_reflectivity"]))
