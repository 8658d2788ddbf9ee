"""Command-line front end.

Every subcommand accepts ``--config``, ``--seed``, ``--out`` and ``--quiet``.
Exit codes: 0 success, 2 usage or configuration, 3 I/O, 4 numerical
failure, 5 domain precondition.
"""

from __future__ import annotations

import argparse
import json
import shlex
import sys
import time
from pathlib import Path

import numpy as np
from scipy.linalg import LinAlgError

from . import array as arr
from . import config as cf
from . import container as ct
from . import imaging as im
from . import microdoppler as md
from . import scene as sc
from . import vitals as vt
from .dsp import ComplexSeries, find_peaks

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC, EXIT_DOMAIN = 0, 2, 3, 4, 5


class CLIError(Exception):
    def __init__(self, message, code=EXIT_USAGE):
        super().__init__(message)
        self.code = code


def _provenance(argv):
    return "uwbsense " + shlex.join(argv)


def _need(value, flag):
    if value is None:
        raise CLIError(f"{flag} is required")
    return value


def _read(path, *kinds):
    c = ct.read_container(_need(path, "--in"))
    if kinds:
        ct.expect_kind(c, *kinds)
    return c


def _say(args, msg):
    if not args.quiet:
        print(msg)


def truth_path(header: Path) -> Path:
    return header.with_name(header.stem + ".truth.json")


# ---------------------------------------------------------------- simulate

def _simulate_scene(cfg, out, prov):
    scene, grid, pulse = cf.build_scene(cfg)
    cube = sc.synth_echo_cube(scene, grid, pulse, cfg["noise_std"], cfg["seed"])
    ct.write_container(out, ct.cube_to_container(cube, seed=cfg["seed"], provenance=prov))


def _simulate_vitals(cfg, out, prov):
    model = cf.build_displacement_model(cfg)
    d = vt.synth_displacement(model, cfg["fs"], cfg["duration"])
    A = cf._cplx(cfg["A"])
    iq = vt.synth_iq(d, vt.wavenumber(cfg["fc"]), A, cf._cplx(cfg["s_dc"]),
                     vt.noise_std_for_snr(A, cfg["snr_db"]), cfg["seed"])
    ct.write_container(out, ct.iq_to_container(iq, seed=cfg["seed"], provenance=prov))
    beats = vt.heartbeat_times(model.heart, cfg["duration"])
    ct.write_json(truth_path(Path(out)), {
        "beat_times": beats,
        "ibi": np.diff(beats),
        "displacement": {"dt": d.dt, "samples": d.samples},
    })


def _simulate_walker(cfg, out, prov):
    trace = md.simulate_walker(cf.build_walker(cfg), cfg["wavelength"], cfg["t_pri"],
                               cfg["n_pulses"], cfg["noise_std"], cfg["seed"])
    c = ct.Container("iq_trace", trace.samples, [ct._axis("t", trace.t_pri, 0.0, "s")],
                     {"t_pri": trace.t_pri, "wavelength": trace.wavelength},
                     seed=cfg["seed"], provenance=prov)
    ct.write_container(out, c)


def _simulate_array(cfg, out, prov):
    lam = cfg["wavelength"]
    pos = cfg["spacing_wavelengths"] * lam * np.arange(cfg["n_elements"])
    angles = [s["angle_deg"] for s in cfg["sources"]]
    powers = [cfg["noise_std"] ** 2 * 10 ** (s["snr_db"] / 10) for s in cfg["sources"]]
    m = arr.simulate_snapshots(pos, lam, angles, powers, cfg["noise_std"],
                               cfg["n_snapshots"], cfg["seed"], cfg["fs"])
    c = ct.Container("iq_trace", m.snapshots,
                     [ct._axis("channel", 1, 0, ""), ct._axis("t", 1.0 / m.fs, 0.0, "s")],
                     {"fs": m.fs, "wavelength": lam, "positions": pos},
                     seed=cfg["seed"], provenance=prov)
    ct.write_container(out, c)


SIMULATORS = {"scene": _simulate_scene, "vitals": _simulate_vitals,
              "walker": _simulate_walker, "array": _simulate_array}


def cmd_simulate(args, prov):
    cfg = cf.load_config(_need(args.config, "--config"), args.seed)
    out = _need(args.out, "--out")
    SIMULATORS[cfg["kind"]](cfg, out, prov)
    _say(args, f"wrote {cfg['kind']} simulation to {out}")


# ------------------------------------------------------------------- image

def cmd_image(args, prov):
    cube = ct.container_to_cube(_read(args.input, "echo_cube"))
    out = Path(_need(args.out, "--out"))
    t0 = time.perf_counter()
    if args.mode == "fk":
        img = im.fk_migrate(cube)
    elif args.mode == "stack":
        img = im.diffraction_stack(cube)
    else:
        pc, wf = im.seabed(cube, args.threshold)
    wall = time.perf_counter() - t0
    if args.mode == "seabed":
        ct.write_container(out.with_name(out.stem + ".wavefront.json"),
                           ct.wavefront_to_container(wf, seed=args.seed, provenance=prov))
        ct.write_point_cloud_csv(out.with_suffix(".csv"), pc)
        note = f"{len(pc)} points, {pc.n_dropped} dropped"
    else:
        ct.write_container(out, ct.volume_to_container(img, seed=args.seed, provenance=prov))
        x, y, z = img.argmax_position()
        note = f"argmax at ({x:.4g}, {y:.4g}, {z:.4g}) m"
    ct.write_json(out.with_name(out.stem + ".timing.json"), {"wall_seconds": wall, "peak_note": note})
    _say(args, f"{args.mode}: {note} in {wall:.3f} s")


# ------------------------------------------------------------------ vitals

def cmd_vitals(args, prov):
    out = Path(_need(args.out, "--out"))
    if args.stage == "estimate":
        inp = Path(_need(args.input, "--in"))
        iq = ct.container_to_iq(_read(inp, "iq_trace"))
        iq = vt.remove_static_clutter(iq, args.clutter)
        dh = vt.suppress_respiration(vt.demodulate_phase(iq))
        ibi = vt.estimate_ibi(dh)
        ct.write_ibi_csv(out, ibi)
        summary = {"n_beats": len(ibi), "mean_hr": 60.0 / float(np.mean(ibi.intervals))}
        tp = truth_path(inp)
        if tp.exists():
            truth = json.loads(tp.read_text())
            summary["rmse_ms"] = 1e3 * vt.ibi_rmse(ibi, np.asarray(truth["beat_times"]))
        ct.write_json(out.with_name(out.stem + ".summary.json"), summary)
        _say(args, json.dumps(summary))
    else:
        ibi = ct.read_ibi_csv(_need(args.input, "--in"))
        rep = vt.hrv_lf_hf(ibi)
        ct.write_json(out, {"lf_power": rep.lf_power, "hf_power": rep.hf_power,
                            "ratio": rep.ratio if rep.ratio_defined else None,
                            "record_span": rep.record_span})
        _say(args, f"LF/HF = {rep.ratio:.4g}")


# ------------------------------------------------------------ microdoppler

def _slow_time(c):
    if c.data.ndim != 1 or "t_pri" not in c.attrs:
        raise ct.ContainerError("expected a slow-time iq_trace with t_pri and wavelength")
    return md.SlowTimeTrace(c.data.astype(complex), c.attrs["t_pri"], c.attrs["wavelength"])


def cmd_microdoppler(args, prov):
    out = _need(args.out, "--out")
    if args.stage == "sim":
        cfg = cf.load_config(_need(args.config, "--config"), args.seed)
        if cfg["kind"] != "walker":
            raise cf.ConfigError("kind: expected 'walker'")
        _simulate_walker(cfg, out, prov)
    elif args.stage == "spectrogram":
        trace = _slow_time(_read(args.input, "iq_trace"))
        spec = md.velocity_spectrogram(trace, args.window_len, args.hop)
        c = ct.spectrogram_to_container(spec, "m/s", seed=args.seed, provenance=prov)
        c.attrs["max_velocity"] = trace.max_velocity
        ct.write_container(out, c)
    else:
        spec = ct.container_to_spectrogram(_read(args.input, "spectrogram"))
        track, conf = md.track_dominant_velocity(spec, return_confidence=True)
        with open(out, "w") as fh:
            fh.write("time,velocity,confidence\n")
            for t, v, q in zip(track.times, track.samples, conf):
                fh.write(f"{float(t)!r},{float(v)!r},{float(q)!r}\n")
    _say(args, f"wrote {out}")


# --------------------------------------------------------------- beamform

def cmd_beamform(args, prov):
    c = _read(args.input, "iq_trace")
    if c.data.ndim != 2 or "positions" not in c.attrs:
        raise ct.ContainerError("expected a multichannel iq_trace with element positions")
    pos, lam = np.asarray(c.attrs["positions"], float), float(c.attrs["wavelength"])
    m = arr.ChannelMatrix(c.data.astype(complex), c.attrs.get("fs", 1.0), pos)
    out = Path(_need(args.out, "--out"))
    if args.method == "capon":
        grid = np.arange(-90.0, 90.0 + args.step / 2, args.step)
        spec = arr.capon_spectrum(arr.estimate_covariance(m, args.loading), pos, lam, grid)
        peaks = find_peaks(spec, min_prominence=0.0, min_separation=args.step)
        best = sorted(peaks, key=lambda p: -p.value)[: args.n_sources]
        ct.write_json(out, {"angles_deg": grid, "spectrum": spec.samples,
                            "peaks_deg": sorted(p.time for p in best)})
        _say(args, "peaks: " + ", ".join(f"{p.time:.2f}" for p in best))
    elif args.method == "dcmp":
        w = arr.dcmp_weights(arr.estimate_covariance(m, args.loading), args.constraint, pos, lam)
        resp = arr.array_response(w, pos, lam, args.constraint)
        ct.write_json(out, {"weights": w, "constraint_deg": args.constraint, "constraint_response": resp})
        _say(args, f"constraint response {abs(resp):.12f}")
    else:
        y = arr.mrc_combine(m)
        cc = ct.Container("iq_trace", y.samples, [ct._axis("t", y.dt, 0.0, "s")],
                          {"fs": m.fs, "weights": arr.mrc_weights(m)},
                          seed=args.seed, provenance=prov)
        ct.write_container(out, cc)
        _say(args, f"wrote combined trace to {out}")


# ------------------------------------------------------------------ cavity

def cmd_cavity(args, prov):
    out = Path(_need(args.out, "--out"))
    seed = 0 if args.seed is None else args.seed
    if args.stage == "codebook":
        book = sc.gen_port_codebook(args.n_pairs, args.length, args.dt, seed)
        ct.write_container(out, ct.codebook_to_container(book, seed=seed, provenance=prov))
        _say(args, f"max cross-correlation {book.max_cross_correlation:.3f}")
        return
    book = ct.container_to_codebook(_read(_need(args.codebook, "--codebook"), "codebook"))
    if args.stage == "encode":
        if args.input is not None:
            ch = _read(args.input, "iq_trace").data.astype(complex)
        else:
            rng = np.random.default_rng(seed)
            shape = (book.n_pairs, args.taps)
            ch = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)
            truth = ct.Container("iq_trace", ch, [ct._axis("pair", 1, 0, ""), ct._axis("t", book.dt, 0.0, "s")],
                                 {"fs": 1.0 / book.dt}, seed=seed, provenance=prov)
            ct.write_container(out.with_name(out.stem + ".channels.json"), truth)
        mix = sc.cavity_encode([ComplexSeries(r, book.dt) for r in np.atleast_2d(ch)], book)
        s = mix.samples
        if args.noise_std > 0:
            rng = np.random.default_rng(seed + 1)
            s = s + (args.noise_std / np.sqrt(2)) * (rng.standard_normal(s.size) + 1j * rng.standard_normal(s.size))
        ct.write_container(out, ct.Container("iq_trace", s, [ct._axis("t", book.dt, 0.0, "s")],
                                             {"fs": 1.0 / book.dt}, seed=seed, provenance=prov))
    else:
        c = _read(args.input, "iq_trace")
        if c.data.ndim != 1:
            raise ct.ContainerError("expected a single-channel mixture")
        est = im.cavity_decode(ComplexSeries(c.data.astype(complex), book.dt), book)
        data = np.vstack([e.samples for e in est])
        ct.write_container(out, ct.Container("iq_trace", data,
                                             [ct._axis("pair", 1, 0, ""), ct._axis("t", book.dt, 0.0, "s")],
                                             {"fs": 1.0 / book.dt}, seed=seed, provenance=prov))
    _say(args, f"wrote {out}")


# ------------------------------------------------------------------ raster

def cmd_export_raster(args, prov):
    c = _read(args.input)
    if c.kind == "spectrogram":
        # frequency or velocity bins down the rows, frames across
        grid = c.data.T
    elif c.kind == "wavefront":
        grid = c.data
    elif c.kind == "volume":
        if args.slice is None:
            raise CLIError("volume export needs --slice AXIS:INDEX")
        axis, _, idx = args.slice.partition(":")
        if axis not in "xyz" or not axis or not idx.lstrip("-").isdigit():
            raise CLIError("--slice must look like z:12")
        k = int(idx)
        ax = "xyz".index(axis)
        if not 0 <= k < c.data.shape[ax]:
            raise CLIError(f"slice index {k} outside 0..{c.data.shape[ax] - 1}")
        grid = np.take(c.data, k, axis=ax)
    else:
        raise CLIError(f"{c.kind} container is not reducible to 2-D")
    out = Path(_need(args.out, "--out"))
    out.write_bytes(ct.to_pgm(grid, args.db_floor))
    _say(args, f"wrote {out}")


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH")
    common.add_argument("--seed", type=int, metavar="N")
    common.add_argument("--out", metavar="PATH")
    common.add_argument("--quiet", action="store_true")

    p = argparse.ArgumentParser(prog="uwbsense", description="UWB radar sensing pipelines")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="synthesize a dataset from a config")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("image", parents=[common], help="image an echo cube")
    s.add_argument("mode", choices=["fk", "seabed", "stack"])
    s.add_argument("--in", dest="input", metavar="PATH")
    s.add_argument("--threshold", type=float, default=0.3)
    s.set_defaults(func=cmd_image)

    s = sub.add_parser("vitals", parents=[common], help="IBI estimation and HRV")
    s.add_argument("stage", choices=["estimate", "hrv"])
    s.add_argument("--in", dest="input", metavar="PATH")
    s.add_argument("--clutter", choices=["mean", "circle"], default="circle")
    s.set_defaults(func=cmd_vitals)

    s = sub.add_parser("microdoppler", parents=[common], help="walker simulation and velocity tracking")
    s.add_argument("stage", choices=["sim", "spectrogram", "track"])
    s.add_argument("--in", dest="input", metavar="PATH")
    s.add_argument("--window-len", type=int, default=128)
    s.add_argument("--hop", type=int, default=16)
    s.set_defaults(func=cmd_microdoppler)

    s = sub.add_parser("beamform", parents=[common], help="array combining and spatial filtering")
    s.add_argument("method", choices=["capon", "dcmp", "mrc"])
    s.add_argument("--in", dest="input", metavar="PATH")
    s.add_argument("--step", type=float, default=0.5, help="angle grid step, degrees")
    s.add_argument("--n-sources", type=int, default=2)
    s.add_argument("--constraint", type=float, default=0.0, help="look direction, degrees")
    s.add_argument("--loading", type=float, default=1e-3)
    s.set_defaults(func=cmd_beamform)

    s = sub.add_parser("cavity", parents=[common], help="code-multiplexed channel sounding")
    s.add_argument("stage", choices=["codebook", "encode", "decode"])
    s.add_argument("--in", dest="input", metavar="PATH")
    s.add_argument("--codebook", metavar="PATH")
    s.add_argument("--n-pairs", type=int, default=16)
    s.add_argument("--length", type=int, default=4096)
    s.add_argument("--dt", type=float, default=1e-9)
    s.add_argument("--taps", type=int, default=1)
    s.add_argument("--noise-std", type=float, default=0.0)
    s.set_defaults(func=cmd_cavity)

    s = sub.add_parser("export-raster", parents=[common], help="write an 8-bit PGM")
    s.add_argument("--in", dest="input", metavar="PATH")
    s.add_argument("--db-floor", type=float, default=-40.0)
    s.add_argument("--slice", metavar="AXIS:INDEX")
    s.set_defaults(func=cmd_export_raster)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    try:
        args.func(args, _provenance(argv))
    except CLIError as exc:
        code, msg = exc.code, str(exc)
    except (cf.ConfigError, ct.ContainerError) as exc:
        code, msg = EXIT_USAGE, str(exc)
    except vt.RecordTooShortError as exc:
        code, msg = EXIT_DOMAIN, str(exc)
    except OSError as exc:
        code, msg = EXIT_IO, str(exc)
    except (LinAlgError, RuntimeError, vt.NoPeriodicityError, FloatingPointError) as exc:
        code, msg = EXIT_NUMERIC, str(exc)
    except (ValueError, KeyError, TypeError) as exc:
        code, msg = EXIT_USAGE, f"invalid parameters: {exc}"
    else:
        return EXIT_OK
    print(f"uwbsense: error: {msg}", file=sys.stderr)
    return code
