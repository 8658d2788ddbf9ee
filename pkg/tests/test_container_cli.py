import json

import numpy as np
import pytest

from uwbsense import container as ct
from uwbsense.cli import main
from uwbsense.config import ConfigError, load_config
from uwbsense.dsp import Spectrogram
from uwbsense.imaging import PointCloud, VolumeGrid, VolumeImage
from uwbsense.scene import ApertureGrid, EchoCube, PulseSpec, QuasiWavefront, gen_port_codebook
from uwbsense.vitals import IBISeries, IQTrace

GRID = ApertureGrid.centered(4, 3, 2.5e-3)
PULSE = PulseSpec(27e9, 6e9, 50e-12, 5)


def sample_containers():
    rng = np.random.default_rng(0)
    cube = EchoCube(rng.standard_normal((4, 3, 5)) + 1j * rng.standard_normal((4, 3, 5)), GRID, PULSE)
    mask = rng.random((4, 3)) > 0.3
    wf = QuasiWavefront(0.2 + rng.random((4, 3)), mask, GRID)
    vol = VolumeImage(rng.random((2, 3, 4)), VolumeGrid(2, 3, 4, 1e-3, 2e-3, 3e-3, -1e-3, 0.0, 0.0))
    spec = Spectrogram(rng.random((6, 8)), 0.1, 0.25, -1.0, 0.0)
    iq = IQTrace(rng.standard_normal(32) + 1j, 100.0, 550.0, 1 + 0.5j, 2.0)
    book = gen_port_codebook(2, 128, 1e-9)
    return [ct.cube_to_container(cube, seed=1, provenance="t"), ct.wavefront_to_container(wf),
            ct.volume_to_container(vol), ct.spectrogram_to_container(spec), ct.iq_to_container(iq),
            ct.codebook_to_container(book)]


@pytest.mark.parametrize("idx", range(6))
def test_round_trip_is_bit_exact(tmp_path, idx):
    c = sample_containers()[idx]
    p1 = ct.write_container(tmp_path / "a.json", c)
    back = ct.read_container(p1)
    p2 = ct.write_container(tmp_path / "b.json", back)
    assert (tmp_path / "a.bin").read_bytes() == (tmp_path / "b.bin").read_bytes()
    h1 = json.loads(p1.read_text())
    h2 = json.loads(p2.read_text())
    h1.pop("payload_file"), h2.pop("payload_file")
    assert h1 == h2
    assert h1["format_version"] == 1 and h1["dims"] == list(c.data.shape)
    assert (tmp_path / "a.bin").stat().st_size == np.prod(h1["dims"]) * (8 if h1["dtype"] == "c64le" else 4)


def test_payload_is_little_endian_interleaved(tmp_path):
    c = ct.Container("iq_trace", np.array([1 + 2j, -3 + 0.5j]), [ct._axis("t", 1, 0, "s")])
    ct.write_container(tmp_path / "x.json", c)
    raw = np.frombuffer((tmp_path / "x.bin").read_bytes(), "<f4")
    np.testing.assert_array_equal(raw, [1, 2, -3, 0.5])


def test_converters_restore_objects(tmp_path):
    cs = sample_containers()
    wf = ct.container_to_wavefront(ct.read_container(ct.write_container(tmp_path / "w.json", cs[1])))
    assert wf.mask.sum() == np.isfinite(cs[1].data).sum()
    cube = ct.container_to_cube(ct.read_container(ct.write_container(tmp_path / "c.json", cs[0])))
    assert cube.pulse.fc == PULSE.fc and cube.aperture == GRID


def test_reader_rejects_bad_headers(tmp_path):
    c = sample_containers()[3]
    p = ct.write_container(tmp_path / "s.json", c)
    h = json.loads(p.read_text())
    for key, val, msg in [("format_version", 2, "format_version"), ("kind", "movie", "kind"),
                          ("dims", [7, 8], "bytes")]:
        bad = dict(h, **{key: val})
        p.write_text(json.dumps(bad))
        with pytest.raises(ct.ContainerError, match=msg):
            ct.read_container(p)


def test_csv_tables_round_trip(tmp_path):
    pc = PointCloud(np.array([[0.1, 0.2, 0.3], [0.0, -0.1, 0.5]]), np.array([0.5, 1.0]))
    ct.write_point_cloud_csv(tmp_path / "p.csv", pc)
    back = ct.read_point_cloud_csv(tmp_path / "p.csv")
    np.testing.assert_array_equal(back.points, pc.points)
    assert (tmp_path / "p.csv").read_text().splitlines()[0] == "x,y,z,confidence"
    ibi = IBISeries(np.array([0.3, 1.25, 2.2, 3.3]), np.array([0.9, 0.8, 0.7, 1.0]))
    ct.write_ibi_csv(tmp_path / "i.csv", ibi)
    back = ct.read_ibi_csv(tmp_path / "i.csv")
    np.testing.assert_allclose(back.beat_times, ibi.beat_times, atol=1e-15)


# ---------------------------------------------------------------- raster

def test_pgm_zero_and_hot_cell():
    assert not ct.read_pgm(ct.to_pgm(np.zeros((3, 4)))).any()
    g = np.zeros((3, 4))
    g[2, 1] = 5.0
    img = ct.read_pgm(ct.to_pgm(g))
    assert img.shape == (3, 4) and img[2, 1] == 255 and img.sum() == 255


def test_pgm_db_mapping():
    img = ct.read_pgm(ct.to_pgm(np.array([[1.0, 0.1, 1e-3]]), db_floor=-40))
    assert list(img[0]) == [255, 128, 0]


# ---------------------------------------------------------------- config

def test_config_unknown_key_names_path(tmp_path):
    with pytest.raises(ConfigError, match="model.heart.bogus"):
        load_config({"kind": "vitals", "model": {"heart": {"bogus": 1}}})
    with pytest.raises(ConfigError, match=r"points\[0\].position"):
        load_config({"kind": "scene", "points": [{"reflectivity": 1}]})
    with pytest.raises(ConfigError, match="kind"):
        load_config({"kind": "nope"})


# ---------------------------------------------------------------- CLI

def run(*argv):
    return main([str(a) for a in argv] + ["--quiet"])


def write(tmp_path, name, obj):
    p = tmp_path / name
    p.write_text(json.dumps(obj))
    return p


def test_simulate_scene_is_reproducible(tmp_path):
    cfg = write(tmp_path, "s.json", {"kind": "scene", "aperture": {"nx": 8, "ny": 6},
                                     "pulse": {"nt": 128}, "noise_std": 0.1,
                                     "points": [{"position": [0, 0, 0.2]}]})
    assert run("simulate", "--config", cfg, "--seed", 3, "--out", tmp_path / "a.json") == 0
    assert run("simulate", "--config", cfg, "--seed", 3, "--out", tmp_path / "b.json") == 0
    assert (tmp_path / "a.bin").read_bytes() == (tmp_path / "b.bin").read_bytes()
    h = json.loads((tmp_path / "a.json").read_text())
    assert h["kind"] == "echo_cube" and h["dims"] == [8, 6, 128] and h["seed"] == 3


def test_exit_codes(tmp_path):
    bad = write(tmp_path, "bad.json", {"kind": "scene", "bogus": 1})
    assert run("simulate", "--config", bad, "--out", tmp_path / "x.json") == 2
    assert run("simulate", "--config", tmp_path / "missing.json", "--out", tmp_path / "x.json") == 3
    cfg = write(tmp_path, "w.json", {"kind": "walker", "n_pulses": 256})
    assert run("simulate", "--config", cfg, "--out", tmp_path / "w.json") == 0
    assert run("image", "fk", "--in", tmp_path / "w.json", "--out", tmp_path / "v.json") == 2
    assert run("export-raster", "--in", tmp_path / "w.json", "--out", tmp_path / "w.pgm") == 2
    with pytest.raises(SystemExit) as exc:
        main(["image", "bogus"])
    assert exc.value.code == 2


def test_image_fk_and_seabed(tmp_path):
    cfg = write(tmp_path, "p.json", {"kind": "scene", "aperture": {"nx": 32, "ny": 32},
                                     "pulse": {"nt": 128}, "points": [{"position": [0.005, 0.0, 0.15]}]})
    run("simulate", "--config", cfg, "--out", tmp_path / "cube.json")
    assert run("image", "fk", "--in", tmp_path / "cube.json", "--out", tmp_path / "fk.json") == 0
    vol = ct.container_to_volume(ct.read_container(tmp_path / "fk.json"))
    assert np.all(np.abs(vol.argmax_position() - [0.005, 0.0, 0.15]) <= [2.5e-3, 2.5e-3, vol.grid.dz])
    timing = json.loads((tmp_path / "fk.timing.json").read_text())
    assert set(timing) == {"wall_seconds", "peak_note"}
    assert run("export-raster", "--in", tmp_path / "fk.json", "--out", tmp_path / "z.pgm", "--slice", "z:40") == 0
    assert run("export-raster", "--in", tmp_path / "fk.json", "--out", tmp_path / "z.pgm") == 2

    sph = write(tmp_path, "sph.json", {"kind": "scene", "aperture": {"nx": 32, "ny": 32}, "pulse": {"nt": 128},
                                       "surfaces": [{"type": "sphere", "center": [0, 0, 0.25], "radius": 0.04}]})
    run("simulate", "--config", sph, "--out", tmp_path / "sc.json")
    assert run("image", "seabed", "--in", tmp_path / "sc.json", "--out", tmp_path / "sb.json") == 0
    pc = ct.read_point_cloud_csv(tmp_path / "sb.csv")
    err = np.abs(np.linalg.norm(pc.points - [0, 0, 0.25], axis=1) - 0.04)
    assert np.median(err) < 2.5e-3
    assert ct.read_container(tmp_path / "sb.wavefront.json").kind == "wavefront"


def test_vitals_pipeline(tmp_path):
    cfg = write(tmp_path, "v.json", {"kind": "vitals"})
    assert run("simulate", "--config", cfg, "--out", tmp_path / "iq.json", "--seed", 0) == 0
    truth = json.loads((tmp_path / "iq.truth.json").read_text())
    assert {"beat_times", "ibi", "displacement"} <= set(truth)
    assert run("vitals", "estimate", "--in", tmp_path / "iq.json", "--out", tmp_path / "ibi.csv") == 0
    summary = json.loads((tmp_path / "ibi.summary.json").read_text())
    assert summary["rmse_ms"] < 20 and 50 < summary["mean_hr"] < 70
    assert run("vitals", "hrv", "--in", tmp_path / "ibi.csv", "--out", tmp_path / "hrv.json") == 0
    assert json.loads((tmp_path / "hrv.json").read_text())["ratio"] > 5
    # without the sidecar the summary has no error figure
    (tmp_path / "iq.truth.json").unlink()
    run("vitals", "estimate", "--in", tmp_path / "iq.json", "--out", tmp_path / "ibi2.csv")
    assert "rmse_ms" not in json.loads((tmp_path / "ibi2.summary.json").read_text())


def test_short_record_hrv_exit_5(tmp_path):
    cfg = write(tmp_path, "v.json", {"kind": "vitals", "duration": 20.0})
    run("simulate", "--config", cfg, "--out", tmp_path / "iq.json")
    assert run("vitals", "estimate", "--in", tmp_path / "iq.json", "--out", tmp_path / "ibi.csv") == 0
    assert run("vitals", "hrv", "--in", tmp_path / "ibi.csv", "--out", tmp_path / "h.json") == 5


def test_microdoppler_pipeline(tmp_path):
    cfg = write(tmp_path, "w.json", {"kind": "walker", "n_pulses": 4096, "torso_velocity": 1.5})
    assert run("microdoppler", "sim", "--config", cfg, "--out", tmp_path / "tr.json") == 0
    assert run("microdoppler", "spectrogram", "--in", tmp_path / "tr.json", "--out", tmp_path / "sp.json") == 0
    assert run("microdoppler", "track", "--in", tmp_path / "sp.json", "--out", tmp_path / "t.csv") == 0
    track = np.loadtxt(tmp_path / "t.csv", delimiter=",", skiprows=1)
    spec = ct.read_container(tmp_path / "sp.json")
    assert np.all(np.abs(track[:, 1] - 1.5) <= spec.axes[1]["step"] / 2)
    assert run("export-raster", "--in", tmp_path / "sp.json", "--out", tmp_path / "sp.pgm") == 0
    img = ct.read_pgm((tmp_path / "sp.pgm").read_bytes())
    # a constant tone lights one row
    assert np.all(img.argmax(axis=0) == img.argmax(axis=0)[0])


def test_beamform_commands(tmp_path):
    cfg = write(tmp_path, "a.json", {"kind": "array"})
    assert run("simulate", "--config", cfg, "--out", tmp_path / "x.json") == 0
    assert run("beamform", "capon", "--in", tmp_path / "x.json", "--out", tmp_path / "c.json") == 0
    peaks = json.loads((tmp_path / "c.json").read_text())["peaks_deg"]
    assert peaks == pytest.approx([-20.0, 20.0], abs=0.5)
    assert run("beamform", "dcmp", "--in", tmp_path / "x.json", "--out", tmp_path / "d.json", "--constraint", "20") == 0
    r = json.loads((tmp_path / "d.json").read_text())["constraint_response"]
    assert abs(complex(*r) - 1) < 1e-12
    assert run("beamform", "mrc", "--in", tmp_path / "x.json", "--out", tmp_path / "m.json") == 0


def test_cavity_commands(tmp_path):
    assert run("cavity", "codebook", "--n-pairs", 4, "--length", 1024, "--out", tmp_path / "cb.json") == 0
    assert run("cavity", "encode", "--codebook", tmp_path / "cb.json", "--out", tmp_path / "mix.json", "--seed", 2) == 0
    assert run("cavity", "decode", "--codebook", tmp_path / "cb.json", "--in", tmp_path / "mix.json",
               "--out", tmp_path / "dec.json") == 0
    est = ct.read_container(tmp_path / "dec.json").data
    truth = ct.read_container(tmp_path / "mix.channels.json").data
    assert est.shape == truth.shape
    assert np.sum(abs(est - truth) ** 2) / np.sum(abs(truth) ** 2) < 0.1
