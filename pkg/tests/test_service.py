"""Service handlers, run manifests, the CLI front end, and the HTTP app."""

import json

import numpy as np
import pytest
import yaml

import cassim.cli as cli
import cassim.containers as ct
import cassim.render as rd
import cassim.scenes as sc
import cassim.service as sv


def _map_request(tmp_path, **kw):
    base = dict(system="SP", height=8, width=8, bands=3,
                output_dir=str(tmp_path))
    base.update(kw)
    return sv.MapRequest(**base)


def _small_render(tmp_path, **kw):
    base = dict(system="SP", scene="slits", scene_size=8, bands=3,
                rays_per_pixel=4, oversampling=1, rng_seed=3,
                output_dir=str(tmp_path))
    base.update(kw)
    return sv.RenderRequest(**base)


def test_map_handler_outputs(tmp_path):
    resp = sv.handle_map(_map_request(tmp_path))
    assert resp.command == "map"
    assert resp.ok
    files = {f.rsplit("/", 1)[-1] for f in resp.files}
    assert files == {"mapping.hsc", "manifest.json"}
    kind, data, wl, _ = ct.read_container(f"{tmp_path}/map/mapping.hsc")
    assert kind == ct.KIND_MAPPING
    assert data.shape == (8, 8, 3, 2)
    assert wl.tolist() == [450.0, 550.0, 650.0]
    assert resp.summary["center_x_spread_px"] > 10


def test_manifest_contents_and_replay(tmp_path):
    resp = sv.handle_map(_map_request(tmp_path / "a"))
    man_path = f"{tmp_path}/a/map/manifest.json"
    with open(man_path) as fh:
        man = json.load(fh)
    assert man["command"] == "map"
    assert man["request"]["system"] == "SP"
    assert man["tool_version"]
    assert man["timings"]["wall_s"] >= 0
    assert sorted(man["files"]) == man["files"]

    replay = sv.run_from_manifest(man_path, output_dir=str(tmp_path / "b"))
    orig = open(f"{tmp_path}/a/map/mapping.hsc", "rb").read()
    again = open(f"{tmp_path}/b/map/mapping.hsc", "rb").read()
    assert orig == again


def test_outputs_are_write_once(tmp_path):
    sv.handle_map(_map_request(tmp_path))
    with pytest.raises(sv.ConfigError, match="write-once"):
        sv.handle_map(_map_request(tmp_path))


def test_render_handler_flux_and_mask(tmp_path):
    resp = sv.handle_render(_small_render(tmp_path))
    out = f"{tmp_path}/render"
    _, acq, _, _ = ct.read_container(f"{out}/acquisition.hsc",
                                     ct.KIND_ACQUISITION)
    assert acq.shape == (8, 8 + 83)
    mask = ct.read_pgm_mask(f"{out}/mask.pgm")
    assert mask.shape == (8, 8)
    _, scene, _, _ = ct.read_container(f"{out}/scene.hsc", ct.KIND_CUBE)
    assert scene.shape == (8, 8, 3)
    # flux on the canvas equals the coded scene flux (no vignetting at 8x8)
    coded = float((scene * mask[:, :, None]).sum())
    assert resp.summary["flux_ratio"] == pytest.approx(acq.sum() / coded,
                                                       rel=1e-6)


def test_render_parallel_byte_identical(tmp_path):
    a = sv.handle_render(_small_render(tmp_path / "t1", threads=1))
    b = sv.handle_render(_small_render(tmp_path / "t2", threads=2))
    one = open(f"{tmp_path}/t1/render/acquisition.hsc", "rb").read()
    two = open(f"{tmp_path}/t2/render/acquisition.hsc", "rb").read()
    assert one == two


def test_render_with_explicit_mask_file(tmp_path):
    mask = rd.Mask.random((8, 8), 0.5, 4)
    mask_path = tmp_path / "my_mask.pgm"
    ct.write_pgm_mask(mask_path, mask.data)
    resp = sv.handle_render(_small_render(tmp_path,
                                          mask_path=str(mask_path)))
    back = ct.read_pgm_mask(f"{tmp_path}/render/mask.pgm")
    assert np.array_equal(back, mask.data)


def test_render_mask_shape_mismatch(tmp_path):
    mask_path = tmp_path / "bad.pgm"
    ct.write_pgm_mask(mask_path, np.ones((4, 4)))
    with pytest.raises(sv.GeometryMismatch):
        sv.handle_render(_small_render(tmp_path, mask_path=str(mask_path)))


def test_render_scene_from_container(tmp_path):
    cube = sc.scene_by_name("blocks", shape=(8, 8, 3))
    cube_path = tmp_path / "scene_in.hsc"
    ct.write_container(cube_path, ct.KIND_CUBE, cube.data,
                       cube.wavelengths_nm, cube.pitch_um)
    resp = sv.handle_render(_small_render(tmp_path, scene=str(cube_path)))
    _, scene, _, _ = ct.read_container(f"{tmp_path}/render/scene.hsc",
                                       ct.KIND_CUBE)
    assert np.allclose(scene, cube.data.astype(np.float32))


def test_reconstruct_handler_roundtrip(tmp_path):
    sv.handle_render(_small_render(tmp_path))
    out = f"{tmp_path}/render"
    req = sv.ReconstructRequest(
        acquisition_path=f"{out}/acquisition.hsc",
        mask_path=f"{out}/mask.pgm",
        system="SP", truth_path=f"{out}/scene.hsc",
        iterations=10, scene_size=8, bands=3,
        output_dir=str(tmp_path))
    resp = sv.handle_reconstruct(req)
    _, est, wl, _ = ct.read_container(f"{tmp_path}/reconstruct/"
                                      f"reconstruction.hsc", ct.KIND_CUBE)
    assert est.shape == (8, 8, 3)
    assert wl.tolist() == [450.0, 550.0, 650.0]
    assert "psnr_db" in resp.summary
    text = open(f"{tmp_path}/reconstruct/quality.txt").read()
    assert "psnr_db" in text


def test_reconstruct_geometry_mismatch(tmp_path):
    sv.handle_render(_small_render(tmp_path))
    out = f"{tmp_path}/render"
    req = sv.ReconstructRequest(
        acquisition_path=f"{out}/acquisition.hsc",
        mask_path=f"{out}/mask.pgm",
        system="mSP", iterations=1, scene_size=8, bands=3,
        output_dir=str(tmp_path / "x"))
    with pytest.raises(sv.GeometryMismatch, match="canvas"):
        sv.handle_reconstruct(req)


def test_analyze_handler_outputs(tmp_path):
    resp = sv.handle_analyze(sv.AnalyzeRequest(
        system="SP", grid=5, psf_rays=19, output_dir=str(tmp_path)))
    out = f"{tmp_path}/analyze"
    names = {f.rsplit("/", 1)[-1] for f in resp.files}
    assert {"distortion.csv", "spread.csv", "psf.csv",
            "summary.txt", "manifest.json"} <= names
    spread_rows = open(f"{out}/spread.csv").read().strip().splitlines()
    assert spread_rows[0] == "wavelength_nm,displacement_um"
    assert len(spread_rows) == 1 + 28
    psf_rows = open(f"{out}/psf.csv").read().strip().splitlines()
    assert len(psf_rows) == 1 + 5 * 3
    assert resp.summary["spread_um"] > 700


def test_design_handler_zero_iterations_echoes_init(tmp_path):
    cfg = tmp_path / "design.yaml"
    cfg.write_text(yaml.safe_dump({"iterations": 0}))
    resp = sv.handle_design(sv.DesignRequest(config_path=str(cfg),
                                             output_dir=str(tmp_path)))
    out = f"{tmp_path}/design"
    doc = yaml.safe_load(open(f"{out}/designed_system.yaml"))
    amici = doc["amici"]
    assert amici["a1_deg"] == pytest.approx(30.0)
    assert amici["a2_deg"] == pytest.approx(40.0)
    trace = open(f"{out}/loss_trace.csv").read().strip().splitlines()
    assert trace[0].startswith("iteration")
    assert "report.txt" in {f.rsplit("/", 1)[-1] for f in resp.files}


def test_yaml_error_carries_line_number(tmp_path):
    bad = tmp_path / "broken.yaml"
    bad.write_text("a: 1\n  b: [unclosed\n")
    with pytest.raises(sv.ConfigError, match="line"):
        sv.handle_design(sv.DesignRequest(config_path=str(bad),
                                          output_dir=str(tmp_path)))


def test_unknown_system_is_config_error(tmp_path):
    with pytest.raises(sv.ConfigError):
        sv.handle_map(_map_request(tmp_path, system="nope"))


# -- CLI -------------------------------------------------------------------

def test_cli_map_success(tmp_path, capsys):
    code = cli.main(["map", "--system", "SP", "--height", "8",
                     "--width", "8", "--bands", "3",
                     "--output-dir", str(tmp_path)])
    assert code == 0
    out = capsys.readouterr().out
    assert "mapping.hsc" in out
    assert "center_x_spread_px" in out


def test_cli_exit_codes(tmp_path):
    # unknown subcommand -> argparse usage error (2)
    assert cli.main(["frobnicate"]) == 2
    # unknown system -> configuration error (2)
    assert cli.main(["map", "--system", "nope",
                     "--output-dir", str(tmp_path / "a")]) == 2
    # geometry mismatch -> data error (3)
    sv.handle_render(_small_render(tmp_path / "b"))
    out = f"{tmp_path}/b/render"
    code = cli.main(["reconstruct", "--acquisition",
                     f"{out}/acquisition.hsc", "--mask", f"{out}/mask.pgm",
                     "--system", "mSP", "--scene-size", "8", "--bands", "3",
                     "--iterations", "1",
                     "--output-dir", str(tmp_path / "c")])
    assert code == 3


def test_cli_version(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["--version"])
    assert exc.value.code == 0


def test_cli_output_dir_env_default(tmp_path, monkeypatch):
    monkeypatch.setenv(sv.OUTPUT_DIR_ENV, str(tmp_path / "env-out"))
    code = cli.main(["map", "--system", "SP", "--height", "8",
                     "--width", "8", "--bands", "3"])
    assert code == 0
    assert (tmp_path / "env-out" / "map" / "mapping.hsc").exists()


# -- HTTP app --------------------------------------------------------------

@pytest.fixture(scope="module")
def client():
    fastapi_testclient = pytest.importorskip("fastapi.testclient")
    return fastapi_testclient.TestClient(sv.create_app())


def test_http_health(client):
    r = client.get("/health")
    assert r.status_code == 200
    body = r.json()
    assert body["status"] == "ok"
    assert "version" in body


def test_http_map_roundtrip(client, tmp_path):
    r = client.post("/map", json={"system": "SP", "height": 8, "width": 8,
                                  "bands": 3, "output_dir": str(tmp_path)})
    assert r.status_code == 200
    body = r.json()
    assert body["command"] == "map"
    assert body["ok"] is True
    assert any(f.endswith("mapping.hsc") for f in body["files"])


def test_http_error_codes(client, tmp_path):
    r = client.post("/map", json={"system": "nope",
                                  "output_dir": str(tmp_path / "x")})
    assert r.status_code == 400

    sv.handle_render(_small_render(tmp_path / "y"))
    out = f"{tmp_path}/y/render"
    r = client.post("/reconstruct", json={
        "acquisition_path": f"{out}/acquisition.hsc",
        "mask_path": f"{out}/mask.pgm",
        "system": "mSP", "scene_size": 8, "bands": 3, "iterations": 1,
        "output_dir": str(tmp_path / "z")})
    assert r.status_code == 409
