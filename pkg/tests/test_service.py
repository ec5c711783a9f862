import io

import numpy as np
import pytest
from fastapi.testclient import TestClient

from luxtune.checkpoint import save_checkpoint
from luxtune.dataio import DatasetConfig, build_dataset, write_raw
from luxtune.network import EnhancerModel, UNetConfig
from luxtune.rawproc import RawImage
from luxtune.service import create_app
from luxtune.training import TrainSchedule, finetune_modulation, train_base


@pytest.fixture(scope="module")
def service_env(tmp_path_factory):
    """Asset dir with a base checkpoint, a fine-tuned one, and raw images."""
    assets = tmp_path_factory.mktemp("assets")
    ds_root = tmp_path_factory.mktemp("svc_ds")
    manifest = build_dataset(DatasetConfig(scenes=10, width=32, height=32, seed=21), ds_root)

    model = EnhancerModel.build(UNetConfig(depth=2, base_channels=4), init_seed=1)
    schedule = TrainSchedule(patch_size=16, epochs_high=3, epochs_low=1, finetune_epochs=3, seed=1)
    model, _ = train_base(model, manifest, 0.1, 1.0, schedule)
    save_checkpoint(model, assets / "base.lxck")
    tuned = model.insert_modulation(3)
    tuned, _ = finetune_modulation(tuned, manifest, 0.1, 10.0, schedule)
    save_checkpoint(tuned, assets / "tuned.lxck")

    rec = manifest.split("test")[0]
    raw = rec.load_raw(0.1)
    write_raw(assets / "input.lxrw", raw)
    odd = RawImage(np.zeros((6, 6), dtype=np.float32))
    write_raw(assets / "tiny.lxrw", odd)  # too small for depth-2 net after packing
    return assets


@pytest.fixture()
def client(service_env):
    app = create_app(checkpoint_dir=service_env, preview_scale=0.5)
    return TestClient(app)


def make_session(client, checkpoint="tuned.lxck", image="input.lxrw"):
    resp = client.post("/sessions", json={"checkpoint": checkpoint, "image": image})
    assert resp.status_code == 201, resp.text
    return resp.json()


class TestSessionLifecycle:
    def test_healthz_before_sessions(self, client):
        resp = client.get("/healthz")
        assert resp.status_code == 200
        body = resp.json()
        assert body["status"] == "ok"
        assert body["sessions"] == 0

    def test_create_session_returns_anchors_and_bounds(self, client):
        body = make_session(client)
        assert body["trained_anchors"] == [[10.0, 0.0], [100.0, 1.0]]
        assert body["knob_bounds"]["alpha1"] == [1.0, 100.0]
        assert body["knob_bounds"]["alpha2"] == [0.0, 1.0]
        assert body["image_size"]["output"] == [32, 32]

    def test_missing_image_404_names_asset(self, client):
        resp = client.post("/sessions", json={"checkpoint": "tuned.lxck", "image": "nope.lxrw"})
        assert resp.status_code == 404
        assert "nope.lxrw" in resp.text

    def test_missing_checkpoint_404(self, client):
        resp = client.post("/sessions", json={"checkpoint": "nope.lxck", "image": "input.lxrw"})
        assert resp.status_code == 404

    def test_path_traversal_rejected(self, client):
        resp = client.post("/sessions", json={"checkpoint": "../base.lxck", "image": "input.lxrw"})
        assert resp.status_code == 404

    def test_incompatible_dims_422(self, client):
        resp = client.post("/sessions", json={"checkpoint": "tuned.lxck", "image": "tiny.lxrw"})
        assert resp.status_code == 422
        assert "divisible" in resp.text


class TestPreview:
    def test_preview_deterministic_bytes(self, client):
        sid = make_session(client)["session_id"]
        url = f"/sessions/{sid}/preview?alpha1=10&alpha2=0.5&scale=1.0"
        a = client.get(url)
        b = client.get(url)
        assert a.status_code == 200
        assert a.headers["content-type"] == "image/png"
        assert "X-Render-Millis" in a.headers
        assert a.content == b.content

    def test_alpha2_zero_byte_equals_base_network_preview(self, client):
        tuned_sid = make_session(client, "tuned.lxck")["session_id"]
        base_sid = make_session(client, "base.lxck")["session_id"]
        tuned_png = client.get(f"/sessions/{tuned_sid}/preview?alpha1=10&alpha2=0&scale=1.0")
        base_png = client.get(f"/sessions/{base_sid}/preview?alpha1=10&alpha2=0&scale=1.0")
        assert tuned_png.content == base_png.content

    def test_out_of_bounds_alpha1_400_cites_truncation_bound(self, client):
        sid = make_session(client)["session_id"]
        resp = client.get(f"/sessions/{sid}/preview?alpha1=500&alpha2=0")
        assert resp.status_code == 400
        assert "100" in resp.text
        assert resp.json()["detail"]["legal_range"] == [1.0, 100.0]

    def test_out_of_bounds_alpha2_400(self, client):
        sid = make_session(client)["session_id"]
        resp = client.get(f"/sessions/{sid}/preview?alpha1=10&alpha2=1.5")
        assert resp.status_code == 400

    def test_extrapolation_mode_widens_bounds(self, service_env):
        app = create_app(checkpoint_dir=service_env, extrapolate=True)
        client = TestClient(app)
        body = make_session(client)
        assert body["knob_bounds"]["alpha2"] == [-0.5, 1.5]
        sid = body["session_id"]
        resp = client.get(f"/sessions/{sid}/preview?alpha1=10&alpha2=1.3")
        assert resp.status_code == 200

    def test_unknown_session_404(self, client):
        resp = client.get("/sessions/deadbeef/preview?alpha1=10&alpha2=0")
        assert resp.status_code == 404


class TestExport:
    def test_export_full_resolution_shape(self, client):
        from PIL import Image

        sid = make_session(client)["session_id"]
        resp = client.get(f"/sessions/{sid}/export?alpha1=10&alpha2=1")
        assert resp.status_code == 200
        img = Image.open(io.BytesIO(resp.content))
        assert img.size == (32, 32)  # 2x packed dims
        assert img.mode == "RGB"

    def test_export_consistent_with_preview_content(self, client):
        from PIL import Image

        sid = make_session(client)["session_id"]
        export = client.get(f"/sessions/{sid}/export?alpha1=10&alpha2=0.5")
        preview = client.get(f"/sessions/{sid}/preview?alpha1=10&alpha2=0.5&scale=0.5")
        full = np.asarray(Image.open(io.BytesIO(export.content)), dtype=np.float64)
        prev = np.asarray(Image.open(io.BytesIO(preview.content)), dtype=np.float64)
        down = full[::2, ::2, :]
        assert down.shape == prev.shape
        # same content at lower resolution, up to resampling differences
        assert np.abs(down - prev).mean() < 20.0  # 8-bit scale

    def test_baseline_endpoint_for_compare_mode(self, client):
        sid = make_session(client)["session_id"]
        resp = client.get(f"/sessions/{sid}/baseline?alpha1=10&scale=1.0")
        assert resp.status_code == 200
        assert resp.headers["content-type"] == "image/png"


class TestLatency:
    def test_preview_latency_header_under_budget(self, client):
        sid = make_session(client)["session_id"]
        client.get(f"/sessions/{sid}/preview?alpha1=10&alpha2=0.5")  # warm-up
        resp = client.get(f"/sessions/{sid}/preview?alpha1=20&alpha2=0.5")
        millis = float(resp.headers["X-Render-Millis"])
        assert millis <= 200.0


class TestSessionIsolation:
    def test_concurrent_previews_do_not_interleave_state(self, client, service_env):
        """Interleaved renders on two sessions reproduce their solo bytes."""
        import concurrent.futures

        sid_a = make_session(client, checkpoint="tuned.lxck")["session_id"]
        sid_b = make_session(client, checkpoint="base.lxck")["session_id"]
        url_a = f"/sessions/{sid_a}/preview?alpha1=30&alpha2=1.0&scale=1.0"
        url_b = f"/sessions/{sid_b}/preview?alpha1=80&alpha2=0.0&scale=1.0"
        ref_a = client.get(url_a).content
        ref_b = client.get(url_b).content
        assert ref_a != ref_b

        jobs = [url_a, url_b] * 6
        with concurrent.futures.ThreadPoolExecutor(max_workers=4) as pool:
            results = list(pool.map(lambda u: (u, client.get(u).content), jobs))
        for url, content in results:
            assert content == (ref_a if url == url_a else ref_b)
