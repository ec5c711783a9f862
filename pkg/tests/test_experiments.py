import numpy as np
import pytest

from luxtune.dataio import DatasetConfig, build_dataset
from luxtune.errors import AssetError, ShapeError
from luxtune.experiments import (
    FULLSCALE_DIRECTION_PSNR,
    FULLSCALE_FILTER_PSNR,
    ExperimentSpec,
    MetricReport,
    alpha2_for_exposure,
    bilinear_demosaic,
    brightness_only_baseline,
    evaluate_brightness_only,
    run_protocol,
)
from luxtune.metrics import psnr
from luxtune.network import EnhancerModel, UNetConfig
from luxtune.rawproc import pack_bayer
from luxtune.sensor import CleanScene, expose, mosaic, render_reference_srgb
from luxtune.training import TrainSchedule, train_base


class TestAlpha2Mapping:
    def test_anchor_endpoints(self):
        assert alpha2_for_exposure(1.0, 1.0, 10.0) == 0.0
        assert alpha2_for_exposure(10.0, 1.0, 10.0) == 1.0

    def test_interior_log_linear(self):
        a2 = alpha2_for_exposure(5.0, 1.0, 10.0)
        np.testing.assert_allclose(a2, np.log(5.0) / np.log(10.0), rtol=1e-12)

    def test_extrapolates_outside_range(self):
        assert alpha2_for_exposure(10.0, 1.0, 5.0) > 1.0

    def test_bad_anchors(self):
        with pytest.raises(ShapeError):
            alpha2_for_exposure(5.0, 10.0, 1.0)


class TestBrightnessOnlyBaseline:
    def smooth_scene(self, h=32, w=32):
        yy = np.linspace(0.1, 0.9, h)[:, None]
        xx = np.linspace(0.1, 0.9, w)[None, :]
        grad = (yy + xx) / 2.0
        radiance = np.stack([grad, grad * 0.9, grad * 0.8]).astype(np.float32)
        return CleanScene(radiance, seed=0, style="indoor")

    def test_noiseless_input_approximates_reference(self):
        scene = self.smooth_scene()
        packed = pack_bayer(mosaic(scene))
        out = brightness_only_baseline(packed, 1.0)
        ref = render_reference_srgb(scene)
        assert psnr(out, ref) > 35.0

    def test_unit_gain_is_plain_demosaic_gamma(self):
        scene = self.smooth_scene()
        raw = mosaic(scene)
        packed = pack_bayer(raw)
        out = brightness_only_baseline(packed, 1.0)
        direct = np.power(np.clip(bilinear_demosaic(raw.mosaic), 0, 1), 1 / 2.2)
        np.testing.assert_allclose(out, direct, atol=1e-6)

    def test_amplification_matches_exposure_scaling(self):
        scene = self.smooth_scene()
        dark = expose(mosaic(scene), 0.1, 10.0)  # x0.01 signal
        out = brightness_only_baseline(pack_bayer(dark), 10.0)
        ref_1s = render_reference_srgb(scene, exposure_scale=0.1)
        assert psnr(out, ref_1s) > 35.0

    def test_demosaic_preserves_known_sites(self, rng):
        m = rng.uniform(0.2, 0.8, (8, 8)).astype(np.float32)
        rgb = bilinear_demosaic(m)
        # red plane keeps the exact value at red sites
        np.testing.assert_allclose(rgb[0][0::2, 0::2], m[0::2, 0::2], rtol=1e-6)
        np.testing.assert_allclose(rgb[2][1::2, 1::2], m[1::2, 1::2], rtol=1e-6)


@pytest.fixture(scope="module")
def tiny_trained(tmp_path_factory):
    """10-scene dataset plus one quickly trained fixed model."""
    root = tmp_path_factory.mktemp("exp_ds")
    manifest = build_dataset(DatasetConfig(scenes=10, width=32, height=32, seed=77), root)
    model = EnhancerModel.build(UNetConfig(depth=2, base_channels=4), init_seed=0)
    schedule = TrainSchedule(patch_size=16, epochs_high=4, epochs_low=1, seed=0)
    model, _ = train_base(model, manifest, 0.1, 1.0, schedule)
    return manifest, model


class TestRunProtocol:
    def test_missing_checkpoint_lists_training_command(self, tiny_trained):
        manifest, _ = tiny_trained
        spec = ExperimentSpec(protocol="C", test_exposures=(5.0,))
        with pytest.raises(AssetError, match="luxtune train"):
            run_protocol(spec, manifest, {})

    def test_protocol_a_structure(self, tiny_trained):
        manifest, model = tiny_trained
        spec = ExperimentSpec(protocol="A", test_exposures=(1.0,))
        report = run_protocol(spec, manifest, {"fixed@1": model})
        assert report.experiment_id == "protocol-A"
        n_test = len(manifest.split("test"))
        assert len(report.rows) == n_test
        assert {r["model"] for r in report.rows} == {"fixed@1"}

    def test_report_fingerprint_deterministic(self, tiny_trained):
        manifest, model = tiny_trained
        spec = ExperimentSpec(protocol="A", test_exposures=(1.0,))
        r1 = run_protocol(spec, manifest, {"fixed@1": model})
        r2 = run_protocol(spec, manifest, {"fixed@1": model})
        assert r1.config_fingerprint == r2.config_fingerprint
        assert r1.rows == r2.rows

    def test_unknown_protocol(self, tiny_trained):
        manifest, _ = tiny_trained
        with pytest.raises(ShapeError, match="protocol"):
            run_protocol(ExperimentSpec(protocol="Z"), manifest, {})

    def test_continuous_grid_mode_picks_best(self, tiny_trained):
        manifest, base = tiny_trained
        model = base.insert_modulation(3)
        spec = ExperimentSpec(
            protocol="C",
            test_exposures=(5.0,),
            alpha2_mode="grid",
            alpha2_grid=(0.0, 0.5, 1.0),
        )
        report = run_protocol(spec, manifest, {"continuous": model})
        assert all(r["alpha2"] in (0.0, 0.5, 1.0) for r in report.rows)


class TestReference:
    def test_fullscale_reference_values_recorded(self):
        assert FULLSCALE_FILTER_PSNR == {1: 31.87, 3: 32.35, 5: 32.39, 7: 32.48}
        assert FULLSCALE_DIRECTION_PSNR == {"forward": 32.35, "backward": 28.2}


class TestReportOutput:
    def test_text_and_csv_roundtrip(self, tmp_path, tiny_trained):
        manifest, _ = tiny_trained
        report = MetricReport(experiment_id="demo", seeds={"dataset": 1})
        evaluate_brightness_only(report, manifest.split("test"), 0.1, 1.0)
        txt, csvp = report.write(tmp_path / "report")
        text = txt.read_text()
        assert text.startswith("# luxtune-report 1 experiment=demo")
        assert "aggregates" in text
        import csv as csvmod

        with open(csvp) as f:
            rows = list(csvmod.DictReader(f))
        assert len(rows) == len(report.rows)
        assert float(rows[0]["psnr"]) == pytest.approx(report.rows[0]["psnr"])

    def test_row_schema_enforced(self):
        report = MetricReport(experiment_id="demo")
        with pytest.raises(ShapeError, match="missing columns"):
            report.add_row(experiment="demo", model="x")

    def test_mean_requires_rows(self):
        report = MetricReport(experiment_id="demo")
        with pytest.raises(AssetError):
            report.mean("nothing", 1.0)
