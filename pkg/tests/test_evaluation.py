import math

import pytest
import torch

from latentdrag import (
    DragModels,
    ParameterError,
    PredictorModel,
    RegularizerModel,
    Stage2Config,
    UndefinedRatioError,
    mdd,
    mean_distance,
)
from latentdrag.common import DTYPE, new_rng
from latentdrag.evaluation import (
    MetricReport,
    landmark_manipulation_eval,
    mdd_curve_eval,
    paired_reconstruction_eval,
    sample_realizable_drag,
    write_curves_csv,
)


@pytest.fixture(scope="module")
def models(gen):
    torch.manual_seed(4)
    predictor = PredictorModel(hidden_width=32, encoder_layers=1, decoder_layers=1, num_heads=2)
    regularizer = RegularizerModel(hidden_width=32, encoder_layers=1, decoder_layers=1, num_heads=2)
    return DragModels(
        generator=gen, regularizer=regularizer, predictor=predictor,
        stage2=Stage2Config(steps=3),
    ).eval_mode()


class TestMeanDistance:
    def test_identical_lists(self):
        pts = [[1.0, 2.0], [3.0, 4.0]]
        assert mean_distance(pts, pts) == 0.0

    def test_single_pair(self):
        assert mean_distance([[0.0, 0.0]], [[3.0, 4.0]]) == pytest.approx(5.0)

    def test_matches_brute_force(self, rng):
        a = torch.randn(20, 2, generator=rng, dtype=DTYPE)
        b = torch.randn(20, 2, generator=rng, dtype=DTYPE)
        brute = sum(
            math.hypot(float(a[i, 0] - b[i, 0]), float(a[i, 1] - b[i, 1])) for i in range(20)
        ) / 20
        assert mean_distance(a, b) == pytest.approx(brute, abs=1e-9)

    def test_length_mismatch(self):
        with pytest.raises(ParameterError):
            mean_distance([[0.0, 0.0]], [[1.0, 1.0], [2.0, 2.0]])


class TestMddRatio:
    def test_unchanged_distance(self):
        assert mdd(4.2, 4.2) == pytest.approx(1.0)

    def test_perfect_drag(self):
        assert mdd(0.0, 10.0) == 0.0

    def test_zero_initial_raises(self):
        with pytest.raises(UndefinedRatioError):
            mdd(1.0, 0.0)


class TestMetricReport:
    def test_mean_matches_brute_force(self):
        report = MetricReport(protocol="x", per_sample=[1.0, 2.0, 4.0])
        assert report.mean == pytest.approx(sum([1.0, 2.0, 4.0]) / 3)
        assert report.count == 3

    def test_csv_rows(self, tmp_path):
        report = MetricReport(protocol="x", per_sample=[1.0, 2.0], extras={"note": "n"})
        path = report.write_csv(tmp_path / "r.csv")
        lines = path.read_text().splitlines()
        assert lines[0] == "trial,value"
        assert lines[-2].startswith("mean,")
        assert lines[-1].startswith("note,")


class TestDragSampler:
    def test_requested_distance_and_realizability(self, gen):
        rng = new_rng(99)
        found = 0
        while found < 20:
            w = gen.sample_latent(rng)
            try:
                pair = sample_realizable_drag(gen, w, rng, dist_range=(30.0, 50.0))
            except RuntimeError:
                continue
            assert 30.0 <= pair.distance <= 50.0
            assert gen.mask_value(w, torch.tensor([pair.handle], dtype=DTYPE)).item() > 0.5
            gen.oracle_latent_for_move(w, torch.tensor(pair.handle), torch.tensor(pair.target))
            found += 1


class TestProtocols:
    def test_landmark_eval_reports(self, gen, models):
        report = landmark_manipulation_eval(models, gen, num_points=5, trials=3, seed=1)
        assert report.count + report.extras["failures"] == 3
        assert "no_edit_mean" in report.extras

    def test_landmark_zero_drag_control_shape(self, gen, models):
        report = landmark_manipulation_eval(models, gen, num_points=1, trials=2, seed=2, zero_drag=True)
        assert report.extras["no_edit_mean"] == pytest.approx(0.0)

    def test_paired_identity_is_exact_zero(self, gen, models):
        report = paired_reconstruction_eval(models, gen, trials=3, seed=3, identity=True)
        assert report.mean == 0.0
        assert report.extras["no_edit_mean"] == 0.0

    def test_paired_eval_runs(self, gen, models):
        report = paired_reconstruction_eval(models, gen, trials=2, seed=4)
        assert report.count == 2
        assert all(v >= 0 for v in report.per_sample)

    def test_mdd_eval_curves(self, gen, models, tmp_path):
        report, curves = mdd_curve_eval(models, gen, trials=3, seed=5, dist_range=(10.0, 25.0))
        assert report.count == len(curves)
        for curve in curves:
            assert curve[0] == 1.0
            assert len(curve) == models.stage2.steps + 1
        path = write_curves_csv(tmp_path / "curves.csv", curves)
        lines = path.read_text().splitlines()
        assert lines[0].startswith("trial,step_0")
        assert lines[-1].startswith("mean,")
