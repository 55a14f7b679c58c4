import dataclasses

import pytest
import torch

from latentdrag import GeneratorConfig, NoCorrespondenceError, ToyGenerator
from latentdrag.checkpoints import load_checkpoint, save_checkpoint
from latentdrag.common import DTYPE, new_rng


class TestMapZ:
    def test_zero_maps_to_bias(self, gen):
        z = torch.zeros(gen.config.input_dim, dtype=DTYPE)
        assert torch.allclose(gen.map_z(z), gen.map_bias)

    def test_deterministic(self, gen, rng):
        z = torch.randn(gen.config.input_dim, generator=rng, dtype=DTYPE)
        assert torch.equal(gen.map_z(z), gen.map_z(z.clone()))

    def test_per_layer_std_near_unity(self, gen):
        w = gen.sample_latent(new_rng(11), count=10_000)
        stds = w.std(dim=(0, 2))
        assert float(stds.min()) > 0.5 and float(stds.max()) < 2.0


class TestDecodeExclusivity:
    def test_non_edit_perturbation_keeps_pose(self, gen, rng):
        w = gen.sample_latent(rng)
        w2 = w.clone()
        w2[6:] += torch.randn_like(w2[6:])
        a, b = gen.decode_params(w), gen.decode_params(w2)
        for field in ("cx", "cy", "theta", "scale"):
            assert torch.equal(getattr(a, field), getattr(b, field))

    def test_edit_perturbation_keeps_appearance(self, gen, rng):
        w = gen.sample_latent(rng)
        w2 = w.clone()
        w2[:6] += torch.randn_like(w2[:6])
        a, b = gen.decode_params(w), gen.decode_params(w2)
        assert torch.equal(a.color, b.color)
        assert torch.equal(a.texture_phase, b.texture_phase)

    def test_readout_inverse_round_trip(self, gen, rng):
        w = gen.sample_latent(rng)
        params = gen.decode_params(w)
        raw = gen.raw_from_pose(params.cx, params.cy, params.theta, params.scale)
        cx, cy, theta, scale = gen._pose_from_raw(raw)
        for got, want in ((cx, params.cx), (cy, params.cy), (theta, params.theta), (scale, params.scale)):
            assert abs(float(got - want)) < 1e-6

    def test_jacobian_block_sparsity(self, gen, rng):
        # finite differences: pose w.r.t. non-edit entries and appearance
        # w.r.t. edit entries must both vanish
        w = gen.sample_latent(rng)
        eps = 1e-5
        for _ in range(10):
            li = int(torch.randint(6, 12, (1,), generator=rng))
            di = int(torch.randint(0, 64, (1,), generator=rng))
            wp = w.clone()
            wp[li, di] += eps
            a, b = gen.decode_params(w), gen.decode_params(wp)
            for field in ("cx", "cy", "theta", "scale"):
                assert abs(float(getattr(a, field) - getattr(b, field))) < 1e-8
            li = int(torch.randint(0, 6, (1,), generator=rng))
            wp = w.clone()
            wp[li, di] += eps
            b = gen.decode_params(wp)
            assert float((a.color - b.color).abs().max()) < 1e-8


class TestSynthesize:
    def test_image_in_unit_range(self, gen, rng):
        image, _ = gen.synthesize(gen.sample_latent(rng))
        assert image.shape == (64, 64, 3)
        assert float(image.min()) >= 0.0 and float(image.max()) <= 1.0

    def test_centroid_follows_center(self, gen):
        # analytic pose via readout inversion keeps the object well inside
        w = gen.sample_latent(new_rng(3))
        base = gen.decode_params(w)
        w_centered = gen.oracle_latent_for_move(
            w,
            gen.image_points(torch.zeros(1, 2, dtype=DTYPE), base)[0],
            torch.tensor([32.0, 32.0], dtype=DTYPE),
        )
        res = gen.config.image_resolution

        def centroid(latent):
            _, u, v, rho, mask, tex = gen._frame_fields(latent, res)
            xs, ys = gen._grid(res)
            return (
                float((mask * xs).sum() / mask.sum()) * res,
                float((mask * ys).sum() / mask.sum()) * res,
            )

        c0 = centroid(w_centered)
        shifted = gen.oracle_latent_for_move(
            w_centered,
            torch.tensor([32.0, 32.0], dtype=DTYPE),
            torch.tensor([32.0 + 0.1 * res, 32.0], dtype=DTYPE),
        )
        c1 = centroid(shifted)
        assert abs((c1[0] - c0[0]) - 0.1 * res) < 0.5
        assert abs(c1[1] - c0[1]) < 0.5

    def test_feature_origin_at_object_center(self, gen):
        # place the center exactly on a feature-cell center
        w = gen.sample_latent(new_rng(4))
        params = gen.decode_params(w)
        fres, res = gen.config.feature_resolution, gen.config.image_resolution
        cell_center = (8.5 / fres) * res  # cell (8, 8)
        w2 = gen.oracle_latent_for_move(
            w,
            gen.image_points(torch.zeros(1, 2, dtype=DTYPE), params)[0],
            torch.tensor([cell_center, cell_center], dtype=DTYPE),
        )
        feat = gen.features(w2)
        assert abs(float(feat[1, 8, 8])) < 0.05
        assert abs(float(feat[2, 8, 8])) < 0.05

    def test_masked_channels_vanish_off_support(self, gen, rng):
        w = gen.sample_latent(rng)
        feat = gen.features(w)
        off = feat[0] < 1e-3
        if off.any():
            assert float(feat[1][off].abs().max()) < 1e-2
            assert float(feat[2][off].abs().max()) < 1e-2

    def test_differentiable_wrt_every_latent_entry(self, gen):
        # central differences vs autodiff on mean image intensity
        w = gen.sample_latent(new_rng(5)).requires_grad_(True)
        mean_intensity = gen.render_image(w).mean()
        (grad,) = torch.autograd.grad(mean_intensity, w)
        eps = 1e-5
        rng = new_rng(6)
        idx = torch.stack(
            [torch.randint(0, 12, (40,), generator=rng), torch.randint(0, 64, (40,), generator=rng)],
            dim=1,
        )
        with torch.no_grad():
            for li, di in idx.tolist():
                wp, wm = w.detach().clone(), w.detach().clone()
                wp[li, di] += eps
                wm[li, di] -= eps
                fd = (gen.render_image(wp).mean() - gen.render_image(wm).mean()) / (2 * eps)
                denom = max(abs(float(fd)), 1e-7)
                assert abs(float(fd) - float(grad[li, di])) / denom < 1e-3


class TestKeypoints:
    def test_identity_pose_gives_canonical_anchors(self, gen):
        w = gen.sample_latent(new_rng(8))
        params = gen.decode_params(w)
        center = gen.image_points(torch.zeros(1, 2, dtype=DTYPE), params)[0]
        w_id = gen.oracle_latent_for_move(w, center, torch.tensor([32.0, 32.0], dtype=DTYPE))
        # neutralize rotation/scale analytically through the raw block
        raw = gen.raw_spatial(w_id)
        target_raw = raw.clone()
        target_raw[2] = 0.0
        target_raw[3] = 0.0
        dw = gen.spatial_pinv @ (target_raw - raw)
        w_id = w_id.clone()
        w_id[:6] += dw.reshape(6, 64)
        kp = gen.keypoints(w_id, 12)
        from latentdrag.generator import BASE_EXTENT

        expected = (0.5 + ToyGenerator.anchor_points(12) * BASE_EXTENT) * 64
        assert float((kp - expected).abs().max()) < 1e-6

    def test_translation_moves_every_keypoint(self, gen):
        w = gen.sample_latent(new_rng(9))
        kp0 = gen.keypoints(w, 5)
        handle = kp0[0]
        delta = torch.tensor([4.0, -3.0], dtype=DTYPE)
        w2 = gen.oracle_latent_for_move(w, handle, handle + delta)
        kp1 = gen.keypoints(w2, 5)
        assert float((kp1 - kp0 - delta).abs().max()) < 1e-6

    @pytest.mark.parametrize("count", [1, 5, 68])
    def test_supported_counts(self, gen, rng, count):
        kp = gen.keypoints(gen.sample_latent(rng), count)
        assert kp.shape == (count, 2)


class TestOracle:
    def test_zero_move_is_identity(self, gen, rng):
        w = gen.sample_latent(rng)
        handle = gen.keypoints(w, 1)[0]
        w2 = gen.oracle_latent_for_move(w, handle, handle)
        assert float((w2 - w).abs().max()) < 1e-6

    def test_translation_render_and_measure(self, gen):
        w = gen.sample_latent(new_rng(10))
        handle = gen.keypoints(w, 1)[0]
        target = handle + torch.tensor([10.0, 0.0], dtype=DTYPE)
        w2 = gen.oracle_latent_for_move(w, handle, target)
        moved = gen.keypoints(w2, 1)[0]
        assert float((moved - target).norm()) < 1.0

    def test_non_edit_layers_untouched(self, gen, rng):
        w = gen.sample_latent(rng)
        handle = gen.keypoints(w, 1)[0]
        w2 = gen.oracle_latent_for_move(w, handle, handle + 3.0)
        assert torch.equal(w2[6:], w[6:])

    def test_handle_off_object_raises(self, gen, rng):
        w = gen.sample_latent(rng)
        params = gen.decode_params(w)
        far = gen.image_points(torch.tensor([[4.0, 4.0]], dtype=DTYPE), params)[0]
        far = torch.clamp(far, 1.0, 62.0)
        with pytest.raises(NoCorrespondenceError):
            gen.oracle_latent_for_move(w, far, far + 2.0)

    def test_hundred_random_drags_within_one_px(self, gen):
        from latentdrag.evaluation import sample_realizable_drag

        rng = new_rng(1234)
        done = 0
        while done < 100:
            w = gen.sample_latent(rng)
            try:
                pair = sample_realizable_drag(gen, w, rng, dist_range=(5.0, 40.0))
            except RuntimeError:
                continue
            w2 = gen.oracle_latent_for_move(w, torch.tensor(pair.handle), torch.tensor(pair.target))
            material = gen.object_frame(
                torch.tensor([pair.handle], dtype=DTYPE), gen.decode_params(w)
            )
            moved = gen.image_points(material, gen.decode_params(w2))[0]
            assert float((moved - torch.tensor(pair.target, dtype=DTYPE)).norm()) < 1.0
            done += 1


class TestCheckpoint:
    def test_round_trip_byte_identical(self, gen, tmp_path):
        p1, p2 = tmp_path / "g1.ckpt", tmp_path / "g2.ckpt"
        meta = {"generator": dataclasses.asdict(gen.config)}
        save_checkpoint(p1, "toy-generator", meta, gen.state_arrays())
        kind, meta2, arrays = load_checkpoint(p1, expected_kind="toy-generator")
        save_checkpoint(p2, kind, meta2, arrays)
        assert p1.read_bytes() == p2.read_bytes()

    def test_load_restores_behavior(self, gen, tmp_path, rng):
        path = tmp_path / "g.ckpt"
        save_checkpoint(path, "toy-generator", {}, gen.state_arrays())
        other = ToyGenerator(GeneratorConfig(seed=99))
        _, _, arrays = load_checkpoint(path)
        other.load_state_arrays(arrays)
        w = gen.sample_latent(rng)
        assert torch.equal(other.map_z(torch.zeros(32, dtype=DTYPE)), gen.map_bias)
        assert torch.allclose(other.raw_spatial(w), gen.raw_spatial(w))
