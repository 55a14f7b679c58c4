import pytest
import torch

from latentdrag import (
    CorruptionSpec,
    EditLayerSpec,
    LatentSequence,
    ParameterError,
    PerturbSpec,
    ShapeError,
    corrupt,
    make_motion_sequence,
    perturb_step,
    split_layers,
)
from latentdrag.common import DTYPE, new_rng

LAYERS = EditLayerSpec(6)


def random_latent(rng, layers=12, dim=64):
    return torch.randn((layers, dim), generator=rng, dtype=DTYPE)


class TestCorrupt:
    def test_identity_case(self, rng):
        w = random_latent(rng)
        wprime, mask = corrupt(w, LAYERS, CorruptionSpec(mask_prob=0.0, noise_std=0.0, seed=1))
        assert torch.equal(wprime, w)
        assert torch.equal(mask, torch.ones_like(w))

    def test_full_mask_case(self, rng):
        w = random_latent(rng)
        wprime, mask = corrupt(w, LAYERS, CorruptionSpec(mask_prob=1.0, noise_std=0.0, seed=1))
        assert torch.equal(wprime[:6], torch.zeros_like(w[:6]))
        assert torch.equal(wprime[6:], w[6:])
        assert torch.equal(mask[:6], torch.zeros_like(w[:6]))

    def test_quarter_mask_statistics(self):
        # 6 edit layers x 20000 dim > 1e5 entries
        rng = new_rng(7)
        w = torch.randn((12, 20000), generator=rng, dtype=DTYPE)
        _, mask = corrupt(w, LAYERS, CorruptionSpec(mask_prob=0.25, noise_std=0.0, seed=99))
        zero_fraction = float((mask[:6] == 0).to(DTYPE).mean())
        assert 0.24 <= zero_fraction <= 0.26

    def test_noise_applies_only_to_edit_layers(self, rng):
        w = random_latent(rng)
        wprime, _ = corrupt(w, LAYERS, CorruptionSpec(mask_prob=0.0, noise_std=0.5, seed=3))
        assert not torch.equal(wprime[:6], w[:6])
        assert torch.equal(wprime[6:], w[6:])

    def test_deterministic_under_seed(self, rng):
        w = random_latent(rng)
        spec = CorruptionSpec(mask_prob=0.3, noise_std=0.2, seed=42)
        a = corrupt(w, LAYERS, spec)
        b = corrupt(w, LAYERS, spec)
        assert torch.equal(a[0], b[0]) and torch.equal(a[1], b[1])

    def test_layer_granularity(self, rng):
        w = random_latent(rng)
        _, mask = corrupt(w, LAYERS, CorruptionSpec(mask_prob=0.5, noise_std=0.0, seed=5, granularity="layer"))
        per_layer = mask[:6]
        for row in per_layer:
            assert torch.equal(row, row[0].expand_as(row))

    @pytest.mark.parametrize("bad", [dict(mask_prob=-0.1), dict(mask_prob=1.5), dict(noise_std=-1.0)])
    def test_invalid_spec(self, bad):
        with pytest.raises(ParameterError):
            CorruptionSpec(**bad)


class TestSplitLayers:
    def test_six_six_split(self, rng):
        w = random_latent(rng)
        w1, w2 = split_layers(w, LAYERS)
        assert w1.shape == (6, 64) and w2.shape == (6, 64)

    def test_degenerate_split(self, rng):
        w = random_latent(rng)
        w1, w2 = split_layers(w, EditLayerSpec(12))
        assert w1.shape == (12, 64) and w2.shape == (0, 64)

    def test_round_trip_bit_exact(self, rng):
        w = random_latent(rng)
        w1, w2 = split_layers(w, LAYERS)
        assert torch.equal(torch.cat([w1, w2], dim=0), w)

    def test_too_many_edit_layers(self, rng):
        w = random_latent(rng)
        with pytest.raises(ShapeError):
            split_layers(w, EditLayerSpec(13))


class TestPerturbStep:
    def test_fixed_point(self, rng):
        w = random_latent(rng)
        out = perturb_step(w, w, 0.3, LAYERS)
        assert torch.allclose(out, w)

    def test_zero_scale_keyword_path(self, rng):
        # scale=0 is meaningless for a spec but valid for the raw step
        w, ws = random_latent(rng), random_latent(rng)
        assert torch.equal(perturb_step(w, ws, 0.0, LAYERS), w)

    def test_amplification_identity(self, rng):
        # edit block of (w_i - w_star) must equal (1+scale)*(w_prev - w_star)
        w, ws = random_latent(rng), random_latent(rng)
        for scale in (0.01, 0.05, 0.2):
            out = perturb_step(w, ws, scale, LAYERS)
            lhs = out[:6] - ws[:6]
            rhs = (1 + scale) * (w[:6] - ws[:6])
            assert float(((lhs - rhs).abs() / rhs.abs().clamp(min=1e-12)).max()) < 1e-6

    def test_toward_variant(self, rng):
        w, ws = random_latent(rng), random_latent(rng)
        out = perturb_step(w, ws, 1.0, LAYERS, direction="toward")
        assert torch.allclose(out[:6], ws[:6])
        assert torch.equal(out[6:], w[6:])

    def test_shape_mismatch(self, rng):
        w = random_latent(rng)
        with pytest.raises(ShapeError):
            perturb_step(w, w[:6], 0.1, LAYERS)


class _ConstAnchor:
    def __init__(self, w_star):
        self.w_star = w_star

    def sample_latent(self, rng):
        return self.w_star


class TestMotionSequence:
    def test_single_step_length(self, rng):
        w0, ws = random_latent(rng), random_latent(rng)
        seq = make_motion_sequence(w0, PerturbSpec(scale=0.1, steps=1, seed=0), LAYERS, _ConstAnchor(ws))
        assert len(seq) == 2

    def test_closed_form_matches_loop(self, rng):
        # independent oracle: evaluate the recurrence step by step and compare
        # against the closed form (1+scale)^i applied to the initial offset
        w0, ws = random_latent(rng), random_latent(rng)
        for scale in (0.01, 0.05, 0.2):
            seq = make_motion_sequence(
                w0, PerturbSpec(scale=scale, steps=10, seed=0), LAYERS, _ConstAnchor(ws)
            )
            for i in range(len(seq)):
                expected = (1 + scale) ** i * (w0[:6] - ws[:6])
                got = seq[i][:6] - ws[:6]
                rel = ((got - expected).abs() / expected.abs().clamp(min=1e-12)).max()
                assert float(rel) < 1e-6, f"scale={scale} i={i}"

    def test_non_edit_rows_bit_identical(self, rng):
        w0, ws = random_latent(rng), random_latent(rng)
        seq = make_motion_sequence(w0, PerturbSpec(scale=0.2, steps=7, seed=0), LAYERS, _ConstAnchor(ws))
        for i in range(len(seq)):
            assert torch.equal(seq[i][6:], w0[6:])
        seq.validate(LAYERS)

    def test_deterministic_under_seed(self, gen, rng):
        w0 = random_latent(rng)
        spec = PerturbSpec(scale=0.1, steps=5, seed=77)
        a = make_motion_sequence(w0, spec, LAYERS, gen)
        b = make_motion_sequence(w0, spec, LAYERS, gen)
        assert torch.equal(a.codes, b.codes)

    def test_default_training_length(self):
        assert PerturbSpec().steps == 5

    def test_invalid_steps(self):
        with pytest.raises(ParameterError):
            PerturbSpec(scale=0.1, steps=0)

    def test_sequence_invariant_rejects_tampering(self, rng):
        w0, ws = random_latent(rng), random_latent(rng)
        seq = make_motion_sequence(w0, PerturbSpec(scale=0.1, steps=3, seed=0), LAYERS, _ConstAnchor(ws))
        tampered = seq.codes.clone()
        tampered[2, 8, 0] += 1.0
        with pytest.raises(ParameterError):
            LatentSequence(tampered).validate(LAYERS)
