import pytest
import torch

from changedet.backbone import EncoderConfig, SiameseEncoder
from changedet.enhancement import DeepFeatureEnhancement, FuseConv, contrast
from changedet.grids import InvalidInputError

from helpers import gradient_check


class TestFuse:
    def test_diff_of_equal_inputs_is_relu_of_bn_bias(self):
        fuse = FuseConv(channels=8, mode="diff")
        with torch.no_grad():
            fuse.bn.bias.normal_(0, 1.0)
        fuse.train()
        e = torch.randn(2, 6, 6, 8)
        out = fuse(e, e)
        expected = torch.relu(fuse.bn.bias).view(1, 1, 1, 8).expand_as(out)
        assert torch.equal(out, expected)

    def test_raw_diff_operand_antisymmetric(self):
        e1 = torch.randn(2, 5, 5, 4)
        e2 = torch.randn(2, 5, 5, 4)
        assert torch.equal(e1 - e2, -(e2 - e1))

    def test_sum_mode_symmetric_under_swap(self):
        fuse = FuseConv(channels=8, mode="sum")
        e1 = torch.randn(2, 6, 6, 8)
        e2 = torch.randn(2, 6, 6, 8)
        assert torch.equal(fuse(e1, e2), fuse(e2, e1))

    def test_output_nonnegative(self):
        for mode in ("sum", "diff"):
            fuse = FuseConv(channels=8, mode=mode)
            out = fuse(torch.randn(2, 6, 6, 8), torch.randn(2, 6, 6, 8))
            assert (out >= 0).all()

    def test_shape_mismatch_raises(self):
        fuse = FuseConv(channels=8, mode="sum")
        with pytest.raises(InvalidInputError):
            fuse(torch.randn(1, 6, 6, 8), torch.randn(1, 6, 5, 8))

    def test_gradient_wrt_conv_weights(self):
        torch.manual_seed(5)
        fuse = FuseConv(channels=4, mode="diff").double()
        e1 = torch.randn(2, 8, 8, 4, dtype=torch.float64)
        e2 = torch.randn(2, 8, 8, 4, dtype=torch.float64)
        coeff = torch.randn(2, 8, 8, 4, dtype=torch.float64)
        err = gradient_check(lambda: (fuse(e1, e2) * coeff).sum(), fuse.conv.weight)
        assert err <= 1e-3


class TestContrast:
    def test_constant_input_interior_contrast_zero(self):
        e = torch.full((1, 6, 6, 3), 2.5)
        out = contrast(e)
        interior = out[:, 1:-1, 1:-1, 3:]
        assert torch.allclose(interior, torch.zeros_like(interior), atol=1e-6)
        # zero padding makes the border deviate for constant inputs
        assert not torch.allclose(out[:, 0, 0, 3:], torch.zeros(3), atol=1e-6)

    def test_center_of_3x3_equals_value_minus_window_mean(self):
        torch.manual_seed(2)
        e = torch.randn(1, 3, 3, 1, dtype=torch.float64)
        out = contrast(e)
        expected = e[0, 1, 1, 0] - e[0, :, :, 0].mean()
        assert torch.allclose(out[0, 1, 1, 1], expected, atol=1e-12)

    def test_channels_double(self):
        assert contrast(torch.randn(2, 5, 7, 6)).shape == (2, 5, 7, 12)

    def test_exactly_linear(self):
        e = torch.randn(1, 6, 6, 4, dtype=torch.float64)
        assert torch.allclose(contrast(3.5 * e), 3.5 * contrast(e), atol=1e-12)


class TestEnhancePyramid:
    def _pyramids(self, channels=8):
        torch.manual_seed(4)
        encoder = SiameseEncoder(EncoderConfig(
            embed_dim=channels, stage_heads=(2, 2, 4, 4), reduce_to=channels,
        ))
        with torch.no_grad():
            return encoder.encode_pair(torch.rand(2, 3, 32, 32), torch.rand(2, 3, 32, 32))

    def test_five_levels_with_doubled_channels(self):
        pa, pb = self._pyramids()
        dfe = DeepFeatureEnhancement(channels=8)
        dfe.train()
        levels = dfe(pa, pb)
        assert len(levels) == 5
        for k, level in enumerate(levels, start=1):
            assert level.level == k
            assert level.sum_features.channels == 16
            assert level.diff_features.channels == 16
            assert level.sum_features.stride == pa[k - 1].stride

    def test_identical_pyramids_make_diff_branch_uniform_inside(self):
        pa, _ = self._pyramids()
        dfe = DeepFeatureEnhancement(channels=8)
        dfe.train()
        levels = dfe(pa, pa)
        diff = levels[0].diff_features.values
        interior = diff[:, 1:-1, 1:-1, :]
        reference = interior[:, :1, :1, :]
        assert torch.allclose(interior, reference.expand_as(interior), atol=1e-6)

    def test_deterministic_under_fixed_weights(self):
        pa, pb = self._pyramids()
        dfe = DeepFeatureEnhancement(channels=8)
        dfe.eval()
        first = dfe(pa, pb)
        second = dfe(pa, pb)
        for a, b in zip(first, second):
            assert torch.equal(a.sum_features.values, b.sum_features.values)
            assert torch.equal(a.diff_features.values, b.diff_features.values)

    def test_level_mismatch_raises(self):
        pa, pb = self._pyramids()
        dfe = DeepFeatureEnhancement(channels=8)
        with pytest.raises(InvalidInputError):
            dfe(pa[:4], pb)
        shrunk = [pb[0].with_values(pb[0].values[:, :3])] + pb[1:]
        with pytest.raises(InvalidInputError):
            dfe(pa, shrunk)
