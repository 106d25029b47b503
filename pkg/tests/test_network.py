import numpy as np
import pytest

from gddfuse import autodiff as ad
from gddfuse.autodiff import ShapeError
from gddfuse.gradcheck import check_function, check_model
from gddfuse.network import (GddModel, NetworkConfig, attention_gate, build_gdd, build_variant,
                             canonical_variant, fru, init_code_tensor, uru)
from gddfuse.rng import Rng

SMALL = NetworkConfig(scales=2, channels=8, guidance_channels=8, seed=1)


@pytest.fixture
def guide(rng):
    return rng.random((3, 16, 16))


@pytest.mark.parametrize("k", [2, 3, 4])
def test_shape_ladder(k, rng):
    size = 2 ** k * 2
    config = NetworkConfig(scales=k, channels=4, guidance_channels=4)
    model = build_gdd(config, (3, size, size), 5)
    g = rng.random((3, size, size))
    gamma, xi = model.guidance_forward(g)
    assert model.z.shape == (4, 2, 2)
    for s in range(1, k + 1):
        side = size // 2 ** (k - s)
        assert gamma[s - 1].shape == (4, side, side)
        assert xi[s - 1].shape == (4, side, side)
    assert model(g).shape == (5, size, size)


def test_default_scale_example(rng):
    model = build_gdd(NetworkConfig(scales=4, channels=64, guidance_channels=16), (3, 64, 64), 8)
    assert model.z.shape == (64, 4, 4)
    gamma, xi = model.guidance_forward(rng.random((3, 64, 64)))
    assert [t.shape[1] for t in gamma] == [8, 16, 32, 64]
    assert [t.shape[1] for t in xi] == [8, 16, 32, 64]
    assert model(rng.random((3, 64, 64))).shape == (8, 64, 64)


def test_output_in_unit_interval(guide):
    out = build_gdd(SMALL, guide.shape, 3)(guide).value
    assert np.all(np.isfinite(out)) and out.min() > 0 and out.max() < 1


def test_indivisible_size_names_requirement():
    with pytest.raises(ShapeError, match="divisible by 2\\*\\*3 = 8"):
        build_gdd(NetworkConfig(scales=3, channels=4, guidance_channels=4), (3, 20, 24), 2)


def test_guidance_shape_mismatch(guide):
    model = build_gdd(SMALL, guide.shape, 3)
    with pytest.raises(ShapeError):
        model(guide[:, :8, :8])


def test_scales_below_two_rejected():
    with pytest.raises(ValueError):
        NetworkConfig(scales=1)


def test_config_is_immutable():
    with pytest.raises(Exception):
        SMALL.scales = 3


@pytest.mark.parametrize("variant", ["GDD", "DD", "DIP_Z", "DIP_G"])
def test_no_unreachable_parameters(variant, guide):
    model = build_variant(variant, SMALL, guide.shape, 4)
    assert model.unreachable_parameters(guide) == []


@pytest.mark.parametrize("variant", ["GDD", "DD", "DIP_Z", "DIP_G"])
def test_variants_share_output_shape(variant, guide):
    assert build_variant(variant, SMALL, guide.shape, 4)(guide).shape == (4, 16, 16)


def test_forward_is_deterministic(guide):
    a = build_gdd(SMALL, guide.shape, 3)
    b = build_gdd(SMALL, guide.shape, 3)
    assert a(guide).value.tobytes() == a(guide).value.tobytes() == b(guide).value.tobytes()


def test_seed_changes_initialisation(guide):
    a = build_gdd(SMALL, guide.shape, 3)
    b = build_gdd(NetworkConfig(scales=2, channels=8, guidance_channels=8, seed=2), guide.shape, 3)
    assert not np.array_equal(a(guide).value, b(guide).value)


def test_guidance_features_pure_and_sensitive(guide):
    model = build_gdd(SMALL, guide.shape, 3)
    f1 = model.guidance_forward(guide)
    f2 = model.guidance_forward(guide)
    for a, b in zip(f1.gamma + f1.xi, f2.gamma + f2.xi):
        assert a.value.tobytes() == b.value.tobytes()
    model.params["guide.enc0.conv1.weight"].value[0, 0, 1, 1] += 0.5
    f3 = model.guidance_forward(guide)
    assert any(not np.array_equal(a.value, b.value) for a, b in zip(f1.gamma, f3.gamma))


def test_dd_ignores_guidance(rng):
    model = build_variant("DD", SMALL, (3, 16, 16), 3)
    a = model(rng.random((3, 16, 16))).value
    b = model(rng.random((3, 16, 16))).value
    assert a.tobytes() == b.tobytes() == model().value.tobytes()


def test_dip_g_depends_on_guidance(rng):
    model = build_variant("DIP_G", SMALL, (3, 16, 16), 3)
    assert not np.array_equal(model(rng.random((3, 16, 16))).value, model(rng.random((3, 16, 16))).value)


def test_gdd_depends_on_guidance(rng):
    model = build_gdd(SMALL, (3, 16, 16), 3)
    assert not np.array_equal(model(rng.random((3, 16, 16))).value, model(rng.random((3, 16, 16))).value)


def test_code_tensor_fixed_during_forward(guide):
    model = build_gdd(SMALL, guide.shape, 3)
    z = model.z.copy()
    loss = ad.square_sum(model(guide))
    ad.backward(loss)
    assert np.array_equal(model.z, z)
    assert all(p is not model.z for p in model.parameters())


class TestGate:
    def test_range(self, rng):
        w = rng.standard_normal((4, 4, 1, 1))
        out = attention_gate(rng.standard_normal((4, 6, 6)), w, rng.standard_normal(4)).value
        assert out.min() > 0 and out.max() < 1

    def test_locality(self, rng):
        f = rng.standard_normal((4, 6, 6))
        w, b = rng.standard_normal((4, 4, 1, 1)), rng.standard_normal(4)
        base = attention_gate(f, w, b).value
        f2 = f.copy()
        f2[:, 2, 3] += 1.0
        diff = np.any(attention_gate(f2, w, b).value != base, axis=0)
        assert diff[2, 3] and diff.sum() == 1

    def test_zero_weights(self, rng):
        out = attention_gate(rng.standard_normal((3, 4, 4)), np.zeros((3, 3, 1, 1)), np.zeros(3)).value
        assert np.all(out == 0.5)


class TestModulation:
    def test_bypass_is_identity(self, rng):
        f = ad.constant(rng.standard_normal((2, 4, 4)))
        w, b = rng.standard_normal((2, 2, 1, 1)), np.zeros(2)
        assert uru(f, f, w, b, bypass=True) is f
        assert fru(f, f, w, b, bypass=True) is f

    def test_zero_features(self, rng):
        src = rng.standard_normal((2, 4, 4))
        w, b = rng.standard_normal((2, 2, 1, 1)), rng.standard_normal(2)
        assert not uru(np.zeros((2, 4, 4)), src, w, b).value.any()

    def test_constant_source_scales_channels(self, rng):
        f = rng.standard_normal((3, 4, 4))
        xi = np.broadcast_to(rng.standard_normal((3, 1, 1)), (3, 4, 4)).copy()
        w, b = rng.standard_normal((3, 3, 1, 1)), rng.standard_normal(3)
        gate = attention_gate(xi, w, b).value[:, 0, 0]
        np.testing.assert_allclose(fru(f, xi, w, b).value, f * gate[:, None, None], atol=1e-15)

    def test_shape_mismatch(self, rng):
        with pytest.raises(ShapeError):
            uru(np.zeros((2, 4, 4)), np.zeros((2, 2, 2)), np.ones((2, 2, 1, 1)), np.zeros(2))

    @pytest.mark.parametrize("unit", [uru, fru])
    def test_gradients(self, unit, rng):
        inputs = dict(f=rng.standard_normal((2, 4, 4)), s=rng.standard_normal((2, 4, 4)),
                      w=rng.standard_normal((2, 2, 1, 1)), b=rng.standard_normal(2))
        assert check_function(unit.__name__, lambda f, s, w, b: unit(f, s, w, b), inputs).error < 1e-5


def test_bypassed_gates_make_gdd_a_deep_decoder(guide):
    gdd = build_gdd(SMALL, guide.shape, 3)
    dd = build_variant("DD", SMALL, guide.shape, 3)
    gdd.bypass_gates = True
    for name, p in dd.params.items():
        p.value[...] = gdd.params[name].value
    dd.z[...] = gdd.z
    np.testing.assert_array_equal(gdd(guide).value, dd().value)


def test_end_to_end_gradient():
    assert check_model().error < 1e-4


class TestCodeTensor:
    def test_range_and_statistics(self):
        z = init_code_tensor(Rng(0), (64, 4, 4))
        assert z.min() >= 0 and z.max() <= 0.1
        assert abs(z.mean() - 0.05) <= 0.005

    def test_deterministic(self):
        assert init_code_tensor(Rng(5), (2, 3, 3)).tobytes() == init_code_tensor(Rng(5), (2, 3, 3)).tobytes()


class TestAttentionMaps:
    def test_enumeration(self, guide):
        model = build_gdd(SMALL, guide.shape, 3)
        maps = model.export_attention_maps(guide)
        assert len(maps) == SMALL.scales * 2 * SMALL.channels
        for scale, unit, ch, img in maps:
            side = 16 // 2 ** (SMALL.scales - scale)
            assert unit in ("URU", "FRU") and 0 <= ch < SMALL.channels
            assert img.shape == (1, side, side)
            assert img.min() > 0 and img.max() < 1

    def test_non_gdd_rejected(self, guide):
        with pytest.raises(ValueError):
            build_variant("DIP_G", SMALL, guide.shape, 3).export_attention_maps(guide)


def test_variant_aliases():
    assert canonical_variant("dip-z") == "DIP_Z"
    assert canonical_variant("gdd") == "GDD"
    with pytest.raises(ValueError):
        canonical_variant("unet")


def test_float32_model(guide):
    config = NetworkConfig(scales=2, channels=4, guidance_channels=4, dtype="float32")
    out = GddModel(config, guide.shape, 2)(guide)
    assert out.value.dtype == np.float32
