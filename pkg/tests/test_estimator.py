import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from gddfuse import GuidedDeepDecoder
from gddfuse.autodiff import ShapeError
from gddfuse.degradation import SpectralResponse, synth_scene, wald_protocol


@pytest.fixture(scope="module")
def data():
    x = synth_scene(5, 4, 16)
    return wald_protocol(x, 4, "block", srf=SpectralResponse.contiguous(4, 2))


def small(**kw):
    return GuidedDeepDecoder(scales=2, channels=4, n_iter=6, eval_every=3, **kw)


def test_params_round_trip():
    est = small(lr=0.02)
    params = est.get_params()
    assert params["lr"] == 0.02 and params["scales"] == 2
    twin = clone(est)
    assert twin.get_params() == params
    est.set_params(mu=0.5)
    assert est.mu == 0.5


def test_fit_transform(data):
    y, g, ref = data
    est = small()
    out = est.fit_transform(y, g, reference=ref)
    assert out.shape == ref.shape
    assert est.transform() is est.fused_
    assert est.n_features_in_ == 4
    assert len(est.trace_) == 3
    assert est.evaluate(ref, ratio=4).psnr == pytest.approx(est.trace_.final.psnr)


def test_refit_restarts_from_seed(data):
    y, g, _ = data
    est = small()
    a = est.fit(y, g).fused_.copy()
    b = est.fit(y, g).fused_
    assert a.tobytes() == b.tobytes()


def test_attention_maps(data):
    y, g, _ = data
    maps = small().fit(y, g).attention_maps()
    assert len(maps) == 2 * 2 * 4


def test_not_fitted():
    with pytest.raises(NotFittedError):
        small().transform()


def test_validation(data):
    y, g, ref = data
    with pytest.raises(ValueError):
        small(variant="unet").fit(y, g)
    with pytest.raises(ValueError):
        small().fit(y, g, reference=ref[:, :8, :8])
    with pytest.raises(ShapeError):
        small().fit(y[:, :3, :3], g)
    with pytest.raises(ValueError):
        small().fit(np.full_like(y, np.nan), g)
