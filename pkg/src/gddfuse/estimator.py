"""scikit-learn style front end to the per-image fusion optimiser."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .losses import canonical_task
from .metrics import evaluate
from .network import NetworkConfig, canonical_variant
from .runner import RunConfig, run_fusion
from .validation import check_image, check_pair


class GuidedDeepDecoder(TransformerMixin, BaseEstimator, auto_wrap_output_keys=None):
    """Unsupervised fusion of one observation with its guidance image.

    ``fit(Y, G)`` optimises a freshly initialised network on the single pair
    and stores the reconstruction in ``fused_``.  No training data is
    involved, so every call to ``fit`` starts from the seed again.

    Parameters
    ----------
    task : {"hs_sr", "pansharpen", "denoise"}
    variant : {"gdd", "dd", "dip-z", "dip-g"}
    scales, channels, guidance_channels :
        Network depth and widths.  ``guidance_channels=None`` uses ``channels``.
    n_iter, lr :
        Adam iterations and step size.
    mu : float
        Weight of the spectral fidelity term.
    auto_mu : bool
        Rebalance ``mu`` so both loss terms are equal at the start.
    downsampler : {"block", "bicubic", "gaussian"} or None
        Spatial degradation inside the loss; ``None`` picks the task default.
    dtype : {"float64", "float32"}

    Attributes
    ----------
    fused_ : ndarray of shape (C, H, W)
    trace_ : RunTrace
    model_ : GddModel
    """

    def __init__(self, task="hs_sr", variant="gdd", scales=4, channels=64, guidance_channels=None,
                 n_iter=5000, lr=0.01, mu=1.0, auto_mu=False, seed=0, eval_every=50,
                 downsampler=None, dtype="float64"):
        self.task = task
        self.variant = variant
        self.scales = scales
        self.channels = channels
        self.guidance_channels = guidance_channels
        self.n_iter = n_iter
        self.lr = lr
        self.mu = mu
        self.auto_mu = auto_mu
        self.seed = seed
        self.eval_every = eval_every
        self.downsampler = downsampler
        self.dtype = dtype

    def _configs(self):
        config = NetworkConfig(
            scales=self.scales, channels=self.channels,
            guidance_channels=self.guidance_channels or self.channels,
            seed=self.seed, dtype=self.dtype)
        run = RunConfig(task=self.task, variant=self.variant, iterations=self.n_iter, lr=self.lr,
                        mu=self.mu, seed=self.seed, eval_every=min(self.eval_every, self.n_iter),
                        auto_mu=self.auto_mu)
        return config, run

    def fit(self, Y, G, reference=None, srf=None):
        task = canonical_task(self.task)
        canonical_variant(self.variant)
        y, g = check_pair(Y, G, task)
        ref = None
        if reference is not None:
            ref = check_image(reference, "reference", n_channels=y.shape[0])
            if ref.shape[1:] != g.shape[1:]:
                raise ValueError(f"reference {ref.shape} must match guidance size {g.shape[1:]}")
        config, run = self._configs()
        x, trace, model = run_fusion(task, y, g, config, run, reference=ref,
                                     kind=self.downsampler, srf=srf)
        self.fused_ = x
        self.trace_ = trace
        self.model_ = model
        self.n_features_in_ = y.shape[0]
        self.guidance_ = g
        return self

    def transform(self, Y=None, G=None):
        """Return the reconstruction of the fitted pair."""
        check_is_fitted(self, "fused_")
        return self.fused_

    def fit_transform(self, Y, G=None, **fit_params):
        return self.fit(Y, G, **fit_params).fused_

    def evaluate(self, reference=None, ratio=None, ms_low=None, pan=None, pan_low=None):
        """Quality report of ``fused_`` against whatever inputs are given."""
        check_is_fitted(self, "fused_")
        if ratio is None:
            ratio = self.guidance_.shape[1] // np.shape(ms_low)[1] if ms_low is not None else 1
        return evaluate(self.fused_, reference, ratio, ms_low, pan, pan_low)

    def attention_maps(self):
        check_is_fitted(self, "model_")
        return self.model_.export_attention_maps(self.guidance_)
