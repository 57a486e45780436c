"""scikit-learn style front end: ``fit`` a shape and skeleton, ``transform`` points to weights."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from . import weightfile
from ._assembly import set_workers
from .config import SolveConfig
from .geometry import BoundaryShape
from .optim import train
from .skeleton import HandleSet
from .skinning import bake


def _as_shape(shape) -> BoundaryShape:
    if isinstance(shape, BoundaryShape):
        return shape
    try:
        vertices, facets = shape
    except (TypeError, ValueError):
        raise TypeError("shape must be a BoundaryShape or a (vertices, facets) pair") from None
    return BoundaryShape.from_arrays(vertices, facets)


class RobustSkinningWeights(TransformerMixin, BaseEstimator):
    """Bounded-biharmonic skinning weights optimized on a kernel field.

    ``fit(shape, handles)`` takes the boundary (a ``BoundaryShape`` or a
    ``(vertices, facets)`` pair) and a ``HandleSet`` in the shape's original
    coordinates. ``transform(points)`` returns one weight row per point.
    Constructor parameters mirror ``SolveConfig``; zero means automatic.
    """

    def __init__(self, *, seed=0, n_initial=0, steps=6000, upsamplings=3, lr=0.2,
                 lr_decay=0.3, beta1=0.9, beta2=0.8, adam_eps=1e-8, batch_size=2 ** 15,
                 knn=0, radius_factor=3.0, h_factor=0.5, eps_lagrange=0.0,
                 eps_neumann=0.0, w_low=0.1, w_high=0.4, visibility=True,
                 dimension_scaling=True, workers=1):
        self.seed = seed
        self.n_initial = n_initial
        self.steps = steps
        self.upsamplings = upsamplings
        self.lr = lr
        self.lr_decay = lr_decay
        self.beta1 = beta1
        self.beta2 = beta2
        self.adam_eps = adam_eps
        self.batch_size = batch_size
        self.knn = knn
        self.radius_factor = radius_factor
        self.h_factor = h_factor
        self.eps_lagrange = eps_lagrange
        self.eps_neumann = eps_neumann
        self.w_low = w_low
        self.w_high = w_high
        self.visibility = visibility
        self.dimension_scaling = dimension_scaling
        self.workers = workers

    def config(self) -> SolveConfig:
        params = self.get_params()
        params.pop("workers")
        return SolveConfig(**params)

    def fit(self, shape, handles: HandleSet):
        shape = _as_shape(shape)
        if not isinstance(handles, HandleSet):
            raise TypeError("handles must be a HandleSet")
        if handles.dim != shape.dim:
            raise ValueError(f"{handles.dim}D handles for a {shape.dim}D shape")
        cfg = self.config()
        set_workers(self.workers)
        result = train(cfg, shape, handles.transformed(shape.normalization.apply))
        self.shape_ = shape
        self.field_ = result.field
        self.loss_trace_ = result.trace
        self.volume_ = result.volume
        self.n_handles_ = len(handles)
        self.n_features_in_ = shape.dim
        return self

    def transform(self, X):
        """Weights at points given in the shape's original coordinates."""
        check_is_fitted(self, "field_")
        X = check_array(X, dtype=np.float64, ensure_all_finite=True)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} coordinates, got {X.shape[1]}")
        return self.field_.evaluate(self.shape_.normalization.apply(X))

    def bake(self):
        """Weights at every boundary vertex."""
        check_is_fitted(self, "field_")
        return bake(self.field_)

    def save(self, path):
        check_is_fitted(self, "field_")
        weightfile.save(path, weightfile.WeightFile.from_field(self.field_, self.w_low, self.w_high))
