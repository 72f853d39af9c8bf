"""Scikit-learn style wrappers around the density-map pipeline.

DensityMapBuilder is a (stateless) transformer turning
(scene, instance_map) pairs into density maps; MedianBaselineRegressor
is the constant-median baseline predictor. Both follow the sklearn
get_params/set_params contract so they compose with sklearn tooling.
"""

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin

from .allometry import AllometricModel, DEFAULT_ALLOMETRY
from .density import DEFAULT_MIN_AREA_FRACTION, build_density_map

__all__ = ["DensityMapBuilder", "MedianBaselineRegressor"]


class DensityMapBuilder(BaseEstimator, TransformerMixin):
    """Transform (scene, instance_map) pairs into per-pixel AGB density maps.

    Parameters mirror build_density_map: the allometric coefficient and
    exponent, and the minimum visible-area fraction below which a tree is
    excluded from the map. The transformer is stateless; fit only
    validates parameters.
    """

    def __init__(
        self,
        coefficient=DEFAULT_ALLOMETRY.coefficient,
        exponent=DEFAULT_ALLOMETRY.exponent,
        min_area_fraction=DEFAULT_MIN_AREA_FRACTION,
    ):
        self.coefficient = coefficient
        self.exponent = exponent
        self.min_area_fraction = min_area_fraction

    def _model(self):
        return AllometricModel(coefficient=self.coefficient, exponent=self.exponent)

    def fit(self, X=None, y=None):
        self._model()
        return self

    def transform(self, X):
        """Build one density map per (scene, instance_map) pair in X."""
        model = self._model()
        return [
            build_density_map(
                scene,
                instance_map,
                model=model,
                min_area_fraction=self.min_area_fraction,
            )
            for scene, instance_map in X
        ]


class MedianBaselineRegressor(BaseEstimator, RegressorMixin):
    """Predict the median training total AGB for every sample.

    fit ignores X and takes y as the training totals; predict returns the
    stored median for each row of X. This is the reference baseline that a
    learned AGB model has to beat.
    """

    def fit(self, X, y):
        y = np.asarray(y, dtype=np.float64)
        if y.size == 0:
            raise ValueError("cannot fit the median baseline on an empty y")
        self.median_ = float(np.median(y))
        return self

    def predict(self, X):
        if not hasattr(self, "median_"):
            raise ValueError("MedianBaselineRegressor is not fitted; call fit first")
        n = len(X)
        return np.full(n, self.median_, dtype=np.float64)
