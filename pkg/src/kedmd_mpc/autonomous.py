"""Kernel EDMD for autonomous maps ``x+ = F(x)``."""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .exceptions import ConfigurationError
from .kernels import WendlandKernel, factorize, kernel_matrix
from .sets import Box, ClusterSet


@dataclass(frozen=True)
class AutonomousModel:
    """Fitted Koopman matrix approximant ``K_hat`` (d x d).

    An observable with values ``psi_X`` on the cluster points is propagated
    to ``x -> (K_hat psi_X) . k_X(x)``.
    """

    kernel: WendlandKernel
    clusters: ClusterSet
    koopman: np.ndarray
    lam: float = 0.0
    domain: Optional[Box] = None

    @property
    def d(self) -> int:
        return len(self.clusters)

    def _check_query(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.clusters.dim:
            raise ConfigurationError(f"state of dimension {x.shape[-1]}, expected {self.clusters.dim}")
        if self.domain is not None and not self.domain.contains(x):
            warnings.warn(f"query {x} outside the domain; prediction decays to zero", stacklevel=3)
        return x

    def predict_observable(self, psi_X, x):
        return predict_observable(self, psi_X, x)

    def predict_state(self, x):
        return predict_state(self, x)


def image_matrix(kernel, clusters: ClusterSet, images):
    """Matrix with entry ``(i, j) = k(F(x_i), x_j)``.

    Row ``i`` holds the features of the image of ``x_i``, so that
    ``M K^{-1} psi_X`` is the interpolant of ``psi`` evaluated at ``F(X)``.
    """
    return kernel.cross(images, clusters.points)


def fit_autonomous(clusters: ClusterSet, images, kernel: WendlandKernel, lam=0.0,
                   domain: Optional[Box] = None) -> AutonomousModel:
    images = np.atleast_2d(np.asarray(images, dtype=float))
    if images.shape != clusters.points.shape:
        raise ConfigurationError(f"images of shape {images.shape}, expected {clusters.points.shape}")
    if domain is not None:
        outside = [i for i, y in enumerate(images) if not domain.contains(y)]
        if outside:
            warnings.warn(
                f"{len(outside)} sampled images leave the domain (first: index {outside[0]}); "
                "forward invariance is violated",
                stacklevel=2,
            )
    factor = factorize(kernel_matrix(clusters.points, kernel), lam)
    M = image_matrix(kernel, clusters, images)
    left = factor.solve(M)
    # (K^-1 M) K^-1 = (K^-1 (K^-1 M)^T)^T since K is symmetric
    koopman = factor.solve(left.T).T
    koopman.setflags(write=False)
    return AutonomousModel(kernel, clusters, koopman, float(lam), domain)


def predict_observable(model: AutonomousModel, psi_X, x):
    psi_X = np.asarray(psi_X, dtype=float)
    if psi_X.shape[0] != model.d:
        raise ConfigurationError(f"psi_X has {psi_X.shape[0]} values, expected {model.d}")
    x = model._check_query(x)
    coef = model.koopman @ psi_X
    if x.ndim == 1:
        return coef.T @ model.kernel.features(x, model.clusters.points)
    return model.kernel.cross(x, model.clusters.points) @ coef


def predict_state(model: AutonomousModel, x):
    """Propagate the ``n`` coordinate observables at once."""
    return predict_observable(model, model.clusters.points, x)
