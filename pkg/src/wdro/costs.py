"""Transport costs c(z, z0) for the adversary's perturbation budget.

Two base kinds (squared Euclidean, squared sup-norm) plus a
covariate-shift wrapper that charges the inner cost on features and
infinity whenever labels differ.  Infinity is the IEEE inf, never a large
finite float.
"""

from __future__ import annotations

import math

import numpy as np

from .nets import DimensionMismatchError, Sample

SQ_L2 = "sq-l2"
SQ_LINF = "sq-linf"


class UnsupportedSmoothGradientError(TypeError):
    """Raised when a smooth gradient is requested from the squared sup-norm
    cost; use the proximal solver instead."""


class TransportCost:
    """Cost of moving z0 to z.  kind is "sq-l2" or "sq-linf"; wrap in
    CovariateShift to freeze labels.  The plain kinds read only the feature
    vector, which doubles as unsupervised mode (pack everything into x)."""

    def __init__(self, kind):
        if kind not in (SQ_L2, SQ_LINF):
            raise ValueError(f"unknown cost kind {kind!r}")
        self.kind = kind

    @property
    def smooth(self):
        return self.kind == SQ_L2

    def _check(self, z: Sample, z0: Sample):
        if z.x.shape != z0.x.shape:
            raise DimensionMismatchError(
                f"feature dims differ: {z.x.shape} vs {z0.x.shape}"
            )

    def cost(self, z: Sample, z0: Sample) -> float:
        self._check(z, z0)
        return self.feature_cost(z.x, z0.x)

    def feature_cost(self, x, x0) -> float:
        d = x - x0
        if self.kind == SQ_L2:
            return float(d @ d)
        return float(np.max(np.abs(d)) ** 2) if d.size else 0.0

    def grad_first(self, z: Sample, z0: Sample) -> np.ndarray:
        self._check(z, z0)
        return self.feature_grad(z.x, z0.x)

    def feature_grad(self, x, x0) -> np.ndarray:
        if self.kind != SQ_L2:
            raise UnsupportedSmoothGradientError(
                "squared sup-norm has no smooth gradient; use the proximal "
                "ascent solver"
            )
        return 2.0 * (x - x0)

    def describe(self):
        return self.kind


class CovariateShift(TransportCost):
    """Feature-only adversary: inner cost on x, +inf when labels differ."""

    def __init__(self, inner: TransportCost):
        self.inner = inner
        self.kind = f"covshift:{inner.kind}"

    @property
    def smooth(self):
        return self.inner.smooth

    def cost(self, z: Sample, z0: Sample) -> float:
        self._check(z, z0)
        if not _labels_equal(z.y, z0.y):
            return math.inf
        return self.inner.feature_cost(z.x, z0.x)

    def feature_cost(self, x, x0) -> float:
        return self.inner.feature_cost(x, x0)

    def grad_first(self, z: Sample, z0: Sample) -> np.ndarray:
        self._check(z, z0)
        if not _labels_equal(z.y, z0.y):
            raise ValueError("covariate-shift gradient undefined for unequal labels")
        return self.inner.feature_grad(z.x, z0.x)

    def feature_grad(self, x, x0) -> np.ndarray:
        return self.inner.feature_grad(x, x0)

    def describe(self):
        return self.kind


def _labels_equal(y, y0):
    ya, yb = np.asarray(y), np.asarray(y0)
    return ya.shape == yb.shape and bool(np.all(ya == yb))


def parse_cost(name: str) -> TransportCost:
    """Cost from a CLI/config string: "sq-l2", "sq-linf", "covshift:sq-l2",
    "covshift:sq-linf"."""
    if name.startswith("covshift:"):
        return CovariateShift(parse_cost(name[len("covshift:"):]))
    return TransportCost(name)
