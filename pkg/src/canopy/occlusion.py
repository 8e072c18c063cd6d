"""Point-density occlusion model for layered canopies.

Deeper canopy layers receive a geometrically shrinking share of the pulse
returns. The share per layer ordinal follows a logarithmic series
distribution; inverting the cumulative share gives the total cloud density
needed to leave a workable density at a given depth.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import DivergedDepthError, EmptyInputError

FIT_HORIZON = 5      # (n, p_n) pairs recorded per cloud, zero-filled
THETA_BOUNDS = (1e-6, 1.0 - 1e-6)

# Published reference results for the printed three-digit parameter 0.266.
# Direct evaluation of 0.266 gives 28.6 / 157.2 at depths 2 / 3; the fit
# behind the published 30.1 / 169.57 evidently carried more digits, so both
# are reported side by side rather than silently reconciled.
REFERENCE_THETA = 0.266
REFERENCE_PCD_MIN = {2: 30.1, 3: 169.57}
REFERENCE_CAVEAT = (
    "reference values correspond to a fit whose parameter was published "
    "rounded to 0.266; direct evaluation of 0.266 yields the pcd_min column"
)


@dataclass(frozen=True)
class LogSeriesModel:
    """Logarithmic series distribution over layer ordinals n >= 1."""

    theta: float

    def __post_init__(self):
        if not 0.0 < self.theta < 1.0:
            raise ValueError("theta must lie in (0, 1)")


@dataclass(frozen=True)
class DensityObservation:
    """Observed fraction of returns recorded at layer ordinal n."""

    n: int
    p: float

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("layer ordinals start at 1")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("fractions lie in [0, 1]")


def log_series_pmf(model: LogSeriesModel, n) -> float:
    """theta**n / (-ln(1 - theta) * n); vectorized over n."""
    n_arr = np.asarray(n, dtype=np.float64)
    val = model.theta ** n_arr / (-np.log1p(-model.theta) * n_arr)
    return float(val) if np.isscalar(n) or n_arr.ndim == 0 else val


def layer_fractions(layers: Sequence, pcd: float,
                    horizon: int = FIT_HORIZON) -> List[DensityObservation]:
    """Per-ordinal density fractions; absent layers up to the horizon are
    recorded as zero."""
    if pcd <= 0:
        raise ValueError("point cloud density must be positive")
    obs = []
    for n in range(1, horizon + 1):
        density = layers[n - 1].density if n <= len(layers) else 0.0
        obs.append(DensityObservation(n, min(density / pcd, 1.0)))
    return obs


def fit_log_series(observations: Sequence[DensityObservation]
                   ) -> Tuple[LogSeriesModel, float]:
    """Least-squares fit of theta over all (n, p_n) pairs.

    Bounded 1-D minimization on theta; returns the model and the achieved
    mean squared error.
    """
    if not observations:
        raise EmptyInputError("no density observations to fit")
    ns = np.array([o.n for o in observations], dtype=np.float64)
    ps = np.array([o.p for o in observations], dtype=np.float64)

    def mse(theta: float) -> float:
        pred = theta ** ns / (-np.log1p(-theta) * ns)
        return float(np.mean((pred - ps) ** 2))

    res = minimize_scalar(mse, bounds=THETA_BOUNDS, method="bounded",
                          options={"xatol": 1e-9})
    theta = float(np.clip(res.x, *THETA_BOUNDS))
    return LogSeriesModel(theta), mse(theta)


def pcd_min(n: int, pcd_min_top: float, model: LogSeriesModel) -> float:
    """Cloud density required so depth n still receives pcd_min_top.

    Divides the top-layer requirement by the share of returns left below
    the n-1 layers above.
    """
    if n < 1:
        raise ValueError("layer ordinals start at 1")
    if pcd_min_top <= 0:
        raise ValueError("pcd_min_top must be positive")
    partial = 0.0
    for k in range(1, n):
        partial += log_series_pmf(model, k)
    remaining = 1.0 - partial
    if remaining <= 1e-12:
        raise DivergedDepthError(
            f"cumulative fraction above layer {n} reaches 1; no finite density suffices")
    return pcd_min_top / remaining
