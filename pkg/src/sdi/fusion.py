"""Gyroscope/magnetometer fusion check (SDI-2).

For a constant world field the device-frame field obeys
``dB/dt = -omega x B``.  We evaluate both sides on a common grid,

    zeta_i = -omega_i x B_i
    eta_i  = (B_i - B_{i-1}) / dt

and watch the mean squared disagreement over short tumbling windows.
The backward difference estimates the derivative half a step back, so by
default ``zeta`` is taken at the same instant (mean of its values at
samples ``i-1`` and ``i``).  ``alignment="sample"`` uses ``zeta_i`` as-is;
its truncation error is first order in ``dt`` instead of second.
Units: zeta and eta in uT/s, MSE in uT^2/s^2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from sdi import features as feat
from sdi import learn
from sdi.errors import DataError
from sdi.sim import MAG_RATE_HZ, Trace, resample_to_common_grid

DEFAULT_MSE_WINDOW = 10  # samples per MSE value (0.1 s at 100 Hz)
DEFAULT_TRIP_FRACTION = 0.8


@dataclass(frozen=True)
class FusionSeries:
    t_ns: np.ndarray
    zeta: np.ndarray
    eta: np.ndarray
    rate: float

    def __post_init__(self):
        if len(self.t_ns) < 2 or self.zeta.shape != self.eta.shape or len(self.zeta) != len(self.t_ns):
            raise DataError("fusion series need equal lengths of at least 2")

    def __len__(self):
        return len(self.t_ns)

    @property
    def residual(self) -> np.ndarray:
        return self.zeta - self.eta


@dataclass(frozen=True)
class MseStream:
    """One MSE value per tumbling window of ``window`` fusion samples."""

    values: np.ndarray
    window: int
    t_ns: np.ndarray  # start of each window

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True)
class FusionDetectorConfig:
    """Threshold detector over groups of ``window`` consecutive MSE values."""

    threshold: float
    window: int = 10
    trip_fraction: float = DEFAULT_TRIP_FRACTION

    def __post_init__(self):
        if not 0 < self.trip_fraction <= 1:
            raise DataError("trip_fraction must be in (0, 1]")
        if self.window < 1:
            raise DataError("window must hold at least one MSE value")
        if not math.isfinite(self.threshold):
            raise DataError("threshold must be finite")


def fusion_from_arrays(t_ns, omega, field, rate: float, alignment: str = "midpoint") -> FusionSeries:
    omega = np.asarray(omega, dtype=float)
    field = np.asarray(field, dtype=float)
    if len(field) < 3:
        raise DataError("need at least 3 aligned samples")
    dt = 1.0 / rate
    cross = -np.cross(omega, field)
    if alignment == "midpoint":
        zeta = 0.5 * (cross[1:] + cross[:-1])
    elif alignment == "sample":
        zeta = cross[1:]
    else:
        raise DataError(f"unknown alignment {alignment!r}")
    eta = np.diff(field, axis=0) / dt
    return FusionSeries(np.asarray(t_ns)[1:], zeta, eta, rate)


def build_fusion_series(
    gyro: Trace, mag: Trace, grid_rate: float = MAG_RATE_HZ, alignment: str = "midpoint"
) -> FusionSeries:
    aligned = resample_to_common_grid(gyro, mag, grid_rate)
    return fusion_from_arrays(aligned.t_ns, aligned.omega, aligned.field, grid_rate, alignment)


def mse(fs: FusionSeries, window: int = DEFAULT_MSE_WINDOW) -> MseStream:
    """Mean over each window of the squared 3-axis difference ``|zeta - eta|^2``."""
    if window < 1 or window > len(fs):
        raise DataError(f"window {window} does not fit a series of {len(fs)} samples")
    n = len(fs) // window
    sq = np.sum(fs.residual[: n * window] ** 2, axis=1)
    values = sq.reshape(n, window).mean(axis=1)
    return MseStream(values, window, fs.t_ns[: n * window : window])


def learn_threshold(benign_mse, attack_mse) -> learn.Stump:
    """Gini-optimal single split on the MSE value; above the threshold means attack."""
    b = np.asarray(benign_mse, dtype=float).ravel()
    a = np.asarray(attack_mse, dtype=float).ravel()
    if not len(b) or not len(a):
        raise DataError("both MSE lists must be non-empty")
    ds = learn.Dataset(
        np.concatenate([b, a])[:, None],
        np.concatenate([np.zeros(len(b), int), np.ones(len(a), int)]),
        ["mse"],
    )
    return learn.fit_stump(ds)


def windowed_fusion_detect(mse_stream, cfg: FusionDetectorConfig) -> list[tuple[int, int]]:
    """Verdict per group of ``cfg.window`` MSE values: attack when the share above
    the threshold is at least ``cfg.trip_fraction``.  A trailing partial group
    is dropped.
    """
    values = np.asarray(getattr(mse_stream, "values", mse_stream), dtype=float)
    starts = getattr(mse_stream, "t_ns", None)
    if len(values) == 0:
        raise DataError("empty MSE stream")
    needed = math.ceil(cfg.trip_fraction * cfg.window - 1e-9)
    verdicts = []
    for w in range(len(values) // cfg.window):
        block = values[w * cfg.window : (w + 1) * cfg.window]
        above = int(np.count_nonzero(block > cfg.threshold))
        start = int(starts[w * cfg.window]) if starts is not None else w * cfg.window
        verdicts.append((start, int(above >= needed)))
    return verdicts


def mse_window_features(mse_stream, window: int, variant: str = "full") -> np.ndarray:
    """Feature rows computed over tumbling groups of ``window`` MSE values."""
    values = np.asarray(getattr(mse_stream, "values", mse_stream), dtype=float)
    if window < 4:
        raise DataError("MSE feature windows need at least 4 values")
    rows = []
    for w in range(len(values) // window):
        block = feat.Window(values[w * window : (w + 1) * window], rate=1.0, source="mse")
        rows.append(feat.extract_features(block, variant).values)
    return np.array(rows).reshape(-1, len(feat.feature_names(variant)))


def mse_feature_detect(mse_stream, window: int, model, variant: str = "full"):
    """Feature vectors and tree verdicts for each group of ``window`` MSE values."""
    X = mse_window_features(mse_stream, window, variant)
    return X, [int(model.predict(x)) for x in X]
