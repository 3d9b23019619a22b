"""Window statistics used by the single-sensor classifiers (SDI-1).

Feature definitions, all over a window ``w`` of ``N`` samples:

=============  =====================================================
max_val_fft    max |DFT_k(w)| for k = 1..N//2 (unnormalised DFT,
               rectangular window, DC bin excluded)
max, min       extrema
mean           arithmetic mean
avg_dev        mean absolute deviation from the mean
rms            sqrt(mean(w**2))
std_dev        population standard deviation (divide by N)
zcr            sign changes of ``w - mean(w)`` between consecutive
               samples (zeros skipped), divided by N - 1
=============  =====================================================
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from sdi.errors import DataError

FULL = (
    "max_val_fft",
    "max",
    "mean",
    "min",
    "avg_dev",
    "rms",
    "std_dev",
    "zcr",
)
AXIS6 = ("max", "mean", "min", "avg_dev", "rms", "std_dev")
IOT5 = ("max", "mean", "min", "std_dev", "avg_dev")
AXES = ("x", "y", "z")
VARIANTS = ("full", "per_axis6", "iot5")

# samples closer to the mean than this fraction of the largest deviation
# count as zero when looking for sign changes
_ZCR_DEADBAND = 1e-9


@dataclass(frozen=True)
class Window:
    values: np.ndarray
    rate: float
    source: str = "l2"

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float).ravel())


@dataclass(frozen=True)
class FeatureVector:
    names: tuple
    values: np.ndarray

    def __len__(self):
        return len(self.values)

    def __getitem__(self, name: str) -> float:
        return float(self.values[self.names.index(name)])

    def as_dict(self) -> dict:
        return dict(zip(self.names, self.values.tolist()))


def feature_names(variant: str) -> tuple:
    if variant == "full":
        return FULL
    if variant == "iot5":
        return IOT5
    if variant == "per_axis6":
        return tuple(f"{a}_{n}" for a in AXES for n in AXIS6)
    raise DataError(f"unknown feature variant {variant!r}")


def l2_series(trace) -> Window:
    if len(trace) == 0:
        raise DataError("empty trace")
    return Window(np.linalg.norm(trace.values, axis=1), trace.nominal_rate, "l2")


def max_val_fft(x: np.ndarray) -> float:
    spectrum = np.abs(np.fft.rfft(x))
    return float(spectrum[1 : len(x) // 2 + 1].max())


def zero_crossing_rate(x: np.ndarray) -> float:
    s = x - x.mean()
    band = _ZCR_DEADBAND * np.abs(s).max() if len(s) else 0.0
    # a pass through an exact zero still counts as one crossing
    sign = np.sign(s[np.abs(s) > band])
    return float(np.count_nonzero(sign[:-1] != sign[1:]) / (len(x) - 1))


def _stat(name: str, x: np.ndarray) -> float:
    if name in ("avg_dev", "std_dev") and x.min() == x.max():
        return 0.0  # the computed mean of a constant can miss it by an ulp
    if name == "max":
        return float(x.max())
    if name == "min":
        return float(x.min())
    if name == "mean":
        return float(x.mean())
    if name == "avg_dev":
        return float(np.abs(x - x.mean()).mean())
    if name == "rms":
        return float(np.sqrt(np.mean(x * x)))
    if name == "std_dev":
        return float(x.std())
    if name == "zcr":
        return zero_crossing_rate(x)
    if name == "max_val_fft":
        return max_val_fft(x)
    raise DataError(f"unknown feature {name!r}")


def window_stats(x, names) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return np.array([_stat(n, x) for n in names])


def extract_features(w: Window, variant: str = "full") -> FeatureVector:
    """Features of a single scalar window.

    ``per_axis6`` here yields the six-statistic block for one axis;
    :func:`features_per_axis` assembles the 18-value vector for a trace.
    """
    x = w.values
    names = AXIS6 if variant == "per_axis6" else feature_names(variant)
    min_len = 4 if "max_val_fft" in names else 2
    if len(x) < min_len:
        raise DataError(f"window of {len(x)} samples is too short (need {min_len})")
    return FeatureVector(names, window_stats(x, names))


def features_per_axis(trace, variant: str = "per_axis6") -> FeatureVector:
    """Six statistics for each axis, concatenated as X, Y, Z blocks."""
    if variant != "per_axis6":
        raise DataError("per-axis features are only defined for the per_axis6 variant")
    if len(trace) < 2:
        raise DataError("window too short")
    v = trace.values
    blocks = [window_stats(v[:, k], AXIS6) for k in range(3)]
    return FeatureVector(feature_names("per_axis6"), np.concatenate(blocks))


def trace_features(trace, variant: str) -> FeatureVector:
    """``per_axis6`` over the three axes, other variants over the L2 norm."""
    if variant == "per_axis6":
        return features_per_axis(trace, variant)
    return extract_features(l2_series(trace), variant)


def windowed_rows(trace, variant: str, window_samples: int):
    """Yield ``(start_index, FeatureVector)`` for each complete tumbling window."""
    if window_samples < 2:
        raise DataError("window must span at least 2 samples")
    for w in range(len(trace) // window_samples):
        lo = w * window_samples
        yield lo, trace_features(trace.slice(lo, lo + window_samples), variant)


def window_samples(window_ms: float, rate: float) -> int:
    return int(round(window_ms * 1e-3 * rate))
