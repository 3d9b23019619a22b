"""Doppler radar signal chain for accelerometer cross-checks.

A transmitter emits ``A0 cos(2 pi f0 t)``; the echo from a device at range
``R(t) = R0 + r(t)`` is ``A_R cos(2 pi f0 t + phi(t)) + w(t)`` with
``phi = 4 pi f0 R / c``.  Mixing with the reference and its quadrature copy
and low-pass filtering gives

    x_I =  (A_R / 2) cos(phi)
    x_Q = -(A_R / 2) sin(phi)

so ``x_I + i x_Q = (A_R / 2) exp(-i phi)``.  The phase is recovered with a
four-quadrant arctangent of ``(-x_Q, x_I)``, unwrapped, low-passed and
high-passed to drop the constant ``4 pi f0 R0 / c`` term.

Sign conventions: ``r`` grows away from the radar, so an approaching device
has ``dr/dt < 0``.  The Doppler shift ``delta_f`` is the instantaneous
frequency of ``x_I + i x_Q``, i.e. ``-(1 / 2 pi) dphi/dt = -2 f0 (dr/dt) / c``,
positive when approaching.  Acceleration is ``d2r/dt2``.

Two synthesis modes are available.  ``"analytic"`` writes the mixer outputs
at baseband directly (the ``2 f0`` images are dropped, as an ideal filter
would).  ``"carrier"`` samples a real carrier at a low stand-in frequency
and runs the mixers and filters on it.  Propagation speed is scaled so
the phase is identical to the real carrier's, which lets the two modes be
compared sample by sample.
"""

from __future__ import annotations

import functools
import math
import re
from dataclasses import dataclass, field

import numpy as np
from scipy import signal
from scipy.integrate import cumulative_trapezoid

from sdi.errors import DataError, NumericError, SignalLostError
from sdi.sim import Activity, Label, Sensor, Trace

SPEED_OF_LIGHT = 3.0e8
GRAVITY = 9.81
DEFAULT_BASEBAND_RATE = 2000.0
DEFAULT_LOW_F0 = 10_000.0


@dataclass(frozen=True)
class RadarConfig:
    f0: float = 2.4e9
    A0: float = 1.0
    c: float = SPEED_OF_LIGHT
    sample_rate: float = DEFAULT_BASEBAND_RATE
    echo_amplitude: float = 1.0  # A_R, held constant

    def __post_init__(self):
        if not self.f0 > 0 or not self.c > 0:
            raise DataError("f0 and c must be positive")
        if not self.sample_rate > 0:
            raise DataError("sample_rate must be positive")

    @property
    def wavelength(self) -> float:
        return self.c / self.f0

    @property
    def phase_per_metre(self) -> float:
        return 4 * math.pi * self.f0 / self.c


@dataclass(frozen=True)
class RadialMotion:
    """Displacement ``r`` along the radar line of sight on the grid ``t``."""

    t: np.ndarray
    r: np.ndarray
    R0: float = 1.0
    a: np.ndarray | None = None  # exact acceleration when known

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        r = np.asarray(self.r, dtype=float)
        if t.shape != r.shape or t.ndim != 1 or len(t) < 2:
            raise DataError("t and r must be 1-D arrays of equal length >= 2")
        if np.any(self.R0 + r <= 0):
            raise DataError("range R0 + r(t) must stay positive")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "r", r)
        if self.a is not None:
            object.__setattr__(self, "a", np.asarray(self.a, dtype=float))

    @property
    def rate(self) -> float:
        return 1.0 / (self.t[1] - self.t[0])

    @property
    def R(self) -> np.ndarray:
        return self.R0 + self.r

    def velocity(self) -> np.ndarray:
        return np.gradient(self.r, self.t)

    def acceleration(self) -> np.ndarray:
        if self.a is not None:
            return self.a
        return np.gradient(self.velocity(), self.t)

    @classmethod
    def sine(cls, freq: float, amplitude: float, duration: float, rate: float, R0: float = 1.0):
        t = _grid(duration, rate)
        w = 2 * math.pi * freq
        return cls(t, amplitude * np.sin(w * t), R0, -amplitude * w * w * np.sin(w * t))

    @classmethod
    def constant_velocity(cls, v: float, duration: float, rate: float, R0: float = 1.0):
        t = _grid(duration, rate)
        return cls(t, v * t, R0, np.zeros_like(t))

    @classmethod
    def still(cls, duration: float, rate: float, R0: float = 1.0):
        t = _grid(duration, rate)
        return cls(t, np.zeros_like(t), R0, np.zeros_like(t))


def _grid(duration: float, rate: float) -> np.ndarray:
    n = int(math.floor(duration * rate + 1e-9))
    if n < 2:
        raise DataError("duration too short for two samples")
    return np.arange(n) / rate


_MOTION_RE = re.compile(
    r"^(?:sine:(?P<f>[\d.eE+-]+)hz:(?P<a>[\d.eE+-]+)m|const:(?P<v>[\d.eE+-]+)mps|still)$"
)


def parse_motion(text: str, duration: float, rate: float, R0: float = 1.0) -> RadialMotion:
    """Build a motion from ``sine:<f>hz:<amp>m``, ``const:<v>mps`` or ``still``."""
    m = _MOTION_RE.match(text.strip().lower())
    if not m:
        raise DataError(f"bad motion spec {text!r}")
    if m["f"] is not None:
        return RadialMotion.sine(float(m["f"]), float(m["a"]), duration, rate, R0)
    if m["v"] is not None:
        return RadialMotion.constant_velocity(float(m["v"]), duration, rate, R0)
    return RadialMotion.still(duration, rate, R0)


@dataclass(frozen=True)
class FilterSpec:
    """Linear-phase Kaiser-window FIR.

    ``transition`` is the full transition width in Hz, centred on ``cutoff``;
    by default 20 % of the cutoff for low-pass and the cutoff itself for
    high-pass filters.
    """

    kind: str
    cutoff: float
    attenuation_db: float = 60.0
    transition: float | None = None

    def __post_init__(self):
        if self.kind not in ("low_pass", "high_pass"):
            raise DataError(f"unknown filter kind {self.kind!r}")
        if not self.cutoff > 0:
            raise DataError("cutoff must be positive")

    @property
    def width(self) -> float:
        if self.transition is not None:
            return self.transition
        return 0.2 * self.cutoff if self.kind == "low_pass" else self.cutoff

    def taps(self, rate: float) -> np.ndarray:
        if self.cutoff + self.width / 2 >= rate / 2:
            raise DataError(f"{self.kind} cutoff {self.cutoff} Hz does not fit below Nyquist at {rate} Hz")
        return _design(self.kind, self.cutoff, self.width, self.attenuation_db, float(rate))


# The demodulator runs before the arctangent, where passband ripple turns
# into phase distortion; 80 dB keeps that below 1e-6 of the signal.
LP_500 = FilterSpec("low_pass", 500.0, attenuation_db=80.0)
LP_100 = FilterSpec("low_pass", 100.0)
HP_05 = FilterSpec("high_pass", 0.5)


@functools.lru_cache(maxsize=32)
def _design(kind, cutoff, width, attenuation_db, rate):
    numtaps, beta = signal.kaiserord(attenuation_db, width / (rate / 2))
    numtaps |= 1  # odd length: integer group delay, and a valid high-pass
    lp = signal.firwin(numtaps, cutoff, window=("kaiser", beta), fs=rate)
    if kind == "low_pass":
        return lp
    hp = -lp
    hp[numtaps // 2] += 1.0
    return hp


def apply_filter(x, spec: FilterSpec, rate: float) -> np.ndarray:
    """Zero-delay FIR filtering.

    The input is extended by odd reflection at both ends, so constants and
    straight lines pass through a low-pass unchanged, and the output is
    shifted by the group delay to stay aligned with the input.
    """
    x = np.asarray(x, dtype=float)
    h = spec.taps(rate)
    half = len(h) // 2
    if len(x) < 2:
        raise DataError("need at least two samples to filter")
    padded = np.pad(x, half, mode="reflect", reflect_type="odd")
    return signal.oaconvolve(padded, h, mode="valid")


@dataclass(frozen=True)
class Received:
    """Output of :func:`synthesize_surveillance`.

    In carrier mode ``y`` holds the received RF samples at ``rate``.  In
    analytic mode ``y`` is ``None`` and ``mix_i``/``mix_q`` hold the mixer
    outputs at baseband rate with the ``2 f0`` terms already removed.
    """

    t: np.ndarray
    rate: float
    f0: float
    y: np.ndarray | None = None
    mix_i: np.ndarray | None = None
    mix_q: np.ndarray | None = None

    @property
    def analytic(self) -> bool:
        return self.y is None


@dataclass(frozen=True)
class BasebandSignal:
    t: np.ndarray
    x_i: np.ndarray
    x_q: np.ndarray
    rate: float

    def __post_init__(self):
        if not (len(self.t) == len(self.x_i) == len(self.x_q)):
            raise DataError("I and Q must have equal lengths")

    @property
    def z(self) -> np.ndarray:
        """Complex envelope ``x_I + i x_Q``, equal to ``(A_R/2) exp(-i phi)``."""
        return self.x_i + 1j * self.x_q

    @property
    def envelope(self) -> np.ndarray:
        return np.hypot(self.x_i, self.x_q)


@dataclass(frozen=True)
class PhaseSeries:
    t: np.ndarray
    phase: np.ndarray  # rad
    rate: float
    raw: np.ndarray = field(default=None, repr=False)  # unwrapped, before filtering


def max_doppler_shift(cfg: RadarConfig, motion: RadialMotion) -> float:
    return 2 * cfg.f0 * float(np.max(np.abs(motion.velocity()))) / cfg.c


def synthesize_surveillance(
    cfg: RadarConfig,
    motion: RadialMotion,
    noise_std: float = 0.0,
    seed: int = 0,
    *,
    mode: str = "analytic",
    low_f0: float = DEFAULT_LOW_F0,
    oversample: int = 10,
) -> Received:
    """Echo of the moving device as seen by the receiver.

    ``motion`` must be sampled at ``cfg.sample_rate``.  In carrier mode the
    carrier runs at ``low_f0`` and is sampled at ``oversample * low_f0``;
    the motion is linearly interpolated onto that grid.  ``noise_std`` is
    the RF noise level in carrier mode and the per-channel baseband noise
    level in analytic mode.
    """
    if abs(motion.rate - cfg.sample_rate) > 1e-6 * cfg.sample_rate:
        raise DataError(f"motion sampled at {motion.rate:g} Hz, radar expects {cfg.sample_rate:g} Hz")
    if cfg.sample_rate <= 4 * max_doppler_shift(cfg, motion):
        raise DataError("baseband rate too low for the Doppler shift (aliasing)")
    rng = np.random.default_rng(seed)
    half = cfg.echo_amplitude / 2

    if mode == "analytic":
        phi = cfg.phase_per_metre * motion.R
        mix_i = half * np.cos(phi)
        mix_q = -half * np.sin(phi)
        if noise_std > 0:
            mix_i = mix_i + rng.normal(0, noise_std, len(phi))
            mix_q = mix_q + rng.normal(0, noise_std, len(phi))
        return Received(motion.t, cfg.sample_rate, cfg.f0, mix_i=mix_i, mix_q=mix_q)

    if mode != "carrier":
        raise DataError(f"unknown synthesis mode {mode!r}")
    if oversample < 4:
        raise DataError("carrier mode needs at least 4 samples per carrier cycle")
    rf_rate = oversample * low_f0
    factor = rf_rate / cfg.sample_rate
    if abs(factor - round(factor)) > 1e-9:
        raise DataError("RF rate must be an integer multiple of the baseband rate")
    c_low = cfg.c * low_f0 / cfg.f0
    n = (len(motion.t) - 1) * int(round(factor)) + 1
    t = np.arange(n) / rf_rate
    R = np.interp(t, motion.t, motion.R)
    phi = 4 * math.pi * low_f0 * R / c_low
    y = cfg.echo_amplitude * np.cos(2 * math.pi * low_f0 * t + phi)
    if noise_std > 0:
        y = y + rng.normal(0, noise_std, n)
    return Received(t, rf_rate, low_f0, y=y)


def iq_demodulate(rx: Received, cfg: RadarConfig, lp: FilterSpec = LP_500) -> BasebandSignal:
    """Mix with the reference and its quadrature copy, then low-pass.

    Carrier-mode input is decimated to ``cfg.sample_rate`` after filtering.
    """
    if lp.cutoff >= cfg.sample_rate / 2:
        raise DataError("demodulator cutoff must be below the baseband Nyquist frequency")
    if rx.analytic:
        x_i = apply_filter(rx.mix_i, lp, rx.rate)
        x_q = apply_filter(rx.mix_q, lp, rx.rate)
        return BasebandSignal(rx.t, x_i, x_q, rx.rate)

    step = int(round(rx.rate / cfg.sample_rate))
    carrier = 2 * math.pi * rx.f0 * rx.t
    x_i = apply_filter(rx.y * np.cos(carrier), lp, rx.rate)[::step]
    x_q = apply_filter(rx.y * np.sin(carrier), lp, rx.rate)[::step]
    return BasebandSignal(rx.t[::step], x_i, x_q, cfg.sample_rate)


def extract_phase(
    bb: BasebandSignal,
    lp: FilterSpec = LP_100,
    hp: FilterSpec = HP_05,
    eps: float = 1e-9,
    max_lost: int = 10,
) -> PhaseSeries:
    """Unwrapped, band-limited phase proportional to the displacement."""
    lost = (np.abs(bb.x_i) + np.abs(bb.x_q)) <= eps
    if _longest_run(lost) > max_lost:
        raise SignalLostError(f"baseband envelope below {eps} for more than {max_lost} samples")
    raw = np.unwrap(np.arctan2(-bb.x_q, bb.x_i))
    phase = apply_filter(apply_filter(raw, lp, bb.rate), hp, bb.rate)
    if not np.all(np.isfinite(phase)):
        raise NumericError("phase contains non-finite values")
    return PhaseSeries(bb.t, phase, bb.rate, raw)


def _longest_run(mask: np.ndarray) -> int:
    best = run = 0
    for m in mask:
        run = run + 1 if m else 0
        best = max(best, run)
    return best


def displacement(phase: PhaseSeries, cfg: RadarConfig) -> np.ndarray:
    return phase.phase / cfg.phase_per_metre


def reconstruct_acceleration(phase: PhaseSeries, cfg: RadarConfig, lp: FilterSpec = LP_100) -> np.ndarray:
    """Second central difference of the recovered displacement, then low-pass."""
    if len(phase.phase) < 5:
        raise DataError("need at least 5 samples")
    r = displacement(phase, cfg)
    dt = 1.0 / phase.rate
    a = np.empty_like(r)
    a[1:-1] = (r[2:] - 2 * r[1:-1] + r[:-2]) / (dt * dt)
    a[0], a[-1] = a[1], a[-2]
    return apply_filter(a, lp, phase.rate)


def doppler_shift(phase: PhaseSeries) -> np.ndarray:
    """Instantaneous frequency of the complex envelope in Hz (positive when approaching)."""
    return -np.gradient(phase.phase, 1.0 / phase.rate) / (2 * math.pi)


def acceleration_from_shift(phase: PhaseSeries, cfg: RadarConfig, lp: FilterSpec = LP_100) -> np.ndarray:
    """Acceleration through the Doppler shift: ``-(c / 2 f0) d(delta_f)/dt``."""
    if len(phase.phase) < 5:
        raise DataError("need at least 5 samples")
    df = doppler_shift(phase)
    a = -cfg.c / (2 * cfg.f0) * np.gradient(df, 1.0 / phase.rate)
    return apply_filter(a, lp, phase.rate)


def simulate_accelerometer(
    motion: RadialMotion,
    noise_std: float = 1e-4,
    seed: int = 0,
    *,
    radial_axis: int = 0,
) -> Trace:
    """Accelerometer on the moving device.

    The radial acceleration appears on ``radial_axis`` and gravity on the z
    axis, perpendicular to the line of sight.
    """
    if radial_axis not in (0, 1):
        raise DataError("radial axis must be x or y (z carries gravity)")
    rng = np.random.default_rng(seed)
    n = len(motion.t)
    values = np.zeros((n, 3))
    values[:, radial_axis] = motion.acceleration()
    values[:, 2] = GRAVITY
    values += rng.normal(0, noise_std, (n, 3)) if noise_std > 0 else 0.0
    t_ns = np.round(motion.t * 1e9).astype(np.int64)
    return Trace(
        sensor=Sensor.ACCELEROMETER,
        t_ns=t_ns,
        values=values,
        label=Label.BENIGN,
        activity=Activity.TOFRO,
        nominal_rate=motion.rate,
        seed=seed,
        session_id=f"radial-{seed}",
    )


def accel_to_phase(accel: Trace, phase: PhaseSeries, cfg: RadarConfig, *, radial_axis: int = 0,
                   hp: FilterSpec = HP_05) -> np.ndarray:
    """Accelerometer readings mapped to phase units on the radar grid."""
    t_acc = accel.t_ns * 1e-9
    tol = 1.0 / phase.rate
    if t_acc[0] > phase.t[0] + tol or t_acc[-1] < phase.t[-1] - tol:
        raise DataError("accelerometer span does not cover the phase series")
    a = np.interp(phase.t, t_acc, accel.values[:, radial_axis])
    v = cumulative_trapezoid(a, phase.t, initial=0.0)
    r = cumulative_trapezoid(v, phase.t, initial=0.0)
    return cfg.phase_per_metre * apply_filter(r, hp, phase.rate)


def accel_integral_compare(accel: Trace, phase: PhaseSeries, cfg: RadarConfig, *, radial_axis: int = 0) -> float:
    """Mean squared difference (rad^2) between the integrated accelerometer and the radar phase."""
    predicted = accel_to_phase(accel, phase, cfg, radial_axis=radial_axis)
    return float(np.mean((predicted - phase.phase) ** 2))


def fit_amplitude(t, x, freq: float) -> float:
    """Least-squares amplitude of the ``freq`` sinusoid in ``x``."""
    w = 2 * math.pi * freq
    basis = np.column_stack([np.sin(w * t), np.cos(w * t), np.ones_like(t)])
    coef, *_ = np.linalg.lstsq(basis, x, rcond=None)
    return float(math.hypot(coef[0], coef[1]))


@dataclass(frozen=True)
class DemoResult:
    t: np.ndarray
    true_r: np.ndarray
    recovered_r: np.ndarray
    true_a: np.ndarray
    recovered_a: np.ndarray
    residual: np.ndarray  # accelerometer-predicted phase minus radar phase, rad

    def rows(self):
        for i in range(len(self.t)):
            yield (
                int(round(self.t[i] * 1e9)),
                float(self.true_r[i]),
                float(self.recovered_r[i]),
                float(self.true_a[i]),
                float(self.recovered_a[i]),
                float(self.residual[i]),
            )


def run_demo(cfg: RadarConfig, motion: RadialMotion, *, noise_std: float = 0.0, accel_noise: float = 1e-4,
             seed: int = 0, mode: str = "analytic") -> DemoResult:
    rx = synthesize_surveillance(cfg, motion, noise_std, seed, mode=mode)
    ph = extract_phase(iq_demodulate(rx, cfg))
    acc = simulate_accelerometer(motion, accel_noise, seed + 1)
    residual = accel_to_phase(acc, ph, cfg) - ph.phase
    return DemoResult(
        ph.t,
        motion.r,
        displacement(ph, cfg),
        motion.acceleration(),
        reconstruct_acceleration(ph, cfg),
        residual,
    )
