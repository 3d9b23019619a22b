"""Synthetic gyroscope/magnetometer traces, benign and attacked.

A session is one smooth orientation trajectory sampled by two sensors that
share a clock: the gyroscope reports device-frame angular velocity and the
magnetometer reports a constant world field rotated into the device frame.
Attacks are applied afterwards to the reported samples, never to the
trajectory itself, which mirrors what an application sees through the
sensor API.

Trace files are plain CSV (``t_ns,x,y,z``) with a JSON-lines manifest; floats
are written with ``repr`` so a write/read cycle is bit exact.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence, Union

import numpy as np

from sdi import kinematics as kin
from sdi.errors import DataError

GYRO_RATE_HZ = 200.0
MAG_RATE_HZ = 100.0
THETA_LIMIT = math.pi / 2 - 0.01

DEFAULT_GYRO_NOISE = 0.005  # rad/s
DEFAULT_MAG_NOISE = 0.05  # microtesla
DEFAULT_B_WORLD = (21.0, 0.0, 45.0)  # microtesla, NED


class Sensor(str, Enum):
    GYROSCOPE = "gyroscope"
    MAGNETOMETER = "magnetometer"
    ACCELEROMETER = "accelerometer"


class Label(str, Enum):
    BENIGN = "benign"
    ROCKING = "rocking_attack"
    ROLLING = "rolling_attack"


class Activity(str, Enum):
    REST = "rest"
    WALKING = "walking"
    RUNNING = "running"
    POCKET = "pocket"
    SHAKE = "shake"
    TOFRO = "to_fro"


PHONE_ACTIVITIES = (
    Activity.WALKING,
    Activity.RUNNING,
    Activity.REST,
    Activity.POCKET,
    Activity.SHAKE,
)

# (amplitude rad, base frequency Hz, number of sinusoids per angle, yaw drift rad/s)
_ACTIVITY_DEFAULTS = {
    Activity.REST: (0.0, 0.0, 0, 0.0),
    Activity.POCKET: (0.04, 0.3, 2, 0.0),
    Activity.WALKING: (0.06, 1.8, 3, 0.1),
    Activity.RUNNING: (0.1, 2.8, 3, 0.15),
    Activity.SHAKE: (0.15, 3.0, 4, 0.0),
    Activity.TOFRO: (0.5, 0.8, 1, 0.0),
}


@dataclass(frozen=True)
class Trace:
    """Timestamped 3-axis samples from one sensor.

    ``t_ns`` holds integer nanoseconds since the session start and must be
    strictly increasing.  ``values`` has shape ``(N, 3)``.
    """

    sensor: Sensor
    t_ns: np.ndarray
    values: np.ndarray
    label: Label = Label.BENIGN
    activity: Activity = Activity.REST
    nominal_rate: float = GYRO_RATE_HZ
    seed: int | None = None
    session_id: str = ""

    def __post_init__(self):
        t = np.asarray(self.t_ns, dtype=np.int64)
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[1] != 3:
            raise DataError(f"trace values must be (N, 3), got {v.shape}")
        if t.shape != (v.shape[0],):
            raise DataError("timestamps and values differ in length")
        if len(t) and (t[0] < 0 or np.any(np.diff(t) <= 0)):
            raise DataError("timestamps must be non-negative and strictly increasing")
        object.__setattr__(self, "t_ns", t)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "sensor", Sensor(self.sensor))
        object.__setattr__(self, "label", Label(self.label))
        object.__setattr__(self, "activity", Activity(self.activity))

    def __len__(self) -> int:
        return len(self.t_ns)

    @property
    def t_seconds(self) -> np.ndarray:
        return self.t_ns * 1e-9

    @property
    def duration(self) -> float:
        return float(self.t_ns[-1] - self.t_ns[0]) * 1e-9 if len(self) else 0.0

    def replace(self, **changes) -> "Trace":
        return dataclasses.replace(self, **changes)

    def slice(self, start: int, stop: int) -> "Trace":
        return self.replace(t_ns=self.t_ns[start:stop], values=self.values[start:stop])


@dataclass(frozen=True)
class MotionProfile:
    kind: Activity
    amplitude: float
    base_frequency: float
    noise_std: float = DEFAULT_GYRO_NOISE
    duration: float = 1.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", Activity(self.kind))
        if not self.duration > 0:
            raise DataError("profile duration must be positive")

    @classmethod
    def default(cls, kind, *, duration: float = 1.0, seed: int = 0, **overrides):
        amplitude, freq, _, _ = _ACTIVITY_DEFAULTS[Activity(kind)]
        params = dict(kind=kind, amplitude=amplitude, base_frequency=freq,
                      duration=duration, seed=seed)
        params.update(overrides)
        return cls(**params)


@dataclass(frozen=True)
class MagneticEnvironment:
    B_world: tuple = DEFAULT_B_WORLD
    sensor_noise_std: float = DEFAULT_MAG_NOISE

    def __post_init__(self):
        b = tuple(float(x) for x in self.B_world)
        if len(b) != 3 or not np.linalg.norm(b) > 0:
            raise DataError("B_world must be a non-zero 3-vector")
        object.__setattr__(self, "B_world", b)


@dataclass(frozen=True)
class Trajectory:
    """Euler angles as offset + drift*t + a sum of sinusoids per angle.

    Rows of ``amps``/``freqs``/``phases`` are (phi, theta, psi).
    """

    offsets: np.ndarray
    amps: np.ndarray = field(default_factory=lambda: np.zeros((3, 0)))
    freqs: np.ndarray = field(default_factory=lambda: np.zeros((3, 0)))
    phases: np.ndarray = field(default_factory=lambda: np.zeros((3, 0)))
    drift: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        for name in ("offsets", "amps", "freqs", "phases", "drift"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))

    @classmethod
    def constant_rate(cls, offsets=(0.0, 0.0, 0.0), rates=(0.0, 0.0, 0.0)):
        return cls(offsets=np.asarray(offsets), drift=np.asarray(rates))

    @classmethod
    def from_profile(cls, profile: MotionProfile) -> "Trajectory":
        rng = np.random.default_rng(np.random.SeedSequence([profile.seed, 1]))
        offsets = np.array([
            rng.uniform(-math.pi, math.pi),
            rng.uniform(-1.0, 1.0),
            rng.uniform(-math.pi, math.pi),
        ])
        _, _, n_terms, drift_scale = _ACTIVITY_DEFAULTS[profile.kind]
        if profile.amplitude == 0 or n_terms == 0:
            return cls(offsets=offsets)

        if profile.kind is Activity.SHAKE:
            ratios = rng.uniform(0.4, 2.0, size=(3, n_terms))
            weights = rng.uniform(0.3, 1.0, size=(3, n_terms))
        else:
            ratios = np.tile(np.arange(1, n_terms + 1, dtype=float), (3, 1))
            ratios *= rng.uniform(0.9, 1.1, size=(3, 1))
            weights = rng.uniform(0.5, 1.0, size=(3, 1)) * (0.45 ** np.arange(n_terms))
        if profile.kind is Activity.TOFRO:
            # to-and-fro swings about a single device axis
            weights = weights * np.array([[1.0], [0.1], [0.1]])
        amps = profile.amplitude * weights
        freqs = profile.base_frequency * ratios
        phases = rng.uniform(0, 2 * math.pi, size=(3, n_terms))
        drift = np.array([0.0, 0.0, rng.uniform(-drift_scale, drift_scale)])

        theta_swing = np.abs(amps[1]).sum()
        if theta_swing > THETA_LIMIT - 0.05:
            amps[1] *= (THETA_LIMIT - 0.05) / theta_swing
            theta_swing = np.abs(amps[1]).sum()
        room = THETA_LIMIT - theta_swing
        offsets[1] = float(np.clip(offsets[1], -room, room))
        return cls(offsets=offsets, amps=amps, freqs=freqs, phases=phases, drift=drift)

    def angles(self, t) -> kin.EulerAngles:
        t = np.asarray(t, dtype=float)
        arg = 2 * math.pi * self.freqs[:, :, None] * t + self.phases[:, :, None]
        a = self.offsets[:, None] + self.drift[:, None] * t + (self.amps[:, :, None] * np.sin(arg)).sum(axis=1)
        return kin.EulerAngles(a[0], a[1], a[2])

    def rates(self, t) -> kin.EulerRates:
        t = np.asarray(t, dtype=float)
        arg = 2 * math.pi * self.freqs[:, :, None] * t + self.phases[:, :, None]
        w = 2 * math.pi * self.freqs[:, :, None] * self.amps[:, :, None] * np.cos(arg)
        r = self.drift[:, None] + w.sum(axis=1) + np.zeros_like(t)
        return kin.EulerRates(r[0], r[1], r[2])

    def omega_device(self, t) -> np.ndarray:
        return kin.angular_velocity_device(self.angles(t), self.rates(t))

    def field_device(self, t, B_world) -> np.ndarray:
        """``R(t) @ B_world`` for every time in ``t``; shape ``(N, 3)``."""
        phi, theta, psi = self.angles(t)
        b = np.asarray(B_world, dtype=float)
        # Rz(psi) then Ry(theta) then Rx(phi), vectorised
        cps, sps = np.cos(psi), np.sin(psi)
        x1 = cps * b[0] + sps * b[1]
        y1 = -sps * b[0] + cps * b[1]
        z1 = np.full_like(x1, b[2])
        cth, sth = np.cos(theta), np.sin(theta)
        x2 = cth * x1 - sth * z1
        z2 = sth * x1 + cth * z1
        cph, sph = np.cos(phi), np.sin(phi)
        y3 = cph * y1 + sph * z2
        z3 = -sph * y1 + cph * z2
        return np.stack([x2, y3, z3], axis=-1)


def _timestamps(rate: float, duration: float, rng, jitter_ns: int) -> np.ndarray:
    n = int(math.floor(duration * rate + 1e-9)) + 1
    t = np.round(np.arange(n) * (1e9 / rate)).astype(np.int64)
    if jitter_ns and n > 1:
        limit = min(jitter_ns, int(0.45e9 / rate))
        t = t + rng.integers(-limit, limit + 1, size=n)
        t[0] = max(t[0], 0)
    return t


def _session_id(profile: MotionProfile) -> str:
    return f"{profile.kind.value}-{profile.seed}"


def simulate_benign_pair(
    profile: Union[MotionProfile, Trajectory],
    env: MagneticEnvironment | None = None,
    duration: float | None = None,
    seed: int | None = None,
    *,
    gyro_rate: float = GYRO_RATE_HZ,
    mag_rate: float = MAG_RATE_HZ,
    gyro_noise: float | None = None,
    jitter_ns: int = 0,
    activity: Activity | None = None,
) -> tuple[Trace, Trace]:
    """One session: a gyroscope trace and a magnetometer trace on a shared clock.

    ``profile`` may be a :class:`MotionProfile` (trajectory drawn from its
    seed) or an explicit :class:`Trajectory`.  ``seed`` drives the sensor
    noise and defaults to the profile seed.
    """
    env = env or MagneticEnvironment()
    if isinstance(profile, Trajectory):
        traj = profile
        duration = 1.0 if duration is None else duration
        seed = 0 if seed is None else seed
        noise = DEFAULT_GYRO_NOISE if gyro_noise is None else gyro_noise
        act = activity or Activity.REST
        session = f"{act.value}-{seed}"
    else:
        traj = Trajectory.from_profile(profile)
        duration = profile.duration if duration is None else duration
        seed = profile.seed if seed is None else seed
        noise = profile.noise_std if gyro_noise is None else gyro_noise
        act = profile.kind
        session = _session_id(profile)
    if duration * min(gyro_rate, mag_rate) < 1:
        raise DataError("duration too short for two samples")

    rngs = [np.random.default_rng(s) for s in np.random.SeedSequence([seed, 2]).spawn(4)]
    tg = _timestamps(gyro_rate, duration, rngs[0], jitter_ns)
    tm = _timestamps(mag_rate, duration, rngs[1], jitter_ns)
    omega = traj.omega_device(tg * 1e-9)
    field_d = traj.field_device(tm * 1e-9, env.B_world)
    if noise:
        omega = omega + rngs[2].normal(0.0, noise, size=omega.shape)
    if env.sensor_noise_std:
        field_d = field_d + rngs[3].normal(0.0, env.sensor_noise_std, size=field_d.shape)

    common = dict(activity=act, seed=seed, session_id=session)
    gyro = Trace(Sensor.GYROSCOPE, tg, omega, nominal_rate=gyro_rate, **common)
    mag = Trace(Sensor.MAGNETOMETER, tm, field_d, nominal_rate=mag_rate, **common)
    return gyro, mag


# --------------------------------------------------------------------------
# attacks


class AttackMode(str, Enum):
    ROCKING = "rocking"
    ROLLING = "rolling"


@dataclass(frozen=True)
class Sine:
    """Replacement sinusoid ``amplitude * sin(2 pi f t + phase) * axis_mix``."""

    freq: float
    amplitude: float
    axis_mix: tuple = (1.0, 1.0, 1.0)
    phase: float = 0.0


@dataclass(frozen=True)
class UniformNoise:
    """Replacement noise, i.i.d. uniform on ``[-amplitude, amplitude]`` per axis."""

    amplitude: float


@dataclass(frozen=True)
class Solenoid:
    """Additive field from a coil: ``amplitude * sin(2 pi f t + phase) * orientation``.

    Used for magnetometer attacks; unlike the other waveforms it is added to
    the true reading because the sensor keeps measuring the ambient field.
    """

    amplitude: float
    orientation: tuple = (1.0, 0.0, 0.0)
    freq: float = 1.0
    phase: float = 0.0


@dataclass(frozen=True)
class AttackConfig:
    mode: AttackMode
    waveform: Union[Sine, UniformNoise, Solenoid]
    duty: float = 1.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "mode", AttackMode(self.mode))
        if not 0 < self.duty <= 1:
            raise DataError("duty must be in (0, 1]")
        if not self.waveform.amplitude > 0:
            raise DataError("attack amplitude must be positive")


def attacked_span(n: int, duty: float) -> slice:
    """The trailing ``duty`` fraction of ``n`` samples."""
    return slice(n - int(round(duty * n)), n)


def apply_rocking_attack(trace: Trace, cfg: AttackConfig) -> Trace:
    """Overwrite (or, for a solenoid, perturb) the attacked span of ``trace``."""
    if cfg.mode is not AttackMode.ROCKING:
        raise DataError("apply_rocking_attack needs a rocking AttackConfig")
    if len(trace) == 0:
        raise DataError("cannot attack an empty trace")
    span = attacked_span(len(trace), cfg.duty)
    t = trace.t_seconds[span]
    values = trace.values.copy()
    w = cfg.waveform
    if isinstance(w, Sine):
        s = w.amplitude * np.sin(2 * math.pi * w.freq * t + w.phase)
        values[span] = s[:, None] * np.asarray(w.axis_mix, dtype=float)
    elif isinstance(w, UniformNoise):
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 3]))
        values[span] = rng.uniform(-w.amplitude, w.amplitude, size=(len(t), 3))
    elif isinstance(w, Solenoid):
        o = np.asarray(w.orientation, dtype=float)
        o = o / np.linalg.norm(o)
        s = w.amplitude * np.sin(2 * math.pi * w.freq * t + w.phase)
        values[span] = values[span] + s[:, None] * o
    else:
        raise DataError(f"unknown waveform {w!r}")
    return trace.replace(values=values, label=Label.ROCKING)


def make_rolling_pair(
    gyro_pool: Sequence[Trace], mag_pool: Sequence[Trace], seed: int
) -> tuple[Trace, Trace]:
    """Pair a gyroscope trace with a magnetometer trace from another session."""
    if not gyro_pool or not mag_pool:
        raise DataError("rolling pairs need non-empty pools")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 4]))
    for _ in range(64):
        i = int(rng.integers(len(gyro_pool)))
        j = int(rng.integers(len(mag_pool)))
        if gyro_pool[i].session_id != mag_pool[j].session_id:
            break
    else:
        pairs = [
            (i, j)
            for i, g in enumerate(gyro_pool)
            for j, m in enumerate(mag_pool)
            if g.session_id != m.session_id
        ]
        if not pairs:
            raise DataError("every candidate pairing shares a session")
        i, j = pairs[int(rng.integers(len(pairs)))]
    return (
        gyro_pool[i].replace(label=Label.ROLLING),
        mag_pool[j].replace(label=Label.ROLLING),
    )


# --------------------------------------------------------------------------
# alignment


@dataclass(frozen=True)
class AlignedSeries:
    t_ns: np.ndarray
    omega: np.ndarray
    field: np.ndarray
    rate: float


def common_grid(start_ns: int, end_ns: int, rate: float) -> np.ndarray:
    step = 1e9 / rate
    n = int(math.floor((end_ns - start_ns) / step + 1e-9)) + 1
    return start_ns + np.round(np.arange(n) * step).astype(np.int64)


def interpolate(trace: Trace, t_ns: np.ndarray) -> np.ndarray:
    x = trace.t_ns.astype(float)
    q = np.asarray(t_ns, dtype=float)
    return np.column_stack([np.interp(q, x, trace.values[:, k]) for k in range(3)])


def resample_to_common_grid(gyro: Trace, mag: Trace, rate: float = MAG_RATE_HZ) -> AlignedSeries:
    """Linearly interpolate both traces onto one uniform grid over their overlap."""
    start = max(int(gyro.t_ns[0]), int(mag.t_ns[0]))
    end = min(int(gyro.t_ns[-1]), int(mag.t_ns[-1]))
    if end <= start:
        raise DataError("gyroscope and magnetometer traces do not overlap")
    grid = common_grid(start, end, rate)
    return AlignedSeries(grid, interpolate(gyro, grid), interpolate(mag, grid), rate)


# --------------------------------------------------------------------------
# dataset generation


def derive_seed(seed: int, *path: int) -> int:
    """Independent 32-bit child seed for ``(seed, *path)``."""
    return int(np.random.SeedSequence([seed, *path]).generate_state(1)[0])


@dataclass
class SimDataset:
    """Sessions and attacks in the proportions of the phone experiments.

    Every entry is a ``(gyro, mag)`` pair on a shared clock.  In ``rocking``
    only the gyroscope is attacked, in ``magnetic`` only the magnetometer,
    and ``rolling`` pairs come from two different sessions.
    """

    benign: list = field(default_factory=list)
    rocking: list = field(default_factory=list)
    magnetic: list = field(default_factory=list)
    rolling: list = field(default_factory=list)

    def all_pairs(self) -> Iterable[tuple[str, int, Trace, Trace]]:
        for group in ("benign", "rocking", "magnetic", "rolling"):
            for i, (g, m) in enumerate(getattr(self, group)):
                yield group, i, g, m


# roles used when deriving per-trace seeds
_ROLE_BENIGN, _ROLE_ROCK_SINE, _ROLE_ROCK_NOISE, _ROLE_MAG, _ROLE_ROLL, _ROLE_ROLL_POOL = range(6)
MOVING_ACTIVITIES = (Activity.WALKING, Activity.RUNNING, Activity.SHAKE)


def random_rocking_config(rng, *, noise: bool, seed: int) -> AttackConfig:
    """Post-ADC view of an acoustic resonance attack with random parameters."""
    if noise:
        wave = UniformNoise(amplitude=float(rng.uniform(3.0, 30.0)))
    else:
        wave = Sine(
            freq=float(rng.uniform(1.0, 40.0)),
            amplitude=float(rng.uniform(3.0, 30.0)),
            axis_mix=tuple(float(g) for g in rng.uniform(0.2, 1.0, size=3)),
            phase=float(rng.uniform(0, 2 * math.pi)),
        )
    return AttackConfig(AttackMode.ROCKING, wave, seed=seed)


def random_solenoid_config(rng, *, seed: int) -> AttackConfig:
    orientation = rng.normal(size=3)
    wave = Solenoid(
        amplitude=float(rng.uniform(10.0, 100.0)),
        orientation=tuple(float(o) for o in orientation / np.linalg.norm(orientation)),
        phase=float(rng.uniform(0, 2 * math.pi)),
    )
    return AttackConfig(AttackMode.ROCKING, wave, seed=seed)


def _session(activity: Activity, seed: int, duration: float, env, jitter_ns: int, gyro_noise: float):
    profile = MotionProfile.default(activity, duration=duration, seed=seed)
    return simulate_benign_pair(profile, env, gyro_noise=gyro_noise, jitter_ns=jitter_ns)


def generate_dataset(
    k: float = 1,
    seed: int = 42,
    *,
    duration: float = 1.0,
    env: MagneticEnvironment | None = None,
    activities: Sequence[Activity] = PHONE_ACTIVITIES,
    n_benign_per_activity: int | None = None,
    n_rocking_per_variant: int | None = None,
    n_magnetic: int | None = None,
    n_rolling: int | None = None,
    rolling_activities: Sequence[Activity] = MOVING_ACTIVITIES,
    jitter_ns: int = 0,
    gyro_noise: float = DEFAULT_GYRO_NOISE,
) -> SimDataset:
    """Generate the default dataset, with counts scaled by ``k``.

    At ``k=1`` this yields 100 benign sessions per activity, 250 traces for
    each of the two acoustic gyroscope attacks (contact sinusoid and
    uniform noise), 500 solenoid attacks on the magnetometer and 500 rolling
    pairs.  Rolling pairs are drawn from a separate pool of sessions with
    motion; a replay of one static trace against another static trace is
    physically consistent and cannot be flagged by any cross-sensor check.
    """
    env = env or MagneticEnvironment()
    nb = int(round(100 * k)) if n_benign_per_activity is None else n_benign_per_activity
    nr = int(round(250 * k)) if n_rocking_per_variant is None else n_rocking_per_variant
    nm = int(round(500 * k)) if n_magnetic is None else n_magnetic
    nroll = int(round(500 * k)) if n_rolling is None else n_rolling
    ds = SimDataset()

    for a_idx, act in enumerate(activities):
        for i in range(nb):
            s = derive_seed(seed, _ROLE_BENIGN, a_idx, i)
            ds.benign.append(_session(act, s, duration, env, jitter_ns, gyro_noise))

    for role, noise in ((_ROLE_ROCK_SINE, False), (_ROLE_ROCK_NOISE, True)):
        for i in range(nr):
            s = derive_seed(seed, role, i)
            rng = np.random.default_rng(s)
            act = Activity.REST if noise else activities[int(rng.integers(len(activities)))]
            g, m = _session(act, s, duration, env, jitter_ns, gyro_noise)
            g = apply_rocking_attack(g, random_rocking_config(rng, noise=noise, seed=s))
            ds.rocking.append((g, m))

    for i in range(nm):
        s = derive_seed(seed, _ROLE_MAG, i)
        rng = np.random.default_rng(s)
        act = activities[int(rng.integers(len(activities)))]
        g, m = _session(act, s, duration, env, jitter_ns, gyro_noise)
        ds.magnetic.append((g, apply_rocking_attack(m, random_solenoid_config(rng, seed=s))))

    if nroll:
        pool = []
        n_pool = max(2, nroll // 5)
        for i in range(n_pool):
            s = derive_seed(seed, _ROLE_ROLL_POOL, i)
            act = rolling_activities[i % len(rolling_activities)]
            pool.append(_session(act, s, duration, env, jitter_ns, gyro_noise))
        gyros = [g for g, _ in pool]
        mags = [m for _, m in pool]
        for i in range(nroll):
            ds.rolling.append(make_rolling_pair(gyros, mags, derive_seed(seed, _ROLE_ROLL, i)))
    return ds


# --------------------------------------------------------------------------
# files

TRACE_HEADER = "t_ns,x,y,z"
MANIFEST_NAME = "manifest.jsonl"


def write_trace_csv(trace: Trace, path) -> None:
    lines = [TRACE_HEADER]
    for t, (x, y, z) in zip(trace.t_ns.tolist(), trace.values.tolist()):
        lines.append(f"{t},{x!r},{y!r},{z!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_trace_csv(path, **meta) -> Trace:
    """Load a trace CSV; ``meta`` supplies the non-sample fields."""
    with open(path) as fh:
        header = fh.readline().strip()
        if header != TRACE_HEADER:
            raise DataError(f"{path}: expected header {TRACE_HEADER!r}, got {header!r}")
        rows = [line.split(",") for line in fh if line.strip()]
    if not rows:
        raise DataError(f"{path}: no samples")
    t = np.array([int(r[0]) for r in rows], dtype=np.int64)
    v = np.array([[float(c) for c in r[1:4]] for r in rows], dtype=float)
    meta.setdefault("sensor", Sensor.GYROSCOPE)
    return Trace(t_ns=t, values=v, **meta)


def manifest_entry(trace: Trace, path: str) -> dict:
    return {
        "path": path,
        "sensor": trace.sensor.value,
        "label": trace.label.value,
        "activity": trace.activity.value,
        "rate_hz": trace.nominal_rate,
        "seed": trace.seed,
        "session_id": trace.session_id,
    }


def write_traces(traces: Iterable[tuple[str, Trace]], out_dir) -> Path:
    """Write ``(relative_name, trace)`` items plus a manifest; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for name, trace in traces:
        write_trace_csv(trace, out / name)
        entries.append(json.dumps(manifest_entry(trace, name), sort_keys=True))
    manifest = out / MANIFEST_NAME
    manifest.write_text("".join(e + "\n" for e in entries))
    return manifest


def read_manifest(directory) -> list[dict]:
    directory = Path(directory)
    path = directory / MANIFEST_NAME
    if not path.exists():
        raise DataError(f"no {MANIFEST_NAME} in {directory}")
    return [json.loads(line) for line in path.read_text().splitlines() if line.strip()]


def load_traces(directory) -> list[Trace]:
    directory = Path(directory)
    traces = []
    for e in read_manifest(directory):
        traces.append(
            read_trace_csv(
                directory / e["path"],
                sensor=e["sensor"],
                label=e["label"],
                activity=e["activity"],
                nominal_rate=e["rate_hz"],
                seed=e["seed"],
                session_id=e["session_id"],
            )
        )
    return traces


def dataset_files(ds: SimDataset) -> list[tuple[str, Trace]]:
    files = []
    for group, i, g, m in ds.all_pairs():
        files.append((f"{group}_{i:05d}_gyro.csv", g))
        files.append((f"{group}_{i:05d}_mag.csv", m))
    return files
