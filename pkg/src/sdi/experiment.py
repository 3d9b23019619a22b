"""End-to-end experiment: simulate, train both defences, evaluate, report.

Output directory layout::

    report.csv            one row per (defence, sensor, evaluation, window)
    report.txt            the same results as readable tables
    sdi1_gyro_tree.txt    offline gyroscope tree (L2 features)
    sdi1_mag_tree.txt     offline magnetometer tree (L2 features)
    sdi1_gyro_online.txt  per-axis tree used for streaming detection
    sdi1_gyro_onesided.txt
    sdi2_stump.txt        fusion MSE threshold
    runtime.json          timings (kept apart so the files above are reproducible)
"""

from __future__ import annotations

import contextlib
import csv
import io
import json
import os
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from sdi import features as feat
from sdi import fusion, learn, sim
from sdi.errors import DataError, SdiError

REPORT_COLUMNS = ("defense", "sensor", "evaluation", "window_ms", "tp", "tn", "fp", "fn", "accuracy")
SEED_ENV = "SDI_SEED"

# role of the held-out streaming dataset when deriving its seed
_STREAM_ROLE = 99


@dataclass
class ExperimentConfig:
    seed: int
    k: float = 1.0
    duration: float = 1.0
    n_benign_per_activity: int | None = None
    n_rocking_per_variant: int | None = None
    n_magnetic: int | None = None
    n_rolling: int | None = None
    gyro_noise: float = sim.DEFAULT_GYRO_NOISE
    mag_noise: float = sim.DEFAULT_MAG_NOISE
    gyro_variant: str = "full"
    mag_variant: str = "full"
    online_variant: str = "per_axis6"
    max_depth: int = learn.DEFAULT_MAX_DEPTH
    min_leaf: int = learn.DEFAULT_MIN_LEAF
    kfold: int = 10
    relieff_k: int = 20
    one_sided_q: float = 0.99
    windows_ms: tuple = (1000, 2000, 5000)
    stream_k: float = 0.1
    stream_duration: float = 10.0
    mse_window: int = fusion.DEFAULT_MSE_WINDOW
    trip_fraction: float = fusion.DEFAULT_TRIP_FRACTION
    out_dir: str = "experiment"

    def __post_init__(self):
        if self.seed is None:
            raise DataError("a seed is required")
        self.windows_ms = tuple(int(w) for w in self.windows_ms)
        for v in (self.gyro_variant, self.mag_variant, self.online_variant):
            feat.feature_names(v)

    def dataset_kwargs(self) -> dict:
        return dict(
            duration=self.duration,
            env=sim.MagneticEnvironment(sensor_noise_std=self.mag_noise),
            n_benign_per_activity=self.n_benign_per_activity,
            n_rocking_per_variant=self.n_rocking_per_variant,
            n_magnetic=self.n_magnetic,
            n_rolling=self.n_rolling,
            gyro_noise=self.gyro_noise,
        )

    def provenance(self) -> str:
        return " ".join(f"{k}={v}" for k, v in asdict(self).items() if k != "out_dir")


# config-file keys: "<section>.<name>" -> field name
_CONFIG_KEYS = {
    "sim.seed": "seed",
    "sim.k": "k",
    "sim.duration": "duration",
    "sim.n_benign_per_activity": "n_benign_per_activity",
    "sim.n_rocking_per_variant": "n_rocking_per_variant",
    "sim.n_magnetic": "n_magnetic",
    "sim.n_rolling": "n_rolling",
    "sim.gyro_noise": "gyro_noise",
    "sim.mag_noise": "mag_noise",
    "features.gyro_variant": "gyro_variant",
    "features.mag_variant": "mag_variant",
    "features.online_variant": "online_variant",
    "learn.max_depth": "max_depth",
    "learn.min_leaf": "min_leaf",
    "learn.kfold": "kfold",
    "learn.relieff_k": "relieff_k",
    "learn.one_sided_q": "one_sided_q",
    "detect.windows_ms": "windows_ms",
    "detect.stream_k": "stream_k",
    "detect.stream_duration": "stream_duration",
    "fusion.mse_window": "mse_window",
    "fusion.trip_fraction": "trip_fraction",
    "experiment.out": "out_dir",
}


def resolve_seed(explicit=None) -> int:
    """``explicit`` if given, else the ``SDI_SEED`` environment variable."""
    if explicit is not None:
        return int(explicit)
    env = os.environ.get(SEED_ENV)
    if env is None or not env.strip():
        raise DataError(f"no seed given and {SEED_ENV} is not set")
    try:
        return int(env)
    except ValueError:
        raise DataError(f"{SEED_ENV}={env!r} is not an integer") from None


def _convert(name: str, raw: str):
    types = {f.name: f.type for f in fields(ExperimentConfig)}
    kind = types[name]
    raw = raw.strip()
    if name == "windows_ms":
        return tuple(int(w) for w in raw.split(",") if w.strip())
    if "None" in kind and raw.lower() in ("", "none"):
        return None
    if kind.startswith("int"):
        return int(raw)
    if kind.startswith("float"):
        return float(raw)
    return raw


def parse_config(text: str, seed=None, **overrides) -> ExperimentConfig:
    """Read flat ``section.key=value`` lines; ``#`` starts a comment."""
    values = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataError(f"config line {n}: expected key=value")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in _CONFIG_KEYS:
            raise DataError(f"config line {n}: unknown key {key!r}")
        name = _CONFIG_KEYS[key]
        try:
            values[name] = _convert(name, raw)
        except ValueError:
            raise DataError(f"config line {n}: bad value {raw!r} for {key}") from None
    if seed is not None:
        values["seed"] = seed
    values["seed"] = resolve_seed(values.get("seed"))
    values.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**values)


def load_config(path, seed=None, **overrides) -> ExperimentConfig:
    return parse_config(Path(path).read_text(), seed, **overrides)


# --------------------------------------------------------------------------
# report


@dataclass(frozen=True)
class ReportRow:
    defense: str
    sensor: str
    evaluation: str
    window_ms: int
    confusion: learn.Confusion

    @property
    def accuracy(self) -> float:
        return self.confusion.accuracy

    def cells(self) -> list:
        c = self.confusion
        return [self.defense, self.sensor, self.evaluation, self.window_ms, c.tp, c.tn, c.fp, c.fn,
                f"{self.accuracy:.6f}"]


@dataclass
class Report:
    rows: list = field(default_factory=list)
    mse_summary: dict = field(default_factory=dict)  # group -> (median, p95, max)
    relieff: list = field(default_factory=list)  # (feature, weight), best first
    provenance: str = ""
    runtime: dict = field(default_factory=dict)  # not part of the rendered report

    def add(self, defense, sensor, evaluation, window_ms, confusion) -> None:
        self.rows.append(ReportRow(defense, sensor, evaluation, int(window_ms), confusion))

    def find(self, defense, sensor, evaluation, window_ms=0) -> ReportRow:
        for r in self.rows:
            if (r.defense, r.sensor, r.evaluation, r.window_ms) == (defense, sensor, evaluation, window_ms):
                return r
        raise KeyError((defense, sensor, evaluation, window_ms))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in self.rows:
            w.writerow(r.cells())
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "Report":
        reader = csv.DictReader(io.StringIO(text))
        if tuple(reader.fieldnames or ()) != REPORT_COLUMNS:
            raise DataError(f"expected report columns {','.join(REPORT_COLUMNS)}")
        rep = cls()
        for d in reader:
            c = learn.Confusion(int(d["tp"]), int(d["tn"]), int(d["fp"]), int(d["fn"]))
            rep.add(d["defense"], d["sensor"], d["evaluation"], int(d["window_ms"]), c)
        return rep

    def to_text(self) -> str:
        out = ["Synthetic-data results (simulated traces; not device measurements)"]
        if self.provenance:
            out.append(f"config: {self.provenance}")
        offline = [r for r in self.rows if r.window_ms == 0]
        online = [r for r in self.rows if r.window_ms > 0]
        if offline:
            out += ["", "Offline accuracy (%)", _table(
                ["Defense", "Sensor", "Evaluation", "TP", "TN", "FP", "FN", "Accuracy"],
                [[r.defense, r.sensor, r.evaluation, *_counts(r), f"{100 * r.accuracy:.1f}"] for r in offline],
            )]
        if online:
            out += ["", "Streaming accuracy (%) by sampling window", _table(
                ["Defense", "Sensor", "Evaluation", "Window (sec)", "TP", "TN", "FP", "FN", "Accuracy"],
                [[r.defense, r.sensor, r.evaluation, f"{r.window_ms / 1000:g}", *_counts(r),
                  f"{100 * r.accuracy:.1f}"] for r in online],
            )]
        if self.relieff:
            out += ["", "ReliefF feature weights (gyroscope, L2 norm)", _table(
                ["Rank", "Feature", "Weight"],
                [[i + 1, name, f"{w:.4f}"] for i, (name, w) in enumerate(self.relieff)],
            )]
        if self.mse_summary:
            out += ["", "Fusion MSE per window (uT^2/s^2)", _table(
                ["Group", "Median", "P95", "Max"],
                [[g, *(f"{v:.4g}" for v in vals)] for g, vals in self.mse_summary.items()],
            )]
        return "\n".join(out) + "\n"


def _counts(r: ReportRow) -> list:
    c = r.confusion
    return [c.tp, c.tn, c.fp, c.fn]


def _table(header, rows) -> str:
    cells = [[str(h) for h in header]] + [[str(c) for c in row] for row in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(header))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


# --------------------------------------------------------------------------
# stages


@contextlib.contextmanager
def stage(name: str):
    """Prefix errors raised inside with the stage name."""
    try:
        yield
    except SdiError as exc:
        if str(exc).startswith("["):
            raise
        raise type(exc)(f"[{name}] {exc}") from exc


def feature_dataset(traces, labels, variant: str) -> learn.Dataset:
    rows = [feat.trace_features(t, variant).values for t in traces]
    return learn.dataset_from_rows(rows, labels, feat.feature_names(variant))


def gyro_defense_data(ds: sim.SimDataset, variant: str) -> learn.Dataset:
    gyros = [g for g, _ in ds.benign] + [g for g, _ in ds.rocking]
    return feature_dataset(gyros, [0] * len(ds.benign) + [1] * len(ds.rocking), variant)


def mag_defense_data(ds: sim.SimDataset, variant: str) -> learn.Dataset:
    mags = [m for _, m in ds.benign] + [m for _, m in ds.magnetic]
    return feature_dataset(mags, [0] * len(ds.benign) + [1] * len(ds.magnetic), variant)


def require_classes(ds: learn.Dataset, what: str) -> None:
    counts = ds.class_counts()
    missing = [name for c, name in ((0, "benign"), (1, "attack")) if counts.get(c, 0) == 0]
    if missing:
        raise DataError(f"missing class for {what}: no {' or '.join(missing)} rows")


def one_sided_trainer(q: float):
    return lambda ds: learn.train_one_sided(ds.subset(ds.y == 0), q)


def pair_mse(pairs, window: int):
    return [fusion.mse(fusion.build_fusion_series(g, m), window) for g, m in pairs]


_ATTACK_GROUPS = ("rocking", "magnetic", "rolling")


def run_experiment(cfg: ExperimentConfig, write: bool = True) -> Report:
    report = Report(provenance=cfg.provenance())
    timings = {}
    t_start = time.perf_counter()

    with stage("simulate"):
        train = sim.generate_dataset(cfg.k, cfg.seed, **cfg.dataset_kwargs())
        stream_kwargs = cfg.dataset_kwargs() | {
            "duration": cfg.stream_duration,
            "n_benign_per_activity": None,
            "n_rocking_per_variant": None,
            "n_magnetic": None,
            "n_rolling": None,
        }
        streams = sim.generate_dataset(cfg.stream_k, sim.derive_seed(cfg.seed, _STREAM_ROLE), **stream_kwargs)
    timings["simulate_s"] = time.perf_counter() - t_start

    with stage("features"):
        gyro_ds = gyro_defense_data(train, cfg.gyro_variant)
        mag_ds = mag_defense_data(train, cfg.mag_variant)
        online_ds = gyro_defense_data(train, cfg.online_variant)
        require_classes(gyro_ds, "the gyroscope defence")
        require_classes(mag_ds, "the magnetometer defence")

    with stage("train"):
        trainer = learn.tree_trainer(cfg.max_depth, cfg.min_leaf)
        models = {
            "sdi1_gyro_tree.txt": trainer(gyro_ds),
            "sdi1_mag_tree.txt": trainer(mag_ds),
            "sdi1_gyro_online.txt": trainer(online_ds),
            "sdi1_gyro_onesided.txt": learn.train_one_sided(gyro_ds.subset(gyro_ds.y == 0), cfg.one_sided_q),
        }
        if min(gyro_ds.class_counts().values()) > cfg.relieff_k:
            weights = learn.relieff_rank(gyro_ds, cfg.relieff_k)
            report.relieff = [(n, float(weights.weights[weights.names.index(n)])) for n in weights.ranking()]

        mse_groups = {g: pair_mse(getattr(train, g), cfg.mse_window) for g in ("benign", *_ATTACK_GROUPS)}
        benign_mse = np.concatenate([s.values for s in mse_groups["benign"]])
        attack_mse = [s.values for g in _ATTACK_GROUPS for s in mse_groups[g]]
        if not attack_mse:
            raise DataError("missing class for the fusion threshold: no attack pairs")
        stump = fusion.learn_threshold(benign_mse, np.concatenate(attack_mse))
        models["sdi2_stump.txt"] = stump
        for g, streams_ in mse_groups.items():
            if streams_:
                v = np.concatenate([s.values for s in streams_])
                report.mse_summary[g] = (float(np.median(v)), float(np.percentile(v, 95)), float(v.max()))
    timings["train_s"] = time.perf_counter() - t_start - timings["simulate_s"]

    with stage("evaluate"):
        for sensor, ds in (("gyroscope", gyro_ds), ("magnetometer", mag_ds)):
            res = learn.kfold_eval(ds, cfg.kfold, trainer, seed=cfg.seed)
            report.add("SDI-1 tree", sensor, f"{cfg.kfold}-fold", 0, res.confusion)
        res = learn.kfold_eval(gyro_ds, cfg.kfold, one_sided_trainer(cfg.one_sided_q), seed=cfg.seed)
        report.add("SDI-1 one-sided", "gyroscope", f"{cfg.kfold}-fold", 0, res.confusion)

        # replayed readings from another session look benign to a single sensor
        if train.rolling:
            for sensor, idx, key, variant in (
                ("gyroscope", 0, "sdi1_gyro_tree.txt", cfg.gyro_variant),
                ("magnetometer", 1, "sdi1_mag_tree.txt", cfg.mag_variant),
            ):
                traces = [pair[idx] for pair in train.rolling]
                X = feature_dataset(traces, [1] * len(traces), variant).X
                pred = models[key].predict_many(X)
                report.add("SDI-1 tree", sensor, "rolling", 0, learn.Confusion.from_predictions([1] * len(pred), pred))

        latencies = []
        online = models["sdi1_gyro_online.txt"]
        stream_mse = {g: pair_mse(getattr(streams, g), cfg.mse_window) for g in ("benign", *_ATTACK_GROUPS)}
        grid_rate = sim.MAG_RATE_HZ
        for window_ms in cfg.windows_ms:
            conf = learn.Confusion()
            for group, label in (("benign", 0), ("rocking", 1)):
                for g, _ in getattr(streams, group):
                    det = learn.windowed_detect(g, window_ms, online, cfg.online_variant)
                    latencies += det.compute_seconds
                    conf += learn.Confusion.from_predictions([label] * len(det.verdicts), det.labels)
            report.add("SDI-1 tree", "gyroscope", "streaming", window_ms, conf)

            n_mse = int(round(window_ms * 1e-3 * grid_rate / cfg.mse_window))
            dcfg = fusion.FusionDetectorConfig(stump.threshold, n_mse, cfg.trip_fraction)
            per_group = {}
            for group, label in (("benign", 0), *((g, 1) for g in _ATTACK_GROUPS)):
                c = learn.Confusion()
                for ms in stream_mse[group]:
                    verdicts = [v for _, v in fusion.windowed_fusion_detect(ms, dcfg)]
                    c += learn.Confusion.from_predictions([label] * len(verdicts), verdicts)
                per_group[group] = c
            report.add("SDI-2 fusion", "gyro+mag", "streaming", window_ms, sum(per_group.values(), learn.Confusion()))
            report.add("SDI-2 fusion", "gyro+mag", "streaming-rolling", window_ms, per_group["rolling"])

    timings["total_s"] = time.perf_counter() - t_start
    if latencies:
        timings["sdi1_window_compute_max_s"] = float(np.max(latencies))
        timings["sdi1_window_compute_mean_s"] = float(np.mean(latencies))
    report.runtime = timings

    if write:
        with stage("write"):
            write_outputs(report, models, cfg.out_dir)
    return report


def write_outputs(report: Report, models: dict, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.csv").write_text(report.to_csv())
    (out / "report.txt").write_text(report.to_text())
    for name, model in models.items():
        learn.save_model(model, out / name)
    (out / "runtime.json").write_text(json.dumps(report.runtime, indent=2, sort_keys=True) + "\n")
