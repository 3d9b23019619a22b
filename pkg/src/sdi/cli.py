"""Command-line entry point: ``sdi <command> ...``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical error.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from sdi import doppler, experiment, fusion, learn, sim
from sdi import features as feat
from sdi.errors import DataError, NumericError, SdiError, UsageError

EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 1, 2, 3
GROUPS = ("benign", "rocking", "magnetic", "rolling")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _positive_int(text: str) -> int:
    try:
        n = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if n < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return n


def _seed(args) -> int:
    try:
        return experiment.resolve_seed(args.seed)
    except DataError as exc:
        raise UsageError(f"{exc}; pass --seed") from None


def _out(args) -> Path:
    if args.out is None:
        raise UsageError("--out is required")
    return Path(args.out)


def _write_csv(path: Path, header, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _fmt(x) -> str:
    return repr(float(x))


# --------------------------------------------------------------------------
# sim


def cmd_sim(args) -> None:
    seed, out = _seed(args), _out(args)
    env = sim.MagneticEnvironment(sensor_noise_std=args.mag_noise)
    if args.profile:
        act = sim.Activity(args.profile)
        traces = []
        for i in range(args.n):
            s = sim.derive_seed(seed, i)
            profile = sim.MotionProfile.default(act, duration=args.duration, seed=s)
            g, m = sim.simulate_benign_pair(profile, env, gyro_noise=args.gyro_noise)
            traces += [(f"{act.value}_{i:05d}_gyro.csv", g), (f"{act.value}_{i:05d}_mag.csv", m)]
        sim.write_traces(traces, out)
        return
    ds = sim.generate_dataset(args.k, seed, duration=args.duration, env=env, gyro_noise=args.gyro_noise)
    for group in GROUPS:
        files = []
        for i, (g, m) in enumerate(getattr(ds, group)):
            files += [(f"{i:05d}_gyro.csv", g), (f"{i:05d}_mag.csv", m)]
        sim.write_traces(files, out / group)


# --------------------------------------------------------------------------
# features


def _manifest_traces(directory, sensor: str | None = None):
    return [t for t in sim.load_traces(directory) if sensor is None or t.sensor.value == sensor]


def _paired_traces(directory):
    """``(gyro, mag)`` pairs matched by file name within one directory."""
    entries = sim.read_manifest(directory)
    traces = dict(zip((e["path"] for e in entries), sim.load_traces(directory)))
    pairs = []
    for path, t in traces.items():
        if path.endswith("_gyro.csv"):
            mate = path[: -len("_gyro.csv")] + "_mag.csv"
            if mate not in traces:
                raise DataError(f"{directory}: no magnetometer trace for {path}")
            pairs.append((t, traces[mate]))
    return pairs


def cmd_features(args) -> None:
    out = _out(args)
    rows = []
    if args.kind == "mse":
        for d in args.inputs:
            for g, m in _paired_traces(d):
                label = int(g.label is not sim.Label.BENIGN or m.label is not sim.Label.BENIGN)
                for v in fusion.mse(fusion.build_fusion_series(g, m), args.mse_window).values:
                    rows.append([_fmt(v), label])
        _write_csv(out, ["mse", "label"], rows)
        return

    names = feat.feature_names(args.variant)
    for d in args.inputs:
        for t in _manifest_traces(d, args.sensor):
            label = int(t.label is not sim.Label.BENIGN)
            if args.window_ms:
                n = feat.window_samples(args.window_ms, t.nominal_rate)
                for _, fv in feat.windowed_rows(t, args.variant, n):
                    rows.append([*map(_fmt, fv.values), label])
            else:
                rows.append([*map(_fmt, feat.trace_features(t, args.variant).values), label])
    if not rows:
        raise DataError("no traces matched")
    _write_csv(out, [*names, "label"], rows)


def read_feature_csv(path) -> learn.Dataset:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[-1] != "label":
            raise DataError(f"{path}: last column must be 'label'")
        data = [r for r in reader if r]
    if not data:
        raise DataError(f"{path}: no rows")
    try:
        X = np.array([[float(v) for v in r[:-1]] for r in data])
        y = np.array([int(r[-1]) for r in data])
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None
    return learn.Dataset(X, y, header[:-1])


# --------------------------------------------------------------------------
# train / eval


def _trainer(args):
    if args.model == "tree":
        return learn.tree_trainer(args.max_depth, args.min_leaf)
    if args.model == "one_sided":
        return experiment.one_sided_trainer(args.q)
    if args.model == "stump":
        return learn.fit_stump
    raise UsageError(f"unknown model {args.model!r}")


def cmd_train(args) -> None:
    out = _out(args)
    ds = read_feature_csv(args.features)
    if args.model != "one_sided":
        experiment.require_classes(ds, args.features)
    model = _trainer(args)(ds)
    out.parent.mkdir(parents=True, exist_ok=True)
    learn.save_model(model, out)


_DEFENSE_NAMES = {"tree": "SDI-1 tree", "one_sided": "SDI-1 one-sided", "stump": "SDI-2 threshold"}


def cmd_eval(args) -> None:
    out = _out(args)
    ds = read_feature_csv(args.features)
    defense = args.defense or _DEFENSE_NAMES[args.model]
    rep = experiment.Report()
    if args.model_file:
        model = learn.load_model(args.model_file)
        pred = model.predict_many(ds.X)
        rep.add(defense, args.sensor, "holdout", 0, learn.Confusion.from_predictions(ds.y, pred))
    else:
        res = learn.kfold_eval(ds, args.kfold, _trainer(args), seed=_seed(args))
        rep.add(defense, args.sensor, f"{args.kfold}-fold", 0, res.confusion)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(rep.to_csv())
    print(f"accuracy {rep.rows[0].accuracy:.6f}")


# --------------------------------------------------------------------------
# detect / fuse


def _load_stream(path, sensor: sim.Sensor, rate: float | None) -> sim.Trace:
    t = sim.read_trace_csv(path, sensor=sensor)
    if rate is None:
        if len(t) < 2:
            raise DataError(f"{path}: need at least two samples")
        rate = float(round(1e9 / np.median(np.diff(t.t_ns))))
    return t.replace(nominal_rate=rate)


def cmd_detect(args) -> None:
    out = _out(args)
    model = learn.load_model(args.model_file)
    trace = _load_stream(args.trace, sim.Sensor(args.sensor), args.rate)
    res = learn.windowed_detect(trace, args.window_ms, model, args.variant)
    _write_csv(out, ["window_start_ns", "verdict"], res.verdicts)
    if res.dropped_samples:
        print(f"dropped {res.dropped_samples} trailing samples", file=sys.stderr)


def cmd_fuse(args) -> None:
    out = _out(args)
    if args.window % args.mse_window:
        raise UsageError("--window must be a multiple of --mse-window")
    stump = learn.load_model(args.threshold_model)
    if not isinstance(stump, learn.Stump):
        raise DataError(f"{args.threshold_model} is not a threshold model")
    gyro = _load_stream(args.gyro, sim.Sensor.GYROSCOPE, None)
    mag = _load_stream(args.mag, sim.Sensor.MAGNETOMETER, None)
    stream = fusion.mse(fusion.build_fusion_series(gyro, mag, args.grid_rate), args.mse_window)
    cfg = fusion.FusionDetectorConfig(stump.threshold, args.window // args.mse_window, args.trip)
    rows = []
    for i, (start, verdict) in enumerate(fusion.windowed_fusion_detect(stream, cfg)):
        block = stream.values[i * cfg.window : (i + 1) * cfg.window]
        rows.append([start, _fmt(block.mean()), verdict])
    _write_csv(out, ["window_start_ns", "mse", "verdict"], rows)


# --------------------------------------------------------------------------
# doppler / report / run


def cmd_doppler(args) -> None:
    out = _out(args)
    cfg = doppler.RadarConfig(f0=args.f0, sample_rate=args.rate)
    motion = doppler.parse_motion(args.motion, args.duration, args.rate, args.r0)
    res = doppler.run_demo(cfg, motion, noise_std=args.noise, accel_noise=args.accel_noise,
                           seed=_seed(args), mode=args.mode)
    _write_csv(out, ["t_ns", "true_r", "recovered_r", "true_a", "recovered_a", "residual"],
               ([t, *map(_fmt, rest)] for t, *rest in res.rows()))


def cmd_report(args) -> None:
    rows = []
    for p in args.inputs:
        p = Path(p)
        if p.is_dir():
            p = p / "report.csv"
        if not p.exists():
            raise DataError(f"{p} not found")
        rows += experiment.Report.from_csv(p.read_text()).rows
    text = experiment.Report(rows=rows).to_text()
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_run(args) -> None:
    overrides = {"out_dir": args.out}
    if args.config:
        cfg = experiment.load_config(args.config, args.seed, **overrides)
    else:
        cfg = experiment.ExperimentConfig(seed=_seed(args), out_dir=args.out or "experiment")
    rep = experiment.run_experiment(cfg)
    sys.stdout.write(rep.to_text())


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="sdi", description="Spoofing detection on simulated gyroscope/magnetometer traces")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def command(name, func, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--seed", type=int, default=None, help="random seed (falls back to $SDI_SEED)")
        sp.add_argument("--out", default=None, help="output path")
        sp.set_defaults(func=func)
        return sp

    sp = command("sim", cmd_sim, "simulate traces")
    sp.add_argument("--profile", choices=[a.value for a in sim.Activity])
    sp.add_argument("--n", type=_positive_int, default=100, help="sessions for --profile")
    sp.add_argument("--k", type=float, default=1.0, help="dataset scale factor")
    sp.add_argument("--duration", type=float, default=1.0)
    sp.add_argument("--gyro-noise", type=float, default=sim.DEFAULT_GYRO_NOISE)
    sp.add_argument("--mag-noise", type=float, default=sim.DEFAULT_MAG_NOISE)

    sp = command("features", cmd_features, "extract feature rows")
    sp.add_argument("--in", dest="inputs", nargs="+", required=True, help="trace directories")
    sp.add_argument("--kind", choices=["trace", "mse"], default="trace")
    sp.add_argument("--sensor", choices=[s.value for s in sim.Sensor])
    sp.add_argument("--variant", choices=feat.VARIANTS, default="full")
    sp.add_argument("--window-ms", type=float, default=None)
    sp.add_argument("--mse-window", type=_positive_int, default=fusion.DEFAULT_MSE_WINDOW)

    def model_args(sp):
        sp.add_argument("--model", choices=["tree", "one_sided", "stump"], default="tree")
        sp.add_argument("--max-depth", type=_positive_int, default=learn.DEFAULT_MAX_DEPTH)
        sp.add_argument("--min-leaf", type=_positive_int, default=learn.DEFAULT_MIN_LEAF)
        sp.add_argument("--q", type=float, default=0.99)

    sp = command("train", cmd_train, "train a model from a feature CSV")
    sp.add_argument("--features", required=True)
    model_args(sp)

    sp = command("eval", cmd_eval, "k-fold or holdout evaluation")
    sp.add_argument("--features", required=True)
    sp.add_argument("--kfold", type=int, choices=[5, 10], default=10)
    sp.add_argument("--model-file", default=None, help="evaluate a saved model instead of k-fold")
    sp.add_argument("--sensor", default="gyroscope")
    sp.add_argument("--defense", default=None)
    model_args(sp)

    sp = command("detect", cmd_detect, "windowed detection on one trace")
    sp.add_argument("--trace", required=True)
    sp.add_argument("--model-file", "--model", dest="model_file", required=True)
    sp.add_argument("--sensor", choices=[s.value for s in sim.Sensor], default="gyroscope")
    sp.add_argument("--variant", choices=feat.VARIANTS, default="per_axis6")
    sp.add_argument("--window-ms", type=float, choices=[1000, 2000, 5000], default=1000)
    sp.add_argument("--rate", type=float, default=None, help="sample rate (inferred when omitted)")

    sp = command("fuse", cmd_fuse, "gyro/magnetometer fusion detection")
    sp.add_argument("--gyro", required=True)
    sp.add_argument("--mag", required=True)
    sp.add_argument("--threshold-model", required=True)
    sp.add_argument("--window", type=_positive_int, default=100, help="fusion samples per verdict")
    sp.add_argument("--mse-window", type=_positive_int, default=fusion.DEFAULT_MSE_WINDOW)
    sp.add_argument("--trip", type=float, default=fusion.DEFAULT_TRIP_FRACTION)
    sp.add_argument("--grid-rate", type=float, default=sim.MAG_RATE_HZ)

    sp = command("doppler-demo", cmd_doppler, "radar/accelerometer demonstration")
    sp.add_argument("--f0", type=float, default=2.4e9)
    sp.add_argument("--motion", default="sine:1hz:0.05m")
    sp.add_argument("--duration", type=float, default=10.0)
    sp.add_argument("--rate", type=float, default=doppler.DEFAULT_BASEBAND_RATE)
    sp.add_argument("--r0", type=float, default=1.0)
    sp.add_argument("--mode", choices=["analytic", "carrier"], default="analytic")
    sp.add_argument("--noise", type=float, default=0.0)
    sp.add_argument("--accel-noise", type=float, default=1e-4)

    sp = command("report", cmd_report, "render report or eval CSVs as tables")
    sp.add_argument("--in", dest="inputs", nargs="+", required=True)

    sp = command("run", cmd_run, "full experiment")
    sp.add_argument("--config", default=None, help="key=value config file")
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        args.func(args)
    except UsageError as exc:
        print(f"sdi: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"sdi: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (SdiError, OSError) as exc:
        print(f"sdi: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return 0


if __name__ == "__main__":
    sys.exit(main())
