"""Command-line surface: dataset generation, training, evaluation, benchmarks."""

from __future__ import annotations

import argparse
import csv
import sys

import numpy as np

from .beamformer import beam_pattern
from .config import ExperimentConfig
from .dataset import DatasetError, generate_dataset, load_dataset
from .evaluate import (
    SingleSamplePredictor,
    bench_latency,
    error_cdf,
    evaluate_knn,
    evaluate_model,
    knn_query_fn,
    model_features,
    model_predict_batch,
    metrics_from_predictions,
    spatial_error_grid,
)
from .training import (
    MODEL_KINDS,
    MODES,
    initial_beam_spectra,
    knn_build,
    load_checkpoint,
    save_checkpoint,
    train_model,
)

_FMT = "%.17g"


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([(_FMT % v) if isinstance(v, float) else v for v in row])


def _load_config(args) -> ExperimentConfig:
    if getattr(args, "config", None):
        try:
            return ExperimentConfig.from_json(args.config)
        except FileNotFoundError:
            raise SystemExit(f"error: --config file not found: {args.config}")
        except ValueError as exc:
            raise SystemExit(f"error: --config {args.config}: {exc}")
    return ExperimentConfig()


def _load_data(args):
    try:
        return load_dataset(args.data)
    except DatasetError as exc:
        raise SystemExit(f"error: --data {args.data}: {exc}")


def cmd_generate(args):
    config = _load_config(args)
    try:
        out = generate_dataset(args.scene, args.count, config, args.seed, args.out)
    except ValueError as exc:
        raise SystemExit(f"error: --scene {args.scene}: {exc}")
    print(f"wrote {args.count} samples to {out}")
    return 0


def cmd_train(args):
    dataset = _load_data(args)
    if args.power_dbm is not None:
        from dataclasses import replace

        dataset.config = replace(dataset.config, tx_power_dbm=args.power_dbm)
    model, reports = train_model(args.model, args.mode, dataset, args.seed)
    save_checkpoint(model, args.out)
    report_path = str(args.out) + ".train.csv"
    _write_csv(
        report_path,
        ["stage", "epoch", "train_loss", "val_loss"],
        [(r.stage, r.epoch, r.train_loss, r.val_loss) for r in reports],
    )
    best = min(r.val_loss for r in reports)
    print(f"saved checkpoint {args.out} (best val loss {best:.6g}); report {report_path}")
    return 0


def _metrics_row(method, scene, power_dbm, rep):
    return (method, scene, power_dbm, rep.loc_rmse_m, rep.angle_rmse_deg, rep.range_rmse_m)


METRICS_HEADER = ["method", "scene", "power_dbm", "loc_rmse_m", "angle_rmse_deg", "range_rmse_m"]


def cmd_eval(args):
    if (args.ckpt is None) == (args.knn is None):
        raise SystemExit("error: give exactly one of --ckpt or --knn")
    dataset = _load_data(args)
    splits = dataset.splits()
    test = splits["test"]
    scene = dataset.manifest["scene_id"]
    power = dataset.config.tx_power_dbm

    if args.ckpt is not None:
        try:
            model = load_checkpoint(args.ckpt)
        except (OSError, ValueError) as exc:
            raise SystemExit(f"error: --ckpt {args.ckpt}: {exc}")
        rep = evaluate_model(model, test)
        method = f"{model.kind}-{model.mode or 'fixed'}"
        positions = np.array([r.xy for r in test])
    else:
        codebook = knn_build(splits["train"], dataset.config)
        feats = initial_beam_spectra(test, dataset.config)
        rep = evaluate_knn(codebook, feats, test, args.knn)
        method = f"knn-k{args.knn}"
        positions = np.array([r.xy for r in test])

    _write_csv(args.report, METRICS_HEADER, [_metrics_row(method, scene, power, rep)])
    print(
        f"{method}: loc_rmse_m={rep.loc_rmse_m:.4f} angle_rmse_deg={rep.angle_rmse_deg:.4f} "
        f"range_rmse_m={rep.range_rmse_m:.4f} -> {args.report}"
    )
    if args.cdf_out:
        _write_csv(args.cdf_out, ["error_m", "fraction"], error_cdf(rep.loc_errors_m))
    if args.grid_out:
        rows = spatial_error_grid(positions, rep.loc_errors_m, args.cell_m)
        _write_csv(args.grid_out, ["x_m", "y_m", "mean_err_m", "count"], rows)
    return 0


def cmd_bench(args):
    dataset = _load_data(args)
    splits = dataset.splits()
    test = splits["test"]
    try:
        model = load_checkpoint(args.ckpt)
    except (OSError, ValueError) as exc:
        raise SystemExit(f"error: --ckpt {args.ckpt}: {exc}")
    codebook = knn_build(splits["train"], dataset.config)

    feats_dl = [f for f in model_features(model, test)]
    feats_knn = [f for f in initial_beam_spectra(test, dataset.config)]
    dl = bench_latency(SingleSamplePredictor(model), feats_dl, args.warmup)
    kn = bench_latency(knn_query_fn(codebook, args.knn), feats_knn, args.warmup)
    rows = [
        (f"{model.kind}-{model.mode or 'fixed'}", dl.mean_ms, dl.p50_ms, dl.p99_ms),
        (f"knn-k{args.knn}", kn.mean_ms, kn.p50_ms, kn.p99_ms),
    ]
    _write_csv(args.report, ["method", "mean_ms", "p50_ms", "p99_ms"], rows)
    print(
        f"dl mean {dl.mean_ms:.4f} ms vs knn mean {kn.mean_ms:.4f} ms "
        f"({kn.mean_ms / dl.mean_ms:.1f}x) over {len(codebook.positions)} codewords -> {args.report}"
    )
    return 0


def cmd_sweep_power(args):
    dataset = _load_data(args)
    try:
        powers = [float(p) for p in args.powers.split(",") if p]
    except ValueError:
        raise SystemExit(f"error: --powers must be comma-separated numbers, got {args.powers!r}")
    if not powers:
        raise SystemExit("error: --powers is empty")
    scene = dataset.manifest["scene_id"]
    rows = []
    from dataclasses import replace

    for p_dbm in powers:
        dataset.config = replace(dataset.config, tx_power_dbm=p_dbm)
        model, _ = train_model(args.model, args.mode, dataset, args.seed)
        rep = evaluate_model(model, dataset.splits()["test"])
        rows.append(_metrics_row(f"{args.model}-{args.mode}", scene, p_dbm, rep))
        print(f"P_t {p_dbm} dBm: loc_rmse_m={rep.loc_rmse_m:.4f}")
    _write_csv(args.report, METRICS_HEADER, rows)
    print(f"wrote {args.report}")
    return 0


def cmd_beam_pattern(args):
    try:
        model = load_checkpoint(args.ckpt)
    except (OSError, ValueError) as exc:
        raise SystemExit(f"error: --ckpt {args.ckpt}: {exc}")
    try:
        freqs = [float(f) for f in args.freqs.split(",") if f]
    except ValueError:
        raise SystemExit(f"error: --freqs must be comma-separated numbers, got {args.freqs!r}")
    if not freqs:
        raise SystemExit("error: --freqs is empty")
    try:
        lo, hi, step = (float(v) for v in args.angles.split(":"))
    except ValueError:
        raise SystemExit(f"error: --angles must be lo:hi:step, got {args.angles!r}")
    angles_deg = np.arange(lo, hi + 0.5 * step, step)
    rows = []
    for f_hz in freqs:
        gains = beam_pattern(
            model.beam, model.config.grid(), f_hz, np.radians(angles_deg), model.config.array()
        )
        rows.extend((f_hz, float(a), float(g)) for a, g in zip(angles_deg, gains))
    _write_csv(args.out, ["freq_hz", "angle_deg", "gain_db"], rows)
    print(f"wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="rainbowloc",
        description="Frequency-swept beam localization: simulate, train, evaluate.",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="generate a dataset of path records")
    g.add_argument("--scene", required=True)
    g.add_argument("--count", type=int, required=True)
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--config", default=None, help="JSON experiment config")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="train a localization model")
    t.add_argument("--data", required=True)
    t.add_argument("--model", choices=MODEL_KINDS, default="deep")
    t.add_argument("--mode", choices=MODES, default="adaptive")
    t.add_argument("--seed", type=int, required=True)
    t.add_argument("--out", required=True, help="checkpoint output path")
    t.add_argument("--power-dbm", type=float, default=None, help="override transmit power")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint or the k-NN baseline")
    e.add_argument("--data", required=True)
    e.add_argument("--ckpt", default=None)
    e.add_argument("--knn", type=int, default=None, metavar="K")
    e.add_argument("--report", required=True)
    e.add_argument("--cdf-out", default=None)
    e.add_argument("--grid-out", default=None)
    e.add_argument("--cell-m", type=float, default=5.0)
    e.set_defaults(func=cmd_eval)

    b = sub.add_parser("bench", help="single-sample latency: model vs k-NN")
    b.add_argument("--data", required=True)
    b.add_argument("--ckpt", required=True)
    b.add_argument("--knn", type=int, default=5, metavar="K")
    b.add_argument("--warmup", type=int, default=50)
    b.add_argument("--report", required=True)
    b.set_defaults(func=cmd_bench)

    s = sub.add_parser("sweep-power", help="retrain and evaluate across transmit powers")
    s.add_argument("--data", required=True)
    s.add_argument("--powers", required=True, help="comma-separated dBm values")
    s.add_argument("--model", choices=MODEL_KINDS, default="deep")
    s.add_argument("--mode", choices=MODES, default="adaptive")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--report", required=True)
    s.set_defaults(func=cmd_sweep_power)

    p = sub.add_parser("beam-pattern", help="export combined array gain vs angle")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--freqs", required=True, help="comma-separated frequencies in Hz")
    p.add_argument("--angles", default="-90:90:0.25", help="lo:hi:step in degrees (use --angles=-90:90:0.25)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_beam_pattern)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
