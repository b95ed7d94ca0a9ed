"""Localization metrics, error distributions, and latency benchmarking."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from threadpoolctl import threadpool_limits

from . import nn
from .dataset import SampleRecord
from .training import Codebook, LocalizationModel, knn_predict, spectrum_features


@dataclass
class MetricsReport:
    loc_rmse_m: float
    angle_rmse_deg: float
    range_rmse_m: float
    loc_errors_m: np.ndarray
    angle_errors_deg: np.ndarray
    range_errors_m: np.ndarray


def wrap_angle_deg(delta: np.ndarray) -> np.ndarray:
    """Wrap angle differences into (-180, 180]."""
    return 180.0 - np.mod(180.0 - np.asarray(delta, dtype=float), 360.0)


def metrics_from_predictions(pred_xy: np.ndarray, true_xy: np.ndarray) -> MetricsReport:
    pred = np.asarray(pred_xy, dtype=float)
    true = np.asarray(true_xy, dtype=float)
    if pred.shape != true.shape or pred.ndim != 2 or pred.shape[1] != 2 or pred.shape[0] == 0:
        raise ValueError(f"prediction array shape {pred.shape} invalid")
    loc = np.linalg.norm(pred - true, axis=1)
    rng_err = np.abs(np.linalg.norm(pred, axis=1) - np.linalg.norm(true, axis=1))
    az_pred = np.degrees(np.arctan2(pred[:, 1], pred[:, 0]))
    az_true = np.degrees(np.arctan2(true[:, 1], true[:, 0]))
    ang = wrap_angle_deg(az_pred - az_true)
    return MetricsReport(
        loc_rmse_m=float(np.sqrt(np.mean(loc**2))),
        angle_rmse_deg=float(np.sqrt(np.mean(ang**2))),
        range_rmse_m=float(np.sqrt(np.mean(rng_err**2))),
        loc_errors_m=loc,
        angle_errors_deg=ang,
        range_errors_m=rng_err,
    )


def model_features(model: LocalizationModel, records: list[SampleRecord]) -> np.ndarray:
    """Epoch-0 log-power features for a record list -> (B, M)."""
    return np.stack([spectrum_features(model, r) for r in records])


def model_predict_batch(model: LocalizationModel, records: list[SampleRecord]) -> np.ndarray:
    feats = model.normalize(model_features(model, records))
    preds = []
    for lo in range(0, feats.shape[0], 512):
        out, _ = nn.forward(model.net, model.specs, feats[lo : lo + 512, None, :])
        preds.append(out * model.config.d_max_m)
    return np.concatenate(preds, axis=0)


def evaluate(predictor, records: list[SampleRecord]) -> MetricsReport:
    """Metrics for an arbitrary per-record predictor callable."""
    if not records:
        raise ValueError("empty test split")
    pred = np.array([predictor(r) for r in records], dtype=float)
    true = np.array([r.xy for r in records])
    return metrics_from_predictions(pred, true)


def evaluate_model(model: LocalizationModel, records: list[SampleRecord]) -> MetricsReport:
    if not records:
        raise ValueError("empty test split")
    pred = model_predict_batch(model, records)
    true = np.array([r.xy for r in records])
    return metrics_from_predictions(pred, true)


def evaluate_knn(
    codebook: Codebook, features: np.ndarray, records: list[SampleRecord], k: int
) -> MetricsReport:
    if not records:
        raise ValueError("empty test split")
    pred = np.array([knn_predict(codebook, q, k) for q in features])
    true = np.array([r.xy for r in records])
    return metrics_from_predictions(pred, true)


def error_cdf(errors) -> list[tuple[float, float]]:
    """Empirical CDF as (unique sorted error, cumulative fraction) rows."""
    err = np.sort(np.asarray(errors, dtype=float))
    if err.size == 0:
        raise ValueError("no errors given")
    n = err.size
    values = np.unique(err)
    # fraction at a value counts everything <= it
    counts = np.searchsorted(err, values, side="right")
    return [(float(v), float(c) / n) for v, c in zip(values, counts)]


def spatial_error_grid(positions, errors, cell_m: float) -> list[tuple[float, float, float, int]]:
    """Mean error per occupied origin-aligned square cell.

    Rows are (cell center x, cell center y, mean error, count), sorted by
    cell coordinates; empty cells are omitted.
    """
    if cell_m <= 0.0:
        raise ValueError("cell size must be positive")
    pos = np.asarray(positions, dtype=float)
    err = np.asarray(errors, dtype=float)
    if pos.ndim != 2 or pos.shape[1] < 2 or pos.shape[0] != err.shape[0]:
        raise ValueError("positions must be (B, 2) matching errors")
    ix = np.floor(pos[:, 0] / cell_m).astype(int)
    iy = np.floor(pos[:, 1] / cell_m).astype(int)
    cells: dict[tuple[int, int], list[float]] = {}
    for cx, cy, e in zip(ix, iy, err):
        cells.setdefault((int(cx), int(cy)), []).append(float(e))
    rows = []
    for (cx, cy), errs in sorted(cells.items()):
        rows.append(
            ((cx + 0.5) * cell_m, (cy + 0.5) * cell_m, float(np.mean(errs)), len(errs))
        )
    return rows


@dataclass
class LatencyReport:
    mean_ms: float
    p50_ms: float
    p99_ms: float
    count: int


def bench_latency(predict_fn, inputs: list[np.ndarray], warmup_count: int = 50) -> LatencyReport:
    """Wall-clock per-call latency of predict_fn over the inputs.

    Strictly serial and pinned to one BLAS thread; the first warmup_count
    calls are excluded.  Predictions are checked finite and discarded.
    """
    if len(inputs) <= warmup_count:
        raise ValueError("need more inputs than warmup calls")
    times = []
    with threadpool_limits(limits=1):
        for i, q in enumerate(inputs):
            t0 = time.perf_counter()
            out = predict_fn(q)
            t1 = time.perf_counter()
            if not np.all(np.isfinite(out)):
                raise ValueError(f"non-finite prediction at input {i}")
            if i >= warmup_count:
                times.append(t1 - t0)
    arr = np.array(times) * 1e3
    return LatencyReport(
        mean_ms=float(arr.mean()),
        p50_ms=float(np.percentile(arr, 50)),
        p99_ms=float(np.percentile(arr, 99)),
        count=arr.size,
    )


class SingleSamplePredictor:
    """Low-overhead spectrum -> (x, y) path for latency benchmarking.

    Precomputes flattened layer weights once so the per-call cost is the
    arithmetic itself, matching how a deployed estimator would run.
    """

    def __init__(self, model: LocalizationModel):
        self.model = model
        self.plan = []
        for spec, blk in zip(model.specs, model.net.blocks):
            if spec.kind == "conv1d":
                w, b = blk
                self.plan.append(("conv", w.reshape(spec.out_channels, -1), b[:, None], spec))
            elif spec.kind == "dense":
                w, b = blk
                self.plan.append(("dense", w, b, spec))
            else:
                self.plan.append(("act", spec.activation, None, spec))
        self.mean = model.norm_mean
        self.std = model.norm_std
        self.d_max = model.config.d_max_m

    def __call__(self, p_db: np.ndarray) -> np.ndarray:
        h = ((p_db - self.mean) / self.std)[None, :]
        for kind, a, b, spec in self.plan:
            if kind == "conv":
                c, length = h.shape
                k, stride, pad = spec.kernel, spec.stride, spec.padding
                if pad:
                    hp = np.zeros((c, length + 2 * pad))
                    hp[:, pad : pad + length] = h
                else:
                    hp = h
                lout = (hp.shape[1] - k) // stride + 1
                s0, s1 = hp.strides
                cols = np.lib.stride_tricks.as_strided(
                    hp, shape=(c, k, lout), strides=(s0, s1, s1 * stride)
                ).reshape(c * k, lout)
                h = a @ cols
                h += b
            elif kind == "dense":
                h = a @ h.reshape(-1) + b
            elif a == "relu":
                h = np.maximum(h, 0.0)
            else:
                h = np.tanh(h)
        return h * self.d_max


def knn_query_fn(codebook: Codebook, k: int):
    def query(p_db: np.ndarray):
        return np.asarray(knn_predict(codebook, p_db, k))

    return query
