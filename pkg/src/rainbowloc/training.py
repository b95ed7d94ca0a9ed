"""Model assembly, multi-stage training, and the k-NN baseline.

Two network architectures share the pipeline: "deep" (five strided conv
layers plus a three-hidden-layer MLP head, relu) and "compact" (three conv
layers plus three dense layers, tanh throughout).  Both regress (x, y)
scaled by tanh times the maximum range.  Training runs in up to three
stages: network only with the initial beam, beam parameters only with the
network frozen, then joint fine-tuning, each with fresh Adam state and the
best-validation checkpoint retained.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import nn
from .beamformer import (
    BeamformerParams,
    PhysicsConfig,
    backward_params,
    init_rainbow,
    received_spectrum,
    received_spectrum_block,
)
from .channel import channel_rows, noise_vector
from .config import ExperimentConfig
from .dataset import Dataset, SampleRecord
from .paths import PathSet, PropagationPath
from .geometry import Position

MODEL_KINDS = ("deep", "compact")
MODES = ("fixed", "adaptive")

_STREAM_BATCH = 105

CKPT_MAGIC = b"RBLC"
CKPT_VERSION = 1


def layer_specs(kind: str, input_len: int) -> list[nn.LayerSpec]:
    """Architecture table; dense input dims depend on the spectrum length."""
    if kind == "deep":
        convs = [(1, 16), (16, 32), (32, 64), (64, 128), (128, 128)]
        specs: list[nn.LayerSpec] = []
        length = input_len
        for cin, cout in convs:
            specs.append(nn.conv1d(cin, cout, kernel=5, stride=2, padding=2))
            specs.append(nn.activation("relu"))
            length = nn.conv_output_length(length, 5, 2, 2)
        flat = 128 * length
        for in_dim, out_dim in [(flat, 512), (512, 256), (256, 128)]:
            specs.append(nn.dense(in_dim, out_dim))
            specs.append(nn.activation("relu"))
        specs.append(nn.dense(128, 2))
        specs.append(nn.activation("tanh"))
        return specs
    if kind == "compact":
        convs = [(1, 8), (8, 16), (16, 32)]
        specs = []
        length = input_len
        for cin, cout in convs:
            specs.append(nn.conv1d(cin, cout, kernel=7, stride=4, padding=3))
            specs.append(nn.activation("tanh"))
            length = nn.conv_output_length(length, 7, 4, 3)
        flat = 32 * length
        for in_dim, out_dim in [(flat, 256), (256, 128)]:
            specs.append(nn.dense(in_dim, out_dim))
            specs.append(nn.activation("tanh"))
        specs.append(nn.dense(128, 2))
        specs.append(nn.activation("tanh"))
        return specs
    raise ValueError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")


@dataclass
class LocalizationModel:
    """Beamformer plus prediction network plus input normalization."""

    kind: str
    config: ExperimentConfig
    specs: list[nn.LayerSpec]
    net: nn.ModelParams
    beam: BeamformerParams
    norm_mean: float = 0.0
    norm_std: float = 1.0
    mode: str = ""

    @classmethod
    def build(cls, kind: str, config: ExperimentConfig, seed: int) -> "LocalizationModel":
        specs = layer_specs(kind, config.num_subcarriers)
        net = nn.init_network(specs, seed)
        beam = init_rainbow(
            config.array(), config.grid(), config.sweep_start_rad, config.sweep_end_rad
        )
        return cls(kind=kind, config=config, specs=specs, net=net, beam=beam)

    def physics(self) -> PhysicsConfig:
        return PhysicsConfig(
            tx_power_w=self.config.tx_power_w,
            noise_power_w=self.config.noise_power_w,
            epsilon_db_floor=self.config.epsilon_db_floor,
        )

    def normalize(self, p_db: np.ndarray) -> np.ndarray:
        return (p_db - self.norm_mean) / self.norm_std


def record_pathset(rec: SampleRecord) -> PathSet:
    """Rebuild the minimal path set needed for channel synthesis."""
    pos = Position(*rec.position)
    paths = []
    for p in rec.paths:
        paths.append(
            PropagationPath(
                kind={0: "los", 1: "bounce1", 2: "bounce2"}[p.kind],
                reflector_chain=p.chain,
                vertices=np.zeros((0, 3)),
                length_m=p.delay_s * 299792458.0,
                delay_s=p.delay_s,
                azimuth_rad=p.azimuth_rad,
                elevation_rad=p.elevation_rad,
                gain=p.gain,
            )
        )
    return PathSet(target=pos, paths=tuple(paths))


def spectrum_features(
    model: LocalizationModel, rec: SampleRecord, epoch: int = 0
) -> np.ndarray:
    """Log-power feature vector for one record under the model's beam."""
    grid, arr = model.config.grid(), model.config.array()
    noise = noise_vector(rec.noise_seed, epoch, model.config.noise_power_w, grid.num_subcarriers)
    spec, _ = received_spectrum(model.beam, record_pathset(rec), model.physics(), grid, arr, noise)
    return spec.p_db


def predict(model: LocalizationModel, rec: SampleRecord) -> tuple[float, float]:
    """Deterministic position estimate in meters, bounded by d_max."""
    feats = model.normalize(spectrum_features(rec=rec, model=model))
    out, _ = nn.forward(model.net, model.specs, feats)
    return float(out[0] * model.config.d_max_m), float(out[1] * model.config.d_max_m)


@dataclass(frozen=True)
class StageConfig:
    stage: int
    epochs: int
    batch_size: int = 64
    lr_network: float = 1e-3
    lr_beamformer: float = 1e-2

    def __post_init__(self):
        if self.stage not in (1, 2, 3):
            raise ValueError("stage must be 1, 2, or 3")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")

    @property
    def trainable(self) -> str:
        return {1: "network_only", 2: "beamformer_only", 3: "all"}[self.stage]


def default_schedule(mode: str, kind: str = "deep") -> list[StageConfig]:
    """Per-architecture stage budgets.

    The compact network undertrains badly on the 40-epoch budget that suits
    the deep one; it gets a longer schedule with smaller batches.
    """
    if kind == "compact":
        epochs, batch = (250, 40, 40), 32
    else:
        epochs, batch = (40, 20, 20), 64
    if mode == "fixed":
        return [StageConfig(stage=1, epochs=epochs[0], batch_size=batch)]
    if mode == "adaptive":
        return [
            StageConfig(stage=1, epochs=epochs[0], batch_size=batch),
            StageConfig(stage=2, epochs=epochs[1], batch_size=batch, lr_beamformer=1e-2),
            StageConfig(stage=3, epochs=epochs[2], batch_size=batch,
                        lr_network=1e-4, lr_beamformer=1e-4),
        ]
    raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")


def validate_schedule(schedule: list[StageConfig]):
    stages = [s.stage for s in schedule]
    if stages != sorted(stages) or len(set(stages)) != len(stages):
        raise ValueError(f"schedule stages must be a strictly increasing prefix-like run, got {stages}")
    if stages and stages != list(range(1, len(stages) + 1)):
        raise ValueError(f"schedule must follow order 1, 2, 3 without gaps, got {stages}")


@dataclass
class EpochReport:
    stage: int
    epoch: int
    train_loss: float
    val_loss: float


class TrainingSession:
    """Owns parameter state and per-split channel caches for one model."""

    def __init__(self, model: LocalizationModel, dataset: Dataset, seed: int):
        self.model = model
        self.dataset = dataset
        self.seed = int(seed)
        splits = dataset.splits()
        self.train = splits["train"]
        self.val = splits["val"]
        if not self.train or not self.val:
            raise ValueError("dataset too small: empty train or validation split")
        self.grid = model.config.grid()
        self.array = model.config.array()
        self.phys = model.physics()
        self._h_cache: dict[str, np.ndarray] = {}
        self._clean_cache: dict[str, np.ndarray] = {}
        self._targets: dict[str, np.ndarray] = {}
        for name, recs in (("train", self.train), ("val", self.val)):
            xy = np.array([r.xy for r in recs])
            self._targets[name] = xy / model.config.d_max_m
        self.reports: list[EpochReport] = []
        self._global_epoch = 0
        self._set_normalization()

    # ------------------------------------------------------------------ caches

    def _h_rows(self, name: str) -> np.ndarray:
        if name not in self._h_cache:
            recs = self.train if name == "train" else self.val
            h = np.empty(
                (len(recs), self.grid.num_subcarriers, self.array.num_elements), dtype=complex
            )
            for i, rec in enumerate(recs):
                h[i] = channel_rows(record_pathset(rec), self.grid, self.array)
            self._h_cache[name] = h
        return self._h_cache[name]

    def _clean_y(self, name: str) -> np.ndarray:
        """Noise-free received spectra under the CURRENT beam parameters."""
        spec, _ = received_spectrum_block(
            self.model.beam,
            self._h_rows(name),
            self.phys,
            self.grid,
            np.zeros(
                (len(self.train if name == "train" else self.val), self.grid.num_subcarriers),
                dtype=complex,
            ),
        )
        return spec.y

    def _noise(self, name: str, epoch: int) -> np.ndarray:
        recs = self.train if name == "train" else self.val
        out = np.empty((len(recs), self.grid.num_subcarriers), dtype=complex)
        for i, rec in enumerate(recs):
            out[i] = noise_vector(
                rec.noise_seed, epoch, self.model.config.noise_power_w, self.grid.num_subcarriers
            )
        return out

    def _set_normalization(self):
        """Global mean/std of the training spectra under the initial beam."""
        y = self._clean_y("train") + self._noise("train", 0)
        p_db = 10.0 * np.log10(y.real**2 + y.imag**2 + self.phys.epsilon_db_floor)
        self.model.norm_mean = float(p_db.mean())
        self.model.norm_std = float(p_db.std()) or 1.0

    # ------------------------------------------------------------------ helpers

    def _features_from_y(self, y: np.ndarray) -> np.ndarray:
        p_db = 10.0 * np.log10(y.real**2 + y.imag**2 + self.phys.epsilon_db_floor)
        return (p_db - self.model.norm_mean) / self.model.norm_std

    def _val_loss(self, clean_val: np.ndarray | None = None) -> float:
        y = (self._clean_y("val") if clean_val is None else clean_val) + self._noise_val0
        feats = self._features_from_y(y)
        out, _ = nn.forward(self.model.net, self.model.specs, feats[:, None, :])
        loss, _ = nn.mse_loss(out, self._targets["val"])
        return loss

    def _train_loss_eval(self, noise: np.ndarray) -> float:
        y = self._clean_y("train") + noise
        feats = self._features_from_y(y)
        total = 0.0
        n = feats.shape[0]
        for lo in range(0, n, 512):
            hi = min(lo + 512, n)
            out, _ = nn.forward(self.model.net, self.model.specs, feats[lo:hi, None, :])
            loss, _ = nn.mse_loss(out, self._targets["train"][lo:hi])
            total += loss * (hi - lo)
        return total / n

    # ------------------------------------------------------------------ stages

    def train_stage(self, cfg: StageConfig) -> list[EpochReport]:
        """Run one stage; only the stage's trainable set changes.

        Tracks the best validation loss including the incoming state (epoch
        0), and restores that checkpoint at stage end.
        """
        trainable = cfg.trainable
        train_net = trainable in ("network_only", "all")
        train_beam = trainable in ("beamformer_only", "all")

        net_arrays = self.model.net.flat() if train_net else []
        beam_arrays = [self.model.beam.phi, self.model.beam.tau_tilde] if train_beam else []
        net_state = nn.AdamState.init_like(net_arrays) if train_net else None
        beam_state = nn.AdamState.init_like(beam_arrays) if train_beam else None

        self._noise_val0 = self._noise("val", 0)
        targets = self._targets["train"]
        n_train = len(self.train)
        h_train = self._h_rows("train") if train_beam else None
        clean_train = None if train_beam else self._clean_y("train")
        clean_val = None if train_beam else self._clean_y("val")

        rows = [EpochReport(cfg.stage, 0, self._train_loss_eval(self._noise("train", 0)), self._val_loss(clean_val))]
        best = (rows[0].val_loss, self._snapshot())

        for epoch in range(1, cfg.epochs + 1):
            self._global_epoch += 1
            noise = self._noise("train", self._global_epoch)
            order = np.random.default_rng(
                [self.seed, cfg.stage, self._global_epoch, _STREAM_BATCH]
            ).permutation(n_train)
            epoch_loss = 0.0
            for lo in range(0, n_train, cfg.batch_size):
                idx = order[lo : lo + cfg.batch_size]
                if train_beam:
                    spec, bf_cache = received_spectrum_block(
                        self.model.beam, h_train[idx], self.phys, self.grid,
                        noise[idx], want_cache=True,
                    )
                    y = spec.y
                else:
                    y, bf_cache = clean_train[idx] + noise[idx], None
                feats = self._features_from_y(y)
                out, net_cache = nn.forward(self.model.net, self.model.specs, feats[:, None, :])
                loss, grad_out = nn.mse_loss(out, targets[idx])
                epoch_loss += loss * idx.size

                grads, grad_input = nn.backward(self.model.net, self.model.specs, net_cache, grad_out)
                if train_net:
                    flat_grads = [a for blk in grads for a in blk]
                    nn.adam_step(net_arrays, flat_grads, net_state, cfg.lr_network)
                if train_beam:
                    grad_p_db = grad_input[:, 0, :] / self.model.norm_std
                    gphi, gtau = backward_params(bf_cache, grad_p_db)
                    nn.adam_step(beam_arrays, [gphi, gtau], beam_state, cfg.lr_beamformer)

            row = EpochReport(cfg.stage, epoch, epoch_loss / n_train, self._val_loss(clean_val))
            rows.append(row)
            if row.val_loss < best[0]:
                best = (row.val_loss, self._snapshot())

        self._restore(best[1])
        self.reports.extend(rows)
        return rows

    def _snapshot(self):
        return (self.model.net.copy(), self.model.beam.copy())

    def _restore(self, snap):
        net, beam = snap
        self.model.net = net
        # Mutate in place so cached references (optimizer views) are dropped.
        self.model.beam = beam

    def run_multistage(self, schedule: list[StageConfig]) -> list[EpochReport]:
        validate_schedule(schedule)
        for cfg in schedule:
            self.train_stage(cfg)
        return self.reports

    def best_val_loss(self, stage: int) -> float:
        return min(r.val_loss for r in self.reports if r.stage == stage)


def train_model(
    kind: str,
    mode: str,
    dataset: Dataset,
    seed: int,
    schedule: list[StageConfig] | None = None,
) -> tuple[LocalizationModel, list[EpochReport]]:
    """End-to-end training entry point used by the CLI."""
    model = LocalizationModel.build(kind, dataset.config, seed)
    model.mode = mode
    session = TrainingSession(model, dataset, seed)
    reports = session.run_multistage(schedule or default_schedule(mode, kind))
    return model, reports


# ---------------------------------------------------------------------- k-NN


@dataclass
class Codebook:
    """Stored spectra (under the fixed initial beam) with known positions."""

    spectra: np.ndarray  # (K, M)
    positions: np.ndarray  # (K, 2)

    def __post_init__(self):
        if self.spectra.shape[0] != self.positions.shape[0]:
            raise ValueError("spectra/positions length mismatch")


def initial_beam_spectra(records: list[SampleRecord], config: ExperimentConfig) -> np.ndarray:
    """Epoch-0 log-power spectra under the fixed initial sweep beam -> (B, M)."""
    beam = init_rainbow(
        config.array(), config.grid(), config.sweep_start_rad, config.sweep_end_rad
    )
    phys = PhysicsConfig(
        tx_power_w=config.tx_power_w,
        noise_power_w=config.noise_power_w,
        epsilon_db_floor=config.epsilon_db_floor,
    )
    grid, arr = config.grid(), config.array()
    spectra = np.empty((len(records), grid.num_subcarriers))
    for lo in range(0, len(records), 256):
        chunk = records[lo : lo + 256]
        h = np.stack([channel_rows(record_pathset(r), grid, arr) for r in chunk])
        noise = np.stack([
            noise_vector(r.noise_seed, 0, config.noise_power_w, grid.num_subcarriers)
            for r in chunk
        ])
        spec, _ = received_spectrum_block(beam, h, phys, grid, noise)
        spectra[lo : lo + len(chunk)] = spec.p_db
    return spectra


def knn_build(train_records: list[SampleRecord], config: ExperimentConfig) -> Codebook:
    """One codeword per training sample from the initial beam, epoch-0 noise."""
    return Codebook(
        spectra=initial_beam_spectra(train_records, config),
        positions=np.array([rec.xy for rec in train_records]),
    )


def knn_predict(codebook: Codebook, query_p_db: np.ndarray, k: int) -> tuple[float, float]:
    """Mean position of the k nearest spectra (Euclidean); ties prefer the
    lower codeword index via a stable sort."""
    if not 1 <= k <= codebook.spectra.shape[0]:
        raise ValueError(f"k={k} out of range for codebook size {codebook.spectra.shape[0]}")
    d = codebook.spectra - np.asarray(query_p_db)
    dist2 = np.einsum("ij,ij->i", d, d)
    nearest = np.argsort(dist2, kind="stable")[:k]
    xy = codebook.positions[nearest].mean(axis=0)
    return float(xy[0]), float(xy[1])


# ------------------------------------------------------------------ checkpoint


def _spec_to_dict(spec: nn.LayerSpec) -> dict:
    return {k: getattr(spec, k) for k in (
        "kind", "in_channels", "out_channels", "kernel", "stride", "padding",
        "in_dim", "out_dim", "activation",
    )}


def save_checkpoint(model: LocalizationModel, path: str | Path):
    """Versioned binary checkpoint; float payloads stored as raw f64 LE."""
    header = {
        "model": model.kind,
        "mode": model.mode,
        "specs": [_spec_to_dict(s) for s in model.specs],
        "config": model.config.to_dict(),
        "blocks": [[list(a.shape) for a in blk] for blk in model.net.blocks],
        "seed": model.net.seed,
    }
    hjson = json.dumps(header, sort_keys=True).encode()
    beam_blob = model.beam.to_bytes()
    parts = [
        CKPT_MAGIC,
        struct.pack("<II", CKPT_VERSION, len(hjson)),
        hjson,
        struct.pack("<I", len(beam_blob)),
        beam_blob,
        np.array([model.norm_mean, model.norm_std], dtype="<f8").tobytes(),
    ]
    for blk in model.net.blocks:
        for a in blk:
            parts.append(a.astype("<f8").tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_checkpoint(path: str | Path) -> LocalizationModel:
    blob = Path(path).read_bytes()
    if blob[:4] != CKPT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    version, hlen = struct.unpack_from("<II", blob, 4)
    if version != CKPT_VERSION:
        raise ValueError(f"{path}: checkpoint version {version} != {CKPT_VERSION}")
    off = 12
    header = json.loads(blob[off : off + hlen].decode())
    off += hlen
    (blen,) = struct.unpack_from("<I", blob, off)
    off += 4
    beam = BeamformerParams.from_bytes(blob[off : off + blen])
    off += blen
    norm = np.frombuffer(blob, dtype="<f8", count=2, offset=off)
    off += 16
    specs = [nn.LayerSpec(**d) for d in header["specs"]]
    blocks = []
    for shapes in header["blocks"]:
        blk = []
        for shape in shapes:
            n = int(np.prod(shape))
            blk.append(np.frombuffer(blob, dtype="<f8", count=n, offset=off).reshape(shape).copy())
            off += 8 * n
        blocks.append(blk)
    if off != len(blob):
        raise ValueError(f"{path}: {len(blob) - off} trailing bytes")
    config = ExperimentConfig.from_dict(header["config"])
    model = LocalizationModel(
        kind=header["model"],
        config=config,
        specs=specs,
        net=nn.ModelParams(blocks=blocks, seed=header["seed"]),
        beam=beam,
        norm_mean=float(norm[0]),
        norm_std=float(norm[1]),
        mode=header.get("mode", ""),
    )
    return model
