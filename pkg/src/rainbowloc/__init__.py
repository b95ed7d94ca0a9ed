"""Frequency-swept beam localization testbed.

Geometric multipath simulation, a learnable phase/true-time-delay analog
beamformer with exact analytic gradients, from-scratch neural localization
networks, multi-stage training, and a fingerprinting k-NN baseline.
"""

from .geometry import (
    SPEED_OF_LIGHT,
    DeploymentRegion,
    MaterialParams,
    Position,
    Reflector,
    Scene,
    build_scene,
    facetize_arc,
    sample_position,
)
from .paths import PathSet, PropagationPath, fresnel_coefficient, mirror_point, path_gain, solve_paths
from .channel import ArrayConfig, FrequencyGrid, noise_vector, steering_phase, synthesize_channel
from .beamformer import (
    BeamformerParams,
    PhysicsConfig,
    Spectrum,
    backward_params,
    beam_pattern,
    beam_weights,
    init_rainbow,
    received_spectrum,
)
from .config import ExperimentConfig
from .dataset import Dataset, generate_dataset, load_dataset
from .training import (
    Codebook,
    LocalizationModel,
    StageConfig,
    default_schedule,
    knn_build,
    knn_predict,
    load_checkpoint,
    predict,
    save_checkpoint,
    train_model,
)
from .evaluate import (
    MetricsReport,
    bench_latency,
    error_cdf,
    evaluate,
    evaluate_model,
    metrics_from_predictions,
    spatial_error_grid,
)

__version__ = "0.1.0"
