"""Time evolution and noise ensembles."""

from .ensemble import EnsembleError, EnsembleResult, ensemble_average, run_shots, shot_rng
from .integrators import (
    EvolutionConfig,
    LindbladChannel,
    PropagationError,
    dissipator_superop,
    expm_hermitian,
    magnus_propagator,
    ordered_product,
    propagate_lindblad,
    propagate_pure,
    unitary_superop,
)
from .noise import NoiseModel, NoisePath, noise_grid, ou_path, sample_noise

__all__ = [
    "EnsembleError", "EnsembleResult", "ensemble_average", "run_shots", "shot_rng",
    "EvolutionConfig", "LindbladChannel", "PropagationError", "dissipator_superop",
    "expm_hermitian", "magnus_propagator", "ordered_product", "propagate_lindblad",
    "propagate_pure", "unitary_superop", "NoiseModel", "NoisePath", "noise_grid",
    "ou_path", "sample_noise",
]
