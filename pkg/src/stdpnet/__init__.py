"""Spiking S1-C1-S2-C2 visual hierarchy with unsupervised STDP feature learning."""

__version__ = "0.1.0"

from .encoder import EncoderConfig, SpikeEvent, SpikeWave, build_pyramid, encode_image, make_gabor_bank
from .errors import ConfigError, DataError, InvalidInputError, NonConvergenceError, StdpnetError
from .features import FeatureMatrix, extract_features, random_prototypes, reconstruct_preferred
from .learning import TrainConfig, init_prototypes, train
from .network import Prototype, c1_pool, c2_potentials, s2_propagate_learning

__all__ = [
    "EncoderConfig", "SpikeEvent", "SpikeWave", "build_pyramid", "encode_image", "make_gabor_bank",
    "ConfigError", "DataError", "InvalidInputError", "NonConvergenceError", "StdpnetError",
    "FeatureMatrix", "extract_features", "random_prototypes", "reconstruct_preferred",
    "TrainConfig", "init_prototypes", "train",
    "Prototype", "c1_pool", "c2_potentials", "s2_propagate_learning",
]
