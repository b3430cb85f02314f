"""Semi-supervised data augmentation with a graph imputation autoencoder."""
from .augment import AugmentConfig, augment, generate_candidates
from .dataset import Schema, TabularDataset, decode, encode, load_csv
from .model import TrainConfig, impute, train

__all__ = [
    "AugmentConfig", "Schema", "TabularDataset", "TrainConfig", "augment", "decode",
    "encode", "generate_candidates", "impute", "load_csv", "train",
]
__version__ = "0.1.0"
