"""Prototype-based one-shot segmentation trained on episode packs."""
from .losses import IGNORE_LABEL, masked_cross_entropy
from .model import (
    Decoder,
    MixingHead,
    PrototypeSegmenter,
    ResNetBackbone,
    TinyBackbone,
    make_backbone,
    masked_prototype,
)
from .packs import EpisodePack, PackEpisode, PackError, batch_tensors, episode_tensors
from .predict import predict_pack
from .train import TrainConfig, load_checkpoint, train

__version__ = "0.1.0"
