"""Hierarchical convolutional BiGRU attention network for three-way tweet sentiment, in plain numpy."""

from .model import LABELS, HyperParams, MacbigParams, build, forward, predict, predict_proba

__all__ = ["LABELS", "HyperParams", "MacbigParams", "build", "forward", "predict", "predict_proba"]
__version__ = "0.1.0"
