"""Reference external-policy client and toy imitation-learning trainer.

Speaks the benchmark harness's newline-delimited JSON wire protocol and
trains a small behavior-cloning sequence model on generated expert
datasets.
"""

from .features import (ACTION_NAMES, CATEGORIES, CONTEXT_WINDOW,
                       FEATURE_SIDE, N_ACTIONS, conditioning_vector,
                       decode_wire_image, image_to_features,
                       observation_features)
from .model import ToyPolicyModel, load_model, save_model
from .session import BridgeError, BridgeSession, serve_policy
from .train import bc_train

__all__ = [
    "ACTION_NAMES", "CATEGORIES", "CONTEXT_WINDOW", "FEATURE_SIDE",
    "N_ACTIONS", "BridgeError", "BridgeSession", "ToyPolicyModel",
    "bc_train", "conditioning_vector", "decode_wire_image",
    "image_to_features", "load_model", "observation_features",
    "save_model", "serve_policy",
]
