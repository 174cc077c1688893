"""Observation/conditioning featurization shared by training and serving.

Each camera image becomes 2 channels at 64x64 (occupancy mask from the
semantic layer, normalized depth); both camera slots are always present,
with an absent second camera arriving as the all-masked image the
simulator emits. Conditioning is the normalized embodiment vector plus a
one-hot target category.
"""

from __future__ import annotations

import numpy as np

from morphnav.embodiment import EmbodimentConfig, normalized_vector
from morphnav.scene import DEFAULT_TARGETS
from morphnav.sensor import Image, NO_HIT_DEPTH, pad_to_square
from morphnav.sim import Action

FEATURE_SIDE = 64
CONTEXT_WINDOW = 100
ACTION_NAMES = tuple(a.value for a in Action)
N_ACTIONS = len(ACTION_NAMES)
ACTION_INDEX = {name: i for i, name in enumerate(ACTION_NAMES)}
CATEGORIES = tuple(DEFAULT_TARGETS)
EMBODIMENT_DIM = 24
CONDITION_DIM = EMBODIMENT_DIM + len(CATEGORIES)
CHANNELS = 4  # (mask, depth) for each of the two camera slots


def decode_wire_image(msg: dict) -> Image:
    """One entry of an obs message's "images" list -> sensor image."""
    data = bytes.fromhex(msg["data"])
    return Image.from_bytes(data, int(msg["width"]), int(msg["height"]),
                            int(msg["camera"]))


def _resize_nearest(arr: np.ndarray, side: int) -> np.ndarray:
    src = arr.shape[0]
    idx = np.minimum((np.arange(side) + 0.5) * src / side, src - 1).astype(int)
    return arr[np.ix_(idx, idx)]


def image_to_features(img: Image, side: int = FEATURE_SIDE) -> np.ndarray:
    """(2, side, side) float32: occupancy mask and depth in [0, 1]."""
    square = pad_to_square(img, max(img.width, img.height, side))
    mask = (square.semantic > 0).astype(np.float32)
    depth = square.depth.astype(np.float32) / float(NO_HIT_DEPTH)
    if square.width != side:
        mask = _resize_nearest(mask, side)
        depth = _resize_nearest(depth, side)
    return np.stack([mask, depth])


def observation_features(images) -> np.ndarray:
    """(4, side, side) float32 from the fixed two-image observation."""
    if len(images) != 2:
        raise ValueError(f"expected exactly 2 images, got {len(images)}")
    return np.concatenate([image_to_features(img) for img in images])


def conditioning_vector(embodiment: EmbodimentConfig | None,
                        target_category: str) -> np.ndarray:
    """(CONDITION_DIM,) float32; zeros for an undisclosed embodiment."""
    vec = np.zeros(CONDITION_DIM, dtype=np.float32)
    if embodiment is not None:
        vec[:EMBODIMENT_DIM] = normalized_vector(embodiment)
    if target_category in CATEGORIES:
        vec[EMBODIMENT_DIM + CATEGORIES.index(target_category)] = 1.0
    return vec
