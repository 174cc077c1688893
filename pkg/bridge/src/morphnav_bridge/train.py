"""Behavior-cloning trainer over generated expert datasets.

Observations are re-rendered deterministically by replaying each
record's actions through the simulator, featurized to 64x64 per camera,
and stored quantized. The loss curve (initial evaluation plus one entry
per epoch) is saved alongside the model when an output directory is
given.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from morphnav.dataset import EpisodeSpec, load_dataset
from morphnav.scene import SceneParams, generate_scene
from morphnav.sim import Action, reset, step

from .features import (ACTION_INDEX, CONTEXT_WINDOW, N_ACTIONS,
                       conditioning_vector, observation_features)
from .model import ToyPolicyModel, save_model

DEFAULT_LR = 2e-4
PAD_LABEL = -100


@dataclass
class EpisodeTensors:
    frames: np.ndarray      # (T, C, S, S) uint8-quantized features
    condition: np.ndarray   # (COND,) float32
    prev_actions: np.ndarray  # (T,) int64, N_ACTIONS = start token
    labels: np.ndarray      # (T,) int64


def replay_episode(rec: dict, scene_params: SceneParams,
                   render_max_side: int = 128) -> EpisodeTensors:
    """Re-render one dataset record into training tensors."""
    spec = EpisodeSpec.from_dict(rec["spec"])
    scene = generate_scene(spec.scene_seed, scene_params)
    state, obs = reset(scene, spec.embodiment, spec.start, spec.task,
                       render_max_side=render_max_side)
    frames, prevs, labels = [], [], []
    prev = N_ACTIONS
    for name in rec["actions"][:CONTEXT_WINDOW]:
        feats = observation_features(obs.images)
        frames.append(np.round(feats * 255.0).astype(np.uint8))
        prevs.append(prev)
        label = ACTION_INDEX[name]
        labels.append(label)
        state, result = step(state, Action.from_name(name))
        obs = result.observation
        prev = label
        if result.terminal:
            break
    cond = conditioning_vector(spec.embodiment, spec.task.target_category)
    return EpisodeTensors(frames=np.stack(frames), condition=cond,
                          prev_actions=np.array(prevs, dtype=np.int64),
                          labels=np.array(labels, dtype=np.int64))


def _collate(episodes: list[EpisodeTensors]):
    t_max = max(len(e.labels) for e in episodes)
    b = len(episodes)
    c, s = episodes[0].frames.shape[1], episodes[0].frames.shape[2]
    frames = torch.zeros(b, t_max, c, s, s)
    cond = torch.zeros(b, episodes[0].condition.shape[0])
    prev = torch.full((b, t_max), N_ACTIONS, dtype=torch.long)
    labels = torch.full((b, t_max), PAD_LABEL, dtype=torch.long)
    padding = torch.ones(b, t_max, dtype=torch.bool)
    for i, e in enumerate(episodes):
        t = len(e.labels)
        frames[i, :t] = torch.from_numpy(e.frames).float() / 255.0
        cond[i] = torch.from_numpy(e.condition)
        prev[i, :t] = torch.from_numpy(e.prev_actions)
        labels[i, :t] = torch.from_numpy(e.labels)
        padding[i, :t] = False
    return frames, cond, prev, labels, padding


def _epoch_loss(model, batches, criterion, optimizer=None) -> float:
    total, count = 0.0, 0
    for frames, cond, prev, labels, padding in batches:
        logits = model(frames, cond, prev, padding_mask=padding)
        loss = criterion(logits.reshape(-1, N_ACTIONS), labels.reshape(-1))
        if optimizer is not None:
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
        n = int((labels != PAD_LABEL).sum())
        total += float(loss.detach()) * n
        count += n
    return total / count


def bc_train(dataset_path: str, epochs: int, seed: int,
             out_dir: str | None = None, lr: float = DEFAULT_LR,
             batch_size: int = 8, max_episodes: int | None = None,
             shuffle_labels: bool = False,
             render_max_side: int = 128) -> tuple[ToyPolicyModel, list[float]]:
    """Train on a dataset directory; returns (model, loss curve).

    The curve starts with the pre-training evaluation loss (exactly
    ln(n_actions) for the zero-initialized head) followed by the mean
    training loss of each epoch. shuffle_labels permutes action labels
    globally as a no-signal control.
    """
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    manifest, records = load_dataset(dataset_path)
    params = SceneParams.from_dict(manifest["scene_params"])
    usable = [r for r in records if r["spec"] is not None and r["actions"]]
    if max_episodes is not None:
        usable = usable[:max_episodes]
    if not usable:
        raise ValueError("dataset contains no usable episodes")

    episodes = [replay_episode(r, params, render_max_side) for r in usable]
    gen = torch.Generator().manual_seed(seed)
    if shuffle_labels:
        flat = torch.cat([torch.from_numpy(e.labels) for e in episodes])
        flat = flat[torch.randperm(len(flat), generator=gen)]
        off = 0
        for e in episodes:
            e.labels[:] = flat[off:off + len(e.labels)].numpy()
            off += len(e.labels)

    torch.manual_seed(seed)
    model = ToyPolicyModel()
    criterion = nn.CrossEntropyLoss(ignore_index=PAD_LABEL)
    optimizer = torch.optim.Adam(model.parameters(), lr=lr)

    def batches(order):
        for i in range(0, len(order), batch_size):
            yield _collate([episodes[j] for j in order[i:i + batch_size]])

    model.eval()
    with torch.no_grad():
        losses = [_epoch_loss(model, batches(range(len(episodes))), criterion)]
    model.train()
    for _ in range(epochs):
        order = torch.randperm(len(episodes), generator=gen).tolist()
        losses.append(_epoch_loss(model, batches(order), criterion, optimizer))
    model.eval()

    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        save_model(model, os.path.join(out_dir, "model.pt"))
        with open(os.path.join(out_dir, "losses.json"), "w") as f:
            json.dump({"losses": losses, "epochs": epochs, "lr": lr,
                       "seed": seed, "episodes": len(episodes),
                       "shuffle_labels": shuffle_labels}, f, indent=2)
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
        fig, ax = plt.subplots()
        ax.plot(range(len(losses)), losses, marker="o")
        ax.axhline(math.log(N_ACTIONS), ls="--", c="gray",
                   label=f"uniform = ln {N_ACTIONS}")
        ax.set_xlabel("epoch")
        ax.set_ylabel("cross-entropy")
        ax.legend()
        fig.savefig(os.path.join(out_dir, "loss_curve.png"), dpi=120)
        plt.close(fig)
    return model, losses
