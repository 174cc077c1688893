"""Toy behavior-cloning policy: conv feature extractor per step, causal
transformer decoder over the episode, categorical head over the 7 actions.

The action head is zero-initialized so an untrained model emits the
uniform distribution (cross-entropy exactly ln 7)."""

from __future__ import annotations

import math

import torch
from torch import nn

from .features import (CHANNELS, CONDITION_DIM, CONTEXT_WINDOW, FEATURE_SIDE,
                       N_ACTIONS)


class ToyPolicyModel(nn.Module):
    def __init__(self, d_model: int = 64, n_layers: int = 2,
                 n_heads: int = 4, context: int = CONTEXT_WINDOW):
        super().__init__()
        self.context = context
        self.encoder = nn.Sequential(
            nn.Conv2d(CHANNELS, 8, 5, stride=2, padding=2), nn.GELU(),
            nn.Conv2d(8, 16, 3, stride=2, padding=1), nn.GELU(),
            nn.Conv2d(16, 32, 3, stride=2, padding=1), nn.GELU(),
            nn.AdaptiveAvgPool2d(4), nn.Flatten(),
            nn.Linear(32 * 4 * 4, d_model))
        self.condition_proj = nn.Linear(CONDITION_DIM, d_model)
        self.prev_action_emb = nn.Embedding(N_ACTIONS + 1, d_model)
        self.pos_emb = nn.Embedding(context, d_model)
        layer = nn.TransformerEncoderLayer(
            d_model=d_model, nhead=n_heads, dim_feedforward=4 * d_model,
            batch_first=True, dropout=0.0, norm_first=True)
        self.decoder = nn.TransformerEncoder(layer, n_layers,
                                             enable_nested_tensor=False)
        self.head = nn.Linear(d_model, N_ACTIONS)
        nn.init.zeros_(self.head.weight)
        nn.init.zeros_(self.head.bias)

    def forward(self, frames: torch.Tensor, condition: torch.Tensor,
                prev_actions: torch.Tensor,
                padding_mask: torch.Tensor | None = None) -> torch.Tensor:
        """frames (B, T, C, S, S), condition (B, COND), prev_actions (B, T)
        with N_ACTIONS as the episode-start token -> logits (B, T, A)."""
        b, t = frames.shape[:2]
        if t > self.context:
            raise ValueError(f"sequence length {t} exceeds context {self.context}")
        x = self.encoder(frames.reshape(b * t, *frames.shape[2:]))
        x = x.reshape(b, t, -1)
        x = x + self.condition_proj(condition).unsqueeze(1)
        x = x + self.prev_action_emb(prev_actions)
        x = x + self.pos_emb(torch.arange(t, device=x.device)).unsqueeze(0)
        causal = torch.triu(torch.ones(t, t, dtype=torch.bool,
                                       device=x.device), diagonal=1)
        x = self.decoder(x, mask=causal, src_key_padding_mask=padding_mask)
        return self.head(x)

    @torch.no_grad()
    def action_distribution(self, frames: torch.Tensor,
                            condition: torch.Tensor,
                            prev_actions: torch.Tensor) -> torch.Tensor:
        """Probabilities over actions for the latest step of one episode
        context: frames (T, C, S, S), condition (COND,), prev (T,)."""
        t = frames.shape[0]
        start = max(0, t - self.context)
        logits = self.forward(frames[start:].unsqueeze(0),
                              condition.unsqueeze(0),
                              prev_actions[start:].unsqueeze(0))
        return torch.softmax(logits[0, -1], dim=-1)


def save_model(model: ToyPolicyModel, path: str) -> None:
    torch.save({"state_dict": model.state_dict(),
                "context": model.context}, path)


def load_model(path: str) -> ToyPolicyModel:
    blob = torch.load(path, map_location="cpu", weights_only=True)
    model = ToyPolicyModel(context=int(blob["context"]))
    model.load_state_dict(blob["state_dict"])
    model.eval()
    return model
