"""Shared neural pieces: classification head, plain encoder baseline,
weight hashing, and checkpoint IO."""

from __future__ import annotations

import hashlib
from typing import Sequence

import torch
from torch import nn

from .encoders import TinyEncoderConfig, TinyTransformerEncoder, ids_for_text, pad_batch


class TwoLayerHead(nn.Module):
    """Two-layer perceptron with a gelu between, producing class logits."""

    def __init__(self, dim: int, hidden: int, n_classes: int, dropout: float = 0.1, seed: int = 0):
        super().__init__()
        with torch.random.fork_rng():
            torch.manual_seed(seed)
            self.net = nn.Sequential(
                nn.Linear(dim, hidden),
                nn.GELU(),
                nn.Dropout(dropout),
                nn.Linear(hidden, n_classes),
            )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.net(x)


class EncoderClassifier(nn.Module):
    """Plain encoder + first-token pooling + two-layer head (the baseline)."""

    def __init__(
        self,
        encoder_cfg: TinyEncoderConfig,
        classes: Sequence[str],
        hidden: int | None = None,
        dropout: float = 0.1,
        head_seed: int = 1,
    ):
        super().__init__()
        self.encoder = TinyTransformerEncoder(encoder_cfg)
        self.classes = list(classes)
        self.head = TwoLayerHead(
            encoder_cfg.dim, hidden or 2 * encoder_cfg.dim, len(classes), dropout, head_seed
        )

    def encode_batch(self, texts: Sequence[str]):
        cfg = self.encoder.cfg
        id_lists = [ids_for_text(t, cfg.vocab_buckets)[: cfg.max_len] or [2] for t in texts]
        return pad_batch(id_lists)

    def forward(self, texts: Sequence[str]) -> torch.Tensor:
        ids, real = self.encode_batch(texts)
        hidden = self.encoder(ids, real)
        return self.head(hidden[:, 0])

    @torch.no_grad()
    def predict(self, texts: Sequence[str]) -> list[str]:
        self.eval()
        logits = self.forward(texts)
        return [self.classes[i] for i in logits.argmax(dim=1).tolist()]


def weight_hash(module: nn.Module, prefix: str = "") -> str:
    """SHA-256 over parameters (sorted by name), optionally name-filtered."""
    h = hashlib.sha256()
    state = module.state_dict()
    for name in sorted(state):
        if prefix and not name.startswith(prefix):
            continue
        h.update(name.encode("utf-8"))
        h.update(state[name].detach().cpu().numpy().tobytes())
    return h.hexdigest()


def save_checkpoint(path, *, method: str, task: str, classes: Sequence[str], state_dict, config: dict, extras: dict | None = None) -> None:
    torch.save(
        {
            "method": method,
            "task": task,
            "classes": list(classes),
            "state_dict": state_dict,
            "config": config,
            "extras": extras or {},
        },
        path,
    )


def load_checkpoint(path) -> dict:
    return torch.load(path, map_location="cpu", weights_only=False)
