"""Sentence and token encoders.

Two families are built in: a deterministic signed-hashing bag encoder for
retrieval and augmentation scoring, and a small trainable transformer whose
blocks accept per-pair attention masks (needed for knowledge injection).
Pretrained checkpoints (contrastive, compact general-purpose, emotion-tuned
sentence encoders) are configuration, not code: they resolve through the
same registry via an optional sentence-transformers plug-in.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np
import torch
from torch import nn

from .errors import EncoderFailure
from .text import stable_hash, tokenize

PAD_ID, CLS_ID, SEP_ID = 0, 1, 2
N_SPECIAL = 3


@dataclass(frozen=True)
class EncoderHandle:
    """Configuration pointer to a sentence encoder."""

    checkpoint_id: str
    embedding_dim: int
    pooling: str = "mean"  # mean | first_token

    def __post_init__(self):
        if self.embedding_dim <= 0:
            raise ValueError("embedding_dim must be positive")
        if self.pooling not in ("mean", "first_token"):
            raise ValueError(f"unknown pooling {self.pooling!r}")


class SentenceEncoder(Protocol):
    embedding_dim: int
    fingerprint: str

    def encode(self, texts: Sequence[str]) -> np.ndarray: ...


class HashingEncoder:
    """Signed token-hashing bag-of-words encoder; deterministic, training-free."""

    def __init__(self, dim: int = 256, seed: int = 0):
        self.embedding_dim = dim
        self.seed = seed
        self.fingerprint = f"hash:{dim}:{seed}"

    def _vector(self, text: str) -> np.ndarray:
        v = np.zeros(self.embedding_dim, dtype=np.float32)
        for tok in tokenize(text):
            h = stable_hash(self.seed, tok.lower())
            v[h % self.embedding_dim] += 1.0 if (h >> 32) & 1 else -1.0
        return v

    def encode(self, texts: Sequence[str]) -> np.ndarray:
        return np.stack([self._vector(t) for t in texts]) if len(texts) else np.zeros(
            (0, self.embedding_dim), dtype=np.float32
        )


def bucket_id(token: str, buckets: int) -> int:
    """Stable vocabulary bucket for a surface token."""
    if token == "<SEP>":
        return SEP_ID
    return N_SPECIAL + stable_hash("vocab", token.lower()) % buckets


def ids_for_text(text: str, buckets: int) -> list[int]:
    return [bucket_id(t, buckets) for t in tokenize(text)]


def pad_batch(id_lists: Sequence[Sequence[int]], device=None) -> tuple[torch.Tensor, torch.Tensor]:
    """Pad to a rectangle; returns (ids, real-token mask)."""
    width = max((len(ids) for ids in id_lists), default=1) or 1
    ids = torch.full((len(id_lists), width), PAD_ID, dtype=torch.long, device=device)
    mask = torch.zeros((len(id_lists), width), dtype=torch.bool, device=device)
    for i, row in enumerate(id_lists):
        ids[i, : len(row)] = torch.tensor(row, dtype=torch.long)
        mask[i, : len(row)] = True
    return ids, mask


@dataclass
class TinyEncoderConfig:
    """Small randomly initialized transformer for desk-scale experiments."""

    dim: int = 32
    heads: int = 2
    layers: int = 2
    ffn_dim: int = 64
    max_len: int = 64
    vocab_buckets: int = 2048
    dropout: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.dim % self.heads != 0:
            raise ValueError("heads must divide dim")


class _Block(nn.Module):
    def __init__(self, cfg: TinyEncoderConfig):
        super().__init__()
        self.attn = nn.MultiheadAttention(cfg.dim, cfg.heads, dropout=cfg.dropout, batch_first=True)
        self.ffn = nn.Sequential(
            nn.Linear(cfg.dim, cfg.ffn_dim), nn.GELU(), nn.Linear(cfg.ffn_dim, cfg.dim)
        )
        self.norm1 = nn.LayerNorm(cfg.dim)
        self.norm2 = nn.LayerNorm(cfg.dim)
        self.drop = nn.Dropout(cfg.dropout)

    def forward(self, x, attn_mask):
        a, _ = self.attn(x, x, x, attn_mask=attn_mask, need_weights=False)
        x = self.norm1(x + self.drop(a))
        x = self.norm2(x + self.drop(self.ffn(x)))
        return x


class TinyTransformerEncoder(nn.Module):
    """Token-level encoder; prepends a CLS token internally.

    ``visible`` restricts token-pair attention (True = may attend); rows are
    additionally restricted to real tokens, with the diagonal always open so
    no attention row is fully masked.
    """

    def __init__(self, cfg: TinyEncoderConfig):
        super().__init__()
        self.cfg = cfg
        with torch.random.fork_rng():
            torch.manual_seed(cfg.seed)
            self.tok_emb = nn.Embedding(N_SPECIAL + cfg.vocab_buckets, cfg.dim, padding_idx=PAD_ID)
            self.pos_emb = nn.Embedding(cfg.max_len + 2, cfg.dim)
            self.blocks = nn.ModuleList(_Block(cfg) for _ in range(cfg.layers))
        self.fingerprint = f"tiny:{cfg.dim}:{cfg.layers}:{cfg.heads}:{cfg.vocab_buckets}:{cfg.seed}"

    @property
    def embedding_dim(self) -> int:
        return self.cfg.dim

    def _attn_mask(self, real: torch.Tensor, visible: torch.Tensor | None) -> torch.Tensor:
        # allowed[b, q, k]: query q may attend to key k
        allowed = real[:, None, :].expand(-1, real.shape[1], -1).clone()
        if visible is not None:
            allowed &= visible
        idx = torch.arange(real.shape[1])
        allowed[:, idx, idx] = True
        mask = ~allowed  # bool attn_mask: True = blocked
        heads = self.cfg.heads
        return mask.repeat_interleave(heads, dim=0)

    def forward(
        self,
        ids: torch.Tensor,
        real: torch.Tensor,
        positions: torch.Tensor | None = None,
        visible: torch.Tensor | None = None,
        trunk: torch.Tensor | None = None,
        add_cls: bool = True,
    ) -> torch.Tensor:
        """Hidden states [B, T(+1), D]; position 0 is CLS when add_cls.

        ``visible`` is [B, T, T] over the supplied tokens; ``trunk`` marks
        which of them are trunk tokens so the prepended CLS joins the trunk
        (mutually visible with trunk tokens only, like any trunk token).
        """
        b, t = ids.shape
        if add_cls:
            ids = torch.cat([torch.full((b, 1), CLS_ID, dtype=torch.long, device=ids.device), ids], dim=1)
            real = torch.cat([torch.ones((b, 1), dtype=torch.bool, device=ids.device), real], dim=1)
            if positions is not None:
                positions = torch.cat(
                    [torch.zeros((b, 1), dtype=torch.long, device=ids.device), positions + 1], dim=1
                )
            if visible is not None:
                if trunk is None:
                    raise ValueError("visible matrix requires trunk membership")
                grown = torch.ones((b, t + 1, t + 1), dtype=torch.bool, device=ids.device)
                grown[:, 1:, 1:] = visible
                grown[:, 0, 1:] = trunk
                grown[:, 1:, 0] = trunk
                visible = grown
        if positions is None:
            positions = torch.arange(ids.shape[1], device=ids.device).expand(b, -1)
        positions = positions.clamp(max=self.pos_emb.num_embeddings - 1)
        x = self.tok_emb(ids) + self.pos_emb(positions)
        mask = self._attn_mask(real, visible)
        for block in self.blocks:
            x = block(x, mask)
        return x

    def encode_texts(self, texts: Sequence[str], pooling: str = "mean") -> np.ndarray:
        """Inference-mode sentence embeddings (deterministic)."""
        was_training = self.training
        self.eval()
        try:
            with torch.no_grad():
                id_lists = [ids_for_text(t, self.cfg.vocab_buckets)[: self.cfg.max_len] or [SEP_ID] for t in texts]
                ids, real = pad_batch(id_lists)
                hidden = self.forward(ids, real)
                if pooling == "first_token":
                    pooled = hidden[:, 0]
                else:
                    real_cls = torch.cat([torch.ones(len(texts), 1, dtype=torch.bool), real], dim=1)
                    denom = real_cls.sum(dim=1, keepdim=True).clamp(min=1)
                    pooled = (hidden * real_cls.unsqueeze(-1)).sum(dim=1) / denom
                return pooled.numpy().astype(np.float32)
        finally:
            self.train(was_training)


class TransformerSentenceEncoder:
    """SentenceEncoder facade over a TinyTransformerEncoder."""

    def __init__(self, module: TinyTransformerEncoder, pooling: str = "mean"):
        self.module = module
        self.pooling = pooling
        self.embedding_dim = module.embedding_dim
        self.fingerprint = f"{module.fingerprint}:{pooling}"

    def encode(self, texts: Sequence[str]) -> np.ndarray:
        try:
            return self.module.encode_texts(texts, self.pooling)
        except Exception as e:  # pragma: no cover - defensive
            raise EncoderFailure(str(e)) from e


def resolve_encoder(handle: EncoderHandle) -> SentenceEncoder:
    """Instantiate the sentence encoder named by a handle.

    Built-ins: ``hash`` and ``tiny`` (optionally ``tiny:<seed>``). Any other
    id is treated as a sentence-transformers checkpoint name and requires
    that package plus a local copy of the weights.
    """
    cid = handle.checkpoint_id
    if cid == "hash":
        return HashingEncoder(dim=handle.embedding_dim)
    if cid == "tiny" or cid.startswith("tiny:"):
        seed = int(cid.split(":", 1)[1]) if ":" in cid else 0
        cfg = TinyEncoderConfig(dim=handle.embedding_dim, seed=seed)
        return TransformerSentenceEncoder(TinyTransformerEncoder(cfg), handle.pooling)
    try:
        from sentence_transformers import SentenceTransformer  # type: ignore
    except ImportError as e:
        raise EncoderFailure(
            f"checkpoint {cid!r} needs the sentence-transformers package; "
            "install it and provide the checkpoint locally, or use 'hash'/'tiny'"
        ) from e
    model = SentenceTransformer(cid)

    class _STAdapter:
        embedding_dim = handle.embedding_dim
        fingerprint = f"st:{cid}"

        def encode(self, texts):
            return np.asarray(model.encode(list(texts), convert_to_numpy=True), dtype=np.float32)

    return _STAdapter()
