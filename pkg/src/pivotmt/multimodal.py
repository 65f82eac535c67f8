"""Similarity and the pairwise rank losses that bind modalities together.

The rank loss is image-anchored: for every (image, description) pair in a
batch, every other description in the batch is a negative, and each
violated margin max{0, margin - s(img, pos) + s(img, neg)} contributes to
the loss. Because all embeddings are unit-norm, the dot-product score is
cosine similarity.

Reduction is mean-per-anchor by default so the gradient scale does not
depend on batch size; the literal per-batch sum is available via the
config, as is a symmetric variant that adds the text-anchored direction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, ContractError


@dataclass
class RankLossConfig:
    margin: float = 0.1
    reduction: str = "mean"  # "mean" per anchor, or "sum" over the batch
    symmetric: bool = False  # also rank with text as the anchor

    def validate(self) -> None:
        if self.margin < 0:
            raise ConfigError(f"rank-loss margin must be >= 0, got {self.margin}")
        if self.reduction not in ("mean", "sum"):
            raise ConfigError(f"unknown rank-loss reduction {self.reduction!r}")


def similarity(u: np.ndarray, v: np.ndarray) -> float:
    """Dot product of two unit vectors; equals cosine similarity."""
    u = np.asarray(u).reshape(-1)
    v = np.asarray(v).reshape(-1)
    if u.shape != v.shape:
        raise ContractError(f"similarity: shapes {u.shape} and {v.shape} differ")
    return float(u @ v)


def _directional_rank(anchors: Tensor, positives: Tensor, margin: float) -> Tensor:
    """Sum over anchors of hinge margins against all in-batch negatives."""
    n = anchors.shape[0]
    scores = ad.matmul(anchors, ad.transpose(positives))
    eye = np.eye(n)
    # Row k of (scores * I) @ J is filled with the positive score s_kk, and
    # the margin matrix has an exact zero on the diagonal, so the anchor's
    # own positive never acts as a negative: its hinge term is hinge(0) = 0
    # with a zero subgradient.
    pos_per_row = ad.matmul(ad.mul(scores, ad.constant(eye)), ad.constant(np.ones((n, n))))
    offdiag_margin = ad.constant(margin * (1.0 - eye))
    hinge = ad.relu(ad.add(ad.sub(scores, pos_per_row), offdiag_margin))
    return ad.total(hinge)


def rank_loss(anchors: Tensor, positives: Tensor, cfg: RankLossConfig) -> Tensor:
    """Pairwise rank loss over index-aligned (anchor, positive) embeddings."""
    cfg.validate()
    if anchors.shape != positives.shape or len(anchors.shape) != 2:
        raise ContractError(
            f"rank_loss: anchors {anchors.shape} and positives {positives.shape} must be "
            "matching (batch, dim) matrices"
        )
    n = anchors.shape[0]
    if n < 2:
        raise ContractError(f"rank_loss needs a batch of >= 2 for negatives, got {n}")
    loss = _directional_rank(anchors, positives, cfg.margin)
    if cfg.symmetric:
        loss = ad.add(loss, _directional_rank(positives, anchors, cfg.margin))
    if cfg.reduction == "mean":
        loss = ad.scale(loss, 1.0 / n)
    return loss


def two_way_encoder_loss(model, src_batch, cfg: RankLossConfig) -> Tensor:
    """Rank loss binding source descriptions to their images."""
    image_emb = model.enc_img.encode_batch(src_batch.features)
    text_emb = model.enc_src.encode_batch(src_batch.token_ids, src_batch.lengths)
    return rank_loss(image_emb, text_emb, cfg)


def three_way_encoder_loss(model, src_batch, tgt_batch, cfg: RankLossConfig) -> Tensor:
    """Source-image rank loss plus the target-image rank loss."""
    if model.enc_tgt is None:
        raise ConfigError("three-way encoder loss requires a target encoder")
    source_term = two_way_encoder_loss(model, src_batch, cfg)
    tgt_image_emb = model.enc_img.encode_batch(tgt_batch.features)
    tgt_text_emb = model.enc_tgt.encode_batch(tgt_batch.token_ids, tgt_batch.lengths)
    return ad.add(source_term, rank_loss(tgt_image_emb, tgt_text_emb, cfg))
