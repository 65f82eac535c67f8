"""Finite-difference verification of every op and every composed loss.

Runs in 64-bit mode on randomly drawn micro-configurations (embedding
dim <= 8, batch <= 4) and reports the worst relative error per check.
The CLI `gradcheck` command and the acceptance suite both call this.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .corpus import Batch
from .model import Dimensions, PivotModel
from .multimodal import RankLossConfig, rank_loss, three_way_encoder_loss, two_way_encoder_loss
from .rng import rng_for
from .trainer import compute_decoder_loss

TOLERANCE = 1e-4
FD_STEP = 1e-5


@dataclass
class CheckResult:
    name: str
    max_error: float

    @property
    def passed(self) -> bool:
        return self.max_error < TOLERANCE


def _param(rng, shape, name):
    return ad.parameter(rng.normal(0.0, 1.0, size=shape), name=name)


def _op_checks(rng):
    """(name, loss_fn, params) triples exercising each primitive op."""
    n, d = int(rng.integers(2, 5)), int(rng.integers(2, 6))
    k = int(rng.integers(2, 6))
    a = _param(rng, (n, d), "a")
    b = _param(rng, (d, k), "b")
    c = _param(rng, (n, d), "c")
    bias = _param(rng, (1, d), "bias")
    vec = _param(rng, (5,), "vec")
    vec2 = _param(rng, (5,), "vec2")
    table = _param(rng, (6, d), "table")
    ids = rng.integers(0, 6, size=n)
    logits = _param(rng, (n, 8), "logits")
    targets = rng.integers(0, 8, size=n)
    return [
        ("matmul", lambda: ad.mean(ad.matmul(a, b)), [a, b]),
        ("add", lambda: ad.mean(ad.mul(ad.add(a, c), a)), [a, c]),
        ("add_bias_row", lambda: ad.mean(ad.mul(ad.add(a, bias), a)), [a, bias]),
        ("sub", lambda: ad.mean(ad.mul(ad.sub(a, c), c)), [a, c]),
        ("mul", lambda: ad.mean(ad.mul(a, c)), [a, c]),
        ("scale", lambda: ad.mean(ad.scale(ad.mul(a, a), 1.7)), [a]),
        ("tanh", lambda: ad.mean(ad.tanh(a)), [a]),
        ("sigmoid", lambda: ad.mean(ad.sigmoid(a)), [a]),
        ("hinge", lambda: ad.mean(ad.relu(a)), [a]),
        ("dot", lambda: ad.dot(vec, vec2), [vec, vec2]),
        ("sum", lambda: ad.total(ad.mul(a, a)), [a]),
        ("mean", lambda: ad.mean(ad.mul(a, c)), [a, c]),
        ("transpose", lambda: ad.mean(ad.matmul(ad.transpose(a), c)), [a, c]),
        ("concat", lambda: ad.mean(ad.mul(ad.concat([a, c], axis=1),
                                          ad.concat([c, a], axis=1))), [a, c]),
        ("narrow", lambda: ad.mean(ad.mul(ad.narrow(a, 1, 0, max(1, d - 1)),
                                          ad.narrow(c, 1, 0, max(1, d - 1)))), [a, c]),
        ("embedding", lambda: ad.mean(ad.mul(ad.embedding(table, ids),
                                             ad.embedding(table, ids))), [table]),
        ("softmax_xent", lambda: ad.mean(ad.softmax_xent(logits, targets)), [logits]),
        ("l2_normalize", lambda: ad.total(ad.mul(ad.l2_normalize(vec), vec2)), [vec, vec2]),
        ("l2_normalize_rows", lambda: ad.mean(ad.mul(ad.l2_normalize(a), c)), [a, c]),
    ]


def _micro_model(rng, topology: str, d_emb: int):
    batch = int(rng.integers(2, 5))
    dims = Dimensions(d_word=2, d_hid=2, d_emb=d_emb, d_img=3, d_img_hidden=2)
    model = PivotModel(topology, dims, vocab_src_size=6, vocab_tgt_size=6,
                       seed=int(rng.integers(0, 2**31)))

    def batch_for():
        lengths = rng.integers(1, 3, size=batch)
        width = int(lengths.max())
        ids = np.zeros((batch, width), dtype=np.int64)
        for i, length in enumerate(lengths):
            ids[i, :length] = rng.integers(4, 6, size=length)
        features = rng.normal(0.0, 1.0, size=(batch, 3))
        return Batch(ids, lengths.astype(np.int32), features)

    return model, batch_for(), batch_for()


def _loss_checks(rng, d_emb: int):
    """The rank loss and the five composed training losses (Eqs. 1-5 analogs)."""
    cfg = RankLossConfig(margin=float(rng.uniform(0.05, 0.3)))
    n = int(rng.integers(2, 5))
    rank_a = _param(rng, (n, d_emb), "rank_a")
    rank_b = _param(rng, (n, d_emb), "rank_b")
    model3, src3, tgt3 = _micro_model(rng, "three-way", d_emb)
    model2, src2, _ = _micro_model(rng, "two-way", d_emb)
    lam = float(rng.uniform(0.5, 3.0))
    return [
        ("rank_loss",
         lambda: rank_loss(ad.l2_normalize(rank_a), ad.l2_normalize(rank_b), cfg),
         [rank_a, rank_b]),
        ("encoder_loss_two_way",
         lambda: two_way_encoder_loss(model2, src2, cfg),
         model2.encoder_parameters()),
        ("encoder_loss_three_way",
         lambda: three_way_encoder_loss(model3, src3, tgt3, cfg),
         model3.encoder_parameters()),
        ("decoder_loss_image",
         lambda: compute_decoder_loss(model3, tgt3, "image"),
         model3.decoder_parameters() + model3.enc_img.parameters()),
        ("decoder_loss_description",
         lambda: compute_decoder_loss(model3, tgt3, "description"),
         model3.decoder_parameters() + model3.enc_tgt.parameters()),
        ("combined_loss",
         lambda: ad.add(
             compute_decoder_loss(model3, tgt3, "image+description"),
             ad.scale(three_way_encoder_loss(model3, src3, tgt3, cfg), lam),
         ),
         model3.parameters()),
    ]


def run_suite(n_configs: int = 20, seed: int = 0) -> list[CheckResult]:
    """Worst finite-difference error for each op and loss over `n_configs` draws."""
    worst: dict[str, float] = {}
    with ad.precision(64):
        for config_index in range(n_configs):
            rng = rng_for(seed, "gradcheck", config_index)
            d_emb = 3 + config_index % 6  # spans 3..8
            for name, fn, params in _op_checks(rng) + _loss_checks(rng, d_emb):
                err = ad.finite_difference_check(fn, params, FD_STEP)
                worst[name] = max(worst.get(name, 0.0), err)
    return [CheckResult(name, err) for name, err in worst.items()]
