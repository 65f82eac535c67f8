"""Text and image encoders mapping into the shared multimodal space.

All three encoders emit unit-norm vectors of the same dimension so their
outputs can be compared with a plain dot product. Text encoders run an
LSTM over token embeddings, take the hidden state at the last true token
(NULL padding is masked out of the recurrence, so trailing padding cannot
change the result), and project to the embedding dimension. The image
encoder is two affine layers with a tanh between them.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .corpus import NULL_ID
from .errors import ContractError, FormatError

LSTM_INIT_SCALE = 0.08
EMBED_INIT_SCALE = 0.5


def init_uniform(rng: np.random.Generator, shape, name: str,
                 scale: float = LSTM_INIT_SCALE) -> Tensor:
    return ad.parameter(rng.uniform(-scale, scale, size=shape), name=name)


def init_glorot(rng: np.random.Generator, shape, name: str) -> Tensor:
    # Affine layers feeding l2_normalize must not collapse toward zero:
    # the normalization's gradient scales as 1 / pre-norm magnitude.
    limit = float(np.sqrt(6.0 / (shape[0] + shape[1])))
    return ad.parameter(rng.uniform(-limit, limit, size=shape), name=name)


class LstmCell:
    """Single-layer LSTM; gate order i, f, g, o; forget bias starts at 1.0."""

    def __init__(self, d_in: int, d_hid: int, rng: np.random.Generator, name: str):
        self.d_in = d_in
        self.d_hid = d_hid
        self.wx = init_uniform(rng, (d_in, 4 * d_hid), f"{name}.wx")
        self.wh = init_uniform(rng, (d_hid, 4 * d_hid), f"{name}.wh")
        bias = np.zeros((1, 4 * d_hid))
        bias[0, d_hid : 2 * d_hid] = 1.0
        self.bias = ad.parameter(bias, name=f"{name}.bias")

    def parameters(self):
        return [self.wx, self.wh, self.bias]

    def step(self, x: Tensor, h: Tensor, c: Tensor) -> tuple[Tensor, Tensor]:
        gates = ad.add(ad.add(ad.matmul(x, self.wx), ad.matmul(h, self.wh)), self.bias)
        d = self.d_hid
        i = ad.sigmoid(ad.narrow(gates, 1, 0, d))
        f = ad.sigmoid(ad.narrow(gates, 1, d, d))
        g = ad.tanh(ad.narrow(gates, 1, 2 * d, d))
        o = ad.sigmoid(ad.narrow(gates, 1, 3 * d, d))
        c_next = ad.add(ad.mul(f, c), ad.mul(i, g))
        h_next = ad.mul(o, ad.tanh(c_next))
        return h_next, c_next


def run_masked_lstm(cell: LstmCell, step_inputs, lengths: np.ndarray) -> Tensor:
    """Run the recurrence, holding each row's state fixed past its length.

    `step_inputs` is a callable t -> (n, d_in) Tensor. Masking uses exact
    0/1 multiplies, so a padded step reproduces the previous state bitwise
    and trailing NULLs cannot perturb the output.
    """
    n = len(lengths)
    max_len = int(lengths.max())
    min_len = int(lengths.min())
    h = ad.constant(np.zeros((n, cell.d_hid)))
    c = ad.constant(np.zeros((n, cell.d_hid)))
    for t in range(max_len):
        x = step_inputs(t)
        h_next, c_next = cell.step(x, h, c)
        if t < min_len:
            h, c = h_next, c_next
        else:
            keep = (t < lengths).astype(float).reshape(-1, 1)
            live = ad.constant(np.repeat(keep, cell.d_hid, axis=1))
            frozen = ad.constant(np.repeat(1.0 - keep, cell.d_hid, axis=1))
            h = ad.add(ad.mul(live, h_next), ad.mul(frozen, h))
            c = ad.add(ad.mul(live, c_next), ad.mul(frozen, c))
    return h


class TextEncoder:
    """LSTM sentence encoder: last true hidden state, projected and normalized."""

    def __init__(self, vocab_size: int, d_word: int, d_hid: int, d_emb: int,
                 rng: np.random.Generator, name: str):
        self.vocab_size = vocab_size
        self.d_emb = d_emb
        self.name = name
        self.embed = init_uniform(rng, (vocab_size, d_word), f"{name}.embed",
                                  scale=EMBED_INIT_SCALE)
        self.cell = LstmCell(d_word, d_hid, rng, f"{name}.lstm")
        self.proj_w = init_glorot(rng, (d_hid, d_emb), f"{name}.proj_w")
        self.proj_b = ad.parameter(np.zeros((1, d_emb)), name=f"{name}.proj_b")

    def parameters(self):
        return [self.embed, *self.cell.parameters(), self.proj_w, self.proj_b]

    def encode_batch(self, token_ids: np.ndarray, lengths: np.ndarray) -> Tensor:
        """Encode a NULL-padded (n, T) id matrix into (n, d_emb) unit rows."""
        token_ids = np.asarray(token_ids)
        lengths = np.asarray(lengths)
        if token_ids.ndim != 2 or token_ids.shape[0] != lengths.shape[0]:
            raise ContractError(
                f"encode_batch: ids {token_ids.shape} vs lengths {lengths.shape}"
            )
        if (lengths < 1).any():
            raise ContractError("encode_batch: every sequence must have at least one token")
        h_last = run_masked_lstm(
            self.cell, lambda t: ad.embedding(self.embed, token_ids[:, t]), lengths
        )
        projected = ad.add(ad.matmul(h_last, self.proj_w), self.proj_b)
        return ad.l2_normalize(projected)

    def encode(self, token_ids) -> Tensor:
        """Encode one sequence (trailing NULLs ignored); returns a (1, d_emb) unit row."""
        ids = np.asarray(token_ids, dtype=np.int64).reshape(1, -1)
        true_len = ids.shape[1]
        while true_len > 0 and ids[0, true_len - 1] == NULL_ID:
            true_len -= 1
        if true_len == 0:
            raise ContractError("encode: empty token sequence")
        return self.encode_batch(ids, np.array([true_len]))


class ImageEncoder:
    """Two affine layers (tanh between) over precomputed image features."""

    def __init__(self, d_img: int, d_hidden: int, d_emb: int,
                 rng: np.random.Generator, name: str):
        self.d_img = d_img
        self.d_emb = d_emb
        self.name = name
        self.w1 = init_glorot(rng, (d_img, d_hidden), f"{name}.w1")
        self.b1 = ad.parameter(np.zeros((1, d_hidden)), name=f"{name}.b1")
        self.w2 = init_glorot(rng, (d_hidden, d_emb), f"{name}.w2")
        self.b2 = ad.parameter(np.zeros((1, d_emb)), name=f"{name}.b2")

    def parameters(self):
        return [self.w1, self.b1, self.w2, self.b2]

    def encode_batch(self, features: np.ndarray) -> Tensor:
        features = np.asarray(features)
        if features.ndim != 2 or features.shape[1] != self.d_img:
            raise FormatError(
                f"image features must be (n, {self.d_img}), got {features.shape}"
            )
        if not np.isfinite(features).all():
            raise FormatError("image features contain non-finite values")
        hidden = ad.tanh(ad.add(ad.matmul(ad.constant(features), self.w1), self.b1))
        return ad.l2_normalize(ad.add(ad.matmul(hidden, self.w2), self.b2))

    def encode(self, feature) -> Tensor:
        return self.encode_batch(np.asarray(feature).reshape(1, -1))
