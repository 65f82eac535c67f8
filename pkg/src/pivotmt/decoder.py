"""Target-language decoder conditioned on a multimodal vector.

Training uses teacher forcing with the standard per-token cross-entropy,
averaged first within each sentence (true tokens plus EOS) and then over
the batch. Generation starts from BOS and by default is greedy; a
length-normalized beam search is available behind a flag and reproduces
greedy decoding exactly at beam width 1.

The context vector conditions the decoder by initializing the LSTM hidden
and cell states through a linear projection ("init" mode). A variant that
instead concatenates the context to the input embedding at every step is
available for ablation ("per-step" mode).
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .corpus import BOS_ID, EOS_ID, NULL_ID
from .encoders import EMBED_INIT_SCALE, LstmCell, init_glorot, init_uniform
from .errors import ConfigError, ContractError

CONDITIONING_MODES = ("init", "per-step")


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


class Decoder:
    def __init__(self, vocab_size: int, d_word: int, d_hid: int, d_emb: int,
                 rng: np.random.Generator, name: str, conditioning: str = "init"):
        if conditioning not in CONDITIONING_MODES:
            raise ConfigError(f"unknown decoder conditioning {conditioning!r}")
        self.vocab_size = vocab_size
        self.d_hid = d_hid
        self.conditioning = conditioning
        self.name = name
        self.ctx_w = init_glorot(rng, (d_emb, 2 * d_hid), f"{name}.ctx_w")
        self.ctx_b = ad.parameter(np.zeros((1, 2 * d_hid)), name=f"{name}.ctx_b")
        self.embed = init_uniform(rng, (vocab_size, d_word), f"{name}.embed",
                                  scale=EMBED_INIT_SCALE)
        d_in = d_word + (d_emb if conditioning == "per-step" else 0)
        self.cell = LstmCell(d_in, d_hid, rng, f"{name}.lstm")
        self.out_w = init_glorot(rng, (d_hid, vocab_size), f"{name}.out_w")
        self.out_b = ad.parameter(np.zeros((1, vocab_size)), name=f"{name}.out_b")

    def parameters(self):
        return [self.ctx_w, self.ctx_b, self.embed, *self.cell.parameters(),
                self.out_w, self.out_b]

    def _initial_state(self, context: Tensor) -> tuple[Tensor, Tensor]:
        n = context.shape[0]
        if self.conditioning == "per-step":
            zeros = ad.constant(np.zeros((n, self.d_hid)))
            return zeros, zeros
        hc = ad.add(ad.matmul(context, self.ctx_w), self.ctx_b)
        return ad.narrow(hc, 1, 0, self.d_hid), ad.narrow(hc, 1, self.d_hid, self.d_hid)

    def _step(self, token_ids: np.ndarray, h: Tensor, c: Tensor,
              context: Tensor) -> tuple[Tensor, Tensor, Tensor]:
        x = ad.embedding(self.embed, token_ids)
        if self.conditioning == "per-step":
            x = ad.concat([x, context], axis=1)
        h, c = self.cell.step(x, h, c)
        logits = ad.add(ad.matmul(h, self.out_w), self.out_b)
        return logits, h, c

    def nll(self, context: Tensor, targets: np.ndarray, lengths: np.ndarray) -> Tensor:
        """Teacher-forced mean cross-entropy.

        For each sentence the per-token -log P is averaged over its true
        tokens plus EOS; the batch value is the mean over sentences, so
        duplicated rows leave it unchanged. NULL-padded positions are
        excluded exactly.
        """
        targets = np.asarray(targets)
        lengths = np.asarray(lengths)
        if targets.ndim != 2 or targets.shape[0] != lengths.shape[0]:
            raise ContractError(f"nll: targets {targets.shape} vs lengths {lengths.shape}")
        if (lengths < 1).any():
            raise ContractError("nll: every target must have at least one token")
        n, width = targets.shape
        steps = int(lengths.max()) + 1  # one extra step to predict EOS
        gold = np.full((n, steps), NULL_ID, dtype=np.int64)
        gold[:, : width] = targets
        rows = np.arange(n)
        gold[rows, lengths] = EOS_ID
        inputs = np.full((n, steps), NULL_ID, dtype=np.int64)
        inputs[:, 0] = BOS_ID
        inputs[:, 1:] = gold[:, :-1]
        h, c = self._initial_state(context)
        total_nll = ad.constant(np.zeros((n, 1)))
        for t in range(steps):
            logits, h, c = self._step(inputs[:, t], h, c, context)
            step_nll = ad.softmax_xent(logits, gold[:, t])
            valid = ad.constant((t <= lengths).astype(float).reshape(-1, 1))
            total_nll = ad.add(total_nll, ad.mul(step_nll, valid))
        per_token = ad.mul(total_nll, ad.constant(1.0 / (lengths + 1).reshape(-1, 1)))
        return ad.mean(per_token)

    def _decode_step_fn(self, context: Tensor):
        def step(token_id: int, state):
            h, c = state
            logits, h, c = self._step(np.array([token_id]), h, c, context)
            return logits.data.reshape(-1), (h, c)

        return step

    def greedy(self, context: Tensor, max_len: int) -> list[int]:
        if max_len < 1:
            raise ContractError(f"max_len must be >= 1, got {max_len}")
        return greedy_decode(self._decode_step_fn(context), self._initial_state(context),
                             max_len)

    def beam(self, context: Tensor, beam_width: int, max_len: int) -> list[int]:
        if max_len < 1:
            raise ContractError(f"max_len must be >= 1, got {max_len}")
        if beam_width < 1:
            raise ContractError(f"beam_width must be >= 1, got {beam_width}")
        return beam_decode(self._decode_step_fn(context), self._initial_state(context),
                           beam_width, max_len)

    def step_probabilities(self, context: Tensor, prefix: list[int]) -> np.ndarray:
        """Next-token distribution after teacher-forcing `prefix`; sums to 1."""
        step = self._decode_step_fn(context)
        state = self._initial_state(context)
        logits, state = step(BOS_ID, state)
        for token in prefix:
            logits, state = step(token, state)
        return np.exp(_log_softmax(logits))


def _mask_reserved(logits: np.ndarray) -> np.ndarray:
    """Suppress NULL and BOS so generated text never contains them."""
    masked = logits.copy()
    masked[NULL_ID] = -np.inf
    masked[BOS_ID] = -np.inf
    return masked


def greedy_decode(step_fn, init_state, max_len: int) -> list[int]:
    """Argmax decoding from BOS; stops at EOS or max_len, EOS excluded.

    Argmax ties break toward the lowest token id.
    """
    tokens: list[int] = []
    state = init_state
    previous = BOS_ID
    for _ in range(max_len):
        logits, state = step_fn(previous, state)
        choice = int(np.argmax(_mask_reserved(logits)))
        if choice == EOS_ID:
            break
        tokens.append(choice)
        previous = choice
    return tokens


def beam_decode(step_fn, init_state, beam_width: int, max_len: int) -> list[int]:
    """Beam search scored by length-normalized log-probability.

    Hypotheses are ranked by total log-probability while expanding and by
    logprob / emitted-step-count (EOS counts as a step) when finished.
    Width 1 reproduces greedy_decode exactly.
    """
    live = [((), 0.0, BOS_ID, init_state)]  # tokens, logprob, last token, state
    finished: list[tuple[float, tuple[int, ...]]] = []
    for _ in range(max_len):
        candidates = []
        for tokens, score, previous, state in live:
            logits, next_state = step_fn(previous, state)
            logprobs = _log_softmax(_mask_reserved(logits))
            order = np.argsort(-logprobs, kind="stable")[:beam_width]
            for token_id in order:
                token_id = int(token_id)
                candidates.append(
                    (score + float(logprobs[token_id]), tokens, token_id, next_state)
                )
        candidates.sort(key=lambda cand: (-cand[0], cand[1], cand[2]))
        live = []
        # A finished hypothesis consumes one of the beam_width slots; with
        # width 1 an EOS argmax therefore ends the search, exactly as greedy.
        for score, tokens, token_id, state in candidates[:beam_width]:
            if token_id == EOS_ID:
                steps = len(tokens) + 1
                finished.append((score / steps, tokens))
            else:
                live.append((tokens + (token_id,), score, token_id, state))
        if not live:
            break
    for tokens, score, _previous, _state in live:
        finished.append((score / max(len(tokens), 1), tokens))
    finished.sort(key=lambda item: (-item[0], item[1]))
    return list(finished[0][1])
