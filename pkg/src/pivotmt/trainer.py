"""Optimization engine: both training strategies, the supervised baseline,
early stopping, checkpointing and loss logging.

The two-step strategy first minimizes the encoder rank loss with early
stopping on its validation value, then freezes every encoder parameter and
trains the decoder alone. The end-to-end strategy optimizes
``J_all = J_D + lambda * J_E`` jointly, one source batch and one target
batch per step. Validation never uses translations: each phase is scored
on held-out image/description pairs with its own loss.
"""

from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass, fields

import numpy as np

from . import __version__
from . import autodiff as ad
from .autodiff import Tensor
from .checkpoint import SCHEMA_VERSION, load_checkpoint, meta_dict, save_checkpoint
from .corpus import Batch, Corpus, PreparedCorpus, make_batches, make_eval_batches, pad_sequences
from .errors import (
    CompatibilityError,
    ConfigError,
    ContractError,
    NonFiniteGradientError,
    TrainingDivergedError,
)
from .model import PRESETS, PivotModel, resolve_dimensions
from .multimodal import (
    RankLossConfig,
    rank_loss,
    three_way_encoder_loss,
    two_way_encoder_loss,
)
from .rng import rng_for

TOPOLOGY_CHOICES = ("two-way", "three-way")
STRATEGY_CHOICES = ("two-step", "end-to-end")
DECODER_INPUT_CHOICES = ("image", "description", "image+description")


@dataclass
class TrainConfig:
    topology: str = "three-way"
    strategy: str = "end-to-end"
    decoder_inputs: str = "image+description"
    alpha: float = 0.1
    lam: float = 100.0  # weight of the encoder loss in J_all ("lambda" key)
    batch_size: int = 32
    lr: float = 2e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    patience: int = 5
    max_epochs: int = 150
    seed: int = 0
    preset: str = "desk"
    d_word: int = 0  # 0 = take from preset
    d_hid: int = 0
    d_emb: int = 0
    d_img_hidden: int = 0
    symmetric_rank: bool = False
    rank_reduction: str = "mean"
    decoder_conditioning: str = "init"
    min_count: int = 5

    def validate(self) -> None:
        if self.topology not in TOPOLOGY_CHOICES:
            raise ConfigError(f"topology must be one of {TOPOLOGY_CHOICES}, got {self.topology!r}")
        if self.strategy not in STRATEGY_CHOICES:
            raise ConfigError(f"strategy must be one of {STRATEGY_CHOICES}, got {self.strategy!r}")
        if self.decoder_inputs not in DECODER_INPUT_CHOICES:
            raise ConfigError(
                f"decoder_inputs must be one of {DECODER_INPUT_CHOICES}, got {self.decoder_inputs!r}"
            )
        if self.topology == "two-way" and self.decoder_inputs != "image":
            raise ConfigError(
                "two-way model has no target encoder: decoder_inputs must be 'image'"
            )
        if self.alpha < 0:
            raise ConfigError(f"alpha must be >= 0, got {self.alpha}")
        if self.lam < 0:
            raise ConfigError(f"lambda must be >= 0, got {self.lam}")
        if self.patience < 1:
            raise ConfigError(f"patience must be >= 1, got {self.patience}")
        if self.batch_size < 2:
            raise ConfigError(f"batch_size must be >= 2, got {self.batch_size}")
        if self.max_epochs < 1:
            raise ConfigError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if self.preset not in PRESETS:
            raise ConfigError(f"unknown preset {self.preset!r}")
        if self.rank_reduction not in ("mean", "sum"):
            raise ConfigError(f"rank_reduction must be mean or sum, got {self.rank_reduction!r}")
        if self.decoder_conditioning not in ("init", "per-step"):
            raise ConfigError(
                f"decoder_conditioning must be init or per-step, got {self.decoder_conditioning!r}"
            )

    def rank_config(self) -> RankLossConfig:
        return RankLossConfig(self.alpha, self.rank_reduction, self.symmetric_rank)

    def dimension_overrides(self) -> dict:
        return {
            "d_word": self.d_word,
            "d_hid": self.d_hid,
            "d_emb": self.d_emb,
            "d_img_hidden": self.d_img_hidden,
        }

    def as_items(self) -> list[tuple[str, str]]:
        items = []
        for f in fields(self):
            key = "lambda" if f.name == "lam" else f.name
            value = getattr(self, f.name)
            items.append((key, repr(value) if isinstance(value, float) else str(value)))
        return items


@dataclass
class LossLogRow:
    epoch: int
    train_je: float | None = None
    train_jd: float | None = None
    train_jall: float | None = None
    val_loss: float | None = None
    test_loss: float | None = None
    seconds: float | None = None


LOSSLOG_HEADER = "epoch,train_JE,train_JD,train_Jall,val_loss,test_loss,seconds"


def write_losslog(path, rows: list[LossLogRow]) -> None:
    def cell(value):
        return "" if value is None else repr(float(value))

    with open(path, "w", encoding="utf-8") as fh:
        fh.write(LOSSLOG_HEADER + "\n")
        for row in rows:
            fh.write(
                f"{row.epoch},{cell(row.train_je)},{cell(row.train_jd)},"
                f"{cell(row.train_jall)},{cell(row.val_loss)},{cell(row.test_loss)},"
                f"{cell(row.seconds)}\n"
            )


def read_losslog(path) -> list[LossLogRow]:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != LOSSLOG_HEADER:
            raise ContractError(f"{path}: unexpected loss-log header {header!r}")
        for line in fh:
            parts = line.rstrip("\n").split(",")
            values = [None if p == "" else float(p) for p in parts[1:]]
            rows.append(LossLogRow(int(parts[0]), *values))
    return rows


def adam_step(param: Tensor, grad: np.ndarray, state: dict, lr: float,
              beta1: float, beta2: float, eps: float, t: int) -> None:
    """One Adam update with bias correction, in place.

    `state` holds the running moments under "m" and "v"; `t` is the
    1-based step count shared by all parameters.
    """
    if not np.isfinite(grad).all():
        raise NonFiniteGradientError(f"non-finite gradient for tensor {param.name!r}")
    state["m"] = beta1 * state["m"] + (1.0 - beta1) * grad
    state["v"] = beta2 * state["v"] + (1.0 - beta2) * (grad * grad)
    m_hat = state["m"] / (1.0 - beta1**t)
    v_hat = state["v"] / (1.0 - beta2**t)
    param.data -= lr * m_hat / (np.sqrt(v_hat) + eps)


class Adam:
    def __init__(self, params: list[Tensor], lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.state = [
            {"m": np.zeros_like(p.data), "v": np.zeros_like(p.data)} for p in self.params
        ]

    def step(self) -> None:
        self.t += 1
        for param, state in zip(self.params, self.state):
            grad = param.grad if param.grad is not None else np.zeros_like(param.data)
            adam_step(param, grad, state, self.lr, self.beta1, self.beta2, self.eps, self.t)

    def zero_grad(self) -> None:
        for param in self.params:
            param.grad = None


def pair_batches(src_corpus: Corpus, tgt_corpus: Corpus, batch_size: int,
                 seed: int, epoch: int) -> list[tuple[Batch, Batch]]:
    """Joint step schedule: one source batch and one target batch per step.

    The shorter stream is recycled with fresh shuffles until the longer is
    exhausted; an epoch is one pass over the longer stream.
    """
    if src_corpus.size == 0 or tgt_corpus.size == 0:
        raise ConfigError("pair_batches requires non-empty corpora on both sides")
    src = make_batches(src_corpus, batch_size, seed, epoch)
    tgt = make_batches(tgt_corpus, batch_size, seed, epoch)
    steps = max(len(src), len(tgt))

    def extend(stream, corpus):
        cycle = 1
        while len(stream) < steps:
            refill = make_batches(corpus, batch_size, seed, ("refill", epoch, cycle))
            stream.extend(refill[: steps - len(stream)])
            cycle += 1
        return stream

    return list(zip(extend(src, src_corpus), extend(tgt, tgt_corpus)))


def encoder_loss(model: PivotModel, src_batch: Batch, tgt_batch: Batch | None,
                 cfg: RankLossConfig) -> Tensor:
    if model.topology == "three-way":
        if tgt_batch is None:
            raise ContractError("three-way encoder loss needs a target batch")
        return three_way_encoder_loss(model, src_batch, tgt_batch, cfg)
    return two_way_encoder_loss(model, src_batch, cfg)


def compute_decoder_loss(model: PivotModel, tgt_batch: Batch, mode: str) -> Tensor:
    """Decoder cross-entropy on a target batch under the given input mode.

    image:              context = image embedding of the paired image
    description:        context = target-text embedding (autoencoding path)
    image+description:  the sum of both terms on the same batch
    """
    if mode not in DECODER_INPUT_CHOICES:
        raise ConfigError(f"unknown decoder input mode {mode!r}")
    if mode != "image" and model.enc_tgt is None:
        raise ConfigError(f"decoder mode {mode!r} requires a three-way model")
    if mode == "image+description":
        return ad.add(
            compute_decoder_loss(model, tgt_batch, "image"),
            compute_decoder_loss(model, tgt_batch, "description"),
        )
    if mode == "image":
        context = model.enc_img.encode_batch(tgt_batch.features)
    else:
        context = model.enc_tgt.encode_batch(tgt_batch.token_ids, tgt_batch.lengths)
    return model.decoder.nll(context, tgt_batch.token_ids, tgt_batch.lengths)


def supervised_loss(model: PivotModel, src_batch: Batch, tgt_ids: np.ndarray,
                    tgt_lengths: np.ndarray) -> Tensor:
    context = model.enc_src.encode_batch(src_batch.token_ids, src_batch.lengths)
    return model.decoder.nll(context, tgt_ids, tgt_lengths)


def snapshot_parameters(model: PivotModel) -> dict[str, np.ndarray]:
    return {p.name: p.data.copy() for p in model.parameters()}


def restore_parameters(model: PivotModel, snapshot: dict[str, np.ndarray]) -> None:
    for p in model.parameters():
        p.data[...] = snapshot[p.name]


def encoder_hash(model: PivotModel) -> str:
    digest = hashlib.sha256()
    for p in model.encoder_parameters():
        digest.update(p.name.encode())
        digest.update(np.ascontiguousarray(p.data).tobytes())
    return digest.hexdigest()


@dataclass
class TrainResult:
    model: PivotModel
    log_rows: list[LossLogRow]
    best_val: float
    encoder_hash_after_phase1: str | None = None
    encoder_hash_final: str | None = None
    max_target_len: int = 0
    config: TrainConfig | None = None


class _EarlyStopper:
    """Stop a phase `patience` validations after its best validation loss."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = np.inf
        self.stale = 0
        self.best_snapshot: dict[str, np.ndarray] | None = None

    def update(self, value: float, model: PivotModel) -> bool:
        if value < self.best:
            self.best = value
            self.stale = 0
            self.best_snapshot = snapshot_parameters(model)
            return False
        self.stale += 1
        return self.stale >= self.patience


def _finite_or_diverged(value: float, rows, model, stopper) -> float:
    if np.isfinite(value):
        return value
    snapshot = stopper.best_snapshot or snapshot_parameters(model)
    raise TrainingDivergedError(
        f"training loss became non-finite ({value!r}); last good checkpoint retained",
        snapshot=snapshot,
        log_rows=rows,
    )


def _mean_eval_encoder_loss(model, prepared: PreparedCorpus, cfg: TrainConfig) -> float:
    rank_cfg = cfg.rank_config()
    src_batches = make_eval_batches(prepared.corpora["val_src"], cfg.batch_size)
    values = []
    if model.topology == "three-way":
        tgt_batches = make_eval_batches(prepared.corpora["val_tgt"], cfg.batch_size)
        for sb, tb in zip(src_batches, tgt_batches):
            values.append(three_way_encoder_loss(model, sb, tb, rank_cfg).item())
        # Uneven batch counts can only happen with mismatched val split
        # sizes; score the leftovers on their own side.
        for sb in src_batches[len(tgt_batches):]:
            values.append(two_way_encoder_loss(model, sb, rank_cfg).item())
        for tb in tgt_batches[len(src_batches):]:
            emb_i = model.enc_img.encode_batch(tb.features)
            emb_t = model.enc_tgt.encode_batch(tb.token_ids, tb.lengths)
            values.append(rank_loss(emb_i, emb_t, rank_cfg).item())
    else:
        for sb in src_batches:
            values.append(two_way_encoder_loss(model, sb, rank_cfg).item())
    return float(np.mean(values))


def _mean_eval_decoder_loss(model, prepared: PreparedCorpus, cfg: TrainConfig) -> float:
    batches = make_eval_batches(prepared.corpora["val_tgt"], cfg.batch_size)
    values = [compute_decoder_loss(model, b, cfg.decoder_inputs).item() for b in batches]
    return float(np.mean(values))


def oracle_test_loss(model: PivotModel, prepared: PreparedCorpus, batch_size: int) -> float | None:
    """Translation cross-entropy on the parallel test split, if present.

    Teacher-forced decoder NLL of the reference given the source-encoder
    context. This is a different criterion from the training losses, which
    never see a translation pair.
    """
    test = prepared.corpora.get("test_parallel")
    if test is None or test.size == 0:
        return None
    values = []
    docs = test.documents
    for i in range(0, len(docs), batch_size):
        chunk = docs[i : i + batch_size]
        src_ids, src_lengths = pad_sequences([d.tokens for d in chunk])
        tgt_ids, tgt_lengths = pad_sequences([d.references[0] for d in chunk])
        context = model.enc_src.encode_batch(src_ids, src_lengths)
        values.append(model.decoder.nll(context, tgt_ids, tgt_lengths).item())
    return float(np.mean(values))


def max_target_length(prepared: PreparedCorpus) -> int:
    return max(len(d.tokens) for d in prepared.corpora["train_tgt"].documents)


def _step_sources(model, cfg, sb, tb, phase: str):
    """Loss tensors for one optimization step of the given phase."""
    rank_cfg = cfg.rank_config()
    if phase == "encoder":
        je = encoder_loss(model, sb, tb if model.topology == "three-way" else None, rank_cfg)
        return je, None, je
    if phase == "decoder":
        jd = compute_decoder_loss(model, tb, cfg.decoder_inputs)
        return None, jd, jd
    je = encoder_loss(model, sb, tb if model.topology == "three-way" else None, rank_cfg)
    jd = compute_decoder_loss(model, tb, cfg.decoder_inputs)
    return je, jd, ad.add(jd, ad.scale(je, cfg.lam))


def _phase_steps(prepared, cfg, phase: str, model, epoch):
    """Batch schedule for one epoch of the given phase.

    The decoder phase passes once over the target corpus; the two-way
    encoder phase once over the source corpus; anything needing both sides
    pairs the streams, recycling the shorter one.
    """
    src, tgt = prepared.corpora["train_src"], prepared.corpora["train_tgt"]
    if phase == "decoder":
        return [(None, tb) for tb in make_batches(tgt, cfg.batch_size, cfg.seed, epoch)]
    if phase == "encoder" and model.topology == "two-way":
        return [(sb, None) for sb in make_batches(src, cfg.batch_size, cfg.seed, epoch)]
    return pair_batches(src, tgt, cfg.batch_size, cfg.seed, epoch)


def _run_phase(model, prepared, cfg, phase: str, params, start_epoch: int,
               rows: list[LossLogRow], with_test: bool) -> tuple[int, float]:
    """Train one phase with early stopping; model ends at its best snapshot."""
    optimizer = Adam(params, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
    stopper = _EarlyStopper(cfg.patience)
    epoch = start_epoch
    for _local_epoch in range(cfg.max_epochs):
        start = time.perf_counter()
        steps = _phase_steps(prepared, cfg, phase, model, epoch)
        je_values, jd_values, jall_values = [], [], []
        for sb, tb in steps:
            je, jd, objective = _step_sources(model, cfg, sb, tb, phase)
            value = objective.item()
            _finite_or_diverged(value, rows, model, stopper)
            if je is not None:
                je_values.append(je.item())
            if jd is not None:
                jd_values.append(jd.item())
            jall_values.append(value)
            optimizer.zero_grad()
            ad.backward(objective)
            optimizer.step()
        if phase == "encoder":
            val = _mean_eval_encoder_loss(model, prepared, cfg)
        elif phase == "decoder":
            val = _mean_eval_decoder_loss(model, prepared, cfg)
        else:
            val = (_mean_eval_decoder_loss(model, prepared, cfg)
                   + cfg.lam * _mean_eval_encoder_loss(model, prepared, cfg))
        _finite_or_diverged(val, rows, model, stopper)
        test = oracle_test_loss(model, prepared, cfg.batch_size) if with_test else None
        rows.append(LossLogRow(
            epoch=epoch,
            train_je=float(np.mean(je_values)) if je_values else None,
            train_jd=float(np.mean(jd_values)) if jd_values else None,
            train_jall=float(np.mean(jall_values)) if phase == "joint" else None,
            val_loss=val,
            test_loss=test,
            seconds=time.perf_counter() - start,
        ))
        epoch += 1
        if stopper.update(val, model):
            break
    if stopper.best_snapshot is not None:
        restore_parameters(model, stopper.best_snapshot)
    return epoch, stopper.best


def train_two_step(cfg: TrainConfig, prepared: PreparedCorpus) -> TrainResult:
    """Optimize the encoder loss, freeze the encoders, then train the decoder."""
    cfg.validate()
    if cfg.strategy != "two-step":
        raise ConfigError("train_two_step called with a non two-step config")
    model = _build_model(cfg, prepared)
    rows: list[LossLogRow] = []
    next_epoch, _ = _run_phase(model, prepared, cfg, "encoder",
                               model.encoder_parameters(), 0, rows, with_test=False)
    phase1_hash = encoder_hash(model)
    for p in model.encoder_parameters():
        p.requires_grad = False
    _, best = _run_phase(model, prepared, cfg, "decoder",
                         model.decoder_parameters(), next_epoch, rows,
                         with_test=prepared.corpora["test_parallel"].size > 0)
    return TrainResult(
        model=model,
        log_rows=rows,
        best_val=best,
        encoder_hash_after_phase1=phase1_hash,
        encoder_hash_final=encoder_hash(model),
        max_target_len=max_target_length(prepared),
        config=cfg,
    )


def train_end_to_end(cfg: TrainConfig, prepared: PreparedCorpus) -> TrainResult:
    """Jointly optimize J_all = J_D + lambda * J_E with one combined backward."""
    cfg.validate()
    if cfg.strategy != "end-to-end":
        raise ConfigError("train_end_to_end called with a non end-to-end config")
    model = _build_model(cfg, prepared)
    rows: list[LossLogRow] = []
    _, best = _run_phase(model, prepared, cfg, "joint", model.parameters(), 0, rows,
                         with_test=prepared.corpora["test_parallel"].size > 0)
    return TrainResult(
        model=model,
        log_rows=rows,
        best_val=best,
        encoder_hash_final=encoder_hash(model),
        max_target_len=max_target_length(prepared),
        config=cfg,
    )


def train(cfg: TrainConfig, prepared: PreparedCorpus) -> TrainResult:
    if cfg.strategy == "two-step":
        return train_two_step(cfg, prepared)
    return train_end_to_end(cfg, prepared)


def subsample_pairs(pairs: list, size: int, seed: int) -> list:
    """Deterministic subset of parallel pairs, as in the data-size sweep."""
    if size >= len(pairs):
        return list(pairs)
    chosen = rng_for(seed, "subsample").permutation(len(pairs))[:size]
    return [pairs[int(i)] for i in sorted(chosen)]


def train_supervised(cfg: TrainConfig, prepared: PreparedCorpus,
                     pairs: list[tuple[list[int], list[int]]],
                     val_pairs: list[tuple[list[int], list[int]]] | None = None) -> TrainResult:
    """Sequence-to-sequence baseline: source encoder feeding the decoder.

    `pairs` are (source ids, target ids) sentence pairs. Early stopping
    watches the validation pairs when given, otherwise the training loss.
    """
    cfg.validate()
    if not pairs:
        raise ConfigError("supervised training requires a non-empty parallel corpus")
    model = PivotModel(
        "supervised",
        _dims_for(cfg, prepared),
        len(prepared.vocab_src),
        len(prepared.vocab_tgt),
        cfg.seed,
        cfg.decoder_conditioning,
    )
    optimizer = Adam(model.parameters(), cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
    stopper = _EarlyStopper(cfg.patience)
    rows: list[LossLogRow] = []

    def batches_for(data, seed_tag, epoch):
        order = rng_for(cfg.seed, seed_tag, epoch).permutation(len(data))
        out = []
        for i in range(0, len(order), cfg.batch_size):
            chunk = [data[int(j)] for j in order[i : i + cfg.batch_size]]
            src_ids, src_lengths = pad_sequences([s for s, _ in chunk])
            tgt_ids, tgt_lengths = pad_sequences([t for _, t in chunk])
            out.append((Batch(src_ids, src_lengths, None), tgt_ids, tgt_lengths))
        return out

    eval_pairs = val_pairs if val_pairs else pairs
    for epoch in range(cfg.max_epochs):
        start = time.perf_counter()
        losses = []
        for src_batch, tgt_ids, tgt_lengths in batches_for(pairs, "supervised", epoch):
            loss = supervised_loss(model, src_batch, tgt_ids, tgt_lengths)
            value = loss.item()
            _finite_or_diverged(value, rows, model, stopper)
            losses.append(value)
            optimizer.zero_grad()
            ad.backward(loss)
            optimizer.step()
        val_values = []
        for src_batch, tgt_ids, tgt_lengths in batches_for(eval_pairs, "supervised-val", 0):
            val_values.append(supervised_loss(model, src_batch, tgt_ids, tgt_lengths).item())
        val = float(np.mean(val_values))
        rows.append(LossLogRow(epoch=epoch, train_jd=float(np.mean(losses)),
                               val_loss=val, seconds=time.perf_counter() - start))
        if stopper.update(val, model):
            break
    if stopper.best_snapshot is not None:
        restore_parameters(model, stopper.best_snapshot)
    return TrainResult(
        model=model,
        log_rows=rows,
        best_val=stopper.best,
        encoder_hash_final=encoder_hash(model),
        max_target_len=max(len(t) for _, t in pairs),
        config=cfg,
    )


def _dims_for(cfg: TrainConfig, prepared: PreparedCorpus):
    return resolve_dimensions(cfg.preset, prepared.d_img, cfg.dimension_overrides())


def _build_model(cfg: TrainConfig, prepared: PreparedCorpus) -> PivotModel:
    return PivotModel(
        cfg.topology,
        _dims_for(cfg, prepared),
        len(prepared.vocab_src),
        len(prepared.vocab_tgt),
        cfg.seed,
        cfg.decoder_conditioning,
    )


def checkpoint_meta(result: TrainResult, prepared: PreparedCorpus) -> list[tuple[str, str]]:
    model = result.model
    meta = [
        ("schema", SCHEMA_VERSION),
        ("tool_version", __version__),
        ("topology", model.topology),
        ("decoder_conditioning", model.decoder_conditioning),
        ("d_word", str(model.dims.d_word)),
        ("d_hid", str(model.dims.d_hid)),
        ("d_emb", str(model.dims.d_emb)),
        ("d_img", str(model.dims.d_img)),
        ("d_img_hidden", str(model.dims.d_img_hidden)),
        ("vocab_src_size", str(model.vocab_src_size)),
        ("vocab_tgt_size", str(model.vocab_tgt_size)),
        ("vocab_src_hash", prepared.vocab_src.content_hash()),
        ("vocab_tgt_hash", prepared.vocab_tgt.content_hash()),
        ("max_target_len", str(result.max_target_len)),
    ]
    if result.config is not None:
        meta.extend((f"config.{k}", v) for k, v in result.config.as_items())
    return meta


def save_model(prefix, result: TrainResult, prepared: PreparedCorpus) -> None:
    tensors = [(p.name, p.data) for p in result.model.parameters()]
    save_checkpoint(prefix, checkpoint_meta(result, prepared), tensors)


def load_model(prefix, prepared: PreparedCorpus | None = None,
               expect_vocabs: bool = True) -> tuple[PivotModel, dict[str, str]]:
    """Rebuild a model from a checkpoint; verifies vocab hashes when given.

    A hash mismatch against the prepared corpus raises CompatibilityError
    (CLI exit code 3): the checkpoint's token<->id tables are not the
    corpus's, so translations would be garbage.
    """
    meta_pairs, tensors = load_checkpoint(prefix)
    meta = meta_dict(meta_pairs)
    if prepared is not None and expect_vocabs:
        if meta.get("vocab_src_hash") != prepared.vocab_src.content_hash():
            raise CompatibilityError(
                f"checkpoint {prefix}: source vocabulary hash does not match the corpus"
            )
        if meta.get("vocab_tgt_hash") != prepared.vocab_tgt.content_hash():
            raise CompatibilityError(
                f"checkpoint {prefix}: target vocabulary hash does not match the corpus"
            )
    from .model import Dimensions

    dims = Dimensions(
        d_word=int(meta["d_word"]),
        d_hid=int(meta["d_hid"]),
        d_emb=int(meta["d_emb"]),
        d_img=int(meta["d_img"]),
        d_img_hidden=int(meta["d_img_hidden"]),
    )
    model = PivotModel(
        meta["topology"], dims, int(meta["vocab_src_size"]), int(meta["vocab_tgt_size"]),
        seed=0, decoder_conditioning=meta.get("decoder_conditioning", "init"),
    )
    for p in model.parameters():
        if p.name not in tensors:
            raise CompatibilityError(f"checkpoint {prefix}: missing tensor {p.name}")
        loaded = tensors[p.name]
        if loaded.shape != p.data.shape:
            raise CompatibilityError(
                f"checkpoint {prefix}: tensor {p.name} has shape {loaded.shape}, "
                f"model expects {p.data.shape}"
            )
        p.data = loaded.astype(p.data.dtype)
    return model, meta
