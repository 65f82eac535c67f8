"""Data model, preprocessing, feature ingestion and batching.

File formats (shared by real-data preparation and the synthetic world):

* description file: UTF-8 text, one raw sentence per line; the line
  number is the example index.
* feature file: first line ``<count> <dim>``, then `count` lines of `dim`
  space-separated decimal floats, index-aligned with the description file.
* token file (``.tok``): one tokenized sentence per line, tokens joined
  by single spaces.
* vocab file: one token per line in id order, specials first.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, EmptySentenceError, FormatError
from .rng import rng_for

NULL_ID, UNK_ID, BOS_ID, EOS_ID = 0, 1, 2, 3
SPECIAL_TOKENS = ("<null>", "<unk>", "<bos>", "<eos>")

_PUNCTUATION = set('.,;:!?"()')

SPLIT_NAMES = ("train_src", "train_tgt", "val_src", "val_tgt", "test_parallel")


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace, peel surrounding punctuation.

    Leading/trailing occurrences of . , ; : ! ? " ( ) become their own
    tokens; interior punctuation is left attached.
    """
    pieces = text.lower().split()
    if not pieces:
        raise EmptySentenceError("empty or whitespace-only sentence")
    tokens: list[str] = []
    for piece in pieces:
        leading: list[str] = []
        while piece and piece[0] in _PUNCTUATION:
            leading.append(piece[0])
            piece = piece[1:]
        trailing: list[str] = []
        while piece and piece[-1] in _PUNCTUATION:
            trailing.append(piece[-1])
            piece = piece[:-1]
        tokens.extend(leading)
        if piece:
            tokens.append(piece)
        tokens.extend(reversed(trailing))
    return tokens


class Vocabulary:
    """Bidirectional token<->id map with reserved specials at ids 0-3.

    Tokens seen fewer than `min_count` times in the training split map to
    UNK at lookup time. Ids are assigned by descending count, ties broken
    lexicographically, so rebuilding from the same corpus always yields
    the same table.
    """

    def __init__(self, tokens: list[str], min_count: int):
        if list(tokens[:4]) != list(SPECIAL_TOKENS):
            raise FormatError("vocabulary must start with the four special tokens")
        self.tokens = list(tokens)
        self.min_count = min_count
        self._ids = {tok: i for i, tok in enumerate(self.tokens)}
        if len(self._ids) != len(self.tokens):
            raise FormatError("vocabulary contains duplicate tokens")

    @classmethod
    def build(cls, sentences: list[list[str]], min_count: int) -> "Vocabulary":
        if not sentences:
            raise ConfigError("cannot build a vocabulary from an empty corpus")
        counts: dict[str, int] = {}
        for sent in sentences:
            for tok in sent:
                counts[tok] = counts.get(tok, 0) + 1
        kept = [t for t, c in counts.items() if c >= min_count and t not in SPECIAL_TOKENS]
        kept.sort(key=lambda t: (-counts[t], t))
        return cls(list(SPECIAL_TOKENS) + kept, min_count)

    def __len__(self):
        return len(self.tokens)

    def encode(self, token: str) -> int:
        return self._ids.get(token, UNK_ID)

    def encode_all(self, tokens: list[str]) -> list[int]:
        return [self._ids.get(t, UNK_ID) for t in tokens]

    def decode(self, token_id: int) -> str:
        return self.tokens[token_id]

    def decode_all(self, ids) -> list[str]:
        return [self.tokens[i] for i in ids]

    def file_bytes(self) -> bytes:
        return ("\n".join(self.tokens) + "\n").encode("utf-8")

    def content_hash(self) -> str:
        return hashlib.sha256(self.file_bytes()).hexdigest()

    def save(self, path):
        Path(path).write_bytes(self.file_bytes())

    @classmethod
    def load(cls, path, min_count: int = 0) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        return cls(lines, min_count)


@dataclass
class Document:
    """One training example: token ids plus an optional image feature vector.

    Test documents additionally carry reference translations (token ids of
    the target side) and need no image.
    """

    id: str
    language: str
    tokens: list[int]
    image_feature: np.ndarray | None = None
    references: list[list[int]] | None = None


@dataclass
class Corpus:
    split: str
    documents: list[Document] = field(default_factory=list)

    @property
    def size(self) -> int:
        return len(self.documents)

    def ids(self) -> set[str]:
        return {d.id for d in self.documents}


@dataclass
class Batch:
    """NULL-padded token matrix with aligned lengths and feature rows."""

    token_ids: np.ndarray  # (n, max_len) int32, NULL beyond each row's length
    lengths: np.ndarray  # (n,) int32 true lengths
    features: np.ndarray | None  # (n, d_img) or None

    @property
    def size(self) -> int:
        return self.token_ids.shape[0]


def pad_sequences(sequences: list[list[int]]) -> tuple[np.ndarray, np.ndarray]:
    lengths = np.array([len(s) for s in sequences], dtype=np.int32)
    if (lengths == 0).any():
        raise EmptySentenceError("cannot pad an empty token sequence")
    width = int(lengths.max())
    out = np.full((len(sequences), width), NULL_ID, dtype=np.int32)
    for i, seq in enumerate(sequences):
        out[i, : len(seq)] = seq
    return out, lengths


def unpad(token_ids: np.ndarray, lengths: np.ndarray) -> list[list[int]]:
    return [list(map(int, row[:n])) for row, n in zip(token_ids, lengths)]


def _batch_from_documents(docs: list[Document]) -> Batch:
    token_ids, lengths = pad_sequences([d.tokens for d in docs])
    features = None
    if docs and docs[0].image_feature is not None:
        features = np.stack([d.image_feature for d in docs])
    return Batch(token_ids, lengths, features)


def make_batches(corpus: Corpus, batch_size: int, seed: int, epoch: int) -> list[Batch]:
    """Shuffle deterministically from (seed, epoch) and chunk in order.

    The final short batch is kept; rank-loss consumers require every batch
    they see to have at least two rows, which they enforce themselves.
    """
    if batch_size < 2:
        raise ConfigError(f"batch_size must be >= 2 for in-batch negatives, got {batch_size}")
    order = rng_for(seed, "shuffle", corpus.split, epoch).permutation(corpus.size)
    docs = corpus.documents
    return [
        _batch_from_documents([docs[j] for j in order[i : i + batch_size]])
        for i in range(0, len(order), batch_size)
    ]


def make_eval_batches(corpus: Corpus, batch_size: int) -> list[Batch]:
    """Document-order batches for validation/test passes; no shuffling."""
    docs = corpus.documents
    return [
        _batch_from_documents(docs[i : i + batch_size])
        for i in range(0, len(docs), batch_size)
    ]


def _format_float(x) -> str:
    return repr(float(x))


def save_features(path, matrix: np.ndarray) -> None:
    matrix = np.asarray(matrix, dtype=np.float32)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{matrix.shape[0]} {matrix.shape[1] if matrix.ndim == 2 else 0}\n")
        for row in matrix:
            fh.write(" ".join(_format_float(v) for v in row) + "\n")


def load_features(path) -> np.ndarray:
    """Read a feature file into a (count, dim) float32 matrix, row order preserved."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise FormatError(f"{path}: feature header must be '<count> <dim>'")
        try:
            count, dim = int(header[0]), int(header[1])
        except ValueError as exc:
            raise FormatError(f"{path}: non-integer feature header") from exc
        rows = np.empty((count, dim), dtype=np.float32)
        for i in range(count):
            line = fh.readline()
            if not line:
                raise FormatError(f"{path}: expected {count} feature rows, found {i}")
            values = line.split()
            if len(values) != dim:
                raise FormatError(f"{path}: row {i} has {len(values)} values, header says {dim}")
            try:
                rows[i] = [float(v) for v in values]
            except ValueError as exc:
                raise FormatError(f"{path}: row {i} contains a non-numeric value") from exc
        extra = fh.readline()
        if extra.strip():
            raise FormatError(f"{path}: more rows than the header count {count}")
    if not np.isfinite(rows).all():
        raise FormatError(f"{path}: feature matrix contains non-finite values")
    return rows


def load_lines(path) -> list[str]:
    text = Path(path).read_text(encoding="utf-8")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    return lines


def save_lines(path, lines) -> None:
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def load_token_lines(path) -> list[list[str]]:
    return [line.split() for line in load_lines(path)]


@dataclass
class PreparedCorpus:
    """Everything a prepared corpus directory holds, loaded into memory."""

    vocab_src: Vocabulary
    vocab_tgt: Vocabulary
    corpora: dict[str, Corpus]
    d_img: int
    meta: dict
    oracle: list[tuple[str, str]] | None = None  # (src sentence, tgt sentence) token strings


def write_corpus_dir(
    out_dir,
    splits: dict[str, list[dict]],
    vocab_src: Vocabulary,
    vocab_tgt: Vocabulary,
    d_img: int,
    meta: dict,
    oracle: list[tuple[str, str]] | None = None,
) -> list[str]:
    """Write the split/vocab/meta files; returns the artifact paths.

    `splits` maps split name to records with keys: id, tokens (source-side
    token strings; target-side for *_tgt splits), feature (optional row),
    and for test_parallel additionally tgt_tokens.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[str] = []

    def emit(path: Path):
        written.append(str(path))

    for split in SPLIT_NAMES:
        records = splits[split]
        stem = "test" if split == "test_parallel" else split
        save_lines(out / f"{stem}.ids", [r["id"] for r in records])
        emit(out / f"{stem}.ids")
        if split == "test_parallel":
            save_lines(out / "test_src.tok", [" ".join(r["tokens"]) for r in records])
            save_lines(out / "test_tgt.tok", [" ".join(r["tgt_tokens"]) for r in records])
            emit(out / "test_src.tok")
            emit(out / "test_tgt.tok")
        else:
            save_lines(out / f"{stem}.tok", [" ".join(r["tokens"]) for r in records])
            emit(out / f"{stem}.tok")
            features = np.stack([r["feature"] for r in records])
            save_features(out / f"{stem}.feat", features)
            emit(out / f"{stem}.feat")
    vocab_src.save(out / "vocab.src")
    vocab_tgt.save(out / "vocab.tgt")
    emit(out / "vocab.src")
    emit(out / "vocab.tgt")
    if oracle is not None:
        save_lines(out / "oracle.tsv", [f"{s}\t{t}" for s, t in oracle])
        emit(out / "oracle.tsv")
    payload = dict(meta)
    payload["d_img"] = d_img
    payload["splits"] = {name: len(splits[name]) for name in SPLIT_NAMES}
    (out / "corpus.json").write_text(
        json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    emit(out / "corpus.json")
    return written


def load_corpus_dir(path) -> PreparedCorpus:
    root = Path(path)
    if not (root / "corpus.json").exists():
        raise FormatError(f"{root}: not a prepared corpus directory (missing corpus.json)")
    meta = json.loads((root / "corpus.json").read_text(encoding="utf-8"))
    min_count = int(meta.get("min_count", 0))
    vocab_src = Vocabulary.load(root / "vocab.src", min_count)
    vocab_tgt = Vocabulary.load(root / "vocab.tgt", min_count)
    corpora: dict[str, Corpus] = {}
    for split in ("train_src", "train_tgt", "val_src", "val_tgt"):
        source_side = split.endswith("_src")
        vocab = vocab_src if source_side else vocab_tgt
        language = "source" if source_side else "target"
        ids = load_lines(root / f"{split}.ids")
        token_lines = load_token_lines(root / f"{split}.tok")
        features = load_features(root / f"{split}.feat")
        if not (len(ids) == len(token_lines) == features.shape[0]):
            raise FormatError(f"{root}/{split}: ids, tokens and features disagree in length")
        docs = [
            Document(doc_id, language, vocab.encode_all(toks), features[i])
            for i, (doc_id, toks) in enumerate(zip(ids, token_lines))
        ]
        corpora[split] = Corpus(split, docs)
    test_ids = load_lines(root / "test.ids")
    src_lines = load_token_lines(root / "test_src.tok")
    tgt_lines = load_token_lines(root / "test_tgt.tok")
    if not (len(test_ids) == len(src_lines) == len(tgt_lines)):
        raise FormatError(f"{root}/test: ids and token files disagree in length")
    corpora["test_parallel"] = Corpus(
        "test_parallel",
        [
            Document(
                doc_id,
                "source",
                vocab_src.encode_all(src),
                references=[vocab_tgt.encode_all(tgt)],
            )
            for doc_id, src, tgt in zip(test_ids, src_lines, tgt_lines)
        ],
    )
    overlap = corpora["train_src"].ids() & corpora["train_tgt"].ids()
    if overlap:
        raise FormatError(f"{root}: train splits share document ids: {sorted(overlap)[:3]}")
    oracle = None
    if (root / "oracle.tsv").exists():
        oracle = []
        for line in load_lines(root / "oracle.tsv"):
            src, _, tgt = line.partition("\t")
            oracle.append((src, tgt))
    return PreparedCorpus(vocab_src, vocab_tgt, corpora, int(meta["d_img"]), meta, oracle)


def prepare_splits(
    src_sentences: list[str],
    tgt_sentences: list[str],
    features: np.ndarray,
    split_sizes: dict[str, int],
    min_count: int,
    seed: int,
) -> tuple[dict[str, list[dict]], Vocabulary, Vocabulary]:
    """Cut aligned (src, tgt, image) triplets into the five disjoint splits.

    Indices are shuffled once from the seed, then consumed in order:
    train_src, train_tgt, val_src, val_tgt, test. Images never cross
    splits, so the two training sides share no image.
    """
    n = len(src_sentences)
    if len(tgt_sentences) != n or features.shape[0] != n:
        raise FormatError(
            f"description/feature count mismatch: {len(src_sentences)} src, "
            f"{len(tgt_sentences)} tgt, {features.shape[0]} feature rows"
        )
    needed = sum(split_sizes[name] for name in SPLIT_NAMES)
    if needed > n:
        raise ConfigError(f"splits need {needed} examples, corpus has {n}")
    order = rng_for(seed, "split").permutation(n)
    cursor = 0
    splits: dict[str, list[dict]] = {}
    for split in SPLIT_NAMES:
        count = split_sizes[split]
        chosen = order[cursor : cursor + count]
        cursor += count
        records = []
        for idx in chosen:
            idx = int(idx)
            record = {"id": str(idx)}
            if split == "test_parallel":
                record["tokens"] = tokenize(src_sentences[idx])
                record["tgt_tokens"] = tokenize(tgt_sentences[idx])
            elif split.endswith("_src"):
                record["tokens"] = tokenize(src_sentences[idx])
                record["feature"] = features[idx]
            else:
                record["tokens"] = tokenize(tgt_sentences[idx])
                record["feature"] = features[idx]
            records.append(record)
        splits[split] = records
    vocab_src = Vocabulary.build([r["tokens"] for r in splits["train_src"]], min_count)
    vocab_tgt = Vocabulary.build([r["tokens"] for r in splits["train_tgt"]], min_count)
    return splits, vocab_src, vocab_tgt
