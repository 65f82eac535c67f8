"""Synthetic grounded-language world for desk-scale end-to-end verification.

Each scene is a (color, object, action) attribute tuple. Language A
describes it with a fixed template, language B with a different surface
lexicon and the attribute order reversed. The image feature is the
concatenated one-hot encoding of the attributes plus Gaussian noise, so
images carry exactly the semantics both languages describe, which is what
lets a pivot-aligned model translate without ever seeing a parallel pair.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import SPLIT_NAMES, Vocabulary, tokenize
from .errors import ConfigError
from .rng import rng_for

COLORS_A = ["red", "blue", "green", "yellow", "black", "white", "orange", "purple"]
OBJECTS_A = ["ball", "cube", "cart", "bird", "tree", "lamp", "boat", "drum"]
ACTIONS_A = ["rolls", "stops", "turns", "shakes", "rises", "drops"]

COLORS_B = ["rubeo", "cyane", "verdo", "aurel", "nigra", "blanka", "oranta", "violea"]
OBJECTS_B = ["balo", "kubo", "vagono", "birdo", "arbo", "lampo", "boato", "tamburo"]
ACTIONS_B = ["rulas", "haltas", "turnas", "skuas", "levas", "falas"]


@dataclass
class WorldConfig:
    """Attribute-slot sizes, scene count, noise level and split sizes.

    Defaults give 90 attribute combinations over 600 scenes: small enough
    to train in minutes on a CPU core, large enough that random pairing
    scores near zero.
    """

    colors: int = 5
    objects: int = 6
    actions: int = 3
    scenes: int = 600
    noise_sigma: float = 0.1
    train_src: int = 250
    train_tgt: int = 250
    val_src: int = 25
    val_tgt: int = 25
    test: int = 50
    min_count: int = 5

    def split_sizes(self) -> dict[str, int]:
        return {
            "train_src": self.train_src,
            "train_tgt": self.train_tgt,
            "val_src": self.val_src,
            "val_tgt": self.val_tgt,
            "test_parallel": self.test,
        }

    def validate(self) -> None:
        for name, limit in (("colors", len(COLORS_A)), ("objects", len(OBJECTS_A)), ("actions", len(ACTIONS_A))):
            value = getattr(self, name)
            if not 1 <= value <= limit:
                raise ConfigError(f"{name} must be in [1, {limit}], got {value}")
        if self.noise_sigma < 0:
            raise ConfigError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        sizes = self.split_sizes()
        if any(v < 0 for v in sizes.values()):
            raise ConfigError("split sizes must be non-negative")
        total = sum(sizes.values())
        if total != self.scenes:
            raise ConfigError(
                f"split sizes sum to {total} but the world has {self.scenes} scenes"
            )

    @property
    def feature_dim(self) -> int:
        return self.colors + self.objects + self.actions


def sentence_a(color: int, obj: int, action: int) -> str:
    return f"The {COLORS_A[color]} {OBJECTS_A[obj]} {ACTIONS_A[action]}."


def sentence_b(color: int, obj: int, action: int) -> str:
    # Reversed attribute order: action, object, color.
    return f"{ACTIONS_B[action].capitalize()} la {OBJECTS_B[obj]} {COLORS_B[color]}."


@dataclass
class SynthData:
    config: WorldConfig
    splits: dict[str, list[dict]]
    raw_sentences: dict[str, list[str]]  # raw text per split (test: src + tgt lists)
    oracle: list[tuple[str, str]]  # tokenized (A sentence, B sentence) pairs
    vocab_src: Vocabulary
    vocab_tgt: Vocabulary


def generate(config: WorldConfig, seed: int) -> SynthData:
    """Roll the world: scenes, features, split assignment, oracle table.

    All draws come from streams derived from `seed`; the same
    (config, seed) always produces byte-identical corpora.
    """
    config.validate()
    rng = rng_for(seed, "synth")
    tuples = np.stack(
        [
            rng.integers(0, config.colors, size=config.scenes),
            rng.integers(0, config.objects, size=config.scenes),
            rng.integers(0, config.actions, size=config.scenes),
        ],
        axis=1,
    )
    features = np.zeros((config.scenes, config.feature_dim), dtype=np.float64)
    rows = np.arange(config.scenes)
    features[rows, tuples[:, 0]] = 1.0
    features[rows, config.colors + tuples[:, 1]] = 1.0
    features[rows, config.colors + config.objects + tuples[:, 2]] = 1.0
    if config.noise_sigma > 0:
        features = features + rng.normal(0.0, config.noise_sigma, size=features.shape)
    features = features.astype(np.float32)

    sizes = config.split_sizes()
    splits: dict[str, list[dict]] = {}
    raw: dict[str, list[str]] = {}
    oracle: list[tuple[str, str]] = []
    cursor = 0
    for split in SPLIT_NAMES:
        records: list[dict] = []
        raw_lines: list[str] = []
        for idx in range(cursor, cursor + sizes[split]):
            c, o, a = (int(v) for v in tuples[idx])
            scene_id = f"scene{idx:05d}"
            if split == "test_parallel":
                src_raw, tgt_raw = sentence_a(c, o, a), sentence_b(c, o, a)
                src_tok, tgt_tok = tokenize(src_raw), tokenize(tgt_raw)
                records.append({"id": scene_id, "tokens": src_tok, "tgt_tokens": tgt_tok})
                raw_lines.append(src_raw)
                oracle.append((" ".join(src_tok), " ".join(tgt_tok)))
            elif split.endswith("_src"):
                text = sentence_a(c, o, a)
                records.append({"id": scene_id, "tokens": tokenize(text), "feature": features[idx]})
                raw_lines.append(text)
            else:
                text = sentence_b(c, o, a)
                records.append({"id": scene_id, "tokens": tokenize(text), "feature": features[idx]})
                raw_lines.append(text)
        cursor += sizes[split]
        splits[split] = records
        raw[split] = raw_lines
    raw["test_tgt"] = [sentence_b(*(int(v) for v in tuples[idx]))
                       for idx in range(cursor - sizes["test_parallel"], cursor)]
    vocab_src = Vocabulary.build([r["tokens"] for r in splits["train_src"]], config.min_count)
    vocab_tgt = Vocabulary.build([r["tokens"] for r in splits["train_tgt"]], config.min_count)
    return SynthData(config, splits, raw, oracle, vocab_src, vocab_tgt)
