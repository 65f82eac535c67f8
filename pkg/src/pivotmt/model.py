"""Model container: the encoders and decoder a topology requires.

Topologies:
  two-way     source text encoder + image encoder + decoder
  three-way   adds the target text encoder
  supervised  source text encoder feeding the decoder directly
"""

from __future__ import annotations

from dataclasses import dataclass

from .decoder import Decoder
from .encoders import ImageEncoder, TextEncoder
from .errors import ConfigError
from .rng import rng_for

TOPOLOGIES = ("two-way", "three-way", "supervised")


@dataclass
class Dimensions:
    d_word: int
    d_hid: int
    d_emb: int
    d_img: int
    d_img_hidden: int


# Desk preset trains the synthetic world in minutes on one CPU core; the
# paper preset matches the published architecture (512-d embeddings,
# 1024-d hidden/multimodal units, 4096-d image features).
PRESETS = {
    "desk": {"d_word": 16, "d_hid": 32, "d_emb": 32, "d_img_hidden": 32},
    "paper": {"d_word": 512, "d_hid": 1024, "d_emb": 1024, "d_img_hidden": 1024},
}


def resolve_dimensions(preset: str, d_img: int, overrides: dict | None = None) -> Dimensions:
    if preset not in PRESETS:
        raise ConfigError(f"unknown dimension preset {preset!r}")
    values = dict(PRESETS[preset])
    for key, value in (overrides or {}).items():
        if key not in values:
            raise ConfigError(f"unknown dimension override {key!r}")
        if value:
            values[key] = int(value)
    return Dimensions(d_img=d_img, **values)


class PivotModel:
    def __init__(self, topology: str, dims: Dimensions, vocab_src_size: int,
                 vocab_tgt_size: int, seed: int, decoder_conditioning: str = "init"):
        if topology not in TOPOLOGIES:
            raise ConfigError(f"unknown topology {topology!r}")
        self.topology = topology
        self.dims = dims
        self.vocab_src_size = vocab_src_size
        self.vocab_tgt_size = vocab_tgt_size
        self.decoder_conditioning = decoder_conditioning
        rng = rng_for(seed, "init")
        # Construction order fixes parameter declaration order, which the
        # checkpoint format and the init stream both depend on.
        self.enc_src = TextEncoder(vocab_src_size, dims.d_word, dims.d_hid, dims.d_emb,
                                   rng, "enc_src")
        self.enc_tgt = None
        if topology == "three-way":
            self.enc_tgt = TextEncoder(vocab_tgt_size, dims.d_word, dims.d_hid,
                                       dims.d_emb, rng, "enc_tgt")
        self.enc_img = None
        if topology != "supervised":
            self.enc_img = ImageEncoder(dims.d_img, dims.d_img_hidden, dims.d_emb,
                                        rng, "enc_img")
        self.decoder = Decoder(vocab_tgt_size, dims.d_word, dims.d_hid, dims.d_emb,
                               rng, "dec", conditioning=decoder_conditioning)

    def encoder_parameters(self):
        params = list(self.enc_src.parameters())
        if self.enc_tgt is not None:
            params.extend(self.enc_tgt.parameters())
        if self.enc_img is not None:
            params.extend(self.enc_img.parameters())
        return params

    def decoder_parameters(self):
        return list(self.decoder.parameters())

    def parameters(self):
        return self.encoder_parameters() + self.decoder_parameters()

    def named_parameters(self):
        return [(p.name, p) for p in self.parameters()]
