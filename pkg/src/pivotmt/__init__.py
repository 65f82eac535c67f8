"""pivotmt: zero-resource translation through an image-pivoted multimodal space.

A source-language encoder and a target-language decoder are aligned through
a shared embedding space learned from disjoint monolingual corpora of
{description, image-feature} pairs; no source-target parallel data is used
for training. The package bundles the models, both training strategies,
nearest-neighbor translation, non-neural baselines, BLEU scoring, and a
synthetic grounded-language world small enough to verify the whole pipeline
on one CPU core.
"""

__version__ = "0.1.0"
