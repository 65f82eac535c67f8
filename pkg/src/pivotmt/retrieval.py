"""Nearest-neighbor translation over the multimodal space and the
non-neural retrieval baselines.

Every method here returns a verbatim member of the target training
corpus; nothing is generated. Argmax ties break toward the lowest index
everywhere, and candidate scans are brute force (the corpora involved are
at most tens of thousands of documents).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .corpus import Corpus
from .errors import ContractError, UnsupportedModeError
from .model import PivotModel
from .rng import rng_for


@dataclass
class TargetIndex:
    """Per target document: id, tokens, and its unit-norm embeddings."""

    ids: list[str]
    token_lists: list[list[int]]
    image_embeddings: np.ndarray  # (N, d_emb)
    text_embeddings: np.ndarray | None  # (N, d_emb), three-way models only

    @property
    def size(self) -> int:
        return len(self.ids)


def build_target_index(model: PivotModel, tgt_corpus: Corpus, batch_size: int = 64) -> TargetIndex:
    if tgt_corpus.size == 0:
        raise ContractError("cannot build an index over an empty target corpus")
    docs = tgt_corpus.documents
    image_rows = []
    text_rows = []
    for i in range(0, len(docs), batch_size):
        chunk = docs[i : i + batch_size]
        features = np.stack([d.image_feature for d in chunk])
        image_rows.append(model.enc_img.encode_batch(features).data.copy())
        if model.enc_tgt is not None:
            from .corpus import pad_sequences

            ids, lengths = pad_sequences([d.tokens for d in chunk])
            text_rows.append(model.enc_tgt.encode_batch(ids, lengths).data.copy())
    return TargetIndex(
        ids=[d.id for d in docs],
        token_lists=[list(d.tokens) for d in docs],
        image_embeddings=np.concatenate(image_rows, axis=0),
        text_embeddings=np.concatenate(text_rows, axis=0) if text_rows else None,
    )


def _encode_query(model: PivotModel, query_tokens: list[int]) -> np.ndarray:
    return model.enc_src.encode(query_tokens).data.reshape(-1)


def nearest_image_index(query_tokens: list[int], index: TargetIndex,
                        model: PivotModel) -> int:
    if index.size == 0:
        raise ContractError("empty target index")
    query = _encode_query(model, query_tokens)
    return int(np.argmax(index.image_embeddings @ query))


def nearest_description_index(query_tokens: list[int], index: TargetIndex,
                              model: PivotModel) -> int:
    if index.size == 0:
        raise ContractError("empty target index")
    if index.text_embeddings is None or model.enc_tgt is None:
        raise UnsupportedModeError(
            "description-based retrieval needs a three-way model; "
            "a two-way checkpoint trains no target encoder"
        )
    query = _encode_query(model, query_tokens)
    return int(np.argmax(index.text_embeddings @ query))


def nn_translate_image(query_tokens: list[int], index: TargetIndex,
                       model: PivotModel) -> list[int]:
    """Description of the target image nearest to the encoded query."""
    return list(index.token_lists[nearest_image_index(query_tokens, index, model)])


def nn_translate_description(query_tokens: list[int], index: TargetIndex,
                             model: PivotModel) -> list[int]:
    """Target description nearest to the encoded query, text to text."""
    return list(index.token_lists[nearest_description_index(query_tokens, index, model)])


class TfidfIndex:
    """Raw-count TF with ln(N/df) IDF, cosine-scored; fitted on one corpus."""

    def __init__(self, documents: list[list[int]]):
        self.doc_count = len(documents)
        df: dict[int, int] = {}
        for doc in documents:
            for term in set(doc):
                df[term] = df.get(term, 0) + 1
        self.idf = {term: float(np.log(self.doc_count / count)) for term, count in df.items()}
        self._terms = sorted(self.idf)
        self._term_column = {term: i for i, term in enumerate(self._terms)}
        self.matrix = np.stack([self.vector(doc) for doc in documents])
        norms = np.linalg.norm(self.matrix, axis=1)
        norms[norms == 0.0] = 1.0
        self._unit = self.matrix / norms[:, None]

    def vector(self, tokens: list[int]) -> np.ndarray:
        vec = np.zeros(len(self._terms))
        for token in tokens:
            col = self._term_column.get(token)
            if col is not None:
                vec[col] += self.idf[token]
        return vec

    def nearest(self, tokens: list[int]) -> tuple[int, bool]:
        """Index of the most cosine-similar fitted document.

        Returns (index, degenerate). A query sharing no term with the
        corpus has a zero vector; it falls back to index 0.
        """
        vec = self.vector(tokens)
        norm = np.linalg.norm(vec)
        if norm == 0.0:
            return 0, True
        scores = self._unit @ (vec / norm)
        return int(np.argmax(scores)), False


def tfidf_feature_index(query_tokens: list[int], src_corpus: Corpus,
                        tgt_corpus: Corpus, tfidf: TfidfIndex | None = None) -> int:
    if src_corpus.size == 0 or tgt_corpus.size == 0:
        raise ContractError("tfidf baseline requires non-empty source and target corpora")
    if tfidf is None:
        tfidf = TfidfIndex([list(d.tokens) for d in src_corpus.documents])
    pivot_idx, degenerate = tfidf.nearest(list(query_tokens))
    if degenerate:
        warnings.warn(
            "query has no term in common with the source corpus; falling back to index 0",
            stacklevel=2,
        )
    pivot_feature = src_corpus.documents[pivot_idx].image_feature
    target_features = np.stack([d.image_feature for d in tgt_corpus.documents])
    distances = np.linalg.norm(target_features - pivot_feature[None, :], axis=1)
    return int(np.argmin(distances))


def tfidf_feature_baseline(query_tokens: list[int], src_corpus: Corpus,
                           tgt_corpus: Corpus, tfidf: TfidfIndex | None = None) -> list[int]:
    """Two-stage baseline: TFIDF-nearest source doc, then nearest target image.

    Stage 1 scores the query against source descriptions by TFIDF cosine;
    stage 2 takes the selected document's image and returns the description
    of the target document whose image feature is closest in L2 distance.
    """
    return list(tgt_corpus.documents[
        tfidf_feature_index(query_tokens, src_corpus, tgt_corpus, tfidf)
    ].tokens)


def random_index(tgt_corpus: Corpus, seed: int, query_index: int = 0) -> int:
    if tgt_corpus.size == 0:
        raise ContractError("random baseline requires a non-empty target corpus")
    rng = rng_for(seed, "random-baseline", query_index)
    return int(rng.integers(0, tgt_corpus.size))


def random_baseline(tgt_corpus: Corpus, seed: int, query_index: int = 0) -> list[int]:
    """Uniform draw from the target corpus, deterministic per (seed, query index)."""
    return list(tgt_corpus.documents[random_index(tgt_corpus, seed, query_index)].tokens)
