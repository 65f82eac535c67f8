"""Corpus-level BLEU and sentence-level smoothed BLEU.

Corpus BLEU follows the multi-bleu convention: clipped modified n-gram
precisions aggregated over the whole corpus, geometric mean over orders
1..4, and the brevity penalty exp(1 - r/c) when the hypothesis side is
shorter. Any corpus-level precision of zero makes the score zero.

The sentence score ("BLEU+1") add-one smooths the higher-order
precisions, p_n = (m_n + 1) / (h_n + 1) for n >= 2, leaving p_1 raw so a
hypothesis sharing no unigram with its reference still scores zero.

Scorers do no tokenization; inputs are token lists.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass

from .errors import ContractError

MAX_ORDER = 4


@dataclass
class ScoreReport:
    bleu: float  # in [0, 1]
    bleu_plus1: float  # mean sentence-level score, in [0, 1]
    precisions: tuple[float, ...]  # p1..p4
    brevity_penalty: float
    hyp_length: int
    ref_length: int
    sentences: int

    def to_json_line(self) -> str:
        payload = {
            "bleu": self.bleu,
            "bleu_x100": round(self.bleu * 100.0, 2),
            "bleu_plus1": self.bleu_plus1,
            "bleu_plus1_x100": round(self.bleu_plus1 * 100.0, 2),
            "p1": self.precisions[0],
            "p2": self.precisions[1],
            "p3": self.precisions[2],
            "p4": self.precisions[3],
            "brevity_penalty": self.brevity_penalty,
            "hyp_length": self.hyp_length,
            "ref_length": self.ref_length,
            "sentences": self.sentences,
        }
        return json.dumps(payload, sort_keys=True)

    def human_summary(self) -> str:
        # Tables in this area report "BLEU (BLEU+1)" on a 0-100 scale.
        pn = "/".join(f"{p * 100.0:.1f}" for p in self.precisions)
        return (
            f"BLEU {self.bleu * 100.0:.1f} (BLEU+1 {self.bleu_plus1 * 100.0:.1f})  "
            f"precisions {pn}  BP {self.brevity_penalty:.3f}  "
            f"lengths {self.hyp_length}/{self.ref_length} over {self.sentences} sentences"
        )


def ngram_counts(tokens: list[str], n: int) -> dict[tuple[str, ...], int]:
    counts: dict[tuple[str, ...], int] = {}
    for i in range(len(tokens) - n + 1):
        gram = tuple(tokens[i : i + n])
        counts[gram] = counts.get(gram, 0) + 1
    return counts


def _normalize_references(hypotheses, references):
    if len(hypotheses) != len(references):
        raise ContractError(
            f"hypothesis/reference count mismatch: {len(hypotheses)} vs {len(references)}"
        )
    normalized = []
    for refs in references:
        if refs and isinstance(refs[0], list):
            normalized.append([list(r) for r in refs])
        else:
            normalized.append([list(refs)])
    return normalized


def _closest_ref_length(hyp_len: int, refs: list[list[str]]) -> int:
    # Closest reference length, ties toward the shorter, as multi-bleu does.
    best = None
    for ref in refs:
        length = len(ref)
        diff = abs(length - hyp_len)
        if best is None or diff < best[0] or (diff == best[0] and length < best[1]):
            best = (diff, length)
    return best[1]


def _clipped_matches(hyp: list[str], refs: list[list[str]], n: int) -> tuple[int, int]:
    hyp_counts = ngram_counts(hyp, n)
    if not hyp_counts:
        return 0, 0
    max_ref: dict[tuple[str, ...], int] = {}
    for ref in refs:
        for gram, count in ngram_counts(ref, n).items():
            if count > max_ref.get(gram, 0):
                max_ref[gram] = count
    matched = sum(min(count, max_ref.get(gram, 0)) for gram, count in hyp_counts.items())
    return matched, sum(hyp_counts.values())


def brevity_penalty(hyp_length: int, ref_length: int) -> float:
    if hyp_length == 0:
        return 0.0
    if hyp_length >= ref_length:
        return 1.0
    return math.exp(1.0 - ref_length / hyp_length)


def sentence_bleu_plus1(hypothesis: list[str], reference: list[str]) -> float:
    """Lin-Och add-one smoothed sentence BLEU in [0, 1]."""
    if not hypothesis:
        warnings.warn("empty hypothesis scores 0", stacklevel=2)
        return 0.0
    refs = [list(reference)]
    matched1, total1 = _clipped_matches(list(hypothesis), refs, 1)
    if matched1 == 0:
        return 0.0
    log_sum = math.log(matched1 / total1)
    for n in range(2, MAX_ORDER + 1):
        matched, seen = _clipped_matches(list(hypothesis), refs, n)
        log_sum += math.log((matched + 1.0) / (seen + 1.0))
    bp = brevity_penalty(len(hypothesis), _closest_ref_length(len(hypothesis), refs))
    return bp * math.exp(log_sum / MAX_ORDER)


def corpus_bleu(hypotheses: list[list[str]], references, max_n: int = MAX_ORDER) -> ScoreReport:
    """Corpus BLEU plus the mean sentence BLEU+1 over the same pairs.

    `references` holds one token list per hypothesis, or a list of
    reference token lists for multi-reference scoring.
    """
    refs_per_hyp = _normalize_references(hypotheses, references)
    matched = [0] * max_n
    seen = [0] * max_n
    hyp_length = 0
    ref_length = 0
    plus1_total = 0.0
    for hyp, refs in zip(hypotheses, refs_per_hyp):
        hyp = list(hyp)
        hyp_length += len(hyp)
        ref_length += _closest_ref_length(len(hyp), refs)
        for n in range(1, max_n + 1):
            m, s = _clipped_matches(hyp, refs, n)
            matched[n - 1] += m
            seen[n - 1] += s
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            plus1_total += sentence_bleu_plus1(hyp, refs[0])
    precisions = tuple(
        (matched[i] / seen[i]) if seen[i] > 0 else 0.0 for i in range(max_n)
    )
    bp = brevity_penalty(hyp_length, ref_length)
    if any(p == 0.0 for p in precisions):
        bleu = 0.0
    else:
        bleu = bp * math.exp(sum(math.log(p) for p in precisions) / max_n)
    return ScoreReport(
        bleu=bleu,
        bleu_plus1=plus1_total / len(hypotheses) if hypotheses else 0.0,
        precisions=precisions,
        brevity_penalty=bp,
        hyp_length=hyp_length,
        ref_length=ref_length,
        sentences=len(hypotheses),
    )
