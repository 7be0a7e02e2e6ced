"""Intelligibility and sequence-similarity metrics.

Edit-distance based scores (WER/CER, token distance) operate on symbol
sequences; the BLEU-style and greedy-cosine scores operate on prosody token
sequences and dense feature frames respectively.
"""

from __future__ import annotations

import math
import unicodedata
from collections import Counter
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from .signal_io import FeatureMatrix
from .vq_tokenizer import TokenSequence


@dataclass(frozen=True)
class EditCounts:
    distance: int
    substitutions: int
    insertions: int
    deletions: int


def levenshtein(a: Sequence, b: Sequence) -> EditCounts:
    """Unit-cost edit distance with S/I/D counts from one optimal alignment.

    Backtrace ties are resolved substitution > deletion > insertion, so the
    per-kind counts are deterministic. Insertions add symbols of `b`,
    deletions drop symbols of `a`.
    """
    n, m = len(a), len(b)
    dist = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        dist[i][0] = i
    for j in range(1, m + 1):
        dist[0][j] = j
    for i in range(1, n + 1):
        row = dist[i]
        prev = dist[i - 1]
        ai = a[i - 1]
        for j in range(1, m + 1):
            sub = prev[j - 1] + (0 if ai == b[j - 1] else 1)
            row[j] = min(sub, prev[j] + 1, row[j - 1] + 1)

    subs = ins = dels = 0
    i, j = n, m
    while i > 0 or j > 0:
        here = dist[i][j]
        if i > 0 and j > 0 and dist[i - 1][j - 1] + (0 if a[i - 1] == b[j - 1] else 1) == here:
            if a[i - 1] != b[j - 1]:
                subs += 1
            i, j = i - 1, j - 1
        elif i > 0 and dist[i - 1][j] + 1 == here:
            dels += 1
            i -= 1
        else:
            ins += 1
            j -= 1
    return EditCounts(dist[n][m], subs, ins, dels)


def normalize_text(text: str, mode: Literal["word", "char"]) -> list[str]:
    """Normalize a transcript and split it into comparison symbols.

    NFKC-normalize, strip Unicode punctuation (category P*), lowercase in
    word mode, then split on whitespace (word mode) or into non-whitespace
    code points (char mode).
    """
    if mode not in ("word", "char"):
        raise ValueError(f"mode must be 'word' or 'char', got {mode!r}")
    text = unicodedata.normalize("NFKC", text)
    text = "".join(c for c in text if not unicodedata.category(c).startswith("P"))
    if mode == "word":
        return text.lower().split()
    return [c for c in text if not c.isspace()]


def wer(ref_text: str, hyp_text: str, mode: Literal["word", "char"] = "word") -> float:
    """Word (or character) error rate as a percentage of reference length."""
    ref = normalize_text(ref_text, mode)
    hyp = normalize_text(hyp_text, mode)
    if not ref:
        raise ValueError("reference transcript is empty after normalization")
    return 100.0 * levenshtein(ref, hyp).distance / len(ref)


def cer(ref_text: str, hyp_text: str) -> float:
    return wer(ref_text, hyp_text, mode="char")


def speech_token_distance(a: TokenSequence, b: TokenSequence) -> float:
    """Normalized edit similarity between two prosody token streams, in [0, 1]."""
    if a.codebook_size != b.codebook_size:
        raise ValueError(
            f"token sequences come from different codebooks "
            f"(K={a.codebook_size} vs K={b.codebook_size})"
        )
    la, lb = len(a.tokens), len(b.tokens)
    if la == 0 and lb == 0:
        return 1.0
    d = levenshtein(list(a.tokens), list(b.tokens)).distance
    return 1.0 - d / max(la, lb)


def _ngram_counts(tokens: Sequence[int], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def speech_bleu(ref: TokenSequence, hyp: TokenSequence, max_n: int = 2) -> float:
    """BLEU over prosody tokens: smoothed n-gram precisions times brevity penalty.

    Modified precision per order n; a zero match count is add-one smoothed to
    1 / (total + 1). Geometric mean over n = 1..max_n, multiplied by
    exp(min(0, 1 - |ref| / |hyp|)). An empty hypothesis scores 0.
    """
    if not 1 <= max_n <= 4:
        raise ValueError(f"max_n must lie in 1..4, got {max_n}")
    ref_tokens = list(ref.tokens)
    hyp_tokens = list(hyp.tokens)
    if not hyp_tokens:
        return 0.0
    log_sum = 0.0
    for n in range(1, max_n + 1):
        hyp_counts = _ngram_counts(hyp_tokens, n)
        total = sum(hyp_counts.values())
        if total == 0:
            matched = 0
        else:
            ref_counts = _ngram_counts(ref_tokens, n)
            matched = sum(min(c, ref_counts[g]) for g, c in hyp_counts.items())
        p = matched / total if matched > 0 else 1.0 / (total + 1)
        log_sum += math.log(p)
    bp = math.exp(min(0.0, 1.0 - len(ref_tokens) / len(hyp_tokens)))
    return bp * math.exp(log_sum / max_n)


def _unit_rows(m: np.ndarray) -> np.ndarray:
    """L2-normalize rows; zero-norm rows stay zero (similarity 0 to everything)."""
    norms = np.linalg.norm(m, axis=1, keepdims=True)
    safe = np.where(norms > 0.0, norms, 1.0)
    return m / safe


def speech_bert_score(ref: FeatureMatrix, hyp: FeatureMatrix) -> float:
    """Greedy max-cosine F1 between two frame-level feature matrices.

    Precision is the mean over hypothesis frames of the best cosine match in
    the reference; recall is symmetric; the score is their harmonic mean,
    guarded to 0 when precision + recall <= 0.
    """
    if ref.dim != hyp.dim:
        raise ValueError(f"feature dimension mismatch ({ref.dim} vs {hyp.dim})")
    r = _unit_rows(ref.values.astype(np.float64))
    h = _unit_rows(hyp.values.astype(np.float64))
    if r.shape[0] == 0 or h.shape[0] == 0:
        return 0.0
    sim = np.einsum("rd,hd->rh", r, h)
    precision = float(sim.max(axis=0).mean())
    recall = float(sim.max(axis=1).mean())
    if precision + recall <= 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)
