"""Per-language k-means codebooks over SSL features and the token codec.

The clustering is deliberately self-contained: distances go through
`np.einsum` (no BLAS dispatch) and centroid sums through `np.add.at`, so a
fit is bit-reproducible for a given (data order, K, seed) regardless of
thread count.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .signal_io import (
    FeatureMatrix,
    FormatError,
    MagicMismatchError,
    TruncatedPayloadError,
)

CODEBOOK_MAGIC = b"EMOC"
CODEBOOK_VERSION = 1
DEFAULT_K = 200
DEFAULT_MAX_ITERS = 100
DEFAULT_REL_TOL = 1e-6

IterationHook = Callable[[int, float], None]


@dataclass(frozen=True)
class Codebook:
    """K x D centroid table fitted on one language's features."""

    centroids: np.ndarray
    language: str
    inertia: float
    seed: int

    def __post_init__(self):
        centroids = np.asarray(self.centroids, dtype=np.float32)
        if centroids.ndim != 2 or centroids.shape[0] < 1 or centroids.shape[1] < 1:
            raise ValueError("centroids must be a non-empty K x D array")
        if not np.all(np.isfinite(centroids)):
            raise ValueError("centroids must be finite")
        if self.inertia < 0.0 or not math.isfinite(self.inertia):
            raise ValueError(f"inertia must be finite and >= 0, got {self.inertia}")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit an unsigned 64-bit integer")
        object.__setattr__(self, "centroids", centroids)

    @property
    def num_clusters(self) -> int:
        return self.centroids.shape[0]

    @property
    def dim(self) -> int:
        return self.centroids.shape[1]


@dataclass(frozen=True)
class TokenSequence:
    """Discrete prosody tokens for one utterance."""

    tokens: np.ndarray
    codebook_size: int
    utt_id: str = ""

    def __post_init__(self):
        tokens = np.asarray(self.tokens, dtype=np.int64)
        if tokens.ndim != 1:
            raise ValueError("tokens must be a 1-D sequence")
        if tokens.size and (tokens.min() < 0 or tokens.max() >= self.codebook_size):
            raise ValueError(f"tokens must lie in [0, {self.codebook_size})")
        object.__setattr__(self, "tokens", tokens)

    def __len__(self) -> int:
        return self.tokens.size


def _as_frame_stack(data) -> np.ndarray:
    if isinstance(data, FeatureMatrix):
        return data.values.astype(np.float64)
    if isinstance(data, np.ndarray):
        return np.asarray(data, dtype=np.float64)
    mats = list(data)
    if not mats:
        raise ValueError("no feature matrices supplied")
    dims = {m.dim for m in mats}
    if len(dims) != 1:
        raise ValueError(f"feature matrices disagree on dimension: {sorted(dims)}")
    return np.concatenate([m.values.astype(np.float64) for m in mats], axis=0)


def _pairwise_sq_dist(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances, (N, K). einsum keeps the reduction order fixed."""
    x_sq = np.einsum("nd,nd->n", x, x)
    c_sq = np.einsum("kd,kd->k", c, c)
    cross = np.einsum("nd,kd->nk", x, c)
    return np.maximum(x_sq[:, None] + c_sq[None, :] - 2.0 * cross, 0.0)


def _kmeanspp_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Greedy k-means++ seeding: per step, the best of a few D^2-weighted draws."""
    n = x.shape[0]
    n_trials = 2 + int(math.log(k)) if k > 1 else 1
    centers = np.empty((k, x.shape[1]), dtype=np.float64)
    centers[0] = x[int(rng.integers(n))]
    d2 = _pairwise_sq_dist(x, centers[:1])[:, 0]
    for i in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            # fewer distinct points than k: fall back to uniform draws
            centers[i] = x[int(rng.integers(n))]
            continue
        draws = np.searchsorted(np.cumsum(d2), rng.random(n_trials) * total)
        draws = np.minimum(draws, n - 1)
        best_pot, best_idx, best_d2 = None, None, None
        for cand in draws:
            cand_d2 = np.minimum(d2, _pairwise_sq_dist(x, x[cand : cand + 1])[:, 0])
            pot = cand_d2.sum()
            if best_pot is None or pot < best_pot:
                best_pot, best_idx, best_d2 = pot, int(cand), cand_d2
        centers[i] = x[best_idx]
        d2 = best_d2
    return centers


def _lloyd_run(
    x: np.ndarray,
    k: int,
    rng: np.random.Generator,
    max_iters: int,
    rel_tol: float,
    iteration_hook: IterationHook | None,
) -> tuple[np.ndarray, float]:
    """One k-means++ init plus Lloyd iterations; returns (centroids, inertia)."""
    n = x.shape[0]
    centroids = _kmeanspp_init(x, k, rng)
    prev_inertia: float | None = None
    inertia = 0.0
    for iteration in range(1, max_iters + 1):
        d2 = _pairwise_sq_dist(x, centroids)
        labels = d2.argmin(axis=1)
        point_d2 = d2[np.arange(n), labels]
        inertia = float(point_d2.sum())
        if iteration_hook is not None:
            iteration_hook(iteration, inertia)
        if prev_inertia is not None and prev_inertia - inertia <= rel_tol * prev_inertia:
            break
        prev_inertia = inertia
        if iteration == max_iters:
            break

        sums = np.zeros_like(centroids)
        np.add.at(sums, labels, x)
        counts = np.bincount(labels, minlength=k).astype(np.float64)
        for empty in np.flatnonzero(counts == 0):
            far = int(point_d2.argmax())
            donor = labels[far]
            sums[donor] -= x[far]
            counts[donor] -= 1
            labels[far] = empty
            sums[empty] = x[far]
            counts[empty] = 1
            point_d2[far] = -1.0
        occupied = counts > 0
        centroids[occupied] = sums[occupied] / counts[occupied, None]
    return centroids, inertia


def kmeans_fit(
    data,
    k: int = DEFAULT_K,
    seed: int = 0,
    max_iters: int = DEFAULT_MAX_ITERS,
    rel_tol: float = DEFAULT_REL_TOL,
    n_init: int = 10,
    language: str = "",
    iteration_hook: IterationHook | None = None,
) -> Codebook:
    """Lloyd's k-means with seeded k-means++ initialization.

    `data` is a frame stack: an (N, D) array, one FeatureMatrix, or a
    sequence of them. Iterations alternate nearest-centroid assignment
    (squared Euclidean) and mean updates; empty clusters are re-seeded from
    the point currently farthest from its centroid. A run stops when the
    relative inertia decrease drops below `rel_tol` or after `max_iters`
    assignment rounds; of `n_init` independent runs (all drawn from the one
    seeded RNG stream) the lowest-inertia codebook wins, so the fit is fully
    deterministic given (data order, K, seed).

    `iteration_hook(iteration, inertia)` fires once per assignment round with
    the objective of the current centroid set; `iteration` restarts from 1 at
    each init. Within a run the reported inertia never increases.
    """
    x = _as_frame_stack(data)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ValueError("data must be a non-empty (N, D) frame stack")
    if not np.all(np.isfinite(x)):
        raise ValueError("training frames must all be finite")
    n = x.shape[0]
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if n < k:
        raise ValueError(f"need at least k={k} frames, got {n}")
    if max_iters < 1 or n_init < 1:
        raise ValueError("max_iters and n_init must be >= 1")

    rng = np.random.default_rng(seed)
    best_centroids: np.ndarray | None = None
    best_inertia = math.inf
    for _ in range(n_init):
        centroids, inertia = _lloyd_run(x, k, rng, max_iters, rel_tol, iteration_hook)
        if inertia < best_inertia:
            best_centroids, best_inertia = centroids, inertia
        if best_inertia == 0.0:
            break

    return Codebook(
        centroids=best_centroids.astype(np.float32),
        language=language,
        inertia=best_inertia,
        seed=seed,
    )


def encode(m: FeatureMatrix, cb: Codebook, utt_id: str = "") -> TokenSequence:
    """Nearest-centroid token per frame; ties resolve to the lowest index."""
    if m.dim != cb.dim:
        raise ValueError(f"feature dim {m.dim} does not match codebook dim {cb.dim}")
    d2 = _pairwise_sq_dist(m.values.astype(np.float64), cb.centroids.astype(np.float64))
    return TokenSequence(d2.argmin(axis=1), cb.num_clusters, utt_id=utt_id)


def decode(
    t: TokenSequence,
    cb: Codebook,
    source: str = "ssl-layer9",
    frame_shift_s: float = 0.02,
) -> FeatureMatrix:
    """Centroid lookup; encode(decode(t)) == t."""
    tokens = t.tokens
    if tokens.size and (tokens.min() < 0 or tokens.max() >= cb.num_clusters):
        raise ValueError(f"token out of range for codebook with K={cb.num_clusters}")
    rows = cb.centroids[tokens] if tokens.size else np.zeros((0, cb.dim), dtype=np.float32)
    return FeatureMatrix(rows, source, frame_shift_s)


def save_codebook(path: str | Path, cb: Codebook) -> None:
    lang_bytes = cb.language.encode("utf-8")
    if len(lang_bytes) > 255:
        raise ValueError("language tag longer than 255 UTF-8 bytes")
    header = struct.pack(
        "<4sIIIQB",
        CODEBOOK_MAGIC,
        CODEBOOK_VERSION,
        cb.num_clusters,
        cb.dim,
        cb.seed,
        len(lang_bytes),
    )
    body = lang_bytes + struct.pack("<d", cb.inertia)
    payload = np.ascontiguousarray(cb.centroids, dtype="<f4").tobytes()
    Path(path).write_bytes(header + body + payload)


def load_codebook(path: str | Path) -> Codebook:
    raw = Path(path).read_bytes()
    fixed = struct.calcsize("<4sIIIQB")
    if len(raw) < 4 or raw[:4] != CODEBOOK_MAGIC:
        raise MagicMismatchError(f"{path}: bad magic (expected EMOC)")
    if len(raw) < fixed:
        raise TruncatedPayloadError(f"{path}: header truncated")
    _, version, k, d, seed, lang_len = struct.unpack_from("<4sIIIQB", raw, 0)
    if version != CODEBOOK_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if k < 1 or d < 1:
        raise FormatError(f"{path}: invalid codebook shape {k}x{d}")
    pos = fixed
    if len(raw) < pos + lang_len + 8:
        raise TruncatedPayloadError(f"{path}: language/inertia fields truncated")
    language = raw[pos : pos + lang_len].decode("utf-8")
    pos += lang_len
    (inertia,) = struct.unpack_from("<d", raw, pos)
    pos += 8
    need = k * d * 4
    payload = raw[pos:]
    if len(payload) < need:
        raise TruncatedPayloadError(f"{path}: payload has {len(payload)} of {need} bytes")
    if len(payload) > need:
        raise FormatError(f"{path}: {len(payload) - need} trailing bytes after payload")
    centroids = np.frombuffer(payload, dtype="<f4").reshape(k, d)
    return Codebook(centroids=centroids, language=language, inertia=inertia, seed=seed)


def stack_features(mats: Sequence[FeatureMatrix]) -> np.ndarray:
    """Concatenate feature matrices into one (N, D) training stack."""
    return _as_frame_stack(mats)
