"""Audio/feature/manifest ingestion and the toolkit's binary feature format.

The EMOF feature file and the tab-separated evaluation manifest defined here
are the interchange surfaces of the toolkit; external producers (e.g. an SSL
feature dumper) write the same formats.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

FEATURE_MAGIC = b"EMOF"
FEATURE_VERSION = 1
SOURCE_TAGS = {"ssl-layer9": 1, "mel-cepstrum": 2}
_TAG_NAMES = {v: k for k, v in SOURCE_TAGS.items()}

LOG_FLOOR = 1e-10
DEFAULT_FRAME_LEN_S = 0.025
DEFAULT_FRAME_SHIFT_S = 0.010

_U32_MAX = 2**32 - 1


class FormatError(ValueError):
    """A binary or text artifact does not match its declared format."""


class MagicMismatchError(FormatError):
    """File does not start with the expected magic bytes."""


class TruncatedPayloadError(FormatError):
    """File ends before the payload promised by its header."""


class DimensionOverflowError(FormatError):
    """A dimension does not fit the fixed-width header field."""


class UnsupportedFormatError(FormatError):
    """Audio file exists but is not RIFF PCM16 mono."""


class ManifestError(ValueError):
    """Evaluation manifest is malformed; the message names the record."""


@dataclass(frozen=True)
class Waveform:
    """Mono audio: float amplitudes (nominally in [-1, 1]) plus sample rate."""

    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1 or samples.size == 0:
            raise ValueError("waveform must be a non-empty 1-D sample sequence")
        if not np.all(np.isfinite(samples)):
            raise ValueError("waveform samples must all be finite")
        if self.sample_rate_hz < 8000:
            raise ValueError(f"sample rate must be >= 8000 Hz, got {self.sample_rate_hz}")
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz


@dataclass(frozen=True)
class FeatureMatrix:
    """T x D frame-level features (float32) with source tag and frame shift.

    `source` is "ssl-layer9" or "mel-cepstrum"; for mel-cepstra, column 0 is
    the energy coefficient c0. The frame shift is quantized to integer
    microseconds so file round-trips are exact. T = 0 is permitted in memory
    (the decode of an empty token stream) but rejected by the file writer.
    """

    values: np.ndarray
    source: str
    frame_shift_s: float

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float32)
        if values.ndim != 2:
            raise ValueError("feature values must be a 2-D array")
        if values.shape[1] < 1:
            raise ValueError("feature dimension must be >= 1")
        if values.size and not np.all(np.isfinite(values)):
            raise ValueError("feature values must all be finite")
        if self.source not in SOURCE_TAGS:
            raise ValueError(f"unknown source tag {self.source!r}")
        shift_us = round(self.frame_shift_s * 1e6)
        if shift_us < 1:
            raise ValueError(f"frame shift must be >= 1 microsecond, got {self.frame_shift_s}")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "frame_shift_s", shift_us / 1e6)

    @property
    def num_frames(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def frame_shift_us(self) -> int:
        return round(self.frame_shift_s * 1e6)


def read_wav(path: str | Path) -> Waveform:
    """Read a RIFF PCM 16-bit mono file; everything else is rejected."""
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise UnsupportedFormatError(f"{path}: not a RIFF/WAVE file")
    fmt = None
    data = None
    pos = 12
    while pos + 8 <= len(raw):
        chunk_id = raw[pos : pos + 4]
        (chunk_len,) = struct.unpack_from("<I", raw, pos + 4)
        body = raw[pos + 8 : pos + 8 + chunk_len]
        if len(body) < chunk_len:
            raise UnsupportedFormatError(f"{path}: truncated {chunk_id!r} chunk")
        if chunk_id == b"fmt ":
            fmt = body
        elif chunk_id == b"data":
            data = body
        pos += 8 + chunk_len + (chunk_len & 1)  # chunks are word-aligned
    if fmt is None or data is None:
        raise UnsupportedFormatError(f"{path}: missing fmt/data chunk")
    if len(fmt) < 16:
        raise UnsupportedFormatError(f"{path}: malformed fmt chunk")
    audio_format, channels, rate, _, _, bits = struct.unpack_from("<HHIIHH", fmt, 0)
    if audio_format != 1 or bits != 16:
        raise UnsupportedFormatError(
            f"{path}: only PCM16 is supported (format={audio_format}, bits={bits})"
        )
    if channels != 1:
        raise UnsupportedFormatError(f"{path}: only mono is supported ({channels} channels)")
    samples = np.frombuffer(data[: len(data) - (len(data) % 2)], dtype="<i2")
    return Waveform(samples.astype(np.float64) / 32768.0, rate)


def write_wav(path: str | Path, w: Waveform) -> None:
    """Write PCM16 mono (round-trip companion of :func:`read_wav`)."""
    pcm = np.clip(np.round(w.samples * 32768.0), -32768, 32767).astype("<i2")
    data = pcm.tobytes()
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF",
        36 + len(data),
        b"WAVE",
        b"fmt ",
        16,
        1,
        1,
        w.sample_rate_hz,
        w.sample_rate_hz * 2,
        2,
        16,
        b"data",
        len(data),
    )
    Path(path).write_bytes(header + data)


def frame_count(num_samples: int, frame_len: int, frame_shift: int) -> int:
    """Number of frames: ceil((N - len) / shift) + 1 for N >= len, else 1."""
    if num_samples < frame_len:
        return 1
    return -((num_samples - frame_len) // -frame_shift) + 1


def hann_window(length: int) -> np.ndarray:
    """Periodic Hann window (STFT convention)."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(length) / length)


def _frame_signal(samples: np.ndarray, frame_len: int, frame_shift: int) -> np.ndarray:
    """Slice into overlapping frames; the last partial frame is zero-padded."""
    n = frame_count(samples.size, frame_len, frame_shift)
    frames = np.zeros((n, frame_len), dtype=np.float64)
    for t in range(n):
        start = t * frame_shift
        chunk = samples[start : start + frame_len]
        frames[t, : chunk.size] = chunk
    return frames


def frame_and_window(w: Waveform, frame_len_s: float, frame_shift_s: float) -> np.ndarray:
    """Hann-windowed overlapping frames; frame t covers [t*shift, t*shift+len)."""
    if not (frame_len_s >= frame_shift_s > 0):
        raise ValueError("need frame_len_s >= frame_shift_s > 0")
    if not math.isfinite(frame_len_s) or frame_len_s * w.sample_rate_hz > 2**31:
        raise ValueError(f"frame length {frame_len_s}s is not representable")
    frame_len = round(frame_len_s * w.sample_rate_hz)
    frame_shift = round(frame_shift_s * w.sample_rate_hz)
    if frame_len < 1 or frame_shift < 1:
        raise ValueError("frame length and shift must cover at least one sample")
    return _frame_signal(w.samples, frame_len, frame_shift) * hann_window(frame_len)


def hz_to_mel(f):
    """HTK mel scale."""
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(
    n_fft: int, n_mels: int, sample_rate_hz: int
) -> tuple[np.ndarray, np.ndarray]:
    """Triangular mel filterbank on the rfft bin grid.

    Returns (weights, edges_hz): weights is (n_mels, n_fft//2 + 1); edges_hz
    holds the n_mels + 2 triangle corner frequencies. Filter k is supported on
    (edges[k], edges[k+2]), so consecutive supports overlap and together tile
    [0, Nyquist].
    """
    nyquist = sample_rate_hz / 2.0
    edges_hz = mel_to_hz(np.linspace(hz_to_mel(0.0), hz_to_mel(nyquist), n_mels + 2))
    bin_hz = np.arange(n_fft // 2 + 1) * (sample_rate_hz / n_fft)
    weights = np.zeros((n_mels, bin_hz.size), dtype=np.float64)
    for k in range(n_mels):
        left, center, right = edges_hz[k], edges_hz[k + 1], edges_hz[k + 2]
        up = (bin_hz - left) / (center - left)
        down = (right - bin_hz) / (right - center)
        weights[k] = np.maximum(0.0, np.minimum(up, down))
    return weights, edges_hz


def dct_ortho_matrix(n_out: int, n_in: int) -> np.ndarray:
    """First `n_out` rows of the orthonormal type-II DCT matrix of size n_in."""
    k = np.arange(n_out)[:, None]
    n = np.arange(n_in)[None, :]
    mat = np.cos(np.pi * (2 * n + 1) * k / (2 * n_in)) * math.sqrt(2.0 / n_in)
    mat[0] /= math.sqrt(2.0)
    return mat


def mel_cepstra(
    w: Waveform,
    n_fft: int | None = None,
    n_mels: int = 40,
    n_ceps: int = 13,
    frame_len_s: float = DEFAULT_FRAME_LEN_S,
    frame_shift_s: float = DEFAULT_FRAME_SHIFT_S,
) -> FeatureMatrix:
    """Mel-cepstral features: |STFT| -> mel energies -> log -> orthonormal DCT-II.

    Coefficient 0 (energy) is kept in column 0. Log energies are floored at
    1e-10 so silence stays finite. Defaults: 25 ms Hann frames, 10 ms shift,
    n_fft the next power of two >= frame length.
    """
    frames = frame_and_window(w, frame_len_s, frame_shift_s)
    frame_len = frames.shape[1]
    if n_fft is None:
        n_fft = 1 << max(0, (frame_len - 1).bit_length())
    if n_fft < frame_len:
        raise ValueError(f"n_fft {n_fft} shorter than frame length {frame_len}")
    if not (n_ceps <= n_mels <= n_fft // 2 + 1):
        raise ValueError(f"need n_ceps <= n_mels <= n_fft/2+1, got {n_ceps}/{n_mels}/{n_fft}")
    mags = np.abs(np.fft.rfft(frames, n=n_fft, axis=1))
    weights, _ = mel_filterbank(n_fft, n_mels, w.sample_rate_hz)
    # einsum (not BLAS) keeps results identical across thread counts
    energies = np.einsum("mf,tf->tm", weights, mags)
    log_mel = np.log(np.maximum(energies, LOG_FLOOR))
    ceps = np.einsum("cm,tm->tc", dct_ortho_matrix(n_ceps, n_mels), log_mel)
    return FeatureMatrix(ceps.astype(np.float32), "mel-cepstrum", frame_shift_s)


def write_features(path: str | Path, m: FeatureMatrix) -> None:
    """Serialize a FeatureMatrix; the read side restores it bit-exactly."""
    t, d = m.values.shape
    if t < 1:
        raise ValueError("refusing to write a feature file with zero frames")
    if t > _U32_MAX or d > _U32_MAX or m.frame_shift_us > _U32_MAX:
        raise DimensionOverflowError(f"feature header field exceeds u32 ({t}x{d})")
    header = struct.pack(
        "<4sIIIIB",
        FEATURE_MAGIC,
        FEATURE_VERSION,
        t,
        d,
        m.frame_shift_us,
        SOURCE_TAGS[m.source],
    )
    payload = np.ascontiguousarray(m.values, dtype="<f4").tobytes()
    Path(path).write_bytes(header + payload)


def read_features(path: str | Path) -> FeatureMatrix:
    raw = Path(path).read_bytes()
    header_len = struct.calcsize("<4sIIIIB")
    if len(raw) < 4 or raw[:4] != FEATURE_MAGIC:
        raise MagicMismatchError(f"{path}: bad magic (expected EMOF)")
    if len(raw) < header_len:
        raise TruncatedPayloadError(f"{path}: header truncated")
    _, version, t, d, shift_us, tag = struct.unpack_from("<4sIIIIB", raw, 0)
    if version != FEATURE_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if t < 1 or d < 1:
        raise FormatError(f"{path}: invalid dimensions {t}x{d}")
    if tag not in _TAG_NAMES:
        raise FormatError(f"{path}: unknown source tag {tag}")
    need = t * d * 4
    payload = raw[header_len:]
    if len(payload) < need:
        raise TruncatedPayloadError(f"{path}: payload has {len(payload)} of {need} bytes")
    if len(payload) > need:
        raise FormatError(f"{path}: {len(payload) - need} trailing bytes after payload")
    values = np.frombuffer(payload, dtype="<f4").reshape(t, d)
    return FeatureMatrix(values, _TAG_NAMES[tag], shift_us / 1e6)


MANIFEST_HEADER_PREFIX = "#emoeval v1 labels="
_MISSING = "-"


@dataclass(frozen=True)
class UtteranceRecord:
    utt_id: str
    path: Path | None
    ref_transcript: str | None
    hyp_transcript: str | None
    emotion: str
    lang: str
    avd_ref: tuple[float, float, float] | None
    avd_hyp: tuple[float, float, float] | None
    paired_utt: str | None


@dataclass(frozen=True)
class EvalManifest:
    """Corpus description: declared emotion labels plus one record per utterance."""

    labels: tuple[str, ...]
    records: tuple[UtteranceRecord, ...]
    base_dir: Path

    def __len__(self) -> int:
        return len(self.records)

    def by_id(self, utt_id: str) -> UtteranceRecord:
        for rec in self.records:
            if rec.utt_id == utt_id:
                return rec
        raise KeyError(utt_id)

    @property
    def languages(self) -> tuple[str, ...]:
        seen: list[str] = []
        for rec in self.records:
            if rec.lang not in seen:
                seen.append(rec.lang)
        return tuple(seen)


def _parse_avd_field(text: str, where: str) -> tuple[float, float, float] | None:
    if text == _MISSING:
        return None
    parts = text.split(",")
    if len(parts) != 3:
        raise ManifestError(f"{where}: AVD field must be 'x,y,z' or '-', got {text!r}")
    try:
        triple = tuple(float(p) for p in parts)
    except ValueError:
        raise ManifestError(f"{where}: AVD field {text!r} is not numeric") from None
    if not all(math.isfinite(x) for x in triple):
        raise ManifestError(f"{where}: AVD field {text!r} must be finite")
    return triple  # type: ignore[return-value]


def parse_manifest(path: str | Path) -> EvalManifest:
    """Parse and fully validate an evaluation manifest.

    Line 1: `#emoeval v1 labels=<comma-list>`. Records are 9 tab-separated
    fields: utt_id, path, ref_transcript, hyp_transcript, emotion, lang,
    avd_ref, avd_hyp, paired_utt; `-` marks an absent optional field. Paths
    are resolved relative to the manifest and must exist.
    """
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith(MANIFEST_HEADER_PREFIX):
        raise ManifestError(f"{path}: first line must start with {MANIFEST_HEADER_PREFIX!r}")
    labels = tuple(
        label.strip() for label in lines[0][len(MANIFEST_HEADER_PREFIX) :].split(",") if label.strip()
    )
    if not labels:
        raise ManifestError(f"{path}: header declares no emotion labels")
    base_dir = path.parent
    records: list[UtteranceRecord] = []
    seen: set[str] = set()
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 9:
            raise ManifestError(f"{path}:{lineno}: expected 9 tab-separated fields, got {len(fields)}")
        utt_id, path_f, ref_t, hyp_t, emotion, lang, avd_ref_f, avd_hyp_f, paired_f = fields
        where = f"{path}:{lineno} ({utt_id})"
        if not utt_id or utt_id == _MISSING:
            raise ManifestError(f"{path}:{lineno}: missing utt_id")
        if utt_id in seen:
            raise ManifestError(f"{where}: duplicate utt_id {utt_id!r}")
        seen.add(utt_id)
        if emotion not in labels:
            raise ManifestError(
                f"{where}: emotion {emotion!r} not in declared labels {list(labels)}"
            )
        file_path: Path | None = None
        if path_f != _MISSING:
            file_path = (base_dir / path_f).resolve() if not Path(path_f).is_absolute() else Path(path_f)
            if not file_path.exists():
                raise ManifestError(f"{where}: path {path_f!r} does not resolve to a file")
        records.append(
            UtteranceRecord(
                utt_id=utt_id,
                path=file_path,
                ref_transcript=None if ref_t == _MISSING else ref_t,
                hyp_transcript=None if hyp_t == _MISSING else hyp_t,
                emotion=emotion,
                lang=lang,
                avd_ref=_parse_avd_field(avd_ref_f, where),
                avd_hyp=_parse_avd_field(avd_hyp_f, where),
                paired_utt=None if paired_f == _MISSING else paired_f,
            )
        )
    ids = {rec.utt_id for rec in records}
    for rec in records:
        if rec.paired_utt is not None and rec.paired_utt not in ids:
            raise ManifestError(
                f"{path} ({rec.utt_id}): paired utterance {rec.paired_utt!r} not in manifest"
            )
    return EvalManifest(labels=labels, records=tuple(records), base_dir=base_dir)


def format_manifest_record(
    utt_id: str,
    path: str | None = None,
    ref_transcript: str | None = None,
    hyp_transcript: str | None = None,
    emotion: str = _MISSING,
    lang: str = _MISSING,
    avd_ref: Sequence[float] | None = None,
    avd_hyp: Sequence[float] | None = None,
    paired_utt: str | None = None,
) -> str:
    """Render one manifest record line (the writer-side of the grammar)."""

    def avd(t: Sequence[float] | None) -> str:
        return _MISSING if t is None else ",".join(repr(float(x)) for x in t)

    fields = [
        utt_id,
        path if path is not None else _MISSING,
        ref_transcript if ref_transcript is not None else _MISSING,
        hyp_transcript if hyp_transcript is not None else _MISSING,
        emotion,
        lang,
        avd(avd_ref),
        avd(avd_hyp),
        paired_utt if paired_utt is not None else _MISSING,
    ]
    for f in fields:
        if "\t" in f or "\n" in f:
            raise ManifestError(f"manifest fields may not contain tabs/newlines: {f!r}")
    return "\t".join(fields)
