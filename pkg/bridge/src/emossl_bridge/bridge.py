"""Dump pretrained-model outputs into the toolkit's file formats.

`dump_features` writes one EMOF file per wav with the hidden states of a
chosen transformer layer (HuBERT-style models); `dump_avd` writes manifest
lines carrying one arousal/valence/dominance triple per wav from a 3-output
audio regression/classification head. Model outputs pass through untouched.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .emof import MISSING, manifest_record, write_emof

DEFAULT_MODEL = "facebook/hubert-base-ls960"
FRAGMENT_NAME = "manifest.fragment"


class BridgeError(RuntimeError):
    """Model loading or audio decoding failed; message names the culprit."""


@dataclass
class BridgeConfig:
    """Settings for a dump run.

    `model` is a hub identifier or a local checkpoint directory. `layer`
    indexes the transformer hidden states (9 is the conventional choice for
    12-layer base encoders); it must lie within the loaded model's depth.
    """

    model: str = DEFAULT_MODEL
    layer: int = 9
    sample_rate_hz: int = 16000
    batch_size: int = 1
    out_dir: Path = field(default_factory=lambda: Path("."))
    lang: str = MISSING
    emotion: str = MISSING

    def __post_init__(self):
        self.out_dir = Path(self.out_dir)
        if self.layer < 0:
            raise ValueError(f"layer index must be >= 0, got {self.layer}")
        if self.sample_rate_hz < 8000:
            raise ValueError("target sample rate must be >= 8000 Hz")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")


@dataclass
class DumpResult:
    written: list[Path]
    fragment_lines: list[str]
    errors: list[str]

    @property
    def fragment_text(self) -> str:
        return "".join(line + "\n" for line in self.fragment_lines)


def read_audio(path: str | Path) -> tuple[np.ndarray, int]:
    """Read a RIFF PCM16 wav as mono float32; multi-channel is averaged."""
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise BridgeError(f"{path}: not a RIFF/WAVE file")
    fmt = data = None
    pos = 12
    while pos + 8 <= len(raw):
        chunk_id = raw[pos : pos + 4]
        (chunk_len,) = struct.unpack_from("<I", raw, pos + 4)
        body = raw[pos + 8 : pos + 8 + chunk_len]
        if chunk_id == b"fmt ":
            fmt = body
        elif chunk_id == b"data":
            data = body
        pos += 8 + chunk_len + (chunk_len & 1)
    if fmt is None or data is None or len(fmt) < 16:
        raise BridgeError(f"{path}: missing or malformed fmt/data chunk")
    audio_format, channels, rate, _, _, bits = struct.unpack_from("<HHIIHH", fmt, 0)
    if audio_format != 1 or bits != 16 or channels < 1:
        raise BridgeError(f"{path}: only PCM16 input is supported")
    usable = len(data) - len(data) % (2 * channels)
    samples = np.frombuffer(data[:usable], dtype="<i2").astype(np.float32) / 32768.0
    if samples.size == 0:
        raise BridgeError(f"{path}: empty audio payload")
    if channels > 1:
        samples = samples.reshape(-1, channels).mean(axis=1)
    return samples, rate


def resample(samples: np.ndarray, rate: int, target: int) -> np.ndarray:
    if rate == target:
        return samples
    from scipy.signal import resample_poly

    g = math.gcd(rate, target)
    return resample_poly(samples, target // g, rate // g).astype(np.float32)


def _load(model_id: str, auto_class):
    try:
        model = auto_class.from_pretrained(model_id)
    except Exception as exc:  # transformers raises a zoo of error types
        raise BridgeError(f"cannot load model {model_id!r}: {exc}") from exc
    model.eval()
    return model


def load_feature_model(cfg: BridgeConfig):
    """Load the SSL encoder and derive its frame shift from the conv strides."""
    from transformers import AutoModel

    model = _load(cfg.model, AutoModel)
    depth = getattr(model.config, "num_hidden_layers", None)
    if depth is None or not 0 <= cfg.layer <= depth:
        raise BridgeError(
            f"layer {cfg.layer} out of range for model {cfg.model!r} "
            f"with {depth} transformer layers"
        )
    strides = getattr(model.config, "conv_stride", None)
    if not strides:
        raise BridgeError(f"model {cfg.model!r} has no conv feature extractor")
    hop = int(np.prod(strides))
    frame_shift_us = round(1e6 * hop / cfg.sample_rate_hz)
    return model, frame_shift_us


def _utt_ids(wav_list: Sequence[str | Path]) -> list[tuple[str, Path]]:
    pairs = [(Path(p).stem, Path(p)) for p in wav_list]
    seen: dict[str, Path] = {}
    for utt_id, path in pairs:
        if utt_id in seen:
            raise BridgeError(f"duplicate utterance id {utt_id!r} ({seen[utt_id]} and {path})")
        seen[utt_id] = path
    return pairs


def dump_features(wav_list: Sequence[str | Path], cfg: BridgeConfig) -> DumpResult:
    """Write one EMOF file per wav with layer `cfg.layer` hidden states."""
    import torch

    if not wav_list:
        raise BridgeError("no input wavs given")
    model, frame_shift_us = load_feature_model(cfg)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    result = DumpResult([], [], [])
    for utt_id, wav_path in _utt_ids(wav_list):
        try:
            samples, rate = read_audio(wav_path)
            samples = resample(samples, rate, cfg.sample_rate_hz)
            with torch.no_grad():
                out = model(
                    torch.from_numpy(samples[None, :]), output_hidden_states=True
                )
            hidden = out.hidden_states[cfg.layer][0].numpy().astype(np.float32)
            out_path = cfg.out_dir / f"{utt_id}.emof"
            write_emof(out_path, hidden, frame_shift_us)
            result.written.append(out_path)
            result.fragment_lines.append(
                manifest_record(
                    utt_id, path=out_path.name, emotion=cfg.emotion, lang=cfg.lang
                )
            )
        except (BridgeError, ValueError, OSError) as exc:
            result.errors.append(f"{utt_id}: {exc}")
    (cfg.out_dir / FRAGMENT_NAME).write_text(result.fragment_text, encoding="utf-8")
    return result


def dump_avd(
    wav_list: Sequence[str | Path], cfg: BridgeConfig, slot: str = "ref"
) -> DumpResult:
    """Emit one AVD triple per wav as manifest fragment lines.

    Any audio model with a 3-way output head qualifies; values are passed
    through untouched. `slot` picks whether the triple fills the avd_ref or
    avd_hyp manifest field.
    """
    import torch
    from transformers import AutoModelForAudioClassification

    if slot not in ("ref", "hyp"):
        raise ValueError(f"slot must be 'ref' or 'hyp', got {slot!r}")
    if not wav_list:
        raise BridgeError("no input wavs given")
    model = _load(cfg.model, AutoModelForAudioClassification)
    n_out = getattr(model.config, "num_labels", None)
    if n_out != 3:
        raise BridgeError(
            f"model {cfg.model!r} has {n_out} outputs; an AVD extractor needs 3"
        )
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    result = DumpResult([], [], [])
    for utt_id, wav_path in _utt_ids(wav_list):
        try:
            samples, rate = read_audio(wav_path)
            samples = resample(samples, rate, cfg.sample_rate_hz)
            with torch.no_grad():
                logits = model(torch.from_numpy(samples[None, :])).logits[0]
            triple = tuple(float(x) for x in logits)
            if not all(math.isfinite(x) for x in triple):
                raise BridgeError(f"model produced non-finite AVD triple {triple}")
            result.fragment_lines.append(
                manifest_record(
                    utt_id,
                    emotion=cfg.emotion,
                    lang=cfg.lang,
                    avd_ref=triple if slot == "ref" else None,
                    avd_hyp=triple if slot == "hyp" else None,
                )
            )
        except (BridgeError, ValueError, OSError) as exc:
            result.errors.append(f"{utt_id}: {exc}")
    (cfg.out_dir / FRAGMENT_NAME).write_text(result.fragment_text, encoding="utf-8")
    return result
