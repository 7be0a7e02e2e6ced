"""Tiny local checkpoints and wav fixtures; nothing here touches the network."""

from __future__ import annotations

import struct

import numpy as np
import pytest


def write_pcm16_wav(path, samples, rate=16000, channels=1):
    pcm = np.clip(np.round(np.asarray(samples) * 32768.0), -32768, 32767).astype("<i2")
    data = pcm.tobytes()
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF", 36 + len(data), b"WAVE",
        b"fmt ", 16, 1, channels, rate,
        rate * channels * 2, channels * 2, 16,
        b"data", len(data),
    )
    path.write_bytes(header + data)
    return path


def sine(freq, duration_s, rate, amplitude=0.4):
    t = np.arange(int(duration_s * rate)) / rate
    return amplitude * np.sin(2 * np.pi * freq * t)


@pytest.fixture(scope="session")
def tiny_ssl_checkpoint(tmp_path_factory):
    """A 12-layer HuBERT with width 32 and the standard conv stride stack."""
    import torch
    from transformers import HubertConfig, HubertModel

    torch.manual_seed(0)
    config = HubertConfig(
        hidden_size=32,
        num_hidden_layers=12,
        num_attention_heads=2,
        intermediate_size=64,
        conv_dim=(32,) * 7,
    )
    model = HubertModel(config)
    path = tmp_path_factory.mktemp("models") / "tiny_hubert"
    model.save_pretrained(path)
    return path


@pytest.fixture(scope="session")
def tiny_avd_checkpoint(tmp_path_factory):
    """A 3-output audio head standing in for a dimensional emotion extractor."""
    import torch
    from transformers import Wav2Vec2Config, Wav2Vec2ForSequenceClassification

    torch.manual_seed(1)
    config = Wav2Vec2Config(
        hidden_size=32,
        num_hidden_layers=2,
        num_attention_heads=2,
        intermediate_size=64,
        conv_dim=(32,) * 7,
        num_labels=3,
    )
    model = Wav2Vec2ForSequenceClassification(config)
    path = tmp_path_factory.mktemp("models") / "tiny_avd"
    model.save_pretrained(path)
    return path


@pytest.fixture(scope="session")
def wrong_head_checkpoint(tmp_path_factory):
    import torch
    from transformers import Wav2Vec2Config, Wav2Vec2ForSequenceClassification

    torch.manual_seed(2)
    config = Wav2Vec2Config(
        hidden_size=32,
        num_hidden_layers=2,
        num_attention_heads=2,
        intermediate_size=64,
        conv_dim=(32,) * 7,
        num_labels=4,
    )
    model = Wav2Vec2ForSequenceClassification(config)
    path = tmp_path_factory.mktemp("models") / "four_labels"
    model.save_pretrained(path)
    return path


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    reports = []
    for outcome in ("passed", "failed", "error"):
        reports.extend(terminalreporter.getreports(outcome))
    acceptance = [
        r for r in reports
        if "test_acceptance" in r.nodeid and getattr(r, "when", None) == "call"
    ]
    if not acceptance:
        return
    terminalreporter.write_sep("-", "bridge acceptance")
    for r in sorted(acceptance, key=lambda r: r.nodeid):
        name = r.nodeid.split("::")[-1]
        terminalreporter.write_line(f"{name}: {'PASS' if r.passed else 'FAIL'}")
