"""Shared fixtures: synthetic signals and the acceptance summary printer."""

from __future__ import annotations

import numpy as np
import pytest

from emossl.signal_io import Waveform


def make_sine(freq_hz: float, duration_s: float = 1.0, rate: int = 16000,
              amplitude: float = 0.5) -> Waveform:
    t = np.arange(int(duration_s * rate)) / rate
    return Waveform(amplitude * np.sin(2.0 * np.pi * freq_hz * t), rate)


def make_silence(duration_s: float = 0.5, rate: int = 16000) -> Waveform:
    return Waveform(np.zeros(int(duration_s * rate)), rate)


def ar_filter(excitation: np.ndarray, ar_coeffs) -> np.ndarray:
    """All-pole filter y[n] = x[n] + sum_m ar_coeffs[m-1] * y[n-m]."""
    ar = np.asarray(ar_coeffs, dtype=np.float64)
    y = np.zeros(len(excitation))
    for n in range(len(excitation)):
        acc = excitation[n]
        for m in range(1, len(ar) + 1):
            if n - m >= 0:
                acc += ar[m - 1] * y[n - m]
        y[n] = acc
    return y


def resonator_ar_coeffs(freqs_hz, bandwidths_hz, rate: int) -> np.ndarray:
    """AR coefficients of cascaded two-pole resonators at the given poles."""
    poly = np.array([1.0])
    for f, bw in zip(freqs_hz, bandwidths_hz):
        r = np.exp(-np.pi * bw / rate)
        theta = 2.0 * np.pi * f / rate
        section = np.array([1.0, -2.0 * r * np.cos(theta), r * r])
        poly = np.convolve(poly, section)
    return -poly[1:]  # denominator [1, a1, ...] -> recursion coefficients


def make_synthetic_vowel(freqs_hz=(700.0, 1220.0), bandwidths_hz=(80.0, 80.0),
                         f0_hz: float = 120.0, duration_s: float = 0.6,
                         rate: int = 8000) -> Waveform:
    """Impulse train through an all-pole filter with known resonances."""
    n = int(duration_s * rate)
    excitation = np.zeros(n)
    period = rate / f0_hz
    k = 0
    while round(k * period) < n:
        excitation[round(k * period)] = 1.0
        k += 1
    signal = ar_filter(excitation, resonator_ar_coeffs(freqs_hz, bandwidths_hz, rate))
    signal = 0.5 * signal / np.max(np.abs(signal))
    return Waveform(signal, rate)


@pytest.fixture
def sine_220():
    return make_sine(220.0)


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
    terminalreporter.write_sep("-", "acceptance criteria")
    for r in sorted(acceptance, key=lambda r: r.nodeid):
        name = r.nodeid.split("::")[-1]
        terminalreporter.write_line(f"{name}: {'PASS' if r.passed else 'FAIL'}")
