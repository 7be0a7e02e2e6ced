"""Acoustic quality and prosody analysis: MCD+DTW, F0, LogF0RMSE, formants.

All functions are pure per-utterance computations; nothing here touches
global state, so batch evaluation can fan out freely.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .signal_io import FeatureMatrix, Waveform, _frame_signal, hann_window

MCD_CONST = 10.0 / math.log(10.0) * math.sqrt(2.0)  # Kubichek dB scaling

F0_FRAME_SHIFT_S = 0.010
F0_VOICING_THRESHOLD = 0.3
F0_ENERGY_FLOOR = 1e-4
FORMANT_FRAME_LEN_S = 0.025
FORMANT_MIN_HZ = 90.0
FORMANT_GRID_POINTS = 512
PREEMPHASIS = 0.97


class NumericalInstabilityError(ArithmeticError):
    """Levinson recursion produced a reflection coefficient outside (-1, 1)."""


@dataclass(frozen=True)
class PitchTrack:
    """Frame times plus f0 in Hz; NaN marks unvoiced frames."""

    times_s: np.ndarray
    f0_hz: np.ndarray
    frame_shift_s: float

    def __post_init__(self):
        times = np.asarray(self.times_s, dtype=np.float64)
        f0 = np.asarray(self.f0_hz, dtype=np.float64)
        if times.shape != f0.shape or times.ndim != 1:
            raise ValueError("times and f0 must be matching 1-D arrays")
        if times.size > 1 and not np.all(np.diff(times) > 0):
            raise ValueError("frame times must be strictly increasing")
        voiced = ~np.isnan(f0)
        if np.any((f0[voiced] < 50.0) | (f0[voiced] > 600.0)):
            raise ValueError("voiced f0 values must lie in [50, 600] Hz")
        object.__setattr__(self, "times_s", times)
        object.__setattr__(self, "f0_hz", f0)

    @property
    def voiced_mask(self) -> np.ndarray:
        return ~np.isnan(self.f0_hz)

    def __len__(self) -> int:
        return self.times_s.size


@dataclass(frozen=True)
class FormantFrame:
    """First formant frequencies of one analysis frame; None = unresolved."""

    time_s: float
    f1_hz: float | None
    f2_hz: float | None
    f3_hz: float | None
    lpc_order: int

    def __post_init__(self):
        present = [f for f in (self.f1_hz, self.f2_hz, self.f3_hz) if f is not None]
        if any(f <= 0 for f in present):
            raise ValueError("formant frequencies must be positive")
        if present != sorted(present):
            raise ValueError("formants must be ordered f1 < f2 < f3")


class AlignmentPath:
    """Monotone DTW path: steps in {(1,0),(0,1),(1,1)}, starting at (0,0)."""

    def __init__(self, pairs: Sequence[tuple[int, int]]):
        pairs = [(int(i), int(j)) for i, j in pairs]
        if not pairs or pairs[0] != (0, 0):
            raise ValueError("alignment path must start at (0, 0)")
        for (i0, j0), (i1, j1) in zip(pairs, pairs[1:]):
            if (i1 - i0, j1 - j0) not in {(1, 0), (0, 1), (1, 1)}:
                raise ValueError(f"illegal path step ({i0},{j0}) -> ({i1},{j1})")
        self.pairs = tuple(pairs)

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    def __getitem__(self, idx):
        return self.pairs[idx]

    def __eq__(self, other) -> bool:
        return isinstance(other, AlignmentPath) and self.pairs == other.pairs


def _frame_distance_matrix(a: np.ndarray, b: np.ndarray, dist: str) -> np.ndarray:
    if dist not in ("euclidean", "squared-euclidean"):
        raise ValueError(f"unknown distance {dist!r}")
    sq = (
        np.einsum("id,id->i", a, a)[:, None]
        + np.einsum("jd,jd->j", b, b)[None, :]
        - 2.0 * np.einsum("id,jd->ij", a, b)
    )
    sq = np.maximum(sq, 0.0)
    return np.sqrt(sq) if dist == "euclidean" else sq


def dtw_align(a, b, dist: str = "euclidean") -> tuple[AlignmentPath, float]:
    """Minimal-cost monotone alignment of two frame sequences.

    Accepts FeatureMatrix or (T, D) arrays. Ties between predecessor cells
    break diagonal first, then the step that consumes a frame of `a`.
    """
    av = a.values if isinstance(a, FeatureMatrix) else np.asarray(a, dtype=np.float64)
    bv = b.values if isinstance(b, FeatureMatrix) else np.asarray(b, dtype=np.float64)
    av = np.atleast_2d(av).astype(np.float64)
    bv = np.atleast_2d(bv).astype(np.float64)
    if av.shape[0] == 0 or bv.shape[0] == 0:
        raise ValueError("cannot align an empty frame sequence")
    if av.shape[1] != bv.shape[1]:
        raise ValueError(f"feature dimension mismatch ({av.shape[1]} vs {bv.shape[1]})")
    cost = _frame_distance_matrix(av, bv, dist)
    t1, t2 = cost.shape
    acc = np.full((t1, t2), np.inf)
    acc[0, 0] = cost[0, 0]
    for j in range(1, t2):
        acc[0, j] = acc[0, j - 1] + cost[0, j]
    for i in range(1, t1):
        acc[i, 0] = acc[i - 1, 0] + cost[i, 0]
        row = acc[i]
        above = acc[i - 1]
        for j in range(1, t2):
            row[j] = cost[i, j] + min(above[j - 1], above[j], row[j - 1])

    pairs = [(t1 - 1, t2 - 1)]
    i, j = t1 - 1, t2 - 1
    while i > 0 or j > 0:
        if i == 0:
            j -= 1
        elif j == 0:
            i -= 1
        else:
            best = min(acc[i - 1, j - 1], acc[i - 1, j], acc[i, j - 1])
            if acc[i - 1, j - 1] == best:
                i, j = i - 1, j - 1
            elif acc[i - 1, j] == best:
                i -= 1
            else:
                j -= 1
        pairs.append((i, j))
    pairs.reverse()
    return AlignmentPath(pairs), float(acc[t1 - 1, t2 - 1])


def mcd(ref: FeatureMatrix, hyp: FeatureMatrix, use_c0: bool = False) -> float:
    """Mel-cepstral distortion in dB, averaged over the DTW path.

    Per aligned pair: (10/ln 10) * sqrt(2 * sum_d (c_d - chat_d)^2), with the
    energy coefficient c0 excluded unless `use_c0`.
    """
    for m in (ref, hyp):
        if m.source != "mel-cepstrum":
            raise ValueError(f"MCD needs mel-cepstral features, got {m.source!r}")
    if ref.dim != hyp.dim:
        raise ValueError(f"cepstral order mismatch ({ref.dim} vs {hyp.dim})")
    lo = 0 if use_c0 else 1
    if ref.dim <= lo:
        raise ValueError("no cepstral coefficients left after dropping c0")
    rv = ref.values[:, lo:].astype(np.float64)
    hv = hyp.values[:, lo:].astype(np.float64)
    path, _ = dtw_align(rv, hv, dist="euclidean")
    idx_r = np.fromiter((i for i, _ in path), dtype=np.int64)
    idx_h = np.fromiter((j for _, j in path), dtype=np.int64)
    dists = np.sqrt(np.sum((rv[idx_r] - hv[idx_h]) ** 2, axis=1))
    return float(MCD_CONST * dists.mean())


def _parabolic_refine(ym1: float, y0: float, yp1: float) -> float:
    """Vertex offset of the parabola through three equally spaced points."""
    den = ym1 - 2.0 * y0 + yp1
    if den == 0.0:
        return 0.0
    delta = 0.5 * (ym1 - yp1) / den
    return float(np.clip(delta, -0.5, 0.5))


def estimate_f0(w: Waveform, fmin: float = 50.0, fmax: float = 600.0) -> PitchTrack:
    """Normalized-autocorrelation pitch tracker on 10 ms frames.

    Candidate lags span [fs/fmax, fs/fmin]; a frame is voiced when its RMS
    exceeds 1e-4 and the best normalized correlation peak reaches 0.3. The
    peak lag is refined by parabolic interpolation and clamped back into the
    candidate band, so voiced estimates always lie in [fmin, fmax].
    """
    fs = w.sample_rate_hz
    if not 50.0 <= fmin < fmax <= 600.0:
        raise ValueError("need 50 <= fmin < fmax <= 600")
    if fs < 4.0 * fmax:
        raise ValueError(f"sample rate {fs} too low for fmax {fmax}")
    lag_min = max(1, int(math.floor(fs / fmax)))
    lag_max = int(math.ceil(fs / fmin))
    window = 2 * lag_max  # two periods of the lowest pitch
    shift = round(F0_FRAME_SHIFT_S * fs)
    corr_len = window - lag_max

    frames = _frame_signal(w.samples, window, shift)
    n_frames = frames.shape[0]
    f0 = np.full(n_frames, np.nan)
    lag_lo = max(1, lag_min - 1)  # include one neighbor for refinement
    for t in range(n_frames):
        frame = frames[t]
        if math.sqrt(float(np.mean(frame * frame))) < F0_ENERGY_FLOOR:
            continue
        base = frame[:corr_len]
        raw = np.correlate(frame, base, mode="valid")  # raw[k] = sum base[n]*frame[n+k]
        sq = np.concatenate([[0.0], np.cumsum(frame * frame)])
        e0 = sq[corr_len]
        lags = np.arange(lag_lo, lag_max + 1)
        e_lag = sq[lags + corr_len] - sq[lags]
        denom = np.sqrt(np.maximum(e0 * e_lag, 1e-30))
        norm = raw[lags] / denom
        search_lo = lag_min - lag_lo
        vmax = float(norm[search_lo:].max())
        if vmax < F0_VOICING_THRESHOLD:
            continue
        # A periodic frame peaks at every multiple of its period; taking the
        # shortest near-maximal local peak avoids subharmonic octave errors.
        peak_rel = int(norm[search_lo:].argmax()) + search_lo
        for i in range(max(search_lo, 1), norm.size - 1):
            if norm[i] > norm[i - 1] and norm[i] > norm[i + 1] and norm[i] >= 0.85 * vmax:
                peak_rel = i
                break
        lag = float(lags[peak_rel])
        if 0 < peak_rel < norm.size - 1:
            lag += _parabolic_refine(norm[peak_rel - 1], norm[peak_rel], norm[peak_rel + 1])
        lag = min(max(lag, fs / fmax), fs / fmin)
        f0[t] = fs / lag
    times = np.arange(n_frames) * (shift / fs)
    return PitchTrack(times, f0, frame_shift_s=shift / fs)


def log_f0_rmse(ref: PitchTrack, hyp: PitchTrack) -> float:
    """RMSE of natural-log f0 over frames voiced in both tracks.

    Tracks are aligned frame-by-frame (equal frame shift required, so equal
    indices mean equal times); frames unvoiced on either side are excluded.
    """
    if abs(ref.frame_shift_s - hyp.frame_shift_s) > 1e-12:
        raise ValueError(
            f"frame shift mismatch ({ref.frame_shift_s} vs {hyp.frame_shift_s})"
        )
    n = min(len(ref), len(hyp))
    rf, hf = ref.f0_hz[:n], hyp.f0_hz[:n]
    both = ~np.isnan(rf) & ~np.isnan(hf)
    if not np.any(both):
        raise ValueError("no co-voiced frames between the two tracks")
    diff = np.log(rf[both]) - np.log(hf[both])
    return float(np.sqrt(np.mean(diff * diff)))


def autocorrelation(frame: np.ndarray, max_lag: int) -> np.ndarray:
    """Biased autocorrelation r[0..max_lag] of a frame."""
    x = np.asarray(frame, dtype=np.float64)
    full = np.correlate(x, x, mode="full")
    mid = x.size - 1
    return full[mid : mid + max_lag + 1]


def levinson(r: np.ndarray, order: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Levinson-Durbin recursion on autocorrelation r[0..order].

    Returns (a, reflections, errors): `a` is the error-filter polynomial
    [1, a1, .., ap] with A(z) = 1 + sum a_m z^-m; `errors[i]` is the
    prediction-error energy after order i (errors[0] = r[0]), non-increasing
    for valid input. Raises on zero-energy input or |reflection| >= 1.
    """
    r = np.asarray(r, dtype=np.float64)
    if r.size < order + 1:
        raise ValueError(f"need autocorrelation up to lag {order}, got {r.size - 1}")
    if r[0] <= 0.0:
        raise ValueError("zero-energy frame: autocorrelation r[0] is not positive")
    a = np.zeros(order + 1)
    a[0] = 1.0
    reflections = np.zeros(order)
    errors = np.zeros(order + 1)
    errors[0] = r[0]
    err = r[0]
    for i in range(1, order + 1):
        acc = r[i] + float(np.dot(a[1:i], r[i - 1 : 0 : -1]))
        k = -acc / err
        if not math.isfinite(k) or abs(k) >= 1.0:
            raise NumericalInstabilityError(
                f"reflection coefficient {k!r} at order {i} leaves (-1, 1)"
            )
        reflections[i - 1] = k
        a[1:i] = a[1:i] + k * a[i - 1 : 0 : -1]
        a[i] = k
        err *= 1.0 - k * k
        errors[i] = err
    return a, reflections, errors


def lpc(frame: np.ndarray, order: int) -> tuple[np.ndarray, float]:
    """Autocorrelation-method LPC: predictor coefficients and residual gain.

    Returns (coeffs, gain) with x_hat[n] = sum_m coeffs[m-1] * x[n-m] and
    gain the square root of the final prediction-error energy.
    """
    frame = np.asarray(frame, dtype=np.float64)
    if order < 2:
        raise ValueError(f"LPC order must be >= 2, got {order}")
    if frame.size <= order:
        raise ValueError(f"frame length {frame.size} must exceed order {order}")
    r = autocorrelation(frame, order)
    a, _, errors = levinson(r, order)
    return -a[1:], float(math.sqrt(max(errors[-1], 0.0)))


def default_lpc_order(sample_rate_hz: int) -> int:
    return min(16, sample_rate_hz // 1000 + 2)


def _lpc_envelope_db(coeffs: np.ndarray, n_points: int) -> np.ndarray:
    """Log magnitude of 1/A(e^jw) on an even grid over [0, pi]."""
    a_poly = np.concatenate([[1.0], -coeffs])
    omega = np.linspace(0.0, math.pi, n_points)
    z = np.exp(-1j * np.outer(omega, np.arange(a_poly.size)))
    response = z @ a_poly
    return -20.0 * np.log10(np.maximum(np.abs(response), 1e-12))


def formants(
    w: Waveform,
    order: int | None = None,
    count: int = 3,
    fmin: float = 50.0,
    fmax: float = 600.0,
) -> list[FormantFrame]:
    """LPC-envelope formant tracks on voiced 25 ms frames.

    Voicing follows :func:`estimate_f0` (same 10 ms frame grid). Each voiced
    frame is pre-emphasized, Hann-windowed, LPC-analyzed, and its spectral
    envelope peak-picked above 90 Hz; peaks are refined parabolically. Frames
    with fewer than `count` peaks get None entries; frames where LPC fails
    are emitted fully unresolved.
    """
    if not 1 <= count <= 5:
        raise ValueError(f"formant count must lie in 1..5, got {count}")
    fs = w.sample_rate_hz
    if order is None:
        order = default_lpc_order(fs)
    track = estimate_f0(w, fmin=fmin, fmax=fmax)
    emphasized = np.concatenate([[w.samples[0]], w.samples[1:] - PREEMPHASIS * w.samples[:-1]])
    frame_len = round(FORMANT_FRAME_LEN_S * fs)
    shift = round(F0_FRAME_SHIFT_S * fs)
    frames = _frame_signal(emphasized, frame_len, shift) * hann_window(frame_len)
    nyquist = fs / 2.0
    grid_hz = np.linspace(0.0, nyquist, FORMANT_GRID_POINTS)
    grid_step = grid_hz[1] - grid_hz[0]

    out: list[FormantFrame] = []
    n = min(frames.shape[0], len(track))
    for t in range(n):
        if not track.voiced_mask[t]:
            continue
        time_s = float(track.times_s[t])
        try:
            coeffs, _ = lpc(frames[t], order)
        except (ValueError, NumericalInstabilityError):
            out.append(FormantFrame(time_s, None, None, None, order))
            continue
        env = _lpc_envelope_db(coeffs, FORMANT_GRID_POINTS)
        peaks: list[float] = []
        for i in range(1, FORMANT_GRID_POINTS - 1):
            if env[i] > env[i - 1] and env[i] > env[i + 1]:
                freq = grid_hz[i] + _parabolic_refine(env[i - 1], env[i], env[i + 1]) * grid_step
                if freq > FORMANT_MIN_HZ and freq < nyquist:
                    peaks.append(float(freq))
            if len(peaks) == count:
                break
        vals: list[float | None] = list(peaks[:3]) + [None] * (3 - min(len(peaks), 3))
        if count < 3:
            vals = vals[:count] + [None] * (3 - count)
        out.append(FormantFrame(time_s, vals[0], vals[1], vals[2], order))
    return out
