"""Spherical emotion space: AVD points, style vectors, and expressiveness RMSE.

The arousal/valence/dominance triple is treated as a Cartesian point with
(x, y, z) = (a, v, d). Spherical form uses the physics convention: the polar
angle theta is measured from the +d axis and the azimuth phi lies in the a-v
plane. Radius encodes emotional intensity, the two angles encode style.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

NOMINAL_RANGE = (-1.0, 1.0)

_TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class AVDVector:
    """A point in the 3-D arousal/valence/dominance space.

    Components outside the nominal [-1, 1] range trigger a warning, not an
    error: upstream extractors are free to emit values beyond it.
    """

    a: float
    v: float
    d: float

    def __post_init__(self):
        for name, value in (("a", self.a), ("v", self.v), ("d", self.d)):
            if not math.isfinite(value):
                raise ValueError(f"AVD component {name} must be finite, got {value!r}")
        lo, hi = NOMINAL_RANGE
        if not (lo <= self.a <= hi and lo <= self.v <= hi and lo <= self.d <= hi):
            warnings.warn(
                f"AVD point ({self.a}, {self.v}, {self.d}) outside nominal "
                f"range [{lo}, {hi}]",
                stacklevel=2,
            )

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.a, self.v, self.d)


ORIGIN = AVDVector(0.0, 0.0, 0.0)


@dataclass(frozen=True)
class SphericalEmotion:
    """Spherical emotion coordinates: intensity radius plus style angles.

    Invariants: r >= 0, theta in [0, pi], phi in (-pi, pi]. A zero radius
    collapses both angles to 0 by convention.
    """

    r: float
    theta: float
    phi: float

    def __post_init__(self):
        for name, value in (("r", self.r), ("theta", self.theta), ("phi", self.phi)):
            if not math.isfinite(value):
                raise ValueError(f"spherical component {name} must be finite, got {value!r}")
        if self.r < 0.0:
            raise ValueError(f"radius must be >= 0, got {self.r}")
        if not 0.0 <= self.theta <= math.pi:
            raise ValueError(f"theta must lie in [0, pi], got {self.theta}")
        if not -math.pi < self.phi <= math.pi:
            raise ValueError(f"phi must lie in (-pi, pi], got {self.phi}")
        if self.r == 0.0 and (self.theta != 0.0 or self.phi != 0.0):
            raise ValueError("zero radius requires theta = phi = 0")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.r, self.theta, self.phi)


ZERO_EMOTION = SphericalEmotion(0.0, 0.0, 0.0)


@dataclass(frozen=True)
class EmotionStyleVector:
    """Spherical emotion fused with a one-hot emotion-class vector."""

    spherical: SphericalEmotion
    class_onehot: np.ndarray
    fused: np.ndarray = field(init=False)

    def __post_init__(self):
        onehot = np.asarray(self.class_onehot, dtype=np.float64)
        if onehot.ndim != 1 or onehot.size < 1:
            raise ValueError("class_onehot must be a non-empty 1-D vector")
        hot = np.nonzero(onehot)[0]
        if hot.size != 1 or onehot[hot[0]] != 1.0:
            raise ValueError("class_onehot must contain exactly one entry equal to 1.0")
        object.__setattr__(self, "class_onehot", onehot)
        fused = np.concatenate([np.array(self.spherical.as_tuple(), dtype=np.float64), onehot])
        object.__setattr__(self, "fused", fused)

    @property
    def class_id(self) -> int:
        return int(np.nonzero(self.class_onehot)[0][0])


def _wrap_phi(phi: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    wrapped = math.remainder(phi, _TWO_PI)
    if wrapped <= -math.pi:
        wrapped += _TWO_PI
    return wrapped


def cartesian_to_spherical(p: AVDVector, center: AVDVector = ORIGIN) -> SphericalEmotion:
    """Map an AVD point to spherical coordinates about an explicit center.

    Defined for all finite inputs; a point at the center maps to the zero
    emotion, and points on the polar axis get phi = 0.
    """
    qa = p.a - center.a
    qv = p.v - center.v
    qd = p.d - center.d
    r = math.sqrt(qa * qa + qv * qv + qd * qd)
    if r == 0.0:
        return ZERO_EMOTION
    theta = math.acos(max(-1.0, min(1.0, qd / r)))
    if qa == 0.0 and qv == 0.0:
        phi = 0.0
    else:
        phi = math.atan2(qv, qa)
        if phi <= -math.pi:
            phi = math.pi
    return SphericalEmotion(r, theta, phi)


def spherical_to_cartesian(s: SphericalEmotion, center: AVDVector = ORIGIN) -> AVDVector:
    """Inverse of :func:`cartesian_to_spherical` (up to floating error)."""
    sin_theta = math.sin(s.theta)
    return AVDVector(
        s.r * sin_theta * math.cos(s.phi) + center.a,
        s.r * sin_theta * math.sin(s.phi) + center.v,
        s.r * math.cos(s.theta) + center.d,
    )


def build_style_vector(s: SphericalEmotion, class_id: int, num_classes: int) -> EmotionStyleVector:
    """Concatenate spherical emotion coordinates with a one-hot class vector."""
    if num_classes < 1:
        raise ValueError(f"num_classes must be >= 1, got {num_classes}")
    if not 0 <= class_id < num_classes:
        raise ValueError(f"class_id {class_id} out of range for {num_classes} classes")
    onehot = np.zeros(num_classes, dtype=np.float64)
    onehot[class_id] = 1.0
    return EmotionStyleVector(spherical=s, class_onehot=onehot)


def interpolate(a: SphericalEmotion, b: SphericalEmotion, t: float) -> SphericalEmotion:
    """Blend two spherical emotions; phi moves along the shorter arc.

    Endpoints are exact: t=0 returns `a`, t=1 returns `b`.
    """
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"interpolation weight must lie in [0, 1], got {t}")
    if t == 0.0:
        return a
    if t == 1.0:
        return b
    r = (1.0 - t) * a.r + t * b.r
    # clamp: the blend can land an ulp outside [0, pi] when both endpoints
    # sit on a pole
    theta = min(max((1.0 - t) * a.theta + t * b.theta, 0.0), math.pi)
    # Unwrap b.phi by +-2*pi so the blend follows the shorter arc. On an exact
    # tie (antipodal angles) the unmodified b.phi wins.
    candidates = (b.phi, b.phi + _TWO_PI, b.phi - _TWO_PI)
    target = min(candidates, key=lambda c: abs(c - a.phi))
    phi = _wrap_phi((1.0 - t) * a.phi + t * target)
    if r == 0.0:
        return ZERO_EMOTION
    return SphericalEmotion(r, theta, phi)


def scale_intensity(s: SphericalEmotion, k: float) -> SphericalEmotion:
    """Scale emotional intensity, leaving the style angles untouched."""
    if not math.isfinite(k) or k < 0.0:
        raise ValueError(f"intensity scale must be finite and >= 0, got {k}")
    r = k * s.r
    if r == 0.0:
        return ZERO_EMOTION
    return SphericalEmotion(r, s.theta, s.phi)


Triple = Sequence[float]


def avd_rmse_by_emotion(
    pairs: Iterable[tuple[str, Triple, Triple]],
) -> tuple[dict[str, float], float]:
    """Per-emotion RMSE between hypothesis and reference AVD triples.

    Each pair is (emotion_label, avd_hyp, avd_ref). The squared errors of all
    three dimensions are pooled within an emotion:

        rmse_e = sqrt( sum over pairs, dims of (hyp - ref)^2 / (3 * N_e) )

    Returns the per-emotion map (first-seen label order) and the unweighted
    mean over the emotions present.
    """
    sq_sums: dict[str, float] = {}
    counts: dict[str, int] = {}
    for label, hyp, ref in pairs:
        hyp = tuple(float(x) for x in hyp)
        ref = tuple(float(x) for x in ref)
        if len(hyp) != 3 or len(ref) != 3:
            raise ValueError(f"AVD triples must have 3 components ({label})")
        if not all(math.isfinite(x) for x in hyp + ref):
            raise ValueError(f"AVD triples must be finite ({label})")
        sq = sum((h - r) ** 2 for h, r in zip(hyp, ref))
        sq_sums[label] = sq_sums.get(label, 0.0) + sq
        counts[label] = counts.get(label, 0) + 1
    if not sq_sums:
        raise ValueError("no AVD pairs supplied")
    per_emotion = {
        label: math.sqrt(sq_sums[label] / (3.0 * counts[label])) for label in sq_sums
    }
    average = sum(per_emotion.values()) / len(per_emotion)
    return per_emotion, average


def scale_to_unit_cube(
    points: np.ndarray, bounds: tuple[Triple, Triple] | None = None
) -> np.ndarray:
    """Affinely map AVD points into [-1, 1]^3.

    Optional preprocessing for extractors whose output range is not the
    nominal cube; never applied implicitly. `bounds` gives (low, high) per
    dimension; defaults to the observed min/max of `points`.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError("points must be an (N, 3) array")
    if bounds is None:
        lo, hi = pts.min(axis=0), pts.max(axis=0)
    else:
        lo = np.asarray(bounds[0], dtype=np.float64)
        hi = np.asarray(bounds[1], dtype=np.float64)
    span = hi - lo
    if np.any(span <= 0):
        raise ValueError("each dimension needs a positive range")
    return 2.0 * (pts - lo) / span - 1.0
