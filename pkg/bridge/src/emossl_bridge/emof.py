"""Writer side of the emossl interchange formats.

The bridge talks to the evaluation toolkit purely through files, so the EMOF
header and the manifest record grammar are implemented here against their
fixed wire layouts rather than by importing the toolkit.
"""

from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path
from typing import Sequence

import numpy as np

FEATURE_MAGIC = b"EMOF"
FEATURE_VERSION = 1
TAG_SSL_LAYER9 = 1
MISSING = "-"

_U32_MAX = 2**32 - 1


def write_emof(
    path: str | Path,
    values: np.ndarray,
    frame_shift_us: int,
    source_tag: int = TAG_SSL_LAYER9,
) -> None:
    """Write a T x D float32 feature file atomically (temp file + rename)."""
    values = np.ascontiguousarray(values, dtype="<f4")
    if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
        raise ValueError(f"feature payload must be a non-empty T x D matrix, got {values.shape}")
    if not np.all(np.isfinite(values)):
        raise ValueError("feature payload must be finite")
    t, d = values.shape
    if t > _U32_MAX or d > _U32_MAX or not 1 <= frame_shift_us <= _U32_MAX:
        raise ValueError("header field exceeds u32 range")
    header = struct.pack(
        "<4sIIIIB", FEATURE_MAGIC, FEATURE_VERSION, t, d, frame_shift_us, source_tag
    )
    path = Path(path)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(header + values.tobytes())
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise


def manifest_record(
    utt_id: str,
    path: str | None = None,
    ref_transcript: str | None = None,
    hyp_transcript: str | None = None,
    emotion: str = MISSING,
    lang: str = MISSING,
    avd_ref: Sequence[float] | None = None,
    avd_hyp: Sequence[float] | None = None,
    paired_utt: str | None = None,
) -> str:
    """One manifest record line: 9 tab-separated fields, '-' for absent ones."""

    def avd(triple: Sequence[float] | None) -> str:
        return MISSING if triple is None else ",".join(repr(float(x)) for x in triple)

    fields = [
        utt_id,
        path or MISSING,
        ref_transcript or MISSING,
        hyp_transcript or MISSING,
        emotion,
        lang,
        avd(avd_ref),
        avd(avd_hyp),
        paired_utt or MISSING,
    ]
    for field in fields:
        if "\t" in field or "\n" in field:
            raise ValueError(f"manifest fields may not contain tabs/newlines: {field!r}")
    return "\t".join(fields)
