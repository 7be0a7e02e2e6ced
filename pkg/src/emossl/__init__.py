"""Emotion-space math, prosody tokenization, and objective speech evaluation."""

__version__ = "0.1.0"

from .emotion_space import (  # noqa: E402,F401
    AVDVector,
    EmotionStyleVector,
    SphericalEmotion,
    avd_rmse_by_emotion,
    build_style_vector,
    cartesian_to_spherical,
    interpolate,
    scale_intensity,
    spherical_to_cartesian,
)
from .signal_io import (  # noqa: E402,F401
    EvalManifest,
    FeatureMatrix,
    UtteranceRecord,
    Waveform,
    frame_and_window,
    mel_cepstra,
    parse_manifest,
    read_features,
    read_wav,
    write_features,
    write_wav,
)
from .vq_tokenizer import (  # noqa: E402,F401
    Codebook,
    TokenSequence,
    decode,
    encode,
    kmeans_fit,
    load_codebook,
    save_codebook,
)
