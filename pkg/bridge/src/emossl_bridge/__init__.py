"""Bridge from pretrained speech models to emossl EMOF/manifest files."""

__version__ = "0.1.0"

from .bridge import (  # noqa: F401
    BridgeConfig,
    BridgeError,
    DumpResult,
    dump_avd,
    dump_features,
)
from .emof import manifest_record, write_emof  # noqa: F401
