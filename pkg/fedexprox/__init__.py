"""The FedExProx laboratory: extrapolated federated proximal methods."""
import json
from pathlib import Path

from .const import DOMAIN


def _read_version() -> str:
    """Return the version declared in manifest.json."""
    manifest = json.loads(Path(__file__).with_name("manifest.json").read_text(encoding="utf-8"))
    return manifest["version"]


__version__ = _read_version()

__all__ = ["DOMAIN", "__version__"]
