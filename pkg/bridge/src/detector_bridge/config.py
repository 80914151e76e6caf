"""Service configuration from environment variables."""

from __future__ import annotations

import os
from dataclasses import dataclass


@dataclass(frozen=True)
class BridgeConfig:
    host: str = "127.0.0.1"
    port: int = 8099
    model: str = "blob"  # "blob" or "torchvision:<model_name>"
    num_classes: int = 4
    confidence_floor: float = 0.0  # the engine needs full score vectors

    @classmethod
    def from_env(cls) -> "BridgeConfig":
        return cls(
            host=os.environ.get("BRIDGE_HOST", cls.host),
            port=int(os.environ.get("BRIDGE_PORT", cls.port)),
            model=os.environ.get("BRIDGE_MODEL", cls.model),
            num_classes=int(os.environ.get("BRIDGE_CLASSES", cls.num_classes)),
        )
