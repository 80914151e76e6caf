"""Run the bridge: BRIDGE_HOST/BRIDGE_PORT/BRIDGE_MODEL/BRIDGE_CLASSES."""

import uvicorn

from .app import create_app
from .config import BridgeConfig


def main() -> None:
    config = BridgeConfig.from_env()
    uvicorn.run(create_app(config), host=config.host, port=config.port, log_level="info")


if __name__ == "__main__":
    main()
