import os

import uvicorn

from .app import create_app

PORT_ENV = "CLARIFYD_GEN_PORT"
DEFAULT_PORT = 8701


def main() -> None:
    port = int(os.environ.get(PORT_ENV, str(DEFAULT_PORT)))
    uvicorn.run(create_app(), host="127.0.0.1", port=port, log_level="warning")


if __name__ == "__main__":
    main()
