#!/usr/bin/env python3
"""
Launch script for the Banach Karhunen-Loeve toolkit
"""
import importlib
import logging
import sys
from pathlib import Path

from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

from config import settings  # noqa: E402

# Configure logging
logging.basicConfig(level=settings.LOG_LEVEL)
logger = logging.getLogger(__name__)

REQUIRED_MODULES = ["numpy", "scipy", "pandas", "pydantic", "pydantic_settings", "dotenv"]


def check_dependencies() -> bool:
    """Check that the numerical and configuration stack imports"""
    missing = []
    for module in REQUIRED_MODULES:
        try:
            importlib.import_module(module)
        except ImportError:
            missing.append(module)
    if missing:
        logger.error(f"❌ Missing dependencies: {missing}. Run: pip install -r requirements.txt")
        return False
    logger.debug("✅ All dependencies are installed")
    return True


def setup_directories():
    """Create the artifact directory"""
    Path(settings.OUTPUT_DIRECTORY).mkdir(parents=True, exist_ok=True)
    logger.debug(f"📁 Output directory: {settings.OUTPUT_DIRECTORY}")


def main(argv=None) -> int:
    """Check the environment, then hand the arguments to the CLI"""
    if not check_dependencies():
        return 1
    setup_directories()

    from frontend.cli.main_cli import main as cli_main

    return cli_main(sys.argv[1:] if argv is None else argv)


if __name__ == "__main__":
    sys.exit(main())
