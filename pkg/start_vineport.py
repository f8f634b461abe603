#!/usr/bin/env python3
"""
Script to run a vineport pipeline command
Usage: python start_vineport.py <command> --config run.json
"""

import os
import sys

from loguru import logger

from vineport import __version__
from vineport.config import THREADS
from vineport.logging_config import log_startup, setup_startup_logging

if __name__ == "__main__":
    setup_startup_logging()

    log_startup(f"Starting vineport {__version__}")
    logger.info(f"📊 Log Level: {os.getenv('LOG_LEVEL', 'INFO').upper()}")
    logger.info(f"🔧 Worker threads: {THREADS}")

    try:
        from vineport.main import main
        sys.exit(main(sys.argv[1:]))
    except KeyboardInterrupt:
        logger.warning("🛑 Received interrupt signal, shutting down...")
        sys.exit(130)
