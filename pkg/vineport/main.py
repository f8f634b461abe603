"""
Batch front door: `python -m vineport.main <command> --config run.json`
"""

import argparse
import sys
from typing import List, Optional

from loguru import logger

from .app.commands import COMMANDS
from .app.utils.file_utils import ensure_output_dir, finish_manifest, start_manifest
from .config import load_run_config
from .exceptions import VineportError
from .logging_config import log_error, log_stage, log_success, setup_application_logging


def run_command(command: str, config_path: str) -> int:
    """Run one pipeline command; 0 on success, 1 on a handled failure, 2 on an unknown command"""
    handler = COMMANDS.get(command)
    if handler is None:
        log_error(f"Unknown command '{command}'; expected one of {', '.join(COMMANDS)}")
        return 2
    try:
        config = load_run_config(config_path)
        ensure_output_dir(config.output_dir)
        manifest = start_manifest(command, config.model_dump(mode="json"), config.seed, config.data_path)
        log_stage(f"Running {command} (seed {config.seed})")
        outputs = handler(config)
        outputs.append(finish_manifest(manifest, outputs, config.output_dir))
    except VineportError as e:
        log_error(f"{command} failed: {e}")
        return 1
    except Exception as e:
        logger.exception(f"❌ {command} failed unexpectedly: {e}")
        return 1
    log_success(f"{command} wrote {len(outputs)} file(s) to {config.output_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vineport", description="Vine-copula portfolio engine")
    parser.add_argument("command", help=f"one of: {', '.join(COMMANDS)}")
    parser.add_argument("--config", "-c", required=True, help="JSON run configuration")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_application_logging()
    return run_command(args.command, args.config)


if __name__ == "__main__":
    sys.exit(main())
