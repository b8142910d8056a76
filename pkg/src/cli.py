#!/usr/bin/env python3
"""
Command line for the CAMERA accident-anticipation pipeline

    python3 app.py gen --seed 7 --count 300 --positive 0.4 --out data.cams
    python3 app.py train --data data.cams --out model.camr
    python3 app.py eval --ckpt model.camr --data test.cams --out report.json
    python3 app.py ablate --out ablation.md
    python3 app.py alert --ckpt model.camr --data test.cams --index 3 --out alerts.jsonl
    python3 app.py gradcheck

Exit codes: 0 success, 1 usage or validation error, 2 runtime error.
"""

import argparse
import logging
import sys
from typing import List, Optional

from .commands import EXIT_OK, EXIT_VALIDATION, ablate, alert, failure, gen, gradcheck, train
from .commands import eval as eval_command
from .config import Config
from .exceptions import ConfigError
from .run_manifest import load_manifest, resolve_run_config
from .utils.helpers import configure_determinism, configure_logging

logger = logging.getLogger(__name__)

COMMANDS = {
    'gen': (gen, 'Generate a synthetic scenario file'),
    'train': (train, 'Train a model and write a checkpoint'),
    'eval': (eval_command, 'Evaluate a checkpoint and export report, sweep and traces'),
    'ablate': (ablate, 'Run the ablation matrix'),
    'alert': (alert, 'Write the alert stream of one sequence'),
    'gradcheck': (gradcheck, 'Finite-difference gradient check on a miniature model'),
}


class UsageError(Exception):
    """Bad command line"""


class CommandParser(argparse.ArgumentParser):
    """ArgumentParser that reports usage errors instead of exiting with 2"""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _common_arguments() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help='key=value config file (flags override its values)')
    common.add_argument('--seed', type=int, help='Run seed (default: CAMERA_SEED or 42)')
    common.add_argument('--threads', type=int, help=f'Torch threads (default {Config.THREADS})')
    common.add_argument('--from-manifest', dest='from_manifest',
                        help='Replay the run recorded in a manifest (other flags are ignored)')
    common.add_argument('--no-progress', action='store_true', help='Disable progress bars')
    common.add_argument('--verbose', action='store_true', help='Debug logging')
    return common


def build_parser() -> CommandParser:
    parser = CommandParser(prog='camera', description='Desk-scale accident anticipation pipeline')
    subparsers = parser.add_subparsers(dest='command', metavar='COMMAND')
    common = _common_arguments()
    for name, (module, help_text) in COMMANDS.items():
        sub = subparsers.add_parser(name, help=help_text, description=help_text, parents=[common])
        module.add_arguments(sub)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """
    Run one subcommand

    Args:
        argv: Arguments without the program name (defaults to sys.argv[1:])

    Returns:
        Process exit code
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(str(e), file=sys.stderr)
        return EXIT_VALIDATION
    if not args.command:
        parser.print_usage(sys.stderr)
        return EXIT_VALIDATION

    configure_logging(args.verbose, Config.LOG_LEVEL)
    module = COMMANDS[args.command][0]
    try:
        if args.from_manifest:
            run_config = load_manifest(args.from_manifest)
            if run_config.command != args.command:
                raise ConfigError(f"Manifest records a '{run_config.command}' run, not '{args.command}'")
        else:
            explicit = module.flags(args)
            explicit['seed'] = args.seed
            run_config = resolve_run_config(args.command, explicit, args.config)
        configure_determinism(args.threads or Config.THREADS)
    except Exception as e:
        return failure(args.command, e)['exit_code']

    show_progress = Config.SHOW_PROGRESS and not args.no_progress
    seed_source = "CAMERA_SEED" if Config.is_seed_overridden() else "default"
    logger.debug(f"Running {args.command} with seed {run_config.seed} (environment seed: {seed_source})")
    status = module.run(run_config, show_progress=show_progress)
    if status['success']:
        logger.info(f"{args.command} finished")
    return status.get('exit_code', EXIT_OK)


if __name__ == '__main__':
    sys.exit(main())
