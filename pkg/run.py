#!/usr/bin/env python3
"""
Renormalization Tower Runner

Batch front end for building almost periodic Jacobi matrices from towers of
expanding polynomials:
- build: coefficient table and convergence report
- verify: renormalization identities, chain rule, translation consistency
- bands / metric / probe: spectral bands, shift metric, contraction ratios
"""

import sys
import argparse

# Setup project path
from utils.common import setup_project_path, setup_logging
setup_project_path()

from app.main import COMMANDS, RenormBatchApp
from config.settings import Config
from constants import DEFAULT_OUT_DIR, EXIT_CONFIG

logger = setup_logging(__name__)


def validate_environment():
    """Validate process settings taken from the environment"""
    try:
        Config.validate()
        logger.info("Environment validation passed")
        return True
    except Exception as e:
        logger.error(f"Environment validation failed: {e}")
        return False


def build_parser():
    parser = argparse.ArgumentParser(description='Renormalization Tower Runner')
    parser.add_argument(
        'command',
        choices=COMMANDS,
        help='Subcommand to run'
    )
    parser.add_argument(
        '--config',
        required=True,
        help='Path to the JSON run document'
    )
    parser.add_argument(
        '--out',
        default=DEFAULT_OUT_DIR,
        help=f'Output directory (default: {DEFAULT_OUT_DIR})'
    )
    parser.add_argument(
        '--checks',
        default=None,
        help='Comma separated verification checks (verify only)'
    )
    parser.add_argument(
        '--perturb',
        default=None,
        help='Coefficient corruption "p:k:delta" or "q:k:delta" applied before verification'
    )
    parser.add_argument(
        '--skip-validation',
        action='store_true',
        help='Skip environment validation'
    )
    return parser


def main(argv=None):
    """Main entry point; returns the process exit code"""
    args = build_parser().parse_args(argv)

    if not args.skip_validation:
        if not validate_environment():
            return EXIT_CONFIG

    app = RenormBatchApp(args.config, args.out, checks=args.checks, perturb=args.perturb)
    logger.info(f"Running '{args.command}' with {args.config}")
    code = app.run(args.command)
    logger.info(f"'{args.command}' finished with exit code {code}")
    return code


if __name__ == '__main__':
    sys.exit(main())
