#!/usr/bin/env python3
import argparse
import json
import sys
import os
import logging

# Add the src directory to Python path
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from core.errors import ConfigError, CreditLabError
from core.experiment_runner import audit_cost, run_experiment
from utils.config import ConfigManager, config_hash, serialize_config

EXIT_OK = 0
EXIT_RUN_FAILED = 1
EXIT_CONFIG_ERROR = 2


def setup_logging(verbose: bool):
    """Setup logging configuration"""
    level = logging.DEBUG if verbose else logging.INFO
    logging.basicConfig(
        level=level,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=[logging.StreamHandler(sys.stdout)]
    )


def build_parser() -> argparse.ArgumentParser:
    """Command line interface: run, audit-cost and validate"""
    parser = argparse.ArgumentParser(
        prog='creditlab',
        description='Continual-learning laboratory: function matching against frozen '
                    'past-task models with credit-assignment gradient surgery'
    )
    parser.add_argument(
        '-v', '--verbose',
        action='store_true',
        help='Enable verbose logging (per-iteration diagnostics)'
    )
    commands = parser.add_subparsers(dest='command', metavar='COMMAND')
    commands.required = True

    run = commands.add_parser('run', help='Train every configured run and write results')
    audit = commands.add_parser('audit-cost', help='Report matching counts per scheme without training')
    validate = commands.add_parser('validate', help='Check a configuration and print it with defaults applied')

    for sub in (run, audit, validate):
        sub.add_argument('config', help='Path to a JSON run configuration (e.g., configs/three_arm.json)')
    for sub in (run, audit):
        sub.add_argument(
            '--out',
            help='Output directory (default: output_dir from the configuration)'
        )
        sub.add_argument(
            '--force',
            action='store_true',
            help='Overwrite result files that already exist'
        )
    run.add_argument(
        '-j', '--jobs',
        type=int,
        default=1,
        help='Number of runs to execute in parallel (default: 1)'
    )
    return parser


def main(argv=None) -> int:
    """Entry point; returns the process exit code"""
    args = build_parser().parse_args(argv)
    setup_logging(args.verbose)

    try:
        config = ConfigManager(args.config).config
    except ConfigError as e:
        logging.error(f"Invalid configuration: {e}")
        print(f"❌ {e}")
        return EXIT_CONFIG_ERROR

    try:
        if args.command == 'validate':
            print(serialize_config(config), end='')
            print(f"✅ Configuration valid (hash {config_hash(config)})")
            return EXIT_OK

        if args.command == 'audit-cost':
            report = audit_cost(config, args.out, args.force)
            print(json.dumps(report, indent=2, sort_keys=True))
            return EXIT_OK

        if args.jobs < 1:
            print("❌ --jobs must be at least 1")
            return EXIT_CONFIG_ERROR
        status = run_experiment(config, args.out, args.force, args.jobs)
        if status == EXIT_OK:
            print(f"✅ All runs completed; results in {os.path.abspath(args.out or config.output_dir)}")
        else:
            print("❌ Some runs failed; see the failure marker in the output directory")
        return status

    except KeyboardInterrupt:
        print("\n🛑 Interrupted")
        return EXIT_RUN_FAILED
    except (CreditLabError, OSError) as e:
        logging.error(f"{args.command} failed: {e}")
        return EXIT_RUN_FAILED


if __name__ == "__main__":
    sys.exit(main())
