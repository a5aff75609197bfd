from __future__ import annotations

import argparse
import logging

from ngf.errors import ConfigError
from ngf.models.experiment import CONFIG_MODELS
from ngf.services.experiments import run_experiment, write_records
from ngf.utils.config import default_jobs, describe_keys, load_config

log = logging.getLogger(__name__)

_HELP = {
    "filter-error": "normalized error of classical vs neighborhood filters under edge perturbation",
    "denoise": "denoise diffused graph signals by fitting networks to a noisy observation",
    "classify": "node classification accuracy as a function of the number of taps",
    "perturb-sweep": "node classification accuracy on perturbed graphs",
}


def run(args: argparse.Namespace) -> int:
    jobs = default_jobs() if args.jobs is None else args.jobs
    if jobs < 1:
        raise ConfigError(f"--jobs must be >= 1, got {jobs}")
    cfg = load_config(CONFIG_MODELS[args.command], args.config, args.overrides, seed=args.seed)
    if cfg.experiment != args.command:
        raise ConfigError(f"config is for {cfg.experiment!r}, not {args.command!r}")
    records = run_experiment(cfg, jobs=jobs)
    write_records(records, args.out)
    log.info("wrote %d records to %s", len(records), args.out)
    return 0


def register(subparsers) -> None:
    for name, help_text in _HELP.items():
        keys = "\n".join(f"  {k} = {v!r}" for k, v in describe_keys(CONFIG_MODELS[name]()))
        p = subparsers.add_parser(
            name,
            help=help_text,
            description=help_text,
            epilog=(
                "config keys (defaults):\n"
                f"{keys}\n\n"
                "precedence: defaults < --config file < --set overrides < --seed"
            ),
            formatter_class=argparse.RawDescriptionHelpFormatter,
        )
        p.add_argument("--config", help="TOML experiment file")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key; dotted keys reach nested sections")
        p.add_argument("--seed", type=int, help="master seed")
        p.add_argument("--jobs", type=int, help="worker processes (default: NGF_JOBS or 1)")
        p.add_argument("--out", required=True, help="CSV records file")
        p.set_defaults(handler=run)
