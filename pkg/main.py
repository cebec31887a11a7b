# main.py

import argparse
import logging
import os
import sys
from typing import List, Optional

from backend import __version__
from backend.config_loader import COMMANDS, ConfigLoader, list_configs
from backend.entity import RunConfig
from backend.errors import QnmfError
from backend.manager import ExperimentManager
from storage.local import LocalTableStorage
from utils import setup_logging

logger = logging.getLogger("qnmf")

CONFIG_DIR = "configs"

EXIT_OK = 0
EXIT_DOMAIN = 2
EXIT_IO = 3

DEFAULT_CONFIG = {
    "command": "generate",
    "seed": 0,
    "out": "./runs/latest",
    "solver": {
        "rank": 3,
        "max_iters": 500,
        "stop_delta": 1e-5,
        "seed": 0,
        "restarts": 1,
        "gram_ridge": 0.0,
        "workers": 1,
    },
    "sources": [],
    "activations": {
        "grid": [16, 16],
        "num_sources": 3,
        "blobs": [],
        "blobs_per_source": 2,
        "ensure_pure_pixels": True,
        "floor": 0.0,
        "truncate": 3.0,
    },
    "noise_sigma": 0.0,
    "inputs": {"data": "", "W": "", "H": "", "truth_W": "", "truth_H": ""},
    "project_input": False,
    "envelopes": True,
    "tolerance": 1e-9,
}


def resolve_path(relative_path: str) -> str:
    if getattr(sys, 'frozen', False):
        base_path = os.path.dirname(sys.executable)
    else:
        base_path = os.path.dirname(os.path.abspath(__file__))
    return os.path.join(base_path, relative_path)


def find_config(path: Optional[str]) -> Optional[str]:
    """先按给定路径找，找不到再去自带的 configs/ 目录里找同名文件"""
    if not path or os.path.exists(path):
        return path
    bundled = resolve_path(os.path.join(CONFIG_DIR, os.path.basename(path)))
    if os.path.exists(bundled):
        return bundled
    available = ", ".join(os.path.basename(p) for p in list_configs(resolve_path(CONFIG_DIR)))
    logger.warning(f"[Config] {path} not found; bundled configs: {available or 'none'}")
    return path


def collect_overrides(args: argparse.Namespace) -> dict:
    """命令行参数 -> 与配置文件同构的覆盖 dict (未给出的参数不覆盖)"""
    overrides = {"command": args.command}
    solver = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
        solver["seed"] = args.seed
    for flag, key in (("rank", "rank"), ("restarts", "restarts"), ("max_iters", "max_iters"),
                      ("stop_delta", "stop_delta"), ("ridge", "gram_ridge"), ("workers", "workers")):
        value = getattr(args, flag)
        if value is not None:
            solver[key] = value
    if solver:
        overrides["solver"] = solver

    inputs = {}
    for flag, key in (("data", "data"), ("w", "W"), ("h", "H"), ("truth_w", "truth_W"), ("truth_h", "truth_H")):
        value = getattr(args, flag)
        if value:
            inputs[key] = value
    if inputs:
        overrides["inputs"] = inputs

    if args.out:
        overrides["out"] = args.out
    if args.project_input:
        overrides["project_input"] = True
    if args.no_envelopes:
        overrides["envelopes"] = False
    return overrides


def load_config(args: argparse.Namespace) -> RunConfig:
    loader = ConfigLoader(DEFAULT_CONFIG)
    return loader.load(find_config(args.config), collect_overrides(args))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qnmf",
        description="Quaternion non-negative matrix factorization of spectro-polarimetric data",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run config (defaults are used for missing keys)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int)
    common.add_argument("--rank", type=int)
    common.add_argument("--restarts", type=int)
    common.add_argument("--max-iters", dest="max_iters", type=int)
    common.add_argument("--stop-delta", dest="stop_delta", type=float)
    common.add_argument("--ridge", type=float, help="Tikhonov term added to the least-squares Gram matrices")
    common.add_argument("--workers", type=int, help="parallel restarts")
    common.add_argument("--project-input", dest="project_input", action="store_true",
                        help="project out-of-cone input entries instead of rejecting them")
    common.add_argument("--no-envelopes", dest="no_envelopes", action="store_true",
                        help="skip writing admissible factor envelopes")
    common.add_argument("--data", help="Stokes table (m,n,S0,S1,S2,S3)")
    common.add_argument("--w", help="source factor table (m,p,S0,S1,S2,S3)")
    common.add_argument("--h", help="activation table (p,n,h)")
    common.add_argument("--truth-w", dest="truth_w")
    common.add_argument("--truth-h", dest="truth_h")
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument("--verbose", "-v", action="store_true")
    verbosity.add_argument("--quiet", "-q", action="store_true")

    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "generate": "synthesize X with ground-truth W, H",
        "factorize": "run QALS on a Stokes table",
        "uniqueness": "admissible intervals and uniqueness checks for (W, H)",
        "evaluate": "align estimated factors to the truth and report errors",
        "project": "project every entry of a Stokes table onto the cone",
    }
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(verbose=args.verbose, quiet=args.quiet)

    try:
        config = load_config(args)
        storage = LocalTableStorage(base_dir=config.out)
        manager = ExperimentManager(storage, progress=not args.quiet and sys.stderr.isatty())
        outputs = manager.run(config)
    except QnmfError as e:
        logger.error(f"❌ {type(e).__name__}: {e}")
        return EXIT_DOMAIN
    except OSError as e:
        logger.error(f"❌ I/O error: {e}")
        return EXIT_IO

    if not args.quiet:
        for name, path in sorted(outputs.items()):
            print(f"✅ {name}: {path}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
