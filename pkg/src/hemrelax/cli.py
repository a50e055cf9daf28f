"""Command-line entry point: ``hemrelax {run,sweep,validate-eos,riemann}``.

Exit codes: 0 pass, 1 error, 2 validation failure, 3 inconclusive pre-check.
"""

from __future__ import annotations

import argparse
import logging
import sys
import warnings

from .config import RunConfig, load_config, resolve_out_dir
from .errors import ConfigError, DomainError, HemError, UsageError
from .harness import EXIT_ERROR, EXIT_FAIL, cmd_run, cmd_sweep, cmd_validate_eos

log = logging.getLogger("hemrelax")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="config file (flat dotted keys); defaults apply when absent")
    common.add_argument("--out", help="output directory (overrides HEMRELAX_OUT and outputs.dir)")
    common.add_argument("--eps", type=float, help="override solver.eps")
    common.add_argument("--cells", type=int, help="override grid.n_cells")
    common.add_argument("--quiet", action="store_true", help="only print errors")

    parser = argparse.ArgumentParser(prog="hemrelax", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="one relaxation run with diagnostics")
    sub.add_parser("sweep", parents=[common], help="eps sweep and convergence-rate fit")
    sub.add_parser("validate-eos", parents=[common], help="subcharacteristic and convexity checks")
    sub.add_parser("riemann", parents=[common], help="run with the riemann preset")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr, force=True)
    if args.quiet:
        warnings.simplefilter("ignore")
    try:
        cfg = load_config(args.config) if args.config else RunConfig()
        cfg = cfg.with_overrides(eps=args.eps, cells=args.cells,
                                 preset="riemann" if args.command == "riemann" else None)
        out = resolve_out_dir(cfg, args.out)
        if args.command in ("run", "riemann"):
            code = cmd_run(cfg, out)
        elif args.command == "sweep":
            code = cmd_sweep(cfg, out)
        else:
            code = cmd_validate_eos(cfg, out)
    except (ConfigError, UsageError, DomainError) as exc:
        log.error("%s", exc)
        return EXIT_FAIL
    except HemError as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_ERROR
    except OSError as exc:
        log.error("%s", exc)
        return EXIT_ERROR
    if not args.quiet:
        print(f"{args.command}: exit {code}, outputs in {out}")
    return code


if __name__ == "__main__":
    sys.exit(main())
