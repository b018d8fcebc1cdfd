"""
Command-line front end for factorizing and verifying black-box operators
"""
import sys
import json
import logging
import argparse


def standalone_cli(argv=None):
    parser = argparse.ArgumentParser("rsrs", description=(
        "Randomized strong recursive skeletonization of black-box operators, "
        "pass --help for details"
    ))
    parser.add_argument("-v", "--verbose", action="count", default=0, help=(
        "Print additional information during operation. "
        "Pass -v for info and -vv for debug messages"))
    setup_parser(parser)
    opts = parser.parse_args(argv)
    return command(opts, parser)


def _add_common(parser):
    parser.add_argument("--config", required=True, metavar="PATH",
                        help="JSON experiment configuration")
    parser.add_argument("--seed", type=int, default=None,
                        help="Override the configured seed")


def setup_parser(parser):
    parser.add_argument("--version", action="store_true",
                        help="Print out version of this package.")
    verbs = parser.add_subparsers(dest="verb", metavar="VERB")

    factor = verbs.add_parser("factor", help="Factorize the configured "
                                             "operator and print statistics")
    _add_common(factor)
    factor.add_argument("--out", metavar="PATH",
                        help="Write the factorization to this file")

    verify = verbs.add_parser("verify", help="Estimate the error of a "
                                             "stored factorization")
    verify.add_argument("factorization", metavar="FACTORIZATION",
                        help="File written by `rsrs factor --out`")
    _add_common(verify)

    bench = verbs.add_parser("bench", help="Factorize over the configured "
                                           "size sweep and write CSV")
    _add_common(bench)
    bench.add_argument("--csv", metavar="PATH",
                       help="Write rows here instead of stdout")

    selftest = verbs.add_parser("selftest", help="Check linearity and "
                                                 "adjoint of the operator")
    _add_common(selftest)


def _print_error(error):
    record = {"error": type(error).__name__, "message": str(error)}
    field = getattr(error, "field", "")
    if field:
        record["field"] = field
    print(json.dumps(record), file=sys.stderr)


def command(opts, parser=None):
    from .. import report
    from ..exceptions import ConfigError, RsrsError
    from . import verbs

    from ..util import log_level

    log = report.init_logging()
    level = {0: logging.WARNING, 1: logging.INFO}.get(opts.verbose,
                                                      logging.DEBUG)

    if opts.version:
        from .._version import print_info
        print_info()
        return 0

    if not opts.verb:
        if parser is not None:
            parser.print_usage(sys.stderr)
        return 2

    try:
        with log_level(level):
            return verbs.run(opts)

    except ConfigError as e:
        _print_error(e)
        return 2

    except (RsrsError, OSError) as e:
        log.debug(f"{opts.verb} failed", exc_info=True)
        _print_error(e)
        return 1
