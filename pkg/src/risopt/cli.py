"""Command-line entry point: ``risopt --config scenario.cfg [options]``."""
from __future__ import annotations

import argparse
import logging
import sys

from .config import ConfigError, load_config
from .harness import CampaignSpec, parse_scheme, parse_sweep, run_campaign
from .metrics import UTILITIES, UtilitySpec

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="risopt", description="Monte Carlo campaigns for RIS-assisted multi-cell "
                "MIMO-OFDM under I/Q imbalance; writes summary.csv and trials.csv.")
    p.add_argument("--config", required=True, help="scenario file (key = value lines)")
    p.add_argument("--utility", choices=UTILITIES, default="minrate")
    p.add_argument("--scheme", action="append", default=None, metavar="SPEC",
                   help="kind[:set=T_I][:mode=ES][:optimize=true][:iqi_aware=true][:sectors=N]"
                        " with kind in none|regular|star|msbd; repeatable (default: regular)")
    p.add_argument("--sweep", metavar="FIELD=V1,V2,...",
                   help="sweep one field, e.g. P_db=0,10 or N_R=8,16 or a_t=1,0.9")
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="risopt-out", help="output directory")
    p.add_argument("--dump-channels", action="store_true", help="also write each trial's channels as CSV")
    p.add_argument("--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.trials < 1:
            raise UsageError("--trials must be >= 1")
        config = load_config(args.config)
        try:
            schemes = tuple(parse_scheme(s) for s in (args.scheme or ["regular"]))
        except ValueError as exc:
            raise UsageError(f"--scheme: {exc}") from None
        try:
            sweep = parse_sweep(args.sweep) if args.sweep else None
        except ValueError as exc:
            raise UsageError(f"--sweep: {exc}") from None
        kw = {"sweep": sweep} if sweep else {}
        try:
            spec = CampaignSpec(config=config, schemes=schemes, utility=UtilitySpec(args.utility),
                                trials=args.trials, seed=args.seed, out=args.out,
                                dump_channels=args.dump_channels, **kw)
        except (ConfigError, ValueError) as exc:
            flag = "--sweep" if sweep else "--scheme"
            raise UsageError(f"{flag}: {exc}") from None
    except UsageError as exc:
        print(parser.format_usage().rstrip(), file=sys.stderr)
        print(f"risopt: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ConfigError as exc:
        print(f"risopt: invalid config: {exc}", file=sys.stderr)
        return EXIT_INVALID

    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)

    def progress(i, n, res):
        if args.verbose:
            print(f"[{i}/{n}] {res.scheme} sweep={res.sweep_value} seed={res.seed} "
                  f"utility={res.utility:.4g} iters={res.iterations}", file=sys.stderr)

    try:
        result = run_campaign(spec, progress)
    except Exception as exc:      # noqa: BLE001
        print(f"risopt: runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    failed = [t for t in result.trials if t.error]
    for row in result.summary:
        print(f"{row['sweep_value']!s:>8}  {row['scheme']:<24} {row['utility_mean']:.4f} "
              f"+/- {row['utility_stderr']:.4f}  (n={row['n_trials']})")
    if failed:
        print(f"risopt: {len(failed)} trial(s) failed; see trials.csv", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
