"""``adanav`` command line: correlate, train, sweep-alpha and report."""
from __future__ import annotations

import argparse
import logging
import sys

from .harness import ConfigError, load_config, report, run
from .learn import NumericalError
from .spectral import SpectralError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="adanav", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("correlate", help="entropy vs spectral gap over mixture policies")
    c.add_argument("--grids", type=lambda s: [g for g in s.split(",") if g], default=None)
    c.add_argument("--policies", type=int, default=None)
    c.add_argument("--config")
    c.add_argument("--out", default=None)
    c.add_argument("--force", action="store_true", default=None)

    t = sub.add_parser("train", help="multi-seed training suite")
    t.add_argument("--config", required=True)
    t.add_argument("--seeds", type=_int_list, default=None)
    t.add_argument("--out", default=None)
    t.add_argument("--force", action="store_true", default=None)

    s = sub.add_parser("sweep-alpha", help="AdaExponential sensitivity sweep")
    s.add_argument("--config", required=True)
    s.add_argument("--alphas", type=_float_list, default=None)
    s.add_argument("--seeds", type=_int_list, default=None)
    s.add_argument("--out", default=None)
    s.add_argument("--force", action="store_true", default=None)

    r = sub.add_parser("report", help="recompute summaries and render figures")
    r.add_argument("--in", dest="directory", required=True)
    r.add_argument("--no-figures", action="store_true")
    return p


def _overrides(args, kind: str) -> dict:
    o = {"kind": kind, "out": args.out, "force": args.force}
    for attr, key in (("seeds", "seeds"), ("alphas", "alphas"), ("grids", "grids"), ("policies", "n_policies")):
        if getattr(args, attr, None) is not None:
            o[key] = getattr(args, attr)
    return o


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    kind = {"correlate": "correlate", "train": "train", "sweep-alpha": "alpha_sweep"}.get(args.command)
    try:
        if args.command == "report":
            result = report(args.directory, figures=not args.no_figures)
            for name, stats in result.get("correlation", {}).items():
                print(f"{name}: spearman={stats['spearman']:.4f} gap(beta=0)={stats['gap_beta0']:.3g} "
                      f"gap(beta=1)={stats['gap_beta1']:.3g}")
            for row in result.get("summary", []):
                print(f"{row[0]}: final_median={row[5]:.3f} iqr={row[8]:.3f} "
                      f"samples_to_threshold={row[11]} failed={row[4]}")
            for path in result["figures"]:
                print(f"wrote {path}")
            return EXIT_OK
        config = load_config(getattr(args, "config", None), _overrides(args, kind))
        result = run(config)
        if kind == "correlate":
            print(f"wrote {result}")
            return EXIT_OK
        failed = sum(row[4] for row in result)
        print(f"wrote {config.out / 'summary.csv'} ({len(result)} configurations, {failed} aborted runs)")
        return EXIT_NUMERICAL if failed else EXIT_OK
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, SpectralError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
