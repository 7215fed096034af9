"""Command-line entry point: ``mudsim run | codes | fading-check | version``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from . import __version__
from .channel import ChannelError, fading_statistics, rayleigh_trace
from .config import ConfigError, parse_config
from .sequences import SequenceError, correlation_matrix, gold_family
from .sweep import dump_records, run_sweep, sidecar_paths

log = logging.getLogger("mudsim")


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _names(text: str) -> tuple[str, ...]:
    return tuple(x.strip() for x in text.split(",") if x.strip())


def cmd_run(args) -> int:
    text = Path(args.config).read_text() if args.config else ""
    cfg = parse_config(
        text,
        ebno_db=args.ebno_db,
        receivers=args.receivers,
        seed=args.seed,
        output=args.out,
        workers=args.workers,
        trials=args.trials,
        symbols=args.symbols,
    )
    out = Path(cfg.output)
    result = run_sweep(cfg, out)
    diag, man = sidecar_paths(out)
    invalid = [c for c in result.cells if not c.valid]
    for c in invalid:
        log.warning("cell %s/%d at %g dB invalid: %d diverged trials", c.receiver, c.stage, c.ebno_db, c.diverged)
    print(f"wrote {out} ({len(result.cells)} rows), {diag}, {man}")
    if args.records:
        dump_records(cfg, args.records)
        print(f"wrote {args.records} (trial 0 at {cfg.ebno_db[0]:g} dB)")
    return 0


def cmd_codes(args) -> int:
    fam = gold_family(args.degree)
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "label"] + [f"chip_{n}" for n in range(fam.length)])
        for i, c in enumerate(fam.codes):
            w.writerow([i, c.label] + [repr(float(x)) for x in c.chips])
    finally:
        if fh is not sys.stdout:
            fh.close()
    if args.correlation:
        R = correlation_matrix(fam.codes)
        with open(args.correlation, "w", newline="") as fh2:
            w = csv.writer(fh2, lineterminator="\n")
            w.writerow([""] + [c.label for c in fam.codes])
            for c, row in zip(fam.codes, R):
                w.writerow([c.label] + [repr(float(x)) for x in row])
    return 0


def cmd_fading_check(args) -> int:
    trace = rayleigh_trace(args.symbols, args.fd_tb, args.seed, sinusoids=args.sinusoids)
    st = fading_statistics(trace, args.max_lag)
    checks = {
        "variance within 1 +/- 0.05": abs(st["variance"] - 1.0) <= 0.05,
        f"autocorrelation within 0.05 of J0 up to lag {args.max_lag}": st["max_acf_error"] <= 0.05,
        "KS distance to Rayleigh < 0.01": st["ks_rayleigh"] < 0.01,
    }
    for k, v in st.items():
        print(f"{k} = {v}")
    for k, ok in checks.items():
        print(f"{'ok  ' if ok else 'FAIL'} {k}")
    if args.trace:
        with open(args.trace, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["m", "re", "im", "magnitude"])
            for m, b in enumerate(trace.gains):
                w.writerow([m, repr(b.real), repr(b.imag), repr(abs(b))])
    return 0


def cmd_version(args) -> int:
    fam = gold_family(5)
    print(f"mudsim {__version__} gold5:{fam.fingerprint()[:16]}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mudsim", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an Eb/N0 sweep and write the metrics CSV")
    r.add_argument("--config", help="key = value configuration file (defaults if omitted)")
    r.add_argument("--ebno-db", type=_floats)
    r.add_argument("--receivers", type=_names)
    r.add_argument("--seed", type=int)
    r.add_argument("--out", help="CSV path; diagnostics and manifest are written beside it")
    r.add_argument("--workers", type=int)
    r.add_argument("--trials", type=int)
    r.add_argument("--symbols", type=int)
    r.add_argument("--records", help="also dump per-symbol records of trial 0 at the first Eb/N0")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("codes", help="dump a Gold code family as CSV")
    c.add_argument("--degree", type=int, default=5)
    c.add_argument("--out", help="family CSV path (stdout if omitted)")
    c.add_argument("--correlation", help="also write the zero-lag correlation matrix here")
    c.set_defaults(func=cmd_codes)

    f = sub.add_parser("fading-check", help="statistics of one fading trace against the Clarke model")
    f.add_argument("--fd-tb", type=float, default=0.003)
    f.add_argument("--symbols", type=int, default=200000)
    f.add_argument("--seed", type=int, default=1)
    f.add_argument("--sinusoids", type=int, default=64)
    f.add_argument("--max-lag", type=int, default=100)
    f.add_argument("--trace", help="optional CSV of the trace")
    f.set_defaults(func=cmd_fading_check)

    v = sub.add_parser("version", help="print the version tag")
    v.set_defaults(func=cmd_version)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, SequenceError, ChannelError, ValueError, OSError) as exc:
        print(f"mudsim: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
