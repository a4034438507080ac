"""Command-line interface: ``censored-logit {reshape,fit,predict,simulate}``.

Exit codes: 0 ok, 2 usage or schema error, 3 data validation error,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import warnings

import pandas as pd

from ._validation import check_market_share, check_min_obs
from .data import TransactionDataset, parse_long, parse_wide, reshape
from .estimation import FitResult, fit
from .exceptions import (
    CensoredLogitError,
    DataValidationError,
    NumericError,
    SchemaError,
)
from .prediction import predict

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


def _exit_code(exc: Exception) -> int:
    if isinstance(exc, DataValidationError):
        return EXIT_DATA
    if isinstance(exc, NumericError):
        return EXIT_NUMERIC
    return EXIT_USAGE


def _table(frame: pd.DataFrame) -> str:
    if frame.empty:
        return "(none)"
    return frame.to_string(index=False)


def run_reshape(args) -> int:
    wide = {"--alts-code": args.alts_code, "--choice-set": args.choice_set,
            "--choice-set-code": args.choice_set_code}
    given = [flag for flag, v in wide.items() if v is not None]
    if given and len(given) < 3:
        missing = [flag for flag, v in wide.items() if v is None]
        raise SchemaError(f"wide format requires {', '.join(missing)}")
    min_obs = check_min_obs(args.min_obs)
    if given:
        rows = parse_wide(args.input, args.idvar, args.resp, args.alts, args.asv,
                          args.alts_code, args.choice_set, args.choice_set_code,
                          delimiter=args.delimiter, drop_duplicates=args.dedup)
    else:
        rows = parse_long(args.input, args.idvar, args.resp, args.alts, args.asv,
                          delimiter=args.delimiter, drop_duplicates=args.dedup)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        ds = reshape(rows, min_obs)
    if args.output:
        ds.save(args.output)
    removed = sum(m for _, m in ds.removed_sets)
    print("Alts_Code_Desc:")
    print(_table(ds.alternatives_table(args.alts)))
    print("\nRem_Choice_Set:")
    print(_table(ds.remaining_table()))
    print("\nRemoved_Choice_Set:")
    print(_table(ds.removed_table()))
    print(f"\nSummary: {ds.n_alternatives} alternatives; {len(ds.remaining_sets)} remaining "
          f"choice sets ({ds.n_records} records); {len(ds.removed_sets)} removed choice sets "
          f"({removed} records); {ds.dropped_singletons} single-alternative transactions "
          "dropped")
    return EXIT_OK


def run_fit(args) -> int:
    prop = check_market_share(args.prop)
    ds = TransactionDataset.load(args.input)
    result = fit(ds, prop, baseline=args.baseline)
    if args.output:
        result.save(args.output)
    sys.stdout.write(result.report())
    return EXIT_OK


def run_predict(args) -> int:
    model = FitResult.load(args.model)
    rows = pd.read_csv(args.input, sep=args.delimiter)
    res = predict(model, rows, args.set_code, fixed=args.fixed, seed=args.seed,
                  with_no_purchase=args.with_no_purchase)
    text = res.to_csv(delimiter=args.delimiter)
    if args.output:
        with open(args.output, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def run_simulate(args) -> int:
    from .synthetic import ScenarioSpec, generate, recovery_study, summarize_recovery

    spec = ScenarioSpec.load(args.input)
    if args.seed is not None:
        spec = spec.replace(seed=args.seed)
    if args.n_arrivals is not None:
        spec = spec.replace(n_arrivals=args.n_arrivals)
    os.makedirs(args.output, exist_ok=True)
    sim = generate(spec)
    sim.long_frame().to_csv(os.path.join(args.output, "full.csv"), index=False,
                            lineterminator="\n")
    sim.long_frame(purchases_only=True).to_csv(os.path.join(args.output, "censored.csv"),
                                               index=False, lineterminator="\n")
    sim.censored.save(os.path.join(args.output, "dataset.json"))
    summary = {
        "n_arrivals": spec.n_arrivals,
        "n_purchases": sim.n_purchases,
        "n_no_purchase": sim.n_no_purchase,
        "realized_share": sim.realized_share,
        "expected_share": spec.expected_share,
        "true_gamma": spec.true_gamma,
        "reference_code": spec.reference_code,
        "seed": spec.seed,
    }
    with open(os.path.join(args.output, "summary.json"), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=1)
        fh.write("\n")
    print(f"arrivals {spec.n_arrivals}, purchases {sim.n_purchases}, "
          f"realized share {sim.realized_share:.4f} (expected {spec.expected_share:.4f})")
    if args.replications:
        table = recovery_study(spec, args.replications, args.sizes, share=args.share,
                               n_jobs=args.jobs)
        table.to_csv(os.path.join(args.output, "recovery.csv"), index=False,
                     lineterminator="\n")
        summ = summarize_recovery(table)
        summ.to_csv(os.path.join(args.output, "recovery_summary.csv"), lineterminator="\n")
        print(summ.T.to_string(float_format=lambda v: f"{v:.4f}"))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="censored-logit",
        description="Conditional logit demand estimation from censored transactions.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("reshape", help="code alternatives and choice sets; filter rare sets")
    p.add_argument("--input", required=True)
    p.add_argument("--output", help="dataset JSON to write")
    p.add_argument("--idvar", required=True)
    p.add_argument("--resp", required=True)
    p.add_argument("--alts", required=True)
    p.add_argument("--asv", action="append", required=True,
                   help="alternative-specific variable (repeatable)")
    p.add_argument("--alts-code")
    p.add_argument("--choice-set")
    p.add_argument("--choice-set-code")
    p.add_argument("--min-obs", type=int, default=30)
    p.add_argument("--delimiter", default=",")
    p.add_argument("--dedup", action="store_true",
                   help="drop exact duplicate rows instead of failing")
    p.set_defaults(func=run_reshape)

    p = sub.add_parser("fit", help="fit the model to a reshaped dataset")
    p.add_argument("--input", required=True, help="dataset JSON from reshape")
    p.add_argument("--output", help="model JSON to write")
    p.add_argument("--prop", type=float, default=0.7, help="assumed market share")
    p.add_argument("--baseline", type=int, help="pin this baseline code instead of searching")
    p.set_defaults(func=run_fit)

    p = sub.add_parser("predict", help="choice probabilities for new offers")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True, help="CSV with <asv>_<code> columns")
    p.add_argument("--output")
    p.add_argument("--set-code", type=int, required=True)
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--fixed", dest="fixed", action="store_true", default=True)
    mode.add_argument("--sampled", dest="fixed", action="store_false")
    p.add_argument("--seed", type=int)
    p.add_argument("--with-no-purchase", action="store_true")
    p.add_argument("--delimiter", default=",")
    p.set_defaults(func=run_predict)

    p = sub.add_parser("simulate", help="generate synthetic transactions")
    p.add_argument("--input", required=True, help="scenario JSON")
    p.add_argument("--output", required=True, help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--n-arrivals", type=int)
    p.add_argument("--replications", type=int, default=0)
    p.add_argument("--sizes", type=int, nargs="+")
    p.add_argument("--share", choices=("expected", "realized"), default="expected")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=run_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CensoredLogitError as exc:
        stage = f" [{exc.stage}]" if exc.stage else ""
        print(f"error{stage}: {exc}", file=sys.stderr)
        return _exit_code(exc)
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (json.JSONDecodeError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        print(f"error: cannot parse input: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
