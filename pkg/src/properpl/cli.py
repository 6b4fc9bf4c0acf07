"""Command line entry point: ``properpl {synth,corrupt,train,sweep,verify}``.

Exit codes: 0 success, 1 usage error, 2 data/format error, 3 verification
failure, 4 numeric failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys

from .core import Dataset, read_dataset, write_dataset
from .data import (corrupt, gaussian_scenario, load_idx_dataset, make_synthetic,
                   read_labeled_csv, split_validation, write_labeled_csv)
from .errors import CapExceeded, PPLError, UsageError
from .genmodels import cl_model, mcl_model, pcpl_model, skewed_model
from .nn import save_checkpoint
from .oracle import ORACLE_MAX_K, run_suite
from .trainer import FixedFamily, SyntheticFamily, TrainConfig, sweep, train

log = logging.getLogger("properpl")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_VERIFY, EXIT_NUMERIC = 0, 1, 2, 3, 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text):
    return [int(v) for v in text.split(",") if v.strip()]


def _words(text):
    return [v.strip() for v in text.split(",") if v.strip()]


def _dump_json(path, obj):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def _add_train_flags(p):
    p.add_argument("--model", choices=["linear", "mlp"], default="linear")
    p.add_argument("--hidden", type=_ints, default=[300, 300, 300, 300],
                   help="MLP hidden widths, comma separated")
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--batch", type=int, default=256)
    p.add_argument("--lr", type=float, default=1e-2)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--wd", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--exact", action="store_true",
                   help="serial, deterministic execution; omits wall-clock times from outputs")
    p.add_argument("--eval-every", type=int, default=1)
    p.add_argument("--val-fraction", type=float, default=0.1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="properpl", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="JSON file of flag values; explicit flags win")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    parser.subcommands = sub.choices

    p = sub.add_parser("synth", help="write a labelled synthetic Gaussian CSV")
    p.add_argument("--n", type=int, default=6000)
    p.add_argument("--K", type=int, default=3)
    p.add_argument("--d", type=int, default=5)
    p.add_argument("--separation", type=float, default=2.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("corrupt", help="turn labelled data into a partial-label dataset file")
    p.add_argument("--images")
    p.add_argument("--labels")
    p.add_argument("--csv", help="labelled CSV instead of IDX files")
    p.add_argument("--kind", choices=["cl", "mcl", "pcpl"], default="mcl")
    p.add_argument("--alpha", type=float, default=0.9)
    p.add_argument("--qbar", type=_floats, help="explicit complementary-size law for --kind mcl")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--strip-labels", action="store_true")
    p.add_argument("--features", choices=["inline", "sidecar"],
                   help="default: sidecar for IDX input, inline for CSV")
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train on a partial-label dataset file")
    p.add_argument("--data", required=True)
    p.add_argument("--test-data", help="labelled dataset file for test accuracy")
    p.add_argument("--test-images")
    p.add_argument("--test-labels")
    p.add_argument("--test-csv")
    p.add_argument("--estimator", choices=["ppl", "cc", "mcl", "cl"], default="ppl")
    _add_train_flags(p)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("sweep", help="repeated trials over alphas and estimators")
    p.add_argument("--alphas", type=_floats, default=[0.9, 0.8, 0.7])
    p.add_argument("--trials", type=int, default=5)
    p.add_argument("--estimators", type=_words, default=["ppl"])
    p.add_argument("--images")
    p.add_argument("--labels")
    p.add_argument("--test-images")
    p.add_argument("--test-labels")
    p.add_argument("--n-train", type=int, default=6000)
    p.add_argument("--n-test", type=int, default=2000)
    p.add_argument("--K", type=int, default=3)
    p.add_argument("--d", type=int, default=5)
    p.add_argument("--separation", type=float, default=2.0)
    p.add_argument("--workers", type=int, default=None,
                   help="parallel trials (capped by PPL_NUM_THREADS)")
    _add_train_flags(p)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("verify", help="run the exhaustive verification suite")
    p.add_argument("--k", type=_ints, default=[3, 4, 5, 6])
    p.add_argument("--inject-nonproper", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="directory for verify_K<k>.json reports")
    return parser


def parse_args(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        with open(args.config, encoding="utf-8") as f:
            file_values = json.load(f)
        if not isinstance(file_values, dict):
            parser.error("--config must hold a JSON object")
        # file values become defaults, so explicit flags still win on the re-parse
        parser.subcommands[args.command].set_defaults(**file_values)
        args = parser.parse_args(argv)
    return args


def resolved(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("verbose",)}


def _generation_model(args, K):
    if args.kind == "cl":
        return cl_model(K)
    if args.kind == "pcpl":
        return pcpl_model(K)
    if args.qbar:
        return mcl_model(args.qbar, K)
    return skewed_model(args.alpha, K)


def cmd_synth(args):
    scenario = gaussian_scenario(args.K, args.d, args.separation)
    ds, _ = make_synthetic(scenario, args.n, args.seed)
    write_labeled_csv(args.out, ds)
    print(f"wrote {args.out}: n={ds.n} K={ds.K} d={ds.dim}")
    return EXIT_OK


def _load_labelled(images=None, labels=None, csv_path=None, data=None):
    if data:
        return read_dataset(data)
    if csv_path:
        return read_labeled_csv(csv_path)
    if images or labels:
        if not (images and labels):
            raise UsageError("--images and --labels must be given together")
        return load_idx_dataset(images, labels)
    return None


def cmd_corrupt(args):
    source = _load_labelled(args.images, args.labels, args.csv)
    if source is None:
        raise UsageError("corrupt needs --images/--labels or --csv")
    model = _generation_model(args, source.K)
    ds = corrupt(source, model, args.seed)
    prov = dict(ds.provenance)
    prov["resolved_config"] = resolved(args)
    ds = Dataset(ds.features, ds.masks, ds.labels, ds.space, prov)
    if args.strip_labels:
        ds = ds.strip_labels()
    inline = (args.features or ("inline" if args.csv else "sidecar")) == "inline"
    write_dataset(args.out, ds, inline=inline)
    mean_size = float(ds.set_sizes().mean())
    print(f"n={ds.n} K={ds.K} mean|s|={mean_size:.4f}")
    return EXIT_OK


def _write_results(out, records, header_cfg, report_dict):
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "results.jsonl"), "w", encoding="utf-8", newline="\n") as f:
        for rec in records:
            f.write(json.dumps(rec, sort_keys=True) + "\n")
    _dump_json(os.path.join(out, "config.json"), header_cfg)
    _dump_json(os.path.join(out, "report.json"), report_dict)


def cmd_train(args):
    data = read_dataset(args.data)
    test = _load_labelled(args.test_images, args.test_labels, args.test_csv, args.test_data)
    if test is not None and test.labels is None:
        raise UsageError("test data must carry true labels")
    validation = None
    if data.labels is not None and 0 < args.val_fraction < 1:
        data, validation = split_validation(data, args.val_fraction, args.seed)
    cfg = TrainConfig(epochs=args.epochs, batch_size=args.batch, learning_rate=args.lr,
                      momentum=args.momentum, weight_decay=args.wd, seed=args.seed,
                      estimator=args.estimator, model=args.model, hidden=tuple(args.hidden),
                      exact=args.exact, eval_every=args.eval_every)
    model, report = train(data, cfg, validation=validation, test=test)
    gm = data.provenance.get("generation_model", {})
    run_id = f"{args.estimator}-seed{args.seed}"
    records = [{"run_id": run_id, "estimator": args.estimator, "alpha": gm.get("alpha"),
                "trial": None, "epoch": r.epoch, "train_risk": r.train_risk, "val_acc": r.val_acc,
                "test_acc": r.test_acc} for r in report.epochs]
    header = {"resolved_config": resolved(args), "train_config": cfg.to_dict(),
              "dataset_provenance": data.provenance}
    _write_results(args.out, records, header,
                   dict(report.to_dict(include_time=not args.exact), **header))
    save_checkpoint(os.path.join(args.out, "checkpoint.bin"), model, extra=header)
    final = report.final
    print(f"estimator={args.estimator} epochs={cfg.epochs} train_risk={final.train_risk:.5f} "
          f"val_acc={final.val_acc} test_acc={final.test_acc}")
    return EXIT_OK


def _worker_count(requested):
    cap = os.environ.get("PPL_NUM_THREADS")
    n = requested if requested else 1
    if cap:
        n = min(n, max(1, int(cap)))
    return n


def cmd_sweep(args):
    if args.images or args.labels:
        train_set = _load_labelled(args.images, args.labels)
        test_set = _load_labelled(args.test_images, args.test_labels)
        if test_set is None:
            raise UsageError("sweeps over IDX data need --test-images/--test-labels")
        family = FixedFamily(train_set, test_set, name="idx")
    else:
        family = SyntheticFamily(gaussian_scenario(args.K, args.d, args.separation),
                                 args.n_train, args.n_test)
    cfg = TrainConfig(epochs=args.epochs, batch_size=args.batch, learning_rate=args.lr,
                      momentum=args.momentum, weight_decay=args.wd, seed=args.seed,
                      model=args.model, hidden=tuple(args.hidden), exact=args.exact,
                      eval_every=args.eval_every)
    workers = 1 if args.exact else _worker_count(args.workers)
    report = sweep(family, args.alphas, args.trials, cfg, estimators=args.estimators,
                   master_seed=args.seed, workers=workers, val_fraction=args.val_fraction)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "runs.jsonl"), "w", encoding="utf-8", newline="\n") as f:
        for run in report.runs:
            for rec in run.records:
                f.write(json.dumps(rec, sort_keys=True) + "\n")
            if run.error:
                f.write(json.dumps({"run_id": run.run_id, "estimator": run.estimator,
                                    "alpha": run.alpha, "trial": run.trial,
                                    "error": run.error}, sort_keys=True) + "\n")
    columns = ["alpha", "estimator", "mean_acc", "std_err", "mean_risk", "risk_std_err"]
    with open(os.path.join(args.out, "aggregate.csv"), "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(columns)
        for row in report.rows:
            w.writerow(["" if row[c] is None else (repr(row[c]) if isinstance(row[c], float)
                                                   else row[c]) for c in columns])
    _dump_json(os.path.join(args.out, "sweep_config.json"),
               {"resolved_config": resolved(args), "sweep": report.config})
    for row in report.rows:
        se = "" if row["std_err"] is None else f" +- {row['std_err']:.4f}"
        acc = "n/a" if row["mean_acc"] is None else f"{row['mean_acc']:.4f}"
        print(f"alpha={row['alpha']:g} {row['estimator']:<4} acc={acc}{se} "
              f"({row['trials_ok']}/{row['trials']} trials)")
    if any(row["trials_ok"] == 0 for row in report.rows):
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_verify(args):
    too_big = [k for k in args.k if k > ORACLE_MAX_K or k < 3]
    if too_big:
        raise CapExceeded(f"verification supports 3 <= K <= {ORACLE_MAX_K}; got {too_big}")
    ok = True
    if args.out:
        os.makedirs(args.out, exist_ok=True)
    for K in args.k:
        report = run_suite(K, seed=args.seed, inject_nonproper=args.inject_nonproper)
        print(report.table())
        for c in report.failures():
            print(f"  FAILED {c.name}: witness {json.dumps(c.witness, sort_keys=True)}")
        if args.out:
            payload = dict(report.to_dict(), resolved_config=resolved(args))
            _dump_json(os.path.join(args.out, f"verify_K{K}.json"), payload)
        ok = ok and report.ok
    return EXIT_OK if ok else EXIT_VERIFY


COMMANDS = {"synth": cmd_synth, "corrupt": cmd_corrupt, "train": cmd_train,
            "sweep": cmd_sweep, "verify": cmd_verify}


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_DATA
    except json.JSONDecodeError as exc:
        print(f"error: config is not valid JSON: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except PPLError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (FloatingPointError, OverflowError) as exc:
        print(f"error: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
