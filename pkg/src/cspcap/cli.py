"""Command-line entry point: ``cspcap <command> ...``.

Exit codes: 0 success, 2 configuration or usage error, 3 I/O error,
4 numeric failure, 5 self-test failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
import warnings
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import cf
from .checkpoint import load_checkpoint
from .config import ConfigError, RunConfig, load_config
from .features import ALL_KINDS, FeatureKind, extract_features
from .frames import DataIOError, FrameDataset, generate_dataset, write_json
from .model import NumericError, build_cap, layer_table
from .preprocessing import preprocess_dataset
from .selftest import run_selftest
from .synthesis import ModulationScheme
from .training import (CHECKPOINT_FILE, PSK_MSK, QAM, EvalReport, SplitSpec, cross_evaluate, evaluate,
                       split_dataset, train)

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC, EXIT_TEST = 0, 2, 3, 4, 5

log = logging.getLogger("cspcap")


class TestFailure(Exception):
    pass


def _load_dataset(path) -> FrameDataset:
    return FrameDataset.load(path)


def _out_dir(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataIOError(f"cannot create {out}: {exc}") from exc
    return out


def cmd_gen(args):
    config = load_config(args.config)
    out = _out_dir(args.out)
    ds = generate_dataset(config.dataset, out)
    config.write_echo(out)
    print(f"wrote {len(ds)} frames ({len(config.dataset.schemes)} schemes x "
          f"{config.dataset.frames_per_class}) to {out}")


def _preprocess(config: RunConfig, ds: FrameDataset) -> FrameDataset:
    if not config.preprocess.enabled:
        return FrameDataset(ds.iq, ds.records, ds.config, True, ds.extras)
    return preprocess_dataset(ds, **config.preprocess.params())


def cmd_preprocess(args):
    config = load_config(args.config)
    ds = _load_dataset(args.data)
    if ds.preprocessed:
        raise ConfigError(f"{args.data} is already preprocessed")
    out = _out_dir(args.out)
    _preprocess(config, ds).save(out)
    config.write_echo(out)
    print(f"preprocessed {len(ds)} frames into {out}")


def cmd_features(args):
    ds = _load_dataset(args.data)
    kinds = tuple(FeatureKind.parse(k) for k in (args.kinds or [k.name for k in ALL_KINDS]))
    if not 0 <= args.index < len(ds):
        raise ConfigError(f"frame index {args.index} out of range [0, {len(ds)})")
    feats = extract_features(ds.iq[args.index].astype(np.float64), np.float64, kinds)
    header, cols = ["sample"], [np.arange(ds.frame_length)]
    for kind, v in feats.items():
        for ch in range(v.shape[-1]):
            header.append(f"{kind.name}_{'IQ'[ch] if kind.domain == 'time' else 'mag'}")
            cols.append(v[:, ch])
    out = Path(args.out)
    try:
        with open(out, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in zip(*cols):
                w.writerow([int(row[0]), *(repr(float(v)) for v in row[1:])])
    except OSError as exc:
        raise DataIOError(f"cannot write {out}: {exc}") from exc
    print(f"wrote {len(header) - 1} feature columns for frame {args.index} to {out}")


def lines_table(ds: FrameDataset, indices, orders=cf.ORDERS, min_prominence_db=10.0) -> list[dict]:
    """Detected lines per frame and order against the predicted cycle frequencies."""
    rows = []
    n = ds.frame_length
    for k in indices:
        rec = ds.records[k]
        scheme = ModulationScheme(int(rec["scheme"]))
        f0 = float(rec["f0"])
        if ds.extras and "boi" in ds.extras[k]:
            # Preprocessing shifted the band to zero; lines follow the residual offset.
            f0 = f0 - ds.extras[k]["boi"]["center_freq"]
        feats = extract_features(ds.iq[k].astype(np.float64), np.float64, tuple(f"FREQ{o}" for o in orders))
        for kind, v in feats.items():
            alphas = cf.predicted_cycle_frequencies(scheme, kind.order, f0, int(rec["T0"]))
            for line in cf.detect_spectral_lines(v, min_prominence_db):
                dist = cf.nearest_cycle_frequency(line.frequency, alphas)
                rows.append({"frame": int(k), "scheme": scheme.name, "order": kind.order, "f0": f0,
                             "T0": int(rec["T0"]), "frequency": line.frequency,
                             "prominence_db": line.prominence_db, "nearest_cf_bins": dist * n,
                             "on_cf": bool(dist * n <= 2.0)})
    return rows


def cmd_lines(args):
    ds = _load_dataset(args.data)
    indices = args.index if args.index else range(min(len(ds), 8))
    rows = lines_table(ds, indices, tuple(args.orders), args.min_prominence)
    cols = ["frame", "scheme", "order", "f0", "T0", "frequency", "prominence_db", "nearest_cf_bins", "on_cf"]
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in (r[c] for c in cols)])
    finally:
        if fh is not sys.stdout:
            fh.close()
    if rows:
        on = sum(r["on_cf"] for r in rows)
        print(f"{on}/{len(rows)} detected lines within 2 bins of a predicted cycle frequency", file=sys.stderr)


def cmd_train(args):
    config = load_config(args.config)
    ds = _load_dataset(args.data)
    out = _out_dir(args.out)
    result = train(ds, config, out, verbose=args.verbose)
    r = result.test_report
    print(f"best epoch {result.classifier.best_epoch_}; test P_CC {r.p_cc:.4f} on {r.n} frames; "
          f"checkpoint {out / CHECKPOINT_FILE}")


def cmd_eval(args):
    clf, meta = load_checkpoint(args.ckpt)
    ds = _load_dataset(args.data)
    index = None
    if args.split != "all":
        t = meta.get("config", {}).get("train", {})
        spec = SplitSpec(t.get("train_frac", 0.7), t.get("val_frac", 0.05), t.get("test_frac", 0.25),
                         t.get("split_seed", 0))
        index = split_dataset(ds.labels, spec)[("train", "val", "test").index(args.split)]
    bin_width = meta.get("config", {}).get("eval", {}).get("snr_bin_width", 1.0)
    report = evaluate(clf, ds, index, bin_width)
    out = _out_dir(args.out)
    report.write(out, f"eval_{args.split}")
    print(f"P_CC {report.p_cc:.4f} on {report.n} frames ({args.split})")


def cmd_xeval(args):
    clf, meta = load_checkpoint(args.ckpt)
    ds = _load_dataset(args.data)
    bin_width = meta.get("config", {}).get("eval", {}).get("snr_bin_width", 1.0)
    reference = EvalReport.from_dict(meta["test_report"]) if "test_report" in meta else None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        xr = cross_evaluate(clf, ds, reference, meta.get("dataset_config"), bin_width)
    for w in xr.warnings:
        print(f"warning: {w}", file=sys.stderr)
    xr.write(_out_dir(args.out))
    print(f"P_CC {xr.report.p_cc:.4f} on {xr.report.n} frames; delta vs within-dataset test "
          f"{'n/a' if xr.delta is None else f'{xr.delta:+.4f}'}")
    for name, d in xr.per_scheme_delta.items():
        if d is not None:
            print(f"  {name:<10} {d:+.4f}")


def cmd_inspect(args):
    if args.config:
        config = load_config(args.config)
        net = build_cap(config.dataset.frame_length, len(config.dataset.schemes), config.features.kinds,
                        config.model.filters, config.model.kernel_size, config.model.seed)
    else:
        net = build_cap(args.frame_length, args.classes)
    text = layer_table(net)
    if args.out:
        try:
            Path(args.out).write_text(text)
        except OSError as exc:
            raise DataIOError(f"cannot write {args.out}: {exc}") from exc
    print(text, end="")


def cmd_selftest(args):
    results = run_selftest()
    failed = [r.name for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    if failed:
        raise TestFailure(", ".join(failed))


def run_repro(config_a: RunConfig, config_b: RunConfig, out, verbose: int = 0) -> dict:
    """Generate, preprocess and train on both configs, then test every train/test pairing."""
    out = _out_dir(out)
    names = {"A": config_a, "B": config_b}
    data, results = {}, {}
    for key, cfg in names.items():
        run = _out_dir(out / key)
        cfg.write_echo(run)
        ds = _preprocess(cfg, generate_dataset(cfg.dataset))
        ds.save(run / "data")
        data[key] = ds
        results[key] = train(ds, cfg, run / "model", verbose=verbose)
    table, cross = {}, {}
    for tr in names:
        for te in names:
            if tr == te:
                table[(tr, te)] = results[tr].test_report.p_cc
                continue
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                xr = cross_evaluate(results[tr].classifier, data[te], results[tr].test_report,
                                    data[tr].config, names[te].eval.snr_bin_width)
            xr.write(_out_dir(out / f"{tr}_on_{te}"))
            table[(tr, te)] = xr.report.p_cc
            cross[f"{tr}_on_{te}"] = {"delta_p_cc": xr.delta, "per_scheme_delta": xr.per_scheme_delta,
                                      "psk_msk_drop": xr.subset_drop(PSK_MSK), "qam_drop": xr.subset_drop(QAM),
                                      "warnings": xr.warnings}
    summary = {
        "datasets": {k: c.dataset.name for k, c in names.items()},
        "p_cc": {f"{a}_on_{b}": v for (a, b), v in table.items()},
        "cross": cross,
    }
    write_json(out / "repro.json", summary)
    with open(out / "repro_table.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["train\\test", *(names[k].dataset.name for k in names)])
        for a in names:
            w.writerow([names[a].dataset.name, *(repr(table[(a, b)]) for b in names)])
    return summary


def cmd_repro(args):
    a, b = load_config(args.config_a), load_config(args.config_b)
    summary = run_repro(a, b, args.out, args.verbose)
    names = summary["datasets"]
    print(f"{'train / test':<20}" + "".join(f"{names[k]:>20}" for k in names))
    for tr in names:
        print(f"{names[tr]:<20}" + "".join(f"{summary['p_cc'][f'{tr}_on_{te}']:>20.4f}" for te in names))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cspcap", description="CSP-feature CAP modulation classifier")
    p.add_argument("--threads", type=int, default=None,
                   help="cap BLAS/OpenMP worker threads; 1 gives bit-reproducible runs")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("gen", help="synthesize a dataset")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_gen)

    s = sub.add_parser("preprocess", help="BOI filtering and unit-power normalization")
    s.add_argument("--config", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_preprocess)

    s = sub.add_parser("features", help="dump the features of one frame as CSV")
    s.add_argument("--data", required=True)
    s.add_argument("--index", type=int, default=0)
    s.add_argument("--kinds", nargs="*")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_features)

    s = sub.add_parser("lines", help="detected spectral lines against predicted cycle frequencies")
    s.add_argument("--data", required=True)
    s.add_argument("--index", type=int, nargs="*")
    s.add_argument("--orders", type=int, nargs="*", default=list(cf.ORDERS))
    s.add_argument("--min-prominence", type=float, default=10.0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_lines)

    s = sub.add_parser("train", help="split, train and test within one dataset")
    s.add_argument("--config", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="evaluate a checkpoint on a dataset split")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--split", choices=("train", "val", "test", "all"), default="test")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("xeval", help="cross-dataset evaluation with per-scheme deltas")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_xeval)

    s = sub.add_parser("inspect", help="print the network topology table")
    s.add_argument("--config")
    s.add_argument("--frame-length", type=int, default=32768)
    s.add_argument("--classes", type=int, default=8)
    s.add_argument("--out")
    s.set_defaults(func=cmd_inspect)

    s = sub.add_parser("selftest", help="layer oracles, DFT oracle and gradient checks")
    s.set_defaults(func=cmd_selftest)

    s = sub.add_parser("repro", help="full pipeline on two configs with a 2x2 train/test table")
    s.add_argument("--config-a", required=True)
    s.add_argument("--config-b", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_repro)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads is not None and args.threads < 1:
        print("error: --threads must be positive", file=sys.stderr)
        return EXIT_CONFIG
    try:
        with threadpool_limits(limits=args.threads):
            args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericError, FloatingPointError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataIOError, OSError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except TestFailure as exc:
        print(f"self-test failed: {exc}", file=sys.stderr)
        return EXIT_TEST
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
