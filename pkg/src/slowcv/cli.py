"""Command-line driver: ``slowcv <subcommand> ...``.

Subcommands
-----------
generate   sample a builtin HMM benchmark to CSV (+ ``<stem>_states.csv``)
fit        fit pca / tica / tcca / tae and write a JSON model file
transform  encode (or, with ``--predict``, forecast) a CSV with a model
evaluate   whitened reconstruction error and, given states, CCA score
its        implied timescales from an encoding, a model + data or states
benchmark  run the repeated train/validate/MSM protocol from a config

Exit codes: 0 success, 1 usage or config error, 2 data error,
3 numerical failure.

Model files are flat JSON. Linear models carry ``model: "linear"``,
``method``, ``lag``, ``kinetic_map``, ``input_dim``, ``dim``,
``mean_in``, ``mean_out``, ``singular_values`` and row-major
``encoder`` (d x N) and ``decoder`` (N x d). TAE models carry
``model: "tae"``, ``spec``, ``layers`` (shape, row-major weight, bias),
the input/output standardizers and the training ``history``.
"""

import argparse
import logging
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, datagen, evaluation, linear, msm, neural
from .config import bundled_configs, load_config
from .errors import DataError, SlowCVError
from .io import (
    load_model,
    read_csv,
    read_states,
    save_model,
    write_csv,
    write_its_table,
    write_json,
    write_rows,
    write_states,
)
from .stats import whiten_trajectories

log = logging.getLogger("slowcv")


class UsageError(Exception):
    exit_code = 1


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def sidecar(path, suffix):
    path = Path(path)
    return path.with_name(f"{path.stem}_{suffix}.csv")


def _read_data(paths):
    data = [read_csv(p) for p in paths]
    return data if len(data) > 1 else data[0]


def _out_path(path):
    path = Path(path)
    if path.parent and not path.parent.exists():
        raise DataError(f"output directory does not exist: {path.parent}")
    return path


# -- generate -----------------------------------------------------------------


def cmd_generate(args):
    if args.spec not in datagen.BUILTIN_SPECS:
        raise UsageError(f"unknown spec {args.spec!r}; choose from {sorted(datagen.BUILTIN_SPECS)}")
    spec = datagen.builtin_spec(args.spec)
    traj = datagen.sample_hmm(spec, args.length, args.seed)
    out = _out_path(args.out)
    write_csv(out, traj.observations)
    write_states(sidecar(out, "states"), traj.hidden)
    log.info("wrote %s (%d x %d) and its states", out, *traj.observations.shape)
    return 0


# -- fit ----------------------------------------------------------------------


def _tae_kwargs(args, input_dim):
    spec = neural.MlpSpec(
        input_dim=input_dim,
        encoder_hidden=tuple(args.hidden),
        latent_dim=args.dim,
        leaky_alpha=args.leaky_alpha,
        dropout_p=args.dropout,
        activation=args.activation,
    )
    cfg = neural.TrainConfig(
        learning_rate=args.learning_rate,
        batch_size=args.batch_size,
        max_epochs=args.epochs,
        early_stop_patience=args.patience,
        standardize=args.standardize,
    )
    return spec, cfg


def cmd_fit(args):
    data = _read_data(args.data)
    out = _out_path(args.out)
    if args.method == "tae":
        first = data[0] if isinstance(data, list) else data
        spec, cfg = _tae_kwargs(args, first.shape[1])
        model = neural.train_tae(data, args.lag, spec, cfg, seed=args.seed)
        save_model(out, model)
        rows = [[h["epoch"], h["train_loss"], h["val_loss"]] for h in model.history]
        write_rows(sidecar(out, "history"), ["epoch", "train_loss", "val_loss"], rows)
    else:
        kwargs = {"kinetic_map": not args.no_kinetic_map} if args.method == "tica" else {}
        model = linear.fit(args.method, data, args.lag, args.dim, **kwargs)
        save_model(out, model)
    log.info("wrote %s model to %s", args.method, out)
    return 0


# -- transform / evaluate -----------------------------------------------------


def _model_input_dim(model):
    return model.spec.input_dim if model.method == "tae" else model.input_dim


def _check_dims(model, data):
    arrays = data if isinstance(data, list) else [data]
    n = _model_input_dim(model)
    for a in arrays:
        if a.shape[1] != n:
            raise DataError(f"data has {a.shape[1]} columns, model expects {n}")


def cmd_transform(args):
    model = load_model(args.model)
    data = read_csv(args.data)
    _check_dims(model, data)
    out = model.predict(data) if args.predict else model.encode(data)
    write_csv(_out_path(args.out), out)
    return 0


def cmd_evaluate(args):
    model = load_model(args.model)
    data = _read_data(args.data)
    _check_dims(model, data)
    lag = args.lag if args.lag is not None else int(model.lag)
    train = _read_data(args.train) if args.train else data
    whit = evaluation.target_whitener(train, lag)
    result = {
        "method": model.method,
        "lag": lag,
        "reconstruction_error": evaluation.reconstruction_error(model, data, lag, whit),
    }
    if args.states:
        hidden = np.concatenate([read_states(p) for p in args.states])
        encoded = model.encode(data)
        encoded = np.concatenate(encoded) if isinstance(encoded, list) else encoded
        if hidden.size != encoded.shape[0]:
            raise DataError(f"{hidden.size} states for {encoded.shape[0]} frames")
        n_states = args.n_states or int(hidden.max()) + 1
        white, _ = whiten_trajectories(encoded)
        result["cca"] = evaluation.cca_score(white, hidden, n_states)
    if args.out:
        write_json(_out_path(args.out), result)
    else:
        sys.stdout.write(evaluation_report(result))
    return 0


def evaluation_report(result):
    return "".join(f"{k}: {result[k]}\n" for k in sorted(result))


# -- its ----------------------------------------------------------------------


def cmd_its(args):
    sources = [args.encoded is not None, args.model is not None, args.discrete is not None]
    if sum(sources) != 1:
        raise UsageError("give exactly one of --encoded, --model (with --data) or --discrete")
    if args.discrete is not None:
        dtraj = read_states(args.discrete)
        k = args.k if args.k is not None else int(dtraj.max()) + 1
    else:
        if args.encoded is not None:
            encoded = read_csv(args.encoded)
        else:
            if args.data is None:
                raise UsageError("--model needs --data")
            model = load_model(args.model)
            data = read_csv(args.data)
            _check_dims(model, data)
            encoded = model.encode(data)
        white, _ = whiten_trajectories(encoded)
        k = args.k if args.k is not None else 50
        disc = msm.kmeans(white[::args.stride], k, seed=args.seed)
        dtraj = msm.assign(white, disc.centers)[0]
    table = msm.its_curve(dtraj, k, args.msm_lags, args.n_timescales, not args.nonreversible)
    for lag, err in table.errors.items():
        log.warning("MSM lag %d: %s", lag, err)
    write_its_table(_out_path(args.out), table)
    return 0


# -- benchmark ----------------------------------------------------------------

STAT_HEADER = ["lag", "median", "p16", "p84", "n", "complete"]


def _stat_row(lag, cell):
    return [lag, cell["median"], cell["p16"], cell["p84"], len(cell["values"]), cell["complete"]]


def incomplete_cells(summary):
    """``metric/method/lag`` labels of cells that miss repetitions."""
    bad = []
    for metric, methods in summary.cells.items():
        for method, lags in methods.items():
            for lag, cell in lags.items():
                entries = [cell] if isinstance(cell, dict) else []
                if metric == "its":
                    entries = [e for msm_lag in cell.values() for e in msm_lag]
                if any(not e["complete"] or e["median"] is None for e in entries):
                    bad.append(f"{metric}/{method}/{lag}")
    return bad


def write_figure_csvs(out_dir, summary, methods):
    """One CSV per (figure, method): error vs lag, CCA vs lag, ITS vs MSM lag."""
    ref = summary.reference_timescales or []
    written = []
    for method in sorted(methods):
        for metric in ("reconstruction_error", "cca"):
            cells = summary.cells.get(metric, {}).get(method)
            if cells is None:
                continue
            path = out_dir / f"{metric}_{method}.csv"
            rows = [_stat_row(int(lag), cells[lag]) for lag in sorted(cells, key=int)]
            write_rows(path, STAT_HEADER, rows)
            written.append(path.name)
        its = summary.cells.get("its", {}).get(method)
        if its is not None:
            path = out_dir / f"its_{method}.csv"
            header = ["transform_lag", "msm_lag", "index", "median", "p16", "p84", "n",
                      "complete", "reference", "hidden_median"]
            hidden = summary.cells["its"].get("hidden", {}).get("-", {})
            rows = []
            for tlag in sorted(its, key=int):
                for mlag in sorted(its[tlag], key=int):
                    for i, cell in enumerate(its[tlag][mlag]):
                        h = hidden.get(mlag, [])
                        rows.append([int(tlag), int(mlag), i + 1, cell["median"], cell["p16"],
                                     cell["p84"], sum(v is not None for v in cell["values"]),
                                     cell["complete"], ref[i] if i < len(ref) else None,
                                     h[i]["median"] if i < len(h) else None])
            write_rows(path, header, rows)
            written.append(path.name)
    return written


def available_cores():
    if hasattr(os, "sched_getaffinity"):
        return max(len(os.sched_getaffinity(0)), 1)
    return os.cpu_count() or 1


def cmd_benchmark(args):
    if args.config is None:
        raise UsageError(f"--config is required (bundled: {', '.join(bundled_configs())})")
    run = load_config(args.config)
    workers = args.workers if args.workers is not None else available_cores()
    proto = run.protocol(repetitions=args.reps, workers=workers)
    out_dir = Path(args.out) if args.out else run.output
    out_dir.mkdir(parents=True, exist_ok=True)
    log.info("benchmark %s: %d repetitions, %d workers", args.config, proto.repetitions, workers)
    summary = evaluation.run_protocol(proto, workers=workers)
    write_json(out_dir / "summary.json", summary.to_dict())
    figures = write_figure_csvs(out_dir, summary, proto.methods)
    bad = incomplete_cells(summary)
    manifest = {
        "config": run.raw,
        "config_hash": run.hash,
        "config_source": str(args.config),
        "version": __version__,
        "repetitions": proto.repetitions,
        "seed_rule": "seed = base_seed + repetition",
        "seeds": [proto.base_seed + r for r in range(proto.repetitions)],
        "workers": workers,
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "files": ["summary.json", *figures],
        "failures": summary.failures,
        "incomplete_cells": bad,
    }
    write_json(out_dir / "manifest.json", manifest)
    if bad:
        log.error("%d incomplete cells: %s", len(bad), ", ".join(bad))
        return 3
    return 0


# -- parser -------------------------------------------------------------------


def build_parser():
    p = _Parser(prog="slowcv", description="Slow collective variables from time series.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="sample a builtin benchmark trajectory")
    g.add_argument("spec", help=f"builtin spec: {', '.join(sorted(datagen.BUILTIN_SPECS))}")
    g.add_argument("--length", type=int, default=100_000)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True, help="observation CSV; states go to <stem>_states.csv")
    g.set_defaults(func=cmd_generate)

    f = sub.add_parser("fit", help="fit one model and write it as JSON")
    f.add_argument("method", choices=("pca", "tica", "tcca", "tae"))
    f.add_argument("--data", nargs="+", required=True, help="one CSV per trajectory")
    f.add_argument("--lag", type=int, default=1)
    f.add_argument("--dim", type=int, default=1)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--out", required=True)
    f.add_argument("--no-kinetic-map", action="store_true", help="tica: unscaled encoder")
    f.add_argument("--hidden", type=_int_list, default=[50], help="tae: encoder widths, e.g. 50 or 100,50")
    f.add_argument("--dropout", type=float, default=0.5)
    f.add_argument("--leaky-alpha", type=float, default=0.001)
    f.add_argument("--activation", choices=neural.ACTIVATIONS, default="leaky_relu")
    f.add_argument("--standardize", choices=neural.STANDARDIZERS, default="zscore")
    f.add_argument("--learning-rate", type=float, default=1e-3)
    f.add_argument("--batch-size", type=int, default=128)
    f.add_argument("--epochs", type=int, default=50)
    f.add_argument("--patience", type=int, default=5)
    f.set_defaults(func=cmd_fit)

    t = sub.add_parser("transform", help="encode or forecast a CSV with a model")
    t.add_argument("--model", required=True)
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--predict", action="store_true", help="write lag-tau forecasts instead of encodings")
    t.set_defaults(func=cmd_transform)

    e = sub.add_parser("evaluate", help="reconstruction error and CCA score of a model")
    e.add_argument("--model", required=True)
    e.add_argument("--data", nargs="+", required=True, help="held-out trajectories")
    e.add_argument("--train", nargs="+", help="training trajectories for the target whitener")
    e.add_argument("--states", nargs="+", help="hidden-state CSVs matching --data")
    e.add_argument("--n-states", type=int)
    e.add_argument("--lag", type=int)
    e.add_argument("--out", help="JSON report (default: print)")
    e.set_defaults(func=cmd_evaluate)

    i = sub.add_parser("its", help="implied timescales versus MSM lag")
    i.add_argument("--encoded", help="encoded CSV")
    i.add_argument("--model")
    i.add_argument("--data")
    i.add_argument("--discrete", help="state CSV, used without clustering")
    i.add_argument("--k", type=int, help="cluster count (default 50; states: max + 1)")
    i.add_argument("--msm-lags", type=_int_list, default=[1, 2, 5, 10])
    i.add_argument("--n-timescales", type=int, default=1)
    i.add_argument("--nonreversible", action="store_true")
    i.add_argument("--stride", type=int, default=1, help="fit centers on every stride-th frame")
    i.add_argument("--seed", type=int, default=0)
    i.add_argument("--out", required=True)
    i.set_defaults(func=cmd_its)

    b = sub.add_parser("benchmark", help="run the repeated benchmark protocol")
    b.add_argument("--config", help=f"config file or bundled name ({', '.join(bundled_configs())})")
    b.add_argument("--reps", type=int, help="override the number of repetitions")
    b.add_argument("--workers", type=int, help="worker processes (default: CPU count)")
    b.add_argument("--out", help="report directory (default: the config's output)")
    b.set_defaults(func=cmd_benchmark)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, SlowCVError) as exc:
        print(f"slowcv: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:
        print(f"slowcv: error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"slowcv: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
