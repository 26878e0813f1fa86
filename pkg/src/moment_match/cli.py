"""Command-line entry point.

Exit codes: 0 success, 1 failed check, 2 usage or configuration error,
3 numerical abort during training.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import sys
from pathlib import Path

import numpy as np

from . import network as nw
from .adaptation import TrainConfig, TrainingDiverged, sensitivity_sweep, train
from .discrepancy import (
    DiscrepancySpec,
    cmd_k,
    cmd_k_grad,
    mkl,
    mkl_grad,
    mmd2,
    mmd2_grad,
)
from .gradcheck import max_relative_error, numerical_grad
from .samples import (
    Bounds,
    DataFormatError,
    DomainDataset,
    LabeledSample,
    Sample,
    load_dense_csv,
    load_sparse_bow,
    make_synthetic_pair,
)

EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


def fmt(x: float) -> str:
    return f"{x:.17g}"


# --------------------------------------------------------------------------- #
# shared flag groups
# --------------------------------------------------------------------------- #

def _add_config_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("model and training")
    g.add_argument("--discrepancy", choices=["cmd", "mmd", "mkl", "none"], default="cmd")
    g.add_argument("--K", type=int, default=5, help="number of moment orders for cmd")
    g.add_argument("--beta", type=float, default=1.0, help="Gaussian kernel width for mmd")
    g.add_argument("--lambda", dest="lam", type=float, default=1.0, help="regularizer weight")
    g.add_argument("--hidden", type=int, default=16, help="hidden nodes")
    g.add_argument("--activation", choices=["sigmoid", "tanh", "clipped_relu"], default="sigmoid")
    g.add_argument("--clip", type=float, nargs=2, default=(0.0, 1.0), metavar=("LO", "HI"))
    g.add_argument("--optimizer", choices=["adadelta", "adagrad", "sgd"], default="adadelta")
    g.add_argument("--lr", type=float, default=None, help="learning rate (adagrad, sgd)")
    g.add_argument("--epochs", type=int, default=50)
    g.add_argument("--batch-size", type=int, default=64)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--balance-source", action="store_true")


def _add_dataset_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("dataset")
    g.add_argument("--synthetic", metavar="KIND:MAGNITUDE", help="e.g. shift:0.8 or rotation:0.6")
    g.add_argument("--n-source", type=int, default=500)
    g.add_argument("--n-target", type=int, default=500)
    g.add_argument("--n-test", type=int, default=2000)
    g.add_argument("--data-seed", type=int, default=None, help="defaults to --seed")
    g.add_argument("--source", type=Path)
    g.add_argument("--target", type=Path)
    g.add_argument("--target-test", type=Path)
    g.add_argument("--format", choices=["dense", "sparse"], default="dense")
    g.add_argument("--dim", type=int, help="input dimension for sparse files")
    g.add_argument("--label-column", default="label", help="label column name for dense files")
    g.add_argument("--one-based", action="store_true", help="sparse indices start at 1")


def _parse_task(text: str) -> tuple[str, float]:
    kind, sep, mag = text.partition(":")
    if not sep:
        raise UsageError(f"expected KIND:MAGNITUDE, got {text!r}")
    try:
        return kind.strip(), float(mag)
    except ValueError:
        raise UsageError(f"bad magnitude in {text!r}") from None


def _synthetic(text: str, args, seed: int) -> DomainDataset:
    kind, mag = _parse_task(text)
    return make_synthetic_pair(kind, mag, args.n_source, args.n_target, args.n_test, seed)


def _load_dataset(args) -> DomainDataset:
    if args.synthetic:
        seed = args.seed if args.data_seed is None else args.data_seed
        return _synthetic(args.synthetic, args, seed)
    if not (args.source and args.target and args.target_test):
        raise UsageError("give --synthetic, or all of --source, --target and --target-test")
    if args.format == "sparse":
        if args.dim is None:
            raise UsageError("--format sparse requires --dim")
        load = lambda p: load_sparse_bow(p, args.dim, one_based=args.one_based)  # noqa: E731
        source, test = load(args.source), load(args.target_test)
        target = load(args.target).inputs
    else:
        source = load_dense_csv(args.source, label_column=args.label_column)
        test = load_dense_csv(args.target_test, label_column=args.label_column)
        target = load_dense_csv(args.target)
        if isinstance(target, LabeledSample):
            target = target.inputs
    if test.n_classes != source.n_classes:
        # class sets observed per file can differ; pad to the wider one
        c = max(test.n_classes, source.n_classes)
        source = LabeledSample.from_ids(source.inputs, source.class_ids, c)
        test = LabeledSample.from_ids(test.inputs, test.class_ids, c)
    return DomainDataset(source, target, test, name=Path(args.source).stem)


def _build_config(args, input_dim: int, n_classes: int) -> TrainConfig:
    spec = None
    if args.discrepancy != "none":
        spec = DiscrepancySpec(args.discrepancy, K=args.K, beta=args.beta, lam=args.lam)
    specs = nw.classifier_specs(input_dim, args.hidden, n_classes, args.activation, tuple(args.clip))
    opt_params = {} if args.lr is None or args.optimizer == "adadelta" else {"lr": args.lr}
    return TrainConfig(
        layer_specs=specs,
        discrepancy=spec,
        optimizer=args.optimizer,
        optimizer_params=opt_params,
        epochs=args.epochs,
        batch_size=args.batch_size,
        seed=args.seed,
        balance_source=args.balance_source,
    )


def _resolved(args, extra: dict | None = None) -> dict:
    out = {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(vars(args).items()) if k not in ("func", "out")}
    if isinstance(out.get("clip"), tuple):
        out["clip"] = list(out["clip"])
    if extra:
        out.update(extra)
    return out


def _header_lines(command: str, config: dict) -> list[str]:
    stamp = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    return [
        f"# moment_match {command}",
        "# config: " + json.dumps(config, sort_keys=True),
        f"# created: {stamp}",
    ]


def _write_csv(path: Path, command: str, config: dict, columns, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        for line in _header_lines(command, config):
            fh.write(line + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([fmt(v) if isinstance(v, float) else v for v in r])


# --------------------------------------------------------------------------- #
# subcommands
# --------------------------------------------------------------------------- #

def cmd_discrepancy(args) -> int:
    bounds = Bounds(*args.bounds)
    X = load_dense_csv(args.x, bounds=bounds)
    Y = load_dense_csv(args.y, bounds=bounds)
    if X.N != Y.N:
        raise UsageError(f"column counts differ: {X.N} vs {Y.N}")
    print(f"measure: {args.measure}")
    if args.measure == "cmd":
        res = cmd_k(X, Y, args.K)
        print(f"value: {fmt(res.value)}")
        for k, t in enumerate(res.per_term, start=1):
            print(f"term_{k}: {fmt(t)}")
    elif args.measure == "mmd":
        print(f"value: {fmt(mmd2(X, Y, args.beta))}")
    else:
        print(f"value: {fmt(mkl(X, Y))}")
    return EXIT_OK


def _run_training(args):
    dataset = _load_dataset(args)
    config = _build_config(args, dataset.input_dim, dataset.n_classes)
    return dataset, config, train(dataset, config)


def cmd_train(args) -> int:
    dataset, config, result = _run_training(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    resolved = _resolved(args, {"task": dataset.name, "train_config": config.describe()})
    _write_csv(
        out / "history.csv",
        "train",
        resolved,
        ["epoch", "task_loss", "reg_value", "source_acc"],
        ([h.epoch, h.task_loss, h.reg_value, h.source_acc] for h in result.history),
    )
    last = result.history[-1]
    payload = {
        "config": resolved,
        "reg_weight": 0.0 if config.discrepancy is None else config.discrepancy.lam,
        "target_test_accuracy": result.target_test_accuracy,
        "final_task_loss": last.task_loss,
        "final_reg_value": last.reg_value,
        "final_source_acc": last.source_acc,
    }
    (out / "result.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    nw.save_checkpoint(result.state, out / "model.json")
    print(f"target_test_accuracy: {fmt(result.target_test_accuracy)}")
    return EXIT_OK


def cmd_activations(args) -> int:
    dataset, config, result = _run_training(args)
    out = Path(args.out)
    resolved = _resolved(args, {"task": dataset.name, "train_config": config.describe()})
    for domain, inputs in (("source", dataset.source.inputs), ("target", dataset.target_unlabeled)):
        hidden = nw.forward(result.state, inputs).hidden.data
        cols = [f"h{j}" for j in range(hidden.shape[1])]
        _write_csv(out / f"activations_{domain}.csv", "activations", dict(resolved, domain=domain),
                   cols, (list(map(float, row)) for row in hidden))
    print(f"wrote {out / 'activations_source.csv'} and {out / 'activations_target.csv'}")
    return EXIT_OK


def _parse_list(text: str, cast) -> list:
    try:
        return [cast(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"cannot parse list {text!r}") from None


def cmd_sweep(args) -> int:
    cast = int if args.axis in ("K", "hidden_nodes") else float
    values = _parse_list(args.values, cast)
    reference = None if args.reference is None else cast(args.reference)
    seeds = _parse_list(args.seeds, int)
    if not values or not seeds:
        raise UsageError("--values and --seeds must be nonempty")
    if args.axis == "K" and args.discrepancy != "cmd":
        raise UsageError("axis K requires --discrepancy cmd")
    if args.axis == "beta" and args.discrepancy != "mmd":
        raise UsageError(f"axis beta requires --discrepancy mmd, got {args.discrepancy}")
    data_seed = args.seed if args.data_seed is None else args.data_seed
    tasks = [_synthetic(t, args, data_seed + i) for i, t in enumerate(args.tasks.split(","))]
    config = _build_config(args, tasks[0].input_dim, tasks[0].n_classes)
    result = sensitivity_sweep(tasks, config, args.axis, values, reference, seeds)
    resolved = _resolved(args, {"train_config": config.describe()})
    _write_csv(Path(args.out), "sweep", resolved,
               ["axis_value", "task", "seed", "accuracy", "ratio"], result.rows())
    print(f"wrote {len(values) * len(tasks) * len(seeds)} rows to {args.out}")
    return EXIT_OK


def gradcheck_errors(measures, n=6, N=3, K=5, beta=1.0, seed=1, step=1e-5) -> dict:
    rng = np.random.default_rng(seed)
    bounds = Bounds(0.0, 1.0)
    # keep away from the bounds so perturbed points stay inside
    x = 0.1 + 0.8 * rng.random((n, N))
    y = 0.1 + 0.8 * rng.random((n, N))
    Y = Sample(y, bounds)
    table = {
        "cmd": (lambda X: cmd_k(X, Y, K).value, lambda X: cmd_k_grad(X, Y, K)),
        "mmd": (lambda X: mmd2(X, Y, beta), lambda X: mmd2_grad(X, Y, beta)),
        "mkl": (lambda X: mkl(X, Y), lambda X: mkl_grad(X, Y)),
    }
    errors = {}
    for m in measures:
        value, grad = table[m]
        num = numerical_grad(lambda a: value(Sample(a, bounds)), x, step)
        errors[m] = max_relative_error(grad(Sample(x, bounds)), num)
    return errors


def cmd_gradcheck(args) -> int:
    measures = ["cmd", "mmd", "mkl"] if args.measure == "all" else [args.measure]
    errors = gradcheck_errors(measures, args.n, args.N, args.K, args.beta, args.seed, args.fd_step)
    ok = True
    for m, err in errors.items():
        passed = err < args.threshold
        ok &= passed
        print(f"{m}: max_rel_error={err:.3e} {'ok' if passed else 'FAIL'}")
    return EXIT_OK if ok else EXIT_CHECK


# --------------------------------------------------------------------------- #
# parser
# --------------------------------------------------------------------------- #

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="moment-match", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("discrepancy", help="discrepancy between two dense CSV samples")
    p.add_argument("x", type=Path)
    p.add_argument("y", type=Path)
    p.add_argument("--measure", choices=["cmd", "mmd", "mkl"], default="cmd")
    p.add_argument("--K", type=int, default=5)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--bounds", type=float, nargs=2, default=(0.0, 1.0), metavar=("LO", "HI"))
    p.set_defaults(func=cmd_discrepancy)

    p = sub.add_parser("train", help="train one model, write history.csv and result.json")
    _add_dataset_flags(p)
    _add_config_flags(p)
    p.add_argument("--out", required=True, type=Path, help="output directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", help="sensitivity sweep over one parameter")
    p.add_argument("--axis", required=True, choices=["K", "lambda", "beta", "hidden_nodes"])
    p.add_argument("--values", required=True, help="comma-separated grid")
    p.add_argument("--reference", help="grid value ratios are normalized against")
    p.add_argument("--tasks", required=True, help="comma-separated KIND:MAGNITUDE list")
    p.add_argument("--seeds", default="0", help="comma-separated training seeds")
    p.add_argument("--n-source", type=int, default=500)
    p.add_argument("--n-target", type=int, default=500)
    p.add_argument("--n-test", type=int, default=2000)
    p.add_argument("--data-seed", type=int, default=None)
    _add_config_flags(p)
    p.add_argument("--out", required=True, type=Path, help="output CSV path")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("gradcheck", help="compare analytic gradients with finite differences")
    p.add_argument("--measure", choices=["cmd", "mmd", "mkl", "all"], default="all")
    p.add_argument("--K", type=int, default=5)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--n", type=int, default=6)
    p.add_argument("--N", type=int, default=3)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--fd-step", type=float, default=1e-5)
    p.add_argument("--threshold", type=float, default=1e-4)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("activations", help="train, then dump hidden activations per domain")
    _add_dataset_flags(p)
    _add_config_flags(p)
    p.add_argument("--out", required=True, type=Path, help="output directory")
    p.set_defaults(func=cmd_activations)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (TrainingDiverged, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (UsageError, DataFormatError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
