"""Command-line pipeline: generate, ktd, dataset, train, eval, bench.

Stages communicate through files: ``generate`` writes a CP-net library,
``dataset`` labels and encodes its pairs, ``train`` fits a model on one
fold, ``eval`` scores a checkpoint, and ``bench`` times the exact
distance against model inference.  Every artifact-producing command
writes a run manifest (command, config, seed, tool version, input/output
paths, wall time) next to its outputs, and reruns with the same flags
reproduce the data files byte for byte.

Exit codes: 0 success, 2 usage or validation error, 3 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from . import __version__, data, evaluation, metric, nn
from .cpnet import (
    BUDGET_ENV_VAR,
    CPNetError,
    load_cpnet,
    parse_cpnet,
    serialize_cpnet,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3

# interactive commands stay inside the range the exact computation is quick
# for; raise via CPMETRIC_BUDGET_N when larger orders are really wanted
CLI_DEFAULT_BUDGET_N = 7


class UsageError(ValueError):
    pass


def _cli_budget() -> int:
    return int(os.environ.get(BUDGET_ENV_VAR, CLI_DEFAULT_BUDGET_N))


def _config_dict(args) -> dict:
    return {k: v for k, v in vars(args).items() if k not in ("func", "command")}


def _write_manifest(out_dir, command: str, config: dict, inputs, outputs, started):
    manifest = {
        "command": command,
        "version": __version__,
        "config": config,
        "seed": config.get("seed"),
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
        "wall_time_s": round(time.perf_counter() - started, 3),
    }
    path = (
        os.path.join(out_dir, "manifest.json")
        if os.path.isdir(out_dir)
        else str(out_dir) + ".manifest.json"
    )
    with open(path, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2)
        f.write("\n")


def cmd_generate(args) -> int:
    started = time.perf_counter()
    cfg = data.GenConfig(
        n=args.n, count=args.count, seed=args.seed, max_indegree=args.max_indegree
    )
    nets = data.generate_library(cfg)
    doc = {"nets": [json.loads(serialize_cpnet(net)) for net in nets]}
    with open(args.out, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=2, ensure_ascii=False)
        f.write("\n")
    _write_manifest(
        args.out, "generate", _config_dict(args), [], [args.out], started
    )
    print(f"wrote {len(nets)} CP-nets to {args.out}")
    return EXIT_OK


def cmd_ktd(args) -> int:
    a = load_cpnet(args.net_a)
    b = load_cpnet(args.net_b)
    d = metric.ktd(a, b, p=args.p, budget_n=_cli_budget())
    print(f"raw        {d.raw:.12g}")
    print(f"normalized {d.normalized:.12g}")
    return EXIT_OK


def _load_library(path) -> list:
    with open(path, encoding="utf-8") as f:
        doc = json.load(f)
    if not isinstance(doc, dict) or "nets" not in doc:
        raise UsageError(f"{path} is not a CP-net library file")
    return [parse_cpnet(json.dumps(obj)) for obj in doc["nets"]]


def cmd_dataset(args) -> int:
    started = time.perf_counter()
    library = _load_library(args.library)
    ds = data.dataset_from_library(
        library,
        folds=args.folds,
        p=args.p,
        m=args.m,
        ordered=args.ordered,
        seed=args.seed,
        train_fraction=args.train_fraction,
        train_size=args.train_size,
        budget_n=_cli_budget(),
        workers=args.workers,
    )
    data.save_dataset(ds, args.out_dir)
    outputs = [
        os.path.join(args.out_dir, name)
        for name in (data.LIBRARY_FILENAME, data.RECORDS_FILENAME, data.MANIFEST_FILENAME)
    ]
    _write_manifest(args.out_dir, "dataset", _config_dict(args),
                    [args.library], outputs, started)
    print(f"wrote {len(ds.y)} labeled pairs over {len(library)} nets to {args.out_dir}")
    return EXIT_OK


def _fold_arrays(ds: data.Dataset, fold: int):
    if not 0 <= fold < len(ds.folds):
        raise UsageError(f"fold {fold} out of range (dataset has {len(ds.folds)})")
    tr = ds.fold_rows(fold, "train")
    te = ds.fold_rows(fold, "test")
    if len(tr) == 0 or len(te) == 0:
        raise UsageError(f"fold {fold} has an empty side")
    return tr, te


def cmd_train(args) -> int:
    started = time.perf_counter()
    ds = data.load_dataset(args.dataset)
    tr, te = _fold_arrays(ds, args.fold)
    target = ds.bins if args.mode == nn.CLASSIFICATION else ds.y
    dtype = np.float32  # training dtype; checkpoints are float32 either way

    if args.init_from:
        model = nn.load_model(args.init_from, dtype=dtype)
        if model.n != ds.n or model.mode != args.mode or (
            args.mode == nn.CLASSIFICATION and model.m != ds.m
        ):
            raise UsageError(
                f"checkpoint {args.init_from} (n={model.n}, mode={model.mode}, "
                f"m={model.m}) does not fit dataset (n={ds.n}, m={ds.m})"
            )
    else:
        model = nn.build_model(ds.n, args.mode, m=ds.m, seed=args.seed, dtype=dtype)

    os.makedirs(args.out_dir, exist_ok=True)
    outputs = []
    if args.autoencoder != "none":
        lap, cpt = nn.autoencoder_inputs(ds.features[tr], ds.n, dtype)
        vlap, vcpt = nn.autoencoder_inputs(ds.features[te], ds.n, dtype)
        ae_cfg = nn.TrainConfig(
            epochs=args.ae_epochs, batch_size=args.batch_size,
            learning_rate=args.learning_rate, seed=args.seed,
        )
        ae, ae_history, best = nn.pretrain_autoencoder(
            ds.n, args.autoencoder, lap, cpt, ae_cfg, vlap, vcpt, dtype=dtype
        )
        nn.transfer_weights(nn.encoder_params(ae), model)
        ae_csv = os.path.join(args.out_dir, "ae_history.csv")
        nn.write_history_csv(ae_history, ae_csv)
        outputs.append(ae_csv)
        print(f"pretrained {args.autoencoder} autoencoder (best epochs: {best})")

    cfg = nn.TrainConfig(
        epochs=args.epochs, batch_size=args.batch_size,
        learning_rate=args.learning_rate, seed=args.seed,
    )
    history = nn.train(
        model, ds.features[tr], target[tr], cfg,
        ds.features[te], target[te],
        freeze_encoders=args.freeze_encoders,
    )
    ckpt = os.path.join(args.out_dir, "model.ckpt")
    hist_csv = os.path.join(args.out_dir, "history.csv")
    nn.save_model(model, ckpt)
    nn.write_history_csv(history, hist_csv)
    outputs = [ckpt, hist_csv] + outputs
    _write_manifest(args.out_dir, "train", _config_dict(args),
                    [args.dataset], outputs, started)
    print(
        f"trained {args.mode} model for {args.epochs} epochs "
        f"(final train loss {history[-1]['train_loss']:.4f}, "
        f"val loss {history[-1]['val_loss']:.4f}); wrote {ckpt}"
    )
    return EXIT_OK


def cmd_eval(args) -> int:
    started = time.perf_counter()
    ds = data.load_dataset(args.dataset)
    model = nn.load_model(args.model, dtype=np.float32)
    if model.n != ds.n:
        raise UsageError(
            f"checkpoint n={model.n} does not match dataset n={ds.n}"
        )
    _, te = _fold_arrays(ds, args.fold)

    out = np.concatenate([
        nn.forward(model, nn.pair_batch(ds.features, te[s:s + 4096], ds.n, model.dtype))
        for s in range(0, len(te), 4096)
    ])
    os.makedirs(args.out_dir, exist_ok=True)
    report_json = os.path.join(args.out_dir, "report.json")
    report_txt = os.path.join(args.out_dir, "report.txt")
    if model.mode == nn.CLASSIFICATION:
        preds = np.argmax(out, axis=1)
        report = evaluation.classification_report(preds, ds.bins[te], ds.m)
        text = evaluation.report_table(report)
        with open(report_json, "w", encoding="utf-8") as f:
            f.write(report.to_json())
    else:
        preds = out[:, 0].astype(np.float64)
        truth = ds.y[te]
        doc = {
            "mode": nn.REGRESSION,
            "mae": evaluation.mae(preds, truth, nn.REGRESSION),
            "constant_mean_mae": float(
                np.abs(truth - ds.y[ds.fold_rows(args.fold, 'train')].mean()).mean()
            ),
        }
        text = (
            f"{'MAE':>10} {'constant-mean MAE':>20}\n"
            f"{doc['mae']:>10.4f} {doc['constant_mean_mae']:>20.4f}\n"
        )
        with open(report_json, "w", encoding="utf-8") as f:
            json.dump(doc, f, indent=2)
            f.write("\n")
    with open(report_txt, "w", encoding="utf-8") as f:
        f.write(text)
    _write_manifest(args.out_dir, "eval", _config_dict(args),
                    [args.model, args.dataset], [report_json, report_txt], started)
    print(text, end="")
    return EXIT_OK


def cmd_bench(args) -> int:
    started = time.perf_counter()
    ns = list(range(args.n_min, args.n_max + 1))
    libraries = {}
    models = {}
    for n in ns:
        cfg = data.GenConfig(n=n, count=args.library_size, seed=args.seed + n)
        libraries[n] = data.generate_library(cfg)
        # a small regression model per n; inference timing does not depend
        # on how well it fits, only on the architecture
        ds = data.dataset_from_library(
            libraries[n], folds=1, p=args.p, m=10, ordered=False,
            seed=args.seed + n, budget_n=max(_cli_budget(), n),
        )
        tr = ds.fold_rows(0, "train")
        model = nn.build_model(n, nn.REGRESSION, seed=args.seed, dtype=np.float32)
        train_cfg = nn.TrainConfig(epochs=2, batch_size=64, seed=args.seed)
        nn.train(model, ds.features[tr], ds.y[tr], train_cfg)
        models[n] = model

    report = evaluation.benchmark_runtime(
        libraries, models, trials=args.trials, seed=args.seed, p=args.p,
        warmup=args.warmup,
    )
    os.makedirs(args.out_dir, exist_ok=True)
    timing_json = os.path.join(args.out_dir, "timing.json")
    timing_txt = os.path.join(args.out_dir, "timing.txt")
    with open(timing_json, "w", encoding="utf-8") as f:
        f.write(report.to_json())
    text = report.table()
    with open(timing_txt, "w", encoding="utf-8") as f:
        f.write(text)
    _write_manifest(args.out_dir, "bench", _config_dict(args),
                    [], [timing_json, timing_txt], started)
    print(text, end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cpmetric",
        description="CP-net order distances: exact computation and learned models",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a library of random CP-nets")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--count", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--max-indegree", type=int, default=None)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    k = sub.add_parser("ktd", help="exact distance between two CP-net files")
    k.add_argument("net_a")
    k.add_argument("net_b")
    k.add_argument("--p", type=float, default=metric.DEFAULT_PENALTY)
    k.set_defaults(func=cmd_ktd)

    d = sub.add_parser("dataset", help="label and encode all pairs of a library")
    d.add_argument("--library", required=True)
    d.add_argument("--folds", type=int, default=10)
    d.add_argument("--p", type=float, default=metric.DEFAULT_PENALTY)
    d.add_argument("--m", type=int, default=10)
    ordered = d.add_mutually_exclusive_group()
    ordered.add_argument("--ordered", dest="ordered", action="store_true")
    ordered.add_argument("--unordered", dest="ordered", action="store_false")
    d.set_defaults(ordered=True)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--train-fraction", type=float, default=0.9)
    d.add_argument("--train-size", type=int, default=None)
    d.add_argument("--workers", type=int, default=1)
    d.add_argument("--out-dir", required=True)
    d.set_defaults(func=cmd_dataset)

    t = sub.add_parser("train", help="train the siamese model on one fold")
    t.add_argument("--dataset", required=True)
    t.add_argument("--fold", type=int, default=0)
    t.add_argument("--mode", choices=(nn.CLASSIFICATION, nn.REGRESSION),
                   default=nn.CLASSIFICATION)
    t.add_argument("--autoencoder", choices=("none", nn.SEPARATE, nn.SIAMESE),
                   default="none")
    t.add_argument("--epochs", type=int, default=70)
    t.add_argument("--ae-epochs", type=int, default=100)
    t.add_argument("--batch-size", type=int, default=128)
    t.add_argument("--learning-rate", type=float, default=1e-3)
    t.add_argument("--freeze-encoders", action="store_true")
    t.add_argument("--init-from", default=None,
                   help="checkpoint to continue training from")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--out-dir", required=True)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="score a checkpoint on a fold's test pairs")
    e.add_argument("--model", required=True)
    e.add_argument("--dataset", required=True)
    e.add_argument("--fold", type=int, default=0)
    e.add_argument("--out-dir", required=True)
    e.set_defaults(func=cmd_eval)

    b = sub.add_parser("bench", help="time exact distance vs model inference")
    b.add_argument("--n-min", type=int, default=3)
    b.add_argument("--n-max", type=int, default=7)
    b.add_argument("--trials", type=int, default=1000)
    b.add_argument("--warmup", type=int, default=50)
    b.add_argument("--library-size", type=int, default=30)
    b.add_argument("--p", type=float, default=metric.DEFAULT_PENALTY)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out-dir", required=True)
    b.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CPNetError, UsageError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
