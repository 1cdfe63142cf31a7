"""Command-line interface.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

import argparse
import csv
import logging
import statistics
import sys
from importlib import resources

import numpy as np

from . import dataio, gradcheck
from .config import build_config, config_values, load_config
from .errors import ConfigError, RanklossError
from .retrieval_eval import evaluate
from .trainer import embed, init_encoder, train_loop

METRICS_VERSION_LINE = "# rankloss-kit metrics v1"
SWEEP_PARAMS = ("batch_size", "tau1", "k_set")
EVAL_KS = (1, 2, 4, 8)

log = logging.getLogger("rankloss_kit")


def quickstart_config_path():
    return resources.files("rankloss_kit").joinpath("data/quickstart.cfg")


def _ints(text):
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _bool(text):
    if text.lower() in ("true", "1", "yes"):
        return True
    if text.lower() in ("false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected true/false, got {text!r}")


def _load_train_val(data_path, val_path):
    data = dataio.load_dataset(data_path)
    if val_path:
        return data, dataio.load_dataset(val_path)
    return dataio.split_by_classes(data)


def _config(path):
    if path == "quickstart":
        path = quickstart_config_path()
    return load_config(path)


def _check_input_dim(input_dim, data):
    if input_dim and input_dim != data.dim:
        raise ConfigError(f"config input_dim={input_dim} but data has {data.dim} features")


def cmd_gen(args):
    d = dataio.generate_synthetic(args.classes, args.per_class, args.dim, args.noise, args.seed)
    dataio.save_dataset(d, args.out)
    print(f"wrote {args.out}: N={len(d)} classes={d.num_classes}")
    return 0


def metrics_header(ks):
    return ["iteration", "loss", "val_r@1"] + [f"val_recall@{k}" for k in ks] + ["elapsed_ms"]


def write_metrics(path, report, ks):
    with open(path, "w", newline="") as f:
        f.write(METRICS_VERSION_LINE + "\n")
        w = csv.writer(f)
        w.writerow(metrics_header(ks))
        for row in report.rows():
            val = row["val"]
            cols = [""] * (1 + len(ks)) if val is None else [f"{val['r@1']:.6f}"] + [f"{val[f'recall@{k}']:.6f}" for k in ks]
            w.writerow([row["iteration"], f"{row['loss']:.9f}"] + cols + [f"{row['elapsed_ms']:.1f}"])


def cmd_train(args):
    cfg, input_dim = _config(args.config)
    train, val = _load_train_val(args.data, args.val)
    _check_input_dim(input_dim, train)
    if val.dim != train.dim:
        raise ConfigError(f"validation data has {val.dim} features, training data {train.dim}")
    params = init_encoder(cfg, train.dim)
    params, report = train_loop(train, cfg, val, params)
    dataio.save_checkpoint(params, args.out_model, seed=cfg.seed, iteration=cfg.iterations)
    if args.out_metrics:
        write_metrics(args.out_metrics, report, cfg.ks)
    if report.iterations:
        last = report.validation.get(report.iterations[-1])
        summary = f"final loss {report.losses[-1]:.6f}"
        if last:
            summary += f", val r@1 {last['r@1']:.4f}"
        print(summary)
    print(f"saved {args.out_model}")
    return 0


def cmd_eval(args):
    params, _ = dataio.load_checkpoint(args.model)
    data = dataio.load_dataset(args.data)
    if data.dim != params.input_dim:
        raise RanklossError(f"dimension mismatch: model expects {params.input_dim} features, data has {data.dim}")
    ks = args.k
    metrics = evaluate(embed(params, data.features), data.labels, ks)
    wanted = args.metrics
    lines = []
    if "r@k" in wanted:
        lines += [(f"r@{k}", metrics[f"r@{k}"]) for k in ks]
    if "recall@k" in wanted:
        lines += [(f"recall@{k}", metrics[f"recall@{k}"]) for k in ks]
    if "mAP" in wanted:
        lines.append(("mAP", metrics["mAP"]))
    for name, value in lines:
        print(f"{name} {value:.4f}")
    if args.out_csv:
        with open(args.out_csv, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["metric", "value"])
            w.writerows([name, f"{value:.6f}"] for name, value in lines)
    return 0


def cmd_gradcheck(args):
    report = gradcheck.check(dim=args.dim, batch=args.batch, tau1=args.tau1, tau2=args.tau2,
                             eps=args.eps, seed=args.seed, simix=args.simix, arch=args.encoder)
    status = "PASS" if report.passed else "FAIL"
    print(f"{status} max relative error {report.max_rel_error:.3e} "
          f"(threshold {report.threshold:.0e}, {report.num_params} parameters, loss {report.loss:.6f})")
    return 0 if report.passed else 1


def _parse_sweep_values(param, text):
    try:
        if param == "k_set":
            return [tuple(int(k) for k in group.split(",")) for group in text.split(";") if group.strip()]
        if param == "batch_size":
            return [int(v) for v in text.split(",")]
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise ConfigError(f"cannot parse sweep values {text!r} for {param}") from None


def run_sweep(base_cfg, param, values, seeds, train, val, ks=EVAL_KS):
    """Train once per (value, seed); returns a list of row dicts, raw then medians."""
    if param not in SWEEP_PARAMS:
        raise ConfigError(f"unknown sweep parameter {param!r}; choose from {', '.join(SWEEP_PARAMS)}")
    rows = []
    for value in values:
        per_seed = []
        for seed in seeds:
            settings = config_values(base_cfg)
            settings.update({param: value, "seed": seed, "eval_every": 0})
            cfg, _ = build_config(settings)
            params, _ = train_loop(train, cfg)
            m = evaluate(embed(params, val.features), val.labels, ks)
            row = {"param": param, "value": _fmt_value(value), "seed": seed, **{f"val_{k}": v for k, v in m.items()}}
            rows.append(row)
            per_seed.append(row)
        median = {"param": param, "value": _fmt_value(value), "seed": "median"}
        for key in per_seed[0]:
            if key.startswith("val_"):
                median[key] = statistics.median(r[key] for r in per_seed)
        rows.append(median)
    return rows


def _fmt_value(value):
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return str(value)


def cmd_sweep(args):
    cfg, input_dim = _config(args.config)
    values = _parse_sweep_values(args.param, args.values)
    train, val = _load_train_val(args.data, args.val)
    _check_input_dim(input_dim, train)
    rows = run_sweep(cfg, args.param, values, args.seeds, train, val)
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.DictWriter(out, fieldnames=list(rows[0]))
        w.writeheader()
        for row in rows:
            w.writerow({k: (f"{v:.6f}" if isinstance(v, float) else v) for k, v in row.items()})
    finally:
        if args.out:
            out.close()
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="rankloss-kit", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a synthetic clustered dataset")
    g.add_argument("--classes", type=int, required=True)
    g.add_argument("--per-class", type=int, required=True)
    g.add_argument("--dim", type=int, required=True)
    g.add_argument("--noise", type=float, default=0.1)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    t = sub.add_parser("train", help="train an encoder with RS@k (or the contrastive baseline)")
    t.add_argument("--config", required=True, help="config file, or 'quickstart' for the bundled one")
    t.add_argument("--data", required=True)
    t.add_argument("--val", help="validation dataset; default: split --data by classes")
    t.add_argument("--out-model", required=True)
    t.add_argument("--out-metrics")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="retrieval metrics of a trained model")
    e.add_argument("--model", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--k", type=_ints, default=list(EVAL_KS))
    e.add_argument("--metrics", type=lambda s: s.split(","), default=["r@k", "recall@k", "mAP"])
    e.add_argument("--out-csv")
    e.set_defaults(func=cmd_eval)

    c = sub.add_parser("gradcheck", help="compare analytic and finite-difference gradients")
    c.add_argument("--dim", type=int, default=8)
    c.add_argument("--batch", type=int, default=32)
    c.add_argument("--tau1", type=float, default=1.0)
    c.add_argument("--tau2", type=float, default=0.1)
    c.add_argument("--eps", type=float, default=1e-5)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--simix", type=_bool, default=False)
    c.add_argument("--encoder", default="linear")
    c.set_defaults(func=cmd_gradcheck)

    s = sub.add_parser("sweep", help="final metrics across a swept hyperparameter and seeds")
    s.add_argument("--config", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--val")
    s.add_argument("--param", required=True)
    s.add_argument("--values", required=True, help="comma list; k_set groups separated by ';'")
    s.add_argument("--seeds", type=_ints, default=[0, 1, 2])
    s.add_argument("--out")
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (RanklossError, OSError, FloatingPointError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
