"""Command-line front end: ``shearlf <command> [options]``.

Configuration file format (``--config FILE``): one ``key = value`` per line,
``#`` starts a comment.  Recognised keys mirror :class:`RunConfig`::

    method = st            # st | drst
    tau = 16
    gamma = 127
    d_min = -2.2
    d_max = 1.4
    checkpoint = runs/epoch_010.drst
    input = data/sslf
    output = out/dslf
    seed = 0
    jobs = 4
    margin = 32
    st_iterations = 100
    st_alpha = 20
    st_schedule = linear
    st_lambda_min = 0

Flags given on the command line override values from the file.

Exit codes: 0 success, 2 configuration or requirement violation, 3 data
error, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
from pathlib import Path
import sys

import numpy as np

from .errors import ConsistencyError, DataError, InvalidArgument, NumericalError
from .lightfield import DisparityConfig, load_lightfield, save_lightfield
from .nn import ChannelPlan, load_checkpoint
from .pipeline import (
    RunConfig,
    bench,
    centered_box,
    dump_filters,
    evaluate_against_gt,
    prep_eval_data,
    reconstruct_dslf,
)
from .shearlet import build_system
from .solver import SolverConfig

log = logging.getLogger("shearlf")

_INT_KEYS = {"tau", "gamma", "seed", "jobs", "margin", "st_iterations"}
_FLOAT_KEYS = {"d_min", "d_max", "st_alpha", "st_lambda_min"}
_STR_KEYS = {"method", "checkpoint", "input", "output", "st_schedule"}


def read_config(path) -> dict:
    out = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read config {path}: {exc}") from exc
    for no, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidArgument(f"{path}:{no}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        try:
            if key in _INT_KEYS:
                out[key] = int(value)
            elif key in _FLOAT_KEYS:
                out[key] = float(value)
            elif key in _STR_KEYS:
                out[key] = value
            else:
                raise InvalidArgument(f"{path}:{no}: unknown key {key!r}")
        except ValueError as exc:
            raise InvalidArgument(f"{path}:{no}: bad value for {key}: {value!r}") from exc
    return out


def _settings(args) -> dict:
    """Config-file values overlaid with explicitly given flags."""
    config = getattr(args, "config", None)
    values = read_config(config) if config else {}
    for key in _INT_KEYS | _FLOAT_KEYS | _STR_KEYS:
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    return values


def run_config(values: dict, dump_dir=None) -> RunConfig:
    solver = SolverConfig(
        iterations=values.get("st_iterations", 100),
        alpha=values.get("st_alpha", 20.0),
        schedule=values.get("st_schedule", "linear"),
        lambda_min=values.get("st_lambda_min", 0.0),
    )
    disparity = None
    if "d_min" in values or "d_max" in values:
        if "d_min" not in values or "d_max" not in values:
            raise InvalidArgument("both d_min and d_max are needed")
        disparity = DisparityConfig(values["d_min"], values["d_max"])
    return RunConfig(
        method=values.get("method", "st"),
        tau=values.get("tau", 16),
        gamma=values.get("gamma", 127),
        disparity=disparity,
        solver=solver,
        checkpoint=values.get("checkpoint"),
        input=values.get("input"),
        output=values.get("output"),
        seed=values.get("seed", 0),
        jobs=values.get("jobs", 1),
        margin=values.get("margin", 32),
        dump_dir=dump_dir,
    )


def _require(values: dict, *keys):
    missing = [k for k in keys if not values.get(k)]
    if missing:
        raise InvalidArgument("missing required setting(s): " + ", ".join(missing))


def _parse_size(text: str) -> tuple[int, int]:
    try:
        w, h = (int(v) for v in text.lower().split("x"))
    except ValueError as exc:
        raise InvalidArgument(f"size must look like 1280x720, got {text!r}") from exc
    return w, h


def _parse_plan(text: str) -> ChannelPlan:
    try:
        widths = tuple(int(v) for v in text.split(","))
    except ValueError as exc:
        raise InvalidArgument(f"plan must be four comma-separated widths, got {text!r}") from exc
    return ChannelPlan(widths)


# --------------------------------------------------------------------------
# commands


def cmd_prep_data(args, values):
    _require(values, "input", "output")
    lf = load_lightfield(values["input"])
    if args.box:
        box = tuple(int(v) for v in args.box.split(","))
        if len(box) != 4:
            raise InvalidArgument("--box needs left,top,width,height")
    else:
        aw, ah = (int(v) for v in args.aspect.split(":"))
        box = centered_box(lf.width, lf.height, (aw, ah))
    out = prep_eval_data(lf, box, _parse_size(args.size))
    save_lightfield(out, values["output"])
    print(f"wrote {out.n} views of {out.width}x{out.height} to {values['output']}")


def cmd_prep_train(args, values):
    from .trainer import prepare_training_set

    _require(values, "output")
    if not args.sslf:
        raise InvalidArgument("give at least one --sslf DIR:D_MIN:D_MAX")
    sslfs, names = [], []
    for spec in args.sslf:
        try:
            path, dmin, dmax = spec.rsplit(":", 2)
            d = DisparityConfig(float(dmin), float(dmax))
        except ValueError as exc:
            raise InvalidArgument(f"--sslf expects DIR:D_MIN:D_MAX, got {spec!r}") from exc
        sslfs.append((load_lightfield(path), d))
        names.append(Path(path).name)
    store = prepare_training_set(sslfs, values.get("tau", 16), values["output"], names)
    print(f"wrote {len(store)} records to {values['output']}")


def cmd_train(args, values):
    from .trainer import EpiStore, TrainConfig, train

    _require(values, "input", "output")
    store = EpiStore(values["input"])
    out = Path(values["output"])
    cfg = TrainConfig(
        epochs=args.epochs,
        epoch_length=args.epoch_length,
        plan=_parse_plan(args.plan),
        seed=values.get("seed", 0),
        checkpoint_dir=str(out),
        log_path=str(out / "train_log.csv"),
    )
    out.mkdir(parents=True, exist_ok=True)
    sys_ = build_system(store.records[0].height, 384, 4, values.get("gamma", 127))
    _, ckpts, losses = train(store, sys_, cfg)
    print(f"{len(losses)} steps, final loss {losses[-1]:.6g}; last checkpoint {ckpts[-1]}")


def cmd_reconstruct(args, values):
    _require(values, "input", "output")
    dump = getattr(args, "dump_intermediates", None)
    cfg = run_config(values, dump)
    if cfg.disparity is None:
        raise InvalidArgument("reconstruction needs d_min and d_max")
    params = None
    if cfg.method == "drst":
        _require(values, "checkpoint")
        params, _ = load_checkpoint(cfg.checkpoint)
    sslf = load_lightfield(cfg.input)
    if dump:
        probe = build_system(128, 128, cfg.xi, cfg.gamma)
        dump_filters(probe, Path(dump) / "filters")
    dslf = reconstruct_dslf(sslf, cfg, params)
    if not np.all(np.isfinite(dslf.views)):
        raise NumericalError("reconstruction produced non-finite values")
    save_lightfield(dslf, cfg.output)
    print(f"wrote {dslf.n} views to {cfg.output}")


def cmd_evaluate(args, values):
    gt = load_lightfield(args.gt)
    dslf = load_lightfield(args.dslf)
    scores = evaluate_against_gt(dslf, gt, args.delta, values.get("tau", 16))
    if not scores:
        raise InvalidArgument("no synthesized views to evaluate")
    rows = sorted(scores.items())
    out = open(args.csv, "w", newline="") if args.csv else sys.stdout
    try:
        w = csv.writer(out)
        w.writerow(["view_index", "psnr"])
        for i, v in rows:
            w.writerow([i, f"{v:.4f}"])
    finally:
        if args.csv:
            out.close()
    vals = [v for _, v in rows]
    print(f"min {min(vals):.4f} avg {float(np.mean(vals)):.4f}")


def cmd_bench(args, values):
    cfg = run_config(values)
    report = bench(args.width, args.n, cfg, _parse_plan(args.plan), repeats=args.repeats, rng=cfg.seed)
    ref = report["reference"]
    print(
        f"{report['geometry']}: ST {report['st_ms']:.1f} ms, DRST {report['drst_ms']:.1f} ms, "
        f"speedup {report['speedup']:.2f}x"
    )
    print(
        f"reference {ref['geometry']}: ST {ref['st_ms']} ms, DRST {ref['drst_ms']} ms, "
        f"speedup {ref['speedup']}x"
    )
    if args.json:
        Path(args.json).write_text(json.dumps(report, indent=2, default=str))


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    # SUPPRESS keeps a flag given before the command from being reset by
    # the sub-parser's copy of the same option
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", help="key = value configuration file")
    common.add_argument("--seed", type=int)
    common.add_argument("--jobs", type=int)
    common.add_argument("--dump-intermediates", metavar="DIR", help="write debug PNGs here")
    common.add_argument("--input")
    common.add_argument("--output")
    common.add_argument("--tau", type=int)
    common.add_argument("--gamma", type=int)
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="shearlf", description=__doc__.split("\n")[0], parents=[common])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("prep-data", parents=[common], help="crop and resize evaluation views")
    s.add_argument("--aspect", default="16:9")
    s.add_argument("--box", help="explicit crop box left,top,width,height")
    s.add_argument("--size", default="1280x720")
    s.set_defaults(func=cmd_prep_data)

    s = sub.add_parser("prep-train", parents=[common], help="build a training EPI store")
    s.add_argument("--sslf", action="append", metavar="DIR:D_MIN:D_MAX")
    s.set_defaults(func=cmd_prep_train)

    s = sub.add_parser("train", parents=[common], help="train the residual network")
    s.add_argument("--epochs", type=int, default=10)
    s.add_argument("--epoch-length", type=int)
    s.add_argument("--plan", default="64,128,256,512")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("reconstruct", parents=[common], help="SSLF -> DSLF")
    s.add_argument("--method", choices=["st", "drst"])
    s.add_argument("--checkpoint")
    s.add_argument("--d-min", dest="d_min", type=float)
    s.add_argument("--d-max", dest="d_max", type=float)
    s.add_argument("--margin", type=int)
    s.add_argument("--st-iterations", dest="st_iterations", type=int)
    s.add_argument("--st-alpha", dest="st_alpha", type=float)
    s.add_argument("--st-schedule", dest="st_schedule", choices=["linear", "exponential"])
    s.add_argument("--st-lambda-min", dest="st_lambda_min", type=float)
    s.set_defaults(func=cmd_reconstruct)

    s = sub.add_parser("evaluate", parents=[common], help="per-view PSNR against ground truth")
    s.add_argument("--gt", required=True)
    s.add_argument("--dslf", required=True)
    s.add_argument("--delta", type=int, required=True)
    s.add_argument("--csv", help="write the per-view table here instead of stdout")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("bench", parents=[common], help="time ST against DRST")
    s.add_argument("--width", type=int, default=1280)
    s.add_argument("--n", type=int, default=13)
    s.add_argument("--repeats", type=int, default=3)
    s.add_argument("--plan", default="64,128,256,512")
    s.add_argument("--json")
    s.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    verbose = getattr(args, "verbose", False)
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING)
    try:
        values = _settings(args)
        args.func(args, values)
    except IndexError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (InvalidArgument, ConsistencyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except (NumericalError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
