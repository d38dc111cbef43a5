"""Command-line entry point: profile, check, train, infer, ablate.

Exit codes: 0 success, 1 check failure or training divergence, 2 usage,
config or file-format error. Diagnostics go to stderr, data to files or
stdout.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import weights
from .backbone import Potter
from .config import ConfigError, get_preset, load_config
from .harness import (ABLATIONS, Adam, TrainingDiverged, generate_synth, run_ablation,
                      run_gradcheck_suite, run_invariant_suite, train_toy)
from .mixers import MIXERS, PatBlock, make_mixer
from .profiler import MODES, attach_closed_form, profile


class UsageError(Exception):
    pass


def _log(msg):
    print(msg, file=sys.stderr)


def _resolve_config(args):
    if args.config and args.preset:
        raise UsageError("give either --config or --preset, not both")
    cfg = load_config(args.config) if args.config else get_preset(args.preset or "micro")
    if getattr(args, "mixer", None) and not getattr(args, "dim", None):
        cfg = cfg.with_(mixer=args.mixer)
    if getattr(args, "input_hw", None):
        h, w = _parse_hw(args.input_hw)
        cfg = cfg.with_(input_h=h, input_w=w)
    _log(f"config hash: {cfg.hash()}")
    return cfg


def _parse_hw(text):
    try:
        h, w = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise UsageError(f"--input must look like HxW, got {text!r}") from None
    return h, w


def _write(path, data, binary=False):
    try:
        Path(path).write_bytes(data) if binary else Path(path).write_text(data)
    except OSError as exc:
        raise UsageError(f"cannot write {path}: {exc}") from exc


# -- profile --------------------------------------------------------------------

def cmd_profile(args):
    if args.dim is not None or args.patches is not None:
        if args.dim is None or args.patches is None:
            raise UsageError("-D and -N must be given together")
        mixer = args.mixer or "poolattn"
        module = PatBlock(args.dim, mixer) if args.unit == "block" else make_mixer(mixer, args.dim)
        n = args.patches
        shape = (args.batch, args.dim, 1, n) if args.batch > 1 else (args.dim, 1, n)
        rep = profile(module, shape, args.mode, name=f"{args.unit}:{mixer}")
        kind = "pat" if (args.unit == "block" and mixer == "poolattn") else mixer
        if args.unit == "mixer" or kind == "pat":
            attach_closed_form(rep, kind, args.dim, n)
        _log(f"config hash: {mixer}-{args.unit}-D{args.dim}-N{n}")
    else:
        cfg = _resolve_config(args)
        model = Potter(cfg, init=False)
        shape = (3, cfg.input_h, cfg.input_w)
        if args.batch > 1:
            shape = (args.batch,) + shape
        rep = profile(model, shape, args.mode, name="potter")
    text = rep.to_text()
    if args.out:
        _write(f"{args.out}.json", rep.to_json() + "\n")
        _write(f"{args.out}.txt", text + "\n")
    print(rep.to_json() if args.json else text)
    return 0


# -- check ------------------------------------------------------------------------

def cmd_check(args):
    _log(f"config hash: {get_preset('micro').hash()}")
    reports = []
    seeds = range(args.seed, args.seed + args.seeds)
    if args.suite in ("grad", "all"):
        reports.append(run_gradcheck_suite(args.tol, seeds))
    if args.suite in ("invariants", "all"):
        reports.append(run_invariant_suite(args.seed))
    ok = all(r.passed for r in reports)
    for r in reports:
        for res in r.results:
            if not res.passed:
                _log(f"FAIL {r.suite}:{res.name} seed={res.seed} error={res.error:.3e} {res.detail}")
    payload = {"passed": ok, "suites": [r.to_dict() for r in reports]}
    text = json.dumps(payload, indent=2)
    if args.out:
        _write(args.out, text + "\n")
    else:
        print(text)
    _log("all checks passed" if ok else "checks FAILED")
    return 0 if ok else 1


# -- train ------------------------------------------------------------------------

def _state_path(out):
    return f"{out}.state"


def cmd_train(args):
    cfg = _resolve_config(args)
    if cfg.head_kind != "classify" or cfg.classes > 4:
        raise UsageError("training needs a classify head with at most 4 classes")
    data = generate_synth(args.data_seed if args.data_seed is not None else args.seed,
                          args.n, cfg.classes, cfg.input_h, cfg.input_w)
    model = Potter(cfg, seed=args.seed)
    opt = Adam(list(model.named_parameters()), lr=args.lr)
    start = 0
    log_path = args.log or f"{args.out}.jsonl"
    if args.resume:
        try:
            model.load_state_dict(weights.load(args.out))
            state = weights.load(_state_path(args.out))
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot resume from {args.out}: {exc}") from exc
        opt.load_state_dict(state)
        start = int(state["train.epoch"][0])
        lines = Path(log_path).read_text().splitlines() if Path(log_path).exists() else []
        log_lines = lines[:start]
        _log(f"resuming at epoch {start}")
    else:
        log_lines = []

    def on_epoch(rec):
        log_lines.append(json.dumps({"epoch": rec.epoch, "loss": rec.loss, "accuracy": rec.accuracy,
                                     "lr": opt.lr}, sort_keys=True))
        _log(f"epoch {rec.epoch:3d}  loss {rec.loss:.6f}  acc {rec.accuracy:.4f}  ({rec.wall_time:.2f}s)")

    try:
        report, model, opt = train_toy(cfg, data, epochs=args.epochs, lr=args.lr, batch=args.batch,
                                       seed=args.seed, model=model, optimizer=opt,
                                       start_epoch=start, on_epoch=on_epoch, schedule=args.schedule)
    except TrainingDiverged as exc:
        _log(f"training diverged: {exc}")
        return 1
    _write(args.out, weights.dumps(model.state_dict()), binary=True)
    state = opt.state_dict()
    state["train.epoch"] = np.array([float(max(args.epochs, start))])
    _write(_state_path(args.out), weights.dumps(state), binary=True)
    _write(log_path, "".join(line + "\n" for line in log_lines))
    summary = args.summary or f"{args.out}.csv"
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["config_hash", "seed", "epochs", "final_loss", "final_accuracy", "params", "macs"])
    final = json.loads(log_lines[-1]) if log_lines else {"loss": "", "accuracy": ""}
    writer.writerow([cfg.hash(), args.seed, len(log_lines), final["loss"], final["accuracy"],
                     report.params, report.macs])
    _write(summary, buf.getvalue())
    for flag in report.flags:
        _log(f"note: {flag}")
    return 0


# -- infer ------------------------------------------------------------------------

def cmd_infer(args):
    cfg = _resolve_config(args)
    model = Potter(cfg, init=False)
    try:
        model.load_state_dict(weights.load(args.weights))
        x = weights.load_tensor(args.input)
    except weights.PotwFormatError as exc:
        raise UsageError(f"format error: {exc}") from exc
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    except OSError as exc:
        raise UsageError(f"cannot read input: {exc}") from exc
    want = (3, cfg.input_h, cfg.input_w)
    if x.shape != want and not (x.ndim == 4 and x.shape[1:] == want):
        raise UsageError(f"input tensor shape {x.shape} does not match {want} or [B, *{want}]")
    out = model(x)
    _write(args.out, weights.dumps({"output": out.data}), binary=True)
    _log(f"wrote output {out.shape} to {args.out}")
    return 0


# -- ablate -----------------------------------------------------------------------

def cmd_ablate(args):
    cfg = _resolve_config(args)
    rows = run_ablation(args.kind, cfg, epochs=args.epochs, n=args.n, lr=args.lr,
                        batch=args.batch, seed=args.seed)
    keys = ["variant", "params", "macs", "output_shape", "final_loss", "final_accuracy", "config_hash"]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(keys)
    for row in rows:
        writer.writerow(["x".join(map(str, row[k])) if k == "output_shape" else row.get(k, "")
                         for k in keys])
    if args.out:
        _write(args.out, buf.getvalue())
    print(buf.getvalue(), end="")
    return 0


# -- parser -----------------------------------------------------------------------

def _add_model_args(p):
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--preset", help="named preset (micro, micro_hr, cls_s12, potter_hmr)")


def build_parser():
    parser = argparse.ArgumentParser(prog="potter", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("profile", help="params / MACs report")
    _add_model_args(p)
    p.add_argument("--input", dest="input_hw", help="HxW override, e.g. 224x224")
    p.add_argument("--mode", choices=MODES, default="exact")
    p.add_argument("--mixer", choices=MIXERS)
    p.add_argument("-D", "--dim", type=int, help="profile a single mixer/block at this width")
    p.add_argument("-N", "--patches", type=int, help="patch count for -D")
    p.add_argument("--unit", choices=("mixer", "block"), default="mixer")
    p.add_argument("--batch", type=int, default=1)
    p.add_argument("--json", action="store_true", help="print JSON instead of the text table")
    p.add_argument("--out", help="write <out>.json and <out>.txt")
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("check", help="gradient and invariant suites")
    p.add_argument("--suite", choices=("grad", "invariants", "all"), default="all")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--seeds", type=int, default=10, help="number of gradcheck seeds")
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--out", help="write the JSON report here instead of stdout")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("train", help="toy training on synthetic shapes")
    _add_model_args(p)
    p.add_argument("--n", type=int, default=256, help="dataset size")
    p.add_argument("--data-seed", type=int)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch", type=int, default=16)
    p.add_argument("--schedule", choices=("constant", "cosine"), default="constant")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="POTW weight file")
    p.add_argument("--log", help="JSON-lines epoch log (default <out>.jsonl)")
    p.add_argument("--summary", help="CSV summary (default <out>.csv)")
    p.add_argument("--resume", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="forward pass on a POTW input tensor")
    _add_model_args(p)
    p.add_argument("--weights", required=True)
    p.add_argument("--input", required=True, help="POTW single-tensor file")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("ablate", help="Pooling vs PoolAttn, with vs without HR stream")
    p.add_argument("kind", choices=ABLATIONS)
    _add_model_args(p)
    p.add_argument("--epochs", type=int, default=0, help="toy training epochs per arm (0: complexity only)")
    p.add_argument("--n", type=int, default=256)
    p.add_argument("--lr", type=float, default=5e-3)
    p.add_argument("--batch", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="CSV output")
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        _log(f"error: {exc}")
        return 2


if __name__ == "__main__":
    sys.exit(main())
