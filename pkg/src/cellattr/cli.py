"""Command line: gen / train / eval / sweep / describe.

Settings come from an optional ``--config`` file of ``key = value`` lines
(``#`` starts a comment); explicit flags win over the file.  Every random
choice derives from ``--seed``.
"""
from __future__ import annotations

import argparse
import ast
import dataclasses
import sys
from pathlib import Path

from . import attrlearn
from .dataset import DatasetError, load_dataset, make_folds, save_dataset
from .describe import describe
from .experiments import ATTRIBUTE_METHODS, METHODS, ExperimentConfig, check_report, run_eval, sweep_code_length
from .synth import SynthConfig, generate

TRAINERS = {
    "arcad": (attrlearn.train_arcad, attrlearn.REAL),
    "crad": (attrlearn.train_crad, attrlearn.REAL),
    "arcad-binarized": (attrlearn.train_arcad, attrlearn.BINARIZED),
}


class UsageError(Exception):
    pass


def read_config(path) -> dict:
    """Parse ``key = value`` lines; values are Python literals or bare strings."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        key, raw = (s.strip() for s in line.split("=", 1))
        try:
            value = ast.literal_eval(raw)
        except (ValueError, SyntaxError):
            value = raw
        out[key.replace("-", "_")] = value
    return out


def _build(cls, settings: dict, **overrides):
    names = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(settings) - set(names))
    if unknown:
        raise UsageError(f"unknown {cls.__name__} key(s): {', '.join(unknown)}")
    kwargs = dict(settings)
    kwargs.update({k: v for k, v in overrides.items() if v is not None})
    if "describe_regions" in kwargs:
        kwargs["describe_regions"] = tuple(kwargs["describe_regions"])
    return cls(**kwargs)


def _split(settings: dict, cls) -> tuple[dict, dict]:
    names = {f.name for f in dataclasses.fields(cls)}
    return ({k: v for k, v in settings.items() if k in names},
            {k: v for k, v in settings.items() if k not in names})


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _method_list(text: str) -> list[str]:
    methods = [t.strip() for t in text.split(",") if t.strip()]
    bad = [m for m in methods if m not in METHODS]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown method(s) {', '.join(bad)}")
    return methods


def _on_off(text: str) -> bool:
    if text not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected on or off")
    return text == "on"


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cellattr", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--config", help="key = value settings file")

    g = sub.add_parser("gen", help="write a synthetic dataset")
    common(g)
    g.add_argument("--out", required=True)

    t = sub.add_parser("train", help="train an attribute model on a whole dataset")
    common(t)
    t.add_argument("--dataset", required=True)
    t.add_argument("--method", choices=ATTRIBUTE_METHODS, default="arcad")
    t.add_argument("--bits", type=int, default=48)
    t.add_argument("--out", required=True)

    for name, helptext in (("eval", "cross-validate one method"),
                           ("sweep", "cross-validate methods over code lengths")):
        e = sub.add_parser(name, help=helptext)
        common(e)
        e.add_argument("--dataset", required=True)
        if name == "eval":
            e.add_argument("--method", choices=METHODS, required=True)
            e.add_argument("--bits", type=int, default=48)
        else:
            e.add_argument("--method", type=_method_list, default=list(METHODS),
                           help="comma-separated methods (default: all)")
            e.add_argument("--bits", type=_int_list, default=[6, 12, 24, 48, 96],
                           help="comma-separated code lengths")
        e.add_argument("--folds", type=int, default=5)
        e.add_argument("--subset", type=int, help="specimens per fold (default: half the pool)")
        e.add_argument("--out", default="results")
        e.add_argument("--timing", type=_on_off, default=None,
                       help="on|off; off writes zero times for byte-stable reports")

    d = sub.add_parser("describe", help="rank attributes per class with exemplar cells")
    common(d)
    d.add_argument("--model", required=True)
    d.add_argument("--dataset", required=True)
    d.add_argument("--top-m", type=int)
    d.add_argument("--exclusion-threshold", type=int)
    d.add_argument("--regions", type=_int_list, help="0-based region indices")
    d.add_argument("--out", default="describe")
    return p


def _experiment_config(args, settings: dict) -> ExperimentConfig:
    return _build(ExperimentConfig, settings, timing=getattr(args, "timing", None))


def cmd_gen(args, settings) -> None:
    cfg = _build(SynthConfig, settings, seed=args.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_dataset(generate(cfg), out)
    print(f"wrote {out}")


def cmd_train(args, settings) -> None:
    cfg = _experiment_config(args, settings)
    data = load_dataset(args.dataset)
    trainer, mode = TRAINERS[args.method]
    model = trainer(data, cfg.attr_config(args.bits, args.seed, mode), cfg.lift)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    attrlearn.save_model(model, out)
    print(f"wrote {out}")


def _plan(args, data):
    subset = args.subset if args.subset is not None else max(2, len(data) // 2)
    return make_folds(data, args.folds, subset, seed=args.seed)


def cmd_eval(args, settings) -> None:
    cfg = _experiment_config(args, settings)
    data = load_dataset(args.dataset)
    report = run_eval(data, _plan(args, data), args.method, args.bits, cfg, seed=args.seed)
    check_report(report)
    report.write(args.out)
    print(report.summary(), end="")


def cmd_sweep(args, settings) -> None:
    cfg = _experiment_config(args, settings)
    data = load_dataset(args.dataset)
    report = sweep_code_length(data, _plan(args, data), args.method, args.bits, cfg,
                               seed=args.seed)
    check_report(report)
    report.write(args.out)
    print(report.summary(), end="")


def cmd_describe(args, settings) -> None:
    cfg = _build(ExperimentConfig, settings)
    model = attrlearn.load_model(args.model)
    data = load_dataset(args.dataset)
    report = describe(model, data,
                      top_m=args.top_m if args.top_m is not None else cfg.top_m,
                      exclusion_threshold=(args.exclusion_threshold
                                           if args.exclusion_threshold is not None
                                           else cfg.exclusion_threshold),
                      regions=args.regions if args.regions is not None else cfg.describe_regions)
    report.write(args.out)
    print(report.to_text(), end="")


COMMANDS = {"gen": cmd_gen, "train": cmd_train, "eval": cmd_eval, "sweep": cmd_sweep,
            "describe": cmd_describe}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        settings = read_config(args.config) if args.config else {}
        # one file may carry both generator and experiment keys
        synth, rest = _split(settings, SynthConfig)
        experiment, unknown = _split(rest, ExperimentConfig)
        if unknown:
            raise UsageError(f"unknown config key(s): {', '.join(sorted(unknown))}")
        settings = synth if args.command == "gen" else experiment
        COMMANDS[args.command](args, settings)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"cellattr: error: {exc}", file=sys.stderr)
        return 2
    except (DatasetError, ValueError, OSError, KeyError) as exc:
        print(f"cellattr: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
