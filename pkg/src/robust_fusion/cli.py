"""Command-line entry point: ``robust-fusion <subcommand>``.

Exit codes: 0 success, 1 usage or input error, 2 numerical failure,
3 verification failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from . import datagen, experiment, nn, perturb, verify
from .errors import FusionError

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_VERIFY = 0, 1, 2, 3

log = logging.getLogger("robust_fusion")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.replace(",", " ").split()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a list of numbers: {text!r}") from exc


def _config(args, parse_perturb: bool = True) -> experiment.ExperimentConfig:
    cfg = experiment.load_config(args.config) if args.config else experiment.ExperimentConfig()
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if getattr(args, "trials", None) is not None:
        changes["trials"] = args.trials
    if getattr(args, "gamma", None):
        changes["gammas"] = tuple(args.gamma)
    if parse_perturb and getattr(args, "perturb", None):
        changes["perturbations"] = tuple(perturb.PerturbSpec.parse(p) for p in args.perturb)
    if getattr(args, "quick", False):
        changes["trials"] = max(1, changes.get("trials", cfg.trials) // 10)
    if not changes:
        return cfg
    fields = {f: getattr(cfg, f) for f in cfg.__dataclass_fields__}
    fields.update(changes)
    return experiment.ExperimentConfig(**fields)


def cmd_gen_data(args) -> int:
    cfg = _config(args)
    overrides = {k: v for k, v in (("n", args.n), ("jitter", args.jitter)) if v is not None}
    spec = dataclasses.replace(cfg.data, **overrides)
    ds = experiment.make_dataset(spec, cfg.seed)
    train_set, test_set = ds.split(spec.train_fraction, cfg.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, part in (("dataset", ds), ("train", train_set), ("test", test_set)):
        datagen.save_dataset(part, out / f"{name}.txt")
    print(f"wrote {len(ds)} samples ({len(train_set)} train / {len(test_set)} test) to {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _config(args)
    if args.data:
        train_set = datagen.load_dataset(args.data)
    else:
        ds = experiment.make_dataset(cfg.data, cfg.seed)
        train_set, _ = ds.split(cfg.data.train_fraction, cfg.seed)
    pair = experiment.train_pair(train_set, cfg.hidden, cfg.train, cfg.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    nn.save(pair.model_a, out / "model_a.txt")
    nn.save(pair.model_b, out / "model_b.txt")
    (out / "freq.json").write_text(json.dumps({"freq": pair.freq.tolist()}, indent=2) + "\n")
    for name, model, x in (("a", pair.model_a, train_set.xa), ("b", pair.model_b, train_set.xb)):
        print(f"model_{name}: sizes {model.sizes}, train accuracy {nn.accuracy(model, x, train_set.y):.4f}")
    return EXIT_OK


def _print_rows(rows) -> None:
    print(f"{'method':<12} {'gamma':>6}  {'perturbation':<28} {'clean':>15} {'perturbed':>15}")
    for r in rows:
        print(
            f"{r['method']:<12} {r['gamma']:>6.3g}  {r['perturbation']:<28} "
            f"{r['clean_mean']:.4f}±{r['clean_std']:.4f} {r['perturbed_mean']:.4f}±{r['perturbed_std']:.4f}"
        )


def cmd_eval(args) -> int:
    cfg = _config(args)
    result = experiment.run_experiment(cfg)
    json_path, csv_path = experiment.write_results(result, args.out)
    _print_rows(result["rows"])
    print(f"wrote {json_path} and {csv_path}")
    return EXIT_OK


_SWEEP_DEFAULTS = {"bias": {"omega2": 1}, "pgd": {"omega5": 0.01}}


def _sweep_template(text: str) -> perturb.PerturbSpec:
    """Parse ``KIND[:params]``; the swept parameter may be omitted."""
    kind, _, rest = text.partition(":")
    key = experiment.MAGNITUDE_PARAM.get(kind.strip())
    if key is None:
        raise UsageError(f"cannot sweep perturbation kind {kind!r}")
    parsed = perturb.PerturbSpec.parse(f"{kind}:{rest}") if rest.strip() else None
    params = dict(parsed.params) if parsed else {}
    for name, value in {**_SWEEP_DEFAULTS.get(kind.strip(), {}), key: 0.0}.items():
        params.setdefault(name, value)
    return perturb.PerturbSpec(kind.strip(), params)


def cmd_sweep_gamma(args) -> int:
    cfg = _config(args, parse_perturb=False)
    if not args.perturb:
        raise UsageError("sweep-gamma needs --perturb KIND[:params] as the template")
    template = _sweep_template(args.perturb[-1])
    specs = experiment.sweep_specs(template, args.magnitudes)
    fields = {f: getattr(cfg, f) for f in cfg.__dataclass_fields__}
    fields["perturbations"] = tuple(specs)
    cfg = experiment.ExperimentConfig(**fields)
    result = experiment.run_experiment(cfg)
    experiment.write_results(result, args.out, stem="sweep_results")
    rows = experiment.sweep_rows(result, template.kind)
    path = experiment.write_sweep_csv(rows, Path(args.out) / "sweep.csv")
    for r in rows:
        print(
            f"{r['method']:<12} gamma={r['gamma']:<5g} {r['kind']}={r['magnitude']:<8g} "
            f"{r['accuracy_mean']:.4f}±{r['accuracy_std']:.4f}"
        )
    print(f"wrote {path}")
    return EXIT_OK


def cmd_verify(args) -> int:
    results = verify.run_all(quick=args.quick, seed=args.seed or 0, mutate=args.mutate)
    for r in results:
        print(f"[{'PASS' if r.passed else 'FAIL'}] {r.name}: {r.detail}")
    failed = [r.name for r in results if not r.passed]
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        report = [{"name": r.name, "passed": bool(r.passed), "detail": r.detail} for r in results]
        (out / "verify.json").write_text(json.dumps(report, indent=2) + "\n")
    if failed:
        print(f"{len(failed)} check(s) failed: {', '.join(failed)}")
        return EXIT_VERIFY
    print(f"all {len(results)} checks passed")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="robust-fusion", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, out_default):
        p.add_argument("--config", type=Path, help="INI-style experiment config")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", default=out_default, help="output directory")

    p = sub.add_parser("gen-data", help="write a synthetic dataset")
    common(p, "data")
    p.add_argument("--n", type=int)
    p.add_argument("--jitter", type=float)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train one network per modality")
    common(p, "models")
    p.add_argument("--data", type=Path, help="training set written by gen-data")
    p.set_defaults(func=cmd_train)

    for name, func, out, help_ in (
        ("eval", cmd_eval, "results", "evaluate fusion methods under perturbations"),
        ("sweep-gamma", cmd_sweep_gamma, "sweep", "accuracy versus perturbation magnitude per gamma"),
    ):
        p = sub.add_parser(name, help=help_)
        common(p, out)
        p.add_argument("--trials", type=int)
        p.add_argument("--gamma", type=_float_list, help="comma-separated gamma values")
        p.add_argument("--perturb", action="append", metavar="KIND:params",
                       help="e.g. gaussian:omega0=1.0 or pgd:omega4=0.1,omega5=0.01 (repeatable)")
        p.add_argument("--quick", action="store_true", help="tenfold fewer trials")
        if name == "sweep-gamma":
            p.add_argument("--magnitudes", type=_float_list, required=True)
        p.set_defaults(func=func)

    p = sub.add_parser("verify", help="run the numerical self-check suite")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--quick", action="store_true", help="tenfold fewer random trials")
    p.add_argument("--mutate", choices=verify.MUTATIONS, default="none",
                   help="inject a known defect to confirm the suite catches it")
    p.add_argument("--out", help="optional directory for verify.json")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except (ArithmeticError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (UsageError, experiment.ConfigError, FileNotFoundError, ValueError, FusionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
