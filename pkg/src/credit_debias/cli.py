"""Command-line entry point: ``credit-debias <subcommand> ...``.

Every failure exits nonzero with a one-line JSON object on stderr.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .dataset import Schema, load_csv
from .errors import ConfigParse, CreditDebiasError
from .experiment import THREADS_ENV, ExperimentConfig, default_threads, render_report, run_experiment
from .learner import GbdtParams, TrainedModel
from .nsmo import prepare_nsmo
from .pipeline import DecisionPolicy, ModelMode, paired_test, train_mode
from .scm import ScmSpec, discretize, sample
from .screening import Group, ScreeningReport, overlap_test, screen_proxies

EXIT_ERROR = 2


class _PathError(CreditDebiasError):
    code = "FileNotFound"


def _existing(*paths) -> None:
    for p in paths:
        if p is not None and not Path(p).is_file():
            raise _PathError(f"no such file: {p}", path=str(p))


def _read_json(path):
    _existing(path)
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigParse(f"{path}: {exc}") from exc


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _policy(args) -> DecisionPolicy:
    policy = DecisionPolicy.from_dict(_read_json(args.policy)) if args.policy else DecisionPolicy()
    if getattr(args, "threshold", None) is not None:
        policy = replace(policy, threshold=args.threshold)
    return policy


# -- subcommands ------------------------------------------------------------

def cmd_simulate(args) -> None:
    spec = ScmSpec.load(args.spec) if args.spec else ScmSpec()
    model = discretize(spec, args.w_bins) if args.discrete else spec
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    smp = sample(model, args.n, args.seed)
    smp.data.to_csv(out / "data.csv")
    smp.data.schema.save(out / "schema.json")
    smp.hidden.to_csv(out / "hidden.csv")
    print(f"wrote {smp.data.n_rows} rows to {out}")


def cmd_nsmo_prepare(args) -> None:
    _existing(args.input)
    data = prepare_nsmo(args.input)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    data.to_csv(out / "prepared.csv")
    data.schema.save(out / "schema.json")
    print(f"wrote {data.n_rows} rows, {len(data.schema.names)} columns to {out}")


def cmd_screen(args) -> None:
    _existing(args.data, args.schema)
    data = load_csv(args.data, Schema.load(args.schema))
    group = Group.parse(args.group)
    report = screen_proxies(data, group, args.threshold)
    positivity = overlap_test(data, group.column, args.floor)
    out = Path(args.out)
    _write(out / "screening.json", report.to_json() + "\n")
    _write(out / "positivity.json", positivity.to_json() + "\n")
    print(report.table())
    print(positivity.table())


def cmd_train(args) -> None:
    _existing(args.data, args.schema, args.params, args.screening, args.policy)
    params = GbdtParams.from_dict(_read_json(args.params)) if args.params else GbdtParams()
    if args.seed is not None:
        params = replace(params, seed=args.seed)
    screening = ScreeningReport.from_dict(_read_json(args.screening)) if args.screening else None
    data = load_csv(args.data, Schema.load(args.schema))
    model = train_mode(data, ModelMode(args.mode), params, screening, _policy(args))
    _write(Path(args.out), model.to_json() + "\n")
    print(f"trained {args.mode} model on {len(model.features)} features: "
          f"{', '.join(model.features)}")


def cmd_audit(args) -> None:
    _existing(args.model, args.data, args.schema, args.policy)
    model = TrainedModel.from_json(Path(args.model).read_text(encoding="utf-8"))
    data = load_csv(args.data, Schema.load(args.schema))
    mode = ModelMode(model.metadata.get("mode", "awareness"))
    result = paired_test(model, mode, _policy(args), data)
    _write(Path(args.out), result.to_json() + "\n")
    print(json.dumps(result.summary(), indent=2))


def cmd_experiment(args) -> None:
    _existing(args.config)
    cfg = ExperimentConfig.load(args.config)
    threads = args.threads if args.threads is not None else default_threads()
    cfg = replace(cfg, threads=threads)
    result = run_experiment(cfg)
    out = Path(args.out)
    _write(out / "experiment.json", result.to_json())
    report = result.report()
    _write(out / "report.txt", report)
    print(report, end="")


def cmd_report(args) -> None:
    obj = _read_json(args.result)
    text = render_report(obj)
    if args.out:
        _write(Path(args.out), text)
    print(text, end="")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="credit-debias",
                                description="Causal debiasing for credit scoring models.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="sample synthetic data from a structural causal model")
    s.add_argument("--spec", help="SCM spec JSON (default: built-in spec)")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--discrete", action="store_true", help="sample the discretized twin")
    s.add_argument("--w-bins", type=int, default=8)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("nsmo-prepare", help="derive race and default from an NSMO public file")
    s.add_argument("--input", required=True)
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_nsmo_prepare)

    s = sub.add_parser("screen", help="proxy screening and positivity check")
    s.add_argument("--data", required=True)
    s.add_argument("--schema", required=True)
    s.add_argument("--group", required=True, help="column=level, e.g. race=Black")
    s.add_argument("--threshold", type=float, default=0.05)
    s.add_argument("--floor", type=int, default=30)
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_screen)

    s = sub.add_parser("train", help="train one model mode")
    s.add_argument("--data", required=True)
    s.add_argument("--schema", required=True)
    s.add_argument("--mode", required=True, choices=[m.value for m in ModelMode])
    s.add_argument("--params", help="GBDT parameter JSON")
    s.add_argument("--screening", help="screening.json (required for unawareness)")
    s.add_argument("--policy", help="policy JSON with threshold and a_prime")
    s.add_argument("--seed", type=int, help="overrides the params seed")
    s.add_argument("--out", required=True, help="model JSON path")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("audit", help="paired test: actual vs reference protected values")
    s.add_argument("--model", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--schema", required=True)
    s.add_argument("--policy", help="policy JSON with threshold and a_prime")
    s.add_argument("--threshold", type=float)
    s.add_argument("--out", required=True, help="paired test JSON path")
    s.set_defaults(func=cmd_audit)

    s = sub.add_parser("experiment", help="multi-seed comparison of the three modes")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--threads", type=int,
                   help=f"worker processes across seeds (default ${THREADS_ENV} or 1)")
    s.set_defaults(func=cmd_experiment)

    s = sub.add_parser("report", help="render experiment.json as a text table")
    s.add_argument("--result", required=True)
    s.add_argument("--out", help="also write the table here")
    s.set_defaults(func=cmd_report)
    return p


def _fail(code: str, message: str, **details) -> int:
    print(json.dumps({"error": code, "message": message, **details}, sort_keys=True),
          file=sys.stderr)
    return EXIT_ERROR


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except CreditDebiasError as exc:
        details = {k: v for k, v in exc.details.items() if isinstance(v, (str, int, float))}
        return _fail(exc.code, str(exc), **details)
    except (KeyError, TypeError, ValueError) as exc:
        return _fail("ConfigParse", str(exc))
    except OSError as exc:
        return _fail("IOError", str(exc))
    return 0


if __name__ == "__main__":
    sys.exit(main())
