"""Command-line front end.

    private-ate estimate  [--config FILE] [flags]   one private ATE report (JSON)
    private-ate coverage  [--config FILE] [flags]   Monte-Carlo coverage table (CSV or JSON)
    private-ate sweep     [--config FILE] [flags]   width/coverage over an epsilon or n grid
    private-ate utility   [--config FILE] [flags]   privacy/width utility over an epsilon grid
    private-ate generate  --out FILE.csv [flags]    synthetic CSV + truth sidecar + matching INI

Settings are resolved as built-in defaults, then the INI file, then flags. The
resolved settings are validated before any computation and hashed into a
digest that is recorded in every JSON output. Exit codes: 0 success, 1 bad
configuration, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import sys
from dataclasses import dataclass
from pathlib import Path

from . import __version__
from .core import DomainBounds, PrivacyBudget, RngStream, load_csv
from .errors import ConfigError, PrivateAteError, SchemaError
from .evaluation import (
    DATA,
    METHODS,
    ExperimentConfig,
    coverage_experiment,
    sweep,
    to_csv,
    to_json,
    utility_curve,
)
from .nuisance import KernelConfig, LearnerConfig, MlpConfig
from .privatize import estimate_private
from .sensitivity import OptimizerConfig
from .synthdata import PRESETS, export, gen_dataset

COMMANDS = ("estimate", "coverage", "sweep", "utility", "generate")


def _floats(s: str) -> list[float]:
    return [float(v) for v in s.split(",") if v.strip()]


def _strs(s: str) -> list[str]:
    return [v.strip() for v in s.split(",") if v.strip()]


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


# section -> key -> parser; [schema] is free-form (column = role)
KEYS = {
    "data": {"source": str, "path": str, "n": int},
    "learner": {"kind": str, "ridge_alpha": float, "rbf_gamma": float, "hidden": int, "l2": float,
                "learning_rate": float, "epochs": int, "batch_size": int, "clip": float,
                "logistic_l2": float},
    "budget": {"epsilon": float, "delta": float, "ate_fraction": float},
    "experiment": {"seed": int, "alpha": _floats, "runs": int, "methods": _strs, "axis": str,
                   "grid": _floats, "weights": _floats, "bootstrap_b": int, "threads": int,
                   "split": _bool},
    "optimizer": {"starts": int, "max_iter": int, "fd_rel_step": float, "vertex_limit": int},
    "bounds": {"x_lo": _floats, "x_hi": _floats, "y_lo": float, "y_hi": float},
}

BASE_DEFAULTS = {
    "data": {"source": "dataset1", "n": 3000},
    "learner": {"kind": "kernel", "ridge_alpha": 0.1, "hidden": 32, "l2": 0.1, "learning_rate": 0.01,
                "epochs": 200, "batch_size": 32, "clip": 0.05, "logistic_l2": 1.0},
    "budget": {"epsilon": 0.5, "delta": 1e-5, "ate_fraction": 0.9},
    "experiment": {"seed": 0, "bootstrap_b": 100, "threads": 1, "split": False, "axis": "epsilon",
                   "weights": [0.0, 0.25, 0.5, 0.75, 1.0]},
    "optimizer": {"starts": 10, "max_iter": 200, "fd_rel_step": 1e-5, "vertex_limit": 4096},
}

COMMAND_DEFAULTS = {
    "estimate": {"alpha": [0.05]},
    "generate": {"alpha": [0.05]},
    "coverage": {"alpha": [0.2, 0.1, 0.05], "runs": 200, "methods": ["standard", "naive", "privATE"]},
    "sweep": {"alpha": [0.05], "runs": 10, "methods": ["standard", "privATE"]},
    "utility": {"alpha": [0.05], "runs": 10, "methods": ["privATE", "naive", "bootstrap"]},
}

DEFAULT_GRIDS = {"epsilon": [0.1, 0.25, 0.5, 1.0, 2.0], "n": [500.0, 1000.0, 3000.0]}

# settings that do not change any output value and stay out of the digest
NOT_DIGESTED = {("experiment", "threads")}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="INI file with [data], [learner], [budget], ... sections")
    common.add_argument("--seed", type=int)
    common.add_argument("--eps", type=float, help="total epsilon")
    common.add_argument("--delta", type=float, help="total delta")
    common.add_argument("--ate-fraction", type=float, help="share of (eps, delta) spent on the ATE release")
    common.add_argument("--alpha", help="miscoverage level(s), comma separated")
    common.add_argument("--runs", type=int)
    common.add_argument("--learner", choices=("kernel", "nn"))
    common.add_argument("--dataset", help="dataset1, dataset2, rct, or a CSV path")
    common.add_argument("--n", type=int, help="sample size for generated data")
    common.add_argument("--split", action="store_true", default=None,
                        help="fit nuisances on one half, average scores on the other")
    common.add_argument("--methods", help=f"comma separated subset of {','.join(METHODS)}")
    common.add_argument("--axis", choices=("epsilon", "n"))
    common.add_argument("--grid", help="comma separated sweep grid")
    common.add_argument("--weights", help="comma separated utility weights in [0, 1]")
    common.add_argument("--threads", type=int, help="worker processes for coverage runs")
    common.add_argument("--out", type=Path, help="write the payload here instead of stdout")
    common.add_argument("--format", choices=("csv", "json"), help="table format (default: from --out suffix, else csv)")

    p = _Parser(prog="private-ate", description="Differentially private ATE estimation and evaluation.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "estimate": "release one private ATE with its confidence interval",
        "coverage": "Monte-Carlo coverage of standard, naive and private intervals",
        "sweep": "interval width and coverage across an epsilon or sample-size grid",
        "utility": "weighted privacy/width utility across an epsilon grid",
        "generate": "write a synthetic dataset as CSV with its truth record",
    }
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return p


# --------------------------------------------------------------------------- settings


@dataclass(frozen=True)
class Settings:
    command: str
    values: dict  # section -> key -> value
    schema: dict

    def get(self, section, key, default=None):
        return self.values.get(section, {}).get(key, default)

    def digest(self) -> str:
        doc = {"command": self.command, "schema": self.schema,
               "values": {s: {k: v for k, v in kv.items() if (s, k) not in NOT_DIGESTED}
                          for s, kv in self.values.items()}}
        blob = json.dumps(doc, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _read_ini(path: Path) -> tuple[dict, dict]:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except configparser.Error as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from None
    values, schema = {}, {}
    for section in cp.sections():
        if section == "schema":
            schema = {k: v.strip() for k, v in cp[section].items()}
            continue
        if section not in KEYS:
            raise ConfigError(f"unknown config section [{section}]")
        for key, raw in cp[section].items():
            if key not in KEYS[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            try:
                values.setdefault(section, {})[key] = KEYS[section][key](raw)
            except ValueError as exc:
                raise ConfigError(f"[{section}] {key}: {exc}") from None
    return values, schema


def _merge(dst: dict, src: dict):
    for s, kv in src.items():
        dst.setdefault(s, {}).update(kv)


def resolve(args: argparse.Namespace) -> Settings:
    values = json.loads(json.dumps(BASE_DEFAULTS))
    _merge(values, {"experiment": dict(COMMAND_DEFAULTS[args.command])})
    schema = {}
    if args.config is not None:
        file_values, schema = _read_ini(args.config)
        _merge(values, file_values)

    def put(section, key, value, parse=None):
        if value is None:
            return
        try:
            values.setdefault(section, {})[key] = parse(value) if parse else value
        except ValueError as exc:
            raise ConfigError(f"--{key}: {exc}") from None

    put("experiment", "seed", args.seed)
    put("budget", "epsilon", args.eps)
    put("budget", "delta", args.delta)
    put("budget", "ate_fraction", args.ate_fraction)
    put("experiment", "alpha", args.alpha, _floats)
    put("experiment", "runs", args.runs)
    put("learner", "kind", args.learner)
    put("data", "n", args.n)
    put("experiment", "split", args.split)
    put("experiment", "methods", args.methods, _strs)
    put("experiment", "axis", args.axis)
    put("experiment", "grid", args.grid, _floats)
    put("experiment", "weights", args.weights, _floats)
    put("experiment", "threads", args.threads)
    if args.dataset is not None:
        if args.dataset in PRESETS:
            values["data"]["source"] = args.dataset
            values["data"].pop("path", None)
        else:
            values["data"]["source"] = "csv"
            values["data"]["path"] = args.dataset
    exp = values["experiment"]
    if args.command in ("sweep", "utility") and "grid" not in exp:
        axis = "epsilon" if args.command == "utility" else exp["axis"]
        exp["grid"] = DEFAULT_GRIDS[axis]
    if args.command == "utility":
        exp["axis"] = "epsilon"
    return Settings(args.command, values, schema)


# --------------------------------------------------------------------------- validated objects


def _learner(s: Settings) -> LearnerConfig:
    lr = s.values["learner"]
    return LearnerConfig(
        kind=lr["kind"],
        kernel=KernelConfig(alpha=lr["ridge_alpha"], rbf_gamma=lr.get("rbf_gamma")),
        mlp=MlpConfig(hidden=lr["hidden"], l2=lr["l2"], learning_rate=lr["learning_rate"],
                      epochs=lr["epochs"], batch_size=lr["batch_size"]),
        clip=lr["clip"], logistic_l2=lr["logistic_l2"],
    )


def _budget(s: Settings) -> PrivacyBudget:
    b = s.values["budget"]
    return PrivacyBudget(b["epsilon"], b["delta"], b["ate_fraction"])


def _optimizer(s: Settings) -> OptimizerConfig:
    return OptimizerConfig(**s.values["optimizer"])


def _bounds(s: Settings) -> DomainBounds:
    b = s.values.get("bounds", {})
    missing = [k for k in ("x_lo", "x_hi", "y_lo", "y_hi") if k not in b]
    if missing:
        raise SchemaError("bounds", f"CSV data needs explicit [bounds]; missing {', '.join(missing)}")
    return DomainBounds(tuple(b["x_lo"]), tuple(b["x_hi"]), b["y_lo"], b["y_hi"])


def _experiment(s: Settings) -> ExperimentConfig:
    if s.get("data", "source") not in PRESETS:
        raise ConfigError(f"{s.command} needs a generated dataset ({', '.join(PRESETS)})")
    exp = s.values["experiment"]
    return ExperimentConfig(
        spec=PRESETS[s.get("data", "source")], n=s.get("data", "n"), learner=_learner(s),
        budget=_budget(s), alphas=tuple(exp["alpha"]), runs=exp["runs"], seed=exp["seed"],
        methods=tuple(exp["methods"]), optimizer=_optimizer(s), split=exp["split"],
        bootstrap_b=exp["bootstrap_b"], workers=exp["threads"],
    )


def validate(s: Settings):
    """Build every object the command needs; raises ConfigError/SchemaError before any work."""
    try:
        exp = s.values["experiment"]
        if exp["seed"] < 0:
            raise ValueError("seed must be non-negative")
        if exp["threads"] < 1:
            raise ValueError("threads must be at least 1")
        src = s.get("data", "source")
        if src != "csv" and src not in PRESETS:
            raise ValueError(f"unknown data source {src!r}")
        if s.command in ("estimate", "generate"):
            if len(exp["alpha"]) != 1:
                raise ValueError(f"{s.command} takes a single alpha")
            if not 0 < exp["alpha"][0] < 1:
                raise ValueError("alpha must lie in (0, 1)")
            if s.get("data", "n") < 2:
                raise ValueError("n must be at least 2")
            learner, budget, opt = _learner(s), _budget(s), _optimizer(s)
            bounds = None
            if src == "csv":
                if s.command == "generate":
                    raise ValueError("generate needs a generator preset")
                if not s.get("data", "path"):
                    raise ValueError("CSV source needs a path")
                if not s.schema:
                    raise SchemaError("schema", "CSV data needs a [schema] section (column = role)")
                bounds = _bounds(s)
            return learner, budget, opt, bounds
        if s.command == "coverage" and exp["runs"] < 1:
            raise ValueError("runs must be at least 1")
        cfg = _experiment(s)
        if s.command in ("sweep", "utility"):
            if not exp["grid"]:
                raise ValueError("sweep grid is empty")
            if exp["axis"] not in ("epsilon", "n"):
                raise ValueError(f"unknown sweep axis {exp['axis']!r}")
            if len(exp["alpha"]) != 1:
                raise ValueError(f"{s.command} takes a single alpha")
            if exp["runs"] < 1:
                raise ValueError("runs must be at least 1")
            if exp["axis"] == "epsilon" and any(v <= 0 for v in exp["grid"]):
                raise ValueError("epsilon grid values must be positive")
            if exp["axis"] == "n" and any(v < 2 or v != int(v) for v in exp["grid"]):
                raise ValueError("n grid values must be integers >= 2")
        if s.command == "utility" and any(not 0 <= w <= 1 for w in exp["weights"]):
            raise ValueError("utility weights must lie in [0, 1]")
        return cfg
    except (ConfigError, SchemaError):
        raise
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(str(exc)) from None


# --------------------------------------------------------------------------- commands


def _emit(text: str, out: Path | None):
    if not text.endswith("\n"):
        text += "\n"
    if out is None:
        sys.stdout.write(text)
        sys.stdout.flush()
    else:
        out.write_text(text, encoding="utf-8")


def _table_format(args) -> str:
    if args.format:
        return args.format
    return "json" if args.out is not None and args.out.suffix == ".json" else "csv"


def _table(rows, args, s: Settings) -> str:
    if _table_format(args) == "json":
        return to_json(rows, command=s.command, config_digest=s.digest())
    return to_csv(rows)


def cmd_estimate(args, s: Settings, objs) -> int:
    learner, budget, opt, bounds = objs
    seed = s.get("experiment", "seed")
    rng = RngStream(seed)
    if bounds is not None:
        d, dropped = load_csv(s.get("data", "path"), s.schema, bounds)
        if dropped:
            print(f"note: dropped {dropped} row(s) with missing values", file=sys.stderr)
    else:
        d, _ = gen_dataset(PRESETS[s.get("data", "source")], s.get("data", "n"), rng.generator(DATA))
    rep = estimate_private(d, learner, budget, s.get("experiment", "alpha")[0], rng, opt,
                           split=s.get("experiment", "split"), config_digest=s.digest())
    print("warning: this release spends the full (epsilon, delta) budget on this dataset; "
          "cumulative budget across invocations is not tracked", file=sys.stderr)
    _emit(rep.to_json(), args.out)
    return 0


def cmd_coverage(args, s: Settings, cfg: ExperimentConfig) -> int:
    res = coverage_experiment(cfg)
    _emit(_table(list(res.results), args, s), args.out)
    return 0


def cmd_sweep(args, s: Settings, cfg: ExperimentConfig) -> int:
    exp = s.values["experiment"]
    grid = exp["grid"] if exp["axis"] == "epsilon" else [int(v) for v in exp["grid"]]
    _emit(_table(sweep(exp["axis"], grid, cfg), args, s), args.out)
    return 0


def cmd_utility(args, s: Settings, cfg: ExperimentConfig) -> int:
    exp = s.values["experiment"]
    points = sweep("epsilon", exp["grid"], cfg)
    _emit(_table(utility_curve(points, exp["weights"]), args, s), args.out)
    return 0


def cmd_generate(args, s: Settings, objs) -> int:
    if args.out is None:
        raise ConfigError("generate needs --out FILE.csv")
    spec = PRESETS[s.get("data", "source")]
    d, truth = gen_dataset(spec, s.get("data", "n"), RngStream(s.get("experiment", "seed")).generator(DATA))
    csv_path, _ = export(d, truth, args.out)
    ini = configparser.ConfigParser(interpolation=None)
    ini.optionxform = str
    ini["data"] = {"source": "csv", "path": str(csv_path)}
    ini["schema"] = {**{f"x{j + 1}": "covariate" for j in range(spec.p)}, "a": "treatment", "y": "outcome"}
    b = truth.bounds
    ini["bounds"] = {"x_lo": ",".join(map(repr, b.x_lo)), "x_hi": ",".join(map(repr, b.x_hi)),
                     "y_lo": repr(b.y_lo), "y_hi": repr(b.y_hi)}
    with open(csv_path.with_suffix(".ini"), "w", encoding="utf-8") as fh:
        ini.write(fh)
    sys.stdout.write(json.dumps(truth.to_dict(), indent=2) + "\n")
    return 0


HANDLERS = {"estimate": cmd_estimate, "coverage": cmd_coverage, "sweep": cmd_sweep,
            "utility": cmd_utility, "generate": cmd_generate}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        s = resolve(args)
        objs = validate(s)
    except (ConfigError, SchemaError) as exc:
        print(f"private-ate: config error: {exc}", file=sys.stderr)
        return 1
    try:
        return HANDLERS[args.command](args, s, objs)
    except (ConfigError, SchemaError) as exc:
        print(f"private-ate: config error: {exc}", file=sys.stderr)
        return 1
    except (PrivateAteError, ValueError, OSError) as exc:
        print(f"private-ate: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
