"""Command-line interface: prepare, train, forecast, eval, gradcheck, sensitivity.

Exit codes: 0 success, 1 usage or config error, 2 data error, 3 numeric failure.
Errors are printed to stderr as one JSON line.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import json
import logging
import sys
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import bench, datasets
from .data import (
    CovariateSchema,
    SeriesPanel,
    load_panel,
    load_prepared,
    save_panel,
    season_length,
)
from .errors import (
    CheckpointError,
    ConfigError,
    DataError,
    DimensionError,
    DomainError,
    MetricError,
    NumericError,
)
from .heads import check_levels
from .train import TrainConfig, load_checkpoint, save_checkpoint, train

log = logging.getLogger("deeptcn")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
CHECKPOINT_NAME = "model.dtcn"
CONFIG_NAME = "config.ini"


class UsageError(Exception):
    pass


# --------------------------------------------------------------------------
# typed config


def _none_or(parse):
    def inner(text: str):
        return None if text.strip().lower() in ("", "none", "auto") else parse(text)
    return inner


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.replace(" ", "").strip("[]()").split(",") if v)


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.replace(" ", "").strip("[]()").split(",") if v)


def _names(text: str) -> tuple[str, ...]:
    return tuple(v.strip() for v in text.split(",") if v.strip())


def _render(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (tuple, list)):
        return ",".join(_render(v) for v in value)
    return str(value)


_TRAIN_TYPES = {"batch_size": int, "learning_rate": float, "epochs": int, "beta1": float, "beta2": float,
                "adam_eps": float, "selection": str, "val_fraction": _none_or(float),
                "patience": _none_or(int), "clip": _bool, "clip_norm": float, "stride": int,
                "windows_per_epoch": _none_or(int)}

SCHEMA = {
    "data": {"dataset": str, "panel": str, "train_end": _none_or(str), "calendar": _none_or(_names),
             "embed": _none_or(_names), "holiday": _none_or(_bool)},
    "model": {"input_length": int, "horizon": int, "kernel_size": int, "dilations": _ints,
              "channels": _none_or(int), "hidden": _none_or(int), "head": str, "quantiles": _floats,
              "seed": int},
    "train": _TRAIN_TYPES,
    "eval": {"protocol": _none_or(str), "n_windows": _none_or(int), "horizon": _none_or(int),
             "levels": _floats, "season": _none_or(int), "pooled": _bool, "baseline": _bool},
}

DEFAULTS = {
    "data": {"dataset": "generic", "panel": "", "train_end": None, "calendar": None, "embed": None,
             "holiday": None},
    "model": {"input_length": 28, "horizon": 7, "kernel_size": 2, "dilations": (1, 2, 4, 8), "channels": None,
              "hidden": None, "head": "quantile", "quantiles": (0.5, 0.9), "seed": 0},
    "train": {f.name: f.default for f in fields(TrainConfig)},
    "eval": {"protocol": None, "n_windows": None, "horizon": None, "levels": (0.5, 0.9), "season": None,
             "pooled": True, "baseline": True},
}

DEEP_DILATIONS = (1, 2, 4, 8, 16, 20, 32)
# per-dataset architecture and optimizer settings
PRESETS = {
    "electricity": {"model": {"input_length": 168, "horizon": 24, "dilations": DEEP_DILATIONS},
                    "train": {"batch_size": 512, "learning_rate": 5e-2}},
    "traffic": {"model": {"input_length": 168, "horizon": 24, "dilations": DEEP_DILATIONS},
                "train": {"batch_size": 128, "learning_rate": 1e-2}},
    "parts": {"model": {"input_length": 12, "horizon": 12, "dilations": (1, 2)},
              "train": {"batch_size": 8, "learning_rate": 1e-4}},
    "generic": {},
}


@dataclass
class RunConfig:
    values: dict

    def __getitem__(self, section: str) -> dict:
        return self.values[section]

    @classmethod
    def load(cls, path=None, overrides=()) -> "RunConfig":
        """Defaults, then the dataset preset, then the file, then ``section.key=value`` overrides."""
        explicit: dict[str, dict] = {s: {} for s in SCHEMA}
        if path is not None:
            parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
            parser.optionxform = str
            try:
                with open(path) as fh:
                    parser.read_file(fh)
            except FileNotFoundError:
                raise ConfigError(f"{path}: no such config file") from None
            except configparser.Error as err:
                raise ConfigError(f"{path}: {' '.join(str(err).split())}") from None
            for section in parser.sections():
                for key, text in parser.items(section):
                    explicit.setdefault(section, {})[key] = cls._parse(section, key, text, str(path))
        for item in overrides:
            key, sep, text = item.partition("=")
            section, dot, name = key.partition(".")
            if not sep or not dot:
                raise ConfigError(f"override {item!r} must look like section.key=value")
            explicit.setdefault(section, {})[name] = cls._parse(section, name, text, "command line")
        dataset = explicit["data"].get("dataset", DEFAULTS["data"]["dataset"])
        if dataset not in PRESETS:
            raise ConfigError(f"unknown dataset {dataset!r}; choose from {sorted(PRESETS)}")
        values = {s: dict(DEFAULTS[s]) for s in SCHEMA}
        for s, entries in PRESETS[dataset].items():
            values[s].update(entries)
        for s, entries in explicit.items():
            values[s].update(entries)
        cfg = cls(values)
        cfg.validate()
        return cfg

    @staticmethod
    def _parse(section: str, key: str, text: str, where: str):
        if section not in SCHEMA:
            raise ConfigError(f"{where}: unknown section [{section}]")
        if key not in SCHEMA[section]:
            raise ConfigError(f"{where}: unknown key {section}.{key}")
        try:
            return SCHEMA[section][key](text)
        except ValueError as err:
            raise ConfigError(f"{where}: bad value for {section}.{key}: {err}") from None

    def set(self, section: str, key: str, value) -> None:
        self.values[section][key] = value

    def train_config(self) -> TrainConfig:
        return TrainConfig(**self["train"])

    def validate(self) -> None:
        """Checks that need no data."""
        m = self["model"]
        self.train_config()
        if m["input_length"] < 1 or m["horizon"] < 1:
            raise ConfigError("input length and horizon must be positive")
        if not m["dilations"] or min(m["dilations"]) < 1 or m["kernel_size"] < 1:
            raise ConfigError("kernel size and dilations must be positive")
        if m["kernel_size"] * max(m["dilations"]) > m["input_length"]:
            raise ConfigError(f"kernel size {m['kernel_size']} x dilation {max(m['dilations'])} exceeds "
                              f"input length {m['input_length']}")
        if m["head"] not in ("quantile", "gaussian"):
            raise ConfigError(f"unknown head {m['head']!r}")
        check_levels(m["quantiles"])
        check_levels(self["eval"]["levels"])
        if m["head"] == "quantile":
            missing = [q for q in self["eval"]["levels"] if not any(np.isclose(q, m["quantiles"]))]
            if missing:
                raise ConfigError(f"eval levels {missing} are not trained quantiles {m['quantiles']}")
        protocol = self["eval"]["protocol"]
        if protocol is not None and protocol not in bench.PROTOCOLS and protocol != "custom":
            raise ConfigError(f"unknown protocol {protocol!r}; choose from {sorted(bench.PROTOCOLS)} or custom")

    def protocol(self) -> tuple[str, int, int]:
        """(name, number of windows, horizon) of the evaluation protocol."""
        e = self["eval"]
        name = e["protocol"] or (self["data"]["dataset"] if self["data"]["dataset"] in bench.PROTOCOLS else "custom")
        n, h = bench.PROTOCOLS.get(name, (1, self["model"]["horizon"]))
        return name, e["n_windows"] or n, e["horizon"] or h

    def to_ini(self) -> str:
        lines = []
        for section in SCHEMA:
            lines.append(f"[{section}]")
            lines += [f"{k} = {_render(v)}" for k, v in self[section].items()]
            lines.append("")
        return "\n".join(lines)

    def echo(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        path = out / CONFIG_NAME
        path.write_text(self.to_ini())
        return path


# --------------------------------------------------------------------------
# helpers


def _panel(cfg: RunConfig, override=None) -> SeriesPanel:
    path = override or cfg["data"]["panel"]
    if not path:
        raise ConfigError("no panel given (data.panel or --panel)")
    panel = load_prepared(path)
    cfg.set("data", "panel", str(Path(path).resolve()))     # the echoed config must stand alone
    return panel


def _schema(cfg: RunConfig, panel: SeriesPanel) -> CovariateSchema:
    d = cfg["data"]
    return CovariateSchema.from_panel(panel, d["calendar"], d["embed"], holiday=d["holiday"])


def _spec(cfg: RunConfig, panel: SeriesPanel, dilations=None):
    from .model import ModelSpec
    m = dict(cfg["model"])
    if dilations is not None:
        m["dilations"] = dilations
    return ModelSpec(schema=_schema(cfg, panel), **m)


def _train_end(cfg: RunConfig, panel: SeriesPanel) -> int:
    text = cfg["data"]["train_end"]
    if text is None:
        _, n, h = cfg.protocol()
        end = panel.n_steps - n * h
    else:
        try:
            end = int(text)
        except ValueError:
            end = panel.to_position(text)
    if not 0 < end <= panel.n_steps:
        raise ConfigError(f"train_end {end} outside the panel's {panel.n_steps} steps")
    return end


def _origin(panel: SeriesPanel, text: str | None) -> int:
    if text is None:
        return panel.n_steps - 1
    try:
        pos = int(text)
    except ValueError:
        pos = panel.to_position(text)
    if not 0 <= pos < panel.n_steps:
        raise DataError(f"origin {text} outside the panel")
    return pos


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_history(history: list[dict], path) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(history[0]))
        w.writeheader()
        for row in history:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    return Path(path)


def _progress(verbose: bool):
    if not verbose:
        return None

    def show(row):
        text = " ".join(f"{k}={v:.5g}" if isinstance(v, float) else f"{k}={v}" for k, v in row.items())
        print(text, file=sys.stderr, flush=True)
    return show


# --------------------------------------------------------------------------
# commands


def cmd_prepare(args) -> int:
    out = Path(args.out)
    kind = args.dataset
    inputs = args.inputs
    expected = {"electricity": 1, "traffic": 1, "parts": 1, "generic": 2}[kind]
    if len(inputs) != expected:
        raise UsageError(f"prepare {kind} takes {expected} input path(s) before the output directory")
    report = None
    if kind == "electricity":
        panel = datasets.prepare_electricity(inputs[0], years=args.years)
    elif kind == "traffic":
        panel = datasets.prepare_traffic(inputs[0], start=args.start)
    elif kind == "parts":
        panel, report = datasets.filter_parts(datasets.read_parts(inputs[0]))
    else:
        panel = load_panel(inputs[0], inputs[1], args.calendar, args.granularity)
    save_panel(panel, out)
    echo = configparser.ConfigParser(interpolation=None)
    echo["prepare"] = {"dataset": kind, "inputs": ",".join(str(Path(p).resolve()) for p in inputs),
                       "years": str(args.years), "start": args.start, "calendar": str(args.calendar),
                       "granularity": str(args.granularity)}
    with open(out / CONFIG_NAME, "w") as fh:
        echo.write(fh)
    print(f"{panel.n_series} x {panel.n_steps}")
    if report is not None:
        (out / "parts_report.json").write_text(json.dumps(report.__dict__, indent=2))
        print(f"retained {report.retained} (reference counts {' and '.join(map(str, report.reference))})")
        print(report.summary())
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _config(args)
    out = Path(args.out)
    panel = _panel(cfg, args.panel)
    spec = _spec(cfg, panel)
    train_end = _train_end(cfg, panel)
    cfg.echo(out)
    res = train(panel, spec, cfg.train_config(), train_end, progress=_progress(args.verbose))
    ckpt = save_checkpoint(res.model, out / CHECKPOINT_NAME)
    _write_history(res.history, out / "history.csv")
    summary = {"best_epoch": res.best_epoch, "epochs_run": len(res.history), "runtime_seconds": res.runtime,
               "train_windows": res.n_windows, "selection_windows": res.n_selection, "train_end": train_end,
               "checkpoint_sha256": _sha256(ckpt)}
    (out / "summary.json").write_text(json.dumps(summary, indent=2))
    print(f"checkpoint {ckpt} sha256 {summary['checkpoint_sha256']}")
    print(f"best epoch {res.best_epoch} of {len(res.history)}, {res.runtime:.1f}s")
    return EXIT_OK


def cmd_forecast(args) -> int:
    model = load_checkpoint(args.checkpoint)
    panel = load_prepared(args.panel)
    ids = args.series or None
    origin = _origin(panel, args.origin)
    results = model.forecast(panel, ids, origin)
    path = bench.write_forecast_csv(results, args.out)
    print(f"{len(results)} forecasts of {model.horizon} steps from {panel.timestamp(origin)} -> {path}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _config(args)
    model = load_checkpoint(args.checkpoint)
    panel = _panel(cfg, args.panel)
    name, n, h = cfg.protocol()
    e = cfg["eval"]
    m = e["season"] or season_length(panel.granularity)
    out = Path(args.out)
    cfg.echo(out)
    dataset = cfg["data"]["dataset"]
    common = dict(n_windows=n, horizon=h, levels=e["levels"], m=m, pooled=e["pooled"], dataset=dataset,
                  protocol=name)
    report = bench.rolling_eval(model, panel, model_name=f"DeepTCN-{model.spec.head}", **common)
    report.save(out / "report")
    print(report.table())
    if e["baseline"]:
        base = bench.rolling_eval(bench.SeasonalNaive(m, h, e["levels"]), panel, model_name="seasonal-naive",
                                  **common)
        base.save(out / "baseline")
        print(base.table())
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .gradcheck import TOLERANCE, run_suite
    results = run_suite(args.configs, args.seed, args.ops or None)
    for r in results:
        status = "ok" if r.passed else "FAIL"
        print(f"{r.op:<14} max_rel_err={r.max_rel_err:.3e} configs={r.configs} checks={r.checks} "
              f"seconds={r.seconds:.1f} {status}")
    failed = [r.op for r in results if not r.passed]
    if failed:
        raise NumericError(f"gradient check above {TOLERANCE:g} for {', '.join(failed)}")
    return EXIT_OK


def cmd_sensitivity(args) -> int:
    cfg = _config(args)
    if not args.dilations:
        raise UsageError("sensitivity needs at least one --dilations list")
    try:
        lists = [_ints(text) for text in args.dilations]
    except ValueError as err:
        raise ConfigError(f"bad --dilations value: {err}") from None
    panel = _panel(cfg, args.panel)
    specs = [_spec(cfg, panel, d) for d in lists]
    out = Path(args.out)
    cfg.echo(out)
    curves = bench.sensitivity_run(panel, specs, cfg.train_config(), _train_end(cfg, panel),
                                   progress=_progress(args.verbose))
    summary = []
    for c in curves:
        path = bench.write_curve_csv(c, out / f"curve_{c.label}.csv")
        summary.append({"dilations": list(c.dilations), "receptive_field": c.receptive_field,
                        "final_train_l1": c.final, "epochs": len(c.l1), "runtime_seconds": c.runtime,
                        "curve": path.name})
        print(f"dilations {c.label}: receptive field {c.receptive_field}, final train L1 {c.final:.6g}")
    (out / "summary.json").write_text(json.dumps(summary, indent=2))
    return EXIT_OK


def _config(args) -> RunConfig:
    overrides = list(args.overrides)
    if getattr(args, "seed", None) is not None:
        overrides.append(f"model.seed={args.seed}")
    if getattr(args, "head", None) is not None:
        overrides.append(f"model.head={args.head}")
    if getattr(args, "dataset", None) is not None:
        overrides.append(f"data.dataset={args.dataset}")
    if getattr(args, "protocol", None) is not None:
        overrides.append(f"eval.protocol={args.protocol}")
    if getattr(args, "per_window", False):
        overrides.append("eval.pooled=false")
    return RunConfig.load(args.config, overrides)


# --------------------------------------------------------------------------
# parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="deeptcn", description="Probabilistic forecasting with dilated causal convolutions.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    pr = sub.add_parser("prepare", help="convert a raw dataset into a prepared panel")
    pr.add_argument("dataset", choices=["electricity", "traffic", "parts", "generic"])
    pr.add_argument("paths", nargs="+", help="input path(s) followed by the output directory")
    pr.add_argument("--years", type=int, default=3, help="electricity: years of history to keep")
    pr.add_argument("--start", default="2008-01-01", help="traffic: date of the first day record")
    pr.add_argument("--calendar", default=None, help="generic: holiday calendar file")
    pr.add_argument("--granularity", default=None, choices=["hourly", "daily", "monthly"])
    pr.set_defaults(func=cmd_prepare)

    def configurable(sp):
        sp.add_argument("--config", default=None, help="INI file with [data], [model], [train], [eval]")
        sp.add_argument("--panel", default=None, help="prepared panel directory (overrides data.panel)")
        sp.add_argument("--dataset", default=None, choices=sorted(PRESETS), help="dataset preset")

    tr = sub.add_parser("train", help="train a model and write a checkpoint")
    configurable(tr)
    tr.add_argument("--seed", type=int, default=None)
    tr.add_argument("--head", choices=["quantile", "gaussian"], default=None)
    tr.add_argument("--out", required=True, help="run directory")
    tr.set_defaults(func=cmd_train)

    fc = sub.add_parser("forecast", help="dump forecasts from one origin as CSV")
    fc.add_argument("--checkpoint", required=True)
    fc.add_argument("--panel", required=True)
    fc.add_argument("--origin", default=None, help="last observed position or timestamp (default: panel end)")
    fc.add_argument("--series", action="append", default=[], help="series id (repeatable; default all)")
    fc.add_argument("--out", required=True, help="CSV path")
    fc.set_defaults(func=cmd_forecast)

    ev = sub.add_parser("eval", help="rolling-window evaluation against seasonal naive")
    configurable(ev)
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--protocol", default=None)
    ev.add_argument("--per-window", action="store_true", help="average per-window metrics instead of pooling")
    ev.add_argument("--out", required=True, help="report directory")
    ev.set_defaults(func=cmd_eval)

    gc = sub.add_parser("gradcheck", help="finite-difference gradient oracle suite")
    gc.add_argument("--configs", type=int, default=20)
    gc.add_argument("--seed", type=int, default=0)
    gc.add_argument("--ops", nargs="*", default=None)
    gc.set_defaults(func=cmd_gradcheck)

    se = sub.add_parser("sensitivity", help="training-loss curves for several dilation lists")
    configurable(se)
    se.add_argument("--seed", type=int, default=None)
    se.add_argument("--dilations", action="append", default=[], help="comma list, repeatable")
    se.add_argument("--out", required=True)
    se.set_defaults(func=cmd_sensitivity)
    return p


def _split_overrides(argv: list[str]) -> tuple[list[str], list[str]]:
    """Pull ``--section.key=value`` items out of argv."""
    rest, overrides = [], []
    for item in argv:
        head = item[2:].partition("=")[0] if item.startswith("--") else ""
        if "." in head and "=" in item:
            overrides.append(item[2:])
        else:
            rest.append(item)
    return rest, overrides


def _fail(code: int, kind: str, message) -> int:
    text = " ".join(str(message).split())
    print(json.dumps({"error": kind, "code": code, "message": text}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    rest, overrides = _split_overrides(argv)
    try:
        args = build_parser().parse_args(rest)
        args.overrides = overrides
        if args.command == "prepare":
            args.inputs, args.out = args.paths[:-1], args.paths[-1]
            if not args.inputs:
                raise UsageError("prepare needs input path(s) and an output directory")
            if overrides:
                raise UsageError("prepare takes no config overrides")
        elif args.command in ("forecast", "gradcheck") and overrides:
            raise UsageError(f"{args.command} takes no config overrides")
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
        return args.func(args)
    except UsageError as err:
        return _fail(EXIT_CONFIG, "usage", err)
    except (ConfigError, DomainError, DimensionError) as err:
        return _fail(EXIT_CONFIG, "config", err)
    except (DataError, CheckpointError, MetricError, IndexError) as err:
        return _fail(EXIT_DATA, "data", err)
    except NumericError as err:
        return _fail(EXIT_NUMERIC, "numeric", err)
    except (FileNotFoundError, IsADirectoryError, NotADirectoryError, PermissionError) as err:
        return _fail(EXIT_DATA, "data", err)


if __name__ == "__main__":
    sys.exit(main())
