"""Command-line interface: calibrate, generate, detect, experiment.

Every parameter can come from a flat ``key = value`` config file
(``--config``), from a long-form flag (which wins), or from a default.  Each
run writes a config echo file containing the fully resolved parameters; the
echo can be fed back via ``--config`` to reproduce the run byte for byte.

Exit codes: 0 success, 2 configuration error, 3 data error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import dataclass, replace
from typing import Callable, Sequence

from . import calibration, detection, experiments, simulate
from .detection import MonitorConfig
from .errors import DataFormatError, NetmosumError, SourceExhausted
from .simulate import Scenario

__all__ = ["main"]


class ConfigError(ValueError):
    pass


def _parse_bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {s!r}")


def _parse_floats(s: str) -> tuple[float, ...]:
    return tuple(float(p) for p in str(s).split(",") if p.strip() != "")


def _parse_ints(s: str) -> tuple[int, ...]:
    return tuple(int(p) for p in str(s).split(",") if p.strip() != "")


def _parse_strs(s: str) -> tuple[str, ...]:
    return tuple(p.strip() for p in str(s).split(",") if p.strip() != "")


_REQUIRED = object()


@dataclass(frozen=True)
class Key:
    name: str
    parse: Callable[[str], object]
    default: object = _REQUIRED
    help: str = ""


def _fmt_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (tuple, list)):
        return ",".join(_fmt_value(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    if v is None:
        return ""
    return str(v)


def _load_config_file(path: str) -> dict[str, str]:
    out: dict[str, str] = {}
    with open(path) as fh:
        for ln, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{ln}: expected 'key = value', got {line!r}")
            key, _, value = line.partition("=")
            out[key.strip()] = value.strip()
    return out


def _resolve(schema: Sequence[Key], args: argparse.Namespace, command: str) -> dict:
    """Merge defaults, config file, and flags; reject unknown config keys."""
    by_name = {k.name: k for k in schema}
    raw: dict[str, str] = {}
    if getattr(args, "config", None):
        raw = _load_config_file(args.config)
        for key in raw:
            if key == "command":
                if raw[key] != command:
                    raise ConfigError(
                        f"config file is for command {raw[key]!r}, not {command!r}"
                    )
                continue
            if key not in by_name:
                raise ConfigError(f"unknown config key {key!r}")
    resolved: dict[str, object] = {}
    for k in schema:
        flag_val = getattr(args, k.name, None)
        if flag_val is not None:
            resolved[k.name] = k.parse(flag_val) if isinstance(flag_val, str) else flag_val
        elif k.name in raw:
            resolved[k.name] = k.parse(raw[k.name])
        elif k.default is _REQUIRED:
            raise ConfigError(f"missing required parameter {k.name!r}")
        else:
            resolved[k.name] = k.default
    return resolved


def _write_echo(path: str, command: str, schema: Sequence[Key], cfg: dict) -> None:
    lines = [f"command = {command}\n"]
    for k in schema:
        lines.append(f"{k.name} = {_fmt_value(cfg[k.name])}\n")
    with open(path, "w") as fh:
        fh.writelines(lines)


def _echo_path(cfg: dict) -> str | None:
    if cfg.get("echo"):
        return cfg["echo"]
    if cfg.get("out"):
        return str(cfg["out"]) + ".echo"
    return None


def write_rows_csv(target, rows: list[dict], columns: Sequence[str]) -> None:
    """Write dict rows with a fixed column order and round-trippable floats."""

    def _write(fh):
        w = csv.writer(fh)
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt_value(row.get(c)) for c in columns])

    if hasattr(target, "write"):
        _write(target)
    else:
        with open(target, "w", newline="") as fh:
            _write(fh)


# ---------------------------------------------------------------------------
# calibrate
# ---------------------------------------------------------------------------

CALIBRATE_SCHEMA = [
    Key("alpha", _parse_floats, (0.1, 0.05, 0.01), "type-I error levels"),
    Key("c_local", _parse_floats, (0.0, 3.15, 3.44, 4.05), "local thresholds (0 = centralized)"),
    Key("d", int, 100, "number of streams"),
    Key("beta", float, 0.5, "window / training ratio h/m"),
    Key("t_tilde", float, 10.0, "monitoring horizon factor"),
    Key("reps", int, 5000, "Monte Carlo replications"),
    Key("grid", int, calibration.DEFAULT_INCREMENTS, "path increments per stream"),
    Key("seed", int, 0, "master seed"),
    Key("threads", int, 1, "worker cap (does not change results)"),
    Key("out", str, None, "output CSV (default: stdout)"),
    Key("echo", str, None, "config echo path (default: <out>.echo)"),
]

CALIBRATE_COLUMNS = ["alpha", "c_local", "c_global", "d", "beta", "T_tilde", "reps", "seed"]


def _cmd_calibrate(cfg: dict) -> int:
    grid = calibration.LimitGrid.make(cfg["beta"], cfg["t_tilde"], cfg["grid"])
    rows = calibration.critical_value_table(
        cfg["alpha"], cfg["c_local"], cfg["d"], grid,
        reps=cfg["reps"], seed=cfg["seed"], n_jobs=cfg["threads"],
    )
    if cfg["out"]:
        write_rows_csv(cfg["out"], rows, CALIBRATE_COLUMNS)
    else:
        write_rows_csv(sys.stdout, rows, CALIBRATE_COLUMNS)
    return 0


# ---------------------------------------------------------------------------
# generate
# ---------------------------------------------------------------------------

GENERATE_SCHEMA = [
    Key("d", int, 100),
    Key("length", int, 10000, "total series length"),
    Key("shift", str, "none", "none | fixed | gaussian"),
    Key("p", int, 0, "affected streams"),
    Key("tau", int, None, "changepoint time (1-based)"),
    Key("delta", float, 0.0, "fixed shift size"),
    Key("eta", float, 0.0, "random shift scale"),
    Key("noise", str, "iid", "iid | ar1"),
    Key("phi", float, 0.0, "AR(1) coefficient"),
    Key("m", int, None, "training length (validates tau > m)"),
    Key("delimiter", str, ","),
    Key("header", _parse_bool, False),
    Key("seed", int, 0),
    Key("out", str, _REQUIRED, "output data CSV"),
    Key("sidecar", str, None, "optional JSON with realized shifts and tau"),
    Key("echo", str, None),
]


def _cmd_generate(cfg: dict) -> int:
    scenario = Scenario(
        d=cfg["d"], total_length=cfg["length"], shift=cfg["shift"], p=cfg["p"],
        tau=cfg["tau"], delta=cfg["delta"], eta=cfg["eta"], noise=cfg["noise"],
        phi=cfg["phi"],
    )
    data, delta = simulate.generate(scenario, cfg["seed"], m=cfg["m"])
    simulate.write_csv(cfg["out"], data, delimiter=cfg["delimiter"], header=cfg["header"])
    if cfg["sidecar"]:
        simulate.write_sidecar(cfg["sidecar"], delta, scenario.tau)
    return 0


# ---------------------------------------------------------------------------
# detect
# ---------------------------------------------------------------------------

DETECT_SCHEMA = [
    Key("data", str, _REQUIRED, "input CSV, one row per time step"),
    Key("d", int, _REQUIRED),
    Key("m", int, _REQUIRED),
    Key("h", int, _REQUIRED),
    Key("t_tilde", float, 10.0),
    Key("regime", str, "distributed", "centralized | distributed"),
    Key("c_local", float, 0.0),
    Key("c_global", float, _REQUIRED),
    Key("variance", str, "plain", "plain | long_run"),
    Key("lrv_bandwidth", int, None),
    Key("delimiter", str, ","),
    Key("header", str, "auto", "auto | yes | no"),
    Key("format", str, "csv", "report format: csv | json"),
    Key("out", str, None, "report path (default: stdout)"),
    Key("echo", str, None),
]


def _cmd_detect(cfg: dict) -> int:
    config = MonitorConfig(
        d=cfg["d"], m=cfg["m"], h=cfg["h"], t_tilde=cfg["t_tilde"],
        c_global=cfg["c_global"], regime=cfg["regime"], c_local=cfg["c_local"],
        variance=cfg["variance"], lrv_bandwidth=cfg["lrv_bandwidth"],
    )
    header = {"auto": None, "yes": True, "no": False}.get(cfg["header"])
    if header is None and cfg["header"] != "auto":
        raise ConfigError(f"header must be auto, yes or no, got {cfg['header']!r}")
    rows = detection.iter_csv_rows(cfg["data"], delimiter=cfg["delimiter"], has_header=header)
    outcome = detection.stream_monitor(config, rows)
    report = outcome.to_report()
    if cfg["format"] == "json":
        text = json.dumps(report, indent=2) + "\n"
    elif cfg["format"] == "csv":
        text = "".join(f"{k},{_fmt_value(v)}\n" for k, v in report.items())
    else:
        raise ConfigError(f"unknown report format {cfg['format']!r}")
    if cfg["out"]:
        with open(cfg["out"], "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


# ---------------------------------------------------------------------------
# experiment
# ---------------------------------------------------------------------------

_METRIC_COLUMNS = ["add", "add_count", "trans_avg", "fp_rate", "detect_rate", "reps"]

SIZE_SCHEMA = [
    Key("d", int, 100),
    Key("m", int, 200),
    Key("h", int, 100),
    Key("t_tilde", float, 10.0),
    Key("c_locals", _parse_floats, (3.15, 3.44, 4.05, 0.0)),
    Key("c_globals", _parse_floats, (7.89, 7.16, 6.02, 14.4)),
    Key("noise", str, "iid"),
    Key("phi", float, 0.0),
    Key("reps", int, 1000),
    Key("seed", int, 0),
]


def _run_size(cfg: dict) -> tuple[list[dict], list[str]]:
    if len(cfg["c_locals"]) != len(cfg["c_globals"]):
        raise ConfigError("c_locals and c_globals must have the same length")
    config = MonitorConfig(
        d=cfg["d"], m=cfg["m"], h=cfg["h"], t_tilde=cfg["t_tilde"], c_global=math.inf,
    )
    scenario = Scenario(
        d=cfg["d"], total_length=cfg["m"] + config.horizon,
        noise=cfg["noise"], phi=cfg["phi"],
    )
    maxes = experiments.null_max_stats(
        config, scenario, list(cfg["c_locals"]), cfg["reps"], cfg["seed"]
    )
    rows = []
    for j, (cl, cg) in enumerate(zip(cfg["c_locals"], cfg["c_globals"])):
        rows.append(
            {
                "c_local": cl,
                "c_global": cg,
                "empirical_size": float((maxes[:, j] > cg).mean()),
                "reps": cfg["reps"],
            }
        )
    return rows, ["c_local", "c_global", "empirical_size", "reps"]


SWEEP_SCHEMA = [
    Key("d", int, 100),
    Key("m", int, 200),
    Key("h", int, 100),
    Key("length", int, 10000),
    Key("tau", int, 5000),
    Key("shift", str, "fixed", "fixed | gaussian"),
    Key("shifts", _parse_floats, (0.25, 0.5, 1.0, 2.0)),
    Key("p", int, None, "affected streams (default: all)"),
    Key("c_locals", _parse_floats, (0.0, 3.15, 3.44, 4.05)),
    Key("c_globals", _parse_floats, None, "paired global thresholds (default: calibrate)"),
    Key("alpha", float, 0.05),
    Key("cal_reps", int, 2000),
    Key("cal_increments", int, calibration.DEFAULT_INCREMENTS),
    Key("reps", int, 500),
    Key("seed", int, 0),
    Key("threads", int, 1),
]


def _run_sweep(cfg: dict) -> tuple[list[dict], list[str]]:
    m, length = cfg["m"], cfg["length"]
    config = MonitorConfig(
        d=cfg["d"], m=m, h=cfg["h"], t_tilde=(length - m) / m, c_global=math.inf,
    )
    p = cfg["p"] if cfg["p"] is not None else cfg["d"]
    scenario = Scenario(
        d=cfg["d"], total_length=length, shift=cfg["shift"], p=p, tau=cfg["tau"],
        delta=1.0 if cfg["shift"] == "fixed" else 0.0,
        eta=1.0 if cfg["shift"] == "gaussian" else 0.0,
    )
    rows = experiments.threshold_sweep(
        scenario, config, cfg["shifts"], cfg["c_locals"], cfg["reps"], cfg["seed"],
        c_globals=cfg["c_globals"], alpha=cfg["alpha"], cal_reps=cfg["cal_reps"],
        cal_increments=cfg["cal_increments"], n_jobs=cfg["threads"],
    )
    return rows, ["c_local", "c_global", "shift", *_METRIC_COLUMNS]


BANDWIDTH_SCHEMA = [
    Key("d", int, 100),
    Key("m", int, 200),
    Key("length", int, 1000),
    Key("tau", int, 600),
    Key("h0", int, 50),
    Key("c_local", float, 3.44),
    Key("delta0", str, "auto", "'auto' or a shift size"),
    Key("h_step", int, 10),
    Key("alpha", float, 0.05),
    Key("reps", int, 500),
    Key("cal_reps", int, 1000),
    Key("cal_increments", int, 4000),
    Key("seed", int, 0),
    Key("threads", int, 1),
]


def _run_bandwidth(cfg: dict) -> tuple[list[dict], list[str]]:
    m, length = cfg["m"], cfg["length"]
    config = MonitorConfig(
        d=cfg["d"], m=m, h=min(cfg["h0"], m), t_tilde=(length - m) / m,
        c_global=math.inf,
    )
    scenario = Scenario(
        d=cfg["d"], total_length=length, shift="fixed", p=cfg["d"], tau=cfg["tau"],
        delta=1.0,
    )
    delta0 = cfg["delta0"] if cfg["delta0"] == "auto" else float(cfg["delta0"])
    result = experiments.recover_bandwidth(
        config, scenario, h0=cfg["h0"], c_local=cfg["c_local"], delta0=delta0,
        reps=cfg["reps"], seed=cfg["seed"], h_step=cfg["h_step"], alpha=cfg["alpha"],
        cal_reps=cfg["cal_reps"], cal_increments=cfg["cal_increments"],
        n_jobs=cfg["threads"],
    )
    rows = [
        {**row, "h_star": result.h_star, "delta0": result.delta0, "add_ref": result.add_ref}
        for row in result.rows
    ]
    return rows, ["h", "c_global", "add", "gap", "h_star", "delta0", "add_ref"]


TRAINING_SCHEMA = [
    Key("d", int, 100),
    Key("m_list", _parse_ints, (80, 100, 500, 1000)),
    Key("h", int, 50),
    Key("length", int, 6000),
    Key("c_local", float, 3.44),
    Key("alpha", float, 0.05),
    Key("reps", int, 1000),
    Key("cal_reps", int, 400),
    Key("size_reps", int, 400),
    Key("seed", int, 0),
]


def _run_training(cfg: dict) -> tuple[list[dict], list[str]]:
    scenario = Scenario(d=cfg["d"], total_length=cfg["length"])
    rows = experiments.training_size_study(
        cfg["m_list"], cfg["h"], scenario, cfg["reps"], cfg["seed"],
        c_local=cfg["c_local"], alpha=cfg["alpha"], cal_reps=cfg["cal_reps"],
        size_reps=cfg["size_reps"],
    )
    return rows, ["m", "c_global", "empirical_size", "mse_mean", "mse_sd"]


AR1_SCHEMA = [
    Key("d", int, 100),
    Key("m", int, 200),
    Key("h", int, 100),
    Key("length", int, 10000),
    Key("tau", int, 5000),
    Key("phis", _parse_floats, (0.0, 0.25, 0.5, 0.75)),
    Key("methods", _parse_strs, ("none", "inflate", "lrv")),
    Key("deltas", _parse_floats, (0.5, 1.0)),
    Key("ps", _parse_ints, None, "affected-stream counts (default: d)"),
    Key("alpha", float, 0.05),
    Key("iid_c_local", float, None, "override the iid local threshold"),
    Key("iid_c_global", float, None, "override the iid global threshold"),
    Key("reps", int, 1000),
    Key("cal_reps", int, 400),
    Key("seed", int, 0),
]


def _run_ar1(cfg: dict) -> tuple[list[dict], list[str]]:
    config = MonitorConfig(
        d=cfg["d"], m=cfg["m"], h=cfg["h"],
        t_tilde=(cfg["length"] - cfg["m"]) / cfg["m"], c_global=math.inf,
        regime="distributed",
        c_local=cfg["iid_c_local"] if cfg["iid_c_local"] is not None else 3.44,
    )
    iid_thresholds = None
    if cfg["iid_c_local"] is not None and cfg["iid_c_global"] is not None:
        iid_thresholds = (cfg["iid_c_local"], cfg["iid_c_global"])
    rows = experiments.autocorrelation_study(
        cfg["phis"], cfg["methods"], config, cfg["reps"], cfg["seed"],
        deltas=cfg["deltas"], ps=cfg["ps"], tau=cfg["tau"], total_length=cfg["length"],
        alpha=cfg["alpha"], iid_thresholds=iid_thresholds, cal_reps=cfg["cal_reps"],
    )
    return rows, ["phi", "p", "delta", "method", "c_global", *_METRIC_COLUMNS]


EXPERIMENTS = {
    "size": (SIZE_SCHEMA, _run_size),
    "sweep": (SWEEP_SCHEMA, _run_sweep),
    "bandwidth": (BANDWIDTH_SCHEMA, _run_bandwidth),
    "training": (TRAINING_SCHEMA, _run_training),
    "ar1": (AR1_SCHEMA, _run_ar1),
}

_EXPERIMENT_IO_KEYS = [
    Key("out", str, _REQUIRED, "output CSV"),
    Key("echo", str, None),
    Key("plot_data", _parse_bool, False, "also write tidy long-format CSV"),
]


def _cmd_experiment(cfg: dict, name: str, columns_and_rows) -> int:
    rows, columns = columns_and_rows
    write_rows_csv(cfg["out"], rows, columns)
    if cfg["plot_data"]:
        id_cols = [c for c in columns if c not in _METRIC_COLUMNS]
        long_rows = []
        for row in rows:
            for metric in columns:
                if metric in id_cols:
                    continue
                long_rows.append(
                    {
                        "experiment": name,
                        **{c: row.get(c) for c in id_cols},
                        "metric": metric,
                        "value": row.get(metric),
                    }
                )
        write_rows_csv(
            _long_path(cfg["out"]), long_rows, ["experiment", *id_cols, "metric", "value"]
        )
    return 0


def _long_path(out: str) -> str:
    stem, dot, ext = out.rpartition(".")
    return f"{stem}_long.{ext}" if dot else f"{out}_long"


# ---------------------------------------------------------------------------
# argument wiring
# ---------------------------------------------------------------------------


def _add_schema_flags(parser: argparse.ArgumentParser, schema: Sequence[Key]) -> None:
    parser.add_argument("--config", help="flat key = value config file")
    for k in schema:
        parser.add_argument(
            "--" + k.name.replace("_", "-"), dest=k.name, help=k.help or k.name
        )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="netmosum",
        description="Communication-efficient online changepoint detection",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    _add_schema_flags(sub.add_parser("calibrate", help="simulate critical values"), CALIBRATE_SCHEMA)
    _add_schema_flags(sub.add_parser("generate", help="emit synthetic data CSV"), GENERATE_SCHEMA)
    _add_schema_flags(sub.add_parser("detect", help="monitor a data file"), DETECT_SCHEMA)
    exp = sub.add_parser("experiment", help="run a named study")
    exp.add_argument("--name", required=True, choices=sorted(EXPERIMENTS))
    _add_schema_flags(exp, [*_EXPERIMENT_IO_KEYS, *_common_experiment_keys()])
    return parser


def _common_experiment_keys() -> list[Key]:
    seen: dict[str, Key] = {}
    for schema, _ in EXPERIMENTS.values():
        for k in schema:
            seen.setdefault(k.name, k)
    return list(seen.values())


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "calibrate":
            cfg = _resolve(CALIBRATE_SCHEMA, args, "calibrate")
            _maybe_echo(cfg, "calibrate", CALIBRATE_SCHEMA)
            return _cmd_calibrate(cfg)
        if args.command == "generate":
            cfg = _resolve(GENERATE_SCHEMA, args, "generate")
            _maybe_echo(cfg, "generate", GENERATE_SCHEMA)
            return _cmd_generate(cfg)
        if args.command == "detect":
            cfg = _resolve(DETECT_SCHEMA, args, "detect")
            _maybe_echo(cfg, "detect", DETECT_SCHEMA)
            return _cmd_detect(cfg)
        if args.command == "experiment":
            schema, runner = EXPERIMENTS[args.name]
            full_schema = [*_EXPERIMENT_IO_KEYS, *schema]
            known = {k.name for k in full_schema} | {"config", "name", "command"}
            for key, value in vars(args).items():
                if value is not None and key not in known:
                    raise ConfigError(
                        f"parameter {key!r} does not apply to experiment {args.name!r}"
                    )
            cfg = _resolve(full_schema, args, f"experiment:{args.name}")
            _maybe_echo(cfg, f"experiment:{args.name}", full_schema)
            return _cmd_experiment(cfg, args.name, runner(cfg))
        raise ConfigError(f"unknown command {args.command!r}")
    except (DataFormatError, SourceExhausted, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, NetmosumError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def _maybe_echo(cfg: dict, command: str, schema: Sequence[Key]) -> None:
    path = _echo_path(cfg)
    if path:
        _write_echo(path, command, schema, cfg)


if __name__ == "__main__":
    sys.exit(main())
