"""Command-line interface: file in, report files out.

Five subcommands: ``ring`` and ``curve`` estimate from a dataset CSV,
``simulate`` writes a synthetic dataset, ``mc`` runs repeated
simulation/estimation cycles, and ``distances`` geocodes a coordinate
file against the treatment point.  Every command writes a JSON report
describing its own configuration next to any CSV or PNG output, so a
report can be interpreted without the shell history that produced it.

Output is deterministic for fixed inputs: no timestamps, floats
serialized with 17 significant digits (which round-trips IEEE doubles
exactly), input files identified by content digest.  Exit codes: 0 on
success, 1 when the data or the estimate is at fault, 2 when the
request itself is (bad flags, bad config).
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, curve as curve_mod, dgp, plots, ring as ring_mod
from .data_model import (
    Dataset,
    DistanceSample,
    Point,
    compute_distances,
    first_differences,
)
from .errors import DataError, EstimationError, SpecError

try:
    import tomllib  # Python 3.11+
except ImportError:  # pragma: no cover
    import tomli as tomllib

OUT_DIR_ENV = "RINGDID_OUT_DIR"

_MAX_ROW_ERRORS = 10


# ---------------------------------------------------------------------------
# serialization


def fmt17(value) -> str:
    """Format a float with 17 significant digits (exact double round-trip)."""
    return format(float(value), ".17g")


def _json_dumps(obj, indent=0) -> str:
    # Hand-rolled so floats go through fmt17; json.dump's C encoder cannot
    # be steered to a fixed significant-digit form.
    pad = " " * indent
    inner = " " * (indent + 2)
    if obj is None:
        return "null"
    if isinstance(obj, bool) or isinstance(obj, np.bool_):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if not math.isfinite(v):
            return "null"
        return fmt17(v)
    if isinstance(obj, str):
        out = []
        for ch in obj:
            if ch in '"\\':
                out.append("\\" + ch)
            elif ch == "\n":
                out.append("\\n")
            elif ch == "\t":
                out.append("\\t")
            elif ord(ch) < 0x20:
                out.append(f"\\u{ord(ch):04x}")
            else:
                out.append(ch)
        return '"' + "".join(out) + '"'
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = [_json_dumps(v, indent + 2) for v in obj]
        return "[\n" + ",\n".join(inner + it for it in items) + "\n" + pad + "]"
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [
            f"{inner}{_json_dumps(str(k))}: {_json_dumps(v, indent + 2)}" for k, v in obj.items()
        ]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def write_json_report(report: dict, path: Path) -> Path:
    path.write_text(_json_dumps(report) + "\n", encoding="utf-8")
    return path


def _digest_bytes(blob: bytes) -> str:
    return "sha256:" + hashlib.sha256(blob).hexdigest()


def _digest_file(path) -> str:
    return _digest_bytes(Path(path).read_bytes())


# ---------------------------------------------------------------------------
# dataset ingestion


def _row_float(text, column, line, errors, nonnegative=False):
    try:
        v = float(text)
    except ValueError:
        errors.append(f"line {line}: {column} is not a number: {text!r}")
        return None
    if not math.isfinite(v):
        errors.append(f"line {line}: {column} must be finite, got {text!r}")
        return None
    if nonnegative and v < 0:
        errors.append(f"line {line}: {column} must be nonnegative, got {text!r}")
        return None
    return v


def ingest(path) -> tuple[Dataset, list[str]]:
    """Read a dataset CSV, reporting row errors by line number.

    Returns the dataset together with any non-fatal warnings (currently
    only the distance-beats-coordinates precedence note).  The header is
    line 1; the first data row is line 2.  All malformed rows are
    reported at once, capped at ten, rather than failing on the first.
    """
    path = Path(path)
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror or exc}") from None
    with fh:
        reader = csv.DictReader(fh)
        fields = reader.fieldnames or []
        missing = [c for c in ("unit_id", "period", "outcome") if c not in fields]
        if missing:
            raise DataError(f"{path.name}: missing required column(s): {', '.join(missing)}")
        has_dist_col = "dist" in fields
        has_xy_cols = "x" in fields and "y" in fields
        if not has_dist_col and not has_xy_cols:
            raise DataError(f"{path.name}: need either a dist column or both x and y columns")

        unit_ids: list[str] = []
        periods: list[int] = []
        outcomes: list[float] = []
        dists: list[float | None] = []
        coords: list[tuple[float, float] | None] = []
        errors: list[str] = []
        truncated = False
        n_rows = 0
        for row in reader:
            line = reader.line_num
            n_rows += 1
            if len(errors) >= _MAX_ROW_ERRORS:
                truncated = True
                continue

            errors_before = len(errors)
            uid = (row.get("unit_id") or "").strip()
            if not uid:
                errors.append(f"line {line}: empty unit_id")
            period_text = (row.get("period") or "").strip()
            if period_text in ("0", "1"):
                period = int(period_text)
            else:
                errors.append(f"line {line}: period must be 0 or 1, got {period_text!r}")
                period = -1
            outcome = _row_float(row.get("outcome") or "", "outcome", line, errors)

            dist = None
            if has_dist_col and (row.get("dist") or "").strip():
                dist = _row_float(row["dist"], "dist", line, errors, nonnegative=True)
            xy = None
            if has_xy_cols:
                x_text = (row.get("x") or "").strip()
                y_text = (row.get("y") or "").strip()
                if x_text or y_text:
                    if x_text and y_text:
                        x = _row_float(x_text, "x", line, errors)
                        y = _row_float(y_text, "y", line, errors)
                        if x is not None and y is not None:
                            xy = (x, y)
                    else:
                        errors.append(f"line {line}: coordinates need both x and y")
            if dist is None and xy is None and len(errors) == errors_before:
                errors.append(f"line {line}: row has neither a dist value nor x,y coordinates")

            unit_ids.append(uid)
            periods.append(period)
            outcomes.append(outcome if outcome is not None else math.nan)
            dists.append(dist)
            coords.append(xy)

    if n_rows == 0:
        raise DataError(f"{path.name}: no data rows")
    if errors:
        suffix = "\n  ... later rows not checked" if truncated else ""
        raise DataError(f"{path.name}: {len(errors)} row error(s):\n  " + "\n  ".join(errors) + suffix)

    n_dist = sum(d is not None for d in dists)
    n_xy = sum(c is not None for c in coords)
    warnings: list[str] = []
    if n_dist == n_rows:
        if n_xy > 0:
            warnings.append(
                "both distance and coordinate columns are populated; "
                "using the distance column and ignoring coordinates"
            )
        data = Dataset(
            unit_ids=np.array(unit_ids),
            periods=np.array(periods, dtype=np.int64),
            outcomes=np.array(outcomes, dtype=float),
            distances=np.array(dists, dtype=float),
        )
    elif n_dist == 0 and n_xy == n_rows:
        data = Dataset(
            unit_ids=np.array(unit_ids),
            periods=np.array(periods, dtype=np.int64),
            outcomes=np.array(outcomes, dtype=float),
            xs=np.array([c[0] for c in coords], dtype=float),
            ys=np.array([c[1] for c in coords], dtype=float),
        )
    else:
        raise DataError(
            f"{path.name}: mixed distance/coordinate rows ({n_dist} with dist, "
            f"{n_xy} with x,y out of {n_rows}); populate exactly one mode for every row"
        )
    return data, warnings


def write_dataset_csv(data: Dataset, path: Path) -> Path:
    """Write a dataset in the ingestible CSV layout (distance mode)."""
    if not data.has_distances:
        raise DataError("dataset CSV output needs distances; run compute_distances first")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["unit_id", "dist", "period", "outcome"])
        for i in range(data.n_rows):
            writer.writerow(
                [
                    str(data.unit_ids[i]),
                    fmt17(data.distances[i]),
                    int(data.periods[i]),
                    fmt17(data.outcomes[i]),
                ]
            )
    return path


# ---------------------------------------------------------------------------
# simulation configuration (TOML file and/or flags)

_LAW_KEYS = {
    "uniform": {"a", "b"},
    "quantile_table": {"ps", "qs"},
}
_FN_KEYS = {
    "linear_decay": {"amplitude", "cutoff"},
    "table": {"ds", "vs"},
    "constant": {"value"},
    "linear": {"slope", "intercept"},
    "zero": set(),
}
_TOP_KEYS = {
    "n",
    "seed",
    "design",
    "noise_sd",
    "idio_te_sd",
    "idio_trend_sd",
    "rc_composition_drift",
    "distance_law",
    "tau",
    "lambda",
    "mu",
}


def _check_keys(mapping, allowed, where):
    unknown = sorted(set(mapping) - allowed)
    if unknown:
        raise SpecError(f"unknown key(s) in {where}: {', '.join(unknown)}")


def _require(mapping, key, where):
    if key not in mapping:
        raise SpecError(f"{where} needs a {key!r} entry")
    return mapping[key]


def _law_from_mapping(m) -> object:
    if not isinstance(m, dict):
        raise SpecError("distance_law must be a table with a 'kind' entry")
    kind = _require(m, "kind", "distance_law")
    if kind not in _LAW_KEYS:
        raise SpecError(f"unknown distance_law kind {kind!r}; expected uniform or quantile_table")
    _check_keys(m, _LAW_KEYS[kind] | {"kind"}, f"distance_law ({kind})")
    if kind == "uniform":
        return dgp.Uniform(float(_require(m, "a", "uniform law")), float(_require(m, "b", "uniform law")))
    ps = _require(m, "ps", "quantile_table law")
    qs = _require(m, "qs", "quantile_table law")
    return dgp.QuantileTable(tuple(float(p) for p in ps), tuple(float(q) for q in qs))


def _fn_from_mapping(m, where) -> object:
    if not isinstance(m, dict):
        raise SpecError(f"{where} must be a table with a 'kind' entry")
    kind = _require(m, "kind", where)
    if kind not in _FN_KEYS:
        raise SpecError(
            f"unknown {where} kind {kind!r}; expected one of {', '.join(sorted(_FN_KEYS))}"
        )
    _check_keys(m, _FN_KEYS[kind] | {"kind"}, f"{where} ({kind})")
    if kind == "zero":
        return dgp.Zero()
    if kind == "constant":
        return dgp.Constant(float(_require(m, "value", where)))
    if kind == "linear":
        return dgp.Linear(float(_require(m, "slope", where)), float(m.get("intercept", 0.0)))
    if kind == "linear_decay":
        return dgp.LinearDecay(
            float(_require(m, "amplitude", where)), float(_require(m, "cutoff", where))
        )
    ds = _require(m, "ds", where)
    vs = _require(m, "vs", where)
    return dgp.TableFn(tuple(float(d) for d in ds), tuple(float(v) for v in vs))


def _parse_colon_spec(text, what, kinds):
    """Parse the flag mini-syntax ``kind:arg:arg`` (e.g. uniform:0:1.5)."""
    parts = text.split(":")
    kind = parts[0]
    if kind not in kinds:
        raise SpecError(f"unknown {what} kind {kind!r}; expected one of {', '.join(sorted(kinds))}")
    args = []
    for raw in parts[1:]:
        try:
            args.append(float(raw))
        except ValueError:
            raise SpecError(f"{what} {text!r}: {raw!r} is not a number") from None
    return kind, args


def _law_from_flag(text) -> dict:
    kind, args = _parse_colon_spec(text, "distance law", {"uniform"})
    if len(args) != 2:
        raise SpecError(f"distance law {text!r}: uniform takes two numbers, uniform:a:b")
    return {"kind": "uniform", "a": args[0], "b": args[1]}


def _fn_from_flag(text, what) -> dict:
    kind, args = _parse_colon_spec(text, what, {"linear_decay", "constant", "linear", "zero"})
    want = {"linear_decay": (2, "kind:amplitude:cutoff"), "constant": (1, "kind:value"), "zero": (0, "zero")}
    if kind == "linear":
        if len(args) not in (1, 2):
            raise SpecError(f"{what} {text!r}: linear takes linear:slope or linear:slope:intercept")
        m = {"kind": "linear", "slope": args[0]}
        if len(args) == 2:
            m["intercept"] = args[1]
        return m
    n_args, shape = want[kind]
    if len(args) != n_args:
        raise SpecError(f"{what} {text!r}: {kind} takes the form {shape}")
    if kind == "zero":
        return {"kind": "zero"}
    if kind == "constant":
        return {"kind": "constant", "value": args[0]}
    return {"kind": "linear_decay", "amplitude": args[0], "cutoff": args[1]}


def load_sim_config(args) -> dict:
    """Merge the TOML config file (if any) with command-line overrides."""
    config: dict = {}
    if args.config is not None:
        try:
            with open(args.config, "rb") as fh:
                config = tomllib.load(fh)
        except OSError as exc:
            raise DataError(f"cannot read {args.config}: {exc.strerror or exc}") from None
        except tomllib.TOMLDecodeError as exc:
            raise SpecError(f"{args.config}: invalid TOML: {exc}") from None
        _check_keys(config, _TOP_KEYS, f"config file {Path(args.config).name}")

    if args.dist is not None:
        config["distance_law"] = _law_from_flag(args.dist)
    if args.tau is not None:
        config["tau"] = _fn_from_flag(args.tau, "tau")
    if args.trend is not None:
        config["lambda"] = _fn_from_flag(args.trend, "trend")
    if args.mu is not None:
        parts = args.mu.split(":")
        if len(parts) != 2:
            raise SpecError(f"--mu takes mean:sd, got {args.mu!r}")
        try:
            config["mu"] = {"mean": float(parts[0]), "sd": float(parts[1])}
        except ValueError:
            raise SpecError(f"--mu takes two numbers, got {args.mu!r}") from None
    for flag, key in (
        ("n", "n"),
        ("seed", "seed"),
        ("design", "design"),
        ("noise_sd", "noise_sd"),
        ("idio_te_sd", "idio_te_sd"),
        ("idio_trend_sd", "idio_trend_sd"),
        ("drift", "rc_composition_drift"),
    ):
        value = getattr(args, flag)
        if value is not None:
            config[key] = value
    return config


def build_dgp_spec(config: dict) -> dgp.DgpSpec:
    """Turn the merged configuration mapping into a simulation spec."""
    _check_keys(config, _TOP_KEYS, "simulation config")
    if "n" not in config:
        raise SpecError("simulation config needs n (sample size)")
    if "distance_law" not in config:
        raise SpecError("simulation config needs a distance_law (or --dist)")
    if "tau" not in config:
        raise SpecError("simulation config needs a tau entry (or --tau)")
    mu = config.get("mu", {})
    if not isinstance(mu, dict):
        raise SpecError("mu must be a table with mean and sd")
    _check_keys(mu, {"mean", "sd"}, "mu")
    kwargs = dict(
        n=int(config["n"]),
        distance_law=_law_from_mapping(config["distance_law"]),
        tau=_fn_from_mapping(config["tau"], "tau"),
        mu_mean=float(mu.get("mean", 0.0)),
        mu_sd=float(mu.get("sd", 1.0)),
        noise_sd=float(config.get("noise_sd", 1.0)),
        idio_te_sd=float(config.get("idio_te_sd", 0.0)),
        idio_trend_sd=float(config.get("idio_trend_sd", 0.0)),
        rc_composition_drift=float(config.get("rc_composition_drift", 0.0)),
        design=str(config.get("design", dgp.PANEL)),
        seed=int(config.get("seed", 0)),
    )
    if "lambda" in config:
        kwargs["trend"] = _fn_from_mapping(config["lambda"], "lambda")
    return dgp.DgpSpec(**kwargs)


def _law_to_mapping(law) -> dict:
    if isinstance(law, dgp.Uniform):
        return {"kind": "uniform", "a": law.a, "b": law.b}
    return {"kind": "quantile_table", "ps": list(law.ps), "qs": list(law.qs)}


def _fn_to_mapping(fn) -> dict:
    if isinstance(fn, dgp.Zero):
        return {"kind": "zero"}
    if isinstance(fn, dgp.Constant):
        return {"kind": "constant", "value": fn.value}
    if isinstance(fn, dgp.Linear):
        return {"kind": "linear", "slope": fn.slope, "intercept": fn.intercept}
    if isinstance(fn, dgp.LinearDecay):
        return {"kind": "linear_decay", "amplitude": fn.amplitude, "cutoff": fn.cutoff}
    return {"kind": "table", "ds": list(fn.ds), "vs": list(fn.vs)}


def spec_to_config(spec: dgp.DgpSpec) -> dict:
    """Config echo of a simulation spec; round-trips through build_dgp_spec."""
    return {
        "n": spec.n,
        "seed": spec.seed,
        "design": spec.design,
        "distance_law": _law_to_mapping(spec.distance_law),
        "tau": _fn_to_mapping(spec.tau),
        "lambda": _fn_to_mapping(spec.trend),
        "mu": {"mean": spec.mu_mean, "sd": spec.mu_sd},
        "noise_sd": spec.noise_sd,
        "idio_te_sd": spec.idio_te_sd,
        "idio_trend_sd": spec.idio_trend_sd,
        "rc_composition_drift": spec.rc_composition_drift,
    }


# ---------------------------------------------------------------------------
# shared command plumbing


def _resolve_out_dir(args) -> Path:
    out = args.out or os.environ.get(OUT_DIR_ENV) or "."
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _emit(line: str) -> None:
    print(line)


def _warn(message: str) -> None:
    print(f"warning: {message}", file=sys.stderr)


def _load_estimation_input(args) -> tuple[Dataset, str]:
    """Ingest the input file and make sure distances are available."""
    data, warnings = ingest(args.input)
    for w in warnings:
        _warn(w)
    digest = _digest_file(args.input)
    if not data.has_distances:
        if args.treatment_x is None or args.treatment_y is None:
            raise SpecError(
                "input has coordinate columns; --treatment-x and --treatment-y are required"
            )
        metric = "great_circle" if args.metric == "greatcircle" else args.metric
        sample = compute_distances(data, Point(args.treatment_x, args.treatment_y), metric)
        data = data.with_distances(sample)
    return data, digest


def _base_report(command: str, digest: str, config: dict, seed) -> dict:
    return {
        "command": command,
        "tool_version": __version__,
        "input_digest": digest,
        "seed": seed,
        "config": config,
        "estimates": {},
        "standard_errors": {},
        "diagnostics": {},
    }


def _parse_bins(text):
    if text == "auto":
        return "auto"
    try:
        return int(text)
    except ValueError:
        raise SpecError(f"bin count must be an integer or 'auto', got {text!r}") from None


def _parse_cutoff(text):
    if text == "auto":
        return "auto"
    try:
        return float(text)
    except ValueError:
        raise SpecError(f"affected cutoff must be a number or 'auto', got {text!r}") from None


# ---------------------------------------------------------------------------
# subcommands


def cmd_ring(args) -> None:
    out_dir = _resolve_out_dir(args)
    data, digest = _load_estimation_input(args)
    rings = ring_mod.RingSpec(args.dt, args.dc)
    if args.design == "panel":
        diffs = first_differences(data)
        estimate = ring_mod.ring_estimate_panel(diffs, rings)
        n_units = diffs.n
    else:
        estimate = ring_mod.ring_estimate_rc(data, rings)
        n_units = data.n_rows
    kept = estimate.n_treated + estimate.n_control

    config = {
        "input": str(args.input),
        "design": args.design,
        "d_t": args.dt,
        "d_c": args.dc,
        "metric": args.metric,
    }
    report = _base_report("ring", digest, config, seed=None)
    report["estimates"] = {"beta1": estimate.beta1, "group_means": dict(estimate.group_means)}
    report["standard_errors"] = {"beta1": estimate.se}
    report["diagnostics"] = {
        "n_treated": estimate.n_treated,
        "n_control": estimate.n_control,
        "n_dropped_beyond_dc": n_units - kept,
        "estimator_design": estimate.design,
    }
    paths = [write_json_report(report, out_dir / "ring_report.json")]
    if not args.no_figure:
        if args.design == "panel":
            paths.append(plots.ring_figure(diffs, rings, estimate, out_dir / "ring_figure.png"))
        else:
            paths.append(plots.rc_ring_figure(estimate, out_dir / "ring_figure.png"))
    _emit(f"beta1 = {estimate.beta1:.6g} (se {estimate.se:.6g})")
    for p in paths:
        _emit(f"wrote {p}")


def write_curve_csv(curve, path: Path) -> Path:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["bin", "edge_lo", "edge_hi", "midpoint", "tau_hat", "se", "ci_lo", "ci_hi", "n_j"]
        )
        for row in curve.bin_rows():
            writer.writerow(
                [
                    row["bin"],
                    fmt17(row["edge_lo"]),
                    fmt17(row["edge_hi"]),
                    fmt17(row["midpoint"]),
                    fmt17(row["tau_hat"]),
                    fmt17(row["se"]),
                    fmt17(row["ci_lo"]),
                    fmt17(row["ci_hi"]),
                    row["n_j"],
                ]
            )
    return path


def cmd_curve(args) -> None:
    out_dir = _resolve_out_dir(args)
    data, digest = _load_estimation_input(args)
    bins = _parse_bins(args.bins)
    cutoff = _parse_cutoff(args.affected_cutoff)
    if args.design == "panel":
        curve = curve_mod.tau_curve_panel(first_differences(data), args.dc, bins)
    else:
        curve = curve_mod.tau_curve_rc(data, args.dc, bins)

    notes: list[str] = []
    try:
        agg = curve_mod.aggregate_ate(curve, cutoff)
    except EstimationError as exc:
        agg = None
        notes.append(f"aggregate effect unavailable: {exc}")
    try:
        tail = curve_mod.tail_zero_check(curve, args.tail_fraction)
    except EstimationError as exc:
        tail = None
        notes.append(f"tail check unavailable: {exc}")

    config = {
        "input": str(args.input),
        "design": args.design,
        "d_c": args.dc,
        "bins": args.bins,
        "affected_cutoff": args.affected_cutoff,
        "tail_fraction": args.tail_fraction,
        "metric": args.metric,
    }
    report = _base_report("curve", digest, config, seed=None)
    report["estimates"] = {
        "tau_hat": list(curve.tau_hat),
        "lambda_hat": curve.lambda_hat,
        "tau_bar": None if agg is None else agg.tau_bar,
    }
    report["standard_errors"] = {
        "tau_hat": list(curve.se),
        "lambda_hat": curve.lambda_se,
        "tau_bar": None if agg is None else agg.se,
    }
    diagnostics = {
        "L": curve.L,
        "edges_lo": list(curve.edges_lo),
        "edges_hi": list(curve.edges_hi),
        "counts": list(curve.counts),
        "estimator_design": curve.design,
    }
    if agg is not None:
        diagnostics["aggregate"] = {
            "cutoff": agg.cutoff,
            "bins_used": agg.bins_used,
            "cutoff_rule": "auto" if agg.auto else "requested",
        }
    if tail is not None:
        diagnostics["tail_check"] = {
            "passed": tail.passed,
            "tail_mean": tail.tail_mean,
            "covered_fraction": tail.covered_fraction,
            "n_tail_bins": tail.n_tail_bins,
            "note": tail.note,
        }
    if notes:
        diagnostics["notes"] = notes
    report["diagnostics"] = diagnostics

    paths = [
        write_json_report(report, out_dir / "curve_report.json"),
        write_curve_csv(curve, out_dir / "curve_bins.csv"),
    ]
    if not args.no_figure:
        paths.append(plots.curve_figure(curve, out_dir / "curve_figure.png"))
    if agg is not None:
        _emit(f"tau_bar = {agg.tau_bar:.6g} (se {agg.se:.6g}, covered to distance {agg.cutoff:.6g})")
    else:
        _emit("tau_bar unavailable; see report diagnostics")
    for note in notes:
        _warn(note)
    for p in paths:
        _emit(f"wrote {p}")


def cmd_simulate(args) -> None:
    out_dir = _resolve_out_dir(args)
    spec = build_dgp_spec(load_sim_config(args))
    data = dgp.generate(spec)
    data_path = write_dataset_csv(data, out_dir / "simulated.csv")

    config = spec_to_config(spec)
    digest = _digest_file(args.config) if args.config else _digest_bytes(_json_dumps(config).encode())
    report = _base_report("simulate", digest, config, seed=spec.seed)
    report["diagnostics"] = {
        "n_rows": data.n_rows,
        "n_units": spec.n,
        "dataset": data_path.name,
        "dataset_digest": _digest_file(data_path),
    }
    paths = [data_path, write_json_report(report, out_dir / "simulate_report.json")]
    if not args.no_figure:
        sample = DistanceSample.from_dataset(data)
        paths.append(plots.distance_figure(sample, out_dir / "simulate_figure.png"))
    _emit(f"simulated {data.n_rows} rows ({spec.design} design, seed {spec.seed})")
    for p in paths:
        _emit(f"wrote {p}")


def _mc_estimator(args, spec):
    if args.estimator == "ring":
        if args.dt is None or args.dc is None:
            raise SpecError("mc --estimator ring needs --dt and --dc")
        return dgp.ring_estimator(spec, ring_mod.RingSpec(args.dt, args.dc)), {
            "estimator": "ring",
            "d_t": args.dt,
            "d_c": args.dc,
        }
    if args.dc is None:
        raise SpecError("mc --estimator curve needs --dc")
    bins = _parse_bins(args.bins)
    cutoff = _parse_cutoff(args.affected_cutoff)
    est = dgp.curve_estimator(spec, args.dc, bins, cutoff, per_bin=args.per_bin)
    return est, {
        "estimator": "curve",
        "d_c": args.dc,
        "bins": args.bins,
        "affected_cutoff": args.affected_cutoff,
        "per_bin": args.per_bin,
    }


def write_mc_csv(report, path: Path) -> Path:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rep", "target", "estimate", "se", "truth", "covered"])
        for name, draws in report.draws.items():
            for rep, draw in zip(report.completed_reps, draws):
                covered = int(abs(draw.estimate - draw.truth) <= curve_mod.Z95 * draw.se)
                writer.writerow(
                    [rep, name, fmt17(draw.estimate), fmt17(draw.se), fmt17(draw.truth), covered]
                )
    return path


def cmd_mc(args) -> None:
    out_dir = _resolve_out_dir(args)
    spec = build_dgp_spec(load_sim_config(args))
    estimator, est_config = _mc_estimator(args, spec)
    mc = dgp.monte_carlo(spec, estimator, args.reps)

    config = {"dgp": spec_to_config(spec), "reps": args.reps, **est_config}
    digest = _digest_file(args.config) if args.config else _digest_bytes(_json_dumps(config).encode())
    report = _base_report("mc", digest, config, seed=mc.master_seed)
    report["estimates"] = {name: t.mean_estimate for name, t in mc.targets.items()}
    report["standard_errors"] = {name: t.mc_se for name, t in mc.targets.items()}
    report["diagnostics"] = {
        "requested": mc.requested,
        "completed": mc.completed,
        "failures": mc.failures,
        "targets": {
            name: {
                "mean_estimate": t.mean_estimate,
                "mean_truth": t.mean_truth,
                "bias": t.bias,
                "rmse": t.rmse,
                "mc_se": t.mc_se,
                "ci_coverage": t.ci_coverage,
                "n": t.n,
            }
            for name, t in mc.targets.items()
        },
    }
    paths = [
        write_json_report(report, out_dir / "mc_report.json"),
        write_mc_csv(mc, out_dir / "mc_replications.csv"),
    ]
    if not args.no_figure:
        primary = "beta1" if "beta1" in mc.targets else "tau_bar"
        paths.append(plots.mc_figure(mc, primary, out_dir / "mc_figure.png"))
    for name, t in mc.targets.items():
        _emit(f"{name}: mean {t.mean_estimate:.6g}, bias {t.bias:.6g}, mc_se {t.mc_se:.6g}")
    if mc.failures:
        _warn(f"{mc.failures} of {mc.requested} replications failed and were excluded")
    for p in paths:
        _emit(f"wrote {p}")


def cmd_distances(args) -> None:
    out_dir = _resolve_out_dir(args)
    data, warnings = ingest(args.input)
    for w in warnings:
        _warn(w)
    if data.has_distances:
        raise DataError("input already carries a dist column; nothing to compute")
    if args.treatment_x is None or args.treatment_y is None:
        raise SpecError("distances needs --treatment-x and --treatment-y")
    metric = "great_circle" if args.metric == "greatcircle" else args.metric
    sample = compute_distances(data, Point(args.treatment_x, args.treatment_y), metric)

    csv_path = out_dir / "distances.csv"
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["unit_id", "dist"])
        for uid, d in zip(sample.unit_ids, sample.distances):
            writer.writerow([str(uid), fmt17(d)])

    config = {
        "input": str(args.input),
        "metric": args.metric,
        "treatment_x": args.treatment_x,
        "treatment_y": args.treatment_y,
    }
    report = _base_report("distances", _digest_file(args.input), config, seed=None)
    srt = sample.sorted_distances()
    report["diagnostics"] = {
        "n_units": sample.n,
        "min": float(srt[0]),
        "median": float(np.median(sample.distances)),
        "max": float(srt[-1]),
    }
    paths = [csv_path, write_json_report(report, out_dir / "distances_report.json")]
    if not args.no_figure:
        paths.append(plots.distance_figure(sample, out_dir / "distances_figure.png"))
    _emit(f"computed distances for {sample.n} unit(s)")
    for p in paths:
        _emit(f"wrote {p}")


# ---------------------------------------------------------------------------
# argument parsing


def _add_out_flags(p):
    p.add_argument("--out", help=f"output directory (default: ${OUT_DIR_ENV} or the working directory)")
    p.add_argument("--no-figure", action="store_true", help="skip PNG rendering")


def _add_data_flags(p):
    p.add_argument("--input", required=True, help="dataset CSV")
    p.add_argument("--treatment-x", type=float, help="treatment point x (or longitude)")
    p.add_argument("--treatment-y", type=float, help="treatment point y (or latitude)")
    p.add_argument(
        "--metric",
        choices=("euclidean", "greatcircle"),
        default="euclidean",
        help="distance metric for coordinate inputs",
    )


def _add_sim_flags(p):
    p.add_argument("--config", help="TOML file describing the data-generating process")
    p.add_argument("--n", type=int, help="number of units")
    p.add_argument("--seed", type=int, help="RNG seed (mc: master seed)")
    p.add_argument("--design", choices=(dgp.PANEL, dgp.RC), help="panel or repeated cross sections")
    p.add_argument("--dist", help="distance law, e.g. uniform:0:1.5")
    p.add_argument("--tau", help="treatment effect, e.g. linear_decay:1:0.75 or zero")
    p.add_argument("--trend", help="common trend, e.g. constant:0.3, linear:0.2:0, zero")
    p.add_argument("--mu", help="unit-level mean law as mean:sd, e.g. 0:1")
    p.add_argument("--noise-sd", dest="noise_sd", type=float, help="idiosyncratic noise sd")
    p.add_argument("--idio-te-sd", dest="idio_te_sd", type=float, help="unit-level effect noise sd")
    p.add_argument(
        "--idio-trend-sd", dest="idio_trend_sd", type=float, help="unit-level trend noise sd"
    )
    p.add_argument(
        "--drift",
        type=float,
        help="repeated-cross-section composition drift strength (0 = stable composition)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ringdid",
        description="Distance-based treatment effect estimation around a point intervention.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p_ring = sub.add_parser("ring", help="two-ring difference in differences")
    _add_data_flags(p_ring)
    _add_out_flags(p_ring)
    p_ring.add_argument("--dt", type=float, required=True, help="treated ring outer edge")
    p_ring.add_argument("--dc", type=float, required=True, help="control ring outer edge")
    p_ring.add_argument("--design", choices=("panel", "rc"), default="panel")
    p_ring.set_defaults(func=cmd_ring)

    p_curve = sub.add_parser("curve", help="distance-binned effect curve")
    _add_data_flags(p_curve)
    _add_out_flags(p_curve)
    p_curve.add_argument("--dc", type=float, required=True, help="estimation radius")
    p_curve.add_argument("--bins", default="auto", help="bin count or 'auto'")
    p_curve.add_argument("--design", choices=("panel", "rc"), default="panel")
    p_curve.add_argument(
        "--affected-cutoff",
        default="auto",
        help="aggregate the effect over bins within this distance, or 'auto'",
    )
    p_curve.add_argument(
        "--tail-fraction", type=float, default=0.3, help="fraction of outer bins for the tail check"
    )
    p_curve.set_defaults(func=cmd_curve)

    p_sim = sub.add_parser("simulate", help="write a synthetic dataset CSV")
    _add_sim_flags(p_sim)
    _add_out_flags(p_sim)
    p_sim.set_defaults(func=cmd_simulate)

    p_mc = sub.add_parser("mc", help="Monte Carlo study of an estimator")
    _add_sim_flags(p_mc)
    _add_out_flags(p_mc)
    p_mc.add_argument("--reps", type=int, required=True, help="number of replications")
    p_mc.add_argument("--estimator", choices=("ring", "curve"), required=True)
    p_mc.add_argument("--dt", type=float, help="treated ring outer edge (ring estimator)")
    p_mc.add_argument("--dc", type=float, help="control ring edge / estimation radius")
    p_mc.add_argument("--bins", default="auto", help="bin count or 'auto' (curve estimator)")
    p_mc.add_argument("--affected-cutoff", default="auto", help="aggregation cutoff (curve)")
    p_mc.add_argument("--per-bin", action="store_true", help="track every bin as its own target")
    p_mc.set_defaults(func=cmd_mc)

    p_dist = sub.add_parser("distances", help="distances of units to the treatment point")
    _add_data_flags(p_dist)
    _add_out_flags(p_dist)
    p_dist.set_defaults(func=cmd_distances)

    return parser


def run_command(argv) -> int:
    """Parse and run; returns the process exit code instead of raising."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse has already printed its message
        return int(exc.code) if exc.code else 0
    try:
        args.func(args)
    except SpecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DataError, EstimationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run_command(sys.argv[1:]))


if __name__ == "__main__":
    main()
