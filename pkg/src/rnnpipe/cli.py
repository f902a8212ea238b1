"""Command-line front end: estimate, explore, simulate, infer, bench.

Every command writes its fully resolved configuration to ``config.json`` in the
output directory next to its reports. Values come from built-in defaults, then
an optional ``--config`` JSON file, then explicit flags.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .anomaly import (
    BACKGROUND,
    SIGNAL,
    ChirpConfig,
    dataset_csv,
    empirical_fpr,
    gen_dataset,
    read_dataset_csv,
    roc_auc,
    roc_csv,
    score,
    stack_windows,
    threshold_from_fpr,
)
from .dse import InfeasibleDesign, balance_model, frontier_csv, frontier_rows, pareto_sweep
from .lstm import SpecError, model_forward
from .manifest import (
    ManifestError,
    dump_json,
    load_manifest,
    manifest_profile,
    manifest_reuse,
    manifest_to_model,
    model_to_manifest,
    read_sequence_csv,
    write_sequence_csv,
)
from .perf import PROFILES, HwProfile, ReuseFactors, balanced_rx, estimate, get_profile, layers_csv
from .sim import derive_stage_config, gantt, simulate
from .train import TrainingDiverged, train_autoencoder

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_DATA = 0, 2, 3, 4

COMMON_DEFAULTS = {
    "manifest": "builtin:small",
    "profile": None,  # manifest profile if present, else zynq7045-100MHz
    "out_dir": "out",
    "seed": 42,
    "format": "json",
    "jobs": None,  # available cores
}
DEFAULTS = {
    "estimate": {"rh": None, "rx": None},
    "explore": {"budget": None, "rh_min": 1, "rh_max": 10},
    "simulate": {"rh": None, "rx": None, "inferences": 8, "arrival_gap": 0, "gantt_width": 160},
    "infer": {"input": None, "numerics": "fixed"},
    "bench": {
        "dataset": None,
        "n_train": 2000,
        "n_background": 500,
        "n_signal": 500,
        "snr": 8.0,
        "epochs": 30,
        "lr": 0.2,
        "batch_size": 32,
        "fpr": 0.1,
    },
}


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


def _notice(msg: str):
    print(f"rnnpipe: {msg}", file=sys.stderr)


def _int_list(text: str) -> list[int]:
    try:
        vals = [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not vals or min(vals) < 1:
        raise argparse.ArgumentTypeError(f"reuse factors must be positive integers, got {text!r}")
    return vals


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("common options")
    g.add_argument("--manifest", help="model manifest path or builtin:small / builtin:nominal (default builtin:small)")
    g.add_argument("--profile", help=f"hardware profile name ({', '.join(sorted(PROFILES))}) or JSON file")
    g.add_argument("--out-dir", dest="out_dir", help="directory for reports (default ./out)")
    g.add_argument("--seed", type=int, help="64-bit seed for all randomness (default 42)")
    g.add_argument("--format", choices=["json", "csv"], help="format of the summary on stdout")
    g.add_argument("--jobs", type=int, help="worker threads (default: available cores)")
    g.add_argument("--config", help="JSON file of option values; flags override it")

    p = argparse.ArgumentParser(prog="rnnpipe", description="LSTM accelerator pipeline modelling toolkit")
    p.add_argument("--version", action="version", version=f"rnnpipe {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("estimate", parents=[common], help="timing and DSP report for given reuse factors")
    e.add_argument("--rh", type=_int_list, help="Rh per layer, comma separated (one value applies to all)")
    e.add_argument("--rx", type=_int_list, help="Rx per layer (default: balanced for each Rh)")

    x = sub.add_parser("explore", parents=[common], help="balanced design under a DSP budget plus Pareto sweeps")
    x.add_argument("--budget", type=int, help="DSP budget (default: the profile's DSP count)")
    x.add_argument("--rh-min", dest="rh_min", type=int)
    x.add_argument("--rh-max", dest="rh_max", type=int)

    s = sub.add_parser("simulate", parents=[common], help="cycle-level pipeline schedule")
    s.add_argument("--rh", type=_int_list)
    s.add_argument("--rx", type=_int_list)
    s.add_argument("-n", "--inferences", type=int)
    s.add_argument("--arrival-gap", dest="arrival_gap", type=int)
    s.add_argument("--gantt-width", dest="gantt_width", type=int)

    i = sub.add_parser("infer", parents=[common], help="run the autoencoder on one sequence CSV")
    i.add_argument("--input", help="CSV with one row per timestep and one column per feature")
    i.add_argument("--numerics", choices=["float", "fixed"])

    b = sub.add_parser("bench", parents=[common], help="train, score and ROC on the chirp benchmark")
    b.add_argument("--dataset", help="evaluation set CSV (default: generated)")
    b.add_argument("--n-train", dest="n_train", type=int)
    b.add_argument("--n-background", dest="n_background", type=int)
    b.add_argument("--n-signal", dest="n_signal", type=int)
    b.add_argument("--snr", type=float)
    b.add_argument("--epochs", type=int)
    b.add_argument("--lr", type=float)
    b.add_argument("--batch-size", dest="batch_size", type=int)
    b.add_argument("--fpr", type=float, help="target background false-positive rate")
    return p


def resolve_config(args: argparse.Namespace) -> dict:
    cfg = dict(COMMON_DEFAULTS)
    cfg.update(DEFAULTS[args.command])
    if args.config:
        try:
            file_cfg = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise DataError(f"{args.config}: {exc.strerror or exc}") from None
        except json.JSONDecodeError as exc:
            raise DataError(f"{args.config}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
        if not isinstance(file_cfg, dict):
            raise DataError(f"{args.config}: expected a JSON object")
        unknown = sorted(set(file_cfg) - set(cfg))
        if unknown:
            raise UsageError(f"{args.config}: unknown option(s) for {args.command}: {', '.join(unknown)}")
        cfg.update(file_cfg)
    for k, v in vars(args).items():
        if k in cfg and v is not None:
            cfg[k] = v
    for k in ("rh", "rx"):
        if isinstance(cfg.get(k), (int, str)):
            cfg[k] = _int_list(str(cfg[k]))
    if cfg["jobs"] is None:
        cfg["jobs"] = os.cpu_count() or 1
    if cfg["jobs"] < 1:
        raise UsageError("--jobs must be >= 1")
    cfg["command"] = args.command
    return cfg


def _load_model(cfg):
    doc = load_manifest(cfg["manifest"])
    return doc, manifest_to_model(doc)


def _resolve_profile(cfg, doc) -> HwProfile:
    name = cfg["profile"]
    if name is None:
        return manifest_profile(doc) or PROFILES["zynq7045-100MHz"]
    if name in PROFILES:
        return PROFILES[name]
    path = Path(name)
    if not path.exists():
        raise UsageError(f"unknown profile {name!r}; known: {', '.join(sorted(PROFILES))} or a JSON file")
    try:
        d = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{name}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return manifest_profile({"profile": d})


def _broadcast(vals, n, flag):
    if len(vals) == 1:
        return vals * n
    if len(vals) != n:
        raise UsageError(f"{flag} gives {len(vals)} values for a {n}-layer model")
    return vals


def _resolve_rfs(cfg, doc, model, hw) -> list[ReuseFactors]:
    n = len(model.layers)
    if cfg["rh"] is None:
        if cfg["rx"] is not None:
            raise UsageError("--rx needs --rh")
        rfs = manifest_reuse(doc)
        if rfs is None:
            raise UsageError("no reuse factors: pass --rh or add reuse_factors to the manifest")
        if len(rfs) != n:
            raise DataError(f"manifest lists {len(rfs)} reuse-factor sets for {n} layers")
        return rfs
    rhs = _broadcast(cfg["rh"], n, "--rh")
    if cfg["rx"] is None:
        rxs = [balanced_rx(rh, hw) for rh in rhs]
        _notice(f"Rx not given; using balanced Rx = Rh + {balanced_rx(1, hw) - 1}: {rxs}")
    else:
        rxs = _broadcast(cfg["rx"], n, "--rx")
    return [ReuseFactors(rx, rh) for rx, rh in zip(rxs, rhs)]


def _write(out: Path, name: str, text: str):
    (out / name).write_text(text)


def _csv_text(rows: list[dict], fields) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r)
    return buf.getvalue()


def cmd_estimate(cfg, out: Path) -> tuple[int, str]:
    doc, model = _load_model(cfg)
    hw = _resolve_profile(cfg, doc)
    rfs = _resolve_rfs(cfg, doc, model, hw)
    rep = estimate(model, rfs, hw)
    _write(out, "report.json", dump_json(rep))
    _write(out, "layers.csv", layers_csv(rep))
    return EXIT_OK, dump_json(rep) if cfg["format"] == "json" else layers_csv(rep)


def cmd_explore(cfg, out: Path) -> tuple[int, str]:
    doc, model = _load_model(cfg)
    hw = _resolve_profile(cfg, doc)
    budget = hw.dsp_total if cfg["budget"] is None else cfg["budget"]
    if cfg["rh_min"] < 1 or cfg["rh_max"] < cfg["rh_min"]:
        raise UsageError("sweep range needs 1 <= --rh-min <= --rh-max")
    naive, bal = pareto_sweep(model, hw, range(cfg["rh_min"], cfg["rh_max"] + 1), jobs=cfg["jobs"])
    rep = {
        "profile": hw.to_dict(),
        "budget": budget,
        "frontier": {"naive": frontier_rows("naive", naive), "balanced": frontier_rows("balanced", bal)},
    }
    code = EXIT_OK
    try:
        point = balance_model(model, hw, budget)
        rep["feasible"] = True
        rep["design"] = point.to_dict()
    except InfeasibleDesign as exc:
        rep["feasible"] = False
        rep["reason"] = str(exc)
        _notice(f"infeasible: {exc}")
        code = EXIT_INFEASIBLE
    _write(out, "report.json", dump_json(rep))
    _write(out, "frontier.csv", frontier_csv(naive, bal))
    return code, dump_json(rep) if cfg["format"] == "json" else frontier_csv(naive, bal)


COMPARE_FIELDS = ["quantity", "model", "simulated", "match"]


def cmd_simulate(cfg, out: Path) -> tuple[int, str]:
    doc, model = _load_model(cfg)
    hw = _resolve_profile(cfg, doc)
    rfs = _resolve_rfs(cfg, doc, model, hw)
    if cfg["inferences"] < 1:
        raise UsageError("--inferences must be >= 1")
    est = estimate(model, rfs, hw)
    trace, rep = simulate(derive_stage_config(model, rfs, hw), cfg["inferences"], cfg["arrival_gap"])
    saturated = cfg["arrival_gap"] == 0
    compare = [
        {
            "quantity": "II_sys",
            "model": est["II_sys"],
            "simulated": rep.steady_II if rep.steady_II is not None else "unavailable",
            "match": (rep.steady_II == est["II_sys"]) if rep.steady_II is not None and saturated else "n/a",
        },
        {
            "quantity": "latency_cycles",
            "model": est["latency_cycles"],
            "simulated": rep.latency_first,
            "match": rep.latency_first == est["latency_cycles"],
        },
    ]
    if rep.steady_II is None:
        _notice("a single inference gives latency only; steady II is unavailable")
    body = {
        "profile": hw.to_dict(),
        "reuse_factors": [{"Rx": r.Rx, "Rh": r.Rh, "Rt": r.Rt} for r in rfs],
        "simulation": rep.to_dict(),
        "comparison": compare,
    }
    _write(out, "report.json", dump_json(body))
    _write(out, "trace.csv", trace.to_csv())
    _write(out, "comparison.csv", _csv_text(compare, COMPARE_FIELDS))
    _write(out, "gantt.txt", gantt(trace, max_width=cfg["gantt_width"]) + "\n")
    return EXIT_OK, dump_json(body) if cfg["format"] == "json" else _csv_text(compare, COMPARE_FIELDS)


def cmd_infer(cfg, out: Path) -> tuple[int, str]:
    doc, model = _load_model(cfg)
    if not model.has_weights:
        raise DataError(f"{cfg['manifest']}: manifest has no weights (bench writes a trained manifest)")
    if not cfg["input"]:
        raise UsageError("infer needs --input")
    try:
        text = Path(cfg["input"]).read_text()
    except OSError as exc:
        raise DataError(f"{cfg['input']}: {exc.strerror or exc}") from None
    seq = read_sequence_csv(text)
    spec = model.layers[0]
    if seq.shape != (spec.TS, spec.Lx):
        raise DataError(f"{cfg['input']}: sequence is {seq.shape[0]}x{seq.shape[1]}, model expects {spec.TS}x{spec.Lx}")
    y = model_forward(seq[None], model, cfg["numerics"])[0]
    rep = {"numerics": cfg["numerics"], "timesteps": spec.TS}
    if y.shape == seq.shape:
        rep["reconstruction_mse"] = float(np.mean((y - seq) ** 2))
    _write(out, "output.csv", write_sequence_csv(y))
    _write(out, "report.json", dump_json(rep))
    return EXIT_OK, dump_json(rep) if cfg["format"] == "json" else write_sequence_csv(y)


BENCH_FIELDS = ["numerics", "auc", "threshold", "empirical_fpr", "tpr_at_threshold"]


def cmd_bench(cfg, out: Path) -> tuple[int, str]:
    doc, model = _load_model(cfg)
    spec = model.layers[0]
    chirp = ChirpConfig(TS=spec.TS, features=spec.Lx, snr=cfg["snr"])
    seed = cfg["seed"]
    train_seed, eval_seed = seed, seed + 1
    if cfg["dataset"]:
        try:
            events = read_dataset_csv(Path(cfg["dataset"]).read_text())
        except OSError as exc:
            raise DataError(f"{cfg['dataset']}: {exc.strerror or exc}") from None
        except ValueError as exc:
            raise DataError(f"{cfg['dataset']}: {exc}") from None
    else:
        events = gen_dataset(cfg["n_background"], cfg["n_signal"], eval_seed, chirp)
        _write(out, "dataset.csv", dataset_csv(events))
    labels = {e.label for e in events}
    if labels != {BACKGROUND, SIGNAL}:
        raise DataError(f"evaluation set needs both {BACKGROUND} and {SIGNAL} windows, found {sorted(labels)}")

    train = gen_dataset(cfg["n_train"], 0, train_seed, chirp)
    result = train_autoencoder(
        stack_windows(train, spec.TS, spec.Lx), model, cfg["epochs"], cfg["lr"], seed, cfg["batch_size"]
    )
    trained = result.model
    rows, summary = [], {}
    for numerics in ("float", "fixed"):
        scored = score(events, trained, numerics, jobs=cfg["jobs"])
        auc, curve = roc_auc(scored)
        bg = [s.loss for s in scored if s.label == BACKGROUND]
        sig = np.array([s.loss for s in scored if s.label == SIGNAL])
        thr = threshold_from_fpr(bg, cfg["fpr"])
        row = {
            "numerics": numerics,
            "auc": auc,
            "threshold": thr,
            "empirical_fpr": empirical_fpr(bg, thr),
            "tpr_at_threshold": float(np.mean(sig > thr)),
        }
        rows.append(row)
        summary[numerics] = row
        _write(out, f"roc_{numerics}.csv", roc_csv(curve))
    rep = {
        "seeds": {"train_data": train_seed, "eval_data": eval_seed, "training": seed},
        "benchmark": {
            "TS": chirp.TS,
            "features": chirp.features,
            "snr": chirp.snr,
            "noise_cutoff": chirp.noise_cutoff,
            "f_start": chirp.f_start,
            "f_stop": chirp.f_stop,
            "source": cfg["dataset"] or "generated",
        },
        "training": {"loss_history": result.history},
        "float": summary["float"],
        "fixed": summary["fixed"],
        "auc_gap": abs(summary["float"]["auc"] - summary["fixed"]["auc"]),
    }
    _write(out, "report.json", dump_json(rep))
    _write(out, "model_trained.json", dump_json(model_to_manifest(trained)))
    return EXIT_OK, dump_json(rep) if cfg["format"] == "json" else _csv_text(rows, BENCH_FIELDS)


COMMANDS = {
    "estimate": cmd_estimate,
    "explore": cmd_explore,
    "simulate": cmd_simulate,
    "infer": cmd_infer,
    "bench": cmd_bench,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        out = Path(cfg["out_dir"])
        out.mkdir(parents=True, exist_ok=True)
        saved = {k: v for k, v in cfg.items() if k != "jobs"}
        _write(out, "config.json", dump_json(saved))
        code, text = COMMANDS[args.command](cfg, out)
    except UsageError as exc:
        _notice(f"error: {exc}")
        return EXIT_USAGE
    except InfeasibleDesign as exc:
        _notice(f"infeasible: {exc}")
        return EXIT_INFEASIBLE
    except (DataError, ManifestError, SpecError, TrainingDiverged, ValueError, KeyError) as exc:
        _notice(f"error: {exc.args[0] if isinstance(exc, KeyError) else exc}")
        return EXIT_DATA
    sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
