"""``explainkit`` command line."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .. import __version__
from ..data import Dataset, SimConfig, load_csv, simulate_signal, split, write_csv
from ..errors import DataError, ExplainKitError
from ..lime import LimeConfig, explain_lime, lime_cv_std
from ..model import GbmConfig, GbmModel, auc, fit_gbm, monotone_from_correlation
from ..pdice import make_grid, pd2, pd_ice
from ..shapley import MAX_EXACT_FEATURES, attributions, explanation_for, summarize
from ..surrogate import cv_stability, export_dot, extract_surrogate
from . import svg
from .config import Option, read_config_file, resolve
from .reasons import load_codebook, reason_codes

log = logging.getLogger("explainkit")

DATA = [Option("data", help="input CSV"), Option("target", help="label column"),
        Option("id-column", help="identifier column to drop")]
MODEL = [Option("model", default="model.json", help="model JSON from `train`")]
ROW = [Option("row", int, 0, "row index into --data")]

OPTIONS = {
    "simulate": [
        Option("rows", int, 20000, "number of rows"),
        Option("noise", float, 0.15, "fraction of labels flipped"),
        Option("threshold", float, 0.42, "label threshold"),
        Option("out", default="sim.csv", help="output CSV"),
    ],
    "train": DATA[:1] + [Option("target", default="label", help="label column"), DATA[2]] + [
        Option("validation", float, 0.3, "validation fraction"),
        Option("monotone", default="none", help="none, auto, or comma-separated -1/0/1 per feature"),
        Option("learning-rate", float, 0.08),
        Option("subsample", float, 0.9),
        Option("colsample", float, 0.9),
        Option("max-depth", int, 5),
        Option("max-rounds", int, 1000),
        Option("early-stopping", int, 50),
        Option("min-samples-leaf", int, 5),
        Option("out", default="model.json"),
        Option("metrics", default="metrics.json"),
    ],
    "surrogate": MODEL + DATA + [
        Option("depth", int, 3),
        Option("folds", int, 3),
        Option("out", default="surrogate.json"),
        Option("dot", default="surrogate.dot"),
    ],
    "pd": MODEL + DATA + [
        Option("feature", help="feature name"),
        Option("feature2", help="second feature for two-way dependence"),
        Option("grid-points", int, 20),
        Option("out", default="pd.json"),
        Option("csv", default="pd.csv"),
        Option("svg", default="pd.svg"),
    ],
    "ice": MODEL + DATA + [
        Option("feature", help="feature name"),
        Option("rows", help="comma-separated row indices (default: score deciles)"),
        Option("grid-points", int, 20),
        Option("out", default="ice.json"),
        Option("csv", default="ice.csv"),
        Option("svg", default="ice.svg"),
    ],
    "lime": MODEL + DATA + ROW + [
        Option("samples", int, 5000),
        Option("kernel-width", float),
        Option("target-nonzero", int, 8),
        Option("discretize", help="comma-separated feature names"),
        Option("bins", int, 4),
        Option("repeats", int, 0, "extra seeded runs for contribution std (0 = skip)"),
        Option("out", default="lime.json"),
    ],
    "shap": MODEL + DATA + ROW + [
        Option("method", default="exact", choices=("exact", "sampled", "path")),
        Option("permutations", int, 1000),
        Option("out", default="shap.json"),
    ],
    "summary": MODEL + DATA + [
        Option("method", default="sampled", choices=("exact", "sampled", "path")),
        Option("budget", int, 2000),
        Option("permutations", int, 100),
        Option("out", default="summary.json"),
        Option("svg", default="summary.svg"),
    ],
    "reasons": MODEL + DATA + ROW + [
        Option("k", int, 3),
        Option("method", default="auto", choices=("auto", "exact", "sampled", "path")),
        Option("permutations", int, 1000),
        Option("codebook", help="JSON mapping feature -> {value: description}"),
        Option("out", default="reasons.json"),
    ],
    "compare": MODEL + DATA + ROW + [
        Option("permutations", int, 1000),
        Option("out", default="compare.json"),
    ],
}

REQUIRED = {
    "train": ("data",), "surrogate": ("data",), "pd": ("data", "feature"), "ice": ("data", "feature"),
    "lime": ("data",), "shap": ("data",), "summary": ("data",), "reasons": ("data",), "compare": ("data",),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="explainkit", description="Train and explain boosted tree models.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name, opts in OPTIONS.items():
        p = sub.add_parser(name, help=f"{name} subcommand")
        p.add_argument("--config", help="key = value configuration file")
        p.add_argument("--seed", type=int)
        p.add_argument("--out-dir", help="directory for outputs (default: current directory)")
        p.add_argument("--log-level", default="WARNING")
        for o in opts:
            p.add_argument(f"--{o.name}", type=o.type, choices=o.choices, help=o.help or None)
    return parser


def _dump_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=2, allow_nan=True) + "\n", encoding="utf-8")


def _out(cfg, key) -> Path:
    return Path(cfg["out_dir"]) / cfg[key]


def _load_model(cfg) -> GbmModel:
    return GbmModel.load(cfg["model"])


def _load_data(cfg, model: GbmModel = None) -> Dataset:
    """Load --data; when a model is given, keep exactly its feature columns in its order."""
    path = Path(cfg["data"])
    target = cfg.get("target")
    if target is None and model is not None and model.target_name:
        if model.target_name in _header(path):
            target = model.target_name
    data = load_csv(path, target=target, id_column=cfg.get("id_column"))
    if model is None:
        return data
    missing = [n for n in model.feature_names if n not in data.feature_names]
    if missing:
        raise DataError(f"data lacks model features: {', '.join(missing)}")
    cols = [data.feature_names.index(n) for n in model.feature_names]
    return Dataset(data.features[:, cols], model.feature_names, data.labels, data.target_name)


def _header(path: Path) -> list:
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8-sig") as fh:
        return [h.strip() for h in next(csv.reader(fh), [])]


def _row(cfg, data: Dataset) -> np.ndarray:
    i = cfg["row"]
    if not 0 <= i < data.n_rows:
        raise DataError(f"row {i} out of range for {data.n_rows} rows")
    return data.features[i]


def _names(text, data: Dataset) -> list:
    return [data.index_of(n.strip()) for n in text.split(",") if n.strip()] if text else []


# -- subcommands -------------------------------------------------------------

def cmd_simulate(cfg) -> dict:
    data = simulate_signal(SimConfig(cfg["rows"], cfg["seed"], cfg["noise"], cfg["threshold"]))
    write_csv(data, _out(cfg, "out"))
    return {"rows": data.n_rows, "positive_rate": float(data.labels.mean())}


def _constraints(value: str, train: Dataset) -> np.ndarray:
    if value == "none":
        return np.zeros(train.n_cols, dtype=np.int64)
    if value == "auto":
        return monotone_from_correlation(train)
    try:
        vals = np.array([int(v) for v in value.split(",")], dtype=np.int64)
    except ValueError:
        raise DataError("monotone must be none, auto, or comma-separated integers") from None
    if vals.size != train.n_cols:
        raise DataError(f"monotone lists {vals.size} values for {train.n_cols} features")
    return vals


def cmd_train(cfg) -> dict:
    data = load_csv(cfg["data"], target=cfg["target"], id_column=cfg.get("id_column"))
    train, valid = split(data, cfg["validation"], cfg["seed"])
    gcfg = GbmConfig(cfg["learning_rate"], cfg["subsample"], cfg["colsample"], cfg["max_depth"],
                     cfg["max_rounds"], cfg["early_stopping"], cfg["min_samples_leaf"], cfg["seed"])
    cons = _constraints(cfg["monotone"], train)
    t0 = time.perf_counter()
    model = fit_gbm(train, valid, gcfg, cons)
    log.info("trained in %.1f s", time.perf_counter() - t0)
    model.save(_out(cfg, "out"))
    metrics = {
        "train_auc": auc(model.predict_margin(train.features), train.labels),
        "valid_auc": auc(model.predict_margin(valid.features), valid.labels),
        "best_round": model.best_round,
        "rounds_run": model.history["rounds_run"],
        "n_train": train.n_rows,
        "n_valid": valid.n_rows,
        "constraints": {n: int(c) for n, c in zip(model.feature_names, model.constraints)},
    }
    _dump_json(metrics, _out(cfg, "metrics"))
    print(f"validation AUC {metrics['valid_auc']:.4f} at round {model.best_round}")
    return metrics


def cmd_surrogate(cfg) -> dict:
    model = _load_model(cfg)
    data = _load_data(cfg, model)
    rep = extract_surrogate(model, data, cfg["depth"])
    rep.cv = cv_stability(model, data, cfg["depth"], cfg["folds"], cfg["seed"])
    _dump_json(rep.to_dict(), _out(cfg, "out"))
    _out(cfg, "dot").write_text(export_dot(rep.tree, data.feature_names), encoding="utf-8")
    print(f"surrogate r2 {rep.fidelity.r2:.4f} rmse {rep.fidelity.rmse:.4f}")
    return rep.fidelity.to_dict()


def cmd_pd(cfg) -> dict:
    model = _load_model(cfg)
    data = _load_data(cfg, model)
    j = data.index_of(cfg["feature"])
    res = pd_ice(model, data, j, max_points=cfg["grid_points"])
    doc = res.to_dict()
    if cfg.get("feature2"):
        k = data.index_of(cfg["feature2"])
        grid_b = make_grid(data.features[:, k], cfg["grid_points"])
        doc["pd2"] = {"feature2": data.feature_names[k], "grid2": grid_b.tolist(),
                      "values": pd2(model, data, j, k, res.grid, grid_b).tolist()}
    _dump_json(doc, _out(cfg, "out"))
    _out(cfg, "csv").write_text(res.to_csv(), encoding="utf-8")
    chart = svg.line_chart(f"partial dependence: {res.feature_name}", res.grid,
                           [("pd", res.pd, True)], res.feature_name, "prediction")
    _out(cfg, "svg").write_text(chart, encoding="utf-8")
    return {"grid_points": int(res.grid.size)}


def cmd_ice(cfg) -> dict:
    model = _load_model(cfg)
    data = _load_data(cfg, model)
    ids = None
    if cfg.get("rows"):
        ids = [int(v) for v in cfg["rows"].split(",") if v.strip()]
    res = pd_ice(model, data, cfg["feature"], instance_ids=ids, max_points=cfg["grid_points"])
    _dump_json(res.to_dict(), _out(cfg, "out"))
    _out(cfg, "csv").write_text(res.to_csv(), encoding="utf-8")
    series = [(f"row {i}", c, False) for i, c in zip(res.instance_ids, res.ice)] + [("pd", res.pd, True)]
    chart = svg.line_chart(f"ICE: {res.feature_name}", res.grid, series, res.feature_name, "prediction")
    _out(cfg, "svg").write_text(chart, encoding="utf-8")
    return {"curves": int(len(res.instance_ids)), "max_divergence": float(res.divergence.max())}


def cmd_lime(cfg) -> dict:
    model = _load_model(cfg)
    data = _load_data(cfg, model)
    x = _row(cfg, data)
    lcfg = LimeConfig(n_samples=cfg["samples"], kernel_width=cfg.get("kernel_width"),
                      target_nonzero=cfg["target_nonzero"], discretize=tuple(_names(cfg.get("discretize"), data)),
                      bins_per_feature=cfg["bins"], seed=cfg["seed"])
    exp = explain_lime(model, x, data, lcfg)
    doc = exp.to_dict()
    doc["row"] = cfg["row"]
    if cfg["repeats"] >= 2:
        std = lime_cv_std(model, x, data, lcfg, cfg["repeats"])
        doc["contribution_std"] = {n: float(s) for n, s in zip(data.feature_names, std)}
    _dump_json(doc, _out(cfg, "out"))
    print(f"LIME local r2 {exp.local_r2:.4f}, {exp.nonzero_count} nonzero contributions")
    return {"local_r2": exp.local_r2}


def _explain(model, x, method, cfg):
    return attributions(model, x[None, :], method, n_permutations=cfg["permutations"], seed=cfg["seed"])




def cmd_shap(cfg) -> dict:
    model = _load_model(cfg)
    data = _load_data(cfg, model)
    x = _row(cfg, data)
    att = _explain(model, x, cfg["method"], cfg)
    doc = explanation_for(model, att, x).to_dict()
    doc["row"] = cfg["row"]
    _dump_json(doc, _out(cfg, "out"))
    return {"base_value": doc["base_value"]}


def cmd_summary(cfg) -> dict:
    model = _load_model(cfg)
    data = _load_data(cfg, model)
    rep = summarize(model, data, cfg["method"], cfg["budget"], cfg["seed"], cfg["permutations"])
    _dump_json(rep.to_dict(), _out(cfg, "out"))
    labels = [rep.feature_names[j] for j in rep.ordering]
    chart = svg.bar_chart("mean |Shapley value| (log-odds)", labels, rep.mean_abs_phi[rep.ordering])
    _out(cfg, "svg").write_text(chart, encoding="utf-8")
    for name in labels:
        print(f"{name}\t{rep.mean_abs_phi[rep.feature_names.index(name)]:.5f}")
    return {"top": labels[:3]}


def cmd_reasons(cfg) -> dict:
    model = _load_model(cfg)
    data = _load_data(cfg, model)
    x = _row(cfg, data)
    method = cfg["method"]
    if method == "auto":
        method = "exact" if model.n_features <= MAX_EXACT_FEATURES else "sampled"
    att = _explain(model, x, method, cfg)
    book = load_codebook(cfg["codebook"]) if cfg.get("codebook") else None
    exp = explanation_for(model, att, x)
    codes, short = reason_codes(exp, x, data.feature_names, cfg["k"], book)
    doc = {"row": cfg["row"], "method": method, "prediction_proba": exp.prediction_proba,
           "fewer_than_k": short, "codes": [c.to_dict() for c in codes]}
    _dump_json(doc, _out(cfg, "out"))
    for c in codes:
        print(f"{c.rank}. {c.text}")
    if short:
        print(f"only {len(codes)} feature(s) raise this prediction")
    return {"codes": len(codes)}


def cmd_compare(cfg) -> dict:
    model = _load_model(cfg)
    data = _load_data(cfg, model)
    x = _row(cfg, data)
    methods = ["sampled", "path"]
    if model.n_features <= MAX_EXACT_FEATURES:
        methods.insert(0, "exact")
    phi = {m: _explain(model, x, m, cfg).phi[0] for m in methods}
    rows = [{"feature": n, "value": float(x[j]), **{m: float(phi[m][j]) for m in methods}}
            for j, n in enumerate(data.feature_names)]
    ref = "exact" if "exact" in phi else "sampled"
    gaps = {f"{ref}_vs_{m}": float(np.abs(phi[ref] - phi[m]).max()) for m in methods if m != ref}
    _dump_json({"row": cfg["row"], "features": rows, "max_discrepancy": gaps}, _out(cfg, "out"))
    print("feature\t" + "\t".join(methods))
    for r in rows:
        print(r["feature"] + "\t" + "\t".join(f"{r[m]:+.5f}" for m in methods))
    for k, v in sorted(gaps.items()):
        print(f"max |{k.replace('_vs_', ' - ')}| = {v:.3g}")
    return gaps


COMMANDS = {
    "simulate": cmd_simulate, "train": cmd_train, "surrogate": cmd_surrogate, "pd": cmd_pd, "ice": cmd_ice,
    "lime": cmd_lime, "shap": cmd_shap, "summary": cmd_summary, "reasons": cmd_reasons, "compare": cmd_compare,
}


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        options = OPTIONS[args.command] + [Option("out-dir", str, ".")]
        file_values = read_config_file(args.config) if args.config else {}
        cfg = resolve(options, vars(args), file_values)
        for key in REQUIRED.get(args.command, ()):
            if cfg.get(key) is None:
                raise DataError(f"--{key.replace('_', '-')} is required")
        Path(cfg["out_dir"]).mkdir(parents=True, exist_ok=True)
        _dump_json({"command": args.command, **cfg}, Path(cfg["out_dir"]) / f"{args.command}.config.json")
        COMMANDS[args.command](cfg)
    except (ExplainKitError, OSError) as exc:
        print(f"explainkit {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
