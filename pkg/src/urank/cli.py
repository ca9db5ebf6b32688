"""Experiment harness: ``urank <subcommand> --config cfg.json``.

Every subcommand validates its JSON config against a schema (unknown keys
are rejected), builds the models and scorers it needs, and only then
touches the filesystem.  Results land in ``<out>/<subcommand>/<hash>/`` as
``result.csv`` and ``result.json``, which depend only on the config; wall
times and environment details go to ``meta.json``.

Flag precedence: ``--seed`` and ``--out`` override the config values, and
``--jobs`` defaults to ``$URANK_JOBS`` (then 1).

Exit codes: 0 success, 2 config error, 3 numerical or model failure,
4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import functools
import hashlib
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

import jsonschema
import numpy as np

from urank import _kernels
from urank.bounds import (
    fast_rate_bound,
    first_order_bound,
    moment_tail_harness,
    rademacher_exact,
    rademacher_mc,
    tail_bounds,
    vc_rademacher_bound,
)
from urank.core import (
    Dataset,
    FiniteModel,
    load_dataset,
    model_from_dict,
    replicate_seed,
    sample_dataset,
    write_dataset_csv,
)
from urank.errors import ConfigError, DatasetFormatError, UrankError
from urank.learners import (
    BoostConfig,
    KernelConfig,
    boost_rank,
    cost_from_name,
    erm_finite,
    erm_stumps,
    kernel_rank,
    midpoint_thresholds,
)
from urank.risk import (
    auc,
    bayes_risk,
    empirical_risk,
    roc_curve,
    true_auc,
    true_risk,
    true_roc,
)
from urank.scoring import (
    FromScorer,
    GaussianPairKernel,
    KernelExpansion,
    SignRule,
    Stump,
    bayes_rule,
    bayes_scorer,
    scorer_from_dict,
)
from urank.ustat import (
    constant_kernel,
    hoeffding_decompose,
    label_product_kernel,
    projected_kernel,
    ranking_kernel,
    split_estimate,
    u_stat,
)

SUBCOMMANDS = ("generate", "train", "eval", "rates", "variance", "decompose", "bounds", "roc")
EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 2, 3, 4
U64 = 2**64

# ---------------------------------------------------------------------------
# schemas

_NUM = {"type": "number"}
_POS_INT = {"type": "integer", "minimum": 1}
_NUM_LIST = {"type": "array", "items": _NUM}
_POINTS = {"type": "array", "minItems": 1, "items": {"anyOf": [_NUM, _NUM_LIST]}}


def _obj(required, **props):
    return {"type": "object", "required": list(required), "properties": props, "additionalProperties": False}


def _tagged(tag, required=(), **props):
    return _obj(("type",) + tuple(required), type={"const": tag}, **props)


_DEFS = {
    "model": {"oneOf": [
        _tagged("m1"),
        _tagged("bipartite", ("points", "eta"), points=_POINTS, probs=_NUM_LIST, eta=_NUM_LIST),
        _tagged("noiseless", ("points", "m"), points=_POINTS, probs=_NUM_LIST, m=_NUM_LIST),
        _tagged("noisy", ("points", "m", "sigma"), points=_POINTS, probs=_NUM_LIST, m=_NUM_LIST,
                sigma=_NUM_LIST),
        _tagged("grid", ("size", "law", "profile"), size=_POS_INT, low=_NUM, high=_NUM,
                law={"enum": ["bipartite", "noiseless", "noisy"]}, sigma=_NUM,
                profile={"oneOf": [
                    _obj(("shape",), shape={"const": "step"}, at=_NUM),
                    _obj(("shape", "start", "stop"), shape={"const": "linear"}, start=_NUM, stop=_NUM),
                ]}),
    ]},
    "scorer": {"oneOf": [
        _tagged("bayes"),
        _tagged("stump", ("dim", "threshold"), dim={"type": "integer", "minimum": 0}, threshold=_NUM,
                direction={"enum": [1, -1]}),
        _tagged("linear", ("weights",), weights=_NUM_LIST),
        _tagged("table", ("points", "scores"), points=_POINTS, scores=_NUM_LIST),
        _tagged("ensemble", ("terms",), terms={"type": "array", "items": _obj(
            ("weight", "base"), weight=_NUM, base={"$ref": "#/$defs/scorer"})}),
        _tagged("kernel_expansion", ("coefs", "anchors", "kernel"), coefs=_NUM_LIST,
                anchors={"type": "array", "items": _NUM_LIST},
                kernel=_obj(("type", "bandwidth"), type={"const": "gaussian"},
                            bandwidth={"type": "number", "exclusiveMinimum": 0})),
    ]},
    "thresholds": {"anyOf": [{"enum": ["data", "support"]},
                             {"type": "array", "items": {"anyOf": [{"type": "null"}, _NUM_LIST]}}]},
    "rule_class": {"oneOf": [
        _tagged("stumps", (), thresholds={"$ref": "#/$defs/thresholds"}),
        _tagged("finite", ("rules",), rules={"type": "array", "items": {"$ref": "#/$defs/scorer"}},
                include_bayes={"type": "boolean"}),
    ]},
    "data": _obj(("path",), path={"type": "string"}, format={"enum": ["csv", "json"]}),
    "cost": {"enum": ["exponential", "logit", "hinge"]},
    "pair_kernel": {"oneOf": [
        _tagged("ranking", ("scorer",), scorer={"$ref": "#/$defs/scorer"}, projected={"type": "boolean"}),
        _tagged("constant", ("value",), value=_NUM),
        _tagged("label_product"),
    ]},
    "constants": _obj((), C={"type": "number", "exclusiveMinimum": 0},
                      c={"type": "number", "exclusiveMinimum": 0}),
}

_COMMON = {
    "seed": {"type": "integer", "minimum": 0, "maximum": U64 - 1},
    "out": {"type": "string"},
    "jobs": _POS_INT,
}
_N = {"type": "integer", "minimum": 2}
_REF = {k: {"$ref": f"#/$defs/{k}"} for k in _DEFS}


def _schema(required, **props):
    schema = _obj(required, **_COMMON, **props)
    schema["$defs"] = _DEFS
    return schema


SCHEMAS = {
    "generate": _schema(("model", "n"), model=_REF["model"], n=_N),
    "train": _schema(("learner",), model=_REF["model"], data=_REF["data"], n=_N, learner={"oneOf": [
        _tagged("stumps", (), thresholds=_REF["thresholds"]),
        _tagged("finite", ("rules",), rules={"type": "array", "minItems": 1, "items": _REF["scorer"]},
                include_bayes={"type": "boolean"}),
        _tagged("boost", (), rounds=_POS_INT, budget={"type": "number", "exclusiveMinimum": 0},
                step={"enum": ["line_search", "fixed"]}, step_size={"type": "number", "exclusiveMinimum": 0},
                budget_mode={"enum": ["clip", "stop"]}, cost=_REF["cost"], thresholds=_REF["thresholds"]),
        _tagged("kernel", (), radius={"type": "number", "exclusiveMinimum": 0}, steps=_POS_INT,
                step0={"type": "number", "exclusiveMinimum": 0},
                bandwidth={"type": "number", "exclusiveMinimum": 0},
                keep={"enum": ["best", "final"]}, cost=_REF["cost"]),
    ]}),
    "eval": _schema((), model=_REF["model"], data=_REF["data"], n=_N, scorer=_REF["scorer"],
                    scorer_file={"type": "string"}),
    "rates": _schema(("model", "class", "sizes"), model=_REF["model"], **{"class": _REF["rule_class"]},
                     sizes={"type": "array", "minItems": 1, "items": _N}, replicates=_POS_INT,
                     require_bayes_in_class={"type": "boolean"}),
    "variance": _schema(("model", "kernel", "n"), model=_REF["model"], kernel=_REF["pair_kernel"], n=_N,
                        replicates={"type": "integer", "minimum": 100},
                        bootstrap={"type": "integer", "minimum": 100}),
    "decompose": _schema(("model", "kernel", "n"), model=_REF["model"], kernel=_REF["pair_kernel"], n=_N),
    "bounds": _schema(("model", "n"), model=_REF["model"], n=_N, mode={"enum": ["formulas", "harness"]},
                      **{"class": _REF["rule_class"]}, draws=_POS_INT, delta={"type": "number"},
                      V=_POS_INT, alpha=_NUM, t=_NUM_LIST,
                      sigma2={"type": "number", "minimum": 0}, s2={"type": "number", "minimum": 0}, constants=_REF["constants"],
                      scorer=_REF["scorer"], replicates={"type": "integer", "minimum": 100}),
    "roc": _schema(("scorer",), model=_REF["model"], data=_REF["data"], n=_N,
                   mode={"enum": ["true", "empirical"]}, scorer=_REF["scorer"]),
}


def validate_config(sub: str, config: dict) -> None:
    validator = jsonschema.Draft202012Validator(SCHEMAS[sub])
    err = jsonschema.exceptions.best_match(validator.iter_errors(config))
    if err is not None:
        where = "/".join(map(str, err.absolute_path)) or "<root>"
        raise ConfigError(f"{sub} config invalid at {where}: {err.message}")


def canonical(config: dict) -> str:
    return json.dumps(config, sort_keys=True, separators=(",", ":"))


def config_hash(config: dict) -> str:
    """Hash of the result-determining part of a config (``out`` and ``jobs`` excluded)."""
    core = {k: v for k, v in config.items() if k not in ("out", "jobs")}
    return hashlib.sha256(canonical(core).encode()).hexdigest()[:12]


# ---------------------------------------------------------------------------
# building objects from configs


@functools.lru_cache(maxsize=8)
def _model_cached(text: str):
    return model_from_dict(json.loads(text))


def build_model(spec: dict):
    return _model_cached(canonical(spec))


def build_scorer(spec: dict, model=None):
    if spec["type"] == "bayes":
        if model is None:
            raise ConfigError("scorer type 'bayes' needs a model")
        return bayes_scorer(model)
    return scorer_from_dict(spec)


def _threshold_grids(spec, model, d):
    if spec is None or spec == "data":
        return None
    if spec == "support":
        if model is None:
            raise ConfigError("'support' thresholds need a finite model")
        return [midpoint_thresholds(model.points[:, k]) for k in range(model.d)]
    if len(spec) != d:
        raise ConfigError(f"need {d} threshold grids, got {len(spec)}")
    return [None if g is None else np.asarray(g, float) for g in spec]


def build_rules(spec: dict, model):
    rules = [FromScorer(build_scorer(rule_spec, model)) for rule_spec in spec["rules"]]
    if spec.get("include_bayes"):
        rules.append(bayes_rule(model))
    if not rules:
        raise ConfigError("rule class is empty")
    return rules


def build_pair_kernel(spec: dict, model):
    kind = spec["type"]
    if kind == "constant":
        return constant_kernel(float(spec["value"]))
    if kind == "label_product":
        return label_product_kernel()
    kernel = ranking_kernel(FromScorer(build_scorer(spec["scorer"], model)))
    return projected_kernel(kernel, model) if spec.get("projected") else kernel


def stump_class_contains_bayes(model, grids) -> bool:
    """True when some stump in the grid attains the Bayes risk."""
    live = model.probs > 0
    scores = model.bayes_scores()[live]
    pts = model.points[live]
    levels = np.unique(scores)
    if levels.size == 1:
        return True
    if levels.size > 2:
        return False
    hi = scores == levels[1]
    for dim in range(model.d):
        grid = np.asarray(grids[dim], float)
        x = pts[:, dim]
        for low, high in ((x[~hi].max(), x[hi].min()), (x[hi].max(), x[~hi].min())):
            if np.any((grid >= low) & (grid < high)):
                return True
    return False


def _get_data(config: dict, model, salt: int = 0):
    if "data" in config:
        return load_dataset(config["data"]["path"], config["data"].get("format"))
    if model is None or "n" not in config:
        raise ConfigError("provide either 'data' or both 'model' and 'n'")
    return sample_dataset(model, config["n"], replicate_seed(config.get("seed", 0), salt))


# ---------------------------------------------------------------------------
# parallel replicates


def _map(func, tasks, jobs: int):
    if jobs <= 1 or len(tasks) <= 1:
        return [func(task) for task in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(func, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))


# ---------------------------------------------------------------------------
# subcommands; each returns (csv rows, json document)


def cmd_generate(config, jobs):
    model = build_model(config["model"])
    data = sample_dataset(model, config["n"], config.get("seed", 0))
    return data, {"n": data.n, "d": data.d, "model": model.to_dict()}


def cmd_train(config, jobs):
    model = build_model(config["model"]) if "model" in config else None
    learner = config["learner"]
    data = _get_data(config, model)
    kind = learner["type"]
    doc = {"learner": kind, "n": data.n}
    if kind == "stumps":
        stump, risk = erm_stumps(data, _threshold_grids(learner.get("thresholds"), model, data.d))
        doc.update(scorer=stump.to_dict(), empirical_risk=risk)
        return [("estimator", "value"), ("empirical_risk", repr(risk))], doc
    if kind == "finite":
        rules = build_rules(learner, model)
        rule, risk = erm_finite(rules, data)
        index = rules.index(rule)
        doc.update(rule_index=index, empirical_risk=risk,
                   scorer=rule.scorer.to_dict() if isinstance(rule, FromScorer) else {"type": "bayes"})
        return [("estimator", "value"), ("rule_index", str(index)), ("empirical_risk", repr(risk))], doc
    phi = cost_from_name(learner.get("cost", "exponential" if kind == "boost" else "hinge"))
    if kind == "boost":
        cfg = BoostConfig(rounds=learner.get("rounds", 20),
                          thresholds=_threshold_grids(learner.get("thresholds"), model, data.d),
                          budget=learner.get("budget"), step=learner.get("step", "line_search"),
                          step_size=learner.get("step_size", 0.1), budget_mode=learner.get("budget_mode", "clip"))
        result = boost_rank(data, cfg, phi)
        rows = [("round", "A_n", "base", "weight")]
        rows += [(str(step), repr(a), b, repr(float(w))) for step, a, b, w in result.log]
    else:
        bw = learner.get("bandwidth")
        cfg = KernelConfig(radius=learner.get("radius", 1.0), steps=learner.get("steps", 200),
                           step0=learner.get("step0", 1.0), keep=learner.get("keep", "best"),
                           kernel=None if bw is None else GaussianPairKernel(bw))
        result = kernel_rank(data, cfg, phi)
        rows = [("step", "A_n", "norm_sq")]
        rows += [(str(step), repr(a), repr(float(sq))) for step, a, sq in result.log]
    rule = FromScorer(result.scorer) if kind == "boost" else SignRule(result.scorer)
    doc.update(result.to_dict(), cost=phi.name, empirical_risk=empirical_risk(rule, data))
    return rows, doc


def cmd_eval(config, jobs):
    model = build_model(config["model"]) if "model" in config else None
    if "scorer" in config:
        spec = config["scorer"]
    elif "scorer_file" in config:
        spec = json.loads(Path(config["scorer_file"]).read_text())["scorer"]
    else:
        raise ConfigError("provide 'scorer' or 'scorer_file'")
    scorer = build_scorer(spec, model)
    data = _get_data(config, model)
    pairwise = isinstance(scorer, KernelExpansion)
    rule = SignRule(scorer) if pairwise else FromScorer(scorer)
    metrics = {"n": data.n, "empirical_risk": empirical_risk(rule, data)}
    if not pairwise and set(np.unique(data.y)) == {-1.0, 1.0}:
        metrics["auc"] = auc(scorer(data.X), data.y)
    if model is not None and isinstance(model, FiniteModel):
        metrics["true_risk"] = true_risk(rule, model)
        metrics["bayes_risk"] = bayes_risk(model)
        metrics["excess_risk"] = metrics["true_risk"] - metrics["bayes_risk"]
        if model.kind == "bipartite" and not pairwise:
            metrics["true_auc"] = true_auc(model, scorer)
    rows = [("metric", "value")] + [(k, repr(v)) for k, v in sorted(metrics.items())]
    return rows, metrics


def _rates_cell(task):
    config, n, rep = task
    model = build_model(config["model"])
    spec = config["class"]
    data = sample_dataset(model, n, replicate_seed(config.get("seed", 0), rep))
    if spec["type"] == "stumps":
        scorer, l_n = erm_stumps(data, _threshold_grids(spec.get("thresholds"), model, data.d))
        rule = FromScorer(scorer)
    else:
        rule, l_n = erm_finite(build_rules(spec, model), data)
    return n, rep, l_n, true_risk(rule, model) - bayes_risk(model)


def cmd_rates(config, jobs):
    model = build_model(config["model"])
    if not isinstance(model, FiniteModel):
        raise ConfigError("rates need a finite model")
    spec = config["class"]
    lstar = bayes_risk(model)
    if config.get("require_bayes_in_class"):
        if spec["type"] == "stumps":
            grids = _threshold_grids(spec.get("thresholds", "support"), model, model.d)
            if grids is None:
                raise ConfigError("zero-approximation mode needs fixed thresholds, not data midpoints")
            inside = stump_class_contains_bayes(model, grids)
        else:
            inside = any(true_risk(rep, model) - lstar <= 1e-12 for rep in build_rules(spec, model))
        if not inside:
            raise ConfigError("the rule class does not contain a Bayes rule")
    n_reps = config.get("replicates", 1)
    tasks = [(config, n, rep) for n in config["sizes"] for rep in range(n_reps)]
    cells = sorted(_map(_rates_cell, tasks, jobs), key=lambda cell: (cell[0], cell[1]))
    rows = [("n", "replicate", "estimator", "value")]
    for n, rep, l_n, ex in cells:
        rows.append((str(n), str(rep), "empirical_risk", repr(l_n)))
        rows.append((str(n), str(rep), "excess_risk", repr(ex)))
    summary = []
    for n in sorted(set(config["sizes"])):
        ex = np.array([cell[3] for cell in cells if cell[0] == n])
        summary.append({"n": n, "mean_excess": float(ex.mean()),
                        "se_excess": float(ex.std(ddof=1) / math.sqrt(ex.size)) if ex.size > 1 else None})
    pos = [(cell_summary["n"], cell_summary["mean_excess"]) for cell_summary in summary if cell_summary["mean_excess"] > 0]
    slope = None
    if len(pos) >= 2:
        slope = float(np.polyfit(np.log([p[0] for p in pos]), np.log([p[1] for p in pos]), 1)[0])
    return rows, {"bayes_risk": lstar, "cells": summary, "slope": slope, "replicates": n_reps}


def _variance_cell(task):
    config, rep = task
    model = build_model(config["model"])
    kernel = build_pair_kernel(config["kernel"], model)
    data = sample_dataset(model, config["n"], replicate_seed(config.get("seed", 0), rep))
    return rep, u_stat(kernel, data), split_estimate(kernel, data)


def variance_summary(u, split, bootstrap: int, seed: int) -> dict:
    """Sample variances, their ratio and a paired percentile bootstrap CI."""
    u, split = np.asarray(u, float), np.asarray(split, float)
    vu, vs = float(u.var(ddof=1)), float(split.var(ddof=1))
    ratio = vu / vs if vs > 0 else None
    ci = None
    if ratio is not None:
        rng = np.random.default_rng(seed)
        idx = rng.integers(0, u.size, size=(bootstrap, u.size))
        bu, bs = u[idx].var(axis=1, ddof=1), split[idx].var(axis=1, ddof=1)
        ok = bs > 0
        ci = [float(v) for v in np.percentile(bu[ok] / bs[ok], [2.5, 97.5])]
    return {"var_u": vu, "var_split": vs, "ratio": ratio, "ci95": ci}


def cmd_variance(config, jobs):
    n_reps = config.get("replicates", 2000)
    if n_reps < 100:
        raise ConfigError("replicates must be at least 100")
    model = build_model(config["model"])
    build_pair_kernel(config["kernel"], model)
    cells = sorted(_map(_variance_cell, [(config, rep) for rep in range(n_reps)], jobs))
    n = config["n"]
    rows = [("n", "replicate", "estimator", "value")]
    for rep, u, split_val in cells:
        rows.append((str(n), str(rep), "u_statistic", repr(u)))
        rows.append((str(n), str(rep), "split", repr(split_val)))
    doc = variance_summary([cell[1] for cell in cells], [cell[2] for cell in cells], config.get("bootstrap", 1000),
                           replicate_seed(config.get("seed", 0), n_reps))
    doc.update(n=n, replicates=n_reps)
    return rows, doc


def cmd_decompose(config, jobs):
    model = build_model(config["model"])
    kernel = build_pair_kernel(config["kernel"], model)
    data = sample_dataset(model, config["n"], config.get("seed", 0))
    parts = hoeffding_decompose(kernel, data, model)
    rows = [("quantity", "value")]
    rows += [(k, repr(float(getattr(parts, k)))) for k in ("mean", "t_n", "w_n", "u_n", "residual")]
    return rows, parts.to_dict()


def cmd_bounds(config, jobs):
    model = build_model(config["model"])
    n = config["n"]
    consts = config.get("constants", {})
    moment_scale, scale = consts.get("C", 30.0), consts.get("c", 1.0)
    t_grid = config.get("t", [round(0.02 * k, 2) for k in range(1, 16)])
    if config.get("mode", "formulas") == "harness":
        spec = config.get("scorer", {"type": "bayes"})
        kernel = ranking_kernel(FromScorer(build_scorer(spec, model)))
        report = moment_tail_harness([projected_kernel(kernel, model)], model, n, config.get("replicates", 1000),
                                     moment_scale, config.get("seed", 0), t_grid, source=kernel, scale=scale)
        return list(report.csv_rows()), report.to_dict()
    delta = config.get("delta", 0.05)
    vc_dim, alpha = config.get("V", 1), config.get("alpha", 0.0)
    spec = config.get("class", {"type": "finite", "rules": [], "include_bayes": True})
    if spec["type"] == "stumps":
        grids = _threshold_grids(spec.get("thresholds", "support"), model, model.d)
        if grids is None:
            raise ConfigError("bounds need fixed stump thresholds")
        rules = [FromScorer(Stump(k, float(dev), direction)) for k, g in enumerate(grids) for dev in g for direction in (1, -1)]
    else:
        rules = build_rules(spec, model)
    data = sample_dataset(model, n, config.get("seed", 0))
    seed = replicate_seed(config.get("seed", 0), 1)
    values = {"rademacher_mc": rademacher_mc(rules, data, config.get("draws", 1000), seed)}
    if n // 2 <= 12:
        values["rademacher_exact"] = rademacher_exact(rules, data)
    values["first_order"] = first_order_bound(values["rademacher_mc"], n, delta)
    values["vc_rademacher"] = vc_rademacher_bound(vc_dim, n, scale)
    values["fast_rate"] = fast_rate_bound(vc_dim, n, delta, alpha, scale)
    rows = [("quantity", "t", "value")] + [(k, "", repr(v)) for k, v in values.items()]
    tails = []
    for dev in t_grid:
        b = tail_bounds(n, dev, config.get("sigma2", 0.25), config.get("s2", 0.25), scale)
        tails.append({"t": dev, "hoeffding": b.hoeffding, "bernstein": b.bernstein, "dpg": b.dpg})
        rows += [(k, repr(float(dev)), repr(getattr(b, k))) for k in ("hoeffding", "bernstein", "dpg")]
    values["tails"] = tails
    return rows, values


def cmd_roc(config, jobs):
    model = build_model(config["model"]) if "model" in config else None
    scorer = build_scorer(config["scorer"], model)
    if config.get("mode", "true") == "true":
        if model is None:
            raise ConfigError("mode 'true' needs a model")
        curve = true_roc(model, scorer)
        area = true_auc(model, scorer)
    else:
        data = _get_data(config, model)
        scores = scorer(data.X)
        curve = roc_curve(scores, data.y)
        area = auc(scores, data.y)
    doc = curve.to_dict()
    doc["auc"] = area
    return list(curve.csv_rows()), doc


HELP = {
    "generate": "sample a dataset from a model",
    "train": "fit a ranking rule or scorer",
    "eval": "empirical and exact metrics of a scorer",
    "rates": "excess risk of ERM versus sample size",
    "variance": "U-statistic versus split-sample variance",
    "decompose": "Hoeffding decomposition of a kernel on one sample",
    "bounds": "bound formulas and the tail harness",
    "roc": "ROC curve and AUC of a scorer",
}

COMMANDS = {
    "generate": cmd_generate, "train": cmd_train, "eval": cmd_eval, "rates": cmd_rates,
    "variance": cmd_variance, "decompose": cmd_decompose, "bounds": cmd_bounds, "roc": cmd_roc,
}


# ---------------------------------------------------------------------------
# output


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def dump_json(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_outputs(outdir: Path, rows, doc: dict, meta: dict) -> None:
    outdir.mkdir(parents=True, exist_ok=True)
    with open(outdir / "result.csv", "w", newline="") as fh:
        if isinstance(rows, Dataset):
            write_dataset_csv(rows, fh)
        else:
            csv.writer(fh, lineterminator="\n").writerows(rows)
    (outdir / "result.json").write_text(dump_json(doc))
    (outdir / "meta.json").write_text(dump_json(meta))


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="urank", description="Pairwise ranking experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, help=HELP[name])
        p.add_argument("--config", type=Path, help="JSON config file")
        p.add_argument("--seed", type=int, help="base seed (overrides the config)")
        p.add_argument("--out", type=str, help="output root (overrides the config)")
        p.add_argument("--force", action="store_true", help="overwrite an existing result directory")
        p.add_argument("--jobs", type=int, default=None, help="worker processes (default $URANK_JOBS or 1)")
    return parser


def _load_config(args) -> dict:
    if args.config is None:
        return {}
    text = args.config.read_text()
    try:
        config = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    if not isinstance(config, dict):
        raise ConfigError("config must be a JSON object")
    return config


def _resolve_jobs(flag) -> int:
    if flag is not None:
        jobs = flag
    else:
        env = os.environ.get("URANK_JOBS", "1")
        try:
            jobs = int(env)
        except ValueError:
            raise ConfigError(f"URANK_JOBS must be an integer, got {env!r}") from None
    if jobs < 1:
        raise ConfigError("jobs must be at least 1")
    return jobs


def _check_objects(config: dict) -> None:
    """Build the model and scorer once so that bad values count as config errors."""
    try:
        model = build_model(config["model"]) if "model" in config else None
        if "scorer" in config:
            build_scorer(config["scorer"], model)
    except ConfigError:
        raise
    except (UrankError, ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None


def run(sub: str, config: dict, jobs: int = 1, force: bool = False) -> Path:
    """Validate, compute and write one subcommand; returns the result directory."""
    validate_config(sub, config)
    out_root = Path(config.get("out", "results"))
    digest = config_hash(config)
    outdir = out_root / sub / digest
    if (outdir / "result.json").exists() and not force:
        raise FileExistsError(f"{outdir} already holds results; pass --force to overwrite")
    _check_objects(config)
    started = datetime.now(timezone.utc).isoformat()
    t0 = time.perf_counter()
    rows, doc = COMMANDS[sub](config, jobs)
    doc = dict(doc, config_hash=digest, subcommand=sub)
    meta = {"config_hash": digest, "subcommand": sub, "started_utc": started,
            "wall_time_s": time.perf_counter() - t0, "jobs": jobs, "kernel_backend": _kernels.BACKEND,
            "config": config}
    write_outputs(outdir, rows, doc, meta)
    return outdir


def _fail(code: int, exc: BaseException) -> int:
    msg = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    print(json.dumps(msg, sort_keys=True), file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = _load_config(args)
        if args.seed is not None:
            if not 0 <= args.seed < U64:
                raise ConfigError("seed must lie in [0, 2**64)")
            config["seed"] = args.seed
        if args.out is not None:
            config["out"] = args.out
        jobs = _resolve_jobs(args.jobs if args.jobs is not None else config.get("jobs"))
        outdir = run(args.command, config, jobs, args.force)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, exc)
    except (OSError, DatasetFormatError) as exc:
        return _fail(EXIT_IO, exc)
    except (UrankError, ArithmeticError, ValueError) as exc:
        return _fail(EXIT_NUMERIC, exc)
    print(outdir)
    return 0


if __name__ == "__main__":
    sys.exit(main())
