"""Command-line front end: ``wallbench <command> [options]``.

Exit codes: 0 success, 1 numerical failure, 2 configuration error,
3 I/O error, 4 invalid submission.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import REGRESSORS, RunConfig, config_hash, load_config, validate
from .dataset import load_dataset, load_submission, save_dataset, save_submission
from .errors import ConfigError, DomainError, NumericalError, SubmissionError, ValidationError
from .flow import generate_doe, reynolds
from .metrics import ScoreReport, render_reports, score_submission
from .pipeline import (
    TUNING_SPACES,
    doe_from_config,
    fit_regressor,
    gas_from_config,
    generate_from_config,
    load_surrogate,
    oracle_from_config,
    predict_fields,
    resplit,
    save_surrogate,
)
from .tuning import random_search_tune

log = logging.getLogger("wallbench")

EXIT_OK, EXIT_NUMERIC, EXIT_CONFIG, EXIT_IO, EXIT_SUBMISSION = 0, 1, 2, 3, 4
MODEL_FILE = "model.wbm"


class IOFailure(Exception):
    pass


def _need(value, flag):
    if not value:
        raise ConfigError(f"missing required {flag}")
    return Path(value)


def _out_dir(args, cfg: RunConfig) -> Path:
    out = _need(args.out or cfg.get("output", "dir"), "--out (or [output] dir)")
    if not out.parent.exists():
        raise IOFailure(f"parent directory of {out} does not exist")
    out.mkdir(exist_ok=True)
    return out


def _dataset_dir(args, cfg):
    return _need(args.dataset or cfg.get("dataset", "path"), "--dataset (or [dataset] path)")


def _write_text(path: Path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _dump_json(path: Path, doc) -> None:
    _write_text(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")


# -- commands -----------------------------------------------------------------------

def cmd_generate(args, cfg):
    ds = generate_from_config(cfg)
    out = _out_dir(args, cfg)
    extra = {
        "generator": "wallbench-oracle",
        "config_hash": config_hash(cfg),
        "seeds": {"split": cfg.get("seeds", "split"), "geometry": cfg.get("oracle", "geometry_seed")},
        "n_p": ds.geometry.n_p,
        "n_conditions": len(ds.conditions),
        "n_train": len(ds.train_ids),
        "n_test": len(ds.test_ids),
    }
    save_dataset(ds, out, cfg.get("dataset", "include_test_fields"), extra)
    log.info("wrote %d conditions (%d train / %d test) to %s", len(ds.conditions), extra["n_train"],
             extra["n_test"], out)


def cmd_split(args, cfg):
    ds = resplit(load_dataset(_dataset_dir(args, cfg)), cfg.get("seeds", "split"))
    out = _out_dir(args, cfg)
    save_dataset(ds, out, True, {"seeds": {"split": cfg.get("seeds", "split")}})
    log.info("re-split into %d train / %d test at %s", len(ds.train_ids), len(ds.test_ids), out)


def cmd_train(args, cfg):
    ds = load_dataset(_dataset_dir(args, cfg))
    out = _out_dir(args, cfg)
    sur, score = fit_regressor(cfg, ds)
    save_surrogate(sur, out / MODEL_FILE)
    _dump_json(out / "train_summary.json", {"regressor": sur.kind, "validation_r2": score,
                                            "seeds": cfg.to_dict(["seeds"])["seeds"]})
    log.info("validation R^2 %s", {k: round(v, 4) for k, v in score.items()})


def _model_path(args):
    p = _need(args.model, "--model")
    return p / MODEL_FILE if p.is_dir() else p


def cmd_predict(args, cfg):
    ds = load_dataset(_dataset_dir(args, cfg))
    sur = load_surrogate(_model_path(args))
    out = _out_dir(args, cfg)
    by_id = ds.by_id
    ids = ds.test_ids
    pred = predict_fields(sur, ds, [by_id[i] for i in ids])
    if not np.isfinite(pred).all():
        raise NumericalError("model produced non-finite predictions")
    save_submission({cid: pred[k] for k, cid in enumerate(ids)}, out)
    log.info("wrote %d predicted fields to %s", len(ids), out)


def cmd_evaluate(args, cfg):
    ds = load_dataset(_dataset_dir(args, cfg))
    sub = load_submission(_need(args.submission, "--submission"), ds.test_ids, ds.geometry.n_p)
    report = score_submission(ds, sub, args.label or "", cfg.get("evaluate", "weighted_mean"))
    out = _out_dir(args, cfg)
    _write_text(out / "scores.json", report.to_json())
    _write_text(out / "scores.txt", report.render())
    sys.stdout.write(report.render())


def cmd_report(args, cfg):
    if not args.scores:
        raise ConfigError("report needs at least one --scores file")
    reports = []
    for p in args.scores:
        rep = ScoreReport.from_dict(json.loads(Path(p).read_text(encoding="utf-8")))
        rep.label = rep.label or Path(p).parent.name
        reports.append(rep)
    text = render_reports(reports)
    if args.out:
        _write_text(_out_dir(args, cfg) / "report.txt", text)
    sys.stdout.write(text)


def cmd_reynolds(args, cfg):
    gas = gas_from_config(cfg)
    seen, rows = set(), []
    for c in generate_doe(doe_from_config(cfg)):
        key = (c.mach, c.p_i)
        if key in seen:
            continue
        seen.add(key)
        rows.append((c.mach, c.p_i, reynolds(c, gas)))
    lines = [f"# reference length L = {gas.l_ref:.9g} m", f"{'M':>6} {'p_i':>10} {'Re':>14}"]
    lines += [f"{m:>6.2f} {p:>10.4g} {re:>14.6e}" for m, p, re in rows]
    text = "\n".join(lines) + "\n"
    if args.out:
        out = _out_dir(args, cfg)
        body = "mach,p_i,re\n" + "".join(f"{m:.17g},{p:.17g},{re:.17g}\n" for m, p, re in rows)
        _write_text(out / "reynolds.csv", body)
    sys.stdout.write(text)


def cmd_tune(args, cfg):
    ds = load_dataset(_dataset_dir(args, cfg))
    out = _out_dir(args, cfg)
    name = cfg.get("regressor", "name")
    base = {k: v for k, v in cfg["regressor"].items()}

    def evaluate(params):
        for k, v in params.items():
            cfg.set("regressor", k, tuple(v) if isinstance(v, list) else v)
        _, score = fit_regressor(cfg, ds)
        for k in params:
            cfg.set("regressor", k, base[k])
        return float(np.mean(list(score.values())))

    best, trials = random_search_tune(TUNING_SPACES[name], cfg.get("tune", "budget"), cfg.get("seeds", "tune"),
                                      evaluate, out / "tune_trials.json")
    lines = ["[regressor]", f"name = {name}"]
    for k in sorted(best):
        v = best[k]
        if isinstance(v, (tuple, list)):
            v = ", ".join(str(x) for x in v)
        lines.append(f"{k} = {'' if v is None else v}")
    _write_text(out / "best.ini", "\n".join(lines) + "\n")
    log.info("best parameters %s", best)


COMMANDS = {
    "generate": (cmd_generate, "write a synthetic oracle dataset with its train/test split"),
    "split": (cmd_split, "re-draw the train/test split of an existing dataset"),
    "train": (cmd_train, "fit a regressor on the train split"),
    "predict": (cmd_predict, "write a submission for the test split"),
    "evaluate": (cmd_evaluate, "score a submission against the dataset"),
    "report": (cmd_report, "render one or more score files as tables"),
    "reynolds": (cmd_reynolds, "tabulate the Reynolds number over the DoE"),
    "tune": (cmd_tune, "random-search hyperparameters of a regressor"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wallbench", description="Wall-field surrogate benchmark.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_) in COMMANDS.items():
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="INI run configuration")
        p.add_argument("--seed", type=int, help="seed of this command (split for generate/split, "
                                                "training for train, trial sampling for tune)")
        p.add_argument("--regressor", help=f"one of: {', '.join(REGRESSORS)}")
        p.add_argument("--dataset", help="dataset directory")
        p.add_argument("--out", help="output directory")
        p.add_argument("--model", help="model file or training output directory (predict)")
        p.add_argument("--submission", help="submission directory (evaluate)")
        p.add_argument("--scores", nargs="*", help="scores.json files (report)")
        p.add_argument("--label", help="model label in score reports")
        p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    return parser


_SEED_KEY = {"generate": "split", "split": "split", "train": "train", "tune": "tune"}


def _apply_overrides(args, cfg: RunConfig) -> None:
    if args.seed is not None and args.command in _SEED_KEY:
        cfg.set("seeds", _SEED_KEY[args.command], args.seed)
    if args.regressor is not None:
        cfg.set("regressor", "name", args.regressor)
    if args.dataset is not None:
        cfg.set("dataset", "path", args.dataset)
    if args.out is not None:
        cfg.set("output", "dir", args.out)
    validate(cfg)
    try:
        gas_from_config(cfg)
        oracle_from_config(cfg)
        doe_from_config(cfg).validate()
    except (ValidationError, DomainError) as exc:
        raise ConfigError(str(exc)) from exc


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    func = COMMANDS[args.command][0]
    try:
        cfg = load_config(args.config)
        _apply_overrides(args, cfg)
        func(args, cfg)
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except SubmissionError as exc:
        log.error("invalid submission: %s", exc)
        return EXIT_SUBMISSION
    except (IOFailure, OSError) as exc:
        log.error("I/O error: %s", exc)
        return EXIT_IO
    except ValidationError as exc:
        log.error("invalid input: %s", exc)
        return EXIT_IO
    except NumericalError as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
