"""Challenge scoring: flow-weighted R^2 and worst relative MAE (wrMAE)."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .dataset import VARIABLES, Dataset, WallField
from .errors import NumericalError, SubmissionError, ValidationError
from .flow import FlowCondition, flow_weight

__all__ = ["r2_weighted", "rmae_table", "wrmae", "ScoreReport", "score_fields", "score_submission"]

LABELS = {"cp": "Cp", "cfx": "Cfx", "cfy": "Cfy", "cfz": "Cfz"}


def _as3d(a):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 2:
        a = a[:, :, None]
    if a.ndim != 3:
        raise ValidationError(f"expected (n_flows, n_p[, n_vars]) array, got shape {a.shape}")
    return a


def r2_weighted(truth, pred, weights, weighted_mean: bool = False) -> np.ndarray:
    """Per-variable R^2 with per-flow weights.

    ``truth``/``pred`` are (n_flows, n_p) or (n_flows, n_p, n_vars). The
    reference mean is taken over all points and flows, unweighted unless
    ``weighted_mean``.
    """
    T, P = _as3d(truth), _as3d(pred)
    if T.shape != P.shape:
        raise ValidationError(f"truth shape {T.shape} != prediction shape {P.shape}")
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (T.shape[0],):
        raise ValidationError(f"need one weight per flow ({T.shape[0]}), got shape {w.shape}")
    wb = w[:, None, None]
    if weighted_mean:
        ybar = np.sum(wb * T, axis=(0, 1)) / (np.sum(w) * T.shape[1])
    else:
        ybar = T.mean(axis=(0, 1))
    ss_res = np.sum(wb * (T - P) ** 2, axis=(0, 1))
    ss_tot = np.sum(wb * (T - ybar) ** 2, axis=(0, 1))
    if np.any(ss_tot == 0):
        raise NumericalError("R^2 undefined: truth is constant for at least one variable")
    return 1.0 - ss_res / ss_tot


def rmae_table(truth, pred, flow_names=None) -> np.ndarray:
    """Relative MAE per flow and variable, shape (n_flows, n_vars)."""
    T, P = _as3d(truth), _as3d(pred)
    if T.shape != P.shape:
        raise ValidationError(f"truth shape {T.shape} != prediction shape {P.shape}")
    denom = np.sum(np.abs(T), axis=1)
    zero = np.argwhere(denom == 0)
    if zero.size:
        f, v = zero[0]
        name = flow_names[f] if flow_names is not None else f"#{f}"
        raise NumericalError(f"rMAE undefined for flow {name} (variable {v}): truth is identically zero")
    return np.sum(np.abs(T - P), axis=1) / denom


def wrmae(truth, pred, weights, flow_names=None) -> tuple[np.ndarray, np.ndarray]:
    """Per-variable max rMAE over flows of weight >= 1, and the arg-max flow index."""
    w = np.asarray(weights, dtype=np.float64)
    reduced = np.flatnonzero(w >= 1.0)
    if reduced.size == 0:
        raise ValidationError("wrMAE needs at least one flow with weight 1")
    table = rmae_table(truth, pred, flow_names)
    sub = table[reduced]
    arg = reduced[np.argmax(sub, axis=0)]
    return sub.max(axis=0), arg


@dataclass
class ScoreReport:
    variables: tuple[str, ...]
    r2: dict[str, float]
    wrmae: dict[str, float]
    worst_flow: dict[str, dict]
    rmae: dict[str, dict[str, float]] = field(default_factory=dict)
    n_test: int = 0
    n_reduced: int = 0
    label: str = ""

    @property
    def r2_mean(self) -> float:
        return float(np.mean([self.r2[v] for v in self.variables]))

    @property
    def wrmae_mean(self) -> float:
        return float(np.mean([self.wrmae[v] for v in self.variables]))

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "variables": list(self.variables),
            "n_test": self.n_test,
            "n_reduced": self.n_reduced,
            "r2": {**self.r2, "mean": self.r2_mean},
            "wrmae": {**self.wrmae, "mean": self.wrmae_mean},
            "worst_flow": self.worst_flow,
            "rmae": self.rmae,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "ScoreReport":
        vars_ = tuple(d["variables"])
        return cls(
            vars_,
            {v: d["r2"][v] for v in vars_},
            {v: d["wrmae"][v] for v in vars_},
            d["worst_flow"],
            d.get("rmae", {}),
            d.get("n_test", 0),
            d.get("n_reduced", 0),
            d.get("label", ""),
        )

    def render(self) -> str:
        return render_reports([self])


def render_reports(reports: list[ScoreReport]) -> str:
    """Aligned text tables: R^2 scores, then wrMAE scores with worst flows."""
    variables = reports[0].variables
    heads = [LABELS.get(v, v) for v in variables]
    name_w = max(12, *(len(r.label or "model") for r in reports))
    col = 18
    lines = ["R^2 scores", f"{'':<{name_w}} {'R2':>8} " + " ".join(f"{'R2_' + h:>{col}}" for h in heads)]
    for r in reports:
        lines.append(
            f"{r.label or 'model':<{name_w}} {r.r2_mean:>8.4f} "
            + " ".join(f"{r.r2[v]:>{col}.4f}" for v in variables)
        )
    lines += ["", "wrMAE scores (worst flow: M, AoA, p_i/1e5)",
              f"{'':<{name_w}} {'wrMAE':>8} " + " ".join(f"{'wrMAE_' + h:>{col}}" for h in heads)]
    for r in reports:
        lines.append(
            f"{r.label or 'model':<{name_w}} {r.wrmae_mean:>8.4f} "
            + " ".join(f"{r.wrmae[v]:>{col}.4f}" for v in variables)
        )
        wf = []
        for v in variables:
            f = r.worst_flow[v]
            wf.append(f"({f['mach']:.2f}, {f['aoa_deg']:.1f}, {f['p_i'] / 1e5:g})")
        lines.append(f"{'':<{name_w}} {'':>8} " + " ".join(f"{s:>{col}}" for s in wf))
    return "\n".join(lines) + "\n"


def score_fields(conds: list[FlowCondition], truth, pred, label: str = "", weighted_mean: bool = False) -> ScoreReport:
    """Score predicted fields (n_flows, n_p, 4) against truth for the given flows."""
    w = np.array([flow_weight(c) for c in conds])
    names = [c.id for c in conds]
    r2 = r2_weighted(truth, pred, w, weighted_mean)
    table = rmae_table(truth, pred, names)
    worst, arg = wrmae(truth, pred, w, names)
    variables = VARIABLES[: table.shape[1]]
    worst_flow = {}
    for k, v in enumerate(variables):
        c = conds[int(arg[k])]
        worst_flow[v] = {"id": c.id, "mach": c.mach, "aoa_deg": c.aoa_deg, "p_i": c.p_i}
    return ScoreReport(
        variables=variables,
        r2={v: float(r2[k]) for k, v in enumerate(variables)},
        wrmae={v: float(worst[k]) for k, v in enumerate(variables)},
        worst_flow=worst_flow,
        rmae={c.id: {v: float(table[i, k]) for k, v in enumerate(variables)} for i, c in enumerate(conds)},
        n_test=len(conds),
        n_reduced=int(np.sum(w >= 1.0)),
        label=label,
    )


def score_submission(ds: Dataset, submission: dict, label: str = "", weighted_mean: bool = False) -> ScoreReport:
    """Score a validated submission (id -> WallField or array) on the test split of ``ds``."""
    test = ds.test_ids
    missing_truth = [i for i in test if i not in ds.fields]
    if missing_truth:
        raise ValidationError(f"dataset lacks ground truth for test conditions: {missing_truth}")
    missing = [i for i in test if i not in submission]
    if missing:
        raise SubmissionError(f"submission missing test conditions: {missing}")
    by_id = ds.by_id
    conds = [by_id[i] for i in test]
    truth = np.stack([ds.fields[i].values for i in test])

    def values(v):
        return v.values if isinstance(v, WallField) else np.asarray(v, dtype=np.float64)

    pred = np.stack([values(submission[i]) for i in test])
    if pred.shape != truth.shape:
        raise SubmissionError(f"submission shape {pred.shape} != truth shape {truth.shape}")
    return score_fields(conds, truth, pred, label, weighted_mean)
