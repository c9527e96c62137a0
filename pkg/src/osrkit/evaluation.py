"""Cross-validation, parameter grid search and OSR-vs-regression reports."""
from __future__ import annotations

import csv
import io
import itertools
import json
import logging
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .dataset import Dataset, DatasetError, Scale, format_number
from .lra import fit_lra, lra_predict
from .osr import (
    InfeasibleError, Objective, OsrCache, ParameterCombo, PredictionFn, VALID_PAIRINGS,
    fit_discretizers, osr_predict,
)
from .stats import DEFAULT_SEED, AccuracyTriple, BootstrapConfig, accuracy

log = logging.getLogger(__name__)

LRA = "LRA"
METRICS = ("MMRE", "MSD", "MAD")
SET_SIZES = (5, 10, 15, 20)
PREDICATE_SIZES = (2, 3, 4)


def default_grid() -> list:
    """The 36 combos: 3 valid pairings x 4 set sizes x 3 predicate sizes."""
    return [ParameterCombo(pf, obj, size, preds)
            for (pf, obj), size, preds in itertools.product(VALID_PAIRINGS, SET_SIZES, PREDICATE_SIZES)]


_COMBO_RE = re.compile(r"\(\s*(\w+)\s*,\s*(\w+)\s*,\s*(\d+)\s*,\s*(\d+)\s*\)")


def parse_combo(text: str, allow_any_pairing: bool = False) -> ParameterCombo:
    m = _COMBO_RE.fullmatch(text.strip())
    if not m:
        raise ValueError(f"cannot parse combo {text!r}; expected (Mean,MSD,10,3)")
    pf, obj, size, preds = m.groups()
    return ParameterCombo(PredictionFn(pf.capitalize()), Objective(obj.upper()),
                          int(size), int(preds), allow_any_pairing)


def parse_grid(text: str, allow_any_pairing: bool = False) -> list:
    """``default``, ``single:(Mean,MSD,10,3)`` or ``(..);(..);...``."""
    text = text.strip()
    if text == "default":
        return default_grid()
    if text.startswith("single:"):
        return [parse_combo(text[len("single:"):], allow_any_pairing)]
    return [parse_combo(part, allow_any_pairing) for part in text.split(";") if part.strip()]


# -- folds ----------------------------------------------------------------

@dataclass(frozen=True)
class FoldPlan:
    folds: tuple
    seed: int
    strategy: str

    def fold_of(self, project_id: str) -> int:
        for k, fold in enumerate(self.folds):
            if project_id in fold:
                return k
        raise KeyError(project_id)


def parse_strategy(text: str) -> str:
    text = text.strip().lower()
    if text == "loocv":
        return text
    m = re.fullmatch(r"k:(\d+)", text)
    if not m:
        raise ValueError(f"fold strategy must be 'loocv' or 'k:N', got {text!r}")
    return f"k:{int(m.group(1))}"


def make_folds(ids: Sequence[str], strategy: str = "loocv", seed: int = DEFAULT_SEED) -> FoldPlan:
    """LOOCV singletons, or a seeded shuffle dealt round-robin into k folds."""
    ids = list(ids)
    strategy = parse_strategy(strategy)
    if len(ids) < 2:
        raise ValueError("cross-validation needs at least two projects")
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate project ids")
    if strategy == "loocv":
        return FoldPlan(tuple((i,) for i in ids), seed, strategy)
    k = int(strategy[2:])
    if k < 2:
        raise ValueError("k must be >= 2")
    if k > len(ids):
        raise ValueError(f"k={k} exceeds the {len(ids)} projects")
    order = np.random.default_rng(seed).permutation(len(ids))
    shuffled = [ids[i] for i in order]
    return FoldPlan(tuple(tuple(shuffled[j::k]) for j in range(k)), seed, strategy)


# -- per-method results ---------------------------------------------------

@dataclass(frozen=True)
class ProjectEstimate:
    project_id: str
    actual: float
    estimate: Optional[float]
    fallback: bool = False


@dataclass(frozen=True)
class MethodResult:
    method: str
    combo: Optional[ParameterCombo]
    per_project: tuple
    plan: FoldPlan
    error: Optional[str] = None

    @property
    def estimated(self) -> list:
        return [p for p in self.per_project if p.estimate is not None]

    @property
    def accuracy(self) -> Optional[AccuracyTriple]:
        rows = self.estimated
        if not rows:
            return None
        return accuracy([(p.actual, p.estimate) for p in rows])

    @property
    def coverage(self) -> float:
        if not self.per_project:
            return 0.0
        return len(self.estimated) / len(self.per_project)

    @property
    def fallbacks(self) -> int:
        return sum(1 for p in self.per_project if p.fallback)

    def metric(self, name: str) -> Optional[float]:
        acc = self.accuracy
        return None if acc is None else acc.get(name)

    def to_dict(self) -> dict:
        acc = self.accuracy
        out = {"method": self.method}
        if self.combo is not None:
            out.update(self.combo.to_dict())
        out.update({
            "mmre": acc.mmre if acc else None,
            "msd": acc.msd if acc else None,
            "mad": acc.mad if acc else None,
            "n": acc.n if acc else 0,
            "coverage": self.coverage,
            "fallbacks": self.fallbacks,
            "error": self.error,
        })
        return out


def estimates_csv(results: Sequence[MethodResult], header: str = "") -> str:
    out = io.StringIO()
    out.write(header)
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["project_id", "actual", "estimate", "method", "fallback"])
    for r in results:
        for p in r.per_project:
            est = "" if p.estimate is None else format_number(p.estimate)
            writer.writerow([p.project_id, format_number(p.actual), est, r.method, int(p.fallback)])
    return out.getvalue()


# -- cross-validation -----------------------------------------------------

def _prepare(d: Dataset, plan: FoldPlan, size_var: Optional[str] = None) -> Dataset:
    dep = d.dependent
    if dep is None:
        raise DatasetError("dataset has no dependent variable")
    if size_var is not None and d.spec(size_var).scale is not Scale.CONTINUOUS:
        raise DatasetError("size variable must be continuous", column=size_var)
    covered = [pid for fold in plan.folds for pid in fold]
    if sorted(covered) != sorted(d.ids):
        raise ValueError("fold plan does not partition the dataset's projects")
    for fold in plan.folds:
        if not fold:
            raise ValueError("empty fold")
    return d


def _fold_cells(d: Dataset, fold: tuple, combos: Sequence[ParameterCombo], cfg: BootstrapConfig,
                size_var: Optional[str]):
    """Estimates for every project of one fold, per combo and for LRA.

    Returns ``{combo_index or LRA: list of (pid, estimate, fallback) or
    error string}``.
    """
    dep = d.dependent
    j = d.index(dep)
    held = set(fold)
    training = d.without(held)
    scored = training.take(i for i, r in enumerate(training.rows) if r[j] is not None)
    targets = [i for i, pid in enumerate(d.ids) if pid in held and d.rows[i][j] is not None]
    out = {}
    cache = OsrCache()
    for c, combo in enumerate(combos):
        if len(scored) < combo.min_set_size:
            out[c] = (f"fold leaves {len(scored)} training projects, "
                      f"fewer than min_set_size {combo.min_set_size}")
            continue
        discs = cache.discretizers.get(combo.min_set_size)
        if discs is None:
            discs = cache.discretizers[combo.min_set_size] = fit_discretizers(scored, combo.min_set_size)
        rows = []
        for i in targets:
            pred = osr_predict(scored, d.row_dict(i), combo, cfg, discs, cache)
            rows.append((d.ids[i], pred.estimate, pred.fallback))
        out[c] = rows
    if size_var is not None:
        if len(scored) < 2:
            out[LRA] = f"fold leaves {len(scored)} training projects, regression needs 2"
        else:
            try:
                model = fit_lra(scored, size_var)
            except ValueError as exc:
                out[LRA] = str(exc)
            else:
                out[LRA] = [(d.ids[i], lra_predict(model, d.row_dict(i)), False) for i in targets]
    return out


def _fold_job(args):
    return _fold_cells(*args)


def _run_folds(d, plan, combos, cfg, size_var, jobs):
    jobs_args = [(d, fold, combos, cfg, size_var) for fold in plan.folds]
    if jobs and jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_fold_job, jobs_args, chunksize=max(1, len(jobs_args) // (4 * jobs))))
    return [_fold_job(a) for a in jobs_args]


def _assemble(d, plan, key, method, combo, fold_outputs) -> MethodResult:
    dep_j = d.index(d.dependent)
    actual = {pid: r[dep_j] for pid, r in zip(d.ids, d.rows)}
    got, errors = {}, []
    for out in fold_outputs:
        cell = out[key]
        if isinstance(cell, str):
            errors.append(cell)
            continue
        for pid, est, fb in cell:
            got[pid] = (est, fb)
    if errors:
        return MethodResult(method, combo, (), plan, errors[0])
    rows = tuple(ProjectEstimate(pid, actual[pid], *got[pid]) for pid in d.ids if pid in got)
    return MethodResult(method, combo, rows, plan)


def cross_validate(d: Dataset, method, plan: FoldPlan, combo: Optional[ParameterCombo] = None,
                   cfg: BootstrapConfig = BootstrapConfig(), size_var: Optional[str] = None,
                   jobs: int = 1) -> MethodResult:
    """Estimate every project from the projects outside its fold.

    ``method`` is ``"OSR"`` (with ``combo``) or ``"LRA"`` (with
    ``size_var``). Discretizers and regressions are refit per fold.
    Projects without an actual value are not scored.
    """
    d = _prepare(d, plan, size_var)
    if str(method).upper() == LRA:
        if size_var is None:
            raise ValueError("LRA needs a size variable")
        outputs = _run_folds(d, plan, [], cfg, size_var, jobs)
        result = _assemble(d, plan, LRA, LRA, None, outputs)
    else:
        if combo is None:
            raise ValueError("OSR needs a parameter combo")
        outputs = _run_folds(d, plan, [combo], cfg, None, jobs)
        result = _assemble(d, plan, 0, f"OSR{combo.label}", combo, outputs)
    if result.error:
        raise InfeasibleError(result.error)
    return result


@dataclass(frozen=True)
class GridReport:
    results: tuple
    best_by: dict
    plan: FoldPlan
    cfg: BootstrapConfig

    def best(self, metric: str) -> Optional[MethodResult]:
        k = self.best_by.get(metric)
        return None if k is None else self.results[k]

    def to_dict(self) -> dict:
        return {
            "seed": self.cfg.seed,
            "draws": self.cfg.draws,
            "alpha": self.cfg.alpha,
            "folds": self.plan.strategy,
            "fold_seed": self.plan.seed,
            "cells": [r.to_dict() for r in self.results],
            "best_by": {m: (None if k is None else self.results[k].combo.to_dict())
                        for m, k in self.best_by.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def pick_best(results: Sequence[MethodResult]) -> dict:
    """Index of the lowest value per metric; ties go to the earliest cell."""
    best = {}
    for m in METRICS:
        k_best, v_best = None, None
        for k, r in enumerate(results):
            v = None if r.error else r.metric(m)
            if v is not None and (v_best is None or v < v_best):
                k_best, v_best = k, v
        best[m] = k_best
    return best


def grid_search(d: Dataset, grid: Sequence[ParameterCombo], plan: FoldPlan,
                cfg: BootstrapConfig = BootstrapConfig(), jobs: int = 1,
                size_var: Optional[str] = None):
    """Cross-validate every combo under one fold plan.

    Infeasible combos are kept in the report with their error. When
    ``size_var`` is given the regression baseline is computed in the same
    pass and ``(GridReport, MethodResult)`` is returned.
    """
    grid = list(grid)
    if not grid:
        raise ValueError("empty parameter grid")
    d = _prepare(d, plan, size_var)
    outputs = _run_folds(d, plan, grid, cfg, size_var, jobs)
    results = tuple(_assemble(d, plan, c, f"OSR{combo.label}", combo, outputs)
                    for c, combo in enumerate(grid))
    for r in results:
        if r.error:
            log.warning("combo %s: %s", r.combo.label, r.error)
    report = GridReport(results, pick_best(results), plan, cfg)
    if size_var is None:
        return report
    lra = _assemble(d, plan, LRA, LRA, None, outputs)
    if lra.error:
        raise InfeasibleError(lra.error)
    return report, lra


# -- comparison -----------------------------------------------------------

def format_metric(metric: str, value: Optional[float]) -> str:
    if value is None:
        return "n/a"
    return f"{100 * value:.2f}%" if metric == "MMRE" else f"{value:.3f}"


@dataclass(frozen=True)
class ComparisonRow:
    metric: str
    combo: Optional[ParameterCombo]
    lra: Optional[float]
    osr: Optional[float]

    @property
    def marker(self) -> str:
        """``>`` when regression is worse (OSR better), ``<`` when better."""
        lra, osr = format_metric(self.metric, self.lra), format_metric(self.metric, self.osr)
        if self.lra is None or self.osr is None:
            return "?"
        if lra == osr:
            return "="
        return ">" if self.lra > self.osr else "<"

    @property
    def osr_better(self) -> bool:
        return self.marker == ">"

    def cell(self) -> str:
        return f"{format_metric(self.metric, self.lra)} {self.marker} {format_metric(self.metric, self.osr)}"


@dataclass(frozen=True)
class ComparisonReport:
    label: str
    rows: tuple
    osr_coverage: float
    lra_coverage: float
    fallbacks: int
    header: str = ""

    def to_text(self) -> str:
        lines = [self.header.rstrip("\n")] if self.header else []
        lines.append(f"{'metric':<6} {'set':<6} {'pred_fn':<7} {'objective':<9} "
                     f"{'min_set':>7} {'max_pred':>8}   LRA vs OSR")
        for r in self.rows:
            c = r.combo
            params = (f"{c.prediction_fn.value:<7} {c.objective.value:<9} {c.min_set_size:>7} "
                      f"{c.max_predicates_per_step:>8}") if c else f"{'-':<7} {'-':<9} {'-':>7} {'-':>8}"
            lines.append(f"{r.metric:<6} {self.label:<6} {params}   {r.cell()}")
        lines.append(f"coverage: OSR {100 * self.osr_coverage:.1f}%, LRA {100 * self.lra_coverage:.1f}%")
        lines.append(f"note: {self.fallbacks} OSR estimate(s) of the best-MMRE combo fell back "
                     f"to the full training set")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write(self.header)
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["metric", "set", "prediction_fn", "objective", "min_set_size",
                         "max_predicates", "lra", "osr", "marker", "osr_coverage", "lra_coverage"])
        for r in self.rows:
            c = r.combo
            writer.writerow([
                r.metric, self.label,
                c.prediction_fn.value if c else "", c.objective.value if c else "",
                c.min_set_size if c else "", c.max_predicates_per_step if c else "",
                "" if r.lra is None else repr(r.lra), "" if r.osr is None else repr(r.osr),
                r.marker, repr(self.osr_coverage), repr(self.lra_coverage),
            ])
        return out.getvalue()

    def to_dict(self) -> dict:
        return {
            "set": self.label,
            "rows": [{
                "metric": r.metric,
                "combo": r.combo.to_dict() if r.combo else None,
                "lra": r.lra, "osr": r.osr, "marker": r.marker, "osr_better": r.osr_better,
            } for r in self.rows],
            "coverage": {"osr": self.osr_coverage, "lra": self.lra_coverage},
            "fallbacks": self.fallbacks,
        }


def compare_report(osr: GridReport, lra: MethodResult, label: str = "data",
                   header: str = "") -> ComparisonReport:
    """Best OSR combo per metric set against the regression baseline."""
    if osr.plan != lra.plan:
        raise ValueError("OSR and LRA results come from different fold plans")
    rows = []
    for m in METRICS:
        best = osr.best(m)
        rows.append(ComparisonRow(m, best.combo if best else None, lra.metric(m),
                                  best.metric(m) if best else None))
    best_mmre = osr.best("MMRE")
    return ComparisonReport(
        label, tuple(rows),
        best_mmre.coverage if best_mmre else 0.0, lra.coverage,
        best_mmre.fallbacks if best_mmre else 0, header,
    )
