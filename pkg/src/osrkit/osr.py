"""Optimized set reduction.

Starting from all training projects, the set is repeatedly narrowed by
predicates ``variable = category`` taken from the project being
estimated. A narrowing step is admissible when the child set keeps at
least ``min_set_size`` projects and its dependent values differ
significantly (bootstrap test) from those of the projects it leaves out. Admissible children are
ranked by how homogeneous they are under the combo's objective, and the
best ``max_predicates_per_step`` of them are expanded depth-first. Each
branch ends in a terminal set whose prediction feeds the final estimate.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
from bisect import bisect_left
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Optional, Sequence

import numpy as np

from .dataset import Dataset, DatasetError, Scale, format_number
from .stats import BootstrapConfig, BoxSummary, bootstrap_pvalue, describe

log = logging.getLogger(__name__)

DEFAULT_MAX_BINS = 4
_MASK64 = (1 << 64) - 1


class InfeasibleError(ValueError):
    """Training data too small for the requested analysis."""


class PredictionFn(str, Enum):
    MEAN = "Mean"
    MEDIAN = "Median"

    def __call__(self, values):
        return float(np.mean(values) if self is PredictionFn.MEAN else np.median(values))


class Objective(str, Enum):
    MMRE = "MMRE"
    MSD = "MSD"
    MAD = "MAD"


VALID_PAIRINGS = (
    (PredictionFn.MEAN, Objective.MMRE),
    (PredictionFn.MEAN, Objective.MSD),
    (PredictionFn.MEDIAN, Objective.MAD),
)


def pairing_table() -> str:
    return "valid (prediction function, objective) pairings:\n" + "".join(
        f"  {pf.value}, {obj.value}\n" for pf, obj in VALID_PAIRINGS)


@dataclass(frozen=True)
class ParameterCombo:
    prediction_fn: PredictionFn
    objective: Objective
    min_set_size: int
    max_predicates_per_step: int
    allow_any_pairing: bool = field(default=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "prediction_fn", PredictionFn(self.prediction_fn))
        object.__setattr__(self, "objective", Objective(self.objective))
        if not self.allow_any_pairing and (self.prediction_fn, self.objective) not in VALID_PAIRINGS:
            raise ValueError(f"invalid pairing ({self.prediction_fn.value}, {self.objective.value}); "
                             + pairing_table())
        if self.min_set_size < 2:
            raise ValueError("min_set_size must be >= 2")
        if self.max_predicates_per_step < 1:
            raise ValueError("max_predicates_per_step must be >= 1")

    @property
    def label(self) -> str:
        return (f"({self.prediction_fn.value},{self.objective.value},"
                f"{self.min_set_size},{self.max_predicates_per_step})")

    def to_dict(self) -> dict:
        return {
            "prediction_fn": self.prediction_fn.value,
            "objective": self.objective.value,
            "min_set_size": self.min_set_size,
            "max_predicates_per_step": self.max_predicates_per_step,
        }


# -- discretization -------------------------------------------------------

@dataclass(frozen=True)
class Discretizer:
    """Half-open bins (-inf, t1], (t1, t2], ..., (tk, inf)."""

    variable: str
    thresholds: tuple = ()

    def __post_init__(self):
        t = tuple(float(x) for x in self.thresholds)
        if any(a >= b for a, b in zip(t, t[1:])):
            raise ValueError("thresholds must be strictly increasing")
        object.__setattr__(self, "thresholds", t)

    def bin_index(self, x: float) -> int:
        return bisect_left(self.thresholds, x)

    def interval(self, k: int):
        edges = (-math.inf,) + self.thresholds + (math.inf,)
        return edges[k], edges[k + 1]

    def label(self, k: int) -> str:
        lo, hi = self.interval(k)
        lo_s = "-inf" if lo == -math.inf else format_number(lo)
        if hi == math.inf:
            return f"({lo_s}, inf)"
        return f"({lo_s}, {format_number(hi)}]"

    @property
    def labels(self) -> list:
        return [self.label(k) for k in range(len(self.thresholds) + 1)]


def _best_split(xs: np.ndarray, ys: np.ndarray, min_leaf: int):
    """Best SSE split of x-sorted data: ``(gain, threshold, k)`` or None.

    Ties in SSE (relative 1e-9) go to the smallest threshold.
    """
    n = len(xs)
    if n < 2 * min_leaf:
        return None
    yc = ys - ys.mean()
    c1 = np.cumsum(yc)
    c2 = np.cumsum(yc * yc)
    parent = c2[-1]
    k = np.arange(min_leaf, n - min_leaf + 1)
    k = k[xs[k - 1] < xs[k]]
    if len(k) == 0 or parent <= 0:
        return None
    left = c2[k - 1] - c1[k - 1] ** 2 / k
    right = (parent - c2[k - 1]) - (c1[-1] - c1[k - 1]) ** 2 / (n - k)
    sse = np.maximum(left, 0) + np.maximum(right, 0)
    best = sse.min()
    tol = 1e-9 * parent
    gain = parent - best
    if gain <= tol:
        return None
    pick = int(k[np.flatnonzero(sse <= best + tol)[0]])
    return gain, (xs[pick - 1] + xs[pick]) / 2.0, pick


def discretize_cart(x: Sequence, y: Sequence, min_leaf: int, max_bins: int = DEFAULT_MAX_BINS,
                    variable: str = "x") -> Discretizer:
    """Fit regression-tree thresholds on ``x`` against ``y``.

    Splits are chosen at midpoints between adjacent distinct x values so as
    to minimise the total within-bin sum of squared deviations of y, with
    at least ``min_leaf`` points per bin. Leaves are split best-gain first
    until ``max_bins`` bins exist or no split reduces the error. Pairs with
    a missing x (or y) are ignored. Fewer than ``2 * min_leaf`` values
    simply yield a single bin.
    """
    if max_bins < 2:
        raise ValueError("max_bins must be >= 2")
    if min_leaf < 1:
        raise ValueError("min_leaf must be >= 1")
    if len(x) != len(y):
        raise ValueError("x and y differ in length")
    pairs = [(float(a), float(b)) for a, b in zip(x, y) if a is not None and b is not None]
    if len(pairs) < min_leaf:
        raise ValueError(f"{variable}: need {min_leaf} non-missing values, have {len(pairs)}")
    pairs.sort(key=lambda p: p[0])
    xs = np.array([p[0] for p in pairs])
    ys = np.array([p[1] for p in pairs])

    thresholds = []
    frontier = []

    def push(lo, hi):
        found = _best_split(xs[lo:hi], ys[lo:hi], min_leaf)
        if found is not None:
            gain, t, k = found
            frontier.append((gain, t, lo, lo + k, hi))

    push(0, len(xs))
    while frontier and len(thresholds) + 1 < max_bins:
        frontier.sort(key=lambda f: (-f[0], f[1]))
        _, t, lo, mid, hi = frontier.pop(0)
        thresholds.append(t)
        push(lo, mid)
        push(mid, hi)
    return Discretizer(variable, tuple(sorted(thresholds)))


def fit_discretizers(training: Dataset, min_leaf: int, max_bins: int = DEFAULT_MAX_BINS) -> dict:
    """One discretizer per continuous independent variable.

    Variables with too few values get a single all-covering bin.
    """
    dep = training.dependent
    y = training.column(dep) if dep else [0.0] * len(training)
    out = {}
    for name in training.independent:
        if training.spec(name).scale is not Scale.CONTINUOUS:
            continue
        try:
            out[name] = discretize_cart(training.column(name), y, min_leaf, max_bins, name)
        except ValueError:
            out[name] = Discretizer(name)
    return out


# -- predicates and models -----------------------------------------------

@dataclass(frozen=True)
class Predicate:
    variable: str
    category: str
    interval: Optional[tuple] = None

    def matches(self, value) -> bool:
        if value is None:
            return False
        if self.interval is None:
            return value == self.category
        lo, hi = self.interval
        return lo < value <= hi

    def __str__(self):
        if self.interval is None:
            return f"{self.variable} = {self.category}"
        return f"{self.variable} in {self.category}"

    def to_dict(self) -> dict:
        return {"variable": self.variable, "category": self.category}


@dataclass(frozen=True)
class OsrModel:
    predicates: tuple
    terminal_ids: tuple
    prediction: float
    dispersion: BoxSummary

    def render(self) -> str:
        rule = " AND ".join(str(p) for p in self.predicates) or "(all projects)"
        d = self.dispersion
        return (f"{rule} => {self.prediction:.6g} "
                f"(n={d.n}, p25={d.q1:.6g}, p75={d.q3:.6g})")

    def to_dict(self) -> dict:
        d = self.dispersion
        return {
            "predicates": [p.to_dict() for p in self.predicates],
            "prediction": self.prediction,
            "n": d.n,
            "p25": d.q1,
            "p75": d.q3,
            "terminal_ids": list(self.terminal_ids),
        }


@dataclass(frozen=True)
class OsrPrediction:
    estimate: float
    models: tuple
    fallback: bool
    combo: ParameterCombo

    def render(self) -> str:
        return "\n".join(m.render() for m in self.models)

    def to_json(self) -> str:
        return json.dumps({
            "estimate": self.estimate,
            "fallback": self.fallback,
            "combo": self.combo.to_dict(),
            "models": [m.to_dict() for m in self.models],
        }, indent=2)


def _target_dict(training: Dataset, target) -> dict:
    if isinstance(target, Mapping):
        return dict(target)
    row = tuple(target)
    if len(row) != len(training.variables):
        raise DatasetError("target row does not match the training schema")
    return dict(zip(training.names, row))


def candidate_predicates(training: Dataset, target, used=(), discretizers=None) -> list:
    """One predicate per unused independent variable the target has a value
    for, in declaration order."""
    target = _target_dict(training, target)
    discretizers = discretizers or {}
    out = []
    for name in training.independent:
        if name in used:
            continue
        value = target.get(name)
        if value is None:
            continue
        if training.spec(name).scale is Scale.NOMINAL:
            out.append(Predicate(name, value))
        elif name in discretizers:
            disc = discretizers[name]
            k = disc.bin_index(value)
            out.append(Predicate(name, disc.label(k), disc.interval(k)))
    return out


def _objective(y: np.ndarray, combo: ParameterCombo) -> float:
    p = combo.prediction_fn(y)
    err = np.abs(y - p)
    if combo.objective is Objective.MMRE:
        if np.any(y == 0):
            raise ValueError("MMRE objective undefined for zero values")
        return float(np.mean(err / np.abs(y)))
    if combo.objective is Objective.MSD:
        return float(np.mean(err ** 2))
    return float(np.mean(err))


def subset_objective(dep_values: Sequence[float], combo: ParameterCombo) -> float:
    """Homogeneity of a set around its own prediction; lower is better."""
    y = np.asarray(dep_values, dtype=float)
    if len(y) == 0:
        raise ValueError("objective of an empty set")
    return _objective(y, combo)


# -- seeds and caching ----------------------------------------------------

def id_key(project_id: str) -> int:
    return int.from_bytes(hashlib.blake2b(project_id.encode(), digest_size=8).digest(), "little")


def set_key(ids) -> int:
    """Order-free 64-bit fingerprint of a set of project ids."""
    return sum(id_key(i) for i in ids) & _MASK64


def derive_seed(master_seed: int, parent_key: int, child_key: int) -> np.random.SeedSequence:
    """Bootstrap seed for one (parent set, child set) comparison."""
    return np.random.SeedSequence([master_seed & _MASK64, parent_key, child_key])


class OsrCache:
    """Memo for bootstrap p-values and fitted discretizers.

    Entries are pure functions of their keys, so sharing a cache across
    calls on the same dataset never changes a result.
    """

    def __init__(self):
        self.pvalues = {}
        self.discretizers = {}

    def __len__(self):
        return len(self.pvalues)


class _Reducer:
    """Training set encoded as arrays, bound to one target and combo."""

    def __init__(self, training: Dataset, target, combo: ParameterCombo, cfg: BootstrapConfig,
                 discretizers=None, cache: Optional[OsrCache] = None):
        dep = training.dependent
        if dep is None:
            raise DatasetError("training data has no dependent variable")
        j = training.index(dep)
        keep = [i for i, r in enumerate(training.rows) if r[j] is not None]
        if len(keep) < len(training):
            log.warning("dropping %d training rows with a missing dependent value",
                        len(training) - len(keep))
            training = training.take(keep)
        if len(training) < combo.min_set_size:
            raise InfeasibleError(f"{len(training)} training projects, "
                                  f"min_set_size is {combo.min_set_size}")
        self.training = training
        self.combo = combo
        self.cfg = cfg
        self.cache = cache if cache is not None else OsrCache()
        if discretizers is None:
            discretizers = fit_discretizers(training, combo.min_set_size)
        self.discretizers = discretizers
        self.target = _target_dict(training, target)
        self.ids = np.array(training.ids, dtype=object)
        self.y = np.array(training.column(dep), dtype=float)
        self.keys = np.array([id_key(i) for i in training.ids], dtype=np.uint64)

        self.order = []        # (variable, predicate, child mask) in declaration order
        for pred in candidate_predicates(training, self.target, (), discretizers):
            column = training.column(pred.variable)
            mask = np.array([pred.matches(v) for v in column], dtype=bool)
            self.order.append((pred.variable, pred, mask))

    def key(self, idx: np.ndarray) -> int:
        return int(np.sum(self.keys[idx], dtype=np.uint64))

    def pvalue(self, parent: np.ndarray, child: np.ndarray) -> float:
        """Bootstrap p-value of the child against the rest of the parent."""
        pk, ck = self.key(parent), self.key(child)
        cache_key = (pk, ck, self.cfg.draws, self.cfg.seed)
        p = self.cache.pvalues.get(cache_key)
        if p is None:
            rest = np.setdiff1d(parent, child, assume_unique=True)
            if len(rest) < 2:
                p = 1.0
            else:
                seed = derive_seed(self.cfg.seed, pk, ck)
                p = bootstrap_pvalue(self.y[child], self.y[rest], self.cfg.draws, seed)
            self.cache.pvalues[cache_key] = p
        return p

    def step(self, idx: np.ndarray, used) -> list:
        kept = []
        for rank, (name, pred, mask) in enumerate(self.order):
            if name in used:
                continue
            child = idx[mask[idx]]
            if len(child) < self.combo.min_set_size or len(child) == len(idx):
                continue
            if self.pvalue(idx, child) > self.cfg.alpha:
                continue
            kept.append((_objective(self.y[child], self.combo), rank, pred, child))
        kept.sort(key=lambda t: (t[0], t[1]))
        return [(pred, child) for _, _, pred, child in kept[:self.combo.max_predicates_per_step]]

    def model(self, preds, idx: np.ndarray) -> OsrModel:
        values = self.y[idx]
        return OsrModel(tuple(preds), tuple(self.ids[idx]), self.combo.prediction_fn(values),
                        describe(values))

    def predict(self) -> OsrPrediction:
        root = np.arange(len(self.y))
        models = []

        def expand(idx, used, preds):
            children = self.step(idx, used)
            if not children:
                models.append(self.model(preds, idx))
                return
            for pred, child in children:
                expand(child, used | {pred.variable}, preds + [pred])

        expand(root, frozenset(), [])
        fallback = len(models) == 1 and not models[0].predicates
        estimate = self.combo.prediction_fn([m.prediction for m in models])
        return OsrPrediction(estimate, tuple(models), fallback, self.combo)


def reduce_step(current_ids, training: Dataset, target, used, combo: ParameterCombo,
                cfg: BootstrapConfig = BootstrapConfig(), discretizers=None,
                cache: Optional[OsrCache] = None) -> list:
    """Admissible ``(predicate, child id set)`` pairs for one reduction step,
    best objective first."""
    r = _Reducer(training, target, combo, cfg, discretizers, cache)
    current = set(current_ids)
    idx = np.array([i for i, pid in enumerate(r.training.ids) if pid in current], dtype=int)
    if len(idx) < combo.min_set_size:
        raise InfeasibleError("current set smaller than min_set_size")
    return [(pred, frozenset(r.ids[child])) for pred, child in r.step(idx, set(used))]


def osr_predict(training: Dataset, target, combo: ParameterCombo,
                cfg: BootstrapConfig = BootstrapConfig(), discretizers=None,
                cache: Optional[OsrCache] = None) -> OsrPrediction:
    """Estimate the dependent variable for ``target`` from ``training``.

    ``target`` is a mapping of variable name to value (or a row aligned
    with the training schema); its dependent value, if any, is ignored.
    When no reduction of the full set is admissible the root set is used
    and ``fallback`` is set.
    """
    return _Reducer(training, target, combo, cfg, discretizers, cache).predict()


def matches_all(predicates: Sequence[Predicate], row: Mapping) -> bool:
    return all(p.matches(row.get(p.variable)) for p in predicates)
