"""Simple least-squares regression of the dependent variable on size."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Optional

from .dataset import Dataset, DatasetError, Scale


@dataclass(frozen=True)
class OlsModel:
    slope: float
    intercept: float
    n: int
    size_variable: str = "x"
    excluded: int = 0

    def render(self) -> str:
        return f"y = {self.slope:.6g}*x + {self.intercept:.6g} (n={self.n})"


def fit_ols(points, size_variable: str = "x") -> OlsModel:
    """Fit ``y = slope*x + intercept``; pairs with a missing coordinate are
    skipped and counted in ``excluded``."""
    points = list(points)
    usable = [(float(x), float(y)) for x, y in points if x is not None and y is not None]
    if len(usable) < 2:
        raise ValueError("regression needs at least two points")
    n = len(usable)
    mx = math.fsum(x for x, _ in usable) / n
    my = math.fsum(y for _, y in usable) / n
    sxx = math.fsum((x - mx) ** 2 for x, _ in usable)
    if sxx == 0:
        raise ValueError("all x values are equal")
    sxy = math.fsum((x - mx) * (y - my) for x, y in usable)
    slope = sxy / sxx
    return OlsModel(slope, my - slope * mx, n, size_variable, len(points) - n)


def fit_lra(training: Dataset, size_variable: str) -> OlsModel:
    spec = training.spec(size_variable)
    if spec.scale is not Scale.CONTINUOUS:
        raise DatasetError("size variable must be continuous", column=size_variable)
    dep = training.dependent
    if dep is None:
        raise DatasetError("dataset has no dependent variable")
    return fit_ols(zip(training.column(size_variable), training.column(dep)), size_variable)


def lra_predict(m: OlsModel, target: Mapping) -> Optional[float]:
    """Prediction for ``target``, or None (no estimate) when its size is
    missing."""
    x = target.get(m.size_variable)
    if x is None:
        return None
    return m.slope * x + m.intercept
