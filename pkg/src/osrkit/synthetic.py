"""Seeded synthetic project datasets with known structure."""
from __future__ import annotations

import numpy as np

from .dataset import Dataset, Role, Scale, VariableSpec, normalize_by_mean

DEPENDENT = "productivity"
SIZE = "afp"


def _ids(n):
    return [f"P{i:03d}" for i in range(1, n + 1)]


def _punch_holes(rng, rows, columns, rate):
    for i in range(len(rows)):
        for j in columns:
            if rng.random() < rate:
                rows[i][j] = None


def heterogeneous(seed: int, n: int = 100, noise_nominal: int = 2, noise_continuous: int = 1,
                  missing: float = 0.05) -> Dataset:
    """Productivity driven by two nominal factors; size carries no signal.

    ``missing`` is the share of independent cells blanked at random.
    """
    rng = np.random.default_rng(seed)
    type_effect = {"New": 1.6, "Enh": 0.6}
    domain_effect = {"Bank": 1.5, "Embedded": 0.55, "Web": 1.0}
    specs = [VariableSpec("dev_type", Scale.NOMINAL), VariableSpec("domain", Scale.NOMINAL),
             VariableSpec(SIZE, Scale.CONTINUOUS)]
    specs += [VariableSpec(f"noise{k}", Scale.NOMINAL) for k in range(noise_nominal)]
    specs += [VariableSpec(f"cnoise{k}", Scale.CONTINUOUS) for k in range(noise_continuous)]
    specs.append(VariableSpec(DEPENDENT, Scale.CONTINUOUS, Role.DEPENDENT))
    rows = []
    for _ in range(n):
        t = str(rng.choice(list(type_effect)))
        dom = str(rng.choice(list(domain_effect)))
        size = float(np.round(rng.uniform(100, 1500)))
        noise = [str(rng.choice(["a", "b", "c"])) for _ in range(noise_nominal)]
        cnoise = [float(np.round(rng.normal(50, 10), 2)) for _ in range(noise_continuous)]
        prod = type_effect[t] * domain_effect[dom] * float(np.exp(rng.normal(0, 0.08)))
        rows.append([t, dom, size] + noise + cnoise + [prod])
    _punch_holes(rng, rows, range(len(specs) - 1), missing)
    d = Dataset(tuple(specs), _ids(n), [tuple(r) for r in rows])
    return normalize_by_mean(d, DEPENDENT)


def homogeneous(seed: int, n: int = 100, slope: float = 0.01, noise: float = 0.02,
                noise_nominal: int = 2) -> Dataset:
    """Productivity = slope * size + small noise, with a narrow size range."""
    rng = np.random.default_rng(seed)
    specs = [VariableSpec(SIZE, Scale.CONTINUOUS)]
    specs += [VariableSpec(f"noise{k}", Scale.NOMINAL) for k in range(noise_nominal)]
    specs.append(VariableSpec(DEPENDENT, Scale.CONTINUOUS, Role.DEPENDENT))
    rows = []
    for _ in range(n):
        size = float(rng.uniform(90, 110))
        prod = slope * size + float(rng.normal(0, noise))
        rows.append((size,) + tuple(str(rng.choice(["a", "b"])) for _ in range(noise_nominal)) + (prod,))
    return Dataset(tuple(specs), _ids(n), rows)


def missing_size(seed: int, n: int = 60, share: float = 0.3) -> Dataset:
    """Heterogeneous data where ``share`` of the projects lack the size value."""
    d = heterogeneous(seed, n=n, missing=0.0)
    rng = np.random.default_rng(seed + 1)
    j = d.index(SIZE)
    blank = set(rng.choice(n, size=int(round(share * n)), replace=False).tolist())
    rows = [r[:j] + (None,) + r[j + 1:] if i in blank else r for i, r in enumerate(d.rows)]
    return Dataset(d.variables, d.ids, rows)


def wide(seed: int, n: int = 100, n_independent: int = 30, missing: float = 0.05) -> Dataset:
    """``n`` x ``n_independent`` dataset (two planted factors, size, noise)."""
    return heterogeneous(seed, n=n, noise_nominal=n_independent - 4, noise_continuous=1,
                         missing=missing)
