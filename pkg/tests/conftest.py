import sys
from pathlib import Path

import pytest

from osrkit.dataset import Dataset, Role, Scale, VariableSpec

sys.path.insert(0, str(Path(__file__).parent))

NEW = [1.0, 1.1, 0.9, 1.0]
ENH = [2.0, 2.1, 1.9, 2.0]


def type8_dataset():
    specs = (VariableSpec("Type", Scale.NOMINAL),
             VariableSpec("productivity", Scale.CONTINUOUS, Role.DEPENDENT))
    rows = [("New", v) for v in NEW] + [("Enh", v) for v in ENH]
    return Dataset(specs, [f"p{i}" for i in range(1, 9)], rows)


@pytest.fixture
def type8():
    return type8_dataset()


@pytest.fixture
def schema_text():
    return "Type,nominal,independent\nSize,continuous,independent\nproductivity,continuous,dependent\n"


def random_small_dataset(rng, n_vars):
    n = rng.randint(6, 12)
    levels = [rng.choice([["a", "b"], ["a", "b", "c"]]) for _ in range(n_vars)]
    effects = [{lv: rng.choice([0.5, 1.0, 3.0]) for lv in lvls} for lvls in levels]
    specs = [VariableSpec(f"v{k}", Scale.NOMINAL) for k in range(n_vars)]
    specs.append(VariableSpec("y", Scale.CONTINUOUS, Role.DEPENDENT))
    rows = []
    for _ in range(n):
        cats = [rng.choice(l) if rng.random() > 0.1 else None for l in levels]
        y = 1.0
        for c, eff in zip(cats, effects):
            y *= eff.get(c, 1.0)
        rows.append(tuple(cats) + (round(y * rng.uniform(0.9, 1.1), 4),))
    d = Dataset(specs, [f"q{i}" for i in range(n)], rows)
    target = {f"v{k}": (rng.choice(levels[k]) if rng.random() > 0.15 else None) for k in range(n_vars)}
    return d, target


ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
