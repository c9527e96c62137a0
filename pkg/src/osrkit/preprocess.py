"""Data preparation and selection: label unification, variable splitting,
variable/project filtering and box-plot outlier flags."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable, Iterable, Sequence

from .dataset import Dataset, DatasetError, Role, Scale, VariableSpec, format_number
from .stats import quantile


@dataclass(frozen=True)
class CategoryMapping:
    entries: tuple = ()

    def __post_init__(self):
        entries = tuple(tuple(e) for e in self.entries)
        object.__setattr__(self, "entries", entries)
        table = {}
        for variable, old, new in entries:
            prev = table.setdefault(variable, {}).setdefault(old, new)
            if prev != new:
                raise DatasetError(f"{old!r} maps to both {prev!r} and {new!r}", column=variable)
        for variable, pairs in table.items():
            for old, new in pairs.items():
                if new in pairs and new != old:
                    raise DatasetError(f"target label {new!r} is also a source label", column=variable)
        object.__setattr__(self, "_table", table)

    def table(self) -> dict:
        return self._table


def apply_category_mapping(d: Dataset, m: CategoryMapping) -> Dataset:
    table = m.table()
    for variable in table:
        if d.spec(variable).scale is not Scale.NOMINAL:
            raise DatasetError("mapping targets a continuous variable", column=variable)
    cols = {d.index(v): t for v, t in table.items()}
    rows = [
        tuple(cols[j].get(v, v) if j in cols and v is not None else v for j, v in enumerate(r))
        for r in d.rows
    ]
    return replace(d, rows=rows)


def count_remapped(d: Dataset, m: CategoryMapping) -> int:
    """Number of cells ``apply_category_mapping`` would rewrite."""
    total = 0
    for variable, pairs in m.table().items():
        total += sum(1 for v in d.column(variable) if v is not None and v in pairs and pairs[v] != v)
    return total


@dataclass(frozen=True)
class SplitRule:
    source_variable: str
    target_a: str
    target_b: str
    table: tuple = ()
    lenient: bool = False

    def __post_init__(self):
        table = tuple((old, tuple(pair)) for old, pair in
                      (self.table.items() if isinstance(self.table, dict) else self.table))
        olds = [old for old, _ in table]
        if len(set(olds)) != len(olds):
            raise DatasetError("label listed twice in split rule", column=self.source_variable)
        if self.target_a == self.target_b:
            raise DatasetError("split targets must differ", column=self.target_a)
        object.__setattr__(self, "table", table)


def split_variable(d: Dataset, r: SplitRule) -> Dataset:
    """Replace one nominal column by two derived nominal columns.

    The new columns are appended as independent variables. Unlisted labels
    are an error unless the rule is lenient, in which case both targets
    become missing.
    """
    spec = d.spec(r.source_variable)
    if spec.scale is not Scale.NOMINAL:
        raise DatasetError("cannot split a continuous variable", column=r.source_variable)
    remaining = [n for n in d.names if n != r.source_variable]
    for target in (r.target_a, r.target_b):
        if target in remaining or target == d.id_column:
            raise DatasetError("split target collides with an existing variable", column=target)
    lookup = dict(r.table)
    j = d.index(r.source_variable)
    rows = []
    for pid, row in zip(d.ids, d.rows):
        value = row[j]
        if value is None:
            a = b = None
        elif value in lookup:
            a, b = lookup[value]
            a, b = a or None, b or None
        elif r.lenient:
            a = b = None
        else:
            raise DatasetError(f"label {value!r} (project {pid!r}) not covered by split rule",
                               column=r.source_variable)
        rows.append(row[:j] + row[j + 1:] + (a, b))
    variables = d.variables[:j] + d.variables[j + 1:] + (
        VariableSpec(r.target_a, Scale.NOMINAL, Role.INDEPENDENT),
        VariableSpec(r.target_b, Scale.NOMINAL, Role.INDEPENDENT),
    )
    return replace(d, variables=variables, rows=rows)


class DropReason(str, Enum):
    MISSING_RATIO = "missing_ratio"
    CONSTANT = "constant"
    REDUNDANT = "redundant"


@dataclass(frozen=True)
class SelectionReport:
    dropped_variables: tuple
    kept_variables: tuple

    def to_csv(self) -> str:
        lines = ["variable,status,reason"]
        lines += [f"{name},dropped,{reason.value}" for name, reason in self.dropped_variables]
        lines += [f"{name},kept," for name in self.kept_variables]
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        lines = [f"kept {len(self.kept_variables)} independent variables, "
                 f"dropped {len(self.dropped_variables)}"]
        lines += [f"  dropped {name} ({reason.value})" for name, reason in self.dropped_variables]
        return "\n".join(lines) + "\n"


def select_variables(d: Dataset, max_missing: float = 0.9, drop_constant: bool = True,
                     redundant: Iterable[str] = ()):
    redundant = list(redundant)
    for name in redundant:
        role = d.spec(name).role
        if role is Role.DEPENDENT:
            raise DatasetError("the dependent variable cannot be declared redundant", column=name)
    dropped, kept = [], []
    n = len(d)
    for name in d.independent:
        column = d.column(name)
        present = [v for v in column if v is not None]
        if name in redundant:
            dropped.append((name, DropReason.REDUNDANT))
        elif n and (n - len(present)) / n >= max_missing:
            dropped.append((name, DropReason.MISSING_RATIO))
        elif drop_constant and len(set(present)) <= 1:
            dropped.append((name, DropReason.CONSTANT))
        else:
            kept.append(name)
    gone = {name for name, _ in dropped}
    keep_cols = [j for j, v in enumerate(d.variables) if v.name not in gone]
    out = replace(
        d,
        variables=[d.variables[j] for j in keep_cols],
        rows=[tuple(r[j] for j in keep_cols) for r in d.rows],
    )
    return out, SelectionReport(tuple(dropped), tuple(kept))


def project_missing_fraction(d: Dataset, i: int) -> float:
    cols = [d.index(n) for n in d.independent]
    if not cols:
        return 0.0
    return sum(1 for j in cols if d.rows[i][j] is None) / len(cols)


def drop_high_missing_projects(d: Dataset, threshold: float = 0.6) -> Dataset:
    """Remove projects whose share of missing independent cells exceeds
    ``threshold`` (strictly)."""
    if not 0 < threshold <= 1:
        raise ValueError("threshold must lie in (0, 1]")
    return d.take(i for i in range(len(d)) if project_missing_fraction(d, i) <= threshold)


class OutlierClass(str, Enum):
    OUTLIER = "outlier"
    EXTREME = "extreme"


@dataclass(frozen=True)
class OutlierFlag:
    project_id: str
    cls: OutlierClass
    variable: str
    value: float = float("nan")


def iqr_fences(values: Sequence[float], k: float):
    xs = sorted(values)
    q1, q3 = quantile(xs, 0.25), quantile(xs, 0.75)
    iqr = q3 - q1
    return q1 - k * iqr, q3 + k * iqr


def detect_outliers_iqr(d: Dataset, variable: str, k_outlier: float = 1.5,
                        k_extreme: float = 3.0) -> list:
    spec = d.spec(variable)
    if spec.scale is not Scale.CONTINUOUS:
        raise DatasetError("outlier detection needs a continuous variable", column=variable)
    column = d.column(variable)
    present = [v for v in column if v is not None]
    if len(present) < 4:
        raise DatasetError(f"need at least 4 values, have {len(present)}", column=variable)
    out_lo, out_hi = iqr_fences(present, k_outlier)
    ext_lo, ext_hi = iqr_fences(present, k_extreme)
    flags = []
    for pid, v in zip(d.ids, column):
        if v is None:
            continue
        if v < ext_lo or v > ext_hi:
            flags.append(OutlierFlag(pid, OutlierClass.EXTREME, variable, v))
        elif v < out_lo or v > out_hi:
            flags.append(OutlierFlag(pid, OutlierClass.OUTLIER, variable, v))
    return flags


def flags_to_csv(flags: Sequence[OutlierFlag]) -> str:
    lines = ["project_id,variable,class,value"]
    lines += [f"{f.project_id},{f.variable},{f.cls.value},{format_number(f.value)}" for f in flags]
    return "\n".join(lines) + "\n"


def flags_to_text(flags: Sequence[OutlierFlag]) -> str:
    if not flags:
        return "no outliers or extreme values\n"
    return "".join(f"{f.project_id}: {f.variable} = {format_number(f.value)} ({f.cls.value})\n"
                   for f in flags)


def filter_projects(d: Dataset, keep: Callable) -> Dataset:
    """Rows for which ``keep(project_id, row_dict)`` is true, order kept."""
    return d.take(i for i, pid in enumerate(d.ids) if keep(pid, d.row_dict(i)))


# -- rule files -----------------------------------------------------------

def _rows(text: str):
    return [r for r in csv.reader(io.StringIO(text)) if r and "".join(r).strip()]


def parse_mapping(text: str, source=None) -> CategoryMapping:
    rows = _rows(text)
    if rows and [c.strip() for c in rows[0]] == ["variable", "old_label", "new_label"]:
        rows = rows[1:]
    entries = []
    for lineno, row in enumerate(rows, start=1):
        if len(row) != 3:
            raise DatasetError("expected 'variable,old_label,new_label'", row=lineno, source=source)
        entries.append(tuple(row))
    return CategoryMapping(tuple(entries))


def parse_split_rule(text: str, source=None, lenient: bool = False) -> SplitRule:
    """Header ``variable,old_label,<target_a>,<target_b>``; every row names
    the same source variable."""
    rows = _rows(text)
    if not rows or len(rows[0]) != 4:
        raise DatasetError("header must be 'variable,old_label,<target_a>,<target_b>'",
                           row=1, source=source)
    target_a, target_b = rows[0][2].strip(), rows[0][3].strip()
    tables = {}
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != 4:
            raise DatasetError("expected 4 fields", row=lineno, source=source)
        tables.setdefault(row[0], []).append((row[1], (row[2], row[3])))
    if len(tables) != 1:
        raise DatasetError("a split-rule file describes exactly one source variable", source=source)
    (var, table), = tables.items()
    return SplitRule(var, target_a, target_b, tuple(table), lenient)
