"""Typed project dataset: schema, CSV parsing/serialization, summaries.

A cell value is ``None`` (missing), a ``str`` (nominal label) or a
``float`` (continuous number).
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Optional, Sequence, Union

Value = Optional[Union[str, float]]

MISSING_TOKEN = "NA"
DEFAULT_ID_COLUMN = "project_id"


class DatasetError(ValueError):
    """Raised for schema violations and malformed input files."""

    def __init__(self, message, row=None, column=None, source=None):
        self.row = row
        self.column = column
        self.source = source
        where = []
        if source is not None:
            where.append(str(source))
        if row is not None:
            where.append(f"line {row}")
        if column is not None:
            where.append(f"column {column!r}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)


class Scale(str, Enum):
    NOMINAL = "nominal"
    CONTINUOUS = "continuous"


class Role(str, Enum):
    INDEPENDENT = "independent"
    DEPENDENT = "dependent"
    IDENTIFIER = "identifier"
    EXCLUDED = "excluded"


@dataclass(frozen=True)
class VariableSpec:
    name: str
    scale: Scale
    role: Role = Role.INDEPENDENT

    def __post_init__(self):
        if not self.name:
            raise DatasetError("variable name must be non-empty")
        object.__setattr__(self, "scale", Scale(self.scale))
        object.__setattr__(self, "role", Role(self.role))


def check_value(spec: VariableSpec, value: Value) -> None:
    if value is None:
        return
    if spec.scale is Scale.CONTINUOUS:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise DatasetError(f"expected a number, got {value!r}", column=spec.name)
        if not math.isfinite(value):
            raise DatasetError(f"non-finite number {value!r}", column=spec.name)
    else:
        if not isinstance(value, str) or value == "":
            raise DatasetError(f"expected a non-empty label, got {value!r}", column=spec.name)


@dataclass(frozen=True)
class Dataset:
    """Immutable table of projects x variables.

    ``rows[i]`` holds one value per entry of ``variables`` for project
    ``ids[i]``.
    """

    variables: tuple
    ids: tuple
    rows: tuple
    id_column: str = DEFAULT_ID_COLUMN
    _index: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        variables = tuple(self.variables)
        ids = tuple(str(i) for i in self.ids)
        rows = tuple(
            tuple(float(v) if isinstance(v, int) and not isinstance(v, bool) else v for v in r)
            for r in self.rows
        )
        object.__setattr__(self, "variables", variables)
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "rows", rows)

        names = [v.name for v in variables]
        if len(set(names)) != len(names):
            raise DatasetError("duplicate variable names")
        if self.id_column in names:
            raise DatasetError(f"variable name clashes with id column {self.id_column!r}")
        dependents = [v for v in variables if v.role is Role.DEPENDENT]
        if len(dependents) > 1:
            raise DatasetError("more than one dependent variable")
        if dependents and dependents[0].scale is not Scale.CONTINUOUS:
            raise DatasetError("dependent variable must be continuous", column=dependents[0].name)
        if len(ids) != len(rows):
            raise DatasetError("ids and rows differ in length")
        seen = set()
        for pid in ids:
            if pid in seen:
                raise DatasetError(f"duplicate project id {pid!r}")
            seen.add(pid)
        for pid, row in zip(ids, rows):
            if len(row) != len(variables):
                raise DatasetError(f"project {pid!r} has {len(row)} values, expected {len(variables)}")
            for spec, value in zip(variables, row):
                check_value(spec, value)
        object.__setattr__(self, "_index", {n: i for i, n in enumerate(names)})

    # -- lookup helpers -------------------------------------------------
    @property
    def names(self) -> list:
        return [v.name for v in self.variables]

    def __len__(self):
        return len(self.ids)

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise DatasetError(f"unknown variable {name!r}") from None

    def spec(self, name: str) -> VariableSpec:
        return self.variables[self.index(name)]

    def column(self, name: str) -> list:
        j = self.index(name)
        return [r[j] for r in self.rows]

    @property
    def dependent(self) -> Optional[str]:
        for v in self.variables:
            if v.role is Role.DEPENDENT:
                return v.name
        return None

    @property
    def independent(self) -> list:
        return [v.name for v in self.variables if v.role is Role.INDEPENDENT]

    def row_dict(self, i: int) -> dict:
        return dict(zip(self.names, self.rows[i]))

    def take(self, positions: Iterable[int]) -> "Dataset":
        positions = list(positions)
        return replace(
            self,
            ids=[self.ids[i] for i in positions],
            rows=[self.rows[i] for i in positions],
        )

    def without(self, ids: Iterable[str]) -> "Dataset":
        drop = set(ids)
        return self.take(i for i, pid in enumerate(self.ids) if pid not in drop)


@dataclass(frozen=True)
class DatasetSummary:
    project_count: int
    independent_variable_count: int
    missing_ratio: float

    def table_line(self) -> str:
        return f"{self.project_count} {self.independent_variable_count} {100 * self.missing_ratio:.2f}%"


# -- schema ---------------------------------------------------------------

def parse_schema(text: str, source=None) -> list:
    """Parse ``name,scale,role`` lines; blank lines and ``#`` comments skip."""
    specs = []
    reader = csv.reader(io.StringIO(text))
    for lineno, fields in enumerate(reader, start=1):
        if not fields or not "".join(fields).strip() or fields[0].lstrip().startswith("#"):
            continue
        fields = [f.strip() for f in fields]
        if [f.lower() for f in fields] == ["name", "scale", "role"]:
            continue
        if len(fields) != 3:
            raise DatasetError("expected 'name,scale,role'", row=lineno, source=source)
        name, scale, role = fields
        try:
            specs.append(VariableSpec(name, Scale(scale.lower()), Role(role.lower())))
        except ValueError as exc:
            raise DatasetError(str(exc), row=lineno, source=source) from None
    names = [s.name for s in specs]
    if len(set(names)) != len(names):
        raise DatasetError("duplicate variable in schema", source=source)
    return specs


def write_schema(specs: Sequence[VariableSpec]) -> str:
    return "".join(f"{s.name},{s.scale.value},{s.role.value}\n" for s in specs)


# -- CSV ------------------------------------------------------------------

def _parse_cell(token: str, spec: VariableSpec, row: int, source) -> Value:
    if token == "" or token == MISSING_TOKEN:
        return None
    if spec.scale is Scale.NOMINAL:
        return token
    try:
        value = float(token)
    except ValueError:
        raise DatasetError(f"non-numeric value {token!r}", row=row, column=spec.name, source=source) from None
    if not math.isfinite(value):
        raise DatasetError(f"non-finite value {token!r}", row=row, column=spec.name, source=source)
    return value


def parse_dataset(csv_text: str, schema: Sequence[VariableSpec], source=None) -> Dataset:
    """Parse a dataset CSV whose first column is the project id.

    Empty cells and the token ``NA`` become missing. Errors carry the
    1-based line number and the offending column.
    """
    reader = csv.reader(io.StringIO(csv_text))
    try:
        header = next(reader)
    except StopIteration:
        raise DatasetError("empty file", source=source) from None
    if not header or not header[0]:
        raise DatasetError("missing project-id column", row=1, source=source)
    id_column, names = header[0], header[1:]
    by_name = {s.name: s for s in schema}
    seen = set()
    for name in names:
        if name not in by_name:
            raise DatasetError("unknown header", row=1, column=name, source=source)
        if name in seen:
            raise DatasetError("duplicate header", row=1, column=name, source=source)
        seen.add(name)
    for s in schema:
        if s.name not in seen:
            raise DatasetError("schema variable missing from header", row=1, column=s.name, source=source)
    order = [names.index(s.name) + 1 for s in schema]

    ids, rows, seen_ids = [], [], {}
    for lineno, fields in enumerate(reader, start=2):
        if not fields:
            continue
        if len(fields) != len(header):
            raise DatasetError(f"row has {len(fields)} fields, header has {len(header)}",
                               row=lineno, source=source)
        pid = fields[0]
        if pid == "":
            raise DatasetError("empty project id", row=lineno, column=id_column, source=source)
        if pid in seen_ids:
            raise DatasetError(f"duplicate project id {pid!r} (first on line {seen_ids[pid]})",
                               row=lineno, column=id_column, source=source)
        seen_ids[pid] = lineno
        ids.append(pid)
        rows.append(tuple(_parse_cell(fields[k], s, lineno, source) for k, s in zip(order, schema)))
    return Dataset(tuple(schema), ids, rows, id_column=id_column)


def format_number(x: float) -> str:
    text = repr(float(x))
    return text[:-2] if text.endswith(".0") else text


def write_dataset(d: Dataset) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow([d.id_column] + d.names)
    for pid, row in zip(d.ids, d.rows):
        cells = [pid]
        for spec, value in zip(d.variables, row):
            if value is None:
                cells.append("")
            elif isinstance(value, str):
                if value == MISSING_TOKEN:
                    raise DatasetError(f"label {MISSING_TOKEN!r} would read back as missing",
                                       column=spec.name)
                cells.append(value)
            else:
                cells.append(format_number(value))
        writer.writerow(cells)
    return out.getvalue()


# -- summaries ------------------------------------------------------------

def summarize(d: Dataset, include_dependent: bool = True) -> DatasetSummary:
    """Project count, independent-variable count and missing-cell ratio.

    The ratio is taken over independent columns plus, by default, the
    dependent column. Identifier and excluded columns never count.
    """
    roles = {Role.INDEPENDENT, Role.DEPENDENT} if include_dependent else {Role.INDEPENDENT}
    cols = [j for j, v in enumerate(d.variables) if v.role in roles]
    cells = len(d) * len(cols)
    missing = sum(1 for r in d.rows for j in cols if r[j] is None)
    return DatasetSummary(len(d), len(d.independent), missing / cells if cells else 0.0)


def normalize_by_mean(d: Dataset, variable: str) -> Dataset:
    spec = d.spec(variable)
    if spec.scale is not Scale.CONTINUOUS:
        raise DatasetError("cannot normalize a nominal variable", column=variable)
    j = d.index(variable)
    present = [r[j] for r in d.rows if r[j] is not None]
    if not present:
        raise DatasetError("no values to normalize", column=variable)
    mean = math.fsum(present) / len(present)
    if mean == 0:
        raise DatasetError("mean is zero", column=variable)
    rows = [r[:j] + ((None if r[j] is None else r[j] / mean),) + r[j + 1:] for r in d.rows]
    return replace(d, rows=rows)
