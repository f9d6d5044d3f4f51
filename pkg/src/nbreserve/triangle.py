"""Run-off triangle data model and CSV ingestion.

Incremental claim counts are indexed by accident year ``i`` (1-based)
and development year ``j`` (0-based). For a square triangle of
dimension ``I`` the cell ``(i, j)`` is observed exactly when
``i + j <= I``; the remaining cells form the future region that
reserving techniques must predict.
"""

from __future__ import annotations

import csv
import io
import math
from typing import Iterator, List, NamedTuple, Optional, Sequence, Union

import numpy as np

from .errors import (
    FutureCellError,
    MissingCellError,
    NegativeCountError,
    NonIntegerCountError,
    RaggedRowsError,
)

Label = Union[int, str]


class CellRecord(NamedTuple):
    """One observed cell in long format."""

    ay: int
    dy: int
    count: int


def _coerce_count(value, where: str, round_amounts: bool) -> int:
    """Validate a single cell value and return it as a nonnegative int."""
    try:
        x = float(value)
    except (TypeError, ValueError):
        raise NonIntegerCountError(f"cell {where}: {value!r} is not a number")
    if not math.isfinite(x):
        raise NonIntegerCountError(f"cell {where}: {value!r} is not finite")
    if x < 0:
        raise NegativeCountError(f"cell {where}: negative count {value!r}")
    if round_amounts:
        return int(math.floor(x + 0.5))
    if x != int(x):
        raise NonIntegerCountError(
            f"cell {where}: non-integer count {value!r} "
            "(pass round_amounts=True to round monetary amounts)"
        )
    return int(x)


class _TriangleBase:
    """Shared storage for incremental and cumulative triangles."""

    def __init__(self, rows: Sequence[Sequence[int]], origin_label: Optional[Label] = None):
        dimension = len(rows)
        if dimension < 2:
            raise RaggedRowsError("a triangle needs at least 2 accident years")
        grid = np.zeros((dimension, dimension), dtype=np.int64)
        for idx, row in enumerate(rows):
            expected = dimension - idx
            if len(row) != expected:
                raise RaggedRowsError(
                    f"accident year {idx + 1}: expected {expected} observed cells, got {len(row)}"
                )
            grid[idx, :expected] = row
        grid.setflags(write=False)
        self.dimension = dimension
        self.origin_label = origin_label
        self._grid = grid

    @property
    def n_dev(self) -> int:
        return self.dimension

    def cell(self, ay: int, dy: int) -> int:
        """Return the count for accident year ``ay`` (1-based), development year ``dy``."""
        if not (1 <= ay <= self.dimension and 0 <= dy <= self.dimension - ay):
            raise KeyError(f"cell ({ay}, {dy}) is not observed in a {self.dimension}-dimension triangle")
        return int(self._grid[ay - 1, dy])

    def row(self, ay: int) -> np.ndarray:
        """Observed counts for one accident year, in development order."""
        if not 1 <= ay <= self.dimension:
            raise KeyError(f"accident year {ay} out of range")
        return self._grid[ay - 1, : self.dimension - ay + 1].copy()

    def observed_cells(self) -> Iterator[CellRecord]:
        for i in range(1, self.dimension + 1):
            for j in range(self.dimension - i + 1):
                yield CellRecord(i, j, int(self._grid[i - 1, j]))

    def to_matrix(self) -> np.ndarray:
        """Dense float matrix with NaN in the future region."""
        out = self._grid.astype(float)
        for i in range(self.dimension):
            out[i, self.dimension - i :] = np.nan
        return out

    def __eq__(self, other) -> bool:
        # origin_label is display metadata and does not affect equality
        if type(other) is not type(self):
            return NotImplemented
        return self.dimension == other.dimension and np.array_equal(self._grid, other._grid)

    def __repr__(self) -> str:
        return f"{type(self).__name__}(dimension={self.dimension}, origin_label={self.origin_label!r})"


class RunOffTriangle(_TriangleBase):
    """Square triangle of incremental claim counts.

    Construct from per-accident-year rows of observed counts, where row
    ``i`` (1-based) holds the ``I - i + 1`` observed development years::

        RunOffTriangle.from_rows([[10, 5], [20]])
    """

    @classmethod
    def from_rows(
        cls,
        rows: Sequence[Sequence[int]],
        origin_label: Optional[Label] = None,
        round_amounts: bool = False,
    ) -> "RunOffTriangle":
        checked: List[List[int]] = []
        for idx, row in enumerate(rows):
            checked.append(
                [_coerce_count(v, f"({idx + 1}, {j})", round_amounts) for j, v in enumerate(row)]
            )
        return cls(checked, origin_label=origin_label)

    def total(self) -> int:
        return int(self._grid.sum())


class CumulativeTriangle(_TriangleBase):
    """Square triangle of cumulative claim counts, nondecreasing along each row."""

    def __init__(self, rows, origin_label=None):
        super().__init__(rows, origin_label=origin_label)
        for i in range(1, self.dimension + 1):
            r = self._grid[i - 1, : self.dimension - i + 1]
            if np.any(np.diff(r) < 0):
                raise NegativeCountError(f"accident year {i}: cumulative counts must be nondecreasing")

    def latest(self) -> np.ndarray:
        """Latest observed diagonal C[i, I - i], one entry per accident year."""
        return np.array([self.cell(i, self.dimension - i) for i in range(1, self.dimension + 1)], dtype=np.int64)


def cumulate(t: RunOffTriangle) -> CumulativeTriangle:
    """Row-wise cumulative sums over the observed region."""
    rows = [np.cumsum(t.row(i)).tolist() for i in range(1, t.dimension + 1)]
    return CumulativeTriangle(rows, origin_label=t.origin_label)


def decumulate(c: CumulativeTriangle) -> RunOffTriangle:
    """Inverse of :func:`cumulate`."""
    rows = []
    for i in range(1, c.dimension + 1):
        r = c.row(i)
        rows.append(np.diff(r, prepend=0).tolist())
    return RunOffTriangle.from_rows(rows, origin_label=c.origin_label)


def to_long(t: RunOffTriangle) -> List[CellRecord]:
    """Observed cells in long format, row-major (ay ascending, then dy)."""
    return list(t.observed_cells())


def from_long(records: Sequence[CellRecord], dimension: Optional[int] = None) -> RunOffTriangle:
    """Rebuild a square triangle from long-format records.

    The records must cover the observed region exactly once; the
    dimension is inferred from the largest accident year when not given.
    """
    if not records:
        raise MissingCellError("no records supplied")
    recs = [CellRecord(int(r[0]), int(r[1]), r[2]) for r in records]
    if dimension is None:
        dimension = max(r.ay for r in recs)
    seen = {}
    for r in recs:
        key = (r.ay, r.dy)
        if key in seen:
            raise RaggedRowsError(f"duplicate record for cell {key}")
        seen[key] = r.count
    rows = []
    for i in range(1, dimension + 1):
        row = []
        for j in range(dimension - i + 1):
            if (i, j) not in seen:
                raise MissingCellError(f"observed cell ({i}, {j}) missing from records")
            row.append(seen.pop((i, j)))
        rows.append(row)
    if seen:
        extra = sorted(seen)[0]
        raise FutureCellError(f"record for future cell {extra} not allowed")
    return RunOffTriangle.from_rows(rows)


def _split_lines(text: str) -> List[List[str]]:
    return [row for row in csv.reader(io.StringIO(text)) if any(f.strip() for f in row)]


def parse_triangle(text: str, round_amounts: bool = False) -> RunOffTriangle:
    """Parse a triangle from CSV text.

    Format: an optional header ``ay,dy0,dy1,...`` followed by one line
    per accident year. With the header present each line starts with the
    accident-year label; without it every field is a count. Future cells
    must be empty strings. ``round_amounts`` rounds monetary amounts to
    the nearest integer instead of rejecting non-integer cells.
    """
    lines = _split_lines(text)
    if not lines:
        raise RaggedRowsError("empty input")

    has_header = lines[0][0].strip().lower() == "ay"
    data = lines[1:] if has_header else lines
    if not data:
        raise RaggedRowsError("no data rows")
    width = len(lines[0])
    n_dev = width - 1 if has_header else width
    dimension = len(data)
    if dimension != n_dev:
        raise RaggedRowsError(
            f"square triangle required: {dimension} accident years but {n_dev} development years"
        )

    origin_label: Optional[Label] = None
    rows: List[List[int]] = []
    for idx, line in enumerate(data):
        if len(line) != width:
            raise RaggedRowsError(f"row {idx + 1}: expected {width} fields, got {len(line)}")
        fields = line[1:] if has_header else line
        if has_header and idx == 0:
            label = line[0].strip()
            origin_label = int(label) if label.lstrip("-").isdigit() else label
        observed = dimension - idx
        row = []
        for j, field in enumerate(fields):
            field = field.strip()
            if j < observed:
                if field == "":
                    raise MissingCellError(f"cell ({idx + 1}, {j}): observed cell is empty")
                row.append(_coerce_count(field, f"({idx + 1}, {j})", round_amounts))
            elif field != "":
                raise FutureCellError(f"cell ({idx + 1}, {j}): future cell must be empty")
        rows.append(row)
    return RunOffTriangle.from_rows(rows, origin_label=origin_label)


def serialize_triangle(t: _TriangleBase) -> str:
    """Render a triangle as CSV text, inverse of :func:`parse_triangle`."""
    I = t.dimension
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["ay"] + [f"dy{j}" for j in range(I)])
    base = t.origin_label if isinstance(t.origin_label, int) else 1
    for i in range(1, I + 1):
        row: List[object] = [base + i - 1]
        row.extend(int(v) for v in t.row(i))
        row.extend("" for _ in range(i - 1))
        writer.writerow(row)
    return out.getvalue()


def read_triangle(path, round_amounts: bool = False) -> RunOffTriangle:
    """Read a triangle CSV from disk."""
    with open(path, "r", encoding="utf-8") as fh:
        return parse_triangle(fh.read(), round_amounts=round_amounts)
