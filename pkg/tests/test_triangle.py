import numpy as np
import pytest

from nbreserve import (
    CellRecord,
    CumulativeTriangle,
    RunOffTriangle,
    cumulate,
    decumulate,
    from_long,
    parse_triangle,
    serialize_triangle,
    to_long,
)
from nbreserve.errors import (
    FutureCellError,
    MissingCellError,
    NegativeCountError,
    NonIntegerCountError,
    RaggedRowsError,
)
from conftest import random_triangle


class TestConstruction:
    def test_from_rows_basic(self):
        t = RunOffTriangle.from_rows([[10, 5, 2], [20, 8], [30]])
        assert t.dimension == 3
        assert t.cell(1, 0) == 10
        assert t.cell(1, 2) == 2
        assert t.cell(3, 0) == 30
        assert t.total() == 75

    def test_row_lengths_must_decrease(self):
        with pytest.raises(RaggedRowsError):
            RunOffTriangle.from_rows([[1, 2], [3, 4]])
        with pytest.raises(RaggedRowsError):
            RunOffTriangle.from_rows([[1], [2, 3]])

    def test_needs_two_accident_years(self):
        with pytest.raises(RaggedRowsError):
            RunOffTriangle.from_rows([[1]])

    def test_negative_count_rejected(self):
        with pytest.raises(NegativeCountError):
            RunOffTriangle.from_rows([[1, -2], [3]])

    def test_non_integer_rejected_unless_rounding(self):
        with pytest.raises(NonIntegerCountError):
            RunOffTriangle.from_rows([[1.5, 2], [3]])
        t = RunOffTriangle.from_rows([[1.5, 2.4], [3.0]], round_amounts=True)
        # half-up rounding
        assert t.cell(1, 0) == 2
        assert t.cell(1, 1) == 2

    def test_nan_rejected(self):
        with pytest.raises(NonIntegerCountError):
            RunOffTriangle.from_rows([[float("nan"), 2], [3]])

    def test_future_cell_access_raises(self):
        t = RunOffTriangle.from_rows([[10, 5], [20]])
        with pytest.raises(KeyError):
            t.cell(2, 1)
        with pytest.raises(KeyError):
            t.cell(3, 0)

    def test_observed_cell_count(self):
        t = RunOffTriangle.from_rows([[1, 2, 3, 4], [5, 6, 7], [8, 9], [10]])
        cells = list(t.observed_cells())
        assert len(cells) == 4 * 5 // 2
        assert cells[0] == CellRecord(1, 0, 1)
        assert cells[-1] == CellRecord(4, 0, 10)

    def test_to_matrix_future_region_nan(self):
        t = RunOffTriangle.from_rows([[1, 2], [3]])
        m = t.to_matrix()
        assert m[0, 0] == 1 and m[0, 1] == 2 and m[1, 0] == 3
        assert np.isnan(m[1, 1])

    def test_equality_ignores_origin_label(self):
        a = RunOffTriangle.from_rows([[1, 2], [3]], origin_label=1993)
        b = RunOffTriangle.from_rows([[1, 2], [3]])
        c = RunOffTriangle.from_rows([[1, 9], [3]])
        assert a == b
        assert a != c

    def test_grid_is_immutable(self):
        t = RunOffTriangle.from_rows([[1, 2], [3]])
        with pytest.raises(ValueError):
            t._grid[0, 0] = 99


class TestCumulative:
    def test_cumulate_values(self, australian):
        c = cumulate(australian)
        # first-row running sums of the incremental counts
        assert c.row(1).tolist() == [220, 1075, 1819, 2233, 2620, 2924, 2968]
        assert c.latest().tolist() == [2968, 3516, 3749, 3252, 2570, 765, 2]

    def test_decumulate_round_trip(self, australian):
        assert decumulate(cumulate(australian)) == australian

    def test_round_trip_random(self):
        rng = np.random.default_rng(7)
        for _ in range(25):
            t = random_triangle(rng, int(rng.integers(2, 9)))
            assert decumulate(cumulate(t)) == t

    def test_monotonicity_enforced(self):
        with pytest.raises(NegativeCountError):
            CumulativeTriangle([[5, 3], [1]])


class TestLongFormat:
    def test_round_trip(self, australian):
        assert from_long(to_long(australian)) == australian

    def test_round_trip_random(self):
        rng = np.random.default_rng(11)
        for _ in range(25):
            t = random_triangle(rng, int(rng.integers(2, 9)))
            assert from_long(to_long(t)) == t

    def test_order_does_not_matter(self, australian):
        recs = to_long(australian)
        assert from_long(recs[::-1]) == australian

    def test_duplicate_rejected(self):
        recs = [CellRecord(1, 0, 1), CellRecord(1, 1, 2), CellRecord(2, 0, 3), CellRecord(1, 0, 9)]
        with pytest.raises(RaggedRowsError):
            from_long(recs)

    def test_missing_cell_rejected(self):
        with pytest.raises(MissingCellError):
            from_long([CellRecord(1, 0, 1), CellRecord(2, 0, 3)])

    def test_future_cell_rejected(self):
        recs = [
            CellRecord(1, 0, 1),
            CellRecord(1, 1, 2),
            CellRecord(2, 0, 3),
            CellRecord(2, 1, 4),
        ]
        with pytest.raises(FutureCellError):
            from_long(recs)

    def test_empty_rejected(self):
        with pytest.raises(MissingCellError):
            from_long([])


class TestCsv:
    def test_serialize_parse_round_trip(self, australian):
        text = serialize_triangle(australian)
        again = parse_triangle(text)
        assert again == australian
        assert again.origin_label == australian.origin_label

    def test_round_trip_random(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            t = random_triangle(rng, int(rng.integers(2, 9)))
            assert parse_triangle(serialize_triangle(t)) == t

    def test_headerless_square(self):
        t = parse_triangle("10,5\n20,\n")
        assert t.dimension == 2
        assert t.cell(2, 0) == 20

    def test_header_label_parsed(self):
        t = parse_triangle("ay,dy0,dy1\n2001,10,5\n2002,20,\n")
        assert t.origin_label == 2001

    def test_non_square_rejected(self):
        with pytest.raises(RaggedRowsError):
            parse_triangle("1,2,3\n4,5,\n")

    def test_empty_observed_cell_rejected(self):
        with pytest.raises(MissingCellError):
            parse_triangle("10,\n20,\n")

    def test_populated_future_cell_rejected(self):
        with pytest.raises(FutureCellError):
            parse_triangle("10,5\n20,7\n")

    def test_empty_input_rejected(self):
        with pytest.raises(RaggedRowsError):
            parse_triangle("")

    def test_amount_rounding(self):
        t = parse_triangle("10.6,5.2\n20.5,\n", round_amounts=True)
        assert t.cell(1, 0) == 11
        assert t.cell(1, 1) == 5
        assert t.cell(2, 0) == 21

    def test_amounts_rejected_without_flag(self):
        with pytest.raises(NonIntegerCountError):
            parse_triangle("10.6,5.2\n20.5,\n")
