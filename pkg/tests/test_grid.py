import json

import pytest

from partialmatch.errors import MissingGridEntryError, ParseError
from partialmatch.grid import QUANTILE_GRID, QuantileGrid, format_rho, parse_rho


@pytest.fixture
def grid():
    return QuantileGrid.from_entries({
        (20, 0.1, 0.1): None, (20, 0.1, 0.9): None,
        (20, 0.5, 0.1): 0.35, (20, 0.5, 0.9): 0.3,
        (50, 0.1, 0.1): 0.2, (50, 0.1, 0.9): 0.25,
        (50, 0.5, 0.1): 0.4, (50, 0.5, 0.9): 0.4,
    })


class TestGrid:
    def test_quantile_grid(self):
        assert QUANTILE_GRID == (0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5)

    def test_conservative_is_min(self, grid):
        assert grid.conservative == {(20, 0.1): None, (20, 0.5): 0.3,
                                     (50, 0.1): 0.2, (50, 0.5): 0.4}

    def test_single_rho_conservative(self):
        g = QuantileGrid.from_entries({(50, 0.25, 0.9): 0.3})
        assert g.conservative[(50, 0.25)] == 0.3

    def test_csv_round_trip(self, grid):
        text = grid.to_csv()
        assert text.splitlines()[0] == "n,prop,rho,q_star"
        assert "20,0.1,*,-" in text.splitlines()
        back = QuantileGrid.from_csv(text)
        assert back.entries == grid.entries and back.conservative == grid.conservative
        assert back.to_csv() == text

    def test_json_round_trip(self, grid):
        obj = json.loads(json.dumps(grid.to_json_obj()))
        back = QuantileGrid.from_json_obj(obj)
        assert back.entries == grid.entries and back.conservative == grid.conservative

    def test_load_sniffs_format(self, grid, tmp_path):
        p = tmp_path / "g.json"
        p.write_text(json.dumps(grid.to_json_obj()))
        assert QuantileGrid.load(p).conservative == grid.conservative
        p = tmp_path / "g.csv"
        p.write_text(grid.to_csv())
        assert QuantileGrid.load(p).entries == grid.entries

    def test_range_rho(self):
        assert parse_rho(format_rho((0.1, 0.9))) == (0.1, 0.9)
        g = QuantileGrid.from_entries({(50, 0.5, (0.1, 0.9)): 0.35})
        assert QuantileGrid.from_csv(g.to_csv()).entries == g.entries

    def test_bad_header(self):
        with pytest.raises(ParseError, match="line 1"):
            QuantileGrid.from_csv("n,prop,q\n")

    def test_bad_row(self):
        with pytest.raises(ParseError, match="line 3"):
            QuantileGrid.from_csv("n,prop,rho,q_star\n20,0.5,0.1,0.3\n20,x,0.1,0.3\n")


class TestLookup:
    def test_exact(self, grid):
        assert grid.lookup(50, 0.5) == 0.4

    def test_between_takes_min_of_neighbours(self, grid):
        assert grid.lookup(35, 0.5) == 0.3
        assert grid.lookup(50, 0.3) == 0.2

    def test_between_skips_uncalculable(self, grid):
        assert grid.lookup(30, 0.3) == 0.2

    def test_above_largest(self, grid):
        assert grid.lookup(500, 0.95) == 0.4

    def test_below_smallest(self, grid):
        with pytest.raises(MissingGridEntryError):
            grid.lookup(10, 0.5)
        with pytest.raises(MissingGridEntryError):
            grid.lookup(50, 0.05)

    def test_all_uncalculable(self, grid):
        with pytest.raises(MissingGridEntryError):
            grid.lookup(20, 0.1)


class TestDefaultGrid:
    def test_axes(self):
        g = QuantileGrid.default()
        assert g.ns == [20, 50, 100, 200]
        assert g.props == [0.1, 0.25, 0.5, 0.75, 0.9]
        assert g.rhos() == [0.1, 0.25, 0.5, 0.9]

    def test_conservative_below_entries(self):
        g = QuantileGrid.default()
        for (n, p, _), q in g.entries.items():
            c = g.conservative[(n, p)]
            assert (q is None) or (c is not None and c <= q)
            assert q is None or q in QUANTILE_GRID

    def test_known_cells(self):
        g = QuantileGrid.default()
        assert g.conservative[(20, 0.1)] is None
        assert g.conservative[(50, 0.25)] == 0.3
        assert g.conservative[(50, 0.5)] == 0.35
        assert g.entries[(200, 0.9, 0.9)] == 0.45
