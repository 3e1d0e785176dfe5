"""Calibrated quantile grids: storage, CSV/JSON round-trip and lookup.

CSV layout (one header row)::

    n,prop,rho,q_star
    50,0.25,0.1,0.35
    50,0.25,0.9,0.3
    50,0.25,*,0.3

``rho=*`` rows hold the conservative (minimum over rho) quantile for the
(n, prop) cell. A uniform-rho calibration is written as ``lo:hi``. Cells
with fewer than four matched pairs carry ``-`` as q_star.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

from .errors import MissingGridEntryError, ParseError

QUANTILE_GRID = tuple(round(0.15 + 0.05 * k, 2) for k in range(8))
NOT_CALCULABLE = "-"
CONSERVATIVE = "*"

Rho = Union[float, Tuple[float, float]]


def format_rho(rho: Rho) -> str:
    if isinstance(rho, tuple):
        return f"{rho[0]!r}:{rho[1]!r}"
    return repr(float(rho))


def parse_rho(text: str) -> Rho:
    if ":" in text:
        lo, hi = text.split(":")
        return (float(lo), float(hi))
    return float(text)


def _fmt_q(q: Optional[float]) -> str:
    return NOT_CALCULABLE if q is None else repr(q)


@dataclass
class QuantileGrid:
    entries: Dict[Tuple[int, float, Rho], Optional[float]]
    conservative: Dict[Tuple[int, float], Optional[float]] = field(default_factory=dict)

    @classmethod
    def from_entries(cls, entries) -> "QuantileGrid":
        entries = {(int(n), float(p), r): q for (n, p, r), q in entries.items()}
        cons: Dict[Tuple[int, float], Optional[float]] = {}
        for (n, p, _), q in entries.items():
            cur = cons.get((n, p))
            if q is not None:
                cons[(n, p)] = q if cur is None else min(cur, q)
            else:
                cons.setdefault((n, p), None)
        return cls(entries, cons)

    @property
    def ns(self) -> List[int]:
        return sorted({n for n, _ in self.conservative})

    @property
    def props(self) -> List[float]:
        return sorted({p for _, p in self.conservative})

    def rhos(self) -> List[Rho]:
        seen = []
        for (_, _, r) in self.entries:
            if r not in seen:
                seen.append(r)
        return seen

    def lookup(self, n: int, prop: float) -> float:
        """Conservative quantile for a dataset with ``n`` pairs and matched fraction ``prop``.

        Exact grid values are used directly. Between grid values the minimum of
        the conservative quantiles of the bracketing cells is taken; beyond the
        largest grid value the largest is used (the calibrated quantile grows
        with n and prop, so this errs low). Values below the smallest grid n
        or prop cannot be bracketed and raise MissingGridEntryError.
        """
        n_axis = _bracket(self.ns, n, "n")
        p_axis = _bracket(self.props, prop, "prop")
        found = [self.conservative.get((nn, pp)) for nn in n_axis for pp in p_axis]
        found = [q for q in found if q is not None]
        if not found:
            raise MissingGridEntryError(
                f"grid has no calculable quantile near n={n}, prop={prop:.3f}")
        return min(found)

    # -- serialisation ----------------------------------------------------

    def rows(self):
        """(n, prop, rho-or-*, q) rows: per-rho cells then the conservative row."""
        by_cell: Dict[Tuple[int, float], list] = {}
        for (n, p, r), q in self.entries.items():
            by_cell.setdefault((n, p), []).append((r, q))
        for cell in sorted(self.conservative):
            for r, q in by_cell.get(cell, []):
                yield cell[0], cell[1], r, q
            yield cell[0], cell[1], CONSERVATIVE, self.conservative[cell]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "prop", "rho", "q_star"])
        for n, p, r, q in self.rows():
            w.writerow([n, repr(p), r if r == CONSERVATIVE else format_rho(r), _fmt_q(q)])
        return buf.getvalue()

    def to_json_obj(self) -> dict:
        return {
            "entries": [
                {"n": n, "prop": p, "rho": format_rho(r), "q_star": q}
                for (n, p, r), q in self.entries.items()
            ],
            "conservative": [
                {"n": n, "prop": p, "q_star": q} for (n, p), q in sorted(self.conservative.items())
            ],
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "QuantileGrid":
        entries = {(int(e["n"]), float(e["prop"]), parse_rho(str(e["rho"]))): e["q_star"]
                   for e in obj["entries"]}
        grid = cls.from_entries(entries)
        for c in obj.get("conservative", []):
            grid.conservative[(int(c["n"]), float(c["prop"]))] = c["q_star"]
        return grid

    @classmethod
    def from_csv(cls, text: str) -> "QuantileGrid":
        reader = csv.reader(io.StringIO(text))
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["n", "prop", "rho", "q_star"]:
            raise ParseError("grid CSV header must be n,prop,rho,q_star", line=1)
        entries, cons = {}, {}
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 4:
                raise ParseError(f"expected 4 columns, got {len(row)}", line=lineno)
            try:
                n, p = int(row[0]), float(row[1])
                rho_txt, q_txt = row[2].strip(), row[3].strip()
                q = None if q_txt == NOT_CALCULABLE else float(q_txt)
                if rho_txt == CONSERVATIVE:
                    cons[(n, p)] = q
                else:
                    entries[(n, p, parse_rho(rho_txt))] = q
            except ValueError as exc:
                raise ParseError(str(exc), line=lineno) from None
        grid = cls.from_entries(entries)
        grid.conservative.update(cons)
        return grid

    @classmethod
    def load(cls, path: Union[str, Path]) -> "QuantileGrid":
        text = Path(path).read_text(encoding="utf-8")
        if text.lstrip().startswith("{"):
            return cls.from_json_obj(json.loads(text))
        return cls.from_csv(text)

    @classmethod
    def default(cls) -> "QuantileGrid":
        """Grid calibrated at 10,000 runs per cell for n in {20, 50, 100, 200}."""
        text = resources.files("partialmatch").joinpath("data/default_grid.csv").read_text()
        return cls.from_csv(text)


def _bracket(axis, value, name):
    if not axis:
        raise MissingGridEntryError("grid is empty")
    if value in axis:
        return [value]
    if value < axis[0]:
        raise MissingGridEntryError(
            f"{name}={value} is below the smallest calibrated {name} ({axis[0]})")
    if value > axis[-1]:
        return [axis[-1]]
    hi = next(a for a in axis if a > value)
    lo = max(a for a in axis if a < value)
    return [lo, hi]
