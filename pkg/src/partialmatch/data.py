"""Survey ingestion and deterministic identifier matching.

Input is a UTF-8 CSV with a header row and columns ``id,phase,value``
(names configurable). ``phase`` is ``pre`` or ``post`` in any case. A blank
id marks a response that cannot be linked.

An id links a pre and a post response only when it occurs exactly once in
each arm. Ids repeated within an arm are ambiguous; every record carrying
such an id, in both arms, is treated as unmatched.
"""

from __future__ import annotations

import csv
import enum
import io
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable, List, Optional, Tuple, Union

import numpy as np

from .errors import InsufficientDataError, ParseError, UnequalArmsError
from .ttests import PartiallyMatchedDataset


class Phase(str, enum.Enum):
    PRE = "pre"
    POST = "post"


@dataclass(frozen=True)
class SurveyRecord:
    id: Optional[str]
    phase: Phase
    value: float
    raw_id: Optional[str] = None


@dataclass(frozen=True)
class MatchReport:
    n_pre: int
    n_post: int
    m_matched: int
    n_dropped_duplicates: int
    n_blank_ids: int
    n_matches_from_normalization: int = 0

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True)
class CsvOptions:
    id_col: str = "id"
    phase_col: str = "phase"
    value_col: str = "value"
    normalize_ids: bool = True


def normalize_id(raw: Optional[str], normalize: bool = True) -> Optional[str]:
    if raw is None:
        return None
    stripped = raw.strip()
    if not stripped:
        return None
    return stripped.casefold() if normalize else raw


def parse_csv(source: Union[str, Path, IO[str]],
              options: CsvOptions = CsvOptions()) -> List[SurveyRecord]:
    if isinstance(source, (str, Path)):
        with open(source, newline="", encoding="utf-8-sig") as fh:
            return _parse(fh, options)
    return _parse(source, options)


def _parse(fh, opts: CsvOptions) -> List[SurveyRecord]:
    reader = csv.reader(fh)
    header = next(reader, None)
    if header is None:
        raise ParseError("empty input; a header row is required", line=1)
    header = [h.strip() for h in header]
    cols = {}
    for name in (opts.id_col, opts.phase_col, opts.value_col):
        if name not in header:
            raise ParseError(f"missing column {name!r} in header {header}", line=1)
        cols[name] = header.index(name)

    records = []
    for row in reader:
        line = reader.line_num
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(row)}", line=line)
        raw_id = row[cols[opts.id_col]]
        phase_txt = row[cols[opts.phase_col]].strip().lower()
        try:
            phase = Phase(phase_txt)
        except ValueError:
            raise ParseError(f"unknown phase {phase_txt!r} (expected pre or post)",
                             line=line) from None
        value_txt = row[cols[opts.value_col]].strip()
        try:
            value = float(value_txt)
        except ValueError:
            raise ParseError(f"value {value_txt!r} is not a number", line=line) from None
        if not math.isfinite(value):
            raise ParseError(f"value {value_txt!r} is not finite", line=line)
        records.append(SurveyRecord(normalize_id(raw_id, opts.normalize_ids), phase, value,
                                    raw_id))
    return records


def build_dataset(records: Iterable[SurveyRecord]) -> Tuple[PartiallyMatchedDataset, MatchReport]:
    records = list(records)
    pre = [r for r in records if r.phase is Phase.PRE]
    post = [r for r in records if r.phase is Phase.POST]
    if len(pre) < 2 or len(post) < 2:
        raise InsufficientDataError(
            f"need at least 2 responses per arm, got {len(pre)} pre and {len(post)} post")
    if len(pre) != len(post):
        raise UnequalArmsError(
            f"{len(pre)} pre vs {len(post)} post responses; unequal arms (dropout, partially "
            "paired data) are not supported")

    linked, duplicated = _link(pre, post, lambda r: r.id)
    linked_set = set(linked)
    raw_linked, _ = _link(pre, post, _raw_id)

    pre_by_id = {r.id: r.value for r in pre if r.id in linked_set}
    post_by_id = {r.id: r.value for r in post if r.id in linked_set}
    matched = np.array([(pre_by_id[i], post_by_id[i]) for i in linked], dtype=float).reshape(-1, 2)
    # sorted so the dataset does not depend on input row order
    un_pre = sorted(r.value for r in pre if r.id not in linked_set)
    un_post = sorted(r.value for r in post if r.id not in linked_set)

    report = MatchReport(
        n_pre=len(pre),
        n_post=len(post),
        m_matched=len(linked),
        n_dropped_duplicates=sum(1 for r in records if r.id in duplicated),
        n_blank_ids=sum(1 for r in records if r.id is None),
        n_matches_from_normalization=max(0, len(linked) - len(raw_linked)),
    )
    return PartiallyMatchedDataset(matched, un_pre, un_post), report


def _raw_id(r: SurveyRecord) -> Optional[str]:
    return r.raw_id if r.id is not None else None


def _link(pre, post, key):
    """Ids occurring exactly once in each arm (sorted), and ids repeated within an arm."""
    pre_counts = Counter(key(r) for r in pre if key(r) is not None)
    post_counts = Counter(key(r) for r in post if key(r) is not None)
    duplicated = {i for i, c in pre_counts.items() if c > 1}
    duplicated |= {i for i, c in post_counts.items() if c > 1}
    linked = sorted(i for i in pre_counts if i not in duplicated and post_counts.get(i) == 1)
    return linked, duplicated


def dataset_to_csv(ds: PartiallyMatchedDataset) -> str:
    """Serialise as id,phase,value; matched pairs get zero-padded ids m01, m02, ...

    Padding keeps lexicographic id order equal to pair order, so parsing the
    output and rebuilding gives back an identical dataset.
    """
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["id", "phase", "value"])
    width = len(str(ds.m))
    for k, (x, y) in enumerate(ds.matched, start=1):
        w.writerow([f"m{k:0{width}d}", "pre", repr(float(x))])
        w.writerow([f"m{k:0{width}d}", "post", repr(float(y))])
    for v in ds.unmatched_pre:
        w.writerow(["", "pre", repr(float(v))])
    for v in ds.unmatched_post:
        w.writerow(["", "post", repr(float(v))])
    return buf.getvalue()


def load_dataset(path, options: CsvOptions = CsvOptions()):
    return build_dataset(parse_csv(path, options))
