"""Preparation of the National Survey of Mortgage Originations public use file.

The raw file is user-supplied. Every column is read as an integer-coded
survey answer; the derived ``race`` and ``default`` columns replace the
source race and performance questions.
"""
from __future__ import annotations

import csv
import logging
import math
import re
from dataclasses import dataclass, field

import numpy as np

from .dataset import Categorical, Column, ColumnRole, Dataset, Numeric, Schema
from .errors import UnrecognizedLayout

log = logging.getLogger(__name__)

RACE_LEVELS = ("Non-Hispanic White", "Hispanic", "Black", "Asian", "other")
TARGET = "default"
RACE = "race"

_PERF = re.compile(r"^perf_status", re.IGNORECASE)
_SURVEY = re.compile(r"^[xz]\d", re.IGNORECASE)


@dataclass(frozen=True)
class NsmoCoding:
    """Code tables for the derived columns. Override when the codebook differs."""

    ethnicity_column: str = "x77r"
    race_column: str = "x78r"
    hispanic_codes: frozenset = frozenset({1})
    race_codes: dict = field(default_factory=lambda: {1: "Non-Hispanic White", 2: "Black", 3: "Asian"})
    default_codes: frozenset = frozenset(range(2, 10))
    traditional: tuple = ("x74r", "x76", "age", "sex")
    leakage: tuple = ("nsmoid", "analysis_weight", "loan_status", "forbearance")


def _find(header: list[str], name: str) -> str | None:
    for h in header:
        if h.lower() == name.lower():
            return h
    return None


def _to_code(cell: str) -> float:
    try:
        x = float(cell)
    except ValueError:
        return math.nan
    return x if math.isfinite(x) else math.nan


def derive_race(ethnicity: np.ndarray, race: np.ndarray, coding: NsmoCoding) -> np.ndarray:
    """Hispanic ethnicity wins over the race answer; unmapped codes are "other"."""
    out = []
    for e, r in zip(ethnicity, race):
        if not math.isnan(e) and int(e) in coding.hispanic_codes:
            out.append("Hispanic")
        elif not math.isnan(r) and int(r) in coding.race_codes:
            out.append(coding.race_codes[int(r)])
        else:
            out.append("other")
    return np.array(out, dtype=object)


def derive_default(perf: np.ndarray, coding: NsmoCoding) -> np.ndarray:
    """1 if any performance question carries a delinquency code."""
    hit = np.zeros(perf.shape[0], dtype=bool)
    for code in coding.default_codes:
        hit |= np.any(perf == code, axis=1)
    return hit.astype(np.float64)


def prepare_nsmo(path, coding: NsmoCoding | None = None) -> Dataset:
    coding = coding or NsmoCoding()
    with open(path, newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise UnrecognizedLayout("empty NSMO file") from None
        rows = list(reader)

    eth_col = _find(header, coding.ethnicity_column)
    race_col = _find(header, coding.race_column)
    perf_cols = [h for h in header if _PERF.match(h)]
    for label, found in ((coding.ethnicity_column, eth_col), (coding.race_column, race_col)):
        if found is None:
            raise UnrecognizedLayout(f"required column {label!r} absent", name=label)
    if not perf_cols:
        raise UnrecognizedLayout("no Perf_Status columns found", name="Perf_Status")

    pos = {h: i for i, h in enumerate(header)}

    def column(name):
        j = pos[name]
        return np.array([_to_code(r[j].strip()) if j < len(r) else math.nan for r in rows])

    perf = np.column_stack([column(c) for c in perf_cols])
    target = derive_default(perf, coding)
    race = derive_race(column(eth_col), column(race_col), coding)

    traditional = {t.lower() for t in coding.traditional}
    leakage = {t.lower() for t in coding.leakage}
    consumed = {eth_col, race_col, *perf_cols}

    columns = [Column(RACE, Categorical(RACE_LEVELS), ColumnRole.PROTECTED)]
    raw = {RACE: race}
    for h in header:
        if h in consumed or h.lower() in (RACE, TARGET):
            continue
        low = h.lower()
        if low in leakage:
            role = ColumnRole.EXCLUDED
        elif low in traditional:
            role = ColumnRole.TRADITIONAL
        elif _SURVEY.match(h):
            role = ColumnRole.ALTERNATIVE
        else:
            # supplemental variables are kept unless named in the leakage list
            role = ColumnRole.ALTERNATIVE
        columns.append(Column(h, Numeric(), role))
        raw[h] = column(h)
    for c in sorted(consumed):
        columns.append(Column(c, Numeric(), ColumnRole.EXCLUDED))
        raw[c] = column(c)
    columns.append(Column(TARGET, Numeric(), ColumnRole.TARGET))
    raw[TARGET] = target
    log.info("prepared NSMO file: %d rows, %d columns, default rate %.4f",
             len(rows), len(columns), float(target.mean()) if len(rows) else 0.0)
    return Dataset.from_columns(Schema(tuple(columns)), raw)
