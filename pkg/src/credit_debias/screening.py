"""Proxy screening against a protected group and positivity (overlap) testing."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .dataset import ColumnRole, Dataset
from .errors import UnknownFeature, UnknownLevel


@dataclass(frozen=True)
class Group:
    column: str
    level: str

    @classmethod
    def parse(cls, text: str) -> "Group":
        col, sep, level = text.partition("=")
        if not sep or not col or not level:
            raise ValueError(f"group must look like column=level, got {text!r}")
        return cls(col.strip(), level.strip())


@dataclass(frozen=True)
class Correlation:
    feature: str
    r: float | None  # None when undefined (zero variance)
    level: str | None = None  # categorical: level achieving max |r|


def _pearson(x: np.ndarray, y: np.ndarray) -> float | None:
    if len(x) < 2:
        return None
    xc, yc = x - x.mean(), y - y.mean()
    sxx, syy = float(xc @ xc), float(yc @ yc)
    if sxx <= 0 or syy <= 0:
        return None
    r = float(xc @ yc) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


def group_indicator(data: Dataset, group: Group) -> tuple[np.ndarray, np.ndarray]:
    """(indicator, valid) for membership in ``group``; missing protected cells are invalid."""
    if group.column not in data.schema:
        raise UnknownFeature(f"no column named {group.column!r}", name=group.column)
    col = data.schema[group.column]
    if not col.is_categorical:
        raise UnknownLevel(f"group column {group.column!r} must be categorical")
    idx = col.type.index(group.level)
    return (data.values(group.column) == idx).astype(np.float64), ~data.missing(group.column)


def correlation_with_group(data: Dataset, feature: str, group: Group) -> Correlation:
    """Pearson r between the group indicator and ``feature``.

    Categorical features are expanded to level indicators and the level with
    the largest |r| is reported. Rows with either side missing are skipped.
    """
    if feature not in data.schema:
        raise UnknownFeature(f"no column named {feature!r}", name=feature)
    ind, valid = group_indicator(data, group)
    ok = valid & ~data.missing(feature)
    g = ind[ok]
    col = data.schema[feature]
    if not col.is_categorical:
        return Correlation(feature, _pearson(data.values(feature)[ok], g))
    codes = data.values(feature)[ok]
    best: Correlation = Correlation(feature, None)
    for i, level in enumerate(col.type.levels):
        r = _pearson((codes == i).astype(np.float64), g)
        if r is not None and (best.r is None or abs(r) > abs(best.r)):
            best = Correlation(feature, r, level)
    return best


@dataclass(frozen=True)
class ScreeningReport:
    group: Group
    threshold: float
    correlations: tuple[Correlation, ...]
    dropped: tuple[str, ...] = field(default=())

    def to_dict(self) -> dict:
        return {
            "group": {"column": self.group.column, "level": self.group.level},
            "threshold": self.threshold,
            "correlations": [
                {"feature": c.feature, "r": c.r, "level": c.level} for c in self.correlations
            ],
            "dropped": list(self.dropped),
        }

    @classmethod
    def from_dict(cls, obj) -> "ScreeningReport":
        return cls(
            Group(obj["group"]["column"], obj["group"]["level"]),
            float(obj["threshold"]),
            tuple(Correlation(c["feature"], c["r"], c.get("level")) for c in obj["correlations"]),
            tuple(obj["dropped"]),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def table(self) -> str:
        lines = [f"proxy screening vs {self.group.column}={self.group.level} "
                 f"(|r| > {self.threshold:g} dropped)",
                 f"{'feature':<24} {'r':>9}  {'level':<12} dropped"]
        drop = set(self.dropped)
        for c in self.correlations:
            r = "undef" if c.r is None else f"{c.r:+.4f}"
            lines.append(f"{c.feature:<24} {r:>9}  {c.level or '':<12} "
                         f"{'yes' if c.feature in drop else 'no'}")
        lines.append(f"dropped {len(self.dropped)} of {len(self.correlations)} features")
        return "\n".join(lines)


def screen_proxies(data: Dataset, group: Group, threshold: float = 0.05) -> ScreeningReport:
    """Flag Alternative features whose |r| with the group exceeds ``threshold``.

    Traditional features are never screened; undefined correlations are
    never dropped.
    """
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    results = tuple(correlation_with_group(data, f, group)
                    for f in data.schema.by_role(ColumnRole.ALTERNATIVE))
    dropped = tuple(c.feature for c in results if c.r is not None and abs(c.r) > threshold)
    return ScreeningReport(group, float(threshold), results, dropped)


# ---------------------------------------------------------------------------
# positivity
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    feature: str
    value: str
    group: str
    count: int
    interval: tuple[float, float] | None = None  # numeric decile bounds (lo, hi]


@dataclass(frozen=True)
class PositivityReport:
    protected: str
    floor: int
    violations: tuple[Violation, ...]

    def to_dict(self) -> dict:
        return {
            "protected": self.protected,
            "floor": self.floor,
            "violations": [
                {"feature": v.feature, "value": v.value, "group": v.group, "count": v.count,
                 "interval": None if v.interval is None else list(v.interval)}
                for v in self.violations
            ],
        }

    @classmethod
    def from_dict(cls, obj) -> "PositivityReport":
        return cls(obj["protected"], int(obj["floor"]), tuple(
            Violation(v["feature"], v["value"], v["group"], int(v["count"]),
                      None if v.get("interval") is None else tuple(v["interval"]))
            for v in obj["violations"]))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def table(self) -> str:
        if not self.violations:
            return f"no positivity violations at floor {self.floor}"
        lines = [f"positivity violations (cell count < {self.floor}):",
                 f"{'feature':<24} {'value':<28} {'group':<20} count"]
        for v in self.violations:
            lines.append(f"{v.feature:<24} {v.value:<28} {v.group:<20} {v.count}")
        return "\n".join(lines)


def _deciles(values: np.ndarray) -> np.ndarray:
    return np.unique(np.quantile(values, np.linspace(0.1, 0.9, 9)))


def _feature_cells(data: Dataset, feature: str, ok: np.ndarray):
    """Yield (label, interval, row mask) for every value of ``feature`` present in ``ok`` rows."""
    col = data.schema[feature]
    if col.is_categorical:
        codes = data.values(feature)
        for i, level in enumerate(col.type.levels):
            mask = ok & (codes == i)
            if mask.any():
                yield level, None, mask
        return
    x = data.values(feature)
    present = x[ok]
    if len(present) == 0:
        return
    edges = _deciles(present)
    bounds = np.concatenate([[-np.inf], edges, [np.inf]])
    which = np.searchsorted(edges, x, side="left")
    for b in range(len(edges) + 1):
        mask = ok & (which == b)
        if mask.any():
            lo, hi = float(bounds[b]), float(bounds[b + 1])
            yield f"decile {b + 1} ({lo:.6g}, {hi:.6g}]", (lo, hi), mask


def overlap_test(data: Dataset, protected: str, floor: int = 30,
                 features: Iterable[str] | None = None) -> PositivityReport:
    """Every (feature value, protected level) cell with fewer than ``floor`` rows.

    Only protected levels present in the data are checked. Numeric features
    are cut into deciles first.
    """
    if floor < 1:
        raise ValueError("floor must be >= 1")
    pcol = data.schema[protected]
    if not pcol.is_categorical:
        raise UnknownLevel(f"protected column {protected!r} must be categorical")
    pcodes = data.values(protected)
    pvalid = ~data.missing(protected)
    levels = [(i, lv) for i, lv in enumerate(pcol.type.levels) if np.any(pvalid & (pcodes == i))]
    feats = list(features) if features is not None else data.schema.by_role(ColumnRole.ALTERNATIVE)
    out = []
    for f in feats:
        ok = pvalid & ~data.missing(f)
        for label, interval, mask in _feature_cells(data, f, ok):
            for i, lv in levels:
                count = int(np.sum(mask & (pcodes == i)))
                if count < floor:
                    out.append(Violation(f, label, lv, count, interval))
    return PositivityReport(protected, int(floor), tuple(out))


def mask_violations(data: Dataset, report: PositivityReport) -> Dataset:
    """Replace each violating value with "other" (categorical) or missing (numeric)."""
    out = data
    by_feature: dict[str, list[Violation]] = {}
    for v in report.violations:
        by_feature.setdefault(v.feature, []).append(v)
    for f, vs in by_feature.items():
        col = out.schema[f]
        values = np.array(out.values(f))
        missing = np.array(out.missing(f))
        if col.is_categorical:
            other = col.type.other_index
            for v in vs:
                values[values == col.type.index(v.value)] = other
        else:
            for v in vs:
                lo, hi = v.interval
                hit = ~missing & (values > lo) & (values <= hi)
                missing |= hit
            values[missing] = np.nan
        out = out.with_values(f, values, missing)
    return out
