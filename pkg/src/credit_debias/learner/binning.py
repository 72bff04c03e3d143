"""Feature binning shared by training and prediction.

Numeric features get at most ``max_bins - 1`` value bins cut at thresholds
(``x <= threshold[b]`` lands in bin ``b`` or lower); categorical features use
one bin per level. The last bin of every feature holds missing values.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..dataset import OTHER, Dataset
from ..errors import FeatureMismatch


@dataclass(frozen=True, eq=False)
class FeatureBins:
    name: str
    categorical: bool
    thresholds: np.ndarray  # numeric only
    levels: tuple[str, ...]  # categorical only

    @property
    def n_value_bins(self) -> int:
        return len(self.levels) if self.categorical else len(self.thresholds) + 1

    @property
    def missing_bin(self) -> int:
        return self.n_value_bins

    @property
    def n_bins(self) -> int:
        return self.n_value_bins + 1


def fit_numeric(name: str, values: np.ndarray, missing: np.ndarray, max_bins: int) -> FeatureBins:
    x = values[~missing]
    uniq = np.unique(x)
    limit = max_bins - 1
    if len(uniq) <= 1:
        thresholds = np.empty(0)
    elif len(uniq) <= limit:
        thresholds = (uniq[:-1] + uniq[1:]) / 2.0
    else:
        qs = np.quantile(x, np.arange(1, limit) / limit, method="lower")
        thresholds = np.unique(qs)
        # a threshold equal to the maximum would leave the top bin empty
        thresholds = thresholds[thresholds < uniq[-1]]
    return FeatureBins(name, False, np.asarray(thresholds, dtype=np.float64), ())


def fit_categorical(name: str, levels: tuple[str, ...], max_bins: int) -> FeatureBins:
    if len(levels) > max_bins - 1:
        raise FeatureMismatch(f"{name!r} has {len(levels)} levels; max_bins={max_bins} allows "
                              f"{max_bins - 1}")
    return FeatureBins(name, True, np.empty(0), tuple(levels))


def fit_bins(data: Dataset, features: list[str], max_bins: int) -> list[FeatureBins]:
    out = []
    for f in features:
        col = data.schema[f]
        if col.is_categorical:
            out.append(fit_categorical(f, col.type.levels, max_bins))
        else:
            out.append(fit_numeric(f, data.values(f), data.missing(f), max_bins))
    return out


def _level_map(fb: FeatureBins, data_levels: tuple[str, ...]) -> np.ndarray:
    """Map dataset level indices onto the model's level indices by name."""
    lookup = {lv: i for i, lv in enumerate(fb.levels)}
    other = lookup.get(OTHER, fb.missing_bin)
    return np.array([lookup.get(lv, other) for lv in data_levels], dtype=np.int64)


def transform(bins: list[FeatureBins], data: Dataset) -> np.ndarray:
    """Binned matrix of shape (n_features, n_rows), dtype uint8/uint16."""
    dtype = np.uint8 if max(fb.n_bins for fb in bins) <= 256 else np.uint16
    out = np.empty((len(bins), data.n_rows), dtype=dtype)
    for j, fb in enumerate(bins):
        if fb.name not in data.schema:
            raise FeatureMismatch(f"data lacks model feature {fb.name!r}", name=fb.name)
        col = data.schema[fb.name]
        miss = data.missing(fb.name)
        if fb.categorical != col.is_categorical:
            raise FeatureMismatch(f"type mismatch for feature {fb.name!r}", name=fb.name)
        if fb.categorical:
            mapping = _level_map(fb, col.type.levels)
            idx = data.values(fb.name)
            b = np.where(miss, fb.missing_bin, mapping[np.where(miss, 0, idx)])
        else:
            b = np.searchsorted(fb.thresholds, data.values(fb.name), side="left")
            b = np.where(miss, fb.missing_bin, b)
        out[j] = b
    return out
