"""Awareness, unawareness and counterfactual models plus the paired audit.

The counterfactual model trains on every permitted feature, protected
columns included, and at inference replaces each protected value with a
fixed reference level before scoring. Two applicants who differ only in
protected attributes therefore reach the trained model as the same input.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Mapping

import numpy as np

from .dataset import ColumnRole, Dataset, Schema
from .errors import ConfigParse, FeatureMismatch, MissingScreeningReport, UnknownLevel
from .learner import GbdtParams, TrainedModel, train
from .screening import ScreeningReport


class ModelMode(str, Enum):
    AWARENESS = "awareness"
    UNAWARENESS = "unawareness"
    COUNTERFACTUAL = "counterfactual"


def feature_set(mode: ModelMode, schema: Schema,
                screening: ScreeningReport | None = None) -> list[str]:
    """Training features for ``mode``, in schema order.

    Excluded and Target columns never appear. Unawareness drops protected
    columns and every Alternative feature the screening report flagged.
    """
    mode = ModelMode(mode)
    if mode is ModelMode.UNAWARENESS:
        if screening is None:
            raise MissingScreeningReport("unawareness mode needs a screening report")
        dropped = set(screening.dropped)
        return [c.name for c in schema.columns
                if c.role is ColumnRole.TRADITIONAL
                or (c.role is ColumnRole.ALTERNATIVE and c.name not in dropped)]
    keep = (ColumnRole.PROTECTED, ColumnRole.TRADITIONAL, ColumnRole.ALTERNATIVE)
    return [c.name for c in schema.columns if c.role in keep]


def modal_levels(data: Dataset) -> dict[str, str]:
    """Most frequent level of each protected column; ties go to the earlier level."""
    out = {}
    for name in data.schema.by_role(ColumnRole.PROTECTED):
        col = data.schema[name]
        if not col.is_categorical:
            raise UnknownLevel(f"protected column {name!r} must be categorical")
        codes = data.values(name)[~data.missing(name)]
        counts = np.bincount(codes, minlength=len(col.type.levels))
        out[name] = col.type.levels[int(np.argmax(counts))]
    return out


@dataclass(frozen=True)
class DecisionPolicy:
    """Approve when the predicted default probability is below ``threshold``."""

    threshold: float = 0.5
    a_prime: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 < self.threshold <= 1.0:
            raise ValueError("threshold must lie in (0, 1]")
        object.__setattr__(self, "a_prime", dict(self.a_prime))

    def resolved(self, data: Dataset) -> "DecisionPolicy":
        """Fill reference levels missing from ``a_prime`` with the modal level of ``data``."""
        modal = modal_levels(data)
        merged = {**modal, **{k: v for k, v in self.a_prime.items() if k in modal}}
        for name, level in merged.items():
            data.schema[name].type.index(level)
        return DecisionPolicy(self.threshold, merged)

    def to_dict(self) -> dict:
        return {"threshold": self.threshold, "a_prime": dict(sorted(self.a_prime.items()))}

    @classmethod
    def from_dict(cls, obj: Mapping) -> "DecisionPolicy":
        unknown = set(obj) - {"threshold", "a_prime"}
        if unknown:
            raise ConfigParse(f"unknown policy key(s) {sorted(unknown)}")
        try:
            return cls(float(obj.get("threshold", 0.5)), dict(obj.get("a_prime", {})))
        except (TypeError, ValueError) as exc:
            raise ConfigParse(str(exc)) from exc


def train_mode(data: Dataset, mode: ModelMode, params: GbdtParams | None = None,
               screening: ScreeningReport | None = None,
               policy: DecisionPolicy | None = None) -> TrainedModel:
    """Fit the GBDT on ``feature_set(mode)``; the model records its mode and reference levels."""
    mode = ModelMode(mode)
    features = feature_set(mode, data.schema, screening)
    meta: dict[str, Any] = {"mode": mode.value}
    if mode is ModelMode.COUNTERFACTUAL:
        meta["a_prime"] = (policy or DecisionPolicy()).resolved(data).a_prime
    return train(data, features, params, metadata=meta)


def _reference(model, policy: DecisionPolicy, data: Dataset) -> dict[str, str]:
    levels = dict(model.metadata.get("a_prime", {}))
    levels.update(policy.a_prime)
    for name, level in modal_levels(data).items():
        levels.setdefault(name, level)
    return levels


def substitute(data: Dataset, levels: Mapping[str, str]) -> Dataset:
    """``data`` with each named protected column set to its reference level."""
    out = data
    for name, level in levels.items():
        if name in out.schema:
            out = out.with_level(name, level)
    return out


def score(model, mode: ModelMode, policy: DecisionPolicy, data: Dataset) -> np.ndarray:
    """Predicted default probability per row under ``mode``."""
    mode = ModelMode(mode)
    for f in model.features:
        if f not in data.schema:
            raise FeatureMismatch(f"data lacks model feature {f!r}", name=f)
    if mode is ModelMode.COUNTERFACTUAL:
        data = substitute(data, _reference(model, policy, data))
    return model.predict_proba(data)


def score_row(model, mode: ModelMode, policy: DecisionPolicy, row: Mapping[str, Any]) -> float:
    """Score a single applicant given as ``{feature: value}``; None marks a missing value."""
    mode = ModelMode(mode)
    row = dict(row)
    if mode is ModelMode.COUNTERFACTUAL:
        levels = {**model.metadata.get("a_prime", {}), **policy.a_prime}
        row.update({k: v for k, v in levels.items() if k in model.features})
    return model.predict_row(row)


def decide(scores, policy: DecisionPolicy):
    """Approve iff score < threshold; a score equal to the threshold is denied."""
    out = np.asarray(scores) < policy.threshold
    return bool(out) if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class PairedTestResult:
    mode: str
    reference: dict[str, str]
    score_actual: np.ndarray
    score_reference: np.ndarray
    groups: dict[str, np.ndarray]  # protected column -> actual level labels

    @property
    def delta(self) -> np.ndarray:
        return self.score_actual - self.score_reference

    def summary(self) -> dict:
        d = self.delta
        absd = np.abs(d)
        per_group = {}
        for name, labels in self.groups.items():
            per_group[name] = {
                str(lv): float(d[labels == lv].mean())
                for lv in sorted({x for x in labels if x is not None})
            }
        return {
            "rows": int(len(d)),
            "max_abs_delta": float(absd.max()) if len(d) else 0.0,
            "mean_abs_delta": float(absd.mean()) if len(d) else 0.0,
            "mean_delta_by_group": per_group,
        }

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "reference": dict(sorted(self.reference.items())),
            "summary": self.summary(),
            "rows": [
                {"score_actual": float(a), "score_reference": float(r), "delta": float(a - r)}
                for a, r in zip(self.score_actual, self.score_reference)
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def paired_test(model, mode: ModelMode, policy: DecisionPolicy, data: Dataset) -> PairedTestResult:
    """Score every row with its actual protected values and again with the reference levels."""
    mode = ModelMode(mode)
    protected = data.schema.by_role(ColumnRole.PROTECTED)
    levels = _reference(model, policy, data)
    actual = score(model, mode, policy, data)
    reference = score(model, mode, policy, substitute(data, levels))
    groups = {p: data.labels(p) for p in protected}
    return PairedTestResult(mode.value, levels, actual, reference, groups)
