"""Ranking metrics, seed-paired significance and group discrimination comparison."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy import stats

from .errors import LengthMismatch, SingleClass


def _check(scores, labels):
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape or s.ndim != 1:
        raise LengthMismatch(f"scores {s.shape} and labels {y.shape} must be equal 1-d")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0/1")
    y = y.astype(bool)
    n_pos = int(y.sum())
    if n_pos == 0 or n_pos == len(y):
        raise SingleClass("AUC needs both classes")
    return s, y, n_pos


def auc(scores, labels) -> float:
    """Mann-Whitney statistic P(pos > neg) + P(tie)/2 via midranks."""
    s, y, n_pos = _check(scores, labels)
    n_neg = len(y) - n_pos
    ranks = stats.rankdata(s)
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def auc_pairwise(scores, labels) -> float:
    """Reference O(n_pos * n_neg) pair count; meant for small inputs."""
    s, y, n_pos = _check(scores, labels)
    pos, neg = s[y], s[~y]
    wins = 0
    ties = 0
    for p in pos:
        wins += int(np.sum(p > neg))
        ties += int(np.sum(p == neg))
    return (wins + 0.5 * ties) / (len(pos) * len(neg))


def group_auc(scores, labels, groups, level) -> float:
    g = np.asarray(groups, dtype=object)
    mask = g == level
    try:
        return auc(np.asarray(scores)[mask], np.asarray(labels)[mask])
    except SingleClass:
        raise SingleClass(f"group {level!r} lacks one of the classes", level=level) from None


@dataclass(frozen=True)
class Significance:
    p_value: float
    statistic: float | None
    degenerate: bool  # differences had zero variance
    mean_difference: float

    def to_dict(self) -> dict:
        return {"p_value": self.p_value, "statistic": self.statistic,
                "degenerate": self.degenerate, "mean_difference": self.mean_difference}


def significance(a: Sequence[float], b: Sequence[float]) -> Significance:
    """Two-sided paired t-test on ``a - b``, matched by position (seed).

    Zero-variance differences have no t distribution: all-zero differences
    give p = 1, a nonzero constant gives p = 0, both flagged degenerate.
    Differences that agree up to float rounding count as constant.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise LengthMismatch(f"paired samples differ in shape: {a.shape} vs {b.shape}")
    if len(a) < 2:
        raise LengthMismatch("need at least two pairs")
    d = a - b
    mean = float(d.mean())
    scale = float(np.max(np.abs(d)))
    if np.ptp(d) <= 1e-12 * scale:
        return Significance(1.0 if scale == 0 else 0.0, None, True, mean)
    res = stats.ttest_rel(a, b)
    return Significance(float(res.pvalue), float(res.statistic), False, mean)


def permutation_test(a, b, resamples: int = 100_000, seed: int = 0) -> float:
    """Two-sided sign-flip permutation p-value for the mean paired difference."""
    d = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    observed = abs(d.mean())
    rng = np.random.default_rng(seed)
    hits = 0
    for lo in range(0, resamples, 10_000):
        m = min(10_000, resamples - lo)
        signs = rng.choice((-1.0, 1.0), size=(m, len(d)))
        hits += int(np.sum(np.abs(signs @ d) / len(d) >= observed - 1e-15))
    return (hits + 1) / (resamples + 1)


# ---------------------------------------------------------------------------
# discrimination comparison
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModeDiscrimination:
    mode: str
    approval_rate: dict[str, float | None]
    adverse_impact_ratio: float | None
    overall_auc: float | None
    group_auc: dict[str, float | None]
    auc_gap: float | None  # reference-group AUC minus protected-group AUC

    def to_dict(self) -> dict:
        return {
            "approval_rate": self.approval_rate,
            "adverse_impact_ratio": self.adverse_impact_ratio,
            "overall_auc": self.overall_auc,
            "group_auc": self.group_auc,
            "auc_gap": self.auc_gap,
        }


@dataclass(frozen=True)
class DiscriminationReport:
    protected: str
    reference: str
    threshold: float
    modes: tuple[ModeDiscrimination, ...]
    less_discriminatory: tuple[tuple[str, str], ...]  # (better, worse)

    def to_dict(self) -> dict:
        return {
            "protected_level": self.protected,
            "reference_level": self.reference,
            "threshold": self.threshold,
            "modes": {m.mode: m.to_dict() for m in self.modes},
            "less_discriminatory": [{"mode": a, "than": b} for a, b in self.less_discriminatory],
        }


def _safe_auc(scores, labels):
    try:
        return auc(scores, labels)
    except SingleClass:
        return None


def _ratio(num, den):
    if num is None or den is None or den == 0:
        return None
    return num / den


def declare(modes: Sequence[ModeDiscrimination]) -> tuple[tuple[str, str], ...]:
    """Pairs (M, M') where M's impact ratio is strictly closer to 1 and its overall AUC is no lower."""
    out = []
    for m in modes:
        for o in modes:
            if m is o or None in (m.adverse_impact_ratio, o.adverse_impact_ratio,
                                  m.overall_auc, o.overall_auc):
                continue
            if (abs(m.adverse_impact_ratio - 1) < abs(o.adverse_impact_ratio - 1)
                    and m.overall_auc >= o.overall_auc):
                out.append((m.mode, o.mode))
    return tuple(out)


def discrimination_report(scores: Mapping[str, np.ndarray], labels, groups,
                          protected: str, reference: str, threshold: float) -> DiscriminationReport:
    """Approval rates at ``threshold``, impact ratios and group AUCs for each mode's scores."""
    if len(scores) < 2:
        raise ValueError("need scores for at least two modes")
    y = np.asarray(labels)
    g = np.asarray(groups, dtype=object)
    levels = [protected, reference]
    rows = []
    for mode, s in scores.items():
        s = np.asarray(s, dtype=np.float64)
        approve = s < threshold
        rates = {lv: (float(approve[g == lv].mean()) if np.any(g == lv) else None) for lv in levels}
        gauc = {lv: _safe_auc(s[g == lv], y[g == lv]) if np.any(g == lv) else None
                for lv in levels}
        gap = None if None in gauc.values() else gauc[reference] - gauc[protected]
        rows.append(ModeDiscrimination(mode, rates, _ratio(rates[protected], rates[reference]),
                                       _safe_auc(s, y), gauc, gap))
    return DiscriminationReport(protected, reference, float(threshold), tuple(rows), declare(rows))
