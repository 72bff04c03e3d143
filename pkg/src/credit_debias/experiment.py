"""Multi-seed comparison of the three model modes on one dataset.

Each seed draws its own train/test split and GBDT seed. Screening and the
positivity check only ever see the training rows of that seed. Results are
reduced in seed order, so output bytes do not depend on worker count.
"""
from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .dataset import Dataset, Schema, kfold, load_csv, split
from .errors import ConfigParse, SingleClass
from .evaluation import (
    ModeDiscrimination,
    auc,
    declare,
    discrimination_report,
    group_auc,
    significance,
)
from .learner import GbdtParams
from .pipeline import DecisionPolicy, ModelMode, score, train_mode
from .scm import ScmSpec, discretize, sample
from .screening import Group, mask_violations, overlap_test, screen_proxies

THREADS_ENV = "CREDIT_DEBIAS_THREADS"
OVERALL = "Overall"
MODES = tuple(m.value for m in ModelMode)
PAIRS = (("awareness", "unawareness"), ("awareness", "counterfactual"),
         ("counterfactual", "unawareness"))


def default_threads() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigParse(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    if n < 1:
        raise ConfigParse(f"{THREADS_ENV} must be >= 1")
    return n


def _reject_unknown(obj: Mapping, allowed: set[str], where: str) -> None:
    if not isinstance(obj, Mapping):
        raise ConfigParse(f"{where} must be a JSON object")
    unknown = set(obj) - allowed
    if unknown:
        raise ConfigParse(f"unknown key(s) in {where}: {sorted(unknown)}")


@dataclass(frozen=True)
class ScmSource:
    spec: ScmSpec = field(default_factory=ScmSpec)
    n: int = 50_000
    seed: int = 0
    discrete: bool = False
    w_bins: int = 8

    def load(self) -> Dataset:
        model = discretize(self.spec, self.w_bins) if self.discrete else self.spec
        return sample(model, self.n, self.seed).data

    def to_dict(self) -> dict:
        return {"scm": {"spec": self.spec.to_dict(), "n": self.n, "seed": self.seed,
                        "discrete": self.discrete, "w_bins": self.w_bins}}


@dataclass(frozen=True)
class CsvSource:
    data: Path
    schema: Path

    def load(self) -> Dataset:
        return load_csv(self.data, Schema.load(self.schema))

    def to_dict(self) -> dict:
        # file names only, so output does not depend on where the files live
        return {"csv": {"data": self.data.name, "schema": self.schema.name}}


def _parse_source(obj: Mapping, base: Path):
    _reject_unknown(obj, {"scm", "csv"}, "source")
    if len(obj) != 1:
        raise ConfigParse("source needs exactly one of 'scm' or 'csv'")
    if "csv" in obj:
        c = obj["csv"]
        _reject_unknown(c, {"data", "schema"}, "source.csv")
        try:
            return CsvSource(base / c["data"], base / c["schema"])
        except KeyError as exc:
            raise ConfigParse(f"source.csv needs {exc.args[0]!r}") from None
    s = obj["scm"]
    _reject_unknown(s, {"spec", "n", "seed", "discrete", "w_bins"}, "source.scm")
    spec = s.get("spec")
    if spec is None:
        spec = ScmSpec()
    elif isinstance(spec, str):
        spec = ScmSpec.load(base / spec)
    else:
        spec = ScmSpec.from_dict(spec)
    return ScmSource(spec, int(s.get("n", 50_000)), int(s.get("seed", 0)),
                     bool(s.get("discrete", False)), int(s.get("w_bins", 8)))


@dataclass(frozen=True)
class ExperimentConfig:
    source: ScmSource | CsvSource = field(default_factory=ScmSource)
    seeds: tuple[int, ...] = tuple(range(1, 31))
    test_fraction: float = 0.2
    cv_folds: int = 5
    group_column: str = "A"
    protected_level: str = "1"
    reference_level: str = "0"
    report_levels: tuple[str, ...] | None = None
    screening_threshold: float = 0.05
    positivity_floor: int = 30
    remediation: str = "mask"
    params: GbdtParams = field(default_factory=GbdtParams)
    mode_params: Mapping[str, GbdtParams] = field(default_factory=dict)
    policy: DecisionPolicy = field(default_factory=DecisionPolicy)
    threads: int = 1  # never written to the result

    def __post_init__(self):
        if len(set(self.seeds)) != len(self.seeds) or not self.seeds:
            raise ConfigParse("seeds must be a non-empty list of distinct integers")
        if not 0.0 < self.test_fraction < 1.0:
            raise ConfigParse("test_fraction must lie in (0, 1)")
        if self.cv_folds != 0 and self.cv_folds < 2:
            raise ConfigParse("cv_folds must be 0 (disabled) or >= 2")
        if self.remediation not in ("mask", "none"):
            raise ConfigParse("remediation must be 'mask' or 'none'")
        if self.threads < 1:
            raise ConfigParse("threads must be >= 1")
        unknown = set(self.mode_params) - set(MODES)
        if unknown:
            raise ConfigParse(f"mode_params has unknown mode(s) {sorted(unknown)}")

    @property
    def levels(self) -> tuple[str, ...]:
        return self.report_levels or (self.reference_level, self.protected_level)

    def params_for(self, mode: str, seed: int) -> GbdtParams:
        return replace(self.mode_params.get(mode, self.params), seed=seed)

    @classmethod
    def from_dict(cls, obj: Mapping, base: Path | str = ".") -> "ExperimentConfig":
        """Parse a config object; relative paths resolve against ``base``."""
        _reject_unknown(obj, {"source", "seeds", "test_fraction", "cv_folds", "group",
                              "report_levels", "screening", "params", "mode_params",
                              "policy", "threads"}, "experiment config")
        base = Path(base)
        kw: dict[str, Any] = {}
        try:
            if "source" in obj:
                kw["source"] = _parse_source(obj["source"], base)
            if "seeds" in obj:
                kw["seeds"] = tuple(int(s) for s in obj["seeds"])
            for key, conv in (("test_fraction", float), ("cv_folds", int), ("threads", int)):
                if key in obj:
                    kw[key] = conv(obj[key])
            if "group" in obj:
                g = obj["group"]
                _reject_unknown(g, {"column", "protected", "reference"}, "group")
                kw["group_column"] = g.get("column", "A")
                kw["protected_level"] = str(g.get("protected", "1"))
                kw["reference_level"] = str(g.get("reference", "0"))
            if obj.get("report_levels") is not None:
                kw["report_levels"] = tuple(str(x) for x in obj["report_levels"])
            if "screening" in obj:
                s = obj["screening"]
                _reject_unknown(s, {"threshold", "floor", "remediation"}, "screening")
                kw["screening_threshold"] = float(s.get("threshold", 0.05))
                kw["positivity_floor"] = int(s.get("floor", 30))
                kw["remediation"] = s.get("remediation", "mask")
            if "params" in obj:
                kw["params"] = GbdtParams.from_dict(obj["params"])
            if "mode_params" in obj:
                mp = obj["mode_params"]
                _reject_unknown(mp, set(MODES), "mode_params")
                base_params = kw.get("params", GbdtParams()).to_dict()
                kw["mode_params"] = {m: GbdtParams.from_dict({**base_params, **p})
                                     for m, p in mp.items()}
            if "policy" in obj:
                kw["policy"] = DecisionPolicy.from_dict(obj["policy"])
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigParse):
                raise
            raise ConfigParse(str(exc)) from exc
        return cls(**kw)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            obj = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigParse(f"{path}: {exc}") from exc
        return cls.from_dict(obj, path.parent)

    def to_dict(self) -> dict:
        return {
            "source": self.source.to_dict(),
            "seeds": list(self.seeds),
            "test_fraction": self.test_fraction,
            "cv_folds": self.cv_folds,
            "group": {"column": self.group_column, "protected": self.protected_level,
                      "reference": self.reference_level},
            "report_levels": list(self.levels),
            "screening": {"threshold": self.screening_threshold, "floor": self.positivity_floor,
                          "remediation": self.remediation},
            "params": self.params.to_dict(),
            "mode_params": {m: p.to_dict() for m, p in sorted(self.mode_params.items())},
            "policy": self.policy.to_dict(),
        }


# ---------------------------------------------------------------------------
# one seed
# ---------------------------------------------------------------------------

def _auc_table(s, y, groups, levels) -> dict[str, float | None]:
    out: dict[str, float | None] = {}
    try:
        out[OVERALL] = auc(s, y)
    except SingleClass:
        out[OVERALL] = None
    for lv in levels:
        try:
            out[lv] = group_auc(s, y, groups, lv)
        except SingleClass:
            out[lv] = None
    return out


def _fit_and_score(cfg, mode, train, test, screening, seed):
    model = train_mode(train, mode, cfg.params_for(mode, seed), screening, cfg.policy)
    return score(model, mode, cfg.policy, test)


def _mean_tables(tables: list[dict]) -> dict:
    keys = tables[0].keys()
    out = {}
    for k in keys:
        vals = [t[k] for t in tables if t[k] is not None]
        out[k] = float(np.mean(vals)) if vals else None
    return out


def run_seed(cfg: ExperimentConfig, data: Dataset, seed: int) -> dict:
    group = Group(cfg.group_column, cfg.protected_level)
    levels = cfg.levels
    train, test = split(data, cfg.test_fraction, seed)
    screening = screen_proxies(train, group, cfg.screening_threshold)
    positivity = overlap_test(train, cfg.group_column, cfg.positivity_floor)
    backdoor_train, backdoor_test = train, test
    if cfg.remediation == "mask" and positivity.violations:
        backdoor_train = mask_violations(train, positivity)
        backdoor_test = mask_violations(test, positivity)

    y_test = test.target
    g_test = test.labels(cfg.group_column)
    scores, modes = {}, {}
    for mode in MODES:
        tr, te = (train, test) if mode == "unawareness" else (backdoor_train, backdoor_test)
        s = _fit_and_score(cfg, mode, tr, te, screening, seed)
        scores[mode] = s
        modes[mode] = {"test_auc": _auc_table(s, y_test, g_test, levels)}

    if cfg.cv_folds:
        folds = kfold(train, cfg.cv_folds, seed)
        for mode in MODES:
            tr = train if mode == "unawareness" else backdoor_train
            tables = []
            for fit_idx, val_idx in folds:
                fit, val = tr.take(fit_idx), tr.take(val_idx)
                s = _fit_and_score(cfg, mode, fit, val, screening, seed)
                tables.append(_auc_table(s, val.target, val.labels(cfg.group_column), levels))
            modes[mode]["cv_auc"] = _mean_tables(tables)

    disc = discrimination_report(scores, y_test, g_test, cfg.protected_level,
                                 cfg.reference_level, cfg.policy.threshold)
    for m in disc.modes:
        modes[m.mode]["approval_rate"] = m.approval_rate
        modes[m.mode]["adverse_impact_ratio"] = m.adverse_impact_ratio
    return {
        "seed": seed,
        "n_train": train.n_rows,
        "n_test": test.n_rows,
        "screening_dropped": list(screening.dropped),
        "positivity_violations": len(positivity.violations),
        "modes": modes,
    }


# ---------------------------------------------------------------------------
# aggregation
# ---------------------------------------------------------------------------

def _summary(values: list[float]) -> dict:
    v = np.asarray(values, dtype=np.float64)
    return {
        "n": int(len(v)),
        "mean": float(v.mean()) if len(v) else None,
        "std": float(v.std(ddof=1)) if len(v) > 1 else None,
    }


def _column(per_seed, mode, metric, key):
    return [row["modes"][mode][metric][key] for row in per_seed]


def aggregate(per_seed: list[dict], cfg: ExperimentConfig) -> dict:
    """Means, paired tests and the discrimination comparison, all from the per-seed table."""
    keys = (OVERALL,) + cfg.levels
    metrics = ["test_auc"] + (["cv_auc"] if cfg.cv_folds else [])
    summary = {
        mode: {metric: {k: _summary([x for x in _column(per_seed, mode, metric, k) if x is not None])
                        for k in keys} for metric in metrics}
        for mode in MODES
    }
    tests = {}
    for a, b in PAIRS:
        per_key = {}
        for k in keys:
            xa = _column(per_seed, a, "test_auc", k)
            xb = _column(per_seed, b, "test_auc", k)
            both = [(p, q) for p, q in zip(xa, xb) if p is not None and q is not None]
            if len(both) < 2:
                per_key[k] = None
                continue
            pa, pb = zip(*both)
            per_key[k] = significance(pa, pb).to_dict()
        tests[f"{a} vs {b}"] = per_key

    prot, ref = cfg.protected_level, cfg.reference_level
    rows = []
    for mode in MODES:
        def mean_of(values):
            vals = [v for v in values if v is not None]
            return float(np.mean(vals)) if vals else None

        rates = {lv: mean_of([r["modes"][mode]["approval_rate"][lv] for r in per_seed])
                 for lv in (prot, ref)}
        air = mean_of([r["modes"][mode]["adverse_impact_ratio"] for r in per_seed])
        gauc = {lv: summary[mode]["test_auc"][lv]["mean"] if lv in summary[mode]["test_auc"]
                else None for lv in (prot, ref)}
        gap = None if None in gauc.values() else gauc[ref] - gauc[prot]
        rows.append(ModeDiscrimination(mode, rates, air, summary[mode]["test_auc"][OVERALL]["mean"],
                                       gauc, gap))
    discrimination = {
        "threshold": cfg.policy.threshold,
        "protected_level": prot,
        "reference_level": ref,
        "modes": {r.mode: r.to_dict() for r in rows},
        "less_discriminatory": [{"mode": a, "than": b} for a, b in declare(rows)],
    }
    return {"summary": summary, "significance": tests, "discrimination": discrimination}


@dataclass(frozen=True)
class ExperimentResult:
    config: dict
    per_seed: list[dict]
    aggregates: dict

    def to_dict(self) -> dict:
        return {"config": self.config, "per_seed": self.per_seed, **self.aggregates}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, obj: Mapping) -> "ExperimentResult":
        rest = {k: v for k, v in obj.items() if k not in ("config", "per_seed")}
        return cls(obj["config"], obj["per_seed"], rest)

    def mean_auc(self, mode: str, key: str = OVERALL, metric: str = "test_auc") -> float:
        return self.aggregates["summary"][mode][metric][key]["mean"]

    def report(self) -> str:
        return render_report(self.to_dict())


_worker_data: dict[str, Dataset] = {}


def _worker(cfg: ExperimentConfig, seed: int) -> dict:
    # each worker process loads the source once and reuses it across seeds
    key = repr(cfg.source)
    if key not in _worker_data:
        _worker_data.clear()
        _worker_data[key] = cfg.source.load()
    return run_seed(cfg, _worker_data[key], seed)


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    data = config.source.load()
    for lv in (config.protected_level, config.reference_level, *config.levels):
        data.schema[config.group_column].type.index(lv)
    seeds = sorted(config.seeds)
    if config.threads > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=min(config.threads, len(seeds))) as pool:
            per_seed = list(pool.map(_worker, [config] * len(seeds), seeds))
    else:
        per_seed = [run_seed(config, data, s) for s in seeds]
    per_seed.sort(key=lambda r: r["seed"])
    return ExperimentResult(config.to_dict(), per_seed, aggregate(per_seed, config))


# ---------------------------------------------------------------------------
# text report
# ---------------------------------------------------------------------------

def _fmt(cell: Mapping | None) -> str:
    if not cell or cell.get("mean") is None:
        return "n/a"
    if cell.get("std") is None:
        return f"{cell['mean']:.4f}"
    return f"{cell['mean']:.4f} +/- {cell['std']:.4f}"


def _p(entry) -> str:
    if entry is None:
        return "n/a"
    flag = " (degenerate)" if entry["degenerate"] else ""
    return f"{entry['p_value']:.3g}{flag}"


def render_report(result: Mapping) -> str:
    """Plain-text table: Overall and each reported level against the three modes."""
    cfg = result["config"]
    keys = [OVERALL] + list(cfg["report_levels"])
    summary = result["summary"]
    n_seeds = len(result["per_seed"])
    width = 22
    lines = []
    metrics = [("test_auc", f"Held-out test AUC ({cfg['test_fraction']:g} split), mean +/- sd "
                            f"over {n_seeds} seeds")]
    if cfg["cv_folds"]:
        metrics.append(("cv_auc", f"{cfg['cv_folds']}-fold CV AUC on the training split"))
    for metric, title in metrics:
        lines.append(title)
        lines.append(f"{'group':<16}" + "".join(f"{m:>{width}}" for m in MODES))
        for k in keys:
            lines.append(f"{k:<16}" + "".join(f"{_fmt(summary[m][metric].get(k)):>{width}}"
                                              for m in MODES))
        lines.append("")
    lines.append("Paired t-test p-values on test AUC")
    lines.append(f"{'comparison':<32}" + "".join(f"{k:>18}" for k in keys))
    for name, per_key in result["significance"].items():
        lines.append(f"{name:<32}" + "".join(f"{_p(per_key.get(k)):>18}" for k in keys))
    lines.append("")
    disc = result["discrimination"]
    prot, ref = disc["protected_level"], disc["reference_level"]
    lines.append(f"Approval at default probability < {disc['threshold']:g} "
                 f"(impact ratio = {prot} rate / {ref} rate)")
    lines.append(f"{'mode':<16}{'rate ' + ref:>18}{'rate ' + prot:>18}{'impact ratio':>18}"
                 f"{'AUC gap':>12}")

    def num(x, spec=".4f"):
        return "n/a" if x is None else format(x, spec)

    for mode, row in disc["modes"].items():
        lines.append(f"{mode:<16}{num(row['approval_rate'][ref]):>18}"
                     f"{num(row['approval_rate'][prot]):>18}"
                     f"{num(row['adverse_impact_ratio']):>18}{num(row['auc_gap']):>12}")
    decl = disc["less_discriminatory"]
    lines.append("")
    if decl:
        for d in decl:
            lines.append(f"{d['mode']} is less discriminatory than {d['than']}")
    else:
        lines.append("no mode is less discriminatory than another")
    return "\n".join(lines) + "\n"
