"""Structural causal model of credit outcomes and an exact enumeration oracle.

Graph (ancestral order A, Z, P, W, X_W*, X_Z*, Y)::

    A -> Z,  A -> P,  A -> W,  Z -> W,  W -> X_W*,  Z -> X_Z*,  W -> Y

Y depends on A, Z and P only through the latent creditworthiness W; there is
no parameter for a direct A -> Y, Z -> Y or P -> Y effect. ``Y = 1`` means
default.
"""
from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np
from scipy import optimize, special, stats

from .dataset import Categorical, Column, ColumnRole, Dataset, Numeric, Schema
from .errors import InvalidSpec, NoHiddenColumns, NotDiscrete, StateSpaceTooLarge

_ROW_TOL = 1e-12
MAX_STATES = 10**7
MAX_LEVELS = 16
BLOCK_ROWS = 65536


def confusion_matrix(levels: int, accuracy: float) -> tuple[tuple[float, ...], ...]:
    """Symmetric misclassification matrix: correct with ``accuracy``, else uniform."""
    off = (1.0 - accuracy) / (levels - 1)
    return tuple(
        tuple(accuracy if i == j else off for j in range(levels)) for i in range(levels)
    )


def _as_tuple(x):
    if isinstance(x, (list, tuple, np.ndarray)):
        return tuple(_as_tuple(v) for v in x)
    return float(x)


@dataclass(frozen=True)
class ScmSpec:
    a_prior: float = 0.2
    z_given_a: tuple = ((0.1, 0.2, 0.3, 0.4), (0.4, 0.3, 0.2, 0.1))
    beta_z: tuple = (-1.0, -1.0 / 3.0, 1.0 / 3.0, 1.0)
    beta_a: float = -0.5
    sigma_w: float = 0.5
    p_given_a: tuple = ((0.6, 0.3, 0.1), (0.1, 0.3, 0.6))
    xw_noise: tuple = (1.5, 1.5, 1.5)
    xz_confusion: tuple = (confusion_matrix(4, 0.8), confusion_matrix(4, 0.8))
    gamma0: float = -1.0
    gamma1: float = 1.5
    proxy_role: ColumnRole = ColumnRole.EXCLUDED

    def __post_init__(self):
        for name in ("z_given_a", "beta_z", "p_given_a", "xw_noise", "xz_confusion"):
            object.__setattr__(self, name, _as_tuple(getattr(self, name)))
        object.__setattr__(self, "proxy_role", ColumnRole(self.proxy_role))
        self.validate()

    @property
    def z_levels(self) -> int:
        return len(self.beta_z)

    @property
    def p_levels(self) -> int:
        return len(self.p_given_a[0])

    @property
    def k_w(self) -> int:
        return len(self.xw_noise)

    @property
    def k_z(self) -> int:
        return len(self.xz_confusion)

    def validate(self) -> None:
        m = self.z_levels
        if not 0.0 <= self.a_prior <= 1.0:
            raise InvalidSpec("a_prior must lie in [0, 1]")
        _check_stochastic("z_given_a", self.z_given_a, rows=2, cols=m)
        _check_stochastic("p_given_a", self.p_given_a, rows=2)
        for j, mat in enumerate(self.xz_confusion):
            _check_stochastic(f"xz_confusion[{j}]", mat, rows=m, cols=m)
        if self.sigma_w < 0 or any(s < 0 for s in self.xw_noise):
            raise InvalidSpec("noise scales must be non-negative")
        if self.gamma1 < 0:
            raise InvalidSpec("gamma1 must be non-negative")

    # -- JSON: nested layout mirrors the parameter groups -------------------
    def to_dict(self) -> dict:
        return {
            "a_prior": self.a_prior,
            "z_given_a": [list(r) for r in self.z_given_a],
            "w_coeffs": {"beta_z": list(self.beta_z), "beta_a": self.beta_a, "sigma_w": self.sigma_w},
            "p_given_a": [list(r) for r in self.p_given_a],
            "xw_noise": list(self.xw_noise),
            "xz_confusion": [[list(r) for r in mat] for mat in self.xz_confusion],
            "y_link": {"gamma0": self.gamma0, "gamma1": self.gamma1},
            "proxy_role": self.proxy_role.value,
        }

    @classmethod
    def from_dict(cls, obj: Mapping) -> "ScmSpec":
        known = {"a_prior", "z_given_a", "w_coeffs", "p_given_a", "xw_noise",
                 "xz_confusion", "y_link", "proxy_role"}
        extra = set(obj) - known
        if extra:
            raise InvalidSpec(f"unknown ScmSpec keys {sorted(extra)}")
        kw = {k: obj[k] for k in ("a_prior", "z_given_a", "p_given_a", "xw_noise",
                                  "xz_confusion", "proxy_role") if k in obj}
        w = dict(obj.get("w_coeffs", {}))
        y = dict(obj.get("y_link", {}))
        if set(w) - {"beta_z", "beta_a", "sigma_w"} or set(y) - {"gamma0", "gamma1"}:
            raise InvalidSpec("unknown keys in w_coeffs or y_link")
        kw.update(w)
        kw.update(y)
        try:
            return cls(**kw)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, InvalidSpec):
                raise
            raise InvalidSpec(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "ScmSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


def _check_stochastic(name, table, rows, cols=None):
    arr = np.asarray(table, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] != rows or (cols is not None and arr.shape[1] != cols):
        raise InvalidSpec(f"{name} has shape {arr.shape}, expected ({rows}, {cols or 'q'})")
    if np.any(arr < 0) or np.any(np.abs(arr.sum(axis=1) - 1.0) > _ROW_TOL):
        raise InvalidSpec(f"{name} rows must be probability vectors")


@dataclass(frozen=True)
class HiddenTable:
    """Ground-truth latent columns, kept apart from the Dataset on purpose."""

    columns: Mapping[str, np.ndarray]

    def __getitem__(self, name):
        return self.columns[name]

    def __contains__(self, name):
        return name in self.columns

    def to_csv(self, path) -> None:
        names = sorted(self.columns)
        n = len(next(iter(self.columns.values()))) if names else 0
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(",".join(names) + "\n")
            for i in range(n):
                fh.write(",".join(repr(float(self.columns[c][i])) for c in names) + "\n")


@dataclass(frozen=True)
class ScmSample:
    data: Dataset
    hidden: HiddenTable | None


def _draw_categorical(u: np.ndarray, probs: np.ndarray) -> np.ndarray:
    """Inverse-CDF draw; ``probs`` has one row per sample."""
    cum = np.cumsum(probs, axis=1)
    idx = (u[:, None] >= cum[:, :-1]).sum(axis=1)
    return idx.astype(np.int64)


def _levels(k: int) -> tuple[str, ...]:
    return tuple(str(i) for i in range(k))


def _schema(k_z: int, z_levels: int, k_w: int, p_levels: int, proxy_role: ColumnRole,
            xw_type=None) -> Schema:
    cols = [Column("A", Categorical(("0", "1")), ColumnRole.PROTECTED)]
    cols += [Column(f"X_Z{j + 1}", Categorical(_levels(z_levels)), ColumnRole.ALTERNATIVE)
             for j in range(k_z)]
    cols += [Column(f"X_W{i + 1}", xw_type or Numeric(), ColumnRole.TRADITIONAL) for i in range(k_w)]
    cols.append(Column("P", Categorical(_levels(p_levels)), proxy_role))
    cols.append(Column("Y", Numeric(), ColumnRole.TARGET))
    return Schema(tuple(cols))


def _block_rngs(n: int, seed: int):
    n_blocks = max(1, math.ceil(n / BLOCK_ROWS))
    children = np.random.SeedSequence(seed).spawn(n_blocks)
    for b, child in enumerate(children):
        lo = b * BLOCK_ROWS
        yield lo, min(n, lo + BLOCK_ROWS), np.random.default_rng(child)


def sample(spec: ScmSpec, n: int, seed: int) -> ScmSample:
    """Ancestral sampling of ``n`` i.i.d. rows.

    Rows are produced in fixed-size blocks, each with its own PRNG substream
    derived from ``(seed, block index)``.
    """
    if isinstance(spec, DiscreteScm):
        return spec.sample(n, seed)
    spec.validate()
    z_tab = np.asarray(spec.z_given_a)
    p_tab = np.asarray(spec.p_given_a)
    beta_z = np.asarray(spec.beta_z)
    parts = {k: [] for k in ("A", "Z", "P", "W", "X_W", "X_Z", "Y")}
    for lo, hi, rng in _block_rngs(n, seed):
        m = hi - lo
        a = (rng.random(m) < spec.a_prior).astype(np.int64)
        z = _draw_categorical(rng.random(m), z_tab[a])
        p = _draw_categorical(rng.random(m), p_tab[a])
        w = beta_z[z] + spec.beta_a * a + spec.sigma_w * rng.standard_normal(m)
        xw = np.column_stack([w + s * rng.standard_normal(m) for s in spec.xw_noise]) \
            if spec.k_w else np.empty((m, 0))
        xz = np.column_stack([_draw_categorical(rng.random(m), np.asarray(mat)[z])
                              for mat in spec.xz_confusion]) if spec.k_z else np.empty((m, 0), int)
        y = (rng.random(m) < special.expit(spec.gamma0 - spec.gamma1 * w)).astype(np.float64)
        for key, val in zip(parts, (a, z, p, w, xw, xz, y)):
            parts[key].append(val)
    cat = {k: np.concatenate(v) for k, v in parts.items()}
    schema = _schema(spec.k_z, spec.z_levels, spec.k_w, spec.p_levels, spec.proxy_role)
    values = {"A": cat["A"], "P": cat["P"], "Y": cat["Y"]}
    for j in range(spec.k_z):
        values[f"X_Z{j + 1}"] = cat["X_Z"][:, j]
    for i in range(spec.k_w):
        values[f"X_W{i + 1}"] = cat["X_W"][:, i]
    hidden = HiddenTable({"W": cat["W"], "Z": cat["Z"].astype(np.float64)})
    return ScmSample(Dataset(schema, values), hidden)


# ---------------------------------------------------------------------------
# Fully discrete variant
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DiscreteScm:
    """Same graph with every node discrete; W and X_W share the W bin grid."""

    a_prior: float
    z_given_a: np.ndarray  # (2, m)
    p_given_a: np.ndarray  # (2, q)
    w_given_az: np.ndarray  # (2, m, nw)
    xw_given_w: tuple  # k_W matrices (nw, nw)
    xz_given_z: tuple  # k_Z matrices (m, m)
    y_given_w: np.ndarray  # (nw,) P(Y=1 | W)
    w_values: np.ndarray  # (nw,) representative W per bin
    proxy_role: ColumnRole = ColumnRole.EXCLUDED

    def variables(self) -> list[tuple[str, int]]:
        m, q, nw = self.z_given_a.shape[1], self.p_given_a.shape[1], len(self.w_values)
        out = [("A", 2), ("Z", m), ("P", q), ("W", nw)]
        out += [(f"X_W{i + 1}", nw) for i in range(len(self.xw_given_w))]
        out += [(f"X_Z{j + 1}", m) for j in range(len(self.xz_given_z))]
        out.append(("Y", 2))
        return out

    def factors(self) -> list[tuple[str, tuple[str, ...], np.ndarray]]:
        """(child, scope, table) triples; the child is the scope's last variable."""
        fs = [
            ("A", ("A",), np.array([1.0 - self.a_prior, self.a_prior])),
            ("Z", ("A", "Z"), self.z_given_a),
            ("P", ("A", "P"), self.p_given_a),
            ("W", ("A", "Z", "W"), self.w_given_az),
        ]
        fs += [(f"X_W{i + 1}", ("W", f"X_W{i + 1}"), t) for i, t in enumerate(self.xw_given_w)]
        fs += [(f"X_Z{j + 1}", ("Z", f"X_Z{j + 1}"), t) for j, t in enumerate(self.xz_given_z)]
        fs.append(("Y", ("W", "Y"), np.column_stack([1.0 - self.y_given_w, self.y_given_w])))
        return fs

    @property
    def n_states(self) -> int:
        return int(np.prod([c for _, c in self.variables()], dtype=object))

    def sample(self, n: int, seed: int) -> ScmSample:
        k_w, k_z = len(self.xw_given_w), len(self.xz_given_z)
        m, q = self.z_given_a.shape[1], self.p_given_a.shape[1]
        cols = {k: [] for k in ("A", "Z", "P", "W", "X_W", "X_Z", "Y")}
        for lo, hi, rng in _block_rngs(n, seed):
            size = hi - lo
            a = (rng.random(size) < self.a_prior).astype(np.int64)
            z = _draw_categorical(rng.random(size), self.z_given_a[a])
            p = _draw_categorical(rng.random(size), self.p_given_a[a])
            w = _draw_categorical(rng.random(size), self.w_given_az[a, z])
            xw = [_draw_categorical(rng.random(size), t[w]) for t in self.xw_given_w]
            xz = [_draw_categorical(rng.random(size), t[z]) for t in self.xz_given_z]
            y = (rng.random(size) < self.y_given_w[w]).astype(np.float64)
            for key, val in zip(cols, (a, z, p, w, np.array(xw).reshape(k_w, size).T,
                                       np.array(xz, dtype=np.int64).reshape(k_z, size).T, y)):
                cols[key].append(val)
        cat = {k: np.concatenate(v) for k, v in cols.items()}
        schema = _schema(k_z, m, k_w, q, self.proxy_role)
        values = {"A": cat["A"], "P": cat["P"], "Y": cat["Y"]}
        for j in range(k_z):
            values[f"X_Z{j + 1}"] = cat["X_Z"][:, j]
        for i in range(k_w):
            values[f"X_W{i + 1}"] = cat["X_W"][:, i].astype(np.float64)
        hidden = HiddenTable({
            "W": self.w_values[cat["W"]],
            "W_bin": cat["W"].astype(np.float64),
            "Z": cat["Z"].astype(np.float64),
        })
        return ScmSample(Dataset(schema, values), hidden)


def _mixture_cdf(w, mus, weights, sigma):
    return float(np.sum(weights * stats.norm.cdf((w - mus) / sigma)))


def discretize(spec: ScmSpec, w_bins: int = 8) -> DiscreteScm:
    """Discrete twin of ``spec`` with W cut into equal-probability bins.

    Bin edges are quantiles of the marginal W mixture. Each bin is represented
    by its conditional mean, which feeds the Y link; X_W observations are the
    bin of ``W_rep + noise`` on the same grid.
    """
    if spec.sigma_w <= 0:
        raise InvalidSpec("discretize needs sigma_w > 0")
    m = spec.z_levels
    mus = np.array([[spec.beta_z[z] + spec.beta_a * a for z in range(m)] for a in (0, 1)])
    weights = np.array([[(1 - spec.a_prior) if a == 0 else spec.a_prior] * m for a in (0, 1)])
    weights = weights * np.asarray(spec.z_given_a)
    mu_f, wt_f = mus.ravel(), weights.ravel()
    keep = wt_f > 0
    mu_f, wt_f = mu_f[keep], wt_f[keep]
    s = spec.sigma_w
    lo, hi = mu_f.min() - 12 * s, mu_f.max() + 12 * s
    inner = [optimize.brentq(lambda w, qq=k / w_bins: _mixture_cdf(w, mu_f, wt_f, s) - qq,
                             lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps)
             for k in range(1, w_bins)]
    edges = np.concatenate([[-np.inf], inner, [np.inf]])

    def cell_probs(mu, sd):
        if sd == 0:
            b = np.searchsorted(edges[1:-1], mu, side="left")
            out = np.zeros(w_bins)
            out[b] = 1.0
            return out
        c = stats.norm.cdf((edges - mu) / sd)
        return np.diff(c)

    w_given_az = np.array([[cell_probs(mus[a, z], s) for z in range(m)] for a in (0, 1)])
    # conditional mean of W within each bin under the marginal mixture
    w_values = np.empty(w_bins)
    for b in range(w_bins):
        alpha = (edges[b] - mu_f) / s
        beta = (edges[b + 1] - mu_f) / s
        mass = stats.norm.cdf(beta) - stats.norm.cdf(alpha)
        partial = mu_f * mass + s * (stats.norm.pdf(alpha) - stats.norm.pdf(beta))
        w_values[b] = np.sum(wt_f * partial) / np.sum(wt_f * mass)
    xw = tuple(np.array([cell_probs(w_values[b], sd) for b in range(w_bins)])
               for sd in spec.xw_noise)
    xz = tuple(np.asarray(mat, dtype=np.float64) for mat in spec.xz_confusion)
    y = special.expit(spec.gamma0 - spec.gamma1 * w_values)
    return DiscreteScm(
        a_prior=float(spec.a_prior),
        z_given_a=np.asarray(spec.z_given_a, dtype=np.float64),
        p_given_a=np.asarray(spec.p_given_a, dtype=np.float64),
        w_given_az=w_given_az,
        xw_given_w=xw,
        xz_given_z=xz,
        y_given_w=y,
        w_values=w_values,
        proxy_role=spec.proxy_role,
    )


# ---------------------------------------------------------------------------
# Queries
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Query:
    """``P(target | do(do), given)`` with every value a level index."""

    target: Mapping[str, int]
    given: Mapping[str, int] = field(default_factory=dict)
    do: Mapping[str, int] = field(default_factory=dict)


_TERM = re.compile(r"^\s*([A-Za-z_][A-Za-z0-9_]*)\s*=\s*(-?\d+)\s*$")


def parse_query(text: str) -> Query:
    """Parse e.g. ``"P(Y=1 | do(A=0), X_Z1=2, X_W1=3)"``."""
    m = re.fullmatch(r"\s*P\s*\((.*)\)\s*", text)
    if not m:
        raise ValueError(f"not a probability expression: {text!r}")
    body = m.group(1)
    lhs, _, rhs = body.partition("|")

    def terms(chunk):
        out = {}
        for t in filter(str.strip, chunk.split(",")):
            tm = _TERM.match(t)
            if not tm:
                raise ValueError(f"bad term {t!r}")
            out[tm.group(1)] = int(tm.group(2))
        return out

    do = {}
    for dm in re.finditer(r"do\s*\(([^)]*)\)", rhs):
        do.update(terms(dm.group(1)))
    given = terms(re.sub(r"do\s*\([^)]*\)", "", rhs))
    return Query(terms(lhs), given, do)


def _check_discrete(model) -> DiscreteScm:
    if not isinstance(model, DiscreteScm):
        raise NotDiscrete("exact queries need a DiscreteScm; use discretize(spec)")
    if any(card > MAX_LEVELS for _, card in model.variables()):
        raise NotDiscrete(f"every node must have at most {MAX_LEVELS} levels")
    if model.n_states > MAX_STATES:
        raise StateSpaceTooLarge(f"{model.n_states} joint states exceed {MAX_STATES}")
    return model


def _validate_assignment(model, assignment):
    cards = dict(model.variables())
    for name, val in assignment.items():
        if name not in cards:
            raise ValueError(f"unknown variable {name!r}")
        if not 0 <= val < cards[name]:
            raise ValueError(f"value {val} out of range for {name!r}")


def _letters(names):
    return {n: chr(ord("a") + i) if i < 26 else chr(ord("A") + i - 26) for i, n in enumerate(names)}


def truncated_marginal(model: DiscreteScm, do: Mapping[str, int], keep: list[str],
                       clamp: Mapping[str, int] | None = None) -> np.ndarray:
    """Unnormalized marginal over ``keep`` in the model mutilated by ``do``.

    Factors of intervened variables are deleted and the variables held at
    their set values (truncated factorization); ``clamp`` fixes further
    variables as evidence. Summation is done by einsum over the factor list.
    """
    clamp = dict(clamp or {})
    fixed = {**clamp, **do}
    names = [n for n, _ in model.variables()]
    sym = _letters(names)
    operands, subs = [], []
    for child, scope, table in model.factors():
        if child in do:
            continue
        index = tuple(fixed[v] if v in fixed else slice(None) for v in scope)
        sliced = table[index]
        free = [v for v in scope if v not in fixed]
        operands.append(sliced)
        subs.append("".join(sym[v] for v in free))
    out_vars = [v for v in keep if v not in fixed]
    spec = ",".join(subs) + "->" + "".join(sym[v] for v in out_vars)
    result = np.einsum(spec, *operands, optimize="greedy")
    return np.asarray(result, dtype=np.float64)


def joint_table(model: DiscreteScm) -> tuple[list[str], np.ndarray]:
    """Full joint distribution as a dense array (axis order = ``variables()``)."""
    _check_discrete(model)
    names = [n for n, _ in model.variables()]
    cards = [c for _, c in model.variables()]
    joint = np.ones(cards, dtype=np.float64)
    for _, scope, table in model.factors():
        shape = [1] * len(names)
        order = sorted(scope, key=names.index)
        t = np.transpose(table, [scope.index(v) for v in order])
        for v, c in zip(order, t.shape):
            shape[names.index(v)] = c
        joint = joint * t.reshape(shape)
    return names, joint


def _interventional(model: DiscreteScm, q: Query) -> float:
    num = float(truncated_marginal(model, q.do, [], clamp={**q.given, **q.target}))
    den = float(truncated_marginal(model, q.do, [], clamp=dict(q.given)))
    if den <= 0:
        raise ValueError("conditioning event has zero probability")
    return num / den


def _conditional(model: DiscreteScm, q: Query) -> float:
    names, joint = joint_table(model)

    def mass(assign):
        idx = tuple(assign.get(n, slice(None)) for n in names)
        return float(joint[idx].sum())

    den = mass(dict(q.given))
    if den <= 0:
        raise ValueError("conditioning event has zero probability")
    return mass({**q.given, **q.target}) / den


def exact_query(model: DiscreteScm, query: Query | str) -> float:
    """Exact probability by enumeration.

    Interventional queries go through the truncated factorization; purely
    observational ones through Bayes conditioning on the dense joint.
    """
    _check_discrete(model)
    q = parse_query(query) if isinstance(query, str) else query
    for part in (q.target, q.given, q.do):
        _validate_assignment(model, part)
    if set(q.target) & (set(q.given) | set(q.do)):
        raise ValueError("target variables may not also be conditioned on")
    if q.do:
        return _interventional(model, q)
    return _conditional(model, q)


def observed_names(model: DiscreteScm) -> list[str]:
    return [n for n, _ in model.variables() if n.startswith(("X_Z", "X_W"))]


def interventional_posterior(model: DiscreteScm, a_value: int, given: list[str] | None = None,
                             outcome: str = "Y") -> np.ndarray:
    """``P(Y=1 | do(A=a), given)`` for every cell of ``given`` (NaN on zero mass)."""
    _check_discrete(model)
    given = list(given or observed_names(model))
    tab = truncated_marginal(model, {"A": a_value}, given + [outcome])
    den = tab.sum(axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(den > 0, tab[..., 1] / np.where(den > 0, den, 1.0), np.nan)


def conditional_posterior(model: DiscreteScm, given: list[str] | None = None,
                          outcome: str = "Y") -> tuple[np.ndarray, np.ndarray]:
    """``P(Y=1 | A, given)`` from the dense joint, plus the cell masses.

    Axis 0 indexes A; the rest follow ``given``.
    """
    names, joint = joint_table(model)
    given = list(given or observed_names(model))
    keep = ["A"] + given + [outcome]
    drop = tuple(i for i, n in enumerate(names) if n not in keep)
    marg = joint.sum(axis=drop)
    kept = [n for n in names if n in keep]
    marg = np.transpose(marg, [kept.index(n) for n in keep])
    den = marg.sum(axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        post = np.where(den > 0, marg[..., 1] / np.where(den > 0, den, 1.0), np.nan)
    return post, den


def check_ci(sample: ScmSample, bins: int = 10, min_rows: int = 500,
             protected: str = "A") -> float | None:
    """Largest gap ``|P(Y=1|A=1,bin) - P(Y=1|A=0,bin)|`` over quantile bins of hidden W.

    Only bins where both groups have at least ``min_rows`` rows count; returns
    ``None`` when no bin qualifies.
    """
    if sample.hidden is None or "W" not in sample.hidden:
        raise NoHiddenColumns("sample carries no hidden W column")
    if bins < 2:
        raise ValueError("bins must be >= 2")
    w = np.asarray(sample.hidden["W"], dtype=np.float64)
    data = sample.data
    col = data.schema[protected]
    a = data.values(protected)
    one, zero = col.type.index("1"), col.type.index("0")
    y = data.target
    if len(w) == 0:
        return None
    distinct = np.unique(w)
    if len(distinct) <= bins:
        # discrete W: one bin per value, so binning adds no within-bin confounding
        b = np.searchsorted(distinct, w)
        bins = len(distinct)
    else:
        edges = np.quantile(w, np.linspace(0, 1, bins + 1))[1:-1]
        b = np.searchsorted(edges, w, side="right")
    best = None
    for k in range(bins):
        in_bin = b == k
        g1, g0 = in_bin & (a == one), in_bin & (a == zero)
        if g1.sum() < min_rows or g0.sum() < min_rows:
            continue
        gap = abs(float(y[g1].mean()) - float(y[g0].mean()))
        best = gap if best is None else max(best, gap)
    return best


__all__ = [
    "ScmSpec", "ScmSample", "HiddenTable", "DiscreteScm", "Query", "sample", "discretize",
    "exact_query", "parse_query", "truncated_marginal", "joint_table", "interventional_posterior",
    "conditional_posterior", "check_ci", "confusion_matrix", "observed_names",
]
