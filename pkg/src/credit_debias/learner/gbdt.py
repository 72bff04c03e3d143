"""Histogram gradient-boosted trees for binary log-loss.

Trees grow leaf-wise (best gain first) up to ``max_leaves``. Each split
learns where missing values go. Categorical splits send a prefix of the
levels, ordered by gradient/hessian ratio, to the left child. Prediction
and training share binning, so a model reproduces its training scores
bit for bit.
"""
from __future__ import annotations

import heapq
import json
import logging
from dataclasses import asdict, dataclass, field
from typing import Any, Mapping

import numpy as np
from scipy.special import expit

from ..dataset import Categorical, Column, ColumnRole, Dataset, Numeric, Schema
from ..errors import (
    ConfigParse,
    EmptyFeatureSet,
    FeatureMismatch,
    SingleClassTarget,
)
from . import _kernels
from .binning import FeatureBins, fit_bins, transform

log = logging.getLogger(__name__)

FORMAT = "credit-debias-gbdt"
_MIN_HESS = 1e-3
_RAW_CLIP = 36.0


@dataclass(frozen=True)
class GbdtParams:
    num_trees: int = 200
    learning_rate: float = 0.1
    max_leaves: int = 31
    min_samples_leaf: int = 20
    max_bins: int = 255
    l2_leaf_penalty: float = 1.0
    seed: int = 0
    subsample: float = 1.0

    def __post_init__(self):
        if self.num_trees < 1:
            raise ValueError("num_trees must be >= 1")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ValueError("learning_rate must lie in (0, 1]")
        if self.max_leaves < 1 or self.min_samples_leaf < 1:
            raise ValueError("max_leaves and min_samples_leaf must be positive")
        if not 2 <= self.max_bins <= 256:
            raise ValueError("max_bins must lie in [2, 256]")
        if self.l2_leaf_penalty < 0:
            raise ValueError("l2_leaf_penalty must be non-negative")
        if not 0.0 < self.subsample <= 1.0:
            raise ValueError("subsample must lie in (0, 1]")

    @classmethod
    def from_dict(cls, obj: Mapping) -> "GbdtParams":
        unknown = set(obj) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigParse(f"unknown GBDT parameter(s) {sorted(unknown)}")
        try:
            return cls(**obj)
        except (TypeError, ValueError) as exc:
            raise ConfigParse(str(exc)) from exc

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(eq=False)
class Tree:
    feature: np.ndarray  # int32, -1 marks a leaf
    threshold: np.ndarray  # int32 bin threshold for numeric splits, -1 otherwise
    left_bins: list  # per node: tuple of bins sent left for categorical splits, else None
    default_left: np.ndarray  # bool
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray  # float64 leaf outputs (0.0 on split nodes)
    lut: np.ndarray = field(default=None, repr=False)  # (n_nodes, max_bins) go-left table

    def build_lut(self, bins: list[FeatureBins], width: int) -> None:
        lut = np.zeros((len(self.feature), width), dtype=bool)
        for i, f in enumerate(self.feature):
            if f < 0:
                continue
            fb = bins[f]
            if self.left_bins[i] is None:
                lut[i, : self.threshold[i] + 1] = True
            else:
                lut[i, list(self.left_bins[i])] = True
            lut[i, fb.missing_bin] = bool(self.default_left[i])
            lut[i, fb.missing_bin + 1:] = False
        self.lut = lut

    def apply(self, codes: np.ndarray) -> np.ndarray:
        """Leaf index per row; ``codes`` is the (n, F) binned matrix."""
        return _kernels.apply_tree(codes, self.feature, self.lut, self.left, self.right)

    def predict_raw(self, codes: np.ndarray) -> np.ndarray:
        return self.value[self.apply(codes)]

    def to_dict(self, bins: list[FeatureBins]) -> dict:
        left_levels = []
        for i, f in enumerate(self.feature):
            lb = self.left_bins[i]
            left_levels.append(None if lb is None else [bins[f].levels[b] for b in lb])
        return {
            "feature": [int(x) for x in self.feature],
            "threshold": [int(x) for x in self.threshold],
            "left_levels": left_levels,
            "default_left": [bool(x) for x in self.default_left],
            "left": [int(x) for x in self.left],
            "right": [int(x) for x in self.right],
            "value": [float(x).hex() for x in self.value],
        }

    @classmethod
    def from_dict(cls, obj: Mapping, bins: list[FeatureBins]) -> "Tree":
        left_bins = []
        for f, lv in zip(obj["feature"], obj["left_levels"]):
            if lv is None:
                left_bins.append(None)
            else:
                left_bins.append(tuple(bins[f].levels.index(x) for x in lv))
        return cls(
            feature=np.array(obj["feature"], dtype=np.int32),
            threshold=np.array(obj["threshold"], dtype=np.int32),
            left_bins=left_bins,
            default_left=np.array(obj["default_left"], dtype=bool),
            left=np.array(obj["left"], dtype=np.int64),
            right=np.array(obj["right"], dtype=np.int64),
            value=np.array([float.fromhex(v) for v in obj["value"]], dtype=np.float64),
        )


def _log_loss(y: np.ndarray, raw: np.ndarray) -> float:
    # log(1 + e^raw) - y * raw, computed stably
    return float(np.mean(np.logaddexp(0.0, raw) - y * raw))


class TrainedModel:
    """A boosted ensemble plus its binning, parameters and metadata."""

    def __init__(self, bins: list[FeatureBins], trees: list[Tree], base_score: float,
                 params: GbdtParams, metadata: Mapping[str, Any] | None = None,
                 train_loss: list[float] | None = None):
        self.bins = list(bins)
        self.trees = list(trees)
        self.base_score = float(base_score)
        self.params = params
        self.metadata = dict(metadata or {})
        self.train_loss = list(train_loss or [])
        self._width = max((fb.n_bins for fb in self.bins), default=1)
        for t in self.trees:
            if t.lut is None:
                t.build_lut(self.bins, self._width)

    @property
    def features(self) -> list[str]:
        return [fb.name for fb in self.bins]

    def with_metadata(self, **extra) -> "TrainedModel":
        return TrainedModel(self.bins, self.trees, self.base_score, self.params,
                            {**self.metadata, **extra}, self.train_loss)

    def truncated(self, num_trees: int) -> "TrainedModel":
        return TrainedModel(self.bins, self.trees[:num_trees], self.base_score, self.params,
                            self.metadata, self.train_loss[: num_trees + 1])

    def raw_score(self, data: Dataset) -> np.ndarray:
        codes = np.ascontiguousarray(transform(self.bins, data).T)
        raw = np.full(data.n_rows, self.base_score)
        for t in self.trees:
            raw += t.predict_raw(codes)
        return raw

    def predict_proba(self, data: Dataset) -> np.ndarray:
        """P(Y=1) for every row of ``data``; columns are matched by name."""
        return expit(np.clip(self.raw_score(data), -_RAW_CLIP, _RAW_CLIP))

    def predict_row(self, row: Mapping[str, Any]) -> float:
        return float(self.predict_proba(rows_to_dataset(self.bins, [row]))[0])

    # -- serialization --------------------------------------------------------
    def to_dict(self) -> dict:
        feats = []
        for fb in self.bins:
            if fb.categorical:
                feats.append({"name": fb.name, "kind": "categorical", "levels": list(fb.levels)})
            else:
                feats.append({"name": fb.name, "kind": "numeric",
                              "thresholds": [float(x).hex() for x in fb.thresholds]})
        return {
            "format": FORMAT,
            "version": 1,
            "features": feats,
            "base_score": self.base_score.hex(),
            "params": self.params.to_dict(),
            "metadata": self.metadata,
            "train_loss": [float(x).hex() for x in self.train_loss],
            "trees": [t.to_dict(self.bins) for t in self.trees],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, obj: Mapping) -> "TrainedModel":
        if obj.get("format") != FORMAT:
            raise FeatureMismatch("not a GBDT model file")
        bins = []
        for f in obj["features"]:
            if f["kind"] == "categorical":
                bins.append(FeatureBins(f["name"], True, np.empty(0), tuple(f["levels"])))
            else:
                thr = np.array([float.fromhex(x) for x in f["thresholds"]], dtype=np.float64)
                bins.append(FeatureBins(f["name"], False, thr, ()))
        trees = [Tree.from_dict(t, bins) for t in obj["trees"]]
        return cls(bins, trees, float.fromhex(obj["base_score"]),
                   GbdtParams(**obj["params"]), obj.get("metadata"),
                   [float.fromhex(x) for x in obj.get("train_loss", [])])

    @classmethod
    def from_json(cls, text: str) -> "TrainedModel":
        return cls.from_dict(json.loads(text))


def rows_to_dataset(bins: list[FeatureBins], rows: list[Mapping[str, Any]]) -> Dataset:
    """Wrap raw feature dictionaries as a Dataset typed after the model features."""
    cols, raw = [], {}
    for fb in bins:
        if any(fb.name not in r for r in rows):
            raise FeatureMismatch(f"row lacks model feature {fb.name!r}", name=fb.name)
        if fb.categorical:
            cols.append(Column(fb.name, Categorical(fb.levels), ColumnRole.ALTERNATIVE))
            raw[fb.name] = [None if r[fb.name] is None else str(r[fb.name]) for r in rows]
        else:
            cols.append(Column(fb.name, Numeric(), ColumnRole.ALTERNATIVE))
            raw[fb.name] = [np.nan if r[fb.name] is None else float(r[fb.name]) for r in rows]
    target = "__target__"
    cols.append(Column(target, Numeric(), ColumnRole.TARGET))
    raw[target] = [0.0] * len(rows)
    return Dataset.from_columns(Schema(tuple(cols)), raw)


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

@dataclass
class _Split:
    gain: float
    feature: int
    threshold: int
    left_bins: tuple | None
    default_left: bool


class _Grower:
    """Grows one tree on gradient statistics; histograms are (F, B, 3) arrays."""

    def __init__(self, codes, bins, params: GbdtParams):
        self.codes = np.ascontiguousarray(codes.T)  # (n, F), missing in column B-1
        self.B = max(fb.n_value_bins for fb in bins) + 1
        self.is_cat = np.array([fb.categorical for fb in bins], dtype=np.bool_)
        self.p = params
        self.lam = float(params.l2_leaf_penalty)

    def best_split(self, hist, G, H, C) -> _Split | None:
        gain, f, thr, dl, order, n_left = _kernels.find_split(
            hist, self.is_cat, G, H, C, self.lam, float(self.p.min_samples_leaf))
        if f < 0 or not gain > 1e-12:
            return None
        left = tuple(sorted(int(b) for b in order[:n_left])) if self.is_cat[f] else None
        return _Split(float(gain), int(f), int(thr), left, bool(dl))

    def partition(self, split: _Split, rows):
        mask = np.zeros(self.B, dtype=np.bool_)
        if split.left_bins is not None:
            mask[list(split.left_bins)] = True
        return _kernels.partition(self.codes, rows, split.feature, split.threshold, mask,
                                  split.default_left, self.B - 1)

    def grow(self, rows, g, h):
        p = self.p
        nodes = []

        def new_node(r, hist):
            node = {"rows": r, "G": float(hist[0, :, 0].sum()), "H": float(hist[0, :, 1].sum()),
                    "C": float(len(r)), "hist": hist, "split": None, "left": -1, "right": -1}
            nodes.append(node)
            return len(nodes) - 1

        heap: list = []

        def consider(nid):
            nd = nodes[nid]
            if p.max_leaves > 1 and nd["C"] >= 2 * p.min_samples_leaf:
                s = self.best_split(nd["hist"], nd["G"], nd["H"], nd["C"])
                if s is not None:
                    nd["split"] = s
                    heapq.heappush(heap, (-s.gain, nid))
                    return
            nd["hist"] = None

        consider(new_node(rows, _kernels.build_histogram(self.codes, rows, g, h, self.B)))
        n_leaves = 1
        while heap and n_leaves < p.max_leaves:
            _, nid = heapq.heappop(heap)
            nd = nodes[nid]
            lr, rr = self.partition(nd["split"], nd["rows"])
            small_is_left = len(lr) <= len(rr)
            small = lr if small_is_left else rr
            hs = _kernels.build_histogram(self.codes, small, g, h, self.B)
            hb = nd["hist"] - hs
            if small_is_left:
                li, ri = new_node(lr, hs), new_node(rr, hb)
            else:
                li, ri = new_node(lr, hb), new_node(rr, hs)
            nd["left"], nd["right"], nd["hist"] = li, ri, None
            n_leaves += 1
            consider(li)
            consider(ri)
        # splits still queued when max_leaves was hit stay leaves
        for nd in nodes:
            if nd["left"] < 0:
                nd["split"] = None
                nd["hist"] = None
        return nodes


def _to_tree(nodes, lr, lam) -> tuple[Tree, list]:
    n = len(nodes)
    feature = np.full(n, -1, dtype=np.int32)
    threshold = np.full(n, -1, dtype=np.int32)
    default_left = np.zeros(n, dtype=bool)
    left = np.full(n, -1, dtype=np.int64)
    right = np.full(n, -1, dtype=np.int64)
    value = np.zeros(n, dtype=np.float64)
    left_bins: list = [None] * n
    leaves = []
    for i, nd in enumerate(nodes):
        s = nd["split"]
        if s is None:
            value[i] = -nd["G"] / (nd["H"] + lam) * lr
            leaves.append((i, nd["rows"]))
        else:
            feature[i] = s.feature
            threshold[i] = s.threshold
            left_bins[i] = s.left_bins
            default_left[i] = s.default_left
            left[i], right[i] = nd["left"], nd["right"]
    return Tree(feature, threshold, left_bins, default_left, left, right, value), leaves


def train(data: Dataset, features: list[str], params: GbdtParams | None = None,
          metadata: Mapping[str, Any] | None = None) -> TrainedModel:
    """Fit a boosted ensemble on ``features`` of ``data`` against its target.

    Runs exactly ``num_trees`` rounds. A round whose Newton step would raise
    the training log-loss is shrunk by halving until it does not.
    """
    params = params or GbdtParams()
    features = list(features)
    if not features:
        raise EmptyFeatureSet("at least one feature is required")
    target = data.schema.target
    if target in features:
        raise FeatureMismatch("the target cannot be a feature")
    if len(set(features)) != len(features):
        raise FeatureMismatch("duplicate feature names")
    y = data.target.astype(np.float64)
    if data.n_rows < 2 or y.min() == y.max():
        raise SingleClassTarget("training data needs both classes")

    bins = fit_bins(data, features, params.max_bins)
    codes = transform(bins, data)
    B = max(fb.n_value_bins for fb in bins) + 1
    miss_codes = np.array([fb.missing_bin for fb in bins])[:, None]
    codes_t = np.where(codes == miss_codes, B - 1, codes).astype(np.uint16 if B > 256 else np.uint8)
    grower = _Grower(codes_t, bins, params)
    grower.codes_raw = np.ascontiguousarray(codes.T)

    p0 = float(y.mean())
    base = float(np.log(p0 / (1.0 - p0)))
    raw = np.full(data.n_rows, base)
    losses = [_log_loss(y, raw)]
    rng = np.random.default_rng(params.seed)
    all_rows = np.arange(data.n_rows)
    trees = []
    width = max(fb.n_bins for fb in bins)
    for it in range(params.num_trees):
        prob = expit(raw)
        g, h = prob - y, prob * (1.0 - prob)
        rows = all_rows
        if params.subsample < 1.0:
            rows = all_rows[rng.random(data.n_rows) < params.subsample]
        nodes = grower.grow(rows, g, h)
        tree, leaves = _to_tree(nodes, params.learning_rate, params.l2_leaf_penalty)
        tree.build_lut(bins, width)
        if params.subsample < 1.0:
            leaf_of = tree.apply(grower.codes_raw)
        else:
            leaf_of = np.empty(data.n_rows, dtype=np.int64)
            for leaf, leaf_rows in leaves:
                leaf_of[leaf_rows] = leaf
        scale, shrink = 1.0, 0
        new_raw = raw + tree.value[leaf_of]
        loss = _log_loss(y, new_raw)
        while loss > losses[-1] and shrink < 30:
            scale *= 0.5
            shrink += 1
            tree.value = tree.value * 0.5
            new_raw = raw + tree.value[leaf_of]
            loss = _log_loss(y, new_raw)
        if loss > losses[-1]:
            tree.value = np.zeros_like(tree.value)
            new_raw, loss = raw + tree.value[leaf_of], losses[-1]
        if shrink:
            log.debug("round %d: step scaled by %g", it, scale)
        raw = new_raw
        losses.append(loss)
        trees.append(tree)
    meta = {"seed": params.seed, **(metadata or {})}
    return TrainedModel(bins, trees, base, params, meta, losses)
