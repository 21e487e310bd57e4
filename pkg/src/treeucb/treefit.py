"""Greedy regression-tree refinement driven by mean-absolute-error reduction.

The fitter only ever refines the partition it is given, so consecutive
partitions are nested, and it uses no randomness: the output is a function of
the previous partition, the observations and the configuration alone.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .partition import Partition, Region, diameter


@dataclass(frozen=True)
class FitConfig:
    """Stopping rule and growth caps for :func:`refit`.

    ``max_leaves`` is a static cap; ``leaf_exponent`` adds the schedule
    ``floor(n ** leaf_exponent)`` on ``n`` observations (at least one leaf).
    The effective cap is the smaller of the two.
    """

    eta: float = 0.001
    max_leaves: Optional[int] = None
    leaf_exponent: Optional[float] = 0.75
    max_depth: int = 64
    min_leaf_diameter: float = 0.0
    feature_policy: str = "all"
    metric: str = "linf"

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError("eta must be > 0")
        if self.max_leaves is not None and self.max_leaves < 1:
            raise ValueError("max_leaves must be >= 1")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.min_leaf_diameter < 0:
            raise ValueError("min_leaf_diameter must be >= 0")
        if self.feature_policy not in ("all", "round-robin"):
            raise ValueError(f"unknown feature policy {self.feature_policy!r}")

    def leaf_cap(self, n_obs: int) -> int:
        cap = math.inf if self.max_leaves is None else self.max_leaves
        if self.leaf_exponent is not None:
            # 1e-9 guards exact powers such as 16 ** 0.75 == 7.999999...
            cap = min(cap, max(1, math.floor(n_obs ** self.leaf_exponent + 1e-9)))
        return cap


@dataclass(frozen=True)
class SplitDecision:
    dim: int
    threshold: float
    reduction: float


def node_mae(rewards) -> float:
    """Mean absolute deviation of ``rewards`` from their mean."""
    y = np.asarray(rewards, dtype=float)
    if y.size == 0:
        raise ValueError("node_mae of an empty node")
    return float(np.mean(np.abs(y - y.mean())))


def _prefix_mae(y: np.ndarray) -> np.ndarray:
    """MAE of ``y[:j]`` for j = 1..n, vectorised (O(n^2) memory)."""
    n = y.size
    counts = np.arange(1, n + 1)
    means = np.cumsum(y) / counts
    dev = np.abs(y[None, :] - means[:, None])
    dev *= np.tri(n, dtype=bool)
    return dev.sum(axis=1) / counts


def _features(region: Region, config: FitConfig, dims: int) -> range | tuple[int]:
    if config.feature_policy == "round-robin":
        return (region.depth % dims,)
    return range(dims)


def best_split(arms, rewards, region: Region, config: FitConfig) -> Optional[SplitDecision]:
    """Split of ``region`` maximising the weighted MAE reduction.

    Candidate thresholds are midpoints of consecutive distinct coordinate
    values. Returns ``None`` when fewer than two samples are given, no
    candidate exists, or the best reduction is below ``config.eta``. Ties go to
    the lowest dimension, then the lowest threshold.
    """
    x = np.asarray(arms, dtype=float)
    y = np.asarray(rewards, dtype=float)
    n = y.size
    if n < 2:
        return None
    x = x.reshape(n, -1)
    parent = node_mae(y)
    best: Optional[SplitDecision] = None
    for dim in _features(region, config, x.shape[1]):
        order = np.argsort(x[:, dim], kind="stable")
        xs, ys = x[order, dim], y[order]
        cut = np.flatnonzero(xs[1:] > xs[:-1])  # left child = first cut+1 samples
        if cut.size == 0:
            continue
        thresholds = 0.5 * (xs[cut] + xs[cut + 1])
        # the midpoint can round onto the upper value for adjacent floats
        thresholds = np.where(thresholds <= xs[cut], xs[cut + 1], thresholds)
        left = _prefix_mae(ys)[cut]
        right = _prefix_mae(ys[::-1])[::-1][cut + 1]
        n_left = cut + 1
        reduction = parent - (n_left * left + (n - n_left) * right) / n
        ok = (thresholds > region.lo[dim]) & (thresholds < region.hi[dim])
        if config.min_leaf_diameter > 0:
            ok &= _children_wide_enough(region, dim, thresholds, config)
        if not ok.any():
            continue
        reduction = np.where(ok, reduction, -np.inf)
        k = int(np.argmax(reduction))  # first maximum = lowest threshold
        if best is None or reduction[k] > best.reduction:
            best = SplitDecision(dim, float(thresholds[k]), float(max(reduction[k], 0.0)))
    if best is None or best.reduction < config.eta:
        return None
    return best


def _children_wide_enough(region: Region, dim: int, thresholds: np.ndarray, config: FitConfig):
    ok = np.empty(thresholds.size, dtype=bool)
    for i, thr in enumerate(thresholds):
        lo_hi = list(region.hi)
        lo_hi[dim] = thr
        hi_lo = list(region.lo)
        hi_lo[dim] = thr
        a = Region(-1, region.lo, tuple(lo_hi))
        b = Region(-1, tuple(hi_lo), region.hi)
        ok[i] = min(diameter(a, config.metric), diameter(b, config.metric)) >= config.min_leaf_diameter
    return ok


def refit(
    previous: Partition,
    arms,
    rewards,
    config: FitConfig,
    cache: Optional[dict] = None,
) -> Partition:
    """Refined partition; see :func:`refit_with_splits`."""
    return refit_with_splits(previous, arms, rewards, config, cache)[0]


def refit_with_splits(
    previous: Partition,
    arms,
    rewards,
    config: FitConfig,
    cache: Optional[dict] = None,
    members: Optional[dict] = None,
) -> tuple[Partition, list]:
    """Refine ``previous`` by repeatedly splitting leaves on the observations.

    Leaves are visited in ascending id order; children join the back of the
    queue. Growth stops when no visited leaf admits a split or the leaf cap is
    reached. ``cache`` may carry best-split results between calls; entries are
    keyed by region id and sample count, which is sound because observations
    are only ever appended. ``members`` (region id -> observation indices on
    ``previous``) skips rebinning when the caller already tracks it.

    Returns the new partition and the ``(region_id, dim, threshold)`` splits
    applied, in order.
    """
    y = np.asarray(rewards, dtype=float).reshape(-1)
    if y.size == 0:
        return previous, []
    x = previous.domain.check_many(np.asarray(arms, dtype=float).reshape(y.size, -1))
    cap = config.leaf_cap(y.size)
    if len(previous) >= cap:
        return previous, []
    splits = []

    if members is None:
        labels = previous.locate(x)
        members = {int(rid): np.flatnonzero(labels == rid) for rid in previous.ids}
    else:
        members = {int(k): np.asarray(v, dtype=np.int64) for k, v in members.items()}
    part = previous
    queue = deque(int(rid) for rid in previous.ids)
    while queue and len(part) < cap:
        rid = queue.popleft()
        region = part[rid]
        if region.depth >= config.max_depth:
            continue
        idx = members[rid]
        key = (rid, idx.size)
        if cache is not None and key in cache:
            decision = cache[key]
        else:
            decision = best_split(x[idx], y[idx], region, config)
            if cache is not None:
                cache[key] = decision
        if decision is None:
            continue
        part = part.split(rid, decision.dim, decision.threshold)
        splits.append((rid, decision.dim, decision.threshold))
        left_id, right_id = part.max_id - 1, part.max_id
        go_left = x[idx, decision.dim] < decision.threshold
        members[left_id] = idx[go_left]
        members[right_id] = idx[~go_left]
        del members[rid]
        queue.append(left_id)
        queue.append(right_id)
    return part, splits
