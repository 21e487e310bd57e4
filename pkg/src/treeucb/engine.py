"""Partition-based UCB bandit engine.

One :class:`Engine` drives a single run of TreeUCB, contextual TreeUCB,
UniformMesh or UCB1. Each round refines the partition on the observations so
far, scores every region with an upper confidence index, picks the best region
(exact ties broken uniformly at random) and plays a uniform arm inside it.

The engine owns two independent random streams spawned from its seed: one for
tie-breaking and one for drawing arms inside a region. Keeping them apart lets
variants that do not draw arms (UCB1) share tie-breaks with ones that do.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, asdict
from typing import Callable, Optional, Sequence

import numpy as np

from .partition import Domain, Partition, Region, diameter
from .treefit import FitConfig, refit_with_splits

logger = logging.getLogger(__name__)

VARIANTS = ("tucb", "ctucb", "uniformmesh", "ucb1")
EXPLORATION = ("standard", "v", "contextual", "horizon")
REFINEMENT = ("tree", "mesh", "zooming", "fixed")


class ConfigError(ValueError):
    """Invalid or incomplete engine configuration."""


@dataclass(frozen=True)
class EngineConfig:
    """Run parameters.

    ``exploration`` selects the confidence bonus:

    - ``standard``: ``C * sqrt(4 ln t / n)``
    - ``v``: ``v * sqrt(ln t / n)``
    - ``contextual``: ``(v1 * sqrt(ln t) + v2 * |z|**v3) / sqrt(n)``, z the
      first context coordinate
    - ``horizon``: ``sqrt(2 ln T / n)`` (the UCB1 bonus)

    ``M`` multiplies the region diameter in every variant except ``ucb1``.
    """

    variant: str = "tucb"
    C: float = 0.05
    M: float = 0.01
    exploration: str = "standard"
    v: float = 1.0
    v1: float = 1.0
    v2: float = 0.0
    v3: float = 1.0
    horizon: Optional[int] = None
    refinement: Optional[str] = None
    fit: FitConfig = field(default_factory=FitConfig)
    metric: str = "linf"
    context_dims: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; choose from {VARIANTS}")
        if self.exploration not in EXPLORATION:
            raise ConfigError(f"unknown exploration {self.exploration!r}")
        if self.C < 0 or self.M < 0:
            raise ConfigError("C and M must be nonnegative")
        if self.horizon is not None and self.horizon < 1:
            raise ConfigError("horizon must be >= 1")
        if self.refinement is None:
            default = {"tucb": "tree", "ctucb": "tree", "uniformmesh": "mesh", "ucb1": "fixed"}
            object.__setattr__(self, "refinement", default[self.variant])
        if self.refinement not in REFINEMENT:
            raise ConfigError(f"unknown refinement {self.refinement!r}")
        if self.variant == "ucb1" and self.horizon is None:
            raise ConfigError("ucb1 needs a horizon T")
        if (self.refinement == "zooming" or self.exploration == "horizon") and self.horizon is None:
            raise ConfigError(f"{self.refinement if self.refinement == 'zooming' else 'horizon exploration'} needs a horizon T")
        if self.variant == "ctucb" and self.context_dims < 1:
            raise ConfigError("ctucb needs context_dims >= 1")
        if self.metric not in ("linf", "l2"):
            raise ConfigError(f"unknown metric {self.metric!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "EngineConfig":
        data = dict(data)
        if isinstance(data.get("fit"), dict):
            data["fit"] = FitConfig(**data["fit"])
        return cls(**data)


@dataclass(frozen=True)
class RegionStats:
    region_id: int
    raw_count: int
    count: int
    mean: float


class ObservationLog:
    """Append-only record of played (context-)arms and rewards.

    Arms are stored on the joint space, context coordinates first.
    """

    def __init__(self, dims: int):
        self.dims = dims
        self._arms = np.empty((64, dims))
        self._rewards = np.empty(64)
        self._n = 0

    def __len__(self) -> int:
        return self._n

    def append(self, arm, reward: float) -> None:
        if self._n == self._rewards.size:
            self._arms = np.concatenate([self._arms, np.empty_like(self._arms)])
            self._rewards = np.concatenate([self._rewards, np.empty_like(self._rewards)])
        self._arms[self._n] = np.asarray(arm, dtype=float).reshape(self.dims)
        self._rewards[self._n] = float(reward)
        self._n += 1

    def arm_array(self) -> np.ndarray:
        """Read-only view of the logged points, one row per round."""
        v = self._arms[: self._n]
        v.flags.writeable = False
        return v

    def reward_array(self) -> np.ndarray:
        v = self._rewards[: self._n]
        v.flags.writeable = False
        return v


@dataclass(frozen=True)
class Decision:
    t: int
    region_id: int
    arm: tuple
    reward: float
    ucb: float
    m: float
    n: int
    n0: int
    diameter: float
    partition_size: int
    context: Optional[tuple] = None
    splits: tuple = ()

    def to_record(self) -> dict:
        rec = {
            "t": self.t,
            "region_id": self.region_id,
            "arm": list(self.arm),
        }
        if self.context is not None:
            rec["context"] = list(self.context)
        rec.update(
            reward=self.reward,
            ucb=self.ucb,
            m=self.m,
            n=self.n,
            n0=self.n0,
            diameter=self.diameter,
            partition_size=self.partition_size,
            splits=[list(s) for s in self.splits],
        )
        return rec


def corrected_stats(partition: Partition, log: ObservationLog) -> dict[int, RegionStats]:
    """Raw count, corrected count and corrected mean of every region.

    Computed from scratch: all logged points are binned into the current
    partition. Empty regions get count 1 and mean 1.
    """
    ids = partition.ids
    labels = partition.locate(log.arm_array()) if len(log) else np.empty(0, dtype=np.int64)
    y = log.reward_array()
    out = {}
    for rid in ids:
        sel = labels == rid
        n0 = int(sel.sum())
        m = float(y[sel].sum() / n0) if n0 else 1.0
        out[int(rid)] = RegionStats(int(rid), n0, max(1, n0), m)
    return out


def exploration_bonus(count, t: int, config: EngineConfig, context=None):
    """Confidence bonus for corrected count(s) ``count`` at round ``t``."""
    n = np.asarray(count, dtype=float)
    log_t = math.log(t) if t > 1 else 0.0
    kind = "horizon" if config.variant == "ucb1" else config.exploration
    if kind == "standard":
        return config.C * np.sqrt(4.0 * log_t / n)
    if kind == "v":
        return config.v * np.sqrt(log_t / n)
    if kind == "contextual":
        z = 0.0 if context is None else abs(float(np.asarray(context).reshape(-1)[0]))
        beta = config.v1 * math.sqrt(log_t) + (config.v2 * z ** config.v3 if config.v2 else 0.0)
        return beta / np.sqrt(n)
    return np.sqrt(2.0 * math.log(config.horizon) / n)


def ucb_index(mean, count, diam, t: int, config: EngineConfig, context=None):
    """Upper confidence index; scalar or elementwise over arrays."""
    bonus = exploration_bonus(count, t, config, context)
    lipschitz = 0.0 if config.variant == "ucb1" else config.M * np.asarray(diam, dtype=float)
    out = np.asarray(mean, dtype=float) + bonus + lipschitz
    return float(out) if out.ndim == 0 else out


def select_region(ids: Sequence[int], indices, rng: np.random.Generator) -> int:
    """Argmax over ``indices`` (aligned with ascending ``ids``).

    Only bitwise-equal maxima count as ties; a tie is broken with one draw
    from ``rng``. A unique maximum consumes no randomness.
    """
    vals = np.asarray(indices, dtype=float)
    top = np.flatnonzero(vals == vals.max())
    if top.size == 1:
        return int(ids[top[0]])
    return int(ids[top[rng.integers(top.size)]])


def sample_arm(region: Region, rng: np.random.Generator, dims: Optional[slice] = None) -> np.ndarray:
    """Uniform point in ``region`` (or in its ``dims`` coordinates)."""
    lo = np.asarray(region.lo)
    hi = np.asarray(region.hi)
    if dims is not None:
        lo, hi = lo[dims], hi[dims]
    x = rng.uniform(lo, hi)
    # uniform(lo, hi) can round up onto hi; keep the half-open convention
    return np.where(x >= hi, np.nextafter(hi, lo), x)


def mesh_refine(partition: Partition, t: int) -> tuple[Partition, list]:
    """Halve every cell of a uniform mesh while its edge exceeds ``t**(-1/(d+2))``.

    Returns the new mesh and the list of ``(region_id, dim, threshold)``
    splits applied, in order.
    """
    d = partition.domain.dims
    threshold = t ** (-1.0 / (d + 2))
    widths = np.asarray(partition.domain.hi) - np.asarray(partition.domain.lo)
    splits = []
    while True:
        edge = partition.regions[0].widths / widths
        if not edge.max() > threshold:
            return partition, splits
        for region in list(partition.regions):
            cells = [region.id]
            for dim in range(d):
                nxt = []
                for rid in cells:
                    r = partition[rid]
                    thr = 0.5 * (r.lo[dim] + r.hi[dim])
                    partition = partition.split(rid, dim, thr)
                    splits.append((rid, dim, thr))
                    nxt.extend((partition.max_id - 1, partition.max_id))
                cells = nxt


def zooming_refine(
    partition: Partition, log: ObservationLog, config: EngineConfig
) -> tuple[Partition, list]:
    """Bisect every region with ``D > sqrt(8 ln T / n)`` until none remain.

    Regions are cut at the midpoint of their longest edge (lowest dimension on
    ties). Counts are rebinned after every pass.
    """
    if config.horizon is None:
        raise ConfigError("zooming refinement needs a horizon T")
    log_T = math.log(config.horizon)
    splits = []
    while True:
        stats = corrected_stats(partition, log)
        violating = [
            r for r in partition.regions
            if diameter(r, config.metric) > math.sqrt(8.0 * log_T / stats[r.id].count)
        ]
        if not violating:
            return partition, splits
        for r in violating:
            dim = int(np.argmax(r.widths))
            thr = 0.5 * (r.lo[dim] + r.hi[dim])
            partition = partition.split(r.id, dim, thr)
            splits.append((r.id, dim, thr))


def singleton_partition(k: int) -> Partition:
    """``k`` unit cells ``[i, i+1)`` over ``[0, k]``: a discrete arm set."""
    domain = Domain((0.0,), (float(k),))
    return Partition(domain, [Region(i, (float(i),), (float(i + 1),)) for i in range(k)])


class Engine:
    """Stateful bandit loop over a box domain.

    ``ask()`` refines the partition and proposes an arm; ``tell(reward)``
    records the outcome. ``step(observe)`` does both and leaves the engine
    untouched if ``observe`` raises.
    """

    def __init__(
        self,
        domain: Domain,
        config: EngineConfig,
        partition: Optional[Partition] = None,
    ):
        self.config = config
        self.domain = domain
        if config.variant == "ctucb" and config.context_dims >= domain.dims:
            raise ConfigError("joint domain must have arm dimensions after the context ones")
        self.partition = partition if partition is not None else Partition.trivial(domain)
        if self.partition.domain != domain:
            raise ConfigError("initial partition does not cover the domain")
        self.initial_partition = self.partition
        self.log = ObservationLog(domain.dims)
        select_seq, arm_seq = np.random.SeedSequence(config.seed).spawn(2)
        self.select_rng = np.random.default_rng(select_seq)
        self.arm_rng = np.random.default_rng(arm_seq)
        self.t = 1
        self._members: dict[int, list[int]] = {int(r): [] for r in self.partition.ids}
        self._sums: dict[int, float] = {int(r): 0.0 for r in self.partition.ids}
        self._fit_cache: dict = {}
        self._pending = None
        self._warned_range = False
        self.decisions: list[Decision] = []

    # -- statistics -------------------------------------------------------

    def stats(self) -> dict[int, RegionStats]:
        """Cached corrected statistics on the current partition."""
        out = {}
        for rid in self.partition.ids:
            rid = int(rid)
            n0 = len(self._members[rid])
            m = self._sums[rid] / n0 if n0 else 1.0
            out[rid] = RegionStats(rid, n0, max(1, n0), m)
        return out

    def _refine(self) -> tuple[Partition, list]:
        cfg = self.config
        part = self.partition
        if cfg.refinement == "fixed":
            return part, []
        if cfg.refinement == "mesh":
            return mesh_refine(part, self.t)
        if cfg.refinement == "zooming":
            return zooming_refine(part, self.log, cfg)
        return refit_with_splits(
            part,
            self.log.arm_array(),
            self.log.reward_array(),
            cfg.fit,
            self._fit_cache,
            members=self._members,
        )

    # -- protocol ---------------------------------------------------------

    def ask(self, context=None) -> np.ndarray:
        """Refine, score and choose; returns the (joint) point to evaluate."""
        if self._pending is not None:
            raise RuntimeError("ask() called twice without tell()")
        cfg = self.config
        rng_state = (self.select_rng.bit_generator.state, self.arm_rng.bit_generator.state)
        new_part, splits = self._refine()
        members, sums = _rebin(self._members, self._sums, splits, self.log)
        stats = {}
        for r in new_part.ids:
            r = int(r)
            n0 = len(members[r])
            stats[r] = (n0, max(1, n0), sums[r] / n0 if n0 else 1.0)

        if cfg.variant == "ctucb":
            c = cfg.context_dims
            if context is None:
                raise ValueError("ctucb needs a context every round")
            z = np.asarray(context, dtype=float).reshape(-1)
            if z.size != c:
                raise ValueError(f"context has {z.size} coordinates, expected {c}")
            self.domain.check(np.concatenate([z, np.asarray(self.domain.lo[c:])]))
            lo = new_part._lo[:, :c]
            hi = new_part._hi[:, :c]
            cand = np.all((lo <= z) & (z <= hi), axis=1)
            assert cand.any(), "no region meets the context slice"
            regions = [r for r, ok in zip(new_part.regions, cand) if ok]
        else:
            z = None
            regions = list(new_part.regions)

        ids = [r.id for r in regions]
        diam = np.array(
            [0.0 if cfg.variant == "ucb1" else diameter(r, cfg.metric) for r in regions]
        )
        m = np.array([stats[i][2] for i in ids])
        n = np.array([stats[i][1] for i in ids])
        index = ucb_index(m, n, diam, self.t, cfg, context=z)
        index = np.atleast_1d(index)
        chosen = select_region(ids, index, self.select_rng)
        k = ids.index(chosen)
        region = new_part[chosen]
        if cfg.variant == "ucb1":
            point = np.asarray(region.lo, dtype=float)
        elif cfg.variant == "ctucb":
            a = sample_arm(region, self.arm_rng, slice(cfg.context_dims, None))
            point = np.concatenate([z, a])
        else:
            point = sample_arm(region, self.arm_rng)

        # a boundary context can land the joint point in a neighbouring cell
        landing = chosen if cfg.variant != "ctucb" else int(new_part.locate(point[None, :])[0])
        n0 = stats[landing][0]
        self._pending = dict(
            partition=new_part,
            members=members,
            sums=sums,
            splits=splits,
            point=point,
            context=None if z is None else tuple(float(v) for v in z),
            region=chosen,
            ucb=float(index[k]),
            m=float(m[k]),
            n=int(n[k]),
            n0=int(n0),
            diameter=float(diameter(region, cfg.metric)) if cfg.variant != "ucb1" else 0.0,
            rng_state=rng_state,
        )
        return point.copy()

    @property
    def working_partition(self) -> Partition:
        """Partition of the pending round if ``ask()`` is outstanding."""
        return self._pending["partition"] if self._pending is not None else self.partition

    def arm_of(self, point) -> np.ndarray:
        """Arm coordinates of a joint point (drops the context)."""
        return np.asarray(point)[self.config.context_dims:]

    def cancel(self) -> None:
        """Forget a pending ask and rewind both random streams."""
        if self._pending is None:
            return
        sel, arm = self._pending["rng_state"]
        self.select_rng.bit_generator.state = sel
        self.arm_rng.bit_generator.state = arm
        self._pending = None

    def tell(self, reward: float) -> Decision:
        if self._pending is None:
            raise RuntimeError("tell() without a pending ask()")
        reward = float(reward)
        if not math.isfinite(reward):
            raise ValueError(f"reward must be finite, got {reward!r}")
        if not 0.0 <= reward <= 1.0 and not self._warned_range:
            # noise pushes rewards past [0, 1]; they are kept as data
            logger.warning("round %d: reward %.6g outside [0, 1] (warning once)", self.t, reward)
            self._warned_range = True
        p = self._pending
        self._pending = None
        self.partition = p["partition"]
        self._members = p["members"]
        self._sums = p["sums"]
        # bin the new point under the partition it was chosen on
        rid = int(self.partition.locate(p["point"][None, :])[0])
        self._members[rid].append(len(self.log))
        self._sums[rid] += reward
        self.log.append(p["point"], reward)
        c = self.config.context_dims
        decision = Decision(
            t=self.t,
            region_id=p["region"],
            arm=tuple(float(v) for v in p["point"][c:]),
            reward=reward,
            ucb=p["ucb"],
            m=p["m"],
            n=p["n"],
            n0=p["n0"],
            diameter=p["diameter"],
            partition_size=len(self.partition),
            context=p["context"],
            splits=tuple(p["splits"]),
        )
        self.decisions.append(decision)
        self.t += 1
        return decision

    def step(self, observe: Callable, context=None) -> Decision:
        """One full round; ``observe`` maps the arm (not the context) to a reward.

        For ``ctucb`` ``observe`` receives ``(context, arm)``.
        """
        point = self.ask(context)
        try:
            if self.config.variant == "ctucb":
                c = self.config.context_dims
                reward = observe(point[:c], point[c:])
            else:
                reward = observe(point)
            reward = float(reward)
            if not math.isfinite(reward):
                raise ValueError(f"observe returned non-finite reward {reward!r}")
        except BaseException:
            self.cancel()
            raise
        return self.tell(reward)

    def run(self, observe: Callable, rounds: int, contexts=None) -> list[Decision]:
        out = []
        for i in range(rounds):
            z = None if contexts is None else contexts(self.t)
            out.append(self.step(observe, z))
        return out


def _rebin(members: dict, sums: dict, splits: list, log: ObservationLog):
    """Copy the per-region member lists and push them through ``splits``.

    Child ids are handed out as ``max_id + 1, max_id + 2`` per split, so the
    replay tracks the running maximum id.
    """
    if not splits:
        return members, sums
    members = {k: list(v) for k, v in members.items()}
    sums = dict(sums)
    arms = log.arm_array()
    y = log.reward_array()
    max_id = max(members)
    for rid, dim, thr in splits:
        idx = np.asarray(members.pop(rid), dtype=np.int64)
        sums.pop(rid)
        left = idx[arms[idx, dim] < thr] if idx.size else idx
        right = idx[arms[idx, dim] >= thr] if idx.size else idx
        members[max_id + 1] = left.tolist()
        members[max_id + 2] = right.tolist()
        sums[max_id + 1] = float(y[left].sum()) if left.size else 0.0
        sums[max_id + 2] = float(y[right].sum()) if right.size else 0.0
        max_id += 2
    return members, sums
