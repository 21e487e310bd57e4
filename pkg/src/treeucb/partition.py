"""Axis-aligned box partitions of a bounded domain.

Regions are half-open boxes ``[lo, hi)`` except along the domain's upper
face, where they are closed, so every point of the domain belongs to exactly
one region. Partitions are immutable; refinement returns a new value.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


class DomainError(ValueError):
    """A point lies outside the domain, or two domains disagree."""


class SplitError(ValueError):
    """A split threshold does not lie strictly inside the region."""


@dataclass(frozen=True)
class Domain:
    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        if len(lo) == 0 or len(lo) != len(hi):
            raise ValueError("domain needs matching, nonempty lo/hi bounds")
        for i, (a, b) in enumerate(zip(lo, hi)):
            if not a < b:
                raise ValueError(f"domain bound {i}: lo={a} must be < hi={b}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def box(cls, bounds: Sequence[Sequence[float]]) -> "Domain":
        return cls(tuple(b[0] for b in bounds), tuple(b[1] for b in bounds))

    @classmethod
    def unit(cls, dims: int, lo: float = 0.0, hi: float = 1.0) -> "Domain":
        return cls((lo,) * dims, (hi,) * dims)

    @property
    def dims(self) -> int:
        return len(self.lo)

    def check(self, point) -> np.ndarray:
        """Return ``point`` as a float array, raising if it leaves the box."""
        p = np.asarray(point, dtype=float).reshape(-1)
        if p.shape[0] != self.dims:
            raise DomainError(f"point has {p.shape[0]} coordinates, domain has {self.dims}")
        for i in range(self.dims):
            if not (self.lo[i] <= p[i] <= self.hi[i]):
                raise DomainError(
                    f"coordinate {i} = {p[i]!r} outside [{self.lo[i]}, {self.hi[i]}]"
                )
        return p

    def check_many(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(-1, self.dims)
        if pts.shape[1] != self.dims:
            raise DomainError(f"points have {pts.shape[1]} coordinates, domain has {self.dims}")
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        bad = (pts < lo) | (pts > hi) | ~np.isfinite(pts)
        if bad.any():
            row, dim = np.argwhere(bad)[0]
            raise DomainError(
                f"coordinate {dim} = {pts[row, dim]!r} of point {row} outside "
                f"[{self.lo[dim]}, {self.hi[dim]}]"
            )
        return pts


@dataclass(frozen=True)
class Region:
    id: int
    lo: tuple[float, ...]
    hi: tuple[float, ...]
    depth: int = 0

    @property
    def widths(self) -> np.ndarray:
        return np.asarray(self.hi) - np.asarray(self.lo)

    def contains(self, point, domain: Domain) -> bool:
        p = np.asarray(point, dtype=float).reshape(-1)
        for i in range(len(self.lo)):
            if p[i] < self.lo[i]:
                return False
            if p[i] >= self.hi[i] and not (p[i] == self.hi[i] == domain.hi[i]):
                return False
        return True

    def is_subset(self, other: "Region") -> bool:
        return all(a >= c and b <= d for a, b, c, d in zip(self.lo, self.hi, other.lo, other.hi))


def diameter(region: Region, metric: str = "linf") -> float:
    """Diameter of a box: longest edge (``linf``) or diagonal length (``l2``)."""
    w = region.widths
    if metric == "linf":
        return float(w.max())
    if metric == "l2":
        return float(math.sqrt(float(np.dot(w, w))))
    raise ValueError(f"unknown metric {metric!r}")


class Partition:
    """A finite set of disjoint boxes covering a :class:`Domain`.

    Regions are kept sorted by id; ids survive refinement unchanged.
    """

    def __init__(self, domain: Domain, regions: Iterable[Region], generation: int = 0):
        self.domain = domain
        self.regions: tuple[Region, ...] = tuple(sorted(regions, key=lambda r: r.id))
        if not self.regions:
            raise ValueError("partition needs at least one region")
        self.generation = generation
        self._by_id = {r.id: r for r in self.regions}
        if len(self._by_id) != len(self.regions):
            raise ValueError("duplicate region ids")
        self._lo = np.array([r.lo for r in self.regions], dtype=float)
        self._hi = np.array([r.hi for r in self.regions], dtype=float)
        self._ids = np.array([r.id for r in self.regions], dtype=np.int64)

    @classmethod
    def trivial(cls, domain: Domain) -> "Partition":
        return cls(domain, [Region(0, domain.lo, domain.hi)])

    def __len__(self) -> int:
        return len(self.regions)

    def __iter__(self):
        return iter(self.regions)

    def __getitem__(self, region_id: int) -> Region:
        return self._by_id[region_id]

    def __contains__(self, region_id) -> bool:
        return region_id in self._by_id

    def __eq__(self, other) -> bool:
        if not isinstance(other, Partition):
            return NotImplemented
        return self.domain == other.domain and self.regions == other.regions

    def __repr__(self) -> str:
        return f"Partition({len(self)} regions, generation={self.generation})"

    @property
    def ids(self) -> np.ndarray:
        return self._ids

    @property
    def max_id(self) -> int:
        return int(self._ids.max())

    def _member_mask(self, pts: np.ndarray) -> np.ndarray:
        dom_hi = np.asarray(self.domain.hi)
        p = pts[:, None, :]
        upper_ok = (p < self._hi) | ((p == self._hi) & (self._hi == dom_hi))
        return np.all((p >= self._lo) & upper_ok, axis=2)

    def region_of(self, point) -> Region:
        """The unique region containing ``point``."""
        p = self.domain.check(point)
        hits = np.flatnonzero(self._member_mask(p[None, :])[0])
        if hits.size != 1:  # pragma: no cover - guarded by the cover invariant
            raise AssertionError(f"point {p} lies in {hits.size} regions")
        return self.regions[hits[0]]

    def locate(self, points) -> np.ndarray:
        """Region ids for a batch of points (rows)."""
        pts = self.domain.check_many(points)
        if pts.shape[0] == 0:
            return np.empty(0, dtype=np.int64)
        mask = self._member_mask(pts)
        counts = mask.sum(axis=1)
        if not np.all(counts == 1):  # pragma: no cover
            raise AssertionError("cover invariant violated")
        return self._ids[mask.argmax(axis=1)]

    def split(self, region_id: int, dim: int, threshold: float) -> "Partition":
        """Replace one region by its two halves at ``threshold`` along ``dim``.

        Children receive ids ``max_id + 1`` (lower half) and ``max_id + 2``.
        """
        region = self._by_id[region_id]
        lo, hi = region.lo[dim], region.hi[dim]
        threshold = float(threshold)
        if not lo < threshold < hi:
            raise SplitError(
                f"threshold {threshold!r} not strictly inside [{lo}, {hi}) on dim {dim} "
                f"of region {region_id}"
            )
        left_hi = list(region.hi)
        left_hi[dim] = threshold
        right_lo = list(region.lo)
        right_lo[dim] = threshold
        nid = self.max_id + 1
        left = Region(nid, region.lo, tuple(left_hi), region.depth + 1)
        right = Region(nid + 1, tuple(right_lo), region.hi, region.depth + 1)
        rest = [r for r in self.regions if r.id != region_id]
        return Partition(self.domain, rest + [left, right], self.generation + 1)

    def to_dict(self) -> dict:
        return {
            "dims": self.domain.dims,
            "bounds": [[a, b] for a, b in zip(self.domain.lo, self.domain.hi)],
            "regions": [
                {"id": r.id, "lo": list(r.lo), "hi": list(r.hi), "depth": r.depth}
                for r in self.regions
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Partition":
        domain = Domain.box(data["bounds"])
        if data.get("dims", domain.dims) != domain.dims:
            raise ValueError("dims does not match bounds")
        regions = [
            Region(int(r["id"]), tuple(r["lo"]), tuple(r["hi"]), int(r.get("depth", 0)))
            for r in data["regions"]
        ]
        return cls(domain, regions)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def region_of(partition: Partition, point) -> Region:
    return partition.region_of(point)


def split_region(partition: Partition, region_id: int, dim: int, threshold: float) -> Partition:
    return partition.split(region_id, dim, threshold)


def verify_nested(coarse: Partition, fine: Partition) -> tuple[bool, tuple[Region, Region] | None]:
    """Check that every region of ``fine`` sits inside some region of ``coarse``.

    On failure the witness is ``(fine_region, coarse_region)`` where the coarse
    region is the one containing the fine region's lower corner.
    """
    if coarse.domain != fine.domain:
        raise DomainError("partitions cover different domains")
    owners = coarse.locate(fine._lo)
    pos = np.searchsorted(coarse.ids, owners)  # regions are sorted by id
    ok = np.all((coarse._lo[pos] <= fine._lo) & (fine._hi <= coarse._hi[pos]), axis=1)
    if ok.all():
        return True, None
    k = int(np.flatnonzero(~ok)[0])
    return False, (fine.regions[k], coarse[int(owners[k])])
