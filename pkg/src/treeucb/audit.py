"""Point-scattering inequality auditor.

For a sequence of points and nested partitions the three sums

    sum 1/n_{t-1}(a_t)                 <= e |P| ln(1 + (e-1) T / |P|)
    sum 1/(1 + n0_{t-1}(a_t))          <= |P| (1 + ln(T / |P|))
    sum (1/(1 + n0_{t-1}(a_t)))^alpha  <= |P|^alpha T^(1-alpha) / (1 - alpha)

must hold, where ``n0_{t-1}(a_t)`` counts earlier points sharing ``a_t``'s
region of the partition in force at round t, ``n = max(1, n0)`` and ``|P|``
is the final partition size.

Counts are rebuilt here from the raw points and split events with a small
box tracker of its own, so the audit does not share code with the engine.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


class AuditDataError(ValueError):
    """Trace records are inconsistent."""


@dataclass(frozen=True)
class AuditRecord:
    t: int
    partition_size: int
    n0_pre: int
    n_pre: int | None = None

    def __post_init__(self):
        if self.n_pre is None:
            object.__setattr__(self, "n_pre", max(1, self.n0_pre))


@dataclass(frozen=True)
class AuditReport:
    T: int
    final_size: int
    alpha: float
    sum1: float
    bound1: float
    sum2: float
    bound2: float
    sum3: float
    bound3: float

    @property
    def passed(self) -> bool:
        return self.sum1 <= self.bound1 and self.sum2 <= self.bound2 and self.sum3 <= self.bound3

    def lines(self) -> list[str]:
        return [
            f"alpha={self.alpha:g} T={self.T} |P_T|={self.final_size}",
            f"  sum1={self.sum1:.6f} bound1={self.bound1:.6f}",
            f"  sum2={self.sum2:.6f} bound2={self.bound2:.6f}",
            f"  sum3={self.sum3:.6f} bound3={self.bound3:.6f}",
            f"  {'PASS' if self.passed else 'FAIL'}",
        ]

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["pass"] = self.passed
        return d


def bounds(T: int, size: int, alpha: float) -> tuple[float, float, float]:
    e = math.e
    b1 = e * size * math.log(1.0 + (e - 1.0) * T / size)
    b2 = size * (1.0 + math.log(T / size))
    b3 = size ** alpha * T ** (1.0 - alpha) / (1.0 - alpha)
    return b1, b2, b3


def audit(
    records: Sequence[AuditRecord],
    alpha: float = 0.5,
    final_size: int | None = None,
) -> AuditReport:
    """Evaluate the three sums and bounds over ``records`` (t = 1..T).

    ``final_size`` defaults to the largest partition size in the records.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if not records:
        raise AuditDataError("no records to audit")
    t = np.fromiter((r.t for r in records), dtype=np.int64, count=len(records))
    n0 = np.fromiter((r.n0_pre for r in records), dtype=np.int64, count=len(records))
    n = np.fromiter((r.n_pre for r in records), dtype=np.int64, count=len(records))
    sizes = np.fromiter((r.partition_size for r in records), dtype=np.int64, count=len(records))
    bad = np.flatnonzero(t != np.arange(1, len(records) + 1))
    if bad.size:
        i = bad[0]
        raise AuditDataError(f"record {i + 1} has t={t[i]}; rounds must run 1..T")
    bad = np.flatnonzero((n0 < 0) | (n != np.maximum(1, n0)))
    if bad.size:
        i = bad[0]
        raise AuditDataError(f"t={t[i]}: n_pre={n[i]} != max(1, n0_pre={n0[i]})")
    bad = np.flatnonzero(np.diff(sizes) < 0)
    if bad.size:
        i = bad[0] + 1
        raise AuditDataError(f"t={t[i]}: partition shrank ({sizes[i - 1]} -> {sizes[i]})")
    s1 = float(np.sum(1.0 / n))
    s2 = float(np.sum(1.0 / (1 + n0)))
    s3 = float(np.sum((1.0 / (1 + n0)) ** alpha))
    prev_size = int(sizes[-1])
    T = len(records)
    size = final_size if final_size is not None else prev_size
    b1, b2, b3 = bounds(T, size, alpha)
    return AuditReport(T, size, alpha, s1, b1, s2, b2, s3, b3)


class _BoxTracker:
    """Nested box partition kept as a split tree, with per-leaf points."""

    def __init__(self, lo: Sequence[float], hi: Sequence[float], boxes: dict):
        self.dom_hi = [float(v) for v in hi]
        self.roots = {int(k): (list(map(float, b[0])), list(map(float, b[1]))) for k, b in boxes.items()}
        self.boxes = dict(self.roots)  # leaves only
        self.children: dict[int, tuple[int, float, int, int]] = {}
        self.points: dict[int, list] = {k: [] for k in self.boxes}
        self.next_id = max(self.boxes) + 1

    def _inside(self, box, p) -> bool:
        lo, hi = box
        for i, v in enumerate(p):
            if v < lo[i]:
                return False
            if v >= hi[i] and not (v == hi[i] == self.dom_hi[i]):
                return False
        return True

    def find(self, p) -> int:
        if len(self.roots) == 1:
            hits = list(self.roots) if self._inside(next(iter(self.roots.values())), p) else []
        else:
            hits = [k for k, b in self.roots.items() if self._inside(b, p)]
        if len(hits) != 1:
            raise AuditDataError(f"point {list(p)} lies in {len(hits)} regions")
        k = hits[0]
        while k in self.children:
            dim, thr, left, right = self.children[k]
            k = left if p[dim] < thr else right
        return k

    def split(self, rid: int, dim: int, thr: float) -> None:
        if rid not in self.boxes:
            raise AuditDataError(f"split of unknown region {rid}")
        lo, hi = self.boxes.pop(rid)
        if not lo[dim] < thr < hi[dim]:
            raise AuditDataError(f"split threshold {thr} outside region {rid}")
        left = (lo, hi[:dim] + [thr] + hi[dim + 1:])
        right = (lo[:dim] + [thr] + lo[dim + 1:], hi)
        a, b = self.next_id, self.next_id + 1
        self.next_id += 2
        self.children[rid] = (dim, thr, a, b)
        pts = self.points.pop(rid)
        self.boxes[a], self.boxes[b] = left, right
        self.points[a] = [q for q in pts if q[dim] < thr]
        self.points[b] = [q for q in pts if q[dim] >= thr]

    def add(self, p) -> tuple[int, int]:
        k = self.find(p)
        n0 = len(self.points[k])
        self.points[k].append(p)
        return k, n0


def records_from_events(
    lo: Sequence[float],
    hi: Sequence[float],
    initial: dict,
    rounds: Iterable[tuple[Sequence, Sequence[tuple[int, int, float]]]],
) -> list[AuditRecord]:
    """Rebuild audit records from ``(point, splits_before_round)`` pairs.

    ``initial`` maps region id to ``(lo, hi)`` boxes of the starting partition.
    """
    tracker = _BoxTracker(lo, hi, initial)
    out = []
    for t, (point, splits) in enumerate(rounds, start=1):
        for rid, dim, thr in splits:
            tracker.split(int(rid), int(dim), float(thr))
        _, n0 = tracker.add([float(v) for v in point])
        out.append(AuditRecord(t, len(tracker.boxes), n0))
    return out


def record_from_engine(engine, point) -> AuditRecord:
    """Audit record for ``point`` about to be logged by ``engine``.

    Call between ``ask()`` and ``tell()``: uses the partition the arm was
    chosen on, but recounts the log directly.
    """
    part = engine.working_partition
    region = part.region_of(point)
    n0 = 0
    for prev in engine.log.arm_array():
        if region.contains(prev, part.domain):
            n0 += 1
    return AuditRecord(engine.t, len(part), n0)


def read_trace(path) -> tuple[dict, list[dict]]:
    """Header and decision records of a JSONL trace."""
    header = None
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            if obj.get("type") == "header":
                header = obj
            elif "t" in obj and "arm" in obj:
                rows.append(obj)
    if header is None:
        raise AuditDataError(f"{path}: trace has no header line")
    return header, rows


def records_from_trace(header: dict, rows: list[dict]) -> list[AuditRecord]:
    init = header["initial_partition"]
    boxes = {r["id"]: (r["lo"], r["hi"]) for r in init["regions"]}
    lo = [b[0] for b in init["bounds"]]
    hi = [b[1] for b in init["bounds"]]

    def events():
        for row in rows:
            point = list(row.get("context", [])) + list(row["arm"])
            yield point, row.get("splits", [])

    recs = records_from_events(lo, hi, boxes, events())
    for rec, row in zip(recs, rows):
        if "n0" in row and row["n0"] != rec.n0_pre:
            raise AuditDataError(
                f"t={row['t']}: trace reports n0={row['n0']}, recount gives {rec.n0_pre}"
            )
    return recs


def audit_trace(path, alphas: Sequence[float] = (0.5,)) -> list[AuditReport]:
    header, rows = read_trace(path)
    recs = records_from_trace(header, rows)
    return [audit(recs, a) for a in alphas]
