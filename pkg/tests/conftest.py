import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from treeucb.audit import records_from_events
from treeucb.partition import Domain, Partition

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

# filled by tests/test_acceptance.py, reported after the run
ACCEPTANCE = {}


def random_partition(rng: np.random.Generator, dims: int, n_regions: int, domain=None) -> Partition:
    """Random nested refinement of ``domain`` with ``n_regions`` regions."""
    domain = domain or Domain.unit(dims)
    p = Partition.trivial(domain)
    while len(p) < n_regions:
        r = p.regions[rng.integers(len(p))]
        dim = int(rng.integers(dims))
        lo, hi = r.lo[dim], r.hi[dim]
        if hi - lo < 1e-6:
            continue
        p = p.split(r.id, dim, float(rng.uniform(lo + 0.1 * (hi - lo), hi - 0.1 * (hi - lo))))
    return p


def adversarial_records(seed, T, max_regions, dims=2):
    """Audit records for an arbitrary point stream under random nested splits."""
    rng = np.random.default_rng(seed)
    boxes = {0: ((0.0,) * dims, (1.0,) * dims)}
    leaves = {0: boxes[0]}
    next_id = 1
    mode = rng.integers(3)
    centre = rng.uniform(0, 1, dims)
    if mode == 0:
        points = rng.uniform(0, 1, (T, dims))
    elif mode == 1:  # clustered
        points = np.clip(centre + 1e-3 * rng.normal(size=(T, dims)), 0, 1)
    else:  # hop between a few fixed points
        points = np.repeat(rng.integers(4, size=(T, 1)) / 4, dims, axis=1)
    points = points.tolist()

    def rounds():
        nonlocal next_id
        for t in range(T):
            splits = []
            if len(leaves) < max_regions and rng.uniform() < 0.02:
                rid = list(leaves)[rng.integers(len(leaves))]
                lo, hi = leaves[rid]
                dim = int(rng.integers(dims))
                if hi[dim] - lo[dim] > 1e-9:
                    thr = float(rng.uniform(lo[dim], hi[dim]))
                    if lo[dim] < thr < hi[dim]:
                        splits.append((rid, dim, thr))
                        del leaves[rid]
                        leaves[next_id] = (lo, tuple(thr if i == dim else v for i, v in enumerate(hi)))
                        leaves[next_id + 1] = (tuple(thr if i == dim else v for i, v in enumerate(lo)), hi)
                        next_id += 2
            yield points[t], splits

    return records_from_events((0.0,) * dims, (1.0,) * dims, boxes, rounds())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
