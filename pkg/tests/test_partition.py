import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from treeucb.partition import (
    Domain,
    DomainError,
    Partition,
    Region,
    SplitError,
    diameter,
    region_of,
    split_region,
    verify_nested,
)

from conftest import random_partition

UNIT1 = Domain.unit(1)
UNIT2 = Domain.unit(2)


def halves():
    return split_region(Partition.trivial(UNIT1), 0, 0, 0.5)


def test_single_region_contains_center():
    assert region_of(Partition.trivial(UNIT2), [0.5, 0.5]).id == 0


def test_boundary_point_goes_to_upper_region():
    p = halves()
    r = region_of(p, [0.5])
    assert r.lo == (0.5,)
    assert r.id == 2


def test_point_just_below_boundary():
    assert region_of(halves(), [0.49999]).hi == (0.5,)


def test_domain_upper_face_is_covered():
    p = halves()
    assert region_of(p, [1.0]).id == 2
    assert region_of(Partition.trivial(UNIT2), [1.0, 1.0]).id == 0


def test_outside_domain_names_dimension():
    with pytest.raises(DomainError, match="coordinate 1 "):
        region_of(Partition.trivial(UNIT2), [0.5, 1.2])


@pytest.mark.parametrize(
    "lo, hi, metric, expected",
    [
        ((0, 0), (1, 1), "linf", 1.0),
        ((0, 0), (0.5, 0.25), "linf", 0.5),
        ((0, 0), (1, 1), "l2", math.sqrt(2)),
    ],
)
def test_diameter(lo, hi, metric, expected):
    assert diameter(Region(0, lo, hi), metric) == pytest.approx(expected, abs=1e-12)


def test_nested_with_itself():
    p = halves()
    assert verify_nested(p, p) == (True, None)


def test_halving_is_nested():
    assert verify_nested(Partition.trivial(UNIT1), halves())[0]


def test_straddling_partition_is_not_nested():
    coarse = halves()
    fine = split_region(Partition.trivial(UNIT1), 0, 0, 0.6)
    ok, witness = verify_nested(coarse, fine)
    assert not ok
    fine_region, _ = witness
    assert (fine_region.lo, fine_region.hi) == ((0.0,), (0.6,))


def test_nested_needs_same_domain():
    with pytest.raises(DomainError):
        verify_nested(Partition.trivial(UNIT1), Partition.trivial(Domain.unit(1, 0, 2)))


def test_split_keeps_other_ids():
    p = halves()
    q = split_region(p, 1, 0, 0.25)
    assert len(q) == 3
    assert 2 in q and q[2] == p[2]
    assert sorted(q.ids) == [2, 3, 4]
    assert verify_nested(p, q)[0]


@pytest.mark.parametrize("thr", [0.0, 1.0, 1.5, -0.1])
def test_split_on_or_outside_edge_rejected(thr):
    with pytest.raises(SplitError):
        split_region(Partition.trivial(UNIT1), 0, 0, thr)


def test_serialisation_round_trip(rng):
    p = random_partition(rng, 3, 12)
    q = Partition.from_dict(json.loads(p.to_json()))
    assert q == p
    assert q.to_json() == p.to_json()


@given(seed=st.integers(0, 2**32 - 1), dims=st.integers(1, 3), n=st.integers(1, 24))
def test_disjoint_cover(seed, dims, n):
    rng = np.random.default_rng(seed)
    p = random_partition(rng, dims, n)
    pts = rng.uniform(0, 1, size=(2000, dims))
    pts[:50] = rng.choice([0.0, 1.0], size=(50, dims))
    mask = p._member_mask(pts)
    assert np.all(mask.sum(axis=1) == 1)


def test_disjoint_cover_large_sample(rng):
    p = random_partition(rng, 2, 30)
    pts = rng.uniform(0, 1, size=(100_000, 2))
    labels = p.locate(pts)
    # independent per-region interval test
    counts = np.zeros(len(pts), dtype=int)
    for r in p:
        counts += np.all((pts >= r.lo) & (pts < r.hi), axis=1)
    assert np.all(counts == 1)
    assert np.array_equal(labels, p.locate(pts))


@given(seed=st.integers(0, 2**32 - 1), dims=st.integers(1, 3))
def test_split_is_nested_and_shrinks_diameter(seed, dims):
    rng = np.random.default_rng(seed)
    p = random_partition(rng, dims, int(rng.integers(1, 10)))
    r = p.regions[rng.integers(len(p))]
    dim = int(rng.integers(dims))
    thr = float(rng.uniform(r.lo[dim], r.hi[dim]))
    if not r.lo[dim] < thr < r.hi[dim]:
        return
    q = p.split(r.id, dim, thr)
    assert verify_nested(p, q)[0]
    for child in (q[q.max_id - 1], q[q.max_id]):
        for metric in ("linf", "l2"):
            assert diameter(child, metric) <= diameter(r, metric)
