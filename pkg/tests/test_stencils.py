import numpy as np
import pytest
from scipy.spatial.distance import cdist

from cavityflow.stencils import build_stencils


def scrambled_cloud(n=200, seed=0):
    return np.random.default_rng(seed).uniform(0, 1, size=(n, 2))


def test_s1_is_self():
    pts = scrambled_cloud()
    st = build_stencils(pts, 1)
    assert np.array_equal(st.indices[:, 0], np.arange(len(pts)))
    assert np.all(st.distances == 0.0)


def test_self_first_and_sorted():
    pts = scrambled_cloud(300, seed=4)
    st = build_stencils(pts, 9)
    assert np.array_equal(st.indices[:, 0], np.arange(len(pts)))
    assert np.all(np.diff(st.distances, axis=1) >= 0)


def test_regular_grid_five_point():
    xs = np.linspace(0, 1, 11)
    pts = np.stack(np.meshgrid(xs, xs, indexing="ij"), -1).reshape(-1, 2)
    st = build_stencils(pts, 5)
    center = 5 * 11 + 5
    # brute-force oracle: sort by (distance, index)
    d = cdist(pts[center : center + 1], pts)[0]
    oracle = sorted(range(len(pts)), key=lambda j: (d[j], j))[:5]
    assert sorted(st.indices[center].tolist()) == sorted(oracle)
    assert st.indices[center, 0] == center
    # ties broken by the smaller node index
    assert np.array_equal(np.sort(st.indices[center, 1:]), np.sort(oracle[1:]))


def test_matches_brute_force_on_random_cloud():
    pts = scrambled_cloud(150, seed=9)
    st = build_stencils(pts, 7)
    d = cdist(pts, pts)
    for i in range(0, 150, 17):
        oracle = sorted(range(len(pts)), key=lambda j: (d[i, j], j))[:7]
        assert st.indices[i].tolist() == oracle


def test_permutation_invariance_up_to_relabeling():
    pts = scrambled_cloud(120, seed=2)
    st = build_stencils(pts, 6)
    perm = np.random.default_rng(0).permutation(len(pts))
    inverse = np.argsort(perm)
    st_p = build_stencils(pts[perm], 6)
    # relabel: stencil of node perm[i] in the permuted cloud maps back
    for i in range(0, 120, 13):
        mapped = perm[st_p.indices[inverse[i]]]
        assert set(mapped.tolist()) == set(st.indices[i].tolist())


def test_size_errors():
    pts = scrambled_cloud(10)
    with pytest.raises(ValueError):
        build_stencils(pts, 11)
    with pytest.raises(ValueError):
        build_stencils(pts, 0)
