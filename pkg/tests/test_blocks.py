import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from momreg.blocks import BlockPartition, BlockPolicy, partition_fixed, partition_random
from momreg.exceptions import ParameterError


def test_fixed_contiguous_blocks():
    np.testing.assert_array_equal(partition_fixed(6, 3).blocks, [[0, 1], [2, 3], [4, 5]])
    np.testing.assert_array_equal(partition_fixed(5, 5).blocks, [[0], [1], [2], [3], [4]])


def test_fixed_drops_remainder():
    p = partition_fixed(7, 3)
    assert p.block_size == 2 and p.K == 3
    assert set(p.blocks.ravel()) == set(range(6))


def test_fixed_is_stable():
    assert partition_fixed(20, 4).blocks.tobytes() == partition_fixed(20, 4).blocks.tobytes()


@pytest.mark.parametrize("N,K", [(5, 0), (5, 6), (0, 1)])
def test_invalid_block_counts(N, K):
    with pytest.raises(ParameterError):
        partition_fixed(N, K)
    with pytest.raises(ParameterError):
        partition_random(N, K, np.random.default_rng(0))


def test_random_single_block():
    p = partition_random(4, 1, np.random.default_rng(3))
    assert sorted(p.blocks[0]) == [0, 1, 2, 3]


def test_random_replay():
    a = partition_random(4, 2, np.random.default_rng(11))
    b = partition_random(4, 2, np.random.default_rng(11))
    np.testing.assert_array_equal(a.blocks, b.blocks)


def test_random_covers_every_index_without_remainder():
    rng = np.random.default_rng(0)
    seen = np.zeros(100)
    for _ in range(10_000):
        seen[np.unique(partition_random(100, 10, rng).blocks)] += 1
    np.testing.assert_array_equal(seen / 10_000, 1.0)


def test_cooccurrence_frequency():
    N, K, draws = 12, 3, 20_000
    rng = np.random.default_rng(1)
    hits = 0
    for _ in range(draws):
        blocks = partition_random(N, K, rng).blocks
        hits += any(0 in b and 1 in b for b in blocks)
    p = (N // K - 1) / (N - 1)
    se = np.sqrt(p * (1 - p) / draws)
    assert abs(hits / draws - p) < 3 * se


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 60).flatmap(lambda N: st.tuples(st.just(N), st.integers(1, N))), st.integers(0, 2**32))
def test_partitions_are_disjoint_and_equal_sized(NK, seed):
    N, K = NK
    for p in (partition_fixed(N, K), partition_random(N, K, np.random.default_rng(seed))):
        flat = p.blocks.ravel()
        assert p.blocks.shape == (K, N // K)
        assert len(np.unique(flat)) == flat.size
        assert flat.min() >= 0 and flat.max() < N


def test_partition_rejects_overlap():
    with pytest.raises(ParameterError):
        BlockPartition(np.array([[0, 1], [1, 2]]))
    with pytest.raises(ParameterError):
        BlockPartition(np.array([[0, -1]]))


def test_policy_mode_validation():
    with pytest.raises(ParameterError):
        BlockPolicy("sometimes")
