"""Equal-size block partitions of ``range(N)``."""
from dataclasses import dataclass

import numpy as np

from .exceptions import ParameterError

BLOCK_MODES = ("fixed", "random-each-step")


@dataclass(frozen=True)
class BlockPartition:
    """``K`` disjoint blocks of ``block_size`` indices each.

    ``blocks`` is a ``(K, block_size)`` integer array. When ``K`` does not
    divide ``N`` the leftover indices belong to no block.
    """

    blocks: np.ndarray

    def __post_init__(self):
        blocks = np.asarray(self.blocks, dtype=np.int64)
        if blocks.ndim != 2 or blocks.shape[0] < 1 or blocks.shape[1] < 1:
            raise ParameterError(f"blocks must be a non-empty (K, size) array, got {blocks.shape}")
        if blocks.min() < 0 or np.bincount(blocks.ravel()).max() > 1:
            raise ParameterError("blocks must be pairwise disjoint")
        blocks.setflags(write=False)
        object.__setattr__(self, "blocks", blocks)

    @property
    def K(self):
        return self.blocks.shape[0]

    @property
    def block_size(self):
        return self.blocks.shape[1]

    def __len__(self):
        return self.K

    def __getitem__(self, k):
        return self.blocks[k]


@dataclass(frozen=True)
class BlockPolicy:
    """Whether blocks are drawn once or re-drawn before every selection.

    ``seed=None`` lets the solver fall back on its own seed.
    """

    mode: str = "random-each-step"
    seed: int = None

    def __post_init__(self):
        if self.mode not in BLOCK_MODES:
            raise ParameterError(f"unknown block mode {self.mode!r}; expected one of {BLOCK_MODES}")


def _check(N, K):
    if int(K) != K or int(N) != N:
        raise ParameterError("N and K must be integers")
    if K < 1 or K > N:
        raise ParameterError(f"need 1 <= K <= N, got K={K}, N={N}")


def partition_fixed(N, K):
    """Contiguous blocks: the first ``N // K`` indices, then the next, ..."""
    _check(N, K)
    size = N // K
    return BlockPartition(np.arange(K * size).reshape(K, size))


def partition_random(N, K, rng):
    """Chunk a uniform random permutation of ``range(N)`` into ``K`` blocks.

    ``rng`` is a :class:`numpy.random.Generator` and is advanced in place.
    """
    _check(N, K)
    size = N // K
    perm = rng.permutation(N)
    return BlockPartition(perm[: K * size].reshape(K, size))
