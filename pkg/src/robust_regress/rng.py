"""Reproducible random streams: SplitMix64 seeding into xoshiro256++.

Every stochastic operation in the package takes a :class:`RandomSource`,
an immutable ``(master_seed, stream_id)`` pair.  Draws come from a fresh
:class:`Stream` built from it, so the same source always yields the same
numbers.  Sub-tasks get their own sources through :meth:`RandomSource.child`.

Draw definitions (fixed so other implementations can reproduce them):

* uniform double: ``(next_u64() >> 11) * 2**-53``
* normal: polar Box-Muller on ``u = 2*U - 1``, ``v = 2*U - 1``; both
  variates of an accepted pair are used, ``u*f`` first then ``v*f``
* Rademacher: ``+1`` if the top bit of ``next_u64()`` is set, else ``-1``
* bounded integer in ``[0, n)``: mask rejection on ``next_u64()``
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

MASK64 = 0xFFFFFFFFFFFFFFFF
GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(x: int) -> tuple[int, int]:
    """Advance a SplitMix64 state; return ``(new_state, output)``."""
    x = (x + GOLDEN) & MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return x, z ^ (z >> 31)


def mix64(*words: int) -> int:
    """Hash a sequence of 64-bit words into one via chained SplitMix64."""
    state = 0
    out = 0
    for w in words:
        state, out = splitmix64((state ^ (int(w) & MASK64)) & MASK64)
        state = out
    return out


def seed_state(master_seed: int, stream_id: int) -> np.ndarray:
    """Expand ``(master_seed, stream_id)`` into a xoshiro256++ state."""
    x = (int(master_seed) ^ mix64(0x5EED, stream_id)) & MASK64
    words = []
    for _ in range(4):
        x, out = splitmix64(x)
        words.append(out)
    if not any(words):  # all-zero state is a fixed point
        words[0] = GOLDEN
    return np.array(words, dtype=np.uint64)


@njit(cache=True, inline="always")
def _rotl(x, k):
    return (x << np.uint64(k)) | (x >> np.uint64(64 - k))


@njit(cache=True)
def _next(s):
    result = _rotl(s[0] + s[3], 23) + s[0]
    t = s[1] << np.uint64(17)
    s[2] ^= s[0]
    s[3] ^= s[1]
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    s[3] = _rotl(s[3], 45)
    return result


@njit(cache=True)
def _uniform(s):
    return np.float64(_next(s) >> np.uint64(11)) * (1.0 / 9007199254740992.0)


@njit(cache=True)
def _fill_u64(s, out):
    for i in range(out.shape[0]):
        out[i] = _next(s)


@njit(cache=True)
def _fill_uniform(s, out):
    for i in range(out.shape[0]):
        out[i] = _uniform(s)


@njit(cache=True)
def _fill_normal(s, spare, out):
    # spare[0] holds a cached variate, spare[1] is 1.0 when it is valid
    i = 0
    m = out.shape[0]
    if m > 0 and spare[1] == 1.0:
        out[0] = spare[0]
        spare[1] = 0.0
        i = 1
    while i < m:
        u = 2.0 * _uniform(s) - 1.0
        v = 2.0 * _uniform(s) - 1.0
        q = u * u + v * v
        if q >= 1.0 or q == 0.0:
            continue
        f = np.sqrt(-2.0 * np.log(q) / q)
        out[i] = u * f
        i += 1
        if i < m:
            out[i] = v * f
            i += 1
        else:
            spare[0] = v * f
            spare[1] = 1.0


@njit(cache=True)
def _fill_signs(s, out):
    top = np.uint64(1) << np.uint64(63)
    for i in range(out.shape[0]):
        out[i] = 1.0 if (_next(s) & top) else -1.0


@njit(cache=True)
def _bounded(s, n):
    # n >= 1; rejection on the smallest covering bit mask
    mask = np.uint64(n - 1)
    mask |= mask >> np.uint64(1)
    mask |= mask >> np.uint64(2)
    mask |= mask >> np.uint64(4)
    mask |= mask >> np.uint64(8)
    mask |= mask >> np.uint64(16)
    mask |= mask >> np.uint64(32)
    while True:
        r = _next(s) & mask
        if r < np.uint64(n):
            return np.int64(r)


@njit(cache=True)
def _fill_bounded(s, n, out):
    for i in range(out.shape[0]):
        out[i] = _bounded(s, n)


@njit(cache=True)
def _permutation(s, n):
    p = np.arange(n)
    for i in range(n - 1, 0, -1):
        j = _bounded(s, i + 1)
        tmp = p[i]
        p[i] = p[j]
        p[j] = tmp
    return p


class Stream:
    """A live xoshiro256++ generator.  Mutable; never share across threads."""

    def __init__(self, master_seed: int, stream_id: int):
        self._s = seed_state(master_seed, stream_id)
        self._spare = np.zeros(2)

    def next_u64(self, size: int | None = None):
        out = np.empty(1 if size is None else size, dtype=np.uint64)
        _fill_u64(self._s, out)
        return int(out[0]) if size is None else out

    def uniform(self, size: int) -> np.ndarray:
        out = np.empty(size)
        _fill_uniform(self._s, out)
        return out

    def normal(self, size) -> np.ndarray:
        shape = (size,) if np.isscalar(size) else tuple(size)
        out = np.empty(int(np.prod(shape)))
        _fill_normal(self._s, self._spare, out)
        return out.reshape(shape)

    def rademacher(self, size: int) -> np.ndarray:
        out = np.empty(size)
        _fill_signs(self._s, out)
        return out

    def integers(self, n: int, size: int) -> np.ndarray:
        """Uniform draws from ``{0, ..., n-1}``."""
        if n < 1:
            raise ValueError("n must be positive")
        out = np.empty(size, dtype=np.int64)
        _fill_bounded(self._s, n, out)
        return out

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates shuffle of ``arange(n)``."""
        return _permutation(self._s, n)


@dataclass(frozen=True)
class RandomSource:
    """Immutable identity of a random stream."""

    master_seed: int
    stream_id: int = 0

    def __post_init__(self):
        for name in ("master_seed", "stream_id"):
            v = getattr(self, name)
            if not 0 <= int(v) <= MASK64:
                raise ValueError(f"{name} must fit in 64 unsigned bits, got {v}")

    def stream(self) -> Stream:
        return Stream(self.master_seed, self.stream_id)

    def child(self, *path: int) -> "RandomSource":
        """Derived source for a sub-task; distinct paths give distinct ids."""
        return RandomSource(self.master_seed, mix64(self.stream_id, *path))


def as_source(rng) -> RandomSource:
    """Accept a RandomSource or a plain integer seed."""
    if isinstance(rng, RandomSource):
        return rng
    if isinstance(rng, (int, np.integer)):
        return RandomSource(int(rng))
    raise TypeError(f"expected RandomSource or int seed, got {type(rng).__name__}")


def trial_seed(master_seed: int, grid_index: int, trial: int) -> int:
    """Per-trial seed: SplitMix hash of the (master, grid point, trial) triple."""
    return mix64(master_seed, grid_index, trial)
