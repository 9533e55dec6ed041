"""Counter-based random streams.

Every draw is a pure function of (seed, path), where the path names the
consumer: e.g. (purpose tag, round, query, agent id). Streams never share
state, so replays and parallel schedules produce bit-identical values, and
any agent's draw for any round can be regenerated in isolation.

The word generator is the SplitMix64 finalizer applied to a keyed counter;
normals come from Box-Muller on 53-bit uniforms. Quality is far beyond what
these simulations resolve, and the whole block for one (round, query) is a
handful of vectorized array ops instead of per-agent generator objects.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_BASE = 0x8E2AC5B7D1F03A64

# purpose tags; distinct tags keep stream families from ever aliasing
TAG_HONEST = 1
TAG_ATTACK = 2
TAG_SHUFFLE = 3


def _mix(h: int) -> int:
    """SplitMix64 finalizer on a Python int, wrapping at 64 bits."""
    h &= _MASK
    h ^= h >> 30
    h = (h * 0xBF58476D1CE4E5B9) & _MASK
    h ^= h >> 27
    h = (h * 0x94D049BB133111EB) & _MASK
    h ^= h >> 31
    return h


def _mix_u64(h: np.ndarray) -> np.ndarray:
    """The same finalizer on a uint64 array (wrapping is native)."""
    h = h.copy()
    h ^= h >> np.uint64(30)
    h *= np.uint64(0xBF58476D1CE4E5B9)
    h ^= h >> np.uint64(27)
    h *= np.uint64(0x94D049BB133111EB)
    h ^= h >> np.uint64(31)
    return h


def stream_key(seed: int, *path: int) -> int:
    """Fold (seed, *path) into a 64-bit stream key."""
    k = _BASE
    for part in (seed, *path):
        part = int(part)
        if part < 0:
            raise ValueError("stream path components must be nonnegative")
        k = _mix(k + _GOLDEN * part)
    return k


def _row_keys(seed: int, path: tuple[int, ...], ids: np.ndarray) -> np.ndarray:
    """Keys of the streams (seed, *path, i) for an array of ids, vectorized."""
    prefix = np.uint64(stream_key(seed, *path))
    ids64 = np.asarray(ids, dtype=np.uint64)
    return _mix_u64(prefix + np.uint64(_GOLDEN) * ids64)


def _unit_open(words: np.ndarray) -> np.ndarray:
    # top 53 bits, offset half a step into the open interval (0, 1)
    return ((words >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


def _normals_from_keys(keys: np.ndarray, cols: int, first_word: int = 1) -> np.ndarray:
    if cols == 0:
        return np.zeros(keys.shape + (0,))
    ctr = np.arange(first_word, first_word + 2 * cols, dtype=np.uint64)
    words = _mix_u64(keys[..., None] + np.uint64(_GOLDEN) * ctr)
    u1 = _unit_open(words[..., 0::2])
    u2 = _unit_open(words[..., 1::2])
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


def normal_rows(seed: int, path: tuple[int, ...], ids, cols: int) -> np.ndarray:
    """Standard normal draws for the streams (seed, *path, i), i in `ids`.

    Row k is bitwise identical to CounterStream(seed, *path, ids[k])
    .standard_normal(cols). This is the vectorized fast path used to draw
    one (round, query) batch across all agents at once.
    """
    ids = np.atleast_1d(np.asarray(ids))
    if ids.size and (ids < 0).any():
        raise ValueError("stream ids must be nonnegative")
    return _normals_from_keys(_row_keys(seed, path, ids), int(cols))


def normal_block(seed: int, path: tuple[int, ...], rows: int, cols: int) -> np.ndarray:
    """normal_rows for the contiguous ids 0..rows-1."""
    return normal_rows(seed, path, np.arange(rows), cols)


def permutation(seed: int, path: tuple[int, ...], n: int) -> np.ndarray:
    """Deterministic permutation of range(n) keyed by (seed, *path)."""
    keys = _row_keys(seed, path, np.arange(n))
    return np.argsort(keys, kind="stable")


class CounterStream:
    """Stateful view over one stream, mimicking the Generator methods we use.

    Consecutive draws advance a word counter, so they never overlap; the
    first standard_normal(cols) call reproduces one row of normal_rows.
    """

    def __init__(self, seed: int, *path: int):
        self._key = np.uint64(stream_key(seed, *path))
        self._next_word = 1

    def standard_normal(self, size: int) -> np.ndarray:
        size = int(size)
        out = _normals_from_keys(np.asarray(self._key), size, self._next_word)
        self._next_word += 2 * size
        return out

    def uniform(self, size: int) -> np.ndarray:
        """Uniform draws on (0, 1)."""
        size = int(size)
        ctr = np.arange(self._next_word, self._next_word + size, dtype=np.uint64)
        self._next_word += size
        return _unit_open(_mix_u64(self._key + np.uint64(_GOLDEN) * ctr))
