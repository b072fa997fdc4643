"""Counter-based random streams.

A uniform is a pure function of ``(seed, channel, path, index)``: the
SplitMix64 output at counter ``index`` of a sequence keyed by the other three.
Paths can therefore be simulated in any grouping and order, on any number of
threads, and still produce bit-identical values.  Positions never drawn cost
nothing, so a path can be extended to a longer horizon without disturbing the
draws it already made.
"""

from __future__ import annotations

import numpy as np

_GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_MASK = (1 << 64) - 1

_G = np.uint64(_GOLDEN)
_U1, _U2 = np.uint64(_M1), np.uint64(_M2)
_S11, _S27, _S30, _S31 = (np.uint64(s) for s in (11, 27, 30, 31))
_ONE = np.uint64(1)
_INV53 = 1.0 / (1 << 53)

# channels of the risk-model simulation
THETA, CLAIM_X, COUNT_M, DELAY, CLAIM_Y = range(5)
# pairs (arrival i, delayed claim j) are packed as (i << 20) | j
PAIR_SHIFT = 20


def mix64(z: int) -> int:
    """SplitMix64 finalizer on a Python int."""
    z &= _MASK
    z = ((z ^ (z >> 30)) * _M1) & _MASK
    z = ((z ^ (z >> 27)) * _M2) & _MASK
    return z ^ (z >> 31)


def _mix_inplace(z: np.ndarray) -> np.ndarray:
    t = z >> _S30
    z ^= t
    z *= _U1
    np.right_shift(z, _S27, out=t)
    z ^= t
    z *= _U2
    np.right_shift(z, _S31, out=t)
    z ^= t
    return z


class CounterStream:
    """Keyed family of SplitMix64 sequences, one per (channel, path)."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._key = mix64(self.seed * _GOLDEN + 0x632BE59BD9B4E019)

    def path_keys(self, channel: int, paths) -> np.ndarray:
        """Sequence keys for ``paths`` (global path ids) on ``channel``."""
        ch = mix64(self._key ^ mix64(channel + 1))
        z = np.asarray(paths, dtype=np.uint64) + _ONE
        with np.errstate(over="ignore"):  # wraparound is intended
            z = z * _G
        z = _mix_inplace(z)
        z += np.uint64(ch)
        return _mix_inplace(z)

    @staticmethod
    def uniforms(keys: np.ndarray, index) -> np.ndarray:
        """Tail uniforms in ``(0, 1]`` at positions ``index`` of the keyed sequences."""
        z = np.asarray(index, dtype=np.uint64) + _ONE
        with np.errstate(over="ignore"):
            z = z * _G
            z = z + keys
        _mix_inplace(z)
        z >>= _S11
        out = z.astype(np.float64)
        out += 1.0
        out *= _INV53
        return out

    def draw(self, channel: int, paths, index) -> np.ndarray:
        return self.uniforms(self.path_keys(channel, paths), index)


def pair_index(i, j) -> np.ndarray:
    return (np.asarray(i, dtype=np.uint64) << np.uint64(PAIR_SHIFT)) | np.asarray(j, dtype=np.uint64)
