"""Counter-based deterministic random numbers (SplitMix64).

Every draw is a pure function of (seed, counter), so streams can be
regenerated, split, and vectorized without carrying mutable state across
processes.  Gaussian variates come from Box-Muller on the uniform stream,
uniform noise is symmetric on [-scale, scale].
"""

from __future__ import annotations

import numpy as np

_MASK64 = np.uint64(0xFFFFFFFFFFFFFFFF)
_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_SPLIT_SALT = np.uint64(0xD6E8FEB86659FD93)

_TWO53 = float(1 << 53)


def _mix(z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
        return z ^ (z >> np.uint64(31))


class SplitMix64:
    """Splittable 64-bit counter-based generator.

    Output word i is mix(seed + (i+1)*GAMMA); `split(tag)` derives an
    independent child stream deterministically from (seed, tag).
    """

    def __init__(self, seed: int):
        self.seed = np.uint64(seed & 0xFFFFFFFFFFFFFFFF)
        self._counter = 0

    def split(self, tag: int) -> "SplitMix64":
        with np.errstate(over="ignore"):
            child = _mix((self.seed ^ _SPLIT_SALT)
                         + np.uint64(tag & 0xFFFFFFFFFFFFFFFF) * _GAMMA)
        return SplitMix64(int(child))

    def _words(self, n: int) -> np.ndarray:
        idx = np.arange(self._counter + 1, self._counter + n + 1, dtype=np.uint64)
        self._counter += n
        with np.errstate(over="ignore"):
            return _mix(self.seed + idx * _GAMMA)

    def uniforms(self, n: int) -> np.ndarray:
        """n doubles in [0, 1), 53-bit resolution."""
        return (self._words(n) >> np.uint64(11)).astype(np.float64) / _TWO53

    def uniform_symmetric(self, scale: float, shape) -> np.ndarray:
        n = int(np.prod(shape))
        u = self.uniforms(n)
        return (scale * (2.0 * u - 1.0)).reshape(shape)

    def gaussians(self, shape, sigma: float = 1.0) -> np.ndarray:
        """Box-Muller pairs; an odd request discards the trailing sine draw."""
        n = int(np.prod(shape))
        m = (n + 1) // 2
        u1 = self.uniforms(m)
        u2 = self.uniforms(m)
        r = np.sqrt(-2.0 * np.log1p(-u1))
        z = np.concatenate([r * np.cos(2.0 * np.pi * u2), r * np.sin(2.0 * np.pi * u2)])[:n]
        return (sigma * z).reshape(shape)
