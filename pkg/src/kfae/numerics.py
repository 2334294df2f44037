"""Dense-tensor primitives: seeded RNG, Glorot init, softmax and Adam.

Tensors are plain ``numpy.float32`` arrays.  All randomness goes through
:class:`Rng`, a xoshiro256** generator whose 256-bit state is filled from a
64-bit seed by splitmix64.  The stream is fully specified below so it can be
reproduced bit-for-bit anywhere:

* splitmix64: ``x += 0x9E3779B97F4A7C15; z = x; z = (z ^ (z >> 30)) *
  0xBF58476D1CE4E5B9; z = (z ^ (z >> 27)) * 0x94D049BB133111EB;
  return z ^ (z >> 31)`` (all mod 2**64).  Four successive outputs seed
  ``s0..s3``.
* xoshiro256**: ``result = rotl(s1 * 5, 7) * 9; t = s1 << 17; s2 ^= s0;
  s3 ^= s1; s1 ^= s2; s0 ^= s3; s2 ^= t; s3 = rotl(s3, 45)``.
* uniform double in [0, 1): ``(next >> 11) * 2**-53``.
* bounded integer in [0, n): rejection sampling on ``next`` against the
  largest multiple of ``n`` below 2**64, then ``next % n``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(x: int) -> tuple[int, int]:
    """Advance a splitmix64 state; returns ``(new_state, output)``."""
    x = (x + _GOLDEN) & MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return x, z ^ (z >> 31)


def derive_seed(seed: int, index: int) -> int:
    """Child seed that depends only on ``(seed, index)``."""
    _, out = splitmix64((seed ^ ((index * _GOLDEN) & MASK64)) & MASK64)
    return out


@njit(cache=True)
def _rotl(x, k):
    return (x << np.uint64(k)) | (x >> np.uint64(64 - k))


@njit(cache=True)
def _fill_u64(state, out):
    s0, s1, s2, s3 = state[0], state[1], state[2], state[3]
    for i in range(out.shape[0]):
        out[i] = _rotl(s1 * np.uint64(5), 7) * np.uint64(9)
        t = s1 << np.uint64(17)
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
    state[0], state[1], state[2], state[3] = s0, s1, s2, s3


class Rng:
    """xoshiro256** stream seeded through splitmix64."""

    def __init__(self, seed: int):
        self.seed = int(seed) & MASK64
        words = []
        x = self.seed
        for _ in range(4):
            x, out = splitmix64(x)
            words.append(out)
        self._state = np.array(words, dtype=np.uint64)

    def next_u64(self, n: int | None = None):
        """One raw 64-bit word (as int), or an array of ``n`` words."""
        if n is None:
            out = np.empty(1, dtype=np.uint64)
            _fill_u64(self._state, out)
            return int(out[0])
        out = np.empty(int(n), dtype=np.uint64)
        if n:
            _fill_u64(self._state, out)
        return out

    def random(self, n: int | None = None):
        """Uniform doubles in [0, 1)."""
        raw = self.next_u64(1 if n is None else n)
        vals = (raw >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))
        return float(vals[0]) if n is None else vals

    def integers(self, n: int) -> int:
        """Uniform integer in ``[0, n)``."""
        if n < 1:
            raise ValueError("n must be >= 1")
        limit = ((1 << 64) // n) * n
        while True:
            r = self.next_u64()
            if r < limit:
                return r % n

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates shuffle of ``range(n)``, swapping from the top down."""
        perm = np.arange(n)
        for i in range(n - 1, 0, -1):
            j = self.integers(i + 1)
            perm[i], perm[j] = perm[j], perm[i]
        return perm


def glorot_init(rows: int, cols: int, rng: Rng) -> np.ndarray:
    """Glorot-uniform ``rows x cols`` float32 matrix; draws exactly rows*cols doubles."""
    if rows < 1 or cols < 1:
        raise ValueError(f"glorot_init needs positive dims, got {rows}x{cols}")
    a = np.sqrt(6.0 / (rows + cols))
    u = rng.random(rows * cols)
    return ((2.0 * u - 1.0) * a).astype(np.float32).reshape(rows, cols)


def softmax(x, axis: int = -1) -> np.ndarray:
    x = np.asarray(x)
    if x.size == 0:
        raise ValueError("softmax of an empty vector")
    shifted = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def zeros_like(cls, param: np.ndarray, **hyper) -> "AdamState":
        return cls(np.zeros_like(param), np.zeros_like(param), **hyper)

    def copy(self) -> "AdamState":
        return AdamState(self.m.copy(), self.v.copy(), self.t, self.lr,
                         self.beta1, self.beta2, self.epsilon)


@njit(cache=True)
def _adam_kernel(p, g, m, v, lr, b1, b2, eps, bc1, bc2):
    for i in range(p.shape[0]):
        gi = np.float64(g[i])
        mi = b1 * np.float64(m[i]) + (1.0 - b1) * gi
        vi = b2 * np.float64(v[i]) + (1.0 - b2) * gi * gi
        m[i] = mi
        v[i] = vi
        mhat = np.float64(m[i]) / bc1
        vhat = np.float64(v[i]) / bc2
        p[i] = np.float64(p[i]) - lr * mhat / (np.sqrt(vhat) + eps)


def adam_update_(param: np.ndarray, grad: np.ndarray, state: AdamState) -> None:
    """In-place Adam step on ``param`` and ``state`` (the training hot path)."""
    if not (param.shape == grad.shape == state.m.shape == state.v.shape):
        raise ValueError(
            f"adam shape mismatch: param {param.shape}, grad {grad.shape}, "
            f"moments {state.m.shape}/{state.v.shape}")
    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    _adam_kernel(param.reshape(-1), np.ascontiguousarray(grad).reshape(-1),
                 state.m.reshape(-1), state.v.reshape(-1),
                 float(state.lr), float(state.beta1), float(state.beta2),
                 float(state.epsilon), bc1, bc2)


def adam_step(param: np.ndarray, grad: np.ndarray,
              state: AdamState) -> tuple[np.ndarray, AdamState]:
    """Bias-corrected Adam update; returns new parameter and state, inputs untouched."""
    new_param = np.array(param, copy=True, order="C")
    new_state = state.copy()
    adam_update_(new_param, grad, new_state)
    return new_param, new_state
