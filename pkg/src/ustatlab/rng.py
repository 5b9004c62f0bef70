"""Counter-based random number generation.

Every random quantity in the library is a pure function of a 64-bit key
and a 64-bit counter: ``u = mix(key, counter)``.  Keys are derived by
hashing a path of labels (master seed, replicate index, feature index,
group, ...), so any observation can be regenerated in isolation and the
output never depends on scheduling or worker count.

The mixing function is two rounds of the splitmix64 finalizer with the
key injected between rounds.  That construction is cheap, vectorizes to
a handful of uint64 array operations, and passes the statistical checks
this library cares about (uniformity, independence across keys); it is
not intended for cryptographic use.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_INV53 = float(2.0**-53)


# ===================== key derivation =====================

def derive_key(*parts: int | str) -> int:
    """Hash a path of integers/strings into a 64-bit stream key.

    Deterministic across platforms and Python versions (no reliance on
    the built-in ``hash``).
    """
    h = hashlib.blake2b(digest_size=8)
    for part in parts:
        if isinstance(part, (int, np.integer)):
            h.update(b"i")
            h.update(int(part).to_bytes(16, "little", signed=True))
        elif isinstance(part, str):
            raw = part.encode("utf-8")
            h.update(b"s")
            h.update(len(raw).to_bytes(4, "little"))
            h.update(raw)
        else:
            raise TypeError(f"key parts must be int or str, got {type(part)!r}")
    return int.from_bytes(h.digest(), "little")


def subkeys(key: int, idx: np.ndarray | int) -> np.ndarray:
    """Derive one child key per index, vectorized.

    Used for per-feature streams: ``subkeys(base, np.arange(m))`` gives m
    statistically independent keys without m hash calls.
    """
    idx_arr = np.asarray(idx, dtype=np.uint64)
    return _mix_bits(np.uint64(key & _MASK64), idx_arr)


# ===================== core mixing =====================

def _splitmix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def _mix_bits(key: np.uint64, counter: np.ndarray) -> np.ndarray:
    """64 output bits per counter value under the given key."""
    z = counter * np.uint64(_GOLDEN)
    z = _splitmix(z ^ key)
    z = _splitmix(z + (key | np.uint64(1)))
    return z


def bits(key: int, counters: np.ndarray) -> np.ndarray:
    """Raw 64-bit outputs at explicit counter positions."""
    c = np.asarray(counters, dtype=np.uint64)
    return _mix_bits(np.uint64(key & _MASK64), c)


def uniforms(key: int, count: int, offset: int = 0) -> np.ndarray:
    """``count`` uniforms on (0, 1] from counters offset..offset+count-1.

    The half-open interval excludes exact zero so that ``log(u)`` is
    always finite (inverse-CDF transforms rely on this).
    """
    if count < 0 or offset < 0:
        raise ValueError("count and offset must be nonnegative")
    c = np.arange(offset, offset + count, dtype=np.uint64)
    z = _mix_bits(np.uint64(key & _MASK64), c)
    return ((z >> np.uint64(11)) + np.uint64(1)) * _INV53


def uniforms_block(keys: np.ndarray, count: int, offset: int = 0) -> np.ndarray:
    """(len(keys), count) uniforms on (0, 1], one row per key."""
    if count < 0 or offset < 0:
        raise ValueError("count and offset must be nonnegative")
    k = np.asarray(keys, dtype=np.uint64)
    c = np.arange(offset, offset + count, dtype=np.uint64)
    z = _mix_bits_2d(k, c)
    return ((z >> np.uint64(11)) + np.uint64(1)) * _INV53


def _mix_bits_2d(keys: np.ndarray, counters: np.ndarray) -> np.ndarray:
    z = counters[None, :] * np.uint64(_GOLDEN)
    z = _splitmix(z ^ keys[:, None])
    z = _splitmix(z + (keys[:, None] | np.uint64(1)))
    return z
