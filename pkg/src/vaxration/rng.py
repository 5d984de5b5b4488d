"""Counter-based random streams.

Every stochastic stage draws its uniforms from a hash of
``(seed, stage, label, person_key)``, so a person's draw does not depend on
evaluation order, on which other persons exist, or on whether another stage
ran.  Discrete draws in the synthetic generator use numpy's Philox
bit generator, which is counter-based as well.
"""

from __future__ import annotations

import hashlib

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def _mix(x: np.ndarray) -> np.ndarray:
    # splitmix64 finalizer; uint64 arithmetic wraps modulo 2**64
    x = x + _GOLDEN
    x = (x ^ (x >> np.uint64(30))) * _M1
    x = (x ^ (x >> np.uint64(27))) * _M2
    return x ^ (x >> np.uint64(31))


def label_key(*labels: object) -> int:
    """Stable 64-bit key for a tuple of labels (platform independent)."""
    text = "\x1f".join(str(label) for label in labels)
    return int.from_bytes(hashlib.blake2b(text.encode(), digest_size=8).digest(), "little")


def person_keys(ids) -> np.ndarray:
    """Hash opaque person identifiers to uint64 keys."""
    out = np.empty(len(ids), dtype=np.uint64)
    for i, pid in enumerate(ids):
        out[i] = int.from_bytes(hashlib.blake2b(str(pid).encode(), digest_size=8).digest(), "little")
    return out


def uniforms(seed: int, stage: str, label: str, keys: np.ndarray) -> np.ndarray:
    """One uniform in [0, 1) per key for the named substream."""
    stream = np.uint64(label_key(seed, stage, label))
    with np.errstate(over="ignore"):
        bits = _mix(_mix(np.asarray(keys, dtype=np.uint64) ^ stream))
    return (bits >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)


def bernoulli(seed: int, stage: str, label: str, keys: np.ndarray, p) -> np.ndarray:
    """Independent coin per key with heads probability ``p`` (scalar or array)."""
    return uniforms(seed, stage, label, keys) < np.asarray(p, dtype=np.float64)


def generator(seed: int, *labels: object) -> np.random.Generator:
    """Philox generator for a named substream of ``seed``."""
    return np.random.Generator(np.random.Philox(key=label_key(seed, *labels)))
