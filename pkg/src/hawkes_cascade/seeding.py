"""Deterministic random-stream derivation.

Every stochastic routine in this package draws from a generator built by
:func:`make_rng`.  The splitting rule is:

    SeedSequence([master, sha256(label)[:8] as uint64, index])

where ``label`` names the stream ("pdmp", "diffusion", "chaos", ...) and
``index`` is the replicate number (omitted for single runs).  The rule is
stable across platforms and releases: sha256 is fixed, and numpy's
SeedSequence spawning arithmetic is part of its public contract.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def stream_key(label: str) -> int:
    """First 8 bytes of sha256(label), as an unsigned 64-bit integer."""
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def make_rng(master_seed: int, label: str, index: int | None = None) -> np.random.Generator:
    """PCG64 generator for stream ``label`` (replicate ``index``) under ``master_seed``."""
    entropy = [int(master_seed) & _MASK64, stream_key(label)]
    if index is not None:
        entropy.append(int(index))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def derive_seed(master_seed: int, label: str, index: int) -> int:
    """Integer sub-seed for handing a derived stream to a routine that seeds itself.

    sha256(master || label || index) truncated to 63 bits; collision-free in
    practice and identical on every platform.
    """
    payload = f"{int(master_seed) & _MASK64}|{label}|{int(index)}".encode("utf-8")
    return int.from_bytes(hashlib.sha256(payload).digest()[:8], "big") >> 1
