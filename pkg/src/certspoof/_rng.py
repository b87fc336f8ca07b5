"""Seed derivation helpers.

All randomness in the package flows through ``numpy.random.Generator``
instances built here, so that every operation is a deterministic function
of its integer seed.  Sub-streams are derived either by spawning a
``SeedSequence`` (ordered phases of one operation) or by stable hashing of
string parts (independent trials of a grid), never by Python's
process-salted ``hash``.
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["make_rng", "split_seed", "derive_seed"]

_SEED_MOD = 2**63


def make_rng(seed: int) -> np.random.Generator:
    """A PCG64 generator seeded with ``seed``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def split_seed(seed: int, n: int) -> list[int]:
    """Derive ``n`` independent child seeds from ``seed`` (ordered, stable)."""
    children = np.random.SeedSequence(seed).spawn(n)
    return [int(c.generate_state(1, dtype=np.uint64)[0] % _SEED_MOD) for c in children]


def derive_seed(master: int, *parts: object) -> int:
    """Stable seed for a named sub-task.

    Hashes ``master`` together with the string forms of ``parts`` so that
    adding unrelated tasks never perturbs existing ones.
    """
    token = "\x1f".join([str(int(master))] + [str(p) for p in parts])
    digest = hashlib.sha256(token.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") % _SEED_MOD
