"""Labeled seed derivation.

Every randomized subroutine gets its own stream derived from the root seed and
a label, so adding trials or subroutines never perturbs existing streams.
"""

from __future__ import annotations

import hashlib
import secrets

import numpy as np


def derive_seed(root: int, *labels) -> int:
    """Hash ``root`` and ``labels`` into a 64-bit seed."""
    key = ":".join([str(int(root))] + [str(lab) for lab in labels])
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def make_rng(root: int, *labels) -> np.random.Generator:
    """Return a Philox-backed generator for ``(root, *labels)``."""
    return np.random.Generator(np.random.Philox(derive_seed(root, *labels)))


def entropy_seed() -> int:
    """Fresh 32-bit seed from the OS, for runs where no seed was supplied."""
    return secrets.randbits(32)


def unit_vector(rng: np.random.Generator, dim: int) -> np.ndarray:
    """Uniform draw from the unit sphere in R^dim (normalized Gaussian)."""
    while True:
        v = rng.standard_normal(dim)
        nrm = np.linalg.norm(v)
        if nrm > 0:
            return v / nrm
