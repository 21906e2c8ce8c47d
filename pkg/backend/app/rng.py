# backend/app/rng.py
"""
Counter-based random substreams.

Every random draw in the simulator comes from a Philox generator whose key is
derived from (master_seed, index, purpose tag). Two consumers with different
tags never share a stream, and a replication's stream does not depend on which
worker runs it or in which order.
"""
import hashlib

import numpy as np

from app.exceptions import SeedError

PLACEMENT = "placement"
RCS = "rcs"
DATASET = "dataset"
PERMUTATION = "permutation"
REFERENCE = "reference"
SURFACE = "surface"


def tag_code(tag: str) -> int:
    digest = hashlib.sha256(tag.encode("utf-8")).digest()
    return int.from_bytes(digest[:4], byteorder="big")


def substream(master_seed: int, index: int, tag: str) -> np.random.Generator:
    """Generator for one (seed, index, tag) triple. Same triple, same numbers."""
    if master_seed < 0 or index < 0:
        raise SeedError(f"seed and index must be non-negative, got seed={master_seed} index={index}")
    seq = np.random.SeedSequence([int(master_seed), int(index), tag_code(tag)])
    return np.random.Generator(np.random.Philox(seq))
