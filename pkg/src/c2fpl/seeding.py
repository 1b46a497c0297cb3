"""Deterministic seed derivation.

All randomness in a run flows from a single root seed. Each stage derives its
own seed by hashing the root seed together with a stage label, so stages stay
independent and reordering one never perturbs another.
"""

from __future__ import annotations

import hashlib


def derive_seed(seed: int, *labels: object) -> int:
    """Return a stable 63-bit seed for the stage named by ``labels``."""
    text = ":".join([str(int(seed)), *(str(part) for part in labels)])
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") & (2**63 - 1)
