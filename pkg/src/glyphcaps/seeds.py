"""Deterministic sub-seed derivation.

One master seed drives the whole experiment; each consumer (dataset split,
weight init, epoch shuffling, augmentation draws) gets its own stream by
XOR-ing the master with a fixed 64-bit role constant. XOR keeps roles
collision-free and the mapping invertible, so a run manifest listing the
derived seeds pins every random draw of the run.
"""

from __future__ import annotations

__all__ = ["ROLE_OFFSETS", "derive_seed"]

_MASK = (1 << 64) - 1

ROLE_OFFSETS = {
    "split": 0x9E3779B97F4A7C15,
    "init": 0xBF58476D1CE4E5B9,
    "shuffle": 0x94D049BB133111EB,
    "augment": 0xD6E8FEB86659FD93,
}


def derive_seed(master: int, role: str) -> int:
    if role not in ROLE_OFFSETS:
        raise ValueError(f"derive_seed: unknown role {role!r}; expected one of "
                         f"{sorted(ROLE_OFFSETS)}")
    return (int(master) ^ ROLE_OFFSETS[role]) & _MASK
