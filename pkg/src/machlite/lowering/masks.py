"""Participation filters: one 16-bit word per worker per unique slicing.

A kernel multiplies its length by the mask word, so tiles outside a
statement's worker slice execute with length zero and need no physical moat.
Identical slicings share one mask entry.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class MaskEntry:
    sig: tuple          # ((x0, x1, sx), (y0, y1, sy))
    index: int
    address: int        # worker-space word offset


def region_members(sig, nx: int, ny: int) -> set[tuple[int, int]]:
    (x0, x1, sx), (y0, y1, sy) = sig
    return {(x, y) for x in range(x0, x1, sx) for y in range(y0, y1, sy)
            if 0 <= x < nx and 0 <= y < ny}


def mask_bit(sig, wx: int, wy: int) -> int:
    (x0, x1, sx), (y0, y1, sy) = sig
    ok_x = x0 <= wx < x1 and (wx - x0) % sx == 0
    ok_y = y0 <= wy < y1 and (wy - y0) % sy == 0
    return 1 if ok_x and ok_y else 0


class MaskTable:
    """Deduplicated region signatures with reserved worker-memory addresses."""

    def __init__(self):
        self.entries: dict[tuple, MaskEntry] = {}

    def intern(self, sig, plan) -> MaskEntry:
        sig = tuple(tuple(int(v) for v in ax) for ax in sig)
        hit = self.entries.get(sig)
        if hit is not None:
            return hit
        label = "mask:" + ":".join(",".join(str(v) for v in ax) for ax in sig)
        plan.reserve("worker", label, 1)
        entry = MaskEntry(sig, len(self.entries), plan.reserved_address_words(label))
        self.entries[sig] = entry
        return entry

    def ordered(self) -> list[MaskEntry]:
        return sorted(self.entries.values(), key=lambda e: e.index)

    def image_bits(self, nx: int, ny: int) -> dict[int, "list[list[int]]"]:
        """address -> per-worker bit grid."""
        out = {}
        for e in self.entries.values():
            out[e.address] = [[mask_bit(e.sig, x, y) for y in range(ny)]
                              for x in range(nx)]
        return out
