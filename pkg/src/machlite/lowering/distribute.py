"""Even distribution of section vectors across the response tiles.

Each section's control vector and argument vector are cut into n contiguous
chunks whose lengths differ by at most one; earlier drain positions take the
extra words.  Chunk k belongs to the response tile at drain position k.
"""

from __future__ import annotations

from dataclasses import dataclass, field


def chunk_sizes(total: int, n: int) -> list[int]:
    base, extra = divmod(total, n)
    return [base + (1 if k < extra else 0) for k in range(n)]


def split_even(vec: list, n: int) -> list[list]:
    out, at = [], 0
    for size in chunk_sizes(len(vec), n):
        out.append(list(vec[at:at + size]))
        at += size
    return out


@dataclass
class RespChunk:
    """One response tile's share of one section."""
    section: int
    position: int
    ctrl: list[int]
    args: list[int]
    # patches into this chunk's args: (local offset, width, splice slot index)
    splices: list[tuple] = field(default_factory=list)


def assign_sections(sections, n_resp: int) -> list[list[RespChunk]]:
    """Per-position lists of chunks, one entry per section."""
    per_pos = [[] for _ in range(n_resp)]
    for sec in sections:
        ctrl_chunks = split_even(sec.ctrl_vector, n_resp)
        args_chunks = split_even(sec.args_vector, n_resp)
        starts, at = [], 0
        for c in args_chunks:
            starts.append(at)
            at += len(c)
        for k in range(n_resp):
            chunk = RespChunk(sec.index, k, ctrl_chunks[k], args_chunks[k])
            lo, hi = starts[k], starts[k] + len(args_chunks[k])
            for slot, (pos, width, _src) in enumerate(sec.splices):
                for w in range(width):
                    if lo <= pos + w < hi:
                        chunk.splices.append((pos + w - lo, 1, (slot, w)))
            per_pos[k].append(chunk)
    return per_pos


def resp_words(per_pos_chunks: list[RespChunk]) -> int:
    """Words of section data a response tile must hold."""
    return sum(len(c.ctrl) + len(c.args) for c in per_pos_chunks)
