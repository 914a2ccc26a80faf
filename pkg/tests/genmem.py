"""Random synthetic IR graphs for allocator stress, bypassing the frontend.

Builds bare IRGraph objects whose nodes reference worker memlocs in random
patterns, so the planner sees arbitrary interleavings of lifespans without
needing a valid source program for each one.
"""
from __future__ import annotations

import random

from machlite.frontend.syntax import DType
from machlite.irg import IRGraph, IRNode, MemArg, MemLoc


def random_graph(seed: int, max_nodes: int = 20, *, equal_size: int | None = None,
                 n_vars: int | None = None) -> IRGraph:
    rng = random.Random(seed)
    g = IRGraph(grid=(4, 4))
    n_nodes = rng.randint(2, max_nodes)
    n_vars = n_vars if n_vars is not None else rng.randint(2, 12)
    for mlid in range(n_vars):
        if equal_size is not None:
            size, dtype = equal_size, DType.I16
        else:
            dtype = rng.choice([DType.I16, DType.F32])
            size = rng.randint(1, 400) * dtype.words
        kind = rng.choice(["persistent", "persistent", "temporary", "output"])
        g.memlocs[mlid] = MemLoc(mlid, f"v{mlid}", kind, "worker", dtype, size)
        if kind != "temporary" and rng.random() < 0.5:
            g.inits[mlid] = None  # presence alone drives liveness
    writers: dict[int, bool] = {}
    for nid in range(n_nodes):
        n_args = rng.randint(0, 2)
        # temporaries must be written before read; restrict arg pool
        pool = [m for m in g.memlocs
                if g.memlocs[m].kind != "temporary" or writers.get(m)]
        args = tuple(MemArg(rng.choice(pool), None, "vector")
                     for _ in range(n_args) if pool)
        dest = rng.choice(list(g.memlocs)) if rng.random() < 0.8 else None
        if dest is not None:
            writers[dest] = True
        g.nodes.append(IRNode(nid, "copy", args, dest, None))
    return g
